use std::path::Path;

use rgbt::config::Config;
use rgbt::data::write_sequence_list;
use rgbt::sim::{biased_suite, synth_sequence, SynthConfig};

use crate::{CliError, CliResult};

/// One sequence written to `out` itself, or `count` challenge sequences
/// under `out` with a `sequences.txt` list.
pub fn cmd_synth(_cfg: &Config, seed: u64, frames: usize, bias: f64, count: usize, out: &Path) -> CliResult<()> {
    if frames == 0 || count == 0 {
        return Err(CliError::Config("synth needs --n >= 1 and --count >= 1".into()));
    }
    if bias.is_nan() || bias < 0.0 {
        return Err(CliError::Config("synth --bias must be nonnegative".into()));
    }
    if count == 1 {
        let cfg = SynthConfig {
            seed,
            frames,
            bias,
            ..SynthConfig::default()
        };
        let (seq, _) = synth_sequence("synthetic", &cfg)?;
        seq.write(out, "png")?;
        println!("wrote {} frames to {}", seq.len(), out.display());
        return Ok(());
    }
    let mut names = Vec::new();
    for (i, cfg) in biased_suite(seed, count, frames, bias).iter().enumerate() {
        let name = format!("synth_{i:03}");
        let (seq, _) = synth_sequence(&name, cfg)?;
        seq.write(&out.join(&name), "png")?;
        names.push(name);
    }
    write_sequence_list(out, &names)?;
    println!("wrote {count} sequences of {frames} frames to {}", out.display());
    Ok(())
}
