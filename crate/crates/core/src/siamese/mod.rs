//! Toy Siamese tracker core: a frozen random-weight backbone with three tap
//! layers, depth-wise cross-correlation RPN heads, multi-layer aggregation
//! and the interpolated template store.

mod backbone;
mod head;
mod template;
mod xcorr;

pub use backbone::{triplicate_tir, Backbone, BackboneConfig, ImagePatch, LayerFeatures, NUM_TAPS};
pub use head::{aggregate, HeadConfig, HeadOutput, HeadWeights, RpnHead, RpnHeads, TAP_LAYERS};
pub use template::TemplateState;
pub use xcorr::dw_xcorr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one named slice of the weight bank.
pub(crate) fn weight_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.rotate_left(17))
}
