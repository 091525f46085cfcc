use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

/// Depth-wise valid cross-correlation of kernel `z` over search map `x`.
///
/// Channel `c` of the output correlates `z[c]` with `x[c]` only; the output
/// is `(x_h - z_h + 1) x (x_w - z_w + 1)`.
pub fn dw_xcorr<T: Scalar>(z: &FeatureMap<T>, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    let (c, zh, zw) = z.shape();
    let (xc, xh, xw) = x.shape();
    if c != xc {
        return Err(Error::shape("dw_xcorr channels", c, xc));
    }
    if zh > xh || zw > xw {
        return Err(Error::shape(
            "dw_xcorr extent",
            format!("kernel within {xh}x{xw}"),
            format!("{zh}x{zw}"),
        ));
    }
    let (oh, ow) = (xh - zh + 1, xw - zw + 1);
    let mut out = FeatureMap::zeros(c, oh, ow);
    for ch in 0..c {
        let kernel = z.channel(ch);
        let search = x.channel(ch);
        let plane = out.channel_mut(ch);
        for u in 0..zh {
            for v in 0..zw {
                let k = kernel[u * zw + v];
                for i in 0..oh {
                    let src = &search[(i + u) * xw + v..][..ow];
                    for (d, &s) in plane[i * ow..(i + 1) * ow].iter_mut().zip(src) {
                        *d += k * s;
                    }
                }
            }
        }
    }
    Ok(out)
}
