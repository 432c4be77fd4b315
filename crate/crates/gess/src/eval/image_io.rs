//! Image decoding for the dataset harness: 8-bit grayscale and RGB in PNG
//! and binary PPM/PGM. RGB converts to luma 0.299 R + 0.587 G + 0.114 B.

use super::EvalError;
use crate::numerics::Tensor;
use std::path::Path;

/// Decode to a [H, W] tensor of intensities in [0, 1].
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<Tensor, EvalError> {
    let img = image::open(path.as_ref()).map_err(|e| EvalError::Image(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut out = Tensor::zeros(vec![h, w]);
    for y in 0..h {
        for x in 0..w {
            let p = rgb.get_pixel(x as u32, y as u32);
            let luma =
                0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            out.set2(y, x, luma / 255.0);
        }
    }
    Ok(out)
}
