//! Self-contained intensity-patch detector and descriptor used by the
//! end-to-end harness tests and fixtures. The response map is the product
//! of horizontal and vertical Sobel magnitudes (high at corner-like
//! structure), descriptors are L2-normalized local intensity patches
//! sampled through the regular descriptor pipeline.

use crate::numerics::{conv2d, ConvSpec, Tensor};
use crate::sdak::{extract_keypoints, sample_descriptors, DescriptorSet, SdakParams};

#[derive(Debug, Clone, Copy)]
pub struct ToyParams {
    pub patch_radius: usize,
    pub nms_radius: usize,
    pub top_k: usize,
    pub border_margin: usize,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams {
            patch_radius: 3,
            nms_radius: 3,
            top_k: 200,
            border_margin: 6,
        }
    }
}

fn sobel(image: &Tensor, kernel: [f64; 9]) -> Tensor {
    let (h, w) = (image.dims()[0], image.dims()[1]);
    let input = Tensor::new(vec![1, h, w], image.data().to_vec()).unwrap();
    let spec = ConvSpec::new(
        Tensor::new(vec![1, 1, 3, 3], kernel.to_vec()).unwrap(),
        Tensor::zeros(vec![1]),
        1,
        1,
    )
    .unwrap();
    let out = conv2d(&input, &spec).unwrap();
    Tensor::new(vec![h, w], out.data().to_vec()).unwrap()
}

/// Corner-like response |Gx| * |Gy| of the intensity image.
pub fn toy_heatmap(image: &Tensor) -> Tensor {
    let gx = sobel(image, [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0]);
    let gy = sobel(image, [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0]);
    let mut out = Tensor::zeros(image.dims().to_vec());
    for i in 0..out.len() {
        out.data_mut()[i] = gx.data()[i].abs() * gy.data()[i].abs();
    }
    out
}

/// Dense patch map: channel (dy, dx) holds the image shifted by that
/// offset, so sampling a column yields the flattened local patch.
pub fn patch_descriptor_map(image: &Tensor, radius: usize) -> Tensor {
    let (h, w) = (image.dims()[0], image.dims()[1]);
    let side = 2 * radius + 1;
    let r = radius as isize;
    let mut out = Tensor::zeros(vec![side * side, h, w]);
    for dy in -r..=r {
        for dx in -r..=r {
            let c = ((dy + r) * side as isize + (dx + r)) as usize;
            for y in 0..h {
                for x in 0..w {
                    let (sy, sx) = (y as isize + dy, x as isize + dx);
                    if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                        out.set3(c, y, x, image.at2(sy as usize, sx as usize));
                    }
                }
            }
        }
    }
    out
}

/// Detect keypoints on the corner response and describe them with
/// normalized intensity patches.
pub fn toy_features(image: &Tensor, params: &ToyParams) -> DescriptorSet {
    let heat = toy_heatmap(image);
    // dummy mask conv, unused by extraction
    let sdak = SdakParams {
        alpha: 0.0,
        beta: 0.0,
        mask_conv: ConvSpec::new(
            Tensor::zeros(vec![1, 1, 3, 3]),
            Tensor::zeros(vec![1]),
            1,
            1,
        )
        .unwrap(),
        nms_radius: params.nms_radius,
        top_k: params.top_k,
        score_threshold: 1e-9,
        border_margin: params.border_margin,
    };
    let kps = extract_keypoints(&heat, &sdak);
    let desc_map = patch_descriptor_map(image, params.patch_radius);
    sample_descriptors(&desc_map, &kps).expect("keypoints are in bounds")
}

/// 64x64 checkerboard with smoothly varying per-cell brightness so every
/// corner patch is distinctive, shifted by `(dx, dy)` pixels.
pub fn checkerboard(size: usize, cell: usize, dx: isize, dy: isize) -> Tensor {
    Tensor::from_fn(vec![size, size], |idx| {
        let y = idx[0] as isize - dy;
        let x = idx[1] as isize - dx;
        let (cy, cx) = (y.div_euclid(cell as isize), x.div_euclid(cell as isize));
        let parity = ((cy + cx).rem_euclid(2)) as f64;
        // cell-dependent brightness ramp keeps patches unique
        let ramp = 0.25 + 0.5 * ((cy as f64 * 0.17 + cx as f64 * 0.31).sin() * 0.5 + 0.5);
        parity * ramp
    })
}
