//! Semantic-depth aware keypoint selection: saliency mask, heatmap
//! reweighting K_final = K_map * (1 + alpha S_mask + beta R_map),
//! non-maximum suppression, top-K extraction and unit-norm descriptor
//! sampling, plus the keypoint/descriptor file container.

use crate::numerics::{conv2d, sigmoid, ConvSpec, NumericsError, Result, Tensor};
use crate::utcf::align_map;

#[derive(Debug, Clone)]
pub struct SdakParams {
    /// Gain of the semantic mask term.
    pub alpha: f64,
    /// Gain of the depth reliability term.
    pub beta: f64,
    /// 3x3 convolution mapping semantic channels to the mask logit.
    pub mask_conv: ConvSpec,
    pub nms_radius: usize,
    pub top_k: usize,
    pub score_threshold: f64,
    pub border_margin: usize,
}

impl SdakParams {
    pub fn with_mask_conv(mask_conv: ConvSpec) -> Self {
        SdakParams {
            alpha: 1.0,
            beta: 1.0,
            mask_conv,
            nms_radius: 4,
            top_k: 10_000,
            score_threshold: 0.0,
            border_margin: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct DescriptorSet {
    pub dim: usize,
    pub items: Vec<(Keypoint, Vec<f64>)>,
}

/// S_mask = sigmoid(conv3x3(S_map)) squeezed to [H, W].
pub fn semantic_mask(s_map: &Tensor, p: &SdakParams) -> Result<Tensor> {
    let logits = conv2d(s_map, &p.mask_conv)?;
    let (h, w) = (logits.dims()[1], logits.dims()[2]);
    let mut out = Tensor::zeros(vec![h, w]);
    for y in 0..h {
        for x in 0..w {
            out.set2(y, x, sigmoid(logits.at3(0, y, x)));
        }
    }
    Ok(out)
}

/// K_final = K_map * (1 + alpha S_mask + beta R_map); the reliability map
/// is bilinearly resampled to the heatmap size when the dims differ.
pub fn reweight(k_map: &Tensor, s_mask: &Tensor, r_map: &Tensor, p: &SdakParams) -> Result<Tensor> {
    k_map.same_dims(s_mask, "semantic mask")?;
    let (h, w) = (k_map.dims()[0], k_map.dims()[1]);
    let r = align_map(r_map, h, w);
    let mut out = Tensor::zeros(vec![h, w]);
    for y in 0..h {
        for x in 0..w {
            out.set2(
                y,
                x,
                k_map.at2(y, x) * (1.0 + p.alpha * s_mask.at2(y, x) + p.beta * r.at2(y, x)),
            );
        }
    }
    Ok(out)
}

/// Keep only values that win their (2r+1)^2 Chebyshev neighborhood; ties
/// are broken by the row-major earlier position.
pub fn nms(k: &Tensor, radius: usize) -> Tensor {
    let (h, w) = (k.dims()[0], k.dims()[1]);
    let r = radius as isize;
    let mut out = Tensor::zeros(vec![h, w]);
    for y in 0..h {
        for x in 0..w {
            let v = k.at2(y, x);
            let mut wins = true;
            'scan: for dy in -r..=r {
                for dx in -r..=r {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let nv = k.at2(ny as usize, nx as usize);
                    let earlier = (ny as usize, nx as usize) < (y, x);
                    if nv > v || (nv == v && earlier) {
                        wins = false;
                        break 'scan;
                    }
                }
            }
            if wins {
                out.set2(y, x, v);
            }
        }
    }
    out
}

/// NMS, threshold and border filtering, deterministic ordering by
/// (score desc, y asc, x asc) and the top-K cap. Coordinates are pixel
/// centers; no sub-pixel refinement.
pub fn extract_keypoints(k: &Tensor, p: &SdakParams) -> Vec<Keypoint> {
    let suppressed = nms(k, p.nms_radius);
    let (h, w) = (k.dims()[0], k.dims()[1]);
    let m = p.border_margin;
    let mut kps: Vec<Keypoint> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let score = suppressed.at2(y, x);
            if score <= p.score_threshold {
                continue;
            }
            if x < m || y < m || x + m >= w || y + m >= h {
                continue;
            }
            kps.push(Keypoint {
                x: x as f64,
                y: y as f64,
                score,
            });
        }
    }
    kps.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
    });
    kps.truncate(p.top_k);
    kps
}

/// Bilinear descriptor sampling at each keypoint, L2-normalized. A
/// zero-vector sample maps to the unit vector e_0.
pub fn sample_descriptors(d: &Tensor, kps: &[Keypoint]) -> Result<DescriptorSet> {
    let (c, h, w) = (d.dims()[0], d.dims()[1], d.dims()[2]);
    let mut items = Vec::with_capacity(kps.len());
    for kp in kps {
        if kp.x < 0.0 || kp.y < 0.0 || kp.x > (w - 1) as f64 || kp.y > (h - 1) as f64 {
            return Err(NumericsError::InvalidTensor(format!(
                "keypoint ({}, {}) outside {}x{} descriptor map",
                kp.x, kp.y, w, h
            )));
        }
        let x0 = kp.x.floor() as usize;
        let y0 = kp.y.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = kp.x - x0 as f64;
        let fy = kp.y - y0 as f64;
        let mut vec = Vec::with_capacity(c);
        for ch in 0..c {
            vec.push(
                d.at3(ch, y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + d.at3(ch, y0, x1) * (1.0 - fy) * fx
                    + d.at3(ch, y1, x0) * fy * (1.0 - fx)
                    + d.at3(ch, y1, x1) * fy * fx,
            );
        }
        let norm = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut vec {
                *v /= norm;
            }
        } else {
            vec[0] = 1.0;
        }
        items.push((*kp, vec));
    }
    Ok(DescriptorSet { dim: c, items })
}

pub mod io {
    //! Keypoint/descriptor file (.kpd): one JSON header line
    //! {count, descriptorDim, imageWidth, imageHeight} terminated by '\n',
    //! followed (when count > 0) by a GTF tensor [count, 3 + C] whose rows
    //! are (x, y, score, descriptor...).

    use super::{DescriptorSet, Keypoint};
    use crate::numerics::{gtf, Tensor};
    use serde::{Deserialize, Serialize};
    use std::io::{Read, Write};
    use std::path::Path;
    use thiserror::Error;

    #[derive(Debug, Serialize, Deserialize)]
    #[serde(rename_all = "camelCase", deny_unknown_fields)]
    pub struct KpdHeader {
        pub count: usize,
        pub descriptor_dim: usize,
        pub image_width: usize,
        pub image_height: usize,
    }

    #[derive(Debug, Error)]
    pub enum KpdError {
        #[error(transparent)]
        Io(#[from] std::io::Error),
        #[error("bad header: {0}")]
        Header(#[from] serde_json::Error),
        #[error(transparent)]
        Gtf(#[from] gtf::GtfError),
        #[error("payload shape {actual:?} does not match header count {count} / dim {dim}")]
        ShapeMismatch {
            actual: Vec<usize>,
            count: usize,
            dim: usize,
        },
    }

    pub fn write(
        path: impl AsRef<Path>,
        image_width: usize,
        image_height: usize,
        set: &DescriptorSet,
    ) -> Result<(), KpdError> {
        let header = KpdHeader {
            count: set.items.len(),
            descriptor_dim: set.dim,
            image_width,
            image_height,
        };
        let mut bytes = serde_json::to_vec(&header)?;
        bytes.push(b'\n');
        if !set.items.is_empty() {
            let cols = 3 + set.dim;
            let mut data = Vec::with_capacity(set.items.len() * cols);
            for (kp, desc) in &set.items {
                data.push(kp.x);
                data.push(kp.y);
                data.push(kp.score);
                data.extend_from_slice(desc);
            }
            let tensor = Tensor::new(vec![set.items.len(), cols], data).unwrap();
            bytes.extend_from_slice(&gtf::write_bytes(&tensor)?);
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<(KpdHeader, DescriptorSet), KpdError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "no header line"))?;
        let header: KpdHeader = serde_json::from_slice(&bytes[..newline])?;
        let mut items = Vec::with_capacity(header.count);
        if header.count > 0 {
            let tensor = gtf::read_bytes(&bytes[newline + 1..])?;
            let cols = 3 + header.descriptor_dim;
            if tensor.dims() != [header.count, cols] {
                return Err(KpdError::ShapeMismatch {
                    actual: tensor.dims().to_vec(),
                    count: header.count,
                    dim: header.descriptor_dim,
                });
            }
            for row in 0..header.count {
                let base = row * cols;
                let kp = Keypoint {
                    x: tensor.data()[base],
                    y: tensor.data()[base + 1],
                    score: tensor.data()[base + 2],
                };
                items.push((kp, tensor.data()[base + 3..base + cols].to_vec()));
            }
        }
        Ok((
            header,
            DescriptorSet {
                dim: items.first().map(|(_, d)| d.len()).unwrap_or(0),
                items,
            },
        ))
    }
}
