//! Nearest-neighbor descriptor matching and reprojection errors.

use super::{EvalError, Homography};
use crate::sdak::{DescriptorSet, Keypoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
}

pub type MatchSet = Vec<Match>;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest descriptor in `b` for each entry of `a` (ties resolved to the
/// lowest index). With `mutual` set, a pair is kept only when each side is
/// the other's nearest. Output sorted by index_a.
pub fn nn_match(a: &DescriptorSet, b: &DescriptorSet, mutual: bool) -> Result<MatchSet, EvalError> {
    if a.items.is_empty() || b.items.is_empty() {
        return Ok(Vec::new());
    }
    if a.dim != b.dim {
        return Err(EvalError::DimMismatch { a: a.dim, b: b.dim });
    }
    let nearest = |from: &DescriptorSet, to: &DescriptorSet| -> Vec<(usize, f64)> {
        from.items
            .iter()
            .map(|(_, desc)| {
                let mut best = (0usize, f64::INFINITY);
                for (j, (_, other)) in to.items.iter().enumerate() {
                    let d = squared_distance(desc, other);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best
            })
            .collect()
    };
    let a_to_b = nearest(a, b);
    let matches: MatchSet = if mutual {
        let b_to_a = nearest(b, a);
        a_to_b
            .iter()
            .enumerate()
            .filter(|&(i, &(j, _))| b_to_a[j].0 == i)
            .map(|(i, &(j, d))| Match {
                index_a: i,
                index_b: j,
                distance: d.sqrt(),
            })
            .collect()
    } else {
        a_to_b
            .iter()
            .enumerate()
            .map(|(i, &(j, d))| Match {
                index_a: i,
                index_b: j,
                distance: d.sqrt(),
            })
            .collect()
    };
    Ok(matches)
}

/// Reprojection error per match: |H(kp_a) - kp_b| in pixels.
pub fn match_errors(
    matches: &MatchSet,
    kps_a: &[Keypoint],
    kps_b: &[Keypoint],
    h: &Homography,
) -> Result<Vec<f64>, EvalError> {
    let mut errors = Vec::with_capacity(matches.len());
    for m in matches {
        let a = kps_a.get(m.index_a).ok_or(EvalError::BadIndex {
            index: m.index_a,
            size: kps_a.len(),
        })?;
        let b = kps_b.get(m.index_b).ok_or(EvalError::BadIndex {
            index: m.index_b,
            size: kps_b.len(),
        })?;
        let (px, py) = h.project(a.x, a.y)?;
        errors.push(((px - b.x).powi(2) + (py - b.y).powi(2)).sqrt());
    }
    Ok(errors)
}
