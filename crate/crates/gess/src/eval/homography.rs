//! 3x3 planar ground-truth transforms and point reprojection.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HomographyError {
    #[error("singular homography (|det| = {0:e})")]
    Singular(f64),
    #[error("point maps to infinity (|w| = {0:e})")]
    PointAtInfinity(f64),
    #[error("expected 9 matrix entries, got {0}")]
    BadEntryCount(usize),
    #[error("unparseable matrix entry {0:?}")]
    BadEntry(String),
}

/// Invertible 3x3 projective transform, stored row-major and normalized so
/// the bottom-right entry is 1 whenever it is non-negligible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: [[f64; 3]; 3],
}

impl Homography {
    pub fn new(mut h: [[f64; 3]; 3]) -> Result<Self, HomographyError> {
        let det = det3(&h);
        if det.abs() <= 1e-12 {
            return Err(HomographyError::Singular(det.abs()));
        }
        if h[2][2].abs() > 1e-12 {
            let s = h[2][2];
            for row in &mut h {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        Ok(Homography { h })
    }

    pub fn identity() -> Self {
        Homography {
            h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            h: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.h
    }

    /// Parse 9 whitespace-separated numbers, row-major.
    pub fn parse_ascii(text: &str) -> Result<Self, HomographyError> {
        let values: Result<Vec<f64>, _> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| HomographyError::BadEntry(t.to_string())))
            .collect();
        let values = values?;
        if values.len() != 9 {
            return Err(HomographyError::BadEntryCount(values.len()));
        }
        Homography::new([
            [values[0], values[1], values[2]],
            [values[3], values[4], values[5]],
            [values[6], values[7], values[8]],
        ])
    }

    pub fn project(&self, x: f64, y: f64) -> Result<(f64, f64), HomographyError> {
        let h = &self.h;
        let w = h[2][0] * x + h[2][1] * y + h[2][2];
        if w.abs() <= 1e-12 {
            return Err(HomographyError::PointAtInfinity(w.abs()));
        }
        Ok((
            (h[0][0] * x + h[0][1] * y + h[0][2]) / w,
            (h[1][0] * x + h[1][1] * y + h[1][2]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Self, HomographyError> {
        let h = &self.h;
        let det = det3(h);
        if det.abs() <= 1e-12 {
            return Err(HomographyError::Singular(det.abs()));
        }
        let c = |r0: usize, c0: usize, r1: usize, c1: usize| h[r0][c0] * h[r1][c1] - h[r0][c1] * h[r1][c0];
        let adj = [
            [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
            [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
            [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
        ];
        let mut inv = [[0.0; 3]; 3];
        for r in 0..3 {
            for cc in 0..3 {
                inv[r][cc] = adj[r][cc] / det;
            }
        }
        Homography::new(inv)
    }
}

fn det3(h: &[[f64; 3]; 3]) -> f64 {
    h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
        - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
        + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_translation() {
        let id = Homography::identity();
        assert_eq!(id.project(3.5, -2.0).unwrap(), (3.5, -2.0));
        let t = Homography::translation(5.0, -1.5);
        let (x, y) = t.project(2.0, 3.0).unwrap();
        assert!((x - 7.0).abs() <= 1e-12 && (y - 1.5).abs() <= 1e-12);
    }

    #[test]
    fn normalization_fixes_scale() {
        let h = Homography::new([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        assert_eq!(h.matrix()[2][2], 1.0);
        assert_eq!(h.matrix()[0][0], 1.0);
    }

    #[test]
    fn singular_rejected() {
        assert!(Homography::new([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..50 {
            let mut m = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    m[r][c] = rng.random_range(-1.0..1.0);
                }
            }
            m[0][0] += 2.0;
            m[1][1] += 2.0;
            m[2][2] += 2.0;
            m[2][0] *= 0.01;
            m[2][1] *= 0.01;
            let h = match Homography::new(m) {
                Ok(h) => h,
                Err(_) => continue,
            };
            let inv = h.inverse().unwrap();
            let (x, y) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let (px, py) = h.project(x, y).unwrap();
            let (bx, by) = inv.project(px, py).unwrap();
            assert!((bx - x).abs() <= 1e-6 && (by - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn parse_ascii_and_bad_counts() {
        let h = Homography::parse_ascii("1 0 5\n0 1 -3\n0 0 1\n").unwrap();
        let (x, y) = h.project(0.0, 0.0).unwrap();
        assert_eq!((x, y), (5.0, -3.0));
        assert!(matches!(
            Homography::parse_ascii("1 2 3 4 5 6 7 8"),
            Err(HomographyError::BadEntryCount(8))
        ));
        assert!(Homography::parse_ascii("a b c d e f g h i").is_err());
    }
}
