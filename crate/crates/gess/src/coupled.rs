//! Semantic-normal coupled prediction head: decomposition of a 3-channel
//! vector field into normal direction and semantic saliency, fused
//! pseudo-labels, the angle-based normal loss, the cross-entropy semantic
//! loss, and the analytic gradient of the joint loss with its orthogonal
//! radial/tangential split.

use crate::numerics::{NumericsError, Result, Tensor};
use thiserror::Error;

pub const NUM_CLASSES: usize = 4;

/// Norm denominator clamp for the forward decomposition.
pub const NORM_EPS: f64 = 1e-8;
/// Minimum saliency accepted by the gradient (the gradient carries a 1/s factor).
pub const GRAD_SALIENCY_MIN: f64 = 1e-6;
/// Dot-product clamp inside the arccos derivative.
pub const DOT_CLAMP: f64 = 1.0 - 1e-6;

#[derive(Debug, Error)]
pub enum CoupledError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("degenerate saliency (s <= {limit:e}) at pixels {pixels:?}")]
    DegenerateSaliency {
        limit: f64,
        pixels: Vec<(usize, usize)>,
    },
    #[error("label {label} at pixel ({y},{x}) outside 0..{}", NUM_CLASSES)]
    BadLabel { label: i64, y: usize, x: usize },
}

/// Predicted 3-channel vector field V: direction encodes the surface
/// normal, magnitude the semantic saliency.
#[derive(Debug, Clone)]
pub struct VectorField(pub Tensor);

/// Unit-direction field [3,H,W].
#[derive(Debug, Clone)]
pub struct NormalMap(pub Tensor);

/// Non-negative magnitude field [H,W].
#[derive(Debug, Clone)]
pub struct SaliencyMap(pub Tensor);

/// Per-pixel integer class labels [H,W], values in 0..4.
#[derive(Debug, Clone)]
pub struct SemanticLabelMap {
    labels: Vec<u8>,
    height: usize,
    width: usize,
}

impl SemanticLabelMap {
    pub fn new(labels: Vec<u8>, height: usize, width: usize) -> std::result::Result<Self, CoupledError> {
        assert_eq!(labels.len(), height * width);
        for (i, &l) in labels.iter().enumerate() {
            if l as usize >= NUM_CLASSES {
                return Err(CoupledError::BadLabel {
                    label: l as i64,
                    y: i / width,
                    x: i % width,
                });
            }
        }
        Ok(SemanticLabelMap {
            labels,
            height,
            width,
        })
    }

    /// Labels delivered as a GTF map [H,W] of (near-)integer values.
    pub fn from_tensor(t: &Tensor) -> std::result::Result<Self, CoupledError> {
        let (h, w) = (t.dims()[0], t.dims()[1]);
        let mut labels = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let v = t.at2(y, x).round();
                if v < 0.0 || v >= NUM_CLASSES as f64 {
                    return Err(CoupledError::BadLabel {
                        label: v as i64,
                        y,
                        x,
                    });
                }
                labels.push(v as u8);
            }
        }
        Ok(SemanticLabelMap {
            labels,
            height: h,
            width: w,
        })
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Per-pixel affine classifier from scalar saliency to 4 class logits.
#[derive(Debug, Clone, Copy)]
pub struct SaliencyClassifierParams {
    pub weights: [f64; NUM_CLASSES],
    pub biases: [f64; NUM_CLASSES],
}

impl SaliencyClassifierParams {
    pub fn zeroed() -> Self {
        SaliencyClassifierParams {
            weights: [0.0; NUM_CLASSES],
            biases: [0.0; NUM_CLASSES],
        }
    }
}

/// Reliability weight per semantic class (stable / medium / low / dynamic).
#[derive(Debug, Clone, Copy)]
pub struct SemanticWeightTable(pub [f64; NUM_CLASSES]);

impl Default for SemanticWeightTable {
    fn default() -> Self {
        SemanticWeightTable([1.0, 0.7, 0.4, 0.1])
    }
}

/// Split V into unit direction n = V / max(|V|, 1e-8) and magnitude s = |V|.
pub fn decompose(v: &VectorField) -> (NormalMap, SaliencyMap) {
    let t = &v.0;
    let (h, w) = (t.dims()[1], t.dims()[2]);
    let mut normals = Tensor::zeros(vec![3, h, w]);
    let mut mags = Tensor::zeros(vec![h, w]);
    for y in 0..h {
        for x in 0..w {
            let (a, b, c) = (t.at3(0, y, x), t.at3(1, y, x), t.at3(2, y, x));
            let s = (a * a + b * b + c * c).sqrt();
            let d = s.max(NORM_EPS);
            normals.set3(0, y, x, a / d);
            normals.set3(1, y, x, b / d);
            normals.set3(2, y, x, c / d);
            mags.set2(y, x, s);
        }
    }
    (NormalMap(normals), SaliencyMap(mags))
}

/// Per-pixel softmax over the 4 affine logits w[m] * s + b[m].
pub fn classify_saliency(s: &SaliencyMap, params: &SaliencyClassifierParams) -> Tensor {
    let (h, w) = (s.0.dims()[0], s.0.dims()[1]);
    let mut out = Tensor::zeros(vec![NUM_CLASSES, h, w]);
    for y in 0..h {
        for x in 0..w {
            let p = softmax_at(s.0.at2(y, x), params);
            for m in 0..NUM_CLASSES {
                out.set3(m, y, x, p[m]);
            }
        }
    }
    out
}

fn softmax_at(s: f64, params: &SaliencyClassifierParams) -> [f64; NUM_CLASSES] {
    let mut logits = [0.0; NUM_CLASSES];
    for m in 0..NUM_CLASSES {
        logits[m] = params.weights[m] * s + params.biases[m];
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for m in 0..NUM_CLASSES {
        p[m] = (logits[m] - max).exp();
        sum += p[m];
    }
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// Mean angular deviation arccos(clamp(n . n*, -1, 1)) over pixels.
pub fn normal_loss(n: &NormalMap, n_star: &NormalMap) -> Result<f64> {
    n.0.same_dims(&n_star.0, "normal map")?;
    let (h, w) = (n.0.dims()[1], n.0.dims()[2]);
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let dot = (0..3).map(|c| n.0.at3(c, y, x) * n_star.0.at3(c, y, x)).sum::<f64>();
            sum += dot.clamp(-1.0, 1.0).acos();
        }
    }
    Ok(sum / (h * w) as f64)
}

/// Cross-entropy of the correct-class probability, floored at 1e-12.
pub fn seg_loss(probs: &Tensor, labels: &SemanticLabelMap) -> Result<f64> {
    let (h, w) = (probs.dims()[1], probs.dims()[2]);
    if h != labels.height() || w != labels.width() {
        return Err(NumericsError::ShapeMismatch {
            axis: "label map",
            expected: h * w,
            actual: labels.height() * labels.width(),
        });
    }
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = probs.at3(labels.at(y, x), y, x).max(1e-12);
            sum -= p.ln();
        }
    }
    Ok(sum / (h * w) as f64)
}

/// Pixel-wise semantic-normal vector labels V* = table[label] * n*.
pub fn fuse_labels(
    n_star: &NormalMap,
    labels: &SemanticLabelMap,
    table: &SemanticWeightTable,
) -> VectorField {
    let (h, w) = (n_star.0.dims()[1], n_star.0.dims()[2]);
    let mut out = Tensor::zeros(vec![3, h, w]);
    for y in 0..h {
        for x in 0..w {
            let weight = table.0[labels.at(y, x)];
            for c in 0..3 {
                out.set3(c, y, x, weight * n_star.0.at3(c, y, x));
            }
        }
    }
    VectorField(out)
}

/// Joint loss: total = seg term + normal term (unit weights).
pub fn coupled_loss(
    v: &VectorField,
    params: &SaliencyClassifierParams,
    labels: &SemanticLabelMap,
    n_star: &NormalMap,
) -> Result<(f64, f64, f64)> {
    let (n, s) = decompose(v);
    let seg = seg_loss(&classify_saliency(&s, params), labels)?;
    let normal = normal_loss(&n, n_star)?;
    Ok((seg + normal, seg, normal))
}

#[derive(Debug, Clone)]
pub struct CoupledGradient {
    pub grad: Tensor,
    pub radial: Tensor,
    pub tangential: Tensor,
}

/// Analytic gradient of the joint loss with respect to V, split into the
/// radial (semantic) component along n and the tangential (normal)
/// component orthogonal to n:
///
/// dL/dV = (dL_seg/ds) n + (1/s)(I - n n^T) dL_normal/dn
///
/// The seg derivative includes the classifier Jacobian; the arccos
/// derivative clamps the dot product to stay bounded near alignment.
pub fn coupled_gradient(
    v: &VectorField,
    params: &SaliencyClassifierParams,
    labels: &SemanticLabelMap,
    n_star: &NormalMap,
) -> std::result::Result<CoupledGradient, CoupledError> {
    let (nm, sm) = decompose(v);
    let (h, w) = (sm.0.dims()[0], sm.0.dims()[1]);

    let degenerate: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| sm.0.at2(y, x) <= GRAD_SALIENCY_MIN)
        .collect();
    if !degenerate.is_empty() {
        return Err(CoupledError::DegenerateSaliency {
            limit: GRAD_SALIENCY_MIN,
            pixels: degenerate,
        });
    }

    let count = (h * w) as f64;
    let mut grad = Tensor::zeros(vec![3, h, w]);
    let mut radial = Tensor::zeros(vec![3, h, w]);
    let mut tangential = Tensor::zeros(vec![3, h, w]);

    for y in 0..h {
        for x in 0..w {
            let s = sm.0.at2(y, x);
            let n = [nm.0.at3(0, y, x), nm.0.at3(1, y, x), nm.0.at3(2, y, x)];
            let ns = [
                n_star.0.at3(0, y, x),
                n_star.0.at3(1, y, x),
                n_star.0.at3(2, y, x),
            ];

            // Radial scalar: d(-log p_label)/ds = sum_m p_m w_m - w_label,
            // averaged over pixels.
            let p = softmax_at(s, params);
            let label = labels.at(y, x);
            let expect_w: f64 = (0..NUM_CLASSES).map(|m| p[m] * params.weights[m]).sum();
            let dseg_ds = (expect_w - params.weights[label]) / count;

            // Tangential vector: dL_normal/dn = -n* / sqrt(1 - dot^2),
            // projected onto the plane orthogonal to n and scaled by 1/s.
            let dot: f64 = (0..3).map(|c| n[c] * ns[c]).sum();
            let dot = dot.clamp(-DOT_CLAMP, DOT_CLAMP);
            let dacos = -1.0 / (1.0 - dot * dot).sqrt();
            let gn: [f64; 3] = [
                dacos * ns[0] / count,
                dacos * ns[1] / count,
                dacos * ns[2] / count,
            ];
            let gn_dot_n: f64 = (0..3).map(|c| gn[c] * n[c]).sum();

            for c in 0..3 {
                let r = dseg_ds * n[c];
                let t = (gn[c] - gn_dot_n * n[c]) / s;
                radial.set3(c, y, x, r);
                tangential.set3(c, y, x, t);
                grad.set3(c, y, x, r + t);
            }
        }
    }

    Ok(CoupledGradient {
        grad,
        radial,
        tangential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub fn random_unit_normals(rng: &mut ChaCha8Rng, h: usize, w: usize) -> NormalMap {
        let mut t = Tensor::zeros(vec![3, h, w]);
        for y in 0..h {
            for x in 0..w {
                loop {
                    let v: [f64; 3] = [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ];
                    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if n > 0.1 {
                        for c in 0..3 {
                            t.set3(c, y, x, v[c] / n);
                        }
                        break;
                    }
                }
            }
        }
        NormalMap(t)
    }

    fn random_labels(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SemanticLabelMap {
        let labels = (0..h * w).map(|_| rng.random_range(0..4u8)).collect();
        SemanticLabelMap::new(labels, h, w).unwrap()
    }

    #[test]
    fn decompose_axis_aligned_and_triple() {
        let v = VectorField(
            Tensor::new(vec![3, 1, 2], vec![0.0, 3.0, 0.0, 4.0, 2.0, 0.0]).unwrap(),
        );
        let (n, s) = decompose(&v);
        // pixel (0,0): V = (0,0,2)
        assert_eq!(s.0.at2(0, 0), 2.0);
        assert_eq!(
            [n.0.at3(0, 0, 0), n.0.at3(1, 0, 0), n.0.at3(2, 0, 0)],
            [0.0, 0.0, 1.0]
        );
        // pixel (0,1): V = (3,4,0)
        assert_eq!(s.0.at2(0, 1), 5.0);
        assert!((n.0.at3(0, 0, 1) - 0.6).abs() < 1e-12);
        assert!((n.0.at3(1, 0, 1) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn decompose_zero_vector() {
        let v = VectorField(Tensor::zeros(vec![3, 1, 1]));
        let (n, s) = decompose(&v);
        assert_eq!(s.0.at2(0, 0), 0.0);
        assert_eq!(n.0.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn classify_uniform_and_dominant() {
        let s = SaliencyMap(Tensor::filled(vec![2, 2], 0.7));
        let p = classify_saliency(&s, &SaliencyClassifierParams::zeroed());
        for v in p.data() {
            assert!((v - 0.25).abs() <= 1e-12);
        }
        let params = SaliencyClassifierParams {
            weights: [0.0; 4],
            biases: [20.0, 0.0, 0.0, 0.0],
        };
        let p = classify_saliency(&s, &params);
        assert!(p.at3(0, 0, 0) >= 0.9999);
    }

    #[test]
    fn classify_matches_direct_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = SaliencyClassifierParams {
            weights: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            biases: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        };
        let s = SaliencyMap(Tensor::new(
            vec![2, 3],
            (0..6).map(|_| rng.random_range(0.0..2.0)).collect(),
        ).unwrap());
        let p = classify_saliency(&s, &params);
        for y in 0..2 {
            for x in 0..3 {
                let sv = s.0.at2(y, x);
                let exps: Vec<f64> = (0..4)
                    .map(|m| (params.weights[m] * sv + params.biases[m]).exp())
                    .collect();
                let z: f64 = exps.iter().sum();
                let mut total = 0.0;
                for m in 0..4 {
                    assert!((p.at3(m, y, x) - exps[m] / z).abs() <= 1e-6);
                    total += p.at3(m, y, x);
                }
                assert!((total - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn normal_loss_aligned_orthogonal_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = random_unit_normals(&mut rng, 2, 2);
        // acos amplifies rounding near dot = 1: error ~ sqrt(2 * ulp)
        assert!(normal_loss(&n, &n).unwrap().abs() <= 1e-7);

        let ez = NormalMap(Tensor::from_fn(vec![3, 2, 2], |i| if i[0] == 2 { 1.0 } else { 0.0 }));
        let ex = NormalMap(Tensor::from_fn(vec![3, 2, 2], |i| if i[0] == 0 { 1.0 } else { 0.0 }));
        assert!((normal_loss(&ez, &ex).unwrap() - PI / 2.0).abs() <= 1e-12);

        // half aligned, half orthogonal
        let mixed = NormalMap(Tensor::from_fn(vec![3, 2, 2], |i| {
            let aligned = i[1] == 0; // first row aligned with ez
            if aligned {
                if i[0] == 2 { 1.0 } else { 0.0 }
            } else if i[0] == 0 {
                1.0
            } else {
                0.0
            }
        }));
        assert!((normal_loss(&mixed, &ez).unwrap() - PI / 4.0).abs() <= 1e-12);
    }

    #[test]
    fn normal_loss_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_unit_normals(&mut rng, 3, 3);
        let b = random_unit_normals(&mut rng, 3, 3);
        let ab = normal_loss(&a, &b).unwrap();
        let ba = normal_loss(&b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-12);
    }

    #[test]
    fn seg_loss_values() {
        let labels = SemanticLabelMap::new(vec![0, 1, 2, 3], 2, 2).unwrap();
        // perfect prediction
        let mut probs = Tensor::zeros(vec![4, 2, 2]);
        for y in 0..2 {
            for x in 0..2 {
                probs.set3(labels.at(y, x), y, x, 1.0);
            }
        }
        assert_eq!(seg_loss(&probs, &labels).unwrap(), 0.0);

        // uniform
        let probs = Tensor::filled(vec![4, 2, 2], 0.25);
        assert!((seg_loss(&probs, &labels).unwrap() - 4.0f64.ln()).abs() <= 1e-6);

        // single pixel, p(correct) = 0.5
        let labels = SemanticLabelMap::new(vec![1], 1, 1).unwrap();
        let probs = Tensor::new(vec![4, 1, 1], vec![0.2, 0.5, 0.2, 0.1]).unwrap();
        assert!((seg_loss(&probs, &labels).unwrap() - 2.0f64.ln()).abs() <= 1e-6);
    }

    #[test]
    fn seg_loss_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let labels = random_labels(&mut rng, 2, 2);
            let mut probs = Tensor::zeros(vec![4, 2, 2]);
            for y in 0..2 {
                for x in 0..2 {
                    let raw: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..1.0));
                    let z: f64 = raw.iter().sum();
                    for m in 0..4 {
                        probs.set3(m, y, x, raw[m] / z);
                    }
                }
            }
            assert!(seg_loss(&probs, &labels).unwrap() >= 0.0);
        }
    }

    #[test]
    fn fuse_and_decompose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n_star = random_unit_normals(&mut rng, 3, 3);
        let labels = random_labels(&mut rng, 3, 3);
        let table = SemanticWeightTable::default();
        let fused = fuse_labels(&n_star, &labels, &table);
        let (n, s) = decompose(&fused);
        for y in 0..3 {
            for x in 0..3 {
                let w = table.0[labels.at(y, x)];
                assert!((s.0.at2(y, x) - w).abs() <= 1e-9);
                for c in 0..3 {
                    assert!((n.0.at3(c, y, x) - n_star.0.at3(c, y, x)).abs() <= 1e-7);
                }
            }
        }
        // weight 0.1 class with n* = (0,0,1) gives V* = (0,0,0.1)
        let labels = SemanticLabelMap::new(vec![3], 1, 1).unwrap();
        let ez = NormalMap(Tensor::new(vec![3, 1, 1], vec![0.0, 0.0, 1.0]).unwrap());
        let fused = fuse_labels(&ez, &labels, &table);
        assert!((fused.0.at3(2, 0, 0) - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn coupled_loss_additivity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n_star = random_unit_normals(&mut rng, 3, 3);
        let labels = random_labels(&mut rng, 3, 3);
        let v = VectorField(Tensor::from_fn(vec![3, 3, 3], |_| rng.random_range(-1.0..1.0)));
        let params = SaliencyClassifierParams {
            weights: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            biases: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        };
        let (total, seg, normal) = coupled_loss(&v, &params, &labels, &n_star).unwrap();
        assert_eq!(total, seg + normal);

        // unit-weight fused labels + a classifier certain of the right class
        let labels0 = SemanticLabelMap::new(vec![0; 9], 3, 3).unwrap();
        let table = SemanticWeightTable::default();
        let v = fuse_labels(&n_star, &labels0, &table);
        let certain = SaliencyClassifierParams {
            weights: [0.0; 4],
            biases: [60.0, 0.0, 0.0, 0.0],
        };
        let (total, _, _) = coupled_loss(&v, &certain, &labels0, &n_star).unwrap();
        assert!(total.abs() <= 1e-6);

        // uniform classifier: total = ln 4 + normal term
        let zero = SaliencyClassifierParams::zeroed();
        let (total, seg, normal) = coupled_loss(&v, &zero, &labels0, &n_star).unwrap();
        assert!((seg - 4.0f64.ln()).abs() <= 1e-12);
        assert!((total - (4.0f64.ln() + normal)).abs() <= 1e-12);
    }

    #[test]
    fn gradient_zero_weights_is_tangential_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n_star = random_unit_normals(&mut rng, 3, 3);
        let labels = random_labels(&mut rng, 3, 3);
        let v = VectorField(Tensor::from_fn(vec![3, 3, 3], |_| rng.random_range(0.2..1.0)));
        let g = coupled_gradient(&v, &SaliencyClassifierParams::zeroed(), &labels, &n_star)
            .unwrap();
        for &r in g.radial.data() {
            assert_eq!(r, 0.0);
        }
        for (a, b) in g.grad.data().iter().zip(g.tangential.data()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gradient_aligned_normals_is_radial_dominated() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let n_star = random_unit_normals(&mut rng, 2, 2);
        let labels = random_labels(&mut rng, 2, 2);
        // V pointing exactly along n*, magnitude 0.5
        let v = VectorField(n_star.0.map(|x| 0.5 * x));
        let params = SaliencyClassifierParams {
            weights: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            biases: [0.0; 4],
        };
        let g = coupled_gradient(&v, &params, &labels, &n_star).unwrap();
        // tangential term is bounded by the clamp near perfect alignment
        for (t, r) in g.tangential.data().iter().zip(g.radial.data()) {
            let _ = r;
            assert!(t.abs() <= 2e-3, "tangential {t} too large at alignment");
        }
    }

    #[test]
    fn gradient_reconstruction_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let n_star = random_unit_normals(&mut rng, 5, 5);
        let labels = random_labels(&mut rng, 5, 5);
        let v = VectorField(Tensor::from_fn(vec![3, 5, 5], |_| rng.random_range(-1.0..1.0)));
        let params = SaliencyClassifierParams {
            weights: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            biases: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        };
        let g = match coupled_gradient(&v, &params, &labels, &n_star) {
            Ok(g) => g,
            Err(_) => return, // degenerate draw
        };
        for i in 0..g.grad.len() {
            assert_eq!(g.grad.data()[i], g.radial.data()[i] + g.tangential.data()[i]);
        }
        for y in 0..5 {
            for x in 0..5 {
                let r: Vec<f64> = (0..3).map(|c| g.radial.at3(c, y, x)).collect();
                let t: Vec<f64> = (0..3).map(|c| g.tangential.at3(c, y, x)).collect();
                let dot: f64 = (0..3).map(|c| r[c] * t[c]).sum();
                let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(dot.abs() <= 1e-6 * (rn * tn + 1e-12));
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut checked = 0;
        while checked < 20 {
            let n_star = random_unit_normals(&mut rng, 3, 3);
            let labels = random_labels(&mut rng, 3, 3);
            let v = VectorField(Tensor::from_fn(vec![3, 3, 3], |_| rng.random_range(-1.0..1.0)));
            let params = SaliencyClassifierParams {
                weights: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
                biases: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            };
            let (n, s) = decompose(&v);
            // stay away from degenerate magnitudes and the arccos singularity
            let mut ok = true;
            for y in 0..3 {
                for x in 0..3 {
                    if s.0.at2(y, x) <= 0.05 {
                        ok = false;
                    }
                    let dot: f64 = (0..3)
                        .map(|c| n.0.at3(c, y, x) * n_star.0.at3(c, y, x))
                        .sum();
                    if dot.abs() > 0.99 {
                        ok = false;
                    }
                }
            }
            if !ok {
                continue;
            }
            checked += 1;

            let analytic = coupled_gradient(&v, &params, &labels, &n_star).unwrap();
            let numeric = finite_diff_gradient(
                |t| {
                    let (total, _, _) =
                        coupled_loss(&VectorField(t.clone()), &params, &labels, &n_star)
                            .map_err(|_| crate::numerics::NumericsError::NonFinite("loss"))?;
                    Ok(total)
                },
                &v.0,
                1e-4,
            )
            .unwrap();
            for (a, b) in analytic.grad.data().iter().zip(numeric.data()) {
                let denom = b.abs().max(1e-4);
                assert!(
                    (a - b).abs() / denom <= 1e-5,
                    "analytic {a} vs numeric {b}"
                );
            }
        }
    }

    #[test]
    fn gradient_rejects_degenerate_saliency() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n_star = random_unit_normals(&mut rng, 2, 2);
        let labels = random_labels(&mut rng, 2, 2);
        let mut t = Tensor::filled(vec![3, 2, 2], 0.5);
        for c in 0..3 {
            t.set3(c, 1, 1, 0.0);
        }
        let err = coupled_gradient(
            &VectorField(t),
            &SaliencyClassifierParams::zeroed(),
            &labels,
            &n_star,
        )
        .unwrap_err();
        match err {
            CoupledError::DegenerateSaliency { pixels, .. } => {
                assert_eq!(pixels, vec![(1, 1)]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
