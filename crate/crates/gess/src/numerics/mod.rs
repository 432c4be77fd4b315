//! Minimal dense-tensor kernel shared by every other module: storage,
//! elementwise ops, naive 2-D convolution, pooling, resampling, a
//! finite-difference gradient oracle and the GTF file format.
//!
//! Values are held in 64-bit floats in memory so that loss/gradient
//! accumulation and finite-difference checks are meaningful; the on-disk
//! GTF format stores 32-bit floats.

pub mod gtf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch on {axis}: expected {expected}, got {actual}")]
    ShapeMismatch {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("kernel extents must be odd, got {kh}x{kw}")]
    EvenKernel { kh: usize, kw: usize },
    #[error("convolution output extent not integral for {axis} (in={input}, k={kernel}, pad={padding}, stride={stride})")]
    NonIntegralOutput {
        axis: &'static str,
        input: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
    },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Gtf(#[from] gtf::GtfError),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Dense n-dimensional real array, row-major, outermost dimension first.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(NumericsError::InvalidTensor(format!(
                "dims must be non-empty and positive, got {dims:?}"
            )));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(NumericsError::InvalidTensor(format!(
                "data length {} does not match product of dims {dims:?}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![0.0; n],
        }
    }

    pub fn filled(dims: Vec<usize>, value: f64) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![value; n],
        }
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..n {
            data.push(f(&idx));
            for ax in (0..dims.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < dims[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat index for a 2-D tensor [H, W].
    #[inline]
    pub fn at2(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.dims[1] + x]
    }

    #[inline]
    pub fn set2(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.dims[1] + x] = v;
    }

    /// Flat index for a 3-D tensor [C, H, W].
    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        let (h, w) = (self.dims[1], self.dims[2]);
        self.data[(c * h + y) * w + x]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let (h, w) = (self.dims[1], self.dims[2]);
        self.data[(c * h + y) * w + x] = v;
    }

    /// Flat index for a 4-D tensor [O, C, H, W].
    #[inline]
    pub fn at4(&self, o: usize, c: usize, y: usize, x: usize) -> f64 {
        let (ci, h, w) = (self.dims[1], self.dims[2], self.dims[3]);
        self.data[((o * ci + c) * h + y) * w + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims(&self, other: &Tensor, axis: &'static str) -> Result<()> {
        if self.dims != other.dims {
            return Err(NumericsError::ShapeMismatch {
                axis,
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }
}

/// Convolution parameters: kernel [C_out, C_in, kH, kW], bias [C_out],
/// zero padding. Kernel extents must be odd.
#[derive(Debug, Clone)]
pub struct ConvSpec {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(kernel: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        if kernel.ndim() != 4 {
            return Err(NumericsError::InvalidTensor(format!(
                "conv kernel must be 4-D, got {}-D",
                kernel.ndim()
            )));
        }
        let (kh, kw) = (kernel.dims()[2], kernel.dims()[3]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(NumericsError::EvenKernel { kh, kw });
        }
        if bias.ndim() != 1 || bias.dims()[0] != kernel.dims()[0] {
            return Err(NumericsError::ShapeMismatch {
                axis: "bias/out-channels",
                expected: kernel.dims()[0],
                actual: bias.len(),
            });
        }
        if stride == 0 {
            return Err(NumericsError::InvalidTensor("stride must be positive".into()));
        }
        Ok(ConvSpec {
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.dims()[1]
    }
}

/// Inference-form batch normalization: per-channel affine
/// y = gamma * (x - mean) / sqrt(var + eps) + beta.
#[derive(Debug, Clone)]
pub struct NormSpec {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl NormSpec {
    /// Exact pass-through: variance is pre-compensated for eps so that
    /// apply() returns its input unchanged.
    pub fn identity(channels: usize) -> Self {
        NormSpec {
            mean: vec![0.0; channels],
            var: vec![1.0 - 1e-5; channels],
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            eps: 1e-5,
        }
    }

    /// All-zero parameters, matching a zero-initialized network.
    pub fn zeroed(channels: usize) -> Self {
        NormSpec {
            mean: vec![0.0; channels],
            var: vec![0.0; channels],
            gamma: vec![0.0; channels],
            beta: vec![0.0; channels],
            eps: 1e-5,
        }
    }

    pub fn apply(&self, input: &Tensor) -> Result<Tensor> {
        let c = input.dims()[0];
        if self.mean.len() != c {
            return Err(NumericsError::ShapeMismatch {
                axis: "norm/channels",
                expected: self.mean.len(),
                actual: c,
            });
        }
        let mut out = input.clone();
        let (h, w) = (input.dims()[1], input.dims()[2]);
        for ch in 0..c {
            let scale = self.gamma[ch] / (self.var[ch] + self.eps).sqrt();
            for y in 0..h {
                for x in 0..w {
                    let v = input.at3(ch, y, x);
                    out.set3(ch, y, x, scale * (v - self.mean[ch]) + self.beta[ch]);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn activate(input: &Tensor, mode: Activation) -> Tensor {
    match mode {
        Activation::Sigmoid => input.map(sigmoid),
        Activation::Relu => input.map(|v| v.max(0.0)),
    }
}

/// Naive direct 2-D convolution of input [C_in, H, W] with zero padding.
pub fn conv2d(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    if input.ndim() != 3 {
        return Err(NumericsError::InvalidTensor(format!(
            "conv input must be 3-D, got {}-D",
            input.ndim()
        )));
    }
    let (cin, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if cin != spec.in_channels() {
        return Err(NumericsError::ShapeMismatch {
            axis: "in-channels",
            expected: spec.in_channels(),
            actual: cin,
        });
    }
    let (cout, kh, kw) = (
        spec.out_channels(),
        spec.kernel.dims()[2],
        spec.kernel.dims()[3],
    );
    let (p, s) = (spec.padding, spec.stride);
    let check = |axis: &'static str, n: usize, k: usize| -> Result<usize> {
        let padded = n + 2 * p;
        if padded < k || (padded - k) % s != 0 {
            return Err(NumericsError::NonIntegralOutput {
                axis,
                input: n,
                kernel: k,
                padding: p,
                stride: s,
            });
        }
        Ok((padded - k) / s + 1)
    };
    let oh = check("height", h, kh)?;
    let ow = check("width", w, kw)?;

    let mut out = Tensor::zeros(vec![cout, oh, ow]);
    for o in 0..cout {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = spec.bias.data()[o];
                for c in 0..cin {
                    for i in 0..kh {
                        for j in 0..kw {
                            let iy = (y * s + i) as isize - p as isize;
                            let ix = (x * s + j) as isize - p as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue; // zero padding
                            }
                            acc += spec.kernel.at4(o, c, i, j)
                                * input.at3(c, iy as usize, ix as usize);
                        }
                    }
                }
                out.set3(o, y, x, acc);
            }
        }
    }
    Ok(out)
}

/// Mean over the spatial extent of each channel of [C, H, W].
pub fn global_avg_pool(input: &Tensor) -> Vec<f64> {
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let area = (h * w) as f64;
    (0..c)
        .map(|ch| {
            let mut sum = 0.0;
            for y in 0..h {
                for x in 0..w {
                    sum += input.at3(ch, y, x);
                }
            }
            sum / area
        })
        .collect()
}

/// Align-corners bilinear resampling of [C, H, W] to [C, outH, outW].
pub fn bilinear_resample(input: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if out_h == h && out_w == w {
        return input.clone();
    }
    let src = |out_n: usize, in_n: usize, i: usize| -> f64 {
        if out_n > 1 {
            i as f64 * (in_n - 1) as f64 / (out_n - 1) as f64
        } else {
            (in_n - 1) as f64 / 2.0
        }
    };
    let mut out = Tensor::zeros(vec![c, out_h, out_w]);
    for ch in 0..c {
        for y in 0..out_h {
            let sy = src(out_h, h, y);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            for x in 0..out_w {
                let sx = src(out_w, w, x);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = sx - x0 as f64;
                let v = input.at3(ch, y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + input.at3(ch, y0, x1) * (1.0 - fy) * fx
                    + input.at3(ch, y1, x0) * fy * (1.0 - fx)
                    + input.at3(ch, y1, x1) * fy * fx;
                out.set3(ch, y, x, v);
            }
        }
    }
    out
}

/// Central-difference gradient of a scalar function, (f(x+h e_i) - f(x-h e_i)) / 2h.
pub fn finite_diff_gradient(
    f: impl Fn(&Tensor) -> Result<f64>,
    x: &Tensor,
    h: f64,
) -> Result<Tensor> {
    let mut grad = Tensor::zeros(x.dims().to_vec());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(NumericsError::NonFinite("finite_diff_gradient evaluation"));
        }
        grad.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>) -> Tensor {
        let n = dims.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(dims, data).unwrap()
    }

    /// Independent quadruple-nested-loop convolution used as the oracle.
    fn conv2d_reference(input: &Tensor, spec: &ConvSpec) -> Tensor {
        let (cin, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
        let (cout, kh, kw) = (
            spec.out_channels(),
            spec.kernel.dims()[2],
            spec.kernel.dims()[3],
        );
        let p = spec.padding as isize;
        let s = spec.stride;
        let oh = (h + 2 * spec.padding - kh) / s + 1;
        let ow = (w + 2 * spec.padding - kw) / s + 1;
        let mut padded = Tensor::zeros(vec![cin, h + 2 * spec.padding, w + 2 * spec.padding]);
        for c in 0..cin {
            for y in 0..h {
                for x in 0..w {
                    padded.set3(c, (y as isize + p) as usize, (x as isize + p) as usize,
                        input.at3(c, y, x));
                }
            }
        }
        let mut out = Tensor::zeros(vec![cout, oh, ow]);
        for o in 0..cout {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = spec.bias.data()[o];
                    for c in 0..cin {
                        for i in 0..kh {
                            for j in 0..kw {
                                acc += spec.kernel.at4(o, c, i, j)
                                    * padded.at3(c, y * s + i, x * s + j);
                            }
                        }
                    }
                    out.set3(o, y, x, acc);
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_1x1() {
        let input = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let spec = ConvSpec::new(
            Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(),
            Tensor::new(vec![1], vec![0.0]).unwrap(),
            1,
            0,
        )
        .unwrap();
        let out = conv2d(&input, &spec).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv_box_filter_counts() {
        let input = Tensor::filled(vec![1, 3, 3], 1.0);
        let spec = ConvSpec::new(
            Tensor::filled(vec![1, 1, 3, 3], 1.0),
            Tensor::zeros(vec![1]),
            1,
            1,
        )
        .unwrap();
        let out = conv2d(&input, &spec).unwrap();
        assert_eq!(out.at3(0, 1, 1), 9.0);
        assert_eq!(out.at3(0, 0, 0), 4.0);
        assert_eq!(out.at3(0, 2, 2), 4.0);
    }

    #[test]
    fn conv_matches_reference_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..200 {
            let cin = rng.random_range(1..=3);
            let cout = rng.random_range(1..=4);
            let k = if case % 2 == 0 { 1 } else { 3 };
            let h = rng.random_range(k..=8);
            let w = rng.random_range(k..=8);
            let pad = rng.random_range(0..=1);
            let input = rand_tensor(&mut rng, vec![cin, h, w]);
            let spec = ConvSpec::new(
                rand_tensor(&mut rng, vec![cout, cin, k, k]),
                rand_tensor(&mut rng, vec![cout]),
                1,
                pad,
            )
            .unwrap();
            if h + 2 * pad < k || w + 2 * pad < k {
                continue;
            }
            let got = conv2d(&input, &spec).unwrap();
            let want = conv2d_reference(&input, &spec);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-5, "case {case}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_shape_mismatch_names_axis() {
        let input = Tensor::zeros(vec![2, 4, 4]);
        let spec = ConvSpec::new(
            Tensor::zeros(vec![1, 3, 3, 3]),
            Tensor::zeros(vec![1]),
            1,
            1,
        )
        .unwrap();
        let err = conv2d(&input, &spec).unwrap_err();
        assert!(err.to_string().contains("in-channels"));
    }

    #[test]
    fn activation_values() {
        let t = Tensor::new(vec![3], vec![0.0, -3.2, 3.2]).unwrap();
        let sig = activate(&t, Activation::Sigmoid);
        assert_eq!(sig.data()[0], 0.5);
        let rel = activate(&t, Activation::Relu);
        assert_eq!(rel.data()[1], 0.0);
        assert_eq!(rel.data()[2], 3.2);
        let s2 = sigmoid(2.0);
        assert!((s2 - 0.880797).abs() <= 1e-6);
    }

    #[test]
    fn sigmoid_strictly_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-10.0..10.0);
            let b = a + rng.random_range(1e-6..1.0);
            assert!(sigmoid(a) < sigmoid(b));
        }
    }

    #[test]
    fn gap_values() {
        let t = Tensor::filled(vec![1, 4, 4], 7.0);
        assert_eq!(global_avg_pool(&t)[0], 7.0);
        let t = Tensor::new(vec![1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(global_avg_pool(&t)[0], 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = rand_tensor(&mut rng, vec![3, 5, 5]);
        let got = global_avg_pool(&t);
        for c in 0..3 {
            let mut sum = 0.0;
            for y in 0..5 {
                for x in 0..5 {
                    sum += t.at3(c, y, x);
                }
            }
            assert!((got[c] - sum / 25.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn resample_identity_and_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = rand_tensor(&mut rng, vec![2, 6, 5]);
        let same = bilinear_resample(&t, 6, 5);
        assert_eq!(same, t);

        let row = Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        let out = bilinear_resample(&row, 1, 3);
        assert_eq!(out.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn resample_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = rand_tensor(&mut rng, vec![1, 4, 4]);
        let out = bilinear_resample(&t, 7, 7);
        for y in 0..7 {
            for x in 0..7 {
                let sy = y as f64 * 3.0 / 6.0;
                let sx = x as f64 * 3.0 / 6.0;
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(3), (x0 + 1).min(3));
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let want = t.at3(0, y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + t.at3(0, y0, x1) * (1.0 - fy) * fx
                    + t.at3(0, y1, x0) * fy * (1.0 - fx)
                    + t.at3(0, y1, x1) * fy * fx;
                assert!((out.at3(0, y, x) - want).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn finite_diff_on_quadratics() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let grad = finite_diff_gradient(
            |t| Ok(t.data().iter().map(|v| v * v).sum()),
            &x,
            1e-4,
        )
        .unwrap();
        assert!((grad.data()[0] - 2.0).abs() <= 1e-9);
        assert!((grad.data()[1] - 4.0).abs() <= 1e-9);

        let grad = finite_diff_gradient(|_| Ok(42.0), &x, 1e-4).unwrap();
        assert_eq!(grad.data(), &[0.0, 0.0]);

        // Degree <= 2 polynomials are exact under central differences.
        let grad = finite_diff_gradient(
            |t| {
                let (a, b) = (t.data()[0], t.data()[1]);
                Ok(3.0 * a * a + 2.0 * a * b - b + 5.0)
            },
            &x,
            1e-3,
        )
        .unwrap();
        assert!((grad.data()[0] - (6.0 + 4.0)).abs() <= 1e-9);
        assert!((grad.data()[1] - (2.0 - 1.0)).abs() <= 1e-9);
    }

    #[test]
    fn finite_diff_rejects_non_finite() {
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        let err = finite_diff_gradient(|t| Ok((t.data()[0] - 1e-4).ln()), &x, 1e-4);
        assert!(err.is_err());
    }

    #[test]
    fn norm_spec_identity_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = rand_tensor(&mut rng, vec![2, 3, 3]);
        let out = NormSpec::identity(2).apply(&t).unwrap();
        for (a, b) in out.data().iter().zip(t.data()) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
        }
    }
}
