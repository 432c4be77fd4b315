//! Unified triple-cue descriptor fusion: per-cue channel calibration,
//! semantic-modulated gating between texture and normal features, and
//! refinement with a residual recalibrated by the attention map. All
//! parameters are supplied as data; nothing here trains.

use crate::numerics::{
    activate, bilinear_resample, conv2d, global_avg_pool, sigmoid, Activation, ConvSpec,
    NormSpec, NumericsError, Result, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Channel width of the extracted semantic features.
pub const SEMANTIC_CHANNELS: usize = 48;
/// Hidden width of the gate network's first 1x1 convolution.
pub const GATE_HIDDEN: usize = 128;

/// The cue maps entering fusion for one image.
#[derive(Debug, Clone)]
pub struct CueBundle {
    /// Initial visual descriptors D_initial [C, H, W].
    pub texture: Tensor,
    /// Raw surface normals [3, H, W].
    pub normal_raw: Tensor,
    /// Raw semantic features [Cs0, H, W].
    pub semantic_raw: Tensor,
    /// Attention map W_map [H, W], values in [0, 1].
    pub attention_map: Tensor,
}

impl CueBundle {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.texture.dims()[1], self.texture.dims()[2]);
        for (t, axis) in [
            (&self.normal_raw, "normal spatial dims"),
            (&self.semantic_raw, "semantic spatial dims"),
        ] {
            if t.dims()[1] != h || t.dims()[2] != w {
                return Err(NumericsError::ShapeMismatch {
                    axis,
                    expected: h * w,
                    actual: t.dims()[1] * t.dims()[2],
                });
            }
        }
        if self.attention_map.dims() != [h, w] {
            return Err(NumericsError::ShapeMismatch {
                axis: "attention map",
                expected: h * w,
                actual: self.attention_map.len(),
            });
        }
        Ok(())
    }
}

/// Two-layer channel perceptron with a reduction ratio: affine -> relu ->
/// affine. The caller applies the sigmoid.
#[derive(Debug, Clone)]
pub struct ChannelMlp {
    pub w1: Tensor, // [hidden, channels]
    pub b1: Tensor, // [hidden]
    pub w2: Tensor, // [channels, hidden]
    pub b2: Tensor, // [channels]
}

impl ChannelMlp {
    pub fn zeroed(channels: usize, reduction: usize) -> Self {
        let hidden = (channels / reduction).max(1);
        ChannelMlp {
            w1: Tensor::zeros(vec![hidden, channels]),
            b1: Tensor::zeros(vec![hidden]),
            w2: Tensor::zeros(vec![channels, hidden]),
            b2: Tensor::zeros(vec![channels]),
        }
    }

    pub fn channels(&self) -> usize {
        self.w1.dims()[1]
    }

    fn forward(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        let (hidden, c) = (self.w1.dims()[0], self.w1.dims()[1]);
        if pooled.len() != c {
            return Err(NumericsError::ShapeMismatch {
                axis: "mlp channels",
                expected: c,
                actual: pooled.len(),
            });
        }
        let mut mid = vec![0.0; hidden];
        for i in 0..hidden {
            let mut acc = self.b1.data()[i];
            for j in 0..c {
                acc += self.w1.data()[i * c + j] * pooled[j];
            }
            mid[i] = acc.max(0.0);
        }
        let mut out = vec![0.0; c];
        for i in 0..c {
            let mut acc = self.b2.data()[i];
            for j in 0..hidden {
                acc += self.w2.data()[i * hidden + j] * mid[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }
}

/// All learned parameters of the fusion module.
#[derive(Debug, Clone)]
pub struct UtcfParams {
    /// 1x1 projection of raw normals to descriptor width, then norm + relu.
    pub normal_projection: ConvSpec,
    pub normal_norm: NormSpec,
    /// Two 3x3 layers extracting 48-channel semantic features (relu after each).
    pub semantic_extractor: [ConvSpec; 2],
    /// Independent channel attentions for texture, normal and semantic cues.
    pub mlp_texture: ChannelMlp,
    pub mlp_normal: ChannelMlp,
    pub mlp_semantic: ChannelMlp,
    /// Gate network: 1x1 (2C + 48 -> 128), relu, 1x1 (128 -> 1).
    pub gate: [ConvSpec; 2],
    /// 1x1 projection of semantic features to descriptor width.
    pub semantic_increment: ConvSpec,
    /// Final 1x1 output projection (relu applied after).
    pub output_projection: ConvSpec,
    /// Intensity of the semantic injection.
    pub mu: f64,
}

fn conv1x1(out_c: usize, in_c: usize, fill: Option<&mut dyn FnMut() -> f64>) -> ConvSpec {
    let kernel = match fill {
        Some(f) => Tensor::from_fn(vec![out_c, in_c, 1, 1], |_| f()),
        None => Tensor::zeros(vec![out_c, in_c, 1, 1]),
    };
    ConvSpec::new(kernel, Tensor::zeros(vec![out_c]), 1, 0).unwrap()
}

fn conv3x3(out_c: usize, in_c: usize, fill: Option<&mut dyn FnMut() -> f64>) -> ConvSpec {
    let kernel = match fill {
        Some(f) => Tensor::from_fn(vec![out_c, in_c, 3, 3], |_| f()),
        None => Tensor::zeros(vec![out_c, in_c, 3, 3]),
    };
    ConvSpec::new(kernel, Tensor::zeros(vec![out_c]), 1, 1).unwrap()
}

impl UtcfParams {
    /// All learned weights and biases zero; the forward pass then reduces
    /// to D_output = W_map * D_initial.
    pub fn zeroed(channels: usize, semantic_in: usize, reduction: usize) -> Self {
        UtcfParams {
            normal_projection: conv1x1(channels, 3, None),
            normal_norm: NormSpec::zeroed(channels),
            semantic_extractor: [
                conv3x3(SEMANTIC_CHANNELS, semantic_in, None),
                conv3x3(SEMANTIC_CHANNELS, SEMANTIC_CHANNELS, None),
            ],
            mlp_texture: ChannelMlp::zeroed(channels, reduction),
            mlp_normal: ChannelMlp::zeroed(channels, reduction),
            mlp_semantic: ChannelMlp::zeroed(SEMANTIC_CHANNELS, reduction),
            gate: [
                conv1x1(GATE_HIDDEN, 2 * channels + SEMANTIC_CHANNELS, None),
                conv1x1(1, GATE_HIDDEN, None),
            ],
            semantic_increment: conv1x1(channels, SEMANTIC_CHANNELS, None),
            output_projection: conv1x1(channels, channels, None),
            mu: 0.1,
        }
    }

    /// Seeded uniform initialization in [-b, b] with b = 1 / sqrt(fan_in).
    pub fn random_init(seed: u64, channels: usize, semantic_in: usize, reduction: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniform = |fan_in: usize, rng: &mut ChaCha8Rng| {
            let b = 1.0 / (fan_in as f64).sqrt();
            rng.random_range(-b..b)
        };
        let conv = |out_c: usize, in_c: usize, k: usize, rng: &mut ChaCha8Rng| {
            let fan_in = in_c * k * k;
            let kernel = Tensor::from_fn(vec![out_c, in_c, k, k], |_| uniform(fan_in, rng));
            let bias = Tensor::from_fn(vec![out_c], |_| uniform(fan_in, rng));
            ConvSpec::new(kernel, bias, 1, k / 2).unwrap()
        };
        let mlp = |channels: usize, rng: &mut ChaCha8Rng| {
            let hidden = (channels / reduction).max(1);
            ChannelMlp {
                w1: Tensor::from_fn(vec![hidden, channels], |_| uniform(channels, rng)),
                b1: Tensor::from_fn(vec![hidden], |_| uniform(channels, rng)),
                w2: Tensor::from_fn(vec![channels, hidden], |_| uniform(hidden, rng)),
                b2: Tensor::from_fn(vec![channels], |_| uniform(hidden, rng)),
            }
        };
        UtcfParams {
            normal_projection: conv(channels, 3, 1, &mut rng),
            normal_norm: NormSpec::identity(channels),
            semantic_extractor: [
                conv(SEMANTIC_CHANNELS, semantic_in, 3, &mut rng),
                conv(SEMANTIC_CHANNELS, SEMANTIC_CHANNELS, 3, &mut rng),
            ],
            mlp_texture: mlp(channels, &mut rng),
            mlp_normal: mlp(channels, &mut rng),
            mlp_semantic: mlp(SEMANTIC_CHANNELS, &mut rng),
            gate: [
                conv(GATE_HIDDEN, 2 * channels + SEMANTIC_CHANNELS, 1, &mut rng),
                conv(1, GATE_HIDDEN, 1, &mut rng),
            ],
            semantic_increment: conv(channels, SEMANTIC_CHANNELS, 1, &mut rng),
            output_projection: conv(channels, channels, 1, &mut rng),
            mu: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.normal_projection.out_channels()
    }
}

/// Cue projection: texture passes through unchanged; normals go through
/// conv1x1 -> norm -> relu; semantics through the two 3x3 layers.
pub fn project_cues(bundle: &CueBundle, p: &UtcfParams) -> Result<(Tensor, Tensor, Tensor)> {
    bundle.validate()?;
    let f_t = bundle.texture.clone();
    let f_n = activate(
        &p.normal_norm.apply(&conv2d(&bundle.normal_raw, &p.normal_projection)?)?,
        Activation::Relu,
    );
    let s1 = activate(
        &conv2d(&bundle.semantic_raw, &p.semantic_extractor[0])?,
        Activation::Relu,
    );
    let f_s = activate(&conv2d(&s1, &p.semantic_extractor[1])?, Activation::Relu);
    Ok((f_t, f_n, f_s))
}

/// Squeeze-excite style calibration: weights sigmoid(MLP(GAP(F))) scale
/// each channel.
pub fn channel_calibrate(f_c: &Tensor, mlp: &ChannelMlp) -> Result<(Tensor, Vec<f64>)> {
    let pooled = global_avg_pool(f_c);
    let raw = mlp.forward(&pooled)?;
    let weights: Vec<f64> = raw.iter().map(|&v| sigmoid(v)).collect();
    let (c, h, w) = (f_c.dims()[0], f_c.dims()[1], f_c.dims()[2]);
    let mut out = Tensor::zeros(vec![c, h, w]);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.set3(ch, y, x, weights[ch] * f_c.at3(ch, y, x));
            }
        }
    }
    Ok((out, weights))
}

/// Spatially adaptive gate g = sigmoid(phi([Ft; Fn; Fs])) in (0,1)^[H,W].
pub fn gating_weight(
    f_t: &Tensor,
    f_n: &Tensor,
    f_s: &Tensor,
    phi: &[ConvSpec; 2],
) -> Result<Tensor> {
    let (h, w) = (f_t.dims()[1], f_t.dims()[2]);
    let total_c = f_t.dims()[0] + f_n.dims()[0] + f_s.dims()[0];
    let mut concat = Tensor::zeros(vec![total_c, h, w]);
    let mut offset = 0;
    for part in [f_t, f_n, f_s] {
        for c in 0..part.dims()[0] {
            for y in 0..h {
                for x in 0..w {
                    concat.set3(offset + c, y, x, part.at3(c, y, x));
                }
            }
        }
        offset += part.dims()[0];
    }
    let mid = activate(&conv2d(&concat, &phi[0])?, Activation::Relu);
    let logit = conv2d(&mid, &phi[1])?;
    let mut g = Tensor::zeros(vec![h, w]);
    for y in 0..h {
        for x in 0..w {
            g.set2(y, x, sigmoid(logit.at3(0, y, x)));
        }
    }
    Ok(g)
}

/// Convex per-pixel blend F_fused = (1 - g) * Ft + g * Fn.
pub fn gated_fuse(f_t: &Tensor, f_n: &Tensor, g: &Tensor) -> Result<Tensor> {
    f_t.same_dims(f_n, "fusion inputs")?;
    let (c, h, w) = (f_t.dims()[0], f_t.dims()[1], f_t.dims()[2]);
    if g.dims() != [h, w] {
        return Err(NumericsError::ShapeMismatch {
            axis: "gate map",
            expected: h * w,
            actual: g.len(),
        });
    }
    let mut out = Tensor::zeros(vec![c, h, w]);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let gv = g.at2(y, x);
                out.set3(ch, y, x, (1.0 - gv) * f_t.at3(ch, y, x) + gv * f_n.at3(ch, y, x));
            }
        }
    }
    Ok(out)
}

/// Semantic injection, output projection and attention-recalibrated
/// residual: D_output = W_map * (relu(proj(F_fused + mu * D_s)) + D_initial).
pub fn refine_and_output(
    f_fused: &Tensor,
    f_s: &Tensor,
    d_initial: &Tensor,
    w_map: &Tensor,
    p: &UtcfParams,
) -> Result<Tensor> {
    f_fused.same_dims(d_initial, "refinement inputs")?;
    let d_s = conv2d(f_s, &p.semantic_increment)?;
    let mut pre = f_fused.clone();
    for i in 0..pre.len() {
        pre.data_mut()[i] += p.mu * d_s.data()[i];
    }
    let refined = activate(&conv2d(&pre, &p.output_projection)?, Activation::Relu);
    let (c, h, w) = (refined.dims()[0], refined.dims()[1], refined.dims()[2]);
    let mut out = Tensor::zeros(vec![c, h, w]);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.set3(
                    ch,
                    y,
                    x,
                    w_map.at2(y, x) * (refined.at3(ch, y, x) + d_initial.at3(ch, y, x)),
                );
            }
        }
    }
    Ok(out)
}

/// Full forward pass: project -> calibrate each cue -> gate -> fuse ->
/// refine -> output. Pure function of the inputs.
pub fn utcf_forward(bundle: &CueBundle, p: &UtcfParams) -> Result<Tensor> {
    let (f_t, f_n, f_s) = project_cues(bundle, p)?;
    let (f_t, _) = channel_calibrate(&f_t, &p.mlp_texture)?;
    let (f_n, _) = channel_calibrate(&f_n, &p.mlp_normal)?;
    let (f_s, _) = channel_calibrate(&f_s, &p.mlp_semantic)?;
    let g = gating_weight(&f_t, &f_n, &f_s, &p.gate)?;
    let fused = gated_fuse(&f_t, &f_n, &g)?;
    refine_and_output(&fused, &f_s, &bundle.texture, &bundle.attention_map, p)
}

// Parameter persistence: a directory of GTF files plus a JSON manifest
// mapping each parameter role to its file and shape.

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub shape: Vec<usize>,
    pub role: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParamsManifest {
    pub channels: usize,
    pub semantic_in: usize,
    pub reduction: usize,
    pub mu: f64,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ParamsIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Gtf(#[from] crate::numerics::gtf::GtfError),
    #[error("manifest missing role {0}")]
    MissingRole(String),
    #[error("bad shape for role {role}: expected {expected:?}, got {actual:?}")]
    BadShape {
        role: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
}

fn tensor_roles(p: &UtcfParams) -> Vec<(String, Tensor)> {
    let norm = &p.normal_norm;
    let c = p.channels();
    let norm_t = |v: &Vec<f64>| Tensor::new(vec![c], v.clone()).unwrap();
    let mut roles = vec![
        ("normal_projection.kernel".to_string(), p.normal_projection.kernel.clone()),
        ("normal_projection.bias".to_string(), p.normal_projection.bias.clone()),
        ("normal_norm.mean".to_string(), norm_t(&norm.mean)),
        ("normal_norm.var".to_string(), norm_t(&norm.var)),
        ("normal_norm.gamma".to_string(), norm_t(&norm.gamma)),
        ("normal_norm.beta".to_string(), norm_t(&norm.beta)),
    ];
    for (i, conv) in p.semantic_extractor.iter().enumerate() {
        roles.push((format!("semantic_extractor.{i}.kernel"), conv.kernel.clone()));
        roles.push((format!("semantic_extractor.{i}.bias"), conv.bias.clone()));
    }
    for (name, mlp) in [
        ("mlp_texture", &p.mlp_texture),
        ("mlp_normal", &p.mlp_normal),
        ("mlp_semantic", &p.mlp_semantic),
    ] {
        roles.push((format!("{name}.w1"), mlp.w1.clone()));
        roles.push((format!("{name}.b1"), mlp.b1.clone()));
        roles.push((format!("{name}.w2"), mlp.w2.clone()));
        roles.push((format!("{name}.b2"), mlp.b2.clone()));
    }
    for (i, conv) in p.gate.iter().enumerate() {
        roles.push((format!("gate.{i}.kernel"), conv.kernel.clone()));
        roles.push((format!("gate.{i}.bias"), conv.bias.clone()));
    }
    roles.push(("semantic_increment.kernel".to_string(), p.semantic_increment.kernel.clone()));
    roles.push(("semantic_increment.bias".to_string(), p.semantic_increment.bias.clone()));
    roles.push(("output_projection.kernel".to_string(), p.output_projection.kernel.clone()));
    roles.push(("output_projection.bias".to_string(), p.output_projection.bias.clone()));
    roles
}

pub fn save_params(p: &UtcfParams, dir: impl AsRef<Path>) -> std::result::Result<(), ParamsIoError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let roles = tensor_roles(p);
    let mut entries = Vec::new();
    for (role, tensor) in &roles {
        let file = format!("{}.gtf", role.replace('.', "_"));
        crate::numerics::gtf::write(tensor, dir.join(&file))?;
        entries.push(ManifestEntry {
            file,
            shape: tensor.dims().to_vec(),
            role: role.clone(),
        });
    }
    let manifest = ParamsManifest {
        channels: p.channels(),
        semantic_in: p.semantic_extractor[0].in_channels(),
        reduction: (p.channels() / p.mlp_texture.w1.dims()[0].max(1)).max(1),
        mu: p.mu,
        entries,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_params(dir: impl AsRef<Path>) -> std::result::Result<UtcfParams, ParamsIoError> {
    let dir = dir.as_ref();
    let manifest: ParamsManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let mut fetch = |role: &str| -> std::result::Result<Tensor, ParamsIoError> {
        let entry = manifest
            .entries
            .iter()
            .find(|e| e.role == role)
            .ok_or_else(|| ParamsIoError::MissingRole(role.to_string()))?;
        let t = crate::numerics::gtf::read(dir.join(&entry.file))?;
        if t.dims() != entry.shape.as_slice() {
            return Err(ParamsIoError::BadShape {
                role: role.to_string(),
                expected: entry.shape.clone(),
                actual: t.dims().to_vec(),
            });
        }
        Ok(t)
    };
    let conv = |kernel: Tensor, bias: Tensor, pad: usize| ConvSpec::new(kernel, bias, 1, pad).unwrap();
    let normal_projection = conv(fetch("normal_projection.kernel")?, fetch("normal_projection.bias")?, 0);
    let normal_norm = NormSpec {
        mean: fetch("normal_norm.mean")?.data().to_vec(),
        var: fetch("normal_norm.var")?.data().to_vec(),
        gamma: fetch("normal_norm.gamma")?.data().to_vec(),
        beta: fetch("normal_norm.beta")?.data().to_vec(),
        eps: 1e-5,
    };
    let semantic_extractor = [
        conv(fetch("semantic_extractor.0.kernel")?, fetch("semantic_extractor.0.bias")?, 1),
        conv(fetch("semantic_extractor.1.kernel")?, fetch("semantic_extractor.1.bias")?, 1),
    ];
    let mlp = |name: &str, fetch: &mut dyn FnMut(&str) -> std::result::Result<Tensor, ParamsIoError>|
        -> std::result::Result<ChannelMlp, ParamsIoError> {
        Ok(ChannelMlp {
            w1: fetch(&format!("{name}.w1"))?,
            b1: fetch(&format!("{name}.b1"))?,
            w2: fetch(&format!("{name}.w2"))?,
            b2: fetch(&format!("{name}.b2"))?,
        })
    };
    let mlp_texture = mlp("mlp_texture", &mut fetch)?;
    let mlp_normal = mlp("mlp_normal", &mut fetch)?;
    let mlp_semantic = mlp("mlp_semantic", &mut fetch)?;
    let gate = [
        conv(fetch("gate.0.kernel")?, fetch("gate.0.bias")?, 0),
        conv(fetch("gate.1.kernel")?, fetch("gate.1.bias")?, 0),
    ];
    let semantic_increment = conv(fetch("semantic_increment.kernel")?, fetch("semantic_increment.bias")?, 0);
    let output_projection = conv(fetch("output_projection.kernel")?, fetch("output_projection.bias")?, 0);
    Ok(UtcfParams {
        normal_projection,
        normal_norm,
        semantic_extractor,
        mlp_texture,
        mlp_normal,
        mlp_semantic,
        gate,
        semantic_increment,
        output_projection,
        mu: manifest.mu,
    })
}

/// Resample a reliability or attention map to the given spatial size.
pub fn align_map(map: &Tensor, h: usize, w: usize) -> Tensor {
    if map.dims() == [h, w] {
        return map.clone();
    }
    let as3 = Tensor::new(vec![1, map.dims()[0], map.dims()[1]], map.data().to_vec()).unwrap();
    let out = bilinear_resample(&as3, h, w);
    Tensor::new(vec![h, w], out.data().to_vec()).unwrap()
}
