//! Self-contained verification suite: every numeric module is checked
//! against an independently coded oracle on seeded random fixtures. Prints
//! one line per check with its max observed error; any failure exits 1.
//!
//! The hidden fault-injection flag flips one convolution weight after the
//! oracle outputs are captured, serving as the suite's negative control.

use crate::config::RunConfig;
use crate::CliError;
use gess::coupled::{
    coupled_gradient, coupled_loss, decompose, normal_loss, seg_loss, classify_saliency,
    SemanticLabelMap, VectorField, NormalMap,
};
use gess::eval::{auc, nn_match};
use gess::numerics::{conv2d, finite_diff_gradient, ConvSpec, Tensor};
use gess::sdak::{self, DescriptorSet, Keypoint, SdakParams};
use gess::stability::{stability_loss, stability_target, StabilityConstants};
use gess::utcf::{gated_fuse, refine_and_output, utcf_forward, CueBundle, UtcfParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn rand_tensor(rng: &mut ChaCha8Rng, dims: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(lo..hi))
}

fn random_unit_normals(rng: &mut ChaCha8Rng, h: usize, w: usize) -> NormalMap {
    let mut t = Tensor::zeros(vec![3, h, w]);
    for y in 0..h {
        for x in 0..w {
            loop {
                let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
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

/// Quadruple-nested-loop convolution oracle, written independently of the
/// library kernel.
fn conv_oracle(input: &Tensor, spec: &ConvSpec) -> Tensor {
    let (ci, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let kd = spec.kernel.dims();
    let (co, kh, kw) = (kd[0], kd[2], kd[3]);
    let (stride, pad) = (spec.stride as isize, spec.padding as isize);
    let oh = (h + 2 * spec.padding - kh) / spec.stride + 1;
    let ow = (w + 2 * spec.padding - kw) / spec.stride + 1;
    let mut out = Tensor::zeros(vec![co, oh, ow]);
    for o in 0..co {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = spec.bias.data()[o];
                for c in 0..ci {
                    for i in 0..kh {
                        for j in 0..kw {
                            let sy = y as isize * stride + i as isize - pad;
                            let sx = x as isize * stride + j as isize - pad;
                            if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                                acc += spec.kernel.at4(o, c, i, j)
                                    * input.at3(c, sy as usize, sx as usize);
                            }
                        }
                    }
                }
                out.set3(o, y, x, acc);
            }
        }
    }
    out
}

fn check_conv(seed: u64, inject_fault: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err = 0.0f64;
    for case in 0..200 {
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let k = *[1usize, 3, 5].get(rng.random_range(0..3)).unwrap();
        let (h, w) = (rng.random_range(5..9), rng.random_range(5..9));
        let input = rand_tensor(&mut rng, vec![ci, h, w], -1.0, 1.0);
        let mut spec = ConvSpec::new(
            rand_tensor(&mut rng, vec![co, ci, k, k], -1.0, 1.0),
            rand_tensor(&mut rng, vec![co], -1.0, 1.0),
            1,
            k / 2,
        )
        .map_err(|e| format!("conv spec: {e}"))?;
        let want = conv_oracle(&input, &spec);
        if inject_fault && case == 0 {
            // negative control: perturb one weight after the oracle ran
            spec.kernel.data_mut()[0] += 0.5;
        }
        let got = conv2d(&input, &spec).map_err(|e| format!("conv2d: {e}"))?;
        for (a, b) in got.data().iter().zip(want.data()) {
            max_err = max_err.max((a - b).abs());
        }
    }
    if max_err <= 1e-5 {
        Ok(format!("conv2d vs nested-loop oracle (200 cases): max error {max_err:.2e}"))
    } else {
        Err(format!("conv2d deviates from oracle: max error {max_err:.2e} > 1e-5"))
    }
}

/// Best-in-window NMS oracle.
fn nms_oracle(k: &Tensor, radius: usize) -> Tensor {
    let (h, w) = (k.dims()[0], k.dims()[1]);
    let mut out = Tensor::zeros(vec![h, w]);
    for y in 0..h {
        for x in 0..w {
            let mut best = (k.at2(y, x), (y, x));
            for ny in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
                for nx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                    let v = k.at2(ny, nx);
                    if v > best.0 || (v == best.0 && (ny, nx) < best.1) {
                        best = (v, (ny, nx));
                    }
                }
            }
            if best.1 == (y, x) {
                out.set2(y, x, k.at2(y, x));
            }
        }
    }
    out
}

fn check_nms(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let k = Tensor::from_fn(vec![16, 16], |_| {
            (rng.random_range(0.0..1.0f64) * 8.0).round() / 8.0
        });
        if sdak::nms(&k, 2) != nms_oracle(&k, 2) {
            return Err("nms disagrees with best-in-window oracle".into());
        }
    }
    Ok("nms vs best-in-window oracle (50 maps): exact".into())
}

fn rand_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> DescriptorSet {
    let items = (0..n)
        .map(|i| {
            let kp = Keypoint { x: i as f64, y: 0.0, score: 1.0 };
            (kp, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        })
        .collect();
    DescriptorSet { dim, items }
}

fn check_matching(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let a = rand_set(&mut rng, 20, 8);
        let b = rand_set(&mut rng, 20, 8);
        let got = nn_match(&a, &b, true).map_err(|e| format!("nn_match: {e}"))?;

        // brute force: squared distances, lowest-index ties, mutual filter
        let d2 = |p: &[f64], q: &[f64]| -> f64 {
            p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        let nearest = |from: &DescriptorSet, to: &DescriptorSet, i: usize| -> usize {
            let mut best = (f64::INFINITY, 0usize);
            for (j, (_, q)) in to.items.iter().enumerate() {
                let d = d2(&from.items[i].1, q);
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        };
        let mut want = Vec::new();
        for i in 0..a.items.len() {
            let j = nearest(&a, &b, i);
            if nearest(&b, &a, j) == i {
                want.push((i, j));
            }
        }
        let got_pairs: Vec<(usize, usize)> =
            got.iter().map(|m| (m.index_a, m.index_b)).collect();
        if got_pairs != want {
            return Err("mutual NN matching disagrees with brute-force oracle".into());
        }
    }
    Ok("mutual NN vs brute-force oracle (20 sets): exact".into())
}

fn check_auc(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let errors: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..8.0)).collect();
    let t = 5.0;
    let got = auc(&[errors.clone()], t);
    // fine-grid Riemann sum of the empirical CDF
    let steps = 100_000;
    let mut sum = 0.0;
    for i in 0..steps {
        let e = (i as f64 + 0.5) / steps as f64 * t;
        let f = errors.iter().filter(|&&x| x <= e).count() as f64 / errors.len() as f64;
        sum += f / steps as f64;
    }
    let err = (got - sum).abs();
    if err <= 1e-4 {
        Ok(format!("auc vs Riemann oracle: error {err:.2e}"))
    } else {
        Err(format!("auc deviates from Riemann oracle by {err:.2e} > 1e-4"))
    }
}

fn random_field(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
) -> (VectorField, SemanticLabelMap, NormalMap) {
    loop {
        let v = VectorField(rand_tensor(rng, vec![3, h, w], -1.0, 1.0));
        let n_star = random_unit_normals(rng, h, w);
        let labels = SemanticLabelMap::new(
            (0..h * w).map(|_| rng.random_range(0..4u8)).collect(),
            h,
            w,
        )
        .expect("labels in range");
        let (n, s) = decompose(&v);
        let mut ok = true;
        for y in 0..h {
            for x in 0..w {
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
        if ok {
            return (v, labels, n_star);
        }
    }
}

fn check_gradient_orthogonality(cfg: &RunConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let (v, labels, n_star) = random_field(&mut rng, 1, 1);
        let params = gess::coupled::SaliencyClassifierParams {
            weights: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            biases: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        };
        let g = coupled_gradient(&v, &params, &labels, &n_star)
            .map_err(|e| format!("coupled_gradient: {e}"))?;
        let dot: f64 = g.radial.data().iter().zip(g.tangential.data()).map(|(a, b)| a * b).sum();
        let nr = g.radial.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nt = g.tangential.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let bound = 1e-6 * (nr * nt + 1e-12);
        worst = worst.max(dot.abs() / bound.max(1e-300));
        if dot.abs() > bound {
            return Err(format!(
                "radial/tangential dot {dot:.2e} exceeds bound {bound:.2e}"
            ));
        }
        checked += 1;
    }
    Ok(format!("gradient orthogonality (100 pixels): worst dot {:.2e} of bound", worst))
}

fn check_gradient_fd(cfg: &RunConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut max_rel = 0.0f64;
    for _ in 0..5 {
        let (v, labels, n_star) = random_field(&mut rng, 3, 3);
        let params = gess::coupled::SaliencyClassifierParams {
            weights: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            biases: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        };
        let analytic = coupled_gradient(&v, &params, &labels, &n_star)
            .map_err(|e| format!("coupled_gradient: {e}"))?;
        let numeric = finite_diff_gradient(
            |t| {
                coupled_loss(&VectorField(t.clone()), &params, &labels, &n_star)
                    .map(|(total, _, _)| total)
            },
            &v.0,
            1e-4,
        )
        .map_err(|e| format!("finite differences: {e}"))?;
        for (a, b) in analytic.grad.data().iter().zip(numeric.data()) {
            max_rel = max_rel.max((a - b).abs() / b.abs().max(1e-4));
        }
    }
    if max_rel <= 1e-5 {
        Ok(format!("analytic vs finite-difference gradient (5 fields): max rel {max_rel:.2e}"))
    } else {
        Err(format!("gradient mismatch: max rel {max_rel:.2e} > 1e-5"))
    }
}

fn check_stability(cfg: &RunConfig) -> Check {
    let k = StabilityConstants::default();
    let zero = Tensor::zeros(vec![1, 1]);
    let one = stability_target(&zero, &zero, &k).map_err(|e| e.to_string())?;
    if one.at2(0, 0) != 1.0 {
        return Err("zero-gradient stability target is not exactly 1".into());
    }
    let v = stability_target(
        &Tensor::filled(vec![1, 1], 0.1),
        &Tensor::filled(vec![1, 1], 0.1),
        &k,
    )
    .map_err(|e| e.to_string())?;
    let want = 0.2 + 0.8 * (-0.9f64).exp();
    let err = (v.at2(0, 0) - want).abs();
    if err > 1e-9 {
        return Err(format!("stability scalar off by {err:.2e}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    for _ in 0..1000 {
        let d = Tensor::filled(vec![1, 1], rng.random_range(0.0..2.0));
        let l = Tensor::filled(vec![1, 1], rng.random_range(0.0..2.0));
        let s = stability_target(&d, &l, &k).map_err(|e| e.to_string())?.at2(0, 0);
        if !(s > k.epsilon && s <= 1.0) {
            return Err(format!("stability target {s} outside ({}, 1]", k.epsilon));
        }
    }
    Ok(format!("stability target: scalar error {err:.2e}, range holds on 1000 draws"))
}

fn check_seg_loss() -> Check {
    let labels = SemanticLabelMap::new(vec![0, 1, 2, 3], 2, 2).map_err(|e| e.to_string())?;
    let uniform = Tensor::filled(vec![4, 2, 2], 0.25);
    let err = (seg_loss(&uniform, &labels).map_err(|e| e.to_string())? - 4.0f64.ln()).abs();
    if err > 1e-6 {
        return Err(format!("uniform seg loss off ln4 by {err:.2e}"));
    }
    let mut perfect = Tensor::zeros(vec![4, 2, 2]);
    for y in 0..2 {
        for x in 0..2 {
            perfect.set3(labels.at(y, x), y, x, 1.0);
        }
    }
    if seg_loss(&perfect, &labels).map_err(|e| e.to_string())? != 0.0 {
        return Err("perfect seg loss is not exactly 0".into());
    }
    Ok(format!("seg loss: uniform off ln4 by {err:.2e}, perfect exactly 0"))
}

fn check_utcf(cfg: &RunConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(3));
    let (c, h, w) = (6, 4, 4);
    let f_t = rand_tensor(&mut rng, vec![c, h, w], -1.0, 1.0);
    let f_n = rand_tensor(&mut rng, vec![c, h, w], -1.0, 1.0);
    let zeros = Tensor::zeros(vec![h, w]);
    let ones = Tensor::filled(vec![h, w], 1.0);
    if gated_fuse(&f_t, &f_n, &zeros).map_err(|e| e.to_string())? != f_t {
        return Err("g = 0 does not reduce fusion to the texture branch".into());
    }
    if gated_fuse(&f_t, &f_n, &ones).map_err(|e| e.to_string())? != f_n {
        return Err("g = 1 does not reduce fusion to the normal branch".into());
    }

    // zero output projection + unit attention map: residual passes D_initial
    let p = UtcfParams::zeroed(c, 5, cfg.utcf_reduction);
    let f_s = rand_tensor(&mut rng, vec![48, h, w], -1.0, 1.0);
    let d_initial = rand_tensor(&mut rng, vec![c, h, w], -1.0, 1.0);
    let out = refine_and_output(&f_t, &f_s, &d_initial, &ones, &p).map_err(|e| e.to_string())?;
    if out != d_initial {
        return Err("zero projection with unit attention does not return D_initial".into());
    }

    // all-zero parameters: forward reduces to W_map * D_initial
    let bundle = CueBundle {
        texture: d_initial.clone(),
        normal_raw: rand_tensor(&mut rng, vec![3, h, w], -1.0, 1.0),
        semantic_raw: rand_tensor(&mut rng, vec![5, h, w], -1.0, 1.0),
        attention_map: Tensor::from_fn(vec![h, w], |_| rng.random_range(0.0..1.0)),
    };
    let fwd = utcf_forward(&bundle, &p).map_err(|e| e.to_string())?;
    let mut max_err = 0.0f64;
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let want = bundle.attention_map.at2(y, x) * d_initial.at3(ch, y, x);
                max_err = max_err.max((fwd.at3(ch, y, x) - want).abs());
            }
        }
    }
    if max_err > 1e-12 {
        return Err(format!("zero-parameter forward off closed form by {max_err:.2e}"));
    }
    Ok(format!("fusion limits exact; zero-parameter closed form max error {max_err:.2e}"))
}

fn check_sdak(cfg: &RunConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(4));
    let k = Tensor::from_fn(vec![16, 16], |_| rng.random_range(0.0..1.0));
    let s = Tensor::filled(vec![16, 16], 0.6);
    let r = Tensor::filled(vec![16, 16], 0.3);
    let mask_conv = ConvSpec::new(
        Tensor::zeros(vec![1, 4, 3, 3]),
        Tensor::zeros(vec![1]),
        1,
        1,
    )
    .map_err(|e| e.to_string())?;
    let mut p = SdakParams::with_mask_conv(mask_conv);
    p.nms_radius = 2;
    p.border_margin = 2;
    p.top_k = 50;

    p.alpha = 0.0;
    p.beta = 0.0;
    let identity = sdak::reweight(&k, &s, &r, &p).map_err(|e| e.to_string())?;
    if identity != k {
        return Err("alpha = beta = 0 reweighting is not the identity".into());
    }
    let base = sdak::extract_keypoints(&identity, &p);
    p.alpha = 1.0;
    p.beta = 1.0;
    let boosted =
        sdak::extract_keypoints(&sdak::reweight(&k, &s, &r, &p).map_err(|e| e.to_string())?, &p);
    let coords =
        |kps: &[Keypoint]| kps.iter().map(|k| (k.y as usize, k.x as usize)).collect::<Vec<_>>();
    if coords(&base) != coords(&boosted) {
        return Err("constant masks changed the selected keypoint set".into());
    }
    Ok("reweighting identity exact; constant-mask argmax preserved".into())
}

/// Composed auxiliary loss equals the sum of its separately computed
/// terms bit-exactly.
fn check_l_aux(cfg: &RunConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(5));
    let (v, labels, n_star) = random_field(&mut rng, 4, 4);
    let params = cfg.classifier;
    let (total, seg, normal) =
        coupled_loss(&v, &params, &labels, &n_star).map_err(|e| e.to_string())?;
    let (n, s) = decompose(&v);
    let seg2 = seg_loss(&classify_saliency(&s, &params), &labels).map_err(|e| e.to_string())?;
    let normal2 = normal_loss(&n, &n_star).map_err(|e| e.to_string())?;
    let pred = rand_tensor(&mut rng, vec![4, 4], 0.2, 1.0);
    let target = rand_tensor(&mut rng, vec![4, 4], 0.2, 1.0);
    let sta = stability_loss(&pred, &target).map_err(|e| e.to_string())?;
    let composed = total + sta;
    if composed != seg2 + normal2 + sta || seg != seg2 || normal != normal2 {
        return Err("auxiliary loss composition is not bit-exact".into());
    }
    Ok("auxiliary loss additivity bit-exact".into())
}

pub fn run(cfg: &RunConfig, inject_fault: bool) -> Result<(), CliError> {
    let checks: Vec<(&str, Check)> = vec![
        ("conv", check_conv(cfg.seed.wrapping_add(10), inject_fault)),
        ("nms", check_nms(cfg.seed.wrapping_add(11))),
        ("matching", check_matching(cfg.seed.wrapping_add(12))),
        ("auc", check_auc(cfg.seed.wrapping_add(13))),
        ("gradient-orthogonality", check_gradient_orthogonality(cfg)),
        ("gradient-finite-difference", check_gradient_fd(cfg)),
        ("stability", check_stability(cfg)),
        ("seg-loss", check_seg_loss()),
        ("fusion", check_utcf(cfg)),
        ("keypoints", check_sdak(cfg)),
        ("aux-loss", check_l_aux(cfg)),
    ];
    let mut failures = Vec::new();
    for (name, result) in checks {
        match result {
            Ok(msg) => println!("ok   {name}: {msg}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failures.push(name.to_string());
            }
        }
    }
    if failures.is_empty() {
        println!("all checks passed");
        Ok(())
    } else {
        Err(CliError::Failure(format!(
            "{} check(s) failed: {}",
            failures.len(),
            failures.join(", ")
        )))
    }
}
