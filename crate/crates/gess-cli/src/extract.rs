//! Feature extraction over a directory of per-image cue files
//! (<stem>.<role>.gtf): descriptor fusion, semantic mask, depth
//! reliability, heatmap reweighting, keypoint extraction and descriptor
//! sampling, one .kpd output per image.

use crate::config::RunConfig;
use crate::CliError;
use gess::numerics::{gtf, ConvSpec, Tensor};
use gess::sdak::{self, SdakParams};
use gess::stability::depth_to_reliability;
use gess::utcf::{load_params, utcf_forward, CueBundle, UtcfParams};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

fn role_path(dir: &Path, stem: &str, role: &str) -> PathBuf {
    dir.join(format!("{stem}.{role}.gtf"))
}

fn load_role(dir: &Path, stem: &str, role: &str) -> Result<Tensor, CliError> {
    let path = role_path(dir, stem, role);
    if !path.is_file() {
        return Err(CliError::Input(format!(
            "missing cue file for image {stem:?}: {} (role {role})",
            path.display()
        )));
    }
    gtf::read(&path)
        .map_err(|e| CliError::Input(format!("unreadable cue file {}: {e}", path.display())))
}

/// 3x3 channel-averaging mask convolution used when no learned mask conv
/// is supplied: every weight 1 / (9 * channels), zero bias.
fn default_mask_conv(channels: usize) -> ConvSpec {
    let w = 1.0 / (9.0 * channels as f64);
    ConvSpec::new(
        Tensor::filled(vec![1, channels, 3, 3], w),
        Tensor::zeros(vec![1]),
        1,
        1,
    )
    .expect("odd kernel")
}

pub fn sdak_params(cfg: &RunConfig, semantic_channels: usize) -> SdakParams {
    SdakParams {
        alpha: cfg.sdak_alpha,
        beta: cfg.sdak_beta,
        mask_conv: default_mask_conv(semantic_channels),
        nms_radius: cfg.nms_radius,
        top_k: cfg.top_k,
        score_threshold: cfg.score_threshold,
        border_margin: cfg.border_margin,
    }
}

/// Discover image stems: every file named <stem>.desc.gtf, sorted.
fn discover_stems(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("cannot read cue directory {}: {e}", dir.display())))?;
    let mut stems = BTreeSet::new();
    for entry in entries.filter_map(|e| e.ok()) {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".desc.gtf") {
            stems.insert(stem.to_string());
        }
    }
    Ok(stems.into_iter().collect())
}

pub fn run(cfg: &RunConfig, cue_dir: &Path, out_dir: &Path) -> Result<(), CliError> {
    let stems = discover_stems(cue_dir)?;
    if stems.is_empty() {
        return Err(CliError::Input(format!(
            "no <stem>.desc.gtf cue files in {}",
            cue_dir.display()
        )));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;

    let loaded_params: Option<UtcfParams> = if cfg.params_dir.is_empty() {
        None
    } else {
        Some(
            load_params(&cfg.params_dir)
                .map_err(|e| CliError::Input(format!("cannot load fusion params: {e}")))?,
        )
    };

    for stem in &stems {
        let texture = load_role(cue_dir, stem, "desc")?;
        let normal_raw = load_role(cue_dir, stem, "normal")?;
        let semantic_raw = load_role(cue_dir, stem, "sem")?;
        let attention_map = load_role(cue_dir, stem, "attn")?;
        let heat = load_role(cue_dir, stem, "heat")?;

        // reliability: precomputed "rel" map wins, otherwise derive from depth
        let r_map = if role_path(cue_dir, stem, "rel").is_file() {
            load_role(cue_dir, stem, "rel")?
        } else if role_path(cue_dir, stem, "depth").is_file() {
            depth_to_reliability(&load_role(cue_dir, stem, "depth")?, &cfg.stability)
        } else {
            return Err(CliError::Input(format!(
                "missing cue file for image {stem:?}: neither {} nor {} exists (role depth)",
                role_path(cue_dir, stem, "rel").display(),
                role_path(cue_dir, stem, "depth").display()
            )));
        };

        let mut params = match &loaded_params {
            Some(p) => p.clone(),
            None => UtcfParams::zeroed(texture.dims()[0], semantic_raw.dims()[0], cfg.utcf_reduction),
        };
        params.mu = cfg.utcf_mu;
        let bundle = CueBundle {
            texture,
            normal_raw,
            semantic_raw: semantic_raw.clone(),
            attention_map,
        };
        let d_output = utcf_forward(&bundle, &params)
            .map_err(|e| CliError::Input(format!("fusion failed for {stem:?}: {e}")))?;

        let p = sdak_params(cfg, semantic_raw.dims()[0]);
        let s_mask = sdak::semantic_mask(&semantic_raw, &p)
            .map_err(|e| CliError::Input(format!("semantic mask failed for {stem:?}: {e}")))?;
        let k_final = sdak::reweight(&heat, &s_mask, &r_map, &p)
            .map_err(|e| CliError::Input(format!("reweighting failed for {stem:?}: {e}")))?;
        let kps = sdak::extract_keypoints(&k_final, &p);
        let set = sdak::sample_descriptors(&d_output, &kps)
            .map_err(|e| CliError::Input(format!("descriptor sampling failed for {stem:?}: {e}")))?;

        let (h, w) = (heat.dims()[0], heat.dims()[1]);
        let out_path = out_dir.join(format!("{stem}.kpd"));
        sdak::io::write(&out_path, w, h, &set)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", out_path.display())))?;
        println!("{stem}: {} keypoints -> {}", set.items.len(), out_path.display());
    }
    Ok(())
}
