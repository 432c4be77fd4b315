//! Run configuration: one INI-style text file of `key = value` lines under
//! bracketed section headers. Every key has a default; unknown sections or
//! keys are hard errors so typos never silently fall back to defaults.

use gess::coupled::{SaliencyClassifierParams, SemanticWeightTable};
use gess::stability::StabilityConstants;
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Directory holding a fusion parameter manifest; empty = zeroed params.
    pub params_dir: String,
    pub utcf_channels: usize,
    pub utcf_reduction: usize,
    pub utcf_mu: f64,
    pub sdak_alpha: f64,
    pub sdak_beta: f64,
    pub nms_radius: usize,
    pub top_k: usize,
    pub score_threshold: f64,
    pub border_margin: usize,
    pub stability: StabilityConstants,
    pub class_weights: SemanticWeightTable,
    pub classifier: SaliencyClassifierParams,
    pub mutual: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params_dir: String::new(),
            utcf_channels: 32,
            utcf_reduction: 4,
            utcf_mu: 0.1,
            sdak_alpha: 1.0,
            sdak_beta: 1.0,
            nms_radius: 4,
            top_k: 10_000,
            score_threshold: 0.0,
            border_margin: 4,
            stability: StabilityConstants::default(),
            class_weights: SemanticWeightTable::default(),
            classifier: SaliencyClassifierParams::zeroed(),
            mutual: true,
            seed: 7,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, String> {
    v.parse().map_err(|_| format!("{key}: not a number: {v:?}"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("{key}: not an integer: {v:?}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {v:?}")),
    }
}

fn parse_four(key: &str, v: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("{key}: expected 4 comma-separated values"));
    }
    let mut out = [0.0; 4];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = parse_f64(key, p)?;
    }
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                match section.as_str() {
                    "paths" | "utcf" | "sdak" | "stability" | "coupled" | "eval" => {}
                    other => return Err(format!("line {}: unknown section [{other}]", lineno + 1)),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected key = value", lineno + 1));
            };
            let (key, value) = (key.trim(), value.trim());
            let full = format!("{section}.{key}");
            match full.as_str() {
                "paths.params_dir" => cfg.params_dir = value.to_string(),
                "utcf.channels" => cfg.utcf_channels = parse_usize(&full, value)?,
                "utcf.reduction" => cfg.utcf_reduction = parse_usize(&full, value)?,
                "utcf.mu" => cfg.utcf_mu = parse_f64(&full, value)?,
                "sdak.alpha" => cfg.sdak_alpha = parse_f64(&full, value)?,
                "sdak.beta" => cfg.sdak_beta = parse_f64(&full, value)?,
                "sdak.nms_radius" => cfg.nms_radius = parse_usize(&full, value)?,
                "sdak.top_k" => cfg.top_k = parse_usize(&full, value)?,
                "sdak.score_threshold" => cfg.score_threshold = parse_f64(&full, value)?,
                "sdak.border_margin" => cfg.border_margin = parse_usize(&full, value)?,
                "stability.alpha_delta" => cfg.stability.alpha_delta = parse_f64(&full, value)?,
                "stability.alpha_l" => cfg.stability.alpha_l = parse_f64(&full, value)?,
                "stability.gamma" => cfg.stability.gamma = parse_f64(&full, value)?,
                "stability.epsilon" => cfg.stability.epsilon = parse_f64(&full, value)?,
                "coupled.class_weights" => cfg.class_weights = SemanticWeightTable(parse_four(&full, value)?),
                "coupled.classifier_weights" => cfg.classifier.weights = parse_four(&full, value)?,
                "coupled.classifier_biases" => cfg.classifier.biases = parse_four(&full, value)?,
                "eval.mutual" => cfg.mutual = parse_bool(&full, value)?,
                "eval.seed" => cfg.seed = parse_usize(&full, value)? as u64,
                _ => return Err(format!("line {}: unknown key {full:?}", lineno + 1)),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &str) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {path}: {e}"))?;
        RunConfig::parse(&text)
    }

    fn validate(&self) -> Result<(), String> {
        if self.utcf_channels == 0 || self.utcf_reduction == 0 {
            return Err("utcf.channels and utcf.reduction must be positive".into());
        }
        let k = &self.stability;
        if !(0.0..1.0).contains(&k.epsilon) {
            return Err("stability.epsilon must lie in [0, 1)".into());
        }
        if k.gamma < 0.0 || k.alpha_delta < 0.0 || k.alpha_l < 0.0 {
            return Err("stability decay constants must be nonnegative".into());
        }
        Ok(())
    }

    /// Full dump with every effective value materialized; parsing the dump
    /// reproduces the config.
    pub fn dump(&self) -> String {
        let four = |v: &[f64; 4]| {
            v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
        };
        let mut s = String::new();
        let _ = writeln!(s, "[paths]");
        let _ = writeln!(s, "params_dir = {}", self.params_dir);
        let _ = writeln!(s, "[utcf]");
        let _ = writeln!(s, "channels = {}", self.utcf_channels);
        let _ = writeln!(s, "reduction = {}", self.utcf_reduction);
        let _ = writeln!(s, "mu = {}", self.utcf_mu);
        let _ = writeln!(s, "[sdak]");
        let _ = writeln!(s, "alpha = {}", self.sdak_alpha);
        let _ = writeln!(s, "beta = {}", self.sdak_beta);
        let _ = writeln!(s, "nms_radius = {}", self.nms_radius);
        let _ = writeln!(s, "top_k = {}", self.top_k);
        let _ = writeln!(s, "score_threshold = {}", self.score_threshold);
        let _ = writeln!(s, "border_margin = {}", self.border_margin);
        let _ = writeln!(s, "[stability]");
        let _ = writeln!(s, "alpha_delta = {}", self.stability.alpha_delta);
        let _ = writeln!(s, "alpha_l = {}", self.stability.alpha_l);
        let _ = writeln!(s, "gamma = {}", self.stability.gamma);
        let _ = writeln!(s, "epsilon = {}", self.stability.epsilon);
        let _ = writeln!(s, "[coupled]");
        let _ = writeln!(s, "class_weights = {}", four(&self.class_weights.0));
        let _ = writeln!(s, "classifier_weights = {}", four(&self.classifier.weights));
        let _ = writeln!(s, "classifier_biases = {}", four(&self.classifier.biases));
        let _ = writeln!(s, "[eval]");
        let _ = writeln!(s, "mutual = {}", self.mutual);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// FNV-1a over the canonical dump; identifies the effective config in
    /// reports.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.dump().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}
