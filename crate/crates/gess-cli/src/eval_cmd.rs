//! Matching evaluation over an HPatches-style dataset: per-pair mutual NN
//! matching against precomputed .kpd features, MMA/AUC aggregation and
//! deterministic report emission.

use crate::config::RunConfig;
use crate::CliError;
use gess::eval::{load_sequences, match_errors, mma, nn_match, EvalReport, PairReport};
use gess::sdak::io as kpd;
use gess::sdak::Keypoint;
use std::path::Path;

fn kpd_path(features: &Path, pair_sequence: &str, image: &Path) -> std::path::PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    features.join(pair_sequence).join(format!("{stem}.kpd"))
}

pub fn run(
    cfg: &RunConfig,
    dataset: &Path,
    features: &Path,
    out_dir: &Path,
    format: &str,
) -> Result<(), CliError> {
    let scan = load_sequences(dataset)
        .map_err(|e| CliError::Input(format!("cannot scan dataset: {e}")))?;
    let mut warnings = scan.warnings;
    let mut pair_results = Vec::new();

    for pair in &scan.pairs {
        let ref_path = kpd_path(features, &pair.sequence, &pair.reference_image);
        let tgt_path = kpd_path(features, &pair.sequence, &pair.target_image);
        let load = |p: &Path| -> Result<_, String> {
            kpd::read(p).map_err(|e| format!("{}: {e}", p.display()))
        };
        let (a, b) = match (load(&ref_path), load(&tgt_path)) {
            (Ok((_, a)), Ok((_, b))) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                warnings.push(format!(
                    "{} pair {}: features unavailable ({e}), pair skipped",
                    pair.sequence, pair.pair_index
                ));
                continue;
            }
        };
        let matches = nn_match(&a, &b, cfg.mutual)
            .map_err(|e| CliError::Input(format!("matching failed: {e}")))?;
        let kps = |set: &gess::sdak::DescriptorSet| -> Vec<Keypoint> {
            set.items.iter().map(|(k, _)| *k).collect()
        };
        let errors = match_errors(&matches, &kps(&a), &kps(&b), &pair.homography)
            .map_err(|e| CliError::Input(format!("reprojection failed: {e}")))?;
        let (mean_error, max_error) = if errors.is_empty() {
            (0.0, 0.0)
        } else {
            (
                errors.iter().sum::<f64>() / errors.len() as f64,
                errors.iter().cloned().fold(0.0, f64::max),
            )
        };
        pair_results.push((
            PairReport {
                sequence: pair.sequence.clone(),
                pair_index: pair.pair_index,
                matches: matches.len(),
                mean_error,
                max_error,
                mma: mma(&errors).to_vec(),
            },
            errors,
        ));
    }

    let dataset_name = dataset
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dataset.display().to_string());
    let report = EvalReport::from_pairs(
        dataset_name,
        cfg.hash(),
        env!("CARGO_PKG_VERSION").to_string(),
        warnings,
        pair_results,
    );

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;
    let write = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        std::fs::write(out_dir.join(name), bytes)
            .map_err(|e| CliError::Input(format!("cannot write {name}: {e}")))
    };
    write("report.json", report.to_json())?;
    write("report.csv", report.to_csv())?;
    write("plot.csv", report.plot_csv())?;

    match format {
        "csv" => print!("{}", String::from_utf8_lossy(&report.to_csv())),
        _ => println!(
            "pairs {} mma@3 {:.6} auc@2 {:.6} auc@5 {:.6}",
            report.aggregate.pairs_evaluated,
            report.aggregate.mma_at_3,
            report.aggregate.auc_at_2,
            report.aggregate.auc_at_5
        ),
    }
    Ok(())
}
