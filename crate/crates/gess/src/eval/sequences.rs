//! HPatches-style dataset ingestion: each sequence folder holds images
//! 1..6 and ASCII homography files H_1_k mapping image 1 to image k.

use super::{EvalError, Homography};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct SequencePair {
    pub sequence: String,
    /// Index k of the target image; the reference is always image 1.
    pub pair_index: usize,
    pub homography: Homography,
    pub reference_image: PathBuf,
    pub target_image: PathBuf,
}

#[derive(Debug, Default)]
pub struct SequenceScan {
    pub pairs: Vec<SequencePair>,
    /// One entry per malformed or skipped folder/pair.
    pub warnings: Vec<String>,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["ppm", "png", "pgm"];

fn find_image(dir: &Path, stem: usize) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Scan the dataset root: sequences sorted lexicographically, pairs
/// (1, k) for k = 2..6 per sequence. Malformed folders are skipped with a
/// warning entry instead of failing the run.
pub fn load_sequences(root: impl AsRef<Path>) -> Result<SequenceScan, EvalError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(EvalError::BadRoot(root.display().to_string()));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut scan = SequenceScan::default();
    for dir in dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let Some(reference) = find_image(&dir, 1) else {
            scan.warnings
                .push(format!("{name}: missing reference image 1, folder skipped"));
            continue;
        };
        let mut folder_pairs = Vec::new();
        let mut malformed = false;
        for k in 2..=6 {
            let h_path = dir.join(format!("H_1_{k}"));
            let target = find_image(&dir, k);
            match (h_path.is_file(), target) {
                (true, Some(target)) => {
                    let text = std::fs::read_to_string(&h_path)?;
                    match Homography::parse_ascii(&text) {
                        Ok(h) => folder_pairs.push(SequencePair {
                            sequence: name.clone(),
                            pair_index: k,
                            homography: h,
                            reference_image: reference.clone(),
                            target_image: target,
                        }),
                        Err(e) => {
                            scan.warnings
                                .push(format!("{name}: H_1_{k} malformed ({e}), folder skipped"));
                            malformed = true;
                            break;
                        }
                    }
                }
                (false, Some(_)) => {
                    scan.warnings
                        .push(format!("{name}: missing H_1_{k}, folder skipped"));
                    malformed = true;
                    break;
                }
                _ => {} // fewer than 6 images is fine
            }
        }
        if !malformed {
            scan.pairs.extend(folder_pairs);
        }
    }
    Ok(scan)
}
