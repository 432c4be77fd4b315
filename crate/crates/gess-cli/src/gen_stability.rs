//! Depth-to-reliability generation: read a depth map, run the smoothing /
//! gradient / exponential-decay pipeline and write the reliability map.

use crate::config::RunConfig;
use crate::CliError;
use gess::numerics::gtf;
use gess::stability::depth_to_reliability;
use std::path::Path;

pub fn run(cfg: &RunConfig, depth_path: &Path, out_path: &Path) -> Result<(), CliError> {
    let depth = gtf::read(depth_path)
        .map_err(|e| CliError::Input(format!("malformed depth file {}: {e}", depth_path.display())))?;
    if depth.dims().len() != 2 {
        return Err(CliError::Input(format!(
            "depth map must be 2-D, got shape {:?}",
            depth.dims()
        )));
    }
    let rel = depth_to_reliability(&depth, &cfg.stability);
    gtf::write(&rel, out_path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", out_path.display())))?;

    let min = rel.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = rel.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = rel.data().iter().sum::<f64>() / rel.len() as f64;
    println!("min {min:.6} mean {mean:.6} max {max:.6}");
    Ok(())
}
