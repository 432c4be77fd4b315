//! Machine-readable evaluation reports. Serialization is deterministic:
//! fixed field order, all metric values rounded to 6 decimals before
//! emission, aggregate row last in CSV.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairReport {
    pub sequence: String,
    pub pair_index: usize,
    pub matches: usize,
    pub mean_error: f64,
    pub max_error: f64,
    pub mma: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateReport {
    pub pairs_evaluated: usize,
    pub mean_mma: Vec<f64>,
    pub mma_at_3: f64,
    pub auc_at_2: f64,
    pub auc_at_5: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub dataset: String,
    pub config_hash: String,
    pub tool_version: String,
    pub warnings: Vec<String>,
    pub pairs: Vec<PairReport>,
    pub aggregate: AggregateReport,
}

/// One row of the MMA-vs-threshold plot data, split by the sequence-name
/// prefix ("i_" illumination, "v_" viewpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub threshold: f64,
    pub all: f64,
    pub illumination: f64,
    pub viewpoint: f64,
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

impl EvalReport {
    /// Build from per-pair results; aggregation consumes pairs in the
    /// given (already sorted) order.
    pub fn from_pairs(
        dataset: String,
        config_hash: String,
        tool_version: String,
        warnings: Vec<String>,
        pair_results: Vec<(PairReport, Vec<f64>)>,
    ) -> EvalReport {
        let mut pairs = Vec::with_capacity(pair_results.len());
        let mut errors_per_pair = Vec::with_capacity(pair_results.len());
        for (p, errors) in pair_results {
            pairs.push(p);
            errors_per_pair.push(errors);
        }
        let n = pairs.len();
        let mut mean_mma = vec![0.0; 10];
        for p in &pairs {
            for (i, v) in p.mma.iter().enumerate() {
                mean_mma[i] += v / n.max(1) as f64;
            }
        }
        let aggregate = AggregateReport {
            pairs_evaluated: n,
            mma_at_3: round6(mean_mma[2]),
            mean_mma: mean_mma.into_iter().map(round6).collect(),
            auc_at_2: round6(super::auc(&errors_per_pair, 2.0)),
            auc_at_5: round6(super::auc(&errors_per_pair, 5.0)),
        };
        EvalReport {
            dataset,
            config_hash,
            tool_version,
            warnings,
            pairs: pairs
                .into_iter()
                .map(|mut p| {
                    p.mean_error = round6(p.mean_error);
                    p.max_error = round6(p.max_error);
                    p.mma = p.mma.into_iter().map(round6).collect();
                    p
                })
                .collect(),
            aggregate,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<EvalReport, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// CSV: sequence,pairIndex,matches,mma1..mma10 with the aggregate row last.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::from("sequence,pairIndex,matches,");
        out.push_str(
            &(1..=10).map(|t| format!("mma{t}")).collect::<Vec<_>>().join(","),
        );
        out.push('\n');
        for p in &self.pairs {
            out.push_str(&format!("{},{},{}", p.sequence, p.pair_index, p.matches));
            for v in &p.mma {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "aggregate,,{}",
            self.pairs.iter().map(|p| p.matches).sum::<usize>()
        ));
        for v in &self.aggregate.mean_mma {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
        out.into_bytes()
    }

    /// Mean MMA per threshold for the all / illumination / viewpoint splits.
    pub fn plot_rows(&self) -> Vec<PlotRow> {
        let split_mean = |prefix: Option<&str>, t: usize| -> f64 {
            let selected: Vec<&PairReport> = self
                .pairs
                .iter()
                .filter(|p| prefix.map(|pre| p.sequence.starts_with(pre)).unwrap_or(true))
                .collect();
            if selected.is_empty() {
                return 0.0;
            }
            selected.iter().map(|p| p.mma[t]).sum::<f64>() / selected.len() as f64
        };
        (0..10)
            .map(|t| PlotRow {
                threshold: (t + 1) as f64,
                all: round6(split_mean(None, t)),
                illumination: round6(split_mean(Some("i_"), t)),
                viewpoint: round6(split_mean(Some("v_"), t)),
            })
            .collect()
    }

    pub fn plot_csv(&self) -> Vec<u8> {
        let mut out = String::from("threshold,all,illumination,viewpoint\n");
        for row in self.plot_rows() {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                row.threshold, row.all, row.illumination, row.viewpoint
            ));
        }
        out.into_bytes()
    }
}
