//! Run artifacts: the loss CSV, the JSON run report, and multi-seed
//! aggregation.

use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub problem: String,
    pub n_qubits: usize,
    pub mode: String,
    pub terms: usize,
    pub method: String,
    pub kind: String,
    pub lr: f64,
    pub steps: usize,
    pub shots: Option<u64>,
    pub shots_final: Option<u64>,
    pub seed: u64,
    pub depth: usize,
    pub max_depth: usize,
    pub grow: bool,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub losses: Vec<f64>,
    pub growth_events: Vec<usize>,
    pub final_probabilities: Vec<f64>,
    pub ground_truth_probabilities: Vec<f64>,
    pub total_variation_distance: f64,
    pub circuit_count_total: u64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct MultiSeedReport {
    pub config: ConfigEcho,
    pub seeds: Vec<u64>,
    pub final_losses: Vec<f64>,
    pub median_final_loss: f64,
    pub total_variation_distances: Vec<f64>,
    pub ground_truth_probabilities: Vec<f64>,
    pub circuit_count_total: u64,
    pub wall_clock_seconds: f64,
}

/// Half the one-norm between two distributions; lies in [0, 1].
pub fn total_variation_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Write a file atomically: to a sibling temp path first, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// `step,loss` rows with 16 significant digits per value.
pub fn losses_csv(losses: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (step, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{step},{loss:.15e}\n"));
    }
    out
}

/// Per-step 25th/50th/75th percentiles across seeds, as CSV. Seeds aborted
/// early contribute only to the steps they executed.
pub fn aggregate_csv(per_seed_losses: &[Vec<f64>]) -> String {
    let mut out = String::from("step,loss_p25,loss_p50,loss_p75\n");
    let longest = per_seed_losses.iter().map(Vec::len).max().unwrap_or(0);
    for step in 0..longest {
        let mut column: Vec<f64> = per_seed_losses
            .iter()
            .filter_map(|losses| losses.get(step).copied())
            .collect();
        column.sort_by(|a, b| a.total_cmp(b));
        let p25 = percentile(&column, 0.25);
        let p50 = percentile(&column, 0.50);
        let p75 = percentile(&column, 0.75);
        out.push_str(&format!("{step},{p25:.15e},{p50:.15e},{p75:.15e}\n"));
    }
    out
}

/// Linear-interpolation percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let position = q * (len - 1) as f64;
            let low = position.floor() as usize;
            let high = position.ceil() as usize;
            let weight = position - low as f64;
            sorted[low] * (1.0 - weight) + sorted[high] * weight
        }
    }
}
