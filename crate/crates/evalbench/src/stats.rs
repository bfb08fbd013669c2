use serde::{Deserialize, Serialize};

/// Mean and sample standard deviation, summed in sorted order so the result
/// does not depend on the order samples arrived in.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    if sorted.len() < 2 {
        return (mean, 0.0);
    }
    let mut sq: Vec<f64> = sorted.iter().map(|x| (x - mean) * (x - mean)).collect();
    sq.sort_by(f64::total_cmp);
    (mean, (sq.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Summary of one timed stage, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: String,
    pub count: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
}

impl StageStats {
    pub fn from_samples(stage: &str, samples_ms: &[f64]) -> Self {
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean_ms, std_ms) = mean_std(&sorted);
        Self {
            stage: stage.to_string(),
            count: sorted.len(),
            mean_ms,
            std_ms,
            p50_ms: percentile(&sorted, 50.0),
            p99_ms: percentile(&sorted, 99.0),
        }
    }

    pub fn table_header() -> String {
        format!(
            "{:<14} {:>7} {:>10} {:>10} {:>10} {:>10}",
            "Stage", "n", "mean ms", "std ms", "p50 ms", "p99 ms"
        )
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<14} {:>7} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
            self.stage, self.count, self.mean_ms, self.std_ms, self.p50_ms, self.p99_ms
        )
    }
}
