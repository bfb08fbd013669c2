//! Offline accuracy evaluation of a provider on a dataset.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use usar_core::geometry::measure_mask;
use usar_core::metrics::MetricReport;
use usar_core::{ClassSelector, KidneyMeasurement, Mask, View};
use usar_providers::{segment, ProviderError, SegmentRequest, SegmentationProvider, SourceFrame};

use crate::dataset::Dataset;
use crate::stats::{mean_std, StageStats};
use crate::EvalError;

/// Provider calls allowed to overlap during an evaluation.
const CONCURRENCY: usize = 8;

/// A sample left out of the aggregates, and why.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub name: String,
    pub reason: String,
}

struct Segmented {
    mask: Result<Mask, ProviderError>,
    elapsed_ms: f64,
}

async fn run_provider(frames: &[SourceFrame], provider: &dyn SegmentationProvider) -> Vec<Segmented> {
    stream::iter(frames.iter().enumerate())
        .map(|(i, f)| async move {
            let request = SegmentRequest {
                frame_id: i as u32,
                image: Arc::new(f.image.clone()),
                ground_truth: f.ground_truth.clone().map(Arc::new),
                pixel_spacing: f.pixel_spacing,
            };
            let start = Instant::now();
            let mask = segment(provider, request).await.map(|r| r.mask);
            Segmented {
                mask,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            }
        })
        .buffered(CONCURRENCY)
        .collect()
        .await
}

/// Result of [`eval_segmentation`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationEval {
    pub provider: String,
    pub report: MetricReport,
    pub provider_timing: StageStats,
    pub failures: Vec<SampleFailure>,
}

impl SegmentationEval {
    pub fn to_table(&self) -> String {
        let mut out = format!("provider: {}\n", self.provider);
        out += &self.report.to_table();
        let _ = writeln!(out, "{}", StageStats::table_header());
        let _ = writeln!(out, "{}", self.provider_timing.table_row());
        let _ = writeln!(out, "failures: {}", self.failures.len());
        for f in &self.failures {
            let _ = writeln!(out, "  {}: {}", f.name, f.reason);
        }
        out
    }
}

/// Segments every frame and scores the masks against the ground truth.
/// Frames the provider fails on are excluded and listed.
pub async fn eval_segmentation(
    dataset: &Dataset,
    provider: &dyn SegmentationProvider,
) -> Result<SegmentationEval, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if let Some(f) = dataset.frames.iter().find(|f| f.ground_truth.is_none()) {
        return Err(dataset.malformed(&f.name, "no ground-truth mask"));
    }
    let results = run_provider(&dataset.frames, provider).await;
    let timing: Vec<f64> = results.iter().map(|r| r.elapsed_ms).collect();
    let (mut preds, mut gts, mut names, mut failures) = (vec![], vec![], vec![], vec![]);
    for (frame, result) in dataset.frames.iter().zip(results) {
        match result.mask {
            Ok(mask) => {
                preds.push(mask);
                gts.push(frame.ground_truth.clone().expect("checked above"));
                names.push(frame.name.clone());
            }
            Err(e) => failures.push(SampleFailure {
                name: frame.name.clone(),
                reason: e.to_string(),
            }),
        }
    }
    if preds.is_empty() {
        return Err(EvalError::NothingEvaluated(failures.len()));
    }
    Ok(SegmentationEval {
        provider: provider.name(),
        report: MetricReport::evaluate(&preds, &gts, &names)?,
        provider_timing: StageStats::from_samples("segment", &timing),
        failures,
    })
}

/// One measure's absolute error against the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub measure: String,
    pub mean_mm: f64,
    pub std_mm: f64,
    /// Samples where both values exist.
    pub n: usize,
}

/// Absolute errors of length, width and thickness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub label: String,
    pub rows: Vec<ErrorRow>,
    pub n_samples: usize,
    /// Samples whose segmentation or measurement failed.
    pub failures: usize,
}

impl ErrorTable {
    fn build(label: &str, pairs: &[(KidneyMeasurement, KidneyMeasurement)], failures: usize) -> Self {
        type Get = fn(&KidneyMeasurement) -> Option<f64>;
        let measures: [(&str, Get); 3] = [
            ("length", |m| m.length_mm),
            ("width", |m| m.width_mm),
            ("thickness", |m| m.thickness_mm),
        ];
        let rows = measures
            .iter()
            .map(|(name, get)| {
                let errors: Vec<f64> = pairs
                    .iter()
                    .filter_map(|(got, want)| Some((get(got)? - get(want)?).abs()))
                    .collect();
                let (mean_mm, std_mm) = mean_std(&errors);
                ErrorRow {
                    measure: name.to_string(),
                    mean_mm,
                    std_mm,
                    n: errors.len(),
                }
            })
            .collect();
        Self {
            label: label.to_string(),
            rows,
            n_samples: pairs.len() + failures,
            failures,
        }
    }

    pub fn row(&self, measure: &str) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.measure == measure)
    }

    /// Every error exactly zero.
    pub fn is_exact(&self) -> bool {
        self.rows.iter().all(|r| r.mean_mm == 0.0 && r.std_mm == 0.0)
    }
}

/// Result of [`eval_measurements`]: the provider's row and the baseline row
/// measured on the ground-truth masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEval {
    pub provider: String,
    pub model: ErrorTable,
    pub ground_truth: ErrorTable,
    pub provider_timing: StageStats,
    pub failures: Vec<SampleFailure>,
}

impl MeasurementEval {
    /// Fixed-width table: one row per measure, one column pair per source.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Absolute error (mm), provider {}", self.provider);
        let _ = writeln!(
            out,
            "{:<12} {:>22} {:>22}",
            "Measure", self.model.label, self.ground_truth.label
        );
        for (m, g) in self.model.rows.iter().zip(&self.ground_truth.rows) {
            let cell = |r: &ErrorRow| format!("{:.2} ± {:.2} (n={})", r.mean_mm, r.std_mm, r.n);
            let _ = writeln!(out, "{:<12} {:>22} {:>22}", m.measure, cell(m), cell(g));
        }
        let _ = writeln!(
            out,
            "samples: {}, failures: model {}, ground truth {}",
            self.model.n_samples, self.model.failures, self.ground_truth.failures
        );
        for f in &self.failures {
            let _ = writeln!(out, "  {}: {}", f.name, f.reason);
        }
        out
    }
}

fn measure(mask: &Mask, view: View) -> Result<KidneyMeasurement, String> {
    measure_mask(mask, ClassSelector::Union, view)
        .map(|(_, m)| m)
        .map_err(|e| e.to_string())
}

/// Measures the provider's masks and the ground-truth masks with the
/// automatic geometry and compares both against the reference dimensions.
///
/// Every frame must carry a view and reference dimensions.
pub async fn eval_measurements(
    dataset: &Dataset,
    provider: &dyn SegmentationProvider,
) -> Result<MeasurementEval, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut refs = Vec::with_capacity(dataset.len());
    for f in &dataset.frames {
        let view = f.view.ok_or_else(|| dataset.malformed(&f.name, "no view"))?;
        let reference = f
            .reference
            .ok_or_else(|| dataset.malformed(&f.name, "no reference dimensions"))?;
        refs.push((view, reference));
    }
    let results = run_provider(&dataset.frames, provider).await;
    let timing: Vec<f64> = results.iter().map(|r| r.elapsed_ms).collect();

    let (mut model, mut baseline) = (Vec::new(), Vec::new());
    let (mut model_failed, mut baseline_failed) = (0, 0);
    let mut failures = Vec::new();
    let mut fail = |name: &str, what: &str, reason: String| {
        failures.push(SampleFailure {
            name: name.to_string(),
            reason: format!("{what}: {reason}"),
        })
    };
    for ((frame, result), (view, reference)) in dataset.frames.iter().zip(results).zip(refs) {
        match result.mask.map_err(|e| e.to_string()).and_then(|m| measure(&m, view)) {
            Ok(m) => model.push((m, reference)),
            Err(e) => {
                model_failed += 1;
                fail(&frame.name, "model", e);
            }
        }
        let gt = frame
            .ground_truth
            .as_ref()
            .ok_or_else(|| "no ground-truth mask".to_string())
            .and_then(|m| measure(m, view));
        match gt {
            Ok(m) => baseline.push((m, reference)),
            Err(e) => {
                baseline_failed += 1;
                fail(&frame.name, "ground truth", e);
            }
        }
    }
    Ok(MeasurementEval {
        provider: provider.name(),
        model: ErrorTable::build("model", &model, model_failed),
        ground_truth: ErrorTable::build("ground truth", &baseline, baseline_failed),
        provider_timing: StageStats::from_samples("segment", &timing),
        failures,
    })
}
