//! Segmentation overlap metrics.
//!
//! `mean_average_precision` treats each image's class mask as a single
//! instance and sweeps IoU thresholds 0.50, 0.55, ..., 0.95. Images where a
//! class is absent from both prediction and ground truth are skipped for that
//! class. Numbers produced here are only comparable with each other.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{Class, Mask};

/// IoU thresholds in percent.
pub const IOU_THRESHOLDS_PCT: [u64; 10] = [50, 55, 60, 65, 70, 75, 80, 85, 90, 95];

pub const MAP_PROTOCOL: &str =
    "one instance per class per image; AP = mean over IoU thresholds 0.50:0.05:0.95 of the fraction of images passing";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("mask shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("prediction and ground-truth lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no images to evaluate")]
    EmptyDataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
}

impl ConfusionCounts {
    pub fn is_empty(&self) -> bool {
        self.true_positive == 0 && self.false_positive == 0 && self.false_negative == 0
    }

    /// `2tp / (2tp + fp + fn)`, or 1 when the class is absent from both.
    pub fn dice(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let tp = self.true_positive as f64;
        2.0 * tp / (2.0 * tp + self.false_positive as f64 + self.false_negative as f64)
    }

    /// `tp / (tp + fp + fn)`, or 1 when the class is absent from both.
    pub fn iou(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let tp = self.true_positive as f64;
        tp / (tp + self.false_positive as f64 + self.false_negative as f64)
    }

    /// Exact `iou >= pct / 100` in integer arithmetic.
    pub fn iou_meets(&self, pct: u64) -> bool {
        let union = self.true_positive + self.false_positive + self.false_negative;
        self.true_positive * 100 >= pct * union
    }
}

fn check_shape(pred: &Mask, gt: &Mask) -> Result<(), MetricsError> {
    if pred.same_shape(gt) {
        Ok(())
    } else {
        Err(MetricsError::ShapeMismatch(
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height(),
        ))
    }
}

pub fn confusion(pred: &Mask, gt: &Mask, class: Class) -> Result<ConfusionCounts, MetricsError> {
    check_shape(pred, gt)?;
    let label = class.label();
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        match (p == label, g == label) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, true) => c.false_negative += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn dice(pred: &Mask, gt: &Mask, class: Class) -> Result<f64, MetricsError> {
    Ok(confusion(pred, gt, class)?.dice())
}

pub fn iou(pred: &Mask, gt: &Mask, class: Class) -> Result<f64, MetricsError> {
    Ok(confusion(pred, gt, class)?.iou())
}

/// Average precision for one class over per-image confusion counts.
///
/// A class absent from every image scores 1.0, matching the empty-vs-empty
/// convention of `dice` and `iou`.
pub fn average_precision(per_image: &[ConfusionCounts]) -> f64 {
    let evaluable: Vec<&ConfusionCounts> = per_image.iter().filter(|c| !c.is_empty()).collect();
    if evaluable.is_empty() {
        return 1.0;
    }
    let n = evaluable.len() as f64;
    let total: f64 = IOU_THRESHOLDS_PCT
        .iter()
        .map(|&pct| evaluable.iter().filter(|c| c.iou_meets(pct)).count() as f64 / n)
        .sum();
    total / IOU_THRESHOLDS_PCT.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: Class,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub per_class: Vec<ClassAp>,
    pub map: f64,
}

pub fn mean_average_precision(preds: &[Mask], gts: &[Mask]) -> Result<MapSummary, MetricsError> {
    let counts = per_image_counts(preds, gts)?;
    Ok(map_from_counts(&counts))
}

fn per_image_counts(
    preds: &[Mask],
    gts: &[Mask],
) -> Result<Vec<[ConfusionCounts; 2]>, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), gts.len()));
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    preds
        .iter()
        .zip(gts)
        .map(|(p, g)| {
            Ok([
                confusion(p, g, Class::Cortex)?,
                confusion(p, g, Class::CentralComplex)?,
            ])
        })
        .collect()
}

fn map_from_counts(counts: &[[ConfusionCounts; 2]]) -> MapSummary {
    let per_class: Vec<ClassAp> = Class::ALL
        .iter()
        .enumerate()
        .map(|(k, &class)| {
            let column: Vec<ConfusionCounts> = counts.iter().map(|c| c[k]).collect();
            ClassAp {
                class,
                ap: average_precision(&column),
            }
        })
        .collect();
    let map = per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64;
    MapSummary { per_class, map }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Class,
    pub dice: f64,
    pub iou: f64,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub dice: [f64; 2],
    pub iou: [f64; 2],
}

/// Per-class and mean DICE, IoU and AP over a paired dataset.
///
/// Per-class DICE and IoU are means of per-image values; the `mean_*` fields
/// are means over classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetrics>,
    pub mean_dice: f64,
    pub mean_iou: f64,
    pub map: f64,
    pub n_images: usize,
    pub per_image: Vec<ImageMetrics>,
    pub map_protocol: String,
}

impl MetricReport {
    /// `names` labels the per-image rows; missing names fall back to indices.
    pub fn evaluate(preds: &[Mask], gts: &[Mask], names: &[String]) -> Result<Self, MetricsError> {
        let counts = per_image_counts(preds, gts)?;
        let n = counts.len() as f64;
        let map = map_from_counts(&counts);

        let per_image: Vec<ImageMetrics> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| ImageMetrics {
                name: names.get(i).cloned().unwrap_or_else(|| i.to_string()),
                dice: [c[0].dice(), c[1].dice()],
                iou: [c[0].iou(), c[1].iou()],
            })
            .collect();

        let per_class: Vec<ClassMetrics> = Class::ALL
            .iter()
            .enumerate()
            .map(|(k, &class)| ClassMetrics {
                class,
                dice: per_image.iter().map(|m| m.dice[k]).sum::<f64>() / n,
                iou: per_image.iter().map(|m| m.iou[k]).sum::<f64>() / n,
                ap: map.per_class[k].ap,
            })
            .collect();
        let classes = per_class.len() as f64;

        Ok(MetricReport {
            mean_dice: per_class.iter().map(|c| c.dice).sum::<f64>() / classes,
            mean_iou: per_class.iter().map(|c| c.iou).sum::<f64>() / classes,
            map: map.map,
            n_images: counts.len(),
            per_class,
            per_image,
            map_protocol: MAP_PROTOCOL.to_string(),
        })
    }

    /// Fixed-width table, one row per class plus the mean, values in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>8}", "Class", "mAP", "DICE", "IoU");
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:<16} {:>8.1} {:>8.1} {:>8.1}",
                c.class.name(),
                100.0 * c.ap,
                100.0 * c.dice,
                100.0 * c.iou
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>8.1} {:>8.1} {:>8.1}",
            "mean",
            100.0 * self.map,
            100.0 * self.mean_dice,
            100.0 * self.mean_iou
        );
        let _ = writeln!(out, "images: {}", self.n_images);
        out
    }
}
