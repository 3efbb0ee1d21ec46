use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::counts::{acc, class_area_proportions, confusion, dice, iou};
use super::distance::{asd, hd95, quantile_sorted, Hd95Variant};
use crate::datagen::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::raster::{read_mask_png, LabelMask, CLASS_NAMES, NUM_CLASSES};

pub const METRIC_NAMES: [&str; 5] = ["dice", "iou", "hd95", "asd", "acc"];
pub const MACRO: &str = "macro";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub dice: f64,
    pub iou: f64,
    pub hd95: f64,
    pub asd: f64,
    pub acc: f64,
    /// HD95/ASD were replaced by the penalty because exactly one of the two
    /// masks lacks the class.
    #[serde(default)]
    pub penalized: bool,
}

impl ClassMetrics {
    pub fn get(&self, name: &str) -> f64 {
        match name {
            "dice" => self.dice,
            "iou" => self.iou,
            "hd95" => self.hd95,
            "asd" => self.asd,
            "acc" => self.acc,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub hd95_variant: Hd95Variant,
    /// Distance substituted when exactly one mask lacks a class; the image
    /// diagonal when unset.
    pub penalty: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { hd95_variant: Hd95Variant::Percentile, penalty: None }
    }
}

/// All metrics of one class on one prediction/truth pair. A class absent
/// from both masks has zero distances; absent from one, the penalty.
pub fn class_metrics(pred: &LabelMask, truth: &LabelMask, class: u8, opts: &EvalOptions) -> Result<ClassMetrics> {
    let c = confusion(pred, truth, class)?;
    let (h, w) = pred.dims();
    let penalty = opts.penalty.unwrap_or(((h * h + w * w) as f64).sqrt());
    let in_pred = c.tp + c.fp > 0;
    let in_truth = c.tp + c.fn_ > 0;
    let (hd, ad, penalized) = match (in_pred, in_truth) {
        (false, false) => (0.0, 0.0, false),
        (true, true) => (hd95(pred, truth, class, opts.hd95_variant)?, asd(pred, truth, class)?, false),
        _ => (penalty, penalty, true),
    };
    Ok(ClassMetrics { dice: dice(&c), iou: iou(&c), hd95: hd, asd: ad, acc: acc(&c), penalized })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    /// Keyed by class name.
    pub classes: BTreeMap<String, ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: BTreeMap<String, f64>,
    pub area_truth: [f64; NUM_CLASSES],
    pub area_pred: [f64; NUM_CLASSES],
}

pub fn sample_metrics(id: &str, pred: &LabelMask, truth: &LabelMask, opts: &EvalOptions) -> Result<SampleMetrics> {
    let mut classes = BTreeMap::new();
    for (k, name) in CLASS_NAMES.iter().enumerate() {
        classes.insert(name.to_string(), class_metrics(pred, truth, k as u8, opts)?);
    }
    let macro_avg = METRIC_NAMES
        .iter()
        .map(|m| (m.to_string(), classes.values().map(|c| c.get(m)).sum::<f64>() / NUM_CLASSES as f64))
        .collect();
    Ok(SampleMetrics {
        id: id.to_string(),
        classes,
        macro_avg,
        area_truth: class_area_proportions(truth),
        area_pred: class_area_proportions(pred),
    })
}

/// Cross-sample statistics of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

/// Sample SD uses `n − 1` and is 0 below two values.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: f64::NAN, sd: f64::NAN, q25: f64::NAN, q50: f64::NAN, q75: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 { 0.0 } else { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Summary {
        mean,
        sd,
        q25: quantile_sorted(&sorted, 0.25),
        q50: quantile_sorted(&sorted, 0.5),
        q75: quantile_sorted(&sorted, 0.75),
    }
}

/// `group → metric → value`, where a group is a class name or `macro`.
pub type MetricTable = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaProportions {
    pub truth: [f64; NUM_CLASSES],
    pub pred: [f64; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hd95_variant: Hd95Variant,
    pub per_sample: Vec<SampleMetrics>,
    /// Mean over samples of each class's metrics.
    pub per_class: MetricTable,
    /// Mean over samples of the per-sample macro averages.
    #[serde(rename = "macro")]
    pub macro_avg: BTreeMap<String, f64>,
    /// `statistic → group → metric`, statistics being mean, sd, q25, q50, q75.
    pub aggregation: BTreeMap<String, MetricTable>,
    /// Mean class-area fractions of truth and prediction masks.
    pub area_proportions: AreaProportions,
}

impl MetricsReport {
    pub fn from_samples(per_sample: Vec<SampleMetrics>, hd95_variant: Hd95Variant) -> Self {
        let mut groups: Vec<String> = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
        groups.push(MACRO.into());
        let mut aggregation: BTreeMap<String, MetricTable> = BTreeMap::new();
        for g in &groups {
            for m in METRIC_NAMES {
                let vals: Vec<f64> =
                    per_sample.iter().map(|s| if g == MACRO { s.macro_avg[m] } else { s.classes[g].get(m) }).collect();
                let sm = summarize(&vals);
                for (stat, v) in [("mean", sm.mean), ("sd", sm.sd), ("q25", sm.q25), ("q50", sm.q50), ("q75", sm.q75)] {
                    aggregation.entry(stat.into()).or_default().entry(g.clone()).or_default().insert(m.into(), v);
                }
            }
        }
        let means = &aggregation["mean"];
        let per_class = CLASS_NAMES.iter().map(|c| (c.to_string(), means[*c].clone())).collect();
        let macro_avg = means[MACRO].clone();
        let n = per_sample.len().max(1) as f64;
        let mut area = AreaProportions { truth: [0.0; NUM_CLASSES], pred: [0.0; NUM_CLASSES] };
        for s in &per_sample {
            for k in 0..NUM_CLASSES {
                area.truth[k] += s.area_truth[k] / n;
                area.pred[k] += s.area_pred[k] / n;
            }
        }
        MetricsReport { hd95_variant, per_sample, per_class, macro_avg, aggregation, area_proportions: area }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io("metrics::write_json", path, e))
    }

    /// One row per (sample, class).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        const OP: &str = "metrics::write_csv";
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(OP, path, e))?;
        let mut rows = vec![vec![
            "sample".to_string(),
            "class".into(),
            "dice".into(),
            "iou".into(),
            "hd95".into(),
            "asd".into(),
            "acc".into(),
            "area_truth".into(),
            "area_pred".into(),
        ]];
        for s in &self.per_sample {
            for (k, name) in CLASS_NAMES.iter().enumerate() {
                let c = &s.classes[*name];
                rows.push(vec![
                    s.id.clone(),
                    name.to_string(),
                    c.dice.to_string(),
                    c.iou.to_string(),
                    c.hd95.to_string(),
                    c.asd.to_string(),
                    c.acc.to_string(),
                    s.area_truth[k].to_string(),
                    s.area_pred[k].to_string(),
                ]);
            }
        }
        for r in rows {
            w.write_record(&r).map_err(|e| Error::format(OP, path, e))?;
        }
        w.flush().map_err(|e| Error::io(OP, path, e))
    }
}

/// Scores `{pred_dir}/{id}.png` against every test record of the manifest.
pub fn evaluate_dataset(pred_dir: &Path, manifest: &DatasetManifest, opts: &EvalOptions) -> Result<MetricsReport> {
    let mut per_sample = Vec::new();
    for rec in manifest.split(Split::Test) {
        let path = pred_dir.join(format!("{}.png", rec.id));
        if !path.exists() {
            return Err(Error::invalid(
                "metrics::evaluate_dataset",
                format!("missing prediction {} for sample {}", path.display(), rec.id),
            ));
        }
        let pred = read_mask_png(&path)?;
        let truth = manifest.load_mask(rec)?;
        per_sample.push(sample_metrics(&rec.id, &pred, &truth, opts)?);
    }
    if per_sample.is_empty() {
        return Err(Error::invalid("metrics::evaluate_dataset", "manifest has no test records"));
    }
    Ok(MetricsReport::from_samples(per_sample, opts.hd95_variant))
}
