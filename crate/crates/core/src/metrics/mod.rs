//! Segmentation metrics and dataset-level reports.
//!
//! Overlap metrics come from one-vs-rest confusion counts. Distance
//! metrics work on 4-connected surface pixels with the image border
//! counted as outside, using an exact Euclidean distance transform.

mod counts;
mod distance;
mod report;

pub use counts::{acc, class_area_proportions, confusion, dice, iou, ConfusionCounts};
pub use distance::{asd, hd95, quantile_sorted, squared_distance_transform, surface, Hd95Variant};
pub use report::{
    class_metrics, evaluate_dataset, sample_metrics, summarize, AreaProportions, ClassMetrics, EvalOptions,
    MetricTable, MetricsReport, SampleMetrics, Summary, MACRO, METRIC_NAMES,
};
