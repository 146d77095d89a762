//! Benchmark orchestration. A JSON manifest names the ground truth and one
//! condition per (attack, target model) pair; each condition points at
//! pre-computed detections and, optionally, adversarial images and PFEAT
//! features. The runner evaluates conditions in parallel and merges them
//! into a report ordered by (model, attack).
//!
//! ```json
//! {
//!   "dataset": {"path": "gt.json", "format": "coco"},
//!   "benign_image_root": "images/clean",
//!   "iou_threshold": 0.5,
//!   "options": {"honor_difficult": true, "resize_policy": "native_linf", "interpolation": "all_point"},
//!   "lpips_weights": "lin.pfw",
//!   "conditions": [{
//!     "attack": "pgd", "model": "yolo",
//!     "detections": "dets/yolo_pgd.json", "benign_detections": "dets/yolo_clean.json",
//!     "adversarial_root": "images/pgd",
//!     "features": {"clean": "feats/clean", "adversarial": "feats/pgd"}
//!   }]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

mod manifest;
mod render;
mod report;

pub use self::manifest::{load_manifest, Condition, DatasetRef, FeatureRoots, ResizePolicy, RunManifest, RunOptions};
pub use self::render::{emit_plot_data, parse_report_json, render_report, ReportFormat, PLOT_METRICS};
pub(crate) use self::report::image_distances;
pub use self::report::{
    build_report, evaluate_condition, run, AttackRow, BenchReport, BenignRow, ConditionResult, Drops, Failure,
    DISTANCE_METRICS,
};
