//! Everything downstream of an object detector: box geometry, score
//! filtering and class-wise NMS, COCO-style matching and metrics, loss
//! diagnostics, dataset ingestion and augmentation, a deterministic
//! hyperparameter grid search, and text records for spoken feedback.

pub mod error;
pub mod feedback;
pub mod geometry;
pub mod ingest;
pub mod losses;
pub mod metrics;
pub mod postprocess;
pub mod sweep;

pub use error::{Error, Result};
pub use geometry::{BBox, ImageDims};
pub use ingest::{ClassTable, Dataset};
pub use metrics::{Annotation, ConfusionCounts, MetricsReport};
pub use postprocess::{Detection, PostprocessConfig};
