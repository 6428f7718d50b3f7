//! Event-based normal flow, lifetime-augmented binary event images (BEIs)
//! with an adaptive rendering rate, superevent clustering, and boundary
//! evaluation against intensity-frame edges.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bei;
pub mod error;
pub mod eval;
pub mod event;
pub mod flow;
pub mod lifetime;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod reservoir;
pub mod superevents;
pub mod synth;

pub use bei::{Bei, RenderScheduler};
pub use error::{Error, Result};
pub use event::{Event, EventStream, Polarity, Sae};
pub use flow::{FlowConfig, FlowEstimator, NormalFlow};
pub use lifetime::{LifetimeConfig, LifetimeStore};
pub use pipeline::{Pipeline, PipelineConfig, Render, RenderConfig};
pub use raster::{BinaryMap, GrayImage};
pub use superevents::{ClusterConfig, LabelMap, Segmentation};
pub use synth::{SyntheticScene, SyntheticSceneConfig};
