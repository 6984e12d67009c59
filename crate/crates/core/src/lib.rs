//! Rate control for video-based point cloud compression: R-D and R-Q
//! models, geometry/color bit allocation, two-pass frame-level control, a
//! deterministic codec simulator and the metrics used to evaluate them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod codec_sim;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod rdlog;
pub mod stream;
pub mod twopass;

pub use allocator::{
    allocate, search_lambda, AllocationParams, AllocationProblem, AllocationResult, LambdaSearchConfig,
};
pub use codec_sim::{fixed_qp_reference_run, Encoder, FrameRequest, SequenceProfile};
pub use config::ExperimentConfig;
pub use error::{Error, Result, Stage};
pub use experiment::{run_experiment, write_reports, ReportBundle};
pub use metrics::{bd_rate, bitrate_error, total_distortion, RateCurve};
pub use models::{ColorRdModel, GeometryRdModel, QualityDependencyModel, RdSample, RqModel};
pub use rdlog::{parse_rate_curve, parse_rd_log, RdLog, RdLogRow};
pub use stream::{FrameType, Substream, VideoStream};
pub use twopass::{iframe_share, pre_encode, run_second_pass, IframeShareTable};
