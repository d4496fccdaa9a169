//! Output-only modal identification, KL-divergence damping model selection
//! and alert-duration analytics for vibration monitoring.
//!
//! The usual flow is [`pipeline::identify`] on a measured record (Welch
//! cross-spectra, SVD, peak picking), then [`pipeline::select`] to sweep the
//! identified damping and keep the candidate whose residual has the least
//! Kullback-Leibler divergence from the prior, then [`alerts`] to compare
//! threshold exceedance durations of model and measurement.

pub mod alerts;
pub mod error;
pub mod infotheory;
pub mod json;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod signals;
pub mod spectral;

pub use error::{Error, ErrorCategory, Result};
pub use model::ModalModel;
pub use pipeline::PipelineConfig;
pub use signals::TimeSeriesSet;
