pub mod error;
pub mod mcmc;
pub mod pipeline;
pub mod posterior;
pub mod predictive;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod source_models;
pub mod stats;

pub use error::{RecastError, Result};
pub use rng::Rng;
pub use mcmc::{Chain, MhConfig};
pub use pipeline::{calibrate, predict_point, Calibration, PointPrediction, PosteriorSample, PredictiveConfig, RecastConfig};
pub use posterior::{BinaryParams, ContinuousParams, PriorHyper, ScoredTarget};
pub use predictive::PredictionSet;
pub use quadrature::QuadratureConfig;
pub use source_models::{Dataset, MlpConfig, ModelKind, ResponseKind, SourceModel};
