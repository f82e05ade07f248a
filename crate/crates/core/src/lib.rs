//! Differentially private training for GLMs, ReLU regression and small
//! MLPs, plus the synthetic data generators used by the experiment CLI.

pub mod error;
pub mod glm;
pub mod linalg;
pub mod mlp;
pub mod moreau;
pub mod link;
pub mod relu;
pub mod privacy;
pub mod rng;
pub mod synth;
pub mod twolayer;

pub use error::{Error, Result};
pub use glm::{ModelVector, PhaseSchedule};
pub use linalg::Matrix;
pub use link::LinkFunction;
pub use mlp::{DpSgdConfig, DpSgdReport, ForwardTrace, Loss, MlpParams};
pub use moreau::MoreauConfig;
pub use relu::BallConstraint;
pub use privacy::{NoiseChannel, NoiseEvent, NoiseLog, PrivacyBudget};
pub use rng::{JlMatrix, Rng};
pub use synth::{Dataset, GroundTruth, TwoLayerTruth};
pub use twolayer::{FeatureMap, KernelModel};
