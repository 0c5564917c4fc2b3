//! Hybrid music recommendation with a deep content-user embedding model.
//!
//! A user tower (embedding table plus fully-connected layers) and an audio
//! tower (1-D temporal CNN over log-mel windows) are trained jointly so
//! that the cosine of their outputs ranks listened songs above sampled
//! non-listened ones by a margin. Baselines (popularity, weighted matrix
//! factorization, and audio regression onto WMF item factors), AUC
//! evaluation for recommendation and tag transfer, and a planted-factor
//! synthetic data generator live alongside it.

pub mod audio_frontend;
pub mod checkpoint;
pub mod content_regression;
pub mod cue_model;
pub mod error;
pub mod eval;
pub mod interactions;
pub mod ndiff;
pub mod pipeline;
pub mod rng;
pub mod synthgen;
pub mod wmf;

pub use error::{Error, ErrorClass, Result};
pub use ndiff::{DenseArray, GradTape, OptimizerState, Parameterized, SgdConfig};
pub use audio_frontend::{DspConfig, MelSpec, Normalizer};
pub use checkpoint::Checkpoint;
pub use content_regression::RegressionModel;
pub use cue_model::{CueConfig, EpochLog, TowerParams};
pub use eval::{EvalReport, Scorer, TagMlpConfig};
pub use interactions::{BinaryInteractions, InteractionSet, ItemSplit, SplitRatios};
pub use pipeline::{Protocol, RunConfig, SystemKind, TrainedSystem};
pub use synthgen::{GroundTruth, SynthConfig};
pub use wmf::{Factors, WmfConfig};
