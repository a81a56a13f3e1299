//! Domain-invariant reward learning at desk scale.
//!
//! A shared embedder feeds a linear reward head trained with a Bradley-Terry
//! preference loss on a labeled source domain, and an MLP critic trained
//! adversarially to estimate the Wasserstein-1 distance between source and
//! target embeddings. Exact optimal-transport oracles and a generalization
//! bound checker validate the learned quantities.

pub mod autodiff;
pub mod data;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod oracle;
pub mod trainer;

pub use autodiff::{Activation, Graph, NodeId, Tensor};
pub use data::{DomainDataset, DomainRole, PreferenceTriple, TruthRecord};
pub use datagen::GroundTruthScorer;
pub use error::{DialError, Result};
pub use eval::BoundReport;
pub use losses::LossBundle;
pub use model::{Example, ModelConfig, ModelParams};
pub use oracle::EmpiricalDistribution;
pub use trainer::{Checkpoint, Method, OptimizerState, StepRecord, TrainConfig, Trainer};
