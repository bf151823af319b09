//! Calibrating learned reach-avoid sets with approximate Pick-to-Learn.
//!
//! A prior value function is refined by a Gaussian process on oracle
//! labels; a conformal band turns its sign into an approximate error
//! function, and the P2L loop picks training points until every remaining
//! point has a small approximate error.

pub mod acquisition;
pub mod baselines;
pub mod bounds;
pub mod campaign;
pub mod config;
pub mod conformal;
pub mod env;
pub mod error;
pub mod hypothesis;
pub mod lattice;
pub mod metrics;
pub mod p2l;
pub mod plotdata;
pub mod rng;
pub mod special;

pub use acquisition::{AcquisitionState, Strategy};
pub use campaign::{run_campaign, CampaignReport};
pub use config::ExperimentConfig;
pub use conformal::{CalibrationSet, ConformalBand};
pub use env::{SlicePreset, SystemSpec};
pub use error::{Error, Result};
pub use hypothesis::{GpModel, LabeledSample, PriorHandle, SyntheticPrior};
pub use p2l::{CompressionSet, Engine, RunStatus, RunTrace, UnlabeledDataset};
