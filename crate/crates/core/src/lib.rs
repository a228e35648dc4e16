//! Double machine learning for static and dynamic two-period treatment
//! policies: cross-fitted nuisances, orthogonal scores, policy values and
//! contrasts with inference, propensity trimming, a simulator with exact
//! truths, and batch commands driven by a TOML run file.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimands;
pub mod learners;
pub mod nuisance;
pub mod pipeline;
pub mod scalar;
pub mod scores;
pub mod simulator;
pub mod trimming;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Dataset = data::PanelDataset<f64>;
pub type Dataset32 = data::PanelDataset<f32>;
