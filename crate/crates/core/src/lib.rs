//! Complete verification of adversarial-robustness properties for
//! feedforward ReLU classifiers.

pub mod error;
pub mod lincore;
pub mod network;
pub mod parallel;
pub mod properties;
pub mod report;
pub mod reluverify;

pub use error::{Error, Result};
