//! Explainable convolutional networks for multivariate time series
//! classification: the XCM and XCM-Seq architectures, the MTEX-CNN
//! baseline, a small training stack with hand-written gradients, and
//! Grad-CAM attribution maps over observed variables and time.

pub mod data;
pub mod error;
pub mod explain;
pub mod gradcheck;
pub mod layers;
pub mod models;
pub mod optim;
pub mod parallel;
pub mod reporting;
pub mod tensor;
pub mod training;
pub mod workflow;

pub use error::{Error, Result};
pub use models::Model;
pub use tensor::Tensor;
