pub mod autodiff;
pub mod bench;
pub mod data;
pub mod error;
pub mod feature_nets;
pub mod kernels;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod train;
pub mod units;

pub use error::ModelError;
pub use matrix::Matrix;
