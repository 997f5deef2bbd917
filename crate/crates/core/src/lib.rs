//! Frame interpolation with shared-weight encoder branches, displacement
//! convolutions driven by optical flow, and adversarial training.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod flow;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod networks;
pub mod params;
mod linalg;
mod sampling;
pub mod tensor;
pub mod training;

pub use autodiff::{Elementwise, Operand, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
pub use checkpoint::Checkpoint;
pub use data::FrameTriplet;
pub use flow::FlowField;
pub use model::Model;
pub use params::ParamStore;
