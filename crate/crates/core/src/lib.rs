//! Shallow ReLU networks on a box: exact and smoothed realizations, risks
//! and generalized gradients, the Lyapunov function `V`, and GD/SGD drivers
//! with step-size validation.

pub mod activation;
pub mod error;
pub mod input;
pub mod lyapunov;
pub mod net;
pub mod optimizer;
pub mod registry;
pub mod risk;

pub use activation::{SmoothFamily, SmoothIndex};
pub use error::{LabError, Result};
pub use input::{EmpiricalBatch, InputDistribution};
pub use lyapunov::{LyapunovReport, StepBound};
pub use net::{InputPoint, NetworkShape, ParamVector};
pub use optimizer::{DescentMethod, RunConfig, TrajectoryRecord};
pub use registry::Registry;
pub use risk::{GradientVector, TargetSpec};
