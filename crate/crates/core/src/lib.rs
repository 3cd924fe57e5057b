//! Graph-regularized MLPs with orthogonality regularization, dimensional
//! collapse diagnostics and the experiment harness around them.

pub mod collapse;
pub mod error;
pub mod eval;
pub mod graphio;
pub mod net;
pub mod reg;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
