//! Gradient flow on linear tensor networks and closed-form or certified
//! predictions of where it ends up.
//!
//! A linear tensor network evaluates `f(x) = M(x) ∘ (v1, …, vL)` for a data
//! tensor `M(x)` that is linear in `x`. Diagonal, convolutional and
//! fully-connected linear networks are all of this form. The crate offers:
//!
//! * [`tensor`]: data tensors, contraction, architectures, forward passes;
//! * [`decomp`]: orthogonal decompositions of `M(x)` (identity and DFT);
//! * [`flow`]: fixed-step simulation of gradient flow and conserved quantities;
//! * [`scalar_ode`]: the scalar functions `h_L`, `H_L` and the `Q` penalty;
//! * [`predictors`]: limit points and directions with residual certificates;
//! * [`solvers`]: the small dense linear algebra underneath.

pub mod dataset;
pub mod decomp;
pub mod error;
pub mod flow;
pub mod predictors;
pub mod scalar_ode;
pub mod solvers;
pub mod tensor;
pub mod tol;

pub use dataset::{Dataset, Task};
pub use error::{Error, Result};
pub use solvers::Matrix;
pub use tensor::{Architecture, DataTensor, TensorNetwork};
