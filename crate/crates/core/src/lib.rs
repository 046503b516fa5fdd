//! Optimal control of linear delay differential equations.
//!
//! The crate simulates the vintage-capital AK model and a goodwill model with
//! distributed lags, rewrites them on the product space `R x L2(-R, 0)`
//! through the structural state, and computes penalized value functions
//! `W_n` whose monotone limit is the value function of the state-constrained
//! problem. Numerical checks of the dynamic-programming structure (DPP, HJB
//! residual, closed-loop rollouts) live in [`hjb`].

pub mod checks;
pub mod config;
pub mod convex;
pub mod dde;
pub mod error;
pub mod hjb;
pub mod model;
pub mod quadrature;
pub mod structural;
pub mod value;

pub use error::{Error, Result};
pub use model::{
    apply_history_functional, ControlGrid, Grid, HistoryFunctional, InitialTriple, ModelKind,
    ModelSpec,
};
