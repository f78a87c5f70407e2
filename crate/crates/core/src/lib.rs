//! Data-driven symbolic models for polynomial control systems.
//!
//! The crate turns two recorded input-state trajectories of an unknown
//! input-affine polynomial system `x⁺ = A·M(x) + B·u` into
//!
//! * a quadratic alternating simulation function `S(x, x̂) = (x − x̂)ᵀP(x − x̂)`
//!   certified by a semidefinite feasibility program ([`certify`]),
//! * a hybrid interface map that refines abstract inputs to the concrete
//!   system ([`runtime`]),
//! * a grid-based symbolic model queried once per abstract state-input pair
//!   ([`abstraction`]),
//! * safety and reach-while-avoid controllers synthesized on that model
//!   ([`synthesis`]),
//!
//! together with the closeness bound `ε` between concrete and abstract
//! trajectories. [`pipeline`] wires the stages together over persisted
//! artifacts.

// Guards written as `!(x > 0.0)` deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstraction;
pub mod certify;
pub mod data;
mod error;
pub mod linalg;
pub mod pipeline;
pub mod plant;
pub mod poly;
pub mod region;
pub mod runtime;
pub mod sdp;
pub mod synthesis;

pub use error::{Error, Result};
