//! Global sensitivity analysis of rare-event probabilities.
//!
//! The crate is `no_std` (it needs `alloc`). It provides the building blocks
//! of a double-loop study: an outer Latin hypercube design over the
//! hyper-parameters of an input law, an inner subset-simulation estimate of
//! the exceedance probability at each design point, a sparse polynomial
//! chaos surrogate fitted to those noisy estimates, and Sobol' indices read
//! off the surrogate coefficients in closed form.
//!
//! Two models ship with the crate: a linear-Gaussian limit state with a
//! closed-form exceedance probability ([`analytic`]) and a steady Darcy flow
//! with a log-normal Karhunen-Loève permeability field whose quantity of
//! interest is a particle hitting time ([`darcy`]).
#![no_std]
// index loops mirror the formulas; `!(x > 0.0)` also rejects NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analytic;
pub mod darcy;
mod error;
pub mod linalg;
pub mod mc;
pub mod pce;
pub mod sampling;
pub mod sobol;
pub mod special;
pub mod subset;

pub use error::{Error, Result};
pub use sampling::{RandomStream, UniformBox};
