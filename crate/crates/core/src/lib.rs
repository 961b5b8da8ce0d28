//! Topological-entropy analysis of switched linear systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`signals`]: switching signals and their time statistics,
//! - [`lie`]: Lie-algebraic structure of the mode matrices and simultaneous
//!   diagonalization / triangularization,
//! - [`flow`]: exact piecewise-exponential propagation,
//! - [`bounds`]: closed-form entropy bounds assembled into a [`bounds::BoundReport`],
//! - [`estimator`]: empirical entropy from (T, eps)-spanning and separated sets.
//!
//! With the default `parallel` feature the estimator computes lattice
//! coverage on the rayon thread pool; without it everything runs on the
//! calling thread. Results are identical either way.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod flow;
pub mod lie;
pub mod linalg;
pub mod signals;

pub use error::{Error, Result};
pub use flow::SwitchedSystem;
pub use lie::{Classification, ModeSet, StructureReport};
pub use signals::{Repeat, SwitchingSignal};
