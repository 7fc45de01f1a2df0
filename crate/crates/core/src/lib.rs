//! Simulation and analysis of multi-time measurement statistics.
//!
//! A *dilated process* is a system coupled to an environment, evolving through
//! a fixed sequence of channels between probe times. At each probe time the
//! system may be measured in the computational basis or left untouched. This
//! crate computes the joint outcome distribution for every probing pattern,
//! analyses the resulting family of distributions for Markovianity,
//! compatibility of conditional statistics and Kolmogorov consistency, and
//! searches for memoryless (classical or quantum) models reproducing a family.
//!
//! The interesting regime is *hidden memory*: families whose every-time-probed
//! statistics look Markovian while no memoryless model can reproduce the full
//! family. The [`catalog`] module ships two reference circuits in that regime
//! together with their exact outcome tables.

pub mod catalog;
pub mod classical;
pub mod error;
pub mod numerics;
pub mod optim;
pub mod qrf;
pub mod quantum;
pub mod stats;

pub use error::{Error, Result};
