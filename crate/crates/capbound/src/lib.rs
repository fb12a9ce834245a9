//! Capacity measurement and control for convolutional and residual networks.
//!
//! The crate computes spectral norms and group norms of convolution kernels,
//! evaluates covering-number and Rademacher-complexity bounds for constrained
//! network classes, projects weights onto joint Lipschitz / distance constraint
//! sets, and trains tiny networks with projected SGD.
//!
//! Modules:
//! - [`tensors`]: kernel, matrix and data containers plus their norms
//! - [`convop`]: strided convolution, its adjoint and dense materialization
//! - [`lipschitz`]: power iteration and exact FFT spectra
//! - [`project`]: projections onto the constraint sets and composite schemes
//! - [`capacity`]: closed-form covering and Rademacher bounds
//! - [`covercalc`]: covering calculus over architecture trees and brute-force oracles
//! - [`train`]: a small projected-SGD trainer with synthetic tasks
//! - [`io`]: checkpoint container, architecture documents and datasets

pub mod capacity;
pub mod covercalc;
pub mod convop;
pub mod error;
pub mod io;
pub mod lipschitz;
pub mod pipeline;
pub mod project;
pub mod tensors;
pub mod train;

pub use error::{Error, Result};
