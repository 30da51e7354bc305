//! Nonseparable Gaussian stochastic process (GaSP) models for multiple
//! functional observations on a one-dimensional input.
//!
//! Each of `K` observed functions is modelled as a linear mix `Y(s) = A ṽ(s)`
//! of independent latent processes, each a Matérn GaSP plus a nugget. With the
//! basis `A` taken from the SVD of the fully observed block, the marginal
//! likelihood factorizes into `K` independent one-dimensional GaSP densities,
//! and each of those is evaluated exactly in `O(n)` through the state-space
//! (SDE) form of the Matérn-5/2 kernel: a Kalman filter for the likelihood and
//! a Rauch–Tung–Striebel smoother for prediction.
//!
//! Module map:
//!
//! * [`kernel`]: Matérn correlations, correlation matrices, spectral density.
//! * [`statespace`]: drift, transition and process-noise matrices.
//! * [`filter`]: Kalman filter, RTS smoother, prediction on a merged grid.
//! * [`model`]: SVD basis, projection, factorized likelihood, predictive laws.
//! * [`estimate`]: jointly robust prior, profile posterior, posterior mode.
//! * [`dense`]: `O(n³)` reference implementations used as oracles.
//! * [`baselines`]: nearest neighbour and linear-model comparators, metrics.
//! * [`io`], [`simulate`], [`bench`]: data files, synthetic data, timings.

pub mod baselines;
pub mod bench;
pub mod dense;
pub mod error;
pub mod estimate;
pub mod filter;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod simulate;
pub mod statespace;

pub use error::{GaspError, Result};
pub use grid::SiteGrid;
pub use kernel::{KernelSpec, Roughness};
