//! Convex-concave spline (CCS) approximations of feedforward networks.
//!
//! A network output `f` is split into a convex part `f + c|x|^2` and a
//! concave part `f - c|x|^2`, where `c` bounds the most negative Hessian
//! eigenvalue. Tangent planes sampled at anchor points turn each part into a
//! max-affine (resp. min-affine) spline, and their average recovers `f`:
//!
//! ```text
//! ccs(x) = 0.5 * ( max_i convex_i(x) + min_i concave_i(x) )
//! ```
//!
//! The crate is organised around the pipeline:
//!
//! * [`nn`]: dense/conv networks, input gradients, exact Hessian-vector
//!   products and SGD training.
//! * [`spectral`]: extreme eigenvalues of symmetric operators.
//! * [`transform`]: curvature estimation, plane sampling, CCS evaluation and
//!   the one-dimensional construction.
//! * [`cluster`]: k-means compression of plane sets and accuracy sweeps.
//! * [`features`]: feature maps from plane gradients and PGM export.
//! * [`data`]: MNIST IDX loading, subsetting and the dataset cache format.
//! * [`cli`]: the subcommand front end used by the `ccs` binary.

pub mod cli;
pub mod cluster;
pub mod data;
mod error;
pub mod features;
pub mod nn;
pub mod rng;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
