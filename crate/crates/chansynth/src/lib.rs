//! Geometry-grounded synthesis of mmWave MIMO channel matrices.
//!
//! A multipath channel between a uniform linear transmit and receive array is
//! fully described by a handful of per-path parameters: a gain, an angle of
//! arrival and an angle of departure. This crate generates new channel
//! matrices by learning the *distribution of those parameters* from a set of
//! reference channels, so every generated sample is a physically valid
//! superposition of array responses rather than an arbitrary complex tensor.
//!
//! The pieces, bottom up:
//!
//! - [`linalg`] — dense complex/real matrices, cyclic-Jacobi symmetric
//!   eigendecomposition and PSD square roots.
//! - [`ppgc`] — the parametric geometric channel model: steering vectors,
//!   multipath synthesis, the discretized array-response dictionary and
//!   linear synthesis from a gain matrix.
//! - [`datasets`] — scenario specs, seeded dataset generation, normalization,
//!   splits and the `CHM1` binary dataset format.
//! - [`autograd`] — a minimal reverse-mode tape over real tensors with dense
//!   layers, the reparameterization trick and Adam.
//! - [`genmodel`] — the two generative pipelines (direct parameter prediction
//!   and the linearized gain-matrix formulation), training, sampling and path
//!   extraction, plus the `CKP1` checkpoint format.
//! - [`metrics`] — NMSE, Gaussian 2-Wasserstein distance and unbiased RBF
//!   MMD between channel sets.
//! - [`landscape`] — reconstruction-loss surfaces over angle pairs, local
//!   minima census and gradient-decay statistics.
//! - [`compressor`] — a small channel-compression autoencoder and the
//!   real/generated cross-evaluation protocol.
//! - [`cli`] — the `chansynth` command-line surface tying it all together.
//!
//! Every operation that consumes randomness takes an explicit 64-bit seed and
//! derives per-sample streams from it, so datasets, checkpoints and metrics
//! reproduce bit-for-bit across runs.
//!
//! See the crate `examples/` directory for one runnable walk-through per
//! capability.

pub mod autograd;
pub mod cli;
pub mod compressor;
pub mod datasets;
pub mod error;
pub mod genmodel;
pub mod landscape;
pub mod linalg;
pub mod metrics;
pub mod ppgc;
pub mod rng;

pub use error::Error;
pub use linalg::{ComplexMatrix, RealMatrix};
pub use ppgc::{ArrayConfig, Dictionary, DictionaryConfig, GainMatrix, PathParams};
