//! Permutation-invariant vector quantization.
//!
//! The crate is organised around a handful of independent pieces:
//!
//! * [`assignment`]: exact rectangular linear assignment (shortest augmenting
//!   path Hungarian) with a brute-force oracle.
//! * [`quantizer`]: nearest-neighbour and one-to-one matching quantization,
//!   straight-through value semantics and codebook usage accounting.
//! * [`capacity`]: exact combinatorial information-capacity bounds.
//! * [`codebook_train`]: streaming codebook learning with delayed KMeans++
//!   initialization over a rolling window.
//! * [`sampling`]: set interpolation between code sets and smooth swap paths.
//! * [`probing`]: logistic-regression probes on code-presence features.
//! * [`toy`]: a small permutation-invariant autoencoder with hand-written
//!   gradients that ties the pieces together on synthetic data.
//!
//! Data-parallel loops go through [`par`], which falls back to sequential
//! iteration when the `parallel` feature is disabled.

pub mod assignment;
pub mod capacity;
pub mod codebook_train;
pub mod error;
pub mod io;
pub mod par;
pub mod probing;
pub mod quantizer;
pub mod rng;
pub mod sampling;
pub mod toy;
pub mod types;

pub use error::{PivqError, Result};
pub use par::Execution;
pub use rng::Rng;
pub use types::{Assignment, CodeSet, Codebook, DistanceMatrix, Embedding, UsageStats};
