//! Trellis-extended codebook (TEC) channel-state quantization.
//!
//! A TEC quantizer runs the Viterbi algorithm over the trellis of a short
//! convolutional code whose branches carry small vector codewords, quantizing
//! `L` channel entries per trellis stage with an outer noncoherent search over
//! a discrete phase grid. The feedback word is the trellis *input* bit
//! sequence, so the transmitter reconstructs the quantized vector by simply
//! re-running the convolutional encoder. This keeps both the search complexity
//! and the feedback overhead linear in the number of antennas, unlike flat
//! vector quantization whose codeword search grows exponentially.
//!
//! The crate provides:
//!
//! - [`trellis`]: the convolutional codes and their trellis tables,
//! - [`codebook`]: per-stage codebooks (max-min Euclidean distance design,
//!   oversampled-DFT, random) and the codeword-to-branch mapping,
//! - [`quantizer`]: the Viterbi quantizer, reconstructor, and the flat
//!   vector-quantization baseline,
//! - [`tespa`]: the differential quantizer (successive block-wise phase
//!   adjustment with circular block shifting),
//! - [`channel`]: i.i.d. Rayleigh, Gauss-Markov and exponential-spatial
//!   channel models plus dominant-eigenvector computation,
//! - [`harness`]: seeded Monte Carlo experiment runners and result emission,
//!   driven by the `tecq` CLI binary.

pub mod channel;
pub mod codebook;
pub mod config;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod quantizer;
pub mod rng;
pub mod tespa;
pub mod trellis;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};
