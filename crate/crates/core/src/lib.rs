//! Deep supervised hashing toolkit.
//!
//! A small convolutional network maps 32×32 RGB images to `k` real
//! outputs whose signs are the hash code. Training alternates mini-batch
//! back-propagation against a pairwise objective with a closed-form
//! update of ±1 "shadow" codes that the outputs are pulled toward.
//! Comparator objectives (contrastive + L1, Cauchy likelihood), an
//! asymmetric database-code solver and a similarity-factorization solver
//! share the same building blocks. Retrieval runs as an exact linear scan
//! over bit-packed codes.
//!
//! Module map:
//! - [`tensor`], [`nn`]: dense tensors, layers, initialization, SGD, checkpoints
//! - [`losses`]: pairwise objectives and their gradients
//! - [`shadow`]: shadow-code updates and the training loop
//! - [`solvers`]: asymmetric V-step and similarity factorization
//! - [`retrieval`]: packed codes, Hamming ranking, mAP
//! - [`data`]: CIFAR-10 binaries, splits, similarity oracle
//! - [`pipeline`], [`config`], [`cli`]: end-to-end runs and the command line

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
mod io_util;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod retrieval;
pub mod shadow;
pub mod solvers;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
