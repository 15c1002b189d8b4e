//! Closed-form and coordinate-wise solvers for asymmetric hashing and
//! similarity-matrix factorization.

mod adsh;
mod cnnh;

pub use adsh::{
    adsh_objective, adsh_train, adsh_update_column, adsh_update_v, AdshConfig, AdshOutcome, AdshProblem,
};
pub use cnnh::{cnnh_factorize, cnnh_factorize_with, reconstruction_error, SignSimilarity};
