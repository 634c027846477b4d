//! Analysis toolkit for homogeneous higher-order Markov chains.
//!
//! A chain of order `m - 1` on states `1..=n` is given by its dense
//! transition tensor `P`, an order-`m` dimension-`n` cubical tensor where
//! `P[i1, i2, ..., im]` is the probability of moving to state `i1` from the
//! context `(i2, ..., im)` (current state first). On top of the tensor "box"
//! algebra this crate computes:
//!
//! - k-step transition tensors ([`TransitionTensor::k_step`]),
//! - regularity and ergodicity checks via boolean positivity patterns,
//! - the reduced first-order chain and limiting distributions,
//! - ever-reaching probability tensors and the recurrent / transient /
//!   fully-transient classification,
//! - mean first passage time tensors by a block-diagonal direct solver and
//!   by fixed-point iteration,
//! - seeded Monte Carlo estimators that serve as an independent statistical
//!   oracle for all of the above.
//!
//! First-order chains are the `m = 2` special case and are fully supported;
//! the box product then degenerates to the ordinary matrix product.
//!
//! The `homc` binary exposes each operation as a subcommand over a JSON
//! tensor-file format; see the crate README.

pub mod analysis;
pub mod chain;
pub mod cli;
pub mod error;
pub mod io;
pub mod montecarlo;
pub mod tensor;

pub use analysis::{
    classify_states, ever_reaching, mfpt_direct, mfpt_iterative, ClassificationReport,
    EverReachResult, MfptMethod, MfptResult, StateClass,
};
pub use chain::{
    default_kmax, marginal_from_reduced, Distribution, ReachStatus, ReachabilityVerdict,
    ReducedChainMatrix, StationaryResult, TransitionTensor,
};
pub use error::{HomcError, Result};
pub use montecarlo::{step, Estimate, SimConfig};
pub use tensor::{
    index_table, linear_offset, multi_index, CubicalTensor, IndexTuple, Matrix, Shape,
};
