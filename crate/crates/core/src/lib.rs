//! Differentiable sorting networks.
//!
//! The conditional swaps of odd-even transposition and bitonic sorting
//! networks are relaxed into smooth mixing operators. Running a relaxed
//! network yields softly sorted values together with a doubly-stochastic
//! soft permutation matrix, both differentiable with respect to the inputs.
//! This makes it possible to train a scoring model from ordering
//! supervision alone.
//!
//! The numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below fix the precision. Training and data handling
//! work in `f64`.

// `!(x > 0)` checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod error;
pub mod matrix;
pub mod objective;
pub mod relax;
pub mod scalar;
pub mod schedule;
pub mod softsort;
pub mod train;

pub use error::{Error, Result};
pub use matrix::SquareMatrix;
pub use objective::{GroundTruthPermutation, MetricReport};
pub use relax::{Mode, RelaxConfig};
pub use scalar::Scalar;
pub use schedule::{Comparator, ComparatorSchedule, NetworkKind};
pub use softsort::{
    backward, forward, forward_values, hard_ranks, ForwardTrace, SoftPermutation, SortOutput,
};

pub type RelaxConfig64 = RelaxConfig<f64>;
pub type RelaxConfig32 = RelaxConfig<f32>;
pub type SoftPermutation64 = SoftPermutation<f64>;
pub type SoftPermutation32 = SoftPermutation<f32>;
pub type Matrix64 = SquareMatrix<f64>;
pub type Matrix32 = SquareMatrix<f32>;
pub type ForwardTrace64<'s> = ForwardTrace<'s, f64>;
pub type ForwardTrace32<'s> = ForwardTrace<'s, f32>;
