// SPDX-License-Identifier: Apache-2.0

//! Pairwise causal inference under the additive noise model, with
//! differentially private release of the dependence scores and decisions.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod data;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod kernel;
pub mod privacy;
pub mod regression;
pub mod report;
pub mod scores;
pub mod seed;

pub use error::{Error, Result};
