// SPDX-License-Identifier: Apache-2.0

//! Comparative symbolic execution over a small register IR.

pub mod expr;
mod simplify;
pub mod solver;
#[doc(hidden)]
pub mod testing;
pub mod ir;
pub mod constraint;
pub mod exec;
pub mod compare;
pub mod tree;
pub mod session;
