// SPDX-License-Identifier: Apache-2.0
//! Harness loading and per-side symbolic exploration.

mod engine;
pub mod harness;

pub use engine::*;
pub use harness::*;
