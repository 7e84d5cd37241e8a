//! Succinct rank over a bit array, stored as a tree of spillover codes.
//!
//! Each tree node keeps a few explicit memory words plus one integer, the
//! spillover, drawn from a domain only slightly larger than `2^w`. Children
//! hand their spillovers up to the parent, which folds them into its own code,
//! so a whole block of `B^t w` bits costs `B^t w + 1` bits of memory. A rank
//! query walks one root-to-leaf path and reads a constant number of words per
//! level.
//!
//! # Layout
//!
//! - [`model`]: bit memory, probe metering, parameters.
//! - [`mixed_radix`]: tuple codes with element-local decoding.
//! - [`binom_approx`]: certified nonnegative approximations of binomial rows.
//! - [`combiner`]: per-level codes that merge `B` child spillovers.
//! - [`rank_tree`]: block decomposition, build, query and audits.
//! - [`cli`]: batch front-end used by the `spillrank` binary.
//!
//! # Example
//!
//! ```
//! use spillrank::model::Params;
//! use spillrank::rank_tree::{build, oracle_rank, rank};
//! use spillrank::model::ProbeMeter;
//!
//! let bits: Vec<bool> = (0..64).map(|i| i % 3 == 0).collect();
//! let rs = build(&bits, Params::relaxed(64, 16, 2, 2)).unwrap();
//! let mut meter = ProbeMeter::new();
//! assert_eq!(rank(&rs, 40, &mut meter).unwrap(), oracle_rank(&bits, 40));
//! assert_eq!(rs.space_audit().total_bits, 65);
//! ```

pub mod binom_approx;
pub mod binomial;
pub mod cli;
pub mod combiner;
pub mod config;
pub mod error;
pub mod mixed_radix;
pub mod model;
pub mod rank_tree;

pub use error::{Error, Result};
