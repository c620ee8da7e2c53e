//! Coalition formation among Erlang-B service providers that share a
//! Poisson demand stream through a Wardrop equilibrium.

// `!(x > y)` forms are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod enumerate;
pub mod erlang;
pub mod error;
pub mod experiments;
pub mod instance;
pub mod lp;
pub mod payoffs;
pub mod quadrature;
pub mod roots;
pub mod stability;
pub mod traffic;
pub mod wardrop;

pub use erlang::{erlang_b, erlang_b_ln, erlang_b_real, OfferedLoad};
pub use error::{Error, Result};
pub use instance::{Coalition, Instance, Partition, Scenario};
pub use payoffs::{proportional_payoff, shapley_payoff, Configuration, PayoffRule};
pub use stability::{BlockKind, BlockReport, Rule, StabilityVerdict};
pub use wardrop::{solve_we, AnticipatedWorth, Game, KStar, WardropSplit};
