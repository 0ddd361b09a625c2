//! Solver and verification harness for optimal public-private-partnership
//! maintenance contracts under moral hazard.
//!
//! The public entity pays a rent to a consortium whose maintenance effort it
//! cannot observe; the consortium's continuation value is the state of a
//! stationary stochastic control problem. This crate:
//!
//! - solves the associated Hamilton-Jacobi-Bellman equation on `[0, x̄]` by
//!   an upwind finite-difference scheme and Howard policy iteration
//!   ([`hjb`]);
//! - houses the model's function family and the analytic quantities derived
//!   from it ([`model`]);
//! - cross-validates the solved contract by Euler-Maruyama simulation of the
//!   continuation-value SDE and Monte Carlo estimation of both parties'
//!   objectives ([`simulate`]);
//! - bounds the probability that the operational cost process goes negative
//!   via the inverse-Gaussian first-passage law ([`risk`]).
//!
//! The `ppp-contract` binary exposes `validate`, `solve`, `sweep`,
//! `simulate`, and `risk` subcommands that emit CSV tables and plain-text
//! reports; see [`config`] for the flat key-value configuration format and
//! [`runner`] for the orchestration.

pub mod config;
pub mod hjb;
pub mod model;
pub mod numeric;
pub mod risk;
pub mod runner;
pub mod simulate;

pub use hjb::{
    howard_solve, Grid, HowardConfig, HowardResult, Policy, TridiagonalSystem, ValueFunction,
};
pub use model::{
    boundary_v0, compute_abar, compute_xbar, example_bundle, incentive_effort, upper_bound_v,
    validate_assumptions, FunctionBundle, ModelParams, ValidationReport,
};
