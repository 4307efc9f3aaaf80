//! Incentive contract design for edge sensing markets.
//!
//! An edge server buys sensed data from a population of users that differ in a
//! private quality type. The server publishes a menu of contract items
//! `(L_n^-1, R_n)` — a latency commitment and a reward — and users self-select.
//! This crate contains the economic model (utilities, individual-rationality
//! and incentive-compatibility checks), ground-truth solvers for the optimal
//! menu, a market environment for policy training, a diffusion-based contract
//! generator, and a PPO baseline trained on the same environment.

pub mod diffusion;
pub mod econ;
pub mod env;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod ppo;
pub mod trace;

pub use econ::{
    check_ic, check_ir, evaluate, expected_server_utility, net_term, server_utility_per_type,
    user_utility, Contract, ContractItem, EconParams, MarketState, UtilityReport, EPS_FEAS,
};
pub use error::{Error, Result};
