//! The economic model: user types, utilities, and the IR/IC constraint
//! structure shared by every solver.
//!
//! A type-`n` user that accepts item `(L_n^-1, R_n)` gets benefit
//! `theta_n * R_n` and pays cost `theta_n * (L_max / L_n - 1)`. The edge
//! server earns a quality-latency revenue `a1 * theta_n^b1 - a2 * (L_n /
//! L_max)^b2` minus the reward. Because the user's benefit and cost share the
//! factor `theta_n`, the sign of a user's utility is independent of the type:
//! `U_n = theta_n * (R_n - (L_max / L_n - 1))`. We call the parenthesised
//! quantity the item's *net term*; IR and IC both reduce to conditions on net
//! terms (see `check_ic`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute feasibility tolerance for IR/IC checks. Utilities are O(10^3) at
/// the default coefficients, so this is far below economic significance.
pub const EPS_FEAS: f64 = 1e-6;

/// Revenue/cost coefficients of the edge server and the action-space bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EconParams {
    /// Revenue-quality coefficient, > 0.
    pub a1: f64,
    /// Revenue-latency coefficient, > 0.
    pub a2: f64,
    /// Quality exponent, >= 1.
    pub b1: f64,
    /// Latency exponent, >= 1.
    pub b2: f64,
    /// Upper bound on per-type reward, > 0.
    pub r_max: f64,
    /// Lower bound on latency, > 0 and below any paired `l_max`.
    pub l_min: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        Self {
            a1: 15.0,
            a2: 10.0,
            b1: 1.0,
            b2: 1.0,
            r_max: 50.0,
            l_min: 1.0,
        }
    }
}

impl EconParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.a1, self.a2, self.b1, self.b2, self.r_max, self.l_min]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain("econ params must be finite".into()));
        }
        if self.a1 <= 0.0 || self.a2 <= 0.0 {
            return Err(Error::Config("a1 and a2 must be > 0".into()));
        }
        if self.b1 < 1.0 || self.b2 < 1.0 {
            return Err(Error::Config("b1 and b2 must be >= 1".into()));
        }
        if self.r_max <= 0.0 {
            return Err(Error::Config("r_max must be > 0".into()));
        }
        if self.l_min <= 0.0 {
            return Err(Error::Config("l_min must be > 0".into()));
        }
        Ok(())
    }
}

/// One sampled market instance: the environment state a policy conditions on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    /// Number of users served by the edge server, >= 1.
    pub m: u32,
    /// Number of user types, >= 1.
    pub n: usize,
    /// Maximum permissible latency, > 0.
    pub l_max: f64,
    /// Probability that a user is of each type; sums to 1.
    pub q: Vec<f64>,
    /// Type values, ascending and positive.
    pub theta: Vec<f64>,
}

impl MarketState {
    pub fn new(m: u32, n: usize, l_max: f64, q: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let state = Self { m, n, l_max, q, theta };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if self.n < 1 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if !(self.l_max.is_finite() && self.l_max > 0.0) {
            return Err(Error::Domain("l_max must be finite and > 0".into()));
        }
        if self.q.len() != self.n || self.theta.len() != self.n {
            return Err(Error::Shape(format!(
                "q and theta must have length n={}, got {} and {}",
                self.n,
                self.q.len(),
                self.theta.len()
            )));
        }
        let sum: f64 = self.q.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("type probabilities sum to {sum}, expected 1")));
        }
        if self.q.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Config("type probabilities must lie in [0, 1]".into()));
        }
        for w in self.theta.windows(2) {
            if w[0] > w[1] {
                return Err(Error::Config("theta must be sorted ascending".into()));
            }
        }
        if self.theta.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::Domain("theta values must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// One menu entry: reciprocal latency commitment and reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractItem {
    /// Reciprocal latency `L_n^-1`, > 0.
    pub inv_latency: f64,
    /// Reward `R_n`, >= 0.
    pub reward: f64,
}

impl ContractItem {
    pub fn new(inv_latency: f64, reward: f64) -> Self {
        Self { inv_latency, reward }
    }

    /// Latency `L_n = 1 / inv_latency`.
    pub fn latency(&self) -> f64 {
        1.0 / self.inv_latency
    }
}

/// A full menu, index-aligned with `MarketState::theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub items: Vec<ContractItem>,
}

impl Contract {
    pub fn new(items: Vec<ContractItem>) -> Self {
        Self { items }
    }

    /// Same item offered to every type.
    pub fn uniform(item: ContractItem, n: usize) -> Self {
        Self { items: vec![item; n] }
    }
}

/// Outcome of evaluating a contract against a market state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    /// `U_n` for each type choosing its own item.
    pub user_utilities: Vec<f64>,
    /// `U_E^n` for each type.
    pub server_per_type: Vec<f64>,
    /// Expected server utility `U_E`.
    pub expected_server: f64,
    /// Per-type individual rationality verdicts.
    pub ir_ok: Vec<bool>,
    /// Pairwise incentive compatibility verdicts; diagonal trivially true.
    pub ic_ok: Vec<Vec<bool>>,
    /// All IR and all IC constraints hold.
    pub feasible: bool,
}

fn check_alignment(state: &MarketState, contract: &Contract) -> Result<()> {
    if contract.items.len() != state.n {
        return Err(Error::Shape(format!(
            "contract has {} items but state has {} types",
            contract.items.len(),
            state.n
        )));
    }
    Ok(())
}

/// The type-independent part of a user's utility:
/// `reward - (l_max * inv_latency - 1)`.
pub fn net_term(item: &ContractItem, l_max: f64) -> f64 {
    item.reward - (l_max * item.inv_latency - 1.0)
}

/// Utility of a type-`theta_n` user accepting `item`:
/// benefit `theta_n * R` minus cost `theta_n * (L_max / L - 1)`.
pub fn user_utility(theta_n: f64, item: &ContractItem, l_max: f64) -> Result<f64> {
    if !(theta_n.is_finite() && theta_n > 0.0) {
        return Err(Error::Domain(format!("theta must be finite and > 0, got {theta_n}")));
    }
    if !(item.inv_latency.is_finite() && item.reward.is_finite() && l_max.is_finite()) {
        return Err(Error::Domain("contract item and l_max must be finite".into()));
    }
    Ok(theta_n * item.reward - theta_n * (l_max * item.inv_latency - 1.0))
}

/// Server utility from a type-`theta_n` user:
/// `a1 * theta^b1 - a2 * (L / L_max)^b2 - R`.
pub fn server_utility_per_type(
    theta_n: f64,
    item: &ContractItem,
    params: &EconParams,
    l_max: f64,
) -> Result<f64> {
    if !(theta_n.is_finite() && theta_n > 0.0) {
        return Err(Error::Domain(format!("theta must be finite and > 0, got {theta_n}")));
    }
    if !(item.inv_latency.is_finite() && item.reward.is_finite() && l_max.is_finite()) {
        return Err(Error::Domain("contract item and l_max must be finite".into()));
    }
    let latency = item.latency();
    let revenue = params.a1 * theta_n.powf(params.b1) - params.a2 * (latency / l_max).powf(params.b2);
    let value = revenue - item.reward;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("server utility is not finite for theta={theta_n}")));
    }
    Ok(value)
}

/// Expected server utility `U_E = M * sum_n Q_n * U_E^n`.
pub fn expected_server_utility(
    state: &MarketState,
    contract: &Contract,
    params: &EconParams,
) -> Result<f64> {
    check_alignment(state, contract)?;
    let mut acc = 0.0;
    for ((&theta, &prob), item) in state.theta.iter().zip(&state.q).zip(&contract.items) {
        acc += prob * server_utility_per_type(theta, item, params, state.l_max)?;
    }
    Ok(f64::from(state.m) * acc)
}

/// Individual rationality: entry `k` is true iff type `k` gets utility
/// `>= -EPS_FEAS` from its own item.
pub fn check_ir(state: &MarketState, contract: &Contract) -> Result<Vec<bool>> {
    check_alignment(state, contract)?;
    state
        .theta
        .iter()
        .zip(&contract.items)
        .map(|(&theta, item)| Ok(user_utility(theta, item, state.l_max)? >= -EPS_FEAS))
        .collect()
}

/// Incentive compatibility: entry `(k, j)` is true iff type `k` weakly
/// prefers its own item to item `j` (within `EPS_FEAS`).
pub fn check_ic(state: &MarketState, contract: &Contract) -> Result<Vec<Vec<bool>>> {
    check_alignment(state, contract)?;
    let mut matrix = Vec::with_capacity(state.n);
    for (k, &theta_k) in state.theta.iter().enumerate() {
        let own = user_utility(theta_k, &contract.items[k], state.l_max)?;
        let mut row = Vec::with_capacity(state.n);
        for (j, item_j) in contract.items.iter().enumerate() {
            if j == k {
                row.push(true);
                continue;
            }
            let other = user_utility(theta_k, item_j, state.l_max)?;
            row.push(own >= other - EPS_FEAS);
        }
        matrix.push(row);
    }
    Ok(matrix)
}

/// Full evaluation: utilities, constraint verdicts, and overall feasibility.
pub fn evaluate(state: &MarketState, contract: &Contract, params: &EconParams) -> Result<UtilityReport> {
    check_alignment(state, contract)?;
    let user_utilities = state
        .theta
        .iter()
        .zip(&contract.items)
        .map(|(&theta, item)| user_utility(theta, item, state.l_max))
        .collect::<Result<Vec<_>>>()?;
    let server_per_type = state
        .theta
        .iter()
        .zip(&contract.items)
        .map(|(&theta, item)| server_utility_per_type(theta, item, params, state.l_max))
        .collect::<Result<Vec<_>>>()?;
    let expected_server = expected_server_utility(state, contract, params)?;
    let ir_ok = check_ir(state, contract)?;
    let ic_ok = check_ic(state, contract)?;
    let feasible = ir_ok.iter().all(|&ok| ok) && ic_ok.iter().flatten().all(|&ok| ok);
    Ok(UtilityReport {
        user_utilities,
        server_per_type,
        expected_server,
        ir_ok,
        ic_ok,
        feasible,
    })
}
