//! Market environment: samples states, encodes them as features, decodes raw
//! policy actions into contracts, and scores actions.
//!
//! All randomness flows through `ChaCha8Rng` keyed by the configured seed.
//! State draws are addressed by a stream index, so `(seed, draw)` pins a
//! state no matter in which order draws happen. Held-out evaluation states
//! live in a reserved stream range and never collide with training draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::econ::{
    evaluate, expected_server_utility, net_term, user_utility, Contract, ContractItem, EconParams,
    MarketState,
};
use crate::error::{Error, Result};

/// Stream offset reserving the upper half of the stream space for held-out
/// evaluation draws.
pub const EVAL_STREAM_BASE: u64 = 1 << 63;

/// How market states are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Per-type sampling interval for theta, one per type.
    pub theta_ranges: Vec<(f64, f64)>,
    /// Dirichlet concentration for the type distribution.
    pub dirichlet_alpha: Vec<f64>,
    pub l_max: f64,
    pub m: u32,
    pub n: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            theta_ranges: vec![(10.0, 100.0), (100.0, 200.0)],
            dirichlet_alpha: vec![1.0, 1.0],
            l_max: 150.0,
            m: 1,
            n: 2,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if self.theta_ranges.len() != self.n || self.dirichlet_alpha.len() != self.n {
            return Err(Error::Config(format!(
                "theta_ranges and dirichlet_alpha must have length n={}",
                self.n
            )));
        }
        for &(lo, hi) in &self.theta_ranges {
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
                return Err(Error::Config(format!("bad theta range ({lo}, {hi})")));
            }
        }
        if self.dirichlet_alpha.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
            return Err(Error::Config("dirichlet_alpha entries must be > 0".into()));
        }
        if !(self.l_max.is_finite() && self.l_max > 0.0) {
            return Err(Error::Config("l_max must be > 0".into()));
        }
        if self.m < 1 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        Ok(())
    }
}

/// Raw policy output: `2n` components in `[-1, 1]`, ordered
/// `(latency slot, reward slot)` per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub raw: Vec<f64>,
}

impl ActionVector {
    /// Clamps components into `[-1, 1]`; rejects non-finite input.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("action components must be finite".into()));
        }
        Ok(Self { raw: raw.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect() })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// How infeasible actions are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Subtract `penalty_weight` times the total IR/IC shortfall.
    Penalize,
    /// Repair the contract (IR then IC) and score the repaired one.
    Project,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub penalty_weight: f64,
    pub mode: RewardMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        // Training default; evaluation uses Project explicitly.
        Self { penalty_weight: 1000.0, mode: RewardMode::Penalize }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_weight.is_finite() && self.penalty_weight >= 0.0) {
            return Err(Error::Config("penalty_weight must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Samples the state addressed by `(cfg.seed, draw)`. Types are uniform on
/// their intervals (sorted ascending afterwards) and the type distribution is
/// Dirichlet.
pub fn sample_state(cfg: &SamplerConfig, draw: u64) -> Result<MarketState> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(draw);

    let mut theta: Vec<f64> = cfg
        .theta_ranges
        .iter()
        .map(|&(lo, hi)| rng.gen_range(lo..hi))
        .collect();
    theta.sort_by(|a, b| a.partial_cmp(b).expect("sampled theta is finite"));

    let q = if cfg.n == 1 {
        vec![1.0]
    } else {
        let dirichlet = Dirichlet::new(&cfg.dirichlet_alpha)
            .map_err(|e| Error::Config(format!("dirichlet: {e}")))?;
        let mut q = dirichlet.sample(&mut rng);
        let sum: f64 = q.iter().sum();
        for p in &mut q {
            *p /= sum;
        }
        q
    };

    MarketState::new(cfg.m, cfg.n, cfg.l_max, q, theta)
}

/// Feature vector `[theta_1/hi_1, ..., theta_n/hi_n, Q_1, ..., Q_n]`.
/// Constants fixed per experiment (M, N, L_max) carry no information and are
/// excluded.
pub fn encode_state(cfg: &SamplerConfig, state: &MarketState) -> Result<Vec<f64>> {
    if state.n != cfg.n {
        return Err(Error::Shape(format!(
            "state has {} types but sampler is configured for {}",
            state.n, cfg.n
        )));
    }
    let mut features = Vec::with_capacity(2 * state.n);
    for (theta, &(_, hi)) in state.theta.iter().zip(&cfg.theta_ranges) {
        features.push(theta / hi);
    }
    features.extend_from_slice(&state.q);
    Ok(features)
}

/// Affine map from raw `[-1, 1]` slots to contract items:
/// `inv_latency = 1/l_max + (1+raw)/2 * (1/l_min - 1/l_max)` and
/// `reward = (1+raw)/2 * r_max`.
pub fn decode_action(
    action: &ActionVector,
    state: &MarketState,
    params: &EconParams,
) -> Result<Contract> {
    if action.len() != 2 * state.n {
        return Err(Error::Shape(format!(
            "action has {} slots, state needs {}",
            action.len(),
            2 * state.n
        )));
    }
    let inv_lo = 1.0 / state.l_max;
    let inv_hi = 1.0 / params.l_min;
    let items = action
        .raw
        .chunks_exact(2)
        .map(|slot| {
            let inv_latency = inv_lo + (1.0 + slot[0]) / 2.0 * (inv_hi - inv_lo);
            let reward = (1.0 + slot[1]) / 2.0 * params.r_max;
            ContractItem::new(inv_latency, reward)
        })
        .collect();
    Ok(Contract::new(items))
}

/// Repairs a contract: lift each reward to the IR boundary, then equalize
/// net terms at the maximum so no type envies another. Latencies are kept;
/// the repaired reward may exceed `r_max` when a latency commitment is so
/// aggressive that IR demands more than the cap.
pub fn project_contract(contract: &Contract, l_max: f64) -> Contract {
    let lifted: Vec<ContractItem> = contract
        .items
        .iter()
        .map(|item| {
            let floor = l_max * item.inv_latency - 1.0;
            ContractItem::new(item.inv_latency, item.reward.max(floor))
        })
        .collect();
    let max_net = lifted
        .iter()
        .map(|item| net_term(item, l_max))
        .fold(f64::NEG_INFINITY, f64::max);
    let items = lifted
        .iter()
        .map(|item| {
            ContractItem::new(item.inv_latency, max_net + (l_max * item.inv_latency - 1.0))
        })
        .collect();
    Contract::new(items)
}

/// Scores a raw action against a state.
pub fn reward(
    state: &MarketState,
    action: &ActionVector,
    params: &EconParams,
    rcfg: &RewardConfig,
) -> Result<f64> {
    rcfg.validate()?;
    let contract = decode_action(action, state, params)?;
    match rcfg.mode {
        RewardMode::Penalize => {
            let u_e = expected_server_utility(state, &contract, params)?;
            let mut shortfall = 0.0;
            for (k, (&theta_k, item_k)) in state.theta.iter().zip(&contract.items).enumerate() {
                let own = user_utility(theta_k, item_k, state.l_max)?;
                shortfall += (-own).max(0.0);
                for (j, item_j) in contract.items.iter().enumerate() {
                    if j == k {
                        continue;
                    }
                    let other = user_utility(theta_k, item_j, state.l_max)?;
                    shortfall += (other - own).max(0.0);
                }
            }
            Ok(u_e - rcfg.penalty_weight * shortfall)
        }
        RewardMode::Project => {
            let projected = project_contract(&contract, state.l_max);
            expected_server_utility(state, &projected, params)
        }
    }
}

/// Bundles everything a trainer needs to interact with the market.
#[derive(Debug, Clone)]
pub struct Environment {
    pub sampler: SamplerConfig,
    pub econ: EconParams,
    pub reward: RewardConfig,
}

impl Environment {
    pub fn new(sampler: SamplerConfig, econ: EconParams, reward: RewardConfig) -> Result<Self> {
        sampler.validate()?;
        econ.validate()?;
        reward.validate()?;
        if econ.l_min >= sampler.l_max {
            return Err(Error::Config("l_min must be below l_max".into()));
        }
        Ok(Self { sampler, econ, reward })
    }

    /// Number of raw action slots: two per type.
    pub fn action_dim(&self) -> usize {
        2 * self.sampler.n
    }

    /// Number of state features: two per type.
    pub fn state_dim(&self) -> usize {
        2 * self.sampler.n
    }

    pub fn sample_state(&self, draw: u64) -> Result<MarketState> {
        sample_state(&self.sampler, draw)
    }

    pub fn encode_state(&self, state: &MarketState) -> Result<Vec<f64>> {
        encode_state(&self.sampler, state)
    }

    pub fn decode_action(&self, action: &ActionVector, state: &MarketState) -> Result<Contract> {
        decode_action(action, state, &self.econ)
    }

    /// Reward in the configured training mode.
    pub fn reward(&self, state: &MarketState, action: &ActionVector) -> Result<f64> {
        reward(state, action, &self.econ, &self.reward)
    }

    pub fn reward_with_mode(
        &self,
        state: &MarketState,
        action: &ActionVector,
        mode: RewardMode,
    ) -> Result<f64> {
        let rcfg = RewardConfig { mode, ..self.reward.clone() };
        reward(state, action, &self.econ, &rcfg)
    }

    /// The held-out evaluation set: `count` states from the reserved stream
    /// range, fixed by the seed alone.
    pub fn heldout_states(&self, count: usize) -> Result<Vec<MarketState>> {
        (0..count as u64)
            .map(|i| sample_state(&self.sampler, EVAL_STREAM_BASE + i))
            .collect()
    }

    /// Checks that the projected contract of an action is feasible.
    pub fn feasible_after_projection(
        &self,
        state: &MarketState,
        action: &ActionVector,
    ) -> Result<bool> {
        let contract = self.decode_action(action, state)?;
        let projected = project_contract(&contract, state.l_max);
        Ok(evaluate(state, &projected, &self.econ)?.feasible)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn default_env() -> Environment {
        Environment::new(SamplerConfig::default(), EconParams::default(), RewardConfig::default())
            .unwrap()
    }

    #[test]
    fn sampling_is_deterministic_per_draw_index() {
        let cfg = SamplerConfig::default();
        let a = sample_state(&cfg, 42).unwrap();
        let b = sample_state(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_state(&cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_states_satisfy_invariants() {
        let cfg = SamplerConfig::default();
        for draw in 0..200 {
            let state = sample_state(&cfg, draw).unwrap();
            state.validate().unwrap();
            assert!((10.0..100.0).contains(&state.theta[0]));
            assert!((100.0..200.0).contains(&state.theta[1]));
        }
    }

    #[test]
    fn q1_is_uniform_under_unit_alpha() {
        // Dirichlet(1, 1) puts Q1 uniform on [0, 1]; Kolmogorov-Smirnov at
        // n = 10^4 with the p > 0.01 critical value 1.6276 / sqrt(n).
        let cfg = SamplerConfig::default();
        let n = 10_000usize;
        let mut samples: Vec<f64> = (0..n)
            .map(|i| sample_state(&cfg, i as u64).unwrap().q[0])
            .collect();
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d_stat: f64 = 0.0;
        for (i, x) in samples.iter().enumerate() {
            let hi = (i + 1) as f64 / n as f64 - x;
            let lo = x - i as f64 / n as f64;
            d_stat = d_stat.max(hi).max(lo);
        }
        let critical = 1.6276 / (n as f64).sqrt();
        assert!(d_stat < critical, "KS statistic {d_stat} >= {critical}");
    }

    #[test]
    fn encode_normalizes_by_interval_upper_ends() {
        let cfg = SamplerConfig::default();
        let state = MarketState::new(1, 2, 150.0, vec![0.3, 0.7], vec![100.0, 200.0]).unwrap();
        let f = encode_state(&cfg, &state).unwrap();
        assert_eq!(f, vec![1.0, 1.0, 0.3, 0.7]);

        let state = MarketState::new(1, 2, 150.0, vec![0.3, 0.7], vec![55.0, 150.0]).unwrap();
        let f = encode_state(&cfg, &state).unwrap();
        assert!((f[0] - 0.55).abs() < 1e-12);
        assert!((f[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn encoded_features_stay_in_unit_range() {
        let cfg = SamplerConfig::default();
        for draw in 0..500 {
            let state = sample_state(&cfg, draw).unwrap();
            for v in encode_state(&cfg, &state).unwrap() {
                assert!((0.0..=1.0001).contains(&v), "feature {v}");
            }
        }
    }

    #[test]
    fn decode_hits_box_corners() {
        let env = default_env();
        let state = env.sample_state(0).unwrap();

        let low = ActionVector::new(vec![-1.0; 4]).unwrap();
        for item in env.decode_action(&low, &state).unwrap().items {
            assert!((item.latency() - 150.0).abs() < 1e-9);
            assert!(item.reward.abs() < 1e-12);
        }

        let high = ActionVector::new(vec![1.0; 4]).unwrap();
        for item in env.decode_action(&high, &state).unwrap().items {
            assert!((item.latency() - 1.0).abs() < 1e-9);
            assert!((item.reward - 50.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_midpoint_latency_slot() {
        let env = default_env();
        let state = env.sample_state(0).unwrap();
        let mid = ActionVector::new(vec![0.0; 4]).unwrap();
        let contract = env.decode_action(&mid, &state).unwrap();
        let expected = (1.0 / 150.0 + 1.0) / 2.0;
        assert!((contract.items[0].inv_latency - expected).abs() < 1e-9);
        assert!((expected - 0.50333).abs() < 1e-4);
    }

    #[test]
    fn feasible_actions_score_expected_utility_in_both_modes() {
        let env = default_env();
        let state = env.sample_state(3).unwrap();
        // Latency at l_max with positive reward is always feasible.
        let action = ActionVector::new(vec![-1.0, -0.9, -1.0, -0.9]).unwrap();
        let contract = env.decode_action(&action, &state).unwrap();
        assert!(evaluate(&state, &contract, &env.econ).unwrap().feasible);
        let u = expected_server_utility(&state, &contract, &env.econ).unwrap();
        let pen = env.reward_with_mode(&state, &action, RewardMode::Penalize).unwrap();
        let proj = env.reward_with_mode(&state, &action, RewardMode::Project).unwrap();
        assert!((pen - u).abs() < 1e-9);
        assert!((proj - u).abs() < 1e-9);
    }

    #[test]
    fn penalize_charges_ir_and_ic_shortfalls() {
        let env = default_env();
        let state = env.sample_state(5).unwrap();
        // Zero rewards with latencies below l_max violate IR for both types.
        let action = ActionVector::new(vec![-0.9, -1.0, -0.5, -1.0]).unwrap();
        let contract = env.decode_action(&action, &state).unwrap();
        let u_e = expected_server_utility(&state, &contract, &env.econ).unwrap();

        let mut shortfall = 0.0;
        let nets: Vec<f64> =
            contract.items.iter().map(|item| net_term(item, state.l_max)).collect();
        for (k, &theta) in state.theta.iter().enumerate() {
            // IR shortfall: theta * (L_max / L - 1) with R = 0.
            shortfall += theta * (state.l_max * contract.items[k].inv_latency - 1.0);
            for (j, &net_j) in nets.iter().enumerate() {
                if j != k {
                    shortfall += theta * (net_j - nets[k]).max(0.0);
                }
            }
        }
        let expected = u_e - 1000.0 * shortfall;
        let got = env.reward_with_mode(&state, &action, RewardMode::Penalize).unwrap();
        assert!((got - expected).abs() < 1e-6 * shortfall.max(1.0), "got {got}, want {expected}");
    }

    #[test]
    fn projection_always_restores_feasibility() {
        let env = default_env();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for draw in 0..100 {
            let state = env.sample_state(draw).unwrap();
            let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let action = ActionVector::new(raw).unwrap();
            assert!(env.feasible_after_projection(&state, &action).unwrap());
        }
    }

    #[test]
    fn penalized_reward_never_exceeds_projected() {
        let env = default_env();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for draw in 0..100 {
            let state = env.sample_state(draw).unwrap();
            let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let action = ActionVector::new(raw).unwrap();
            let pen = env.reward_with_mode(&state, &action, RewardMode::Penalize).unwrap();
            let proj = env.reward_with_mode(&state, &action, RewardMode::Project).unwrap();
            assert!(pen <= proj + 1e-9, "penalize {pen} > project {proj}");
        }
    }

    #[test]
    fn action_vector_clamps_and_rejects_non_finite() {
        let a = ActionVector::new(vec![-3.0, 0.25, 2.0, 1.0]).unwrap();
        assert_eq!(a.raw, vec![-1.0, 0.25, 1.0, 1.0]);
        assert!(ActionVector::new(vec![f64::NAN]).is_err());
    }
}
