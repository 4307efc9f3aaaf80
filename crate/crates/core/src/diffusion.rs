//! Diffusion-based contract generator: a conditional denoiser maps Gaussian
//! noise to an action vector given the encoded market state, trained by
//! ascending a learned action-value critic.
//!
//! Episodes are single-step: each sampled state is one decision and the
//! critic regresses the observed reward directly, with no bootstrap. The
//! configured discount factor is recorded for completeness but has nothing to
//! multiply. The actor objective differentiates through the whole reverse
//! chain; the final clamp into the action box uses a straight-through
//! convention (identity inside the box, zero outside).

use std::time::Instant;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{ActionVector, Environment, RewardMode};
use crate::error::{Error, Result};
use crate::nn::{time_embedding, Mlp, MlpGrads};
use crate::trace::{EpochRecord, TrainingTrace};

/// Hidden width of both networks.
pub const HIDDEN_WIDTH: usize = 256;
/// Sinusoidal time-embedding width fed to the denoiser.
pub const TIME_EMBED_DIM: usize = 16;
/// Global gradient-norm ceiling for the critic step.
pub const GRAD_CLIP_NORM: f64 = 1e3;
/// Tighter ceiling for the actor step. The denoiser output is amplified
/// through the whole reverse chain, and an actor that outruns the critic's
/// picture of the reward cliff drives the policy into the clamp boundary
/// where the straight-through gradient dies.
pub const ACTOR_GRAD_CLIP_NORM: f64 = 1e2;
/// Critic minibatch updates per epoch. The critic chases rewards spanning
/// seven orders of magnitude under clipped steps, so it needs more updates
/// than the actor to stay a useful guide; they cost about 1% of an actor
/// step each.
pub const CRITIC_UPDATES_PER_EPOCH: usize = 32;

const SALT_INIT: u64 = 0x517c_c1b7_2722_0a95;
const SALT_COLLECT: u64 = 0x9e37_79b9_7f4a_7c15;
const SALT_REPLAY: u64 = 0x2545_f491_4f6c_dd1d;

fn seeded_rng(seed: u64, salt: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(stream);
    rng
}

/// Forward-corruption constants: linear betas with cumulative products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub t_steps: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Standard linear schedule from 1e-4 to 0.02.
    pub fn linear(t_steps: usize) -> Result<Self> {
        Self::with_beta_range(t_steps, 1e-4, 0.02)
    }

    pub fn with_beta_range(t_steps: usize, beta_lo: f64, beta_hi: f64) -> Result<Self> {
        if t_steps < 1 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(0.0 < beta_lo && beta_lo <= beta_hi && beta_hi < 1.0) {
            return Err(Error::Config(format!("bad beta range ({beta_lo}, {beta_hi})")));
        }
        let beta: Vec<f64> = if t_steps == 1 {
            vec![beta_lo]
        } else {
            (0..t_steps)
                .map(|i| beta_lo + (beta_hi - beta_lo) * i as f64 / (t_steps - 1) as f64)
                .collect()
        };
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(t_steps);
        let mut product = 1.0;
        for a in &alpha {
            product *= a;
            alpha_bar.push(product);
        }
        Ok(Self { t_steps, beta, alpha, alpha_bar })
    }

    /// Cumulative product at step `t`, with the `t = 0` convention of 1.
    pub fn alpha_bar_at(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }
}

/// Conditional noise predictor: `(x_t, embed(t), state) -> predicted noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    pub mlp: Mlp,
    pub action_dim: usize,
    pub state_dim: usize,
    pub time_dim: usize,
}

impl DenoiserNet {
    pub fn new<R: Rng>(action_dim: usize, state_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let in_dim = action_dim + TIME_EMBED_DIM + state_dim;
        Self {
            mlp: Mlp::new(&[in_dim, hidden, hidden, action_dim], rng),
            action_dim,
            state_dim,
            time_dim: TIME_EMBED_DIM,
        }
    }

    fn assemble(&self, x: &Array2<f64>, t: usize, states: &Array2<f64>) -> Array2<f64> {
        let rows = x.nrows();
        let emb = time_embedding(t as f64, self.time_dim);
        let mut input = Array2::zeros((rows, self.action_dim + self.time_dim + self.state_dim));
        input.slice_mut(s![.., 0..self.action_dim]).assign(x);
        for mut row in input
            .slice_mut(s![.., self.action_dim..self.action_dim + self.time_dim])
            .rows_mut()
        {
            row.assign(&emb);
        }
        input
            .slice_mut(s![.., self.action_dim + self.time_dim..])
            .assign(states);
        input
    }

    /// Predicted noise for a batch of rows at one shared step index.
    pub fn predict(&self, x: &Array2<f64>, t: usize, states: &Array2<f64>) -> Array2<f64> {
        self.mlp.forward(&self.assemble(x, t, states))
    }
}

/// Action-value estimate `Q(s, a)` over `(action, encoded state)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub mlp: Mlp,
    pub action_dim: usize,
    pub state_dim: usize,
}

impl CriticNet {
    pub fn new<R: Rng>(action_dim: usize, state_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::new(&[action_dim + state_dim, hidden, hidden, 1], rng),
            action_dim,
            state_dim,
        }
    }

    fn assemble(&self, actions: &Array2<f64>, states: &Array2<f64>) -> Array2<f64> {
        let rows = actions.nrows();
        let mut input = Array2::zeros((rows, self.action_dim + self.state_dim));
        input.slice_mut(s![.., 0..self.action_dim]).assign(actions);
        input.slice_mut(s![.., self.action_dim..]).assign(states);
        input
    }

    pub fn q_values(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Array1<f64> {
        self.mlp.forward(&self.assemble(actions, states)).index_axis_move(Axis(1), 0)
    }
}

/// Anything that can score actions and expose the score's action gradient.
/// The trainer only needs these two operations from its critic, which also
/// lets tests drive the actor against analytic critics.
pub trait ActionValue {
    fn q_values(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Array1<f64>;

    /// Returns per-row `Q` and `dQ/da`.
    fn q_and_action_grad(&self, states: &Array2<f64>, actions: &Array2<f64>)
        -> (Array1<f64>, Array2<f64>);
}

impl ActionValue for CriticNet {
    fn q_values(&self, states: &Array2<f64>, actions: &Array2<f64>) -> Array1<f64> {
        CriticNet::q_values(self, states, actions)
    }

    fn q_and_action_grad(
        &self,
        states: &Array2<f64>,
        actions: &Array2<f64>,
    ) -> (Array1<f64>, Array2<f64>) {
        let input = self.assemble(actions, states);
        let (out, cache) = self.mlp.forward_cached(&input);
        // Rows are independent, so backpropagating ones yields each row's own
        // dQ/d(input row).
        let dy = Array2::ones(out.dim());
        let mut grads = self.mlp.grads_zero();
        let dinput = self.mlp.backward(&cache, &dy, &mut grads);
        let q = out.index_axis_move(Axis(1), 0);
        let dq_da = dinput.slice(s![.., 0..self.action_dim]).to_owned();
        (q, dq_da)
    }
}

/// Applies the forward corruption `x_t = sqrt(abar_t) x_0 + sqrt(1-abar_t) e`
/// and returns both the noised sample and the noise drawn.
pub fn forward_noise<R: Rng>(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if t > schedule.t_steps {
        return Err(Error::Domain(format!(
            "step {t} outside schedule of {} steps",
            schedule.t_steps
        )));
    }
    if t == 0 {
        return Ok((x0.to_vec(), vec![0.0; x0.len()]));
    }
    let abar = schedule.alpha_bar_at(t);
    let (signal, noise_scale) = (abar.sqrt(), (1.0 - abar).sqrt());
    let eps: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
    let x_t = x0
        .iter()
        .zip(&eps)
        .map(|(x, e)| signal * x + noise_scale * e)
        .collect();
    Ok((x_t, eps))
}

/// State of one reverse pass, kept when the caller needs to backpropagate.
struct ChainTrajectory {
    /// `xs[t]` is `x_t`; index 0 holds the raw (unclamped) `x_0`.
    xs: Vec<Array2<f64>>,
}

/// Runs the reverse denoising chain for a batch of rows.
///
/// `step_rng` injects the per-step noise `sigma_t z`; `None` is the
/// deterministic chain (`z = 0`), and `t = 1` never adds noise.
fn reverse_chain(
    denoiser: &DenoiserNet,
    schedule: &NoiseSchedule,
    states: &Array2<f64>,
    x_init: Array2<f64>,
    mut step_rng: Option<&mut ChaCha8Rng>,
    record: bool,
) -> Result<(Array2<f64>, Option<ChainTrajectory>)> {
    let t_steps = schedule.t_steps;
    let mut xs = if record { Vec::with_capacity(t_steps + 1) } else { Vec::new() };
    let mut x = x_init;
    for t in (1..=t_steps).rev() {
        if record {
            xs.push(x.clone());
        }
        let eps_hat = denoiser.predict(&x, t, states);
        let alpha = schedule.alpha[t - 1];
        let beta = schedule.beta[t - 1];
        let abar = schedule.alpha_bar[t - 1];
        let c1 = 1.0 / alpha.sqrt();
        let c2 = c1 * beta / (1.0 - abar).sqrt();
        x = x.mapv(|v| c1 * v) - eps_hat.mapv(|v| c2 * v);
        if t > 1 {
            if let Some(rng) = step_rng.as_deref_mut() {
                let sigma = beta.sqrt();
                for v in x.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += sigma * z;
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("reverse chain diverged at step t={t}")));
        }
    }
    if record {
        xs.push(x.clone());
        xs.reverse(); // xs[0] = x_0, ..., xs[T] = x_T
        return Ok((x, Some(ChainTrajectory { xs })));
    }
    Ok((x, None))
}

fn clamp_actions(x0: &Array2<f64>) -> Array2<f64> {
    x0.mapv(|v| v.clamp(-1.0, 1.0))
}

/// Generates one action: draw `x_T` from the rng, run the reverse chain
/// (stochastic unless `deterministic`), clamp into the action box.
pub fn generate_action(
    state_features: &[f64],
    denoiser: &DenoiserNet,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
    deterministic: bool,
) -> Result<ActionVector> {
    let states = Array2::from_shape_vec((1, state_features.len()), state_features.to_vec())
        .map_err(|e| Error::Shape(format!("state features: {e}")))?;
    let mut x_init = Array2::zeros((1, denoiser.action_dim));
    for v in x_init.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    let step_rng = if deterministic { None } else { Some(&mut *rng) };
    let (x0, _) = reverse_chain(denoiser, schedule, &states, x_init, step_rng, false)?;
    ActionVector::new(clamp_actions(&x0).row(0).to_vec())
}

/// A replay entry set drawn for one update.
pub struct TransitionBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
}

/// Ring buffer of `(state features, action, reward)` rows.
pub struct ReplayBuffer {
    capacity: usize,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, state: Vec<f64>, action: Vec<f64>, reward: f64) {
        if self.len() < self.capacity {
            self.states.push(state);
            self.actions.push(action);
            self.rewards.push(reward);
        } else {
            self.states[self.next] = state;
            self.actions[self.next] = action;
            self.rewards[self.next] = reward;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    pub fn sample(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> TransitionBatch {
        assert!(!self.is_empty(), "cannot sample from an empty replay buffer");
        let state_dim = self.states[0].len();
        let action_dim = self.actions[0].len();
        let mut states = Array2::zeros((batch_size, state_dim));
        let mut actions = Array2::zeros((batch_size, action_dim));
        let mut rewards = Array1::zeros(batch_size);
        for row in 0..batch_size {
            let pick = rng.gen_range(0..self.len());
            states.row_mut(row).assign(&Array1::from_vec(self.states[pick].clone()));
            actions.row_mut(row).assign(&Array1::from_vec(self.actions[pick].clone()));
            rewards[row] = self.rewards[pick];
        }
        TransitionBatch { states, actions, rewards }
    }
}

/// One mean-squared-error step of the critic toward observed rewards.
/// Returns the pre-step loss.
pub fn critic_update(batch: &TransitionBatch, critic: &mut CriticNet, lr: f64) -> Result<f64> {
    let rows = batch.rewards.len();
    let input = critic.assemble(&batch.actions, &batch.states);
    let (out, cache) = critic.mlp.forward_cached(&input);
    let q = out.index_axis(Axis(1), 0);
    let resid = &q - &batch.rewards;
    let loss = resid.mapv(|v| v * v).mean().unwrap_or(0.0);
    if !loss.is_finite() {
        return Err(Error::Numeric("critic loss is not finite".into()));
    }
    let dy = resid
        .mapv(|v| 2.0 * v / rows as f64)
        .insert_axis(Axis(1));
    let mut grads = critic.mlp.grads_zero();
    critic.mlp.backward(&cache, &dy, &mut grads);
    grads.clip_global_norm(GRAD_CLIP_NORM);
    critic.mlp.step(&grads, -lr)?;
    Ok(loss)
}

/// Rows processed together in the actor backward pass; bounds the memory
/// spent on cached activations for the unrolled chain.
const ACTOR_CHUNK: usize = 64;

/// One ascent step of the denoiser on `mean Q(s, a_gen)` where `a_gen` comes
/// from the deterministic reverse chain seeded with `x_init` (reparameterized
/// noise). The gradient flows through every reverse step and through the
/// clamp via the straight-through convention. Returns the pre-step objective.
pub fn actor_update<C: ActionValue>(
    states: &Array2<f64>,
    denoiser: &mut DenoiserNet,
    critic: &C,
    schedule: &NoiseSchedule,
    x_init: &Array2<f64>,
    lr: f64,
) -> Result<f64> {
    let rows = states.nrows();
    if x_init.nrows() != rows {
        return Err(Error::Shape(format!(
            "x_init has {} rows for {} states",
            x_init.nrows(),
            rows
        )));
    }
    let mut grads = denoiser.mlp.grads_zero();
    let mut objective = 0.0;
    for start in (0..rows).step_by(ACTOR_CHUNK) {
        let end = (start + ACTOR_CHUNK).min(rows);
        let state_chunk = states.slice(s![start..end, ..]).to_owned();
        let x_chunk = x_init.slice(s![start..end, ..]).to_owned();
        objective += actor_chunk_backward(
            &state_chunk,
            denoiser,
            critic,
            schedule,
            x_chunk,
            rows,
            &mut grads,
        )?;
    }
    if !objective.is_finite() {
        return Err(Error::Numeric("actor objective is not finite".into()));
    }
    grads.clip_global_norm(ACTOR_GRAD_CLIP_NORM);
    denoiser.mlp.step(&grads, lr)?;
    Ok(objective)
}

/// Backward pass over one chunk; returns the chunk's share of the objective.
fn actor_chunk_backward<C: ActionValue>(
    states: &Array2<f64>,
    denoiser: &DenoiserNet,
    critic: &C,
    schedule: &NoiseSchedule,
    x_init: Array2<f64>,
    total_rows: usize,
    grads: &mut MlpGrads,
) -> Result<f64> {
    let (x0, traj) = reverse_chain(denoiser, schedule, states, x_init, None, true)?;
    let traj = traj.expect("recorded");
    let actions = clamp_actions(&x0);
    let (q, dq_da) = critic.q_and_action_grad(states, &actions);
    let share = q.sum() / total_rows as f64;

    // Straight-through clamp: identity inside the box, zero outside.
    let mask = x0.mapv(|v| if (-1.0..=1.0).contains(&v) { 1.0 } else { 0.0 });
    let mut g = dq_da * mask / total_rows as f64;

    for t in 1..=schedule.t_steps {
        let x_t = &traj.xs[t];
        let input = denoiser.assemble(x_t, t, states);
        let (_, cache) = denoiser.mlp.forward_cached(&input);
        let alpha = schedule.alpha[t - 1];
        let beta = schedule.beta[t - 1];
        let abar = schedule.alpha_bar[t - 1];
        let c1 = 1.0 / alpha.sqrt();
        let c2 = c1 * beta / (1.0 - abar).sqrt();
        // x_{t-1} = c1 x_t - c2 eps_hat(x_t): the gradient reaches x_t both
        // directly and through the denoiser's input.
        let d_eps = g.mapv(|v| -c2 * v);
        let dinput = denoiser.mlp.backward(&cache, &d_eps, grads);
        let through_net = dinput.slice(s![.., 0..denoiser.action_dim]).to_owned();
        g = g.mapv(|v| c1 * v) + through_net;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("actor gradient diverged at step t={t}")));
        }
    }
    Ok(share)
}

/// Trainer hyperparameters. The paper-parity learning rate is the default;
/// desk-scale runs use the fast profile set by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionPolicyConfig {
    pub epochs: usize,
    pub states_per_epoch: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Recorded for config fidelity; single-step episodes leave it inert.
    pub discount: f64,
    pub exploration_sigma: f64,
    pub exploration_sigma_final: f64,
    pub replay_capacity: usize,
    pub eval_states: usize,
    pub t_steps: usize,
    pub seed: u64,
}

impl Default for DiffusionPolicyConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            states_per_epoch: 512,
            batch_size: 512,
            actor_lr: 2e-7,
            critic_lr: 2e-7,
            discount: 0.95,
            exploration_sigma: 0.1,
            exploration_sigma_final: 0.01,
            replay_capacity: 100_000,
            eval_states: 100,
            t_steps: 100,
            seed: 0,
        }
    }
}

impl DiffusionPolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.states_per_epoch == 0 || self.batch_size == 0 || self.replay_capacity == 0 {
            return Err(Error::Config("batch sizes and replay capacity must be positive".into()));
        }
        if self.t_steps == 0 {
            return Err(Error::Config("t_steps must be >= 1".into()));
        }
        let positives = [
            self.actor_lr,
            self.critic_lr,
            self.discount,
            self.exploration_sigma,
            self.exploration_sigma_final,
        ];
        if positives.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("rates, discount, and sigmas must be positive".into()));
        }
        Ok(())
    }

    fn sigma_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.exploration_sigma;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.exploration_sigma + (self.exploration_sigma_final - self.exploration_sigma) * frac
    }
}

/// Held-out states with precomputed features. Deterministic evaluation runs
/// the reverse chain from the mode of the noise distribution (`x_T = 0`), so
/// the evaluated contract is a function of the state alone, comparable across
/// epochs and with the PPO baseline's deterministic mean.
pub struct EvalSet {
    pub states: Vec<crate::econ::MarketState>,
    pub features: Array2<f64>,
    pub x_init: Array2<f64>,
}

impl EvalSet {
    pub fn build(env: &Environment, count: usize, _seed: u64) -> Result<Self> {
        let states = env.heldout_states(count)?;
        let state_dim = env.state_dim();
        let action_dim = env.action_dim();
        let mut features = Array2::zeros((count, state_dim));
        for (i, state) in states.iter().enumerate() {
            features.row_mut(i).assign(&Array1::from_vec(env.encode_state(state)?));
        }
        let x_init = Array2::zeros((count, action_dim));
        Ok(Self { states, features, x_init })
    }
}

/// Scores a policy's deterministic actions on the evaluation set in both
/// reward modes: (projected mean, penalized mean).
pub fn evaluate_denoiser(
    env: &Environment,
    denoiser: &DenoiserNet,
    schedule: &NoiseSchedule,
    eval: &EvalSet,
) -> Result<(f64, f64)> {
    let (x0, _) = reverse_chain(denoiser, schedule, &eval.features, eval.x_init.clone(), None, false)?;
    let actions = clamp_actions(&x0);
    let mut projected = 0.0;
    let mut penalized = 0.0;
    for (i, state) in eval.states.iter().enumerate() {
        let action = ActionVector::new(actions.row(i).to_vec())?;
        projected += env.reward_with_mode(state, &action, RewardMode::Project)?;
        penalized += env.reward_with_mode(state, &action, RewardMode::Penalize)?;
    }
    let count = eval.states.len().max(1) as f64;
    Ok((projected / count, penalized / count))
}

/// Full training loop: collect with exploration noise, push to replay, one
/// critic and one actor step per epoch, deterministic held-out evaluation.
pub fn train(
    env: &Environment,
    cfg: &DiffusionPolicyConfig,
) -> Result<(DenoiserNet, CriticNet, TrainingTrace)> {
    cfg.validate()?;
    let action_dim = env.action_dim();
    let state_dim = env.state_dim();
    let schedule = NoiseSchedule::linear(cfg.t_steps)?;

    let mut init_rng = seeded_rng(cfg.seed, SALT_INIT, 0);
    let mut denoiser = DenoiserNet::new(action_dim, state_dim, HIDDEN_WIDTH, &mut init_rng);
    let mut critic = CriticNet::new(action_dim, state_dim, HIDDEN_WIDTH, &mut init_rng);

    let eval = EvalSet::build(env, cfg.eval_states, cfg.seed)?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut trace = TrainingTrace::default();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let sigma = cfg.sigma_at(epoch);
        let context = |e: Error| Error::Numeric(format!("epoch {epoch}: {e}"));

        // Collect: fresh states, the deterministic mode-path chain (the same
        // path evaluation scores), additive exploration noise after the
        // chain so the stored action is the scored action.
        let mut collect_rng = seeded_rng(cfg.seed, SALT_COLLECT, epoch as u64);
        let mut feats = Array2::zeros((cfg.states_per_epoch, state_dim));
        let mut states = Vec::with_capacity(cfg.states_per_epoch);
        for k in 0..cfg.states_per_epoch {
            let draw = (epoch * cfg.states_per_epoch + k) as u64;
            let state = env.sample_state(draw)?;
            feats.row_mut(k).assign(&Array1::from_vec(env.encode_state(&state)?));
            states.push(state);
        }
        let x_init = Array2::zeros((cfg.states_per_epoch, action_dim));
        let (x0, _) = reverse_chain(&denoiser, &schedule, &feats, x_init, None, false)
            .map_err(context)?;
        let mut actions = clamp_actions(&x0);
        for v in actions.iter_mut() {
            let z: f64 = collect_rng.sample(StandardNormal);
            *v = (*v + sigma * z).clamp(-1.0, 1.0);
        }
        for (k, state) in states.iter().enumerate() {
            let action = ActionVector::new(actions.row(k).to_vec())?;
            let reward = env.reward(state, &action).map_err(context)?;
            replay.push(feats.row(k).to_vec(), action.raw, reward);
        }

        // Critic minibatch updates, then one actor step on the last batch.
        let mut replay_rng = seeded_rng(cfg.seed, SALT_REPLAY, epoch as u64);
        let mut critic_loss = 0.0;
        let mut batch = replay.sample(cfg.batch_size, &mut replay_rng);
        for round in 0..CRITIC_UPDATES_PER_EPOCH {
            if round > 0 {
                batch = replay.sample(cfg.batch_size, &mut replay_rng);
            }
            critic_loss = critic_update(&batch, &mut critic, cfg.critic_lr).map_err(context)?;
        }

        // The actor improves the deployed mode path, so its chains start
        // where collection and evaluation start.
        let actor_init = Array2::zeros((batch.states.nrows(), action_dim));
        let actor_obj = actor_update(
            &batch.states,
            &mut denoiser,
            &critic,
            &schedule,
            &actor_init,
            cfg.actor_lr,
        )
        .map_err(context)?;

        let (test_reward, test_reward_penalized) =
            evaluate_denoiser(env, &denoiser, &schedule, &eval).map_err(context)?;
        log::info!(
            "gdm epoch {epoch}: test_reward={test_reward:.4} penalized={test_reward_penalized:.4} \
             critic_loss={critic_loss:.4e} actor_obj={actor_obj:.4}"
        );
        trace.records.push(EpochRecord {
            epoch,
            test_reward,
            critic_loss,
            actor_obj,
            wall_ms: started.elapsed().as_millis() as u64,
            test_reward_penalized,
        });
    }

    Ok((denoiser, critic, trace))
}
