//! Comparison reports: per-method utility statistics on the held-out states,
//! example contracts on the reference state, reward curves, and a static SVG
//! chart.

use contract_design::diffusion::{DenoiserNet, EvalSet, NoiseSchedule};
use contract_design::econ::{evaluate, Contract, MarketState};
use contract_design::env::{project_contract, ActionVector, Environment};
use contract_design::oracle::closed_form_contract;
use contract_design::ppo::GaussianPolicyNet;
use contract_design::trace::TrainingTrace;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Per-method statistics over the held-out evaluation states. Reported
/// contracts are projected before scoring, so the feasibility rate of
/// anything that reaches a report is 1.0 by construction; it is re-measured
/// rather than assumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mean_utility: f64,
    pub std_utility: f64,
    pub feasibility_rate: f64,
    /// Items of the example contract on the reference state, as
    /// `(inv_latency, reward)` pairs.
    pub example_contract: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub eval_state_hash: String,
    pub oracle: MethodSummary,
    pub gdm: MethodSummary,
    pub ppo: MethodSummary,
    pub gdm_to_ppo_ratio: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize_contracts(
    env: &Environment,
    states: &[MarketState],
    contracts: &[Contract],
) -> CliResult<MethodSummary> {
    let mut utilities = Vec::with_capacity(states.len());
    let mut feasible = 0usize;
    for (state, contract) in states.iter().zip(contracts) {
        let report = evaluate(state, contract, &env.econ)?;
        if report.feasible {
            feasible += 1;
        }
        utilities.push(report.expected_server);
    }
    let (mean_utility, std_utility) = mean_std(&utilities);
    let example_contract = contracts
        .first()
        .map(|c| c.items.iter().map(|i| (i.inv_latency, i.reward)).collect())
        .unwrap_or_default();
    Ok(MethodSummary {
        mean_utility,
        std_utility,
        feasibility_rate: feasible as f64 / states.len().max(1) as f64,
        example_contract,
    })
}

/// Projected contracts a trained denoiser proposes on the evaluation states
/// (deterministic mode-path generation).
pub fn gdm_contracts(
    env: &Environment,
    denoiser: &DenoiserNet,
    schedule: &NoiseSchedule,
    eval: &EvalSet,
) -> CliResult<Vec<Contract>> {
    let mut contracts = Vec::with_capacity(eval.states.len());
    for (i, state) in eval.states.iter().enumerate() {
        let feats: Vec<f64> = eval.features.row(i).to_vec();
        let row = Array2::from_shape_vec((1, feats.len()), feats)
            .expect("row-shaped features");
        let action = deterministic_mode_action(denoiser, schedule, &row)?;
        let contract = env.decode_action(&action, state)?;
        contracts.push(project_contract(&contract, state.l_max));
    }
    Ok(contracts)
}

fn deterministic_mode_action(
    denoiser: &DenoiserNet,
    schedule: &NoiseSchedule,
    state_row: &Array2<f64>,
) -> CliResult<ActionVector> {
    let mut x = Array2::zeros((1, denoiser.action_dim));
    for t in (1..=schedule.t_steps).rev() {
        let eps = denoiser.predict(&x, t, state_row);
        let alpha = schedule.alpha[t - 1];
        let beta = schedule.beta[t - 1];
        let abar = schedule.alpha_bar[t - 1];
        let c1 = 1.0 / alpha.sqrt();
        let c2 = c1 * beta / (1.0 - abar).sqrt();
        x = x.mapv(|v| c1 * v) - eps.mapv(|v| c2 * v);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Runtime(format!("reverse chain diverged at step {t}")));
        }
    }
    Ok(ActionVector::new(x.row(0).iter().map(|v| v.clamp(-1.0, 1.0)).collect())?)
}

/// Projected contracts of a trained PPO policy (deterministic mean actions).
pub fn ppo_contracts(
    env: &Environment,
    policy: &GaussianPolicyNet,
    eval: &EvalSet,
) -> CliResult<Vec<Contract>> {
    let actions = policy.deterministic_actions(&eval.features);
    let mut contracts = Vec::with_capacity(eval.states.len());
    for (i, state) in eval.states.iter().enumerate() {
        let action = ActionVector::new(actions.row(i).to_vec())?;
        let contract = env.decode_action(&action, state)?;
        contracts.push(project_contract(&contract, state.l_max));
    }
    Ok(contracts)
}

/// Oracle contracts per evaluation state.
pub fn oracle_contracts(env: &Environment, states: &[MarketState]) -> CliResult<Vec<Contract>> {
    states
        .iter()
        .map(|s| Ok(closed_form_contract(s, &env.econ)?.contract))
        .collect()
}

pub struct ComparisonInputs<'a> {
    pub env: &'a Environment,
    pub eval: &'a EvalSet,
    pub eval_hash: String,
    pub seed: u64,
    pub denoiser: &'a DenoiserNet,
    pub schedule: &'a NoiseSchedule,
    pub policy: &'a GaussianPolicyNet,
}

pub fn build_comparison(inputs: &ComparisonInputs) -> CliResult<ComparisonReport> {
    let states = &inputs.eval.states;
    let oracle = summarize_contracts(inputs.env, states, &oracle_contracts(inputs.env, states)?)?;
    let gdm = summarize_contracts(
        inputs.env,
        states,
        &gdm_contracts(inputs.env, inputs.denoiser, inputs.schedule, inputs.eval)?,
    )?;
    let ppo = summarize_contracts(
        inputs.env,
        states,
        &ppo_contracts(inputs.env, inputs.policy, inputs.eval)?,
    )?;
    let gdm_to_ppo_ratio = gdm.mean_utility / ppo.mean_utility;
    Ok(ComparisonReport {
        seed: inputs.seed,
        eval_state_hash: inputs.eval_hash.clone(),
        oracle,
        gdm,
        ppo,
        gdm_to_ppo_ratio,
    })
}

/// Curve data for one seed: epoch-aligned test rewards plus the oracle mean
/// as a horizontal reference series.
pub struct Curves {
    pub epochs: Vec<usize>,
    pub gdm: Vec<f64>,
    pub ppo: Vec<f64>,
    pub oracle: f64,
}

impl Curves {
    pub fn from_traces(
        gdm: &TrainingTrace,
        ppo: &TrainingTrace,
        oracle_mean: f64,
    ) -> CliResult<Self> {
        if gdm.len() != ppo.len() {
            return Err(CliError::Usage(format!(
                "trace lengths differ: gdm has {} epochs, ppo has {}",
                gdm.len(),
                ppo.len()
            )));
        }
        Ok(Self {
            epochs: gdm.records.iter().map(|r| r.epoch).collect(),
            gdm: gdm.records.iter().map(|r| r.test_reward).collect(),
            ppo: ppo.records.iter().map(|r| r.test_reward).collect(),
            oracle: oracle_mean,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,gdm_reward,ppo_reward,oracle_reward\n");
        for i in 0..self.epochs.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.epochs[i], self.gdm[i], self.ppo[i], self.oracle
            ));
        }
        out
    }

    /// True when the GDM curve dominates the PPO curve at every epoch.
    pub fn gdm_dominates_pointwise(&self) -> bool {
        self.gdm.iter().zip(&self.ppo).all(|(g, p)| g >= p)
    }

    /// Minimal static line chart.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const MARGIN: f64 = 50.0;
        let all: Vec<f64> = self
            .gdm
            .iter()
            .chain(&self.ppo)
            .copied()
            .chain(std::iter::once(self.oracle))
            .collect();
        let y_min = all.iter().cloned().fold(f64::INFINITY, f64::min);
        let y_max = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let y_span = (y_max - y_min).max(1e-9);
        let x_max = self.epochs.last().copied().unwrap_or(1).max(1) as f64;

        let x_of = |e: f64| MARGIN + (W - 2.0 * MARGIN) * e / x_max;
        let y_of = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * (v - y_min) / y_span;
        let polyline = |values: &[f64], color: &str| {
            let points: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{:.1},{:.1}", x_of(self.epochs[i] as f64), y_of(*v)))
                .collect();
            format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                points.join(" ")
            )
        };

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        svg.push_str(&format!(
            "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
            m = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN,
            t = MARGIN
        ));
        if !self.epochs.is_empty() {
            let oracle_line = vec![self.oracle; self.epochs.len()];
            svg.push_str(&polyline(&oracle_line, "#444444"));
            svg.push_str(&polyline(&self.gdm, "#d62728"));
            svg.push_str(&polyline(&self.ppo, "#1f77b4"));
        }
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"20\" font-size=\"12\">test reward per epoch (red: gdm, blue: ppo, grey: oracle)</text>\n",
            x = MARGIN
        ));
        svg.push_str(&format!(
            "<text x=\"10\" y=\"{y}\" font-size=\"10\">{lo:.0}..{hi:.0}</text>\n",
            y = H / 2.0,
            lo = y_min,
            hi = y_max
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-size=\"10\">epoch 0..{e}</text>\n",
            x = W / 2.0 - 30.0,
            y = H - 15.0,
            e = self.epochs.last().copied().unwrap_or(0)
        ));
        svg.push_str("</svg>\n");
        svg
    }
}

fn contract_rows(items: &[(f64, f64)]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(n, (inv, r))| format!("| type {} | {:.6} | {:.6} |\n", n + 1, inv, r))
        .collect()
}

/// Renders `report.md`: the ratio table, example contracts, and the curve
/// ordering summary. `per_seed_finals` lists (seed, gdm final, ppo final).
pub fn render_markdown(
    report: &ComparisonReport,
    curves: &Curves,
    per_seed_finals: &[(u64, f64, f64)],
) -> String {
    let mut md = String::new();
    md.push_str("# Contract design comparison\n\n");
    md.push_str(&format!(
        "Held-out evaluation states: `{}` (seed {}).\n\n",
        report.eval_state_hash, report.seed
    ));

    md.push_str("## Expected server utility on held-out states\n\n");
    md.push_str("| method | mean | std | feasibility | vs oracle |\n");
    md.push_str("|--------|------|-----|-------------|-----------|\n");
    for (name, s) in [
        ("oracle", &report.oracle),
        ("gdm", &report.gdm),
        ("ppo", &report.ppo),
    ] {
        md.push_str(&format!(
            "| {name} | {:.4} | {:.4} | {:.2} | {:.4} |\n",
            s.mean_utility,
            s.std_utility,
            s.feasibility_rate,
            s.mean_utility / report.oracle.mean_utility
        ));
    }
    md.push_str(&format!(
        "\nGDM-to-PPO utility ratio: **{:.4}**\n\n",
        report.gdm_to_ppo_ratio
    ));

    md.push_str("## Example contracts on the reference state\n\n");
    for (name, s) in [
        ("Oracle", &report.oracle),
        ("GDM", &report.gdm),
        ("PPO", &report.ppo),
    ] {
        md.push_str(&format!("### {name}\n\n| item | inv_latency | reward |\n|------|-------------|--------|\n"));
        md.push_str(&contract_rows(&s.example_contract));
        md.push('\n');
    }

    md.push_str("## Curve ordering\n\n");
    md.push_str(&format!(
        "GDM dominates PPO pointwise across epochs: **{}**.\n\n",
        if curves.gdm_dominates_pointwise() { "yes" } else { "no" }
    ));

    if !per_seed_finals.is_empty() {
        md.push_str("## Final test reward per seed\n\n");
        md.push_str("| seed | gdm | ppo | gdm >= ppo |\n|------|-----|-----|------------|\n");
        for (seed, g, p) in per_seed_finals {
            md.push_str(&format!(
                "| {seed} | {g:.4} | {p:.4} | {} |\n",
                if g >= p { "yes" } else { "no" }
            ));
        }
        md.push('\n');
    }
    md
}
