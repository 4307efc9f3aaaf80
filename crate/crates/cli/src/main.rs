//! Command-line harness for the contract-design toolkit.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use contract_design::diffusion::{self, EvalSet, NoiseSchedule};
use contract_design::env::EVAL_STREAM_BASE;
use contract_design::econ::MarketState;
use contract_design::oracle::{
    closed_form_contract, grid_search_contract, projected_ascent, GridSpec, OracleSolution,
};
use contract_design::econ::{Contract, ContractItem};
use contract_design::ppo;
use contract_design::trace::TrainingTrace;
use contract_design_cli::checkpoint::{
    eval_state_hash, read_json, write_json, GdmCheckpoint, PpoCheckpoint,
};
use contract_design_cli::config::{ExperimentConfig, Profile};
use contract_design_cli::manifest::Manifest;
use contract_design_cli::report::{
    build_comparison, render_markdown, ComparisonInputs, ComparisonReport, Curves,
};
use contract_design_cli::{CliError, CliResult};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "contract-design", version, about = "Design incentive contracts for an edge sensing market: oracle solvers, a diffusion contract generator, and a PPO baseline.")]
struct Cli {
    /// Path to a TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Learning-rate profile overriding the config file.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Single seed overriding the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root overriding the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleMethod {
    ClosedForm,
    Grid,
    Ascent,
}

#[derive(Subcommand)]
enum Command {
    /// Sample market states to JSON lines (default: the held-out stream).
    SampleStates {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Draw from the training stream instead of the held-out stream.
        #[arg(long)]
        train_stream: bool,
    },
    /// Solve the optimal contract on the reference evaluation state.
    SolveOracle {
        #[arg(long, value_enum, default_value = "closed-form")]
        method: OracleMethod,
        /// Grid resolution per axis when method is `grid`.
        #[arg(long, default_value_t = 2000)]
        grid_points: usize,
    },
    /// Train the diffusion contract generator for every configured seed.
    TrainGdm {
        /// Write measured per-epoch wall time into trace.csv (breaks
        /// byte-level reproducibility of the file).
        #[arg(long)]
        timings: bool,
    },
    /// Train the PPO baseline for every configured seed.
    TrainPpo {
        #[arg(long)]
        timings: bool,
    },
    /// Compare trained checkpoints against the oracle on the held-out states.
    Compare,
    /// Emit curves.csv, contracts.json, report.md, and curves.svg.
    Report,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let profile = cli.profile;
    let cfg = match ExperimentConfig::resolve(
        cli.config.as_deref(),
        profile,
        cli.seed,
        cli.out.as_deref(),
    ) {
        Ok(cfg) => cfg,
        Err(err) => fail(err),
    };
    let result = match cli.command {
        Command::SampleStates { count, train_stream } => {
            cmd_sample_states(&cfg, profile, count, train_stream)
        }
        Command::SolveOracle { method, grid_points } => {
            cmd_solve_oracle(&cfg, profile, method, grid_points)
        }
        Command::TrainGdm { timings } => cmd_train_gdm(&cfg, profile, timings),
        Command::TrainPpo { timings } => cmd_train_ppo(&cfg, profile, timings),
        Command::Compare => cmd_compare(&cfg, profile).map(|_| ()),
        Command::Report => cmd_report(&cfg, profile),
    };
    if let Err(err) = result {
        fail(err);
    }
}

fn fail(err: CliError) -> ! {
    eprintln!("error: {err}");
    std::process::exit(err.exit_code());
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn profile_name(profile: Option<Profile>) -> Option<&'static str> {
    profile.map(|p| p.name())
}

#[derive(Serialize)]
struct StateRecord<'a> {
    seed: u64,
    draw: u64,
    state: &'a MarketState,
}

fn cmd_sample_states(
    cfg: &ExperimentConfig,
    profile: Option<Profile>,
    count: usize,
    train_stream: bool,
) -> CliResult<()> {
    let seed_cfg = cfg.for_seed(cfg.seeds[0]);
    let env = seed_cfg.environment()?;
    ensure_dir(&seed_cfg.output_dir)?;
    let mut lines = String::new();
    for i in 0..count as u64 {
        let draw = if train_stream { i } else { EVAL_STREAM_BASE + i };
        let state = env.sample_state(draw)?;
        let record = StateRecord { seed: seed_cfg.sampler.seed, draw, state: &state };
        lines.push_str(&serde_json::to_string(&record).expect("state serializes"));
        lines.push('\n');
    }
    let path = seed_cfg.output_dir.join("states.jsonl");
    std::fs::write(&path, lines)?;
    Manifest::new("sample-states", &seed_cfg, profile_name(profile))
        .write(&seed_cfg.output_dir.join("states.manifest.json"))?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct OracleOutput<'a> {
    state: &'a MarketState,
    solution: &'a OracleSolution,
}

fn cmd_solve_oracle(
    cfg: &ExperimentConfig,
    profile: Option<Profile>,
    method: OracleMethod,
    grid_points: usize,
) -> CliResult<()> {
    let seed_cfg = cfg.for_seed(cfg.seeds[0]);
    let env = seed_cfg.environment()?;
    let state = env.sample_state(EVAL_STREAM_BASE)?;
    let solution = match method {
        OracleMethod::ClosedForm => closed_form_contract(&state, &env.econ)?,
        OracleMethod::Grid => {
            let grid = GridSpec::new(grid_points, grid_points)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            grid_search_contract(&state, &env.econ, &grid)?
        }
        OracleMethod::Ascent => {
            let init = Contract::uniform(
                ContractItem::new(2.0 / state.l_max, env.econ.r_max / 2.0),
                state.n,
            );
            projected_ascent(&state, &env.econ, &init, 10_000, 1.0)?
        }
    };
    ensure_dir(&seed_cfg.output_dir)?;
    let path = seed_cfg.output_dir.join("oracle.json");
    write_json(&OracleOutput { state: &state, solution: &solution }, &path)?;
    Manifest::new("solve-oracle", &seed_cfg, profile_name(profile))
        .write(&seed_cfg.output_dir.join("oracle.manifest.json"))?;
    println!("{}", serde_json::to_string_pretty(&solution).expect("solution serializes"));
    Ok(())
}

fn run_dir(root: &Path, method: &str, seed: u64) -> PathBuf {
    root.join(method).join(format!("seed-{seed}"))
}

fn cmd_train_gdm(cfg: &ExperimentConfig, profile: Option<Profile>, timings: bool) -> CliResult<()> {
    for &seed in &cfg.seeds {
        let seed_cfg = cfg.for_seed(seed);
        let env = seed_cfg.environment()?;
        let eval_states = env.heldout_states(seed_cfg.gdm.eval_states)?;
        let eval_hash = eval_state_hash(&eval_states);
        log::info!("training gdm seed {seed}");
        let (denoiser, critic, trace) = diffusion::train(&env, &seed_cfg.gdm)?;
        let dir = run_dir(&seed_cfg.output_dir, "gdm", seed);
        ensure_dir(&dir)?;
        std::fs::write(dir.join("trace.csv"), trace.to_csv(timings))?;
        let schedule = NoiseSchedule::linear(seed_cfg.gdm.t_steps)?;
        let ckpt = GdmCheckpoint::new(
            seed_cfg.sampler.n,
            seed,
            &eval_hash,
            &schedule,
            &denoiser,
            &critic,
        );
        write_json(&ckpt, &dir.join("checkpoint.json"))?;
        Manifest::new("train-gdm", &seed_cfg, profile_name(profile))
            .with_eval_hash(&eval_hash)
            .write(&dir.join("manifest.json"))?;
        println!("gdm seed {seed}: final test reward {:?}", trace.final_test_reward());
    }
    Ok(())
}

fn cmd_train_ppo(cfg: &ExperimentConfig, profile: Option<Profile>, timings: bool) -> CliResult<()> {
    for &seed in &cfg.seeds {
        let seed_cfg = cfg.for_seed(seed);
        let env = seed_cfg.environment()?;
        let eval_states = env.heldout_states(seed_cfg.ppo.eval_states)?;
        let eval_hash = eval_state_hash(&eval_states);
        log::info!("training ppo seed {seed}");
        let (policy, value, trace) = ppo::ppo_train(&env, &seed_cfg.ppo)?;
        let dir = run_dir(&seed_cfg.output_dir, "ppo", seed);
        ensure_dir(&dir)?;
        std::fs::write(dir.join("trace.csv"), trace.to_csv(timings))?;
        let ckpt = PpoCheckpoint::new(seed_cfg.sampler.n, seed, &eval_hash, &policy, &value);
        write_json(&ckpt, &dir.join("checkpoint.json"))?;
        Manifest::new("train-ppo", &seed_cfg, profile_name(profile))
            .with_eval_hash(&eval_hash)
            .write(&dir.join("manifest.json"))?;
        println!("ppo seed {seed}: final test reward {:?}", trace.final_test_reward());
    }
    Ok(())
}

/// Loads both checkpoints for a seed, verifying eval-state hashes match the
/// current config before anything is compared.
fn load_run(
    cfg: &ExperimentConfig,
    seed: u64,
) -> CliResult<(GdmCheckpoint, PpoCheckpoint, EvalSet, String)> {
    let seed_cfg = cfg.for_seed(seed);
    let env = seed_cfg.environment()?;
    let eval = EvalSet::build(&env, seed_cfg.gdm.eval_states, seed)?;
    let eval_hash = eval_state_hash(&eval.states);

    let gdm_path = run_dir(&seed_cfg.output_dir, "gdm", seed).join("checkpoint.json");
    let ppo_path = run_dir(&seed_cfg.output_dir, "ppo", seed).join("checkpoint.json");
    let gdm: GdmCheckpoint = read_json(&gdm_path, "checkpoint")?;
    let ppo: PpoCheckpoint = read_json(&ppo_path, "checkpoint")?;

    for (name, hash) in [("gdm", &gdm.eval_state_hash), ("ppo", &ppo.eval_state_hash)] {
        if hash != &eval_hash {
            return Err(CliError::Usage(format!(
                "eval-state mismatch for {name} seed {seed}: checkpoint trained against {hash}, \
                 config yields {eval_hash}"
            )));
        }
    }
    Ok((gdm, ppo, eval, eval_hash))
}

fn cmd_compare(cfg: &ExperimentConfig, profile: Option<Profile>) -> CliResult<ComparisonReport> {
    let seed = cfg.seeds[0];
    let seed_cfg = cfg.for_seed(seed);
    let env = seed_cfg.environment()?;
    let (gdm_ckpt, ppo_ckpt, eval, eval_hash) = load_run(cfg, seed)?;
    let denoiser = gdm_ckpt.denoiser_net()?;
    let policy = ppo_ckpt.policy_net()?;
    let report = build_comparison(&ComparisonInputs {
        env: &env,
        eval: &eval,
        eval_hash: eval_hash.clone(),
        seed,
        denoiser: &denoiser,
        schedule: &gdm_ckpt.schedule,
        policy: &policy,
    })?;
    ensure_dir(&seed_cfg.output_dir)?;
    write_json(&report, &seed_cfg.output_dir.join("comparison.json"))?;
    Manifest::new("compare", &seed_cfg, profile_name(profile))
        .with_eval_hash(&eval_hash)
        .write(&seed_cfg.output_dir.join("comparison.manifest.json"))?;
    println!(
        "gdm {:.4} vs ppo {:.4} (oracle {:.4}); gdm/ppo = {:.4}",
        report.gdm.mean_utility,
        report.ppo.mean_utility,
        report.oracle.mean_utility,
        report.gdm_to_ppo_ratio
    );
    Ok(report)
}

fn read_trace_csv(path: &Path) -> CliResult<TrainingTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("missing trace: cannot read {}: {e}", path.display()))
    })?;
    let mut trace = TrainingTrace::default();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "epoch,test_reward,critic_loss,actor_obj,wall_ms" {
                return Err(CliError::Runtime(format!("unexpected trace header: {line}")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::Runtime(format!("bad trace row: {line}")));
        }
        let parse = |s: &str| -> CliResult<f64> {
            s.parse().map_err(|e| CliError::Runtime(format!("bad trace value {s}: {e}")))
        };
        trace.records.push(contract_design::trace::EpochRecord {
            epoch: fields[0]
                .parse()
                .map_err(|e| CliError::Runtime(format!("bad epoch {}: {e}", fields[0])))?,
            test_reward: parse(fields[1])?,
            critic_loss: parse(fields[2])?,
            actor_obj: parse(fields[3])?,
            wall_ms: fields[4]
                .parse()
                .map_err(|e| CliError::Runtime(format!("bad wall_ms {}: {e}", fields[4])))?,
            test_reward_penalized: f64::NAN,
        });
    }
    Ok(trace)
}

fn cmd_report(cfg: &ExperimentConfig, profile: Option<Profile>) -> CliResult<()> {
    let report = cmd_compare(cfg, profile)?;
    let seed = cfg.seeds[0];
    let seed_cfg = cfg.for_seed(seed);

    let gdm_trace = read_trace_csv(&run_dir(&seed_cfg.output_dir, "gdm", seed).join("trace.csv"))?;
    let ppo_trace = read_trace_csv(&run_dir(&seed_cfg.output_dir, "ppo", seed).join("trace.csv"))?;
    let curves = Curves::from_traces(&gdm_trace, &ppo_trace, report.oracle.mean_utility)?;

    // Final rewards for every seed that has both runs on disk.
    let mut per_seed_finals = Vec::new();
    for &s in &cfg.seeds {
        let g = read_trace_csv(&run_dir(&seed_cfg.output_dir, "gdm", s).join("trace.csv"));
        let p = read_trace_csv(&run_dir(&seed_cfg.output_dir, "ppo", s).join("trace.csv"));
        if let (Ok(g), Ok(p)) = (g, p) {
            if let (Some(gf), Some(pf)) = (g.final_test_reward(), p.final_test_reward()) {
                per_seed_finals.push((s, gf, pf));
            }
        }
    }

    let dir = seed_cfg.output_dir.join("report");
    ensure_dir(&dir)?;
    std::fs::write(dir.join("curves.csv"), curves.to_csv())?;
    std::fs::write(dir.join("curves.svg"), curves.to_svg())?;
    std::fs::write(dir.join("report.md"), render_markdown(&report, &curves, &per_seed_finals))?;

    #[derive(Serialize)]
    struct ContractsOut<'a> {
        seed: u64,
        eval_state_hash: &'a str,
        reference_state: &'a MarketState,
        oracle: &'a [(f64, f64)],
        gdm: &'a [(f64, f64)],
        ppo: &'a [(f64, f64)],
    }
    let seed_env = seed_cfg.environment()?;
    let reference = seed_env.sample_state(EVAL_STREAM_BASE)?;
    write_json(
        &ContractsOut {
            seed,
            eval_state_hash: &report.eval_state_hash,
            reference_state: &reference,
            oracle: &report.oracle.example_contract,
            gdm: &report.gdm.example_contract,
            ppo: &report.ppo.example_contract,
        },
        &dir.join("contracts.json"),
    )?;
    Manifest::new("report", &seed_cfg, profile_name(profile))
        .with_eval_hash(&report.eval_state_hash)
        .write(&dir.join("manifest.json"))?;
    println!("{}", dir.display());
    Ok(())
}
