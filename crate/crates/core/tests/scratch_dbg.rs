use contract_design::diffusion::*;
use contract_design::econ::EconParams;
use contract_design::env::{Environment, RewardConfig, SamplerConfig};
use contract_design::oracle::closed_form_contract;
use ndarray::Array2;

#[test]
fn dbg_gdm_full_training() {
    let env = Environment::new(
        SamplerConfig::default(),
        EconParams::default(),
        RewardConfig::default(),
    )
    .unwrap();

    let eval_states = env.heldout_states(100).unwrap();
    let oracle_mean: f64 = eval_states
        .iter()
        .map(|s| closed_form_contract(s, &env.econ).unwrap().expected_server)
        .sum::<f64>()
        / 100.0;
    println!("oracle mean = {oracle_mean:.4}");

    let cfg = DiffusionPolicyConfig {
        epochs: 120,
        actor_lr: 1e-4,
        critic_lr: 1e-4,
        seed: 0,
        ..DiffusionPolicyConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (denoiser, critic, trace) = train(&env, &cfg).unwrap();
    println!("120 epochs took {:.1}s", t0.elapsed().as_secs_f64());
    for r in trace.records.iter().step_by(10) {
        println!(
            "epoch {:3}  test {:10.4}  ratio {:.4}  penalized {:14.1}",
            r.epoch, r.test_reward, r.test_reward / oracle_mean, r.test_reward_penalized,
        );
    }
    let last = trace.records.last().unwrap();
    println!("final ratio {:.4}", last.test_reward / oracle_mean);

    // Where does the mode path land, and which way does the critic point?
    let schedule = NoiseSchedule::linear(cfg.t_steps).unwrap();
    let eval = EvalSet::build(&env, 3, cfg.seed).unwrap();
    for i in 0..3 {
        let row = eval.features.row(i).to_owned().insert_axis(ndarray::Axis(0));
        let mut x: Array2<f64> = Array2::zeros((1, 4));
        for t in (1..=schedule.t_steps).rev() {
            let eps = denoiser.predict(&x, t, &row);
            let a = schedule.alpha[t - 1];
            let b = schedule.beta[t - 1];
            let ab = schedule.alpha_bar[t - 1];
            let c1 = 1.0 / a.sqrt();
            let c2 = c1 * b / (1.0 - ab).sqrt();
            x = x.mapv(|v| c1 * v) - eps.mapv(|v| c2 * v);
        }
        let action = x.mapv(|v| v.clamp(-1.0, 1.0));
        let (q, dq) = critic.q_and_action_grad(&row, &action);
        println!(
            "state {i}: raw {:?} q {:.1} dq/da {:?}",
            x.row(0).iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            q[0],
            dq.row(0).iter().map(|v| (v * 10.0).round() / 10.0).collect::<Vec<_>>()
        );
    }
    // Optimal raw action for reference: (-0.971, -0.9135) per type.
}
