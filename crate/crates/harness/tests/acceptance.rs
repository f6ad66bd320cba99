//! Acceptance suite: one PASS/FAIL line per criterion, each with its measured value, pinned
//! tolerance and runtime. Run with `cargo test -p mnpo-harness --test acceptance -- --nocapture`.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use mnpo_core::equilibrium::dual_gap_two_player;
use mnpo_core::instances::{ResponseSpace, RewardTable, TabularPolicy};
use mnpo_core::losses::{
    compile_l_t, compile_td_mnpo, loss_l_t, loss_l_t_prime, loss_l_t_prime_with_target,
    matched_prime_target, minimize_loss, preset, LossConfig, PairSource, PolicyLogits, PresetName,
    PresetParams,
};
use mnpo_core::objectives::{
    closed_form_multi_teacher_optimum, multi_teacher_objective, multiplayer_objective,
    two_player_objective, Aggregator,
};
use mnpo_core::random::{
    random_bt_instance, random_instance, random_policy, random_policy_on_support, random_rewards,
};
use mnpo_core::reward_learning::{fit_pl_reward, generate_rankings, pl_nll, pl_nll_gradient};
use mnpo_core::rng::stream;
use mnpo_core::solvers::{mwu_step, self_play_run, SolverConfig};
use mnpo_core::{Instance, Policy, Rewards};
use mnpo_harness::{compare_presets, run_experiment};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SELF_PLAY_TOL: f64 = 1e-12;
const RPS_GAP_TOL: f64 = 1e-2;
const RPS_LINF_TOL: f64 = 1e-2;
const RPS_RATE_RATIO: f64 = 0.6;
const MINIMIZER_LINF_TOL: f64 = 1e-4;
const MINIMIZER_LOSS_TOL: f64 = 1e-10;
const SURROGATE_SPREAD_TOL: f64 = 1e-9;
const PRESET_TOL: f64 = 1e-12;
const GRADIENT_REL_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-5;
const GAP_CALIBRATION_TOL: f64 = 1e-10;
const OPTIMUM_MARGIN: f64 = 1e-9;
const REWARD_GAP_TOL: f64 = 0.1;
const GAUGE_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rps() -> Instance {
    Instance::rock_paper_scissors(TabularPolicy::new(vec![vec![0.5, 0.3, 0.2]]).unwrap()).unwrap()
}

fn random_logits(inst: &Instance, rng: &mut ChaCha8Rng) -> PolicyLogits<f64> {
    let rows = (0..inst.num_prompts())
        .map(|x| {
            (0..inst.count(x))
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect()
        })
        .collect();
    PolicyLogits::new(inst, rows).unwrap()
}

fn self_play_values() -> Outcome {
    let mut rng = stream(1, "acceptance-self-play");
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let inst: Instance = random_instance(&[3, 4], false, &mut rng);
        let pi: Policy = random_policy(inst.space(), 0.01, &mut rng);
        worst = worst.max((two_player_objective(&pi, &pi, &inst, 0.0).unwrap() - 0.5).abs());
    }
    for n in 2..=4 {
        for _ in 0..10 {
            let inst: Instance = random_bt_instance(&[3, 5], &mut rng);
            let pi: Policy = random_policy(inst.space(), 0.01, &mut rng);
            let opponents = vec![&pi; n - 1];
            let v = multiplayer_objective(&pi, &opponents, &inst, 0.0, Aggregator::plackett_luce())
                .unwrap();
            worst = worst.max((v - 1.0 / n as f64).abs());
        }
    }
    check(
        worst <= SELF_PLAY_TOL,
        format!("max |value - target| = {worst:.3e} (tol {SELF_PLAY_TOL:.0e})"),
    )
}

fn averaged_rps(iterations: usize) -> (f64, Policy) {
    let mut config = SolverConfig::new(2, 0.5, iterations);
    config.metric_stride = iterations;
    let out = self_play_run(&rps(), &config).unwrap();
    (out.log.last().unwrap().gap, out.average)
}

fn equilibrium_convergence() -> Outcome {
    let (gap, average) = averaged_rps(5000);
    let linf = average.linf_distance(&TabularPolicy::uniform(rps().space()));
    let mut ratios = Vec::new();
    for t in [250, 1000] {
        ratios.push(averaged_rps(4 * t).0 / averaged_rps(t).0);
    }
    check(
        gap <= RPS_GAP_TOL && linf <= RPS_LINF_TOL && ratios.iter().all(|r| *r <= RPS_RATE_RATIO),
        format!(
            "gap(5000) = {gap:.3e}, L∞ to uniform = {linf:.3e}, gap(4T)/gap(T) = {:.3}, {:.3} (tol {RPS_GAP_TOL:.0e}, {RPS_LINF_TOL:.0e}, {RPS_RATE_RATIO})",
            ratios[0], ratios[1]
        ),
    )
}

fn update_minimizer() -> Outcome {
    let mut rng = stream(2, "acceptance-minimizer");
    let (mut worst_linf, mut worst_loss): (f64, f64) = (0.0, 0.0);
    for case in 0..5 {
        let k1 = rng.gen_range(2..=5);
        let k2 = rng.gen_range(2..=5);
        let inst: Instance = random_instance(&[k1, k2], false, &mut rng);
        let n = 2 + case % 2;
        let current: Policy = random_policy(inst.space(), 0.3, &mut rng);
        let extra: Policy = random_policy(inst.space(), 0.3, &mut rng);
        let opponents: Vec<&Policy> = if n == 2 {
            vec![&current]
        } else {
            vec![&current, &extra]
        };
        let eta = rng.gen_range(0.3..2.0);
        let closed = mwu_step(&opponents, &inst, eta).unwrap();
        let loss = compile_l_t(&inst, &current, &opponents, eta).unwrap();
        for _ in 0..3 {
            let out = minimize_loss(&loss, &random_logits(&inst, &mut rng), 20_000, 2.0).unwrap();
            worst_linf = worst_linf.max(out.policy.linf_distance(&closed));
            worst_loss = worst_loss.max(out.loss);
        }
    }
    check(
        worst_linf <= MINIMIZER_LINF_TOL && worst_loss <= MINIMIZER_LOSS_TOL,
        format!(
            "max L∞ to closed form = {worst_linf:.3e}, max loss = {worst_loss:.3e} (tol {MINIMIZER_LINF_TOL:.0e}, {MINIMIZER_LOSS_TOL:.0e})"
        ),
    )
}

fn spread(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::MIN, f64::max)
        - values.iter().cloned().fold(f64::MAX, f64::min)
}

fn surrogate_constant() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_verbatim: f64 = 0.0;
    for seed in 0..3u64 {
        let mut rng = stream(seed, "acceptance-surrogate");
        let inst: Instance = random_instance(&[3, 4, 2], false, &mut rng);
        let current: Policy = random_policy(inst.space(), 0.1, &mut rng);
        let opponents = [&current, &current];
        let candidates: Vec<Policy> = (0..10)
            .map(|_| random_policy(inst.space(), 0.05, &mut rng))
            .collect();
        for eta in [0.5, 1.0, 2.0] {
            let diffs: Vec<f64> = candidates
                .iter()
                .map(|pi| {
                    loss_l_t_prime_with_target(
                        pi,
                        &inst,
                        &current,
                        &opponents,
                        matched_prime_target(eta),
                    )
                    .unwrap()
                        - loss_l_t(pi, &inst, &current, &opponents, eta).unwrap()
                })
                .collect();
            worst = worst.max(spread(&diffs));
        }
        let verbatim: Vec<f64> = candidates
            .iter()
            .map(|pi| {
                loss_l_t_prime(pi, &inst, &current, &opponents, 1.0).unwrap()
                    - loss_l_t(pi, &inst, &current, &opponents, 1.0).unwrap()
            })
            .collect();
        worst_verbatim = worst_verbatim.max(spread(&verbatim));
    }
    check(
        worst <= SURROGATE_SPREAD_TOL && worst_verbatim <= SURROGATE_SPREAD_TOL,
        format!(
            "max spread = {worst:.3e} (target η/2, η ∈ {{0.5, 1, 2}}), {worst_verbatim:.3e} (target 1/(2η), η = 1) (tol {SURROGATE_SPREAD_TOL:.0e})"
        ),
    )
}

fn preset_identities() -> Outcome {
    let mut rng = stream(3, "acceptance-presets");
    let inst: Instance = random_instance(&[3, 4, 5], true, &mut rng);
    let mut worst: f64 = 0.0;
    let mut names = Vec::new();
    for (seed, params) in [
        (0, PresetParams::default()),
        (
            1,
            PresetParams {
                eta: 1.7,
                tau: 0.6,
                beta: 1.3,
            },
        ),
    ] {
        for row in compare_presets(&inst, 1000, seed, params).unwrap() {
            worst = worst.max(row.max_abs_deviation);
            if !names.contains(&row.preset) {
                names.push(row.preset);
            }
        }
    }
    check(
        worst <= PRESET_TOL && names.len() == 8,
        format!("{} presets × 1000 draws × 2 settings, max deviation = {worst:.3e} (tol {PRESET_TOL:.0e})", names.len()),
    )
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    diff / scale.max(1e-8)
}

fn loss_gradient_error(rng: &mut ChaCha8Rng, case: usize) -> f64 {
    let inst: Instance = random_instance(&[rng.gen_range(2..5), rng.gen_range(2..5)], true, rng);
    let history: Vec<Policy> = (0..2)
        .map(|_| random_policy(inst.space(), 0.05, rng))
        .collect();
    let eta = rng.gen_range(0.5..2.0);
    let params = PresetParams {
        eta,
        tau: rng.gen_range(0.1..eta),
        beta: rng.gen_range(0.2..2.0),
    };
    let config: LossConfig<f64> = preset(PresetName::ALL[case % 8], params).unwrap();
    let loss = compile_td_mnpo(&inst, &history, &config, &PairSource::Exact(&history[1])).unwrap();
    let logits = random_logits(&inst, rng);
    let analytic: Vec<f64> = loss
        .gradient(&logits)
        .unwrap()
        .into_iter()
        .flatten()
        .collect();
    let mut numeric = Vec::new();
    for x in 0..inst.num_prompts() {
        for y in 0..inst.count(x) {
            let mut unit: Vec<Vec<f64>> = (0..inst.num_prompts())
                .map(|p| vec![0.0; inst.count(p)])
                .collect();
            unit[x][y] = 1.0;
            let plus = loss.value_logits(&logits.step(&unit, FD_STEP)).unwrap();
            let minus = loss.value_logits(&logits.step(&unit, -FD_STEP)).unwrap();
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

fn nll_gradient_error(rng: &mut ChaCha8Rng) -> f64 {
    let inst: Instance = random_bt_instance(&[4, 5], rng);
    let rewards: Rewards = random_rewards(inst.space(), 2.0, rng);
    let k = rng.gen_range(2..=4);
    let data = generate_rankings(&rewards, &inst, 40, k, rng).unwrap();
    let (_, grad) = pl_nll_gradient(&rewards, &data).unwrap();
    let analytic: Vec<f64> = grad.rows().iter().flatten().copied().collect();
    let mut numeric = Vec::new();
    for x in 0..inst.num_prompts() {
        for y in 0..inst.count(x) {
            let bump = |d: f64| {
                let mut r = rewards.clone();
                r.row_mut(x)[y] += d;
                pl_nll(&r, &data).unwrap()
            };
            numeric.push((bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

fn gradient_integrity() -> Outcome {
    let mut rng = stream(4, "acceptance-gradients");
    let loss_err = (0..20)
        .map(|c| loss_gradient_error(&mut rng, c))
        .fold(0.0, f64::max);
    let nll_err = (0..20)
        .map(|_| nll_gradient_error(&mut rng))
        .fold(0.0, f64::max);
    check(
        loss_err <= GRADIENT_REL_TOL && nll_err <= GRADIENT_REL_TOL,
        format!("max relative error: loss {loss_err:.3e}, PL NLL {nll_err:.3e} (tol {GRADIENT_REL_TOL:.0e})"),
    )
}

fn gap_calibration() -> Outcome {
    let inst = rps();
    let uniform = dual_gap_two_player(&TabularPolicy::uniform(inst.space()), &inst, 0.0).unwrap();
    let point = TabularPolicy::point_masses(&ResponseSpace::with_counts(&[3]), &[0]).unwrap();
    let point = dual_gap_two_player(&point, &inst, 0.0).unwrap();
    check(
        uniform.abs() <= GAP_CALIBRATION_TOL && (point - 1.0).abs() <= GAP_CALIBRATION_TOL,
        format!("gap(uniform) = {uniform:.3e}, gap(point mass) = {point:.12} (tol {GAP_CALIBRATION_TOL:.0e})"),
    )
}

fn teacher_optimum() -> Outcome {
    let mut rng = stream(5, "acceptance-teachers");
    let mut smallest_margin = f64::INFINITY;
    for _ in 0..5 {
        let inst: Instance = random_instance(&[3, 4], true, &mut rng);
        let rewards = inst.reward().unwrap().clone();
        let teachers: Vec<Policy> = (0..2)
            .map(|_| random_policy(inst.space(), 0.05, &mut rng))
            .collect();
        let teacher_refs: Vec<&Policy> = teachers.iter().collect();
        let tau0 = rng.gen_range(0.1..1.0);
        let taus = [rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)];
        let objective = |p: &Policy| {
            multi_teacher_objective(
                p,
                &rewards,
                inst.reference(),
                &teacher_refs,
                tau0,
                &taus,
                &inst,
            )
            .unwrap()
        };
        let optimum = closed_form_multi_teacher_optimum(
            &rewards,
            inst.reference(),
            &teacher_refs,
            tau0,
            &taus,
            &inst,
        )
        .unwrap();
        let best = objective(&optimum);
        for _ in 0..100 {
            let other = random_policy_on_support(inst.reference(), 0.01, &mut rng);
            smallest_margin = smallest_margin.min(best - objective(&other));
        }
    }
    check(
        smallest_margin >= OPTIMUM_MARGIN,
        format!("smallest margin over 500 random policies = {smallest_margin:.3e} (min {OPTIMUM_MARGIN:.0e})"),
    )
}

fn reward_recovery() -> Outcome {
    let space = ResponseSpace::with_counts(&[3]);
    let truth = RewardTable::new(vec![vec![0.5, -0.5, 0.0]]).unwrap();
    let inst =
        Instance::bradley_terry(space.clone(), TabularPolicy::uniform(&space), truth.clone())
            .unwrap();
    let data = generate_rankings(
        &truth,
        &inst,
        10_000,
        3,
        &mut stream(6, "acceptance-rankings"),
    )
    .unwrap();
    let fit = fit_pl_reward(&data, &inst, &RewardTable::zeros(&space), 5_000, 2.0).unwrap();
    let gap = fit.rewards.get(0, 0) - fit.rewards.get(0, 1);
    let base = pl_nll(&truth, &data).unwrap();
    let gauge = (pl_nll(&truth.shifted(&[7.25]), &data).unwrap() - base).abs();
    check(
        (gap - 1.0).abs() <= REWARD_GAP_TOL && gauge <= GAUGE_TOL,
        format!("fitted gap = {gap:.4} (1 ± {REWARD_GAP_TOL}), gauge shift change = {gauge:.3e} (tol {GAUGE_TOL:.0e})"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let instance = Path::new(env!("CARGO_MANIFEST_DIR")).join("instances/rps.toml");
    let mut contents = Vec::new();
    for run in 0..2 {
        let config = dir.path().join(format!("run{run}.toml"));
        fs::write(
            &config,
            format!(
                "mode = \"selfplay\"\ninstance = {:?}\noutput_dir = \"out{run}\"\nseed = 11\nn_players = 3\neta = 0.4\ntau = 0.1\niterations = 1000\nmetric_stride = 10\n",
                instance.display().to_string()
            ),
        )
        .unwrap();
        let out = run_experiment(&config).unwrap();
        let csv = out
            .files
            .iter()
            .find(|f| f.ends_with("run_log.csv"))
            .unwrap();
        contents.push(fs::read(csv).unwrap());
    }
    check(
        contents[0] == contents[1] && !contents[0].is_empty(),
        format!(
            "two runs wrote {} and {} bytes, identical = {}",
            contents[0].len(),
            contents[1].len(),
            contents[0] == contents[1]
        ),
    )
}

#[test]
fn acceptance_suite() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (
            "self-play value identities",
            Duration::from_secs(1),
            self_play_values,
        ),
        (
            "equilibrium convergence on RPS",
            Duration::from_secs(10),
            equilibrium_convergence,
        ),
        (
            "update-regression minimizer",
            Duration::from_secs(30),
            update_minimizer,
        ),
        (
            "surrogate differs by a constant",
            Duration::from_secs(5),
            surrogate_constant,
        ),
        (
            "preset reduction identities",
            Duration::from_secs(5),
            preset_identities,
        ),
        (
            "gradient integrity",
            Duration::from_secs(10),
            gradient_integrity,
        ),
        (
            "duality-gap calibration",
            Duration::from_secs(1),
            gap_calibration,
        ),
        (
            "multi-teacher optimum",
            Duration::from_secs(5),
            teacher_optimum,
        ),
        (
            "PL reward recovery",
            Duration::from_secs(30),
            reward_recovery,
        ),
        ("determinism", Duration::from_secs(10), determinism),
    ];
    let mut failures = Vec::new();
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= *budget;
        println!(
            "[{}] {:>2}. {name}: {} [{:.3}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !pass {
            failures.push(i + 1);
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
