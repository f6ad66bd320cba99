use approx::assert_abs_diff_eq;
use mnpo_core::equilibrium::{dual_gap_two_player, exploitability_multiplayer};
use mnpo_core::instances::{ResponseSpace, TabularPolicy};
use mnpo_core::objectives::{multiplayer_objective, two_player_objective, Aggregator};
use mnpo_core::random::{random_instance, random_policy};
use mnpo_core::rng::stream;
use mnpo_core::solvers::{mwu_step, self_play_run, SolverConfig};
use mnpo_core::{Instance, Policy};
use proptest::prelude::*;

fn rps() -> Instance {
    Instance::rock_paper_scissors(TabularPolicy::new(vec![vec![0.5, 0.3, 0.2]]).unwrap()).unwrap()
}

fn averaged_gap(inst: &Instance, iterations: usize) -> (f64, Policy) {
    let mut config = SolverConfig::new(2, 0.5, iterations);
    config.metric_stride = iterations;
    let out = self_play_run(inst, &config).unwrap();
    let gap = exploitability_multiplayer(&out.average, 2, inst, 0.0, Aggregator::mean_pairwise())
        .unwrap();
    assert_abs_diff_eq!(out.log.last().unwrap().gap, gap, epsilon = 1e-15);
    (gap, out.average)
}

#[test]
fn self_play_value_is_one_half() {
    let mut rng = stream(31, "self-play");
    for _ in 0..50 {
        let inst: Instance = random_instance(&[2, 4], false, &mut rng);
        let pi: Policy = random_policy(inst.space(), 0.01, &mut rng);
        let v = two_player_objective(&pi, &pi, &inst, 0.0).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12);
    }
}

#[test]
fn identical_players_split_the_plackett_luce_win_evenly() {
    let mut rng = stream(37, "pl-self-play");
    for n in 2..=4 {
        for _ in 0..5 {
            let inst: Instance = mnpo_core::random::random_bt_instance(&[3, 4], &mut rng);
            let pi: Policy = random_policy(inst.space(), 0.05, &mut rng);
            let opponents = vec![&pi; n - 1];
            let v = multiplayer_objective(&pi, &opponents, &inst, 0.0, Aggregator::plackett_luce())
                .unwrap();
            assert_abs_diff_eq!(v, 1.0 / n as f64, epsilon = 1e-12);
        }
    }
}

#[test]
fn averaged_iterate_converges_on_rock_paper_scissors() {
    let inst = rps();
    let (gap, average) = averaged_gap(&inst, 5000);
    assert!(gap <= 1e-2, "gap {gap}");
    let uniform = TabularPolicy::uniform(inst.space());
    assert!(average.linf_distance(&uniform) <= 1e-2);
    for t in [250, 1000] {
        let (early, _) = averaged_gap(&inst, t);
        let (late, _) = averaged_gap(&inst, 4 * t);
        assert!(late <= 0.6 * early, "T={t}: {late} vs {early}");
    }
}

#[test]
fn duality_gap_is_calibrated_on_rock_paper_scissors() {
    let inst = rps();
    let uniform = TabularPolicy::uniform(inst.space());
    assert_abs_diff_eq!(
        dual_gap_two_player(&uniform, &inst, 0.0).unwrap(),
        0.0,
        epsilon = 1e-10
    );
    for choice in 0..3 {
        let point =
            TabularPolicy::point_masses(&ResponseSpace::with_counts(&[3]), &[choice]).unwrap();
        assert_abs_diff_eq!(
            dual_gap_two_player(&point, &inst, 0.0).unwrap(),
            1.0,
            epsilon = 1e-10
        );
    }
}

#[test]
fn repeated_runs_give_identical_logs() {
    let inst = rps();
    let mut config = SolverConfig::new(3, 0.3, 200);
    config.metric_stride = 10;
    config.tau = 0.05;
    let a = self_play_run(&inst, &config).unwrap().log.to_csv(false);
    let b = self_play_run(&inst, &config).unwrap().log.to_csv(false);
    assert_eq!(a, b);
    assert!(a.starts_with("iter,gap,kl_ref,self_play_value,elapsed_ms\n"));
}

proptest! {
    #[test]
    fn mwu_step_stays_on_the_simplex(seed in 0u64..10_000, eta in 0.01f64..3.0, n in 2usize..5) {
        let mut rng = stream(seed, "mwu");
        let inst: Instance = random_instance(&[3, 2], false, &mut rng);
        let opponents: Vec<Policy> = (0..n - 1).map(|_| random_policy(inst.space(), 0.05, &mut rng)).collect();
        let refs: Vec<&Policy> = opponents.iter().collect();
        let next = mwu_step(&refs, &inst, eta).unwrap();
        prop_assert!(inst.check_policy(&next).is_ok());
        for row in next.rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|p| *p > 0.0));
        }
    }
}
