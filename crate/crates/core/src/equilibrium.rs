//! Best responses, the two-player duality gap and multiplayer exploitability.

use crate::error::{Error, Result};
use crate::instances::{GameInstance, TabularPolicy};
use crate::objectives::{
    check_shape, expected_payoff, kl_penalty, multiplayer_objective, one_vs_many_payoffs,
    Aggregator,
};
use crate::scalar::{softmax_in_place, Scalar};

/// Default ε for the ε-approximate Nash check.
pub const DEFAULT_EPSILON: f64 = 1e-2;

/// Pre-clamp values of the gap may dip this far below zero from rounding.
pub const GAP_CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseResult<S> {
    pub policy: TabularPolicy<S>,
    /// Objective attained by `policy`.
    pub value: S,
}

/// Maximizes `Σ_x d0(x) [Σ_y π(y|x) u(x,y) − τ KL(π ‖ π_ref)]` over the reference support.
///
/// With `τ = 0` the maximizer mixes uniformly over the (tolerance-equal) argmax set; with
/// `τ > 0` it is the Gibbs policy `π_ref · exp(u / τ)`, renormalized.
pub fn best_response_to_payoffs<S: Scalar>(
    inst: &GameInstance<S>,
    payoffs: &[Vec<S>],
    tau: S,
) -> Result<BestResponseResult<S>> {
    if tau < S::zero() || !tau.is_finite() {
        return Err(Error::param(
            "tau",
            format!("must be finite and non-negative, got {tau}"),
        ));
    }
    let reference = inst.reference();
    let mut rows = Vec::with_capacity(inst.num_prompts());
    for (x, u) in payoffs.iter().enumerate() {
        let k = inst.count(x);
        if tau == S::zero() {
            let best = (0..k)
                .filter(|&y| inst.in_support(x, y))
                .map(|y| u[y])
                .fold(S::neg_infinity(), S::max);
            if best == S::neg_infinity() {
                return Err(Error::EmptySupport { prompt: x });
            }
            let tol = S::normalization_tol() * (S::one() + best.abs());
            let ties: Vec<usize> = (0..k)
                .filter(|&y| inst.in_support(x, y) && u[y] >= best - tol)
                .collect();
            let mass = S::one() / S::lit(ties.len() as f64);
            let mut row = vec![S::zero(); k];
            for y in ties {
                row[y] = mass;
            }
            rows.push(row);
        } else {
            let mut logw: Vec<S> = (0..k)
                .map(|y| {
                    let r = reference.prob(x, y);
                    if r > S::zero() {
                        r.ln() + u[y] / tau
                    } else {
                        S::neg_infinity()
                    }
                })
                .collect();
            softmax_in_place(&mut logw).ok_or(Error::EmptySupport { prompt: x })?;
            rows.push(logw);
        }
    }
    let policy = TabularPolicy::from_rows_unchecked(rows);
    let value = expected_payoff(inst, &policy, payoffs) - kl_penalty(inst, &policy, tau)?;
    Ok(BestResponseResult { policy, value })
}

/// Best response against the opponents when there is no KL regularization.
pub fn best_response_unregularized<S: Scalar>(
    inst: &GameInstance<S>,
    opponents: &[&TabularPolicy<S>],
    agg: Aggregator,
) -> Result<BestResponseResult<S>> {
    let payoffs = one_vs_many_payoffs(inst, opponents, agg)?;
    best_response_to_payoffs(inst, &payoffs, S::zero())
}

/// KL-regularized best response `π ∝ π_ref · exp(W / τ)`, `W` the expected one-vs-many win rate.
pub fn best_response_kl<S: Scalar>(
    inst: &GameInstance<S>,
    opponents: &[&TabularPolicy<S>],
    tau: S,
    agg: Aggregator,
) -> Result<BestResponseResult<S>> {
    if tau <= S::zero() {
        return Err(Error::param(
            "tau",
            "the regularized best response needs tau > 0",
        ));
    }
    let payoffs = one_vs_many_payoffs(inst, opponents, agg)?;
    best_response_to_payoffs(inst, &payoffs, tau)
}

/// Best response for whichever regime `tau` selects.
pub fn best_response<S: Scalar>(
    inst: &GameInstance<S>,
    opponents: &[&TabularPolicy<S>],
    tau: S,
    agg: Aggregator,
) -> Result<BestResponseResult<S>> {
    let payoffs = one_vs_many_payoffs(inst, opponents, agg)?;
    best_response_to_payoffs(inst, &payoffs, tau)
}

/// `max_{π1} J(π1, π) − min_{π2} J(π, π2)` before clamping.
pub fn dual_gap_two_player_unclamped<S: Scalar>(
    policy: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    tau: S,
) -> Result<S> {
    check_shape(inst, policy, "policy")?;
    let pref = inst.preference();
    let own_kl = kl_penalty(inst, policy, tau)?;

    // max player: payoff of y1 is P(y1 ≻ π)
    let win: Vec<Vec<S>> = (0..inst.num_prompts())
        .map(|x| {
            (0..inst.count(x))
                .map(|y| crate::objectives::win_rate_vs_policy(pref, x, y, policy))
                .collect()
        })
        .collect();
    let max_term = best_response_to_payoffs(inst, &win, tau)?.value + own_kl;

    // min player: minimizes E_{y~π} M[y][y2] + τ KL(π2), i.e. maximizes its negation
    let loss: Vec<Vec<S>> = (0..inst.num_prompts())
        .map(|x| {
            (0..inst.count(x))
                .map(|y2| {
                    -policy
                        .support(x)
                        .map(|y| policy.prob(x, y) * pref.get(x, y, y2))
                        .sum::<S>()
                })
                .collect()
        })
        .collect();
    let min_term = -best_response_to_payoffs(inst, &loss, tau)?.value - own_kl;

    Ok(max_term - min_term)
}

/// Two-player duality gap, clamped at zero. Pre-clamp values below `-GAP_CLAMP_TOL` are an error.
pub fn dual_gap_two_player<S: Scalar>(
    policy: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    tau: S,
) -> Result<S> {
    clamp_gap(dual_gap_two_player_unclamped(policy, inst, tau)?)
}

fn clamp_gap<S: Scalar>(raw: S) -> Result<S> {
    if raw < -S::lit(GAP_CLAMP_TOL) || raw.is_nan() {
        return Err(Error::param(
            "gap",
            format!("negative gap {raw} beyond rounding tolerance"),
        ));
    }
    Ok(raw.max(S::zero()))
}

/// Unilateral-deviation exploitability of the symmetric profile where all `n` players use `π`:
/// `max_{π'} J(π', {π}^{n-1}) − J(π, {π}^{n-1})`.
pub fn exploitability_multiplayer<S: Scalar>(
    policy: &TabularPolicy<S>,
    n: usize,
    inst: &GameInstance<S>,
    tau: S,
    agg: Aggregator,
) -> Result<S> {
    if n < 2 {
        return Err(Error::param(
            "n",
            format!("needs at least 2 players, got {n}"),
        ));
    }
    check_shape(inst, policy, "policy")?;
    let opponents = vec![policy; n - 1];
    let payoffs = one_vs_many_payoffs(inst, &opponents, agg)?;
    let best = best_response_to_payoffs(inst, &payoffs, tau)?.value;
    let current = multiplayer_objective(policy, &opponents, inst, tau, agg)?;
    clamp_gap(best - current)
}

/// `gap ≤ ε`.
pub fn is_epsilon_nash<S: Scalar>(gap: S, epsilon: S) -> bool {
    gap <= epsilon
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{OracleSpec, PairwisePreference, ResponseSpace};
    use crate::objectives::{two_player_objective, win_rate_vs_policy};

    fn rps() -> GameInstance<f64> {
        GameInstance::rock_paper_scissors(TabularPolicy::new(vec![vec![1.0 / 3.0; 3]]).unwrap())
            .unwrap()
    }

    fn pm(inst: &GameInstance<f64>, y: usize) -> TabularPolicy<f64> {
        TabularPolicy::point_masses(inst.space(), &[y]).unwrap()
    }

    #[test]
    fn unregularized_br_examples() {
        let inst = rps();
        // response 2 beats response 0
        let br = best_response_unregularized(&inst, &[&pm(&inst, 0)], Aggregator::mean_pairwise())
            .unwrap();
        assert_eq!(br.policy, pm(&inst, 2));
        assert_eq!(br.value, 1.0);

        let u = TabularPolicy::uniform(inst.space());
        let br = best_response_unregularized(&inst, &[&u], Aggregator::mean_pairwise()).unwrap();
        assert!(br.policy.linf_distance(&u) < 1e-15);
        assert!((br.value - 0.5).abs() < 1e-15);

        let space = ResponseSpace::with_counts(&[3]);
        let indiff = GameInstance::new(
            vec![1.0],
            space.clone(),
            TabularPolicy::uniform(&space),
            PairwisePreference::indifferent(&space),
            None,
            OracleSpec::Indifferent,
        )
        .unwrap();
        let br =
            best_response_unregularized(&indiff, &[&pm(&indiff, 1)], Aggregator::mean_pairwise())
                .unwrap();
        assert_eq!(br.value, 0.5);
    }

    #[test]
    fn kl_br_limits() {
        let inst = GameInstance::rock_paper_scissors(
            TabularPolicy::new(vec![vec![0.5, 0.3, 0.2]]).unwrap(),
        )
        .unwrap();
        let opp = TabularPolicy::new(vec![vec![0.6, 0.3, 0.1]]).unwrap();
        let agg = Aggregator::mean_pairwise();
        let wide = best_response_kl(&inst, &[&opp], 1e6, agg).unwrap();
        assert!(wide.policy.max_total_variation(inst.reference()) < 1e-5);

        let narrow = best_response_kl(&inst, &[&opp], 1e-6, agg).unwrap();
        let hard = best_response_unregularized(&inst, &[&opp], agg).unwrap();
        assert!(narrow.policy.linf_distance(&hard.policy) < 1e-3);

        assert!(best_response_kl(&inst, &[&opp], 0.0, agg).is_err());
    }

    #[test]
    fn dual_gap_examples() {
        let inst = rps();
        let u = TabularPolicy::uniform(inst.space());
        assert!(dual_gap_two_player(&u, &inst, 0.0).unwrap().abs() < 1e-12);

        // brute force over pure responses for both extrema
        let p = pm(&inst, 0);
        let max = (0..3)
            .map(|y| two_player_objective(&pm(&inst, y), &p, &inst, 0.0).unwrap())
            .fold(f64::MIN, f64::max);
        let min = (0..3)
            .map(|y| two_player_objective(&p, &pm(&inst, y), &inst, 0.0).unwrap())
            .fold(f64::MAX, f64::min);
        assert_eq!((max, min), (1.0, 0.0));
        assert!((dual_gap_two_player(&p, &inst, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exploitability_three_player_point_mass() {
        let inst = rps();
        let p = pm(&inst, 0);
        // brute-force oracle: best pure deviation against two copies of the point mass,
        // minus the incumbent's self-play value
        let m = inst.preference();
        let best_dev = (0..3)
            .map(|y| (m.get(0, y, 0) + m.get(0, y, 0)) / 2.0)
            .fold(f64::MIN, f64::max);
        let incumbent = (m.get(0, 0, 0) + m.get(0, 0, 0)) / 2.0;
        assert_eq!(best_dev - incumbent, 0.5);
        let e = exploitability_multiplayer(&p, 3, &inst, 0.0, Aggregator::mean_pairwise()).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exploitability_zero_at_uniform_cyclic() {
        let space = ResponseSpace::with_counts(&[5, 4]);
        let inst =
            GameInstance::cyclic(space.clone(), TabularPolicy::uniform(&space), 0.8).unwrap();
        let u = TabularPolicy::uniform(&space);
        for n in 2..=4 {
            let e =
                exploitability_multiplayer(&u, n, &inst, 0.0, Aggregator::mean_pairwise()).unwrap();
            assert!(e < 1e-12, "n={n}: {e}");
        }
    }

    #[test]
    fn two_player_exploitability_relation() {
        let inst = rps();
        let p = TabularPolicy::new(vec![vec![0.2, 0.5, 0.3]]).unwrap();
        let e = exploitability_multiplayer(&p, 2, &inst, 0.0, Aggregator::mean_pairwise()).unwrap();
        let best = (0..3)
            .map(|y| win_rate_vs_policy(inst.preference(), 0, y, &p))
            .fold(f64::MIN, f64::max);
        assert!((e - (best - 0.5)).abs() < 1e-15);
        let gap = dual_gap_two_player(&p, &inst, 0.0).unwrap();
        assert!((gap - 2.0 * e).abs() < 1e-15);
    }

    #[test]
    fn rejects_single_player() {
        let inst = rps();
        let u = TabularPolicy::uniform(inst.space());
        assert!(
            exploitability_multiplayer(&u, 1, &inst, 0.0, Aggregator::mean_pairwise()).is_err()
        );
    }

    #[test]
    fn epsilon_check() {
        assert!(is_epsilon_nash(0.005, DEFAULT_EPSILON));
        assert!(!is_epsilon_nash(0.02, DEFAULT_EPSILON));
    }
}
