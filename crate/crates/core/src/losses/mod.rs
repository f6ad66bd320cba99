//! The preference-optimization loss family.
//!
//! Every loss here is a weighted sum over labelled response pairs of a distance between a
//! policy-implied margin and a target gap. Pairs come either from an exact enumeration (pairs of
//! distinct responses drawn from a sampling policy, ordered by the oracle) or from an explicit
//! dataset. The margin is linear in the policy logits, which makes analytic gradients cheap.

mod compiled;
pub mod config;
pub mod direct;
mod logits;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

pub use compiled::{
    compile_eo_mnpo, compile_l_t, compile_l_t_prime, compile_td_mnpo, CompiledLoss, PairTerm,
};
pub use config::{preset, LossConfig, OpponentRef, PresetName, PresetParams, TargetGap};
pub use logits::{gradient_norm, minimize_loss, MinimizeOutcome, MinimizeStep, PolicyLogits};

use crate::error::{Error, Result};
use crate::instances::{sample_preference, GameInstance, TabularPolicy};
use crate::scalar::{log_logistic, logistic, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceMetric {
    /// `(a − b)²`.
    Squared,
    /// `KL(Ber(σ(b)) ‖ Ber(σ(a)))`; at `b = +∞` this is `−log σ(a)`.
    BackwardBernoulli,
}

impl DistanceMetric {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Squared => "sq",
            DistanceMetric::BackwardBernoulli => "bwd",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sq" => Some(DistanceMetric::Squared),
            "bwd" => Some(DistanceMetric::BackwardBernoulli),
            _ => None,
        }
    }

    pub fn eval<S: Scalar>(self, a: S, b: S) -> S {
        match self {
            DistanceMetric::Squared => (a - b) * (a - b),
            DistanceMetric::BackwardBernoulli => {
                if b == S::infinity() {
                    return -log_logistic(a);
                }
                if b == S::neg_infinity() {
                    return -log_logistic(-a);
                }
                let p = logistic(b);
                let q = logistic(-b);
                p * (log_logistic(b) - log_logistic(a)) + q * (log_logistic(-b) - log_logistic(-a))
            }
        }
    }

    /// `∂D(a ‖ b) / ∂a`.
    pub fn derivative<S: Scalar>(self, a: S, b: S) -> S {
        match self {
            DistanceMetric::Squared => S::lit(2.0) * (a - b),
            DistanceMetric::BackwardBernoulli => {
                let p = if b == S::infinity() {
                    S::one()
                } else if b == S::neg_infinity() {
                    S::zero()
                } else {
                    logistic(b)
                };
                logistic(a) - p
            }
        }
    }
}

/// One labelled comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreferencePair {
    pub prompt: usize,
    pub winner: usize,
    pub loser: usize,
}

/// Where the pairs of a loss come from.
#[derive(Debug, Clone, Copy)]
pub enum PairSource<'a, S> {
    /// Exact expectation over distinct pairs drawn from this policy, labelled by the oracle.
    Exact(&'a TabularPolicy<S>),
    /// The empirical average over a dataset.
    Sampled(&'a [PreferencePair]),
}

fn log_positive<S: Scalar>(
    policy: &TabularPolicy<S>,
    prompt: usize,
    y: usize,
    context: &'static str,
) -> Result<S> {
    let p = policy.prob(prompt, y);
    if p > S::zero() {
        Ok(p.ln())
    } else {
        Err(Error::ZeroProbability {
            prompt,
            response: y,
            context,
        })
    }
}

/// `log π(y)/π(y′) − (1/(n−1)) Σ_j log π_j(y)/π_j(y′)`.
pub fn h_t<S: Scalar>(
    policy: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
    prompt: usize,
    y: usize,
    y2: usize,
) -> Result<S> {
    if y == y2 {
        return Err(Error::SameResponse(y));
    }
    if opponents.is_empty() {
        return Err(Error::param(
            "opponents",
            "at least one opponent is required",
        ));
    }
    let mut anchor = S::zero();
    for o in opponents {
        anchor += log_positive(o, prompt, y, "opponent policy")?
            - log_positive(o, prompt, y2, "opponent policy")?;
    }
    let own = log_positive(policy, prompt, y, "candidate policy")?
        - log_positive(policy, prompt, y2, "candidate policy")?;
    Ok(own - anchor / S::lit(opponents.len() as f64))
}

/// `log π(y) − Σ_j λ_j log π_j(y)`: the reward implied by a policy relative to weighted opponents.
pub fn implicit_reward<S: Scalar>(
    policy: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
    weights: &[S],
    prompt: usize,
    y: usize,
) -> Result<S> {
    if weights.len() != opponents.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} opponents",
            weights.len(),
            opponents.len()
        )));
    }
    Ok(log_positive(policy, prompt, y, "candidate policy")?
        - compiled::opponent_anchor(opponents, weights, prompt, y)?)
}

/// `D[r(y¹) − r(y²) ‖ target]` for implicit rewards `r`.
pub fn rpo_loss<S: Scalar>(
    metric: DistanceMetric,
    reward_first: S,
    reward_second: S,
    target: S,
) -> S {
    metric.eval(reward_first - reward_second, target)
}

pub fn loss_l_t<S: Scalar>(
    policy: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    current: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
    eta: S,
) -> Result<S> {
    compile_l_t(inst, current, opponents, eta)?.value(policy)
}

/// The surrogate with the constant target `1/(2η)`.
pub fn loss_l_t_prime<S: Scalar>(
    policy: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    current: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
    eta: S,
) -> Result<S> {
    if !(eta > S::zero() && eta.is_finite()) {
        return Err(Error::param("eta", "must be positive and finite"));
    }
    loss_l_t_prime_with_target(
        policy,
        inst,
        current,
        opponents,
        S::one() / (S::lit(2.0) * eta),
    )
}

/// The surrogate with an explicit constant target.
pub fn loss_l_t_prime_with_target<S: Scalar>(
    policy: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    current: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
    target: S,
) -> Result<S> {
    compile_l_t_prime(inst, current, opponents, target)?.value(policy)
}

/// The constant target `η/2` for which the surrogate differs from [`loss_l_t`] by a
/// policy-independent constant when every opponent equals the current policy.
pub fn matched_prime_target<S: Scalar>(eta: S) -> S {
    eta * S::half()
}

pub fn td_mnpo_loss<S: Scalar>(
    policy: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    history: &[TabularPolicy<S>],
    config: &LossConfig<S>,
    source: &PairSource<'_, S>,
) -> Result<S> {
    compile_td_mnpo(inst, history, config, source)?.value(policy)
}

pub fn eo_mnpo_loss<S: Scalar>(
    policy: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    externals: &[&TabularPolicy<S>],
    config: &LossConfig<S>,
    source: &PairSource<'_, S>,
) -> Result<S> {
    compile_eo_mnpo(inst, externals, config, source)?.value(policy)
}

pub fn loss_gradient<S: Scalar>(
    loss: &CompiledLoss<S>,
    logits: &PolicyLogits<S>,
) -> Result<Vec<Vec<S>>> {
    loss.gradient(logits)
}

/// Draws `m` labelled pairs: a prompt from the prompt weights and two distinct responses from
/// `current` (redrawing all three on a tie), then the winner from the oracle.
pub fn sample_preference_pairs<S: Scalar, R: Rng + ?Sized>(
    inst: &GameInstance<S>,
    current: &TabularPolicy<S>,
    m: usize,
    rng: &mut R,
) -> Result<Vec<PreferencePair>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    compiled::exact_pairs(inst, current)?;
    let prompts = WeightedIndex::new(inst.prompt_weights().iter().map(|w| w.as_f64()))
        .map_err(|e| Error::param("prompt_weights", e.to_string()))?;
    let rows: Vec<Option<WeightedIndex<f64>>> = current
        .rows()
        .iter()
        .map(|r| WeightedIndex::new(r.iter().map(|p| p.as_f64())).ok())
        .collect();
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let x = prompts.sample(rng);
        let Some(dist) = &rows[x] else { continue };
        let y = dist.sample(rng);
        let y2 = dist.sample(rng);
        if y == y2 {
            continue;
        }
        let (winner, loser) = sample_preference(inst.preference(), x, y, y2, rng)?;
        out.push(PreferencePair {
            prompt: x,
            winner,
            loser,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{ResponseSpace, RewardTable};
    use crate::solvers::mwu_step;

    fn bt_instance() -> GameInstance<f64> {
        let space = ResponseSpace::with_counts(&[3, 4]);
        let rewards =
            RewardTable::new(vec![vec![0.5, -0.3, 1.2], vec![0.0, 0.7, -1.0, 0.4]]).unwrap();
        let reference =
            TabularPolicy::new(vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        GameInstance::bradley_terry(space, reference, rewards).unwrap()
    }

    #[test]
    fn metric_examples() {
        let sq = DistanceMetric::Squared;
        let bwd = DistanceMetric::BackwardBernoulli;
        assert_eq!(sq.eval(1.5_f64, -0.5), 4.0);
        assert_eq!(sq.eval(-0.5_f64, 1.5), 4.0);
        assert!(bwd.eval(0.7_f64, 0.7).abs() < 1e-16);
        assert!(bwd.eval(0.2_f64, 1.0) > 0.0);
        assert!((bwd.eval(0.2_f64, 1.0) - bwd.eval(1.0, 0.2)).abs() > 1e-3);
        assert!((bwd.eval(0.3_f64, f64::INFINITY) - (1.0 + (-0.3_f64).exp()).ln()).abs() < 1e-15);
        // Bernoulli KL by hand
        let (a, b) = (-0.4_f64, 0.9_f64);
        let (sa, sb) = (1.0 / (1.0 + (-a).exp()), 1.0 / (1.0 + (-b).exp()));
        let kl = sb * (sb / sa).ln() + (1.0 - sb) * ((1.0 - sb) / (1.0 - sa)).ln();
        assert!((bwd.eval(a, b) - kl).abs() < 1e-15);
    }

    #[test]
    fn metric_derivatives_match_differences() {
        for metric in [DistanceMetric::Squared, DistanceMetric::BackwardBernoulli] {
            for &(a, b) in &[(0.3_f64, -1.2_f64), (-2.0, 0.5), (1.0, f64::INFINITY)] {
                if metric == DistanceMetric::Squared && b.is_infinite() {
                    continue;
                }
                let h = 1e-6;
                let fd = (metric.eval(a + h, b) - metric.eval(a - h, b)) / (2.0 * h);
                assert!(
                    (fd - metric.derivative(a, b)).abs() < 1e-8,
                    "{metric:?} {a} {b}"
                );
            }
        }
    }

    #[test]
    fn h_t_examples() {
        let cur = TabularPolicy::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let e = std::f64::consts::E;
        // π(0)/π(1) = e · cur(0)/cur(1)
        let raw = [e * 0.2, 0.3, 0.5];
        let z: f64 = raw.iter().sum();
        let pi = TabularPolicy::new(vec![raw.iter().map(|v| v / z).collect()]).unwrap();
        assert!((h_t(&pi, &[&cur], 0, 0, 1).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(
            h_t(&pi, &[&cur], 0, 0, 2).unwrap(),
            -h_t(&pi, &[&cur], 0, 2, 0).unwrap()
        );

        let a = TabularPolicy::new(vec![vec![0.1, 0.6, 0.3]]).unwrap();
        let g: Vec<f64> = (0..3)
            .map(|y| (cur.prob(0, y) * a.prob(0, y)).sqrt())
            .collect();
        let zg: f64 = g.iter().sum();
        let geo = TabularPolicy::new(vec![g.iter().map(|v| v / zg).collect()]).unwrap();
        for (y, y2) in [(0, 1), (1, 2), (2, 0)] {
            assert!(h_t(&geo, &[&cur, &a], 0, y, y2).unwrap().abs() < 1e-14);
        }

        let zero = TabularPolicy::new(vec![vec![0.0, 0.5, 0.5]]).unwrap();
        assert!(matches!(
            h_t(&zero, &[&cur], 0, 0, 1),
            Err(Error::ZeroProbability { .. })
        ));
        assert_eq!(h_t(&pi, &[&cur], 0, 1, 1), Err(Error::SameResponse(1)));
    }

    #[test]
    fn l_t_vanishes_at_the_update() {
        let inst = bt_instance();
        let cur =
            TabularPolicy::new(vec![vec![0.3, 0.3, 0.4], vec![0.25, 0.25, 0.25, 0.25]]).unwrap();
        let other =
            TabularPolicy::new(vec![vec![0.6, 0.1, 0.3], vec![0.4, 0.3, 0.2, 0.1]]).unwrap();
        let opponents = [&cur, &other];
        let next = mwu_step(&opponents, &inst, 0.8).unwrap();
        assert!(loss_l_t(&next, &inst, &cur, &opponents, 0.8).unwrap() < 1e-18);
        assert!(loss_l_t(&other, &inst, &cur, &opponents, 0.8).unwrap() > 0.0);
        assert_eq!(loss_l_t(&cur, &inst, &cur, &[&cur], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn l_t_prime_target_match_and_eta_check() {
        let space = ResponseSpace::with_counts(&[2]);
        let inst = GameInstance::new(
            vec![1.0],
            space.clone(),
            TabularPolicy::uniform(&space),
            crate::instances::PairwisePreference::indifferent(&space),
            None,
            crate::instances::OracleSpec::Indifferent,
        )
        .unwrap();
        let cur = TabularPolicy::uniform(&space);
        let eta: f64 = 2.0;
        // h(0,1) = 1/(2η) and h(1,0) = -1/(2η): each ordering contributes its own squared error
        let t: f64 = 1.0 / (2.0 * eta);
        let p0 = 1.0 / (1.0 + (-t).exp());
        let pi = TabularPolicy::new(vec![vec![p0, 1.0 - p0]]).unwrap();
        let v = loss_l_t_prime(&pi, &inst, &cur, &[&cur], eta).unwrap();
        // 0.25·0.5·0 (ordered 0,1) + 0.25·0.5·(2t)² (ordered 1,0) + diagonal 2·0.25·0.5·t²
        assert!((v - (0.125 * 4.0 * t * t + 0.25 * t * t)).abs() < 1e-15);
        assert!(matches!(
            loss_l_t_prime(&pi, &inst, &cur, &[&cur], 0.0),
            Err(Error::InvalidParameter { name: "eta", .. })
        ));
    }

    #[test]
    fn zero_weights_reduce_to_plain_log_ratio() {
        let inst = bt_instance();
        let pi = TabularPolicy::new(vec![vec![0.1, 0.7, 0.2], vec![0.3, 0.3, 0.2, 0.2]]).unwrap();
        let cur = inst.reference().clone();
        let config = LossConfig {
            n_players: 2,
            opponents: vec![OpponentRef::Reference],
            weights: vec![0.0],
            eta: 1.0,
            tau: 0.0,
            beta: 1.0,
            metric: DistanceMetric::Squared,
            target: TargetGap::Constant(0.0),
        };
        let value = td_mnpo_loss(
            &pi,
            &inst,
            std::slice::from_ref(&cur),
            &config,
            &PairSource::Exact(&cur),
        )
        .unwrap();
        let mut expected = 0.0;
        let mut total = 0.0;
        for x in 0..2 {
            for y in 0..inst.count(x) {
                for y2 in 0..inst.count(x) {
                    if y == y2 {
                        continue;
                    }
                    let w = 0.5 * cur.prob(x, y) * cur.prob(x, y2);
                    total += w;
                    expected += w
                        * inst.preference().get(x, y, y2)
                        * (pi.prob(x, y).ln() - pi.prob(x, y2).ln()).powi(2);
                }
            }
        }
        assert!((value - 2.0 * expected / total).abs() < 1e-14);
    }

    #[test]
    fn rpo_view_is_the_same_number() {
        let inst = bt_instance();
        let pi = TabularPolicy::new(vec![vec![0.1, 0.7, 0.2], vec![0.3, 0.3, 0.2, 0.2]]).unwrap();
        let cur = TabularPolicy::new(vec![vec![0.4, 0.4, 0.2], vec![0.1, 0.5, 0.2, 0.2]]).unwrap();
        let history = vec![inst.reference().clone(), cur.clone()];
        let config = LossConfig {
            n_players: 3,
            opponents: vec![OpponentRef::Lagged(0), OpponentRef::Lagged(1)],
            weights: vec![0.6, 0.3],
            eta: 0.7,
            tau: 0.0,
            beta: 1.0,
            metric: DistanceMetric::Squared,
            target: TargetGap::Constant(0.35),
        };
        for pair in [
            PreferencePair {
                prompt: 0,
                winner: 2,
                loser: 0,
            },
            PreferencePair {
                prompt: 1,
                winner: 1,
                loser: 3,
            },
        ] {
            let td =
                td_mnpo_loss(&pi, &inst, &history, &config, &PairSource::Sampled(&[pair])).unwrap();
            let opp = [&cur, inst.reference()];
            let r1 = implicit_reward(&pi, &opp, &config.weights, pair.prompt, pair.winner).unwrap();
            let r2 = implicit_reward(&pi, &opp, &config.weights, pair.prompt, pair.loser).unwrap();
            assert_eq!(td, rpo_loss(DistanceMetric::Squared, r1, r2, 0.35));
        }
    }

    #[test]
    fn infinite_target_with_sq_is_rejected() {
        let inst = bt_instance();
        let mut config = preset(PresetName::Ipo, PresetParams::default()).unwrap();
        config.target = TargetGap::Constant(f64::INFINITY);
        let cur = inst.reference().clone();
        assert!(matches!(
            td_mnpo_loss(
                &cur,
                &inst,
                std::slice::from_ref(&cur),
                &config,
                &PairSource::Exact(&cur)
            ),
            Err(Error::InvalidParameter { name: "target", .. })
        ));
    }

    #[test]
    fn eo_weights_must_sum_to_one() {
        let inst = bt_instance();
        let cur = inst.reference().clone();
        let mut config = preset(PresetName::Ipo, PresetParams::default()).unwrap();
        config.weights = vec![0.5, 0.4];
        assert!(matches!(
            eo_mnpo_loss(
                &cur,
                &inst,
                &[&cur, &cur],
                &config,
                &PairSource::Exact(&cur)
            ),
            Err(Error::InvalidParameter {
                name: "weights",
                ..
            })
        ));
    }

    #[test]
    fn sampled_pairs_are_distinct_and_reproducible() {
        let inst = bt_instance();
        let cur = inst.reference().clone();
        let a =
            sample_preference_pairs(&inst, &cur, 500, &mut crate::rng::stream(3, "pairs")).unwrap();
        let b =
            sample_preference_pairs(&inst, &cur, 500, &mut crate::rng::stream(3, "pairs")).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.winner != p.loser));
        assert!(
            sample_preference_pairs(&inst, &cur, 0, &mut crate::rng::stream(3, "pairs"))
                .unwrap()
                .is_empty()
        );
    }
}
