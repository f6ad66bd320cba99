//! Losses reduced to weighted sums of per-pair distance terms.

use super::config::{LossConfig, OpponentRef, TargetGap};
use super::{DistanceMetric, PairSource, PolicyLogits, PreferencePair};
use crate::error::{Error, Result};
use crate::instances::{GameInstance, TabularPolicy};
use crate::objectives::{check_shape, win_rate_vs_policy};
use crate::scalar::Scalar;

/// `weight · D(scale · ((log π(first) − anchor_first) − (log π(second) − anchor_second)) ‖ target)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm<S> {
    pub prompt: usize,
    pub first: usize,
    pub second: usize,
    pub weight: S,
    pub anchor_first: S,
    pub anchor_second: S,
    pub target: S,
}

/// A loss of the form `constant + Σ terms`, evaluated on candidate policies or logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLoss<S> {
    pub metric: DistanceMetric,
    pub scale: S,
    pub terms: Vec<PairTerm<S>>,
    pub constant: S,
}

impl<S: Scalar> CompiledLoss<S> {
    fn margin(&self, log_probs: &[Vec<S>], t: &PairTerm<S>) -> Result<S> {
        let lp = &log_probs[t.prompt];
        for r in [t.first, t.second] {
            if lp[r] == S::neg_infinity() {
                return Err(Error::ZeroProbability {
                    prompt: t.prompt,
                    response: r,
                    context: "candidate policy",
                });
            }
        }
        Ok(self.scale * ((lp[t.first] - t.anchor_first) - (lp[t.second] - t.anchor_second)))
    }

    /// Loss at normalized log-probabilities (`-inf` for zero probability).
    pub fn value_log_probs(&self, log_probs: &[Vec<S>]) -> Result<S> {
        let mut total = self.constant;
        for t in &self.terms {
            total += t.weight * self.metric.eval(self.margin(log_probs, t)?, t.target);
        }
        Ok(total)
    }

    pub fn value(&self, policy: &TabularPolicy<S>) -> Result<S> {
        let log_probs: Vec<Vec<S>> = policy
            .rows()
            .iter()
            .map(|r| r.iter().map(|p| p.ln()).collect())
            .collect();
        self.check_rows(&log_probs)?;
        self.value_log_probs(&log_probs)
    }

    pub fn value_logits(&self, logits: &PolicyLogits<S>) -> Result<S> {
        let log_probs = logits.log_probs();
        self.check_rows(&log_probs)?;
        self.value_log_probs(&log_probs)
    }

    fn check_rows(&self, log_probs: &[Vec<S>]) -> Result<()> {
        for t in &self.terms {
            let k = log_probs.get(t.prompt).map_or(0, Vec::len);
            if t.first >= k || t.second >= k {
                return Err(Error::DimensionMismatch(format!(
                    "pair ({}, {}) at prompt {} is outside the candidate policy",
                    t.first, t.second, t.prompt
                )));
            }
        }
        Ok(())
    }

    /// Gradient with respect to the logits. Because `∂(log π(a) − log π(b))/∂θ = e_a − e_b`
    /// under the softmax, each term touches two coordinates only.
    pub fn gradient(&self, logits: &PolicyLogits<S>) -> Result<Vec<Vec<S>>> {
        let log_probs = logits.log_probs();
        self.check_rows(&log_probs)?;
        let mut grad: Vec<Vec<S>> = log_probs.iter().map(|r| vec![S::zero(); r.len()]).collect();
        for t in &self.terms {
            let m = self.margin(&log_probs, t)?;
            let g = t.weight * self.metric.derivative(m, t.target) * self.scale;
            grad[t.prompt][t.first] += g;
            grad[t.prompt][t.second] -= g;
        }
        Ok(grad)
    }
}

fn log_prob_at<S: Scalar>(
    policy: &TabularPolicy<S>,
    prompt: usize,
    response: usize,
    context: &'static str,
) -> Result<S> {
    let p = policy.prob(prompt, response);
    if p > S::zero() {
        Ok(p.ln())
    } else {
        Err(Error::ZeroProbability {
            prompt,
            response,
            context,
        })
    }
}

/// `Σ_j w_j log π_j(y)`, skipping zero weights.
pub(crate) fn opponent_anchor<S: Scalar>(
    opponents: &[&TabularPolicy<S>],
    weights: &[S],
    prompt: usize,
    y: usize,
) -> Result<S> {
    let mut total = S::zero();
    for (o, &w) in opponents.iter().zip(weights) {
        if w != S::zero() {
            total += w * log_prob_at(o, prompt, y, "opponent policy")?;
        }
    }
    Ok(total)
}

/// Ordered pairs `(winner, loser, weight)` of the Bernoulli-labelled pair distribution: `y ≠ y′`
/// drawn from `current`, labelled by the oracle. Weights are normalized to sum to one.
pub(crate) fn exact_pairs<S: Scalar>(
    inst: &GameInstance<S>,
    current: &TabularPolicy<S>,
) -> Result<Vec<(usize, usize, usize, S)>> {
    check_shape(inst, current, "current policy")?;
    let mut pairs = Vec::new();
    let mut total = S::zero();
    for x in 0..inst.num_prompts() {
        let d = inst.prompt_weight(x);
        for y in current.support(x) {
            for y2 in current.support(x) {
                if y == y2 {
                    continue;
                }
                let mass = d * current.prob(x, y) * current.prob(x, y2);
                total += mass;
                let w = mass * inst.preference().get(x, y, y2);
                if w > S::zero() {
                    pairs.push((x, y, y2, w));
                }
            }
        }
    }
    if total <= S::zero() {
        return Err(Error::param(
            "current",
            "the pair distribution has no pair of distinct responses",
        ));
    }
    // each unordered pair appears twice with preference weights summing to one
    let half_total = total * S::half();
    for p in &mut pairs {
        p.3 /= half_total;
    }
    Ok(pairs)
}

fn source_pairs<S: Scalar>(
    inst: &GameInstance<S>,
    source: &PairSource<'_, S>,
) -> Result<Vec<(usize, usize, usize, S)>> {
    match source {
        PairSource::Exact(current) => exact_pairs(inst, current),
        PairSource::Sampled(data) => {
            if data.is_empty() {
                return Err(Error::param("data", "the preference dataset is empty"));
            }
            let w = S::one() / S::lit(data.len() as f64);
            data.iter()
                .map(
                    |&PreferencePair {
                         prompt,
                         winner,
                         loser,
                     }| {
                        inst.check_prompt_response(prompt, winner)?;
                        inst.check_prompt_response(prompt, loser)?;
                        if winner == loser {
                            return Err(Error::SameResponse(winner));
                        }
                        Ok((prompt, winner, loser, w))
                    },
                )
                .collect()
        }
    }
}

fn resolve_target<S: Scalar>(
    target: TargetGap<S>,
    eta: S,
    inst: &GameInstance<S>,
    current: Option<&TabularPolicy<S>>,
    prompt: usize,
    winner: usize,
    loser: usize,
) -> Result<S> {
    match target {
        TargetGap::Constant(c) => Ok(c),
        TargetGap::RewardGap { scale } => {
            let r = inst.reward().ok_or(Error::MissingRewards(
                "a reward-gap target reads the instance's reward table",
            ))?;
            Ok(scale * (r.get(prompt, winner) - r.get(prompt, loser)))
        }
        TargetGap::WinRateGap => {
            let current = current.ok_or_else(|| {
                Error::param("target", "a win-rate target needs a policy history")
            })?;
            let pref = inst.preference();
            Ok(eta
                * (win_rate_vs_policy(pref, prompt, winner, current)
                    - win_rate_vs_policy(pref, prompt, loser, current)))
        }
    }
}

fn resolve_opponent<'a, S: Scalar>(
    inst: &'a GameInstance<S>,
    history: &'a [TabularPolicy<S>],
    opponent: OpponentRef,
) -> Result<&'a TabularPolicy<S>> {
    match opponent {
        OpponentRef::Reference => Ok(inst.reference()),
        OpponentRef::Lagged(j) => {
            if j < history.len() {
                Ok(&history[history.len() - 1 - j])
            } else {
                Err(Error::param(
                    "opponents",
                    format!(
                        "lag {j} needs at least {} policies of history, got {}",
                        j + 1,
                        history.len()
                    ),
                ))
            }
        }
    }
}

/// Time-dependent loss: margin `log π(y_w)/π(y_l) − Σ_j λ_j log π_{t−j}(y_w)/π_{t−j}(y_l)`.
/// `history` ends with the current policy `π_t`.
pub fn compile_td_mnpo<S: Scalar>(
    inst: &GameInstance<S>,
    history: &[TabularPolicy<S>],
    config: &LossConfig<S>,
    source: &PairSource<'_, S>,
) -> Result<CompiledLoss<S>> {
    config.validate()?;
    for p in history {
        check_shape(inst, p, "history policy")?;
    }
    let opponents: Vec<&TabularPolicy<S>> = config
        .opponents
        .iter()
        .map(|&o| resolve_opponent(inst, history, o))
        .collect::<Result<_>>()?;
    let current = history.last();
    let mut terms = Vec::new();
    for (prompt, winner, loser, weight) in source_pairs(inst, source)? {
        terms.push(PairTerm {
            prompt,
            first: winner,
            second: loser,
            weight,
            anchor_first: opponent_anchor(&opponents, &config.weights, prompt, winner)?,
            anchor_second: opponent_anchor(&opponents, &config.weights, prompt, loser)?,
            target: resolve_target(
                config.target,
                config.eta,
                inst,
                current,
                prompt,
                winner,
                loser,
            )?,
        });
    }
    Ok(CompiledLoss {
        metric: config.metric,
        scale: config.margin_scale(),
        terms,
        constant: S::zero(),
    })
}

/// External-opponent loss: margin `Σ_j λ_j (log π(y)/π_j(y) − log π(y′)/π_j(y′))` with `Σ λ_j = 1`.
/// The configuration's opponent list is ignored; `externals` pair up with its weights.
pub fn compile_eo_mnpo<S: Scalar>(
    inst: &GameInstance<S>,
    externals: &[&TabularPolicy<S>],
    config: &LossConfig<S>,
    source: &PairSource<'_, S>,
) -> Result<CompiledLoss<S>> {
    if externals.is_empty() {
        return Err(Error::param(
            "externals",
            "at least one external policy is required",
        ));
    }
    if config.weights.len() != externals.len() {
        return Err(Error::param(
            "weights",
            format!(
                "expected {} weights, got {}",
                externals.len(),
                config.weights.len()
            ),
        ));
    }
    let as_td = LossConfig {
        n_players: externals.len() + 1,
        opponents: vec![OpponentRef::Reference; externals.len()],
        ..config.clone()
    };
    as_td.validate()?;
    let sum: S = config.weights.iter().copied().sum();
    if (sum - S::one()).abs() > S::lit(1e-12).max(S::normalization_tol()) {
        return Err(Error::param(
            "weights",
            format!("external weights must sum to 1, got {sum}"),
        ));
    }
    for e in externals {
        check_shape(inst, e, "external policy")?;
    }
    let mut terms = Vec::new();
    for (prompt, winner, loser, weight) in source_pairs(inst, source)? {
        terms.push(PairTerm {
            prompt,
            first: winner,
            second: loser,
            weight,
            anchor_first: opponent_anchor(externals, &config.weights, prompt, winner)?,
            anchor_second: opponent_anchor(externals, &config.weights, prompt, loser)?,
            target: resolve_target(config.target, config.eta, inst, None, prompt, winner, loser)?,
        });
    }
    Ok(CompiledLoss {
        metric: config.metric,
        scale: config.margin_scale(),
        terms,
        constant: S::zero(),
    })
}

fn check_l_t_inputs<S: Scalar>(
    inst: &GameInstance<S>,
    current: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
) -> Result<()> {
    if opponents.is_empty() {
        return Err(Error::param(
            "opponents",
            "at least one opponent is required",
        ));
    }
    check_shape(inst, current, "current policy")?;
    for o in opponents {
        check_shape(inst, o, "opponent policy")?;
    }
    Ok(())
}

/// `E[(h_t(π, y_w, y_l) − (η/(n−1)) Σ_j [P(y_w ≻ π_j) − P(y_l ≻ π_j)])²]` over pairs drawn from
/// `current` (ordered as winner and loser by the oracle).
pub fn compile_l_t<S: Scalar>(
    inst: &GameInstance<S>,
    current: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
    eta: S,
) -> Result<CompiledLoss<S>> {
    check_l_t_inputs(inst, current, opponents)?;
    if !(eta >= S::zero() && eta.is_finite()) {
        return Err(Error::param("eta", "must be non-negative and finite"));
    }
    let pref = inst.preference();
    let lambda = S::one() / S::lit(opponents.len() as f64);
    let weights = vec![lambda; opponents.len()];
    let mut terms = Vec::new();
    for x in 0..inst.num_prompts() {
        let d = inst.prompt_weight(x);
        let win: Vec<S> = (0..inst.count(x))
            .map(|y| {
                opponents
                    .iter()
                    .map(|o| win_rate_vs_policy(pref, x, y, o))
                    .sum::<S>()
            })
            .collect();
        for y in current.support(x) {
            for y2 in current.support(x) {
                let weight = d * current.prob(x, y) * current.prob(x, y2) * pref.get(x, y, y2);
                if y == y2 || weight == S::zero() {
                    continue;
                }
                terms.push(PairTerm {
                    prompt: x,
                    first: y,
                    second: y2,
                    weight,
                    anchor_first: opponent_anchor(opponents, &weights, x, y)?,
                    anchor_second: opponent_anchor(opponents, &weights, x, y2)?,
                    target: eta * lambda * (win[y] - win[y2]),
                });
            }
        }
    }
    Ok(CompiledLoss {
        metric: DistanceMetric::Squared,
        scale: S::one(),
        terms,
        constant: S::zero(),
    })
}

/// `E[(h_t(π, y_w, y_l) − target)²]` over pairs drawn from `current` with oracle-labelled order.
pub fn compile_l_t_prime<S: Scalar>(
    inst: &GameInstance<S>,
    current: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
    target: S,
) -> Result<CompiledLoss<S>> {
    check_l_t_inputs(inst, current, opponents)?;
    if !target.is_finite() {
        return Err(Error::param("target", "must be finite"));
    }
    let pref = inst.preference();
    let lambda = S::one() / S::lit(opponents.len() as f64);
    let weights = vec![lambda; opponents.len()];
    let mut terms = Vec::new();
    let mut constant = S::zero();
    for x in 0..inst.num_prompts() {
        let d = inst.prompt_weight(x);
        for y in current.support(x) {
            for y2 in current.support(x) {
                let weight = d * current.prob(x, y) * current.prob(x, y2) * pref.get(x, y, y2);
                if weight == S::zero() {
                    continue;
                }
                if y == y2 {
                    // h_t vanishes on identical responses
                    constant += weight * target * target;
                    continue;
                }
                terms.push(PairTerm {
                    prompt: x,
                    first: y,
                    second: y2,
                    weight,
                    anchor_first: opponent_anchor(opponents, &weights, x, y)?,
                    anchor_second: opponent_anchor(opponents, &weights, x, y2)?,
                    target,
                });
            }
        }
    }
    Ok(CompiledLoss {
        metric: DistanceMetric::Squared,
        scale: S::one(),
        terms,
        constant,
    })
}
