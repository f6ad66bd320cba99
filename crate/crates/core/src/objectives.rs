//! Exact evaluation of win rates, KL terms and game objectives by enumeration.
//!
//! Every expectation is a finite sum over prompts (weighted by the prompt distribution)
//! and over the supports of the policies involved. `0 · log 0` is taken as `0`.

use crate::error::{Error, Result};
use crate::instances::{GameInstance, PairwisePreference, RewardTable, TabularPolicy};
use crate::scalar::{softmax_in_place, Scalar};

/// Default bound on the number of enumerated outcome tuples.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregatorKind {
    /// Average of pairwise win probabilities against each opponent.
    MeanPairwise,
    /// Plackett-Luce choice probability of the player's response against the pooled opponent
    /// responses; needs the instance's reward table.
    PlackettLuce,
}

/// One-vs-many preference `P(y ≻ {y_j} | x)` used in the multiplayer objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Aggregator {
    pub kind: AggregatorKind,
    pub enumeration_cap: u64,
}

impl Aggregator {
    pub fn mean_pairwise() -> Self {
        Aggregator {
            kind: AggregatorKind::MeanPairwise,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn plackett_luce() -> Self {
        Aggregator {
            kind: AggregatorKind::PlackettLuce,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.enumeration_cap = cap;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            AggregatorKind::MeanPairwise => "mean_pairwise",
            AggregatorKind::PlackettLuce => "plackett_luce",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mean_pairwise" => Some(Self::mean_pairwise()),
            "plackett_luce" => Some(Self::plackett_luce()),
            _ => None,
        }
    }
}

impl Default for Aggregator {
    fn default() -> Self {
        Self::mean_pairwise()
    }
}

pub(crate) fn check_shape<S: Scalar>(
    inst: &GameInstance<S>,
    policy: &TabularPolicy<S>,
    what: &str,
) -> Result<()> {
    if policy.same_shape(&inst.space().counts()) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} does not match the response space"
        )))
    }
}

/// `P(y ≻ π | x) = Σ_{y'} π(y'|x) M[y][y']`.
pub fn win_rate_vs_policy<S: Scalar>(
    pref: &PairwisePreference<S>,
    prompt: usize,
    y: usize,
    policy: &TabularPolicy<S>,
) -> S {
    pref.matrix(prompt)
        .row(y)
        .iter()
        .zip(policy.row(prompt))
        .map(|(&m, &p)| m * p)
        .sum()
}

/// KL between two rows of one prompt.
pub fn prompt_kl<S: Scalar>(p: &[S], q: &[S], prompt: usize) -> Result<S> {
    let mut kl = S::zero();
    for (y, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a > S::zero() {
            if b <= S::zero() {
                return Err(Error::SupportViolation {
                    prompt,
                    response: y,
                    context: "first argument of KL has mass where the second has none".into(),
                });
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl)
}

/// `E_x KL(π(·|x) ‖ ρ(·|x))` under the prompt distribution.
pub fn kl_divergence<S: Scalar>(
    policy: &TabularPolicy<S>,
    other: &TabularPolicy<S>,
    inst: &GameInstance<S>,
) -> Result<S> {
    check_shape(inst, policy, "policy")?;
    check_shape(inst, other, "second policy")?;
    let mut total = S::zero();
    for x in 0..inst.num_prompts() {
        total += inst.prompt_weight(x) * prompt_kl(policy.row(x), other.row(x), x)?;
    }
    Ok(total)
}

/// Plackett-Luce probability that `i` is chosen over the pool `others` (multiset allowed).
fn pl_choice<S: Scalar>(row: &[S], i: usize, others: impl Iterator<Item = usize>) -> S {
    let shift = row.iter().copied().fold(S::neg_infinity(), S::max);
    let own = (row[i] - shift).exp();
    let rest: S = others.map(|j| (row[j] - shift).exp()).sum();
    own / (own + rest)
}

/// `exp R_i / (exp R_i + Σ_{j ∈ others} exp R_j)`, max-shifted.
pub fn pl_one_vs_many<S: Scalar>(
    rewards: &RewardTable<S>,
    prompt: usize,
    i: usize,
    others: &[usize],
) -> Result<S> {
    if others.is_empty() {
        return Err(Error::param("others", "the opponent pool is empty"));
    }
    if prompt >= rewards.num_prompts() {
        return Err(Error::IndexOutOfRange {
            prompt,
            response: i,
        });
    }
    let row = rewards.row(prompt);
    if let Some(&bad) = std::iter::once(&i).chain(others).find(|&&j| j >= row.len()) {
        return Err(Error::IndexOutOfRange {
            prompt,
            response: bad,
        });
    }
    if others.contains(&i) {
        return Err(Error::param(
            "others",
            format!("response {i} is both the candidate and in the pool"),
        ));
    }
    Ok(pl_choice(row, i, others.iter().copied()))
}

/// Mean over opponents of [`win_rate_vs_policy`].
pub fn mean_pairwise_one_vs_many<S: Scalar>(
    pref: &PairwisePreference<S>,
    prompt: usize,
    y: usize,
    opponents: &[&TabularPolicy<S>],
) -> Result<S> {
    if opponents.is_empty() {
        return Err(Error::param(
            "opponents",
            "at least one opponent is required",
        ));
    }
    let sum: S = opponents
        .iter()
        .map(|o| win_rate_vs_policy(pref, prompt, y, o))
        .sum();
    Ok(sum / S::lit(opponents.len() as f64))
}

fn enumeration_size<S: Scalar>(inst: &GameInstance<S>, opponents: &[&TabularPolicy<S>]) -> u128 {
    (0..inst.num_prompts())
        .map(|x| {
            let tuples: u128 = opponents
                .iter()
                .map(|o| o.support(x).count() as u128)
                .product();
            tuples * inst.count(x) as u128
        })
        .sum()
}

/// Plackett-Luce payoffs for every response of one prompt, enumerating opponent tuples.
fn pl_prompt_payoffs<S: Scalar>(
    row: &[S],
    prompt: usize,
    opponents: &[&TabularPolicy<S>],
) -> Vec<S> {
    let k = row.len();
    let supports: Vec<Vec<usize>> = opponents
        .iter()
        .map(|o| o.support(prompt).collect())
        .collect();
    let mut payoffs = vec![S::zero(); k];
    if supports.iter().any(Vec::is_empty) {
        return payoffs;
    }
    let mut cursor = vec![0usize; opponents.len()];
    let mut tuple = vec![0usize; opponents.len()];
    loop {
        let mut prob = S::one();
        for (j, (&c, sup)) in cursor.iter().zip(&supports).enumerate() {
            tuple[j] = sup[c];
            prob *= opponents[j].prob(prompt, sup[c]);
        }
        for (y, w) in payoffs.iter_mut().enumerate() {
            *w += prob * pl_choice(row, y, tuple.iter().copied());
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == cursor.len() {
                return payoffs;
            }
            cursor[pos] += 1;
            if cursor[pos] < supports[pos].len() {
                break;
            }
            cursor[pos] = 0;
            pos += 1;
        }
    }
}

/// Expected one-vs-many win probability `W(x, y)` of every response against the opponents.
pub fn one_vs_many_payoffs<S: Scalar>(
    inst: &GameInstance<S>,
    opponents: &[&TabularPolicy<S>],
    agg: Aggregator,
) -> Result<Vec<Vec<S>>> {
    if opponents.is_empty() {
        return Err(Error::param(
            "opponents",
            "at least one opponent is required",
        ));
    }
    for o in opponents {
        check_shape(inst, o, "opponent policy")?;
    }
    match agg.kind {
        AggregatorKind::MeanPairwise => (0..inst.num_prompts())
            .map(|x| {
                (0..inst.count(x))
                    .map(|y| mean_pairwise_one_vs_many(inst.preference(), x, y, opponents))
                    .collect()
            })
            .collect(),
        AggregatorKind::PlackettLuce => {
            let rewards = inst.reward().ok_or(Error::MissingRewards(
                "the plackett_luce aggregator needs instance rewards",
            ))?;
            let size = enumeration_size(inst, opponents);
            if size > u128::from(agg.enumeration_cap) {
                return Err(Error::EnumerationCap {
                    size,
                    cap: agg.enumeration_cap,
                });
            }
            Ok((0..inst.num_prompts())
                .map(|x| pl_prompt_payoffs(rewards.row(x), x, opponents))
                .collect())
        }
    }
}

/// Expected one-vs-many win probability of response `y` at `prompt`.
pub fn expected_one_vs_many<S: Scalar>(
    inst: &GameInstance<S>,
    prompt: usize,
    y: usize,
    opponents: &[&TabularPolicy<S>],
    agg: Aggregator,
) -> Result<S> {
    inst.check_prompt_response(prompt, y)?;
    match agg.kind {
        AggregatorKind::MeanPairwise => {
            mean_pairwise_one_vs_many(inst.preference(), prompt, y, opponents)
        }
        AggregatorKind::PlackettLuce => Ok(one_vs_many_payoffs(inst, opponents, agg)?[prompt][y]),
    }
}

/// `Σ_x d0(x) Σ_y π(y|x) u(x, y)`.
pub(crate) fn expected_payoff<S: Scalar>(
    inst: &GameInstance<S>,
    policy: &TabularPolicy<S>,
    payoffs: &[Vec<S>],
) -> S {
    (0..inst.num_prompts())
        .map(|x| {
            inst.prompt_weight(x)
                * policy
                    .row(x)
                    .iter()
                    .zip(&payoffs[x])
                    .filter(|(p, _)| **p > S::zero())
                    .map(|(&p, &u)| p * u)
                    .sum::<S>()
        })
        .sum()
}

/// `τ · KL(π ‖ π_ref)`, skipping the KL entirely when `τ = 0`.
pub(crate) fn kl_penalty<S: Scalar>(
    inst: &GameInstance<S>,
    policy: &TabularPolicy<S>,
    tau: S,
) -> Result<S> {
    if tau == S::zero() {
        Ok(S::zero())
    } else {
        Ok(tau * kl_divergence(policy, inst.reference(), inst)?)
    }
}

/// `E_x E_{y1~π1, y2~π2} M[y1][y2]`.
pub fn preference_term<S: Scalar>(
    first: &TabularPolicy<S>,
    second: &TabularPolicy<S>,
    inst: &GameInstance<S>,
) -> Result<S> {
    check_shape(inst, first, "first policy")?;
    check_shape(inst, second, "second policy")?;
    let mut total = S::zero();
    for x in 0..inst.num_prompts() {
        let mut v = S::zero();
        for y in first.support(x) {
            v += first.prob(x, y) * win_rate_vs_policy(inst.preference(), x, y, second);
        }
        total += inst.prompt_weight(x) * v;
    }
    Ok(total)
}

/// Two-player game value `J(π1, π2)` with KL penalty on `π1` and bonus on `π2`.
pub fn two_player_objective<S: Scalar>(
    first: &TabularPolicy<S>,
    second: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    tau: S,
) -> Result<S> {
    Ok(
        preference_term(first, second, inst)? - kl_penalty(inst, first, tau)?
            + kl_penalty(inst, second, tau)?,
    )
}

/// Multiplayer value `J(π_i, {π_j})` of one player against `n - 1` opponents.
pub fn multiplayer_objective<S: Scalar>(
    player: &TabularPolicy<S>,
    opponents: &[&TabularPolicy<S>],
    inst: &GameInstance<S>,
    tau: S,
    agg: Aggregator,
) -> Result<S> {
    check_shape(inst, player, "player policy")?;
    let payoffs = one_vs_many_payoffs(inst, opponents, agg)?;
    Ok(expected_payoff(inst, player, &payoffs) - kl_penalty(inst, player, tau)?)
}

fn check_reward_shape<S: Scalar>(inst: &GameInstance<S>, rewards: &RewardTable<S>) -> Result<()> {
    let counts = inst.space().counts();
    if rewards.num_prompts() != counts.len()
        || rewards
            .rows()
            .iter()
            .zip(&counts)
            .any(|(r, k)| r.len() != *k)
    {
        return Err(Error::DimensionMismatch(
            "reward table does not match the response space".into(),
        ));
    }
    Ok(())
}

/// `E_x [E_{y~π} R(x,y) − τ KL(π ‖ π_ref)]`.
pub fn regularized_reward_objective<S: Scalar>(
    policy: &TabularPolicy<S>,
    rewards: &RewardTable<S>,
    inst: &GameInstance<S>,
    tau: S,
) -> Result<S> {
    if tau < S::zero() {
        return Err(Error::param("tau", "must be non-negative"));
    }
    check_shape(inst, policy, "policy")?;
    check_reward_shape(inst, rewards)?;
    Ok(expected_payoff(inst, policy, rewards.rows()) - kl_penalty(inst, policy, tau)?)
}

fn check_teachers<S: Scalar>(
    inst: &GameInstance<S>,
    teachers: &[&TabularPolicy<S>],
    tau0: S,
    taus: &[S],
) -> Result<()> {
    if taus.len() != teachers.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} teacher weights for {} teachers",
            taus.len(),
            teachers.len()
        )));
    }
    if tau0 < S::zero() || taus.iter().any(|t| *t < S::zero() || !t.is_finite()) {
        return Err(Error::param(
            "tau",
            "regularization weights must be non-negative",
        ));
    }
    for t in teachers {
        check_shape(inst, t, "teacher policy")?;
    }
    Ok(())
}

/// `E_x[E_π R] − τ0 KL(π‖ref) − Σ_i τ_i KL(π‖teacher_i)`.
pub fn multi_teacher_objective<S: Scalar>(
    policy: &TabularPolicy<S>,
    rewards: &RewardTable<S>,
    reference: &TabularPolicy<S>,
    teachers: &[&TabularPolicy<S>],
    tau0: S,
    taus: &[S],
    inst: &GameInstance<S>,
) -> Result<S> {
    check_teachers(inst, teachers, tau0, taus)?;
    check_shape(inst, policy, "policy")?;
    check_shape(inst, reference, "reference policy")?;
    check_reward_shape(inst, rewards)?;
    let mut value = expected_payoff(inst, policy, rewards.rows());
    if tau0 > S::zero() {
        value -= tau0 * kl_divergence(policy, reference, inst)?;
    }
    for (i, (teacher, &t)) in teachers.iter().zip(taus).enumerate() {
        if t > S::zero() {
            let kl = kl_divergence(policy, teacher, inst).map_err(|e| match e {
                Error::SupportViolation {
                    prompt, response, ..
                } => Error::SupportViolation {
                    prompt,
                    response,
                    context: format!("policy has mass where teacher {i} has none"),
                },
                other => other,
            })?;
            value -= t * kl;
        }
    }
    Ok(value)
}

/// Maximizer of [`multi_teacher_objective`]:
/// `π*(y|x) ∝ exp(R/τ) · π_ref^{τ0/τ} · Π_i teacher_i^{τ_i/τ}` with `τ = τ0 + Σ τ_i`,
/// restricted to the support of `reference`.
pub fn closed_form_multi_teacher_optimum<S: Scalar>(
    rewards: &RewardTable<S>,
    reference: &TabularPolicy<S>,
    teachers: &[&TabularPolicy<S>],
    tau0: S,
    taus: &[S],
    inst: &GameInstance<S>,
) -> Result<TabularPolicy<S>> {
    check_teachers(inst, teachers, tau0, taus)?;
    check_shape(inst, reference, "reference policy")?;
    check_reward_shape(inst, rewards)?;
    let tau = tau0 + taus.iter().copied().sum::<S>();
    if tau <= S::zero() {
        return Err(Error::param("tau", "total regularization must be positive"));
    }
    let mut rows = Vec::with_capacity(inst.num_prompts());
    for x in 0..inst.num_prompts() {
        let mut logw: Vec<S> = (0..inst.count(x))
            .map(|y| {
                let r = reference.prob(x, y);
                if r <= S::zero() {
                    return S::neg_infinity();
                }
                let mut lw = rewards.get(x, y) / tau + (tau0 / tau) * r.ln();
                for (teacher, &t) in teachers.iter().zip(taus) {
                    if t > S::zero() {
                        lw += (t / tau) * teacher.prob(x, y).ln();
                    }
                }
                lw
            })
            .collect();
        softmax_in_place(&mut logw).ok_or(Error::EmptySupport { prompt: x })?;
        rows.push(logw);
    }
    Ok(TabularPolicy::from_rows_unchecked(rows))
}
