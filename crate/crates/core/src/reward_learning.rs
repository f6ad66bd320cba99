//! Tabular reward fitting from one-vs-pool comparisons under the Plackett-Luce model.
//!
//! A comparison records that `winner` was preferred over every member of `pool`; its
//! likelihood is `exp R(winner) / (exp R(winner) + Σ_pool exp R(j))`. With a one-element pool
//! this is the Bradley-Terry probability `σ(R(winner) − R(loser))`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::instances::{GameInstance, RewardTable};
use crate::scalar::{log_logistic, log_sum_exp, logistic, Scalar};

/// The winner of one prompt's pool, preferred over the remaining `pool`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedComparison {
    pub prompt: usize,
    pub winner: usize,
    pub pool: Vec<usize>,
}

impl RankedComparison {
    /// Checks that the pool is nonempty, excludes the winner and has no repeated entry.
    pub fn new(prompt: usize, winner: usize, pool: Vec<usize>) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::param("pool", "the loser pool must be nonempty"));
        }
        if pool.contains(&winner) {
            return Err(Error::param(
                "pool",
                "the winner cannot also be in the pool",
            ));
        }
        for (i, y) in pool.iter().enumerate() {
            if pool[..i].contains(y) {
                return Err(Error::SameResponse(*y));
            }
        }
        Ok(RankedComparison {
            prompt,
            winner,
            pool,
        })
    }

    /// Winner followed by the pool.
    fn members(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.winner).chain(self.pool.iter().copied())
    }
}

fn check_indices<S: Scalar>(rewards: &RewardTable<S>, data: &[RankedComparison]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::param("data", "no comparisons"));
    }
    for c in data {
        if c.prompt >= rewards.num_prompts() {
            return Err(Error::IndexOutOfRange {
                prompt: c.prompt,
                response: c.winner,
            });
        }
        let k = rewards.row(c.prompt).len();
        if let Some(y) = c.members().find(|&y| y >= k) {
            return Err(Error::IndexOutOfRange {
                prompt: c.prompt,
                response: y,
            });
        }
    }
    Ok(())
}

fn comparison_nll<S: Scalar>(rewards: &RewardTable<S>, c: &RankedComparison) -> S {
    let row = rewards.row(c.prompt);
    if let [loser] = c.pool[..] {
        return -log_logistic(row[c.winner] - row[loser]);
    }
    let logits: Vec<S> = c.members().map(|y| row[y]).collect();
    log_sum_exp(&logits) - row[c.winner]
}

/// Mean negative log-likelihood of `data`. Single-loser comparisons use `−log σ(ΔR)` directly.
pub fn pl_nll<S: Scalar>(rewards: &RewardTable<S>, data: &[RankedComparison]) -> Result<S> {
    check_indices(rewards, data)?;
    let total: S = data.iter().map(|c| comparison_nll(rewards, c)).sum();
    Ok(total / S::lit(data.len() as f64))
}

/// [`pl_nll`] together with its gradient with respect to every reward entry.
pub fn pl_nll_gradient<S: Scalar>(
    rewards: &RewardTable<S>,
    data: &[RankedComparison],
) -> Result<(S, RewardTable<S>)> {
    check_indices(rewards, data)?;
    let mut grad: Vec<Vec<S>> = rewards
        .rows()
        .iter()
        .map(|r| vec![S::zero(); r.len()])
        .collect();
    let mut total = S::zero();
    for c in data {
        let row = rewards.row(c.prompt);
        total += comparison_nll(rewards, c);
        if let [loser] = c.pool[..] {
            let lose_prob = logistic(row[loser] - row[c.winner]);
            grad[c.prompt][c.winner] -= lose_prob;
            grad[c.prompt][loser] += lose_prob;
            continue;
        }
        let logits: Vec<S> = c.members().map(|y| row[y]).collect();
        let lse = log_sum_exp(&logits);
        for (y, l) in c.members().zip(&logits) {
            grad[c.prompt][y] += (*l - lse).exp();
        }
        grad[c.prompt][c.winner] -= S::one();
    }
    let inv_m = S::one() / S::lit(data.len() as f64);
    for v in grad.iter_mut().flatten() {
        *v *= inv_m;
    }
    Ok((total * inv_m, RewardTable::from_rows_unchecked(grad)))
}

/// Largest absolute gradient entry below which a fit counts as converged.
pub const FIT_GRADIENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome<S> {
    /// Per-prompt mean-centered rewards.
    pub rewards: RewardTable<S>,
    pub nll: S,
    /// Largest absolute entry of the final gradient.
    pub grad_max: S,
    pub steps_taken: usize,
    /// `grad_max ≤ FIT_GRADIENT_TOL`; separable data never converges.
    pub converged: bool,
    /// NLL before each step and after the last one.
    pub trace: Vec<S>,
}

/// Fixed-step gradient descent on [`pl_nll`], mean-centering every prompt's rewards after each
/// step. Stops early once converged.
pub fn fit_pl_reward<S: Scalar>(
    data: &[RankedComparison],
    inst: &GameInstance<S>,
    init: &RewardTable<S>,
    steps: usize,
    step_size: S,
) -> Result<FitOutcome<S>> {
    if !(step_size > S::zero() && step_size.is_finite()) {
        return Err(Error::param("step_size", "must be positive and finite"));
    }
    let counts = inst.space().counts();
    if init.num_prompts() != counts.len()
        || init.rows().iter().zip(&counts).any(|(r, k)| r.len() != *k)
    {
        return Err(Error::DimensionMismatch(
            "initial rewards do not match the response space".into(),
        ));
    }
    let mut rewards = init.clone();
    rewards.center();
    let mut trace = Vec::with_capacity(steps + 1);
    let mut steps_taken = 0;
    loop {
        let (nll, grad) = pl_nll_gradient(&rewards, data)?;
        if !nll.is_finite() {
            return Err(Error::Diverged {
                step: steps_taken,
                last_finite: trace.last().map_or(f64::NAN, |v: &S| v.as_f64()),
            });
        }
        trace.push(nll);
        let grad_max = grad
            .rows()
            .iter()
            .flatten()
            .fold(S::zero(), |m, g| m.max(g.abs()));
        let converged = grad_max <= S::lit(FIT_GRADIENT_TOL);
        if converged || steps_taken == steps {
            return Ok(FitOutcome {
                rewards,
                nll,
                grad_max,
                steps_taken,
                converged,
                trace,
            });
        }
        for x in 0..rewards.num_prompts() {
            let g = grad.row(x);
            for (r, d) in rewards.row_mut(x).iter_mut().zip(g) {
                *r -= step_size * *d;
            }
        }
        rewards.center();
        steps_taken += 1;
    }
}

/// Draws `m` comparisons: a prompt from the prompt weights, `k` distinct responses uniformly,
/// and the winner among them with probability `softmax(R)` over the pool.
pub fn generate_rankings<S: Scalar, R: Rng + ?Sized>(
    rewards: &RewardTable<S>,
    inst: &GameInstance<S>,
    m: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<RankedComparison>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if k < 2 {
        return Err(Error::param("k", "a pool needs at least 2 responses"));
    }
    if rewards.num_prompts() != inst.num_prompts() {
        return Err(Error::DimensionMismatch(
            "reward table does not match the response space".into(),
        ));
    }
    for x in 0..inst.num_prompts() {
        if inst.prompt_weight(x) > S::zero() && inst.count(x) < k {
            return Err(Error::param(
                "k",
                format!("prompt {x} has {} responses, fewer than {k}", inst.count(x)),
            ));
        }
        if rewards.row(x).len() != inst.count(x) {
            return Err(Error::DimensionMismatch(format!(
                "reward row {x} does not match the response space"
            )));
        }
    }
    let prompts = WeightedIndex::new(inst.prompt_weights().iter().map(|w| w.as_f64()))
        .map_err(|e| Error::param("prompt_weights", e.to_string()))?;
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let x = prompts.sample(rng);
        let row = rewards.row(x);
        let drawn = sample(rng, inst.count(x), k).into_vec();
        let top = drawn
            .iter()
            .map(|&y| row[y].as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let choice = WeightedIndex::new(drawn.iter().map(|&y| (row[y].as_f64() - top).exp()))
            .map_err(|e| Error::param("rewards", e.to_string()))?
            .sample(rng);
        let winner = drawn[choice];
        let pool = drawn.into_iter().filter(|&y| y != winner).collect();
        out.push(RankedComparison {
            prompt: x,
            winner,
            pool,
        });
    }
    Ok(out)
}

pub const COMPARISON_CSV_HEADER: [&str; 3] = ["prompt", "winner", "pool"];

/// `prompt,winner,pool` with the pool written as `;`-separated indices.
pub fn comparisons_to_csv(data: &[RankedComparison]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(COMPARISON_CSV_HEADER).map_err(io)?;
    for c in data {
        let pool = c
            .pool
            .iter()
            .map(|y| y.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([c.prompt.to_string(), c.winner.to_string(), pool])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Parses the output of [`comparisons_to_csv`].
pub fn comparisons_from_csv(text: &str) -> Result<Vec<RankedComparison>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(COMPARISON_CSV_HEADER) {
        return Err(Error::Format(format!(
            "expected header `prompt,winner,pool`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let index = |field: &str, line: u64| -> Result<usize> {
        field
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("line {line}: `{field}` is not an index")))
    };
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let pool = record[2]
            .split(';')
            .map(|f| index(f, line))
            .collect::<Result<Vec<_>>>()?;
        out.push(RankedComparison::new(
            index(&record[0], line)?,
            index(&record[1], line)?,
            pool,
        )?);
    }
    Ok(out)
}
