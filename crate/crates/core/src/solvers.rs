//! Multiplicative-weights self-play on tabular policies.
//!
//! One step re-weights each response by the geometric mean of the opponents' probabilities
//! times `exp(η · mean win rate against the opponents)`, then renormalizes over the reference
//! support. The loop keeps a running (uniform) average of the iterates and records
//! exploitability diagnostics of that average.

use std::time::Instant;

use crate::equilibrium::exploitability_multiplayer;
use crate::error::{Error, Result};
use crate::format::format_significant;
use crate::instances::{GameInstance, TabularPolicy};
use crate::objectives::{
    check_shape, kl_divergence, multiplayer_objective, win_rate_vs_policy, Aggregator,
};
use crate::scalar::{softmax_in_place, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpponentScheme {
    /// All players share one trajectory; the opponents of step `t` are `n - 1` copies of `π_t`.
    SelfPlayCopies,
    /// The opponents of step `t` are `π_t, π_{t-1}, …, π_{t-n+2}` (earlier slots filled with `π_0`).
    HistoryWindow,
}

impl OpponentScheme {
    pub fn name(self) -> &'static str {
        match self {
            OpponentScheme::SelfPlayCopies => "self_play_copies",
            OpponentScheme::HistoryWindow => "history_window",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "self_play_copies" => Some(OpponentScheme::SelfPlayCopies),
            "history_window" => Some(OpponentScheme::HistoryWindow),
            _ => None,
        }
    }
}

/// Mixing weights of the reported average iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Every iterate `π_0 … π_t` weighted equally.
    #[default]
    Uniform,
}

/// Step size as a function of the iteration index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepSchedule {
    #[default]
    Constant,
    /// `η / sqrt(t + 1)`.
    InverseSqrt,
}

impl StepSchedule {
    pub fn eta_at<S: Scalar>(self, eta: S, t: usize) -> S {
        match self {
            StepSchedule::Constant => eta,
            StepSchedule::InverseSqrt => eta / S::lit((t + 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<S> {
    pub n_players: usize,
    pub eta: S,
    /// Regularization used by the diagnostics (the update itself has no KL term).
    pub tau: S,
    pub iterations: usize,
    pub opponent_scheme: OpponentScheme,
    /// Per-opponent weights `λ_j` replacing the uniform `1 / (n - 1)`.
    pub history_weights: Option<Vec<S>>,
    /// The exact solver draws no random numbers; the seed is carried for provenance.
    pub seed: u64,
    pub metric_stride: usize,
    pub aggregator: Aggregator,
    pub averaging: Averaging,
    pub schedule: StepSchedule,
}

impl<S: Scalar> SolverConfig<S> {
    pub fn new(n_players: usize, eta: S, iterations: usize) -> Self {
        SolverConfig {
            n_players,
            eta,
            tau: S::zero(),
            iterations,
            opponent_scheme: OpponentScheme::SelfPlayCopies,
            history_weights: None,
            seed: 0,
            metric_stride: 1,
            aggregator: Aggregator::mean_pairwise(),
            averaging: Averaging::Uniform,
            schedule: StepSchedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_players < 2 {
            return Err(Error::param("n_players", "must be at least 2"));
        }
        if !(self.eta > S::zero() && self.eta.is_finite()) {
            return Err(Error::param("eta", "must be positive and finite"));
        }
        if !(self.tau >= S::zero() && self.tau.is_finite()) {
            return Err(Error::param("tau", "must be non-negative and finite"));
        }
        if self.metric_stride == 0 {
            return Err(Error::param("metric_stride", "must be positive"));
        }
        if let Some(w) = &self.history_weights {
            if w.len() != self.n_players - 1 {
                return Err(Error::param(
                    "history_weights",
                    format!("expected {} weights, got {}", self.n_players - 1, w.len()),
                ));
            }
            if w.iter().any(|l| !(*l >= S::zero() && *l <= S::one())) {
                return Err(Error::param(
                    "history_weights",
                    "each weight must lie in [0, 1]",
                ));
            }
            let sum: S = w.iter().copied().sum();
            if sum > S::one() + S::normalization_tol() {
                return Err(Error::param(
                    "history_weights",
                    format!("weights sum to {sum} > 1"),
                ));
            }
            if sum <= S::zero() {
                return Err(Error::param(
                    "history_weights",
                    "at least one weight must be positive",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<S> {
    pub iter: usize,
    /// Exploitability of the averaged policy.
    pub gap: S,
    /// `KL(average ‖ π_ref)`.
    pub kl_ref: S,
    /// Value of the averaged policy against `n - 1` copies of itself.
    pub self_play_value: S,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog<S> {
    pub records: Vec<RunRecord<S>>,
}

pub const RUN_LOG_HEADER: &str = "iter,gap,kl_ref,self_play_value,elapsed_ms";

impl<S: Scalar> RunLog<S> {
    /// CSV with 12 significant digits. With `include_timing = false` the `elapsed_ms` column is
    /// written as `0` so that identical runs produce identical bytes.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from(RUN_LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let elapsed = if include_timing { r.elapsed_ms } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter,
                format_significant(r.gap.as_f64(), 12),
                format_significant(r.kl_ref.as_f64(), 12),
                format_significant(r.self_play_value.as_f64(), 12),
                format_significant(elapsed, 12),
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&RunRecord<S>> {
        self.records.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput<S> {
    pub log: RunLog<S>,
    pub last: TabularPolicy<S>,
    pub average: TabularPolicy<S>,
}

/// One multiplicative-weights update against `opponents` with uniform weights `1 / (n - 1)`.
pub fn mwu_step<S: Scalar>(
    opponents: &[&TabularPolicy<S>],
    inst: &GameInstance<S>,
    eta: S,
) -> Result<TabularPolicy<S>> {
    if opponents.is_empty() {
        return Err(Error::param(
            "opponents",
            "at least one opponent is required",
        ));
    }
    let w = S::one() / S::lit(opponents.len() as f64);
    mwu_step_weighted(opponents, &vec![w; opponents.len()], inst, eta)
}

/// Weighted update: `π(y) ∝ Π_j π_j(y)^{λ_j} · exp(η Σ_j λ_j P(y ≻ π_j))` on the reference support.
pub fn mwu_step_weighted<S: Scalar>(
    opponents: &[&TabularPolicy<S>],
    weights: &[S],
    inst: &GameInstance<S>,
    eta: S,
) -> Result<TabularPolicy<S>> {
    if opponents.is_empty() {
        return Err(Error::param(
            "opponents",
            "at least one opponent is required",
        ));
    }
    if weights.len() != opponents.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} opponents",
            weights.len(),
            opponents.len()
        )));
    }
    if !(eta > S::zero() && eta.is_finite()) {
        return Err(Error::param("eta", "must be positive and finite"));
    }
    for o in opponents {
        check_shape(inst, o, "opponent policy")?;
    }
    let pref = inst.preference();
    let mut rows = Vec::with_capacity(inst.num_prompts());
    for x in 0..inst.num_prompts() {
        let mut logw: Vec<S> = (0..inst.count(x))
            .map(|y| {
                if !inst.in_support(x, y) {
                    return S::neg_infinity();
                }
                let mut lw = S::zero();
                for (o, &l) in opponents.iter().zip(weights) {
                    if l == S::zero() {
                        continue;
                    }
                    let p = o.prob(x, y);
                    if p <= S::zero() {
                        return S::neg_infinity();
                    }
                    lw += l * (p.ln() + eta * win_rate_vs_policy(pref, x, y, o));
                }
                lw
            })
            .collect();
        softmax_in_place(&mut logw).ok_or(Error::EmptySupport { prompt: x })?;
        rows.push(logw);
    }
    Ok(TabularPolicy::from_rows_unchecked(rows))
}

/// Per-prompt (weighted) arithmetic mean of policies.
pub fn average_policy<S: Scalar>(
    iterates: &[&TabularPolicy<S>],
    weights: Option<&[S]>,
) -> Result<TabularPolicy<S>> {
    let first = iterates
        .first()
        .ok_or_else(|| Error::param("iterates", "at least one policy is required"))?;
    let shape: Vec<usize> = first.rows().iter().map(Vec::len).collect();
    if let Some(bad) = iterates.iter().position(|p| !p.same_shape(&shape)) {
        return Err(Error::DimensionMismatch(format!(
            "iterate {bad} has a different shape"
        )));
    }
    let uniform;
    let weights = match weights {
        Some(w) => {
            if w.len() != iterates.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} iterates",
                    w.len(),
                    iterates.len()
                )));
            }
            let sum: S = w.iter().copied().sum();
            if w.iter().any(|v| *v < S::zero()) || (sum - S::one()).abs() > S::normalization_tol() {
                return Err(Error::param("weights", "must be non-negative and sum to 1"));
            }
            w
        }
        None => {
            uniform = vec![S::one() / S::lit(iterates.len() as f64); iterates.len()];
            &uniform[..]
        }
    };
    let rows = shape
        .iter()
        .enumerate()
        .map(|(x, &k)| {
            (0..k)
                .map(|y| {
                    iterates
                        .iter()
                        .zip(weights)
                        .map(|(p, &w)| w * p.prob(x, y))
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(TabularPolicy::from_rows_unchecked(rows))
}

fn record<S: Scalar>(
    inst: &GameInstance<S>,
    config: &SolverConfig<S>,
    average: &TabularPolicy<S>,
    iter: usize,
    start: Instant,
) -> Result<RunRecord<S>> {
    let opponents = vec![average; config.n_players - 1];
    Ok(RunRecord {
        iter,
        gap: exploitability_multiplayer(
            average,
            config.n_players,
            inst,
            config.tau,
            config.aggregator,
        )?,
        kl_ref: kl_divergence(average, inst.reference(), inst)?,
        self_play_value: multiplayer_objective(
            average,
            &opponents,
            inst,
            config.tau,
            config.aggregator,
        )?,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs `config.iterations` self-play updates starting from `π_ref`.
pub fn self_play_run<S: Scalar>(
    inst: &GameInstance<S>,
    config: &SolverConfig<S>,
) -> Result<SolverOutput<S>> {
    config.validate()?;
    let start = Instant::now();
    let n_opp = config.n_players - 1;
    let weights = config
        .history_weights
        .clone()
        .unwrap_or_else(|| vec![S::one() / S::lit(n_opp as f64); n_opp]);

    let mut current = inst.reference().clone();
    // most recent first; only the history scheme needs more than one entry
    let mut window: Vec<TabularPolicy<S>> = vec![current.clone()];
    let mut sum: Vec<Vec<S>> = current.rows().to_vec();
    let mut average = current.clone();
    let mut log = RunLog::default();
    log.records.push(record(inst, config, &average, 0, start)?);

    for t in 0..config.iterations {
        let eta = config.schedule.eta_at(config.eta, t);
        let next = match config.opponent_scheme {
            OpponentScheme::SelfPlayCopies => {
                mwu_step_weighted(&vec![&current; n_opp], &weights, inst, eta)?
            }
            OpponentScheme::HistoryWindow => {
                let opponents: Vec<&TabularPolicy<S>> = (0..n_opp)
                    .map(|j| &window[j.min(window.len() - 1)])
                    .collect();
                mwu_step_weighted(&opponents, &weights, inst, eta)?
            }
        };
        if config.opponent_scheme == OpponentScheme::HistoryWindow {
            window.insert(0, next.clone());
            window.truncate(n_opp);
        }
        current = next;

        for (acc, row) in sum.iter_mut().zip(current.rows()) {
            for (a, p) in acc.iter_mut().zip(row) {
                *a += *p;
            }
        }
        let count = S::lit((t + 2) as f64);
        average = TabularPolicy::from_rows_unchecked(
            sum.iter()
                .map(|row| row.iter().map(|&v| v / count).collect())
                .collect(),
        );

        let iter = t + 1;
        if iter % config.metric_stride == 0 || iter == config.iterations {
            log.records
                .push(record(inst, config, &average, iter, start)?);
        }
    }

    Ok(SolverOutput {
        log,
        last: current,
        average,
    })
}
