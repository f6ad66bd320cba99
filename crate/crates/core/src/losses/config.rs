//! Loss configurations and the named presets of the unified family.

use super::DistanceMetric;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which policy plays an opponent slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpponentRef {
    /// The instance's reference policy.
    Reference,
    /// `π_{t−j}`: entry `len − 1 − j` of the policy history (`Lagged(0)` is the current policy).
    Lagged(usize),
}

/// Right-hand side of the distance (the already scaled target gap `η·δ*`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetGap<S> {
    /// The same value for every pair; `+∞` is allowed with the backward-Bernoulli metric.
    Constant(S),
    /// `scale · (r*(y_w) − r*(y_l))` from the instance's reward table.
    RewardGap { scale: S },
    /// `η · (P(y_w ≻ π_t) − P(y_l ≻ π_t))` with exact win rates against the current policy.
    WinRateGap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig<S> {
    pub n_players: usize,
    pub opponents: Vec<OpponentRef>,
    pub weights: Vec<S>,
    pub eta: S,
    pub tau: S,
    /// Margin scale for the backward-Bernoulli metric; the squared metric ignores it.
    pub beta: S,
    pub metric: DistanceMetric,
    pub target: TargetGap<S>,
}

impl<S: Scalar> LossConfig<S> {
    pub fn margin_scale(&self) -> S {
        match self.metric {
            DistanceMetric::Squared => S::one(),
            DistanceMetric::BackwardBernoulli => self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_players == 0 {
            return Err(Error::param("n_players", "must be at least 1"));
        }
        if self.opponents.len() + 1 != self.n_players {
            return Err(Error::param(
                "opponents",
                format!(
                    "{} players need {} opponents, got {}",
                    self.n_players,
                    self.n_players - 1,
                    self.opponents.len()
                ),
            ));
        }
        if self.weights.len() != self.opponents.len() {
            return Err(Error::param(
                "weights",
                format!(
                    "expected {} weights, got {}",
                    self.opponents.len(),
                    self.weights.len()
                ),
            ));
        }
        if self
            .weights
            .iter()
            .any(|w| !(*w >= S::zero() && *w <= S::one()))
        {
            return Err(Error::param("weights", "each weight must lie in [0, 1]"));
        }
        if !(self.eta >= S::zero() && self.eta.is_finite()) {
            return Err(Error::param("eta", "must be non-negative and finite"));
        }
        if !(self.tau >= S::zero() && self.tau.is_finite()) {
            return Err(Error::param("tau", "must be non-negative and finite"));
        }
        if self.metric == DistanceMetric::BackwardBernoulli
            && !(self.beta > S::zero() && self.beta.is_finite())
        {
            return Err(Error::param("beta", "must be positive and finite"));
        }
        match self.target {
            TargetGap::Constant(c) => {
                if c.is_nan() || c == S::neg_infinity() {
                    return Err(Error::param("target", "must be finite or +inf"));
                }
                if c.is_infinite() && self.metric == DistanceMetric::Squared {
                    return Err(Error::param(
                        "target",
                        "an infinite target needs the bwd metric",
                    ));
                }
            }
            TargetGap::RewardGap { scale } => {
                if !scale.is_finite() {
                    return Err(Error::param("target", "reward-gap scale must be finite"));
                }
            }
            TargetGap::WinRateGap => {}
        }
        Ok(())
    }
}

/// The classic algorithms recovered by particular loss configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    Dpo,
    DistillDpo,
    Simpo,
    Dno,
    Spin,
    Sppo,
    Ipo,
    Inpo,
}

impl PresetName {
    pub const ALL: [PresetName; 8] = [
        PresetName::Dpo,
        PresetName::DistillDpo,
        PresetName::Simpo,
        PresetName::Dno,
        PresetName::Spin,
        PresetName::Sppo,
        PresetName::Ipo,
        PresetName::Inpo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetName::Dpo => "dpo",
            PresetName::DistillDpo => "distill_dpo",
            PresetName::Simpo => "simpo",
            PresetName::Dno => "dno",
            PresetName::Spin => "spin",
            PresetName::Sppo => "sppo",
            PresetName::Ipo => "ipo",
            PresetName::Inpo => "inpo",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Whether the loss needs a reward table on the instance.
    pub fn needs_rewards(self) -> bool {
        self == PresetName::DistillDpo
    }
}

/// Hyperparameters shared by the presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetParams<S> {
    pub eta: S,
    pub tau: S,
    pub beta: S,
}

impl<S: Scalar> Default for PresetParams<S> {
    fn default() -> Self {
        PresetParams {
            eta: S::one(),
            tau: S::lit(0.25),
            beta: S::lit(0.5),
        }
    }
}

/// The loss configuration reproducing `name`.
///
/// Every response counts as length 1 and SimPO's margin `γ` is 0. SPIN's `β` acts as the margin
/// scale with a unit opponent weight. SPPO's per-response target is used in pairwise form.
pub fn preset<S: Scalar>(name: PresetName, params: PresetParams<S>) -> Result<LossConfig<S>> {
    let PresetParams { eta, tau, beta } = params;
    let inv_two_tau = || {
        if tau > S::zero() {
            Ok(S::one() / (S::lit(2.0) * tau))
        } else {
            Err(Error::param(
                "tau",
                format!("preset `{}` needs tau > 0", name.name()),
            ))
        }
    };
    let two = |opponent: OpponentRef, metric, target| LossConfig {
        n_players: 2,
        opponents: vec![opponent],
        weights: vec![S::one()],
        eta,
        tau,
        beta,
        metric,
        target,
    };
    let infinite = TargetGap::Constant(S::infinity());
    let config = match name {
        PresetName::Dpo => two(
            OpponentRef::Reference,
            DistanceMetric::BackwardBernoulli,
            infinite,
        ),
        PresetName::DistillDpo => two(
            OpponentRef::Reference,
            DistanceMetric::Squared,
            TargetGap::RewardGap { scale: S::one() },
        ),
        PresetName::Simpo => LossConfig {
            n_players: 1,
            opponents: vec![],
            weights: vec![],
            eta,
            tau,
            beta,
            metric: DistanceMetric::BackwardBernoulli,
            target: infinite,
        },
        PresetName::Dno | PresetName::Spin => two(
            OpponentRef::Lagged(0),
            DistanceMetric::BackwardBernoulli,
            infinite,
        ),
        PresetName::Sppo => two(
            OpponentRef::Lagged(0),
            DistanceMetric::Squared,
            TargetGap::WinRateGap,
        ),
        PresetName::Ipo => two(
            OpponentRef::Reference,
            DistanceMetric::Squared,
            TargetGap::Constant(inv_two_tau()?),
        ),
        PresetName::Inpo => {
            let target = inv_two_tau()?;
            if !(eta > S::zero() && tau <= eta) {
                return Err(Error::param("eta", "preset `inpo` needs 0 < tau <= eta"));
            }
            LossConfig {
                n_players: 3,
                opponents: vec![OpponentRef::Lagged(0), OpponentRef::Reference],
                weights: vec![(eta - tau) / eta, tau / eta],
                eta,
                tau,
                beta,
                metric: DistanceMetric::Squared,
                target: TargetGap::Constant(target),
            }
        }
    };
    config.validate()?;
    Ok(config)
}
