//! Logit parameterization of tabular policies and a gradient-descent minimizer.

use super::CompiledLoss;
use crate::error::{Error, Result};
use crate::instances::{GameInstance, TabularPolicy};
use crate::objectives::check_shape;
use crate::scalar::{log_sum_exp, softmax_in_place, Scalar};

/// Per-prompt logits; the policy is their softmax over the reference support.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLogits<S> {
    logits: Vec<Vec<S>>,
    mask: Vec<Vec<bool>>,
}

impl<S: Scalar> PolicyLogits<S> {
    fn mask_of(inst: &GameInstance<S>) -> Vec<Vec<bool>> {
        (0..inst.num_prompts())
            .map(|x| (0..inst.count(x)).map(|y| inst.in_support(x, y)).collect())
            .collect()
    }

    /// All-zero logits (the uniform policy on the reference support).
    pub fn zeros(inst: &GameInstance<S>) -> Self {
        let mask = Self::mask_of(inst);
        let logits = mask.iter().map(|m| vec![S::zero(); m.len()]).collect();
        PolicyLogits { logits, mask }
    }

    /// Logits of an explicit table; entries off the reference support are ignored.
    pub fn new(inst: &GameInstance<S>, logits: Vec<Vec<S>>) -> Result<Self> {
        let mask = Self::mask_of(inst);
        if logits.len() != mask.len() || logits.iter().zip(&mask).any(|(l, m)| l.len() != m.len()) {
            return Err(Error::DimensionMismatch(
                "logits do not match the response space".into(),
            ));
        }
        for (x, (row, m)) in logits.iter().zip(&mask).enumerate() {
            for (y, (v, &on)) in row.iter().zip(m).enumerate() {
                if on && !v.is_finite() {
                    return Err(Error::NonFinite {
                        prompt: x,
                        response: y,
                    });
                }
            }
        }
        Ok(PolicyLogits { logits, mask })
    }

    /// `log π`; requires positive probability on the whole reference support.
    pub fn from_policy(inst: &GameInstance<S>, policy: &TabularPolicy<S>) -> Result<Self> {
        check_shape(inst, policy, "policy")?;
        let mask = Self::mask_of(inst);
        let mut logits = Vec::with_capacity(mask.len());
        for (x, m) in mask.iter().enumerate() {
            let mut row = Vec::with_capacity(m.len());
            for (y, &on) in m.iter().enumerate() {
                let p = policy.prob(x, y);
                if on && p <= S::zero() {
                    return Err(Error::ZeroProbability {
                        prompt: x,
                        response: y,
                        context: "logits need positive probability on the reference support",
                    });
                }
                row.push(if on { p.ln() } else { S::zero() });
            }
            logits.push(row);
        }
        Ok(PolicyLogits { logits, mask })
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.logits
    }

    pub fn is_free(&self, prompt: usize, response: usize) -> bool {
        self.mask[prompt][response]
    }

    /// Normalized log-probabilities; `-inf` off the reference support.
    pub fn log_probs(&self) -> Vec<Vec<S>> {
        self.logits
            .iter()
            .zip(&self.mask)
            .map(|(row, m)| {
                let masked: Vec<S> = row
                    .iter()
                    .zip(m)
                    .map(|(&v, &on)| if on { v } else { S::neg_infinity() })
                    .collect();
                let lse = log_sum_exp(&masked);
                masked.into_iter().map(|v| v - lse).collect()
            })
            .collect()
    }

    pub fn to_policy(&self) -> TabularPolicy<S> {
        let rows = self
            .logits
            .iter()
            .zip(&self.mask)
            .map(|(row, m)| {
                let mut w: Vec<S> = row
                    .iter()
                    .zip(m)
                    .map(|(&v, &on)| if on { v } else { S::neg_infinity() })
                    .collect();
                softmax_in_place(&mut w).expect("reference support is nonempty");
                w
            })
            .collect();
        TabularPolicy::from_rows_unchecked(rows)
    }

    /// `self + factor · direction` on free coordinates.
    pub fn step(&self, direction: &[Vec<S>], factor: S) -> Self {
        let logits = self
            .logits
            .iter()
            .zip(direction)
            .zip(&self.mask)
            .map(|((row, d), m)| {
                row.iter()
                    .zip(d)
                    .zip(m)
                    .map(|((&v, &g), &on)| if on { v + factor * g } else { v })
                    .collect()
            })
            .collect();
        PolicyLogits {
            logits,
            mask: self.mask.clone(),
        }
    }

    /// Adds `shift` to every logit of `prompt` (leaves the policy unchanged).
    pub fn shifted(&self, prompt: usize, shift: S) -> Self {
        let mut out = self.clone();
        for v in &mut out.logits[prompt] {
            *v += shift;
        }
        out
    }
}

/// Euclidean norm of a per-prompt gradient.
pub fn gradient_norm<S: Scalar>(grad: &[Vec<S>]) -> S {
    grad.iter().flatten().map(|g| *g * *g).sum::<S>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeStep<S> {
    pub step: usize,
    pub loss: S,
    pub grad_norm: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOutcome<S> {
    pub policy: TabularPolicy<S>,
    pub logits: PolicyLogits<S>,
    pub loss: S,
    pub grad_norm: S,
    pub steps_taken: usize,
    /// Loss and gradient norm before each accepted step and after the last one.
    pub trace: Vec<MinimizeStep<S>>,
}

const MAX_HALVINGS: usize = 60;

/// Gradient descent from `init`. Each step starts from `step_size` and halves it until the loss
/// strictly decreases; the run stops early when no decrease is possible or the gradient vanishes.
pub fn minimize_loss<S: Scalar>(
    loss: &CompiledLoss<S>,
    init: &PolicyLogits<S>,
    steps: usize,
    step_size: S,
) -> Result<MinimizeOutcome<S>> {
    if !(step_size > S::zero() && step_size.is_finite()) {
        return Err(Error::param("step_size", "must be positive and finite"));
    }
    let mut logits = init.clone();
    let mut value = loss.value_logits(&logits)?;
    if !value.is_finite() {
        return Err(Error::Diverged {
            step: 0,
            last_finite: f64::NAN,
        });
    }
    let mut grad = loss.gradient(&logits)?;
    let mut norm = gradient_norm(&grad);
    let mut trace = vec![MinimizeStep {
        step: 0,
        loss: value,
        grad_norm: norm,
    }];
    let mut taken = 0;
    'outer: for step in 1..=steps {
        if norm == S::zero() {
            break;
        }
        let mut lr = step_size;
        for _ in 0..MAX_HALVINGS {
            let candidate = logits.step(&grad, -lr);
            match loss.value_logits(&candidate) {
                Ok(v) if v.is_finite() && v < value => {
                    logits = candidate;
                    value = v;
                    grad = loss.gradient(&logits)?;
                    norm = gradient_norm(&grad);
                    if !norm.is_finite() {
                        return Err(Error::Diverged {
                            step,
                            last_finite: value.as_f64(),
                        });
                    }
                    taken = step;
                    trace.push(MinimizeStep {
                        step,
                        loss: value,
                        grad_norm: norm,
                    });
                    continue 'outer;
                }
                _ => lr *= S::half(),
            }
        }
        break;
    }
    Ok(MinimizeOutcome {
        policy: logits.to_policy(),
        logits,
        loss: value,
        grad_norm: norm,
        steps_taken: taken,
        trace,
    })
}
