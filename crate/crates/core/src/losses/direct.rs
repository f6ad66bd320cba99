//! The classic per-pair objectives written out in their usual closed forms.
//!
//! These are evaluated independently of the unified loss and serve as its reference values.

use super::config::{PresetName, PresetParams};
use super::PreferencePair;
use crate::error::{Error, Result};
use crate::instances::{GameInstance, TabularPolicy};
use crate::objectives::win_rate_vs_policy;
use crate::scalar::Scalar;

/// `-log σ(z)`.
fn neg_log_sigmoid<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p() - z
    }
}

fn positive<S: Scalar>(
    policy: &TabularPolicy<S>,
    prompt: usize,
    y: usize,
    context: &'static str,
) -> Result<S> {
    let p = policy.prob(prompt, y);
    if p > S::zero() {
        Ok(p)
    } else {
        Err(Error::ZeroProbability {
            prompt,
            response: y,
            context,
        })
    }
}

/// The loss of `preset` on one labelled pair. `current` is `π_t`.
pub fn direct_pair_loss<S: Scalar>(
    preset: PresetName,
    params: PresetParams<S>,
    policy: &TabularPolicy<S>,
    current: &TabularPolicy<S>,
    inst: &GameInstance<S>,
    pair: PreferencePair,
) -> Result<S> {
    let PresetParams { eta, tau, beta } = params;
    let PreferencePair {
        prompt: x,
        winner: w,
        loser: l,
    } = pair;
    inst.check_prompt_response(x, w)?;
    inst.check_prompt_response(x, l)?;
    let pw = positive(policy, x, w, "candidate policy")?;
    let pl = positive(policy, x, l, "candidate policy")?;
    let reference = inst.reference();
    let ref_diff = || -> Result<S> {
        let rw = positive(reference, x, w, "reference policy")?;
        let rl = positive(reference, x, l, "reference policy")?;
        Ok((pw / rw).ln() - (pl / rl).ln())
    };
    let cur_diff = || -> Result<S> {
        let cw = positive(current, x, w, "current policy")?;
        let cl = positive(current, x, l, "current policy")?;
        Ok((pw / cw).ln() - (pl / cl).ln())
    };
    let two = S::lit(2.0);
    Ok(match preset {
        PresetName::Dpo => neg_log_sigmoid(beta * ref_diff()?),
        PresetName::DistillDpo => {
            let r = inst.reward().ok_or(Error::MissingRewards(
                "distill_dpo compares against reward differences",
            ))?;
            (ref_diff()? - (r.get(x, w) - r.get(x, l))).powi(2)
        }
        PresetName::Simpo => neg_log_sigmoid(beta * pw.ln() - beta * pl.ln()),
        PresetName::Dno | PresetName::Spin => neg_log_sigmoid(beta * cur_diff()?),
        PresetName::Sppo => {
            let half = S::half();
            let per_response = |y: usize, p: S| -> Result<S> {
                let c = positive(current, x, y, "current policy")?;
                Ok((p / c).ln()
                    - eta * (win_rate_vs_policy(inst.preference(), x, y, current) - half))
            };
            (per_response(w, pw)? - per_response(l, pl)?).powi(2)
        }
        PresetName::Ipo => (ref_diff()? - S::one() / (two * tau)).powi(2),
        PresetName::Inpo => (tau / eta * ref_diff()? + (eta - tau) / eta * cur_diff()?
            - S::one() / (two * tau))
            .powi(2),
    })
}
