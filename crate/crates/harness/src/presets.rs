use mnpo_core::format::format_significant;
use mnpo_core::losses::direct::direct_pair_loss;
use mnpo_core::losses::{
    preset, td_mnpo_loss, PairSource, PreferencePair, PresetName, PresetParams,
};
use mnpo_core::random::{random_policy_on_support, random_rewards};
use mnpo_core::rng::stream;
use mnpo_core::{Error, Instance, Result};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PresetDeviation {
    pub preset: PresetName,
    pub max_abs_deviation: f64,
    pub draws: usize,
}

/// For every preset, the largest gap between the unified loss and the preset's direct formula
/// over `samples` random (policy, current policy, labelled pair) draws. Instances without a
/// reward table get a random one so that reward-based presets are covered too.
pub fn compare_presets(
    inst: &Instance,
    samples: usize,
    seed: u64,
    params: PresetParams<f64>,
) -> Result<Vec<PresetDeviation>> {
    let inst = match inst.reward() {
        Some(_) => inst.clone(),
        None => inst.clone().with_reward(Some(random_rewards(
            inst.space(),
            2.0,
            &mut stream(seed, "preset-rewards"),
        )))?,
    };
    let reference = inst.reference();
    let prompts: Vec<usize> = (0..inst.num_prompts())
        .filter(|&x| reference.support(x).count() >= 2)
        .collect();
    if prompts.is_empty() {
        return Err(Error::InvalidInstance(
            "no prompt has two responses in the reference support".into(),
        ));
    }
    let mut rng = stream(seed, "presets");
    let mut out = Vec::with_capacity(PresetName::ALL.len());
    for name in PresetName::ALL {
        let config = preset(name, params)?;
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let policy = random_policy_on_support(reference, 0.05, &mut rng);
            let current = random_policy_on_support(reference, 0.05, &mut rng);
            let prompt = prompts[rng.gen_range(0..prompts.len())];
            let support: Vec<usize> = reference.support(prompt).collect();
            let w = rng.gen_range(0..support.len());
            let l = (w + rng.gen_range(1..support.len())) % support.len();
            let pair = PreferencePair {
                prompt,
                winner: support[w],
                loser: support[l],
            };
            let unified = td_mnpo_loss(
                &policy,
                &inst,
                std::slice::from_ref(&current),
                &config,
                &PairSource::Sampled(&[pair]),
            )?;
            let direct = direct_pair_loss(name, params, &policy, &current, &inst, pair)?;
            worst = worst.max((unified - direct).abs());
        }
        out.push(PresetDeviation {
            preset: name,
            max_abs_deviation: worst,
            draws: samples,
        });
    }
    Ok(out)
}

pub const PRESETS_CSV_HEADER: &str = "preset,max_abs_deviation,draws";

pub fn deviations_to_csv(rows: &[PresetDeviation]) -> String {
    let mut s = String::from(PRESETS_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{}\n",
            r.preset.name(),
            format_significant(r.max_abs_deviation, 12),
            r.draws
        ));
    }
    s
}
