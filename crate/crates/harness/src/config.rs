//! Experiment configuration files.
//!
//! A config is a flat TOML table. Paths are resolved against the directory of the config file.
//!
//! | key | modes | default |
//! |---|---|---|
//! | `mode` | all | required: `selfplay`, `lossmin`, `presets`, `rewardfit` or `gap` |
//! | `instance` | all | required |
//! | `output_dir` | all | required |
//! | `seed` | all | `0` |
//! | `n_players` | selfplay, lossmin (`l_t`), gap | required for selfplay and `l_t`; `2` for gap |
//! | `eta` | selfplay, lossmin, presets | required for selfplay and `l_t`; `1.0` for presets |
//! | `tau` | selfplay, lossmin, presets, gap | `0.0`; `0.25` for presets |
//! | `beta` | lossmin (preset), presets | `0.5` |
//! | `iterations` | selfplay | required |
//! | `metric_stride` | selfplay | `1` |
//! | `opponent_scheme` | selfplay | `self_play_copies` (or `history_window`) |
//! | `history_weights` | selfplay | uniform `1/(n-1)` |
//! | `schedule` | selfplay | `constant` (or `inverse_sqrt`) |
//! | `aggregator` | selfplay, gap | `mean_pairwise` (or `plackett_luce`) |
//! | `enumeration_cap` | selfplay, gap | `10000000` opponent outcome tuples |
//! | `loss` | lossmin | required: `l_t` or a preset name |
//! | `metric` | lossmin (preset) | the preset's metric (`sq` or `bwd`) |
//! | `target` | lossmin (preset) | the preset's target (a number or `"inf"`) |
//! | `steps`, `step_size` | lossmin, rewardfit | `5000`, `1.0` |
//! | `restarts` | lossmin | `3` |
//! | `samples` | presets | `1000` |
//! | `comparisons`, `pool_size` | rewardfit | `10000`, `2` |
//! | `policies` | gap | required list of policy files |

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use mnpo_core::losses::{preset, DistanceMetric, LossConfig, PresetName, PresetParams, TargetGap};
use mnpo_core::objectives::Aggregator;
use mnpo_core::solvers::{OpponentScheme, SolverConfig, StepSchedule};
use toml::{Table, Value};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    SelfPlay(SolverConfig<f64>),
    LossMin(LossMinConfig),
    Presets {
        samples: usize,
        params: PresetParams<f64>,
    },
    RewardFit(RewardFitConfig),
    Gap(GapConfig),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::SelfPlay(_) => "selfplay",
            Mode::LossMin(_) => "lossmin",
            Mode::Presets { .. } => "presets",
            Mode::RewardFit(_) => "rewardfit",
            Mode::Gap(_) => "gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossObjective {
    /// The regression loss whose minimizer is one multiplicative-weights step from the
    /// reference policy against `n_players - 1` copies of it.
    UpdateRegression { n_players: usize, eta: f64 },
    Preset {
        name: PresetName,
        config: LossConfig<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossMinConfig {
    pub objective: LossObjective,
    pub steps: usize,
    pub step_size: f64,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardFitConfig {
    pub comparisons: usize,
    pub pool_size: usize,
    pub steps: usize,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapConfig {
    pub policies: Vec<PathBuf>,
    pub tau: f64,
    pub n_players: usize,
    pub aggregator: Aggregator,
}

/// Typed access to a TOML table that remembers which keys were read.
struct Keys {
    table: Table,
    used: BTreeSet<String>,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<&Value> {
        self.used.insert(key.to_string());
        self.table.get(key)
    }

    fn f64(&mut self, key: &str) -> HarnessResult<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(HarnessError::schema(key, "expected a number")),
        }
    }

    fn usize(&mut self, key: &str) -> HarnessResult<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(_) => Err(HarnessError::schema(key, "expected a non-negative integer")),
        }
    }

    fn string(&mut self, key: &str) -> HarnessResult<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(HarnessError::schema(key, "expected a string")),
        }
    }

    fn list<T>(
        &mut self,
        key: &str,
        what: &str,
        item: impl Fn(&Value) -> Option<T>,
    ) -> HarnessResult<Option<Vec<T>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    item(v).ok_or_else(|| {
                        HarnessError::schema(key, format!("expected a list of {what}"))
                    })
                })
                .collect::<HarnessResult<Vec<T>>>()
                .map(Some),
            Some(_) => Err(HarnessError::schema(
                key,
                format!("expected a list of {what}"),
            )),
        }
    }

    fn finish(self) -> HarnessResult<()> {
        match self.table.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(HarnessError::schema(k.clone(), "unknown key for this mode")),
            None => Ok(()),
        }
    }
}

fn required<T>(value: Option<T>, key: &str) -> HarnessResult<T> {
    value.ok_or_else(|| HarnessError::schema(key, "missing required key"))
}

fn positive(value: f64, key: &str) -> HarnessResult<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(HarnessError::schema(key, "must be positive and finite"))
    }
}

fn from_core(e: mnpo_core::Error) -> HarnessError {
    match e {
        mnpo_core::Error::InvalidParameter { name, reason } => HarnessError::schema(name, reason),
        other => HarnessError::from(other),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> HarnessResult<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            HarnessError::schema("<file>", e.message().to_string())
        })?;
        let mut keys = Keys {
            table,
            used: BTreeSet::new(),
        };
        let resolve = |p: String| base.join(p);
        let mode_name = required(keys.string("mode")?, "mode")?;
        let instance = resolve(required(keys.string("instance")?, "instance")?);
        let output_dir = resolve(required(keys.string("output_dir")?, "output_dir")?);
        let seed = keys.usize("seed")?.unwrap_or(0) as u64;
        let mode = match mode_name.as_str() {
            "selfplay" => Mode::SelfPlay(solver_config(&mut keys, seed)?),
            "lossmin" => Mode::LossMin(lossmin_config(&mut keys)?),
            "presets" => Mode::Presets {
                samples: keys.usize("samples")?.unwrap_or(1000),
                params: preset_params(&mut keys)?,
            },
            "rewardfit" => Mode::RewardFit(RewardFitConfig {
                comparisons: keys.usize("comparisons")?.unwrap_or(10_000),
                pool_size: keys.usize("pool_size")?.unwrap_or(2),
                steps: keys.usize("steps")?.unwrap_or(5000),
                step_size: positive(keys.f64("step_size")?.unwrap_or(1.0), "step_size")?,
            }),
            "gap" => Mode::Gap(GapConfig {
                policies: required(
                    keys.list("policies", "paths", |v| v.as_str().map(String::from))?,
                    "policies",
                )?
                .into_iter()
                .map(resolve)
                .collect(),
                tau: keys.f64("tau")?.unwrap_or(0.0),
                n_players: keys.usize("n_players")?.unwrap_or(2),
                aggregator: aggregator(&mut keys)?,
            }),
            other => {
                return Err(HarnessError::schema(
                    "mode",
                    format!("unknown mode `{other}`"),
                ))
            }
        };
        keys.finish()?;
        Ok(ExperimentConfig {
            instance,
            output_dir,
            seed,
            mode,
        })
    }
}

fn aggregator(keys: &mut Keys) -> HarnessResult<Aggregator> {
    let agg = match keys.string("aggregator")? {
        None => Aggregator::mean_pairwise(),
        Some(name) => Aggregator::from_name(&name).ok_or_else(|| {
            HarnessError::schema("aggregator", format!("unknown aggregator `{name}`"))
        })?,
    };
    Ok(match keys.usize("enumeration_cap")? {
        Some(cap) => agg.with_cap(cap as u64),
        None => agg,
    })
}

fn solver_config(keys: &mut Keys, seed: u64) -> HarnessResult<SolverConfig<f64>> {
    let n = required(keys.usize("n_players")?, "n_players")?;
    let eta = required(keys.f64("eta")?, "eta")?;
    let iterations = required(keys.usize("iterations")?, "iterations")?;
    let mut config = SolverConfig::new(n, eta, iterations);
    config.seed = seed;
    config.tau = keys.f64("tau")?.unwrap_or(0.0);
    config.metric_stride = keys.usize("metric_stride")?.unwrap_or(1);
    config.aggregator = aggregator(keys)?;
    if let Some(name) = keys.string("opponent_scheme")? {
        config.opponent_scheme = OpponentScheme::from_name(&name).ok_or_else(|| {
            HarnessError::schema("opponent_scheme", format!("unknown scheme `{name}`"))
        })?;
    }
    config.history_weights = keys.list("history_weights", "numbers", |v| {
        v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
    })?;
    if let Some(name) = keys.string("schedule")? {
        config.schedule = match name.as_str() {
            "constant" => StepSchedule::Constant,
            "inverse_sqrt" => StepSchedule::InverseSqrt,
            _ => {
                return Err(HarnessError::schema(
                    "schedule",
                    format!("unknown schedule `{name}`"),
                ))
            }
        };
    }
    config.validate().map_err(from_core)?;
    Ok(config)
}

fn preset_params(keys: &mut Keys) -> HarnessResult<PresetParams<f64>> {
    let d = PresetParams::default();
    Ok(PresetParams {
        eta: keys.f64("eta")?.unwrap_or(d.eta),
        tau: keys.f64("tau")?.unwrap_or(d.tau),
        beta: keys.f64("beta")?.unwrap_or(d.beta),
    })
}

fn lossmin_config(keys: &mut Keys) -> HarnessResult<LossMinConfig> {
    let loss = required(keys.string("loss")?, "loss")?;
    let objective = if loss == "l_t" {
        let n_players = required(keys.usize("n_players")?, "n_players")?;
        if n_players < 2 {
            return Err(HarnessError::schema("n_players", "must be at least 2"));
        }
        let eta = required(keys.f64("eta")?, "eta")?;
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(HarnessError::schema(
                "eta",
                "must be non-negative and finite",
            ));
        }
        LossObjective::UpdateRegression { n_players, eta }
    } else {
        let name = PresetName::from_name(&loss)
            .ok_or_else(|| HarnessError::schema("loss", format!("unknown loss `{loss}`")))?;
        let mut config = preset(name, preset_params(keys)?).map_err(from_core)?;
        if let Some(metric) = keys.string("metric")? {
            config.metric = DistanceMetric::from_name(&metric).ok_or_else(|| {
                HarnessError::schema("metric", format!("unknown metric `{metric}`"))
            })?;
        }
        match keys.take("target") {
            None => {}
            Some(Value::String(s)) if s == "inf" => {
                config.target = TargetGap::Constant(f64::INFINITY)
            }
            Some(Value::Float(v)) => config.target = TargetGap::Constant(*v),
            Some(Value::Integer(v)) => config.target = TargetGap::Constant(*v as f64),
            Some(_) => {
                return Err(HarnessError::schema(
                    "target",
                    "expected a number or \"inf\"",
                ))
            }
        }
        config.validate().map_err(from_core)?;
        LossObjective::Preset { name, config }
    };
    Ok(LossMinConfig {
        objective,
        steps: keys.usize("steps")?.unwrap_or(5000),
        step_size: positive(keys.f64("step_size")?.unwrap_or(1.0), "step_size")?,
        restarts: keys.usize("restarts")?.unwrap_or(3).max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> HarnessResult<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn selfplay_config_round_trip() {
        let c = parse(
            r#"
mode = "selfplay"
instance = "rps.toml"
output_dir = "out"
seed = 9
n_players = 3
eta = 0.5
iterations = 100
metric_stride = 10
history_weights = [0.75, 0.25]
opponent_scheme = "history_window"
"#,
        )
        .unwrap();
        assert_eq!(c.instance, Path::new("/base/rps.toml"));
        assert_eq!(c.seed, 9);
        let Mode::SelfPlay(s) = c.mode else { panic!() };
        assert_eq!(s.n_players, 3);
        assert_eq!(s.history_weights, Some(vec![0.75, 0.25]));
        assert_eq!(s.opponent_scheme, OpponentScheme::HistoryWindow);
    }

    #[test]
    fn schema_errors_name_the_key() {
        let missing = parse("mode = \"selfplay\"\ninstance = \"a\"\noutput_dir = \"o\"\nn_players = 2\niterations = 5\n");
        assert!(matches!(missing, Err(HarnessError::Schema { ref key, .. }) if key == "eta"));
        let unknown =
            parse("mode = \"presets\"\ninstance = \"a\"\noutput_dir = \"o\"\netta = 1.0\n");
        assert!(matches!(unknown, Err(HarnessError::Schema { ref key, .. }) if key == "etta"));
        let bad = parse("mode = \"selfplay\"\ninstance = \"a\"\noutput_dir = \"o\"\nn_players = 2\niterations = 5\neta = -1.0\n");
        assert!(matches!(bad, Err(HarnessError::Schema { ref key, .. }) if key == "eta"));
        let wrong_type =
            parse("mode = \"presets\"\ninstance = \"a\"\noutput_dir = \"o\"\nsamples = \"many\"\n");
        assert!(
            matches!(wrong_type, Err(HarnessError::Schema { ref key, .. }) if key == "samples")
        );
        assert_eq!(wrong_type.unwrap_err().exit_code(), 2);
    }

    #[test]
    fn lossmin_preset_overrides() {
        let c = parse(
            "mode = \"lossmin\"\ninstance = \"a\"\noutput_dir = \"o\"\nloss = \"ipo\"\ntau = 0.5\ntarget = 2\n",
        )
        .unwrap();
        let Mode::LossMin(l) = c.mode else { panic!() };
        let LossObjective::Preset { name, config } = l.objective else {
            panic!()
        };
        assert_eq!(name, PresetName::Ipo);
        assert_eq!(config.target, TargetGap::Constant(2.0));
        let inf_sq = parse(
            "mode = \"lossmin\"\ninstance = \"a\"\noutput_dir = \"o\"\nloss = \"ipo\"\ntarget = \"inf\"\n",
        );
        assert!(matches!(inf_sq, Err(HarnessError::Schema { ref key, .. }) if key == "target"));
    }
}
