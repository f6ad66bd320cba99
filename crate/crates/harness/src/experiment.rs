use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mnpo_core::equilibrium::{dual_gap_two_player, exploitability_multiplayer};
use mnpo_core::format::format_significant;
use mnpo_core::instances::{load_policy, store_policy, TabularPolicy};
use mnpo_core::losses::{
    compile_l_t, compile_td_mnpo, minimize_loss, CompiledLoss, MinimizeOutcome, PairSource,
    PolicyLogits,
};
use mnpo_core::objectives::Aggregator;
use mnpo_core::reward_learning::{comparisons_to_csv, fit_pl_reward, generate_rankings};
use mnpo_core::rng::stream;
use mnpo_core::solvers::{mwu_step, self_play_run};
use mnpo_core::{Instance, Policy, Rewards};
use rand::Rng;

use crate::config::{
    ExperimentConfig, GapConfig, LossMinConfig, LossObjective, Mode, RewardFitConfig,
};
use crate::error::{HarnessError, HarnessResult};
use crate::presets::{compare_presets, deviations_to_csv};

/// Closed-form and minimized policies closer than this count as the same minimizer.
pub const LOSSMIN_MATCH_TOL: f64 = 1e-4;

fn num(x: f64) -> String {
    format_significant(x, 12)
}

/// Ordered `key = value` lines written to `summary.txt` and printed by the CLI.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    fn add(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

pub fn load_instance(path: &Path) -> HarnessResult<Instance> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    mnpo_core::instances::parse_instance(&text).map_err(|e| HarnessError::InvalidInstance {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn read_policy(path: &Path, inst: &Instance) -> HarnessResult<Policy> {
    if !path.exists() {
        return Err(HarnessError::io(path, "file not found"));
    }
    let policy: Policy = load_policy(path).map_err(|e| match e {
        mnpo_core::Error::Io(reason) => HarnessError::io(path, reason),
        other => HarnessError::Core(other),
    })?;
    inst.check_policy(&policy)?;
    Ok(policy)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> HarnessResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

/// Loads the config at `path` and runs it.
pub fn run_experiment(path: &Path) -> HarnessResult<RunOutput> {
    run_config(&ExperimentConfig::load(path)?)
}

/// Runs one experiment and writes its outputs (always including `summary.txt`).
pub fn run_config(config: &ExperimentConfig) -> HarnessResult<RunOutput> {
    let inst = load_instance(&config.instance)?;
    fs::create_dir_all(&config.output_dir).map_err(|e| HarnessError::io(&config.output_dir, e))?;
    let mut out = Outputs {
        dir: config.output_dir.clone(),
        files: Vec::new(),
    };
    let mut summary = Summary::default();
    summary.add("mode", config.mode.name());
    summary.add("seed", config.seed);
    match &config.mode {
        Mode::SelfPlay(solver) => {
            let result = self_play_run(&inst, solver)?;
            out.write("run_log.csv", &result.log.to_csv(false))?;
            out.write("final_policy.toml", &store_policy(&result.last)?)?;
            out.write("average_policy.toml", &store_policy(&result.average)?)?;
            let last = result
                .log
                .last()
                .expect("the log always has a first record");
            summary.add("iterations", solver.iterations);
            summary.add("final_gap", num(last.gap));
            summary.add("final_kl_ref", num(last.kl_ref));
            summary.add("final_self_play_value", num(last.self_play_value));
        }
        Mode::LossMin(lossmin) => run_lossmin(&inst, lossmin, config.seed, &mut out, &mut summary)?,
        Mode::Presets { samples, params } => {
            let rows = compare_presets(&inst, *samples, config.seed, *params)?;
            out.write("presets.csv", &deviations_to_csv(&rows))?;
            let worst = rows.iter().map(|r| r.max_abs_deviation).fold(0.0, f64::max);
            summary.add("samples", samples);
            summary.add("max_abs_deviation", num(worst));
        }
        Mode::RewardFit(fit) => run_rewardfit(&inst, fit, config.seed, &mut out, &mut summary)?,
        Mode::Gap(gap) => {
            let rows = gap_rows(&inst, gap)?;
            let mut csv = String::from("policy,dual_gap,exploitability\n");
            for (path, dual, expl) in &rows {
                let _ = writeln!(csv, "{},{},{}", path, num(*dual), num(*expl));
                summary.add(format!("dual_gap[{path}]"), num(*dual));
                summary.add(format!("exploitability[{path}]"), num(*expl));
            }
            out.write("gaps.csv", &csv)?;
        }
    }
    out.write("summary.txt", &summary.render())?;
    Ok(RunOutput {
        summary,
        files: out.files,
    })
}

fn random_logits(inst: &Instance, rng: &mut impl Rng) -> HarnessResult<PolicyLogits<f64>> {
    let rows = (0..inst.num_prompts())
        .map(|x| {
            (0..inst.count(x))
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect()
        })
        .collect();
    Ok(PolicyLogits::new(inst, rows)?)
}

fn trace_csv(outcome: &MinimizeOutcome<f64>) -> String {
    let mut s = String::from("step,loss,grad_norm\n");
    for t in &outcome.trace {
        let _ = writeln!(s, "{},{},{}", t.step, num(t.loss), num(t.grad_norm));
    }
    s
}

fn run_lossmin(
    inst: &Instance,
    config: &LossMinConfig,
    seed: u64,
    out: &mut Outputs,
    summary: &mut Summary,
) -> HarnessResult<()> {
    let reference = inst.reference().clone();
    let (loss, closed): (CompiledLoss<f64>, Option<Policy>) = match &config.objective {
        LossObjective::UpdateRegression { n_players, eta } => {
            let opponents = vec![&reference; n_players - 1];
            summary.add("loss", "l_t");
            (
                compile_l_t(inst, &reference, &opponents, *eta)?,
                Some(mwu_step(&opponents, inst, *eta)?),
            )
        }
        LossObjective::Preset { name, config: loss } => {
            summary.add("loss", name.name());
            let history = std::slice::from_ref(&reference);
            (
                compile_td_mnpo(inst, history, loss, &PairSource::Exact(&reference))?,
                None,
            )
        }
    };
    let mut rng = stream(seed, "lossmin-init");
    let mut finals: Vec<TabularPolicy<f64>> = Vec::new();
    for r in 0..config.restarts {
        let init = if r == 0 {
            PolicyLogits::zeros(inst)
        } else {
            random_logits(inst, &mut rng)?
        };
        let outcome = minimize_loss(&loss, &init, config.steps, config.step_size)?;
        out.write(&format!("convergence_{r}.csv"), &trace_csv(&outcome))?;
        summary.add(format!("restart{r}.final_loss"), num(outcome.loss));
        summary.add(format!("restart{r}.grad_norm"), num(outcome.grad_norm));
        summary.add(format!("restart{r}.steps"), outcome.steps_taken);
        if let Some(target) = &closed {
            summary.add(
                format!("restart{r}.linf_to_closed_form"),
                num(outcome.policy.linf_distance(target)),
            );
        }
        finals.push(outcome.policy);
    }
    let spread = finals
        .iter()
        .flat_map(|a| finals.iter().map(move |b| a.linf_distance(b)))
        .fold(0.0, f64::max);
    summary.add("max_pairwise_linf", num(spread));
    if let Some(target) = &closed {
        let worst = finals
            .iter()
            .map(|p| p.linf_distance(target))
            .fold(0.0, f64::max);
        summary.add("max_linf_to_closed_form", num(worst));
        summary.add("matches_closed_form", worst <= LOSSMIN_MATCH_TOL);
        out.write("minimizer.toml", &store_policy(&finals[0])?)?;
        out.write("closed_form.toml", &store_policy(target)?)?;
    } else {
        out.write("minimizer.toml", &store_policy(&finals[0])?)?;
    }
    Ok(())
}

/// Largest `|(f(y) − f(y')) − (t(y) − t(y'))|` over same-prompt pairs.
pub fn max_gap_error(fitted: &Rewards, truth: &Rewards) -> f64 {
    let mut worst: f64 = 0.0;
    for (f, t) in fitted.rows().iter().zip(truth.rows()) {
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                worst = worst.max(((f[i] - f[j]) - (t[i] - t[j])).abs());
            }
        }
    }
    worst
}

fn run_rewardfit(
    inst: &Instance,
    config: &RewardFitConfig,
    seed: u64,
    out: &mut Outputs,
    summary: &mut Summary,
) -> HarnessResult<()> {
    let truth = inst
        .reward()
        .ok_or_else(|| HarnessError::InvalidInstance {
            path: PathBuf::from("<instance>"),
            reason: "rewardfit needs a `rewards` table".into(),
        })?
        .clone();
    let mut rng = stream(seed, "rankings");
    let data = generate_rankings(&truth, inst, config.comparisons, config.pool_size, &mut rng)?;
    out.write("comparisons.csv", &comparisons_to_csv(&data)?)?;
    let init = Rewards::zeros(inst.space());
    let fit = fit_pl_reward(&data, inst, &init, config.steps, config.step_size)?;
    let mut centered = truth.clone();
    centered.center();
    let mut csv = String::from("prompt,response,true_reward,fitted_reward\n");
    for x in 0..inst.num_prompts() {
        for y in 0..inst.count(x) {
            let _ = writeln!(
                csv,
                "{x},{y},{},{}",
                num(centered.get(x, y)),
                num(fit.rewards.get(x, y))
            );
        }
    }
    out.write("fitted_rewards.csv", &csv)?;
    summary.add("comparisons", config.comparisons);
    summary.add("pool_size", config.pool_size);
    summary.add("final_nll", num(fit.nll));
    summary.add("steps_taken", fit.steps_taken);
    summary.add("converged", fit.converged);
    summary.add("max_gap_error", num(max_gap_error(&fit.rewards, &truth)));
    Ok(())
}

/// `(label, two-player dual gap, n-player exploitability)` for every configured policy.
pub fn gap_rows(inst: &Instance, config: &GapConfig) -> HarnessResult<Vec<(String, f64, f64)>> {
    config
        .policies
        .iter()
        .map(|path| {
            let policy = read_policy(path, inst)?;
            let label = path.file_name().map_or_else(
                || path.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            );
            Ok((
                label,
                dual_gap_two_player(&policy, inst, config.tau)?,
                exploitability_multiplayer(
                    &policy,
                    config.n_players,
                    inst,
                    config.tau,
                    config.aggregator,
                )?,
            ))
        })
        .collect()
}

/// Gap values for a single policy with the mean-pairwise aggregator.
pub fn policy_gaps(
    inst: &Instance,
    policy: &Policy,
    tau: f64,
    n: usize,
) -> HarnessResult<(f64, f64)> {
    Ok((
        dual_gap_two_player(policy, inst, tau)?,
        exploitability_multiplayer(policy, n, inst, tau, Aggregator::mean_pairwise())?,
    ))
}
