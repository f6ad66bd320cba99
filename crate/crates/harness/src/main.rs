use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mnpo_core::instances::validate_instance;
use mnpo_core::losses::PresetParams;
use mnpo_harness::experiment::{load_instance, policy_gaps, read_policy};
use mnpo_harness::presets::deviations_to_csv;
use mnpo_harness::{compare_presets, run_experiment, HarnessError, HarnessResult};

#[derive(Parser)]
#[command(
    name = "mnpo",
    about = "Tabular multiplayer Nash preference optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Compare every loss preset with its direct formula on random draws.
    Presets {
        instance: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Duality gap and exploitability of a policy.
    Gap {
        instance: PathBuf,
        policy: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
    /// Check an instance file and list every violated invariant.
    Validate { instance: PathBuf },
}

fn execute(command: Command) -> HarnessResult<()> {
    match command {
        Command::Run { config } => {
            let out = run_experiment(&config)?;
            print!("{}", out.summary.render());
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Presets {
            instance,
            samples,
            seed,
        } => {
            let inst = load_instance(&instance)?;
            let rows = compare_presets(&inst, samples, seed, PresetParams::default())?;
            print!("{}", deviations_to_csv(&rows));
        }
        Command::Gap {
            instance,
            policy,
            tau,
            n,
        } => {
            let inst = load_instance(&instance)?;
            let policy = read_policy(&policy, &inst)?;
            let (dual, expl) = policy_gaps(&inst, &policy, tau, n)?;
            println!(
                "dual_gap = {}",
                mnpo_core::format::format_significant(dual, 12)
            );
            println!(
                "exploitability = {}",
                mnpo_core::format::format_significant(expl, 12)
            );
        }
        Command::Validate { instance } => {
            let inst = load_instance(&instance)?;
            if let Err(violations) = validate_instance(&inst) {
                return Err(HarnessError::InvalidInstance {
                    path: instance,
                    reason: violations
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join("; "),
                });
            }
            println!(
                "valid: {} prompts, response counts {:?}",
                inst.num_prompts(),
                inst.space().counts()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
