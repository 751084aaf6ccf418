//! Command-line runner for the visual servoing simulator.

use clap::{Parser, Subcommand};
use ibvs_core::harness::{
    emit_summary, emit_trace, run_scenario_with, HarnessError, RunOptions, RunResult, Scenario,
};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const CONFIG_ERROR: u8 = 64;

#[derive(Parser)]
#[command(
    name = "ibvs",
    version,
    about = "Closed-loop visual servoing toward a spherical fruit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (a JSON file or a built-in name).
    Run {
        scenario: String,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root; results go to <root>/<scenario name>.
        #[arg(long, env = "IBVS_OUT_DIR", default_value = "runs")]
        out: PathBuf,
        /// Also write every camera frame and decision matrix as PGM.
        #[arg(long)]
        dump_frames: bool,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Run every *.json scenario in a directory, in parallel.
    Batch {
        dir: PathBuf,
        #[arg(long, env = "IBVS_OUT_DIR", default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Print the built-in scenarios.
    ListScenarios,
}

fn load(source: &str) -> Result<Scenario, HarnessError> {
    let path = Path::new(source);
    if path.exists() {
        return Scenario::from_file(path);
    }
    Scenario::builtin(source).ok_or_else(|| {
        HarnessError::Config(format!("no scenario file or built-in named {source:?}"))
    })
}

fn dump(
    dir: &Path,
    iteration: usize,
    view: &ibvs_core::harness::FrameView,
) -> Result<(), HarnessError> {
    let io = |e: ibvs_core::imaging::ImagingError| match e {
        ibvs_core::imaging::ImagingError::Io(e) => HarnessError::Io(e),
        other => HarnessError::Config(other.to_string()),
    };
    view.frame
        .write_pgm(dir.join(format!("frame_{iteration:05}.pgm")))
        .map_err(io)?;
    view.tracker
        .decision
        .to_frame()
        .write_pgm(dir.join(format!("belief_{iteration:05}.pgm")))
        .map_err(io)
}

/// Runs `s` and writes trace, summary and optionally frames under `dir`.
fn execute(
    s: &Scenario,
    dir: &Path,
    max_iters: Option<usize>,
    dump_frames: bool,
) -> Result<RunResult, HarnessError> {
    s.validate()?;
    std::fs::create_dir_all(dir)?;
    let frames = dir.join("frames");
    if dump_frames {
        std::fs::create_dir_all(&frames)?;
    }
    let mut dump_error = None;
    let opts = RunOptions {
        max_iterations: max_iters,
    };
    let result = run_scenario_with(s, opts, |view| {
        if dump_frames && dump_error.is_none() {
            dump_error = dump(&frames, view.iteration, view).err();
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    emit_trace(&result.trace, dir.join("trace.csv"))?;
    emit_summary(&result.summary(), dir.join("summary.json"))?;
    Ok(result)
}

/// Prints a one-line report and returns the process exit status.
fn conclude(source: &str, result: Result<(RunResult, PathBuf), HarnessError>) -> u8 {
    match result {
        Ok((r, dir)) => {
            let err = r
                .final_error()
                .map_or("n/a".to_string(), |e| format!("{e:.3e}"));
            println!(
                "{}: {:?} after {} iterations, err2 {err}, seed {} -> {}",
                r.scenario,
                r.outcome,
                r.iterations(),
                r.seed,
                dir.display()
            );
            r.outcome.exit_code() as u8
        }
        Err(e) => {
            eprintln!("{source}: {e}");
            e.exit_code() as u8
        }
    }
}

fn reseed(s: Scenario, seed: Option<u64>) -> Scenario {
    match seed {
        Some(seed) => s.with_seed(seed),
        None => s,
    }
}

fn run_one(
    source: &str,
    seed: Option<u64>,
    out: &Path,
    dump_frames: bool,
    max_iters: Option<usize>,
) -> u8 {
    let result = load(source).and_then(|s| {
        let s = reseed(s, seed);
        let dir = out.join(&s.name);
        execute(&s, &dir, max_iters, dump_frames).map(|r| (r, dir))
    });
    conclude(source, result)
}

fn batch(dir: &Path, out: &Path, seed: Option<u64>, max_iters: Option<usize>) -> u8 {
    let mut files: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => {
            eprintln!("{}: {e}", dir.display());
            return CONFIG_ERROR;
        }
    };
    if files.is_empty() {
        eprintln!("{}: no scenario files", dir.display());
        return CONFIG_ERROR;
    }
    files.sort();
    // Each file gets its own output directory, named after the file, so
    // parallel runs never share paths.
    let codes: Vec<u8> = files
        .par_iter()
        .map(|path| {
            let result = Scenario::from_file(path).and_then(|s| {
                let dir = out.join(path.file_stem().unwrap_or_default());
                execute(&reseed(s, seed), &dir, max_iters, false).map(|r| (r, dir))
            });
            conclude(&path.to_string_lossy(), result)
        })
        .collect();
    codes.into_iter().max().unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; help and version are not.
            return if e.use_stderr() {
                ExitCode::from(CONFIG_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let code = match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            dump_frames,
            max_iters,
        } => run_one(&scenario, seed, &out, dump_frames, max_iters),
        Command::Batch {
            dir,
            out,
            seed,
            max_iters,
        } => batch(&dir, &out, seed, max_iters),
        Command::ListScenarios => {
            for name in Scenario::builtin_names() {
                let s = Scenario::builtin(name).expect("built-in scenario parses");
                println!("{name}\t{}", s.description);
            }
            0
        }
    };
    ExitCode::from(code)
}
