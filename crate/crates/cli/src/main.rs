use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsda_core::harness::{
    make_observations, prepare_truth, run_sweep, run_twin, truth_metadata, validate, write_outputs, write_sweep_csv,
};
use nsda_core::obs::write_observations;
use nsda_core::{energy_spectrum, run_experiment, Error, ExperimentConfig, SpectralField, SpectralGrid, SweepAxis};

const EXIT_CONFIG: u8 = 2;
const EXIT_BLOWUP: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "nsda", version, about = "3DVAR filtering for 2D Navier-Stokes on a periodic torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override `section.key=value`; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed (same as `--set noise.seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spin up and generate the truth trajectory and its observations.
    Simulate(Common),
    /// Full assimilation experiment.
    Assimilate(Common),
    /// Two filters on identical observations from different initial draws.
    Twin {
        #[command(flatten)]
        common: Common,
        /// Seed of the second filter's initial draw (default: seed + 1000).
        #[arg(long)]
        second_seed: Option<u64>,
    },
    /// Independent experiments over one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// eta, alpha, lambda_over_lambda1, nu or h_substeps.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// Shell energy spectrum of a SPECFIELD snapshot.
    Spectrum {
        snapshot: PathBuf,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solver and filter self-checks.
    Validate {
        /// Skip the long steady-state return check.
        #[arg(long)]
        quick: bool,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut sets = common.sets.clone();
    if let Some(seed) = common.seed {
        sets.push(format!("noise.seed={seed}"));
    }
    ExperimentConfig::load(common.config.as_deref(), &sets)
}

/// Echoes the configuration to stderr when a run blows up.
fn echo_on_blowup<T>(cfg: &ExperimentConfig, r: Result<T, Error>) -> Result<T, Error> {
    if let Err(Error::Blowup { .. }) = &r {
        eprintln!("configuration of the failed run:\n{}", cfg.to_toml_string());
    }
    r
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn simulate(common: &Common) -> Result<(), Error> {
    let cfg = load(common)?;
    let truth = echo_on_blowup(&cfg, prepare_truth(&cfg))?;
    std::fs::create_dir_all(&common.out)?;
    let mut w = BufWriter::new(File::create(common.out.join("truth.csv"))?);
    writeln!(w, "j,t,energy")?;
    for (j, u) in truth.trajectory.iter().enumerate() {
        writeln!(w, "{j},{:.16e},{:.16e}", j as f64 * cfg.observation_interval(), u.energy())?;
    }
    w.flush()?;
    truth.trajectory[0].write_snapshot(BufWriter::new(File::create(common.out.join("truth_initial.specfield"))?))?;
    truth
        .trajectory
        .last()
        .expect("non-empty trajectory")
        .write_snapshot(BufWriter::new(File::create(common.out.join("truth_final.specfield"))?))?;
    let obs: Vec<_> = make_observations(&cfg, &truth)?.into_iter().flatten().collect();
    write_observations(
        BufWriter::new(File::create(common.out.join("observations.obsseq"))?),
        &obs,
        &cfg.noise_model()?,
    )?;
    write_json(
        &common.out.join(&cfg.outputs.json),
        &serde_json::json!({ "config": cfg.to_json(), "metadata": truth_metadata(&truth) }),
    )?;
    println!(
        "truth: {} states, spin-up {} time units (converged: {})",
        truth.trajectory.len(),
        truth.spin_elapsed,
        truth.spin_converged
    );
    Ok(())
}

fn print_summary(result: &nsda_core::ExperimentResult) {
    let s = &result.summary;
    println!(
        "plateau median |e|^2 = {:.6e} (lower {:.6e}, upper {:.6e}); below upper on {:.1}% of steps",
        s.plateau_median,
        s.plateau_lower,
        s.plateau_upper,
        100.0 * s.fraction_below_upper
    );
    if let Some(a) = s.fitted_rate {
        println!("fitted twin contraction rate a = {a:.6}");
    }
}

fn assimilate(common: &Common) -> Result<(), Error> {
    let cfg = load(common)?;
    let result = echo_on_blowup(&cfg, run_experiment(&cfg))?;
    write_outputs(&cfg, &result, &common.out)?;
    print_summary(&result);
    Ok(())
}

fn twin(common: &Common, second_seed: Option<u64>) -> Result<(), Error> {
    let cfg = load(common)?;
    let second = second_seed.unwrap_or(cfg.estimate_seed().wrapping_add(1000));
    let result = echo_on_blowup(&cfg, run_twin(&cfg, second))?;
    write_outputs(&cfg, &result, &common.out)?;
    print_summary(&result);
    Ok(())
}

fn sweep(common: &Common, axis: &str, values: &[f64]) -> Result<(), Error> {
    let cfg = load(common)?;
    let axis: SweepAxis = axis.parse()?;
    let entries = run_sweep(&cfg, axis, values);
    std::fs::create_dir_all(&common.out)?;
    write_sweep_csv(BufWriter::new(File::create(common.out.join("sweep.csv"))?), axis, &entries)?;
    write_json(
        &common.out.join("sweep.json"),
        &serde_json::json!({ "config": cfg.to_json(), "axis": axis.name(), "entries": entries }),
    )?;
    for e in &entries {
        match &e.outcome {
            Ok(s) => println!("{} = {}: plateau median {:.6e}", axis.name(), e.value, s.plateau_median),
            Err(msg) => println!("{} = {}: error: {msg}", axis.name(), e.value),
        }
    }
    Ok(())
}

fn spectrum(path: &Path, out: Option<&Path>) -> Result<(), Error> {
    let mut header = String::new();
    BufReader::new(File::open(path)?).read_line(&mut header)?;
    let (n, l) = SpectralField::peek_snapshot_grid(header.trim_end())?;
    let grid = SpectralGrid::new(n, l, 2)?;
    let u = SpectralField::read_snapshot(BufReader::new(File::open(path)?), &grid)?;
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(w, "shell,energy")?;
    for (shell, e) in energy_spectrum(&u) {
        writeln!(w, "{shell},{e:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Simulate(c) => simulate(c)?,
        Command::Assimilate(c) => assimilate(c)?,
        Command::Twin { common, second_seed } => twin(common, *second_seed)?,
        Command::Sweep { common, axis, values } => sweep(common, axis, values)?,
        Command::Spectrum { snapshot, out } => spectrum(snapshot, out.as_deref())?,
        Command::Validate { quick } => {
            let outcomes = validate::run_battery(*quick);
            for o in &outcomes {
                let tag = if o.passed { "PASS" } else { "FAIL" };
                println!("{tag} {} ({:.2}s): {}", o.name, o.seconds, o.detail);
            }
            if outcomes.iter().any(|o| !o.passed) {
                return Ok(ExitCode::from(EXIT_CHECK));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Domain(_) | Error::GridMismatch(_) => ExitCode::from(EXIT_CONFIG),
                Error::Blowup { .. } => ExitCode::from(EXIT_BLOWUP),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
