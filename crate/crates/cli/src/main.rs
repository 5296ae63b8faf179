//! Command-line front end: design, simulate, reconstruct, predict and
//! bandwidth analysis driven by a TOML experiment config or a preset.

mod commands;
mod config;
mod units;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Result;

#[derive(Parser)]
#[command(
    name = "noisespec",
    version,
    about = "Non-Gaussian qubit noise spectroscopy by sequence repetition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or search the sequence set; write sequences, switching functions and the design matrix
    Design(Common),
    /// Simulate decay parameters of the set under the configured noise
    Simulate(Common),
    /// Invert decay parameters for the spectra on the harmonic grid
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Observables CSV to invert instead of simulating them
        #[arg(long)]
        observables: Option<PathBuf>,
    },
    /// Predict free-evolution decay from a reconstruction and compare with oracles
    Predict {
        #[command(flatten)]
        common: Common,
        /// Reconstruction CSV to use instead of running the inversion
        #[arg(long)]
        reconstruction: Option<PathBuf>,
    },
    /// Report the set's bandwidth, resolvable harmonics and degeneracies
    Bandwidth(Common),
    /// Run design, simulate, reconstruct and predict and write a summary
    Pipeline(Common),
}

#[derive(Args)]
struct Common {
    /// Preset name (fig1, fig2, fig4, alvarez-suter); a config may extend one with `preset = "..."`
    preset: Option<String>,
    /// TOML experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for sequence search and Monte Carlo (overrides `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a config value, e.g. --set timing.repetitions=20
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<config::ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        Ok(config::load(
            self.config.as_deref(),
            self.preset.as_deref(),
            &overrides,
        )?)
    }
}

fn report(title: &str, lines: &[String]) {
    println!("[{title}]");
    for l in lines {
        println!("{l}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design(c) => {
            let cfg = c.load()?;
            let (_, lines) = commands::design(&cfg, &c.out)?;
            report("design", &lines);
        }
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let (set, _) = commands::build_set(&cfg)?;
            let records = commands::simulate(&cfg, &set, &c.out)?;
            report(
                "simulate",
                &[format!(
                    "{} records written to {}",
                    records.len(),
                    show(&c.out, "observables.csv")
                )],
            );
        }
        Command::Reconstruct { common: c, observables } => {
            let cfg = c.load()?;
            let (set, _) = commands::build_set(&cfg)?;
            let records = match observables {
                Some(path) => commands::read_records(&path)?,
                None => commands::simulate(&cfg, &set, &c.out)?,
            };
            let (_, lines) = commands::reconstruct(&cfg, &set, &records, &c.out)?;
            report("reconstruct", &lines);
        }
        Command::Predict {
            common: c,
            reconstruction,
        } => {
            let cfg = c.load()?;
            let (set, _) = commands::build_set(&cfg)?;
            let recon = match reconstruction {
                Some(path) => commands::read_reconstruction(&cfg, &set, &path)?,
                None => {
                    let records = commands::simulate(&cfg, &set, &c.out)?;
                    commands::reconstruct(&cfg, &set, &records, &c.out)?.0
                }
            };
            let lines = commands::predict(&cfg, &recon, &c.out)?;
            report("predict", &lines);
        }
        Command::Bandwidth(c) => {
            let cfg = c.load()?;
            let (set, _) = commands::build_set(&cfg)?;
            let lines = commands::bandwidth(&cfg, &set, &c.out)?;
            report("bandwidth", &lines);
        }
        Command::Pipeline(c) => {
            let cfg = c.load()?;
            let (set, design) = commands::design(&cfg, &c.out)?;
            report("design", &design);
            let band = commands::bandwidth(&cfg, &set, &c.out)?;
            report("bandwidth", &band);
            let records = commands::simulate(&cfg, &set, &c.out)?;
            let (recon, rec_lines) = commands::reconstruct(&cfg, &set, &records, &c.out)?;
            report("reconstruct", &rec_lines);
            let mut sections = vec![("design", design), ("bandwidth", band), ("reconstruct", rec_lines)];
            if cfg.prediction.is_some() {
                let pred = commands::predict(&cfg, &recon, &c.out)?;
                report("predict", &pred);
                sections.push(("predict", pred));
            }
            let path = commands::write_summary(&c.out, &sections)?;
            println!("summary written to {}", path.display());
        }
    }
    Ok(())
}

fn show(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
