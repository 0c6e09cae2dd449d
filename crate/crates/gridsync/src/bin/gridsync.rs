use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gridsync::run::{compare_spectra, run_scenario, RunOutput};
use gridsync::scenario::{Channel, Scenario};
use gridsync::sweep::{emit_sweep_csv, sweep};
use gridsync::{emit_csv, emit_report, SpectraPair};

/// Grid-tie synchronization simulator.
#[derive(Parser)]
#[command(name = "gridsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write traces.csv and metrics.txt.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the scenario at each frequency of a grid and write sweep.csv.
    Sweep {
        #[arg(long = "from")]
        from_hz: f64,
        #[arg(long = "to")]
        to_hz: f64,
        #[arg(long = "step")]
        step_hz: f64,
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the filtered SPWM output with a square-wave drive.
    Spectrum {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Phase-matching run with lock telemetry.
    Lock {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "sample-rate")]
    sample_rate: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self, path: &Path) -> Result<Scenario> {
        let mut s = Scenario::load(path)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(fs) = self.sample_rate {
            s.sample_rate_hz = fs;
        }
        if let Some(d) = self.duration {
            s.duration_s = d;
        }
        s.validate()
            .with_context(|| format!("{} after command-line overrides", path.display()))?;
        Ok(s)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn write_run(out: &RunOutput, dir: &Path, common: &Common) -> Result<()> {
    emit_csv(&out.traces, &dir.join("traces.csv"))?;
    emit_report(&out.metrics, &dir.join("metrics.txt"))?;
    for line in out.metrics.to_report().lines() {
        common.say(line);
    }
    Ok(())
}

fn write_spectrum_csv(sp: &SpectraPair, path: &Path) -> Result<()> {
    let mut text = String::from("order,spwm,spwm_relative,square,square_relative,square_series\n");
    for k in 1..=sp.spwm.magnitudes.len() {
        let series = if k % 2 == 1 { 1.0 / k as f64 } else { 0.0 };
        text.push_str(&format!(
            "{k},{},{},{},{},{series}\n",
            sp.spwm.magnitude(k),
            sp.spwm.relative(k),
            sp.square.magnitude(k),
            sp.square.relative(k)
        ));
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { scenario, common } => {
            let s = common.load(&scenario)?;
            let out = run_scenario(&s)?;
            write_run(&out, common.out_dir()?, &common)
        }
        Command::Sweep {
            from_hz,
            to_hz,
            step_hz,
            scenario,
            common,
        } => {
            let s = common.load(&scenario)?;
            let rows = sweep(from_hz, to_hz, step_hz, &s)?;
            emit_sweep_csv(&rows, &common.out_dir()?.join("sweep.csv"))?;
            let mut failed = 0;
            for row in &rows {
                match &row.outcome {
                    Ok(m) => common.say(format!(
                        "{:>8} Hz  zcd error {:.2e} Hz",
                        row.frequency_hz, m.zcd_final_error_hz
                    )),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{:>8} Hz  FAILED: {e}", row.frequency_hz);
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} sweep rows failed", rows.len());
            }
            Ok(())
        }
        Command::Spectrum { scenario, common } => {
            let s = common.load(&scenario)?;
            let (out, spectra) = compare_spectra(&s)?;
            let dir = common.out_dir()?;
            write_run(&out, dir, &common)?;
            write_spectrum_csv(&spectra, &dir.join("spectrum.csv"))
        }
        Command::Lock { scenario, common } => {
            let mut s = common.load(&scenario)?;
            if s.pll.is_none() {
                bail!("lock needs [pll] enabled in {}", scenario.display());
            }
            for ch in [
                Channel::Reference,
                Channel::Generated,
                Channel::Pv,
                Channel::Control,
                Channel::FrequencyCommand,
                Channel::Locked,
            ] {
                if !s.record.contains(&ch) {
                    s.record.push(ch);
                }
            }
            let out = run_scenario(&s)?;
            write_run(&out, common.out_dir()?, &common)?;
            if out.metrics.lock_time_s.is_none() {
                bail!("no lock within {} s", s.duration_s);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
