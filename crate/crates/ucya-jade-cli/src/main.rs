//! Command-line experiment driver.
//!
//! `run` executes a config file's Monte-Carlo experiment and writes
//! `trials.csv` / `summary.csv`; `crlb` prints the numerical bounds for the
//! config's scenario; `selftest` runs the built-in invariant checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ucya_jade::crlb::{crlb, PipelinePoint};
use ucya_jade::harness::{emit_csv, parse_config, run_experiment};
use ucya_jade::mdsi::MdsiMode;
use ucya_jade::Error;

#[derive(Parser)]
#[command(name = "ucya-jade", about = "Wideband hybrid-UCyA channel parameter estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo experiment described by a config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the interpolation mode
        /// (as_printed | offset_corrected | disabled).
        #[arg(long)]
        mdsi_mode: Option<String>,
    },
    /// Print numerical Cramér-Rao bounds for the config's scenario.
    Crlb {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Domain(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn dispatch() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            mdsi_mode,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            if let Some(mode) = mdsi_mode {
                cfg.mdsi_mode = mode.parse::<MdsiMode>()?;
            }
            let result = run_experiment(&cfg)?;
            let (trials_path, summary_path) = emit_csv(&result, &cfg.out_dir)?;
            let excluded: usize = result.trials.iter().filter(|t| t.excluded).count();
            let mean_ms = result.trials.iter().map(|t| t.wall_ms).sum::<f64>()
                / result.trials.len().max(1) as f64;
            println!(
                "{} trials ({} excluded), mean {:.1} ms/trial",
                result.trials.len(),
                excluded,
                mean_ms
            );
            for row in &result.summary {
                if row.parameter == "delay_s"
                    || row.parameter == "elevation_rad"
                    || row.parameter == "azimuth_rad"
                    || row.parameter == "position_m"
                {
                    println!(
                        "{} = {:>12}: rmse {:.6e}  crlb {:.6e}",
                        result.sweep_label, row.sweep_value, row.rmse, row.crlb
                    );
                }
            }
            println!("wrote {} and {}", trials_path.display(), summary_path.display());
            Ok(())
        }
        Command::Crlb { config, seed } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let report = crlb(&cfg.array, &cfg.scenario, PipelinePoint::Antenna)?;
            println!(
                "antenna-level bounds at snr {} dB (fisher condition {:.3e})",
                report.snr_db, report.condition_number
            );
            for (l, b) in report.per_path.iter().enumerate() {
                println!(
                    "path {l}: sigma_tau {:.6e} s, sigma_theta {:.6e} rad, sigma_phi {:.6e} rad",
                    b[0], b[1], b[2]
                );
            }
            Ok(())
        }
        Command::Selftest => selftest(),
    }
}

/// Quick invariant sweep over the numerical core; exits nonzero on failure.
fn selftest() -> Result<(), Error> {
    use ucya_jade::array_model::{highest_order, phase_mode_approx_error};
    use ucya_jade::bessel::bessel_j;
    use ucya_jade::SPEED_OF_LIGHT;

    let mut failures = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // Bessel convergence bound
    let bound = bessel_j(1, 1.0)? + 1e-6;
    let mut lemma_ok = true;
    for step in 1..=20 {
        let rho = 0.05 * step as f64;
        let mut prev = f64::INFINITY;
        for v in 1..=50i64 {
            let val = bessel_j(v, v as f64 * rho)?;
            if !(val > 0.0 && val <= bound && val <= prev + 1e-12) {
                lemma_ok = false;
            }
            prev = val;
        }
    }
    check("bessel convergence bound over order grid", lemma_ok);

    // highest order for the reference geometry
    let f0 = 30e9;
    let lam = SPEED_OF_LIGHT / f0;
    check("highest order P = 12 at r = 2 lambda0", highest_order(f0, 2.0 * lam) == 12);

    // phase-mode truncation quality
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        for k in 0..10 {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / 10.0;
            let theta = (15.0 + 150.0 * k as f64 / 9.0).to_radians();
            worst = worst.max(phase_mode_approx_error(30, 12, f0, 2.0 * lam, phi, theta)?);
        }
    }
    check("phase-mode approximation error below 1% (N_H = 30)", worst < 1e-2);

    if failures > 0 {
        return Err(Error::Degenerate(format!("{failures} selftest failures")));
    }
    Ok(())
}
