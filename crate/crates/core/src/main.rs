use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vpcc_rc::config::{ExperimentConfig, TargetSource};
use vpcc_rc::error::{Error, Result, Stage};
use vpcc_rc::experiment::{
    allocate_streams, fit_models_from_log, fit_models_from_sweep, prepare, read_report, render_summary, run_experiment,
    sig4, signed_term, write_partial_ledger, write_reports, ModelSet,
};
use vpcc_rc::metrics::bd_rate;
use vpcc_rc::rdlog::{parse_rate_curve, parse_rd_log};

#[derive(Parser)]
#[command(
    name = "vpcc-rc",
    version,
    about = "Geometry/color rate control for V-PCC, on a simulated codec"
)]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Geometry weight w of the overall quality.
    #[arg(long, global = true)]
    weight: Option<f64>,
    /// Quality dependency slope.
    #[arg(long, global = true)]
    kappa: Option<f64>,
    /// Total target bits; replaces the fixed-QP anchor.
    #[arg(long, global = true)]
    target_bits: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit R-D models from a CSV log, or from a simulator sweep.
    Fit {
        /// R-D log; defaults to `sequence.rd_log` of the config.
        log: Option<PathBuf>,
        /// Sequence to fit when the log holds several.
        #[arg(long)]
        sequence: Option<String>,
    },
    /// Split the budget between geometry and color.
    Allocate {
        #[arg(long)]
        theta_g: Option<f64>,
        #[arg(long)]
        theta_c: Option<f64>,
    },
    /// Run the full pipeline and write reports.
    Simulate,
    /// BD-rate of TEST against ANCHOR, both `rate,psnr` CSV files.
    Bdrate { anchor: PathBuf, test: PathBuf },
    /// Re-render the summary of a previous `simulate` run.
    Report {
        /// Directory holding report.json; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(w) = cli.weight {
        cfg.allocator.w = w;
    }
    if let Some(k) = cli.kappa {
        cfg.allocator.kappa = k;
    }
    if let Some(bits) = cli.target_bits {
        cfg.target.source = TargetSource::Explicit;
        cfg.target.bits = Some(bits);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_models(m: &ModelSet) {
    println!(
        "geometry: D_G = {}/R {}  (R2 {}, theta_g {})",
        sig4(m.geometry.a_g()),
        signed_term(m.geometry.b_g()),
        sig4(m.geometry_fit.r_squared),
        sig4(m.geometry.theta())
    );
    println!(
        "color:    D_C = {}*R^0.1 {}  (R2 {}, theta_c {})",
        sig4(m.color.a_c()),
        signed_term(m.color.b_c()),
        sig4(m.color_fit.r_squared),
        sig4(m.color.theta())
    );
    if let Some((dep, fit)) = &m.dependency {
        let flag = if dep.kappa_in_observed_range() {
            ""
        } else {
            ", outside the usual [0.1, 0.5]"
        };
        println!(
            "dependency: D_C = {}*D_G {}  (R2 {}{flag})",
            sig4(dep.kappa),
            signed_term(dep.b),
            sig4(fit.r_squared)
        );
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit { log, sequence } => {
            let cfg = load_config(cli)?;
            let unit = cfg.allocator.rate_unit_bits;
            let models = match log.as_ref().or(cfg.sequence.rd_log.as_ref()) {
                Some(path) => fit_models_from_log(&parse_rd_log(path)?, sequence.as_deref(), unit)?,
                None => fit_models_from_sweep(&cfg.profile()?, unit)?,
            };
            print_models(&models);
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
                let path = dir.join("models.json");
                let json = serde_json::to_string_pretty(&models).map_err(|e| Error::Invalid(e.to_string()))?;
                std::fs::write(&path, json + "\n").map_err(Error::io(&path))?;
            }
        }
        Command::Allocate { theta_g, theta_c } => {
            let mut cfg = load_config(cli)?;
            cfg.allocator.theta_g = theta_g.or(cfg.allocator.theta_g);
            cfg.allocator.theta_c = theta_c.or(cfg.allocator.theta_c);
            cfg.validate()?;
            let prep = prepare(&cfg)?;
            let a = allocate_streams(&cfg, &prep.profile, &prep.models, prep.target.total_bits)?;
            let (occ, patch) = prep.profile.constant_substream_bits();
            println!(
                "total target: {} bits (occupancy {}, patch {})",
                sig4(prep.target.total_bits),
                sig4(occ),
                sig4(patch)
            );
            println!(
                "theta_g {}, theta_c {}",
                sig4(prep.models.theta_g),
                sig4(prep.models.theta_c)
            );
            println!(
                "lambda {} after {} iterations{}",
                sig4(a.lambda),
                a.iterations,
                if a.converged { "" } else { " (range bound)" }
            );
            println!("geometry: {} bits", sig4(a.r_g_bits));
            println!("color:    {} bits", sig4(a.r_c_bits));
        }
        Command::Simulate => {
            let cfg = load_config(cli)?;
            let bundle = match run_experiment(&cfg) {
                Ok(b) => b,
                Err(e) => {
                    if let Ok(profile) = cfg.profile() {
                        if let Ok(Some(path)) = write_partial_ledger(&e, &profile, &cfg.output.dir) {
                            eprintln!("partial ledger written to {}", path.display());
                        }
                    }
                    return Err(e);
                }
            };
            write_reports(&bundle, &cfg.output.dir)?;
            print!("{}", render_summary(&bundle));
            eprintln!("reports written to {}", cfg.output.dir.display());
        }
        Command::Bdrate { anchor, test } => {
            let a = parse_rate_curve(anchor)?;
            let t = parse_rate_curve(test)?;
            println!("{}%", sig4(bd_rate(&a, &t)?));
        }
        Command::Report { dir } => {
            let dir = dir
                .clone()
                .or_else(|| cli.out.clone())
                .unwrap_or_else(|| ExperimentConfig::default().output.dir);
            let bundle = read_report(&dir).map_err(Error::at(Stage::Report))?;
            print!("{}", render_summary(&bundle));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
