use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use cvqueue::harness::{self, ModeKind, ScenarioConfig};
use cvqueue::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    #[value(name = "no_feedback")]
    NoFeedback,
    Feedback,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WindowArg {
    Fixed,
    Dynamic,
}

/// Run the queue-prediction scenario matrix and write CSV reports.
#[derive(Debug, Parser)]
#[command(name = "cvqueue", version)]
struct Cli {
    /// TOML scenario file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Packet loss rates as fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    loss: Option<Vec<f64>>,
    /// CV penetration levels as fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    penetration: Option<Vec<f64>>,
    /// Restrict to the no-feedback or the feedback modes.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Restrict feedback runs to one training-window policy.
    #[arg(long, value_enum)]
    window: Option<WindowArg>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Simulated seconds per run.
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write per-step trajectory, delivery, window, store and timeline CSVs.
    #[arg(long)]
    trace: bool,
}

fn select_modes(mode: Option<ModeArg>, window: Option<WindowArg>) -> Result<Option<Vec<ModeKind>>, Error> {
    let feedback = |w: Option<WindowArg>| match w {
        None => vec![ModeKind::FeedbackFixed, ModeKind::FeedbackDynamic],
        Some(WindowArg::Fixed) => vec![ModeKind::FeedbackFixed],
        Some(WindowArg::Dynamic) => vec![ModeKind::FeedbackDynamic],
    };
    match (mode, window) {
        (None, None) => Ok(None),
        (Some(ModeArg::NoFeedback), Some(_)) => Err(Error::InvalidConfig(
            "--window only applies to feedback modes".into(),
        )),
        (Some(ModeArg::NoFeedback), None) => Ok(Some(vec![ModeKind::NoFeedback])),
        (Some(ModeArg::Feedback), w) | (None, w @ Some(_)) => Ok(Some(feedback(w))),
    }
}

fn build_config(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(l) = &cli.loss {
        cfg.loss_rates = l.clone();
    }
    if let Some(p) = &cli.penetration {
        cfg.penetrations = p.clone();
    }
    if let Some(m) = select_modes(cli.mode, cli.window)? {
        cfg.modes = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.seeds {
        cfg.n_seeds = n;
    }
    if let Some(d) = cli.duration {
        cfg.duration_s = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_grid(report: &harness::AccuracyReport) {
    println!("{:<18} {:>6} {:>6} {:>9} {:>7}", "mode", "loss", "pen", "accuracy", "std");
    for c in &report.grid {
        println!(
            "{:<18} {:>6.2} {:>6.2} {:>9.4} {:>7.4}",
            c.mode.name(),
            c.loss_rate,
            c.penetration,
            c.mean_accuracy,
            c.std
        );
    }
    for o in &report.overall {
        println!(
            "{}: mean diff {:+.4} over {} cells, t = {:.3}, p = {:.3e}",
            o.pair, o.mean_difference, o.n_cells, o.t_statistic, o.p_value
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::from(2);
    }
    let scenario_path = cli.out.join("scenario.toml");
    if let Err(e) = cfg.to_toml().and_then(|t| fs::write(&scenario_path, t).map_err(|e| Error::storage(&scenario_path, e))) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    let trace_dir = cli.trace.then(|| cli.out.join("trace"));
    let runs = match harness::collect_runs(&cfg, trace_dir.as_deref()) {
        Ok(r) => r,
        Err(failure) => {
            eprintln!("error: {failure}");
            let dir = cli.out.join("partial");
            match harness::build_report(&failure.partial, cfg.significance_level)
                .and_then(|r| harness::emit_report(&r, &dir))
            {
                Ok(p) => eprintln!("partial results written to {}", p.accuracy.display()),
                Err(e) => eprintln!("could not write partial results: {e}"),
            }
            return ExitCode::from(1);
        }
    };
    let report = match harness::build_report(&runs, cfg.significance_level) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match harness::emit_report(&report, &cli.out) {
        Ok(paths) => {
            print_grid(&report);
            println!("wrote {}", paths.accuracy.display());
            println!("wrote {}", paths.comparisons.display());
            println!("wrote {}", paths.overall.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
