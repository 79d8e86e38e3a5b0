use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fgm_pinn::experiment::{self, Experiment, ExperimentConfig, SweepAxis};
use fgm_pinn::geometry::save_point_cloud;
use fgm_pinn::mms::ErrorReport;
use fgm_pinn::Error;

#[derive(Parser)]
#[command(
    name = "fgm-pinn",
    version,
    about = "Train and score thermoelastic PINNs on graded materials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and score it.
    Run(Common),
    /// Train every combination of the given axes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...`; repeat for a cartesian product.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// Rows trained concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Score a saved checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write the collocation cloud of a configuration as CSV.
    ExportPoints {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config, or the metadata.json of an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// `key=value` override; dotted paths or unique bare keys.
    #[arg(long = "set")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate and build the problem without training.
    #[arg(long)]
    dry_run: bool,
}

impl Common {
    fn resolve(&self) -> fgm_pinn::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)
            .map_err(|e| match e {
                Error::Io { path, source } => Error::Usage(format!("cannot read {}: {source}", path.display())),
                other => other,
            })?
            .with_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.out.is_some() {
            cfg.out.clone_from(&self.out);
        }
        Ok(cfg)
    }
}

fn parse_axis(spec: &str) -> fgm_pinn::Result<SweepAxis> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("axis `{spec}` is not key=v1,v2,...")))?;
    // Split on commas outside brackets so array values survive.
    let mut out = Vec::new();
    let (mut depth, mut cur) = (0i32, String::new());
    for ch in values.chars() {
        match ch {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur).trim().to_string());
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur.trim().to_string());
    if out.iter().any(String::is_empty) {
        return Err(Error::Usage(format!("axis `{spec}` has an empty value")));
    }
    Ok(SweepAxis {
        key: key.trim().to_string(),
        values: out,
    })
}

fn print_report(report: &ErrorReport<f64>) {
    println!("{:<8} {:>8} {:>14}", "quantity", "time", "global_error");
    for r in &report.global {
        println!("{:<8} {:>8} {:>14.6e}", r.quantity.to_string(), r.time, r.global_error);
    }
}

fn dry_run(cfg: &ExperimentConfig) -> fgm_pinn::Result<()> {
    let exp = Experiment::build(cfg)?;
    let model = exp.init_model()?;
    let c = exp.colloc.counts();
    println!("config ok: {}", cfg.name);
    println!(
        "points: pde {} ic {} icv {} nbc {} dbc {}; test nodes {}; parameters {}",
        c.pde,
        c.ic,
        c.ic_velocity,
        c.nbc,
        c.dbc,
        exp.test_nodes.len(),
        model.num_params()
    );
    Ok(())
}

fn execute(cli: Cli) -> fgm_pinn::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            if common.dry_run {
                return dry_run(&cfg);
            }
            let outcome = experiment::run(&cfg)?;
            log::info!(
                "trained {} iterations in {:.1}s",
                outcome.metadata.iterations,
                outcome.metadata.wall_time_s
            );
            print_report(&outcome.report);
        }
        Command::Sweep { common, axes, parallel } => {
            let cfg = common.resolve()?;
            let axes = axes
                .iter()
                .map(|a| parse_axis(a))
                .collect::<fgm_pinn::Result<Vec<_>>>()?;
            if parallel == 0 {
                return Err(Error::Usage("--parallel must be at least 1".into()));
            }
            if common.dry_run {
                for row in experiment::sweep_assignments(&axes) {
                    let o: Vec<String> = row.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    dry_run(&cfg.with_overrides(&o)?)?;
                }
                return Ok(());
            }
            let rows = experiment::sweep(&cfg, &axes, parallel)?;
            let mut failed = 0;
            for row in &rows {
                let label: Vec<String> = row.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
                match &row.outcome {
                    Ok(r) => match r.max_stress_error() {
                        Some(e) => println!("{}: max stress error {e:e}", label.join(" ")),
                        None => println!("{}: ok", label.join(" ")),
                    },
                    Err(msg) => {
                        failed += 1;
                        println!("{}: failed: {msg}", label.join(" "));
                    }
                }
            }
            if failed == rows.len() {
                return Err(Error::Numeric {
                    location: "sweep".into(),
                    message: "every row failed".into(),
                });
            }
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = common.resolve()?;
            if common.dry_run {
                return dry_run(&cfg);
            }
            print_report(&experiment::evaluate_checkpoint(&cfg, &checkpoint)?);
        }
        Command::ExportPoints { common } => {
            let cfg = common.resolve()?;
            let exp = Experiment::build(&cfg)?;
            if common.dry_run {
                return dry_run(&cfg);
            }
            let dir = cfg.out.as_deref().unwrap_or(Path::new("."));
            std::fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("{}: {e}", dir.display())))?;
            let path = dir.join("points.csv");
            save_point_cloud(&exp.colloc.cloud, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        e if e.is_config() => 2,
        Error::Numeric { .. } | Error::Balancing(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
