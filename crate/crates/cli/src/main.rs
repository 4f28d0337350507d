use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use opfv::error::Error;
use opfv::harness::{
    apply_override, emit_report, run, tune_csv, ExperimentConfig, ExperimentReport,
};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "opfv",
    version,
    about = "Future off-policy evaluation and learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated off-policy evaluation at the target time.
    Fope(RunArgs),
    /// Replicated off-policy learning at the target time.
    Fopl(RunArgs),
    /// Time-feature tuning tables; the CSV is printed to stdout.
    Tune(RunArgs),
    /// Run the configured sweep.
    Sweep(RunArgs),
    /// Sample one logged dataset and write it as CSV.
    GenData(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single replicate with this data seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (for gen-data, a CSV path or a directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted `key=value` override applied to the config, e.g. `env.lambda=1.0`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write SVG line charts next to the CSVs.
    #[arg(long)]
    plot: bool,
}

fn load_config(args: &RunArgs, mode: Option<&str>) -> opfv::error::Result<ExperimentConfig> {
    let mut value: Value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config `{}`: {e}", path.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                Error::config(format!(
                    "config `{}` is not valid JSON: {e}",
                    path.display()
                ))
            })?
        }
        None => Value::Object(Default::default()),
    };
    if !value.is_object() {
        return Err(Error::config("config must be a JSON object"));
    }
    for o in &args.overrides {
        apply_override(&mut value, o)?;
    }
    if let Some(mode) = mode {
        value["mode"] = Value::String(mode.into());
    }
    if let Some(seed) = args.seed {
        value["seeds"] = Value::from(vec![seed]);
    }
    ExperimentConfig::from_value(value)
}

fn out_dir(report: &ExperimentReport, args: &RunArgs) -> Option<PathBuf> {
    args.out
        .clone()
        .or_else(|| report.config.out.as_ref().map(PathBuf::from))
}

fn write_outputs(report: &ExperimentReport, args: &RunArgs) -> opfv::error::Result<()> {
    match out_dir(report, args) {
        Some(dir) => {
            emit_report(report, &dir, args.plot)?;
            info!("wrote report to {}", dir.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(
                stdout,
                "method,sweep_value,mse,bias2,var,se_mse,n_seeds,n_failed"
            )?;
            for r in &report.agg {
                writeln!(
                    stdout,
                    "{},{},{},{},{},{},{},{}",
                    r.method, r.sweep_value, r.mse, r.bias2, r.var, r.se_mse, r.n_seeds, r.n_failed
                )?;
            }
        }
    }
    Ok(())
}

fn gen_data(args: &RunArgs) -> opfv::error::Result<()> {
    let config = load_config(args, None)?;
    let out = args
        .out
        .as_deref()
        .ok_or_else(|| Error::config("gen-data needs --out <file.csv>"))?;
    let out = if out.is_dir() {
        out.join("data.csv")
    } else {
        out.to_path_buf()
    };
    let seed = config.seeds.list()[0];
    let env = config.build_env(None, 0.0)?;
    let data = env.sample_logged_data(config.n, seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    data.write_csv(&out)?;
    info!("wrote {} records to {}", data.len(), out.display());
    Ok(())
}

fn experiment(args: &RunArgs, mode: &str) -> opfv::error::Result<()> {
    let config = load_config(args, Some(mode))?;
    info!("running {mode} with {} seeds", config.seeds.list().len());
    let report = run(&config)?;
    if mode == "tune" {
        print!("{}", tune_csv(&report.tune)?);
        if let Some(dir) = out_dir(&report, args) {
            emit_report(&report, &dir, args.plot)?;
        }
        return Ok(());
    }
    write_outputs(&report, args)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Fope(a) => experiment(a, "fope"),
        Command::Fopl(a) => experiment(a, "fopl"),
        Command::Tune(a) => experiment(a, "tune"),
        Command::Sweep(a) => experiment(a, "sweep"),
        Command::GenData(a) => gen_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
