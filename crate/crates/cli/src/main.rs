//! `svjq`: price options, persist grids and run error studies under the
//! stochastic volatility Jacobi model.

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::{ConfigError, Engine, RunConfig};
use run::{CliError, Output};

#[derive(Parser)]
#[command(name = "svjq", version, about = "Quantization pricing under the stochastic volatility Jacobi model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price one option or a strike ladder.
    Price {
        #[command(flatten)]
        common: Common,
        /// Strike ladder `lo:hi:step`.
        #[arg(long)]
        ladder: Option<String>,
    },
    /// Write quantization grids (poly) or the full lattice (rmq).
    Grids {
        #[command(flatten)]
        common: Common,
    },
    /// Error ladder, error bound check and density negativity scan.
    ErrorStudy {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// `key = value` config file, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// poly, rmq, series, mc or ls; overrides the config.
    #[arg(long)]
    engine: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(e) = &self.engine {
            cfg.engine = Engine::parse(e)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

/// `lo:hi:step` to the strikes `lo, lo + step, …` not above `hi`.
fn parse_ladder(s: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = || ConfigError::new("invalid_ladder", format!("ladder must be lo:hi:step with 0 < lo <= hi and step > 0, got '{s}'"));
    let parts: Vec<f64> = s.split(':').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else { return Err(bad()) };
    if !(lo > 0.0 && hi >= lo && step > 0.0) || !hi.is_finite() {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if n > 100_000 {
        return Err(bad());
    }
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

fn write_outputs(dir: &Path, command: &str, cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let io = |e: std::io::Error, p: &Path| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    for (name, body) in &out.files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| io(e, &p))?;
    }
    let mut manifest = serde_json::Map::new();
    manifest.insert("command".into(), json!(command));
    manifest.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    manifest.insert("params_hash".into(), json!(cfg.params_hash()));
    manifest.insert("config".into(), json!(cfg.to_map()));
    manifest.insert("files".into(), json!(out.files.iter().map(|f| &f.0).collect::<Vec<_>>()));
    manifest.extend(out.manifest.clone());
    let p = dir.join("resolved.cfg");
    std::fs::write(&p, cfg.to_text()).map_err(|e| io(e, &p))?;
    let p = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&Value::Object(manifest)).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&p, text).map_err(|e| io(e, &p))
}

fn execute(cli: Cli) -> Result<Value, CliError> {
    let (common, name) = match &cli.command {
        Command::Price { common, .. } => (common, "price"),
        Command::Grids { common } => (common, "grids"),
        Command::ErrorStudy { common } => (common, "error-study"),
    };
    let cfg = common.resolve()?;
    let verbose = common.verbose;
    let log = move |msg: &str| {
        if verbose {
            eprintln!("svjq: {msg}");
        }
    };
    let out = match &cli.command {
        Command::Price { ladder, .. } => {
            let strikes = ladder.as_deref().map(parse_ladder).transpose()?;
            run::cmd_price(&cfg, strikes.as_deref(), &log)?
        }
        Command::Grids { .. } | Command::ErrorStudy { .. } if common.out.is_none() => {
            return Err(ConfigError::new("missing_output", format!("{name} needs --out <dir>")).into());
        }
        Command::Grids { .. } => run::cmd_grids(&cfg, &log)?,
        Command::ErrorStudy { .. } => run::cmd_error_study(&cfg, &log)?,
    };
    if let Some(dir) = &common.out {
        write_outputs(dir, name, &cfg, &out)?;
        log(&format!("wrote {} files to {}", out.files.len() + 1, dir.display()));
    }
    Ok(out.summary)
}

fn fail(e: &CliError) -> ExitCode {
    let body = json!({ "error": { "code": e.code(), "message": e.message(), "exit_code": e.exit_code() } });
    eprintln!("{body}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Config(ConfigError::new("usage", e.to_string().trim_end()))),
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
