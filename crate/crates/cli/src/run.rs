//! The three commands. Each returns the files it wants written and a JSON
//! summary; nothing here touches the file system.

use serde_json::{json, Value};
use svjq::error_lab;
use svjq::hermite::TruncatedDensity;
use svjq::model::{hermite_moments, HermiteMoments};
use svjq::pricing::{self, Exercise, McConfig, OptionSpec, PricingReport};
use svjq::quantizer::{poly, NewtonConfig, QuantGrid};
use svjq::rmq::{build_lattice, EulerConfig, RmqLattice};

use crate::config::{ConfigError, Engine, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(svjq::Error),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(e) => e.code,
            CliError::Core(e) => e.code(),
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(e) => e.message.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::Io(m) => m.clone(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<svjq::Error> for CliError {
    fn from(e: svjq::Error) -> Self {
        CliError::Core(e)
    }
}

/// Files to write, in order, plus the JSON printed on stdout.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub summary: Value,
    /// Extra manifest fields.
    pub manifest: serde_json::Map<String, Value>,
}

fn json_text(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn newton(cfg: &RunConfig) -> NewtonConfig {
    NewtonConfig { tol: cfg.tol, ..NewtonConfig::default() }
}

fn moments(cfg: &RunConfig) -> Result<HermiteMoments, CliError> {
    Ok(hermite_moments(&cfg.params, cfg.maturity, &cfg.weight(), cfg.m)?)
}

fn log_grid(cfg: &RunConfig, lm: &HermiteMoments) -> Result<QuantGrid, CliError> {
    Ok(poly::quantize_log_price_with(lm, cfg.n, &newton(cfg))?)
}

fn lattice(cfg: &RunConfig) -> Result<RmqLattice, CliError> {
    let mut e = EulerConfig::new(cfg.l, cfg.maturity, cfg.n_v, cfg.n_s);
    e.drift = cfg.drift;
    e.newton = newton(cfg);
    Ok(build_lattice(&cfg.params, &e)?)
}

fn lattice_manifest(cfg: &RunConfig) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert(
        "lattice".into(),
        json!({ "L": cfg.l, "Delta": cfg.maturity / cfg.l as f64, "N_V": cfg.n_v, "N_S": cfg.n_s }),
    );
    m
}

fn simulated_csv(reports: &[PricingReport]) -> String {
    let mut s = String::from("strike,price,std_error\n");
    for r in reports {
        s += &format!("{},{:.10},{:.10}\n", r.spec.strike, r.price, r.std_error().unwrap_or(0.0));
    }
    s
}

/// Columns `strike,benchmark,quantization,relative_error_pct`.
fn comparison_csv(strikes: &[f64], bench: &[f64], quant: &[f64]) -> String {
    let mut s = String::from("strike,benchmark,quantization,relative_error_pct\n");
    for ((k, b), q) in strikes.iter().zip(bench).zip(quant) {
        s += &format!("{k},{b:.10},{q:.10},{:.6}\n", 100.0 * (q - b) / b);
    }
    s
}

/// `price`: one report, or one per strike when a ladder is given.
pub fn cmd_price(cfg: &RunConfig, ladder: Option<&[f64]>, log: &dyn Fn(&str)) -> Result<Output, CliError> {
    cfg.validate()?;
    let strikes: Vec<f64> = ladder.map_or_else(|| vec![cfg.strike], <[f64]>::to_vec);
    let specs: Vec<OptionSpec> = strikes.iter().map(|k| cfg.spec(*k)).collect();
    let r = cfg.params.r;
    let mut out = Output::default();
    let mut table: Option<String> = None;

    let reports: Vec<PricingReport> = match cfg.engine {
        Engine::Series | Engine::Poly => {
            log(&format!("hermite moments up to M = {}", cfg.m));
            let lm = moments(cfg)?;
            out.files.push(("moments.csv".into(), lm.to_csv()));
            let d = TruncatedDensity::new(lm.clone());
            let series = specs.iter().map(|s| pricing::price_series(&d, s, r)).collect::<Result<Vec<_>, _>>()?;
            if cfg.engine == Engine::Series {
                let mut s = String::from("strike,price\n");
                for rep in &series {
                    s += &format!("{},{:.10}\n", rep.spec.strike, rep.price);
                }
                table = Some(s);
                series
            } else {
                log(&format!("stationary grid, N = {}", cfg.n));
                let grid = log_grid(cfg, &lm)?.exp_mapped();
                let quant = specs.iter().map(|s| pricing::price_european_grid(&grid, s, r)).collect::<Result<Vec<_>, _>>()?;
                let b: Vec<f64> = series.iter().map(|x| x.price).collect();
                let q: Vec<f64> = quant.iter().map(|x| x.price).collect();
                table = Some(comparison_csv(&strikes, &b, &q));
                quant
            }
        }
        Engine::Rmq => {
            log(&format!("lattice L = {}, N_V = {}, N_S = {}", cfg.l, cfg.n_v, cfg.n_s));
            let lat = lattice(cfg)?;
            out.manifest = lattice_manifest(cfg);
            let quant = specs.iter().map(|s| pricing::price_bermudan(&lat, s, r)).collect::<Result<Vec<_>, _>>()?;
            if ladder.is_some() {
                let bench: Vec<f64> = if cfg.exercise == Exercise::European {
                    log("series benchmark");
                    let d = TruncatedDensity::new(moments(cfg)?);
                    specs.iter().map(|s| pricing::price_series(&d, s, r).map(|x| x.price)).collect::<Result<_, _>>()?
                } else {
                    log("Longstaff-Schwartz benchmark on the lattice dates");
                    specs
                        .iter()
                        .map(|s| pricing::ls_bermudan(&cfg.params, s, cfg.paths, cfg.l, cfg.basis_degree, cfg.seed).map(|x| x.price))
                        .collect::<Result<_, _>>()?
                };
                let q: Vec<f64> = quant.iter().map(|x| x.price).collect();
                table = Some(comparison_csv(&strikes, &bench, &q));
            }
            quant
        }
        Engine::Mc => {
            log(&format!("Euler Monte Carlo, {} paths x {} steps", cfg.paths, cfg.steps));
            let mc = McConfig { paths: cfg.paths, steps: cfg.steps, seed: cfg.seed, drift: cfg.drift };
            let reps = pricing::mc_european_ladder(&cfg.params, &specs, &mc)?;
            table = Some(simulated_csv(&reps));
            reps
        }
        Engine::Ls => {
            log(&format!("Longstaff-Schwartz, {} paths x {} steps", cfg.paths, cfg.steps));
            let reps = specs
                .iter()
                .map(|s| pricing::ls_bermudan(&cfg.params, s, cfg.paths, cfg.steps, cfg.basis_degree, cfg.seed))
                .collect::<Result<Vec<_>, _>>()?;
            table = Some(simulated_csv(&reps));
            reps
        }
    };

    out.summary = if ladder.is_some() { json!(reports) } else { json!(reports[0]) };
    out.files.push(("report.json".into(), json_text(&out.summary)));
    if let (Some(t), Some(_)) = (table, ladder) {
        out.files.push(("ladder.csv".into(), t));
    }
    Ok(out)
}

fn joint_csv(lat: &RmqLattice, k: usize) -> String {
    let (nv, ns) = lat.dims(k);
    let mut s = String::from("i,j,weight\n");
    for i in 0..nv {
        for j in 0..ns {
            s += &format!("{},{},{:.17e}\n", i + 1, j + 1, lat.joint(k, i, j));
        }
    }
    s
}

/// Non-zero transition probabilities; indices start at 1.
fn transition_csv(lat: &RmqLattice, k: usize) -> String {
    let tr = &lat.transitions[k];
    let mut s = String::from("i,j,i_next,j_next,prob\n");
    for i in 0..tr.src.0 {
        for j in 0..tr.src.1 {
            for (idx, p) in tr.row(i, j).iter().enumerate() {
                if *p > 0.0 {
                    s += &format!("{},{},{},{},{:.17e}\n", i + 1, j + 1, idx / tr.dst.1 + 1, idx % tr.dst.1 + 1, p);
                }
            }
        }
    }
    s
}

/// `grids`: the log-price grid (poly) or the whole lattice (rmq).
pub fn cmd_grids(cfg: &RunConfig, log: &dyn Fn(&str)) -> Result<Output, CliError> {
    cfg.validate()?;
    let mut out = Output::default();
    match cfg.engine {
        Engine::Poly => {
            let lm = moments(cfg)?;
            log(&format!("stationary grid, N = {}", cfg.n));
            let g = log_grid(cfg, &lm)?;
            out.files.push(("grid.csv".into(), g.to_csv()));
            out.summary = json!({
                "units": g.units,
                "n": g.len(),
                "M": cfg.m,
                "residual": g.diagnostics.residual,
                "iterations": g.diagnostics.iterations,
            });
        }
        Engine::Rmq => {
            log(&format!("lattice L = {}, N_V = {}, N_S = {}", cfg.l, cfg.n_v, cfg.n_s));
            let lat = lattice(cfg)?;
            for k in 0..=lat.steps() {
                out.files.push((format!("v_grid_{k:02}.csv"), lat.v_grids[k].to_csv()));
                out.files.push((format!("s_grid_{k:02}.csv"), lat.s_grids[k].to_csv()));
                out.files.push((format!("joint_{k:02}.csv"), joint_csv(&lat, k)));
                if k < lat.steps() {
                    out.files.push((format!("transition_{k:02}.csv"), transition_csv(&lat, k)));
                }
            }
            let defect = lat.transitions.iter().map(|t| t.max_row_defect).fold(0.0, f64::max);
            out.summary = json!({
                "dims": (0..=lat.steps()).map(|k| lat.dims(k)).collect::<Vec<_>>(),
                "max_row_defect": defect,
                "marginal_defects": lat.marginal_defects,
            });
            out.manifest = lattice_manifest(cfg);
        }
        e => {
            return Err(ConfigError::new("invalid_value", format!("grids needs engine poly or rmq, got {}", e.name())).into());
        }
    }
    Ok(out)
}

/// `error-study`: price error ladder, bound check and negativity scan.
pub fn cmd_error_study(cfg: &RunConfig, log: &dyn Fn(&str)) -> Result<Output, CliError> {
    cfg.validate()?;
    if cfg.engine != Engine::Poly {
        return Err(ConfigError::new("invalid_value", format!("error-study needs engine poly, got {}", cfg.engine.name())).into());
    }
    if cfg.n_ladder.is_empty() {
        return Err(ConfigError::new("invalid_value", "n_ladder is empty").into());
    }
    let w = cfg.weight();
    let lm = moments(cfg)?;
    let spec = cfg.spec(cfg.strike);
    log(&format!("error ladder {:?} at M = {}", cfg.n_ladder, cfg.m));
    let study = error_lab::error_study(&lm, &cfg.n_ladder, cfg.params.r, &spec)?;
    let bound = error_lab::bound_check(&study, cfg.bound_slack);
    log(&format!("negativity scan {:?}", cfg.m_list));
    let rows = error_lab::density_negativity_scan(&cfg.m_list, &cfg.params, cfg.maturity, &w)?;
    let flagged: Vec<usize> = rows.iter().filter(|r| r.min_density < 0.0).map(|r| r.m).collect();

    let mut out = Output::default();
    out.files.push(("err2.csv".into(), study.to_csv()));
    out.files.push(("bound.csv".into(), bound.to_csv()));
    out.files.push(("negativity.csv".into(), error_lab::negativity_csv(&rows)));
    out.summary = json!({
        "study": study,
        "bound_check": bound,
        "negativity": rows,
        "negative_density_at_M": flagged,
    });
    out.files.push(("study.json".into(), json_text(&out.summary)));
    Ok(out)
}
