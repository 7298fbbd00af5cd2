//! Run configuration: a flat `key = value` file with `#` comments, or the
//! `config` object of a manifest written by an earlier run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use svjq::pricing::{Exercise, OptionKind, OptionSpec};
use svjq::rmq::DriftForm;
use svjq::{GaussianWeight, SvjParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub code: &'static str,
    pub message: String,
}

impl ConfigError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        ConfigError { code, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Poly,
    Rmq,
    Series,
    Mc,
    Ls,
}

impl Engine {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "poly" => Ok(Engine::Poly),
            "rmq" => Ok(Engine::Rmq),
            "series" => Ok(Engine::Series),
            "mc" => Ok(Engine::Mc),
            "ls" => Ok(Engine::Ls),
            _ => Err(ConfigError::new("invalid_value", format!("engine must be poly, rmq, series, mc or ls, got '{s}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Engine::Poly => "poly",
            Engine::Rmq => "rmq",
            Engine::Series => "series",
            Engine::Mc => "mc",
            Engine::Ls => "ls",
        }
    }
}

/// Every accepted key, in the order used by [`RunConfig::to_text`].
pub const KEYS: &[&str] = &[
    "kappa", "theta", "sigma", "rho", "v_min", "v_max", "r", "delta", "v0", "s0", "T", "mu_w", "sigma_w", "engine",
    "M", "N", "N_V", "N_S", "L", "paths", "steps", "seed", "tol", "drift", "basis_degree", "kind", "exercise",
    "strike", "dates", "n_ladder", "M_list", "bound_slack",
];

const MODEL_KEYS: &[&str] = &["kappa", "theta", "sigma", "rho", "v_min", "v_max", "r", "delta", "v0", "s0", "T"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SvjParams,
    pub maturity: f64,
    pub mu_w: Option<f64>,
    pub sigma_w: Option<f64>,
    pub engine: Engine,
    /// Hermite truncation order.
    pub m: usize,
    /// Size of the log-price grid.
    pub n: usize,
    pub n_v: usize,
    pub n_s: usize,
    /// Lattice steps.
    pub l: usize,
    pub paths: usize,
    /// Euler steps of the simulation engines.
    pub steps: usize,
    pub seed: u64,
    pub tol: f64,
    pub drift: DriftForm,
    pub basis_degree: usize,
    pub kind: OptionKind,
    pub exercise: Exercise,
    pub strike: f64,
    /// Number of equally spaced exercise dates of a Bermudan option.
    pub dates: usize,
    pub n_ladder: Vec<usize>,
    pub m_list: Vec<usize>,
    pub bound_slack: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: SvjParams::benchmark(),
            maturity: 1.0,
            mu_w: None,
            sigma_w: None,
            engine: Engine::Poly,
            m: 80,
            n: 20,
            n_v: 10,
            n_s: 20,
            l: 12,
            paths: 100_000,
            steps: 300,
            seed: 1,
            tol: 1e-9,
            drift: DriftForm::Proportional,
            basis_degree: 2,
            kind: OptionKind::Call,
            exercise: Exercise::European,
            strike: 100.0,
            dates: 12,
            n_ladder: vec![10, 20, 40, 80],
            m_list: vec![20, 40, 80],
            bound_slack: 1.15,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| ConfigError::new("invalid_value", format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(ConfigError::new("invalid_value", format!("{key}: '{v}' is not finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| ConfigError::new("invalid_value", format!("{key}: '{v}' is not a non-negative integer")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>, ConfigError> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_usize(key, s)).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses the `key = value` grammar. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::new("config_parse", format!("line {}: expected 'key = value'", lineno + 1)));
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::new("unknown_key", format!("unknown key '{k}'")));
            }
            if !seen.insert(k.clone()) {
                return Err(ConfigError::new("duplicate_key", format!("key '{k}' given more than once")));
            }
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Reads a config file, or the `config` object of a `manifest.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("io", format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| ConfigError::new("config_parse", format!("{}: {e}", path.display())))?;
            let Some(obj) = v.get("config").and_then(|c| c.as_object()) else {
                return Err(ConfigError::new("config_parse", "manifest has no 'config' object"));
            };
            let pairs = obj
                .iter()
                .map(|(k, v)| match v.as_str() {
                    Some(s) => Ok((k.clone(), s.to_string())),
                    None => Err(ConfigError::new("config_parse", format!("manifest value of '{k}' must be a string"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Self::from_pairs(pairs);
        }
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let p = &mut self.params;
        match key {
            "kappa" => p.kappa = parse_f64(key, v)?,
            "theta" => p.theta = parse_f64(key, v)?,
            "sigma" => p.sigma = parse_f64(key, v)?,
            "rho" => p.rho = parse_f64(key, v)?,
            "v_min" => p.v_min = parse_f64(key, v)?,
            "v_max" => p.v_max = parse_f64(key, v)?,
            "r" => p.r = parse_f64(key, v)?,
            "delta" => p.delta = parse_f64(key, v)?,
            "v0" => p.v0 = parse_f64(key, v)?,
            "s0" => p.s0 = parse_f64(key, v)?,
            "T" => self.maturity = parse_f64(key, v)?,
            "mu_w" => self.mu_w = if v == "auto" { None } else { Some(parse_f64(key, v)?) },
            "sigma_w" => self.sigma_w = if v == "auto" { None } else { Some(parse_f64(key, v)?) },
            "engine" => self.engine = Engine::parse(v)?,
            "M" => self.m = parse_usize(key, v)?,
            "N" => self.n = parse_usize(key, v)?,
            "N_V" => self.n_v = parse_usize(key, v)?,
            "N_S" => self.n_s = parse_usize(key, v)?,
            "L" => self.l = parse_usize(key, v)?,
            "paths" => self.paths = parse_usize(key, v)?,
            "steps" => self.steps = parse_usize(key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| ConfigError::new("invalid_value", format!("seed: '{v}'")))?,
            "tol" => self.tol = parse_f64(key, v)?,
            "drift" => {
                self.drift = match v {
                    "proportional" => DriftForm::Proportional,
                    "additive" => DriftForm::Additive,
                    _ => return Err(ConfigError::new("invalid_value", format!("drift must be proportional or additive, got '{v}'"))),
                }
            }
            "basis_degree" => self.basis_degree = parse_usize(key, v)?,
            "kind" => {
                self.kind = match v {
                    "call" => OptionKind::Call,
                    "put" => OptionKind::Put,
                    _ => return Err(ConfigError::new("invalid_value", format!("kind must be call or put, got '{v}'"))),
                }
            }
            "exercise" => {
                self.exercise = match v {
                    "european" => Exercise::European,
                    "bermudan" => Exercise::Bermudan,
                    _ => return Err(ConfigError::new("invalid_value", format!("exercise must be european or bermudan, got '{v}'"))),
                }
            }
            "strike" => self.strike = parse_f64(key, v)?,
            "dates" => self.dates = parse_usize(key, v)?,
            "n_ladder" => self.n_ladder = parse_list(key, v)?,
            "M_list" => self.m_list = parse_list(key, v)?,
            "bound_slack" => self.bound_slack = parse_f64(key, v)?,
            _ => return Err(ConfigError::new("unknown_key", format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    fn value(&self, key: &str) -> String {
        let p = &self.params;
        let opt = |x: Option<f64>| x.map_or("auto".to_string(), |v| v.to_string());
        match key {
            "kappa" => p.kappa.to_string(),
            "theta" => p.theta.to_string(),
            "sigma" => p.sigma.to_string(),
            "rho" => p.rho.to_string(),
            "v_min" => p.v_min.to_string(),
            "v_max" => p.v_max.to_string(),
            "r" => p.r.to_string(),
            "delta" => p.delta.to_string(),
            "v0" => p.v0.to_string(),
            "s0" => p.s0.to_string(),
            "T" => self.maturity.to_string(),
            "mu_w" => opt(self.mu_w),
            "sigma_w" => opt(self.sigma_w),
            "engine" => self.engine.name().to_string(),
            "M" => self.m.to_string(),
            "N" => self.n.to_string(),
            "N_V" => self.n_v.to_string(),
            "N_S" => self.n_s.to_string(),
            "L" => self.l.to_string(),
            "paths" => self.paths.to_string(),
            "steps" => self.steps.to_string(),
            "seed" => self.seed.to_string(),
            "tol" => self.tol.to_string(),
            "drift" => match self.drift {
                DriftForm::Proportional => "proportional",
                DriftForm::Additive => "additive",
            }
            .to_string(),
            "basis_degree" => self.basis_degree.to_string(),
            "kind" => match self.kind {
                OptionKind::Call => "call",
                OptionKind::Put => "put",
            }
            .to_string(),
            "exercise" => match self.exercise {
                Exercise::European => "european",
                Exercise::Bermudan => "bermudan",
            }
            .to_string(),
            "strike" => self.strike.to_string(),
            "dates" => self.dates.to_string(),
            "n_ladder" => join(&self.n_ladder),
            "M_list" => join(&self.m_list),
            "bound_slack" => self.bound_slack.to_string(),
            _ => unreachable!("key list and accessor disagree on '{key}'"),
        }
    }

    /// Every key with its resolved value. Floats print in shortest
    /// round-trip form, so re-parsing gives back the same config.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        KEYS.iter().map(|k| (k.to_string(), self.value(k))).collect()
    }

    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.value(k))).collect()
    }

    /// SHA-256 of the model parameter lines.
    pub fn params_hash(&self) -> String {
        let text: String = MODEL_KEYS.iter().map(|k| format!("{k} = {}\n", self.value(k))).collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn weight(&self) -> GaussianWeight {
        let auto = GaussianWeight::for_maturity(&self.params, self.maturity);
        GaussianWeight::new(self.mu_w.unwrap_or(auto.mu_w), self.sigma_w.unwrap_or(auto.sigma_w))
    }

    pub fn spec(&self, strike: f64) -> OptionSpec {
        match self.exercise {
            Exercise::European => OptionSpec::european(self.kind, strike, self.maturity),
            Exercise::Bermudan => OptionSpec::bermudan_uniform(self.kind, strike, self.maturity, self.dates),
        }
    }

    /// Engine-specific checks that the core library would only catch later.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::new("invalid_value", msg));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.exercise == Exercise::Bermudan && self.dates == 0 {
            return bad("dates must be at least 1 for a bermudan option".into());
        }
        match self.engine {
            Engine::Poly if self.n == 0 => bad("N must be at least 1".into()),
            Engine::Poly | Engine::Series if self.exercise == Exercise::Bermudan => {
                bad(format!("engine {} prices european options only", self.engine.name()))
            }
            Engine::Mc if self.exercise == Exercise::Bermudan => bad("engine mc prices european options only; use ls".into()),
            Engine::Ls if self.exercise == Exercise::European => bad("engine ls needs exercise = bermudan".into()),
            Engine::Mc | Engine::Ls if self.paths < 2 || self.steps == 0 => bad("paths must be at least 2 and steps at least 1".into()),
            Engine::Ls if self.steps % self.dates != 0 => {
                bad(format!("steps = {} must be a multiple of dates = {}", self.steps, self.dates))
            }
            Engine::Rmq if self.l == 0 || self.n_v == 0 || self.n_s == 0 => bad("L, N_V and N_S must be at least 1".into()),
            Engine::Rmq if self.exercise == Exercise::Bermudan && self.l % self.dates != 0 => {
                bad(format!("L = {} must be a multiple of dates = {}", self.l, self.dates))
            }
            _ => Ok(()),
        }
    }
}
