//! Experiment configuration: a TOML document with one table per concern.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! and type errors are collected and reported together.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use fracwave::noise::{GridSpec, Sampler};
use fracwave::params::strong_solution_threshold;
use fracwave::solver::{InitialData, SigmaSpec};
use serde_json::{json, Value};
use toml::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Holder,
    KernelsVerify,
    Chaos,
    Params,
    Covariance,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::Holder,
        Command::KernelsVerify,
        Command::Chaos,
        Command::Params,
        Command::Covariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Holder => "holder",
            Command::KernelsVerify => "kernels-verify",
            Command::Chaos => "chaos",
            Command::Params => "params",
            Command::Covariance => "covariance",
        }
    }

    fn solves(self) -> bool {
        matches!(self, Command::Simulate | Command::Holder)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

/// All problems found in a config, in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaChoice {
    Zero,
    Linear(f64),
    ScaledSine(f64),
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialChoice {
    Gaussian,
    Constant(f64),
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub eps: f64,
    pub n_max: usize,
    pub tol: f64,
    pub realizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormSection {
    pub p: f64,
    pub lag_min: usize,
    pub lag_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosSection {
    pub t: f64,
    pub x: f64,
    pub xi_cutoff: f64,
    pub xi_nodes: usize,
    pub lags: Vec<f64>,
    pub scan_eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsSection {
    pub p: f64,
    pub eps: Option<f64>,
    pub h_grid: Vec<f64>,
    pub p_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelsSection {
    pub t: f64,
    pub alphas: Vec<f64>,
    pub xi_max: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub out: PathBuf,
    pub grid: GridSpec,
    pub hurst: f64,
    pub sampler: Sampler,
    pub sigma: SigmaChoice,
    pub initial: InitialChoice,
    pub solver: SolverSection,
    pub norm: NormSection,
    pub chaos: ChaosSection,
    pub params: ParamsSection,
    pub kernels: KernelsSection,
    pub covariance_lags: Vec<usize>,
    /// Theory thresholds that are not met; the run still proceeds.
    pub warnings: Vec<String>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["t_count", "x_count", "dt", "dx", "x0"]),
    ("noise", &["hurst", "sampler"]),
    ("sigma", &["kind", "a", "points"]),
    ("initial", &["kind", "value"]),
    ("solver", &["eps", "n_max", "tol", "realizations"]),
    ("norm", &["p", "lag_min", "lag_max"]),
    ("chaos", &["t", "x", "xi_cutoff", "xi_nodes", "lags", "scan_eps"]),
    ("params", &["p", "eps", "h_grid", "p_grid"]),
    ("kernels", &["t", "alphas", "xi_max", "draws"]),
    ("covariance", &["lags"]),
];

const TOP_LEVEL: &[&str] = &["command", "seed", "out"];

struct Reader<'a> {
    root: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn value(&mut self, section: &str, key: &str) -> Option<&'a toml::Value> {
        if section.is_empty() {
            return self.root.get(key);
        }
        match self.root.get(section) {
            Some(toml::Value::Table(t)) => t.get(key),
            _ => None,
        }
    }

    fn path(section: &str, key: &str) -> String {
        if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        }
    }

    fn float(&mut self, section: &str, key: &str, default: f64) -> f64 {
        self.opt_float(section, key).unwrap_or(default)
    }

    fn opt_float(&mut self, section: &str, key: &str) -> Option<f64> {
        match self.value(section, key) {
            None => None,
            Some(toml::Value::Float(v)) => Some(*v),
            Some(toml::Value::Integer(v)) => Some(*v as f64),
            Some(other) => {
                self.errors.push(format!(
                    "{} must be a number, got {}",
                    Self::path(section, key),
                    other.type_str()
                ));
                None
            }
        }
    }

    fn uint(&mut self, section: &str, key: &str, default: u64) -> u64 {
        match self.value(section, key) {
            None => default,
            Some(toml::Value::Integer(v)) if *v >= 0 => *v as u64,
            Some(other) => {
                self.errors.push(format!(
                    "{} must be a non-negative integer, got {other}",
                    Self::path(section, key)
                ));
                default
            }
        }
    }

    fn string(&mut self, section: &str, key: &str, default: &str) -> String {
        match self.value(section, key) {
            None => default.to_string(),
            Some(toml::Value::String(s)) => s.clone(),
            Some(other) => {
                self.errors.push(format!(
                    "{} must be a string, got {}",
                    Self::path(section, key),
                    other.type_str()
                ));
                default.to_string()
            }
        }
    }

    fn floats(&mut self, section: &str, key: &str, default: Vec<f64>) -> Vec<f64> {
        match self.value(section, key) {
            None => default,
            Some(toml::Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for v in items {
                    match v {
                        toml::Value::Float(f) => out.push(*f),
                        toml::Value::Integer(i) => out.push(*i as f64),
                        other => {
                            self.errors.push(format!(
                                "{} entries must be numbers, got {}",
                                Self::path(section, key),
                                other.type_str()
                            ));
                            return default;
                        }
                    }
                }
                out
            }
            Some(other) => {
                self.errors.push(format!(
                    "{} must be an array, got {}",
                    Self::path(section, key),
                    other.type_str()
                ));
                default
            }
        }
    }

    fn pairs(&mut self, section: &str, key: &str) -> Vec<(f64, f64)> {
        let Some(v) = self.value(section, key) else {
            return Vec::new();
        };
        let parsed = v.as_array().and_then(|items| {
            items
                .iter()
                .map(|p| {
                    let a = p.as_array()?;
                    let num = |v: &toml::Value| v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
                    match a.as_slice() {
                        [x, y] => Some((num(x)?, num(y)?)),
                        _ => None,
                    }
                })
                .collect::<Option<Vec<_>>>()
        });
        parsed.unwrap_or_else(|| {
            self.errors.push(format!(
                "{} must be an array of [u, sigma] pairs",
                Self::path(section, key)
            ));
            Vec::new()
        })
    }

    fn unknown_keys(&mut self) {
        let known: BTreeSet<&str> = SECTIONS
            .iter()
            .map(|(s, _)| *s)
            .chain(TOP_LEVEL.iter().copied())
            .collect();
        for (key, value) in self.root {
            if !known.contains(key.as_str()) {
                self.errors.push(format!("unknown key `{key}`"));
                continue;
            }
            if let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == key) {
                match value {
                    toml::Value::Table(t) => {
                        for k in t.keys().filter(|k| !keys.contains(&k.as_str())) {
                            self.errors.push(format!("unknown key `{key}.{k}`"));
                        }
                    }
                    _ => self.errors.push(format!("`{key}` must be a table")),
                }
            }
        }
    }
}

fn powers_of_half(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

/// Parses a config that names its own `command`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse(text, None)
}

/// Parses a config for `command`; a `command` key in the text must agree.
pub fn parse_config_for(command: Command, text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse(text, Some(command))
}

fn parse(text: &str, command: Option<Command>) -> Result<ExperimentConfig, ConfigErrors> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("syntax: {}", e.message())]))?;
    let mut r = Reader {
        root: &root,
        errors: Vec::new(),
    };
    r.unknown_keys();

    let named = r.value("", "command").map(|_| r.string("", "command", ""));
    let command = match (command, named) {
        (Some(c), None) => c,
        (None, Some(n)) => match n.parse() {
            Ok(c) => c,
            Err(e) => return Err(ConfigErrors(vec![e])),
        },
        (Some(c), Some(n)) if c.name() == n => c,
        (Some(c), Some(n)) => {
            r.errors
                .push(format!("config names command `{n}` but `{c}` was requested"));
            c
        }
        (None, None) => return Err(ConfigErrors(vec!["missing key `command`".into()])),
    };
    let seed = r.uint("", "seed", 0);
    let out = PathBuf::from(r.string("", "out", "out"));

    let dx = r.float("grid", "dx", 1.0 / 64.0);
    let dt = r.float("grid", "dt", dx);
    let t_count = r.uint("grid", "t_count", 65) as usize;
    let x_count = r.uint("grid", "x_count", 129) as usize;
    let x0 = r.float("grid", "x0", -0.5 * (x_count.saturating_sub(1)) as f64 * dx);
    let grid = match GridSpec::new(t_count, x_count, dt, dx, 0.0, x0) {
        Ok(g) => g,
        Err(e) => {
            r.errors.push(format!("grid: {e}"));
            GridSpec {
                t_count: 2,
                x_count: 2,
                dt: 1.0,
                dx: 1.0,
                t0: 0.0,
                x0: 0.0,
            }
        }
    };

    let hurst = r.float("noise", "hurst", 0.4);
    if !(hurst > 0.0 && hurst <= 0.5) {
        r.errors.push(format!("H = {hurst} outside (0, 1/2]"));
    } else if command.solves() && !(hurst > 0.25 && hurst < 0.5) {
        r.errors
            .push(format!("H = {hurst} outside (1/4, 1/2), where the solver is defined"));
    }
    let sampler = match r.string("noise", "sampler", "auto").as_str() {
        "auto" => Sampler::Auto,
        "cholesky" => Sampler::Cholesky,
        other => {
            r.errors
                .push(format!("noise.sampler must be `auto` or `cholesky`, got `{other}`"));
            Sampler::Auto
        }
    };

    let a = r.float("sigma", "a", 1.0);
    let sigma = match r.string("sigma", "kind", "linear").as_str() {
        "zero" => SigmaChoice::Zero,
        "linear" => SigmaChoice::Linear(a),
        "scaled_sine" => SigmaChoice::ScaledSine(a),
        "tabulated" => SigmaChoice::Tabulated(r.pairs("sigma", "points")),
        other => {
            r.errors.push(format!(
                "sigma.kind `{other}` is not one of zero, linear, scaled_sine, tabulated"
            ));
            SigmaChoice::Zero
        }
    };
    if let SigmaChoice::Tabulated(points) = &sigma {
        if let Err(e) = SigmaSpec::tabulated(points.clone()) {
            r.errors.push(format!("sigma.points: {e}"));
        }
    }
    let value = r.float("initial", "value", 1.0);
    let initial = match r.string("initial", "kind", "gaussian").as_str() {
        "gaussian" => InitialChoice::Gaussian,
        "constant" => InitialChoice::Constant(value),
        "zero" => InitialChoice::Zero,
        other => {
            r.errors
                .push(format!("initial.kind `{other}` is not one of gaussian, constant, zero"));
            InitialChoice::Zero
        }
    };

    let default_n = if command == Command::Holder { 500 } else { 1 };
    let solver = SolverSection {
        eps: r.float("solver", "eps", 4.0 * dx * dx),
        n_max: r.uint("solver", "n_max", 12) as usize,
        tol: r.float("solver", "tol", 1e-3),
        realizations: r.uint("solver", "realizations", default_n) as usize,
    };
    if !(solver.eps > 0.0) {
        r.errors.push(format!("solver.eps = {} must be positive", solver.eps));
    }
    if solver.n_max == 0 || solver.realizations == 0 {
        r.errors
            .push("solver.n_max and solver.realizations must be at least 1".into());
    }
    if !(solver.tol > 0.0) {
        r.errors.push("solver.tol must be positive".into());
    }

    let norm = NormSection {
        p: r.float("norm", "p", 8.0),
        lag_min: r.uint("norm", "lag_min", 2) as usize,
        lag_max: r.uint("norm", "lag_max", 16) as usize,
    };
    if !(norm.p >= 1.0) {
        r.errors.push(format!("norm.p = {} must be at least 1", norm.p));
    }
    if !(1 <= norm.lag_min && norm.lag_min < norm.lag_max) {
        r.errors.push("norm lags need 1 <= lag_min < lag_max".into());
    }

    let chaos = ChaosSection {
        t: r.float("chaos", "t", 1.0),
        x: r.float("chaos", "x", 0.0),
        xi_cutoff: r.float("chaos", "xi_cutoff", 256.0),
        xi_nodes: r.uint("chaos", "xi_nodes", 4096) as usize,
        lags: r.floats("chaos", "lags", powers_of_half(4, 8)),
        scan_eps: r.floats("chaos", "scan_eps", powers_of_half(4, 9)),
    };
    if command == Command::Chaos && !(hurst < 0.5) {
        r.errors.push("chaos diagnostics need H < 1/2".into());
    }
    if !(chaos.t > 0.0) {
        r.errors.push("chaos.t must be positive".into());
    }

    let params = ParamsSection {
        p: r.float("params", "p", 10.0),
        eps: r.opt_float("params", "eps"),
        h_grid: r.floats("params", "h_grid", (0..10).map(|i| 0.27 + 0.022 * i as f64).collect()),
        p_grid: r.floats("params", "p_grid", (0..10).map(|j| 3.0 * 1.6f64.powi(j)).collect()),
    };
    if !(params.p > 1.0) {
        r.errors.push(format!("params.p = {} must exceed 1", params.p));
    }
    if params.eps.is_some_and(|e| !(e > 0.0)) {
        r.errors.push("params.eps must be positive".into());
    }

    let kernels = KernelsSection {
        t: r.float("kernels", "t", 1.0),
        alphas: r.floats("kernels", "alphas", vec![0.55, 0.7, 0.85]),
        xi_max: r.float("kernels", "xi_max", 20.0),
        draws: r.uint("kernels", "draws", 1000) as usize,
    };
    if kernels.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        r.errors.push("kernels.alphas must lie in (0, 1)".into());
    }
    if !(kernels.t > 0.0 && kernels.xi_max > 0.0) {
        r.errors.push("kernels.t and kernels.xi_max must be positive".into());
    }

    let covariance_lags = r
        .floats("covariance", "lags", vec![0.0, 1.0, 2.0, 4.0, 8.0])
        .into_iter()
        .map(|l| l as usize)
        .collect::<Vec<_>>();
    if command == Command::Covariance && covariance_lags.iter().any(|&l| l >= grid.x_count) {
        r.errors.push("covariance.lags must be below grid.x_count".into());
    }

    let mut warnings = Vec::new();
    if command.solves() && hurst > 0.25 && hurst < 0.5 {
        let threshold = strong_solution_threshold(&hurst);
        if norm.p <= threshold {
            warnings.push(format!(
                "norm.p = {} <= 2/(4H-1) = {threshold:.4}: the strong-solution guarantee needs p above this threshold",
                norm.p
            ));
        }
    }
    if command == Command::Params && hurst > 0.25 && hurst < 0.5 {
        let threshold = strong_solution_threshold(&hurst);
        if params.p <= threshold {
            warnings.push(format!("params.p = {} <= 2/(4H-1) = {threshold:.4}", params.p));
        }
    }

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }
    Ok(ExperimentConfig {
        command,
        seed,
        out,
        grid,
        hurst,
        sampler,
        sigma,
        initial,
        solver,
        norm,
        chaos,
        params,
        kernels,
        covariance_lags,
        warnings,
    })
}

impl ExperimentConfig {
    pub fn sigma_spec(&self) -> fracwave::Result<SigmaSpec> {
        Ok(match &self.sigma {
            SigmaChoice::Zero => SigmaSpec::zero(),
            SigmaChoice::Linear(a) => SigmaSpec::linear(*a),
            SigmaChoice::ScaledSine(a) => SigmaSpec::scaled_sine(*a),
            SigmaChoice::Tabulated(p) => SigmaSpec::tabulated(p.clone())?,
        })
    }

    pub fn initial_data(&self) -> InitialData {
        match self.initial {
            InitialChoice::Gaussian => InitialData::gaussian(),
            InitialChoice::Constant(c) => InitialData::constant(c),
            InitialChoice::Zero => InitialData::zero(),
        }
    }

    /// Resolved configuration, defaults included, as echoed in the manifest.
    pub fn to_json(&self) -> Value {
        let sigma = match &self.sigma {
            SigmaChoice::Zero => json!({"kind": "zero"}),
            SigmaChoice::Linear(a) => json!({"kind": "linear", "a": a}),
            SigmaChoice::ScaledSine(a) => json!({"kind": "scaled_sine", "a": a}),
            SigmaChoice::Tabulated(p) => json!({"kind": "tabulated", "points": p}),
        };
        let initial = match self.initial {
            InitialChoice::Gaussian => json!({"kind": "gaussian"}),
            InitialChoice::Constant(c) => json!({"kind": "constant", "value": c}),
            InitialChoice::Zero => json!({"kind": "zero"}),
        };
        let g = &self.grid;
        json!({
            "command": self.command.name(),
            "seed": self.seed,
            "grid": {"t_count": g.t_count, "x_count": g.x_count, "dt": g.dt, "dx": g.dx, "x0": g.x0},
            "noise": {"hurst": self.hurst, "sampler": match self.sampler { Sampler::Auto => "auto", Sampler::Cholesky => "cholesky" }},
            "sigma": sigma,
            "initial": initial,
            "solver": {"eps": self.solver.eps, "n_max": self.solver.n_max, "tol": self.solver.tol, "realizations": self.solver.realizations},
            "norm": {"p": self.norm.p, "lag_min": self.norm.lag_min, "lag_max": self.norm.lag_max},
            "chaos": {"t": self.chaos.t, "x": self.chaos.x, "xi_cutoff": self.chaos.xi_cutoff, "xi_nodes": self.chaos.xi_nodes, "lags": self.chaos.lags, "scan_eps": self.chaos.scan_eps},
            "params": {"p": self.params.p, "eps": self.params.eps, "h_grid": self.params.h_grid, "p_grid": self.params.p_grid},
            "kernels": {"t": self.kernels.t, "alphas": self.kernels.alphas, "xi_max": self.kernels.xi_max, "draws": self.kernels.draws},
            "covariance": {"lags": self.covariance_lags},
        })
    }
}
