//! Pipelines behind each command. Every pipeline computes its artifacts in
//! memory; files are written only once all compute has succeeded.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fracwave::chaos::*;
use fracwave::kernels::*;
use fracwave::noise::*;
use fracwave::norms::{holder_exponent, Axis};
use fracwave::params::*;
use fracwave::solver::*;
use fracwave::stats::mean_se;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{Command, ConfigErrors, ExperimentConfig};

pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".lock";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("{module}: {source}")]
    Numeric {
        module: &'static str,
        source: fracwave::Error,
    },
    #[error("check failed: {0}")]
    Check(String),
    #[error("output directory {0} is locked by another run (remove {LOCK} if stale)")]
    Locked(PathBuf),
    #[error("i/o on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn numeric(module: &'static str) -> impl Fn(fracwave::Error) -> RunError {
    move |source| RunError::Numeric { module, source }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Files produced by one run, keyed by name.
pub type Artifacts = BTreeMap<String, Vec<u8>>;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub files: Vec<String>,
    pub manifest: Value,
}

/// Git blob hash with SHA-256: sha256("blob <len>\0" ++ bytes), hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(RunError::Locked(dir.to_path_buf())),
            Err(e) => Err(io(&path)(e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Executes the configured pipeline and writes its artifacts plus the
/// manifest into `config.out`. On failure every file this run wrote is
/// removed again.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let _lock = Lock::acquire(&config.out)?;
    let artifacts = compute(config)?;
    let mut outputs = serde_json::Map::new();
    for (name, bytes) in &artifacts {
        outputs.insert(
            name.clone(),
            json!({"bytes": bytes.len(), "sha256": content_hash(bytes)}),
        );
    }
    let manifest = json!({
        "tool": "fracwave",
        "version": env!("CARGO_PKG_VERSION"),
        "command": config.command.name(),
        "seed": config.seed,
        "config": config.to_json(),
        "warnings": config.warnings,
        "outputs": outputs,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        for (name, bytes) in artifacts
            .iter()
            .chain([(&MANIFEST.to_string(), &text.clone().into_bytes())])
        {
            let path = config.out.join(name);
            written.push(path.clone());
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    let mut files: Vec<String> = artifacts.keys().cloned().collect();
    files.push(MANIFEST.to_string());
    Ok(RunSummary {
        out: config.out.clone(),
        files,
        manifest,
    })
}

/// The pipeline without any file system effect.
pub fn compute(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    match config.command {
        Command::Simulate => simulate(config),
        Command::Holder => holder(config),
        Command::KernelsVerify => kernels_verify(config),
        Command::Chaos => chaos(config),
        Command::Params => params(config),
        Command::Covariance => covariance(config),
    }
}

fn problem(config: &ExperimentConfig) -> Result<PicardProblem, RunError> {
    let noise = NoiseParams::new(config.hurst, config.seed).map_err(numeric("noise"))?;
    let sigma = config.sigma_spec().map_err(numeric("solver"))?;
    let mut pb = PicardProblem::new(config.grid, noise, sigma, config.initial_data());
    pb.eps = config.solver.eps;
    pb.n_max = config.solver.n_max;
    pb.tol_z2 = config.solver.tol;
    pb.sampler = config.sampler;
    Ok(pb)
}

fn simulate(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let pb = problem(config)?;
    let sol = solve_ensemble(&pb, config.solver.realizations).map_err(numeric("solver"))?;
    let mut out = Artifacts::new();
    let mut field = Vec::new();
    sol.write_csv(0, &mut field).map_err(numeric("solver"))?;
    out.insert("solution.csv".into(), field);
    let mut res = Vec::new();
    sol.write_residuals_csv(&mut res).map_err(numeric("solver"))?;
    out.insert("residuals.csv".into(), res);
    Ok(out)
}

fn holder(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let pb = problem(config)?;
    let sol = solve_ensemble(&pb, config.solver.realizations).map_err(numeric("solver"))?;
    let mut csv = String::from("axis,p,slope,stderr,lags\n");
    for axis in [Axis::Time, Axis::Space] {
        let fit = holder_exponent(
            &sol.field,
            axis,
            config.norm.p,
            (config.norm.lag_min, config.norm.lag_max),
        )
        .map_err(numeric("norms"))?;
        csv.push_str(&fit.csv_line());
        csv.push('\n');
    }
    Ok(Artifacts::from([("holder.csv".to_string(), csv.into_bytes())]))
}

fn kernels_verify(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let k = &config.kernels;
    let steps = (2.0 * k.xi_max / 0.5).round() as usize;
    let xi: Vec<f64> = (0..=steps).map(|i| -k.xi_max + 0.5 * i as f64).collect();
    let m = numeric("kernels");
    let mut csv = String::from("check,parameter,value,tolerance,pass\n");
    let mut failed = Vec::new();
    let mut row = |check: &str, param: String, value: f64, tol: f64| {
        let pass = value < tol;
        if !pass {
            failed.push(format!("{check} {param}"));
        }
        csv.push_str(&format!("{check},{param},{value:e},{tol:e},{pass}\n"));
    };
    let e = verify_fourier_pair(&KernelSpec::poisson(), k.t, &xi, 2.0 * k.t, 1e-8).map_err(&m)?;
    row("fourier_pair", "E".into(), e.max_abs_error, 1e-8);
    for &a in &k.alphas {
        for spec in [
            KernelSpec::sine(a).map_err(&m)?,
            KernelSpec::cosine(1.0 - a).map_err(&m)?,
        ] {
            let r = verify_fourier_pair(&spec, k.t, &xi, 2.0 * k.t, 1e-4).map_err(&m)?;
            row("fourier_pair", r.kernel.replace(',', ";"), r.max_abs_error, 1e-4);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..k.draws {
        let (t, s) = (rng.random_range(0.01..5.0), rng.random_range(0.01..5.0));
        let (a, b) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
        let x = rng.random_range(-50.0..50.0);
        worst = worst.max(verify_decomposition_fourier(t, s, a, b, x).map_err(&m)?);
    }
    row("decomposition_fourier", format!("{} draws", k.draws), worst, 1e-12);
    let u: Vec<f64> = (0..=60).map(|i| -1.49 + 0.05 * i as f64).collect();
    let space = verify_decomposition_space(1.0, 0.2, 0.6, &u, 0.7, 0.7)
        .map_err(&m)?
        .iter()
        .map(|p| p.residual)
        .fold(0.0, f64::max);
    row("decomposition_space", "t=1 s=0.2 r=0.6".into(), space, 5e-2);
    for i in 1..10 {
        let th = i as f64 / 10.0;
        let (q, c) = beta_identity_check(th, 0.0, 1.0).map_err(&m)?;
        row("beta_identity", format!("theta={th}"), (q - c).abs(), 1e-6);
    }
    if !failed.is_empty() {
        return Err(RunError::Check(format!(
            "kernels: {} above tolerance",
            failed.join(", ")
        )));
    }
    Ok(Artifacts::from([("kernels.csv".to_string(), csv.into_bytes())]))
}

fn chaos(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let c = &config.chaos;
    let m = numeric("chaos");
    let cfg = ChaosConfig {
        xi_cutoff: c.xi_cutoff,
        xi_nodes: c.xi_nodes,
        ..ChaosConfig::new(config.hurst, c.t, c.x).map_err(&m)?
    };
    cfg.validate().map_err(&m)?;
    let mut csv = String::from("quantity,parameter,value,truncation_error\n");
    let i1 = i1_second_moment(&cfg).map_err(&m)?;
    csv.push_str(&format!("i1_second_moment,,{},{}\n", i1.value, i1.truncation_error));
    for e in dh_i1_profile(&cfg, &c.lags).map_err(&m)?.iter().zip(&c.lags) {
        csv.push_str(&format!(
            "dh_i1_second_moment,{},{},{}\n",
            e.1, e.0.value, e.0.truncation_error
        ));
    }
    csv.push_str(&format!(
        "i2_upper_term,,{},0\n",
        i2_upper_term(config.hurst).map_err(&m)?
    ));
    let scan = i2_divergence_scan(&cfg, &c.scan_eps).map_err(&m)?;
    let mut scan_csv = Vec::new();
    write_scan_csv(&scan, &mut scan_csv).map_err(&m)?;
    let fit = match scan_increment_slope(&scan) {
        Ok(f) => {
            json!({"fit": "ln increment vs ln eps", "slope": f.slope, "stderr": f.slope_stderr, "r_squared": f.r_squared})
        }
        Err(e) => json!({"fit": "ln increment vs ln eps", "error": e.to_string()}),
    };
    let mut fit_text = serde_json::to_string_pretty(&fit).expect("fit serializes");
    fit_text.push('\n');
    Ok(Artifacts::from([
        ("chaos.csv".to_string(), csv.into_bytes()),
        ("scan.csv".to_string(), scan_csv),
        ("scan_fit.json".to_string(), fit_text.into_bytes()),
    ]))
}

fn params(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let m = numeric("params");
    let (h, p) = (config.hurst, config.params.p);
    let mut report = String::from("system,inequality,lhs,rhs,pass\n");
    if p * h > 1.0 {
        let eps = config.params.eps.unwrap_or_else(|| default_eps(&h, &p));
        let set = feasible_point(h, p, eps).map_err(&m)?;
        for id in SystemId::ALL {
            for line in check_system(id, &set).csv_lines() {
                report.push_str(&line);
                report.push('\n');
            }
        }
    }
    let mut hs = config.params.h_grid.clone();
    if h > 0.25 && h < 0.5 && !hs.contains(&h) {
        hs.push(h);
    }
    let mut ps = config.params.p_grid.clone();
    if p >= 2.0 && !ps.contains(&p) {
        ps.push(p);
    }
    hs.sort_by(f64::total_cmp);
    ps.sort_by(f64::total_cmp);
    let scan = feasibility_scan(&hs, &ps).map_err(&m)?;
    let mut table = Vec::new();
    scan.write_csv(&mut table).map_err(&m)?;
    let mut boundary = String::from("H,p_min_feasible,threshold\n");
    for (h, pmin) in scan.boundary() {
        let pmin = pmin.map(|v| v.to_string()).unwrap_or_default();
        boundary.push_str(&format!("{h},{pmin},{}\n", strong_solution_threshold(&h)));
    }
    Ok(Artifacts::from([
        ("params.csv".to_string(), report.into_bytes()),
        ("feasibility.csv".to_string(), table),
        ("boundary.csv".to_string(), boundary.into_bytes()),
    ]))
}

fn covariance(config: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let m = numeric("noise");
    let params = NoiseParams::new(config.hurst, config.seed).map_err(&m)?;
    let g = config.grid;
    let field = sample_noise_field_with(&g, &params, 0, config.sampler).map_err(&m)?;
    let mut csv = String::from("lag,estimate,stderr,exact,z\n");
    for &lag in &config.covariance_lags {
        let est: Vec<f64> = (0..g.t_count)
            .map(|i| {
                let r = field.row(i);
                (0..g.x_count - lag).map(|j| r[j] * r[j + lag]).sum::<f64>() / (g.x_count - lag) as f64
            })
            .collect();
        let (mean, se) = mean_se(&est);
        let exact = g.dt * fgn_covariance(lag as i64, config.hurst, g.dx).map_err(&m)?;
        let z = if se > 0.0 { (mean - exact) / se } else { 0.0 };
        csv.push_str(&format!("{lag},{mean},{se},{exact},{z}\n"));
    }
    Ok(Artifacts::from([("covariance.csv".to_string(), csv.into_bytes())]))
}

/// Prints the config warnings, one per line.
pub fn print_warnings<W: Write>(config: &ExperimentConfig, mut w: W) {
    for warning in &config.warnings {
        let _ = writeln!(w, "warning: {warning}");
    }
}
