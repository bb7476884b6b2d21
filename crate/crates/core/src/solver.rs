//! Mild solutions of the 1-D stochastic wave equation by Picard iteration
//! against mollified noise.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{mollify_field, GridSpec, NoiseField, NoiseParams, NoiseSampler, Sampler};
use crate::norms::{z_norm_estimate, NormConfig, SampledField};
use crate::quadrature::adaptive_legendre;

/// Environment variable that caps the worker threads used by ensembles.
pub const THREADS_ENV: &str = "FRACWAVE_THREADS";

/// Nonlinearity σ(u), with σ(0) = 0 for every variant.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaKind {
    Zero,
    Linear(f64),
    ScaledSine(f64),
    /// Piecewise linear through (u, σ) nodes sorted in u, continued linearly
    /// beyond the end nodes.
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSpec {
    kind: SigmaKind,
    lipschitz_bound: f64,
}

impl SigmaSpec {
    pub fn zero() -> Self {
        Self {
            kind: SigmaKind::Zero,
            lipschitz_bound: 0.0,
        }
    }

    pub fn linear(a: f64) -> Self {
        Self {
            kind: SigmaKind::Linear(a),
            lipschitz_bound: a.abs(),
        }
    }

    /// a·sin(u): bounded, with bounded derivatives.
    pub fn scaled_sine(a: f64) -> Self {
        Self {
            kind: SigmaKind::ScaledSine(a),
            lipschitz_bound: a.abs(),
        }
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Precondition("a tabulated sigma needs at least 2 nodes".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Precondition(
                "tabulated sigma nodes must increase strictly in u".into(),
            ));
        }
        if points.iter().any(|(u, s)| !u.is_finite() || !s.is_finite()) {
            return Err(Error::Precondition("tabulated sigma nodes must be finite".into()));
        }
        let lipschitz_bound = points
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max);
        let spec = Self {
            kind: SigmaKind::Tabulated(points),
            lipschitz_bound,
        };
        if spec.eval(0.0).abs() > 1e-14 {
            return Err(Error::Precondition("tabulated sigma must vanish at u = 0".into()));
        }
        Ok(spec)
    }

    pub fn kind(&self) -> &SigmaKind {
        &self.kind
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn eval(&self, u: f64) -> f64 {
        match &self.kind {
            SigmaKind::Zero => 0.0,
            SigmaKind::Linear(a) => a * u,
            SigmaKind::ScaledSine(a) => a * u.sin(),
            SigmaKind::Tabulated(pts) => {
                let k = pts.partition_point(|(x, _)| *x <= u).clamp(1, pts.len() - 1);
                let (x0, y0) = pts[k - 1];
                let (x1, y1) = pts[k];
                y0 + (y1 - y0) * (u - x0) / (x1 - x0)
            }
        }
    }
}

impl fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SigmaKind::Zero => write!(f, "zero"),
            SigmaKind::Linear(a) => write!(f, "linear({a})"),
            SigmaKind::ScaledSine(a) => write!(f, "scaled_sine({a})"),
            SigmaKind::Tabulated(p) => write!(f, "tabulated({} nodes)", p.len()),
        }
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    Gaussian,
    Constant(f64),
    Zero,
    Custom,
}

/// Initial position u₀ and velocity v₀.
#[derive(Clone)]
pub struct InitialData {
    kind: InitialKind,
    u0: RealFn,
    v0: RealFn,
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialData").field("kind", &self.kind).finish()
    }
}

impl InitialData {
    /// u₀(x) = e^{−x²}, v₀ = 0.
    pub fn gaussian() -> Self {
        Self {
            kind: InitialKind::Gaussian,
            u0: Arc::new(|x: f64| (-x * x).exp()),
            v0: Arc::new(|_| 0.0),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            kind: InitialKind::Constant(c),
            u0: Arc::new(move |_| c),
            v0: Arc::new(|_| 0.0),
        }
    }

    pub fn zero() -> Self {
        Self {
            kind: InitialKind::Zero,
            u0: Arc::new(|_| 0.0),
            v0: Arc::new(|_| 0.0),
        }
    }

    pub fn custom<U, V>(u0: U, v0: V) -> Self
    where
        U: Fn(f64) -> f64 + Send + Sync + 'static,
        V: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: InitialKind::Custom,
            u0: Arc::new(u0),
            v0: Arc::new(v0),
        }
    }

    pub fn kind(&self) -> &InitialKind {
        &self.kind
    }

    pub fn u0(&self, x: f64) -> f64 {
        (self.u0)(x)
    }

    pub fn v0(&self, x: f64) -> f64 {
        (self.v0)(x)
    }
}

/// ½[u₀(x+t) + u₀(x−t)] + ½∫_{x−t}^{x+t} v₀(y) dy.
pub fn dalembert_i0(data: &InitialData, t: f64, x: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be nonnegative, got {t}")));
    }
    let wave = 0.5 * (data.u0(x + t) + data.u0(x - t));
    let push = match data.kind {
        InitialKind::Custom if t > 0.0 => 0.5 * adaptive_legendre(&|y| data.v0(y), x - t, x + t, 1e-12)?,
        _ => 0.0,
    };
    Ok(wave + push)
}

/// Σ_{k<i} Σ_m ½ v(k,m) ΔW(k,m) over the cells whose midpoint lies strictly
/// inside the backward cone |x_m + dx/2 − x_j| < t_i − t_k. `v` is row-major
/// on the noise grid (left node of each cell). Node (i, j) is the point
/// (t0 + i·dt, x0 + j·dx) of the noise grid.
pub fn stochastic_convolution(v: &[f64], noise: &NoiseField, t_index: usize, x_index: usize) -> Result<f64> {
    let g = noise.grid();
    if v.len() != g.t_count * g.x_count {
        return Err(Error::Precondition(format!(
            "integrand has {} values, noise grid has {}",
            v.len(),
            g.t_count * g.x_count
        )));
    }
    if t_index > g.t_count || x_index >= g.x_count {
        return Err(Error::Precondition(format!(
            "point ({t_index}, {x_index}) outside the noise grid"
        )));
    }
    let ratio = g.dt / g.dx;
    let mut acc = 0.0;
    for k in 0..t_index {
        let (lo, hi) = cone_window(x_index, (t_index - k) as f64 * ratio);
        if lo < 0 || hi >= g.x_count as i64 {
            return Err(Error::LightCone { t_index, x_index });
        }
        let row = noise.row(k);
        let vrow = &v[k * g.x_count..(k + 1) * g.x_count];
        for m in lo as usize..=hi as usize {
            acc += 0.5 * vrow[m] * row[m];
        }
    }
    Ok(acc)
}

/// Cells m with |m + ½ − j| < r, as an inclusive range (may be empty).
fn cone_window(j: usize, r: f64) -> (i64, i64) {
    let c = j as f64 - 0.5;
    let mut lo = (c - r).ceil() as i64;
    if (lo as f64 - c).abs() >= r {
        lo += 1;
    }
    let mut hi = (c + r).floor() as i64;
    if (hi as f64 - c).abs() >= r {
        hi -= 1;
    }
    (lo, hi)
}

/// Inputs of one Picard run.
#[derive(Debug, Clone)]
pub struct PicardProblem {
    /// Output grid; t0 must be 0 and t_count ≥ 2.
    pub grid: GridSpec,
    pub noise: NoiseParams,
    pub sigma: SigmaSpec,
    pub data: InitialData,
    /// Mollifier variance.
    pub eps: f64,
    pub n_max: usize,
    pub tol_z2: f64,
    pub sampler: Sampler,
}

impl PicardProblem {
    /// Defaults: ε = 4dx², at most 12 iterations, tolerance 1e−3.
    pub fn new(grid: GridSpec, noise: NoiseParams, sigma: SigmaSpec, data: InitialData) -> Self {
        Self {
            grid,
            noise,
            sigma,
            data,
            eps: 4.0 * grid.dx * grid.dx,
            n_max: 12,
            tol_z2: 1e-3,
            sampler: Sampler::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.noise.validate()?;
        let h = self.noise.hurst;
        if !(h > 0.25 && h < 0.5) {
            return Err(Error::Domain(format!(
                "the solver needs H in (1/4, 1/2), got {h}; for H <= 1/4 the second chaos of the \
                 linear equation diverges, so no random-field solution exists"
            )));
        }
        if self.grid.t0 != 0.0 {
            return Err(Error::Precondition("solution grid must start at t0 = 0".into()));
        }
        if self.grid.t_count < 2 {
            return Err(Error::Precondition("solution grid needs at least 2 time levels".into()));
        }
        if self.n_max < 1 {
            return Err(Error::Precondition("n_max must be at least 1".into()));
        }
        if !(self.tol_z2 > 0.0) {
            return Err(Error::Precondition("tol_z2 must be positive".into()));
        }
        crate::noise::mollifier_taps(self.eps, self.grid.dx)?;
        Ok(())
    }

    /// Final time T = (t_count − 1)·dt.
    pub fn horizon(&self) -> f64 {
        (self.grid.t_count - 1) as f64 * self.grid.dt
    }

    /// Spatial margin in cells so every backward cone stays on the noise grid.
    pub fn margin(&self) -> usize {
        let g = &self.grid;
        if self.uses_recursion() {
            g.t_count - 1
        } else {
            (self.horizon() / g.dx).ceil() as usize + 1
        }
    }

    fn uses_recursion(&self) -> bool {
        (self.grid.dt - self.grid.dx).abs() <= 1e-12 * self.grid.dx
    }

    /// Noise grid: the output x-range widened by the margin on both sides,
    /// one row per time step.
    pub fn noise_grid(&self) -> GridSpec {
        let g = &self.grid;
        let m = self.margin();
        GridSpec {
            t_count: g.t_count - 1,
            x_count: g.x_count + 2 * m,
            dt: g.dt,
            dx: g.dx,
            t0: 0.0,
            x0: g.x0 - m as f64 * g.dx,
        }
    }
}

/// Realizations of u on the output grid plus Picard diagnostics.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub field: SampledField,
    pub sigma: SigmaSpec,
    pub eps: f64,
    /// Iterations used, per realization.
    pub iterations: Vec<usize>,
    /// Z²-distances between successive iterates, per realization.
    pub residuals: Vec<Vec<f64>>,
}

impl SolutionField {
    pub fn picard_iterations(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }

    /// Residual history of the first realization.
    pub fn picard_residuals(&self) -> &[f64] {
        &self.residuals[0]
    }

    /// Grid header line then one line per time level.
    pub fn write_csv<W: Write>(&self, realization: usize, mut w: W) -> Result<()> {
        let g = self.field.grid();
        writeln!(
            w,
            "# t_count={},x_count={},dt={},dx={},x0={},realization={realization}",
            g.t_count, g.x_count, g.dt, g.dx, g.x0
        )?;
        for i in 0..g.t_count {
            let line: Vec<String> = self.field.row(realization, i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn write_residuals_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "realization,iteration,z2_distance")?;
        for (r, hist) in self.residuals.iter().enumerate() {
            for (n, v) in hist.iter().enumerate() {
                writeln!(w, "{r},{},{v}", n + 1)?;
            }
        }
        Ok(())
    }
}

/// Extended-grid workspace for one realization.
struct Workspace<'a> {
    problem: &'a PicardProblem,
    ng: GridSpec,
    levels: usize,
    /// I₀ on the extended grid, levels × nodes.
    i0: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(problem: &'a PicardProblem) -> Result<Self> {
        let ng = problem.noise_grid();
        let levels = problem.grid.t_count;
        let mut i0 = Vec::with_capacity(levels * ng.x_count);
        for i in 0..levels {
            for j in 0..ng.x_count {
                i0.push(dalembert_i0(&problem.data, i as f64 * ng.dt, ng.x_at(j))?);
            }
        }
        Ok(Self {
            problem,
            ng,
            levels,
            i0,
        })
    }

    /// Φ on the extended grid for integrand increments P = σ(u)·ΔW (cell m
    /// paired with node m). Values outside the cone-valid region are NaN.
    fn convolve(&self, p: &[f64]) -> Vec<f64> {
        let n = self.ng.x_count;
        let mut phi = vec![f64::NAN; self.levels * n];
        phi[..n].iter_mut().for_each(|v| *v = 0.0);
        if self.problem.uses_recursion() {
            // Φ_{i+1}(j) = Φ_i(j−1) + Φ_i(j+1) − Φ_{i−1}(j) + ½(P_i(j−1) + P_i(j)),
            // valid on i ≤ j ≤ n − i
            for i in 0..self.levels - 1 {
                for j in (i + 1)..(n - i) {
                    let prev = if i == 0 { 0.0 } else { phi[(i - 1) * n + j] };
                    let left = phi[i * n + j - 1];
                    let right = if j + 1 < n { phi[i * n + j + 1] } else { f64::NAN };
                    let src = 0.5 * (p[i * n + j - 1] + p[i * n + j]);
                    phi[(i + 1) * n + j] = if i == 0 { src } else { left + right - prev + src };
                }
            }
        } else {
            let ratio = self.ng.dt / self.ng.dx;
            let prefix: Vec<Vec<f64>> = (0..self.levels - 1)
                .map(|k| {
                    let mut s = Vec::with_capacity(n + 1);
                    s.push(0.0);
                    let mut acc = 0.0;
                    for m in 0..n {
                        acc += p[k * n + m];
                        s.push(acc);
                    }
                    s
                })
                .collect();
            for i in 1..self.levels {
                for j in 0..n {
                    let mut acc = 0.0;
                    let mut ok = true;
                    for (k, s) in prefix.iter().enumerate().take(i) {
                        let (lo, hi) = cone_window(j, (i - k) as f64 * ratio);
                        if lo < 0 || hi >= n as i64 {
                            ok = false;
                            break;
                        }
                        if hi >= lo {
                            acc += s[hi as usize + 1] - s[lo as usize];
                        }
                    }
                    if ok {
                        phi[i * n + j] = 0.5 * acc;
                    }
                }
            }
        }
        phi
    }

    /// Runs the iteration on a given (already mollified) noise field and
    /// returns the output window of the final iterate and the residuals.
    fn iterate(&self, noise: &NoiseField, realization: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let problem = self.problem;
        let n = self.ng.x_count;
        let m = problem.margin();
        let out = problem.grid.x_count;
        let cfg = NormConfig::new(2.0, problem.noise.hurst)?;
        let mut u = self.i0.clone();
        let mut residuals = Vec::new();
        let mut streak = 0;
        let mut window = self.window(&u, m, out);
        for _ in 0..problem.n_max {
            let mut p = vec![0.0; (self.levels - 1) * n];
            for k in 0..self.levels - 1 {
                let row = noise.row(k);
                for j in 0..n {
                    let uk = u[k * n + j];
                    // nodes outside the valid cone region never reach the output
                    p[k * n + j] = if uk.is_nan() {
                        0.0
                    } else {
                        problem.sigma.eval(uk) * row[j]
                    };
                }
            }
            let phi = self.convolve(&p);
            let next: Vec<f64> = self.i0.iter().zip(&phi).map(|(a, b)| a + b).collect();
            let next_window = self.window(&next, m, out);
            if let Some(k) = next_window.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    realization,
                    t_index: k / out,
                    x_index: k % out,
                });
            }
            let diff: Vec<f64> = next_window.iter().zip(&window).map(|(a, b)| a - b).collect();
            let r = z_norm_estimate(&SampledField::single(problem.grid, diff)?, &cfg)?.z;
            u = next;
            window = next_window;
            let idx = residuals.len();
            residuals.push(r);
            if r < problem.tol_z2 {
                break;
            }
            if idx >= 2 && r > residuals[idx - 1] {
                streak += 1;
                if streak >= 3 {
                    return Err(Error::Divergence { history: residuals });
                }
            } else {
                streak = 0;
            }
        }
        Ok((window, residuals))
    }

    fn window(&self, u: &[f64], m: usize, out: usize) -> Vec<f64> {
        let n = self.ng.x_count;
        let mut w = Vec::with_capacity(self.levels * out);
        for i in 0..self.levels {
            w.extend_from_slice(&u[i * n + m..i * n + m + out]);
        }
        w
    }
}

/// Picard iteration on a caller-supplied raw noise field (mollified here).
/// The field must live on `problem.noise_grid()`.
pub fn picard_solve_with_noise(problem: &PicardProblem, noise: &NoiseField) -> Result<SolutionField> {
    problem.validate()?;
    if *noise.grid() != problem.noise_grid() {
        return Err(Error::Precondition(
            "noise field is not on the problem's noise grid".into(),
        ));
    }
    let ws = Workspace::new(problem)?;
    let smooth = mollify_field(noise, problem.eps)?;
    let (values, residuals) = ws.iterate(&smooth, 0)?;
    Ok(SolutionField {
        field: SampledField::new(problem.grid, 1, values)?,
        sigma: problem.sigma.clone(),
        eps: problem.eps,
        iterations: vec![residuals.len()],
        residuals: vec![residuals],
    })
}

/// Realization 0 of the problem's seed.
pub fn picard_solve(problem: &PicardProblem) -> Result<SolutionField> {
    solve_ensemble(problem, 1)
}

/// Independent realizations (noise streams 0..n) solved in parallel.
pub fn solve_ensemble(problem: &PicardProblem, n_realizations: usize) -> Result<SolutionField> {
    problem.validate()?;
    if n_realizations < 1 {
        return Err(Error::Precondition("need at least one realization".into()));
    }
    let ws = Workspace::new(problem)?;
    let sampler = NoiseSampler::new(&problem.noise_grid(), &problem.noise, problem.sampler)?;
    let run = |r: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let tag = |e: Error| Error::Realization {
            index: r,
            source: Box::new(e),
        };
        let raw = sampler.sample(r as u64);
        let smooth = mollify_field(&raw, problem.eps).map_err(tag)?;
        ws.iterate(&smooth, r).map_err(tag)
    };
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> =
        with_pool(|| (0..n_realizations).into_par_iter().map(run).collect());
    let mut values = Vec::with_capacity(n_realizations * problem.grid.t_count * problem.grid.x_count);
    let mut iterations = Vec::with_capacity(n_realizations);
    let mut residuals = Vec::with_capacity(n_realizations);
    for r in results {
        let (v, hist) = r?;
        values.extend(v);
        iterations.push(hist.len());
        residuals.push(hist);
    }
    Ok(SolutionField {
        field: SampledField::new(problem.grid, n_realizations, values)?,
        sigma: problem.sigma.clone(),
        eps: problem.eps,
        iterations,
        residuals,
    })
}

/// Runs `f` on a pool sized by FRACWAVE_THREADS when set, else rayon's default.
pub fn with_pool<T: Send, F: FnOnce() -> T + Send>(f: F) -> T {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_window_dt_equals_dx() {
        // |m + ½ − j| < n ⇔ m ∈ [j − n, j + n − 1]
        assert_eq!(cone_window(10, 1.0), (9, 10));
        assert_eq!(cone_window(10, 3.0), (7, 12));
    }

    #[test]
    fn cone_window_general_ratio() {
        assert_eq!(cone_window(5, 0.5), (5, 4));
        assert_eq!(cone_window(5, 0.75), (4, 5));
        assert_eq!(cone_window(5, 1.5), (4, 5));
        assert_eq!(cone_window(5, 1.6), (3, 6));
        assert_eq!(cone_window(5, 2.5), (3, 6));
    }

    #[test]
    fn sigma_variants() {
        assert_eq!(SigmaSpec::zero().eval(3.0), 0.0);
        assert_eq!(SigmaSpec::linear(2.0).eval(-1.5), -3.0);
        assert!((SigmaSpec::scaled_sine(0.5).eval(1.0) - 0.5 * 1f64.sin()).abs() < 1e-16);
        let t = SigmaSpec::tabulated(vec![(-1.0, -2.0), (0.0, 0.0), (2.0, 1.0)]).unwrap();
        assert_eq!(t.eval(1.0), 0.5);
        assert_eq!(t.eval(-2.0), -4.0);
        assert_eq!(t.lipschitz_bound(), 2.0);
        assert!(SigmaSpec::tabulated(vec![(-1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(SigmaSpec::tabulated(vec![(1.0, 1.0), (0.0, 0.0)]).is_err());
    }

    #[test]
    fn dalembert_examples() {
        let g = InitialData::gaussian();
        let v = dalembert_i0(&g, 0.7, 0.2).unwrap();
        assert!((v - 0.5 * ((-0.81f64).exp() + (-0.25f64).exp())).abs() < 1e-15);
        assert_eq!(dalembert_i0(&InitialData::constant(1.0), 3.0, -2.0).unwrap(), 1.0);
        let push = InitialData::custom(|_| 0.0, |_| 1.0);
        assert!((dalembert_i0(&push, 1.3, 0.4).unwrap() - 1.3).abs() < 1e-12);
        assert!(dalembert_i0(&g, -0.1, 0.0).is_err());
    }
}
