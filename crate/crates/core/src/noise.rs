//! Space-time Gaussian noise: white in time, fractional Gaussian in space.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Largest row length for the dense Cholesky fallback.
pub const CHOLESKY_MAX: usize = 4096;

/// Relative size of a negative circulant eigenvalue that is tolerated (and clamped).
const EMBEDDING_TOL: f64 = 1e-10;

/// Uniform space-time grid. Cell (i, j) is [t_i, t_{i+1}] × [x_j, x_{j+1}].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub t_count: usize,
    pub x_count: usize,
    pub dt: f64,
    pub dx: f64,
    pub t0: f64,
    pub x0: f64,
}

impl GridSpec {
    pub fn new(t_count: usize, x_count: usize, dt: f64, dx: f64, t0: f64, x0: f64) -> Result<Self> {
        let g = Self {
            t_count,
            x_count,
            dt,
            dx,
            t0,
            x0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::Domain(format!(
                "dt and dx must be positive, got {} and {}",
                self.dt, self.dx
            )));
        }
        if self.t_count < 1 || self.x_count < 2 {
            return Err(Error::Domain(format!(
                "need t_count >= 1 and x_count >= 2, got {} x {}",
                self.t_count, self.x_count
            )));
        }
        if !self.t0.is_finite() || !self.x0.is_finite() {
            return Err(Error::Domain("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn t_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn x_at(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.dx
    }

    /// Index of the time node t, allowing the closing node t_count.
    pub fn t_node(&self, t: f64) -> Option<usize> {
        node_index(t, self.t0, self.dt, self.t_count)
    }

    /// Index of the space node x, allowing the closing node x_count.
    pub fn x_node(&self, x: f64) -> Option<usize> {
        node_index(x, self.x0, self.dx, self.x_count)
    }
}

fn node_index(v: f64, origin: f64, step: f64, count: usize) -> Option<usize> {
    let r = (v - origin) / step;
    let k = r.round();
    if (r - k).abs() > 1e-9 * (1.0 + r.abs()) || k < 0.0 || k > count as f64 {
        None
    } else {
        Some(k as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub hurst: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(hurst: f64, seed: u64) -> Result<Self> {
        let p = Self { hurst, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst <= 0.5) {
            return Err(Error::Domain(format!(
                "noise Hurst index must lie in (0, 1/2], got {}",
                self.hurst
            )));
        }
        Ok(())
    }
}

/// Increments ΔW over the cells of a grid, row-major in time.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    increments: Vec<f64>,
    grid: GridSpec,
    params: NoiseParams,
}

impl NoiseField {
    pub fn from_increments(grid: GridSpec, params: NoiseParams, increments: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if increments.len() != grid.t_count * grid.x_count {
            return Err(Error::Precondition(format!(
                "expected {} increments, got {}",
                grid.t_count * grid.x_count,
                increments.len()
            )));
        }
        Ok(Self {
            increments,
            grid,
            params,
        })
    }

    pub fn zeros(grid: GridSpec, params: NoiseParams) -> Self {
        Self {
            increments: vec![0.0; grid.t_count * grid.x_count],
            grid,
            params,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.increments[i * self.grid.x_count + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.increments[i * self.grid.x_count + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.x_count;
        &self.increments[i * n..(i + 1) * n]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            increments: self.increments.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    /// Little-endian layout: t_count, x_count (u64), dt, dx, t0, x0, H (f64),
    /// seed (u64), then the increments row by row.
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(64 + 8 * self.increments.len());
        out.extend((g.t_count as u64).to_le_bytes());
        out.extend((g.x_count as u64).to_le_bytes());
        for v in [g.dt, g.dx, g.t0, g.x0, self.params.hurst] {
            out.extend(v.to_le_bytes());
        }
        out.extend(self.params.seed.to_le_bytes());
        for v in &self.increments {
            out.extend(v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 64 || !bytes.len().is_multiple_of(8) {
            return Err(Error::Io(format!("noise blob has bad length {}", bytes.len())));
        }
        let word = |k: usize| -> [u8; 8] { bytes[8 * k..8 * k + 8].try_into().unwrap() };
        let f = |k: usize| f64::from_le_bytes(word(k));
        let grid = GridSpec::new(
            u64::from_le_bytes(word(0)) as usize,
            u64::from_le_bytes(word(1)) as usize,
            f(2),
            f(3),
            f(4),
            f(5),
        )?;
        let params = NoiseParams {
            hurst: f(6),
            seed: u64::from_le_bytes(word(7)),
        };
        let data: Vec<f64> = (8..bytes.len() / 8).map(f).collect();
        Self::from_increments(grid, params, data)
    }

    /// Header line, value line, then one line per time row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        writeln!(w, "t_count,x_count,dt,dx,t0,x0,hurst,seed")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            g.t_count, g.x_count, g.dt, g.dx, g.t0, g.x0, self.params.hurst, self.params.seed
        )?;
        for i in 0..g.t_count {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let bad = |m: &str| Error::Io(format!("noise csv: {m}"));
        lines.next().ok_or_else(|| bad("missing header"))??;
        let head = lines.next().ok_or_else(|| bad("missing metadata"))??;
        let h: Vec<&str> = head.split(',').collect();
        if h.len() != 8 {
            return Err(bad("metadata needs 8 fields"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
        let int = |s: &str| s.trim().parse::<u64>().map_err(|e| bad(&e.to_string()));
        let grid = GridSpec::new(
            int(h[0])? as usize,
            int(h[1])? as usize,
            num(h[2])?,
            num(h[3])?,
            num(h[4])?,
            num(h[5])?,
        )?;
        let params = NoiseParams {
            hurst: num(h[6])?,
            seed: int(h[7])?,
        };
        let mut data = Vec::with_capacity(grid.t_count * grid.x_count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for v in line.split(',') {
                data.push(num(v)?);
            }
        }
        Self::from_increments(grid, params, data)
    }
}

/// Lag-k covariance of fractional Gaussian noise at spacing dx.
pub fn fgn_covariance(lag: i64, hurst: f64, dx: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst <= 1.0) {
        return Err(Error::Domain(format!("Hurst index must lie in (0, 1], got {hurst}")));
    }
    if !(dx > 0.0) {
        return Err(Error::Domain(format!("dx must be positive, got {dx}")));
    }
    Ok(fgn_unchecked(lag, hurst, dx))
}

fn fgn_unchecked(lag: i64, hurst: f64, dx: f64) -> f64 {
    let k = lag.unsigned_abs() as f64;
    let h2 = 2.0 * hurst;
    0.5 * dx.powf(h2) * ((k + 1.0).powf(h2) + (k - 1.0).abs().powf(h2) - 2.0 * k.powf(h2))
}

/// E[W(t,x)W(s,y)] = min(t,s)·½(|x|^{2H} + |y|^{2H} − |x−y|^{2H}).
pub fn w_covariance(p1: (f64, f64), p2: (f64, f64), hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let (t, x) = p1;
    let (s, y) = p2;
    t.min(s) * 0.5 * (x.abs().powf(h2) + y.abs().powf(h2) - (x - y).abs().powf(h2))
}

/// Which spatial sampler to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    /// Circulant embedding, Cholesky when the embedding is indefinite.
    Auto,
    /// Dense Cholesky of the exact covariance.
    Cholesky,
}

enum RowMethod {
    Embedding { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky(DMatrix<f64>),
}

/// Draws rows of fGn (scaled by √dt) for a fixed row length.
struct RowSampler {
    n: usize,
    scale: f64,
    method: RowMethod,
}

impl RowSampler {
    fn new(n: usize, hurst: f64, dx: f64, dt: f64, sampler: Sampler) -> Result<Self> {
        let scale = dt.sqrt();
        if sampler == Sampler::Auto {
            match circulant_sqrt_eigenvalues(n, hurst, dx) {
                Ok(sqrt_eig) => {
                    let fft = FftPlanner::new().plan_fft_forward(sqrt_eig.len());
                    return Ok(Self {
                        n,
                        scale,
                        method: RowMethod::Embedding { sqrt_eig, fft },
                    });
                }
                Err(e) if n > CHOLESKY_MAX => {
                    return Err(Error::Embedding(format!(
                        "{e}; row length {n} exceeds the Cholesky fallback limit {CHOLESKY_MAX}"
                    )))
                }
                Err(_) => {}
            }
        }
        if n > CHOLESKY_MAX {
            return Err(Error::Embedding(format!(
                "row length {n} exceeds the Cholesky limit {CHOLESKY_MAX}"
            )));
        }
        let cov = DMatrix::from_fn(n, n, |a, b| fgn_unchecked(a as i64 - b as i64, hurst, dx));
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Embedding("fGn covariance not positive definite".into()))?;
        Ok(Self {
            n,
            scale,
            method: RowMethod::Cholesky(chol.l()),
        })
    }

    /// Fills `out` (a multiple of n long) with independent rows.
    fn fill<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.n;
        match &self.method {
            RowMethod::Embedding { sqrt_eig, fft } => {
                let m = sqrt_eig.len();
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                for pair in out.chunks_mut(2 * n) {
                    for (b, s) in buf.iter_mut().zip(sqrt_eig) {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        *b = Complex64::new(re * s, im * s);
                    }
                    fft.process(&mut buf);
                    let (first, second) = pair.split_at_mut(n.min(pair.len()));
                    for (o, b) in first.iter_mut().zip(&buf) {
                        *o = self.scale * b.re;
                    }
                    for (o, b) in second.iter_mut().zip(&buf) {
                        *o = self.scale * b.im;
                    }
                }
            }
            RowMethod::Cholesky(l) => {
                for row in out.chunks_mut(n) {
                    let z = nalgebra::DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let y = l * z;
                    for (o, v) in row.iter_mut().zip(y.iter()) {
                        *o = self.scale * v;
                    }
                }
            }
        }
    }
}

/// sqrt(λ_k / M) for the minimal power-of-two circulant embedding of the
/// n × n fGn covariance. Errors if an eigenvalue is negative beyond tolerance.
fn circulant_sqrt_eigenvalues(n: usize, hurst: f64, dx: f64) -> Result<Vec<f64>> {
    let half = n.next_power_of_two().max(2);
    let m = 2 * half;
    let mut c: Vec<Complex64> = (0..m)
        .map(|k| {
            let lag = if k <= half { k } else { m - k };
            Complex64::new(fgn_unchecked(lag as i64, hurst, dx), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut c);
    let max = c.iter().map(|v| v.re).fold(0.0, f64::max);
    let min = c.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    if min < -EMBEDDING_TOL * max {
        return Err(Error::Embedding(format!(
            "circulant eigenvalue {min:.3e} below -{EMBEDDING_TOL:e} x {max:.3e}"
        )));
    }
    Ok(c.iter().map(|v| (v.re.max(0.0) / m as f64).sqrt()).collect())
}

/// Counter-based stream for realization `stream` under a master seed.
pub fn realization_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Noise field for realization 0 of the seed.
pub fn sample_noise_field(grid: &GridSpec, params: &NoiseParams) -> Result<NoiseField> {
    sample_noise_field_with(grid, params, 0, Sampler::Auto)
}

/// Noise field for the given realization stream and sampler.
pub fn sample_noise_field_with(
    grid: &GridSpec,
    params: &NoiseParams,
    stream: u64,
    sampler: Sampler,
) -> Result<NoiseField> {
    Ok(NoiseSampler::new(grid, params, sampler)?.sample(stream))
}

/// Sampler set up once for a grid and reused across realizations.
pub struct NoiseSampler {
    grid: GridSpec,
    params: NoiseParams,
    rows: RowSampler,
}

impl NoiseSampler {
    pub fn new(grid: &GridSpec, params: &NoiseParams, sampler: Sampler) -> Result<Self> {
        grid.validate()?;
        params.validate()?;
        let rows = RowSampler::new(grid.x_count, params.hurst, grid.dx, grid.dt, sampler)?;
        Ok(Self {
            grid: *grid,
            params: *params,
            rows,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Field for realization `stream`; equal streams give equal fields.
    pub fn sample(&self, stream: u64) -> NoiseField {
        let mut rng = realization_rng(self.params.seed, stream);
        let mut data = vec![0.0; self.grid.t_count * self.grid.x_count];
        self.rows.fill(&mut rng, &mut data);
        NoiseField {
            increments: data,
            grid: self.grid,
            params: self.params,
        }
    }
}

/// Independent fields for streams 0..n, generated in parallel.
pub fn sample_ensemble(grid: &GridSpec, params: &NoiseParams, n: usize) -> Result<Vec<NoiseField>> {
    let sampler = NoiseSampler::new(grid, params, Sampler::Auto)?;
    Ok((0..n as u64).into_par_iter().map(|k| sampler.sample(k)).collect())
}

/// Discrete Gaussian mollifier with variance ε on spacing dx, unit mass,
/// truncated at 10√ε. Returns taps for offsets −K..=K.
pub fn mollifier_taps(eps: f64, dx: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("mollifier width must be positive, got {eps}")));
    }
    if eps < dx * dx / 100.0 {
        return Err(Error::Precondition(format!(
            "mollifier width {eps} below dx^2/100 = {} is not resolved by the grid",
            dx * dx / 100.0
        )));
    }
    let k = (10.0 * eps.sqrt() / dx).ceil() as i64;
    let mut taps: Vec<f64> = (-k..=k)
        .map(|j| (-(j as f64 * dx).powi(2) / (2.0 * eps)).exp())
        .collect();
    let mass: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|v| *v /= mass);
    Ok(taps)
}

/// Convolves every row with the mollifier, zero-padded at the row ends.
pub fn mollify_field(field: &NoiseField, eps: f64) -> Result<NoiseField> {
    let taps = mollifier_taps(eps, field.grid.dx)?;
    let n = field.grid.x_count;
    let k = (taps.len() / 2) as isize;
    let mut out = vec![0.0; field.increments.len()];
    for (src, dst) in field.increments.chunks(n).zip(out.chunks_mut(n)) {
        for (j, d) in dst.iter_mut().enumerate() {
            let lo = (j as isize - k).max(0) as usize;
            let hi = ((j as isize + k) as usize).min(n - 1);
            let mut acc = 0.0;
            for (m, s) in src.iter().enumerate().take(hi + 1).skip(lo) {
                acc += taps[(j as isize - m as isize + k) as usize] * s;
            }
            *d = acc;
        }
    }
    Ok(NoiseField {
        increments: out,
        grid: field.grid,
        params: field.params,
    })
}

/// Monte Carlo estimate of E[W(t,x)W(s,y)] and its standard error. W is
/// rebuilt by summing increments from time t0 and from the spatial node x = 0,
/// which must lie on the grid so that W(·, 0) = 0 as in the covariance law.
pub fn empirical_w_covariance(ensemble: &[NoiseField], point1: (f64, f64), point2: (f64, f64)) -> Result<(f64, f64)> {
    if ensemble.len() < 100 {
        return Err(Error::Precondition(format!(
            "need at least 100 realizations, got {}",
            ensemble.len()
        )));
    }
    let grid = ensemble[0].grid;
    if ensemble.iter().any(|f| f.grid != grid) {
        return Err(Error::Precondition("ensemble grids differ".into()));
    }
    let anchor = grid
        .x_node(0.0)
        .ok_or_else(|| Error::Precondition("x = 0 must be a grid node".into()))?;
    let locate = |(t, x): (f64, f64)| -> Result<(usize, usize)> {
        match (grid.t_node(t), grid.x_node(x)) {
            (Some(i), Some(j)) => Ok((i, j)),
            _ => Err(Error::Precondition(format!("point ({t}, {x}) is not a grid node"))),
        }
    };
    let a = locate(point1)?;
    let b = locate(point2)?;
    let w = |f: &NoiseField, (ti, xj): (usize, usize)| -> f64 {
        let (lo, hi, sign) = if xj >= anchor {
            (anchor, xj, 1.0)
        } else {
            (xj, anchor, -1.0)
        };
        let mut acc = 0.0;
        for i in 0..ti {
            acc += f.row(i)[lo..hi].iter().sum::<f64>();
        }
        sign * acc
    };
    let prods: Vec<f64> = ensemble.iter().map(|f| w(f, a) * w(f, b)).collect();
    Ok(crate::stats::mean_se(&prods))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fgn_examples() {
        assert!((fgn_covariance(0, 0.3, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(fgn_covariance(1, 0.5, 1.0).unwrap().abs() < 1e-15);
        let v = fgn_covariance(1, 0.25, 1.0).unwrap();
        assert!((v - 0.5 * (2f64.sqrt() - 2.0)).abs() < 1e-15);
        assert!((v + 0.292893).abs() < 1e-6);
        assert!(fgn_covariance(1, 0.0, 1.0).is_err());
        assert!(fgn_covariance(1, 1.1, 1.0).is_err());
        for k in 0..20 {
            assert_eq!(
                fgn_covariance(k, 0.37, 0.1).unwrap(),
                fgn_covariance(-k, 0.37, 0.1).unwrap()
            );
        }
    }

    #[test]
    fn sums_of_increments_have_fbm_variance() {
        // Var(Σ_{j<K} X_j) = Σ_{a,b} γ(a−b) = (K dx)^{2H}
        for &h in &[0.2, 0.35, 0.5] {
            for k in [1usize, 3, 10, 33] {
                let dx = 0.05;
                let mut v = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        v += fgn_covariance(a as i64 - b as i64, h, dx).unwrap();
                    }
                }
                let exact = (k as f64 * dx).powf(2.0 * h);
                assert!((v - exact).abs() < 1e-12 * exact, "{h} {k}");
            }
        }
    }

    #[test]
    fn embedding_is_nonnegative_for_rough_noise() {
        for &h in &[0.05, 0.25, 0.4, 0.5] {
            for n in [2usize, 7, 64, 1000] {
                assert!(circulant_sqrt_eigenvalues(n, h, 0.01).is_ok());
            }
        }
    }

    #[test]
    fn mollifier_has_unit_mass() {
        let t = mollifier_taps(4e-4, 0.01).unwrap();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(t.len() % 2, 1);
        assert!(matches!(mollifier_taps(0.0, 0.01), Err(Error::Domain(_))));
        assert!(mollifier_taps(1e-7, 0.01).is_err());
    }

    #[test]
    fn node_lookup() {
        let g = GridSpec::new(4, 8, 0.5, 0.25, 0.0, -1.0).unwrap();
        assert_eq!(g.x_node(0.0), Some(4));
        assert_eq!(g.x_node(1.0), Some(8));
        assert_eq!(g.x_node(1.1), None);
        assert_eq!(g.t_node(2.0), Some(4));
        assert_eq!(g.t_node(-0.5), None);
    }

    #[test]
    fn w_covariance_examples() {
        assert!((w_covariance((1.0, 1.0), (1.0, 1.0), 0.3) - 1.0).abs() < 1e-15);
        assert!(w_covariance((1.0, 1.0), (1.0, -1.0), 0.5).abs() < 1e-15);
        let v = w_covariance((2.0, 1.5), (1.0, 0.5), 0.3);
        assert!((v - 0.5 * (1.5f64.powf(0.6) + 0.5f64.powf(0.6) - 1.0)).abs() < 1e-15);
    }
}
