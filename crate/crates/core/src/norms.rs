//! Empirical fractional norms and Hölder-exponent regression.

use std::ops::Range;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::noise::GridSpec;
use crate::quadrature::jacobi_interval;
use crate::stats::{ols, LinearFit};

/// Minimum ensemble size for empirical moment norms.
pub const MIN_ENSEMBLE: usize = 100;
/// Minimum ensemble size for Hölder regressions.
pub const MIN_HOLDER_ENSEMBLE: usize = 500;

/// Realizations of a field on the nodes (t_i, x_j) of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: GridSpec,
    realizations: usize,
    values: Vec<f64>,
    deterministic: bool,
}

impl SampledField {
    pub fn new(grid: GridSpec, realizations: usize, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if realizations == 0 {
            return Err(Error::Precondition("need at least one realization".into()));
        }
        if values.len() != realizations * grid.t_count * grid.x_count {
            return Err(Error::Precondition(format!(
                "expected {} values, got {}",
                realizations * grid.t_count * grid.x_count,
                values.len()
            )));
        }
        Ok(Self {
            grid,
            realizations,
            values,
            deterministic: false,
        })
    }

    /// A single non-random field; moment norms are its plain norms and the
    /// ensemble-size minimums do not apply.
    pub fn deterministic<F: Fn(f64, f64) -> f64>(grid: GridSpec, f: F) -> Result<Self> {
        grid.validate()?;
        let mut values = Vec::with_capacity(grid.t_count * grid.x_count);
        for i in 0..grid.t_count {
            for j in 0..grid.x_count {
                values.push(f(grid.t_at(i), grid.x_at(j)));
            }
        }
        Ok(Self {
            grid,
            realizations: 1,
            values,
            deterministic: true,
        })
    }

    /// Deterministic field from precomputed grid values.
    pub fn single(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        Ok(Self {
            deterministic: true,
            ..Self::new(grid, 1, values)?
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn realizations(&self) -> usize {
        self.realizations
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, r: usize, i: usize, j: usize) -> f64 {
        self.values[(r * self.grid.t_count + i) * self.grid.x_count + j]
    }

    /// Row u(t_i, ·) of realization r.
    pub fn row(&self, r: usize, i: usize) -> &[f64] {
        let n = self.grid.x_count;
        let start = (r * self.grid.t_count + i) * n;
        &self.values[start..start + n]
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Pointwise sum of two fields on the same grid and ensemble size.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid || self.realizations != other.realizations {
            return Err(Error::Precondition("fields differ in grid or ensemble size".into()));
        }
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            deterministic: self.deterministic && other.deterministic,
            ..self.clone()
        })
    }

    fn check_finite(&self) -> Result<()> {
        let per = self.grid.t_count * self.grid.x_count;
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            let rest = k % per;
            return Err(Error::NonFinite {
                realization: k / per,
                t_index: rest / self.grid.x_count,
                x_index: rest % self.grid.x_count,
            });
        }
        Ok(())
    }

    fn check_size(&self, min: usize) -> Result<()> {
        if !self.deterministic && self.realizations < min {
            return Err(Error::Precondition(format!(
                "need at least {min} realizations, got {}",
                self.realizations
            )));
        }
        Ok(())
    }
}

/// |v|^p with the even integer powers done by multiplication.
#[inline]
fn abs_pow(v: f64, p: f64) -> f64 {
    if p == 2.0 {
        v * v
    } else if p == 4.0 {
        (v * v) * (v * v)
    } else if p == 8.0 {
        let s = (v * v) * (v * v);
        s * s
    } else {
        v.abs().powf(p)
    }
}

/// How the lag integral is closed beyond the computed lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagTail {
    /// Lags in [h_min, h_max] only (h_max defaults to a quarter of the extent).
    Truncate,
    /// The field is extended by zero off the grid, lags run to the full
    /// extent and the remaining tail is added in closed form; lags below
    /// h_min follow the power law of the two smallest computed lags.
    WholeLine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConfig {
    pub p: f64,
    pub hurst: f64,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub lag_count: usize,
    pub tail: LagTail,
}

impl NormConfig {
    pub fn new(p: f64, hurst: f64) -> Result<Self> {
        let c = Self {
            p,
            hurst,
            h_min: None,
            h_max: None,
            lag_count: 64,
            tail: LagTail::WholeLine,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn beta(&self) -> f64 {
        0.5 - self.hurst
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::Domain(format!("norm exponent p must be >= 2, got {}", self.p)));
        }
        if !(self.hurst > 0.0 && self.hurst < 0.5) {
            return Err(Error::Domain(format!(
                "norm Hurst index must lie in (0, 1/2), got {}",
                self.hurst
            )));
        }
        if self.lag_count < 2 {
            return Err(Error::Precondition("lag_count must be at least 2".into()));
        }
        Ok(())
    }

    /// Integer lag range in grid steps for a grid of the given size.
    fn lag_steps(&self, grid: &GridSpec, reach: usize) -> Result<(usize, usize)> {
        let dx = grid.dx;
        let h_min = self.h_min.unwrap_or(dx);
        if h_min < dx * (1.0 - 1e-12) {
            return Err(Error::Precondition(format!("h_min ({h_min}) below dx ({dx})")));
        }
        let lo = (h_min / dx).round().max(1.0) as usize;
        let hi = match (self.tail, self.h_max) {
            (_, Some(h)) => {
                if !(h > h_min) {
                    return Err(Error::Precondition(format!("h_max ({h}) must exceed h_min ({h_min})")));
                }
                ((h / dx).round() as usize).min(reach)
            }
            (LagTail::Truncate, None) => ((grid.x_count - 1) / 4).min(reach),
            (LagTail::WholeLine, None) => reach,
        };
        if hi <= lo {
            return Err(Error::Precondition(format!(
                "lag range [{lo}, {hi}] grid steps is empty"
            )));
        }
        Ok((lo, hi))
    }
}

/// Distinct integers spread geometrically over [lo, hi], both included.
pub fn geometric_lags(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..count)
        .map(|k| {
            let f = k as f64 / (count.max(2) - 1) as f64;
            ((lo as f64) * (hi as f64 / lo as f64).powf(f)).round() as usize
        })
        .collect();
    out[0] = lo;
    *out.last_mut().unwrap() = hi;
    out.dedup();
    out
}

/// ∫ G(h) h^{2H−2} dh for G linear between the (h, G) nodes. With `head`,
/// the part below the first node is added for G continued as the power law
/// through the first two nodes; with `tail`, G is that constant beyond the last.
fn lag_integral(nodes: &[(f64, f64)], hurst: f64, head: bool, tail: Option<f64>) -> f64 {
    let q1 = 2.0 * hurst - 1.0;
    let q2 = 2.0 * hurst;
    let (h0, g0) = nodes[0];
    let mut acc = 0.0;
    if head && g0 > 0.0 {
        let kappa = match nodes.get(1) {
            Some(&(h1, g1)) if g1 > 0.0 => ((g1 / g0).ln() / (h1 / h0).ln()).clamp(0.0, 2.0),
            _ => 1.0,
        };
        acc += g0 * h0.powf(q1) / (kappa + q1).max(0.05);
    }
    for w in nodes.windows(2) {
        let ((a, ga), (b, gb)) = (w[0], w[1]);
        let slope = (gb - ga) / (b - a);
        let c0 = ga - slope * a;
        acc += c0 * (b.powf(q1) - a.powf(q1)) / q1 + slope * (b.powf(q2) - a.powf(q2)) / q2;
    }
    if let Some(g_inf) = tail {
        let last = nodes[nodes.len() - 1].0;
        acc += g_inf * last.powf(q1) / (1.0 - q2);
    }
    acc
}

/// Per-time contributions of the Z^p norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ZNormReport {
    pub z1: f64,
    pub z2: f64,
    pub z: f64,
    /// (t, ‖u(t)‖_{L^p(Ω×ℝ)}, N*_{½−H,p}(u(t)))
    pub per_time: Vec<(f64, f64, f64)>,
}

impl ZNormReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,z1_t,z2_t")?;
        for (t, a, b) in &self.per_time {
            writeln!(w, "{t},{a},{b}")?;
        }
        Ok(())
    }
}

/// Z^p norm: sup over grid times of ‖u(t)‖_{L^p(Ω×ℝ)} plus sup over grid
/// times of the lag-weighted seminorm with inner L^p(Ω×ℝ) norm.
pub fn z_norm_estimate(field: &SampledField, config: &NormConfig) -> Result<ZNormReport> {
    config.validate()?;
    field.check_finite()?;
    field.check_size(MIN_ENSEMBLE)?;
    let g = field.grid;
    let n = g.x_count;
    let p = config.p;
    let reach = match config.tail {
        LagTail::WholeLine => n,
        LagTail::Truncate => n - 1,
    };
    let (lo, hi) = config.lag_steps(&g, reach)?;
    let lags = geometric_lags(lo, hi, config.lag_count);
    let r = field.realizations as f64;
    let mut per_time = Vec::with_capacity(g.t_count);
    for i in 0..g.t_count {
        // ∫ E|u|^p dx by the trapezoid rule, and the rectangle sums used by the lags
        let mut trap = 0.0;
        let mut rect = 0.0;
        let mut g_lag = vec![0.0; lags.len()];
        for rz in 0..field.realizations {
            let row = field.row(rz, i);
            let pw: Vec<f64> = row.iter().map(|&v| abs_pow(v, p)).collect();
            let s: f64 = pw.iter().sum();
            rect += s;
            trap += s - 0.5 * (pw[0] + pw[n - 1]);
            for (k, &m) in lags.iter().enumerate() {
                let inner: f64 = if m < n {
                    (0..n - m).map(|j| abs_pow(row[j + m] - row[j], p)).sum()
                } else {
                    0.0
                };
                let edge = match config.tail {
                    LagTail::Truncate => 0.0,
                    // values paired with the zero extension on either side
                    LagTail::WholeLine => {
                        let c = m.min(n);
                        pw[..c].iter().sum::<f64>() + pw[n - c..].iter().sum::<f64>()
                    }
                };
                g_lag[k] += inner + edge;
            }
        }
        let dx = g.dx;
        let z1_t = (dx * trap / r).powf(1.0 / p);
        let nodes: Vec<(f64, f64)> = lags
            .iter()
            .zip(&g_lag)
            .map(|(&m, &v)| (m as f64 * dx, (dx * v / r).powf(2.0 / p)))
            .collect();
        let tail = match config.tail {
            LagTail::WholeLine if hi == n => Some((2.0 * dx * rect / r).powf(2.0 / p)),
            _ => None,
        };
        let whole = config.tail == LagTail::WholeLine;
        let z2_t = (2.0 * lag_integral(&nodes, config.hurst, whole, tail)).sqrt();
        per_time.push((g.t_at(i), z1_t, z2_t));
    }
    let z1 = per_time.iter().map(|v| v.1).fold(0.0, f64::max);
    let z2 = per_time.iter().map(|v| v.2).fold(0.0, f64::max);
    Ok(ZNormReport {
        z1,
        z2,
        z: z1 + z2,
        per_time,
    })
}

/// Pointwise N_{β,p}(u(t))(x) with β = ½ − H: both lag directions, each
/// integrated separately up to the grid edge (plus the whole-line tail).
pub fn n_beta_p_estimate(field: &SampledField, config: &NormConfig, t: f64, x: f64) -> Result<f64> {
    config.validate()?;
    field.check_finite()?;
    field.check_size(MIN_ENSEMBLE)?;
    let g = field.grid;
    let n = g.x_count;
    let i = g
        .t_node(t)
        .filter(|&i| i < g.t_count)
        .ok_or_else(|| Error::Precondition(format!("t = {t} is not a grid time")))?;
    let j = g
        .x_node(x)
        .filter(|&j| j < n)
        .ok_or_else(|| Error::Precondition(format!("x = {x} is not a grid node")))?;
    let p = config.p;
    let r = field.realizations as f64;
    let moment = |f: &dyn Fn(&[f64]) -> f64| -> f64 {
        (0..field.realizations)
            .map(|rz| abs_pow(f(field.row(rz, i)), p))
            .sum::<f64>()
            / r
    };
    let mut total = 0.0;
    for dir in [1isize, -1] {
        let reach = if dir > 0 { n - 1 - j } else { j };
        let whole = config.tail == LagTail::WholeLine;
        let limit = if whole { reach + 1 } else { reach };
        if limit == 0 {
            continue;
        }
        let (lo, hi) = match config.lag_steps(&g, limit) {
            Ok(v) => v,
            Err(_) if limit <= 1 => (1, 1),
            Err(e) => return Err(e),
        };
        let lags = geometric_lags(lo, hi.max(lo), config.lag_count);
        let nodes: Vec<(f64, f64)> = lags
            .iter()
            .map(|&m| {
                let v = moment(&|row: &[f64]| {
                    let k = j as isize + dir * m as isize;
                    let other = if k < 0 || k >= n as isize { 0.0 } else { row[k as usize] };
                    other - row[j]
                });
                (m as f64 * g.dx, v.powf(2.0 / p))
            })
            .collect();
        let tail = if whole && hi == limit {
            Some(moment(&|row: &[f64]| row[j]).powf(2.0 / p))
        } else {
            None
        };
        total += lag_integral(&nodes, config.hurst, whole, tail);
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Time,
    Space,
}

/// Base points over which increment moments are pooled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HolderPool {
    pub t: Range<usize>,
    pub x: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderFit {
    pub axis: Axis,
    pub p: f64,
    pub slope: f64,
    pub stderr: f64,
    pub lags: Vec<usize>,
    /// (lag length, (1/p)·ln E|Δu|^p)
    pub points: Vec<(f64, f64)>,
}

impl HolderFit {
    pub fn csv_line(&self) -> String {
        let axis = match self.axis {
            Axis::Time => "time",
            Axis::Space => "space",
        };
        format!(
            "{axis},{},{},{},{}-{}",
            self.p,
            self.slope,
            self.stderr,
            self.lags[0],
            self.lags[self.lags.len() - 1]
        )
    }
}

/// Hölder exponent with the default pool: the later half of the time levels
/// and the middle half of the space nodes, trimmed so every increment stays
/// on the grid. `lag_range` is in grid steps.
pub fn holder_exponent(field: &SampledField, axis: Axis, p: f64, lag_range: (usize, usize)) -> Result<HolderFit> {
    let g = field.grid;
    let (tc, nx) = (g.t_count, g.x_count);
    let hi = lag_range.1;
    let pool = match axis {
        Axis::Space => HolderPool {
            t: tc / 2..tc,
            x: nx / 4..(3 * nx / 4).min(nx.saturating_sub(hi)),
        },
        Axis::Time => HolderPool {
            t: tc / 2..tc.saturating_sub(hi),
            x: nx / 4..3 * nx / 4,
        },
    };
    holder_exponent_pooled(field, axis, p, lag_range, &pool)
}

/// Least-squares slope of (1/p)·ln E|Δ_lag u|^p against ln(lag), the moment
/// pooled over `pool` and over realizations.
pub fn holder_exponent_pooled(
    field: &SampledField,
    axis: Axis,
    p: f64,
    lag_range: (usize, usize),
    pool: &HolderPool,
) -> Result<HolderFit> {
    field.check_finite()?;
    field.check_size(MIN_HOLDER_ENSEMBLE)?;
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("moment order must be >= 1, got {p}")));
    }
    let (lo, hi) = lag_range;
    if lo == 0 || hi <= lo {
        return Err(Error::Precondition(format!("bad lag range {lo}..{hi}")));
    }
    let lags = geometric_lags(lo, hi, 12);
    if lags.len() < 4 {
        return Err(Error::Precondition(format!(
            "need at least 4 distinct lags, range {lo}..{hi} gives {}",
            lags.len()
        )));
    }
    let g = field.grid;
    if pool.t.is_empty() || pool.x.is_empty() {
        return Err(Error::Precondition("empty pooling region".into()));
    }
    let (t_end, x_end) = match axis {
        Axis::Time => (pool.t.end - 1 + hi, pool.x.end - 1),
        Axis::Space => (pool.t.end - 1, pool.x.end - 1 + hi),
    };
    if t_end >= g.t_count || x_end >= g.x_count {
        return Err(Error::Precondition("increments leave the grid for this pool".into()));
    }
    let step = match axis {
        Axis::Time => g.dt,
        Axis::Space => g.dx,
    };
    let count = (field.realizations * pool.t.len() * pool.x.len()) as f64;
    let mut xs = Vec::with_capacity(lags.len());
    let mut ys = Vec::with_capacity(lags.len());
    let mut points = Vec::with_capacity(lags.len());
    for &m in &lags {
        let mut acc = 0.0;
        for r in 0..field.realizations {
            for i in pool.t.clone() {
                for j in pool.x.clone() {
                    let (a, b) = match axis {
                        Axis::Time => (field.at(r, i + m, j), field.at(r, i, j)),
                        Axis::Space => (field.at(r, i, j + m), field.at(r, i, j)),
                    };
                    acc += abs_pow(a - b, p);
                }
            }
        }
        let mean = acc / count;
        if !(mean > 0.0) {
            return Err(Error::Regression(format!("increments vanish at lag {m}")));
        }
        let h = m as f64 * step;
        xs.push(h.ln());
        ys.push(mean.ln() / p);
        points.push((h, mean.ln() / p));
    }
    let LinearFit {
        slope, slope_stderr, ..
    } = ols(&xs, &ys)?;
    Ok(HolderFit {
        axis,
        p,
        slope,
        stderr: slope_stderr,
        lags,
        points,
    })
}

/// The normalizing constant c_H² of the noise's Hilbert-space inner product,
/// H(½−H)Γ(H+½)^{−2}(∫_0^∞[(1+t)^{H−½} − t^{H−½}]² dt + 1/(2H)).
pub fn c_h_squared(hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 0.5) {
        return Err(Error::Domain(format!("Hurst index must lie in (0, 1/2), got {hurst}")));
    }
    let a = hurst - 0.5;
    let n = 40;
    // [0,1]: expand the square, each piece with its own endpoint power
    let near = jacobi_interval(0.0, 1.0, 0.0, 0.0, n, |t| (1.0 + t).powf(2.0 * a))?
        - 2.0 * jacobi_interval(0.0, 1.0, a, 0.0, n, |t| (1.0 + t).powf(a))?
        + 1.0 / (2.0 * a + 1.0);
    // [1,∞) through v = 1/t: v^{−2a}·((1+v)^a − 1)²/v²
    let far = jacobi_interval(0.0, 1.0, -2.0 * a, 0.0, n, |v| {
        let d = if v < 1e-8 {
            a * v * (1.0 + 0.5 * (a - 1.0) * v)
        } else {
            (1.0 + v).powf(a) - 1.0
        };
        (d / v).powi(2)
    })?;
    let g = gamma(hurst + 0.5);
    Ok(hurst * (0.5 - hurst) / (g * g) * (near + far + 1.0 / (2.0 * hurst)))
}
