//! Second-moment diagnostics of the first two Wiener chaoses of the
//! hyperbolic Anderson model with Gaussian initial position.
//!
//! Everything is computed in Fourier space. For the first chaos kernel
//! f(y) = G_{t−s}(x−y)·I₀(s,y) the transform is the convolution of the
//! window transform with the Gaussian transform, evaluated by a trapezoid
//! sum in the dual variable (spectrally accurate, the integrand is entire).
//! The ξ-integral is Gauss–Jacobi on [0,1], Gauss–Legendre panels on [1,Ξ]
//! and an analytic tail from the jump asymptotics of the window beyond Ξ.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{fourier_half_line, jacobi_cached, jacobi_interval, legendre_cached, Trig};
use crate::stats::{ols, LinearFit};

const JACOBI_NODES: usize = 32;
const PANEL_ORDER: usize = 8;
const TIME_NODES: usize = 64;
const SCAN_OUTER: usize = 12;
const SCAN_INNER: usize = 32;
/// Beyond this argument the power-cosine tails use the Ooura–Mori rule.
const SERIES_LIMIT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosConfig {
    pub hurst: f64,
    pub t: f64,
    pub x: f64,
    /// Spectral cutoff Ξ of the numerical ξ-quadrature.
    pub xi_cutoff: f64,
    /// Number of ξ nodes on [1, Ξ].
    pub xi_nodes: usize,
    /// Smallest inner cutoff of the divergence scan.
    pub h_cutoff_inner: f64,
    /// u₀(x) = amplitude·e^{−x²}; 0 gives zero data.
    pub amplitude: f64,
}

impl ChaosConfig {
    /// Defaults: Ξ = 256, 4096 ξ-nodes, scan down to 2⁻⁹, unit amplitude.
    pub fn new(hurst: f64, t: f64, x: f64) -> Result<Self> {
        let c = Self {
            hurst,
            t,
            x,
            xi_cutoff: 256.0,
            xi_nodes: 4096,
            h_cutoff_inner: 2f64.powi(-9),
            amplitude: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 0.5) {
            return Err(Error::Domain(format!("H must lie in (0, 1/2), got {}", self.hurst)));
        }
        if !(self.t > 0.0 && self.t.is_finite() && self.x.is_finite()) {
            return Err(Error::Domain(format!(
                "need t > 0 and finite x, got ({}, {})",
                self.t, self.x
            )));
        }
        if !(self.xi_cutoff > 2.0 && self.xi_cutoff.is_finite()) {
            return Err(Error::Precondition(format!(
                "xi_cutoff must exceed 2, got {}",
                self.xi_cutoff
            )));
        }
        if self.xi_nodes < 256 {
            return Err(Error::Precondition(format!(
                "need at least 256 xi nodes, got {}",
                self.xi_nodes
            )));
        }
        if !(self.h_cutoff_inner > 0.0 && self.h_cutoff_inner < 1.0) {
            return Err(Error::Precondition(format!(
                "inner cutoff must lie in (0, 1), got {}",
                self.h_cutoff_inner
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Precondition("amplitude must be finite".into()));
        }
        Ok(())
    }

    /// 2⁻⁴, 2⁻⁵, … down to the inner cutoff.
    pub fn eps_ladder(&self) -> Vec<f64> {
        let mut v = Vec::new();
        let mut e = 2f64.powi(-4);
        while e >= self.h_cutoff_inner * (1.0 - 1e-12) {
            v.push(e);
            e *= 0.5;
        }
        v
    }

    fn i0(&self, s: f64, y: f64) -> f64 {
        0.5 * self.amplitude * ((-(y + s) * (y + s)).exp() + (-(y - s) * (y - s)).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosEstimate {
    /// Numerical part plus analytic tail.
    pub value: f64,
    /// ξ-integral truncated at Ξ (nondecreasing in Ξ).
    pub truncated_value: f64,
    pub tail_estimate: f64,
    /// |value(Ξ) − value(Ξ/2)|.
    pub truncation_error: f64,
    pub cutoff: f64,
}

/// Constant c with ½(|x|^{2H}+|y|^{2H}−|x−y|^{2H}) = c∫(e^{ixξ}−1)(e^{−iyξ}−1)|ξ|^{−1−2H}dξ,
/// so E|W(φ)|² per unit time is c∫|φ̂(ξ)|²|ξ|^{1−2H}dξ.
pub fn spectral_constant(hurst: f64) -> f64 {
    gamma(2.0 * hurst + 1.0) * (PI * hurst).sin() / (2.0 * PI)
}

/// G_{t−s}(x−y)·I₀(s,y) for the Gaussian data.
pub fn g1_kernel_eval(config: &ChaosConfig, s: f64, y: f64) -> Result<f64> {
    if !(s >= 0.0 && s < config.t) {
        return Err(Error::Precondition(format!("need 0 <= s < t, got s = {s}")));
    }
    if (config.x - y).abs() >= config.t - s {
        return Ok(0.0);
    }
    Ok(0.5 * config.i0(s, y))
}

/// ∫_0^z (1 − cos u) u^{−ν} du for 1 < ν < 3.
fn one_minus_cos_head(z: f64, nu: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z <= SERIES_LIMIT {
        let mut acc = 0.0;
        let mut fact = 1.0;
        let z2 = z * z;
        let mut zp = z.powf(1.0 - nu);
        for k in 1..60 {
            let kk = 2 * k;
            fact *= ((kk - 1) * kk) as f64;
            zp *= z2;
            let term = zp / (fact * (kk as f64 + 1.0 - nu));
            if k % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
            if term < 1e-18 * acc.abs() {
                break;
            }
        }
        acc
    } else {
        full_one_minus_cos(nu) - z.powf(1.0 - nu) / (nu - 1.0) + cos_power_tail(z, nu)
    }
}

/// ∫_0^∞ (1 − cos u) u^{−ν} du = Γ(2−ν) cos(π(ν−1)/2)/(ν−1).
fn full_one_minus_cos(nu: f64) -> f64 {
    let a = nu - 1.0;
    if (a - 1.0).abs() < 1e-12 {
        return PI / 2.0;
    }
    gamma(1.0 - a) * (PI * a / 2.0).cos() / a
}

/// ∫_z^∞ cos(u) u^{−ν} du for z > 0, 1 < ν < 3.
fn cos_power_tail(z: f64, nu: f64) -> f64 {
    if z <= SERIES_LIMIT {
        z.powf(1.0 - nu) / (nu - 1.0) - full_one_minus_cos(nu) + one_minus_cos_head(z, nu)
    } else {
        let f = |y: f64| (z + y).powf(-nu);
        let c = fourier_half_line(&f, 1.0, Trig::Cos).value;
        let s = fourier_half_line(&f, 1.0, Trig::Sin).value;
        z.cos() * c - z.sin() * s
    }
}

/// J(ω) = ∫_Ξ^∞ cos(ωξ) ξ^{−1−2H} dξ.
fn j_tail(omega: f64, cutoff: f64, hurst: f64) -> f64 {
    let w = omega.abs();
    if w == 0.0 {
        return cutoff.powf(-2.0 * hurst) / (2.0 * hurst);
    }
    w.powf(2.0 * hurst) * cos_power_tail(w * cutoff, 1.0 + 2.0 * hurst)
}

/// ξ-nodes in increasing order with the |ξ|^{1−2H} weight folded into the
/// weights; nodes[..half] lie in [0, Ξ/2].
struct XiGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    half: usize,
}

impl XiGrid {
    fn new(config: &ChaosConfig) -> Result<Self> {
        let a = 1.0 - 2.0 * config.hurst;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        // weight ξ^{1−2H} at the left end of [0, 1]
        let gj = jacobi_cached(JACOBI_NODES, 0.0, a)?;
        for (x, w) in gj.mapped(0.0, 1.0) {
            nodes.push(x);
            weights.push(w);
        }
        let gl = legendre_cached(PANEL_ORDER);
        let panels = (config.xi_nodes / (2 * PANEL_ORDER)).max(1);
        let mid = 0.5 * config.xi_cutoff;
        let mut half = 0;
        for (lo, hi) in [(1.0, mid), (mid, config.xi_cutoff)] {
            let w = (hi - lo) / panels as f64;
            for k in 0..panels {
                let p0 = lo + k as f64 * w;
                for (x, wt) in gl.mapped(p0, p0 + w) {
                    nodes.push(x);
                    weights.push(wt * x.powf(a));
                }
            }
            if half == 0 {
                half = nodes.len();
            }
        }
        Ok(Self { nodes, weights, half })
    }
}

/// Trapezoid sum for the transform of ½·1_{|y−c|<τ}·I₀(s, y) in ξ.
struct Window {
    amp: Vec<f64>,
    phase: Vec<(f64, f64)>,
    rot: Vec<(f64, f64)>,
    eta: Vec<f64>,
    tau: f64,
}

impl Window {
    fn new(config: &ChaosConfig, s: f64, tau: f64, center: f64) -> Self {
        // step from the strip-of-analyticity bound, span where e^{−η²/4} < 1e−17
        let step = 2.0 * PI / (s + tau + center.abs() + 12.0);
        let span = 12.5;
        let n = (span / step).ceil() as i64;
        let scale = config.amplitude * step / (2.0 * PI) * PI.sqrt();
        let mut w = Self {
            amp: Vec::new(),
            phase: Vec::new(),
            rot: Vec::new(),
            eta: Vec::new(),
            tau,
        };
        for k in -n..=n {
            let eta = k as f64 * step;
            w.eta.push(eta);
            w.amp.push(scale * (-eta * eta / 4.0).exp() * (s * eta).cos());
            w.phase.push(((center * eta).cos(), (center * eta).sin()));
            w.rot.push(((tau * eta).cos(), (tau * eta).sin()));
        }
        w
    }

    /// |f̂(ξ)|² at each node.
    fn power(&self, xi: &[f64], out: &mut [f64]) {
        let tau = self.tau;
        for (o, &z) in out.iter_mut().zip(xi) {
            let (st, ct) = (tau * z).sin_cos();
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..self.eta.len() {
                let d = z - self.eta[k];
                let sinc = if d.abs() < 1e-6 {
                    tau * (1.0 - (tau * d).powi(2) / 6.0)
                } else {
                    (st * self.rot[k].0 - ct * self.rot[k].1) / d
                };
                let a = self.amp[k] * sinc;
                re += a * self.phase[k].0;
                im += a * self.phase[k].1;
            }
            *o = re * re + im * im;
        }
    }
}

/// Weight of the ξ-integrand: 1 for I₁, |e^{ihξ} − 1|² for the increment.
#[derive(Clone, Copy)]
enum Factor {
    Plain,
    Increment(f64),
}

impl Factor {
    fn at(self, xi: f64) -> f64 {
        match self {
            Factor::Plain => 1.0,
            Factor::Increment(h) => 2.0 * (1.0 - (h * xi).cos()),
        }
    }

    /// ∫_Ξ^∞ factor·(A² + B² − 2AB cos 2τξ) ξ^{−1−2H} dξ.
    fn tail(self, a: f64, b: f64, tau: f64, cutoff: f64, hurst: f64) -> f64 {
        let j = |w: f64| j_tail(w, cutoff, hurst);
        let sq = a * a + b * b;
        match self {
            Factor::Plain => sq * j(0.0) - 2.0 * a * b * j(2.0 * tau),
            Factor::Increment(h) => {
                2.0 * sq * (j(0.0) - j(h)) - 4.0 * a * b * j(2.0 * tau)
                    + 2.0 * a * b * (j(2.0 * tau - h) + j(2.0 * tau + h))
            }
        }
    }
}

fn family(config: &ChaosConfig, factors: &[Factor]) -> Result<Vec<ChaosEstimate>> {
    config.validate()?;
    let grid = XiGrid::new(config)?;
    let h = config.hurst;
    let cutoff = config.xi_cutoff;
    let s_rule = legendre_cached(TIME_NODES);
    let s_nodes: Vec<(f64, f64)> = s_rule.mapped(0.0, config.t).collect();
    // per s-node: for each factor (numeric to Ξ/2, numeric to Ξ, tail at Ξ/2, tail at Ξ)
    let per_s: Vec<Vec<[f64; 4]>> = s_nodes
        .par_iter()
        .map(|&(s, ws)| {
            let tau = config.t - s;
            let win = Window::new(config, s, tau, config.x);
            let mut pw = vec![0.0; grid.nodes.len()];
            win.power(&grid.nodes, &mut pw);
            let a = 0.5 * config.i0(s, config.x + tau);
            let b = 0.5 * config.i0(s, config.x - tau);
            factors
                .iter()
                .map(|&f| {
                    let mut half = 0.0;
                    let mut full = 0.0;
                    for (k, (&z, &w)) in grid.nodes.iter().zip(&grid.weights).enumerate() {
                        full += w * pw[k] * f.at(z);
                        if k + 1 == grid.half {
                            half = full;
                        }
                    }
                    [
                        ws * half,
                        ws * full,
                        ws * f.tail(a, b, tau, 0.5 * cutoff, h),
                        ws * f.tail(a, b, tau, cutoff, h),
                    ]
                })
                .collect()
        })
        .collect();
    let c = 2.0 * spectral_constant(h);
    let mut out = Vec::with_capacity(factors.len());
    for k in 0..factors.len() {
        let mut sums = [0.0; 4];
        for row in &per_s {
            for (acc, v) in sums.iter_mut().zip(row[k]) {
                *acc += v;
            }
        }
        let [half, full, tail_half, tail_full] = sums.map(|v| c * v);
        let value = full + tail_full;
        let coarse = half + tail_half;
        let est = ChaosEstimate {
            value,
            truncated_value: full,
            tail_estimate: tail_full,
            truncation_error: (value - coarse).abs(),
            cutoff,
        };
        if est.truncation_error > 0.1 * est.value.abs() {
            return Err(Error::Truncation {
                estimate: est.truncation_error,
                value: est.value,
                cutoff,
            });
        }
        out.push(est);
    }
    Ok(out)
}

/// E|I₁(t,x)|² = c∫_0^t∫|F[G_{t−s}(x−·)I₀(s,·)](ξ)|²|ξ|^{1−2H}dξ ds.
pub fn i1_second_moment(config: &ChaosConfig) -> Result<ChaosEstimate> {
    Ok(family(config, &[Factor::Plain])?[0])
}

fn check_lag(config: &ChaosConfig, h: f64) -> Result<()> {
    let bound = config.t.min(2.0) / 2.0;
    if !(h >= 0.0 && h < bound) {
        return Err(Error::Domain(format!("need 0 <= h < min(1, t/2) = {bound}, got {h}")));
    }
    Ok(())
}

/// E|D_h I₁(t,x)|² with the increment factor |e^{ihξ}−1|² in the ξ-integrand.
pub fn dh_i1_second_moment(config: &ChaosConfig, h: f64) -> Result<ChaosEstimate> {
    Ok(dh_i1_profile(config, &[h])?[0])
}

/// dh_i1_second_moment for several lags sharing one spectral evaluation.
pub fn dh_i1_profile(config: &ChaosConfig, lags: &[f64]) -> Result<Vec<ChaosEstimate>> {
    for &h in lags {
        check_lag(config, h)?;
    }
    let factors: Vec<Factor> = lags.iter().map(|&h| Factor::Increment(h)).collect();
    family(config, &factors)
}

/// ∫_0^2 (s^{2H} + s²)(2 − s)^{2H} ds, H ∈ (0, ½].
pub fn i2_upper_term(hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst <= 0.5) {
        return Err(Error::Domain(format!("H must lie in (0, 1/2], got {hurst}")));
    }
    let e = 2.0 * hurst;
    let a = jacobi_interval(0.0, 2.0, e, e, 16, |_| 1.0)?;
    let b = jacobi_interval(0.0, 2.0, 0.0, e, 16, |s| s * s)?;
    Ok(a + b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub eps: f64,
    pub value: f64,
    pub truncation_error: f64,
}

/// M_ε(ξ) = 4∫_ε^1 (1 − cos hξ) h^{2H−2} dh.
fn m_eps(xi: f64, eps: f64, hurst: f64, head_at_xi: f64) -> f64 {
    let nu = 2.0 - 2.0 * hurst;
    4.0 * xi.powf(1.0 - 2.0 * hurst) * (head_at_xi - one_minus_cos_head(eps * xi, nu))
}

/// Tail weight 4∫_ε^1 h^{2H−2}∫_Ξ^∞(1 − cos hξ)ξ^{−1−2H}dξ dh
/// = 4Ξ^{1−4H}∫_{εΞ}^{Ξ} v^{4H−2}[K − Q(v)] dv.
fn scan_tail_weight(eps: f64, cutoff: f64, hurst: f64) -> f64 {
    let nu = 1.0 + 2.0 * hurst;
    let k = full_one_minus_cos(nu);
    let g = |v: f64| v.powf(4.0 * hurst - 2.0) * (k - one_minus_cos_head(v, nu));
    let gl = legendre_cached(16);
    let lo = eps * cutoff;
    let mut acc = 0.0;
    // geometric panels up to 1, unit panels beyond
    let mut a = lo;
    while a < 1.0 {
        let b = (2.0 * a).min(1.0);
        acc += gl.integrate(a, b, g);
        a = b;
    }
    while a < cutoff {
        let b = (a.floor() + 1.0).min(cutoff);
        acc += gl.integrate(a, b, g);
        a = b;
    }
    4.0 * cutoff.powf(1.0 - 4.0 * hurst) * acc
}

/// Inner-cutoff lower-bound functional of the second chaos:
/// ∫_{t/2}^{t}∫|G_{t−s}(x−y)|²∫_{ε<|h|<1}E|D_h I₁(s,y)|²|h|^{2H−2}dh dy ds,
/// one value per ε. Beyond Ξ the window power is replaced by its
/// non-oscillatory part (A² + B²)/ξ².
pub fn i2_divergence_scan(config: &ChaosConfig, eps_list: &[f64]) -> Result<Vec<ScanPoint>> {
    config.validate()?;
    if eps_list.is_empty() {
        return Err(Error::Precondition("empty cutoff list".into()));
    }
    if eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition(
            "cutoffs must decrease strictly inside (0, 1)".into(),
        ));
    }
    let h = config.hurst;
    let grid = XiGrid::new(config)?;
    let outer = legendre_cached(SCAN_OUTER);
    let mut cells = Vec::new();
    for (s, ws) in outer.mapped(0.5 * config.t, config.t) {
        let half = config.t - s;
        for (y, wy) in outer.mapped(config.x - half, config.x + half) {
            cells.push((s, y, 0.25 * ws * wy));
        }
    }
    // Ψ(ξ) = Σ W_{sy} ∫_0^s |f̂_{r;s,y}(ξ)|² dr and α = Σ W_{sy} ∫_0^s (A_r² + B_r²) dr
    let n = grid.nodes.len();
    let (psi, alpha) = cells
        .par_iter()
        .map(|&(s, y, w)| {
            let inner = legendre_cached(SCAN_INNER);
            let mut psi = vec![0.0; n];
            let mut pw = vec![0.0; n];
            let mut alpha = 0.0;
            for (r, wr) in inner.mapped(0.0, s) {
                let tau = s - r;
                Window::new(config, r, tau, y).power(&grid.nodes, &mut pw);
                for (p, v) in psi.iter_mut().zip(&pw) {
                    *p += w * wr * v;
                }
                let a = 0.5 * config.i0(r, y + tau);
                let b = 0.5 * config.i0(r, y - tau);
                alpha += w * wr * (a * a + b * b);
            }
            (psi, alpha)
        })
        .reduce(
            || (vec![0.0; n], 0.0),
            |(mut p, a), (q, b)| {
                p.iter_mut().zip(&q).for_each(|(x, y)| *x += y);
                (p, a + b)
            },
        );
    let nu = 2.0 - 2.0 * h;
    let heads: Vec<f64> = grid.nodes.iter().map(|&z| one_minus_cos_head(z, nu)).collect();
    let c = 2.0 * spectral_constant(h);
    let points: Vec<ScanPoint> = eps_list
        .par_iter()
        .map(|&eps| {
            let mut half = 0.0;
            let mut full = 0.0;
            for k in 0..n {
                let z = grid.nodes[k];
                full += grid.weights[k] * psi[k] * m_eps(z, eps, h, heads[k]);
                if k + 1 == grid.half {
                    half = full;
                }
            }
            let value = c * (full + alpha * scan_tail_weight(eps, config.xi_cutoff, h));
            let coarse = c * (half + alpha * scan_tail_weight(eps, 0.5 * config.xi_cutoff, h));
            ScanPoint {
                eps,
                value,
                truncation_error: (value - coarse).abs(),
            }
        })
        .collect();
    if h < 0.25 && points.windows(2).any(|w| !(w[1].value > w[0].value)) {
        return Err(Error::Quadrature {
            what: "divergence scan is not monotone in the cutoff".into(),
            estimate: points.iter().map(|p| p.truncation_error).fold(0.0, f64::max),
            tolerance: 0.0,
        });
    }
    Ok(points)
}

/// Successive differences V(ε_{k+1}) − V(ε_k), keyed by ε_{k+1}.
pub fn scan_increments(points: &[ScanPoint]) -> Vec<(f64, f64)> {
    points.windows(2).map(|w| (w[1].eps, w[1].value - w[0].value)).collect()
}

/// Log-log slope of the scan increments against ε; on a halving ladder this
/// is the exponent 4H − 1 of the divergent part.
pub fn scan_increment_slope(points: &[ScanPoint]) -> Result<LinearFit> {
    let inc = scan_increments(points);
    if inc.iter().any(|&(_, d)| !(d > 0.0)) {
        return Err(Error::Regression("scan increments must be positive".into()));
    }
    let xs: Vec<f64> = inc.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = inc.iter().map(|p| p.1.ln()).collect();
    ols(&xs, &ys)
}

pub fn write_scan_csv<W: Write>(points: &[ScanPoint], mut w: W) -> Result<()> {
    writeln!(w, "eps,value,truncation_error")?;
    for p in points {
        writeln!(w, "{},{},{}", p.eps, p.value, p.truncation_error)?;
    }
    Ok(())
}
