//! The wave kernel G and the decomposition kernels E, S_α, C_{1−α}.
//!
//! Fourier convention: f̂(ξ) = ∫ e^{−ixξ} f(x) dx, inverse with 1/(2π).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{exp_sinh, fourier_half_line, jacobi_interval, legendre_cached, Trig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    WaveG,
    PoissonE,
    SineSAlpha,
    CosineCOneMinusAlpha,
}

/// A kernel and its exponent. `SineSAlpha` with α = 1 is stored as `WaveG`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    alpha: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, alpha: f64) -> Result<Self> {
        match kind {
            KernelKind::WaveG => Ok(Self::wave()),
            KernelKind::PoissonE => Ok(Self::poisson()),
            KernelKind::SineSAlpha => Self::sine(alpha),
            KernelKind::CosineCOneMinusAlpha => Self::cosine(alpha),
        }
    }

    pub fn wave() -> Self {
        Self {
            kind: KernelKind::WaveG,
            alpha: 1.0,
        }
    }

    pub fn poisson() -> Self {
        Self {
            kind: KernelKind::PoissonE,
            alpha: 0.0,
        }
    }

    /// S_α for α ∈ (0, 1]; S_1 is the wave kernel.
    pub fn sine(alpha: f64) -> Result<Self> {
        if alpha == 1.0 {
            return Ok(Self::wave());
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("S_alpha needs alpha in (0, 1], got {alpha}")));
        }
        Ok(Self {
            kind: KernelKind::SineSAlpha,
            alpha,
        })
    }

    /// C_{1−α} for α ∈ (0, 1).
    pub fn cosine(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("C_(1-alpha) needs alpha in (0, 1), got {alpha}")));
        }
        Ok(Self {
            kind: KernelKind::CosineCOneMinusAlpha,
            alpha,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// True for the kernels with a power singularity at |x| = t.
    pub fn is_singular(&self) -> bool {
        matches!(self.kind, KernelKind::SineSAlpha | KernelKind::CosineCOneMinusAlpha)
    }

    pub fn label(&self) -> String {
        match self.kind {
            KernelKind::WaveG => "G".into(),
            KernelKind::PoissonE => "E".into(),
            KernelKind::SineSAlpha => format!("S[{}]", self.alpha),
            KernelKind::CosineCOneMinusAlpha => format!("C[1-{}]", self.alpha),
        }
    }

    fn sine_const(&self) -> f64 {
        gamma(1.0 - self.alpha) / (2.0 * PI) * (self.alpha * PI / 2.0).cos()
    }

    fn cosine_const(&self) -> f64 {
        gamma(self.alpha) / (2.0 * PI)
    }
}

fn check_time<T: Real>(t: T) -> Result<()> {
    if t > T::zero() {
        Ok(())
    } else {
        Err(Error::Domain(format!("kernel time must be positive, got {t:?}")))
    }
}

/// Physical-space kernel value K(t, x).
pub fn eval_kernel<T: Real>(spec: &KernelSpec, t: T, x: T) -> Result<T> {
    check_time(t)?;
    let ax = x.abs();
    let half = T::lit(0.5);
    let pi = T::PI();
    let a = T::lit(spec.alpha);
    match spec.kind {
        KernelKind::WaveG => Ok(if ax < t { half } else { T::zero() }),
        KernelKind::PoissonE => Ok(t / (pi * (t * t + x * x))),
        KernelKind::SineSAlpha | KernelKind::CosineCOneMinusAlpha if ax == t => Err(Error::Singularity {
            t: t.to_f64().unwrap_or(f64::NAN),
            x: x.to_f64().unwrap_or(f64::NAN),
        }),
        KernelKind::SineSAlpha if ax > T::lit(FAR_FIELD) * t => {
            Ok(T::lit(spec.sine_const()) * far_field(spec.kind, spec.alpha, t, ax))
        }
        KernelKind::CosineCOneMinusAlpha if ax > T::lit(FAR_FIELD) * t => {
            Ok(T::lit(spec.cosine_const()) * far_field(spec.kind, spec.alpha, t, ax))
        }
        KernelKind::SineSAlpha => {
            let c = T::lit(spec.sine_const());
            let e = a - T::one();
            let sgn = if ax < t { T::one() } else { -T::one() };
            Ok(c * ((t + ax).powf(e) + sgn * (t - ax).abs().powf(e)))
        }
        KernelKind::CosineCOneMinusAlpha => {
            let c = T::lit(spec.cosine_const());
            let cos_half = (a * pi * half).cos();
            let two = T::lit(2.0);
            let v = cos_half * ((t + ax).powf(-a) + (t - ax).abs().powf(-a))
                - two * (a * (ax / t).atan()).cos() * (t * t + x * x).powf(-a * half);
            Ok(c * v)
        }
    }
}

/// Beyond |x| = FAR_FIELD·t the singular kernels are summed as power series in
/// t/|x|, since the closed forms lose all digits to cancellation there.
const FAR_FIELD: f64 = 4.0;

/// Series for the bracket of S_α or C_{1−α} (without the leading constant)
/// at |x| > t. With b_k the binomial coefficients of (1+y)^ν and ε = t/|x|:
/// S: 2|x|^{α−1} Σ_{k odd} b_k ε^k with ν = α−1,
/// C: |x|^{−α} Σ_k b_k ε^k [cos(απ/2)(1+(−1)^k) − 2cos((α+k)π/2)] with ν = −α.
fn far_field<T: Real>(kind: KernelKind, alpha: f64, t: T, ax: T) -> T {
    let eps = t / ax;
    let a = T::lit(alpha);
    let half_pi = T::FRAC_PI_2();
    let nu = if kind == KernelKind::SineSAlpha {
        a - T::one()
    } else {
        -a
    };
    let cos_half = (a * half_pi).cos();
    let mut b = T::one();
    let mut pow = T::one();
    let mut sum = T::zero();
    for k in 0..200usize {
        let kf = T::from_usize(k).unwrap();
        let weight = if kind == KernelKind::SineSAlpha {
            if k % 2 == 1 {
                T::lit(2.0)
            } else {
                T::zero()
            }
        } else {
            let even = if k % 2 == 0 { T::lit(2.0) } else { T::zero() };
            cos_half * even - T::lit(2.0) * ((a + kf) * half_pi).cos()
        };
        let term = b * pow * weight;
        sum = sum + term;
        if k > 2 && (b * pow).abs() * T::lit(4.0) <= T::epsilon() * sum.abs() {
            break;
        }
        b = b * (nu - kf) / (kf + T::one());
        pow = pow * eps;
    }
    ax.powf(nu) * sum
}

/// Fourier transform K̂(t, ξ) in closed form.
pub fn eval_kernel_hat<T: Real>(spec: &KernelSpec, t: T, xi: T) -> Result<T> {
    check_time(t)?;
    let ax = xi.abs();
    let a = T::lit(spec.alpha);
    Ok(match spec.kind {
        KernelKind::WaveG => {
            if ax == T::zero() {
                t
            } else {
                (t * ax).sin() / ax
            }
        }
        KernelKind::PoissonE => (-t * ax).exp(),
        KernelKind::SineSAlpha => {
            if ax == T::zero() {
                T::zero()
            } else {
                (t * ax).sin() / ax.powf(a)
            }
        }
        KernelKind::CosineCOneMinusAlpha => {
            if ax == T::zero() {
                T::zero()
            } else {
                ((t * ax).cos() - (-t * ax).exp()) / ax.powf(T::one() - a)
            }
        }
    })
}

/// K = regular + coeff·|t − |x||^exponent, valid away from |x| = t.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Split {
    pub regular: f64,
    pub coeff: f64,
    pub exponent: f64,
}

pub(crate) fn split(spec: &KernelSpec, t: f64, x: f64) -> Split {
    let ax = x.abs();
    let a = spec.alpha;
    match spec.kind {
        KernelKind::WaveG => Split {
            regular: if ax < t { 0.5 } else { 0.0 },
            coeff: 0.0,
            exponent: 0.0,
        },
        KernelKind::PoissonE => Split {
            regular: t / (PI * (t * t + x * x)),
            coeff: 0.0,
            exponent: 0.0,
        },
        KernelKind::SineSAlpha => {
            let c = spec.sine_const();
            Split {
                regular: c * (t + ax).powf(a - 1.0),
                coeff: if ax < t { c } else { -c },
                exponent: a - 1.0,
            }
        }
        KernelKind::CosineCOneMinusAlpha => {
            let c = spec.cosine_const();
            let cos_half = (a * PI / 2.0).cos();
            Split {
                regular: c
                    * (cos_half * (t + ax).powf(-a)
                        - 2.0 * (a * (ax / t).atan()).cos() * (t * t + x * x).powf(-a / 2.0)),
                coeff: c * cos_half,
                exponent: -a,
            }
        }
    }
}

fn split_value(s: &Split, dist: f64) -> f64 {
    if s.coeff == 0.0 {
        s.regular
    } else {
        s.regular + s.coeff * dist.powf(s.exponent)
    }
}

/// ∫_lo^hi K(t, x) g(x) dx on an interval of x ≥ 0 whose only possible
/// singular point is an endpoint equal to t.
fn half_line_piece<G: Fn(f64) -> f64>(spec: &KernelSpec, t: f64, lo: f64, hi: f64, g: &G, n: usize) -> Result<f64> {
    let mid = 0.5 * (lo + hi);
    let probe = split(spec, t, mid);
    let singular_left = spec.is_singular() && lo == t;
    let singular_right = spec.is_singular() && hi == t;
    let regular = |x: f64| {
        let s = split(spec, t, x);
        if singular_left || singular_right {
            s.regular * g(x)
        } else {
            split_value(&s, (t - x).abs()) * g(x)
        }
    };
    let mut acc = jacobi_interval(lo, hi, 0.0, 0.0, n, regular)?;
    if singular_left {
        acc += probe.coeff * jacobi_interval(lo, hi, probe.exponent, 0.0, n, g)?;
    } else if singular_right {
        acc += probe.coeff * jacobi_interval(lo, hi, 0.0, probe.exponent, n, g)?;
    }
    Ok(acc)
}

/// Numerical ∫ e^{−ixξ} K(t, x) dx with the singular-aware split at |x| = t and
/// an oscillatory double-exponential tail beyond `x_cutoff`.
pub fn numerical_transform(spec: &KernelSpec, t: f64, xi: f64, x_cutoff: f64) -> Result<crate::quadrature::Estimate> {
    check_time(t)?;
    if spec.kind == KernelKind::WaveG {
        return Err(Error::Precondition(
            "the wave kernel is checked through S_1, not by transform quadrature".into(),
        ));
    }
    if !(x_cutoff > t) {
        return Err(Error::Precondition(format!(
            "x_cutoff ({x_cutoff}) must exceed t ({t})"
        )));
    }
    let w = xi.abs();
    let g = |x: f64| (w * x).cos();
    // panels of at most about one period keep the Gauss rules resolved at large ξ
    let near = |n: usize| -> Result<f64> {
        let mut acc = 0.0;
        for (lo, hi) in [(0.0, t), (t, x_cutoff)] {
            let m = ((w * (hi - lo) / (2.0 * PI)).ceil() as usize).max(1);
            for k in 0..m {
                let a = if k == 0 {
                    lo
                } else {
                    lo + (hi - lo) * k as f64 / m as f64
                };
                let b = if k + 1 == m {
                    hi
                } else {
                    lo + (hi - lo) * (k + 1) as f64 / m as f64
                };
                acc += half_line_piece(spec, t, a, b, &g, n)?;
            }
        }
        Ok(acc)
    };
    let near_fine = near(64)?;
    let near_coarse = near(32)?;
    let shifted = |y: f64| eval_kernel(spec, t, x_cutoff + y).unwrap_or(0.0);
    let tail = if w == 0.0 {
        exp_sinh(&|x: f64| eval_kernel(spec, t, x).unwrap_or(0.0), x_cutoff)
    } else {
        let c = fourier_half_line(&shifted, w, Trig::Cos);
        let s = fourier_half_line(&shifted, w, Trig::Sin);
        let (cw, sw) = ((w * x_cutoff).cos(), (w * x_cutoff).sin());
        crate::quadrature::Estimate {
            value: cw * c.value - sw * s.value,
            error: c.error + s.error,
        }
    };
    Ok(crate::quadrature::Estimate {
        value: 2.0 * (near_fine + tail.value),
        error: 2.0 * ((near_fine - near_coarse).abs() + tail.error),
    })
}

/// Outcome of a Fourier-pair check.
#[derive(Debug, Clone)]
pub struct FourierPairReport {
    pub kernel: String,
    pub max_abs_error: f64,
    pub max_quadrature_error: f64,
    /// (ξ, numerical transform, closed form)
    pub points: Vec<(f64, f64, f64)>,
}

/// Compares the numerical transform of the closed form with `eval_kernel_hat`
/// on `xi_grid`. Fails when the quadrature's own error estimate exceeds `tol`.
pub fn verify_fourier_pair(
    spec: &KernelSpec,
    t: f64,
    xi_grid: &[f64],
    x_cutoff: f64,
    tol: f64,
) -> Result<FourierPairReport> {
    let mut points = Vec::with_capacity(xi_grid.len());
    let mut max_err: f64 = 0.0;
    let mut max_q: f64 = 0.0;
    for &xi in xi_grid {
        let est = numerical_transform(spec, t, xi, x_cutoff)?;
        if est.error > tol {
            return Err(Error::Quadrature {
                what: format!("transform of {} at xi = {xi}", spec.label()),
                estimate: est.error,
                tolerance: tol,
            });
        }
        let closed = eval_kernel_hat(spec, t, xi)?;
        max_err = max_err.max((est.value - closed).abs());
        max_q = max_q.max(est.error);
        points.push((xi, est.value, closed));
    }
    Ok(FourierPairReport {
        kernel: spec.label(),
        max_abs_error: max_err,
        max_quadrature_error: max_q,
        points,
    })
}

/// ∫ K(t, x) dx, the transform at ξ = 0 (exact for G).
pub fn kernel_mass(spec: &KernelSpec, t: f64) -> Result<f64> {
    if spec.kind == KernelKind::WaveG {
        check_time(t)?;
        return Ok(t);
    }
    Ok(numerical_transform(spec, t, 0.0, 2.0 * t)?.value)
}

/// |sin((t+s)|ξ|)/|ξ| − Σ of the four products of transforms|.
pub fn verify_decomposition_fourier(t: f64, s: f64, alpha: f64, beta: f64, xi: f64) -> Result<f64> {
    if !(t > 0.0 && s > 0.0) {
        return Err(Error::Domain("t and s must be positive".into()));
    }
    let sa = KernelSpec::sine(alpha)?;
    let ca = KernelSpec::cosine(alpha)?;
    let sb = KernelSpec::sine(beta)?;
    let cb = KernelSpec::cosine(beta)?;
    let s1 = KernelSpec::wave();
    let e = KernelSpec::poisson();
    let lhs = eval_kernel_hat(&s1, t + s, xi)?;
    let rhs = eval_kernel_hat(&sa, t, xi)? * eval_kernel_hat(&ca, s, xi)?
        + eval_kernel_hat(&s1, t, xi)? * eval_kernel_hat(&e, s, xi)?
        + eval_kernel_hat(&sb, s, xi)? * eval_kernel_hat(&cb, t, xi)?
        + eval_kernel_hat(&s1, s, xi)? * eval_kernel_hat(&e, t, xi)?;
    Ok((lhs - rhs).abs())
}

/// One factor K(time, w(z)) of a z-convolution, with w = center − z when
/// `flip`, else z − center.
#[derive(Debug, Clone, Copy)]
struct Factor {
    spec: KernelSpec,
    time: f64,
    center: f64,
    flip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Left,
    Right,
}

impl Factor {
    fn arg(&self, z: f64) -> f64 {
        if self.flip {
            self.center - z
        } else {
            z - self.center
        }
    }

    fn breakpoints(&self) -> [f64; 3] {
        [self.center - self.time, self.center, self.center + self.time]
    }

    fn split_at(&self, z: f64) -> Split {
        split(&self.spec, self.time, self.arg(z))
    }

    fn value(&self, z: f64) -> f64 {
        let w = self.arg(z);
        if w.abs() > FAR_FIELD * self.time {
            return eval_kernel(&self.spec, self.time, w).unwrap_or(0.0);
        }
        split_value(&self.split_at(z), (self.time - w.abs()).abs())
    }

    fn singular_side(&self, lo: f64, hi: f64) -> Option<Side> {
        if !self.spec.is_singular() {
            return None;
        }
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        for p in [self.center - self.time, self.center + self.time] {
            if (p - lo).abs() <= tol {
                return Some(Side::Left);
            }
            if (p - hi).abs() <= tol {
                return Some(Side::Right);
            }
        }
        None
    }
}

fn exps(side: Option<Side>, p: f64) -> (f64, f64) {
    match side {
        Some(Side::Left) => (p, 0.0),
        Some(Side::Right) => (0.0, p),
        None => (0.0, 0.0),
    }
}

/// ∫ f1(z) f2(z) dz over ℝ, split at every breakpoint of either factor.
/// Coincident singular endpoints whose exponents sum to −1 are taken as
/// principal values; their log terms must cancel across the point.
fn convolve(f1: Factor, f2: Factor, n: usize) -> Result<f64> {
    let mut bps: Vec<f64> = f1.breakpoints().into_iter().chain(f2.breakpoints()).collect();
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (1.0 + a.abs()));
    // buffer intervals so the mapped tails start away from any singular point
    let span = (bps[bps.len() - 1] - bps[0]).max(f1.time).max(f2.time);
    bps.insert(0, bps[0] - span);
    bps.push(bps[bps.len() - 1] + span);
    let mut acc = 0.0;
    // finite-part log coefficients collected per breakpoint
    let mut pv: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let pieces = graded_pieces(&bps);
    for (k, lo, hi) in pieces {
        let mid = 0.5 * (lo + hi);
        let s1 = f1.singular_side(lo, hi);
        let s2 = f2.singular_side(lo, hi);
        let p1 = f1.split_at(mid);
        let p2 = f2.split_at(mid);
        let reg = |f: &Factor, side: Option<Side>, z: f64| {
            if side.is_some() {
                f.split_at(z).regular
            } else {
                f.value(z)
            }
        };
        acc += jacobi_interval(lo, hi, 0.0, 0.0, n, |z| reg(&f1, s1, z) * reg(&f2, s2, z))?;
        if s1.is_some() {
            let (l, r) = exps(s1, p1.exponent);
            acc += p1.coeff * jacobi_interval(lo, hi, l, r, n, |z| reg(&f2, s2, z))?;
        }
        if s2.is_some() {
            let (l, r) = exps(s2, p2.exponent);
            acc += p2.coeff * jacobi_interval(lo, hi, l, r, n, |z| reg(&f1, s1, z))?;
        }
        if let (Some(a), Some(b)) = (s1, s2) {
            let c = p1.coeff * p2.coeff;
            if a != b {
                let (l1, r1) = exps(s1, p1.exponent);
                let (l2, r2) = exps(s2, p2.exponent);
                acc += c * jacobi_interval(lo, hi, l1 + l2, r1 + r2, n, |_| 1.0)?;
            } else {
                let q = p1.exponent + p2.exponent;
                if q > -1.0 + 1e-12 {
                    let (l, r) = exps(s1, q);
                    acc += c * jacobi_interval(lo, hi, l, r, n, |_| 1.0)?;
                } else if (q + 1.0).abs() <= 1e-12 {
                    acc += c * (hi - lo).ln();
                    let key = if a == Side::Left { k } else { k + 1 };
                    debug_assert!(if a == Side::Left {
                        lo == bps[k]
                    } else {
                        hi == bps[k + 1]
                    });
                    let e = pv.entry(key).or_insert((0.0, 0.0));
                    e.0 += c;
                    e.1 = e.1.max(c.abs());
                } else {
                    return Err(Error::Quadrature {
                        what: format!(
                            "non-integrable coincident singularity at z = {}",
                            if a == Side::Left { lo } else { hi }
                        ),
                        estimate: f64::INFINITY,
                        tolerance: 0.0,
                    });
                }
            }
        }
    }
    for (k, (sum, scale)) in pv {
        if sum.abs() > 1e-10 * scale {
            return Err(Error::Quadrature {
                what: format!("principal value at z = {} does not exist", bps[k]),
                estimate: sum.abs(),
                tolerance: 1e-10 * scale,
            });
        }
    }
    // semi-infinite tails through z = edge ± v/(1 − v)
    let rule = legendre_cached(n);
    let zmin = bps[0];
    let zmax = bps[bps.len() - 1];
    for (lo, hi) in [(0.0, 0.5), (0.5, 1.0)] {
        acc += rule.integrate(lo, hi, |v| {
            let d = v / (1.0 - v);
            let jac = 1.0 / ((1.0 - v) * (1.0 - v));
            let right = zmax + d;
            let left = zmin - d;
            jac * (f1.value(right) * f2.value(right) + f1.value(left) * f2.value(left))
        });
    }
    Ok(acc)
}

/// Splits each breakpoint interval geometrically toward its ends until the
/// piece touching an end is no longer than the neighbouring interval, so a
/// singularity just outside the interval never sits closer to a piece than
/// that piece's own length. Returns (interval index, lo, hi).
fn graded_pieces(bps: &[f64]) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    let m = bps.len();
    for k in 0..m - 1 {
        let (lo, hi) = (bps[k], bps[k + 1]);
        let len = hi - lo;
        let gap_l = if k > 0 { lo - bps[k - 1] } else { f64::INFINITY };
        let gap_r = if k + 2 < m { bps[k + 2] - hi } else { f64::INFINITY };
        let mut cuts = vec![lo, hi];
        let mut h = 0.5 * len;
        while h > 0.5 * gap_l.min(len) && cuts.len() < 130 {
            cuts.push(lo + h);
            h *= 0.5;
        }
        let mut h = 0.5 * len;
        while h > 0.5 * gap_r.min(len) && cuts.len() < 260 {
            cuts.push(hi - h);
            h *= 0.5;
        }
        if cuts.len() == 2 {
            cuts.push(lo + 0.5 * len);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        for w in cuts.windows(2) {
            out.push((k, w[0], w[1]));
        }
    }
    out
}

/// One evaluation of the space-side decomposition at lag u.
#[derive(Debug, Clone)]
pub struct DecompositionPoint {
    pub u: f64,
    pub terms: [f64; 4],
    pub sum: f64,
    pub exact: f64,
    pub residual: f64,
}

/// Sums the four z-convolutions that rebuild G_{t−s}(u) with the
/// intermediate time r and compares with ½·1_{|u|<t−s}.
pub fn verify_decomposition_space(
    t: f64,
    s: f64,
    r: f64,
    u_grid: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<Vec<DecompositionPoint>> {
    if !(0.0 <= s && s < r && r < t) {
        return Err(Error::Precondition(format!(
            "need 0 <= s < r < t, got s={s}, r={r}, t={t}"
        )));
    }
    let t1 = t - r;
    let t2 = r - s;
    let sa = KernelSpec::sine(alpha)?;
    let ca = KernelSpec::cosine(alpha)?;
    let sb = KernelSpec::sine(beta)?;
    let cb = KernelSpec::cosine(beta)?;
    let g = KernelSpec::wave();
    let e = KernelSpec::poisson();
    let n = 40;
    let mut out = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let at = |spec, time| Factor {
            spec,
            time,
            center: u,
            flip: true,
        };
        let origin = |spec, time| Factor {
            spec,
            time,
            center: 0.0,
            flip: false,
        };
        let terms = [
            convolve(at(sa, t1), origin(ca, t2), n)?,
            convolve(at(g, t1), origin(e, t2), n)?,
            convolve(at(sb, t2), origin(cb, t1), n)?,
            convolve(at(e, t1), origin(g, t2), n)?,
        ];
        let sum: f64 = terms.iter().sum();
        let exact = if u.abs() < t - s { 0.5 } else { 0.0 };
        out.push(DecompositionPoint {
            u,
            terms,
            sum,
            exact,
            residual: (sum - exact).abs(),
        });
    }
    Ok(out)
}

/// ∫_s^t (t−r)^{θ−1}(r−s)^{−θ} dr by Gauss–Jacobi on the two halves, each
/// carrying only its own endpoint singularity; returns (quadrature, π/sin(θπ)).
pub fn beta_identity_check(theta: f64, s: f64, t: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(s < t) {
        return Err(Error::Precondition(format!("need s < t, got s={s}, t={t}")));
    }
    let m = 0.5 * (s + t);
    let n = 40;
    let left = jacobi_interval(s, m, -theta, 0.0, n, |r| (t - r).powf(theta - 1.0))?;
    let right = jacobi_interval(m, t, 0.0, theta - 1.0, n, |r| (r - s).powf(-theta))?;
    Ok((left + right, PI / (theta * PI).sin()))
}

/// |cos(α·arctan z) − ½(1+z²)^{α/2}[(1−iz)^{−α} + (1+iz)^{−α}]| with principal branches.
pub fn cos_arctan_identity_check(z: f64, alpha: f64) -> f64 {
    let lhs = (alpha * z.atan()).cos();
    let a = Complex64::new(1.0, -z).powf(-alpha);
    let b = Complex64::new(1.0, z).powf(-alpha);
    let rhs = 0.5 * (1.0 + z * z).powf(alpha / 2.0) * (a + b);
    ((lhs - rhs.re).powi(2) + rhs.im.powi(2)).sqrt()
}

/// Least-squares slope of log|K(t, x)| against log x on 64 log-spaced points
/// of `x_range`, which must lie beyond 2t.
pub fn tail_exponent_fit(spec: &KernelSpec, t: f64, x_range: (f64, f64)) -> Result<f64> {
    check_time(t)?;
    let (lo, hi) = x_range;
    if !(lo > 2.0 * t && hi > lo) {
        return Err(Error::Precondition(format!(
            "x_range must satisfy 2t < lo < hi, got ({lo}, {hi}) with t = {t}"
        )));
    }
    if spec.kind == KernelKind::WaveG {
        return Err(Error::Regression("the wave kernel vanishes beyond |x| = t".into()));
    }
    let n = 64;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for k in 0..n {
        let x = lo * (hi / lo).powf(k as f64 / (n - 1) as f64);
        let v = eval_kernel(spec, t, x)?.abs();
        if v == 0.0 {
            return Err(Error::Regression(format!("kernel vanishes at x = {x}")));
        }
        xs.push(x.ln());
        ys.push(v.ln());
    }
    Ok(crate::stats::ols(&xs, &ys)?.slope)
}
