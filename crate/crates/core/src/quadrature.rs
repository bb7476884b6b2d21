//! Quadrature rules shared by the kernel, norm and chaos computations.
//!
//! Gauss rules come from the Golub–Welsch eigenproblem followed by a Newton
//! polish on the orthonormal recurrence, so nodes and weights are accurate to
//! a few ulps even for strongly singular Jacobi weights.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Gauss rule on [-1, 1] for the weight (1 - x)^a (1 + x)^b.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl GaussRule {
    /// Integrates (hi - z)^a (z - lo)^b f(z) over [lo, hi].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let scale = half.powf(self.a + self.b + 1.0);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(lo + half * (1.0 + x));
        }
        acc * scale
    }

    /// Mapped nodes and weights on [lo, hi] (weight factor included in the weights).
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let scale = half.powf(self.a + self.b + 1.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (lo + half * (1.0 + x), w * scale))
    }
}

fn recurrence(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    // diag[k], k = 0..n; off[k] = sqrt(beta_k) for k = 1..=n (off[0] unused)
    let mut diag = vec![0.0; n + 1];
    let mut off = vec![0.0; n + 2];
    let ab = a + b;
    for (k, d) in diag.iter_mut().enumerate() {
        let kf = k as f64;
        *d = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
    }
    for (k, o) in off.iter_mut().enumerate().skip(1) {
        let kf = k as f64;
        let beta = if k == 1 {
            4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            let s = 2.0 * kf + ab;
            4.0 * kf * (kf + a) * (kf + b) * (kf + ab) / (s * s * (s + 1.0) * (s - 1.0))
        };
        *o = beta.sqrt();
    }
    (diag, off)
}

/// Orthonormal polynomials p_0..p_n and derivatives at x.
fn orthonormal_eval(x: f64, n: usize, diag: &[f64], off: &[f64], mu0: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0 / mu0.sqrt();
    let mut dp_prev = 0.0;
    let mut dp = 0.0;
    let mut sumsq = p * p;
    for k in 0..n {
        let p_next = ((x - diag[k]) * p - off[k] * p_prev) / off[k + 1];
        let dp_next = (p + (x - diag[k]) * dp - off[k] * dp_prev) / off[k + 1];
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
        if k + 1 < n {
            sumsq += p * p;
        }
    }
    (p, dp, sumsq)
}

/// Gauss–Jacobi rule with `n` nodes for the weight (1 - x)^a (1 + x)^b, a, b > -1.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Result<GaussRule> {
    if n == 0 || !(a > -1.0) || !(b > -1.0) {
        return Err(Error::Domain(format!(
            "Gauss-Jacobi needs n >= 1 and exponents > -1 (n = {n}, a = {a}, b = {b})"
        )));
    }
    let mu0 = ((a + b + 1.0) * 2f64.ln() + ln_gamma(a + 1.0) + ln_gamma(b + 1.0) - ln_gamma(a + b + 2.0)).exp();
    let (diag, off) = recurrence(n, a, b);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = diag[k];
        if k + 1 < n {
            m[(k, k + 1)] = off[k + 1];
            m[(k + 1, k)] = off[k + 1];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = orthonormal_eval(*x, n, &diag, &off, mu0);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            let candidate = *x - step;
            if candidate.abs() < 1.0 {
                *x = candidate;
            }
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, _, sumsq) = orthonormal_eval(*x, n, &diag, &off, mu0);
        weights.push(1.0 / sumsq);
    }
    Ok(GaussRule { nodes, weights, a, b })
}

/// Gauss–Legendre rule with `n` nodes.
pub fn gauss_legendre(n: usize) -> GaussRule {
    gauss_jacobi(n, 0.0, 0.0).expect("Legendre exponents are valid")
}

thread_local! {
    static RULES: RefCell<HashMap<(usize, u64, u64), Rc<GaussRule>>> = RefCell::new(HashMap::new());
}

/// Per-thread cached Gauss–Jacobi rule.
pub fn jacobi_cached(n: usize, a: f64, b: f64) -> Result<Rc<GaussRule>> {
    let key = (n, a.to_bits(), b.to_bits());
    if let Some(rule) = RULES.with(|c| c.borrow().get(&key).cloned()) {
        return Ok(rule);
    }
    let rule = Rc::new(gauss_jacobi(n, a, b)?);
    RULES.with(|c| c.borrow_mut().insert(key, rule.clone()));
    Ok(rule)
}

pub fn legendre_cached(n: usize) -> Rc<GaussRule> {
    jacobi_cached(n, 0.0, 0.0).expect("Legendre exponents are valid")
}

/// Composite Gauss–Legendre on `panels` equal panels.
pub fn composite_legendre<F: FnMut(f64) -> f64>(lo: f64, hi: f64, panels: usize, order: usize, mut f: F) -> f64 {
    let rule = legendre_cached(order);
    let w = (hi - lo) / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let a = lo + k as f64 * w;
        acc += rule.integrate(a, a + w, &mut f);
    }
    acc
}

/// Adaptive Gauss–Legendre (10 vs 20 nodes) by bisection.
pub fn adaptive_legendre<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    fn rec<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64, depth: usize) -> Result<f64> {
        let coarse = legendre_cached(10).integrate(lo, hi, f);
        let fine = legendre_cached(20).integrate(lo, hi, f);
        let err = (fine - coarse).abs();
        if err <= tol.max(1e-15 * fine.abs()) {
            return Ok(fine);
        }
        if depth >= 40 {
            return Err(Error::Quadrature {
                what: format!("adaptive Gauss-Legendre on [{lo}, {hi}]"),
                estimate: err,
                tolerance: tol,
            });
        }
        let mid = 0.5 * (lo + hi);
        Ok(rec(f, lo, mid, 0.5 * tol, depth + 1)? + rec(f, mid, hi, 0.5 * tol, depth + 1)?)
    }
    if lo == hi {
        return Ok(0.0);
    }
    rec(f, lo, hi, tol, 0)
}

/// Which trigonometric factor multiplies the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

/// Result of a quadrature with an error estimate.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn om_sum<F: Fn(f64) -> f64>(f: &F, omega: f64, h: f64, trig: Trig) -> f64 {
    // Ooura–Mori double-exponential rule for Fourier integrals on (0, inf).
    let m = PI / h;
    let beta = 0.25;
    let alpha = beta / (1.0 + m * (1.0 + m).ln() / (4.0 * PI)).sqrt();
    let k_of = |t: f64| 2.0 * t + alpha * (1.0 - (-t).exp()) + beta * (t.exp() - 1.0);
    let dk_of = |t: f64| 2.0 + alpha * (-t).exp() + beta * t.exp();
    let k1 = 2.0 + alpha + beta;
    let k2 = beta - alpha;
    let offset = match trig {
        Trig::Sin => 0.0,
        Trig::Cos => -0.5,
    };
    // term for the n-th node; returns (term, phi') so the caller can stop on underflow
    let term = |n: i64| -> (f64, f64) {
        let t = (n as f64 + offset) * h;
        let (phi, dphi, trig_val);
        if t.abs() < 1e-9 {
            phi = 1.0 / k1;
            dphi = (k1 * k1 - k2) / (2.0 * k1 * k1);
            trig_val = match trig {
                Trig::Sin => (m * phi).sin(),
                Trig::Cos => (m * phi).cos(),
            };
        } else if t > 0.0 {
            let k = k_of(t);
            let em1 = k.exp_m1();
            let delta_t = t / em1;
            phi = t + delta_t;
            let e = (-k).exp();
            let d = -(-k).exp_m1();
            dphi = (d - t * dk_of(t) * e) / (d * d);
            let sgn = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            trig_val = sgn * (m * delta_t).sin();
        } else {
            let k = k_of(t);
            let u = k.exp();
            phi = t / (-(-k).exp_m1());
            dphi = if u == 0.0 {
                0.0
            } else {
                u * ((u - 1.0) - t * dk_of(t)) / ((u - 1.0) * (u - 1.0))
            };
            trig_val = match trig {
                Trig::Sin => (m * phi).sin(),
                Trig::Cos => (m * phi).cos(),
            };
        }
        if dphi == 0.0 || !dphi.is_finite() {
            return (0.0, 0.0);
        }
        let x = m * phi / omega;
        (f(x) * trig_val * dphi, dphi)
    };
    let mut sum = 0.0;
    let mut small = 0;
    let mut n = 0i64;
    loop {
        let (tv, _) = term(n);
        sum += tv;
        let tiny = tv.abs() <= 1e-17 * sum.abs().max(1e-300);
        small = if tiny { small + 1 } else { 0 };
        if (small >= 4 && n as f64 * h > 1.0) || n > 200_000 {
            break;
        }
        n += 1;
    }
    let mut small = 0;
    let mut n = -1i64;
    loop {
        let (tv, dphi) = term(n);
        sum += tv;
        let tiny = tv.abs() <= 1e-17 * sum.abs().max(1e-300);
        small = if tiny { small + 1 } else { 0 };
        if dphi == 0.0 || small >= 4 || n < -200_000 {
            break;
        }
        n -= 1;
    }
    PI / omega * sum
}

/// ∫_0^∞ f(x) cos(ωx) dx or ∫_0^∞ f(x) sin(ωx) dx for ω > 0, f smooth on (0, ∞)
/// and decaying at infinity (algebraic decay is fine).
pub fn fourier_half_line<F: Fn(f64) -> f64>(f: &F, omega: f64, trig: Trig) -> Estimate {
    let coarse = om_sum(f, omega, 0.1, trig);
    let fine = om_sum(f, omega, 0.05, trig);
    Estimate {
        value: fine,
        error: (fine - coarse).abs(),
    }
}

/// ∫_a^∞ f(x) dx by the exp-sinh rule; f may have an integrable singularity at a.
pub fn exp_sinh<F: Fn(f64) -> f64>(f: &F, a: f64) -> Estimate {
    let level = |h: f64| -> f64 {
        let mut acc = 0.0;
        let n_max = (6.0 / h).ceil() as i64;
        for k in -n_max..=n_max {
            let t = k as f64 * h;
            let s = 0.5 * PI * t.sinh();
            if s > 700.0 {
                break;
            }
            let x_off = s.exp();
            if x_off == 0.0 {
                continue;
            }
            let w = 0.5 * PI * t.cosh() * x_off;
            let v = f(a + x_off);
            if v.is_finite() {
                acc += w * v;
            }
        }
        acc * h
    };
    let mut prev = level(0.5);
    let mut h = 0.25;
    let mut err = f64::INFINITY;
    for _ in 0..6 {
        let cur = level(h);
        err = (cur - prev).abs();
        prev = cur;
        if err <= 1e-14 * cur.abs().max(1e-300) {
            break;
        }
        h *= 0.5;
    }
    Estimate {
        value: prev,
        error: err,
    }
}

/// Gauss–Jacobi quadrature applied to a weight with exponent `left` at `lo`
/// and `right` at `hi`: ∫ (z - lo)^left (hi - z)^right f(z) dz.
pub fn jacobi_interval<F: FnMut(f64) -> f64>(lo: f64, hi: f64, left: f64, right: f64, n: usize, f: F) -> Result<f64> {
    let rule = jacobi_cached(n, right, left)?;
    Ok(rule.integrate(lo, hi, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(8);
        let v = r.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let s: f64 = r.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_weight_mass() {
        let r = gauss_jacobi(20, -0.7, 0.3).unwrap();
        let s: f64 = r.weights.iter().sum();
        let exact = (2f64.powf(0.6) * statrs::function::gamma::gamma(0.3) * statrs::function::gamma::gamma(1.3))
            / statrs::function::gamma::gamma(1.6);
        assert!((s - exact).abs() < 1e-13 * exact);
    }

    #[test]
    fn jacobi_matches_reference_value() {
        // lower incomplete gamma(1/2, 2), 30-digit reference
        let v = jacobi_interval(0.0, 2.0, -0.5, 0.0, 30, |x| (-x).exp()).unwrap();
        let reference = 1.691_806_732_945_198_3;
        assert!((v - reference).abs() < 1e-14, "{v} {reference} {}", v - reference);
    }

    #[test]
    fn ooura_mori_cosine_transform() {
        // ∫_0^∞ cos(ωx)/(1+x²) dx = π/2 e^{-ω}
        for &w in &[0.1, 1.0, 7.5, 20.0] {
            let e = fourier_half_line(&|x: f64| 1.0 / (1.0 + x * x), w, Trig::Cos);
            assert!((e.value - 0.5 * PI * (-w).exp()).abs() < 1e-12, "{w} {}", e.value);
        }
    }

    #[test]
    fn ooura_mori_sine_transform_slow_decay() {
        // ∫_0^∞ sin(ωx)/x dx = π/2
        for &w in &[0.3, 2.0, 11.0] {
            let e = fourier_half_line(&|x: f64| 1.0 / x, w, Trig::Sin);
            assert!((e.value - 0.5 * PI).abs() < 1e-11, "{w} {}", e.value);
        }
    }

    #[test]
    fn exp_sinh_power_tail() {
        let e = exp_sinh(&|x: f64| x.powf(-1.3), 2.0);
        let exact = 2f64.powf(-0.3) / 0.3;
        assert!((e.value - exact).abs() < 1e-10 * exact, "{}", e.value);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = adaptive_legendre(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-11);
    }
}
