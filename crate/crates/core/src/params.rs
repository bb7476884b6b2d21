//! Registry of the parameter-inequality systems, the ε-recipe that produces a
//! feasible tuple, and (H, p) feasibility scans.
//!
//! Everything is generic over [`Field`] so the same code runs in `f64` and in
//! exact rational arithmetic ([`ExactParamSet`]), where boundary equalities
//! are decided without rounding.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_rational::BigRational;
use rayon::prelude::*;

use crate::scalar::Field;
use crate::{Error, Result};

/// Identifier of one inequality system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemId {
    CondJEst,
    CondDEst,
    CondHolderMain,
    Pi1,
    Pi2,
    Pi3,
    Pi4,
    Appc1,
    Appc2,
    Appc3,
    Appc4,
    Appc5,
    Appc6,
    AlphaQ39,
    Theta310,
}

impl SystemId {
    pub const ALL: [SystemId; 15] = [
        SystemId::CondJEst,
        SystemId::CondDEst,
        SystemId::CondHolderMain,
        SystemId::Pi1,
        SystemId::Pi2,
        SystemId::Pi3,
        SystemId::Pi4,
        SystemId::Appc1,
        SystemId::Appc2,
        SystemId::Appc3,
        SystemId::Appc4,
        SystemId::Appc5,
        SystemId::Appc6,
        SystemId::AlphaQ39,
        SystemId::Theta310,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemId::CondJEst => "COND_J_EST",
            SystemId::CondDEst => "COND_D_EST",
            SystemId::CondHolderMain => "COND_HOLDER_MAIN",
            SystemId::Pi1 => "PI_1",
            SystemId::Pi2 => "PI_2",
            SystemId::Pi3 => "PI_3",
            SystemId::Pi4 => "PI_4",
            SystemId::Appc1 => "APPC_1",
            SystemId::Appc2 => "APPC_2",
            SystemId::Appc3 => "APPC_3",
            SystemId::Appc4 => "APPC_4",
            SystemId::Appc5 => "APPC_5",
            SystemId::Appc6 => "APPC_6",
            SystemId::AlphaQ39 => "ALPHA_Q_39",
            SystemId::Theta310 => "THETA_310",
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownSystem(s.to_string()))
    }
}

/// Systems the ε-recipe is verified against. `COND_D_EST` is excluded: its
/// α-window sits above the recipe's α = 1 − H + 4ε.
pub const RECIPE_CLAIMS: [SystemId; 14] = [
    SystemId::CondJEst,
    SystemId::CondHolderMain,
    SystemId::AlphaQ39,
    SystemId::Theta310,
    SystemId::Pi1,
    SystemId::Pi2,
    SystemId::Pi3,
    SystemId::Pi4,
    SystemId::Appc1,
    SystemId::Appc2,
    SystemId::Appc3,
    SystemId::Appc4,
    SystemId::Appc5,
    SystemId::Appc6,
];

/// η value scoped to one system, shadowing the shared slot there only.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaOverride<T> {
    pub system: SystemId,
    /// 1-based η index.
    pub slot: usize,
    pub value: T,
}

/// The tuple (H, p, q, α, θ, γ, η₁…η₅, β) read by the registry.
///
/// `beta` is the partner exponent of the kernel decomposition; the registry
/// does not constrain it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub hurst: T,
    pub p: T,
    pub q: T,
    pub alpha: T,
    pub theta: T,
    pub gamma: T,
    pub eta: [T; 5],
    pub beta: T,
    overrides: Vec<EtaOverride<T>>,
}

pub type ExactParamSet = ParamSet<BigRational>;

impl<T: Field> ParamSet<T> {
    /// Set with the given (H, p), q = p/(p−1) and every other field zero.
    pub fn new(hurst: T, p: T) -> Result<Self> {
        if !(p > T::one()) {
            return Err(Error::Domain(format!("p must exceed 1, got {}", p.to_f64_lossy())));
        }
        let q = p.clone() / (p.clone() - T::one());
        let z = T::zero();
        let set = Self {
            hurst,
            p,
            q,
            alpha: z.clone(),
            theta: z.clone(),
            gamma: z.clone(),
            eta: [z.clone(), z.clone(), z.clone(), z.clone(), z.clone()],
            beta: z,
            overrides: Vec::new(),
        };
        set.validate()?;
        Ok(set)
    }

    /// p > 1, 1/p + 1/q = 1 within 1e-12 and all fields finite.
    pub fn validate(&self) -> Result<()> {
        let mut all = vec![
            &self.hurst,
            &self.p,
            &self.q,
            &self.alpha,
            &self.theta,
            &self.gamma,
            &self.beta,
        ];
        all.extend(self.eta.iter());
        all.extend(self.overrides.iter().map(|o| &o.value));
        if all.iter().any(|v| !v.to_f64_lossy().is_finite()) {
            return Err(Error::Domain("parameter set has a non-finite field".into()));
        }
        if !(self.p > T::one()) {
            return Err(Error::Domain("p must exceed 1".into()));
        }
        let defect = (T::one() / self.p.clone() + T::one() / self.q.clone() - T::one()).to_f64_lossy();
        if defect.abs() > 1e-12 {
            return Err(Error::Domain(format!("1/p + 1/q - 1 = {defect:e}")));
        }
        Ok(())
    }

    pub fn overrides(&self) -> &[EtaOverride<T>] {
        &self.overrides
    }

    /// Scopes η_slot to `value` inside `system`, replacing an earlier override.
    pub fn set_override(&mut self, system: SystemId, slot: usize, value: T) -> Result<()> {
        if !(1..=5).contains(&slot) {
            return Err(Error::Domain(format!("eta slot {slot} outside 1..=5")));
        }
        self.overrides.retain(|o| !(o.system == system && o.slot == slot));
        self.overrides.push(EtaOverride { system, slot, value });
        Ok(())
    }

    /// η_slot as seen by `system`.
    pub fn eta_for(&self, system: SystemId, slot: usize) -> &T {
        self.overrides
            .iter()
            .find(|o| o.system == system && o.slot == slot)
            .map(|o| &o.value)
            .unwrap_or(&self.eta[slot - 1])
    }

    fn inv_p(&self) -> T {
        T::one() / self.p.clone()
    }

    fn inv_q(&self) -> T {
        T::one() / self.q.clone()
    }
}

/// One strict inequality lhs < rhs.
#[derive(Debug, Clone, PartialEq)]
pub struct Check<T> {
    pub inequality: String,
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

impl<T: Field> Check<T> {
    /// rhs − lhs: positive when the inequality holds, zero at equality.
    pub fn gap(&self) -> T {
        self.rhs.clone() - self.lhs.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport<T> {
    pub system: SystemId,
    pub pass: bool,
    pub checks: Vec<Check<T>>,
}

impl<T: Field> ConditionReport<T> {
    pub fn violations(&self) -> Vec<&Check<T>> {
        self.checks.iter().filter(|c| !c.holds).collect()
    }

    /// "system,inequality,lhs,rhs,pass" rows without a header.
    pub fn csv_lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{},{},{},{},{}",
                    self.system,
                    c.inequality,
                    c.lhs.to_f64_lossy(),
                    c.rhs.to_f64_lossy(),
                    c.holds
                )
            })
            .collect()
    }
}

impl<T: Field> fmt::Display for ConditionReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.csv_lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

struct Checks<T> {
    out: Vec<Check<T>>,
}

impl<T: Field> Checks<T> {
    fn lt(&mut self, name: impl Into<String>, lhs: T, rhs: T) {
        let inequality = name.into();
        if self.out.iter().any(|c| c.inequality == inequality) {
            return;
        }
        let holds = lhs < rhs;
        self.out.push(Check {
            inequality,
            lhs,
            rhs,
            holds,
        });
    }
}

fn k<T: Field>(num: i64, den: i64) -> T {
    T::from_ratio(num, den)
}

fn standing<T: Field>(c: &mut Checks<T>, s: &ParamSet<T>) {
    c.lt("p > 1/H", T::one() / s.hurst.clone(), s.p.clone());
    c.lt("gamma < H - 1/p", s.gamma.clone(), s.hurst.clone() - s.inv_p());
}

fn pi1<T: Field>(c: &mut Checks<T>, s: &ParamSet<T>) {
    c.lt("1 - H < alpha", T::one() - s.hurst.clone(), s.alpha.clone());
    c.lt("alpha < 1/q", s.alpha.clone(), s.inv_q());
    c.lt("alpha + gamma < 1/q", s.alpha.clone() + s.gamma.clone(), s.inv_q());
    c.lt("1/p < theta", s.inv_p(), s.theta.clone());
    c.lt(
        "theta < H + alpha - 1/2",
        s.theta.clone(),
        s.hurst.clone() + s.alpha.clone() - k(1, 2),
    );
}

fn pi2<T: Field>(c: &mut Checks<T>, s: &ParamSet<T>, id: SystemId, slot: usize) {
    let eta = s.eta_for(id, slot).clone();
    let bound = T::one() + s.alpha.clone() - k::<T>(2, 1) * s.inv_q() + k::<T>(2, 1) * eta.clone();
    c.lt(format!("theta > 1 + alpha - 2/q + 2 eta{slot}"), bound, s.theta.clone());
    c.lt(format!("eta{slot} > gamma"), s.gamma.clone(), eta);
}

fn pi3<T: Field>(c: &mut Checks<T>, s: &ParamSet<T>, id: SystemId, slot: usize) {
    let eta = s.eta_for(id, slot).clone();
    c.lt(
        format!("alpha + eta{slot} > 1/q"),
        s.inv_q(),
        s.alpha.clone() + eta.clone(),
    );
    c.lt(format!("eta{slot} > gamma"), s.gamma.clone(), eta);
}

fn pi4<T: Field>(c: &mut Checks<T>, s: &ParamSet<T>, id: SystemId, slot: usize) {
    let eta = s.eta_for(id, slot).clone();
    c.lt(
        format!("alpha + eta{slot} < 1/q"),
        s.alpha.clone() + eta.clone(),
        s.inv_q(),
    );
    c.lt(format!("eta{slot} > gamma"), s.gamma.clone(), eta);
}

/// Widths of the α- and θ-windows of `COND_D_EST`:
/// (1 − 1/p) − (3/2 − 2H) and (2H + α − 1) − (1 − 2/q + α) = 2H − 2/p.
pub fn d_est_windows<T: Field>(hurst: &T, p: &T) -> (T, T) {
    let inv_p = T::one() / p.clone();
    let two_h = k::<T>(2, 1) * hurst.clone();
    let alpha = two_h.clone() - k(1, 2) - inv_p.clone();
    let theta = two_h - k::<T>(2, 1) * inv_p;
    (alpha, theta)
}

/// Evaluates every strict inequality of `id` on `set`.
///
/// Standalone `PI_2` and `PI_3` constrain η₁, `PI_4` constrains η₂; scoped
/// overrides apply in all systems.
pub fn check_system<T: Field>(id: SystemId, set: &ParamSet<T>) -> ConditionReport<T> {
    let mut c = Checks { out: Vec::new() };
    let s = set;
    let (h, one) = (s.hurst.clone(), T::one());
    let theta_lower = one.clone() - k::<T>(2, 1) * s.inv_q() + s.alpha.clone();
    match id {
        SystemId::CondJEst => {
            c.lt("p > 1/H", one.clone() / h.clone(), s.p.clone());
            c.lt("1 - 2/q + alpha < theta", theta_lower, s.theta.clone());
            c.lt(
                "theta < H + alpha - 1/2",
                s.theta.clone(),
                h.clone() + s.alpha.clone() - k(1, 2),
            );
            c.lt("1 - H < alpha", one.clone() - h, s.alpha.clone());
            c.lt("alpha < 1 - 1/p", s.alpha.clone(), one - s.inv_p());
        }
        SystemId::CondDEst => {
            let (aw, _) = d_est_windows(&s.hurst, &s.p);
            c.lt("p > 1/H", one.clone() / h.clone(), s.p.clone());
            c.lt("alpha window (3/2 - 2H, 1 - 1/p) nonempty", T::zero(), aw);
            c.lt("1 - 2/q + alpha < theta", theta_lower, s.theta.clone());
            c.lt(
                "theta < 2H + alpha - 1",
                s.theta.clone(),
                k::<T>(2, 1) * h.clone() + s.alpha.clone() - one.clone(),
            );
            c.lt("3/2 - 2H < alpha", k::<T>(3, 2) - k::<T>(2, 1) * h, s.alpha.clone());
            c.lt("alpha < 1 - 1/p", s.alpha.clone(), one - s.inv_p());
        }
        SystemId::CondHolderMain => {
            c.lt("p > 1/H", one.clone() / h.clone(), s.p.clone());
            c.lt("1 - H < alpha", one.clone() - h.clone(), s.alpha.clone());
            c.lt("alpha < 1 - 1/p", s.alpha.clone(), one - s.inv_p());
            c.lt("gamma < H - 1/p", s.gamma.clone(), h - s.inv_p());
        }
        SystemId::AlphaQ39 => {
            c.lt("0 < alpha", T::zero(), s.alpha.clone());
            c.lt("alpha < 1/q", s.alpha.clone(), s.inv_q());
        }
        SystemId::Theta310 => c.lt("1 - 2/q + alpha < theta", theta_lower, s.theta.clone()),
        SystemId::Pi1 => pi1(&mut c, s),
        SystemId::Pi2 => pi2(&mut c, s, id, 1),
        SystemId::Pi3 => pi3(&mut c, s, id, 1),
        SystemId::Pi4 => pi4(&mut c, s, id, 2),
        SystemId::Appc1 | SystemId::Appc2 | SystemId::Appc3 | SystemId::Appc4 | SystemId::Appc5 | SystemId::Appc6 => {
            standing(&mut c, s);
            pi1(&mut c, s);
            match id {
                SystemId::Appc1 => {
                    pi2(&mut c, s, id, 1);
                    pi3(&mut c, s, id, 1);
                    pi2(&mut c, s, id, 2);
                    pi4(&mut c, s, id, 2);
                    pi3(&mut c, s, id, 3);
                }
                SystemId::Appc3 => {
                    pi2(&mut c, s, id, 1);
                    pi3(&mut c, s, id, 1);
                    pi3(&mut c, s, id, 2);
                    pi2(&mut c, s, id, 3);
                    pi4(&mut c, s, id, 3);
                }
                SystemId::Appc4 => {
                    pi2(&mut c, s, id, 4);
                    pi3(&mut c, s, id, 4);
                }
                SystemId::Appc5 => {
                    pi3(&mut c, s, id, 2);
                    pi4(&mut c, s, id, 3);
                    pi2(&mut c, s, id, 4);
                    pi3(&mut c, s, id, 4);
                }
                _ => {
                    for slot in [4, 5] {
                        pi2(&mut c, s, id, slot);
                        pi3(&mut c, s, id, slot);
                    }
                }
            }
        }
    }
    let pass = c.out.iter().all(|ch| ch.holds);
    ConditionReport {
        system: id,
        pass,
        checks: c.out,
    }
}

/// Same as [`check_system`] with the id given by name.
pub fn check_system_named<T: Field>(id: &str, set: &ParamSet<T>) -> Result<ConditionReport<T>> {
    Ok(check_system(id.parse()?, set))
}

/// Inequality names of every system, in registry order.
pub fn registry() -> Vec<(SystemId, Vec<String>)> {
    let set = feasible_point(0.4, 10.0, 1e-3).expect("reference tuple is feasible");
    SystemId::ALL
        .into_iter()
        .map(|id| {
            (
                id,
                check_system(id, &set)
                    .checks
                    .into_iter()
                    .map(|c| c.inequality)
                    .collect(),
            )
        })
        .collect()
}

/// ε = (H − 1/p)/10, small enough for the recipe whenever p > 1/H.
pub fn default_eps<T: Field>(hurst: &T, p: &T) -> T {
    (hurst.clone() - T::one() / p.clone()) / k(10, 1)
}

/// Roles that need Π.3 alone receive a Π.3-compatible η in place of the
/// shared Π.4-side slot.
fn scope_pi3_roles<T: Field>(set: &mut ParamSet<T>, high: &T) {
    for (id, slot) in [(SystemId::Appc1, 3), (SystemId::Appc3, 2), (SystemId::Appc5, 2)] {
        set.set_override(id, slot, high.clone()).expect("slot in range");
    }
}

fn verify_claims<T: Field>(set: &ParamSet<T>) -> Result<()> {
    for id in RECIPE_CLAIMS {
        let report = check_system(id, set);
        if let Some(v) = report.violations().first() {
            return Err(Error::Infeasible {
                system: id.name().to_string(),
                detail: format!(
                    "{} fails: lhs {} vs rhs {}",
                    v.inequality,
                    v.lhs.to_f64_lossy(),
                    v.rhs.to_f64_lossy()
                ),
            });
        }
    }
    Ok(())
}

/// Builds the tuple from the ε-recipe and verifies it against [`RECIPE_CLAIMS`].
///
/// γ = H − 1/p − 7ε, α = 1 − H + 4ε, θ = H − ε, η₁ = η₄ = η₅ = H − 1/p − 3ε,
/// η₂ = η₃ = H − 1/p − 6ε and β = α. η₃ in `APPC_1` and η₂ in `APPC_3`,
/// `APPC_5` are scoped to H − 1/p − 3ε since those roles need Π.3.
pub fn feasible_point<T: Field>(hurst: T, p: T, eps: T) -> Result<ParamSet<T>> {
    if !(hurst > T::zero()) || !(p.clone() * hurst.clone() > T::one()) {
        return Err(Error::Precondition(format!(
            "feasible_point needs p > 1/H (H = {}, p = {})",
            hurst.to_f64_lossy(),
            p.to_f64_lossy()
        )));
    }
    if !(eps > T::zero()) {
        return Err(Error::Domain(format!(
            "eps must be positive, got {}",
            eps.to_f64_lossy()
        )));
    }
    let mut set = ParamSet::new(hurst.clone(), p.clone())?;
    let base = hurst.clone() - T::one() / p;
    let e = |m: i64| k::<T>(m, 1) * eps.clone();
    set.gamma = base.clone() - e(7);
    set.alpha = T::one() - hurst.clone() + e(4);
    set.theta = hurst - e(1);
    let high = base.clone() - e(3);
    let low = base - e(6);
    set.eta = [high.clone(), low.clone(), low, high.clone(), high.clone()];
    set.beta = set.alpha.clone();
    scope_pi3_roles(&mut set, &high);
    set.validate()?;
    verify_claims(&set)?;
    Ok(set)
}

/// Brute-force alternative to the recipe: scans an n×n×n interior grid of
/// (α, θ, γ) windows, places each η at the midpoint of its admissible window
/// and returns the verified tuple with the largest γ.
pub fn window_search<T: Field>(hurst: T, p: T, n: usize) -> Result<ParamSet<T>> {
    if n == 0 {
        return Err(Error::Domain("window_search needs n >= 1".into()));
    }
    let template = ParamSet::new(hurst.clone(), p.clone())?;
    let (inv_p, inv_q) = (template.inv_p(), template.inv_q());
    let two = k::<T>(2, 1);
    let frac = |lo: &T, hi: &T, i: usize| lo.clone() + (hi.clone() - lo.clone()) * k(i as i64, n as i64 + 1);
    let mut best: Option<ParamSet<T>> = None;
    let (a_lo, a_hi) = (T::one() - hurst.clone(), inv_q.clone());
    for i in 1..=n {
        let alpha = frac(&a_lo, &a_hi, i);
        let t_hi = hurst.clone() + alpha.clone() - k(1, 2);
        for j in 1..=n {
            let theta = frac(&inv_p, &t_hi, j);
            let g_hi = {
                let a = hurst.clone() - inv_p.clone();
                let b = inv_q.clone() - alpha.clone();
                if a < b {
                    a
                } else {
                    b
                }
            };
            // Π.2 caps every η that carries it
            let cap = (theta.clone() - T::one() - alpha.clone() + two.clone() * inv_q.clone()) / two.clone();
            for l in 1..=n {
                let gamma = frac(&T::zero(), &g_hi, l);
                if best.as_ref().is_some_and(|b| !(gamma > b.gamma)) {
                    continue;
                }
                let floor = if gamma > inv_q.clone() - alpha.clone() {
                    gamma.clone()
                } else {
                    inv_q.clone() - alpha.clone()
                };
                let high = (floor + cap.clone()) / two.clone();
                let low_top = if cap < inv_q.clone() - alpha.clone() {
                    cap.clone()
                } else {
                    inv_q.clone() - alpha.clone()
                };
                let low = (gamma.clone() + low_top) / two.clone();
                let mut set = template.clone();
                set.alpha = alpha.clone();
                set.theta = theta.clone();
                set.gamma = gamma;
                set.eta = [high.clone(), low.clone(), low, high.clone(), high.clone()];
                set.beta = set.alpha.clone();
                scope_pi3_roles(&mut set, &high);
                if verify_claims(&set).is_ok() {
                    best = Some(set);
                }
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible {
        system: "window_search".into(),
        detail: format!("no admissible tuple on a {n}^3 grid"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow<T> {
    pub hurst: T,
    pub p: T,
    /// 2/(4H − 1).
    pub threshold: T,
    pub alpha_width: T,
    pub theta_width: T,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityScan<T> {
    pub hurst_grid: Vec<T>,
    pub p_grid: Vec<T>,
    /// Row-major over (H, p).
    pub rows: Vec<ScanRow<T>>,
}

impl<T: Field> FeasibilityScan<T> {
    /// Smallest feasible p on the grid for each H (None if no p qualifies).
    pub fn boundary(&self) -> Vec<(T, Option<T>)> {
        self.rows
            .chunks(self.p_grid.len())
            .zip(&self.hurst_grid)
            .map(|(row, h)| {
                let first =
                    row.iter()
                        .filter(|r| r.feasible)
                        .map(|r| r.p.clone())
                        .fold(None, |m: Option<T>, p| match m {
                            Some(m) if m < p => Some(m),
                            _ => Some(p),
                        });
                (h.clone(), first)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "H,p,threshold,alpha_width,theta_width,feasible")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.hurst.to_f64_lossy(),
                r.p.to_f64_lossy(),
                r.threshold.to_f64_lossy(),
                r.alpha_width.to_f64_lossy(),
                r.theta_width.to_f64_lossy(),
                r.feasible
            )?;
        }
        Ok(())
    }
}

/// 2/(4H − 1), the integrability threshold on p for the strong solution.
pub fn strong_solution_threshold<T: Field>(hurst: &T) -> T {
    k::<T>(2, 1) / (k::<T>(4, 1) * hurst.clone() - T::one())
}

/// Classifies every (H, p) cell: feasible iff p > 2/(4H − 1) and both
/// `COND_D_EST` windows are nonempty.
pub fn feasibility_scan<T: Field>(hurst_grid: &[T], p_grid: &[T]) -> Result<FeasibilityScan<T>> {
    let (quarter, half, two) = (k::<T>(1, 4), k::<T>(1, 2), k::<T>(2, 1));
    if let Some(h) = hurst_grid.iter().find(|h| !(**h > quarter && **h < half)) {
        return Err(Error::Precondition(format!(
            "scan H = {} outside (1/4, 1/2)",
            h.to_f64_lossy()
        )));
    }
    if let Some(p) = p_grid.iter().find(|p| !(**p >= two)) {
        return Err(Error::Precondition(format!("scan p = {} below 2", p.to_f64_lossy())));
    }
    let cells: Vec<(usize, usize)> = (0..hurst_grid.len())
        .flat_map(|i| (0..p_grid.len()).map(move |j| (i, j)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(i, j)| {
            let (h, p) = (hurst_grid[i].clone(), p_grid[j].clone());
            let threshold = strong_solution_threshold(&h);
            let (alpha_width, theta_width) = d_est_windows(&h, &p);
            let feasible = p > threshold && alpha_width > T::zero() && theta_width > T::zero();
            ScanRow {
                hurst: h,
                p,
                threshold,
                alpha_width,
                theta_width,
                feasible,
            }
        })
        .collect();
    Ok(FeasibilityScan {
        hurst_grid: hurst_grid.to_vec(),
        p_grid: p_grid.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn j_estimate_example() {
        let mut s = ParamSet::new(0.4, 10.0).unwrap();
        s.alpha = 0.65;
        s.theta = 0.5;
        let rep = check_system(SystemId::CondJEst, &s);
        assert!(rep.pass, "{rep}");
        assert_eq!(rep.checks.len(), 5);
    }

    #[test]
    fn d_estimate_reports_the_empty_alpha_window() {
        let mut s = ParamSet::new(0.26, 40.0).unwrap();
        s.alpha = 0.975;
        s.theta = 0.5;
        let rep = check_system(SystemId::CondDEst, &s);
        assert!(!rep.pass);
        let names: Vec<_> = rep.violations().iter().map(|c| c.inequality.clone()).collect();
        assert!(names.iter().any(|n| n.starts_with("alpha window")), "{names:?}");
    }

    #[test]
    fn strict_boundary_in_exact_arithmetic() {
        let mut s = ParamSet::new(r(2, 5), r(10, 1)).unwrap();
        s.alpha = r(9, 10);
        let rep = check_system(SystemId::Pi1, &s);
        let v = rep.checks.iter().find(|c| c.inequality == "alpha < 1/q").unwrap();
        assert!(!v.holds);
        assert_eq!(v.gap(), r(0, 1));
    }

    #[test]
    fn names_round_trip() {
        for id in SystemId::ALL {
            assert_eq!(id.name().parse::<SystemId>().unwrap(), id);
        }
        assert_eq!("appc_4".parse::<SystemId>().unwrap(), SystemId::Appc4);
        assert!(matches!("APPC_7".parse::<SystemId>(), Err(Error::UnknownSystem(_))));
    }

    #[test]
    fn recipe_examples() {
        let s = feasible_point(0.4, 10.0, 1e-3).unwrap();
        for id in [SystemId::CondJEst, SystemId::Pi1, SystemId::Appc1] {
            assert!(check_system(id, &s).pass);
        }
        assert!(matches!(feasible_point(0.3, 3.0, 1e-3), Err(Error::Precondition(_))));
        assert!(matches!(feasible_point(0.26, 60.0, 0.1), Err(Error::Infeasible { .. })));
        assert!(feasible_point(0.4, 10.0, 0.0).is_err());
    }
}
