use fracwave::params::*;
use fracwave::{Error, ExactParamSet};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};
use proptest::prelude::*;

fn r(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Hand-written restatement of the first Appendix lemma's list and the
/// J-estimate window, independent of the registry code.
fn independent_check(s: &ParamSet<f64>) -> Vec<&'static str> {
    let (h, p, a, th, g) = (s.hurst, s.p, s.alpha, s.theta, s.gamma);
    let iq = 1.0 - 1.0 / p;
    let mut bad = Vec::new();
    let mut need = |ok: bool, what: &'static str| {
        if !ok {
            bad.push(what)
        }
    };
    need(p > 1.0 / h, "p>1/H");
    need(g < h - 1.0 / p, "gamma");
    need(1.0 - h < a && a < iq && a + g < iq, "alpha");
    need(1.0 / p < th && th < h + a - 0.5, "theta");
    need(1.0 - 2.0 * iq + a < th, "theta lower");
    let e1 = s.eta[0];
    need(e1 > g && th > 1.0 + a - 2.0 * iq + 2.0 * e1 && a + e1 > iq, "eta1");
    let e2 = s.eta[1];
    need(e2 > g && th > 1.0 + a - 2.0 * iq + 2.0 * e2 && a + e2 < iq, "eta2");
    let e3 = *s.eta_for(SystemId::Appc1, 3);
    need(e3 > g && a + e3 > iq, "eta3");
    for e in [s.eta[3], s.eta[4]] {
        need(e > g && th > 1.0 + a - 2.0 * iq + 2.0 * e && a + e > iq, "eta4/5");
    }
    bad
}

#[test]
fn reference_tuple_is_independently_feasible() {
    let s = feasible_point(0.4, 10.0, 1e-3).unwrap();
    assert!(independent_check(&s).is_empty(), "{:?}", independent_check(&s));
    assert!((s.gamma - (0.4 - 0.1 - 7e-3)).abs() < 1e-15);
    assert!((s.alpha - 0.604).abs() < 1e-15);
    assert!((s.theta - 0.399).abs() < 1e-15);
    assert_eq!(s.eta[0], s.eta[3]);
    assert_eq!(s.eta[1], s.eta[2]);
    assert_eq!(s.overrides().len(), 3);
    assert!((1.0 / s.p + 1.0 / s.q - 1.0).abs() < 1e-12);
}

#[test]
fn large_eps_names_the_violated_system() {
    match feasible_point(0.26, 60.0, 0.1) {
        Err(Error::Infeasible { system, detail }) => {
            assert!(RECIPE_CLAIMS.iter().any(|id| id.name() == system));
            assert!(detail.contains("fails"), "{detail}");
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn exact_recipe_matches_float_recipe() {
    let exact: ExactParamSet = feasible_point(r(2, 5), r(10, 1), r(1, 1000)).unwrap();
    assert_eq!(exact.gamma, r(2, 5) - r(1, 10) - r(7, 1000));
    assert_eq!(exact.q, r(10, 9));
    let float = feasible_point(0.4, 10.0, 1e-3).unwrap();
    for id in SystemId::ALL {
        assert_eq!(check_system(id, &exact).pass, check_system(id, &float).pass, "{id}");
    }
    // the recipe never claims the D-estimate
    assert!(!check_system(SystemId::CondDEst, &exact).pass);
}

#[test]
fn boundary_equalities_fail_strictly() {
    // p exactly at 2/(4H - 1)
    let mut s: ExactParamSet = ParamSet::new(r(3, 10), r(10, 1)).unwrap();
    s.alpha = r(9, 10);
    s.theta = r(1, 2);
    let rep = check_system(SystemId::CondDEst, &s);
    let w = rep
        .checks
        .iter()
        .find(|c| c.inequality.starts_with("alpha window"))
        .unwrap();
    assert!(!w.holds);
    assert!(w.gap().is_zero());
    // p exactly 1/H
    let s: ExactParamSet = ParamSet::new(r(1, 4), r(4, 1)).unwrap();
    let rep = check_system(SystemId::CondHolderMain, &s);
    assert!(!rep.checks[0].holds && rep.checks[0].gap().is_zero());
    // theta exactly at the Π.1 upper end
    let mut s = feasible_point(r(2, 5), r(10, 1), r(1, 1000)).unwrap();
    s.theta = s.hurst.clone() + s.alpha.clone() - r(1, 2);
    let rep = check_system(SystemId::Pi1, &s);
    assert_eq!(rep.violations().len(), 1);
}

#[test]
fn relaxing_by_the_gap_flips_only_that_violation() {
    let mut s = feasible_point(0.4, 10.0, 1e-3).unwrap();
    // still above 1/p but below the Π.2 bounds
    s.theta = 0.2;
    let rep = check_system(SystemId::Appc1, &s);
    let bad = rep.violations();
    assert!(!bad.is_empty());
    let worst = bad
        .iter()
        .filter(|c| c.inequality.starts_with("theta >"))
        .map(|c| -c.gap())
        .fold(0.0, f64::max);
    s.theta += worst + 1e-9;
    assert!(check_system(SystemId::Appc1, &s).pass);
}

#[test]
fn scoped_eta_does_not_alias() {
    let mut s = feasible_point(0.4, 10.0, 1e-3).unwrap();
    let shared = s.eta[2];
    s.set_override(SystemId::Appc3, 3, 0.5).unwrap();
    assert_eq!(*s.eta_for(SystemId::Appc3, 3), 0.5);
    assert_eq!(*s.eta_for(SystemId::Appc5, 3), shared);
    assert!(!check_system(SystemId::Appc3, &s).pass);
    assert!(check_system(SystemId::Appc5, &s).pass);
    assert!(s.set_override(SystemId::Appc1, 6, 0.0).is_err());
}

#[test]
fn unknown_system_is_an_error() {
    let s = feasible_point(0.4, 10.0, 1e-3).unwrap();
    assert!(matches!(check_system_named("PI_9", &s), Err(Error::UnknownSystem(_))));
    assert!(check_system_named("pi_1", &s).unwrap().pass);
}

#[test]
fn scan_examples_and_boundary() {
    let hs: Vec<f64> = (0..10).map(|i| 0.26 + 0.023 * i as f64).collect();
    let ps: Vec<f64> = (0..10).map(|j| 2.0 * 1.6f64.powi(j)).collect();
    let scan = feasibility_scan(&hs, &ps).unwrap();
    assert_eq!(scan.rows.len(), 100);
    for (h, pmin) in scan.boundary() {
        let thr = 2.0 / (4.0 * h - 1.0);
        let idx = ps.iter().position(|&p| p > thr);
        assert_eq!(pmin, idx.map(|i| ps[i]));
    }
    let one = feasibility_scan(&[0.4], &[4.0]).unwrap();
    assert!(one.rows[0].feasible);
    let ex = feasibility_scan(&[r(3, 10)], &[r(10, 1), r(21, 2)]).unwrap();
    assert!(!ex.rows[0].feasible && ex.rows[1].feasible);
    assert!(feasibility_scan(&[0.25], &[4.0]).is_err());
    assert!(feasibility_scan(&[0.3], &[1.5]).is_err());
    let mut buf = Vec::new();
    scan.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 101);
}

#[test]
fn window_search_finds_a_tuple_the_recipe_also_finds() {
    let s = window_search(0.4, 10.0, 12).unwrap();
    for id in RECIPE_CLAIMS {
        assert!(check_system(id, &s).pass, "{id}");
    }
    assert!(independent_check(&s).is_empty());
    assert!(window_search(0.2, 3.0, 6).is_err());
}

#[test]
fn registry_lists_every_system() {
    let reg = registry();
    assert_eq!(reg.len(), 15);
    assert!(reg.iter().all(|(_, names)| !names.is_empty()));
}

proptest! {
    #[test]
    fn recipe_passes_every_claim(h in 0.26f64..0.49, extra in 0.05f64..50.0, frac in 0.01f64..0.1) {
        let p = 2.0 / (4.0 * h - 1.0) + extra;
        let eps = frac * (h - 1.0 / p);
        let s = feasible_point(h, p, eps).unwrap();
        prop_assert!(independent_check(&s).is_empty());
        // re-verify exactly on the rounded inputs
        let (he, pe, ee) = (
            BigRational::from_f64(h).unwrap(),
            BigRational::from_f64(p).unwrap(),
            BigRational::from_f64(eps).unwrap(),
        );
        let exact = feasible_point(he, pe, ee).unwrap();
        for id in RECIPE_CLAIMS {
            prop_assert!(check_system(id, &exact).pass);
        }
    }

    #[test]
    fn report_pass_iff_no_violations(h in 0.2f64..0.5, p in 1.5f64..40.0, a in 0.0f64..1.0, t in 0.0f64..1.0) {
        let mut s = ParamSet::new(h, p).unwrap();
        s.alpha = a;
        s.theta = t;
        s.gamma = h - 1.0 / p - 0.01;
        s.eta = [s.gamma + 0.005; 5];
        for id in SystemId::ALL {
            let rep = check_system(id, &s);
            prop_assert_eq!(rep.pass, rep.violations().is_empty());
            for c in &rep.checks {
                prop_assert_eq!(c.holds, c.gap() > 0.0);
            }
        }
    }
}
