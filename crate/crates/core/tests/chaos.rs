use fracwave::chaos::*;
use fracwave::noise::fgn_covariance;
use fracwave::Error;
use statrs::function::beta::beta;

fn light(h: f64, t: f64, x: f64) -> ChaosConfig {
    ChaosConfig {
        xi_nodes: 1024,
        ..ChaosConfig::new(h, t, x).unwrap()
    }
}

/// Left-point cell sum Σ_k dt Σ ¼ I₀ I₀ γ over the cone, the discrete
/// stochastic convolution's exact variance.
fn discrete_variance(h: f64, t: f64, x: f64, n: usize) -> f64 {
    let dx = 1.0 / n as f64;
    let rows = (t * n as f64).round() as usize;
    let mut total = 0.0;
    for k in 0..rows {
        let s = (k as f64 + 0.5) * dx;
        let win = rows - k;
        let v: Vec<f64> = (0..2 * win)
            .map(|c| {
                let y = x + (c as f64 - win as f64 + 0.5) * dx;
                0.25 * ((-(y + s).powi(2)).exp() + (-(y - s).powi(2)).exp())
            })
            .collect();
        let gam: Vec<f64> = (0..2 * win).map(|l| fgn_covariance(l as i64, h, dx).unwrap()).collect();
        for a in 0..2 * win {
            for b in 0..2 * win {
                total += dx * v[a] * v[b] * gam[a.abs_diff(b)];
            }
        }
    }
    total
}

#[test]
fn spectral_variance_matches_the_cell_quadratic_form() {
    for &(t, x) in &[(1.0, 0.0), (1.5, -0.7), (0.625, 2.0)] {
        let spectral = i1_second_moment(&light(0.4, t, x)).unwrap().value;
        // the cell sum converges at first order, so extrapolate from two grids
        let discrete = 2.0 * discrete_variance(0.4, t, x, 256) - discrete_variance(0.4, t, x, 128);
        assert!(
            (discrete / spectral - 1.0).abs() < 2e-3,
            "({t},{x}): {spectral} vs {discrete}"
        );
    }
    let spectral = i1_second_moment(&light(0.3, 1.0, 0.25)).unwrap().value;
    let discrete = 2.0 * discrete_variance(0.3, 1.0, 0.25, 256) - discrete_variance(0.3, 1.0, 0.25, 128);
    assert!((discrete / spectral - 1.0).abs() < 2e-3, "{spectral} vs {discrete}");
}

#[test]
fn zero_data_gives_zero() {
    let c = ChaosConfig {
        amplitude: 0.0,
        ..light(0.4, 1.0, 0.0)
    };
    assert_eq!(i1_second_moment(&c).unwrap().value, 0.0);
    assert_eq!(dh_i1_second_moment(&c, 0.1).unwrap().value, 0.0);
}

#[test]
fn monotone_in_time_and_symmetric_in_space() {
    let a = i1_second_moment(&light(0.35, 1.0, 0.3)).unwrap();
    let b = i1_second_moment(&light(0.35, 2.0, 0.3)).unwrap();
    assert!(a.value < b.value);
    let m = i1_second_moment(&light(0.35, 1.0, -0.3)).unwrap();
    assert!((a.value - m.value).abs() < 1e-12 * a.value);
    assert!(a.value >= 0.0 && a.tail_estimate >= 0.0);
}

#[test]
fn truncated_part_grows_with_the_cutoff() {
    let mut prev = 0.0;
    for xi in [16.0, 64.0, 256.0] {
        let c = ChaosConfig {
            xi_cutoff: xi,
            ..light(0.4, 1.0, 0.0)
        };
        let e = i1_second_moment(&c).unwrap();
        assert!(e.truncated_value > prev);
        prev = e.truncated_value;
        assert_eq!(e.cutoff, xi);
    }
}

#[test]
fn increment_moments() {
    let c = light(0.35, 2.0, 0.0);
    let i1 = i1_second_moment(&c).unwrap().value;
    let lags = [0.0, 2f64.powi(-9), 2f64.powi(-8), 0.25, 0.99];
    let est = dh_i1_profile(&c, &lags).unwrap();
    assert_eq!(est[0].value, 0.0);
    for e in &est {
        assert!(e.value <= 4.0 * i1 + 1e-12);
    }
    // doubling ratio 2^{2H}
    let r = est[2].value / est[1].value;
    assert!((r / 2f64.powf(0.7) - 1.0).abs() < 0.1, "{r}");
    let single = dh_i1_second_moment(&c, lags[3]).unwrap();
    assert!((single.value - est[3].value).abs() < 1e-15 * single.value);
}

#[test]
fn increment_lag_must_respect_the_window() {
    let c = light(0.35, 1.0, 0.0);
    assert!(matches!(dh_i1_second_moment(&c, 0.5), Err(Error::Domain(_))));
    assert!(matches!(dh_i1_second_moment(&c, -0.1), Err(Error::Domain(_))));
    assert!(dh_i1_second_moment(&c, 0.49).is_ok());
}

#[test]
fn coarse_cutoff_moves_mass_into_the_tail() {
    let fine = i1_second_moment(&light(0.45, 0.5, 0.0)).unwrap();
    let c = ChaosConfig {
        xi_cutoff: 24.0,
        ..light(0.45, 0.5, 0.0)
    };
    let e = i1_second_moment(&c).unwrap();
    assert!(e.tail_estimate > fine.tail_estimate);
    assert!((e.truncated_value + e.tail_estimate - e.value).abs() < 1e-15);
    assert!(
        (e.value / fine.value - 1.0).abs() < 0.02,
        "{} vs {}",
        e.value,
        fine.value
    );
}

#[test]
fn upper_term_closed_forms() {
    assert!((i2_upper_term(0.5).unwrap() - 8.0 / 3.0).abs() < 1e-13);
    assert!((i2_upper_term(1e-4).unwrap() - 14.0 / 3.0).abs() < 1e-3);
    let h: f64 = 0.3;
    let e = 2.0 * h;
    let exact = 2f64.powf(2.0 * e + 1.0) * beta(e + 1.0, e + 1.0) + 2f64.powf(e + 3.0) * beta(3.0, e + 1.0);
    assert!((i2_upper_term(h).unwrap() - exact).abs() < 1e-8);
    assert!(i2_upper_term(0.0).is_err());
}

#[test]
fn first_kernel_examples() {
    let c = ChaosConfig::new(0.3, 1.0, 0.0).unwrap();
    assert_eq!(g1_kernel_eval(&c, 0.0, 0.0).unwrap(), 0.5);
    assert_eq!(g1_kernel_eval(&c, 0.5, 0.5).unwrap(), 0.0);
    assert_eq!(g1_kernel_eval(&c, 0.2, -0.9).unwrap(), 0.0);
    let c2 = ChaosConfig::new(0.3, 2.0, 0.0).unwrap();
    let want = 0.25 * ((-2.25f64).exp() + (-0.25f64).exp());
    assert!((g1_kernel_eval(&c2, 1.0, 0.5).unwrap() - want).abs() < 1e-16);
    assert!(g1_kernel_eval(&c, 1.0, 0.0).is_err());
}

#[test]
fn divergence_scan_regimes() {
    let eps: Vec<f64> = (4..=11).map(|k| 2f64.powi(-k)).collect();
    let low = i2_divergence_scan(&light(0.2, 2.0, 0.0), &eps).unwrap();
    let fit = scan_increment_slope(&low).unwrap();
    assert!((fit.slope + 0.2).abs() < 0.05, "{}", fit.slope);
    let high = i2_divergence_scan(&light(0.35, 2.0, 0.0), &eps).unwrap();
    let (a, b) = (high[4].value, high[5].value);
    assert!((b / a - 1.0).abs() < 0.05);
    assert!(high.windows(2).all(|w| w[1].value >= w[0].value));
    let mut buf = Vec::new();
    write_scan_csv(&high, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), eps.len() + 1);
}

#[test]
fn scan_rejects_bad_cutoffs() {
    let c = light(0.3, 2.0, 0.0);
    assert!(i2_divergence_scan(&c, &[0.1, 0.2]).is_err());
    assert!(i2_divergence_scan(&c, &[1.5]).is_err());
    assert!(i2_divergence_scan(&c, &[]).is_err());
    assert_eq!(c.eps_ladder().len(), 6);
    assert!(ChaosConfig::new(0.5, 1.0, 0.0).is_err());
    assert!(ChaosConfig { xi_nodes: 100, ..c }.validate().is_err());
}
