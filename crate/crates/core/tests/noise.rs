use fracwave::noise::*;
use fracwave::stats::mean_se;
use fracwave::Error;

fn row_lag_estimates(field: &NoiseField, lag: usize) -> Vec<f64> {
    let n = field.grid().x_count;
    (0..field.grid().t_count)
        .map(|i| {
            let r = field.row(i);
            (0..n - lag).map(|j| r[j] * r[j + lag]).sum::<f64>() / (n - lag) as f64
        })
        .collect()
}

#[test]
fn lag_covariance_matches_fgn() {
    for &h in &[0.3, 0.4] {
        let grid = GridSpec::new(4000, 256, 0.01, 1.0 / 256.0, 0.0, 0.0).unwrap();
        let f = sample_noise_field(&grid, &NoiseParams::new(h, 11).unwrap()).unwrap();
        for lag in [0usize, 1, 2, 4, 8] {
            let (m, se) = mean_se(&row_lag_estimates(&f, lag));
            let exact = grid.dt * fgn_covariance(lag as i64, h, grid.dx).unwrap();
            assert!(
                (m - exact).abs() < 4.0 * se,
                "H={h} lag={lag}: {m} vs {exact} (se {se})"
            );
        }
    }
}

#[test]
fn cholesky_sampler_has_the_same_law() {
    let grid = GridSpec::new(4000, 40, 1.0, 0.1, 0.0, 0.0).unwrap();
    let f = sample_noise_field_with(&grid, &NoiseParams::new(0.3, 5).unwrap(), 0, Sampler::Cholesky).unwrap();
    for lag in [0usize, 1, 3] {
        let (m, se) = mean_se(&row_lag_estimates(&f, lag));
        let exact = fgn_covariance(lag as i64, 0.3, 0.1).unwrap();
        assert!((m - exact).abs() < 4.0 * se, "lag={lag}: {m} vs {exact}");
    }
}

#[test]
fn white_noise_case_is_iid() {
    let grid = GridSpec::new(2000, 64, 0.5, 0.125, 0.0, 0.0).unwrap();
    let f = sample_noise_field(&grid, &NoiseParams::new(0.5, 3).unwrap()).unwrap();
    let (m0, se0) = mean_se(&row_lag_estimates(&f, 0));
    assert!((m0 - 0.5 * 0.125).abs() < 4.0 * se0);
    let (m1, se1) = mean_se(&row_lag_estimates(&f, 1));
    assert!(m1.abs() < 4.0 * se1);
    let (mean, se) = mean_se(f.increments());
    assert!(mean.abs() < 4.0 * se);
}

#[test]
fn rows_are_uncorrelated() {
    let grid = GridSpec::new(2, 128, 1.0, 1.0 / 128.0, 0.0, 0.0).unwrap();
    let params = NoiseParams::new(0.35, 9).unwrap();
    let ens = sample_ensemble(&grid, &params, 3000).unwrap();
    for j in [0usize, 40, 127] {
        let p: Vec<f64> = ens.iter().map(|f| f.get(0, j) * f.get(1, j)).collect();
        let (m, se) = mean_se(&p);
        assert!(m.abs() < 4.0 * se, "column {j}");
    }
}

#[test]
fn seeding_is_deterministic_and_streams_differ() {
    let grid = GridSpec::new(5, 33, 0.1, 0.1, 0.0, -1.6).unwrap();
    let p = NoiseParams::new(0.3, 42).unwrap();
    let a = sample_noise_field(&grid, &p).unwrap();
    let b = sample_noise_field(&grid, &p).unwrap();
    assert_eq!(a, b);
    let ens = sample_ensemble(&grid, &p, 4).unwrap();
    assert_eq!(ens[0], a);
    assert_ne!(ens[1].increments(), ens[2].increments());
    let other = sample_noise_field(&grid, &NoiseParams::new(0.3, 43).unwrap()).unwrap();
    assert_ne!(other.increments(), a.increments());
}

#[test]
fn w_covariance_at_grid_points() {
    let grid = GridSpec::new(4, 16, 0.5, 0.25, 0.0, -2.0).unwrap();
    for &(h, p1, p2) in &[
        (0.3, (1.0, 1.0), (1.0, 1.0)),
        (0.5, (1.0, 1.0), (1.0, -1.0)),
        (0.3, (2.0, 1.5), (1.0, 0.5)),
        (0.4, (0.5, -1.25), (1.5, 0.75)),
    ] {
        let ens = sample_ensemble(&grid, &NoiseParams::new(h, 77).unwrap(), 4000).unwrap();
        let (m, se) = empirical_w_covariance(&ens, p1, p2).unwrap();
        let exact = w_covariance(p1, p2, h);
        assert!((m - exact).abs() < 4.0 * se.max(1e-12), "{p1:?} {p2:?}: {m} vs {exact}");
    }
}

#[test]
fn w_covariance_rejects_bad_input() {
    let grid = GridSpec::new(4, 16, 0.5, 0.25, 0.0, -2.0).unwrap();
    let p = NoiseParams::new(0.3, 1).unwrap();
    let small = sample_ensemble(&grid, &p, 50).unwrap();
    assert!(matches!(
        empirical_w_covariance(&small, (1.0, 0.0), (1.0, 0.0)),
        Err(Error::Precondition(_))
    ));
    let ens = sample_ensemble(&grid, &p, 100).unwrap();
    assert!(empirical_w_covariance(&ens, (1.0, 0.1), (1.0, 0.0)).is_err());
    assert!(empirical_w_covariance(&ens, (2.5, 0.0), (1.0, 0.0)).is_err());
}

#[test]
fn mollification_preserves_constants_and_mass() {
    let grid = GridSpec::new(1, 200, 1.0, 0.01, 0.0, 0.0).unwrap();
    let p = NoiseParams::new(0.4, 0).unwrap();
    let eps = 4e-4;
    let margin = (6.0 * f64::sqrt(eps) / 0.01).ceil() as usize + 21;
    let ones = NoiseField::from_increments(grid, p, vec![1.0; 200]).unwrap();
    let m = mollify_field(&ones, eps).unwrap();
    for j in margin..200 - margin {
        assert!((m.get(0, j) - 1.0).abs() < 1e-14);
    }
    // a bump supported well inside keeps its total mass
    let mut bump = NoiseField::zeros(grid, p);
    for j in 90..110 {
        bump.set(0, j, (j as f64 * 0.7).sin());
    }
    let before: f64 = bump.row(0).iter().sum();
    let after: f64 = mollify_field(&bump, eps).unwrap().row(0).iter().sum();
    assert!((before - after).abs() < 1e-10 * before.abs().max(1.0));
    assert!(matches!(mollify_field(&ones, -1.0), Err(Error::Domain(_))));
}

#[test]
fn mollification_contracts_variance() {
    let grid = GridSpec::new(1, 64, 1.0, 1.0 / 64.0, 0.0, 0.0).unwrap();
    let ens = sample_ensemble(&grid, &NoiseParams::new(0.3, 8).unwrap(), 1000).unwrap();
    let eps = 4.0 / 64.0f64.powi(2);
    for j in [10usize, 32, 50] {
        let raw: f64 = ens.iter().map(|f| f.get(0, j).powi(2)).sum::<f64>();
        let smooth: f64 = ens
            .iter()
            .map(|f| mollify_field(f, eps).unwrap().get(0, j).powi(2))
            .sum::<f64>();
        assert!(smooth <= raw);
    }
}

#[test]
fn mollification_semigroup() {
    let grid = GridSpec::new(2, 400, 1.0, 0.01, 0.0, 0.0).unwrap();
    let f = sample_noise_field(&grid, &NoiseParams::new(0.3, 2).unwrap()).unwrap();
    let (e1, e2) = (4e-4, 9e-4);
    let twice = mollify_field(&mollify_field(&f, e1).unwrap(), e2).unwrap();
    let once = mollify_field(&f, e1 + e2).unwrap();
    for i in 0..2 {
        for j in 80..320 {
            assert!((twice.get(i, j) - once.get(i, j)).abs() < 1e-8);
        }
    }
}

#[test]
fn binary_and_csv_round_trip() {
    let grid = GridSpec::new(3, 5, 0.1, 0.2, 0.0, -0.4).unwrap();
    let f = sample_noise_field(&grid, &NoiseParams::new(0.45, 123).unwrap()).unwrap();
    assert_eq!(NoiseField::from_bytes(&f.to_bytes()).unwrap(), f);
    let mut buf = Vec::new();
    f.write_csv(&mut buf).unwrap();
    assert_eq!(NoiseField::read_csv(&buf[..]).unwrap(), f);
    assert!(NoiseField::from_bytes(&[0u8; 12]).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(GridSpec::new(0, 5, 0.1, 0.1, 0.0, 0.0).is_err());
    assert!(GridSpec::new(2, 1, 0.1, 0.1, 0.0, 0.0).is_err());
    assert!(GridSpec::new(2, 5, -0.1, 0.1, 0.0, 0.0).is_err());
    assert!(NoiseParams::new(0.0, 1).is_err());
    assert!(NoiseParams::new(0.6, 1).is_err());
    let grid = GridSpec::new(1, 5000, 1.0, 0.1, 0.0, 0.0).unwrap();
    let err = sample_noise_field_with(&grid, &NoiseParams::new(0.3, 1).unwrap(), 0, Sampler::Cholesky);
    assert!(matches!(err, Err(Error::Embedding(_))));
}
