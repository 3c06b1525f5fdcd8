use super::*;
use crate::numerics::{KahanSum, Matrix};
use crate::systems::{catalog_lookup, BasisFunction, CatalogOptions, CustomBasis, FeedbackPolicy, ParameterPrior};

fn entry(name: &str) -> crate::systems::BenchmarkCatalogEntry {
    catalog_lookup(name, &CatalogOptions::default()).unwrap()
}

fn default_settings() -> IntegrationSettings {
    IntegrationSettings::default()
}

#[test]
fn scalar_drift_rk4_is_exact() {
    let spec = entry("scalar-drift").epistemic;
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let path = integrate_parametric_path(&spec, &grid, 1, &[0.7]).unwrap();
    assert!((path[100] - 0.7).abs() < 1e-12);
    for (i, x) in path.iter().enumerate() {
        assert!((x - 0.7 * grid.time(i)).abs() < 4.0 * f64::EPSILON, "i={i}");
    }
}

#[test]
fn initial_condition_is_exact_for_every_kind() {
    let grid = TimeGrid::new(2.0, 7).unwrap();
    for name in ["scalar-drift", "linear-feedback"] {
        let e = entry(name);
        let a = integrate_parametric(&e.epistemic, &grid, 1, 3, &default_settings()).unwrap();
        let b = integrate_sde(&e.aleatoric, &grid, 1, 3, SdeScheme::EulerMaruyama, &default_settings()).unwrap();
        assert_eq!(a.state(0, 0), e.epistemic.initial_state());
        assert_eq!(b.state(0, 0), e.aleatoric.initial_state());
    }
}

#[test]
fn linear_feedback_rk4_matches_closed_form() {
    let spec = entry("linear-feedback").epistemic;
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let path = integrate_parametric_path(&spec, &grid, 1, &[0.5]).unwrap();
    assert!((path[1000] - (-0.5f64).exp()).abs() < 1e-9);
}

#[test]
fn parametric_rows_reproduce_paths_bitwise() {
    let spec = entry("linear-feedback").epistemic;
    let grid = TimeGrid::new(2.0, 50).unwrap();
    let ens = integrate_parametric(&spec, &grid, 20, 11, &default_settings()).unwrap();
    assert_eq!(ens.sampled_parameters().unwrap().len(), 20);
    for j in 0..20 {
        let again = integrate_parametric_path(&spec, &grid, 1, ens.parameters(j).unwrap()).unwrap();
        assert_eq!(again.as_slice(), ens.path(j));
    }
}

#[test]
fn theta_is_drawn_from_the_path_stream() {
    let spec = entry("scalar-drift").epistemic;
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let ens = integrate_parametric(&spec, &grid, 5, 99, &default_settings()).unwrap();
    for j in 0..5 {
        let mut s = crate::rng::derive_path_stream(99, j as u64);
        assert_eq!(ens.parameters(j).unwrap()[0], s.standard_normal());
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let e = entry("linear-feedback");
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let run = |workers| {
        let s = IntegrationSettings {
            substeps: 2,
            workers: Some(workers),
        };
        (
            integrate_parametric(&e.epistemic, &grid, 257, 42, &s).unwrap(),
            integrate_sde(&e.aleatoric, &grid, 257, 42, SdeScheme::Milstein, &s).unwrap(),
        )
    };
    let (a1, b1) = run(1);
    let (a8, b8) = run(8);
    assert_eq!(a1, a8);
    assert_eq!(b1, b8);
}

#[test]
fn scalar_drift_sde_telescopes_to_the_brownian_sum() {
    let spec = entry("scalar-drift").aleatoric;
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let ens = integrate_sde(&spec, &grid, 10, 5, SdeScheme::EulerMaruyama, &default_settings()).unwrap();
    for j in 0..10 {
        let inc = brownian_increments(5, j as u64, 1000, grid.dt(), 1);
        let compensated: KahanSum = inc.iter().copied().collect();
        let end = ens.value(j, 1000, 0);
        assert_eq!(end.to_bits(), compensated.value().to_bits(), "path {j}");
        let naive: f64 = inc.iter().sum();
        assert!((end - naive).abs() < 1e-13);
    }
}

#[test]
fn explicit_increments_match_stream_driven_paths() {
    let spec = entry("linear-feedback").aleatoric;
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let ens = integrate_sde(&spec, &grid, 3, 8, SdeScheme::Milstein, &default_settings()).unwrap();
    for j in 0..3 {
        let inc = brownian_increments(8, j as u64, 200, grid.dt(), 1);
        let path = integrate_sde_with_increments(&spec, &grid, SdeScheme::Milstein, &inc).unwrap();
        assert_eq!(path.as_slice(), ens.path(j));
    }
    assert!(integrate_sde_with_increments(&spec, &grid, SdeScheme::Milstein, &[0.0; 3]).is_err());
}

#[test]
fn vanishing_diffusion_reduces_to_euler_of_the_mean() {
    let e = catalog_lookup(
        "linear-feedback",
        &CatalogOptions {
            prior_variance: Some(1e-30),
            ..Default::default()
        },
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let ens = integrate_sde(&e.aleatoric, &grid, 2, 1, SdeScheme::EulerMaruyama, &default_settings()).unwrap();
    let mut x = 1.0;
    for i in 1..=100 {
        x += -x * grid.dt();
        assert!((ens.value(0, i, 0) - x).abs() < 1e-12);
    }
}

#[test]
fn multiplicative_map_powers_theta() {
    let e = catalog_lookup(
        "dt-multiplicative",
        &CatalogOptions {
            theta_bar: Some(2.0),
            prior_variance: Some(1e-300),
            ..Default::default()
        },
    )
    .unwrap();
    let ens = iterate_discrete(&e.epistemic, 3, 4, 0, &default_settings()).unwrap();
    for j in 0..4 {
        assert_eq!(ens.path(j), &[1.0, 2.0, 4.0, 8.0]);
    }
    assert_eq!(ens.grid().dt(), 1.0);
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

#[test]
fn additive_map_variance_grows_linearly() {
    let additive = |theta_bar: f64| {
        catalog_lookup(
            "dt-additive",
            &CatalogOptions {
                theta_bar: Some(theta_bar),
                initial_state: Some(0.0),
                ..Default::default()
            },
        )
        .unwrap()
        .aleatoric
    };
    let ens = iterate_discrete(&additive(1.0), 5, 10_000, 123, &default_settings()).unwrap();
    assert!(ens.sampled_parameters().is_none());
    let v = sample_variance(&ens.marginal(5, 0));
    // 3σ of the unbiased variance estimator: 3·5·√(2/(N−1)).
    assert!((v - 5.0).abs() < 0.22, "variance {v}");

    let ens = iterate_discrete(&additive(0.0), 5, 10_000, 123, &default_settings()).unwrap();
    let v = sample_variance(&ens.marginal(5, 0));
    assert!((v - 1.0).abs() < 0.045, "variance {v}");
}

#[test]
fn multiplicative_map_variance_is_gaussian_sixth_moment() {
    let e = entry("dt-multiplicative");
    let n = 100_000;
    let ens = iterate_discrete(&e.epistemic, 3, n, 77, &default_settings()).unwrap();
    let v = sample_variance(&ens.marginal(3, 0));
    // Var[θ³] = 15, Var[s²] ≈ (E[θ¹²] − 15²)/N = (10395 − 225)/N.
    let tol = 3.0 * ((10395.0 - 225.0) / n as f64).sqrt();
    assert!((v - 15.0).abs() < tol, "variance {v} ± {tol}");
}

#[test]
fn parametric_paths_are_smooth_and_sde_paths_rough() {
    let e = entry("scalar-drift");
    let max_second_difference = |ens: &PathEnsemble| {
        let mut worst = 0.0_f64;
        for j in 0..ens.num_paths() {
            let p = ens.path(j);
            for w in p.windows(3) {
                worst = worst.max((w[2] - 2.0 * w[1] + w[0]).abs());
            }
        }
        worst
    };
    let coarse = TimeGrid::new(1.0, 100).unwrap();
    let fine = TimeGrid::new(1.0, 1000).unwrap();
    let s = default_settings();
    let p_fine = integrate_parametric(&e.epistemic, &fine, 50, 1, &s).unwrap();
    let q_coarse = integrate_sde(&e.aleatoric, &coarse, 50, 1, SdeScheme::EulerMaruyama, &s).unwrap();
    let q_fine = integrate_sde(&e.aleatoric, &fine, 50, 1, SdeScheme::EulerMaruyama, &s).unwrap();
    // Straight lines: second differences are pure rounding.
    assert!(max_second_difference(&p_fine) < 1e-14);
    // Brownian: second differences shrink only like √dt.
    let ratio = max_second_difference(&q_coarse) / max_second_difference(&q_fine);
    assert!(ratio > 2.0 && ratio < 5.0, "ratio {ratio}");

    let lf = entry("linear-feedback");
    let a = integrate_parametric(&lf.epistemic, &coarse, 50, 1, &s).unwrap();
    let b = integrate_parametric(&lf.epistemic, &fine, 50, 1, &s).unwrap();
    let r = max_second_difference(&a) / max_second_difference(&b);
    assert!(
        (r - 100.0).abs() < 5.0,
        "second differences should scale as dt², ratio {r}"
    );
}

#[test]
fn substeps_subsample_the_fine_run() {
    let e = entry("linear-feedback");
    let fine = TimeGrid::new(1.0, 100).unwrap();
    let coarse = TimeGrid::new(1.0, 10).unwrap();
    let sub = IntegrationSettings::with_substeps(10);
    for (spec, scheme) in [
        (&e.epistemic, SdeScheme::EulerMaruyama),
        (&e.aleatoric, SdeScheme::Milstein),
    ] {
        let full = simulate(spec, &fine, 5, 3, scheme, &default_settings()).unwrap();
        let thin = simulate(spec, &coarse, 5, 3, scheme, &sub).unwrap();
        assert_eq!(thin.integration_dt(), full.grid().dt());
        for j in 0..5 {
            for i in 0..=10 {
                assert_eq!(thin.value(j, i, 0), full.value(j, 10 * i, 0));
            }
            let (lo, hi) = thin.extrema(j, 0).unwrap();
            let p = full.path(j);
            assert_eq!(lo, p.iter().copied().fold(f64::INFINITY, f64::min));
            assert_eq!(hi, p.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}

#[test]
fn divergent_paths_are_flagged_not_dropped() {
    let e = catalog_lookup(
        "linear-feedback",
        &CatalogOptions {
            theta_bar: Some(0.0),
            prior_variance: Some(1e6),
            gain: Some(0.0),
            ..Default::default()
        },
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let ens = integrate_parametric(&e.epistemic, &grid, 200, 2, &default_settings()).unwrap();
    assert_eq!(ens.num_paths(), 200);
    assert!(!ens.divergences().is_empty());
    for d in ens.divergences() {
        assert!(ens.parameters(d.path).unwrap()[0].abs() > 100.0);
        assert!(ens.path(d.path).last().unwrap().is_nan());
        assert!(d.time > 0.0 && d.time <= 1.0);
    }
    let finite = (0..200).filter(|&j| ens.path(j).iter().all(|v| v.is_finite())).count();
    assert_eq!(finite + ens.divergences().len(), 200);
}

#[test]
fn precondition_errors() {
    let e = entry("scalar-drift");
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let s = default_settings();
    assert!(matches!(
        integrate_parametric(&e.aleatoric, &grid, 1, 0, &s),
        Err(Error::WrongKind { .. })
    ));
    assert!(matches!(
        integrate_sde(&e.epistemic, &grid, 1, 0, SdeScheme::EulerMaruyama, &s),
        Err(Error::WrongKind { .. })
    ));
    assert!(matches!(
        integrate_parametric(&e.epistemic, &grid, 0, 0, &s),
        Err(Error::InsufficientPaths { .. })
    ));
    assert!(integrate_parametric(&e.epistemic, &grid, 1, 0, &IntegrationSettings::with_substeps(0)).is_err());
    assert!(matches!(
        iterate_discrete(&e.epistemic, 3, 1, 0, &s),
        Err(Error::WrongKind { .. })
    ));
}

#[test]
fn milstein_needs_a_gradient_and_a_scalar_state() {
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let s = default_settings();
    let custom = BasisFunction::Custom(CustomBasis::new("sin", 1, 1, |x, _u, out| out[0] = x[0].sin()));
    let spec = SystemSpec::new(
        SystemKind::ItoSde,
        custom,
        ParameterPrior::standard(1).unwrap(),
        FeedbackPolicy::Zero,
        Matrix::scalar(0.0),
        vec![0.5],
    )
    .unwrap();
    assert_eq!(
        integrate_sde(&spec, &grid, 1, 0, SdeScheme::Milstein, &s).unwrap_err(),
        Error::MilsteinUnavailable
    );
    assert!(integrate_sde(&spec, &grid, 1, 0, SdeScheme::EulerMaruyama, &s).is_ok());

    let with_grad = BasisFunction::Custom(
        CustomBasis::new("sin", 1, 1, |x, _u, out| out[0] = x[0].sin())
            .with_state_gradient(|x, _u, out| out[0] = x[0].cos()),
    );
    let spec = SystemSpec::new(
        SystemKind::ItoSde,
        with_grad,
        ParameterPrior::standard(1).unwrap(),
        FeedbackPolicy::Zero,
        Matrix::scalar(0.0),
        vec![0.5],
    )
    .unwrap();
    assert!(integrate_sde(&spec, &grid, 1, 0, SdeScheme::Milstein, &s).is_ok());

    let planar = SystemSpec::new(
        SystemKind::ItoSde,
        BasisFunction::Constant,
        ParameterPrior::standard(2).unwrap(),
        FeedbackPolicy::Zero,
        Matrix::zeros(2, 1),
        vec![0.0, 0.0],
    )
    .unwrap();
    assert_eq!(
        integrate_sde(&planar, &grid, 1, 0, SdeScheme::Milstein, &s).unwrap_err(),
        Error::MilsteinUnavailable
    );
    let ens = integrate_sde(&planar, &grid, 4, 0, SdeScheme::EulerMaruyama, &s).unwrap();
    assert_eq!(ens.state_dim(), 2);
}

#[test]
fn correlated_prior_drives_correlated_planar_motion() {
    let cov = Matrix::from_rows(&[vec![1.0, 0.8], vec![0.8, 1.0]]).unwrap();
    let prior = crate::systems::make_prior(vec![0.0, 0.0], cov).unwrap();
    let spec = SystemSpec::new(
        SystemKind::ParametricOde,
        BasisFunction::Constant,
        prior,
        FeedbackPolicy::Zero,
        Matrix::zeros(2, 1),
        vec![0.0, 0.0],
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let ens = integrate_parametric(&spec, &grid, 20_000, 4, &default_settings()).unwrap();
    let a = ens.marginal(4, 0);
    let b = ens.marginal(4, 1);
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    assert!((cov - 0.8).abs() < 0.05, "cov {cov}");
}

mod formats {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_layout() {
        let spec = entry("scalar-drift").epistemic;
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let ens = integrate_parametric(&spec, &grid, 2, 1, &default_settings()).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&ens, Some("parametric"), true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,t,dim,x");
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert_eq!(lines[1], "parametric-0,0,0,0");
        let theta = ens.parameters(1).unwrap()[0];
        let last: f64 = lines[6].rsplit(',').next().unwrap().parse().unwrap();
        assert!((last - theta).abs() < 1e-15);
        let mut buf = Vec::new();
        write_paths_csv(&ens, None, false, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("0,0,0,0\n"));
    }

    #[test]
    fn binary_header_layout() {
        let spec = entry("scalar-drift").aleatoric;
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let ens = integrate_sde(&spec, &grid, 2, 1, SdeScheme::EulerMaruyama, &default_settings()).unwrap();
        let mut buf = Vec::new();
        write_binary(&ens, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"EPSDPATH");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 1);
        assert_eq!(buf.len(), 72 + 8 * 2 * 4);
        let x = f64::from_le_bytes(buf[72 + 8..72 + 16].try_into().unwrap());
        assert_eq!(x, ens.value(0, 1, 0));

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_binary(bad.as_slice()), Err(Error::Format(_))));
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_binary(long.as_slice()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn binary_round_trip(
            name in prop::sample::select(vec!["scalar-drift", "linear-feedback", "dt-multiplicative"]),
            epistemic in any::<bool>(),
            paths in 1usize..6,
            steps in 1usize..9,
            seed in any::<u64>(),
        ) {
            let e = entry(name);
            let spec = if epistemic { &e.epistemic } else { &e.aleatoric };
            let grid = TimeGrid::new(1.5, steps).unwrap();
            let ens = simulate(spec, &grid, paths, seed, SdeScheme::EulerMaruyama, &default_settings()).unwrap();
            let mut buf = Vec::new();
            write_binary(&ens, &mut buf).unwrap();
            let back = read_binary(buf.as_slice()).unwrap();
            prop_assert_eq!(back.states(), ens.states());
            prop_assert_eq!(back.sampled_parameters(), ens.sampled_parameters());
            prop_assert_eq!(back.kind(), ens.kind());
            prop_assert_eq!(back.grid(), ens.grid());
            prop_assert_eq!(back.master_seed(), seed);
        }
    }
}

#[test]
fn scalar_shortcut_matches_generic_evaluation() {
    let e = entry("linear-feedback");
    let spec = &e.aleatoric;
    let generic = SystemSpec::new(
        SystemKind::ItoSde,
        BasisFunction::Custom(
            CustomBasis::new("x", 1, 1, |x, _u, out| out[0] = x[0]).with_state_gradient(|_x, _u, out| out[0] = 1.0),
        ),
        spec.prior().clone(),
        spec.policy().clone(),
        spec.input_matrix().clone(),
        spec.initial_state().to_vec(),
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    for scheme in [SdeScheme::EulerMaruyama, SdeScheme::Milstein] {
        let a = integrate_sde(spec, &grid, 50, 3, scheme, &IntegrationSettings::with_substeps(5)).unwrap();
        let b = integrate_sde(&generic, &grid, 50, 3, scheme, &IntegrationSettings::with_substeps(5)).unwrap();
        for j in 0..50 {
            for i in 0..grid.num_points() {
                assert_eq!(a.state(j, i)[0].to_bits(), b.state(j, i)[0].to_bits());
            }
        }
    }
}
