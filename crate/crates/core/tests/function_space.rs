use episde::rng::derive_path_stream;
use episde::systems::{weight_space_gp_draw, BasisFunction, ParameterPrior};

fn draws(basis: &BasisFunction, prior: &ParameterPrior, probes: &[(Vec<f64>, Vec<f64>)], n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|j| {
            let f = weight_space_gp_draw(basis, prior, probes, &mut derive_path_stream(17, j as u64)).unwrap();
            [f[0][0], f[1][0]]
        })
        .collect()
}

fn covariance(xs: &[[f64; 2]]) -> [[f64; 2]; 2] {
    let n = xs.len() as f64;
    let m = [0, 1].map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n);
    let c = |i: usize, k: usize| xs.iter().map(|x| (x[i] - m[i]) * (x[k] - m[k])).sum::<f64>() / (n - 1.0);
    [[c(0, 0), c(0, 1)], [c(1, 0), c(1, 1)]]
}

#[test]
fn linear_state_covariance_follows_the_weight_space_law() {
    let probes = vec![(vec![1.0], vec![]), (vec![2.0], vec![])];
    let c = covariance(&draws(
        &BasisFunction::LinearState,
        &ParameterPrior::standard(1).unwrap(),
        &probes,
        100_000,
    ));
    let expected = [[1.0, 2.0], [2.0, 4.0]];
    for i in 0..2 {
        for k in 0..2 {
            assert!((c[i][k] - expected[i][k]).abs() < 0.05, "{c:?}");
        }
    }
}

#[test]
fn constant_basis_values_are_perfectly_correlated() {
    let probes = vec![(vec![-1.0], vec![]), (vec![3.0], vec![])];
    let c = covariance(&draws(
        &BasisFunction::Constant,
        &ParameterPrior::standard(1).unwrap(),
        &probes,
        100_000,
    ));
    let rho = c[0][1] / (c[0][0] * c[1][1]).sqrt();
    assert!((rho - 1.0).abs() < 0.01);
}

#[test]
fn near_degenerate_prior_returns_the_mean_function() {
    let prior = ParameterPrior::scalar(0.7, 1e-12).unwrap();
    let probes = vec![(vec![1.0], vec![]), (vec![-0.5], vec![])];
    for [a, b] in draws(&BasisFunction::LinearState, &prior, &probes, 1000) {
        assert!((a - 0.7).abs() < 1e-5 && (b + 0.35).abs() < 1e-5, "{a} {b}");
    }
}
