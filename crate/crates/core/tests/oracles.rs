//! Cross-checks against independent implementations: a direct SPS computation
//! built on nalgebra, and frozen chi-square values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use sps_core::numerics::{chi2_cdf, chi2_sf};
use sps_core::{
    chi2_quantile, compute_s_vectors, least_squares, rng, simulate_arx, ArxOrder, Dataset, ParamVector, SpsSetup,
};

/// `Y_{t-k}` with `t` 1-based and the dataset's initial conditions.
fn lagged(series: &[f64], init: &[f64], t: usize, k: usize) -> f64 {
    if t > k {
        series[t - k - 1]
    } else {
        init[k - t]
    }
}

fn regressor(y: &[f64], y_init: &[f64], u: &[f64], u_init: &[f64], order: ArxOrder, t: usize) -> DVector<f64> {
    let mut v = Vec::with_capacity(order.dim());
    v.extend((1..=order.na).map(|k| -lagged(y, y_init, t, k)));
    v.extend((1..=order.nb).map(|k| lagged(u, u_init, t, k)));
    DVector::from_vec(v)
}

/// Pseudoinverse square root through nalgebra's symmetric eigensolver.
fn inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let cutoff = 1e-12 * eig.eigenvalues.max().max(1.0);
    let w = eig
        .eigenvalues
        .map(|l| if l < cutoff { 0.0 } else { 1.0 / l.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&w) * eig.eigenvectors.transpose()
}

/// SPS statistics straight from the definitions: the perturbed output is
/// simulated from the candidate model driven by sign-flipped residuals.
fn oracle_s_vectors(theta: &ParamVector, ds: &Dataset, setup: &SpsSetup) -> Vec<DVector<f64>> {
    let order = theta.order();
    let n = ds.len();
    let th = DVector::from_column_slice(theta.as_slice());
    let phi: Vec<DVector<f64>> = (1..=n)
        .map(|t| regressor(&ds.y, &ds.y_init, &ds.u, &ds.u_init, order, t))
        .collect();
    let nhat: Vec<f64> = (0..n).map(|t| ds.y[t] - phi[t].dot(&th)).collect();

    let stat = |rows: &[DVector<f64>], e: &[f64]| {
        let d = order.dim();
        let mut r = DMatrix::zeros(d, d);
        let mut s = DVector::zeros(d);
        for (row, &et) in rows.iter().zip(e) {
            r += row * row.transpose();
            s += row * et;
        }
        inv_sqrt(&(r / n as f64)) * (s / n as f64)
    };

    let mut out = vec![stat(&phi, &nhat)];
    for i in 1..setup.m() {
        let alpha: Vec<f64> = setup.signs_row(i).iter().map(|&s| s as f64).collect();
        let mut ybar = vec![0.0; n];
        for t in 1..=n {
            let mut v = alpha[t - 1] * nhat[t - 1];
            for (k, &ak) in theta.a().iter().enumerate() {
                v -= ak * lagged(&ybar, &ds.y_init, t, k + 1);
            }
            for (k, &bk) in theta.b().iter().enumerate() {
                v += bk * lagged(&ds.u, &ds.u_init, t, k + 1);
            }
            ybar[t - 1] = v;
        }
        let rows: Vec<DVector<f64>> = (1..=n)
            .map(|t| regressor(&ybar, &ds.y_init, &ds.u, &ds.u_init, order, t))
            .collect();
        let e: Vec<f64> = alpha.iter().zip(&nhat).map(|(a, n)| a * n).collect();
        out.push(stat(&rows, &e));
    }
    out
}

fn random_case(seed: u64, na: usize, nb: usize, n: usize) -> (ParamVector, Dataset) {
    let mut r = rng::stream(seed);
    let order = ArxOrder::new(na, nb).unwrap();
    // small AR coefficients keep the candidate model stable
    let a: Vec<f64> = (0..na).map(|_| r.random_range(-0.4..0.4)).collect();
    let b: Vec<f64> = (0..nb).map(|_| r.random_range(-2.0..2.0)).collect();
    let theta = ParamVector::new(a, b).unwrap();
    assert_eq!(theta.order(), order);
    let u: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let noise: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..0.5)).collect();
    let y_init: Vec<f64> = (0..na).map(|_| r.random_range(-1.0..1.0)).collect();
    let u_init: Vec<f64> = (0..nb).map(|_| r.random_range(-1.0..1.0)).collect();
    let y = simulate_arx(&theta, &u, &noise, &y_init, &u_init).unwrap();
    (theta, Dataset::new(u, y, y_init, u_init).unwrap())
}

#[test]
fn s_vectors_match_direct_computation() {
    for (case, (na, nb)) in [(1, 1), (2, 2), (0, 1), (2, 1), (3, 3)].into_iter().enumerate() {
        let (theta_star, ds) = random_case(100 + case as u64, na, nb, 80);
        let setup = SpsSetup::generate(9, 1, ds.len(), 7 + case as u64).unwrap();
        let mut r = rng::stream(case as u64);
        for _ in 0..4 {
            let shifted: Vec<f64> = theta_star
                .as_slice()
                .iter()
                .map(|v| v + r.random_range(-0.1..0.1))
                .collect();
            let theta = ParamVector::from_slice(theta_star.order(), &shifted).unwrap();
            let ours = compute_s_vectors(&theta, &ds, &setup).unwrap();
            let oracle = oracle_s_vectors(&theta, &ds, &setup);
            for (s, o) in ours.iter().zip(&oracle) {
                for (x, y) in s.iter().zip(o.iter()) {
                    assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "order ({na},{nb}): {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn least_squares_matches_svd_solve() {
    for (case, (na, nb)) in [(1, 1), (2, 2), (3, 1)].into_iter().enumerate() {
        let (theta, ds) = random_case(200 + case as u64, na, nb, 60);
        let order = theta.order();
        let n = ds.len();
        let mut x = DMatrix::zeros(n, order.dim());
        for t in 1..=n {
            x.set_row(t - 1, &regressor(&ds.y, &ds.y_init, &ds.u, &ds.u_init, order, t).transpose());
        }
        let y = DVector::from_column_slice(&ds.y);
        let oracle = x.svd(true, true).solve(&y, 1e-14).unwrap();
        let (ours, report) = least_squares(&ds, order).unwrap();
        assert!(!report.degenerate);
        for (a, b) in ours.as_slice().iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

// Reference values from scipy.stats.chi2 (ppf, cdf, sf).
const CHI2_PPF: &[(f64, u32, f64)] = &[
    (0.95, 1, 3.841458820694124),
    (0.95, 2, 5.991464547107979),
    (0.95, 3, 7.814727903251179),
    (0.99, 4, 13.276704135987622),
    (0.5, 6, 5.348120627447118),
    (0.001, 2, 0.002001000667167068),
    (0.999, 10, 29.58829844507442),
    (0.9, 50, 63.167121005726315),
];

const CHI2_TAILS: &[(f64, u32, f64, f64)] = &[
    (3.0, 2, 0.7768698398515702, 0.22313016014842982),
    (10.0, 4, 0.9595723180054873, 0.04042768199451279),
    (0.5, 1, 0.5204998778130466, 0.47950012218695337),
    (25.0, 10, 0.9946544945128659, 0.005345505487134069),
    (60.0, 50, 0.8427579727616085, 0.1572420272383916),
];

#[test]
fn chi2_quantiles_match_reference() {
    for &(p, k, expected) in CHI2_PPF {
        let got = chi2_quantile(p, k).unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected.max(1.0), "p={p} k={k}: {got} vs {expected}");
    }
}

#[test]
fn chi2_tails_match_reference() {
    for &(x, k, cdf, sf) in CHI2_TAILS {
        assert!((chi2_cdf(x, k) - cdf).abs() < 1e-12, "cdf x={x} k={k}");
        assert!((chi2_sf(x, k) - sf).abs() <= 1e-10 * sf, "sf x={x} k={k}");
    }
}
