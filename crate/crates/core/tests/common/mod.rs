#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use daps::prior::{Covariance, GaussianMixture, ScoreModel};
use daps::rng::ChainRng;

pub fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn uniform_vec(rng: &mut ChainRng, d: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(lo..hi))
}

/// Central differences of a scalar function.
pub fn fd_grad(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let (mut p, mut m) = (x.clone(), x.clone());
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

pub fn row_mean(m: &DMatrix<f64>) -> DVector<f64> {
    m.row_mean().transpose()
}

/// Unbiased sample covariance of the rows.
pub fn row_cov(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mu = m.row_mean();
    let mut c = m.clone();
    for mut r in c.row_iter_mut() {
        r -= &mu;
    }
    c.transpose() * &c / (m.nrows() - 1) as f64
}

pub fn stack(rows: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Largest standardised deviation of the sample mean from `mu`, using the
/// analytic covariance `cov` for the standard errors.
pub fn max_mean_z(samples: &DMatrix<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = samples.nrows() as f64;
    let m = row_mean(samples);
    (0..mu.len())
        .map(|j| (m[j] - mu[j]).abs() / (cov[(j, j)] / n).sqrt())
        .fold(0.0, f64::max)
}

/// Largest standardised deviation of the sample covariance entries, with the
/// Gaussian fourth-moment standard error `sqrt((Σ_ij² + Σ_ii Σ_jj) / n)`.
pub fn max_cov_z(samples: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = samples.nrows() as f64;
    let c = row_cov(samples);
    let d = cov.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let se = ((cov[(i, j)].powi(2) + cov[(i, i)] * cov[(j, j)]) / n).sqrt();
            worst = worst.max((c[(i, j)] - cov[(i, j)]).abs() / se);
        }
    }
    worst
}

/// Random GMM with full SPD covariances.
pub fn random_gmm(rng: &mut ChainRng, d: usize, k: usize) -> GaussianMixture {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..k).map(|_| uniform_vec(rng, d, -1.0, 1.0)).collect();
    let covs = (0..k)
        .map(|_| {
            let l = DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.4..0.4));
            Covariance::Full(&l * l.transpose() + DMatrix::identity(d, d) * 0.05)
        })
        .collect();
    GaussianMixture::new(weights, means, covs).unwrap()
}

pub fn score_fd_error(model: &dyn ScoreModel, x: &DVector<f64>, sigma: f64, h: f64) -> f64 {
    let fd = fd_grad(|p| model.log_density(p, sigma).unwrap(), x, h);
    (model.score(x, sigma).unwrap() - fd).amax()
}
