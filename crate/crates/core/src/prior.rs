//! Priors with exact noisy scores.
//!
//! Every prior here is a Gaussian mixture in disguise, so the density of the
//! σ-smoothed distribution `p(x; σ)` (the prior convolved with `N(0, σ² I)`)
//! is available in closed form together with its gradient and Hessian.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{check_dim, invalid, DapsError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Responsibilities below this are treated as exactly zero.
pub const RESPONSIBILITY_FLOOR: f64 = 1e-300;

/// A prior whose σ-smoothed log-density is known exactly.
pub trait ScoreModel: Send + Sync {
    fn dim(&self) -> usize;

    /// `log p(x; σ)`.
    fn log_density(&self, x: &DVector<f64>, sigma: f64) -> Result<f64>;

    /// `∇x log p(x; σ)`.
    fn score(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>>;

    /// `∇x² log p(x; σ)`, used for the exact Jacobian of the Tweedie mean.
    fn score_jacobian(&self, x: &DVector<f64>, sigma: f64) -> Result<DMatrix<f64>>;

    /// `n` i.i.d. draws from the clean prior, one per row.
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> DMatrix<f64>;
}

/// A point queried at a noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyQuery {
    pub x: DVector<f64>,
    pub sigma: f64,
}

impl NoisyQuery {
    pub fn new(x: DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { x, sigma })
    }
}

pub fn noisy_log_density(model: &dyn ScoreModel, q: &NoisyQuery) -> Result<f64> {
    model.log_density(&q.x, q.sigma)
}

pub fn score(model: &dyn ScoreModel, q: &NoisyQuery) -> Result<DVector<f64>> {
    model.score(&q.x, q.sigma)
}

/// Posterior mean `E[x0 | x_t] = x_t + σ² ∇ log p(x_t; σ)`.
pub fn tweedie_mean(model: &dyn ScoreModel, q: &NoisyQuery) -> Result<DVector<f64>> {
    tweedie(model, &q.x, q.sigma)
}

pub(crate) fn tweedie(model: &dyn ScoreModel, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma", "Tweedie mean needs sigma > 0"));
    }
    let s = model.score(x, sigma)?;
    Ok(x + s * (sigma * sigma))
}

/// Jacobian of the Tweedie mean with respect to `x_t`: `I + σ² ∇² log p`.
pub fn tweedie_jacobian(model: &dyn ScoreModel, x: &DVector<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma", "Tweedie mean needs sigma > 0"));
    }
    let h = model.score_jacobian(x, sigma)?;
    Ok(DMatrix::identity(x.len(), x.len()) + h * (sigma * sigma))
}

pub fn sample_prior(model: &dyn ScoreModel, rng: &mut dyn RngCore, n: usize) -> Result<DMatrix<f64>> {
    if n < 1 {
        return Err(invalid("n", "must be at least 1"));
    }
    Ok(model.sample(rng, n))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(d) => d.len(),
            Covariance::Full(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Diagonal(d) => DMatrix::from_diagonal(d),
            Covariance::Full(m) => m.clone(),
        }
    }

    fn inflate(&self, var: f64) -> Covariance {
        match self {
            Covariance::Diagonal(d) => Covariance::Diagonal(d.add_scalar(var)),
            Covariance::Full(m) => {
                let n = m.nrows();
                Covariance::Full(m + DMatrix::identity(n, n) * var)
            }
        }
    }
}

/// Log-density, score and (optionally) precision of one Gaussian at `x`.
struct ComponentEval {
    log_pdf: f64,
    score: DVector<f64>,
    precision: Option<DMatrix<f64>>,
}

fn eval_gaussian(
    mean: &DVector<f64>,
    cov: &Covariance,
    x: &DVector<f64>,
    want_precision: bool,
) -> Result<ComponentEval> {
    let d = mean.len() as f64;
    let diff = x - mean;
    match cov {
        Covariance::Diagonal(v) => {
            if v.iter().any(|&e| !(e > 0.0)) {
                return Err(DapsError::NotPositiveDefinite(format!(
                    "diagonal covariance has non-positive entry: {v:?}"
                )));
            }
            let score = -diff.component_div(v);
            let quad = -diff.dot(&score);
            let logdet: f64 = v.iter().map(|e| e.ln()).sum();
            let precision = want_precision.then(|| DMatrix::from_diagonal(&v.map(|e| 1.0 / e)));
            Ok(ComponentEval {
                log_pdf: -0.5 * (d * LN_2PI + logdet + quad),
                score,
                precision,
            })
        }
        Covariance::Full(m) => {
            let chol = m.clone().cholesky().ok_or_else(|| {
                DapsError::NotPositiveDefinite("Cholesky factorisation failed".into())
            })?;
            let solved = chol.solve(&diff);
            let quad = diff.dot(&solved);
            let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|e| e.ln()).sum::<f64>();
            let precision = want_precision.then(|| chol.inverse());
            Ok(ComponentEval {
                log_pdf: -0.5 * (d * LN_2PI + logdet + quad),
                score: -solved,
                precision,
            })
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// Normalised responsibilities from unnormalised log weights; tiny entries are
/// flushed to zero.
fn responsibilities(log_terms: &[f64]) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(log_terms);
    let r = log_terms
        .iter()
        .map(|a| {
            let p = (a - lse).exp();
            if p < RESPONSIBILITY_FLOOR {
                0.0
            } else {
                p
            }
        })
        .collect();
    (lse, r)
}

/// Finite mixture of Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<Covariance>,
    log_weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<Covariance>,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("weights", "mixture needs at least one component"));
        }
        if means.len() != weights.len() || covariances.len() != weights.len() {
            return Err(invalid(
                "means",
                format!(
                    "{} weights, {} means, {} covariances",
                    weights.len(),
                    means.len(),
                    covariances.len()
                ),
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(invalid("weights", "weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("weights sum to {total}, not 1")));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(invalid("means", "dimension must be positive"));
        }
        for (m, c) in means.iter().zip(&covariances) {
            check_dim(d, m.len())?;
            check_dim(d, c.dim())?;
            if let Covariance::Full(mat) = c {
                check_dim(d, mat.ncols())?;
                if (mat - mat.transpose()).amax() > 1e-12 * mat.amax().max(1.0) {
                    return Err(DapsError::NotPositiveDefinite("covariance not symmetric".into()));
                }
            }
            // SPD check at sigma = 0
            eval_gaussian(m, c, m, false)?;
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            means,
            covariances,
            log_weights,
        })
    }

    /// Single Gaussian `N(mean, cov)`.
    pub fn single(mean: DVector<f64>, cov: Covariance) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![cov])
    }

    /// Isotropic Gaussian `N(mean, s² I)`.
    pub fn isotropic(mean: DVector<f64>, s: f64) -> Result<Self> {
        let d = mean.len();
        Self::single(mean, Covariance::Diagonal(DVector::from_element(d, s * s)))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Covariance] {
        &self.covariances
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Mean of the mixture.
    pub fn mixture_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (w, mu) in self.weights.iter().zip(&self.means) {
            m.axpy(*w, mu, 1.0);
        }
        m
    }

    /// Covariance of the mixture (law of total covariance).
    pub fn mixture_covariance(&self) -> DMatrix<f64> {
        let m = self.mixture_mean();
        let d = self.dim();
        let mut c = DMatrix::zeros(d, d);
        for ((w, mu), cov) in self.weights.iter().zip(&self.means).zip(&self.covariances) {
            let diff = mu - &m;
            c += (cov.to_dense() + &diff * diff.transpose()) * *w;
        }
        c
    }

    /// Conditions the mixture on a linear-Gaussian observation
    /// `obs = M x + ν`, `ν ~ N(0, noise_var I)`: every component is updated in
    /// closed form and reweighted by its evidence.
    pub fn condition_linear(&self, map: &DMatrix<f64>, obs: &DVector<f64>, noise_var: f64) -> Result<Self> {
        check_dim(self.dim(), map.ncols())?;
        check_dim(map.nrows(), obs.len())?;
        if !(noise_var > 0.0) {
            return Err(invalid("noise_var", "must be positive"));
        }
        let k = map.nrows();
        let mut means = Vec::with_capacity(self.weights.len());
        let mut covs = Vec::with_capacity(self.weights.len());
        let mut log_terms = Vec::with_capacity(self.weights.len());
        for ((lw, mu), cov) in self.log_weights.iter().zip(&self.means).zip(&self.covariances) {
            let sigma = cov.to_dense();
            // gain form: K = Σ Mᵀ (M Σ Mᵀ + s I)^{-1}
            let s_mat = map * &sigma * map.transpose() + DMatrix::identity(k, k) * noise_var;
            let s_mat = (&s_mat + s_mat.transpose()) * 0.5;
            let chol = s_mat.clone().cholesky().ok_or_else(|| {
                DapsError::NotPositiveDefinite("evidence covariance".into())
            })?;
            let innov = obs - map * mu;
            let sm = &sigma * map.transpose();
            let gain = chol.solve(&sm.transpose()).transpose();
            let mean = mu + &gain * &innov;
            let post = &sigma - &gain * sm.transpose();
            let post = (&post + post.transpose()) * 0.5;
            let ev = eval_gaussian(&DVector::zeros(k), &Covariance::Full(s_mat), &innov, false)?;
            log_terms.push(lw + ev.log_pdf);
            means.push(mean);
            covs.push(Covariance::Full(post));
        }
        let (_, weights) = responsibilities(&log_terms);
        let log_weights = weights.iter().map(|w: &f64| w.ln()).collect();
        Ok(Self {
            weights,
            means,
            covariances: covs,
            log_weights,
        })
    }

    /// The mixture convolved with `N(0, σ² I)`.
    pub fn smoothed(&self, sigma: f64) -> Result<Self> {
        let covs = self
            .covariances
            .iter()
            .map(|c| c.inflate(sigma * sigma))
            .collect();
        Self::new(self.weights.clone(), self.means.clone(), covs)
    }

    /// Image of the mixture under the linear map `x ↦ E x`.
    pub fn pushforward(&self, map: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.dim(), map.ncols())?;
        let means = self.means.iter().map(|m| map * m).collect();
        let covs = self
            .covariances
            .iter()
            .map(|c| {
                let p = map * c.to_dense() * map.transpose();
                Covariance::Full((&p + p.transpose()) * 0.5)
            })
            .collect();
        // a rank-deficient image is only usable at sigma > 0, so skip the
        // sigma = 0 definiteness check here
        Ok(Self {
            weights: self.weights.clone(),
            means,
            covariances: covs,
            log_weights: self.log_weights.clone(),
        })
    }

    /// Per-component evaluations at `(x, σ)` plus log-density and
    /// responsibilities.
    fn evaluate(
        &self,
        x: &DVector<f64>,
        sigma: f64,
        want_precision: bool,
    ) -> Result<(f64, Vec<f64>, Vec<ComponentEval>)> {
        check_dim(self.dim(), x.len())?;
        let var = sigma * sigma;
        let mut evals = Vec::with_capacity(self.weights.len());
        let mut log_terms = Vec::with_capacity(self.weights.len());
        for ((m, c), lw) in self.means.iter().zip(&self.covariances).zip(&self.log_weights) {
            let e = if var == 0.0 {
                eval_gaussian(m, c, x, want_precision)?
            } else {
                eval_gaussian(m, &c.inflate(var), x, want_precision)?
            };
            log_terms.push(lw + e.log_pdf);
            evals.push(e);
        }
        let (lse, r) = responsibilities(&log_terms);
        Ok((lse, r, evals))
    }
}

impl ScoreModel for GaussianMixture {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_density(&self, x: &DVector<f64>, sigma: f64) -> Result<f64> {
        Ok(self.evaluate(x, sigma, false)?.0)
    }

    fn score(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        let (_, r, evals) = self.evaluate(x, sigma, false)?;
        let mut s = DVector::zeros(x.len());
        for (rj, e) in r.iter().zip(&evals) {
            if *rj > 0.0 {
                s.axpy(*rj, &e.score, 1.0);
            }
        }
        Ok(s)
    }

    fn score_jacobian(&self, x: &DVector<f64>, sigma: f64) -> Result<DMatrix<f64>> {
        let (_, r, evals) = self.evaluate(x, sigma, true)?;
        let d = x.len();
        let mut s = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (rj, e) in r.iter().zip(&evals) {
            if *rj > 0.0 {
                s.axpy(*rj, &e.score, 1.0);
                let prec = e.precision.as_ref().expect("precision requested");
                h += (&e.score * e.score.transpose() - prec) * *rj;
            }
        }
        Ok(h - &s * s.transpose())
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> DMatrix<f64> {
        let d = self.dim();
        let factors: Vec<DMatrix<f64>> = self
            .covariances
            .iter()
            .map(|c| match c {
                Covariance::Diagonal(v) => DMatrix::from_diagonal(&v.map(f64::sqrt)),
                Covariance::Full(m) => m
                    .clone()
                    .cholesky()
                    .expect("validated at construction")
                    .l(),
            })
            .collect();
        let mut out = DMatrix::zeros(n, d);
        for i in 0..n {
            let j = pick_component(&self.weights, rng.random::<f64>());
            let z = standard_normal(rng, d);
            let x = &self.means[j] + &factors[j] * z;
            out.row_mut(i).copy_from(&x.transpose());
        }
        out
    }
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub(crate) fn standard_normal(rng: &mut dyn RngCore, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Equal-weight Gaussian kernel mixture over a point dataset:
/// `p(x; σ) = (1/n) Σ_i N(x; x_i, σ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalScoreModel {
    dim: usize,
    /// Row-major `n × dim`.
    points: Vec<f64>,
}

impl EmpiricalScoreModel {
    pub fn new(dataset: &DMatrix<f64>) -> Result<Self> {
        if dataset.nrows() < 1 || dataset.ncols() < 1 {
            return Err(invalid("dataset", "needs at least one point of positive dimension"));
        }
        if dataset.iter().any(|v| !v.is_finite()) {
            return Err(invalid("dataset", "contains non-finite values"));
        }
        let dim = dataset.ncols();
        let mut points = Vec::with_capacity(dataset.len());
        for row in dataset.row_iter() {
            points.extend(row.iter());
        }
        Ok(Self { dim, points })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dataset(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.points)
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Log kernel terms `-‖x - x_i‖² / 2σ²` (constants dropped) and the
    /// log-normaliser shared by all of them.
    fn log_terms(&self, x: &DVector<f64>, sigma: f64) -> Result<(Vec<f64>, f64)> {
        check_dim(self.dim, x.len())?;
        if !(sigma > 0.0) {
            return Err(DapsError::NotPositiveDefinite(
                "empirical kernel mixture is degenerate at sigma = 0".into(),
            ));
        }
        let inv = 0.5 / (sigma * sigma);
        let terms = (0..self.len())
            .map(|i| {
                let sq: f64 = self
                    .point(i)
                    .iter()
                    .zip(x.iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum();
                -sq * inv
            })
            .collect();
        let d = self.dim as f64;
        let log_norm = -(self.len() as f64).ln() - 0.5 * d * (LN_2PI + 2.0 * sigma.ln());
        Ok((terms, log_norm))
    }
}

impl ScoreModel for EmpiricalScoreModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &DVector<f64>, sigma: f64) -> Result<f64> {
        let (terms, log_norm) = self.log_terms(x, sigma)?;
        Ok(log_sum_exp(&terms) + log_norm)
    }

    fn score(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        let (terms, _) = self.log_terms(x, sigma)?;
        let (_, r) = responsibilities(&terms);
        let mut mean = DVector::zeros(self.dim);
        for (i, ri) in r.iter().enumerate() {
            if *ri > 0.0 {
                for (m, p) in mean.iter_mut().zip(self.point(i)) {
                    *m += ri * p;
                }
            }
        }
        Ok((mean - x) / (sigma * sigma))
    }

    fn score_jacobian(&self, x: &DVector<f64>, sigma: f64) -> Result<DMatrix<f64>> {
        let (terms, _) = self.log_terms(x, sigma)?;
        let (_, r) = responsibilities(&terms);
        let d = self.dim;
        let mut mean = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        for (i, ri) in r.iter().enumerate() {
            if *ri > 0.0 {
                let diff = DVector::from_column_slice(self.point(i)) - x;
                mean.axpy(*ri, &diff, 1.0);
                second += &diff * diff.transpose() * *ri;
            }
        }
        let var = sigma * sigma;
        let cov = second - &mean * mean.transpose();
        Ok(cov / (var * var) - DMatrix::identity(d, d) / var)
    }

    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, self.dim);
        for i in 0..n {
            let k = rng.random_range(0..self.len());
            for (j, v) in self.point(k).iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        out
    }
}

/// Prior selected by configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Gmm(GaussianMixture),
    Empirical(EmpiricalScoreModel),
}

impl Prior {
    pub fn as_model(&self) -> &dyn ScoreModel {
        match self {
            Prior::Gmm(g) => g,
            Prior::Empirical(e) => e,
        }
    }
}

impl ScoreModel for Prior {
    fn dim(&self) -> usize {
        self.as_model().dim()
    }
    fn log_density(&self, x: &DVector<f64>, sigma: f64) -> Result<f64> {
        self.as_model().log_density(x, sigma)
    }
    fn score(&self, x: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
        self.as_model().score(x, sigma)
    }
    fn score_jacobian(&self, x: &DVector<f64>, sigma: f64) -> Result<DMatrix<f64>> {
        self.as_model().score_jacobian(x, sigma)
    }
    fn sample(&self, rng: &mut dyn RngCore, n: usize) -> DMatrix<f64> {
        self.as_model().sample(rng, n)
    }
}

/// The two-component 2D mixture used by the synthetic study.
pub fn synthetic_2d_mixture() -> GaussianMixture {
    let cov = || Covariance::Diagonal(DVector::from_vec(vec![0.01, 0.04]));
    GaussianMixture::new(
        vec![0.5, 0.5],
        vec![
            DVector::from_vec(vec![-0.3, -0.4]),
            DVector::from_vec(vec![0.6, 0.5]),
        ],
        vec![cov(), cov()],
    )
    .expect("valid constants")
}
