use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::wasserstein::PointCloud;
use crate::error::{check_dim, invalid, DapsError, Result};
use crate::forward::{ForwardOperator, Measurement};
use crate::latent::LinearCodec;
use crate::prior::{standard_normal, GaussianMixture, ScoreModel};
use crate::sampler::{PosteriorStep, StepDraw};

/// Axis-aligned box and resolution of a 2D density grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_range: (-1.0, 1.5),
            y_range: (-1.0, 1.5),
            resolution: 400,
        }
    }
}

/// Posterior `p(x0 | y)` tabulated at cell centres of a 2D grid; the density
/// is piecewise constant per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2d {
    pub spec: GridSpec,
    /// Row-major over (x index, y index), normalised so that
    /// `Σ density · cell_area = 1`.
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl Grid2d {
    pub fn new(prior: &dyn ScoreModel, op: &ForwardOperator, meas: &Measurement, spec: GridSpec) -> Result<Self> {
        check_dim(2, prior.dim())?;
        check_dim(2, op.in_dim())?;
        if spec.resolution < 2 {
            return Err(invalid("resolution", "need at least 2 cells per axis"));
        }
        if !(spec.x_range.1 > spec.x_range.0) || !(spec.y_range.1 > spec.y_range.0) {
            return Err(invalid("bounds", "ranges must be increasing"));
        }
        let n = spec.resolution;
        let mut logp = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let x = Self::center_of(&spec, i, j);
                logp.push(prior.log_density(&x, 0.0)? - op.fidelity(&x, meas)?);
            }
        }
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(invalid(
                "oracle",
                "posterior density vanishes on the whole grid (measurement inconsistent with bounds)",
            ));
        }
        let mut density: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let area = Self::cell_area(&spec);
        let total: f64 = density.iter().sum::<f64>() * area;
        density.iter_mut().for_each(|p| *p /= total);
        let mut acc = 0.0;
        let cdf = density
            .iter()
            .map(|p| {
                acc += p * area;
                acc
            })
            .collect();
        Ok(Self { spec, density, cdf })
    }

    fn cell_size(spec: &GridSpec) -> (f64, f64) {
        let n = spec.resolution as f64;
        (
            (spec.x_range.1 - spec.x_range.0) / n,
            (spec.y_range.1 - spec.y_range.0) / n,
        )
    }

    fn cell_area(spec: &GridSpec) -> f64 {
        let (hx, hy) = Self::cell_size(spec);
        hx * hy
    }

    fn center_of(spec: &GridSpec, i: usize, j: usize) -> DVector<f64> {
        let (hx, hy) = Self::cell_size(spec);
        DVector::from_vec(vec![
            spec.x_range.0 + (i as f64 + 0.5) * hx,
            spec.y_range.0 + (j as f64 + 0.5) * hy,
        ])
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `Σ density · cell_area`; 1 up to round-off.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * Self::cell_area(&self.spec)
    }

    /// Centre of the highest-density cell.
    pub fn mode(&self) -> DVector<f64> {
        let (k, _) = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best });
        let n = self.spec.resolution;
        Self::center_of(&self.spec, k / n, k % n)
    }

    /// Posterior mass of cells whose centre lies within `radius` of `point`.
    pub fn mass_within(&self, point: &DVector<f64>, radius: f64) -> f64 {
        let n = self.spec.resolution;
        let area = Self::cell_area(&self.spec);
        self.density
            .iter()
            .enumerate()
            .filter(|(k, _)| (Self::center_of(&self.spec, k / n, k % n) - point).norm() <= radius)
            .map(|(_, p)| p * area)
            .sum()
    }

    /// Inverse-CDF draw of a cell, uniform within the cell.
    pub fn sample_point(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let k = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let n = self.spec.resolution;
        let (hx, hy) = Self::cell_size(&self.spec);
        let (i, j) = (k / n, k % n);
        DVector::from_vec(vec![
            self.spec.x_range.0 + (i as f64 + rng.random::<f64>()) * hx,
            self.spec.y_range.0 + (j as f64 + rng.random::<f64>()) * hy,
        ])
    }
}

/// Ground-truth posterior used by metrics and acceptance checks.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorOracle {
    /// Closed-form posterior of a Gaussian or Gaussian-mixture prior under a
    /// linear operator with Gaussian noise.
    Conjugate { posterior: GaussianMixture },
    Grid2d(Grid2d),
}

impl PosteriorOracle {
    /// Conjugate posterior under the sampler's noise level `beta_model`.
    pub fn conjugate(prior: &GaussianMixture, op: &ForwardOperator, meas: &Measurement) -> Result<Self> {
        let a = dense_matrix(op)?;
        let posterior = prior.condition_linear(&a, &meas.y, meas.beta_model * meas.beta_model)?;
        Ok(PosteriorOracle::Conjugate { posterior })
    }

    pub fn grid2d(prior: &dyn ScoreModel, op: &ForwardOperator, meas: &Measurement, spec: GridSpec) -> Result<Self> {
        Ok(PosteriorOracle::Grid2d(Grid2d::new(prior, op, meas, spec)?))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PosteriorOracle::Conjugate { posterior } if posterior.n_components() == 1 => "conjugate_gaussian",
            PosteriorOracle::Conjugate { .. } => "conjugate_gmm",
            PosteriorOracle::Grid2d(_) => "grid2d",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PosteriorOracle::Conjugate { posterior } => posterior.dim(),
            PosteriorOracle::Grid2d(_) => 2,
        }
    }

    /// Highest-density point of `p(x0 | y)` (grid cell centre, or the mean of
    /// the heaviest conjugate component).
    pub fn mode(&self) -> DVector<f64> {
        match self {
            PosteriorOracle::Grid2d(g) => g.mode(),
            PosteriorOracle::Conjugate { posterior } => {
                let k = posterior
                    .weights()
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |b, (k, &w)| if w > b.1 { (k, w) } else { b })
                    .0;
                posterior.means()[k].clone()
            }
        }
    }

    /// `n` exact draws from `p(x_t | y)`: a posterior draw plus `N(0, σ_t² I)`.
    pub fn sample(&self, sigma_t: f64, rng: &mut dyn RngCore, n: usize) -> Result<PointCloud> {
        if !(sigma_t >= 0.0) {
            return Err(invalid("sigma_t", "must be non-negative"));
        }
        if n < 1 {
            return Err(invalid("n", "must be at least 1"));
        }
        let d = self.dim();
        let mut pts = match self {
            PosteriorOracle::Conjugate { posterior } => posterior.sample(rng, n),
            PosteriorOracle::Grid2d(g) => {
                let mut m = DMatrix::zeros(n, 2);
                for i in 0..n {
                    m.row_mut(i).copy_from(&g.sample_point(rng).transpose());
                }
                m
            }
        };
        if sigma_t > 0.0 {
            for i in 0..n {
                let z = standard_normal(rng, d) * sigma_t;
                for j in 0..d {
                    pts[(i, j)] += z[j];
                }
            }
        }
        PointCloud::uniform(pts)
    }
}

/// Matrix of a linear operator, column by column.
pub(crate) fn dense_matrix(op: &ForwardOperator) -> Result<DMatrix<f64>> {
    if !op.is_linear() {
        return Err(DapsError::InvalidParameter {
            name: "operator",
            reason: format!("conjugate oracle needs a linear operator, got {}", op.kind_name()),
        });
    }
    let d = op.in_dim();
    let mut a = DMatrix::zeros(op.out_dim(), d);
    for c in 0..d {
        let mut e = DVector::zeros(d);
        e[c] = 1.0;
        a.set_column(c, &op.apply(&e)?);
    }
    Ok(a)
}

fn mixture_posterior_mean(g: &GaussianMixture) -> DVector<f64> {
    g.mixture_mean()
}

/// Exact draw of `x0 ~ p(x0 | x_t, y)` for a conjugate posterior.
pub struct ExactConjugateStep<'a> {
    pub posterior: &'a GaussianMixture,
}

impl PosteriorStep for ExactConjugateStep<'_> {
    fn draw(&self, x_t: &DVector<f64>, sigma_t: f64, rng: &mut dyn RngCore) -> Result<StepDraw> {
        let d = self.posterior.dim();
        let cond = self
            .posterior
            .condition_linear(&DMatrix::identity(d, d), x_t, sigma_t * sigma_t)?;
        let x0_y = cond.sample(rng, 1).row(0).transpose();
        Ok(StepDraw {
            x0_hat: mixture_posterior_mean(&cond),
            x0_y,
        })
    }
}

/// Exact latent step: `x0 ~ p(x0 | z_t, y)` encoded to `E x0`.
pub struct ExactLatentStep<'a> {
    pub posterior: &'a GaussianMixture,
    pub codec: &'a LinearCodec,
}

impl PosteriorStep for ExactLatentStep<'_> {
    fn draw(&self, z_t: &DVector<f64>, sigma_t: f64, rng: &mut dyn RngCore) -> Result<StepDraw> {
        let cond = self
            .posterior
            .condition_linear(self.codec.encode_matrix(), z_t, sigma_t * sigma_t)?;
        let x0 = cond.sample(rng, 1).row(0).transpose();
        Ok(StepDraw {
            x0_hat: self.codec.encode(&mixture_posterior_mean(&cond)),
            x0_y: self.codec.encode(&x0),
        })
    }
}
