use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::langevin::DIVERGENCE_LIMIT;
use super::trajectory::{SamplerTrajectory, TrajectoryStep};
use crate::error::{check_dim, invalid, DapsError, Result};
use crate::forward::{ForwardOperator, Measurement};
use crate::prior::{standard_normal, tweedie, tweedie_jacobian, ScoreModel};
use crate::schedule::AnnealingPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpsVariant {
    /// Euler–Maruyama on the reverse SDE.
    Sde,
    /// Euler on the probability-flow ODE.
    Ode,
}

/// How the Jacobian of the Tweedie mean is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradMode {
    AnalyticJacobian,
    /// Central differences with the given step.
    FiniteDifference(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpsConfig {
    /// Discretisation grid shared with the annealing sampler.
    pub plan: AnnealingPlan,
    pub zeta: f64,
    pub variant: DpsVariant,
    pub grad_mode: GradMode,
}

impl DpsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta >= 0.0) || !self.zeta.is_finite() {
            return Err(invalid("zeta", format!("must be non-negative, got {}", self.zeta)));
        }
        if let GradMode::FiniteDifference(h) = self.grad_mode {
            if !(h > 0.0) {
                return Err(invalid("fd_step", "must be positive"));
            }
        }
        Ok(())
    }
}

fn jacobian(model: &dyn ScoreModel, x: &DVector<f64>, sigma: f64, mode: GradMode) -> Result<DMatrix<f64>> {
    match mode {
        GradMode::AnalyticJacobian => tweedie_jacobian(model, x, sigma),
        GradMode::FiniteDifference(h) => {
            let d = x.len();
            let mut j = DMatrix::zeros(d, d);
            for c in 0..d {
                let mut p = x.clone();
                let mut m = x.clone();
                p[c] += h;
                m[c] -= h;
                let col = (tweedie(model, &p, sigma)? - tweedie(model, &m, sigma)?) / (2.0 * h);
                j.set_column(c, &col);
            }
            Ok(j)
        }
    }
}

/// Tweedie estimate `x̂0(x_t)`, its residual norm `‖A(x̂0) - y‖` and the
/// gradient `∇_{x_t} ‖y - A(x̂0(x_t))‖` (zero when the residual vanishes).
pub fn dps_guidance(
    model: &dyn ScoreModel,
    op: &ForwardOperator,
    meas: &Measurement,
    x_t: &DVector<f64>,
    sigma: f64,
    mode: GradMode,
) -> Result<(DVector<f64>, f64, DVector<f64>)> {
    let x0_hat = tweedie(model, x_t, sigma)?;
    let r = op.residual(&x0_hat, &meas.y)?;
    let norm = r.norm();
    if norm == 0.0 {
        return Ok((x0_hat, 0.0, DVector::zeros(x_t.len())));
    }
    let g0 = op.vjp(&x0_hat, &r)? / norm;
    let j = jacobian(model, x_t, sigma, mode)?;
    Ok((x0_hat, norm, j.transpose() * g0))
}

/// Diffusion posterior sampling baseline: the unconditional reverse process on
/// the plan's grid plus the step `-ζ_i ∇‖y - A(x̂0)‖` with
/// `ζ_i = ζ / ‖y - A(x̂0)‖`.
pub fn dps_sample(
    model: &dyn ScoreModel,
    op: &ForwardOperator,
    meas: &Measurement,
    cfg: &DpsConfig,
    rng: &mut dyn RngCore,
) -> Result<(DVector<f64>, SamplerTrajectory)> {
    cfg.validate()?;
    check_dim(model.dim(), op.in_dim())?;
    check_dim(op.out_dim(), meas.y.len())?;
    let d = model.dim();
    let grid = cfg.plan.grid();
    let mut x = standard_normal(rng, d) * cfg.plan.sigma_max;
    let mut traj = SamplerTrajectory {
        steps: Vec::with_capacity(cfg.plan.n_anneal),
    };
    for k in 0..cfg.plan.n_anneal {
        let (sigma, sigma_next) = (grid[k], grid[k + 1]);
        let (x0_hat, res, guide) = if cfg.zeta > 0.0 {
            dps_guidance(model, op, meas, &x, sigma, cfg.grad_mode)?
        } else {
            let x0_hat = tweedie(model, &x, sigma)?;
            let res = op.residual(&x0_hat, &meas.y)?.norm();
            (x0_hat, res, DVector::zeros(d))
        };
        let score = model.score(&x, sigma)?;
        let mut next = x.clone();
        match cfg.variant {
            DpsVariant::Sde => {
                let dvar = sigma * sigma - sigma_next * sigma_next;
                next.axpy(dvar, &score, 1.0);
                next.axpy(dvar.sqrt(), &standard_normal(rng, d), 1.0);
            }
            DpsVariant::Ode => next.axpy((sigma - sigma_next) * sigma, &score, 1.0),
        }
        if res > 0.0 && cfg.zeta > 0.0 {
            next.axpy(-cfg.zeta / res, &guide, 1.0);
        }
        let norm = next.norm();
        if !(norm <= DIVERGENCE_LIMIT) {
            return Err(DapsError::Diverged {
                stage: "dps",
                norm,
                limit: DIVERGENCE_LIMIT,
            });
        }
        traj.steps.push(TrajectoryStep {
            sigma,
            x_t: std::mem::replace(&mut x, next),
            x0_y: x0_hat.clone(),
            x0_hat,
            residual_x0hat: res,
            residual_x0y: res,
        });
    }
    Ok((x, traj))
}
