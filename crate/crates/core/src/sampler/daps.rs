use nalgebra::DVector;
use rand::RngCore;

use super::denoise::{denoise_ode, DenoiserConfig};
use super::langevin::{langevin_posterior, LangevinConfig, DIVERGENCE_LIMIT};
use super::trajectory::{SamplerTrajectory, TrajectoryStep};
use crate::error::{check_dim, invalid, DapsError, Result};
use crate::forward::{ForwardOperator, Measurement};
use crate::prior::{standard_normal, ScoreModel};
use crate::schedule::AnnealingPlan;

#[derive(Debug, Clone, PartialEq)]
pub struct DapsConfig {
    pub plan: AnnealingPlan,
    pub denoiser: DenoiserConfig,
    pub langevin: LangevinConfig,
}

impl DapsConfig {
    pub fn validate(&self) -> Result<()> {
        self.denoiser.validate()?;
        self.langevin.validate()
    }
}

/// Result of sampling `x_{0|y}` given `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDraw {
    pub x0_hat: DVector<f64>,
    pub x0_y: DVector<f64>,
}

/// Draws `x_{0|y} ~ p(x0 | x_t, y)` at one noise level.
pub trait PosteriorStep {
    fn draw(&self, x_t: &DVector<f64>, sigma_t: f64, rng: &mut dyn RngCore) -> Result<StepDraw>;
}

/// PF-ODE denoiser followed by Langevin dynamics around its output.
pub struct LangevinPosterior<'a> {
    pub model: &'a dyn ScoreModel,
    pub op: &'a ForwardOperator,
    pub meas: &'a Measurement,
    pub denoiser: DenoiserConfig,
    pub langevin: LangevinConfig,
}

impl PosteriorStep for LangevinPosterior<'_> {
    fn draw(&self, x_t: &DVector<f64>, sigma_t: f64, rng: &mut dyn RngCore) -> Result<StepDraw> {
        let x0_hat = denoise_ode(self.model, x_t, sigma_t, &self.denoiser)?;
        let r_t = self.langevin.rt_rule.radius(sigma_t);
        let x0_y = langevin_posterior(&x0_hat, r_t, self.op, self.meas, &self.langevin, rng)?;
        Ok(StepDraw { x0_hat, x0_y })
    }
}

/// One decoupled step: draw `x_{0|y}` at `sigma_t`, then re-noise it to
/// `sigma_next`. Returns the draw and `x_{t_next}`.
pub fn outer_step(
    inner: &dyn PosteriorStep,
    x_t: &DVector<f64>,
    sigma_t: f64,
    sigma_next: f64,
    rng: &mut dyn RngCore,
) -> Result<(StepDraw, DVector<f64>)> {
    if !(sigma_next >= 0.0) {
        return Err(invalid("sigma_next", "must be non-negative"));
    }
    let draw = inner.draw(x_t, sigma_t, rng)?;
    let mut next = draw.x0_y.clone();
    if sigma_next > 0.0 {
        next.axpy(sigma_next, &standard_normal(rng, next.len()), 1.0);
    }
    let norm = next.norm();
    if !(norm <= DIVERGENCE_LIMIT) {
        return Err(DapsError::Diverged {
            stage: "daps outer step",
            norm,
            limit: DIVERGENCE_LIMIT,
        });
    }
    Ok((draw, next))
}

/// Runs the annealing loop from `x_start` at `plan.grid()[0]`.
pub fn anneal(
    inner: &dyn PosteriorStep,
    plan: &AnnealingPlan,
    op: &ForwardOperator,
    meas: &Measurement,
    x_start: DVector<f64>,
    rng: &mut dyn RngCore,
) -> Result<(DVector<f64>, SamplerTrajectory)> {
    let grid = plan.grid();
    let mut x = x_start;
    let mut traj = SamplerTrajectory {
        steps: Vec::with_capacity(plan.n_anneal),
    };
    for k in 0..plan.n_anneal {
        let sigma = grid[k];
        let (draw, next) = outer_step(inner, &x, sigma, plan.next_sigma(k), rng)?;
        traj.steps.push(TrajectoryStep {
            sigma,
            residual_x0hat: op.residual(&draw.x0_hat, &meas.y)?.norm(),
            residual_x0y: op.residual(&draw.x0_y, &meas.y)?.norm(),
            x_t: std::mem::replace(&mut x, next),
            x0_hat: draw.x0_hat,
            x0_y: draw.x0_y,
        });
    }
    Ok((x, traj))
}

/// Decoupled annealing posterior sampling: starts from `N(0, σ_max² I)` and
/// alternates conditional draws of `x0` with re-noising down the plan.
pub fn daps_sample(
    model: &dyn ScoreModel,
    op: &ForwardOperator,
    meas: &Measurement,
    cfg: &DapsConfig,
    rng: &mut dyn RngCore,
) -> Result<(DVector<f64>, SamplerTrajectory)> {
    cfg.validate()?;
    check_dim(model.dim(), op.in_dim())?;
    check_dim(op.out_dim(), meas.y.len())?;
    let x_start = standard_normal(rng, model.dim()) * cfg.plan.sigma_max;
    let inner = LangevinPosterior {
        model,
        op,
        meas,
        denoiser: cfg.denoiser,
        langevin: cfg.langevin,
    };
    anneal(&inner, &cfg.plan, op, meas, x_start, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::synthetic_2d_mixture;
    use crate::rng::chain_rng;

    fn small_cfg() -> DapsConfig {
        DapsConfig {
            plan: AnnealingPlan::new(10.0, 0.1, 20).unwrap(),
            denoiser: DenoiserConfig::with_steps(3),
            langevin: LangevinConfig {
                n_steps: 20,
                eta: 1e-3,
                ..Default::default()
            },
        }
    }

    #[test]
    fn trajectory_shape_and_determinism() {
        let g = synthetic_2d_mixture();
        let op = ForwardOperator::two_bumps();
        let meas = Measurement::new(DVector::from_element(1, 1.0), 0.3, 0.3).unwrap();
        let cfg = small_cfg();
        let (a, ta) = daps_sample(&g, &op, &meas, &cfg, &mut chain_rng(3, 1)).unwrap();
        let (b, tb) = daps_sample(&g, &op, &meas, &cfg, &mut chain_rng(3, 1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(ta.len(), 20);
        assert_eq!(ta.steps[0].sigma, 10.0);
        assert!(ta.steps.iter().all(|s| s.residual_x0hat >= 0.0 && s.residual_x0y >= 0.0));
        // the terminal step returns the last Langevin output un-noised
        assert_eq!(a, ta.steps[19].x0_y);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = synthetic_2d_mixture();
        let op = ForwardOperator::identity(3).unwrap();
        let meas = Measurement::new(DVector::zeros(3), 0.1, 0.1).unwrap();
        assert!(daps_sample(&g, &op, &meas, &small_cfg(), &mut chain_rng(0, 0)).is_err());
    }
}
