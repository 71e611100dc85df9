use nalgebra::DVector;
use rand::RngCore;

use crate::error::{invalid, DapsError, Result};
use crate::forward::{ForwardOperator, Measurement};
use crate::prior::standard_normal;

/// Iterates whose norm exceeds this abort the chain.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Radius `r_t` of the Gaussian approximation `p(x0 | x_t) ≈ N(x̂0, r_t² I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RtRule {
    /// `r_t = σ_t`.
    Sigma,
    /// `r_t = c` at every level.
    Constant(f64),
}

impl RtRule {
    pub fn radius(&self, sigma_t: f64) -> f64 {
        match *self {
            RtRule::Sigma => sigma_t,
            RtRule::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinConfig {
    pub n_steps: usize,
    pub eta: f64,
    pub rt_rule: RtRule,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            n_steps: 100,
            eta: 1e-4,
            rt_rule: RtRule::Sigma,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 {
            return Err(invalid("langevin_steps", "must be at least 1"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(invalid("eta", format!("must be positive, got {}", self.eta)));
        }
        if let RtRule::Constant(c) = self.rt_rule {
            if !(c > 0.0) {
                return Err(invalid("rt_constant", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Unadjusted Langevin dynamics on
/// `‖x - center‖² / 2r² + f(x)`, started at `center`, where `fid_grad`
/// returns `∇f`.
pub fn langevin<F>(
    center: &DVector<f64>,
    r_t: f64,
    n_steps: usize,
    eta: f64,
    mut fid_grad: F,
    rng: &mut dyn RngCore,
) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(r_t > 0.0) {
        return Err(invalid("r_t", format!("must be positive, got {r_t}")));
    }
    let inv_r2 = 1.0 / (r_t * r_t);
    let noise_scale = (2.0 * eta).sqrt();
    let mut x = center.clone();
    for _ in 0..n_steps {
        let mut grad = fid_grad(&x)?;
        grad.axpy(inv_r2, &x, 1.0);
        grad.axpy(-inv_r2, center, 1.0);
        x.axpy(-eta, &grad, 1.0);
        x.axpy(noise_scale, &standard_normal(rng, x.len()), 1.0);
        let norm = x.norm();
        if !(norm <= DIVERGENCE_LIMIT) {
            return Err(DapsError::Diverged {
                stage: "langevin",
                norm,
                limit: DIVERGENCE_LIMIT,
            });
        }
    }
    Ok(x)
}

/// Approximate draw from `p(x0 | x_t, y) ∝ N(x0; x̂0, r_t² I) p(y | x0)`.
pub fn langevin_posterior(
    x0_hat: &DVector<f64>,
    r_t: f64,
    op: &ForwardOperator,
    meas: &Measurement,
    cfg: &LangevinConfig,
    rng: &mut dyn RngCore,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    if !(meas.beta_model > 0.0) {
        return Err(invalid("beta_model", "must be positive"));
    }
    langevin(x0_hat, r_t, cfg.n_steps, cfg.eta, |x| op.fidelity_grad(x, meas), rng)
}
