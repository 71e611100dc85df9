use nalgebra::DVector;

use crate::error::{invalid, DapsError, Result};
use crate::prior::ScoreModel;
use crate::schedule::{ode_grid, DEFAULT_ODE_T_MIN, DEFAULT_RHO};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiserConfig {
    pub n_ode: usize,
    pub t_min: f64,
    pub rho: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            n_ode: 5,
            t_min: DEFAULT_ODE_T_MIN,
            rho: DEFAULT_RHO,
        }
    }
}

impl DenoiserConfig {
    pub fn with_steps(n_ode: usize) -> Self {
        Self {
            n_ode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ode < 1 {
            return Err(invalid("n_ode", "must be at least 1"));
        }
        if !(self.t_min > 0.0) {
            return Err(invalid("t_min", "must be positive"));
        }
        if !(self.rho > 0.0) {
            return Err(invalid("rho", "must be positive"));
        }
        Ok(())
    }
}

/// Clean estimate `x̂0(x_t)`: Euler integration of the probability-flow ODE
/// `dx/dt = -t ∇ log p(x; t)` from `t = sigma_t` to 0 with `n_ode` score
/// evaluations.
pub fn denoise_ode(
    model: &dyn ScoreModel,
    x_t: &DVector<f64>,
    sigma_t: f64,
    cfg: &DenoiserConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    let grid = ode_grid(sigma_t, cfg.t_min, cfg.n_ode, cfg.rho)?;
    let mut x = x_t.clone();
    for w in grid.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let s = model.score(&x, t)?;
        x.axpy((t - t_next) * t, &s, 1.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DapsError::NonFinite {
                stage: "denoise_ode",
                sigma: t,
            });
        }
    }
    Ok(x)
}
