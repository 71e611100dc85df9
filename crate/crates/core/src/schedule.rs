//! Noise-level grids for the probability-flow ODE solver and the outer
//! annealing loop.

use crate::error::{invalid, Result};

pub const DEFAULT_RHO: f64 = 7.0;
pub const DEFAULT_ODE_T_MIN: f64 = 0.02;
pub const DEFAULT_SIGMA_MIN: f64 = 0.1;

/// Strictly decreasing noise levels interpolated polynomially between
/// `t_max` and `t_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialGrid {
    pub t_max: f64,
    pub t_min: f64,
    pub rho: f64,
    nodes: Vec<f64>,
}

impl PolynomialGrid {
    pub fn new(t_max: f64, t_min: f64, n_steps: usize, rho: f64) -> Result<Self> {
        let nodes = polynomial_grid(t_max, t_min, n_steps, rho)?;
        Ok(Self {
            t_max,
            t_min,
            rho,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `t_i = (t_max^{1/rho} + i/(n-1) (t_min^{1/rho} - t_max^{1/rho}))^rho` for
/// `i = 0..n`.
pub fn polynomial_grid(t_max: f64, t_min: f64, n: usize, rho: f64) -> Result<Vec<f64>> {
    if !(t_min > 0.0) || !t_min.is_finite() {
        return Err(invalid("t_min", format!("must be positive, got {t_min}")));
    }
    if !(t_max > t_min) || !t_max.is_finite() {
        return Err(invalid(
            "t_max",
            format!("must exceed t_min = {t_min}, got {t_max}"),
        ));
    }
    if n < 2 {
        return Err(invalid("n", format!("need at least 2 nodes, got {n}")));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid("rho", format!("must be positive, got {rho}")));
    }
    let inv = 1.0 / rho;
    let hi = t_max.powf(inv);
    let lo = t_min.powf(inv);
    let last = (n - 1) as f64;
    let mut out: Vec<f64> = (0..n)
        .map(|i| (hi + (i as f64 / last) * (lo - hi)).powf(rho))
        .collect();
    // pin the endpoints against powf round-off
    out[0] = t_max;
    out[n - 1] = t_min;
    Ok(out)
}

/// How the radius `r_t` is chosen on the final outer iteration, whose target
/// noise level is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminalRule {
    /// Append an exact zero so the last Langevin output is returned un-noised.
    #[default]
    TerminalZero,
    /// Stop at `sigma_min` and re-noise the last Langevin output at
    /// `sigma_min`; the returned sample is the final `x_{t}` at `sigma_min`.
    StopAtSigmaMin,
}

/// Outer annealing grid: `n_anneal` polynomial nodes from `sigma_max` to
/// `sigma_min` (rho = 7) followed by a terminal exact zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingPlan {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub n_anneal: usize,
    pub terminal: TerminalRule,
    grid: Vec<f64>,
}

impl AnnealingPlan {
    pub fn new(sigma_max: f64, sigma_min: f64, n_anneal: usize) -> Result<Self> {
        Self::with_rho(sigma_max, sigma_min, n_anneal, DEFAULT_RHO)
    }

    pub fn with_rho(sigma_max: f64, sigma_min: f64, n_anneal: usize, rho: f64) -> Result<Self> {
        if n_anneal < 1 {
            return Err(invalid("n_anneal", "must be at least 1"));
        }
        let mut grid = if n_anneal == 1 {
            // a lone node collapses straight onto the terminal zero
            polynomial_grid(sigma_max, sigma_min, 2, rho)?;
            vec![sigma_max]
        } else {
            polynomial_grid(sigma_max, sigma_min, n_anneal, rho)?
        };
        grid.push(0.0);
        Ok(Self {
            sigma_max,
            sigma_min,
            n_anneal,
            terminal: TerminalRule::TerminalZero,
            grid,
        })
    }

    pub fn with_terminal(mut self, terminal: TerminalRule) -> Self {
        self.terminal = terminal;
        self
    }

    /// Decreasing noise levels of length `n_anneal + 1`, ending in 0.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Noise level that the state is re-noised to after outer step `k`
    /// (`k = 0..n_anneal`). Under [`TerminalRule::StopAtSigmaMin`] the final
    /// step re-noises at `sigma_min` instead of zero.
    pub fn next_sigma(&self, k: usize) -> f64 {
        let s = self.grid[k + 1];
        if s == 0.0 && self.terminal == TerminalRule::StopAtSigmaMin {
            self.grid[k]
        } else {
            s
        }
    }
}

/// Noise grid for the Euler PF-ODE denoiser starting at `sigma`: `n_ode`
/// polynomial nodes from `sigma` down to `t_min`, then 0. When
/// `sigma <= t_min` or `n_ode == 1` the grid is `[sigma, 0]`.
pub fn ode_grid(sigma: f64, t_min: f64, n_ode: usize, rho: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma_t", format!("must be positive, got {sigma}")));
    }
    if n_ode < 1 {
        return Err(invalid("n_ode", "must be at least 1"));
    }
    let mut grid = if n_ode == 1 || sigma <= t_min {
        vec![sigma]
    } else {
        polynomial_grid(sigma, t_min, n_ode, rho)?
    };
    grid.push(0.0);
    Ok(grid)
}
