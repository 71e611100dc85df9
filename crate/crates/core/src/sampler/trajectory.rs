use nalgebra::DVector;

/// Snapshot of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    /// Noise level of `x_t` entering the iteration.
    pub sigma: f64,
    pub x_t: DVector<f64>,
    /// Unconditional clean estimate `x̂0(x_t)`.
    pub x0_hat: DVector<f64>,
    /// Measurement-conditioned draw `x_{0|y}`.
    pub x0_y: DVector<f64>,
    /// `‖A(x̂0) - y‖`.
    pub residual_x0hat: f64,
    /// `‖A(x_{0|y}) - y‖`.
    pub residual_x0y: f64,
}

/// Per-iteration record of one chain, ordered from the largest noise level
/// down.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SamplerTrajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl SamplerTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.sigma).collect()
    }

    /// Distances `‖x_{t_{i-1}} - x_{t_i}‖` between consecutive states; the
    /// last entry uses the returned sample as `x_{t_{i-1}}`.
    pub fn jump_sizes(&self, terminal: &DVector<f64>) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .steps
            .windows(2)
            .map(|w| (&w[1].x_t - &w[0].x_t).norm())
            .collect();
        if let Some(last) = self.steps.last() {
            out.push((terminal - &last.x_t).norm());
        }
        out
    }
}
