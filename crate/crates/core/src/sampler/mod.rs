//! Posterior samplers: the PF-ODE denoiser, the Langevin inner sampler, the
//! decoupled-annealing outer loop and the DPS baseline.

mod daps;
mod denoise;
mod dps;
mod langevin;
mod trajectory;

pub use daps::{anneal, daps_sample, outer_step, DapsConfig, LangevinPosterior, PosteriorStep, StepDraw};
pub use denoise::{denoise_ode, DenoiserConfig};
pub use dps::{dps_guidance, dps_sample, DpsConfig, DpsVariant, GradMode};
pub use langevin::{langevin, langevin_posterior, LangevinConfig, RtRule, DIVERGENCE_LIMIT};
pub use trajectory::{SamplerTrajectory, TrajectoryStep};
