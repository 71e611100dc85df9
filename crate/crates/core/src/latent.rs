//! Annealing in the latent space of a linear encoder/decoder pair.
//!
//! The clean prior lives in data space as a Gaussian mixture; its image under
//! the encoder is again a mixture, which gives an exact latent score. The
//! conditional draw at each level either runs Langevin in data space around
//! the decoded estimate and re-encodes, or runs Langevin directly on the
//! latent with the fidelity pulled back through the decoder.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{check_dim, invalid, Result};
use crate::forward::{ForwardOperator, Measurement};
use crate::prior::{standard_normal, GaussianMixture, ScoreModel};
use crate::sampler::{
    denoise_ode, langevin, outer_step, DapsConfig, PosteriorStep, SamplerTrajectory, StepDraw,
    TrajectoryStep,
};

/// Default annealing ceiling for latent sampling.
pub const DEFAULT_LATENT_SIGMA_MAX: f64 = 10.0;

/// Encoder `E` (k × d) and decoder `D` (d × k) with `E D = I_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCodec {
    encode: DMatrix<f64>,
    decode: DMatrix<f64>,
}

impl LinearCodec {
    pub fn new(encode: DMatrix<f64>, decode: DMatrix<f64>) -> Result<Self> {
        let (k, d) = encode.shape();
        if k == 0 || k > d {
            return Err(invalid("latent_dim", format!("need 0 < k <= d, got k = {k}, d = {d}")));
        }
        check_dim(d, decode.nrows())?;
        check_dim(k, decode.ncols())?;
        let err = (&encode * &decode - DMatrix::identity(k, k)).amax();
        if err > 1e-10 {
            return Err(invalid(
                "codec",
                format!("encoder is not a left inverse of the decoder (max error {err:e})"),
            ));
        }
        Ok(Self { encode, decode })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d), DMatrix::identity(d, d))
    }

    /// Encoder with orthonormal rows drawn at random; the decoder is its
    /// transpose.
    pub fn random_orthonormal(d: usize, k: usize, rng: &mut dyn RngCore) -> Result<Self> {
        if k == 0 || k > d {
            return Err(invalid("latent_dim", format!("need 0 < k <= d, got k = {k}, d = {d}")));
        }
        let mut g = DMatrix::zeros(d, k);
        for c in 0..k {
            g.set_column(c, &standard_normal(rng, d));
        }
        let q = g.qr().q();
        Self::new(q.transpose(), q)
    }

    pub fn latent_dim(&self) -> usize {
        self.encode.nrows()
    }

    pub fn data_dim(&self) -> usize {
        self.encode.ncols()
    }

    pub fn encode_matrix(&self) -> &DMatrix<f64> {
        &self.encode
    }

    pub fn decode_matrix(&self) -> &DMatrix<f64> {
        &self.decode
    }

    pub fn encode(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.encode * x
    }

    pub fn decode(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.decode * z
    }
}

/// The data-space mixture prior pushed through the encoder.
pub fn latent_prior(prior: &GaussianMixture, codec: &LinearCodec) -> Result<GaussianMixture> {
    prior.pushforward(codec.encode_matrix())
}

/// Exact score of the latent prior smoothed by `σ² I`.
pub fn latent_score(
    prior: &GaussianMixture,
    codec: &LinearCodec,
    z: &DVector<f64>,
    sigma: f64,
) -> Result<DVector<f64>> {
    latent_prior(prior, codec)?.score(z, sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentDapsConfig {
    /// Annealing plan, denoiser, Langevin step count and radius rule. The
    /// base Langevin step size is unused; see `eta_pixel` and `eta_latent`.
    pub base: DapsConfig,
    /// Fraction of outer steps (the last ones) that use latent-space Langevin.
    pub ratio: f64,
    pub eta_pixel: f64,
    pub eta_latent: f64,
}

impl LatentDapsConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(invalid("ratio", format!("must lie in [0, 1], got {}", self.ratio)));
        }
        if !(self.eta_pixel > 0.0) || !(self.eta_latent > 0.0) {
            return Err(invalid("eta_pixel", "step sizes must be positive"));
        }
        Ok(())
    }

    /// Number of trailing outer steps run in latent space.
    pub fn latent_steps(&self) -> usize {
        (self.ratio * self.base.plan.n_anneal as f64).round() as usize
    }
}

/// Shared pieces of the two latent conditional samplers.
struct LatentContext<'a> {
    latent: &'a GaussianMixture,
    codec: &'a LinearCodec,
    op: &'a ForwardOperator,
    meas: &'a Measurement,
    cfg: &'a LatentDapsConfig,
}

/// Langevin in data space around `D(ẑ0)`, re-encoded.
struct PixelLangevinStep<'a>(&'a LatentContext<'a>);

/// Langevin on the latent with fidelity `‖A(D z) - y‖² / 2β²`.
struct LatentLangevinStep<'a>(&'a LatentContext<'a>);

impl PosteriorStep for PixelLangevinStep<'_> {
    fn draw(&self, z_t: &DVector<f64>, sigma_t: f64, rng: &mut dyn RngCore) -> Result<StepDraw> {
        let c = self.0;
        let z0_hat = denoise_ode(c.latent, z_t, sigma_t, &c.cfg.base.denoiser)?;
        let r_t = c.cfg.base.langevin.rt_rule.radius(sigma_t);
        let x0_hat = c.codec.decode(&z0_hat);
        let x = langevin(
            &x0_hat,
            r_t,
            c.cfg.base.langevin.n_steps,
            c.cfg.eta_pixel,
            |x| c.op.fidelity_grad(x, c.meas),
            rng,
        )?;
        Ok(StepDraw {
            x0_hat: z0_hat,
            x0_y: c.codec.encode(&x),
        })
    }
}

impl PosteriorStep for LatentLangevinStep<'_> {
    fn draw(&self, z_t: &DVector<f64>, sigma_t: f64, rng: &mut dyn RngCore) -> Result<StepDraw> {
        let c = self.0;
        let z0_hat = denoise_ode(c.latent, z_t, sigma_t, &c.cfg.base.denoiser)?;
        let r_t = c.cfg.base.langevin.rt_rule.radius(sigma_t);
        let dt = c.codec.decode_matrix().transpose();
        let z = langevin(
            &z0_hat,
            r_t,
            c.cfg.base.langevin.n_steps,
            c.cfg.eta_latent,
            |z| Ok(&dt * c.op.fidelity_grad(&c.codec.decode(z), c.meas)?),
            rng,
        )?;
        Ok(StepDraw { x0_hat: z0_hat, x0_y: z })
    }
}

/// Latent decoupled annealing. The first `1 - R` fraction of outer steps use
/// data-space Langevin, the remaining `R` fraction latent-space Langevin.
/// Trajectory snapshots are decoded to data space.
pub fn latent_daps_sample(
    prior: &GaussianMixture,
    codec: &LinearCodec,
    op: &ForwardOperator,
    meas: &Measurement,
    cfg: &LatentDapsConfig,
    rng: &mut dyn RngCore,
) -> Result<(DVector<f64>, SamplerTrajectory)> {
    cfg.validate()?;
    check_dim(prior.dim(), codec.data_dim())?;
    check_dim(codec.data_dim(), op.in_dim())?;
    check_dim(op.out_dim(), meas.y.len())?;
    let latent = latent_prior(prior, codec)?;
    let ctx = LatentContext {
        latent: &latent,
        codec,
        op,
        meas,
        cfg,
    };
    let pixel = PixelLangevinStep(&ctx);
    let in_latent = LatentLangevinStep(&ctx);
    let plan = &cfg.base.plan;
    let switch_at = plan.n_anneal - cfg.latent_steps();

    let mut z = standard_normal(rng, codec.latent_dim()) * plan.sigma_max;
    let mut traj = SamplerTrajectory {
        steps: Vec::with_capacity(plan.n_anneal),
    };
    for k in 0..plan.n_anneal {
        let sigma = plan.grid()[k];
        let inner: &dyn PosteriorStep = if k < switch_at { &pixel } else { &in_latent };
        let (draw, next) = outer_step(inner, &z, sigma, plan.next_sigma(k), rng)?;
        let x0_hat = codec.decode(&draw.x0_hat);
        let x0_y = codec.decode(&draw.x0_y);
        traj.steps.push(TrajectoryStep {
            sigma,
            x_t: codec.decode(&z),
            residual_x0hat: op.residual(&x0_hat, &meas.y)?.norm(),
            residual_x0y: op.residual(&x0_y, &meas.y)?.norm(),
            x0_hat,
            x0_y,
        });
        z = next;
    }
    Ok((codec.decode(&z), traj))
}
