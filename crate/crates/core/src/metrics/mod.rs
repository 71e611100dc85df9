//! Evaluation: Wasserstein distances between point clouds, PSNR and exact
//! posterior oracles.

mod oracle;
mod wasserstein;

pub use oracle::{
    ExactConjugateStep, ExactLatentStep, Grid2d, GridSpec, PosteriorOracle,
};
pub use wasserstein::{
    assignment, wasserstein2_exact, wasserstein2_sliced, wasserstein_1d, PointCloud, EXACT_W2_CAP,
};

/// Peak signal-to-noise ratio in dB; `+∞` when the inputs coincide.
pub fn psnr(a: &[f64], b: &[f64], range: f64) -> crate::Result<f64> {
    if !(range > 0.0) {
        return Err(crate::error::invalid("range", "must be positive"));
    }
    crate::error::check_dim(a.len(), b.len())?;
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (range * range / mse).log10())
}
