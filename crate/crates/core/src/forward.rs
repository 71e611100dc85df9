//! Measurement operators `A(x)` with exact gradients of the quadratic data
//! fidelity `‖A(x) - y‖² / 2β²`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::RngCore;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_dim, invalid, Result};
use crate::prior::standard_normal;

/// Noise level used inside the sampler unless overridden.
pub const DEFAULT_BETA_MODEL: f64 = 0.01;

/// Row-major layout of a signal: `rows × cols`. One-dimensional signals use
/// `rows = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn line(n: usize) -> Self {
        Self { rows: 1, cols: n }
    }

    pub fn grid(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cached FFT plans for the padded grid.
#[derive(Clone)]
pub struct DftPlans {
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl DftPlans {
    fn new(padded: Shape) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            row_fwd: planner.plan_fft_forward(padded.cols),
            row_inv: planner.plan_fft_inverse(padded.cols),
            col_fwd: planner.plan_fft_forward(padded.rows),
            col_inv: planner.plan_fft_inverse(padded.rows),
        }
    }
}

/// Operator-specific parameters.
#[derive(Clone)]
pub enum OperatorKind {
    /// Keeps the listed coordinates (sorted, distinct).
    Mask { keep: Vec<usize> },
    /// Block averaging by an integer factor along every non-trivial axis.
    Downsample { factor: usize },
    /// Separable Gaussian blur with zero boundary, output the same size.
    ConvBlur { sigma: f64, kernel: Vec<f64> },
    /// Orthonormal DFT magnitudes of `0.5 x + 0.5`, zero-padded by the
    /// oversampling factor.
    DftMagnitude {
        oversample: f64,
        padded: Shape,
        plans: DftPlans,
    },
    /// `clip(α x, -1, 1)`.
    HdrClip { alpha: f64 },
    /// Scalar sum of Gaussian bumps `Σ_c exp(-‖x - c‖² / width)` in 2D.
    GaussBumps2d { centers: Vec<[f64; 2]>, width: f64 },
}

impl fmt::Debug for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::Mask { keep } => f.debug_struct("Mask").field("kept", &keep.len()).finish(),
            OperatorKind::Downsample { factor } => {
                f.debug_struct("Downsample").field("factor", factor).finish()
            }
            OperatorKind::ConvBlur { sigma, kernel } => f
                .debug_struct("ConvBlur")
                .field("sigma", sigma)
                .field("taps", &kernel.len())
                .finish(),
            OperatorKind::DftMagnitude {
                oversample, padded, ..
            } => f
                .debug_struct("DftMagnitude")
                .field("oversample", oversample)
                .field("padded", padded)
                .finish(),
            OperatorKind::HdrClip { alpha } => f.debug_struct("HdrClip").field("alpha", alpha).finish(),
            OperatorKind::GaussBumps2d { centers, width } => f
                .debug_struct("GaussBumps2d")
                .field("centers", centers)
                .field("width", width)
                .finish(),
        }
    }
}

/// A measurement map from `in_dim` to `out_dim`.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    kind: OperatorKind,
    shape: Shape,
    out_dim: usize,
}

impl ForwardOperator {
    pub fn identity(d: usize) -> Result<Self> {
        Self::mask(d, (0..d).collect())
    }

    pub fn mask(d: usize, mut keep: Vec<usize>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("in_dim", "must be positive"));
        }
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() {
            return Err(invalid("keep", "mask keeps no coordinates"));
        }
        if let Some(&i) = keep.iter().find(|&&i| i >= d) {
            return Err(invalid("keep", format!("index {i} out of range for dimension {d}")));
        }
        let out_dim = keep.len();
        Ok(Self {
            kind: OperatorKind::Mask { keep },
            shape: Shape::line(d),
            out_dim,
        })
    }

    /// Random mask hiding `round(mask_ratio · d)` coordinates.
    pub fn random_mask(d: usize, mask_ratio: f64, rng: &mut dyn RngCore) -> Result<Self> {
        if !(0.0..1.0).contains(&mask_ratio) {
            return Err(invalid("mask_ratio", format!("must lie in [0, 1), got {mask_ratio}")));
        }
        let hidden = (mask_ratio * d as f64).round() as usize;
        let mut idx: Vec<usize> = (0..d).collect();
        idx.shuffle(rng);
        Self::mask(d, idx[hidden.min(d.saturating_sub(1))..].to_vec())
    }

    pub fn downsample(shape: Shape, factor: usize) -> Result<Self> {
        if factor < 1 {
            return Err(invalid("factor", "must be at least 1"));
        }
        let (fr, fc) = block_dims(shape, factor);
        if shape.is_empty() || shape.rows % fr != 0 || shape.cols % fc != 0 {
            return Err(invalid(
                "factor",
                format!("{factor} does not divide signal shape {}x{}", shape.rows, shape.cols),
            ));
        }
        let out_dim = (shape.rows / fr) * (shape.cols / fc);
        Ok(Self {
            kind: OperatorKind::Downsample { factor },
            shape,
            out_dim,
        })
    }

    /// Gaussian blur with standard deviation `sigma` (in samples), truncated
    /// at `radius` taps on each side and normalised to unit sum.
    pub fn conv_blur(shape: Shape, sigma: f64, radius: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(invalid("blur_sigma", "must be positive"));
        }
        if shape.is_empty() {
            return Err(invalid("shape", "must be non-empty"));
        }
        let mut kernel: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let t = i as f64 - radius as f64;
                (-0.5 * t * t / (sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        Ok(Self {
            kind: OperatorKind::ConvBlur { sigma, kernel },
            shape,
            out_dim: shape.len(),
        })
    }

    pub fn dft_magnitude(shape: Shape, oversample: f64) -> Result<Self> {
        if !(oversample >= 1.0) || !oversample.is_finite() {
            return Err(invalid(
                "oversample",
                format!("oversampling factor must be >= 1, got {oversample}"),
            ));
        }
        if shape.is_empty() {
            return Err(invalid("shape", "must be non-empty"));
        }
        let pad = |n: usize| {
            if n == 1 {
                1
            } else {
                ((oversample * n as f64).round() as usize).max(n)
            }
        };
        let padded = Shape::grid(pad(shape.rows), pad(shape.cols));
        Ok(Self {
            kind: OperatorKind::DftMagnitude {
                oversample,
                padded,
                plans: DftPlans::new(padded),
            },
            shape,
            out_dim: padded.len(),
        })
    }

    pub fn hdr_clip(d: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(invalid("alpha", "must be positive"));
        }
        if d == 0 {
            return Err(invalid("in_dim", "must be positive"));
        }
        Ok(Self {
            kind: OperatorKind::HdrClip { alpha },
            shape: Shape::line(d),
            out_dim: d,
        })
    }

    pub fn gauss_bumps2d(centers: Vec<[f64; 2]>, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid("width", "must be positive"));
        }
        if centers.is_empty() {
            return Err(invalid("centers", "need at least one bump"));
        }
        Ok(Self {
            kind: OperatorKind::GaussBumps2d { centers, width },
            shape: Shape::line(2),
            out_dim: 1,
        })
    }

    /// Bumps at `(0, 0)` and `(0.5, 0.5)` with width 0.05.
    pub fn two_bumps() -> Self {
        Self::gauss_bumps2d(vec![[0.0, 0.0], [0.5, 0.5]], 0.05).expect("valid constants")
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            OperatorKind::Mask { .. } => "mask",
            OperatorKind::Downsample { .. } => "downsample",
            OperatorKind::ConvBlur { .. } => "conv_blur",
            OperatorKind::DftMagnitude { .. } => "dft_magnitude",
            OperatorKind::HdrClip { .. } => "hdr_clip",
            OperatorKind::GaussBumps2d { .. } => "gauss_bumps2d",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(
            self.kind,
            OperatorKind::Mask { .. } | OperatorKind::Downsample { .. } | OperatorKind::ConvBlur { .. }
        )
    }

    pub fn in_dim(&self) -> usize {
        self.shape.len()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Clean measurement `A(x)`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.in_dim(), x.len())?;
        Ok(match &self.kind {
            OperatorKind::Mask { keep } => DVector::from_iterator(keep.len(), keep.iter().map(|&i| x[i])),
            OperatorKind::Downsample { factor } => self.block_average(x, *factor),
            OperatorKind::ConvBlur { kernel, .. } => blur(x.as_slice(), self.shape, kernel),
            OperatorKind::DftMagnitude { padded, plans, .. } => {
                let spec = self.padded_spectrum(x, *padded, plans);
                DVector::from_iterator(spec.len(), spec.iter().map(|c| c.norm()))
            }
            OperatorKind::HdrClip { alpha } => x.map(|v| (alpha * v).clamp(-1.0, 1.0)),
            OperatorKind::GaussBumps2d { centers, width } => {
                let v: f64 = centers
                    .iter()
                    .map(|c| {
                        let sq = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                        (-sq / width).exp()
                    })
                    .sum();
                DVector::from_element(1, v)
            }
        })
    }

    /// Vector-Jacobian product `J_A(x)ᵀ r`.
    pub fn vjp(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.in_dim(), x.len())?;
        check_dim(self.out_dim, r.len())?;
        Ok(match &self.kind {
            OperatorKind::Mask { keep } => {
                let mut g = DVector::zeros(x.len());
                for (k, &i) in keep.iter().enumerate() {
                    g[i] = r[k];
                }
                g
            }
            OperatorKind::Downsample { factor } => self.block_average_adjoint(r, *factor),
            // symmetric kernel with zero boundary: the operator is self-adjoint
            OperatorKind::ConvBlur { kernel, .. } => blur(r.as_slice(), self.shape, kernel),
            OperatorKind::DftMagnitude { padded, plans, .. } => {
                let spec = self.padded_spectrum(x, *padded, plans);
                let mut buf: Vec<Complex64> = spec
                    .iter()
                    .zip(r.iter())
                    .map(|(z, &w)| {
                        let m = z.norm();
                        if m > 0.0 {
                            z * (w / m)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect();
                fft2(&mut buf, *padded, plans, false);
                let scale = 0.5 / (padded.len() as f64).sqrt();
                let mut g = DVector::zeros(x.len());
                for i in 0..self.shape.rows {
                    for j in 0..self.shape.cols {
                        g[i * self.shape.cols + j] = buf[i * padded.cols + j].re * scale;
                    }
                }
                g
            }
            OperatorKind::HdrClip { alpha } => DVector::from_fn(x.len(), |i, _| {
                if (alpha * x[i]).abs() <= 1.0 {
                    alpha * r[i]
                } else {
                    0.0
                }
            }),
            OperatorKind::GaussBumps2d { centers, width } => {
                let mut g = DVector::zeros(2);
                for c in centers {
                    let d0 = x[0] - c[0];
                    let d1 = x[1] - c[1];
                    let e = (-(d0 * d0 + d1 * d1) / width).exp();
                    g[0] += -2.0 * d0 / width * e;
                    g[1] += -2.0 * d1 / width * e;
                }
                g * r[0]
            }
        })
    }

    /// `A(x) - y`.
    pub fn residual(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.out_dim, y.len())?;
        Ok(self.apply(x)? - y)
    }

    /// `‖A(x) - y‖² / 2β²` under the sampler's noise level.
    pub fn fidelity(&self, x: &DVector<f64>, meas: &Measurement) -> Result<f64> {
        let r = self.residual(x, &meas.y)?;
        Ok(r.norm_squared() / (2.0 * meas.beta_model * meas.beta_model))
    }

    /// Gradient of [`fidelity`](Self::fidelity) with respect to `x`.
    pub fn fidelity_grad(&self, x: &DVector<f64>, meas: &Measurement) -> Result<DVector<f64>> {
        if !(meas.beta_model > 0.0) {
            return Err(invalid("beta_model", "must be positive"));
        }
        let r = self.residual(x, &meas.y)?;
        Ok(self.vjp(x, &r)? / (meas.beta_model * meas.beta_model))
    }

    /// Noisy measurement `y = A(x) + β ε`.
    pub fn corrupt(&self, x: &DVector<f64>, beta_true: f64, rng: &mut dyn RngCore) -> Result<Measurement> {
        if !(beta_true > 0.0) {
            return Err(invalid("beta_true", "must be positive to synthesise noisy data"));
        }
        let clean = self.apply(x)?;
        let y = clean + standard_normal(rng, self.out_dim) * beta_true;
        Ok(Measurement {
            y,
            beta_true,
            beta_model: DEFAULT_BETA_MODEL,
        })
    }

    fn padded_spectrum(&self, x: &DVector<f64>, padded: Shape, plans: &DftPlans) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); padded.len()];
        for i in 0..self.shape.rows {
            for j in 0..self.shape.cols {
                buf[i * padded.cols + j] = Complex64::new(0.5 * x[i * self.shape.cols + j] + 0.5, 0.0);
            }
        }
        fft2(&mut buf, padded, plans, true);
        let scale = 1.0 / (padded.len() as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    fn block_average(&self, x: &DVector<f64>, factor: usize) -> DVector<f64> {
        let (fr, fc) = block_dims(self.shape, factor);
        let (or, oc) = (self.shape.rows / fr, self.shape.cols / fc);
        let norm = 1.0 / (fr * fc) as f64;
        DVector::from_fn(or * oc, |k, _| {
            let (bi, bj) = (k / oc, k % oc);
            let mut s = 0.0;
            for i in bi * fr..(bi + 1) * fr {
                for j in bj * fc..(bj + 1) * fc {
                    s += x[i * self.shape.cols + j];
                }
            }
            s * norm
        })
    }

    fn block_average_adjoint(&self, r: &DVector<f64>, factor: usize) -> DVector<f64> {
        let (fr, fc) = block_dims(self.shape, factor);
        let oc = self.shape.cols / fc;
        let norm = 1.0 / (fr * fc) as f64;
        DVector::from_fn(self.shape.len(), |k, _| {
            let (i, j) = (k / self.shape.cols, k % self.shape.cols);
            r[(i / fr) * oc + j / fc] * norm
        })
    }
}

fn block_dims(shape: Shape, factor: usize) -> (usize, usize) {
    (if shape.rows == 1 { 1 } else { factor }, factor)
}

fn blur(x: &[f64], shape: Shape, kernel: &[f64]) -> DVector<f64> {
    let radius = (kernel.len() / 2) as isize;
    let conv_line = |src: &[f64], dst: &mut [f64]| {
        let n = src.len() as isize;
        for (i, out) in dst.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = i as isize + k as isize - radius;
                if (0..n).contains(&j) {
                    s += w * src[j as usize];
                }
            }
            *out = s;
        }
    };
    let mut tmp = vec![0.0; x.len()];
    for i in 0..shape.rows {
        let row = i * shape.cols..(i + 1) * shape.cols;
        conv_line(&x[row.clone()], &mut tmp[row]);
    }
    if shape.rows > 1 {
        let mut col = vec![0.0; shape.rows];
        let mut out_col = vec![0.0; shape.rows];
        for j in 0..shape.cols {
            for i in 0..shape.rows {
                col[i] = tmp[i * shape.cols + j];
            }
            conv_line(&col, &mut out_col);
            for i in 0..shape.rows {
                tmp[i * shape.cols + j] = out_col[i];
            }
        }
    }
    DVector::from_vec(tmp)
}

/// Unnormalised 2D transform in place (rows, then columns).
fn fft2(buf: &mut [Complex64], shape: Shape, plans: &DftPlans, forward: bool) {
    let (row_plan, col_plan) = if forward {
        (&plans.row_fwd, &plans.col_fwd)
    } else {
        (&plans.row_inv, &plans.col_inv)
    };
    if shape.cols > 1 {
        row_plan.process(buf);
    }
    if shape.rows > 1 {
        let mut col = vec![Complex64::new(0.0, 0.0); shape.rows];
        for j in 0..shape.cols {
            for i in 0..shape.rows {
                col[i] = buf[i * shape.cols + j];
            }
            col_plan.process(&mut col);
            for i in 0..shape.rows {
                buf[i * shape.cols + j] = col[i];
            }
        }
    }
}

/// Observed data with the noise level that produced it and the one assumed
/// by the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: DVector<f64>,
    pub beta_true: f64,
    pub beta_model: f64,
}

impl Measurement {
    pub fn new(y: DVector<f64>, beta_true: f64, beta_model: f64) -> Result<Self> {
        if !(beta_model > 0.0) {
            return Err(invalid("beta_model", "must be positive"));
        }
        if !(beta_true >= 0.0) {
            return Err(invalid("beta_true", "must be non-negative"));
        }
        Ok(Self {
            y,
            beta_true,
            beta_model,
        })
    }

    pub fn with_beta_model(mut self, beta_model: f64) -> Result<Self> {
        if !(beta_model > 0.0) {
            return Err(invalid("beta_model", "must be positive"));
        }
        self.beta_model = beta_model;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chain_rng;
    use rand::Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn random_vec(rng: &mut dyn RngCore, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn bumps_at_first_center() {
        let op = ForwardOperator::two_bumps();
        let v = op.apply(&dv(&[0.0, 0.0])).unwrap()[0];
        assert!((v - (1.0 + (-10.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn dft_of_zero_signal() {
        let op = ForwardOperator::dft_magnitude(Shape::line(8), 2.0).unwrap();
        let y = op.apply(&DVector::from_element(8, -1.0)).unwrap();
        assert_eq!(y.len(), 16);
        assert!(y.amax() < 1e-15);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let mut rng = chain_rng(2, 0);
        let ops = vec![
            ForwardOperator::two_bumps(),
            ForwardOperator::hdr_clip(4, 2.0).unwrap(),
            ForwardOperator::conv_blur(Shape::line(4), 1.0, 2).unwrap(),
        ];
        for op in ops {
            let x = random_vec(&mut rng, op.in_dim()) * 0.3;
            let meas = Measurement::new(op.apply(&x).unwrap(), 0.1, 0.1).unwrap();
            assert!(op.fidelity_grad(&x, &meas).unwrap().amax() < 1e-15);
        }
    }

    #[test]
    fn gradient_scales_inverse_square_in_beta() {
        let op = ForwardOperator::hdr_clip(3, 2.0).unwrap();
        let x = dv(&[0.1, 0.2, 0.9]);
        let m1 = Measurement::new(dv(&[0.5, -0.1, 0.3]), 0.1, 0.1).unwrap();
        let m2 = m1.clone().with_beta_model(0.2).unwrap();
        let g1 = op.fidelity_grad(&x, &m1).unwrap();
        let g2 = op.fidelity_grad(&x, &m2).unwrap();
        assert!((g1 / 4.0 - g2).amax() < 1e-12);
    }

    #[test]
    fn hdr_boundary_uses_interior_branch() {
        let op = ForwardOperator::hdr_clip(2, 2.0).unwrap();
        let g = op.vjp(&dv(&[0.5, 0.6]), &dv(&[1.0, 1.0])).unwrap();
        assert_eq!(g.as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn downsample_2d_and_validation() {
        let op = ForwardOperator::downsample(Shape::grid(2, 4), 2).unwrap();
        let y = op.apply(&dv(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])).unwrap();
        assert_eq!(y.as_slice(), &[3.5, 5.5]);
        assert!(ForwardOperator::downsample(Shape::line(5), 2).is_err());
    }

    #[test]
    fn dimension_and_parameter_errors() {
        let op = ForwardOperator::two_bumps();
        assert!(op.apply(&dv(&[0.0])).is_err());
        assert!(ForwardOperator::dft_magnitude(Shape::line(4), 0.5).is_err());
        assert!(ForwardOperator::mask(3, vec![5]).is_err());
        assert!(Measurement::new(dv(&[0.0]), 0.1, 0.0).is_err());
    }

    #[test]
    fn corrupt_noiseless_limit_and_determinism() {
        let op = ForwardOperator::conv_blur(Shape::line(6), 1.0, 2).unwrap();
        let x = random_vec(&mut chain_rng(1, 1), 6);
        let m = op.corrupt(&x, 1e-12, &mut chain_rng(4, 0)).unwrap();
        assert!((&m.y - op.apply(&x).unwrap()).amax() < 1e-10);
        assert_eq!(m.beta_model, DEFAULT_BETA_MODEL);
        let a = op.corrupt(&x, 0.3, &mut chain_rng(9, 0)).unwrap();
        let b = op.corrupt(&x, 0.3, &mut chain_rng(9, 0)).unwrap();
        assert_eq!(a, b);
        assert!(op.corrupt(&x, 0.0, &mut chain_rng(9, 0)).is_err());
    }

    #[test]
    fn observation_override() {
        let m = Measurement::new(dv(&[0.0]), 0.3, 0.3).unwrap();
        assert_eq!(m.y[0], 0.0);
        assert_eq!(m.beta_true, 0.3);
    }

    #[test]
    fn random_mask_hides_requested_fraction() {
        let op = ForwardOperator::random_mask(100, 0.7, &mut chain_rng(0, 0)).unwrap();
        assert_eq!(op.out_dim(), 30);
    }
}
