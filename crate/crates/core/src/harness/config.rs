use serde::{Deserialize, Serialize};

use crate::error::{DapsError, Result};
use crate::forward::DEFAULT_BETA_MODEL;
use crate::schedule::{DEFAULT_ODE_T_MIN, DEFAULT_RHO, DEFAULT_SIGMA_MIN};

/// Declarative description of one experiment. Serialises to the sectioned
/// key-value text used for `config.snapshot`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunSection,
    pub prior: PriorSection,
    pub operator: OperatorSpec,
    pub measurement: MeasurementSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Identifier written into the `run_id` column of `metrics.csv`.
    pub name: String,
    pub seed: u64,
    pub chains: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub dump_states: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            name: "run".into(),
            seed: 0,
            chains: 100,
            out: None,
            dump_states: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorModel {
    /// Exact mixture score.
    #[default]
    Gmm,
    /// Kernel score of a finite dataset (file, or drawn from the mixture).
    Empirical,
}

/// The mixture block always defines the true prior; with `model = "empirical"`
/// the sampler scores a dataset instead, while oracles keep the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default)]
    pub model: PriorModel,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Per-component covariance diagonals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<Vec<f64>>>,
    /// Per-component full covariance matrices (row lists).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariances: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_size: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity,
    Mask {
        keep: Vec<usize>,
    },
    RandomMask {
        mask_ratio: f64,
    },
    Downsample {
        #[serde(default = "one")]
        rows: usize,
        factor: usize,
    },
    ConvBlur {
        #[serde(default = "one")]
        rows: usize,
        sigma: f64,
        radius: usize,
    },
    DftMagnitude {
        #[serde(default = "one")]
        rows: usize,
        oversample: f64,
    },
    HdrClip {
        alpha: f64,
    },
    GaussBumps2d {
        centers: Vec<[f64; 2]>,
        width: f64,
    },
}

impl OperatorSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            OperatorSpec::Identity => "identity",
            OperatorSpec::Mask { .. } => "mask",
            OperatorSpec::RandomMask { .. } => "random_mask",
            OperatorSpec::Downsample { .. } => "downsample",
            OperatorSpec::ConvBlur { .. } => "conv_blur",
            OperatorSpec::DftMagnitude { .. } => "dft_magnitude",
            OperatorSpec::HdrClip { .. } => "hdr_clip",
            OperatorSpec::GaussBumps2d { .. } => "gauss_bumps2d",
        }
    }
}

/// Exactly one of `y`, `ground_truth` or `ground_truth_from_prior` selects
/// where the observation comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSection {
    #[serde(default)]
    pub beta_true: f64,
    #[serde(default = "default_beta_model")]
    pub beta_model: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<f64>>,
    #[serde(default)]
    pub ground_truth_from_prior: bool,
    /// Dynamic range used for PSNR against the ground truth.
    #[serde(default = "default_psnr_range")]
    pub psnr_range: f64,
}

fn default_beta_model() -> f64 {
    DEFAULT_BETA_MODEL
}

fn default_psnr_range() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Daps,
    LatentDaps,
    Dps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalSpec {
    #[default]
    Zero,
    SigmaMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtSpec {
    #[default]
    Sigma,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpsVariantSpec {
    #[default]
    Sde,
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradSpec {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub method: Method,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub n_anneal: usize,
    pub rho: f64,
    pub terminal: TerminalSpec,
    pub n_ode: usize,
    pub ode_t_min: f64,
    pub langevin_steps: usize,
    pub eta: f64,
    pub rt_rule: RtSpec,
    pub rt_constant: f64,
    pub zeta: f64,
    pub dps_variant: DpsVariantSpec,
    pub grad_mode: GradSpec,
    pub fd_step: f64,
    /// Latent dimension of a random row-orthonormal codec seeded by
    /// `codec_seed`. Absent: identity codec.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    pub codec_seed: u64,
    /// Plain-text encoder matrix (k×d); overrides `latent_dim`/`codec_seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codec: Option<String>,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_pixel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_latent: Option<f64>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            method: Method::Daps,
            sigma_max: 100.0,
            sigma_min: DEFAULT_SIGMA_MIN,
            n_anneal: 200,
            rho: DEFAULT_RHO,
            terminal: TerminalSpec::Zero,
            n_ode: 5,
            ode_t_min: DEFAULT_ODE_T_MIN,
            langevin_steps: 100,
            eta: 1e-4,
            rt_rule: RtSpec::Sigma,
            rt_constant: 1.0,
            zeta: 1.0,
            dps_variant: DpsVariantSpec::Sde,
            grad_mode: GradSpec::Analytic,
            fd_step: 1e-5,
            latent_dim: None,
            codec_seed: 0,
            codec: None,
            ratio: 1.0,
            eta_pixel: None,
            eta_latent: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    None,
    Conjugate,
    Grid2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W2Method {
    #[default]
    Exact,
    Sliced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub kind: OracleKind,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub resolution: usize,
    /// Oracle draws per comparison; defaults to the chain count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Also compare every intermediate `x_t` against `p(x_t | y)`.
    pub per_step: bool,
    pub w2: W2Method,
    pub n_projections: usize,
    /// Radius for the `near_mode_fraction` metric.
    pub mode_radius: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            kind: OracleKind::None,
            x_range: [-1.0, 1.5],
            y_range: [-1.0, 1.5],
            resolution: 400,
            n_samples: None,
            per_step: false,
            w2: W2Method::Exact,
            n_projections: 256,
            mode_radius: 0.3,
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> DapsError {
    DapsError::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|s| key_at(text, s.start))
                .unwrap_or_else(|| "<root>".into());
            bad(&key, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Resolved configuration as sectioned key-value text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Data dimension implied by the prior block.
    pub fn dim(&self) -> usize {
        self.prior.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.chains < 1 {
            return Err(bad("run.chains", "must be at least 1"));
        }
        self.validate_prior()?;
        self.validate_operator()?;
        self.validate_measurement()?;
        self.validate_sampler()?;
        self.validate_oracle()
    }

    fn validate_prior(&self) -> Result<()> {
        let p = &self.prior;
        let k = p.weights.len();
        if k == 0 {
            return Err(bad("prior.weights", "need at least one component"));
        }
        if p.means.len() != k {
            return Err(bad("prior.means", format!("expected {k} means, got {}", p.means.len())));
        }
        let d = self.dim();
        if d == 0 || p.means.iter().any(|m| m.len() != d) {
            return Err(bad("prior.means", "means must be non-empty and share one dimension"));
        }
        match (&p.variances, &p.covariances) {
            (Some(v), None) => {
                if v.len() != k || v.iter().any(|c| c.len() != d) {
                    return Err(bad("prior.variances", format!("expected {k} diagonals of length {d}")));
                }
            }
            (None, Some(c)) => {
                if c.len() != k || c.iter().any(|m| m.len() != d || m.iter().any(|r| r.len() != d)) {
                    return Err(bad("prior.covariances", format!("expected {k} matrices of size {d}x{d}")));
                }
            }
            _ => {
                return Err(bad(
                    "prior.variances",
                    "give exactly one of `variances` (diagonal) or `covariances` (full)",
                ))
            }
        }
        if p.model == PriorModel::Empirical && p.dataset.is_none() && p.dataset_size.is_none() {
            return Err(bad("prior.dataset_size", "empirical model needs `dataset` or `dataset_size`"));
        }
        if p.dataset_size == Some(0) {
            return Err(bad("prior.dataset_size", "must be at least 1"));
        }
        Ok(())
    }

    fn validate_operator(&self) -> Result<()> {
        let d = self.dim();
        let rows_fit = |rows: usize| -> Result<()> {
            if rows == 0 || d % rows != 0 {
                Err(bad("operator.rows", format!("must divide the dimension {d}")))
            } else {
                Ok(())
            }
        };
        match &self.operator {
            OperatorSpec::Identity => Ok(()),
            OperatorSpec::Mask { keep } => {
                if keep.iter().any(|&i| i >= d) {
                    Err(bad("operator.keep", format!("indices must be below {d}")))
                } else {
                    Ok(())
                }
            }
            OperatorSpec::RandomMask { mask_ratio } => {
                if (0.0..1.0).contains(mask_ratio) {
                    Ok(())
                } else {
                    Err(bad("operator.mask_ratio", "must lie in [0, 1)"))
                }
            }
            OperatorSpec::Downsample { rows, factor } => {
                rows_fit(*rows)?;
                if *factor == 0 {
                    Err(bad("operator.factor", "must be at least 1"))
                } else {
                    Ok(())
                }
            }
            OperatorSpec::ConvBlur { rows, sigma, .. } => {
                rows_fit(*rows)?;
                positive("operator.sigma", *sigma)
            }
            OperatorSpec::DftMagnitude { rows, oversample } => {
                rows_fit(*rows)?;
                if *oversample >= 1.0 {
                    Ok(())
                } else {
                    Err(bad("operator.oversample", "must be at least 1"))
                }
            }
            OperatorSpec::HdrClip { alpha } => positive("operator.alpha", *alpha),
            OperatorSpec::GaussBumps2d { centers, width } => {
                if d != 2 {
                    return Err(bad("operator.kind", "gauss_bumps2d needs a 2D prior"));
                }
                if centers.is_empty() {
                    return Err(bad("operator.centers", "need at least one centre"));
                }
                positive("operator.width", *width)
            }
        }
    }

    fn validate_measurement(&self) -> Result<()> {
        let m = &self.measurement;
        if !(m.beta_true >= 0.0) || !m.beta_true.is_finite() {
            return Err(bad("measurement.beta_true", "must be non-negative"));
        }
        positive("measurement.beta_model", m.beta_model)?;
        positive("measurement.psnr_range", m.psnr_range)?;
        let sources = m.y.is_some() as u8 + m.ground_truth.is_some() as u8 + m.ground_truth_from_prior as u8;
        if sources != 1 {
            return Err(bad(
                "measurement.y",
                "give exactly one of `y`, `ground_truth` or `ground_truth_from_prior = true`",
            ));
        }
        if let Some(gt) = &m.ground_truth {
            if gt.len() != self.dim() {
                return Err(bad("measurement.ground_truth", format!("expected length {}", self.dim())));
            }
        }
        Ok(())
    }

    fn validate_sampler(&self) -> Result<()> {
        let s = &self.sampler;
        positive("sampler.sigma_max", s.sigma_max)?;
        positive("sampler.sigma_min", s.sigma_min)?;
        if s.sigma_min >= s.sigma_max {
            return Err(bad("sampler.sigma_min", "must be below sigma_max"));
        }
        if s.n_anneal < 1 {
            return Err(bad("sampler.n_anneal", "must be at least 1"));
        }
        positive("sampler.rho", s.rho)?;
        if s.n_ode < 1 {
            return Err(bad("sampler.n_ode", "must be at least 1"));
        }
        positive("sampler.ode_t_min", s.ode_t_min)?;
        if s.langevin_steps < 1 {
            return Err(bad("sampler.langevin_steps", "must be at least 1"));
        }
        positive("sampler.eta", s.eta)?;
        if s.rt_rule == RtSpec::Constant {
            positive("sampler.rt_constant", s.rt_constant)?;
        }
        if !(s.zeta >= 0.0) || !s.zeta.is_finite() {
            return Err(bad("sampler.zeta", "must be non-negative"));
        }
        positive("sampler.fd_step", s.fd_step)?;
        if !(0.0..=1.0).contains(&s.ratio) {
            return Err(bad("sampler.ratio", "must lie in [0, 1]"));
        }
        if let Some(e) = s.eta_pixel {
            positive("sampler.eta_pixel", e)?;
        }
        if let Some(e) = s.eta_latent {
            positive("sampler.eta_latent", e)?;
        }
        if s.method == Method::LatentDaps {
            if self.prior.model != PriorModel::Gmm {
                return Err(bad("sampler.method", "latent_daps needs `prior.model = \"gmm\"`"));
            }
            if let Some(k) = s.latent_dim {
                if k == 0 || k > self.dim() {
                    return Err(bad("sampler.latent_dim", format!("must lie in 1..={}", self.dim())));
                }
            }
        }
        Ok(())
    }

    fn validate_oracle(&self) -> Result<()> {
        let o = &self.oracle;
        if o.kind == OracleKind::Grid2d {
            if self.dim() != 2 {
                return Err(bad("oracle.kind", "grid2d oracle needs a 2D prior"));
            }
            if o.resolution < 2 {
                return Err(bad("oracle.resolution", "must be at least 2"));
            }
            if !(o.x_range[1] > o.x_range[0]) {
                return Err(bad("oracle.x_range", "must be increasing"));
            }
            if !(o.y_range[1] > o.y_range[0]) {
                return Err(bad("oracle.y_range", "must be increasing"));
            }
        }
        if o.kind == OracleKind::Conjugate
            && matches!(
                self.operator,
                OperatorSpec::DftMagnitude { .. } | OperatorSpec::HdrClip { .. } | OperatorSpec::GaussBumps2d { .. }
            )
        {
            return Err(bad("oracle.kind", "conjugate oracle needs a linear operator"));
        }
        if o.n_samples == Some(0) {
            return Err(bad("oracle.n_samples", "must be at least 1"));
        }
        if o.n_projections < 1 {
            return Err(bad("oracle.n_projections", "must be at least 1"));
        }
        positive("oracle.mode_radius", o.mode_radius)
    }
}

/// Dotted key (`section.key`) of the assignment on the line containing byte
/// offset `pos`.
fn key_at(text: &str, pos: usize) -> String {
    let pos = pos.min(text.len());
    let mut section = String::new();
    let mut key = String::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if t.starts_with('[') {
            section = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
        offset += line.len();
        if offset > pos {
            break;
        }
    }
    match (section.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => section,
        (false, false) => format!("{section}.{key}"),
    }
}
