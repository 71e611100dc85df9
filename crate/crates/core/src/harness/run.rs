use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{
    DpsVariantSpec, ExperimentConfig, GradSpec, Method, OperatorSpec, OracleKind, PriorModel, RtSpec, TerminalSpec,
    W2Method,
};
use crate::error::{DapsError, Result};
use crate::forward::{ForwardOperator, Measurement, Shape};
use crate::latent::{latent_daps_sample, LatentDapsConfig, LinearCodec};
use crate::metrics::{psnr, wasserstein2_exact, wasserstein2_sliced, GridSpec, PointCloud, PosteriorOracle};
use crate::prior::{Covariance, EmpiricalScoreModel, GaussianMixture, Prior, ScoreModel};
use crate::rng::{aux_rng, chain_rng};
use crate::sampler::{
    daps_sample, dps_sample, DapsConfig, DenoiserConfig, DpsConfig, DpsVariant, GradMode, LangevinConfig, RtRule,
    SamplerTrajectory,
};
use crate::schedule::{AnnealingPlan, TerminalRule};

/// Purposes for auxiliary random streams.
mod purpose {
    pub const DATASET: u64 = 1;
    pub const MASK: u64 = 2;
    pub const GROUND_TRUTH: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const ORACLE: u64 = 5;
    pub const SLICES: u64 = 6;
}

/// Everything a chain needs, resolved once per run and shared read-only.
pub struct Problem {
    /// Mixture defining the true prior (oracles, ground-truth draws).
    pub truth_prior: GaussianMixture,
    /// Score model used by the sampler.
    pub model: Prior,
    pub op: ForwardOperator,
    pub meas: Measurement,
    pub ground_truth: Option<DVector<f64>>,
    pub oracle: Option<PosteriorOracle>,
    pub codec: Option<LinearCodec>,
}

fn cfg_err(key: &str, e: DapsError) -> DapsError {
    match e {
        DapsError::Config { .. } => e,
        other => DapsError::Config {
            key: key.into(),
            reason: other.to_string(),
        },
    }
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.run.seed;
        let d = cfg.dim();
        let p = &cfg.prior;

        let means = p.means.iter().map(|m| DVector::from_column_slice(m)).collect();
        let covs = match (&p.variances, &p.covariances) {
            (Some(v), _) => v
                .iter()
                .map(|c| Covariance::Diagonal(DVector::from_column_slice(c)))
                .collect(),
            (None, Some(c)) => c
                .iter()
                .map(|m| Covariance::Full(DMatrix::from_fn(d, d, |i, j| m[i][j])))
                .collect(),
            (None, None) => unreachable!("validated"),
        };
        let truth_prior =
            GaussianMixture::new(p.weights.clone(), means, covs).map_err(|e| cfg_err("prior", e))?;

        let model = match p.model {
            PriorModel::Gmm => Prior::Gmm(truth_prior.clone()),
            PriorModel::Empirical => {
                let data = match (&p.dataset, p.dataset_size) {
                    (Some(path), _) => crate::io::read_matrix(Path::new(path)).map_err(|e| cfg_err("prior.dataset", e))?,
                    (None, Some(n)) => truth_prior.sample(&mut aux_rng(seed, purpose::DATASET), n),
                    (None, None) => unreachable!("validated"),
                };
                if data.ncols() != d {
                    return Err(cfg_err(
                        "prior.dataset",
                        DapsError::DimensionMismatch {
                            expected: d,
                            got: data.ncols(),
                        },
                    ));
                }
                Prior::Empirical(EmpiricalScoreModel::new(&data)?)
            }
        };

        let op = build_operator(&cfg.operator, d, seed).map_err(|e| cfg_err("operator", e))?;

        let m = &cfg.measurement;
        let ground_truth = if let Some(gt) = &m.ground_truth {
            Some(DVector::from_column_slice(gt))
        } else if m.ground_truth_from_prior {
            Some(
                truth_prior
                    .sample(&mut aux_rng(seed, purpose::GROUND_TRUTH), 1)
                    .row(0)
                    .transpose(),
            )
        } else {
            None
        };
        let meas = match (&m.y, &ground_truth) {
            (Some(y), _) => {
                if y.len() != op.out_dim() {
                    return Err(cfg_err(
                        "measurement.y",
                        DapsError::DimensionMismatch {
                            expected: op.out_dim(),
                            got: y.len(),
                        },
                    ));
                }
                Measurement::new(DVector::from_column_slice(y), m.beta_true, m.beta_model)?
            }
            (None, Some(x)) => op
                .corrupt(x, m.beta_true, &mut aux_rng(seed, purpose::NOISE))?
                .with_beta_model(m.beta_model)?,
            (None, None) => unreachable!("validated"),
        };

        let o = &cfg.oracle;
        let oracle = match o.kind {
            OracleKind::None => None,
            OracleKind::Conjugate => {
                Some(PosteriorOracle::conjugate(&truth_prior, &op, &meas).map_err(|e| cfg_err("oracle.kind", e))?)
            }
            OracleKind::Grid2d => {
                let spec = GridSpec {
                    x_range: (o.x_range[0], o.x_range[1]),
                    y_range: (o.y_range[0], o.y_range[1]),
                    resolution: o.resolution,
                };
                Some(PosteriorOracle::grid2d(&truth_prior, &op, &meas, spec).map_err(|e| cfg_err("oracle", e))?)
            }
        };

        let s = &cfg.sampler;
        let codec = if s.method == Method::LatentDaps {
            Some(match &s.codec {
                Some(path) => {
                    let e = crate::io::read_matrix(Path::new(path)).map_err(|e| cfg_err("sampler.codec", e))?;
                    let dmat = e.transpose();
                    LinearCodec::new(e, dmat).map_err(|e| cfg_err("sampler.codec", e))?
                }
                None => {
                    let k = s.latent_dim.unwrap_or(d);
                    if k == d && s.latent_dim.is_none() {
                        LinearCodec::identity(d)?
                    } else {
                        LinearCodec::random_orthonormal(d, k, &mut chain_rng(s.codec_seed, 0))?
                    }
                }
            })
        } else {
            None
        };

        Ok(Self {
            truth_prior,
            model,
            op,
            meas,
            ground_truth,
            oracle,
            codec,
        })
    }
}

fn build_operator(spec: &OperatorSpec, d: usize, seed: u64) -> Result<ForwardOperator> {
    let shape = |rows: usize| Shape::grid(rows, d / rows);
    match spec {
        OperatorSpec::Identity => ForwardOperator::identity(d),
        OperatorSpec::Mask { keep } => ForwardOperator::mask(d, keep.clone()),
        OperatorSpec::RandomMask { mask_ratio } => {
            ForwardOperator::random_mask(d, *mask_ratio, &mut aux_rng(seed, purpose::MASK))
        }
        OperatorSpec::Downsample { rows, factor } => ForwardOperator::downsample(shape(*rows), *factor),
        OperatorSpec::ConvBlur { rows, sigma, radius } => ForwardOperator::conv_blur(shape(*rows), *sigma, *radius),
        OperatorSpec::DftMagnitude { rows, oversample } => ForwardOperator::dft_magnitude(shape(*rows), *oversample),
        OperatorSpec::HdrClip { alpha } => ForwardOperator::hdr_clip(d, *alpha),
        OperatorSpec::GaussBumps2d { centers, width } => ForwardOperator::gauss_bumps2d(centers.clone(), *width),
    }
}

/// Sampler settings resolved from the config.
pub fn annealing_plan(cfg: &ExperimentConfig) -> Result<AnnealingPlan> {
    let s = &cfg.sampler;
    let plan = AnnealingPlan::with_rho(s.sigma_max, s.sigma_min, s.n_anneal, s.rho)
        .map_err(|e| cfg_err("sampler.n_anneal", e))?;
    Ok(plan.with_terminal(match s.terminal {
        TerminalSpec::Zero => TerminalRule::TerminalZero,
        TerminalSpec::SigmaMin => TerminalRule::StopAtSigmaMin,
    }))
}

pub fn daps_config(cfg: &ExperimentConfig) -> Result<DapsConfig> {
    let s = &cfg.sampler;
    Ok(DapsConfig {
        plan: annealing_plan(cfg)?,
        denoiser: DenoiserConfig {
            n_ode: s.n_ode,
            t_min: s.ode_t_min,
            rho: s.rho,
        },
        langevin: LangevinConfig {
            n_steps: s.langevin_steps,
            eta: s.eta,
            rt_rule: match s.rt_rule {
                RtSpec::Sigma => RtRule::Sigma,
                RtSpec::Constant => RtRule::Constant(s.rt_constant),
            },
        },
    })
}

pub fn dps_config(cfg: &ExperimentConfig) -> Result<DpsConfig> {
    let s = &cfg.sampler;
    Ok(DpsConfig {
        plan: annealing_plan(cfg)?,
        zeta: s.zeta,
        variant: match s.dps_variant {
            DpsVariantSpec::Sde => DpsVariant::Sde,
            DpsVariantSpec::Ode => DpsVariant::Ode,
        },
        grad_mode: match s.grad_mode {
            GradSpec::Analytic => GradMode::AnalyticJacobian,
            GradSpec::FiniteDifference => GradMode::FiniteDifference(s.fd_step),
        },
    })
}

pub fn latent_config(cfg: &ExperimentConfig) -> Result<LatentDapsConfig> {
    let s = &cfg.sampler;
    Ok(LatentDapsConfig {
        base: daps_config(cfg)?,
        ratio: s.ratio,
        eta_pixel: s.eta_pixel.unwrap_or(s.eta),
        eta_latent: s.eta_latent.unwrap_or(s.eta),
    })
}

/// Terminal sample and trajectory of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub sample: DVector<f64>,
    pub trajectory: SamplerTrajectory,
    /// `‖A(x) - y‖` of the terminal sample.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutcome {
    pub chain: usize,
    /// Failure message when the chain diverged or errored.
    pub record: std::result::Result<ChainRecord, String>,
}

/// One row of `metrics.csv`. `step` is `None` for run-level scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub step: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    pub config: ExperimentConfig,
    /// Ordered by chain index.
    pub chains: Vec<ChainOutcome>,
    pub metrics: Vec<MetricRow>,
    pub measurement: Measurement,
    pub ground_truth: Option<DVector<f64>>,
    /// Chain chosen by [`best_of_k`].
    pub selected: Option<usize>,
    pub wall_clock: Duration,
}

impl RunResult {
    /// Resolved-config snapshot that reproduces the run.
    pub fn snapshot(&self) -> String {
        self.config.to_toml()
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|r| r.metric == name && r.step.is_none()).map(|r| r.value)
    }

    /// Per-step series of a metric, ordered by step.
    pub fn series(&self, name: &str) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self
            .metrics
            .iter()
            .filter(|r| r.metric == name)
            .filter_map(|r| r.step.map(|s| (s, r.value)))
            .collect();
        v.sort_by_key(|p| p.0);
        v
    }

    pub fn successes(&self) -> impl Iterator<Item = (usize, &ChainRecord)> {
        self.chains
            .iter()
            .filter_map(|c| c.record.as_ref().ok().map(|r| (c.chain, r)))
    }

    pub fn samples(&self) -> Vec<DVector<f64>> {
        self.successes().map(|(_, r)| r.sample.clone()).collect()
    }

    pub fn n_failed(&self) -> usize {
        self.chains.iter().filter(|c| c.record.is_err()).count()
    }
}

/// Execution settings that do not affect results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses `DAPS_THREADS` or the rayon default.
    pub threads: Option<usize>,
}

impl RunOptions {
    pub fn single_threaded() -> Self {
        Self { threads: Some(1) }
    }

    fn resolved_threads(&self) -> Option<usize> {
        self.threads.or_else(|| {
            std::env::var("DAPS_THREADS")
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .filter(|&n: &usize| n > 0)
        })
    }
}

/// Runs one chain on its own stream `(seed, chain)`.
pub fn run_chain(problem: &Problem, cfg: &ExperimentConfig, chain: usize) -> Result<ChainRecord> {
    let mut rng = chain_rng(cfg.run.seed, chain as u64);
    let (sample, trajectory) = match cfg.sampler.method {
        Method::Daps => daps_sample(&problem.model, &problem.op, &problem.meas, &daps_config(cfg)?, &mut rng)?,
        Method::Dps => dps_sample(&problem.model, &problem.op, &problem.meas, &dps_config(cfg)?, &mut rng)?,
        Method::LatentDaps => latent_daps_sample(
            &problem.truth_prior,
            problem.codec.as_ref().expect("codec resolved for latent runs"),
            &problem.op,
            &problem.meas,
            &latent_config(cfg)?,
            &mut rng,
        )?,
    };
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(DapsError::NonFinite {
            stage: "terminal sample",
            sigma: 0.0,
        });
    }
    let residual = problem.op.residual(&sample, &problem.meas.y)?.norm();
    Ok(ChainRecord {
        sample,
        trajectory,
        residual,
    })
}

fn execute_chains(problem: &Problem, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ChainOutcome>> {
    let work = |chain: usize| ChainOutcome {
        chain,
        record: run_chain(problem, cfg, chain).map_err(|e| e.to_string()),
    };
    let n = cfg.run.chains;
    match opts.resolved_threads() {
        Some(1) => Ok((0..n).map(work).collect()),
        threads => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                builder = builder.num_threads(t);
            }
            let pool = builder
                .build()
                .map_err(|e| DapsError::Config {
                    key: "threads".into(),
                    reason: e.to_string(),
                })?;
            Ok(pool.install(|| (0..n).into_par_iter().map(work).collect()))
        }
    }
}

fn cloud(rows: &[DVector<f64>]) -> Result<PointCloud> {
    let d = rows[0].len();
    PointCloud::uniform(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn compute_metrics(problem: &Problem, cfg: &ExperimentConfig, chains: &[ChainOutcome]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let mut push = |metric: &str, step: Option<usize>, value: f64| {
        rows.push(MetricRow {
            metric: metric.into(),
            step,
            value,
        })
    };
    let ok: Vec<&ChainRecord> = chains.iter().filter_map(|c| c.record.as_ref().ok()).collect();
    push("chains_failed", None, (chains.len() - ok.len()) as f64);
    if ok.is_empty() {
        return Ok(rows);
    }
    let residuals: Vec<f64> = ok.iter().map(|r| r.residual).collect();
    push("residual_mean", None, mean(&residuals));
    push("residual_median", None, median(&residuals));
    push("residual_min", None, residuals.iter().copied().fold(f64::INFINITY, f64::min));

    let n_steps = ok[0].trajectory.len();
    for i in 0..n_steps {
        let r: Vec<f64> = ok.iter().map(|c| c.trajectory.steps[i].residual_x0hat).collect();
        push("residual_x0hat", Some(i), mean(&r));
        let r: Vec<f64> = ok.iter().map(|c| c.trajectory.steps[i].residual_x0y).collect();
        push("residual_x0y", Some(i), mean(&r));
    }
    let jumps: Vec<f64> = ok
        .iter()
        .flat_map(|c| c.trajectory.jump_sizes(&c.sample))
        .collect();
    if !jumps.is_empty() {
        push("jump_median", None, median(&jumps));
    }

    if let Some(gt) = &problem.ground_truth {
        let p: Vec<f64> = ok
            .iter()
            .map(|c| psnr(c.sample.as_slice(), gt.as_slice(), cfg.measurement.psnr_range))
            .collect::<Result<_>>()?;
        push("psnr_mean", None, mean(&p));
        push("psnr_max", None, p.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    if let Some(oracle) = &problem.oracle {
        let o = &cfg.oracle;
        let n_oracle = o.n_samples.unwrap_or(ok.len());
        let mut orng = aux_rng(cfg.run.seed, purpose::ORACLE);
        let mut srng = aux_rng(cfg.run.seed, purpose::SLICES);
        let mut w2 = |a: &PointCloud, b: &PointCloud| -> Result<f64> {
            match o.w2 {
                W2Method::Exact if a.len() == b.len() => wasserstein2_exact(a, b),
                _ => wasserstein2_sliced(a, b, o.n_projections, &mut srng),
            }
        };
        let terminal: Vec<DVector<f64>> = ok.iter().map(|c| c.sample.clone()).collect();
        let reference = oracle.sample(0.0, &mut orng, n_oracle)?;
        push("w2_oracle", None, w2(&cloud(&terminal)?, &reference)?);
        let mode = oracle.mode();
        let near = terminal.iter().filter(|x| (*x - &mode).norm() <= o.mode_radius).count();
        push("near_mode_fraction", None, near as f64 / terminal.len() as f64);
        if o.per_step {
            let sigmas = ok[0].trajectory.sigmas();
            for (i, &sigma) in sigmas.iter().enumerate() {
                let states: Vec<DVector<f64>> = ok.iter().map(|c| c.trajectory.steps[i].x_t.clone()).collect();
                let reference = oracle.sample(sigma, &mut orng, n_oracle)?;
                push("w2_oracle", Some(i), w2(&cloud(&states)?, &reference)?);
            }
            push("w2_oracle", Some(n_steps), w2(&cloud(&terminal)?, &oracle.sample(0.0, &mut orng, n_oracle)?)?);
        }
    }
    Ok(rows)
}

/// Executes `cfg.run.chains` independent chains and evaluates the metrics.
/// A failing chain is recorded and does not abort its siblings.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunResult> {
    let start = Instant::now();
    let problem = Problem::build(cfg)?;
    let chains = execute_chains(&problem, cfg, opts)?;
    let metrics = compute_metrics(&problem, cfg, &chains)?;
    Ok(RunResult {
        run_id: cfg.run.name.clone(),
        config: cfg.clone(),
        chains,
        metrics,
        measurement: problem.meas,
        ground_truth: problem.ground_truth,
        selected: None,
        wall_clock: start.elapsed(),
    })
}

/// Default number of independent samples per problem instance.
pub const DEFAULT_BEST_OF: usize = 4;

/// Runs `k` chains on one problem instance and selects the one with the
/// smallest measurement residual, or the highest PSNR when a ground truth is
/// known.
pub fn best_of_k(cfg: &ExperimentConfig, k: usize, opts: &RunOptions) -> Result<RunResult> {
    if k < 1 {
        return Err(DapsError::Config {
            key: "k".into(),
            reason: "must be at least 1".into(),
        });
    }
    let mut cfg = cfg.clone();
    cfg.run.chains = k;
    let mut result = run_experiment(&cfg, opts)?;
    let range = cfg.measurement.psnr_range;
    let gt = result.ground_truth.clone();
    let score = |r: &ChainRecord| -> f64 {
        match &gt {
            Some(x) => -psnr(r.sample.as_slice(), x.as_slice(), range).unwrap_or(f64::NEG_INFINITY),
            None => r.residual,
        }
    };
    let best = result
        .successes()
        .min_by(|a, b| score(a.1).total_cmp(&score(b.1)))
        .map(|(i, r)| (i, r.residual));
    if let Some((idx, res)) = best {
        result.selected = Some(idx);
        result.metrics.push(MetricRow {
            metric: "selected_residual".into(),
            step: None,
            value: res,
        });
        if let Some(x) = &gt {
            let rec = result.successes().find(|(i, _)| *i == idx).expect("selected chain").1;
            let v = psnr(rec.sample.as_slice(), x.as_slice(), range)?;
            result.metrics.push(MetricRow {
                metric: "selected_psnr".into(),
                step: None,
                value: v,
            });
        }
    }
    Ok(result)
}

/// Sets the numeric key `axis` (dotted `section.key`, or a bare key that is
/// unique across sections) to `value`.
pub fn with_axis(cfg: &ExperimentConfig, axis: &str, value: f64) -> Result<ExperimentConfig> {
    let unknown = |reason: &str| DapsError::Config {
        key: axis.into(),
        reason: reason.into(),
    };
    let mut doc = toml::Value::try_from(cfg).map_err(|e| unknown(&e.to_string()))?;
    let table = doc.as_table_mut().expect("config serialises to a table");
    let (section, key) = match axis.split_once('.') {
        Some((s, k)) => (s.to_string(), k.to_string()),
        None => {
            let owners: Vec<String> = table
                .iter()
                .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(axis)))
                .map(|(s, _)| s.clone())
                .collect();
            match owners.as_slice() {
                [one] => (one.clone(), axis.to_string()),
                [] => {
                    let s = axis_section(axis).ok_or_else(|| unknown("unknown sweep axis"))?;
                    (s.to_string(), axis.to_string())
                }
                _ => return Err(unknown("ambiguous axis; use `section.key`")),
            }
        }
    };
    let sect = table
        .get_mut(&section)
        .and_then(|v| v.as_table_mut())
        .ok_or_else(|| unknown("unknown sweep axis"))?;
    let slot = match sect.get(&key) {
        Some(toml::Value::Integer(_)) => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(unknown("axis is an integer key; value must be a non-negative integer"));
            }
            toml::Value::Integer(value as i64)
        }
        Some(toml::Value::Float(_)) => toml::Value::Float(value),
        Some(_) => return Err(unknown("axis is not numeric")),
        None if axis_section(&key) == Some(section.as_str()) => {
            if is_integer_axis(&key) {
                toml::Value::Integer(value as i64)
            } else {
                toml::Value::Float(value)
            }
        }
        None => return Err(unknown("unknown sweep axis")),
    };
    sect.insert(key, slot);
    let text = toml::to_string(&doc).map_err(|e| unknown(&e.to_string()))?;
    ExperimentConfig::from_toml(&text)
}

/// Optional numeric keys that may be absent from a serialised config.
fn axis_section(key: &str) -> Option<&'static str> {
    match key {
        "latent_dim" | "eta_pixel" | "eta_latent" => Some("sampler"),
        "n_samples" => Some("oracle"),
        "dataset_size" => Some("prior"),
        _ => None,
    }
}

fn is_integer_axis(key: &str) -> bool {
    matches!(key, "latent_dim" | "n_samples" | "dataset_size")
}

/// One sweep row: the axis value and the run-level metrics of that run.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub result: RunResult,
}

/// One run per value of `axis`.
pub fn sweep(cfg: &ExperimentConfig, axis: &str, values: &[f64], opts: &RunOptions) -> Result<Vec<SweepRow>> {
    let cfgs = values
        .iter()
        .map(|&v| with_axis(cfg, axis, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?;
    cfgs.into_iter()
        .map(|(value, mut c)| {
            c.run.name = format!("{}:{axis}={value}", cfg.run.name);
            Ok(SweepRow {
                value,
                result: run_experiment(&c, opts)?,
            })
        })
        .collect()
}
