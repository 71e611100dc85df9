use super::config::ExperimentConfig;
use crate::error::{DapsError, Result};

const APPENDIX_E_COMMON: &str = r#"
# Samplers score a 1000-point dataset drawn from the mixture; oracles use the
# mixture itself.
[prior]
model = "empirical"
dataset_size = 1000
weights = [0.5, 0.5]
means = [[-0.3, -0.4], [0.6, 0.5]]
variances = [[0.01, 0.04], [0.01, 0.04]]

[operator]
kind = "gauss_bumps2d"
centers = [[0.0, 0.0], [0.5, 0.5]]
width = 0.05

# The bump sum is about 1 at both centres, so y = 1 places the likelihood
# modes at (0, 0) and (0.5, 0.5).
[measurement]
y = [1.0]
beta_true = 0.3
beta_model = 0.3

[oracle]
kind = "grid2d"
resolution = 400
per_step = true
"#;

const APPENDIX_E_DAPS: &str = r#"
[run]
name = "appendix_e_daps"
chains = 100

[sampler]
method = "daps"
sigma_max = 10.0
n_anneal = 200
n_ode = 5
langevin_steps = 100
# grid search over {1e-4, 5e-4, 1e-3} on oracle W2
eta = 1e-3
"#;

const APPENDIX_E_DPS_SDE: &str = r#"
[run]
name = "appendix_e_dps_sde"
chains = 100

[sampler]
method = "dps"
dps_variant = "sde"
sigma_max = 10.0
n_anneal = 200
# best oracle W2 over {1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1}
zeta = 3e-3
"#;

const APPENDIX_E_DPS_ODE: &str = r#"
[run]
name = "appendix_e_dps_ode"
chains = 100

[sampler]
method = "dps"
dps_variant = "ode"
sigma_max = 10.0
n_anneal = 200
# best oracle W2 over {1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1}
zeta = 1e-3
"#;

const PHASE_RETRIEVAL_DESK: &str = r#"
[run]
name = "phase_retrieval_desk"
chains = 4

[prior]
weights = [0.5, 0.5]
means = [
  [0.0, 0.38, 0.71, 0.92, 1.0, 0.92, 0.71, 0.38, 0.0, -0.38, -0.71, -0.92, -1.0, -0.92, -0.71, -0.38],
  [-0.6, -0.6, -0.6, -0.6, 0.6, 0.6, 0.6, 0.6, -0.6, -0.6, -0.6, -0.6, 0.6, 0.6, 0.6, 0.6],
]
variances = [
  [0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01],
  [0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01],
]

[operator]
kind = "dft_magnitude"
oversample = 2.0

[measurement]
ground_truth_from_prior = true
beta_true = 0.05
beta_model = 0.01

[sampler]
method = "daps"
sigma_max = 10.0
n_anneal = 100
n_ode = 5
langevin_steps = 100
eta = 5e-5
"#;

const CONJUGATE_GAUSSIAN: &str = r#"
[run]
name = "conjugate_gaussian"
chains = 2000

# One broad direction dominates the posterior covariance.
[prior]
weights = [1.0]
means = [[3.0, -2.0, 1.0]]
variances = [[4.0, 0.1, 0.05]]

[operator]
kind = "mask"
keep = [0, 1]

[measurement]
y = [2.0, -1.5]
beta_true = 1.0
beta_model = 1.0

# n_ode = 1 is the Tweedie mean, the exact centre of p(x0 | x_t) here; a
# larger Langevin step inflates the posterior spread.
[sampler]
method = "daps"
sigma_max = 10.0
n_anneal = 100
n_ode = 1
langevin_steps = 500
eta = 1e-3

[oracle]
kind = "conjugate"
"#;

struct Entry {
    name: &'static str,
    about: &'static str,
    common: &'static str,
    body: &'static str,
}

const PRESETS: &[Entry] = &[
    Entry {
        name: "appendix_e_daps",
        about: "2D two-bump problem, annealing sampler, grid oracle",
        common: APPENDIX_E_COMMON,
        body: APPENDIX_E_DAPS,
    },
    Entry {
        name: "appendix_e_dps_sde",
        about: "2D two-bump problem, DPS baseline on the reverse SDE",
        common: APPENDIX_E_COMMON,
        body: APPENDIX_E_DPS_SDE,
    },
    Entry {
        name: "appendix_e_dps_ode",
        about: "2D two-bump problem, DPS baseline on the probability-flow ODE",
        common: APPENDIX_E_COMMON,
        body: APPENDIX_E_DPS_ODE,
    },
    Entry {
        name: "phase_retrieval_desk",
        about: "16-sample signal from oversampled Fourier magnitudes",
        common: "",
        body: PHASE_RETRIEVAL_DESK,
    },
    Entry {
        name: "conjugate_gaussian",
        about: "Gaussian prior under a coordinate mask, closed-form oracle",
        common: "",
        body: CONJUGATE_GAUSSIAN,
    },
];

pub fn preset_names() -> Vec<(&'static str, &'static str)> {
    PRESETS.iter().map(|e| (e.name, e.about)).collect()
}

/// Configuration text of a bundled preset.
pub fn preset_text(name: &str) -> Result<String> {
    PRESETS
        .iter()
        .find(|e| e.name == name)
        .map(|e| format!("{}{}", e.body.trim_start(), e.common))
        .ok_or_else(|| DapsError::Config {
            key: "preset".into(),
            reason: format!(
                "unknown preset `{name}`; available: {}",
                PRESETS.iter().map(|e| e.name).collect::<Vec<_>>().join(", ")
            ),
        })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(&preset_text(name)?)
}
