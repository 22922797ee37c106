//! TOML problem configuration.
//!
//! Matrices are row-major nested arrays; goal and critical regions are
//! inclusive cell-index boxes; exactly one of `confidence.alpha` /
//! `confidence.beta` must be set. The schema string is checked so stale
//! configs fail loudly.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::sampler::NoiseModel;
use super::{ConfidenceSpec, HarnessError, HorizonSpec, ProblemSpec, SamplingPlan};
use crate::geometry::Partition;
use crate::linsys::{InputBox, LinearSystem};

pub const SCHEMA: &str = "pacsynth-config-v1";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema: String,
    name: Option<String>,
    system: SystemConfig,
    partition: PartitionConfig,
    property: PropertyConfig,
    confidence: ConfidenceConfig,
    sampling: SamplingConfig,
    noise: NoiseConfig,
    #[serde(default)]
    scheme: SchemeConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemConfig {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    q: Vec<f64>,
    input_lower: Vec<f64>,
    input_upper: Vec<f64>,
    #[serde(default = "one")]
    group: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionConfig {
    origin: Vec<f64>,
    widths: Vec<f64>,
    counts: Vec<usize>,
    #[serde(default)]
    goal: Vec<IndexBox>,
    #[serde(default)]
    critical: Vec<IndexBox>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexBox {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropertyConfig {
    horizon: HorizonValue,
    eta: f64,
    x0: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum HorizonValue {
    Steps(usize),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfidenceConfig {
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingConfig {
    n0: usize,
    gamma: f64,
    n_max: usize,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SchemeConfig {
    #[serde(default)]
    symmetric: bool,
    /// 0 disables the aggregation scheme.
    #[serde(default)]
    rho: usize,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum NoiseConfig {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Triangular {
        min: Vec<f64>,
        mode: Vec<f64>,
        max: Vec<f64>,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covs: Vec<Vec<Vec<f64>>>,
    },
    File {
        path: PathBuf,
    },
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Config(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::Config(format!(
            "{what}: rows must be nonempty and equally long"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Parse a config file into a problem specification.
pub fn load_config(path: &Path) -> Result<ProblemSpec, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: ConfigFile = toml::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    if cfg.schema != SCHEMA {
        return Err(HarnessError::Config(format!(
            "schema `{}` not supported; expected `{SCHEMA}`",
            cfg.schema
        )));
    }

    let system = LinearSystem::new(
        matrix(&cfg.system.a, "system.a")?,
        matrix(&cfg.system.b, "system.b")?,
        vector(&cfg.system.q),
        InputBox::new(vector(&cfg.system.input_lower), vector(&cfg.system.input_upper))?,
    )?;

    let mut partition = Partition::new(
        vector(&cfg.partition.origin),
        vector(&cfg.partition.widths),
        cfg.partition.counts.clone(),
    )?;
    for b in &cfg.partition.goal {
        partition.add_goal_index_box(&b.lo, &b.hi)?;
    }
    for b in &cfg.partition.critical {
        partition.add_critical_index_box(&b.lo, &b.hi)?;
    }

    let horizon = match &cfg.property.horizon {
        HorizonValue::Steps(k) => HorizonSpec::Steps(*k),
        HorizonValue::Word(w) if w == "inf" => HorizonSpec::Infinite,
        HorizonValue::Word(w) => {
            return Err(HarnessError::Config(format!(
                "property.horizon must be an integer or \"inf\", got `{w}`"
            )))
        }
    };

    let confidence = match (cfg.confidence.alpha, cfg.confidence.beta) {
        (Some(a), None) => ConfidenceSpec::Alpha(a),
        (None, Some(b)) => ConfidenceSpec::Beta(b),
        _ => {
            return Err(HarnessError::Config(
                "set exactly one of confidence.alpha / confidence.beta".into(),
            ))
        }
    };

    let noise = match &cfg.noise {
        NoiseConfig::Gaussian { mean, cov } => NoiseModel::Gaussian {
            mean: vector(mean),
            cov: matrix(cov, "noise.cov")?,
        },
        NoiseConfig::Uniform { lower, upper } => NoiseModel::Uniform {
            lower: vector(lower),
            upper: vector(upper),
        },
        NoiseConfig::Triangular { min, mode, max } => NoiseModel::Triangular {
            min: vector(min),
            mode: vector(mode),
            max: vector(max),
        },
        NoiseConfig::Mixture {
            weights,
            means,
            covs,
        } => NoiseModel::GaussianMixture {
            weights: weights.clone(),
            means: means.iter().map(|m| vector(m)).collect(),
            covs: covs
                .iter()
                .map(|c| matrix(c, "noise.covs"))
                .collect::<Result<_, _>>()?,
        },
        NoiseConfig::File { path: sample_path } => NoiseModel::File {
            path: sample_path.clone(),
        },
    };

    Ok(ProblemSpec {
        name: cfg
            .name
            .unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into()),
        system,
        group: cfg.system.group,
        partition,
        horizon,
        eta: cfg.property.eta,
        x0: vector(&cfg.property.x0),
        confidence,
        sampling: SamplingPlan {
            n0: cfg.sampling.n0,
            gamma: cfg.sampling.gamma,
            n_max: cfg.sampling.n_max,
        },
        noise,
        symmetric: cfg.scheme.symmetric,
        rho: if cfg.scheme.rho == 0 {
            None
        } else {
            Some(cfg.scheme.rho)
        },
    })
}
