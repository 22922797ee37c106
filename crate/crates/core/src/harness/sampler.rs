//! Noise models and sampling.
//!
//! Samplers draw base-step noise vectors; for a grouped system the merged
//! macro-step noise is the dynamics-weighted sum of `g` fresh base draws,
//! `sum_j A^{g-1-j} w_j`, so the grouped noise is i.i.d. whenever the base
//! noise is. File-backed samplers replay recorded samples and never reuse
//! one within (or across) batches; they error out when exhausted.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::abstraction::SampleSet;
use crate::linsys::GroupedSystem;

/// Counter-based generator used for all randomness; a 64-bit seed plus a
/// stream index fully determine every draw.
pub type SeededRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("noise model dimension {got} does not match the state dimension {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("covariance matrix is not positive definite")]
    BadCovariance,
    #[error("mixture weights must be positive and sum to 1")]
    BadWeights,
    #[error("triangular parameters must satisfy min <= mode <= max with min < max")]
    BadTriangular,
    #[error("sample file exhausted after {used} samples; batches never reuse samples")]
    FileExhausted { used: usize },
    #[error("sample file {path}: {msg}")]
    BadFile { path: String, msg: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Declarative description of the base-step noise distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Gaussian {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
    Uniform {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// Independent per-dimension triangular distributions.
    Triangular {
        min: DVector<f64>,
        mode: DVector<f64>,
        max: DVector<f64>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
    },
    /// Recorded samples, one per line, comma separated.
    File { path: PathBuf },
}

impl NoiseModel {
    pub fn is_file(&self) -> bool {
        matches!(self, NoiseModel::File { .. })
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    Gaussian {
        mean: DVector<f64>,
        chol: DMatrix<f64>,
    },
    Uniform {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    Triangular {
        min: DVector<f64>,
        mode: DVector<f64>,
        max: DVector<f64>,
    },
    Mixture {
        cumulative: Vec<f64>,
        comps: Vec<(DVector<f64>, DMatrix<f64>)>,
    },
    File {
        data: Vec<DVector<f64>>,
        cursor: usize,
    },
}

/// A ready-to-draw sampler for one noise model.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    prepared: Prepared,
    dim: usize,
}

fn cholesky_of(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, SamplerError> {
    if cov.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(cov.nrows(), cov.ncols()));
    }
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(SamplerError::BadCovariance)
}

impl NoiseSampler {
    pub fn new(model: &NoiseModel, state_dim: usize) -> Result<Self, SamplerError> {
        let check = |d: usize| {
            if d == state_dim {
                Ok(())
            } else {
                Err(SamplerError::Dimension {
                    got: d,
                    expected: state_dim,
                })
            }
        };
        let prepared = match model {
            NoiseModel::Gaussian { mean, cov } => {
                check(mean.len())?;
                check(cov.nrows())?;
                check(cov.ncols())?;
                Prepared::Gaussian {
                    mean: mean.clone(),
                    chol: cholesky_of(cov)?,
                }
            }
            NoiseModel::Uniform { lower, upper } => {
                check(lower.len())?;
                check(upper.len())?;
                if (0..lower.len()).any(|i| lower[i] > upper[i]) {
                    return Err(SamplerError::BadTriangular);
                }
                Prepared::Uniform {
                    lower: lower.clone(),
                    upper: upper.clone(),
                }
            }
            NoiseModel::Triangular { min, mode, max } => {
                check(min.len())?;
                check(mode.len())?;
                check(max.len())?;
                for i in 0..min.len() {
                    if !(min[i] <= mode[i] && mode[i] <= max[i] && min[i] < max[i]) {
                        return Err(SamplerError::BadTriangular);
                    }
                }
                Prepared::Triangular {
                    min: min.clone(),
                    mode: mode.clone(),
                    max: max.clone(),
                }
            }
            NoiseModel::GaussianMixture {
                weights,
                means,
                covs,
            } => {
                if weights.is_empty()
                    || weights.len() != means.len()
                    || weights.len() != covs.len()
                    || weights.iter().any(|&w| w <= 0.0)
                    || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(SamplerError::BadWeights);
                }
                let mut cumulative = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for &w in weights {
                    acc += w;
                    cumulative.push(acc);
                }
                let comps = means
                    .iter()
                    .zip(covs)
                    .map(|(m, c)| {
                        check(m.len())?;
                        Ok((m.clone(), cholesky_of(c)?))
                    })
                    .collect::<Result<Vec<_>, SamplerError>>()?;
                Prepared::Mixture { cumulative, comps }
            }
            NoiseModel::File { path } => {
                let data = load_samples_csv(path)?;
                if data.is_empty() {
                    return Err(SamplerError::BadFile {
                        path: path.display().to_string(),
                        msg: "no samples".into(),
                    });
                }
                check(data[0].len())?;
                Prepared::File { data, cursor: 0 }
            }
        };
        Ok(Self {
            prepared,
            dim: state_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_file(&self) -> bool {
        matches!(self.prepared, Prepared::File { .. })
    }

    /// Rewind a file-backed sampler; no effect on generative models.
    pub fn reset(&mut self) {
        if let Prepared::File { cursor, .. } = &mut self.prepared {
            *cursor = 0;
        }
    }

    /// One base-step noise vector.
    pub fn sample_base(&mut self, rng: &mut SeededRng) -> Result<DVector<f64>, SamplerError> {
        match &mut self.prepared {
            Prepared::Gaussian { mean, chol } => Ok(gaussian_draw(mean, chol, rng)),
            Prepared::Uniform { lower, upper } => {
                let mut w = DVector::zeros(lower.len());
                for i in 0..lower.len() {
                    w[i] = if lower[i] == upper[i] {
                        lower[i]
                    } else {
                        rng.random_range(lower[i]..upper[i])
                    };
                }
                Ok(w)
            }
            Prepared::Triangular { min, mode, max } => {
                let mut w = DVector::zeros(min.len());
                for i in 0..min.len() {
                    w[i] = triangular_draw(min[i], mode[i], max[i], rng);
                }
                Ok(w)
            }
            Prepared::Mixture { cumulative, comps } => {
                let u: f64 = rng.random();
                let k = cumulative
                    .iter()
                    .position(|&c| u <= c)
                    .unwrap_or(comps.len() - 1);
                let (mean, chol) = &comps[k];
                Ok(gaussian_draw(mean, chol, rng))
            }
            Prepared::File { data, cursor } => {
                if *cursor >= data.len() {
                    return Err(SamplerError::FileExhausted { used: *cursor });
                }
                let w = data[*cursor].clone();
                *cursor += 1;
                Ok(w)
            }
        }
    }

    /// One macro-step noise vector: `sum_j A^{g-1-j} w_j` over `g` fresh
    /// base draws, matching the step-grouped dynamics.
    pub fn sample_grouped(
        &mut self,
        gsys: &GroupedSystem,
        rng: &mut SeededRng,
    ) -> Result<DVector<f64>, SamplerError> {
        let g = gsys.group();
        let a = gsys.base().a();
        let mut acc = DVector::zeros(self.dim);
        for j in 0..g {
            let mut w = self.sample_base(rng)?;
            for _ in 0..(g - 1 - j) {
                w = a * w;
            }
            acc += w;
        }
        Ok(acc)
    }

    /// A batch of `n` i.i.d. macro-step samples.
    pub fn draw_batch(
        &mut self,
        n: usize,
        gsys: &GroupedSystem,
        rng: &mut SeededRng,
    ) -> Result<SampleSet, SamplerError> {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.sample_grouped(gsys, rng)?);
        }
        Ok(SampleSet::new(data, format!("batch n={n}")).expect("n >= 1"))
    }
}

fn gaussian_draw(mean: &DVector<f64>, chol: &DMatrix<f64>, rng: &mut SeededRng) -> DVector<f64> {
    let n = mean.len();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    mean + chol * z
}

fn triangular_draw(min: f64, mode: f64, max: f64, rng: &mut SeededRng) -> f64 {
    let u: f64 = rng.random();
    let cut = (mode - min) / (max - min);
    if u < cut {
        min + ((max - min) * (mode - min) * u).sqrt()
    } else {
        max - ((max - min) * (max - mode) * (1.0 - u)).sqrt()
    }
}

/// Load a samples CSV: one sample per line, comma-separated reals, an
/// optional non-numeric header line.
pub fn load_samples_csv(path: &Path) -> Result<Vec<DVector<f64>>, SamplerError> {
    let text = std::fs::read_to_string(path).map_err(|source| SamplerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse()).collect();
        match fields {
            Ok(v) => out.push(DVector::from_vec(v)),
            Err(_) if lineno == 0 => continue, // header
            Err(_) => {
                return Err(SamplerError::BadFile {
                    path: path.display().to_string(),
                    msg: format!("unparseable line {}", lineno + 1),
                })
            }
        }
    }
    if let Some(first) = out.first() {
        let d = first.len();
        if let Some(i) = out.iter().position(|v| v.len() != d) {
            return Err(SamplerError::BadFile {
                path: path.display().to_string(),
                msg: format!("line {} has {} fields, expected {d}", i + 1, out[i].len()),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{InputBox, LinearSystem};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};
    use rand::SeedableRng;

    fn rng(seed: u64) -> SeededRng {
        SeededRng::seed_from_u64(seed)
    }

    #[test]
    fn gaussian_moments_roughly_match() {
        let model = NoiseModel::Gaussian {
            mean: dvector![1.0, -2.0],
            cov: dmatrix![0.25, 0.1; 0.1, 0.09],
        };
        let mut s = NoiseSampler::new(&model, 2).unwrap();
        let mut r = rng(1);
        let n = 20000;
        let mut mean = dvector![0.0, 0.0];
        let draws: Vec<_> = (0..n).map(|_| s.sample_base(&mut r).unwrap()).collect();
        for w in &draws {
            mean += w;
        }
        mean /= n as f64;
        assert_abs_diff_eq!(mean[0], 1.0, epsilon = 0.02);
        assert_abs_diff_eq!(mean[1], -2.0, epsilon = 0.02);
        let mut var0 = 0.0;
        for w in &draws {
            var0 += (w[0] - mean[0]).powi(2);
        }
        assert_abs_diff_eq!(var0 / n as f64, 0.25, epsilon = 0.02);
    }

    #[test]
    fn triangular_stays_in_range_and_skews() {
        let model = NoiseModel::Triangular {
            min: dvector![-1.0],
            mode: dvector![0.5],
            max: dvector![1.0],
        };
        let mut s = NoiseSampler::new(&model, 1).unwrap();
        let mut r = rng(2);
        let mut mean = 0.0;
        for _ in 0..10000 {
            let w = s.sample_base(&mut r).unwrap();
            assert!(w[0] >= -1.0 && w[0] <= 1.0);
            mean += w[0];
        }
        // triangular mean = (min + mode + max) / 3
        assert_abs_diff_eq!(mean / 10000.0, 0.5 / 3.0, epsilon = 0.02);
    }

    #[test]
    fn mixture_weights_validated() {
        let bad = NoiseModel::GaussianMixture {
            weights: vec![0.5, 0.4],
            means: vec![dvector![0.0], dvector![1.0]],
            covs: vec![dmatrix![1.0], dmatrix![1.0]],
        };
        assert!(matches!(
            NoiseSampler::new(&bad, 1),
            Err(SamplerError::BadWeights)
        ));
    }

    #[test]
    fn grouped_sampling_weights_by_dynamics() {
        // deterministic "noise": uniform with zero-width support
        let model = NoiseModel::Uniform {
            lower: dvector![1.0, 0.0],
            upper: dvector![1.0, 0.0],
        };
        let sys = LinearSystem::new(
            dmatrix![1.0, 1.0; 0.0, 1.0],
            dmatrix![0.5; 1.0],
            dvector![0.0, 0.0],
            InputBox::new(dvector![-4.0], dvector![4.0]).unwrap(),
        )
        .unwrap();
        let g = GroupedSystem::group_steps(&sys, 2).unwrap();
        let mut s = NoiseSampler::new(&model, 2).unwrap();
        let w = s.sample_grouped(&g, &mut rng(3)).unwrap();
        // A * (1, 0) + (1, 0) = (2, 0)
        assert_abs_diff_eq!(w, dvector![2.0, 0.0], epsilon = 1e-12);
    }

    #[test]
    fn file_sampler_never_reuses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noise.csv");
        std::fs::write(&path, "w1,w2\n0.1,0.2\n0.3,0.4\n0.5,0.6\n").unwrap();
        let model = NoiseModel::File { path };
        let mut s = NoiseSampler::new(&model, 2).unwrap();
        let sys = LinearSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            dvector![0.0, 0.0],
            InputBox::new(dvector![-1.0, -1.0], dvector![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        let g = GroupedSystem::group_steps(&sys, 1).unwrap();
        let mut r = rng(4);
        let batch = s.draw_batch(2, &g, &mut r).unwrap();
        assert_eq!(batch.len(), 2);
        let w = s.sample_grouped(&g, &mut r).unwrap();
        assert_abs_diff_eq!(w, dvector![0.5, 0.6], epsilon = 1e-12);
        assert!(matches!(
            s.sample_grouped(&g, &mut r),
            Err(SamplerError::FileExhausted { used: 3 })
        ));
        s.reset();
        let w = s.sample_grouped(&g, &mut r).unwrap();
        assert_abs_diff_eq!(w, dvector![0.1, 0.2], epsilon = 1e-12);
    }
}
