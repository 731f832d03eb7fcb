use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kron::{kron, symmetrizer, Matrix, Vector};
use crate::linalg::{is_psd, psd_sqrt};

/// Tolerance on the probability sum and on the zero-mean condition of
/// discrete noise tables.
pub const DISCRETE_TOLERANCE: f64 = 1e-12;

/// Second, third and fourth order description of a zero-mean vector `a`:
/// `cov = Cov[a]`, `cov12 = Cov[a, a⊗a]`, `cov2 = Cov[a⊗a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub cov: Matrix,
    pub cov12: Matrix,
    pub cov2: Matrix,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            cov: Matrix::zeros(n, n),
            cov12: Matrix::zeros(n, n * n),
            cov2: Matrix::zeros(n * n, n * n),
        }
    }

    /// Zero-mean Gaussian: odd moments vanish and `Cov[a⊗a] = K_{n²}(Σ⊗Σ)`.
    /// For a scalar this is `2σ⁴`.
    pub fn gaussian(cov: &Matrix) -> Self {
        let n = cov.nrows();
        Self {
            cov: cov.clone(),
            cov12: Matrix::zeros(n, n * n),
            cov2: symmetrizer(n) * kron(cov, cov),
        }
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    /// `[[Σ, Σ⁽¹²⁾], [Σ⁽¹²⁾ᵀ, Σ⁽²⁾]]`.
    pub fn composite(&self) -> Matrix {
        let n = self.dim();
        let m = n + n * n;
        let mut out = Matrix::zeros(m, m);
        out.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        out.view_mut((0, n), (n, n * n)).copy_from(&self.cov12);
        out.view_mut((n, 0), (n * n, n))
            .copy_from(&self.cov12.transpose());
        out.view_mut((n, n), (n * n, n * n)).copy_from(&self.cov2);
        out
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let n = self.dim();
        if self.cov.shape() != (n, n)
            || self.cov12.shape() != (n, n * n)
            || self.cov2.shape() != (n * n, n * n)
        {
            return Err(Error::dim(
                what,
                format!("moment blocks for dimension {n}"),
                "inconsistent block shapes",
            ));
        }
        let c = self.composite();
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(what.to_string()));
        }
        let scale = c.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        if !is_psd(&c, 1e-9 * scale, 1e-9 * scale) {
            return Err(Error::ModelInconsistency(format!(
                "composite moment matrix of {what} is not symmetric PSD"
            )));
        }
        Ok(())
    }
}

/// Distributions the simulator can draw from; each knows its own moments.
#[derive(Clone, Debug)]
pub enum NoiseDistribution {
    /// Zero-mean Gaussian with covariance `cov`.
    Gaussian { cov: Matrix, sqrt: Matrix },
    /// Scalar, finitely supported, zero mean. Sampled by inverse CDF.
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
        cdf: Vec<f64>,
    },
}

impl NoiseDistribution {
    pub fn gaussian(cov: Matrix) -> Result<Self> {
        let scale = cov.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        if !cov.is_square() || !is_psd(&cov, 1e-12 * scale, 1e-12 * scale) {
            return Err(Error::ModelInconsistency(
                "Gaussian covariance must be symmetric PSD".into(),
            ));
        }
        let sqrt = psd_sqrt(&cov);
        Ok(NoiseDistribution::Gaussian { cov, sqrt })
    }

    pub fn gaussian_scalar(variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::ModelInconsistency(format!(
                "variance must be non-negative, got {variance}"
            )));
        }
        Self::gaussian(Matrix::from_element(1, 1, variance))
    }

    /// A scalar distribution `P(w = values[i]) = probs[i]`, which must be a
    /// valid probability table with zero mean.
    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::dim(
                "discrete distribution",
                "equal non-empty value/probability lists",
                format!("{} values, {} probabilities", values.len(), probs.len()),
            ));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidProbability {
                    name: format!("probs[{i}]"),
                    value: p,
                });
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DISCRETE_TOLERANCE {
            return Err(Error::InvalidProbability {
                name: "sum of probabilities".into(),
                value: total,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("discrete support".into()));
        }
        let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        if mean.abs() > DISCRETE_TOLERANCE {
            return Err(Error::NonZeroMean(mean));
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(NoiseDistribution::Discrete { values, probs, cdf })
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseDistribution::Gaussian { cov, .. } => cov.nrows(),
            NoiseDistribution::Discrete { .. } => 1,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseDistribution::Gaussian { .. })
    }

    pub fn moments(&self) -> Moments {
        match self {
            NoiseDistribution::Gaussian { cov, .. } => Moments::gaussian(cov),
            NoiseDistribution::Discrete { values, probs, .. } => discrete_moments(values, probs),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            NoiseDistribution::Gaussian { sqrt, .. } => {
                let z = Vector::from_fn(sqrt.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
                sqrt * z
            }
            NoiseDistribution::Discrete { values, cdf, .. } => {
                let u: f64 = rng.random();
                let idx = cdf.iter().position(|&c| u < c).unwrap_or(values.len() - 1);
                Vector::from_element(1, values[idx])
            }
        }
    }
}

fn discrete_moments(values: &[f64], probs: &[f64]) -> Moments {
    let raw = |p: i32| {
        values
            .iter()
            .zip(probs)
            .map(|(v, q)| v.powi(p) * q)
            .sum::<f64>()
    };
    let (m2, m3, m4) = (raw(2), raw(3), raw(4));
    Moments {
        cov: Matrix::from_element(1, 1, m2),
        cov12: Matrix::from_element(1, 1, m3),
        cov2: Matrix::from_element(1, 1, m4 - m2 * m2),
    }
}

/// Closed-form moments of a zero-mean scalar table, e.g. the attack noise
/// `P(w=-8)=1/8, P(w=8/7)=7/8`.
pub fn make_discrete_attack_noise(values: &[f64], probs: &[f64]) -> Result<Moments> {
    Ok(NoiseDistribution::discrete(values.to_vec(), probs.to_vec())?.moments())
}
