use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kron::{kron, kron_power2_mat, unvec, vec, Matrix};

use super::schedule::Schedule;

/// Draws one realization of `H_k`.
pub type HSampler = Arc<dyn Fn(usize, &mut dyn RngCore) -> Matrix + Send + Sync>;

/// Moment model of the random measurement matrices `H_k`, represented by the
/// means `E[H_k]`, `E[H_k⁽²⁾]` and three quadratic-expectation operators.
#[derive(Clone, Debug)]
pub struct MeasurementMatrixModel {
    n_z: usize,
    n_x: usize,
    kind: MeasurementKind,
}

#[derive(Clone)]
enum MeasurementKind {
    Deterministic(Schedule<Matrix>),
    ScalarBernoulli {
        c: f64,
        theta_bar: f64,
    },
    Empirical {
        moments: Box<EmpiricalMoments>,
        sampler: HSampler,
    },
}

impl fmt::Debug for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementKind::Deterministic(h) => f.debug_tuple("Deterministic").field(h).finish(),
            MeasurementKind::ScalarBernoulli { c, theta_bar } => f
                .debug_struct("ScalarBernoulli")
                .field("c", c)
                .field("theta_bar", theta_bar)
                .finish(),
            MeasurementKind::Empirical { moments, .. } => {
                f.debug_tuple("Empirical").field(moments).finish()
            }
        }
    }
}

/// Sample averages of `H`, `H⁽²⁾`, `H⊗H`, `H⁽²⁾⊗H` and `H⁽²⁾⊗H⁽²⁾`.
#[derive(Clone, Debug, PartialEq)]
struct EmpiricalMoments {
    h: Matrix,
    h2: Matrix,
    h_h: Matrix,
    h2_h: Matrix,
    h2_h2: Matrix,
}

impl MeasurementMatrixModel {
    pub fn deterministic(h: Matrix) -> Self {
        let (n_z, n_x) = h.shape();
        Self {
            n_z,
            n_x,
            kind: MeasurementKind::Deterministic(h.into()),
        }
    }

    /// Known time-varying `H_k` with the given constant shape.
    pub fn deterministic_varying(n_z: usize, n_x: usize, h: Schedule<Matrix>) -> Self {
        Self {
            n_z,
            n_x,
            kind: MeasurementKind::Deterministic(h),
        }
    }

    /// `H_k = c·θ_k` with `θ_k ~ Bernoulli(θ̄)`, scalar signal and measurement.
    pub fn scalar_bernoulli(c: f64, theta_bar: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta_bar) {
            return Err(Error::InvalidProbability {
                name: "theta_bar".into(),
                value: theta_bar,
            });
        }
        if !c.is_finite() {
            return Err(Error::NonFinite("measurement gain c".into()));
        }
        Ok(Self {
            n_z: 1,
            n_x: 1,
            kind: MeasurementKind::ScalarBernoulli { c, theta_bar },
        })
    }

    /// Estimates every moment by averaging `n_samples` draws of a
    /// time-invariant sampler with a fixed seed.
    pub fn empirical(sampler: HSampler, n_samples: usize, seed: u64) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::Config(
                "empirical measurement model needs at least one sample".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = sampler(1, &mut rng);
        let (n_z, n_x) = first.shape();
        let (z2, x2) = (n_z * n_z, n_x * n_x);
        let mut m = EmpiricalMoments {
            h: Matrix::zeros(n_z, n_x),
            h2: Matrix::zeros(z2, x2),
            h_h: Matrix::zeros(z2, x2),
            h2_h: Matrix::zeros(z2 * n_z, x2 * n_x),
            h2_h2: Matrix::zeros(z2 * z2, x2 * x2),
        };
        let mut accumulate = |h: &Matrix| -> Result<()> {
            if h.shape() != (n_z, n_x) {
                return Err(Error::dim(
                    "sampled H",
                    format!("{n_z}x{n_x}"),
                    format!("{:?}", h.shape()),
                ));
            }
            let h2 = kron_power2_mat(h);
            m.h += h;
            m.h_h += &h2;
            m.h2_h += kron(&h2, h);
            m.h2_h2 += kron(&h2, &h2);
            m.h2 += h2;
            Ok(())
        };
        accumulate(&first)?;
        for _ in 1..n_samples {
            accumulate(&sampler(1, &mut rng))?;
        }
        let n = n_samples as f64;
        for block in [&mut m.h, &mut m.h2, &mut m.h_h, &mut m.h2_h, &mut m.h2_h2] {
            *block /= n;
        }
        Ok(Self {
            n_z,
            n_x,
            kind: MeasurementKind::Empirical {
                moments: Box::new(m),
                sampler,
            },
        })
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// True when `H_k` carries no randomness.
    pub fn is_deterministic(&self) -> bool {
        match &self.kind {
            MeasurementKind::Deterministic(_) => true,
            MeasurementKind::ScalarBernoulli { c, theta_bar } => {
                *theta_bar == 1.0 || *theta_bar == 0.0 || *c == 0.0
            }
            MeasurementKind::Empirical { .. } => false,
        }
    }

    /// `H̄_k`.
    pub fn mean_h(&self, k: usize) -> Matrix {
        match &self.kind {
            MeasurementKind::Deterministic(h) => h.at(k),
            MeasurementKind::ScalarBernoulli { c, theta_bar } => {
                Matrix::from_element(1, 1, c * theta_bar)
            }
            MeasurementKind::Empirical { moments, .. } => moments.h.clone(),
        }
    }

    /// `E[H_k⁽²⁾]`.
    pub fn mean_h2(&self, k: usize) -> Matrix {
        match &self.kind {
            MeasurementKind::Deterministic(h) => kron_power2_mat(&h.at(k)),
            MeasurementKind::ScalarBernoulli { c, theta_bar } => {
                Matrix::from_element(1, 1, c * c * theta_bar)
            }
            MeasurementKind::Empirical { moments, .. } => moments.h2.clone(),
        }
    }

    /// `E[H_k M H_kᵀ]` for `M` of size `n_x × n_x`.
    pub fn exp_h_m_ht(&self, k: usize, m: &Matrix) -> Matrix {
        match &self.kind {
            MeasurementKind::Deterministic(h) => {
                let h = h.at(k);
                &h * m * h.transpose()
            }
            MeasurementKind::ScalarBernoulli { c, theta_bar } => m * (c * c * theta_bar),
            MeasurementKind::Empirical { moments, .. } => {
                unvec(&(&moments.h_h * vec(m)), self.n_z, self.n_z)
            }
        }
    }

    /// `E[H_k M (H_k⁽²⁾)ᵀ]` for `M` of size `n_x × n_x²`.
    pub fn exp_h_m_h2t(&self, k: usize, m: &Matrix) -> Matrix {
        match &self.kind {
            MeasurementKind::Deterministic(h) => {
                let h = h.at(k);
                &h * m * kron_power2_mat(&h).transpose()
            }
            MeasurementKind::ScalarBernoulli { c, theta_bar } => m * (c.powi(3) * theta_bar),
            MeasurementKind::Empirical { moments, .. } => {
                unvec(&(&moments.h2_h * vec(m)), self.n_z, self.n_z * self.n_z)
            }
        }
    }

    /// `E[H_k⁽²⁾ M (H_k⁽²⁾)ᵀ]` for `M` of size `n_x² × n_x²`.
    pub fn exp_h2_m_h2t(&self, k: usize, m: &Matrix) -> Matrix {
        match &self.kind {
            MeasurementKind::Deterministic(h) => {
                let h2 = kron_power2_mat(&h.at(k));
                &h2 * m * h2.transpose()
            }
            MeasurementKind::ScalarBernoulli { c, theta_bar } => m * (c.powi(4) * theta_bar),
            MeasurementKind::Empirical { moments, .. } => {
                let z2 = self.n_z * self.n_z;
                unvec(&(&moments.h2_h2 * vec(m)), z2, z2)
            }
        }
    }

    /// `E[H̃_k M H̃_kᵀ]`.
    pub fn centered_h_m_ht(&self, k: usize, m: &Matrix) -> Matrix {
        let hb = self.mean_h(k);
        self.exp_h_m_ht(k, m) - &hb * m * hb.transpose()
    }

    /// `E[H̃_k⁽²⁾ M H̃_k⁽²⁾ᵀ]` with `H̃⁽²⁾ = H⁽²⁾ − E[H⁽²⁾]`.
    pub fn centered_h2_m_h2t(&self, k: usize, m: &Matrix) -> Matrix {
        let hb2 = self.mean_h2(k);
        self.exp_h2_m_h2t(k, m) - &hb2 * m * hb2.transpose()
    }

    /// One realization of `H_k`.
    pub fn sample_h<R: RngCore>(&self, k: usize, rng: &mut R) -> Matrix {
        match &self.kind {
            MeasurementKind::Deterministic(h) => h.at(k),
            MeasurementKind::ScalarBernoulli { c, theta_bar } => {
                let theta = rand::Rng::random_bool(rng, *theta_bar);
                Matrix::from_element(1, 1, if theta { *c } else { 0.0 })
            }
            MeasurementKind::Empirical { sampler, .. } => sampler(k, rng),
        }
    }

    /// `(c, θ̄)` for the scalar Bernoulli model.
    pub fn bernoulli_parameters(&self) -> Option<(f64, f64)> {
        match self.kind {
            MeasurementKind::ScalarBernoulli { c, theta_bar } => Some((c, theta_bar)),
            _ => None,
        }
    }
}
