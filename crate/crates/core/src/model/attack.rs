use rand::Rng;

use crate::error::{Error, Result};
use crate::kron::Vector;

use super::distribution::{Moments, NoiseDistribution};
use super::schedule::Schedule;

/// Deception attacks: with probability `λ̄_k` the measurement `z_k` is
/// replaced by the attack noise `w_k`.
#[derive(Clone, Debug)]
pub struct AttackModel {
    pub lambda_bar: Schedule<f64>,
    pub noise: Schedule<NoiseDistribution>,
}

impl AttackModel {
    pub fn new(lambda_bar: Schedule<f64>, noise: Schedule<NoiseDistribution>) -> Self {
        Self { lambda_bar, noise }
    }

    /// No attacks ever succeed; `w` is irrelevant but kept dimensionally valid.
    pub fn none(n_z: usize) -> Self {
        let w = NoiseDistribution::gaussian(crate::kron::Matrix::zeros(n_z, n_z))
            .expect("zero covariance is PSD");
        Self {
            lambda_bar: 0.0.into(),
            noise: w.into(),
        }
    }

    pub fn lambda_bar(&self, k: usize) -> f64 {
        self.lambda_bar.at(k)
    }

    pub fn moments(&self, k: usize) -> Moments {
        self.noise.at(k).moments()
    }

    pub fn n_z(&self) -> usize {
        self.noise.at(1).dim()
    }

    pub fn sample_lambda<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> bool {
        rng.random_bool(self.lambda_bar(k))
    }

    pub fn sample_w<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vector {
        self.noise.at(k).sample(rng)
    }

    /// Validates `λ̄_k ∈ [0,1]` and the attack moments for `1 ≤ k ≤ horizon`.
    pub fn check(&self, horizon: usize) -> Result<()> {
        let varying =
            self.lambda_bar.constant_value().is_none() || self.noise.constant_value().is_none();
        let last = if varying { horizon } else { horizon.min(1) };
        let n = self.n_z();
        for k in 1..=last {
            let l = self.lambda_bar(k);
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidProbability {
                    name: format!("lambda_bar at k={k}"),
                    value: l,
                });
            }
            let w = self.noise.at(k);
            if w.dim() != n {
                return Err(Error::dim(format!("attack noise at k={k}"), n, w.dim()));
            }
            w.moments().validate("attack noise moments")?;
        }
        Ok(())
    }
}
