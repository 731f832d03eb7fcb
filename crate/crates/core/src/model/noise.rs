use crate::error::{Error, Result};
use crate::kron::Matrix;
use crate::linalg::reciprocal_condition;

use super::distribution::{Moments, NoiseDistribution};
use super::schedule::Schedule;

/// Transitions with a smaller reciprocal condition number are rejected.
pub const MIN_RECIPROCAL_CONDITION: f64 = 1e-14;

/// `v_k = D_{k-1} v_{k-1} + u_{k-1}` with white `u` and zero-mean `v_0`.
#[derive(Clone, Debug)]
pub struct CorrelatedNoiseModel {
    pub transition: Schedule<Matrix>,
    pub driver: Schedule<NoiseDistribution>,
    pub initial: NoiseDistribution,
}

impl CorrelatedNoiseModel {
    pub fn new(
        transition: Schedule<Matrix>,
        driver: Schedule<NoiseDistribution>,
        initial: NoiseDistribution,
    ) -> Result<Self> {
        initial.moments().validate("initial noise moments")?;
        Ok(Self {
            transition,
            driver,
            initial,
        })
    }

    pub fn n_z(&self) -> usize {
        self.initial.dim()
    }

    pub fn d(&self, k: usize) -> Matrix {
        self.transition.at(k)
    }

    pub fn driver_moments(&self, k: usize) -> Moments {
        self.driver.at(k).moments()
    }

    pub fn initial_moments(&self) -> Moments {
        self.initial.moments()
    }

    /// Checks shapes and conditioning of `D_k` and `u_k` for `k < horizon`.
    pub fn check(&self, horizon: usize) -> Result<()> {
        let n = self.n_z();
        let steps = if self.transition.constant_value().is_some()
            && self.driver.constant_value().is_some()
        {
            horizon.min(1)
        } else {
            horizon
        };
        for k in 0..steps {
            let d = self.d(k);
            if d.shape() != (n, n) {
                return Err(Error::dim(
                    format!("noise transition D at k={k}"),
                    format!("{n}x{n}"),
                    format!("{:?}", d.shape()),
                ));
            }
            let rcond = reciprocal_condition(&d);
            log::debug!("noise transition D at k={k}: reciprocal condition {rcond:e}");
            if !(rcond >= MIN_RECIPROCAL_CONDITION) {
                return Err(Error::Singular(format!(
                    "noise transition D at k={k} (reciprocal condition {rcond:e})"
                )));
            }
            let u = self.driver.at(k);
            if u.dim() != n {
                return Err(Error::dim(format!("noise driver u at k={k}"), n, u.dim()));
            }
            u.moments().validate("noise driver moments")?;
        }
        Ok(())
    }
}
