//! Model records: signal covariance factors, random measurement matrices,
//! time-correlated additive noise and deception attacks.

mod attack;
mod distribution;
mod measurement;
mod noise;
mod scenario;
mod schedule;
mod signal;

pub use attack::AttackModel;
pub use distribution::{
    make_discrete_attack_noise, Moments, NoiseDistribution, DISCRETE_TOLERANCE,
};
pub use measurement::{HSampler, MeasurementMatrixModel};
pub use noise::{CorrelatedNoiseModel, MIN_RECIPROCAL_CONDITION};
pub use scenario::ScalarScenario;
pub use schedule::Schedule;
pub use signal::{
    FactorWidths, LinearEvolution, SignalFactors, SignalModel, FACTOR_OVERFLOW_LIMIT,
};

use crate::error::{Error, Result};

/// Complete moment description of signal, measurement matrices, noise and
/// attacks. The components are assumed mutually independent.
#[derive(Clone, Debug)]
pub struct SystemModel {
    signal: SignalModel,
    meas: MeasurementMatrixModel,
    noise: CorrelatedNoiseModel,
    attack: AttackModel,
    horizon: usize,
}

impl SystemModel {
    pub fn new(
        signal: SignalModel,
        meas: MeasurementMatrixModel,
        noise: CorrelatedNoiseModel,
        attack: AttackModel,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if signal.horizon() < horizon {
            return Err(Error::HorizonExceeded {
                k: horizon,
                horizon: signal.horizon(),
            });
        }
        if meas.n_x() != signal.n_x() {
            return Err(Error::dim(
                "measurement matrix columns",
                signal.n_x(),
                meas.n_x(),
            ));
        }
        let n_z = meas.n_z();
        if noise.n_z() != n_z {
            return Err(Error::dim("additive noise dimension", n_z, noise.n_z()));
        }
        if attack.n_z() != n_z {
            return Err(Error::dim("attack noise dimension", n_z, attack.n_z()));
        }
        noise.check(horizon)?;
        attack.check(horizon)?;
        Ok(Self {
            signal,
            meas,
            noise,
            attack,
            horizon,
        })
    }

    pub fn signal(&self) -> &SignalModel {
        &self.signal
    }

    pub fn meas(&self) -> &MeasurementMatrixModel {
        &self.meas
    }

    pub fn noise(&self) -> &CorrelatedNoiseModel {
        &self.noise
    }

    pub fn attack(&self) -> &AttackModel {
        &self.attack
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_x(&self) -> usize {
        self.signal.n_x()
    }

    pub fn n_z(&self) -> usize {
        self.meas.n_z()
    }
}
