use crate::error::Result;
use crate::kron::Matrix;

use super::{
    AttackModel, CorrelatedNoiseModel, LinearEvolution, MeasurementMatrixModel, NoiseDistribution,
    SignalModel, SystemModel,
};

/// Scalar AR(1) signal observed through `H_k = c·θ_k` with AR(1) noise and a
/// discrete attack table. `Default` gives the reference simulation setup.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarScenario {
    pub phi: f64,
    pub x0_var: f64,
    pub eps_var: f64,
    pub c: f64,
    pub theta_bar: f64,
    pub d: f64,
    pub v0_var: f64,
    pub u_var: f64,
    pub lambda_bar: f64,
    pub attack_values: Vec<f64>,
    pub attack_probs: Vec<f64>,
}

impl Default for ScalarScenario {
    fn default() -> Self {
        Self {
            phi: 0.95,
            x0_var: 0.1,
            eps_var: 0.1,
            c: 0.9,
            theta_bar: 0.5,
            d: 0.75,
            v0_var: 0.1,
            u_var: 0.01,
            lambda_bar: 0.5,
            attack_values: vec![-8.0, 8.0 / 7.0],
            attack_probs: vec![1.0 / 8.0, 7.0 / 8.0],
        }
    }
}

impl ScalarScenario {
    pub fn with_theta_bar(mut self, theta_bar: f64) -> Self {
        self.theta_bar = theta_bar;
        self
    }

    pub fn with_lambda_bar(mut self, lambda_bar: f64) -> Self {
        self.lambda_bar = lambda_bar;
        self
    }

    /// Certain measurements and no attacks: everything is jointly Gaussian.
    pub fn gaussian() -> Self {
        Self::default().with_theta_bar(1.0).with_lambda_bar(0.0)
    }

    pub fn evolution(&self) -> Result<LinearEvolution> {
        Ok(LinearEvolution {
            phi: Matrix::from_element(1, 1, self.phi).into(),
            x0: NoiseDistribution::gaussian_scalar(self.x0_var)?,
            eps: NoiseDistribution::gaussian_scalar(self.eps_var)?.into(),
        })
    }

    pub fn build(&self, horizon: usize) -> Result<SystemModel> {
        let signal = SignalModel::build_from_linear_evolution(self.evolution()?, horizon)?;
        let meas = MeasurementMatrixModel::scalar_bernoulli(self.c, self.theta_bar)?;
        let noise = CorrelatedNoiseModel::new(
            Matrix::from_element(1, 1, self.d).into(),
            NoiseDistribution::gaussian_scalar(self.u_var)?.into(),
            NoiseDistribution::gaussian_scalar(self.v0_var)?,
        )?;
        let attack = AttackModel::new(
            self.lambda_bar.into(),
            NoiseDistribution::discrete(self.attack_values.clone(), self.attack_probs.clone())?
                .into(),
        );
        SystemModel::new(signal, meas, noise, attack, horizon)
    }
}
