use crate::error::{Error, Result};
use crate::kron::{symmetrize, Matrix, Vector};

use super::{EstimatorDesign, Filter};

/// Fixed-point smoother carriers for one fixed `k`, advanced one lookahead
/// step at a time:
///
/// ```text
/// S̆_{k,k+N} = (1-λ̄_{k+N}) ((𝔹̆_k | 0) − M_{k,k+N-1}) P_{k+N}ᵀ
/// x̂_{k/k+N} = x̂_{k/k+N-1} + S̆ Π⁻¹ μ_{k+N}
/// Σ̂_{k/k+N} = Σ̂_{k/k+N-1} − S̆ Π⁻¹ S̆ᵀ
/// M_{k,k+N} = M_{k,k+N-1} + S̆ Π⁻¹ Ψ_{k+N}ᵀ,   M_k = (𝔸̆_k | 0) T_k
/// ```
#[derive(Clone, Debug)]
pub struct SmootherTracker {
    pub k: usize,
    pub n: usize,
    pub x_hat: Vector,
    pub sigma: Matrix,
    pub m: Matrix,
    /// `S̆_{k,k+N}` of the last update.
    pub s_breve: Matrix,
    readout_s: Matrix,
}

impl SmootherTracker {
    /// Starts from the filter output at `k`.
    pub fn new(design: &EstimatorDesign, k: usize, x_filter: &Vector) -> Result<Self> {
        let ds = design.step(k)?;
        Ok(Self {
            k,
            n: 0,
            x_hat: x_filter.clone(),
            sigma: ds.filter_cov.clone(),
            m: &ds.readout * &ds.t,
            s_breve: Matrix::zeros(design.n_x(), ds.p.nrows()),
            readout_s: ds.readout_s.clone(),
        })
    }

    /// Advances to `N + 1`. Without an innovation only the covariance part
    /// is updated.
    pub fn advance(&mut self, design: &EstimatorDesign, mu: Option<&Vector>) -> Result<Matrix> {
        let j = self.k + self.n + 1;
        let ds = design.step(j)?;
        self.s_breve = (&self.readout_s - &self.m) * ds.p.transpose() * (1.0 - ds.lambda_bar);
        let gain = ds.pi_inv.solve_right(&self.s_breve);
        self.sigma = symmetrize(&(&self.sigma - &gain * self.s_breve.transpose()));
        self.m += &gain * ds.psi.transpose();
        if let Some(mu) = mu {
            self.x_hat += &gain * mu;
        }
        self.n += 1;
        Ok(gain)
    }

    /// Advances using the next innovation recorded by `filter`.
    pub fn advance_from(&mut self, filter: &Filter<'_>) -> Result<()> {
        let mu = filter.innovation(self.k + self.n + 1)?.clone();
        self.advance(filter.design(), Some(&mu)).map(|_| ())
    }
}

/// Gain `S̆_{k,k+N} Π_{k+N}⁻¹` and error covariance `Σ̂_{k/k+N}` for one `N`.
#[derive(Clone, Debug)]
pub struct SmootherStep {
    pub gain: Matrix,
    pub cov: Matrix,
}

/// Offline part of the fixed-point smoother at `k` for `N = 1..=n_max`.
#[derive(Clone, Debug)]
pub struct FixedPointSmootherDesign {
    k: usize,
    filter_cov: Matrix,
    steps: Vec<SmootherStep>,
}

impl FixedPointSmootherDesign {
    pub fn new(design: &EstimatorDesign, k: usize, n_max: usize) -> Result<Self> {
        if k + n_max > design.horizon() {
            return Err(Error::HorizonExceeded {
                k: k + n_max,
                horizon: design.horizon(),
            });
        }
        let mut tracker = SmootherTracker::new(design, k, &Vector::zeros(design.n_x()))?;
        let mut steps = Vec::with_capacity(n_max);
        for _ in 0..n_max {
            let gain = tracker.advance(design, None)?;
            steps.push(SmootherStep {
                gain,
                cov: tracker.sigma.clone(),
            });
        }
        Ok(Self {
            k,
            filter_cov: design.filter_cov(k)?.clone(),
            steps,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_max(&self) -> usize {
        self.steps.len()
    }

    /// `Σ̂_{k/k+N}`; `N = 0` gives the filter covariance.
    pub fn cov(&self, n: usize) -> Result<&Matrix> {
        if n == 0 {
            return Ok(&self.filter_cov);
        }
        self.steps
            .get(n - 1)
            .map(|s| &s.cov)
            .ok_or(Error::HorizonExceeded {
                k: self.k + n,
                horizon: self.k + self.n_max(),
            })
    }

    pub fn steps(&self) -> &[SmootherStep] {
        &self.steps
    }
}

/// Online fixed-point smoother over a shared design.
#[derive(Clone, Debug)]
pub struct FixedPointSmoother<'a> {
    design: &'a FixedPointSmootherDesign,
    x_hat: Vector,
    n: usize,
}

impl<'a> FixedPointSmoother<'a> {
    /// Starts from `x̂_{k/k}`.
    pub fn new(design: &'a FixedPointSmootherDesign, x_filter: &Vector) -> Self {
        Self {
            design,
            x_hat: x_filter.clone(),
            n: 0,
        }
    }

    /// Feeds `μ_{k+N+1}`; returns `false` once `n_max` is reached.
    pub fn update(&mut self, mu: &Vector) -> bool {
        match self.design.steps.get(self.n) {
            Some(step) => {
                self.x_hat += &step.gain * mu;
                self.n += 1;
                true
            }
            None => false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `x̂_{k/k+N}` for the current `N`.
    pub fn estimate(&self) -> &Vector {
        &self.x_hat
    }

    pub fn is_done(&self) -> bool {
        self.n == self.design.n_max()
    }
}
