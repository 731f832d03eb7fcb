use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::kron::{Matrix, Vector};

use super::EstimatorDesign;

/// Innovations kept for smoothers that start after the filter has moved on.
pub const DEFAULT_HISTORY_DEPTH: usize = 64;

/// Data-dependent carriers of the filter after step `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub k: usize,
    /// `e_k`
    pub e: Vector,
    /// `x̂_{k/k}`
    pub x_hat: Vector,
    /// `μ_k`, absent before the first step.
    pub innovation: Option<Vector>,
}

/// Online filter over a shared [`EstimatorDesign`].
#[derive(Clone, Debug)]
pub struct Filter<'a> {
    design: &'a EstimatorDesign,
    state: FilterState,
    history: VecDeque<(usize, Vector)>,
    depth: usize,
}

impl<'a> Filter<'a> {
    pub fn new(design: &'a EstimatorDesign) -> Self {
        Self::with_history_depth(design, DEFAULT_HISTORY_DEPTH)
    }

    pub fn with_history_depth(design: &'a EstimatorDesign, depth: usize) -> Self {
        Self {
            design,
            state: FilterState {
                k: 0,
                e: Vector::zeros(design.carrier_dim()),
                x_hat: Vector::zeros(design.n_x()),
                innovation: None,
            },
            history: VecDeque::with_capacity(depth.min(1024)),
            depth,
        }
    }

    pub fn design(&self) -> &'a EstimatorDesign {
        self.design
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    /// Processes the raw measurement `y_k` for `k = state.k + 1`:
    ///
    /// ```text
    /// μ_k = 𝐲_k − (1-λ̄_k) P_k e_{k-1}
    /// e_k = e_{k-1} + Ψ_k Π_k⁻¹ μ_k
    /// x̂_{k/k} = R_k e_k
    /// ```
    pub fn step(&mut self, y: &Vector) -> Result<&FilterState> {
        let k = self.state.k + 1;
        let ds = self.design.step(k)?;
        let obs = self.design.observation(k, y)?;
        let mu = obs - &ds.p * &self.state.e * (1.0 - ds.lambda_bar);
        self.state.e += &ds.gain * &mu;
        self.state.x_hat = &ds.readout * &self.state.e;
        self.state.k = k;
        if self.depth > 0 {
            if self.history.len() == self.depth {
                self.history.pop_front();
            }
            self.history.push_back((k, mu.clone()));
        }
        self.state.innovation = Some(mu);
        Ok(&self.state)
    }

    /// `x̂_{k/k}` and `Σ̂_{k/k}` at the current step.
    pub fn estimate(&self) -> Result<(&Vector, &Matrix)> {
        Ok((&self.state.x_hat, self.design.filter_cov(self.state.k)?))
    }

    /// The innovation `μ_j` if it is still in the history buffer.
    pub fn innovation(&self, j: usize) -> Result<&Vector> {
        self.history
            .iter()
            .rev()
            .find(|(k, _)| *k == j)
            .map(|(_, mu)| mu)
            .ok_or(Error::MissingHistory(j))
    }
}
