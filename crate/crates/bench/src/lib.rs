//! Shared inputs for the benchmarks in `benches/`.

use quadest::simulator::sample_trajectory;
use quadest::{Result, ScalarScenario, SystemModel, Vector};

/// The reference scalar model with `θ̄ = λ̄ = 0.5`.
pub fn reference_model(horizon: usize) -> Result<SystemModel> {
    ScalarScenario::default().build(horizon)
}

/// One sampled measurement sequence of length `horizon`.
pub fn measurements(model: &SystemModel, horizon: usize, seed: u64) -> Result<Vec<Vector>> {
    Ok(sample_trajectory(model, horizon, seed)?.measurements())
}
