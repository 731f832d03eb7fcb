//! Slow reference estimators used to certify the recursive ones: a batch
//! least-squares projection assembled directly from the model moments, and
//! a classical Kalman filter on the stacked state `[x; v]` for the jointly
//! Gaussian case.

mod batch;
mod kalman;

pub use batch::{batch_estimate, BatchProjection, MAX_BATCH_HORIZON};
pub use kalman::{KalmanEstimate, KalmanOracle};
