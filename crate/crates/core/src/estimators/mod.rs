//! Recursive least-squares filters and fixed-point smoothers.
//!
//! Both the quadratic estimator (linear estimation from the augmented
//! observations `[y_k; y_k⊗y_k]`) and the linear estimator share one
//! innovation recursion. Everything that does not depend on the observations
//! (`Ψ_k`, `Π_k`, `T_k`, gains and error covariances) is computed once in an
//! [`EstimatorDesign`]; [`Filter`] and [`FixedPointSmoother`] only carry the
//! data-dependent vectors, so many trajectories can share one design.

mod filter;
mod smoother;
mod trace;

pub use filter::{Filter, FilterState, DEFAULT_HISTORY_DEPTH};
pub use smoother::{FixedPointSmoother, FixedPointSmootherDesign, SmootherStep, SmootherTracker};
pub use trace::TraceWriter;

use std::fmt;
use std::str::FromStr;

use crate::augmented_stats::{AugmentedStatistics, StepStatistics};
use crate::error::{Error, Result};
use crate::kron::{augment, hcat, symmetrize, Matrix, Vector};
use crate::linalg::SymmetricInverse;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Linear,
    Quadratic,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 2] = [EstimatorKind::Linear, EstimatorKind::Quadratic];

    /// Short label used in CSV output.
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Linear => "lin",
            EstimatorKind::Quadratic => "quad",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lin" | "linear" => Ok(EstimatorKind::Linear),
            "quad" | "quadratic" => Ok(EstimatorKind::Quadratic),
            other => Err(Error::Config(format!(
                "unknown estimator '{other}' (expected lin or quad)"
            ))),
        }
    }
}

/// Knobs for building a design.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DesignOptions {
    /// Relative perturbation applied to every `Ψ_k`. Only useful to check
    /// that validation notices a broken recursion.
    pub psi_perturbation: f64,
}

/// Data-independent quantities of one filter step.
#[derive(Clone, Debug)]
pub struct DesignStep {
    pub k: usize,
    pub lambda_bar: f64,
    /// `(ℋ̄_k𝔸_k | Δ_k)` or `(H̄_kA_k | 𝐃_k)`.
    pub p: Matrix,
    pub psi: Matrix,
    pub pi: Matrix,
    pub pi_inv: SymmetricInverse,
    /// `Ψ_k Π_k⁻¹`
    pub gain: Matrix,
    pub t: Matrix,
    /// `(𝔸̆_k | 0)` or `(A_k | 0)`.
    pub readout: Matrix,
    /// `(𝔹̆_k | 0)` or `(B_k | 0)`.
    pub readout_s: Matrix,
    pub prior_cov: Matrix,
    /// `Σ̂_{k/k}`
    pub filter_cov: Matrix,
    /// Mean subtracted from the (augmented) observation.
    pub mean: Vector,
}

/// Offline part of the linear or quadratic filter for `k = 1..=horizon`.
#[derive(Clone, Debug)]
pub struct EstimatorDesign {
    kind: EstimatorKind,
    n_x: usize,
    n_z: usize,
    carrier_dim: usize,
    steps: Vec<DesignStep>,
    pseudo_steps: usize,
}

/// `(P, Q, Σ, readout, readout_s, mean)` of the innovation model at one step.
fn innovation_model(
    kind: EstimatorKind,
    s: &StepStatistics,
) -> (Matrix, Matrix, Matrix, Matrix, Matrix, Vector) {
    match kind {
        EstimatorKind::Quadratic => {
            let pad = Matrix::zeros(s.abr.nrows(), s.delta.ncols());
            (
                hcat(&[&(&s.hbar_aug * &s.ab), &s.delta]),
                hcat(&[&(&s.hbar_aug * &s.bb), &s.upsilon]),
                s.sigma_y.clone(),
                hcat(&[&s.abr, &pad]),
                hcat(&[&s.bbr, &pad]),
                s.mean_y.clone(),
            )
        }
        EstimatorKind::Linear => {
            let pad = Matrix::zeros(s.a.nrows(), s.d_lin.ncols());
            (
                hcat(&[&(&s.hbar * &s.a), &s.d_lin]),
                hcat(&[&(&s.hbar * &s.b), &s.f_lin]),
                s.sigma_y_lin.clone(),
                hcat(&[&s.a, &pad]),
                hcat(&[&s.b, &pad]),
                Vector::zeros(s.hbar.nrows()),
            )
        }
    }
}

impl EstimatorDesign {
    pub fn new(stats: &AugmentedStatistics, kind: EstimatorKind) -> Result<Self> {
        Self::with_options(stats, kind, DesignOptions::default())
    }

    /// Runs the covariance part of the recursion:
    ///
    /// ```text
    /// Ψ_k = (1-λ̄_k)(Q_k − P_k T_{k-1})ᵀ
    /// Π_k = Σ_k − (1-λ̄_k)² P_k T_{k-1} P_kᵀ
    /// T_k = T_{k-1} + Ψ_k Π_k⁻¹ Ψ_kᵀ
    /// Σ̂_{k/k} = A_kB_kᵀ − R_k T_k R_kᵀ
    /// ```
    pub fn with_options(
        stats: &AugmentedStatistics,
        kind: EstimatorKind,
        options: DesignOptions,
    ) -> Result<Self> {
        let mut steps: Vec<DesignStep> = Vec::with_capacity(stats.horizon());
        let mut pseudo_steps = 0;
        let mut carrier_dim = 0;
        let mut t_prev: Option<Matrix> = None;
        for s in stats.steps() {
            let (p, q, sigma, readout, readout_s, mean) = innovation_model(kind, s);
            carrier_dim = p.ncols();
            let t_prev_m = t_prev
                .take()
                .unwrap_or_else(|| Matrix::zeros(carrier_dim, carrier_dim));
            if t_prev_m.nrows() != carrier_dim {
                return Err(Error::dim(
                    format!("carrier at k={}", s.k),
                    t_prev_m.nrows(),
                    carrier_dim,
                ));
            }
            let lam = 1.0 - s.lambda_bar;
            let pt = &p * &t_prev_m;
            let mut psi = (&q - &pt).transpose() * lam;
            if options.psi_perturbation != 0.0 {
                psi *= 1.0 + options.psi_perturbation;
            }
            let pi = symmetrize(&(sigma - &pt * p.transpose() * (lam * lam)));
            let pi_inv = SymmetricInverse::new(&pi)?;
            if pi_inv.is_pseudo() {
                pseudo_steps += 1;
                log::debug!("{kind} design: innovation covariance at k={} is singular, using a pseudo-inverse", s.k);
            }
            let gain = pi_inv.solve_right(&psi);
            let t = symmetrize(&(&t_prev_m + &gain * psi.transpose()));
            let filter_cov = symmetrize(&(&s.prior_cov - &readout * &t * readout.transpose()));
            if filter_cov.iter().chain(t.iter()).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "{kind} filter covariance at k={}",
                    s.k
                )));
            }
            t_prev = Some(t.clone());
            steps.push(DesignStep {
                k: s.k,
                lambda_bar: s.lambda_bar,
                p,
                psi,
                pi,
                pi_inv,
                gain,
                t,
                readout,
                readout_s,
                prior_cov: s.prior_cov.clone(),
                filter_cov,
                mean,
            });
        }
        if pseudo_steps > 0 {
            log::info!("{kind} design: {pseudo_steps} of {} innovation covariances needed a pseudo-inverse", steps.len());
        }
        Ok(Self {
            kind,
            n_x: stats.n_x(),
            n_z: stats.n_z(),
            carrier_dim,
            steps,
            pseudo_steps,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    /// Length of the carrier `e_k`.
    pub fn carrier_dim(&self) -> usize {
        self.carrier_dim
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Number of steps whose innovation covariance was inverted by pseudo-inverse.
    pub fn pseudo_inverse_steps(&self) -> usize {
        self.pseudo_steps
    }

    pub fn step(&self, k: usize) -> Result<&DesignStep> {
        if k == 0 {
            return Err(Error::HorizonExceeded {
                k,
                horizon: self.horizon(),
            });
        }
        self.steps.get(k - 1).ok_or(Error::HorizonExceeded {
            k,
            horizon: self.horizon(),
        })
    }

    pub fn steps(&self) -> &[DesignStep] {
        &self.steps
    }

    /// `Σ̂_{k/k}`.
    pub fn filter_cov(&self, k: usize) -> Result<&Matrix> {
        Ok(&self.step(k)?.filter_cov)
    }

    /// Centered observation fed to the recursion: `[y; y⊗y] − 𝒴̄_k` for the
    /// quadratic filter, `y` for the linear one.
    pub fn observation(&self, k: usize, y: &Vector) -> Result<Vector> {
        if y.len() != self.n_z {
            return Err(Error::dim(
                format!("measurement at k={k}"),
                self.n_z,
                y.len(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("measurement at k={k}")));
        }
        let step = self.step(k)?;
        Ok(match self.kind {
            EstimatorKind::Quadratic => augment(y) - &step.mean,
            EstimatorKind::Linear => y.clone(),
        })
    }

    /// Offline part of the fixed-point smoother at `k` for `N = 1..=n_max`.
    pub fn smoother_design(&self, k: usize, n_max: usize) -> Result<FixedPointSmootherDesign> {
        FixedPointSmootherDesign::new(self, k, n_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_psd, min_eigenvalue};
    use crate::model::ScalarScenario;

    fn designs(sc: ScalarScenario, horizon: usize) -> (EstimatorDesign, EstimatorDesign) {
        let stats = AugmentedStatistics::new(&sc.build(horizon).unwrap()).unwrap();
        (
            EstimatorDesign::new(&stats, EstimatorKind::Linear).unwrap(),
            EstimatorDesign::new(&stats, EstimatorKind::Quadratic).unwrap(),
        )
    }

    #[test]
    fn kind_round_trip() {
        for kind in EstimatorKind::ALL {
            assert_eq!(kind.label().parse::<EstimatorKind>().unwrap(), kind);
        }
        assert!("cubic".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn certain_attack_learns_nothing() {
        let (lin, quad) = designs(ScalarScenario::default().with_lambda_bar(1.0), 20);
        for d in [&lin, &quad] {
            for s in d.steps() {
                assert_eq!(s.psi.abs().max(), 0.0);
                assert_eq!(s.t.abs().max(), 0.0);
                assert_eq!(s.filter_cov, s.prior_cov);
            }
        }
    }

    #[test]
    fn quadratic_dominates_linear() {
        let (lin, quad) = designs(ScalarScenario::default(), 100);
        for k in 1..=100 {
            let l = lin.filter_cov(k).unwrap()[(0, 0)];
            let q = quad.filter_cov(k).unwrap()[(0, 0)];
            assert!(q < l, "k={k}: quad {q} lin {l}");
        }
    }

    #[test]
    fn covariance_invariants() {
        let (lin, quad) = designs(ScalarScenario::default(), 100);
        for d in [&lin, &quad] {
            let mut prev = Matrix::zeros(d.carrier_dim(), d.carrier_dim());
            for s in d.steps() {
                let scale = s.t.abs().max().max(1.0);
                assert!(min_eigenvalue(&(&s.t - &prev)) >= -1e-9 * scale);
                assert!(is_psd(&s.pi, 1e-12, 1e-12 * s.pi.trace()));
                assert!(s.filter_cov[(0, 0)] > 0.0);
                assert!(s.filter_cov[(0, 0)] <= s.prior_cov[(0, 0)]);
                prev = s.t.clone();
            }
        }
    }

    #[test]
    fn design_is_deterministic() {
        let (a, _) = designs(ScalarScenario::default(), 100);
        let (b, _) = designs(ScalarScenario::default(), 100);
        assert_eq!(a.filter_cov(100).unwrap(), b.filter_cov(100).unwrap());
    }
}
