use crate::error::{Error, Result};
use crate::kron::{kron, kron_power2_mat, max_abs, symmetrizer, Matrix};
use crate::linalg::{is_psd, lu_solve};

use super::distribution::{Moments, NoiseDistribution};
use super::schedule::Schedule;

/// Entries beyond this magnitude in a separable factor abort construction.
pub const FACTOR_OVERFLOW_LIMIT: f64 = 1e120;

/// Separable factors of the signal moments at one time step.
///
/// For `s ≤ k`: `Σˣ_{k,s} = A_k B_sᵀ`, `Σˣ⁽²⁾_{k,s} = Ă_k B̆_sᵀ`,
/// `Σˣ⁽¹²⁾_{k,s} = A1_k B1_sᵀ`; for `k ≤ s`: `Σˣ⁽¹²⁾_{k,s} = B2_k A2_sᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalFactors {
    /// `n_x × M1`
    pub a: Matrix,
    /// `n_x × M1`
    pub b: Matrix,
    /// `n_x² × M2`
    pub a_breve: Matrix,
    /// `n_x² × M2`
    pub b_breve: Matrix,
    /// `n_x × P1`
    pub a1: Matrix,
    /// `n_x² × P1`
    pub b1: Matrix,
    /// `n_x × P2`
    pub b2: Matrix,
    /// `n_x² × P2`
    pub a2: Matrix,
}

impl SignalFactors {
    pub fn widths(&self) -> FactorWidths {
        FactorWidths {
            m1: self.a.ncols(),
            m2: self.a_breve.ncols(),
            p1: self.a1.ncols(),
            p2: self.b2.ncols(),
        }
    }

    fn check(&self, n_x: usize, widths: FactorWidths, k: usize) -> Result<()> {
        let n2 = n_x * n_x;
        let expect = [
            ("A", &self.a, (n_x, widths.m1)),
            ("B", &self.b, (n_x, widths.m1)),
            ("Ă", &self.a_breve, (n2, widths.m2)),
            ("B̆", &self.b_breve, (n2, widths.m2)),
            ("A1", &self.a1, (n_x, widths.p1)),
            ("B1", &self.b1, (n2, widths.p1)),
            ("B2", &self.b2, (n_x, widths.p2)),
            ("A2", &self.a2, (n2, widths.p2)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::dim(
                    format!("signal factor {name} at k={k}"),
                    format!("{shape:?}"),
                    format!("{:?}", m.shape()),
                ));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("signal factor {name} at k={k}")));
            }
            let mag = max_abs(m);
            if mag > FACTOR_OVERFLOW_LIMIT {
                return Err(Error::FactorOverflow {
                    quantity: "signal factor",
                    k,
                    magnitude: mag,
                });
            }
        }
        Ok(())
    }
}

/// Column counts `M1, M2, P1, P2` of the signal factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FactorWidths {
    pub m1: usize,
    pub m2: usize,
    pub p1: usize,
    pub p2: usize,
}

impl FactorWidths {
    pub fn total(&self) -> usize {
        self.m1 + self.p1 + self.p2 + self.m2
    }
}

/// `x_k = φ_{k-1} x_{k-1} + ε_{k-1}` with independent zero-mean `x_0` and
/// white `ε`. Used both to derive separable factors and to simulate.
#[derive(Clone, Debug)]
pub struct LinearEvolution {
    pub phi: Schedule<Matrix>,
    pub x0: NoiseDistribution,
    pub eps: Schedule<NoiseDistribution>,
}

/// Covariance description of the signal by per-step separable factors,
/// cached for `k = 0..=horizon`.
#[derive(Clone, Debug)]
pub struct SignalModel {
    n_x: usize,
    widths: FactorWidths,
    factors: Vec<SignalFactors>,
    evolution: Option<LinearEvolution>,
    marginals: Option<Vec<Moments>>,
}

impl SignalModel {
    /// Wraps user-supplied factors, indexed by `k = 0..factors.len()`.
    pub fn from_factors(n_x: usize, factors: Vec<SignalFactors>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::Config("signal factor table is empty".into()))?;
        let widths = first.widths();
        for (k, f) in factors.iter().enumerate() {
            f.check(n_x, widths, k)?;
        }
        Ok(Self {
            n_x,
            widths,
            factors,
            evolution: None,
            marginals: None,
        })
    }

    /// Derives separable factors from a linear evolution model. The marginal
    /// moments follow
    ///
    /// ```text
    /// Σˣ_s      = φ Σˣ_{s-1} φᵀ + Σᵋ
    /// Σˣ⁽¹²⁾_s  = φ Σˣ⁽¹²⁾_{s-1} φ⁽²⁾ᵀ + Σᵋ⁽¹²⁾
    /// Σˣ⁽²⁾_s   = φ⁽²⁾ Σˣ⁽²⁾_{s-1} φ⁽²⁾ᵀ + K(φ Σˣ_{s-1} φᵀ ⊗ Σᵋ)K + Σᵋ⁽²⁾
    /// ```
    ///
    /// (all `φ`, `Σᵋ` at `s-1`), and the factors are
    /// `A_k = φ_{k,0}`, `B_kᵀ = φ_{k,0}⁻¹ Σˣ_k`, `Ă_k = φ⁽²⁾_{k,0}`,
    /// `B̆_kᵀ = (φ⁽²⁾_{k,0})⁻¹ Σˣ⁽²⁾_k`, `A1_k = φ_{k,0}`,
    /// `B1_kᵀ = φ_{k,0}⁻¹ Σˣ⁽¹²⁾_k`, `B2_k = Σˣ⁽¹²⁾_k (φ⁽²⁾ᵀ_{k,0})⁻¹`,
    /// `A2_k = φ⁽²⁾_{k,0}`.
    pub fn build_from_linear_evolution(evolution: LinearEvolution, horizon: usize) -> Result<Self> {
        let n_x = evolution.x0.dim();
        let n2 = n_x * n_x;
        let x0 = evolution.x0.moments();
        x0.validate("initial signal moments")?;
        let k_sym = symmetrizer(n_x);

        let mut phi_prod = Matrix::identity(n_x, n_x);
        let mut phi2_prod = Matrix::identity(n2, n2);
        let mut current = x0;
        let mut factors = Vec::with_capacity(horizon + 1);
        let mut marginals = Vec::with_capacity(horizon + 1);

        for k in 0..=horizon {
            let bt = lu_solve(&phi_prod, &current.cov, "signal transition product φ_{k,0}")?;
            let b_breve_t = lu_solve(
                &phi2_prod,
                &current.cov2,
                "squared transition product φ⁽²⁾_{k,0}",
            )?;
            let b1_t = lu_solve(
                &phi_prod,
                &current.cov12,
                "signal transition product φ_{k,0}",
            )?;
            let b2_t = lu_solve(
                &phi2_prod,
                &current.cov12.transpose(),
                "squared transition product φ⁽²⁾_{k,0}",
            )?;
            let f = SignalFactors {
                a: phi_prod.clone(),
                b: bt.transpose(),
                a_breve: phi2_prod.clone(),
                b_breve: b_breve_t.transpose(),
                a1: phi_prod.clone(),
                b1: b1_t.transpose(),
                b2: b2_t.transpose(),
                a2: phi2_prod.clone(),
            };
            f.check(n_x, f.widths(), k)?;
            factors.push(f);
            marginals.push(current.clone());

            if k == horizon {
                break;
            }
            let phi = evolution.phi.at(k);
            if phi.shape() != (n_x, n_x) {
                return Err(Error::dim(
                    format!("φ at k={k}"),
                    format!("{n_x}x{n_x}"),
                    format!("{:?}", phi.shape()),
                ));
            }
            let eps = evolution.eps.at(k);
            if eps.dim() != n_x {
                return Err(Error::dim(format!("ε at k={k}"), n_x, eps.dim()));
            }
            let eps = eps.moments();
            let phi2 = kron_power2_mat(&phi);
            let propagated = &phi * &current.cov * phi.transpose();
            let next = Moments {
                cov: &propagated + &eps.cov,
                cov12: &phi * &current.cov12 * phi2.transpose() + &eps.cov12,
                cov2: &phi2 * &current.cov2 * phi2.transpose()
                    + &k_sym * kron(&propagated, &eps.cov) * &k_sym
                    + &eps.cov2,
            };
            phi_prod = &phi * phi_prod;
            phi2_prod = &phi2 * phi2_prod;
            current = next;
        }
        let widths = factors[0].widths();
        Ok(Self {
            n_x,
            widths,
            factors,
            evolution: Some(evolution),
            marginals: Some(marginals),
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn widths(&self) -> FactorWidths {
        self.widths
    }

    /// Largest `k` with cached factors.
    pub fn horizon(&self) -> usize {
        self.factors.len() - 1
    }

    pub fn factors(&self, k: usize) -> Result<&SignalFactors> {
        self.factors.get(k).ok_or(Error::HorizonExceeded {
            k,
            horizon: self.horizon(),
        })
    }

    pub fn evolution(&self) -> Option<&LinearEvolution> {
        self.evolution.as_ref()
    }

    /// `(Σˣ_k, Σˣ⁽¹²⁾_k, Σˣ⁽²⁾_k)` when the model came from a linear evolution.
    pub fn marginal_moments(&self, k: usize) -> Option<&Moments> {
        self.marginals.as_ref().and_then(|m| m.get(k))
    }

    /// `Σˣ_{k,s}` for any ordering of `k, s`.
    pub fn cov_x(&self, k: usize, s: usize) -> Result<Matrix> {
        if s <= k {
            Ok(&self.factors(k)?.a * self.factors(s)?.b.transpose())
        } else {
            Ok(self.cov_x(s, k)?.transpose())
        }
    }

    /// `Σˣ⁽²⁾_{k,s}`.
    pub fn cov_x2(&self, k: usize, s: usize) -> Result<Matrix> {
        if s <= k {
            Ok(&self.factors(k)?.a_breve * self.factors(s)?.b_breve.transpose())
        } else {
            Ok(self.cov_x2(s, k)?.transpose())
        }
    }

    /// `Σˣ⁽¹²⁾_{k,s} = Cov[x_k, x_s⊗x_s]`.
    pub fn cov_x12(&self, k: usize, s: usize) -> Result<Matrix> {
        if s <= k {
            Ok(&self.factors(k)?.a1 * self.factors(s)?.b1.transpose())
        } else {
            Ok(&self.factors(k)?.b2 * self.factors(s)?.a2.transpose())
        }
    }

    /// `A_k B_kᵀ`.
    pub fn prior_cov(&self, k: usize) -> Result<Matrix> {
        self.cov_x(k, k)
    }

    /// Checks that `A_k B_kᵀ` and `Ă_k B̆_kᵀ` are symmetric PSD for `k ≤ horizon`.
    pub fn check_invariants(&self) -> Result<()> {
        for k in 0..=self.horizon() {
            for (name, m) in [
                ("A_k B_kᵀ", self.cov_x(k, k)?),
                ("Ă_k B̆_kᵀ", self.cov_x2(k, k)?),
            ] {
                let scale = max_abs(&m).max(1.0);
                if !is_psd(&m, 1e-9 * scale, 1e-9 * scale) {
                    return Err(Error::ModelInconsistency(format!(
                        "{name} at k={k} is not symmetric PSD"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ar1(phi: f64, x0: f64, eps: f64, horizon: usize) -> SignalModel {
        SignalModel::build_from_linear_evolution(
            LinearEvolution {
                phi: Matrix::from_element(1, 1, phi).into(),
                x0: NoiseDistribution::gaussian_scalar(x0).unwrap(),
                eps: NoiseDistribution::gaussian_scalar(eps).unwrap().into(),
            },
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn ar1_first_step_variances() {
        let s = ar1(0.95, 0.1, 0.1, 5);
        assert_abs_diff_eq!(s.prior_cov(1).unwrap()[(0, 0)], 0.19025, epsilon = 1e-15);
        assert_abs_diff_eq!(s.cov_x2(0, 0).unwrap()[(0, 0)], 0.02, epsilon = 1e-15);
        // 0.95⁴·0.02 + 4·0.95²·0.1·0.1 + 2·0.1² = 0.072390125 (rounded 0.07239)
        assert_abs_diff_eq!(s.cov_x2(1, 1).unwrap()[(0, 0)], 0.07239, epsilon = 1e-6);
        assert_abs_diff_eq!(
            s.cov_x2(1, 1).unwrap()[(0, 0)],
            0.072390125,
            epsilon = 1e-15
        );
        assert_eq!(s.cov_x12(3, 1).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn noiseless_propagation() {
        let phi = Matrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.8]);
        let evo = LinearEvolution {
            phi: phi.clone().into(),
            x0: NoiseDistribution::gaussian(Matrix::identity(2, 2)).unwrap(),
            eps: NoiseDistribution::gaussian(Matrix::zeros(2, 2))
                .unwrap()
                .into(),
        };
        let s = SignalModel::build_from_linear_evolution(evo, 8).unwrap();
        let mut prod = Matrix::identity(2, 2);
        for k in 0..=8 {
            let expect = &prod * prod.transpose();
            assert!(
                (s.prior_cov(k).unwrap() - expect).abs().max() < 1e-12,
                "k={k}"
            );
            prod = &phi * prod;
        }
    }

    #[test]
    fn factorization_matches_direct_cross_covariance() {
        let phi = Matrix::from_row_slice(2, 2, &[0.95, 0.1, 0.0, 0.7]);
        let eps = Matrix::from_row_slice(2, 2, &[0.1, 0.02, 0.02, 0.05]);
        let evo = LinearEvolution {
            phi: phi.clone().into(),
            x0: NoiseDistribution::gaussian(Matrix::identity(2, 2) * 0.1).unwrap(),
            eps: NoiseDistribution::gaussian(eps).unwrap().into(),
        };
        let s = SignalModel::build_from_linear_evolution(evo, 20).unwrap();
        s.check_invariants().unwrap();
        let phi2 = kron_power2_mat(&phi);
        for sidx in 0..=20 {
            let m = s.marginal_moments(sidx).unwrap().clone();
            let mut transfer = Matrix::identity(2, 2);
            let mut transfer2 = Matrix::identity(4, 4);
            for k in sidx..=20 {
                let direct = &transfer * &m.cov;
                assert!(
                    (s.cov_x(k, sidx).unwrap() - &direct).abs().max() < 1e-9,
                    "k={k} s={sidx}"
                );
                let direct2 = &transfer2 * &m.cov2;
                assert!((s.cov_x2(k, sidx).unwrap() - &direct2).abs().max() < 1e-9);
                transfer = &phi * transfer;
                transfer2 = &phi2 * transfer2;
            }
        }
    }

    #[test]
    fn singular_transition_is_rejected() {
        let evo = LinearEvolution {
            phi: Matrix::zeros(1, 1).into(),
            x0: NoiseDistribution::gaussian_scalar(0.1).unwrap(),
            eps: NoiseDistribution::gaussian_scalar(0.1).unwrap().into(),
        };
        assert!(matches!(
            SignalModel::build_from_linear_evolution(evo, 3),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn probe_beyond_horizon_fails() {
        let s = ar1(0.95, 0.1, 0.1, 4);
        assert!(matches!(
            s.factors(5),
            Err(Error::HorizonExceeded { k: 5, horizon: 4 })
        ));
    }

    #[test]
    fn overflow_guard_trips_for_contracting_transition() {
        let evo = LinearEvolution {
            phi: Matrix::from_element(1, 1, 0.5).into(),
            x0: NoiseDistribution::gaussian_scalar(0.1).unwrap(),
            eps: NoiseDistribution::gaussian_scalar(0.1).unwrap().into(),
        };
        // B̆ grows like 0.25^-k: 1e120 is passed near k = 200
        let err = SignalModel::build_from_linear_evolution(evo, 400).unwrap_err();
        assert!(matches!(err, Error::FactorOverflow { .. }), "{err}");
    }
}
