use crate::error::{Error, Result};
use crate::kron::{block_diag, kron, kron_power2_mat, max_abs, symmetrizer, Matrix};
use crate::linalg::lu_solve;
use crate::model::{CorrelatedNoiseModel, Moments, FACTOR_OVERFLOW_LIMIT};

/// Separable factors of the additive noise and of its augmented version at
/// one time step `k ≥ 0`.
#[derive(Clone, Debug)]
pub struct NoiseFactors {
    /// `𝐃_k = D_{k-1}⋯D_0`
    pub d_lin: Matrix,
    /// `𝐅_k` with `𝐅_kᵀ = 𝐃_k⁻¹ Σᵛ_k`
    pub f_lin: Matrix,
    /// `Σᵛ_k`
    pub sigma_v_lin: Matrix,
    /// `𝔻_k = 𝒟_{k,0}` with `𝒟_j = diag(D_j, D_j⁽²⁾)`
    pub d_aug: Matrix,
    /// `𝔽_k` with `𝔽_kᵀ = 𝒟_{k,0}⁻¹ Σ𝐯_k`
    pub f_aug: Matrix,
    /// Covariance of the centered augmented noise `[v_k; v_k⊗v_k − E]`.
    pub sigma_v_aug: Matrix,
    /// Covariance of the augmented driver `𝐮_k`.
    pub sigma_u_aug: Matrix,
}

fn guard(quantity: &'static str, m: &Matrix, k: usize) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{quantity} at k={k}")));
    }
    let magnitude = max_abs(m);
    if magnitude > FACTOR_OVERFLOW_LIMIT {
        return Err(Error::FactorOverflow {
            quantity,
            k,
            magnitude,
        });
    }
    Ok(())
}

/// Augmented driver covariance
///
/// ```text
/// Σ𝐮_k = [[Σᵘ, Σᵘ⁽¹²⁾], [Σᵘ⁽¹²⁾ᵀ, K(D_k Σᵛ_k D_kᵀ ⊗ Σᵘ)K + Σᵘ⁽²⁾]]
/// ```
///
/// where `Σᵛ_k = 𝐃_k 𝐅_kᵀ`.
pub fn aug_driver_cov(d: &Matrix, sigma_v: &Matrix, u: &Moments) -> Matrix {
    let n = d.nrows();
    let k_sym = symmetrizer(n);
    let propagated = d * sigma_v * d.transpose();
    let block22 = &k_sym * kron(&propagated, &u.cov) * &k_sym + &u.cov2;
    Moments {
        cov: u.cov.clone(),
        cov12: u.cov12.clone(),
        cov2: block22,
    }
    .composite()
}

/// Builds the noise factor table for `k = 0..=horizon`.
pub fn noise_factor_table(
    noise: &CorrelatedNoiseModel,
    horizon: usize,
) -> Result<Vec<NoiseFactors>> {
    let n = noise.n_z();
    let n_aug = n + n * n;
    let initial = noise.initial_moments();

    let mut d_lin = Matrix::identity(n, n);
    let mut d_aug = Matrix::identity(n_aug, n_aug);
    let mut sigma_v_lin = initial.cov.clone();
    let mut sigma_v_aug = initial.composite();
    let mut table = Vec::with_capacity(horizon + 1);

    for k in 0..=horizon {
        let f_lin = lu_solve(&d_lin, &sigma_v_lin, "noise transition product 𝐃_k")?.transpose();
        let f_aug = lu_solve(
            &d_aug,
            &sigma_v_aug,
            "augmented noise transition product 𝒟_{k,0}",
        )?
        .transpose();
        guard("noise factor 𝐅", &f_lin, k)?;
        guard("augmented noise factor 𝔽", &f_aug, k)?;

        let d = noise.d(k);
        let u = noise.driver_moments(k);
        // 𝐃_k 𝐅_kᵀ stands for Σᵛ_k in the driver covariance.
        let sigma_u_aug = aug_driver_cov(&d, &(&d_lin * f_lin.transpose()), &u);

        let next_lin = &d * &sigma_v_lin * d.transpose() + &u.cov;
        let d_step = block_diag(&[&d, &kron_power2_mat(&d)]);
        let next_aug = &d_step * &sigma_v_aug * d_step.transpose() + &sigma_u_aug;

        table.push(NoiseFactors {
            d_lin: d_lin.clone(),
            f_lin,
            sigma_v_lin,
            d_aug: d_aug.clone(),
            f_aug,
            sigma_v_aug,
            sigma_u_aug,
        });

        d_lin = &d * d_lin;
        d_aug = &d_step * d_aug;
        sigma_v_lin = next_lin;
        sigma_v_aug = next_aug;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseDistribution;
    use approx::assert_abs_diff_eq;

    fn section_noise() -> CorrelatedNoiseModel {
        CorrelatedNoiseModel::new(
            Matrix::from_element(1, 1, 0.75).into(),
            NoiseDistribution::gaussian_scalar(0.01).unwrap().into(),
            NoiseDistribution::gaussian_scalar(0.1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_values() {
        let t = noise_factor_table(&section_noise(), 5).unwrap();
        assert_abs_diff_eq!(t[1].sigma_v_lin[(0, 0)], 0.06625, epsilon = 1e-15);
        assert_abs_diff_eq!(t[0].sigma_v_aug[(1, 1)], 0.02, epsilon = 1e-15);
        assert_eq!(t[0].sigma_v_aug[(0, 1)], 0.0);
        // 2·(0.75·0.1·0.75·0.01)·2 + 0.0002
        assert_abs_diff_eq!(t[0].sigma_u_aug[(1, 1)], 0.00245, epsilon = 1e-15);
        assert_abs_diff_eq!(t[0].sigma_u_aug[(0, 0)], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn separable_product_matches_transfer() {
        let t = noise_factor_table(&section_noise(), 10).unwrap();
        for s in 0..=10 {
            for k in s..=10 {
                let lhs = &t[k].d_lin * t[s].f_lin.transpose();
                let rhs = 0.75_f64.powi((k - s) as i32) * t[s].sigma_v_lin[(0, 0)];
                assert!((lhs[(0, 0)] - rhs).abs() < 1e-12, "k={k} s={s}");
            }
        }
    }

    #[test]
    fn identity_transition_without_driver_is_stationary() {
        let noise = CorrelatedNoiseModel::new(
            Matrix::identity(2, 2).into(),
            NoiseDistribution::gaussian(Matrix::zeros(2, 2))
                .unwrap()
                .into(),
            NoiseDistribution::gaussian(Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]))
                .unwrap(),
        )
        .unwrap();
        let t = noise_factor_table(&noise, 6).unwrap();
        for f in &t {
            assert!((&f.sigma_v_lin - &t[0].sigma_v_lin).abs().max() < 1e-15);
            assert!((&f.sigma_v_aug - &t[0].sigma_v_aug).abs().max() < 1e-15);
        }
    }

    #[test]
    fn augmented_top_left_block_is_linear_covariance() {
        let t = noise_factor_table(&section_noise(), 30).unwrap();
        for f in &t {
            assert!((f.sigma_v_aug[(0, 0)] - f.sigma_v_lin[(0, 0)]).abs() < 1e-15);
        }
    }

    #[test]
    fn overflow_guard_for_long_horizons() {
        // 𝔽 grows like 0.5625^-k and passes 1e120 near k = 490.
        let err = noise_factor_table(&section_noise(), 600).unwrap_err();
        match err {
            Error::FactorOverflow { k, .. } => assert!((450..=520).contains(&k), "k={k}"),
            other => panic!("unexpected {other}"),
        }
    }
}
