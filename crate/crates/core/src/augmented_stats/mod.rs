//! Augmented observation model: for each time step, the covariance factors
//! of the augmented signal `𝐱_k = [x_k; x_k⊗x_k − E]` and noise, the
//! correction vector `g_k`, the augmented means and the covariances of the
//! augmented measurements `𝐳_k` and observations `𝐲_k`.
//!
//! None of this depends on observed data, so it is computed once per model.

mod dump;
mod noise;

pub use noise::{aug_driver_cov, noise_factor_table, NoiseFactors};

use crate::error::{Error, Result};
use crate::kron::{block_diag, hcat, kron, symmetrize, symmetrizer, vcat, vec, Matrix, Vector};
use crate::linalg::min_eigenvalue;
use crate::model::{SignalFactors, SystemModel};

/// All data-independent matrices at one time step `k ≥ 1`.
#[derive(Clone, Debug)]
pub struct StepStatistics {
    pub k: usize,
    pub lambda_bar: f64,
    /// Signal factors `A_k`, `B_k`.
    pub a: Matrix,
    pub b: Matrix,
    /// `A_k B_kᵀ`
    pub prior_cov: Matrix,
    /// `H̄_k`
    pub hbar: Matrix,
    /// `𝔸_k`, `𝔹_k`, `𝔸̆_k`, `𝔹̆_k`
    pub ab: Matrix,
    pub bb: Matrix,
    pub abr: Matrix,
    pub bbr: Matrix,
    /// `ℋ̄_k = diag(H̄_k, E[H_k⁽²⁾])`
    pub hbar_aug: Matrix,
    pub delta: Matrix,
    pub upsilon: Matrix,
    pub sigma_v_aug: Matrix,
    pub sigma_u_aug: Matrix,
    pub sigma_w_aug: Matrix,
    pub sigma_vss: Matrix,
    pub g: Vector,
    pub mean_z: Vector,
    pub mean_w: Vector,
    pub mean_y: Vector,
    pub sigma_z: Matrix,
    pub sigma_y: Matrix,
    /// `𝐃_k`, `𝐅_k`, `Σᵛ_k`
    pub d_lin: Matrix,
    pub f_lin: Matrix,
    pub sigma_v_lin: Matrix,
    /// `Σʸ_k` of the raw observations.
    pub sigma_y_lin: Matrix,
}

/// Per-step statistics for `k = 1..=horizon`, plus the noise factor table
/// from `k = 0`.
#[derive(Clone, Debug)]
pub struct AugmentedStatistics {
    n_x: usize,
    n_z: usize,
    steps: Vec<StepStatistics>,
    noise: Vec<NoiseFactors>,
}

/// `𝔸_k`, `𝔹_k`, `𝔸̆_k`, `𝔹̆_k` from the signal factors.
pub fn build_block_factors(f: &SignalFactors) -> (Matrix, Matrix, Matrix, Matrix) {
    let n_x = f.a.nrows();
    let n2 = n_x * n_x;
    let w = f.widths();
    let z = |r: usize, c: usize| Matrix::zeros(r, c);
    let ab = vcat(&[
        &hcat(&[&f.a, &f.a1, &z(n_x, w.p2), &z(n_x, w.m2)]),
        &hcat(&[&z(n2, w.m1), &z(n2, w.p1), &f.a2, &f.a_breve]),
    ]);
    let bb = vcat(&[
        &hcat(&[&f.b, &z(n_x, w.p1), &f.b2, &z(n_x, w.m2)]),
        &hcat(&[&z(n2, w.m1), &f.b1, &z(n2, w.p2), &f.b_breve]),
    ]);
    let abr = hcat(&[&f.a, &f.a1, &z(n_x, w.p2), &z(n_x, w.m2)]);
    let bbr = hcat(&[&f.b, &z(n_x, w.p1), &f.b2, &z(n_x, w.m2)]);
    (ab, bb, abr, bbr)
}

/// `Δ_k = (ℂ_k | 𝔻_k)` and `Υ_k = (𝔼_k | 𝔽_k)` with
/// `ℂ_k = [0; K(H̄_k A_k ⊗ 𝐃_k)]`, `𝔼_k = [0; K(H̄_k B_k ⊗ 𝐅_k)]`.
pub fn build_delta_upsilon(
    hbar: &Matrix,
    a: &Matrix,
    b: &Matrix,
    nf: &NoiseFactors,
) -> (Matrix, Matrix) {
    let n_z = hbar.nrows();
    let k_sym = symmetrizer(n_z);
    let c_low = &k_sym * kron(&(hbar * a), &nf.d_lin);
    let e_low = &k_sym * kron(&(hbar * b), &nf.f_lin);
    let c = vcat(&[&Matrix::zeros(n_z, c_low.ncols()), &c_low]);
    let e = vcat(&[&Matrix::zeros(n_z, e_low.ncols()), &e_low]);
    (hcat(&[&c, &nf.d_aug]), hcat(&[&e, &nf.f_aug]))
}

fn check_psd(what: &str, m: &Matrix, k: usize) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{what} at k={k}")));
    }
    let trace = m.trace().abs();
    let min = min_eigenvalue(m);
    if min < -1e-8 * trace {
        return Err(Error::ModelInconsistency(format!(
            "{what} at k={k} is not PSD (min eigenvalue {min:e}, trace {trace:e})"
        )));
    }
    Ok(())
}

impl AugmentedStatistics {
    pub fn new(model: &SystemModel) -> Result<Self> {
        let horizon = model.horizon();
        let (n_x, n_z) = (model.n_x(), model.n_z());
        let noise = noise_factor_table(model.noise(), horizon)?;
        let meas = model.meas();
        let k_sym = symmetrizer(n_z);
        let mut steps = Vec::with_capacity(horizon);

        for k in 1..=horizon {
            let f = model.signal().factors(k)?;
            let nf = &noise[k];
            let lambda_bar = model.attack().lambda_bar(k);
            let hbar = meas.mean_h(k);
            let hbar2 = meas.mean_h2(k);
            let hbar_aug = block_diag(&[&hbar, &hbar2]);
            let (ab, bb, abr, bbr) = build_block_factors(f);
            let (delta, upsilon) = build_delta_upsilon(&hbar, &f.a, &f.b, nf);

            let prior_cov = &f.a * f.b.transpose();
            let prior12 = &f.a1 * f.b1.transpose();
            let prior2 = &f.a_breve * f.b_breve.transpose();
            let dft = &nf.d_lin * nf.f_lin.transpose();
            let vec_prior = vec(&prior_cov);

            let vss22 = meas.centered_h2_m_h2t(k, &(&vec_prior * vec_prior.transpose()))
                + &k_sym * kron(&meas.centered_h_m_ht(k, &prior_cov), &dft) * &k_sym;
            let sigma_vss = block_diag(&[&Matrix::zeros(n_z, n_z), &vss22]);

            let signal_part = vcat(&[
                &hcat(&[
                    &meas.exp_h_m_ht(k, &prior_cov),
                    &meas.exp_h_m_h2t(k, &prior12),
                ]),
                &hcat(&[
                    &meas.exp_h_m_h2t(k, &prior12).transpose(),
                    &meas.exp_h2_m_h2t(k, &prior2),
                ]),
            ]);
            let sigma_z = signal_part + &delta * upsilon.transpose() + &sigma_vss;

            let w = model.attack().moments(k);
            let sigma_w_aug = w.composite();
            let zero = Vector::zeros(n_z);
            let mean_z = crate::kron::vstack(&zero, &(&hbar2 * &vec_prior + vec(&dft)));
            let mean_w = crate::kron::vstack(&zero, &vec(&w.cov));
            let g = &mean_z - &mean_w;
            let mean_y = &mean_z * (1.0 - lambda_bar) + &mean_w * lambda_bar;
            let sigma_y = symmetrize(
                &(&sigma_z * (1.0 - lambda_bar)
                    + &sigma_w_aug * lambda_bar
                    + (&g * g.transpose()) * (lambda_bar * (1.0 - lambda_bar))),
            );
            check_psd("augmented observation covariance Σ𝐲", &sigma_y, k)?;

            let sigma_y_lin = symmetrize(
                &((meas.exp_h_m_ht(k, &prior_cov) + &dft) * (1.0 - lambda_bar)
                    + &w.cov * lambda_bar),
            );
            check_psd("observation covariance Σʸ", &sigma_y_lin, k)?;

            steps.push(StepStatistics {
                k,
                lambda_bar,
                a: f.a.clone(),
                b: f.b.clone(),
                prior_cov,
                hbar,
                ab,
                bb,
                abr,
                bbr,
                hbar_aug,
                delta,
                upsilon,
                sigma_v_aug: nf.sigma_v_aug.clone(),
                sigma_u_aug: nf.sigma_u_aug.clone(),
                sigma_w_aug,
                sigma_vss,
                g,
                mean_z,
                mean_w,
                mean_y,
                sigma_z,
                sigma_y,
                d_lin: nf.d_lin.clone(),
                f_lin: nf.f_lin.clone(),
                sigma_v_lin: nf.sigma_v_lin.clone(),
                sigma_y_lin,
            });
        }
        Ok(Self {
            n_x,
            n_z,
            steps,
            noise,
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Statistics at `1 ≤ k ≤ horizon`.
    pub fn step(&self, k: usize) -> Result<&StepStatistics> {
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

    pub fn steps(&self) -> &[StepStatistics] {
        &self.steps
    }

    /// Noise factors at `0 ≤ k ≤ horizon`.
    pub fn noise_factors(&self, k: usize) -> Result<&NoiseFactors> {
        self.noise.get(k).ok_or(Error::HorizonExceeded {
            k,
            horizon: self.horizon(),
        })
    }

    /// Writes one CSV file per quantity into `dir`; rows are indexed by `k`.
    pub fn write_csv_dump(&self, dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
        dump::write_all(self, dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        AttackModel, CorrelatedNoiseModel, LinearEvolution, MeasurementMatrixModel,
        NoiseDistribution, ScalarScenario, SignalModel,
    };
    use approx::assert_abs_diff_eq;

    fn section(horizon: usize) -> AugmentedStatistics {
        AugmentedStatistics::new(&ScalarScenario::default().build(horizon).unwrap()).unwrap()
    }

    #[test]
    fn scalar_first_step() {
        let st = section(3);
        let s = st.step(1).unwrap();
        assert_abs_diff_eq!(s.g[0], 0.0);
        // 0.405·0.19025 + 0.06625 − 9.142857
        assert_abs_diff_eq!(s.g[1], -8.99960, epsilon = 1e-4);
        assert_abs_diff_eq!(s.sigma_v_lin[(0, 0)], 0.06625, epsilon = 1e-15);
        let (sx, sv) = (0.19025, 0.06625);
        let expect = 0.81 * 0.81 * 0.25 * sx * sx + 4.0 * (0.81 * 0.25 * sx) * sv;
        assert_abs_diff_eq!(s.sigma_vss[(1, 1)], expect, epsilon = 1e-15);
        assert_eq!(
            (
                s.sigma_vss[(0, 0)],
                s.sigma_vss[(0, 1)],
                s.sigma_vss[(1, 0)]
            ),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn scalar_block_product_is_diagonal() {
        let st = section(10);
        for s in st.steps() {
            let p = &s.ab * s.bb.transpose();
            assert_eq!(p[(0, 1)], 0.0);
            assert_eq!(p[(1, 0)], 0.0);
            assert_abs_diff_eq!(p[(0, 0)], s.prior_cov[(0, 0)], epsilon = 1e-12);
            let first_row = &s.abr * s.bb.transpose();
            assert_eq!(first_row, p.rows(0, 1).into_owned());
        }
    }

    #[test]
    fn delta_upsilon_top_block_is_noise_covariance() {
        let st = section(100);
        for s in st.steps() {
            let du = &s.delta * s.upsilon.transpose();
            assert!(
                (du[(0, 0)] - s.sigma_v_lin[(0, 0)]).abs() < 1e-12 * s.sigma_v_lin[(0, 0)].max(1.0)
            );
            assert!((&du - du.transpose()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn certain_attack_gives_attack_covariance() {
        let st = AugmentedStatistics::new(
            &ScalarScenario::default()
                .with_lambda_bar(1.0)
                .build(4)
                .unwrap(),
        )
        .unwrap();
        for s in st.steps() {
            assert!((&s.sigma_y - &s.sigma_w_aug).abs().max() < 1e-12);
            assert_eq!(s.mean_y, s.mean_w);
        }
    }

    #[test]
    fn no_attack_mean_is_measurement_mean() {
        let st = AugmentedStatistics::new(
            &ScalarScenario::default()
                .with_lambda_bar(0.0)
                .build(4)
                .unwrap(),
        )
        .unwrap();
        for s in st.steps() {
            assert_eq!(s.mean_y, s.mean_z);
        }
    }

    #[test]
    fn deterministic_measurements_have_no_vss() {
        let st = AugmentedStatistics::new(&ScalarScenario::gaussian().build(8).unwrap()).unwrap();
        for s in st.steps() {
            assert!(s.sigma_vss.abs().max() < 1e-15);
        }
    }

    #[test]
    fn observation_covariance_is_psd_over_horizon() {
        let st = section(100);
        for s in st.steps() {
            assert!(min_eigenvalue(&s.sigma_y) >= -1e-8 * s.sigma_y.trace());
        }
    }

    fn synthetic_two_dim(horizon: usize) -> SystemModel {
        let phi = Matrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.7]);
        let evo = LinearEvolution {
            phi: phi.into(),
            x0: NoiseDistribution::gaussian(Matrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1]))
                .unwrap(),
            eps: NoiseDistribution::gaussian(Matrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.05]))
                .unwrap()
                .into(),
        };
        let signal = SignalModel::build_from_linear_evolution(evo, horizon).unwrap();
        let meas = MeasurementMatrixModel::deterministic(Matrix::from_row_slice(
            2,
            2,
            &[1.0, 0.0, 0.5, 1.0],
        ));
        let noise = CorrelatedNoiseModel::new(
            Matrix::from_row_slice(2, 2, &[0.6, 0.1, 0.0, 0.5]).into(),
            NoiseDistribution::gaussian(Matrix::identity(2, 2) * 0.02)
                .unwrap()
                .into(),
            NoiseDistribution::gaussian(Matrix::identity(2, 2) * 0.05).unwrap(),
        )
        .unwrap();
        let attack = AttackModel::new(
            0.2.into(),
            NoiseDistribution::gaussian(Matrix::identity(2, 2) * 3.0)
                .unwrap()
                .into(),
        );
        SystemModel::new(signal, meas, noise, attack, horizon).unwrap()
    }

    #[test]
    fn block_factors_match_four_block_covariance() {
        let model = synthetic_two_dim(6);
        let st = AugmentedStatistics::new(&model).unwrap();
        let sig = model.signal();
        for k in 1..=6 {
            for s in 1..=k {
                let lhs = &st.step(k).unwrap().ab * st.step(s).unwrap().bb.transpose();
                let f_k = sig.factors(k).unwrap();
                let f_s = sig.factors(s).unwrap();
                let rhs = vcat(&[
                    &hcat(&[
                        &(&f_k.a * f_s.b.transpose()),
                        &(&f_k.a1 * f_s.b1.transpose()),
                    ]),
                    &hcat(&[
                        &(&f_k.a2 * f_s.b2.transpose()),
                        &(&f_k.a_breve * f_s.b_breve.transpose()),
                    ]),
                ]);
                assert!((lhs - rhs).abs().max() < 1e-12);
            }
        }
        for s in st.steps() {
            check_psd("Σ𝐲", &s.sigma_y, s.k).unwrap();
        }
    }

    #[test]
    fn attack_free_zero_moments_give_zero_g() {
        let model = ScalarScenario {
            v0_var: 0.0,
            u_var: 0.0,
            theta_bar: 0.0,
            ..ScalarScenario::default()
        };
        let model = SystemModel::new(
            SignalModel::build_from_linear_evolution(model.evolution().unwrap(), 3).unwrap(),
            MeasurementMatrixModel::scalar_bernoulli(0.9, 0.0).unwrap(),
            CorrelatedNoiseModel::new(
                Matrix::from_element(1, 1, 0.75).into(),
                NoiseDistribution::gaussian_scalar(0.0).unwrap().into(),
                NoiseDistribution::gaussian_scalar(0.0).unwrap(),
            )
            .unwrap(),
            AttackModel::none(1),
            3,
        )
        .unwrap();
        let st = AugmentedStatistics::new(&model).unwrap();
        for s in st.steps() {
            assert_eq!(s.g, Vector::zeros(2));
        }
    }
}
