use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::kron::{
    augment, block_diag, hcat, kron, kron_power2_mat, symmetrize, symmetrizer, vcat, vec, vstack,
    Matrix, Vector,
};
use crate::linalg::SymmetricInverse;
use crate::model::SystemModel;

/// Largest number of observations the dense batch projection accepts.
pub const MAX_BATCH_HORIZON: usize = 6;

/// `Cov(x_k, x_s)`, `Cov(x_k, x_s⊗x_s)`, `Cov(x_k⊗x_k, x_s)`, `Cov(x_k⊗x_k, x_s⊗x_s)`.
struct SignalCross {
    xx: Matrix,
    x_x2: Matrix,
    x2_x: Matrix,
    x2_x2: Matrix,
}

impl SignalCross {
    fn transposed(self) -> Self {
        Self {
            xx: self.xx.transpose(),
            x_x2: self.x2_x.transpose(),
            x2_x: self.x_x2.transpose(),
            x2_x2: self.x2_x2.transpose(),
        }
    }

    fn block(&self) -> Matrix {
        vcat(&[
            &hcat(&[&self.xx, &self.x_x2]),
            &hcat(&[&self.x2_x, &self.x2_x2]),
        ])
    }
}

/// Second-order description of signal and noise built straight from the
/// model primitives: transition products and marginal moments, not the
/// separable factors used by the recursive estimators.
struct DirectMoments<'a> {
    model: &'a SystemModel,
    /// augmented noise covariance `Cov([v_j; v_j⊗v_j])`, `j = 0..=last`
    noise_aug: Vec<Matrix>,
}

impl<'a> DirectMoments<'a> {
    fn new(model: &'a SystemModel, last: usize) -> Self {
        let noise = model.noise();
        let n = noise.n_z();
        let k_sym = symmetrizer(n);
        let mut cov = noise.initial_moments().composite();
        let mut noise_aug = vec![cov.clone()];
        for j in 0..last {
            let d = noise.d(j);
            let u = noise.driver_moments(j);
            let v = cov.view((0, 0), (n, n)).into_owned();
            // v_{j+1}⊗v_{j+1} = D⁽²⁾ v⊗v + K(Dv ⊗ u) + u⊗u
            let driver22 = &k_sym * kron(&(&d * v * d.transpose()), &u.cov) * &k_sym + &u.cov2;
            let driver = vcat(&[
                &hcat(&[&u.cov, &u.cov12]),
                &hcat(&[&u.cov12.transpose(), &driver22]),
            ]);
            let step = block_diag(&[&d, &kron_power2_mat(&d)]);
            cov = &step * cov * step.transpose() + driver;
            noise_aug.push(cov.clone());
        }
        Self { model, noise_aug }
    }

    fn n_z(&self) -> usize {
        self.model.n_z()
    }

    fn signal(&self, k: usize, s: usize) -> Result<SignalCross> {
        if k < s {
            return Ok(self.signal(s, k)?.transposed());
        }
        let sig = self.model.signal();
        match (sig.evolution(), sig.marginal_moments(s)) {
            (Some(evo), Some(m)) => {
                let n = sig.n_x();
                let mut t = Matrix::identity(n, n);
                for j in s..k {
                    t = evo.phi.at(j) * t;
                }
                let t2 = kron_power2_mat(&t);
                Ok(SignalCross {
                    xx: &t * &m.cov,
                    x_x2: &t * &m.cov12,
                    x2_x: &t2 * m.cov12.transpose(),
                    x2_x2: &t2 * &m.cov2,
                })
            }
            _ => Ok(SignalCross {
                xx: sig.cov_x(k, s)?,
                x_x2: sig.cov_x12(k, s)?,
                x2_x: sig.cov_x12(s, k)?.transpose(),
                x2_x2: sig.cov_x2(k, s)?,
            }),
        }
    }

    /// `Cov([v_k; v_k⊗v_k], [v_s; v_s⊗v_s])`.
    fn noise(&self, k: usize, s: usize) -> Matrix {
        if k < s {
            return self.noise(s, k).transpose();
        }
        let noise = self.model.noise();
        let n = self.n_z();
        let mut t = Matrix::identity(n + n * n, n + n * n);
        for j in s..k {
            let d = noise.d(j);
            t = block_diag(&[&d, &kron_power2_mat(&d)]) * t;
        }
        t * &self.noise_aug[s]
    }

    fn noise_cov(&self, k: usize, s: usize) -> Matrix {
        let n = self.n_z();
        self.noise(k, s).view((0, 0), (n, n)).into_owned()
    }

    fn hbar_aug(&self, k: usize) -> Matrix {
        let meas = self.model.meas();
        block_diag(&[&meas.mean_h(k), &meas.mean_h2(k)])
    }

    /// Mean of `[z_k; z_k⊗z_k]` and of `[w_k; w_k⊗w_k]`.
    fn means(&self, k: usize) -> Result<(Vector, Vector)> {
        let n = self.n_z();
        let sx = self.signal(k, k)?.xx;
        let sv = self.noise_cov(k, k);
        let w = self.model.attack().moments(k);
        let zero = Vector::zeros(n);
        Ok((
            vstack(&zero, &(self.model.meas().mean_h2(k) * vec(&sx) + vec(&sv))),
            vstack(&zero, &vec(&w.cov)),
        ))
    }

    /// `Cov([z_k; z_k⊗z_k], [z_s; z_s⊗z_s])`.
    fn z_cov(&self, k: usize, s: usize) -> Result<Matrix> {
        let n = self.n_z();
        let k_sym = symmetrizer(n);
        let meas = self.model.meas();
        let sig = self.signal(k, s)?;
        let noise = self.noise(k, s);
        let mut out = if k == s {
            let signal = vcat(&[
                &hcat(&[
                    &meas.exp_h_m_ht(k, &sig.xx),
                    &meas.exp_h_m_h2t(k, &sig.x_x2),
                ]),
                &hcat(&[
                    &meas.exp_h_m_h2t(k, &sig.x_x2).transpose(),
                    &meas.exp_h2_m_h2t(k, &sig.x2_x2),
                ]),
            ]);
            signal + &noise
        } else {
            self.hbar_aug(k) * sig.block() * self.hbar_aug(s).transpose() + &noise
        };
        let sv = noise.view((0, 0), (n, n)).into_owned();
        let mut low = out.view_mut((n, n), (n * n, n * n));
        if k == s {
            // Cov of K(H x ⊗ v) and of the fluctuation of H⁽²⁾ around its mean
            let hxh = meas.exp_h_m_ht(k, &sig.xx);
            let vx = vec(&sig.xx);
            low += &k_sym * kron(&hxh, &sv) * &k_sym
                + meas.centered_h2_m_h2t(k, &(&vx * vx.transpose()));
        } else {
            let hxh = meas.mean_h(k) * &sig.xx * meas.mean_h(s).transpose();
            low += &k_sym * kron(&hxh, &sv) * &k_sym;
        }
        Ok(out)
    }

    /// `Cov(𝐲_k, 𝐲_s)` of the centered augmented observations.
    fn y_cov(&self, k: usize, s: usize) -> Result<Matrix> {
        let attack = self.model.attack();
        let (lk, ls) = (attack.lambda_bar(k), attack.lambda_bar(s));
        let z = self.z_cov(k, s)?;
        if k != s {
            return Ok(z * ((1.0 - lk) * (1.0 - ls)));
        }
        let (mz, mw) = self.means(k)?;
        let g = mz - mw;
        let w = attack.moments(k).composite();
        Ok(symmetrize(
            &(z * (1.0 - lk) + w * lk + (&g * g.transpose()) * (lk * (1.0 - lk))),
        ))
    }

    /// `E[x_k 𝐲_sᵀ]`.
    fn x_y_cov(&self, k: usize, s: usize) -> Result<Matrix> {
        let sig = self.signal(k, s)?;
        let ls = self.model.attack().lambda_bar(s);
        Ok(hcat(&[&sig.xx, &sig.x_x2]) * self.hbar_aug(s).transpose() * (1.0 - ls))
    }
}

/// Least-squares projection of `x_k` onto the observations `y_1..y_L`
/// (or their augmented versions), solved from the dense normal equations.
#[derive(Clone, Debug)]
pub struct BatchProjection {
    pub kind: EstimatorKind,
    pub k: usize,
    pub horizon: usize,
    /// `Cov(x_k, Y)` with `Y` the stacked centered observations.
    pub cross_cov: Matrix,
    /// `Cov(Y)`
    pub gram: Matrix,
    pub coefficients: Matrix,
    pub error_cov: Matrix,
    pub pseudo_inverse: bool,
    means: Vec<Vector>,
}

impl BatchProjection {
    pub fn new(model: &SystemModel, kind: EstimatorKind, k: usize, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > MAX_BATCH_HORIZON {
            return Err(Error::Config(format!(
                "batch horizon must be in 1..={MAX_BATCH_HORIZON}, got {horizon}"
            )));
        }
        if k == 0 || k.max(horizon) > model.horizon() {
            return Err(Error::HorizonExceeded {
                k: k.max(horizon),
                horizon: model.horizon(),
            });
        }
        let direct = DirectMoments::new(model, k.max(horizon));
        let n = model.n_z();
        let d = match kind {
            EstimatorKind::Quadratic => n + n * n,
            EstimatorKind::Linear => n,
        };
        let mut gram = Matrix::zeros(horizon * d, horizon * d);
        let mut cross_cov = Matrix::zeros(model.n_x(), horizon * d);
        let mut means = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            for s in 1..=t {
                let c = direct.y_cov(t, s)?;
                let c = c.view((0, 0), (d, d));
                gram.view_mut(((t - 1) * d, (s - 1) * d), (d, d))
                    .copy_from(&c);
                gram.view_mut(((s - 1) * d, (t - 1) * d), (d, d))
                    .copy_from(&c.transpose());
            }
            let xy = direct.x_y_cov(k, t)?;
            cross_cov
                .view_mut((0, (t - 1) * d), (model.n_x(), d))
                .copy_from(&xy.columns(0, d));
            let (mz, mw) = direct.means(t)?;
            let l = model.attack().lambda_bar(t);
            means.push((mz * (1.0 - l) + mw * l).rows(0, d).into_owned());
        }
        let inv = SymmetricInverse::new(&gram)?;
        if inv.is_pseudo() {
            log::debug!("batch projection ({kind}, k={k}, L={horizon}): singular Gram matrix, using a pseudo-inverse");
        }
        let coefficients = inv.solve_right(&cross_cov);
        let error_cov =
            symmetrize(&(direct.signal(k, k)?.xx - &coefficients * cross_cov.transpose()));
        Ok(Self {
            kind,
            k,
            horizon,
            cross_cov,
            gram,
            coefficients,
            error_cov,
            pseudo_inverse: inv.is_pseudo(),
            means,
        })
    }

    /// Projection for the realized raw measurements `y_1..y_L`.
    pub fn estimate(&self, ys: &[Vector]) -> Result<Vector> {
        if ys.len() != self.horizon {
            return Err(Error::dim("batch measurements", self.horizon, ys.len()));
        }
        let d = self.means[0].len();
        let mut stacked = Vector::zeros(self.horizon * d);
        for (t, y) in ys.iter().enumerate() {
            let obs = match self.kind {
                EstimatorKind::Quadratic => augment(y),
                EstimatorKind::Linear => y.clone(),
            };
            if obs.len() != d {
                return Err(Error::dim(format!("measurement {}", t + 1), d, obs.len()));
            }
            stacked
                .rows_mut(t * d, d)
                .copy_from(&(obs - &self.means[t]));
        }
        Ok(&self.coefficients * stacked)
    }
}

/// `(x̂_{k/L}, Σ̂_{k/L})` from the batch projection with `L = ys.len()`.
pub fn batch_estimate(
    model: &SystemModel,
    kind: EstimatorKind,
    k: usize,
    ys: &[Vector],
) -> Result<(Vector, Matrix)> {
    let p = BatchProjection::new(model, kind, k, ys.len())?;
    Ok((p.estimate(ys)?, p.error_cov))
}
