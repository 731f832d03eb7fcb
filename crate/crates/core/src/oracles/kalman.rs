use crate::error::{Error, Result};
use crate::kron::{block_diag, hcat, symmetrize, Matrix, Vector};
use crate::linalg::SymmetricInverse;
use crate::model::{LinearEvolution, SystemModel};

/// Estimate and error covariance of the signal component.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanEstimate {
    pub k: usize,
    pub x_hat: Vector,
    pub cov: Matrix,
}

/// Classical Kalman filter on the stacked state `[x; v]` with a noiseless
/// measurement `y = [H I] [x; v]`. Only defined for Gaussian models with a
/// deterministic measurement matrix and no attacks, where the linear
/// estimator must reproduce it.
pub struct KalmanOracle<'a> {
    model: &'a SystemModel,
    evolution: &'a LinearEvolution,
}

impl<'a> KalmanOracle<'a> {
    pub fn new(model: &'a SystemModel) -> Result<Self> {
        let evolution = model.signal().evolution().ok_or(Error::NonQualifyingModel(
            "no linear signal evolution".into(),
        ))?;
        if !model.meas().is_deterministic() {
            return Err(Error::NonQualifyingModel(
                "random measurement matrix".into(),
            ));
        }
        let noise = model.noise();
        let mut gaussian = evolution.x0.is_gaussian() && noise.initial.is_gaussian();
        for k in 0..=model.horizon() {
            if model.attack().lambda_bar(k) != 0.0 {
                return Err(Error::NonQualifyingModel(
                    "attack probability is not zero".into(),
                ));
            }
            gaussian &= evolution.eps.at(k).is_gaussian() && noise.driver.at(k).is_gaussian();
        }
        if !gaussian {
            return Err(Error::NonQualifyingModel(
                "non-Gaussian distribution".into(),
            ));
        }
        Ok(Self { model, evolution })
    }

    /// Filtered estimates `x̂_{k/k}` for `k = 1..=ys.len()`.
    pub fn filter(&self, ys: &[Vector]) -> Result<Vec<KalmanEstimate>> {
        let mut out = Vec::with_capacity(ys.len());
        self.run(ys, None, |k, x, p| {
            out.push(KalmanEstimate {
                k,
                x_hat: x.clone(),
                cov: p.clone(),
            });
        })?;
        Ok(out)
    }

    /// Fixed-point estimates `x̂_{k/k+N}` for `N = 0..=ys.len()-k`, obtained by
    /// carrying a frozen copy of `x_k` in the state.
    pub fn fixed_point(&self, k: usize, ys: &[Vector]) -> Result<Vec<KalmanEstimate>> {
        if k == 0 || k > ys.len() {
            return Err(Error::HorizonExceeded {
                k,
                horizon: ys.len(),
            });
        }
        let n_x = self.model.n_x();
        let base = n_x + self.model.n_z();
        let mut out = Vec::new();
        self.run(ys, Some(k), |j, x, p| {
            if j >= k {
                out.push(KalmanEstimate {
                    k: j,
                    x_hat: x.rows(base, n_x).into_owned(),
                    cov: p.view((base, base), (n_x, n_x)).into_owned(),
                });
            }
        })?;
        Ok(out)
    }

    fn run(
        &self,
        ys: &[Vector],
        fixed: Option<usize>,
        mut emit: impl FnMut(usize, &Vector, &Matrix),
    ) -> Result<()> {
        if ys.len() > self.model.horizon() {
            return Err(Error::HorizonExceeded {
                k: ys.len(),
                horizon: self.model.horizon(),
            });
        }
        let (n_x, n_z) = (self.model.n_x(), self.model.n_z());
        let base = n_x + n_z;
        let dim = if fixed.is_some() { base + n_x } else { base };
        let noise = self.model.noise();

        let mut x = Vector::zeros(base);
        let mut p = block_diag(&[
            &self.evolution.x0.moments().cov,
            &noise.initial_moments().cov,
        ]);
        for (i, y) in ys.iter().enumerate() {
            let k = i + 1;
            let f = block_diag(&[&self.evolution.phi.at(k - 1), &noise.d(k - 1)]);
            let q = block_diag(&[
                &self.evolution.eps.at(k - 1).moments().cov,
                &noise.driver_moments(k - 1).cov,
            ]);
            let (f, q) = if fixed.is_some_and(|kf| k > kf) {
                (
                    block_diag(&[&f, &Matrix::identity(n_x, n_x)]),
                    block_diag(&[&q, &Matrix::zeros(n_x, n_x)]),
                )
            } else {
                (f, q)
            };
            p = &f * p * f.transpose() + q;
            x = f * x;

            let c = hcat(&[
                &self.model.meas().mean_h(k),
                &Matrix::identity(n_z, n_z),
                &Matrix::zeros(n_z, x.len() - base),
            ]);
            let s = symmetrize(&(&c * &p * c.transpose()));
            let pc = &p * c.transpose();
            let gain = SymmetricInverse::new(&s)?.solve_right(&pc);
            x += &gain * (y - &c * &x);
            p = symmetrize(&(&p - &gain * pc.transpose()));

            if fixed == Some(k) {
                // append a frozen copy of x_k
                let mut xa = Vector::zeros(dim);
                xa.rows_mut(0, base).copy_from(&x);
                xa.rows_mut(base, n_x).copy_from(&x.rows(0, n_x));
                let mut pa = Matrix::zeros(dim, dim);
                pa.view_mut((0, 0), (base, base)).copy_from(&p);
                pa.view_mut((base, 0), (n_x, base))
                    .copy_from(&p.rows(0, n_x));
                pa.view_mut((0, base), (base, n_x))
                    .copy_from(&p.columns(0, n_x));
                pa.view_mut((base, base), (n_x, n_x))
                    .copy_from(&p.view((0, 0), (n_x, n_x)));
                x = xa;
                p = pa;
            }
            let xk = x.rows(0, n_x).into_owned();
            let pk = p.view((0, 0), (n_x, n_x)).into_owned();
            if fixed.is_some() {
                emit(k, &x, &p);
            } else {
                emit(k, &xk, &pk);
            }
        }
        Ok(())
    }
}
