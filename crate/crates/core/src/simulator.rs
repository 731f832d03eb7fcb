//! Trajectory sampling and Monte Carlo evaluation of the estimators.
//!
//! Random numbers come from ChaCha8 used as a counter-based generator. For
//! root seed `s`, run `r`, component `c` and time `k` the draws start at
//! stream `16·r + c`, word position `k·2²⁴` of the generator keyed by `s`, so
//! every (run, component, k) cell is independent of how many values the
//! other cells consume.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augmented_stats::AugmentedStatistics;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorDesign, EstimatorKind, Filter, FixedPointSmootherDesign};
use crate::kron::{Matrix, Vector};
use crate::model::SystemModel;

/// Component indices of the random streams.
pub mod stream {
    pub const X0: u64 = 0;
    pub const EPS: u64 = 1;
    pub const V0: u64 = 2;
    pub const U: u64 = 3;
    pub const H: u64 = 4;
    pub const LAMBDA: u64 = 5;
    pub const W: u64 = 6;
    /// Stream slots reserved per run.
    pub const PER_RUN: u64 = 16;
}

/// Runs handled by one work item; partial sums are merged in chunk order.
pub const CHUNK_RUNS: usize = 256;

struct Streams {
    base: ChaCha8Rng,
    run: u64,
}

impl Streams {
    fn new(seed: u64, run: usize) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
            run: run as u64,
        }
    }

    fn at(&self, component: u64, k: usize) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(self.run * stream::PER_RUN + component);
        rng.set_word_pos((k as u128) << 24);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub k: usize,
    pub x: Vector,
    pub v: Vector,
    /// Realized `H_k`.
    pub h: Matrix,
    pub z: Vector,
    /// Attack success indicator `λ_k`.
    pub attacked: bool,
    /// Attack value drawn at every step, injected only when `attacked`.
    pub w: Vector,
    pub y: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub run: usize,
    pub x0: Vector,
    pub v0: Vector,
    /// Steps `k = 1..=horizon`.
    pub steps: Vec<TrajectoryStep>,
}

impl TrajectoryRecord {
    pub fn measurements(&self) -> Vec<Vector> {
        self.steps.iter().map(|s| s.y.clone()).collect()
    }

    pub fn step(&self, k: usize) -> &TrajectoryStep {
        &self.steps[k - 1]
    }
}

/// Draws one realization of signal, noise, measurement matrices and attacks.
pub fn sample_trajectory(
    model: &SystemModel,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryRecord> {
    sample_run(model, horizon, seed, 0)
}

/// As [`sample_trajectory`] for Monte Carlo run `run` of root seed `seed`.
pub fn sample_run(
    model: &SystemModel,
    horizon: usize,
    seed: u64,
    run: usize,
) -> Result<TrajectoryRecord> {
    let evo = model.signal().evolution().ok_or_else(|| {
        Error::NonQualifyingModel("simulation needs a linear signal evolution".into())
    })?;
    if horizon > model.horizon() {
        return Err(Error::HorizonExceeded {
            k: horizon,
            horizon: model.horizon(),
        });
    }
    let (noise, attack, meas) = (model.noise(), model.attack(), model.meas());
    let streams = Streams::new(seed, run);

    let x0 = evo.x0.sample(&mut streams.at(stream::X0, 0));
    let v0 = noise.initial.sample(&mut streams.at(stream::V0, 0));
    let (mut x, mut v) = (x0.clone(), v0.clone());
    let mut steps = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        x = evo.phi.at(k - 1) * x
            + evo
                .eps
                .at(k - 1)
                .sample(&mut streams.at(stream::EPS, k - 1));
        v = noise.d(k - 1) * v
            + noise
                .driver
                .at(k - 1)
                .sample(&mut streams.at(stream::U, k - 1));
        let h = meas.sample_h(k, &mut streams.at(stream::H, k));
        let z = &h * &x + &v;
        let attacked = attack.sample_lambda(k, &mut streams.at(stream::LAMBDA, k));
        let w = attack.sample_w(k, &mut streams.at(stream::W, k));
        let y = if attacked { w.clone() } else { z.clone() };
        steps.push(TrajectoryStep {
            k,
            x: x.clone(),
            v: v.clone(),
            h,
            z,
            attacked,
            w,
            y,
        });
    }
    Ok(TrajectoryRecord {
        seed,
        run,
        x0,
        v0,
        steps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloSpec {
    /// Number of runs; zero skips the empirical part.
    pub runs: usize,
    pub seed: u64,
    /// Largest smoothing lag `N`.
    pub n_max: usize,
    /// Worker cap; `None` uses the global pool.
    pub threads: Option<usize>,
    pub estimators: Vec<EstimatorKind>,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            runs: 10_000,
            seed: 1,
            n_max: 10,
            threads: None,
            estimators: EstimatorKind::ALL.to_vec(),
        }
    }
}

/// One point of an error-variance curve. `lag = 0` is the filter, `lag = N`
/// the estimate `x̂_{k/k+N}`. Variances are traces of the error covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub k: usize,
    pub estimator: EstimatorKind,
    pub lag: usize,
    pub theoretical_var: f64,
    pub empirical_mse: Option<f64>,
    pub theta_bar: Option<f64>,
    pub lambda_bar: f64,
}

impl CurveRow {
    pub fn kind_label(&self) -> String {
        if self.lag == 0 {
            "filter".into()
        } else {
            format!("smooth{}", self.lag)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloResult {
    pub rows: Vec<CurveRow>,
    pub runs: usize,
    pub seed: u64,
}

pub const CSV_HEADER: [&str; 9] = [
    "k",
    "estimator",
    "kind",
    "theoretical_var",
    "empirical_mse",
    "runs",
    "theta_bar",
    "lambda_bar",
    "seed",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MonteCarloResult {
    pub fn row(&self, k: usize, estimator: EstimatorKind, lag: usize) -> Option<&CurveRow> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.estimator == estimator && r.lag == lag)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::Config(format!("writing result table: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.estimator.label().to_string(),
                r.kind_label(),
                r.theoretical_var.to_string(),
                opt(r.empirical_mse),
                self.runs.to_string(),
                opt(r.theta_bar),
                r.lambda_bar.to_string(),
                self.seed.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("writing result table: {e}")))
    }
}

/// Designs shared by all runs: the filter and one fixed-point smoother per `k`.
struct Plan {
    kinds: Vec<(EstimatorDesign, Vec<Option<FixedPointSmootherDesign>>)>,
    /// `offsets[kind][lag]`: index of the row `(kind, lag, k = 1)`.
    offsets: Vec<Vec<usize>>,
    horizon: usize,
    n_max: usize,
    rows: Vec<CurveRow>,
}

impl Plan {
    fn new(model: &SystemModel, spec: &MonteCarloSpec) -> Result<Self> {
        let horizon = model.horizon();
        if spec.n_max >= horizon {
            return Err(Error::Config(format!(
                "n_max = {} leaves no smoothing points within horizon {horizon}",
                spec.n_max
            )));
        }
        let stats = AugmentedStatistics::new(model)?;
        let theta_bar = model.meas().bernoulli_parameters().map(|(_, t)| t);
        let mut kinds = Vec::new();
        let mut offsets = Vec::new();
        let mut rows = Vec::new();
        for &kind in &spec.estimators {
            let design = EstimatorDesign::new(&stats, kind)?;
            let smoothers = (1..=horizon)
                .map(|k| {
                    let n = spec.n_max.min(horizon - k);
                    (n > 0).then(|| design.smoother_design(k, n)).transpose()
                })
                .collect::<Result<Vec<_>>>()?;
            let mut off = Vec::new();
            for lag in 0..=spec.n_max {
                off.push(rows.len());
                for k in 1..=horizon - lag {
                    let cov = if lag == 0 {
                        design.filter_cov(k)?
                    } else {
                        smoothers[k - 1].as_ref().unwrap().cov(lag)?
                    };
                    rows.push(CurveRow {
                        k,
                        estimator: kind,
                        lag,
                        theoretical_var: cov.trace(),
                        empirical_mse: None,
                        theta_bar,
                        lambda_bar: model.attack().lambda_bar(k),
                    });
                }
            }
            offsets.push(off);
            kinds.push((design, smoothers));
        }
        Ok(Self {
            kinds,
            offsets,
            horizon,
            n_max: spec.n_max,
            rows,
        })
    }

    /// Squared errors of one run added to `acc`.
    fn accumulate(
        &self,
        model: &SystemModel,
        seed: u64,
        run: usize,
        acc: &mut [f64],
    ) -> Result<()> {
        let traj = sample_run(model, self.horizon, seed, run)?;
        for (ki, (design, smoothers)) in self.kinds.iter().enumerate() {
            let off = &self.offsets[ki];
            let mut filter = Filter::with_history_depth(design, 0);
            let mut x_hat = Vec::with_capacity(self.horizon);
            let mut mu = Vec::with_capacity(self.horizon);
            for s in &traj.steps {
                let st = filter.step(&s.y)?;
                acc[off[0] + s.k - 1] += (&st.x_hat - &s.x).norm_squared();
                x_hat.push(st.x_hat.clone());
                mu.push(st.innovation.clone().unwrap());
            }
            for (i, sd) in smoothers.iter().enumerate() {
                let Some(sd) = sd else { continue };
                let k = i + 1;
                let x = &traj.step(k).x;
                let mut est = x_hat[i].clone();
                for (n, step) in sd.steps().iter().enumerate() {
                    est += &step.gain * &mu[i + n + 1];
                    acc[off[n + 1] + k - 1] += (&est - x).norm_squared();
                }
            }
        }
        Ok(())
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("building worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Evaluates `f` for runs `0..runs` on the worker pool and returns the
/// results in run order.
pub fn map_runs<T, F>(runs: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let n_chunks = runs.div_ceil(CHUNK_RUNS);
    let chunks = with_pool(threads, || {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                (c * CHUNK_RUNS..((c + 1) * CHUNK_RUNS).min(runs))
                    .map(&f)
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(chunks.into_iter().flatten().collect())
}

/// Theoretical error variances of filter and smoothers at every `k` and,
/// when `spec.runs > 0`, their empirical MSE over independent runs.
///
/// Each chunk of [`CHUNK_RUNS`] runs is summed sequentially and the chunk
/// sums are added in chunk order, so the result does not depend on the
/// number of workers.
pub fn run_monte_carlo(model: &SystemModel, spec: &MonteCarloSpec) -> Result<MonteCarloResult> {
    let plan = Plan::new(model, spec)?;
    let mut rows = plan.rows.clone();
    if spec.runs > 0 {
        let n_chunks = spec.runs.div_ceil(CHUNK_RUNS);
        let partials: Vec<Vec<f64>> = with_pool(spec.threads, || {
            (0..n_chunks)
                .into_par_iter()
                .map(|c| {
                    let mut acc = vec![0.0; rows.len()];
                    for run in c * CHUNK_RUNS..((c + 1) * CHUNK_RUNS).min(spec.runs) {
                        plan.accumulate(model, spec.seed, run, &mut acc)
                            .map_err(|e| Error::RunFailed {
                                run,
                                seed: spec.seed,
                                source: Box::new(e),
                            })?;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let mut total = vec![0.0; rows.len()];
        for p in &partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        for (r, t) in rows.iter_mut().zip(total) {
            r.empirical_mse = Some(t / spec.runs as f64);
        }
    }
    log::debug!(
        "monte carlo: {} rows, {} runs, n_max {}",
        rows.len(),
        spec.runs,
        plan.n_max
    );
    Ok(MonteCarloResult {
        rows,
        runs: spec.runs,
        seed: spec.seed,
    })
}

/// Evaluates `run_monte_carlo` on models built for each parameter value and
/// keeps the rows at `k_eval`.
pub fn sweep<F>(
    values: &[f64],
    build: F,
    k_eval: usize,
    spec: &MonteCarloSpec,
) -> Result<MonteCarloResult>
where
    F: Fn(f64) -> Result<SystemModel> + Sync,
{
    let inner = MonteCarloSpec {
        threads: None,
        ..spec.clone()
    };
    let parts = with_pool(spec.threads, || {
        values
            .par_iter()
            .map(|&v| {
                let model = build(v)?;
                if k_eval + spec.n_max > model.horizon() {
                    return Err(Error::HorizonExceeded {
                        k: k_eval + spec.n_max,
                        horizon: model.horizon(),
                    });
                }
                let r = run_monte_carlo(&model, &inner)?;
                Ok(r.rows
                    .into_iter()
                    .filter(|row| row.k == k_eval)
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(MonteCarloResult {
        rows: parts.into_iter().flatten().collect(),
        runs: spec.runs,
        seed: spec.seed,
    })
}

/// Signal, measurements and estimates along one simulated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEstimates {
    pub record: TrajectoryRecord,
    pub lag: usize,
    /// Per estimator: `x̂_{k/k}` for `k = 1..=horizon` and `x̂_{k/k+lag}` for
    /// `k = 1..=horizon-lag`.
    pub estimates: Vec<(EstimatorKind, Vec<Vector>, Vec<Vector>)>,
}

impl TrajectoryEstimates {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::Config(format!("writing trajectory: {e}"));
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string(), "x".into(), "y".into()];
        for (kind, _, _) in &self.estimates {
            header.push(format!("{}_filter", kind.label()));
            header.push(format!("{}_smooth{}", kind.label(), self.lag));
        }
        w.write_record(&header).map_err(err)?;
        for s in &self.record.steps {
            let mut row = vec![s.k.to_string(), s.x[0].to_string(), s.y[0].to_string()];
            for (_, filt, smooth) in &self.estimates {
                row.push(filt[s.k - 1][0].to_string());
                row.push(
                    smooth
                        .get(s.k - 1)
                        .map(|v| v[0].to_string())
                        .unwrap_or_default(),
                );
            }
            w.write_record(&row).map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("writing trajectory: {e}")))
    }
}

/// Runs both estimators over one simulated trajectory.
pub fn estimate_trajectory(
    model: &SystemModel,
    seed: u64,
    lag: usize,
) -> Result<TrajectoryEstimates> {
    let horizon = model.horizon();
    let record = sample_trajectory(model, horizon, seed)?;
    let stats = AugmentedStatistics::new(model)?;
    let mut estimates = Vec::new();
    for kind in EstimatorKind::ALL {
        let design = EstimatorDesign::new(&stats, kind)?;
        let mut filter = Filter::with_history_depth(&design, 0);
        let mut filt = Vec::with_capacity(horizon);
        let mut mu = Vec::with_capacity(horizon);
        for s in &record.steps {
            let st = filter.step(&s.y)?;
            filt.push(st.x_hat.clone());
            mu.push(st.innovation.clone().unwrap());
        }
        let mut smooth = Vec::new();
        if lag > 0 {
            for k in 1..=horizon.saturating_sub(lag) {
                let sd = design.smoother_design(k, lag)?;
                let mut est = filt[k - 1].clone();
                for (n, step) in sd.steps().iter().enumerate() {
                    est += &step.gain * &mu[k + n];
                }
                smooth.push(est);
            }
        }
        estimates.push((kind, filt, smooth));
    }
    Ok(TrajectoryEstimates {
        record,
        lag,
        estimates,
    })
}
