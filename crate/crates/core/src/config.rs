//! Flat `key = value` experiment descriptions.
//!
//! ```text
//! # reference setup, error variances against k
//! model.signal.phi = 0.95
//! model.measurement.theta_bar = 0.5
//! model.attack.values = -8, 8/7
//! model.attack.probs = 1/8, 7/8
//! experiment.kind = curves
//! experiment.horizon = 110
//! ```
//!
//! Scalars accept fractions (`8/7`). Matrices are written row by row,
//! `a, b; c, d`. Every key is optional and defaults to the reference
//! scalar setup; unknown or repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::augmented_stats::AugmentedStatistics;
use crate::error::{Error, Result};
use crate::kron::Matrix;
use crate::model::{
    AttackModel, CorrelatedNoiseModel, LinearEvolution, MeasurementMatrixModel, NoiseDistribution,
    ScalarScenario, SignalModel, SystemModel,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Filter and smoother error variances against `k`.
    Curves,
    /// Variances at `experiment.k` over a grid of `θ̄`.
    ThetaSweep,
    /// Variances at `experiment.k` over a grid of `λ̄`.
    LambdaSweep,
    /// One simulated trajectory with its estimates.
    Trajectory,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Curves => "curves",
            ExperimentKind::ThetaSweep => "theta_sweep",
            ExperimentKind::LambdaSweep => "lambda_sweep",
            ExperimentKind::Trajectory => "trajectory",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "curves" => ExperimentKind::Curves,
            "theta_sweep" => ExperimentKind::ThetaSweep,
            "lambda_sweep" => ExperimentKind::LambdaSweep,
            "trajectory" => ExperimentKind::Trajectory,
            _ => return Err(Error::Config(format!("unknown experiment kind '{s}'"))),
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasurementParams {
    /// `H_k = c·θ_k`, `θ_k ~ Bernoulli(θ̄)`; scalar models only.
    Bernoulli {
        c: f64,
        theta_bar: f64,
    },
    Deterministic(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttackParams {
    /// Scalar table `P(w = values[i]) = probs[i]`.
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    Gaussian(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub phi: Matrix,
    pub x0_cov: Matrix,
    pub eps_cov: Matrix,
    pub measurement: MeasurementParams,
    pub d: Matrix,
    pub v0_cov: Matrix,
    pub u_cov: Matrix,
    pub lambda_bar: f64,
    pub attack: AttackParams,
}

impl Default for ModelParams {
    fn default() -> Self {
        let sc = ScalarScenario::default();
        let s = |v: f64| Matrix::from_element(1, 1, v);
        Self {
            phi: s(sc.phi),
            x0_cov: s(sc.x0_var),
            eps_cov: s(sc.eps_var),
            measurement: MeasurementParams::Bernoulli {
                c: sc.c,
                theta_bar: sc.theta_bar,
            },
            d: s(sc.d),
            v0_cov: s(sc.v0_var),
            u_cov: s(sc.u_var),
            lambda_bar: sc.lambda_bar,
            attack: AttackParams::Discrete {
                values: sc.attack_values,
                probs: sc.attack_probs,
            },
        }
    }
}

impl ModelParams {
    pub fn build(&self, horizon: usize) -> Result<SystemModel> {
        let evo = LinearEvolution {
            phi: self.phi.clone().into(),
            x0: NoiseDistribution::gaussian(self.x0_cov.clone())?,
            eps: NoiseDistribution::gaussian(self.eps_cov.clone())?.into(),
        };
        let signal = SignalModel::build_from_linear_evolution(evo, horizon)?;
        let meas = match &self.measurement {
            MeasurementParams::Bernoulli { c, theta_bar } => {
                MeasurementMatrixModel::scalar_bernoulli(*c, *theta_bar)?
            }
            MeasurementParams::Deterministic(h) => MeasurementMatrixModel::deterministic(h.clone()),
        };
        let noise = CorrelatedNoiseModel::new(
            self.d.clone().into(),
            NoiseDistribution::gaussian(self.u_cov.clone())?.into(),
            NoiseDistribution::gaussian(self.v0_cov.clone())?,
        )?;
        let w = match &self.attack {
            AttackParams::Discrete { values, probs } => {
                NoiseDistribution::discrete(values.clone(), probs.clone())?
            }
            AttackParams::Gaussian(cov) => NoiseDistribution::gaussian(cov.clone())?,
        };
        if !(0.0..=1.0).contains(&self.lambda_bar) {
            return Err(Error::InvalidProbability {
                name: "lambda_bar".into(),
                value: self.lambda_bar,
            });
        }
        let attack = AttackModel::new(self.lambda_bar.into(), w.into());
        SystemModel::new(signal, meas, noise, attack, horizon)
    }

    pub fn theta_bar(&self) -> Option<f64> {
        match self.measurement {
            MeasurementParams::Bernoulli { theta_bar, .. } => Some(theta_bar),
            MeasurementParams::Deterministic(_) => None,
        }
    }

    pub fn with_theta_bar(&self, theta_bar: f64) -> Result<Self> {
        match self.measurement {
            MeasurementParams::Bernoulli { c, .. } => Ok(Self {
                measurement: MeasurementParams::Bernoulli { c, theta_bar },
                ..self.clone()
            }),
            MeasurementParams::Deterministic(_) => Err(Error::Config(
                "a theta_bar sweep needs a Bernoulli measurement model".into(),
            )),
        }
    }

    pub fn with_lambda_bar(&self, lambda_bar: f64) -> Self {
        Self {
            lambda_bar,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub kind: ExperimentKind,
    pub horizon: usize,
    /// Evaluation point of sweeps.
    pub k: usize,
    /// Largest smoothing lag; for trajectories the lag of the smoothed estimate.
    pub n_max: usize,
    pub runs: usize,
    pub seed: u64,
    pub sweep: Vec<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            kind: ExperimentKind::Curves,
            horizon: 110,
            k: 100,
            n_max: 10,
            runs: 10_000,
            seed: 1,
            sweep: (1..=9).map(|i| i as f64 / 10.0).collect(),
            output_dir: None,
        }
    }
}

fn cfg_err(line: usize, msg: impl fmt::Display) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

/// Parses `a`, `-a`, `a/b` and anything `f64::from_str` accepts.
pub fn parse_scalar(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((n, d)) => {
            let (n, d) = (parse_plain(n)?, parse_plain(d)?);
            if d == 0.0 {
                return Err(Error::Config(format!("zero denominator in '{s}'")));
            }
            n / d
        }
        None => parse_plain(s)?,
    };
    if !value.is_finite() {
        return Err(Error::Config(format!("'{s}' is not finite")));
    }
    Ok(value)
}

fn parse_plain(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("'{}' is not a number", s.trim())))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_scalar).collect()
}

/// Row-major literal `a, b; c, d`.
pub fn parse_matrix(s: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Result<_>>()?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("ragged matrix literal '{s}'")));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn fmt_scalar(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| fmt_scalar(*x))
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_matrix(m: &Matrix) -> String {
    (0..m.nrows())
        .map(|i| fmt_list(&m.row(i).iter().copied().collect::<Vec<_>>()))
        .collect::<Vec<_>>()
        .join(";")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(i + 1, format!("expected key = value, got '{line}'")))?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), (i + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(cfg_err(i + 1, format!("duplicate key '{key}'")));
            }
        }

        let mut c = ExperimentConfig::default();
        let (mut c_gain, mut theta_bar, mut h) = (None, None, None);
        let (mut values, mut probs, mut w_cov) = (None, None, None);
        for (key, (line, v)) in &entries {
            let at = |e: Error| cfg_err(*line, format!("{key}: {e}"));
            let int = |v: &str| {
                v.parse::<u64>().map_err(|_| {
                    cfg_err(*line, format!("{key}: '{v}' is not a non-negative integer"))
                })
            };
            match key.as_str() {
                "model.signal.phi" => c.model.phi = parse_matrix(v).map_err(at)?,
                "model.signal.x0_cov" => c.model.x0_cov = parse_matrix(v).map_err(at)?,
                "model.signal.eps_cov" => c.model.eps_cov = parse_matrix(v).map_err(at)?,
                "model.measurement.c" => c_gain = Some(parse_scalar(v).map_err(at)?),
                "model.measurement.theta_bar" => theta_bar = Some(parse_scalar(v).map_err(at)?),
                "model.measurement.h" => h = Some(parse_matrix(v).map_err(at)?),
                "model.noise.d" => c.model.d = parse_matrix(v).map_err(at)?,
                "model.noise.v0_cov" => c.model.v0_cov = parse_matrix(v).map_err(at)?,
                "model.noise.u_cov" => c.model.u_cov = parse_matrix(v).map_err(at)?,
                "model.attack.lambda_bar" => c.model.lambda_bar = parse_scalar(v).map_err(at)?,
                "model.attack.values" => values = Some(parse_list(v).map_err(at)?),
                "model.attack.probs" => probs = Some(parse_list(v).map_err(at)?),
                "model.attack.cov" => w_cov = Some(parse_matrix(v).map_err(at)?),
                "experiment.kind" => c.kind = v.parse().map_err(at)?,
                "experiment.horizon" => c.horizon = int(v)? as usize,
                "experiment.k" => c.k = int(v)? as usize,
                "experiment.n_max" => c.n_max = int(v)? as usize,
                "experiment.runs" => c.runs = int(v)? as usize,
                "experiment.seed" => c.seed = int(v)?,
                "experiment.sweep" => c.sweep = parse_list(v).map_err(at)?,
                "output.dir" => c.output_dir = Some(PathBuf::from(v)),
                _ => return Err(cfg_err(*line, format!("unknown key '{key}'"))),
            }
        }

        match (h, c_gain, theta_bar) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::Config(
                    "model.measurement.h excludes model.measurement.c and theta_bar".into(),
                ))
            }
            (Some(h), None, None) => c.model.measurement = MeasurementParams::Deterministic(h),
            (None, c_gain, theta_bar) => {
                let sc = ScalarScenario::default();
                c.model.measurement = MeasurementParams::Bernoulli {
                    c: c_gain.unwrap_or(sc.c),
                    theta_bar: theta_bar.unwrap_or(sc.theta_bar),
                };
            }
        }
        match (w_cov, values, probs) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::Config(
                    "model.attack.cov excludes model.attack.values and probs".into(),
                ))
            }
            (Some(cov), None, None) => c.model.attack = AttackParams::Gaussian(cov),
            (None, None, None) => {}
            (None, Some(values), Some(probs)) => {
                c.model.attack = AttackParams::Discrete { values, probs }
            }
            (None, _, _) => {
                return Err(Error::Config(
                    "model.attack.values and model.attack.probs must be given together".into(),
                ))
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Range checks, plus building the model statistics once so that factor
    /// overflow within the horizon is reported as a configuration error.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.horizon == 0 {
            return bad("experiment.horizon must be at least 1".into());
        }
        for (name, p) in [
            ("model.attack.lambda_bar", Some(self.model.lambda_bar)),
            ("model.measurement.theta_bar", self.model.theta_bar()),
        ] {
            if let Some(p) = p {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("{name} = {p} is not a probability"));
                }
            }
        }
        match self.kind {
            ExperimentKind::Curves => {
                if self.n_max >= self.horizon {
                    return bad(format!(
                        "experiment.n_max = {} must be below the horizon {}",
                        self.n_max, self.horizon
                    ));
                }
            }
            ExperimentKind::ThetaSweep | ExperimentKind::LambdaSweep => {
                if self.k == 0 || self.k + self.n_max > self.horizon {
                    return bad(format!(
                        "experiment.k + n_max = {} exceeds the horizon {}",
                        self.k + self.n_max,
                        self.horizon
                    ));
                }
                if self.sweep.is_empty() {
                    return bad("experiment.sweep is empty".into());
                }
                if let Some(p) = self.sweep.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return bad(format!("sweep value {p} is not a probability"));
                }
                if self.kind == ExperimentKind::ThetaSweep {
                    self.model.with_theta_bar(0.5)?;
                }
            }
            ExperimentKind::Trajectory => {
                if self.n_max >= self.horizon {
                    return bad(format!(
                        "experiment.n_max = {} must be below the horizon {}",
                        self.n_max, self.horizon
                    ));
                }
            }
        }
        match self
            .model
            .build(self.horizon)
            .and_then(|m| AugmentedStatistics::new(&m))
        {
            Ok(_) => Ok(()),
            Err(e @ Error::Config(_)) => Err(e),
            Err(e) => Err(Error::Config(format!("model: {e}"))),
        }
    }

    /// Fully resolved `key=value` lines in a fixed order, defaults included.
    /// Identical experiments give identical text.
    pub fn canonical(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("model.signal.phi", fmt_matrix(&m.phi));
        put("model.signal.x0_cov", fmt_matrix(&m.x0_cov));
        put("model.signal.eps_cov", fmt_matrix(&m.eps_cov));
        match &m.measurement {
            MeasurementParams::Bernoulli { c, theta_bar } => {
                put("model.measurement.c", fmt_scalar(*c));
                put("model.measurement.theta_bar", fmt_scalar(*theta_bar));
            }
            MeasurementParams::Deterministic(h) => put("model.measurement.h", fmt_matrix(h)),
        }
        put("model.noise.d", fmt_matrix(&m.d));
        put("model.noise.v0_cov", fmt_matrix(&m.v0_cov));
        put("model.noise.u_cov", fmt_matrix(&m.u_cov));
        put("model.attack.lambda_bar", fmt_scalar(m.lambda_bar));
        match &m.attack {
            AttackParams::Discrete { values, probs } => {
                put("model.attack.values", fmt_list(values));
                put("model.attack.probs", fmt_list(probs));
            }
            AttackParams::Gaussian(cov) => put("model.attack.cov", fmt_matrix(cov)),
        }
        put("experiment.kind", self.kind.to_string());
        put("experiment.horizon", self.horizon.to_string());
        put("experiment.k", self.k.to_string());
        put("experiment.n_max", self.n_max.to_string());
        put("experiment.runs", self.runs.to_string());
        put("experiment.seed", self.seed.to_string());
        put("experiment.sweep", fmt_list(&self.sweep));
        out
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        self.model.build(self.horizon)
    }
}
