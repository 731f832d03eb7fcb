//! `quadest experiment`: the bundled figure experiments or a config file.

use std::fs;
use std::path::{Path, PathBuf};

use quadest::simulator::{estimate_trajectory, run_monte_carlo, sweep, CurveRow, MonteCarloResult};
use quadest::{EstimatorKind, ExperimentConfig, ExperimentKind, MonteCarloSpec};

use crate::plot::{line_plot, Series};
use crate::provenance::Provenance;
use crate::Failure;

pub const BUNDLED: [(&str, &str); 4] = [
    ("fig1", include_str!("../configs/fig1.conf")),
    ("fig2", include_str!("../configs/fig2.conf")),
    ("fig3", include_str!("../configs/fig3.conf")),
    ("fig4", include_str!("../configs/fig4.conf")),
];

pub struct ExperimentArgs {
    pub target: String,
    pub out_dir: Option<PathBuf>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Bundled name or path to a config file; returns the output stem and config.
pub fn load(target: &str) -> Result<(String, ExperimentConfig), Failure> {
    if let Some((name, text)) = BUNDLED.iter().find(|(n, _)| *n == target) {
        return Ok((name.to_string(), ExperimentConfig::parse(text)?));
    }
    let path = Path::new(target);
    if !path.exists() {
        let names: Vec<_> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(Failure::Config(format!("'{target}' is neither a bundled experiment ({}) nor a config file", names.join(", "))));
    }
    let text = fs::read_to_string(path).map_err(Failure::io(path.display()))?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "experiment".into());
    Ok((stem, ExperimentConfig::parse(&text)?))
}

/// Lags drawn in the plots: the filter, the middle lag and the largest one.
fn plotted_lags(n_max: usize) -> Vec<usize> {
    let mut lags = vec![0, n_max / 2, n_max];
    lags.dedup();
    lags.retain(|&l| l <= n_max);
    lags
}

fn series_label(kind: EstimatorKind, lag: usize) -> String {
    let name = match kind {
        EstimatorKind::Linear => "linear",
        EstimatorKind::Quadratic => "quadratic",
    };
    if lag == 0 {
        format!("{name} filter")
    } else {
        format!("{name} smoother N={lag}")
    }
}

fn curve_series(rows: &[CurveRow], n_max: usize, x: impl Fn(&CurveRow) -> f64) -> Vec<Series> {
    let mut out = Vec::new();
    for kind in EstimatorKind::ALL {
        for lag in plotted_lags(n_max) {
            let points: Vec<(f64, f64)> =
                rows.iter().filter(|r| r.estimator == kind && r.lag == lag).map(|r| (x(r), r.theoretical_var)).collect();
            if !points.is_empty() {
                out.push(Series { label: series_label(kind, lag), points });
            }
        }
    }
    out
}

fn result_csv(r: &MonteCarloResult) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    Ok(buf)
}

/// Runs the experiment and writes `<stem>.csv` and `<stem>.svg`; returns the
/// written paths.
pub fn cmd_experiment(args: &ExperimentArgs) -> Result<Vec<PathBuf>, Failure> {
    let (stem, mut config) = load(&args.target)?;
    if let Some(r) = args.runs {
        config.runs = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate()?;
    let out_dir = args.out_dir.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out_dir).map_err(Failure::io(out_dir.display()))?;
    let csv_path = out_dir.join(format!("{stem}.csv"));
    let svg_path = out_dir.join(format!("{stem}.svg"));
    let prov = Provenance::new(&config.canonical(), Some(config.seed));
    let spec = MonteCarloSpec { runs: config.runs, seed: config.seed, n_max: config.n_max, threads: args.threads, ..Default::default() };

    match config.kind {
        ExperimentKind::Curves => {
            let model = config.build_model()?;
            let r = run_monte_carlo(&model, &spec)?;
            prov.write_csv_file(&csv_path, &result_csv(&r)?)?;
            let series = curve_series(&r.rows, config.n_max, |row| row.k as f64);
            line_plot(&svg_path, "Estimation error variances", "k", "error variance", &series, false).map_err(Failure::Config)?;
        }
        ExperimentKind::ThetaSweep | ExperimentKind::LambdaSweep => {
            let theta = config.kind == ExperimentKind::ThetaSweep;
            let r = sweep(
                &config.sweep,
                |p| {
                    let m = if theta { config.model.with_theta_bar(p)? } else { config.model.with_lambda_bar(p) };
                    m.build(config.horizon)
                },
                config.k,
                &spec,
            )?;
            prov.write_csv_file(&csv_path, &result_csv(&r)?)?;
            let (name, x): (&str, fn(&CurveRow) -> f64) =
                if theta { ("theta_bar", |r| r.theta_bar.unwrap_or(f64::NAN)) } else { ("lambda_bar", |r| r.lambda_bar) };
            let series = curve_series(&r.rows, config.n_max, x);
            let title = format!("Error variances at k={} against {name}", config.k);
            line_plot(&svg_path, &title, name, "error variance", &series, true).map_err(Failure::Config)?;
        }
        ExperimentKind::Trajectory => {
            let model = config.build_model()?;
            let t = estimate_trajectory(&model, config.seed, config.n_max)?;
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            prov.write_csv_file(&csv_path, &buf)?;
            let mut series = vec![Series {
                label: "signal".into(),
                points: t.record.steps.iter().map(|s| (s.k as f64, s.x[0])).collect(),
            }];
            for (kind, filt, smooth) in &t.estimates {
                series.push(Series {
                    label: series_label(*kind, 0).replace("filter", "filtering estimate"),
                    points: filt.iter().enumerate().map(|(i, v)| ((i + 1) as f64, v[0])).collect(),
                });
                if !smooth.is_empty() {
                    series.push(Series {
                        label: series_label(*kind, t.lag).replace("smoother", "smoothing estimate"),
                        points: smooth.iter().enumerate().map(|(i, v)| ((i + 1) as f64, v[0])).collect(),
                    });
                }
            }
            line_plot(&svg_path, "Simulated signal and estimates", "k", "value", &series, false).map_err(Failure::Config)?;
        }
    }
    prov.stamp_svg(&svg_path)?;
    Ok(vec![csv_path, svg_path])
}
