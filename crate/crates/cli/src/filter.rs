//! `quadest filter`: estimators over a recorded measurement file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use quadest::estimators::TraceWriter;
use quadest::{AugmentedStatistics, EstimatorDesign, EstimatorKind, ExperimentConfig, Filter, Vector};

use crate::provenance::Provenance;
use crate::Failure;

/// Measurements `y_1..y_L` read from a CSV with columns `k, y_1, …, y_nz`.
pub fn read_measurements(path: &Path) -> Result<Vec<Vector>, Failure> {
    let text = fs::read_to_string(path).map_err(Failure::io(path.display()))?;
    parse_measurements(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

pub fn parse_measurements(text: &str) -> Result<Vec<Vector>, String> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.get(0) != Some("k") || headers.len() < 2 {
        return Err(format!("expected a header 'k,y_1,...', got '{}'", headers.iter().collect::<Vec<_>>().join(",")));
    }
    let n = headers.len() - 1;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format!("row {}: {e}", i + 1))?;
        if rec.len() != n + 1 {
            return Err(format!("row {}: expected {} columns, got {}", i + 1, n + 1, rec.len()));
        }
        let k: usize = rec[0].parse().map_err(|_| format!("row {}: bad time index '{}'", i + 1, &rec[0]))?;
        if k != i + 1 {
            return Err(format!("row {}: time indices must run 1, 2, 3, ... without gaps, got k={k}", i + 1));
        }
        let y = (1..=n)
            .map(|j| rec[j].parse::<f64>().map_err(|_| format!("row {}: '{}' is not a number", i + 1, &rec[j])))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Vector::from_vec(y));
    }
    Ok(out)
}

pub struct FilterArgs {
    pub model: PathBuf,
    pub measurements: PathBuf,
    pub estimators: Vec<EstimatorKind>,
    pub smooth: Option<(usize, usize)>,
    pub trace: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

fn trace_path(base: &Path, kind: EstimatorKind, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    base.with_file_name(format!("{stem}_{}{ext}", kind.label()))
}

/// Estimates and error variances as CSV rows (without provenance header).
pub fn run_filter(
    config: &ExperimentConfig,
    ys: &[Vector],
    estimators: &[EstimatorKind],
    smooth: Option<(usize, usize)>,
    trace: Option<&Path>,
) -> Result<Vec<u8>, Failure> {
    let n_x = config.model.phi.nrows();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string(), "estimator".into(), "kind".into()];
    header.extend((0..n_x).map(|i| format!("x_hat_{i}")));
    header.extend((0..n_x).map(|i| format!("var_{i}")));
    w.write_record(&header).map_err(Failure::csv)?;
    if ys.is_empty() {
        if smooth.is_some() {
            return Err(Failure::Config("smoothing needs measurements".into()));
        }
        return w.into_inner().map_err(|e| Failure::Config(e.to_string()));
    }
    let horizon = ys.len();
    if let Some((k, n)) = smooth {
        if k == 0 || k + n > horizon {
            return Err(Failure::Config(format!("smoothing x_{k} with N={n} needs measurements up to {}, the file has {horizon}", k + n)));
        }
    }
    let model = config.model.build(horizon)?;
    if ys[0].len() != model.n_z() {
        return Err(Failure::Config(format!("measurement file has {} columns per step, the model expects {}", ys[0].len(), model.n_z())));
    }
    let stats = AugmentedStatistics::new(&model)?;
    let row = |w: &mut csv::Writer<Vec<u8>>, k: usize, kind: EstimatorKind, label: &str, x: &Vector, cov: &quadest::Matrix| {
        let mut r = vec![k.to_string(), kind.label().to_string(), label.to_string()];
        r.extend(x.iter().map(|v| v.to_string()));
        r.extend(cov.diagonal().iter().map(|v| v.to_string()));
        w.write_record(&r).map_err(Failure::csv)
    };
    for &kind in estimators {
        let design = EstimatorDesign::new(&stats, kind)?;
        let smoother = smooth.map(|(k, n)| design.smoother_design(k, n)).transpose()?;
        let mut filter = Filter::new(&design);
        let mut tracer = match trace {
            Some(base) => {
                let p = trace_path(base, kind, estimators.len() > 1);
                Some((TraceWriter::new(fs::File::create(&p).map_err(Failure::io(p.display()))?), p))
            }
            None => None,
        };
        let mut online = None;
        let mut smooth_rows = Vec::new();
        for y in ys {
            filter.step(y)?;
            let (x, cov) = filter.estimate()?;
            let k = filter.state().k;
            row(&mut w, k, kind, "filter", x, cov)?;
            if let Some((t, _)) = tracer.as_mut() {
                t.record(&filter)?;
            }
            if let (Some(sd), Some((ks, _))) = (smoother.as_ref(), smooth) {
                if k == ks {
                    online = Some(quadest::FixedPointSmoother::new(sd, x));
                } else if let Some(o) = online.as_mut() {
                    if o.update(filter.state().innovation.as_ref().unwrap()) {
                        smooth_rows.push((o.n(), o.estimate().clone(), sd.cov(o.n())?.clone()));
                    }
                }
            }
        }
        if let Some((ks, _)) = smooth {
            for (n, x, cov) in &smooth_rows {
                row(&mut w, ks, kind, &format!("smooth{n}"), x, cov)?;
            }
        }
        if let Some((t, p)) = tracer {
            t.finish()?.flush().map_err(Failure::io(p.display()))?;
        }
    }
    w.into_inner().map_err(|e| Failure::Config(e.to_string()))
}

pub fn cmd_filter(args: &FilterArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.model).map_err(Failure::io(args.model.display()))?;
    let config = ExperimentConfig::parse(&text)?;
    let ys = read_measurements(&args.measurements)?;
    let body = run_filter(&config, &ys, &args.estimators, args.smooth, args.trace.as_deref())?;
    let prov = Provenance::new(&config.canonical(), None);
    match &args.output {
        Some(p) => prov.write_csv_file(p, &body),
        None => prov.write_csv(&mut std::io::stdout().lock(), &body),
    }
}
