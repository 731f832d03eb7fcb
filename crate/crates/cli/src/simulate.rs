//! `quadest simulate`: one sampled trajectory as a measurement file.

use std::path::Path;

use quadest::simulator::{sample_trajectory, TrajectoryRecord};
use quadest::ExperimentConfig;

use crate::provenance::Provenance;
use crate::Failure;

/// Measurements in the format read by `quadest filter`.
pub fn measurements_csv(rec: &TrajectoryRecord) -> Result<Vec<u8>, Failure> {
    let n_z = rec.steps.first().map_or(0, |s| s.y.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string()];
    header.extend((1..=n_z).map(|i| format!("y_{i}")));
    w.write_record(&header).map_err(Failure::csv)?;
    for s in &rec.steps {
        let mut r = vec![s.k.to_string()];
        r.extend(s.y.iter().map(|v| v.to_string()));
        w.write_record(&r).map_err(Failure::csv)?;
    }
    w.into_inner().map_err(|e| Failure::Config(e.to_string()))
}

fn truth_csv(rec: &TrajectoryRecord) -> Result<Vec<u8>, Failure> {
    let Some(first) = rec.steps.first() else {
        return Ok(b"k\n".to_vec());
    };
    let (n_x, n_z) = (first.x.len(), first.z.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string()];
    header.extend((1..=n_x).map(|i| format!("x_{i}")));
    header.extend((1..=n_z).map(|i| format!("v_{i}")));
    header.extend((1..=n_z).map(|i| format!("z_{i}")));
    header.push("attacked".into());
    w.write_record(&header).map_err(Failure::csv)?;
    for s in &rec.steps {
        let mut r = vec![s.k.to_string()];
        r.extend(s.x.iter().chain(s.v.iter()).chain(s.z.iter()).map(|v| v.to_string()));
        r.push(u8::from(s.attacked).to_string());
        w.write_record(&r).map_err(Failure::csv)?;
    }
    w.into_inner().map_err(|e| Failure::Config(e.to_string()))
}

pub fn cmd_simulate(config: &ExperimentConfig, seed: u64, horizon: usize, output: &Path, truth: Option<&Path>) -> Result<(), Failure> {
    let model = config.model.build(horizon)?;
    let rec = sample_trajectory(&model, horizon, seed)?;
    let prov = Provenance::new(&config.canonical(), Some(seed));
    prov.write_csv_file(output, &measurements_csv(&rec)?)?;
    if let Some(p) = truth {
        prov.write_csv_file(p, &truth_csv(&rec)?)?;
    }
    Ok(())
}
