use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kron::Matrix;

use super::{AugmentedStatistics, StepStatistics};

type Getter = fn(&StepStatistics) -> Matrix;

const QUANTITIES: &[(&str, Getter)] = &[
    ("Ab", |s| s.ab.clone()),
    ("Bb", |s| s.bb.clone()),
    ("Abr", |s| s.abr.clone()),
    ("Bbr", |s| s.bbr.clone()),
    ("Hbar_aug", |s| s.hbar_aug.clone()),
    ("Delta", |s| s.delta.clone()),
    ("Upsilon", |s| s.upsilon.clone()),
    ("Sigma_v_aug", |s| s.sigma_v_aug.clone()),
    ("Sigma_u_aug", |s| s.sigma_u_aug.clone()),
    ("Sigma_w_aug", |s| s.sigma_w_aug.clone()),
    ("Sigma_vss", |s| s.sigma_vss.clone()),
    ("g", |s| {
        Matrix::from_column_slice(s.g.len(), 1, s.g.as_slice())
    }),
    ("mean_Z", |s| {
        Matrix::from_column_slice(s.mean_z.len(), 1, s.mean_z.as_slice())
    }),
    ("mean_W", |s| {
        Matrix::from_column_slice(s.mean_w.len(), 1, s.mean_w.as_slice())
    }),
    ("mean_Y", |s| {
        Matrix::from_column_slice(s.mean_y.len(), 1, s.mean_y.as_slice())
    }),
    ("Sigma_z", |s| s.sigma_z.clone()),
    ("Sigma_y", |s| s.sigma_y.clone()),
    ("D_lin", |s| s.d_lin.clone()),
    ("F_lin", |s| s.f_lin.clone()),
    ("Sigma_v_lin", |s| s.sigma_v_lin.clone()),
    ("Sigma_y_lin", |s| s.sigma_y_lin.clone()),
];

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("writing {}: {e}", path.display()))
}

/// Columns are `k` followed by the entries `m_<row>_<col>` in column-major
/// order.
pub(super) fn write_all(stats: &AugmentedStatistics, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::with_capacity(QUANTITIES.len());
    for (name, get) in QUANTITIES {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
        if let Some(first) = stats.steps().first() {
            let m = get(first);
            let mut header = vec!["k".to_string()];
            for c in 0..m.ncols() {
                for r in 0..m.nrows() {
                    header.push(format!("m_{r}_{c}"));
                }
            }
            w.write_record(&header).map_err(|e| io(&path, e))?;
        }
        for s in stats.steps() {
            let m = get(s);
            let mut row = vec![s.k.to_string()];
            row.extend(m.iter().map(|x| format!("{x:e}")));
            w.write_record(&row).map_err(|e| io(&path, e))?;
        }
        w.flush().map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
