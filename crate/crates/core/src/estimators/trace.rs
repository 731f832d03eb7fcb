use std::io::Write;

use crate::error::{Error, Result};

use super::Filter;

/// Step-level CSV trace: `k`, the innovation, `diag(Π_k)`, `x̂_{k/k}` and
/// `diag(Σ̂_{k/k})`.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    header_written: bool,
}

fn err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("writing trace: {e}"))
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(out),
            header_written: false,
        }
    }

    pub fn record(&mut self, filter: &Filter<'_>) -> Result<()> {
        let state = filter.state();
        let Some(mu) = state.innovation.as_ref() else {
            return Ok(());
        };
        let ds = filter.design().step(state.k)?;
        if !self.header_written {
            let mut header = vec!["k".to_string()];
            header.extend((0..mu.len()).map(|i| format!("mu_{i}")));
            header.extend((0..mu.len()).map(|i| format!("pi_{i}")));
            header.extend((0..state.x_hat.len()).map(|i| format!("x_hat_{i}")));
            header.extend((0..state.x_hat.len()).map(|i| format!("sigma_{i}")));
            self.inner.write_record(&header).map_err(err)?;
            self.header_written = true;
        }
        let mut row = vec![state.k.to_string()];
        row.extend(mu.iter().map(|v| v.to_string()));
        row.extend(ds.pi.diagonal().iter().map(|v| v.to_string()));
        row.extend(state.x_hat.iter().map(|v| v.to_string()));
        row.extend(ds.filter_cov.diagonal().iter().map(|v| v.to_string()));
        self.inner.write_record(&row).map_err(err)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(err)?;
        self.inner.into_inner().map_err(err)
    }
}
