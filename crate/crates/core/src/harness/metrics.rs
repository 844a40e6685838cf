//! Error statistics and schema-checked CSV tables.

use crate::error::{Error, Result};

pub fn rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Domain("rmse of an empty error list".into()));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `q (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Domain("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile level {q} outside [0, 1]")));
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn sorted_copy(data: &[f64]) -> Vec<f64> {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSummary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Smallest sample not below `q1 - 1.5 IQR`.
    pub whisker_lo: f64,
    /// Largest sample not above `q3 + 1.5 IQR`.
    pub whisker_hi: f64,
    pub outliers: usize,
}

pub fn box_summary(data: &[f64]) -> Result<BoxSummary> {
    let s = sorted_copy(data);
    let q1 = quantile_sorted(&s, 0.25)?;
    let median = quantile_sorted(&s, 0.5)?;
    let q3 = quantile_sorted(&s, 0.75)?;
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence).collect();
    Ok(BoxSummary {
        q1,
        median,
        q3,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        outliers: s.len() - inside.len(),
    })
}

/// Absolute-error quantiles at integer percentiles `0..=100`.
pub fn cdf_points(errors: &[f64]) -> Result<Vec<(u32, f64)>> {
    let s = sorted_copy(&errors.iter().map(|e| e.abs()).collect::<Vec<_>>());
    (0..=100u32)
        .map(|p| Ok((p, quantile_sorted(&s, p as f64 / 100.0)?)))
        .collect()
}

/// Per-epoch spread of the mini-batch losses around the converged loss,
/// taken as the mean loss of the last epoch.
pub fn loss_sd_curve(batch_losses: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let means: Vec<f64> = batch_losses
        .iter()
        .map(|e| {
            if e.is_empty() {
                Err(Error::Domain("epoch without mini-batches".into()))
            } else {
                Ok(e.iter().sum::<f64>() / e.len() as f64)
            }
        })
        .collect::<Result<_>>()?;
    let converged = *means.last().ok_or_else(|| Error::Domain("empty loss history".into()))?;
    Ok(batch_losses
        .iter()
        .zip(&means)
        .map(|(e, &m)| {
            let var = e.iter().map(|l| (l - converged).powi(2)).sum::<f64>() / e.len() as f64;
            (m, var.sqrt())
        })
        .collect())
}

/// A CSV table with a fixed header; every row must match its width.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &'static [&'static str]) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::Shape(format!(
                "row of {} fields for header {:?}",
                row.len(),
                self.header
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Check a CSV document against an expected header; returns the row count.
pub fn validate_csv(text: &str, header: &[&str]) -> Result<usize> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got = r.headers().map_err(|e| Error::Parse(format!("csv header: {e}")))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Parse(format!("csv header {got:?}, expected {header:?}")));
    }
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("csv row {}: {e}", n + 1)))?;
        if rec.len() != header.len() {
            return Err(Error::Parse(format!("csv row {} has {} fields", n + 1, rec.len())));
        }
        n += 1;
    }
    Ok(n)
}

pub const RMSE_SNR_HEADER: &[&str] = &["snr_db", "estimator", "rmse"];
pub const RMSE_RHO_HEADER: &[&str] = &["rho", "estimator", "rmse"];
pub const SPECTRA_HEADER: &[&str] = &["angle_deg", "estimator", "value"];
pub const CDF_HEADER: &[&str] = &["estimator", "percentile", "error"];
pub const BOXPLOT_HEADER: &[&str] = &["subregion", "estimator", "q1", "median", "q3", "whisker_lo", "whisker_hi"];
pub const ERRORS_HEADER: &[&str] = &["estimator", "aoa_deg", "slot", "estimate_deg", "error_deg"];
pub const LOSS_HEADER: &[&str] = &["model", "epoch", "loss", "sd"];
