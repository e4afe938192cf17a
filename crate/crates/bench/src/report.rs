//! Summaries and least-squares fits over measurement records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::Record;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination. A series with no variance that the
    /// line reproduces exactly gets 1.
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`. `None` with fewer than two
/// points or when every x is equal.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<Fit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        if ss_res <= f64::EPSILON {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(Fit {
        slope,
        intercept,
        r2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub workload: String,
    pub variant: String,
    pub samples: usize,
    pub mean_micros: f64,
    pub mean_rows_decrypted: Option<f64>,
    pub bytes_ratio: Option<f64>,
    /// micros against `rows`.
    pub time_fit: Option<Fit>,
    /// rows_decrypted against `rows`.
    pub decrypted_fit: Option<Fit>,
}

pub fn summarize(records: &[Record]) -> Vec<Summary> {
    let mut groups: BTreeMap<(String, String), Vec<&Record>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.workload.clone(), r.variant.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((workload, variant), rs)| {
            let n = rs.len() as f64;
            let xs: Vec<f64> = rs.iter().map(|r| r.rows as f64).collect();
            let micros: Vec<f64> = rs.iter().map(|r| r.micros as f64).collect();
            let decrypted: Option<Vec<f64>> =
                rs.iter().map(|r| r.rows_decrypted.map(|d| d as f64)).collect();
            let clear: u64 = rs.iter().map(|r| r.bytes_clear).sum();
            let enc: u64 = rs.iter().map(|r| r.bytes_enc).sum();
            Summary {
                samples: rs.len(),
                mean_micros: micros.iter().sum::<f64>() / n,
                mean_rows_decrypted: decrypted.as_ref().map(|d| d.iter().sum::<f64>() / n),
                bytes_ratio: (clear > 0).then(|| enc as f64 / clear as f64),
                time_fit: linear_fit(&xs, &micros),
                decrypted_fit: decrypted.and_then(|d| linear_fit(&xs, &d)),
                workload,
                variant,
            }
        })
        .collect()
}

fn fit_cell(fit: Option<Fit>) -> String {
    match fit {
        Some(f) => format!("{:.4}x{:+.1} (R2 {:.4})", f.slope, f.intercept, f.r2),
        None => "-".into(),
    }
}

pub fn render(summaries: &[Summary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<16} {:>7} {:>12} {:>10} {:>7}  {:<32} rows_decrypted fit",
        "workload", "variant", "samples", "mean_us", "mean_dec", "enc/clr", "time fit"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<24} {:<16} {:>7} {:>12.1} {:>10} {:>7}  {:<32} {}",
            s.workload,
            s.variant,
            s.samples,
            s.mean_micros,
            s.mean_rows_decrypted.map_or("-".into(), |d| format!("{d:.1}")),
            s.bytes_ratio.map_or("-".into(), |r| format!("{r:.3}")),
            fit_cell(s.time_fit),
            fit_cell(s.decrypted_fit),
        );
    }
    out
}
