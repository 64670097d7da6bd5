//! Log-log slope fits and CSV/JSON report writers.

use std::fs;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::harness::lemmas::LemmaRow;
use crate::harness::sweep::SweepReport;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
    pub n_points: usize,
}

impl SlopeFit {
    /// Two-sided Student-t band for the slope.
    pub fn slope_band(&self, level: f64) -> (f64, f64) {
        let dof = self.n_points.saturating_sub(2).max(1) as f64;
        let t = StudentsT::new(0.0, 1.0, dof)
            .map(|d| d.inverse_cdf(0.5 + level / 2.0))
            .unwrap_or(f64::INFINITY);
        (self.slope - t * self.slope_stderr, self.slope + t * self.slope_stderr)
    }
}

/// Ordinary least squares of `ln err` on `ln m`.
pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 points, got {}", pairs.len())));
    }
    if let Some((m, e)) = pairs.iter().find(|(m, e)| !(*m > 0.0 && *e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!("log-log fit needs positive values, got ({m}, {e})")));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("log-log fit needs at least two distinct m"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let slope_stderr = (ss_res / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
        slope_stderr,
        n_points: pairs.len(),
    })
}

/// Per-point terms `(ln mᵢ − mean) ln errᵢ / Sxx`; they sum to the slope.
pub fn slope_contributions(pairs: &[(f64, f64)]) -> Vec<f64> {
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    xs.iter()
        .zip(pairs)
        .map(|(x, p)| (x - mx) * p.1.ln() / sxx)
        .collect()
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::SolverFailure(format!("csv buffer: {e}")))
}

pub fn sweep_csv(report: &SweepReport) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "experiment_id",
            "m",
            "trial",
            "signal_id",
            "metric_name",
            "metric_value",
            "best_loss",
            "restarts_used",
        ],
        report.records.iter().map(|r| {
            vec![
                report.experiment_id.clone(),
                r.m.to_string(),
                r.trial.to_string(),
                r.signal_id.to_string(),
                report.metric.as_str().to_string(),
                fmt(r.value(report.metric)),
                fmt(r.best_loss),
                r.restarts_used.to_string(),
            ]
        }),
    )
}

pub fn summary_csv(report: &SweepReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["m", "worst_case_mean", "worst_case_std", "mean_metric", "slope_contribution"],
        report.per_m.iter().map(|p| {
            vec![
                p.m.to_string(),
                fmt(p.worst_case_mean),
                fmt(p.worst_case_std),
                fmt(p.mean_metric),
                p.slope_contribution.map(fmt).unwrap_or_default(),
            ]
        }),
    )
}

pub fn report_json(report: &SweepReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `sweep.csv`, `summary.csv` and `report.json` into `dir`.
pub fn write_sweep_outputs(report: &SweepReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("sweep.csv"), &sweep_csv(report)?)?;
    write_file(&dir.join("summary.csv"), &summary_csv(report)?)?;
    write_file(&dir.join("report.json"), &report_json(report)?)
}

pub fn lemmas_csv(rows: &[LemmaRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &["lemma_id", "statistic", "value", "threshold", "pass"],
        rows.iter().map(|r| {
            vec![
                r.lemma_id.clone(),
                r.statistic.clone(),
                fmt(r.value),
                fmt(r.threshold),
                r.pass.to_string(),
            ]
        }),
    )
}

pub fn write_lemmas_csv(rows: &[LemmaRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_file(path, &lemmas_csv(rows)?)
}

/// Reads `(m, err)` pairs from a CSV. Accepts a two-column file (header
/// optional) or a `sweep.csv`, which is reduced to the median over trials of
/// the per-trial worst-case error.
pub fn read_fit_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let Some(first) = rows.first() else {
        return Err(Error::invalid(format!("{} is empty", path.display())));
    };
    if first.iter().any(|c| c == "metric_value") {
        return sweep_pairs(first, &rows[1..]);
    }
    let numeric = |r: &csv::StringRecord| r.len() >= 2 && r[0].parse::<f64>().is_ok() && r[1].parse::<f64>().is_ok();
    let body = if numeric(first) { &rows[..] } else { &rows[1..] };
    body.iter()
        .enumerate()
        .map(|(i, r)| {
            let parse = |j: usize| {
                r.get(j).and_then(|c| c.parse::<f64>().ok()).ok_or_else(|| Error::Parse {
                    line: i + 1 + usize::from(!numeric(first)),
                    msg: format!("expected two numeric columns, got `{}`", r.iter().collect::<Vec<_>>().join(",")),
                })
            };
            Ok((parse(0)?, parse(1)?))
        })
        .collect()
}

fn sweep_pairs(header: &csv::StringRecord, rows: &[csv::StringRecord]) -> Result<Vec<(f64, f64)>> {
    use std::collections::BTreeMap;
    let col = |name: &str| {
        header
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("sweep csv lacks column `{name}`")))
    };
    let (cm, ct, cn, cv) = (col("m")?, col("trial")?, col("metric_name")?, col("metric_value")?);
    let mut worst: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let bad = || Error::Parse { line: i + 2, msg: "malformed sweep row".into() };
        let m: u64 = r.get(cm).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let t: u64 = r.get(ct).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let metric: crate::harness::config::Metric = r.get(cn).ok_or_else(bad)?.parse()?;
        let v: f64 = r.get(cv).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let err = metric.error(v);
        let e = worst.entry((m, t)).or_insert(f64::NEG_INFINITY);
        *e = e.max(err);
    }
    let mut per_m: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for ((m, _), e) in worst {
        per_m.entry(m).or_default().push(e);
    }
    Ok(per_m.into_iter().map(|(m, v)| (m as f64, median(v))).collect())
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
