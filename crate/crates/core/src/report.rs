//! Aggregation of finished runs into columnar regret and memory curves,
//! with a log-log growth fit of cumulative regret.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::record::EpisodeRow;

/// One completed run as read back from disk.
#[derive(Clone, Debug)]
pub struct RunInput {
    pub label: String,
    pub instance_id: String,
    pub rows: Vec<EpisodeRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: u64,
    pub mean: f64,
    pub stderr: f64,
}

/// Slope of `ln cum_regret` against `ln k` with a two-sided 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub lo: f64,
    pub hi: f64,
    pub first_episode: u64,
    pub last_episode: u64,
    /// Per-run slopes; the interval is across runs when there are several.
    pub per_run: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub instance_id: String,
    pub labels: Vec<String>,
    pub episodes: u64,
    // Curves go to the CSV files, not the JSON summary.
    #[serde(skip)]
    pub regret: Vec<CurvePoint>,
    #[serde(skip)]
    pub mem_entries: Vec<CurvePoint>,
    #[serde(skip)]
    pub mem_bytes: Vec<CurvePoint>,
    pub final_mean_cum_regret: f64,
    pub final_stderr_cum_regret: f64,
    pub slope: Option<SlopeFit>,
    #[serde(skip)]
    per_run: Vec<Vec<f64>>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn t_quantile(dof: f64, p: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).map(|t| t.inverse_cdf(p)).unwrap_or(f64::INFINITY)
}

/// OLS of `y` on `x`: `(slope, standard error of the slope)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, se)
}

/// Log-log points of a cumulative-regret series over `[first, last]`,
/// skipping non-positive values.
fn log_points(cum: &[f64], first: u64, last: u64) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in first..=last {
        let c = cum[(k - 1) as usize];
        if c > 0.0 {
            xs.push((k as f64).ln());
            ys.push(c.ln());
        }
    }
    (xs, ys)
}

/// Fits the growth exponent of cumulative regret over the final decade
/// `[⌈K/10⌉, K]`. With one run the interval comes from the regression's
/// standard error; with several it is a t-interval across per-run slopes.
pub fn fit_slope(runs: &[Vec<f64>]) -> Option<SlopeFit> {
    let k = runs.iter().map(Vec::len).min()? as u64;
    if k < 10 {
        return None;
    }
    let first = k.div_ceil(10);
    let mut per_run = Vec::with_capacity(runs.len());
    let mut single_se = f64::INFINITY;
    for cum in runs {
        let (xs, ys) = log_points(cum, first, k);
        if xs.len() < 3 {
            return None;
        }
        let (s, se) = ols(&xs, &ys);
        per_run.push(s);
        single_se = se;
    }
    let (slope, half) = if per_run.len() == 1 {
        let n = (k - first + 1) as f64;
        (per_run[0], t_quantile(n - 2.0, 0.975) * single_se)
    } else {
        let (m, se) = mean_stderr(&per_run);
        (m, t_quantile(per_run.len() as f64 - 1.0, 0.975) * se)
    };
    Some(SlopeFit {
        slope,
        lo: slope - half,
        hi: slope + half,
        first_episode: first,
        last_episode: k,
        per_run,
    })
}

fn curve(series: &[Vec<f64>], k: usize) -> Vec<CurvePoint> {
    (0..k)
        .map(|i| {
            let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
            let (mean, stderr) = mean_stderr(&col);
            CurvePoint {
                episode: i as u64 + 1,
                mean,
                stderr,
            }
        })
        .collect()
}

/// Aggregates runs of one instance, truncated to the shortest run.
pub fn aggregate(runs: &[RunInput]) -> Result<Report> {
    let first = runs.first().ok_or_else(|| Error::Config("report needs at least one run".into()))?;
    if let Some(other) = runs.iter().find(|r| r.instance_id != first.instance_id) {
        return Err(Error::Contract(format!(
            "refusing to aggregate across instances: {} ({}) vs {} ({})",
            first.label, first.instance_id, other.label, other.instance_id
        )));
    }
    let k = runs.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    if k == 0 {
        return Err(Error::Config(format!("run {} has no episodes", first.label)));
    }
    let cum: Vec<Vec<f64>> = runs.iter().map(|r| r.rows[..k].iter().map(|e| e.cum_regret).collect()).collect();
    let entries: Vec<Vec<f64>> = runs.iter().map(|r| r.rows[..k].iter().map(|e| e.mem_entries as f64).collect()).collect();
    let bytes: Vec<Vec<f64>> = runs.iter().map(|r| r.rows[..k].iter().map(|e| e.mem_bytes as f64).collect()).collect();
    let regret = curve(&cum, k);
    Ok(Report {
        instance_id: first.instance_id.clone(),
        labels: runs.iter().map(|r| r.label.clone()).collect(),
        episodes: k as u64,
        final_mean_cum_regret: regret[k - 1].mean,
        final_stderr_cum_regret: regret[k - 1].stderr,
        regret,
        mem_entries: curve(&entries, k),
        mem_bytes: curve(&bytes, k),
        slope: fit_slope(&cum),
        per_run: cum,
    })
}

impl Report {
    /// `episode,mean_cum_regret,stderr_cum_regret`.
    pub fn regret_csv(&self) -> String {
        let mut out = String::from("episode,mean_cum_regret,stderr_cum_regret\n");
        for p in &self.regret {
            let _ = writeln!(out, "{},{:e},{:e}", p.episode, p.mean, p.stderr);
        }
        out
    }

    /// `episode,<label>...` with each run's cumulative regret.
    pub fn per_run_csv(&self) -> String {
        let mut out = String::from("episode");
        for l in &self.labels {
            out.push(',');
            out.push_str(&l.replace(',', "_"));
        }
        out.push('\n');
        for i in 0..self.episodes as usize {
            let _ = write!(out, "{}", i + 1);
            for run in &self.per_run {
                let _ = write!(out, ",{:e}", run[i]);
            }
            out.push('\n');
        }
        out
    }

    /// `episode,mean_mem_entries,stderr_mem_entries,mean_mem_bytes,stderr_mem_bytes`.
    pub fn memory_csv(&self) -> String {
        let mut out = String::from("episode,mean_mem_entries,stderr_mem_entries,mean_mem_bytes,stderr_mem_bytes\n");
        for (e, b) in self.mem_entries.iter().zip(&self.mem_bytes) {
            let _ = writeln!(out, "{},{:e},{:e},{:e},{:e}", e.episode, e.mean, e.stderr, b.mean, b.stderr);
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
