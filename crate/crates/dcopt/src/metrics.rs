//! Per-round evaluation quantities and rate/speedup summaries.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("need at least two rounds, got {0}")]
    TooFewRounds(usize),
    #[error("mismatched run configurations: {0}")]
    MismatchedConfigs(String),
}

/// One recorded row of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub t: u64,
    /// `(1/n)‖X(I − J)‖²`, the mean squared deviation from the average model.
    pub consensus_error: f64,
    /// `‖∇f(x̄)‖²` using exact gradients.
    pub stationarity: f64,
    /// `f(x̄)`.
    pub objective: f64,
    pub comm_bytes_cum: u64,
    pub wallclock_ns: u64,
}

/// A full recorded run.
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub records: Vec<MetricsRecord>,
    /// Largest per-round identity residuals observed over the run (see the
    /// engine for what each residual measures).
    pub diagnostics: RunDiagnostics,
}

/// Worst-case per-round identity residuals across a run. All of these are
/// checked every round by the engines; they stay near machine precision on
/// any healthy run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunDiagnostics {
    /// `‖x̄^{t+1} − x̄^{t+1/2}‖∞` (the gossip correction is mean-free).
    pub mean_preservation: f64,
    /// `‖mean_i g_i − mean_i g̃_i‖∞` (gradient tracking preserves the mean).
    pub tracking_mean: f64,
    /// `‖v_cache − X̲W‖∞` (incremental estimate caches stay consistent).
    pub cache_consistency: f64,
    /// Count of coordinate-wise violations of `u^t ≥ u^{t−1}`.
    pub u_monotonicity_violations: u64,
}

impl RunDiagnostics {
    pub fn merge(&mut self, other: &RunDiagnostics) {
        self.mean_preservation = self.mean_preservation.max(other.mean_preservation);
        self.tracking_mean = self.tracking_mean.max(other.tracking_mean);
        self.cache_consistency = self.cache_consistency.max(other.cache_consistency);
        self.u_monotonicity_violations += other.u_monotonicity_violations;
    }
}

/// `(1/n)‖X(I − J)‖²_F` for agent-major `x` (row `i` = agent `i`), computed
/// as the mean squared deviation from the column means.
pub fn consensus_error(x: &Array2<f64>) -> f64 {
    let (n, d) = (x.nrows(), x.ncols());
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..d {
        let mean: f64 = (0..n).map(|i| x[[i, k]]).sum::<f64>() / n as f64;
        total += (0..n).map(|i| (x[[i, k]] - mean).powi(2)).sum::<f64>();
    }
    total / n as f64
}

/// Summary of how the running-average metric behaves over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSummary {
    /// `(1/T) Σ_t (stationarity + consensus_error)`.
    pub avg_metric: f64,
    /// Least-squares slope of `log(running average)` vs `log(t)` over the
    /// tail half of the recorded rounds.
    pub fitted_exponent: f64,
}

/// Average the per-round metric and fit the tail decay exponent.
pub fn rate_summary(records: &[MetricsRecord]) -> Result<RateSummary, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    if records.len() < 2 {
        return Err(MetricsError::TooFewRounds(records.len()));
    }
    let metrics: Vec<f64> = records
        .iter()
        .map(|r| r.stationarity + r.consensus_error)
        .collect();
    let avg_metric = metrics.iter().sum::<f64>() / metrics.len() as f64;

    // Running averages indexed by the recorded round counter.
    let mut running = Vec::with_capacity(metrics.len());
    let mut acc = 0.0;
    for (idx, m) in metrics.iter().enumerate() {
        acc += m;
        running.push((records[idx].t as f64, acc / (idx + 1) as f64));
    }
    let tail = &running[running.len() / 2..];
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|(t, r)| *t > 0.0 && *r > 0.0)
        .map(|(t, r)| (t.ln(), r.ln()))
        .collect();
    let fitted_exponent = if pts.len() < 2 {
        0.0
    } else {
        least_squares_slope(&pts)
    };
    Ok(RateSummary {
        avg_metric,
        fitted_exponent,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in pts {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// One row of a speedup comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub n: usize,
    pub avg_metric: f64,
}

/// Speedup comparison across agent counts at fixed per-agent noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupReport {
    /// Sorted by ascending `n`.
    pub rows: Vec<SpeedupRow>,
    /// `avg_metric(smallest n) / avg_metric(largest n)`: the measured
    /// speedup factor (≈ n_large/n_small under the 1/n variance scaling).
    pub ratio: f64,
    /// Whether larger `n` produced a (weakly) smaller average metric at
    /// every step of the table.
    pub monotone: bool,
}

/// Compare runs at different agent counts. All runs must cover the same
/// number of recorded rounds.
pub fn speedup_report(
    runs: &[(usize, &[MetricsRecord])],
) -> Result<SpeedupReport, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::MismatchedConfigs(
            "need at least two agent counts".into(),
        ));
    }
    let t0 = runs[0].1.len();
    if runs.iter().any(|(_, r)| r.len() != t0) {
        return Err(MetricsError::MismatchedConfigs(
            "runs cover different numbers of recorded rounds".into(),
        ));
    }
    let mut rows: Vec<SpeedupRow> = runs
        .iter()
        .map(|(n, records)| {
            rate_summary(records).map(|s| SpeedupRow {
                n: *n,
                avg_metric: s.avg_metric,
            })
        })
        .collect::<Result<_, _>>()?;
    rows.sort_by_key(|r| r.n);
    let first = rows.first().unwrap();
    let last = rows.last().unwrap();
    let ratio = if last.avg_metric == 0.0 {
        if first.avg_metric == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        first.avg_metric / last.avg_metric
    };
    let monotone = rows.windows(2).all(|w| w[1].avg_metric <= w[0].avg_metric);
    Ok(SpeedupReport { rows, ratio, monotone })
}

/// CSV schema shared by the harness and the plot command.
pub const CSV_HEADER: &str = "t,consensus_error,stationarity,objective,comm_bytes_cum,wallclock_ns";

/// Serialize records to the canonical CSV format: header row, one row per
/// recorded round, `.` decimal separator, LF line endings. Float columns use
/// scientific notation with shortest round-trip mantissas, so output bytes
/// are a pure function of the values.
pub fn to_csv(records: &[MetricsRecord], include_timing: bool) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let wallclock = if include_timing { r.wallclock_ns } else { 0 };
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{},{}\n",
            r.t, r.consensus_error, r.stationarity, r.objective, r.comm_bytes_cum, wallclock
        ));
    }
    out
}

/// Parse the canonical CSV format back into records.
pub fn from_csv(text: &str) -> Result<Vec<MetricsRecord>, MetricsError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(MetricsError::MismatchedConfigs(format!(
                "unexpected CSV header: {other:?}"
            )))
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(MetricsError::MismatchedConfigs(format!(
                "row {}: expected 6 fields, got {}",
                idx + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>().map_err(|e| {
                MetricsError::MismatchedConfigs(format!("row {}: {e}", idx + 2))
            })
        };
        let parse_u = |s: &str| {
            s.parse::<u64>().map_err(|e| {
                MetricsError::MismatchedConfigs(format!("row {}: {e}", idx + 2))
            })
        };
        records.push(MetricsRecord {
            t: parse_u(fields[0])?,
            consensus_error: parse_f(fields[1])?,
            stationarity: parse_f(fields[2])?,
            objective: parse_f(fields[3])?,
            comm_bytes_cum: parse_u(fields[4])?,
            wallclock_ns: parse_u(fields[5])?,
        });
    }
    Ok(records)
}
