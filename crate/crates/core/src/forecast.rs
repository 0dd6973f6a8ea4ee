//! Demand forecasters used by the workload planner.
//!
//! All forecasters are deterministic functions of `(history, now, horizon, params)`
//! and only ever see samples strictly before `now`.

use serde::Serialize;

use crate::error::ForecastError;

/// Shortest lag considered by [`detect_period`].
pub const MIN_PERIOD_LAG: u64 = 60;
/// Minimum correlation for a lag to count as a period.
pub const MIN_PERIOD_CORRELATION: f64 = 0.5;

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecasterKind {
    /// Flat line at the last observation.
    Naive,
    /// Flat line at the mean of the last `window` observations.
    MovingAverage { window: usize },
    /// Per-phase quantile of past observations at the same offset within `period`.
    SeasonalPeak { period: u64, quantile: f64 },
}

impl ForecasterKind {
    pub fn validate(&self) -> Result<(), ForecastError> {
        match *self {
            ForecasterKind::Naive => Ok(()),
            ForecasterKind::MovingAverage { window: 0 } => {
                Err(ForecastError::InvalidParameter("window must be > 0"))
            }
            ForecasterKind::MovingAverage { .. } => Ok(()),
            ForecasterKind::SeasonalPeak { period: 0, .. } => {
                Err(ForecastError::InvalidParameter("period must be > 0"))
            }
            ForecasterKind::SeasonalPeak { quantile, .. }
                if !(quantile > 0.0 && quantile <= 1.0) =>
            {
                Err(ForecastError::InvalidParameter("quantile must be in (0, 1]"))
            }
            ForecasterKind::SeasonalPeak { .. } => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Forecast {
    pub issued_at: u64,
    pub horizon_seconds: u64,
    /// One point per second over `(issued_at, issued_at + horizon]`.
    pub predicted: Vec<(u64, u32)>,
    pub peak_demand_millicores: u32,
}

fn to_millicores(v: f64) -> u32 {
    v.max(0.0).round() as u32
}

/// Nearest-rank quantile of an unsorted slice.
fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    values[rank - 1]
}

pub fn forecast(
    kind: ForecasterKind,
    history: &[(u64, f64)],
    now: u64,
    horizon: u64,
) -> Result<Forecast, ForecastError> {
    kind.validate()?;
    if horizon == 0 {
        return Err(ForecastError::InvalidParameter("horizon must be > 0"));
    }
    let (first, last) = match (history.first(), history.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(ForecastError::EmptyHistory),
    };
    if let Some(&(t, _)) = history.iter().find(|(t, _)| *t >= now) {
        return Err(ForecastError::FutureSample { t, now });
    }
    let future = (now + 1)..=(now + horizon);
    let flat = |level: f64| -> Vec<(u64, u32)> {
        let v = to_millicores(level);
        future.clone().map(|t| (t, v)).collect()
    };

    let predicted = match kind {
        ForecasterKind::Naive => flat(last.1),
        ForecasterKind::MovingAverage { window } => {
            let tail = &history[history.len().saturating_sub(window)..];
            flat(tail.iter().map(|(_, v)| v).sum::<f64>() / tail.len() as f64)
        }
        ForecasterKind::SeasonalPeak { period, quantile: q } => {
            if now - first.0 < period {
                flat(last.1)
            } else {
                let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); period as usize];
                for &(t, v) in history {
                    buckets[(t % period) as usize].push(v);
                }
                future
                    .clone()
                    .map(|t| {
                        let bucket = &mut buckets[(t % period) as usize];
                        let v = if bucket.is_empty() {
                            last.1
                        } else {
                            quantile(bucket, q)
                        };
                        (t, to_millicores(v))
                    })
                    .collect()
            }
        }
    };

    let peak = predicted.iter().map(|(_, v)| *v).max().unwrap_or(0);
    Ok(Forecast {
        issued_at: now,
        horizon_seconds: horizon,
        predicted,
        peak_demand_millicores: peak,
    })
}

/// Exponentially weighted smoothing: the gap to a new level halves every `half_life`
/// seconds. A non-positive half-life returns the input unchanged.
pub fn smoothed_history(history: &[(u64, f64)], half_life: f64) -> Vec<(u64, f64)> {
    if half_life <= 0.0 || history.is_empty() {
        return history.to_vec();
    }
    let mut out = Vec::with_capacity(history.len());
    let (mut prev_t, mut level) = history[0];
    out.push((prev_t, level));
    for &(t, v) in &history[1..] {
        let dt = t.saturating_sub(prev_t) as f64;
        let alpha = 1.0 - (-dt / half_life).exp2();
        level += alpha * (v - level);
        out.push((t, level));
        prev_t = t;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Dominant seasonal lag: argmax over lags in `[60, len/2]` of the correlation between
/// the series and itself shifted by the lag. `None` unless the best correlation reaches
/// 0.5. Ties keep the shorter lag. Assumes one sample per second.
pub fn detect_period(history: &[(u64, f64)]) -> Option<u64> {
    let values: Vec<f64> = history.iter().map(|(_, v)| *v).collect();
    let max_lag = values.len() / 2;
    let mut best: Option<(usize, f64)> = None;
    for lag in (MIN_PERIOD_LAG as usize)..=max_lag {
        let Some(r) = pearson(&values[..values.len() - lag], &values[lag..]) else {
            continue;
        };
        if best.is_none_or(|(_, b)| r > b) {
            best = Some((lag, r));
        }
    }
    best.filter(|(_, r)| *r >= MIN_PERIOD_CORRELATION)
        .map(|(lag, _)| lag as u64)
}
