//! Sustainability and adequacy metrics: benefit ratio, relative surplus, the
//! equivalent annual indexation rate, depletion-time statistics and
//! conditional summary statistics over path collections.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names of the tracked policy series, in fixed output order.
pub const SERIES_NAMES: [&str; 8] = [
    "fund",
    "zu",
    "p_star",
    "p_min",
    "surplus",
    "relative_surplus",
    "benefit_ratio",
    "risky_fraction",
];

pub const N_SERIES: usize = SERIES_NAMES.len();

/// Pension over wage in the same year.
#[inline]
pub fn benefit_ratio(p_star: f64, wage: f64) -> f64 {
    p_star / wage
}

/// Relative pension increase over the PAYG floor; zero once the fund is
/// depleted (the pension reverts to the floor).
#[inline]
pub fn relative_surplus(p_star: f64, p_min: f64) -> f64 {
    (p_star - p_min) / p_min
}

fn annuity_sum(y: f64, t: usize) -> f64 {
    // sum_{k=0}^{t} (1+y)^k, with a series expansion near y = 0 where the
    // closed form loses precision.
    if y.abs() < 1e-9 {
        let n = (t + 1) as f64;
        n + y * (t as f64) * n / 2.0
    } else {
        ((1.0 + y).powi(t as i32 + 1) - 1.0) / y
    }
}

/// Equivalent annual indexation rate of an annual cashflow stream
/// c_0, ..., c_t: the unique y in (-1, inf) with
/// sum_k (1+y)^k = sum_k c_k / c_0. Solved by bisection to |dy| <= 1e-10.
pub fn eair(cashflows: &[f64]) -> Result<f64> {
    if cashflows.len() < 2 {
        return Err(Error::InvalidCashflows {
            reason: "need at least two annual points".into(),
        });
    }
    if cashflows.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
        return Err(Error::InvalidCashflows {
            reason: "all cashflows must be strictly positive".into(),
        });
    }
    let t = cashflows.len() - 1;
    let target: f64 = cashflows.iter().map(|c| c / cashflows[0]).sum();

    let mut lo = -1.0 + 1e-12;
    let mut hi = 1.0;
    let mut guard = 0;
    while annuity_sum(hi, t) < target {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::InvalidCashflows {
                reason: "rate solver failed to bracket the root".into(),
            });
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if annuity_sum(mid, t) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Linear-interpolation quantile of an ascending-sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Tracked series of one path sampled at the reporting times, plus its
/// depletion time. Aggregation input for `conditional_stats`.
#[derive(Debug, Clone)]
pub struct PathReport {
    pub path_index: usize,
    /// Depletion time in years, infinite when the fund survives the horizon.
    pub tau: f64,
    /// Solvency indicator per reporting time (surplus above threshold).
    pub solvent: Vec<bool>,
    /// One vector per entry of `SERIES_NAMES`.
    pub series: [Vec<f64>; N_SERIES],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QuartileSeries {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    pub count: Vec<u64>,
}

/// Statistics of one series under the three conditioning sets.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConditionedSeries {
    pub unconditional: QuartileSeries,
    pub solvent: QuartileSeries,
    pub depleted: QuartileSeries,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauSummary {
    /// Mean of tau with censored paths recorded at the horizon.
    pub mean: f64,
    pub median: f64,
    /// Sample variance of the censored values.
    pub variance: f64,
    /// Fraction of paths that never depleted on the horizon.
    pub censored_fraction: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EairRow {
    pub t: f64,
    /// Mean EAIR of the buffer-fund pension stream.
    pub y_bf: f64,
    /// Mean EAIR of the pure PAYG stream.
    pub y_min: f64,
    /// y_bf - y_min.
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub series: String,
    pub t: f64,
    pub conditioning: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Per-time summary of a scenario run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryStats {
    /// Reporting times in years.
    pub times: Vec<f64>,
    /// Fraction of paths still solvent strictly after each reporting time.
    pub survival: Vec<f64>,
    pub series: BTreeMap<String, ConditionedSeries>,
    pub tau: TauSummary,
    pub eair: Vec<EairRow>,
    pub histograms: Vec<Histogram>,
}

enum Conditioning {
    Unconditional,
    Solvent,
    Depleted,
}

fn summarize(
    reports: &[PathReport],
    series_index: usize,
    time_index: usize,
    conditioning: &Conditioning,
    buffer: &mut Vec<f64>,
) -> (f64, f64, f64, f64, u64) {
    buffer.clear();
    for report in reports {
        let keep = match conditioning {
            Conditioning::Unconditional => true,
            Conditioning::Solvent => report.solvent[time_index],
            Conditioning::Depleted => !report.solvent[time_index],
        };
        if keep {
            let value = report.series[series_index][time_index];
            if value.is_finite() {
                buffer.push(value);
            }
        }
    }
    if buffer.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0);
    }
    let mean = buffer.iter().sum::<f64>() / buffer.len() as f64;
    buffer.sort_by(f64::total_cmp);
    (
        mean,
        quantile(buffer, 0.5),
        quantile(buffer, 0.25),
        quantile(buffer, 0.75),
        buffer.len() as u64,
    )
}

/// Aggregates path reports into per-time summary statistics. The fold order is
/// the slice order, which the harness keeps sorted by path index, so results
/// do not depend on how paths were scheduled.
pub fn conditional_stats(reports: &[PathReport], times: &[f64], horizon: f64) -> SummaryStats {
    assert!(!reports.is_empty(), "path collection must be nonempty");
    let n_paths = reports.len() as f64;

    let survival: Vec<f64> = times
        .iter()
        .map(|&t| reports.iter().filter(|r| r.tau > t).count() as f64 / n_paths)
        .collect();

    let mut series = BTreeMap::new();
    let mut buffer: Vec<f64> = Vec::with_capacity(reports.len());
    for (s, name) in SERIES_NAMES.iter().enumerate() {
        let mut conditioned = ConditionedSeries::default();
        for (slot, conditioning) in [
            (&mut conditioned.unconditional, Conditioning::Unconditional),
            (&mut conditioned.solvent, Conditioning::Solvent),
            (&mut conditioned.depleted, Conditioning::Depleted),
        ] {
            for time_index in 0..times.len() {
                let (mean, median, q25, q75, count) =
                    summarize(reports, s, time_index, &conditioning, &mut buffer);
                slot.mean.push(mean);
                slot.median.push(median);
                slot.q25.push(q25);
                slot.q75.push(q75);
                slot.count.push(count);
            }
        }
        series.insert((*name).to_string(), conditioned);
    }

    let censored: Vec<f64> = reports.iter().map(|r| r.tau.min(horizon)).collect();
    let mean_tau = censored.iter().sum::<f64>() / n_paths;
    let variance = if censored.len() > 1 {
        censored.iter().map(|x| (x - mean_tau).powi(2)).sum::<f64>() / (n_paths - 1.0)
    } else {
        0.0
    };
    let mut sorted_tau = censored.clone();
    sorted_tau.sort_by(f64::total_cmp);
    let tau = TauSummary {
        mean: mean_tau,
        median: quantile(&sorted_tau, 0.5),
        variance,
        censored_fraction: reports.iter().filter(|r| r.tau > horizon).count() as f64 / n_paths,
        horizon,
    };

    SummaryStats {
        times: times.to_vec(),
        survival,
        series,
        tau,
        eair: Vec::new(),
        histograms: Vec::new(),
    }
}

/// Freedman-Diaconis bin edges computed on one (unconditional) sample; the
/// same edges are reused for the conditional histograms so the shapes are
/// comparable.
pub fn freedman_diaconis_edges(values: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return vec![0.0, 1.0];
    }
    let min = sorted[0];
    let max = *sorted.last().unwrap();
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    if width <= 0.0 || max == min {
        return vec![min, max.max(min) + 1.0];
    }
    let n_bins = (((max - min) / width).ceil() as usize).clamp(1, 400);
    (0..=n_bins)
        .map(|k| min + (max - min) * k as f64 / n_bins as f64)
        .collect()
}

/// Bins values into the half-open intervals defined by `edges` (the last bin
/// is closed above). Non-finite values are ignored.
pub fn histogram_counts(values: &[f64], edges: &[f64]) -> Vec<u64> {
    let n_bins = edges.len() - 1;
    let mut counts = vec![0u64; n_bins];
    let lo = edges[0];
    let hi = edges[n_bins];
    for &v in values {
        if !v.is_finite() || v < lo || v > hi {
            continue;
        }
        let mut bin = ((v - lo) / (hi - lo) * n_bins as f64) as usize;
        if bin >= n_bins {
            bin = n_bins - 1;
        }
        counts[bin] += 1;
    }
    counts
}
