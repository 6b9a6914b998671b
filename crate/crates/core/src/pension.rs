//! Pension system: demographics, worker contributions, the pure pay-as-you-go
//! minimum pension and the sustainability bound on the buffer fund.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dependency-ratio evolution. Retiree counts are treated as densities, so
/// non-integer values are fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DependencyRatio {
    SteadyState {
        dr0: f64,
    },
    LinearRamp {
        dr_start: f64,
        dr_end: f64,
        ramp_years: f64,
    },
    /// Step-interpolated table of (time, ratio) knots; the first knot must sit
    /// at t = 0 and times must be strictly increasing.
    Custom {
        table: Vec<(f64, f64)>,
    },
}

/// Exogenous population sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicSchedule {
    pub workers: f64,
    pub dependency_ratio: DependencyRatio,
}

impl DemographicSchedule {
    pub fn steady_state(workers: f64, dr0: f64) -> Self {
        DemographicSchedule {
            workers,
            dependency_ratio: DependencyRatio::SteadyState { dr0 },
        }
    }

    pub fn linear_ramp(workers: f64, dr_start: f64, dr_end: f64, ramp_years: f64) -> Self {
        DemographicSchedule {
            workers,
            dependency_ratio: DependencyRatio::LinearRamp {
                dr_start,
                dr_end,
                ramp_years,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.workers > 0.0) {
            return Err(Error::invalid("workers", "must be > 0"));
        }
        match &self.dependency_ratio {
            DependencyRatio::SteadyState { dr0 } => {
                if !(*dr0 > 0.0) {
                    return Err(Error::invalid("dr0", "must be > 0"));
                }
            }
            DependencyRatio::LinearRamp {
                dr_start,
                dr_end,
                ramp_years,
            } => {
                if !(*dr_start > 0.0) || !(*dr_end > 0.0) {
                    return Err(Error::invalid("dependency_ratio", "ratios must be > 0"));
                }
                if !(*ramp_years > 0.0) {
                    return Err(Error::invalid("ramp_years", "must be > 0"));
                }
            }
            DependencyRatio::Custom { table } => {
                if table.is_empty() {
                    return Err(Error::invalid("table", "must not be empty"));
                }
                if table[0].0 != 0.0 {
                    return Err(Error::invalid("table", "first knot must be at t = 0"));
                }
                for pair in table.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return Err(Error::invalid("table", "times must be strictly increasing"));
                    }
                }
                if table.iter().any(|&(_, dr)| !(dr > 0.0)) {
                    return Err(Error::invalid("table", "ratios must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Dependency ratio (retirees per worker) at time t.
    pub fn dr(&self, t: f64) -> f64 {
        match &self.dependency_ratio {
            DependencyRatio::SteadyState { dr0 } => *dr0,
            DependencyRatio::LinearRamp {
                dr_start,
                dr_end,
                ramp_years,
            } => {
                let frac = (t / ramp_years).clamp(0.0, 1.0);
                dr_start + (dr_end - dr_start) * frac
            }
            DependencyRatio::Custom { table } => {
                let mut value = table[0].1;
                for &(knot, dr) in table {
                    if knot <= t {
                        value = dr;
                    } else {
                        break;
                    }
                }
                value
            }
        }
    }

    #[inline]
    pub fn n_workers(&self, _t: f64) -> f64 {
        self.workers
    }

    #[inline]
    pub fn n_retirees(&self, t: f64) -> f64 {
        self.dr(t) * self.n_workers(t)
    }
}

/// Contribution rate and initial sustainability bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PensionParams {
    /// Fraction of wages contributed by workers.
    pub alpha: f64,
    /// Initial sustainability bound (maximum debt is -k0).
    pub k0: f64,
}

impl PensionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Total worker contributions per year: alpha * wage * workers.
#[inline]
pub fn contributions(t: f64, wage_t: f64, demo: &DemographicSchedule, alpha: f64) -> f64 {
    alpha * wage_t * demo.n_workers(t)
}

/// Pure PAYG pension per retiree: alpha * wage / DR. By construction the total
/// minimum pension bill equals contributions.
#[inline]
pub fn min_pension(t: f64, wage_t: f64, demo: &DemographicSchedule, alpha: f64) -> f64 {
    alpha * wage_t / demo.dr(t)
}

/// Sustainability bound path k0 * exp(int_0^t r ds) on the simulation grid,
/// with the rate integral taken by the trapezoid rule. This is the zero
/// exposure bound; with k0 = 0 it is identically zero.
pub fn sustainability_bound_path(k0: f64, rate_path: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(rate_path.len());
    if k0 == 0.0 {
        out.resize(rate_path.len(), 0.0);
        return out;
    }
    let mut integral = 0.0;
    out.push(k0);
    for k in 1..rate_path.len() {
        integral += 0.5 * (rate_path[k - 1] + rate_path[k]) * dt;
        out.push(k0 * integral.exp());
    }
    out
}
