//! Market and wage dynamics: a Heston equity index, a Vasicek short rate and a
//! geometric wage process driven by a 4-dimensional correlated Brownian motion.
//!
//! Paths are produced by an Euler scheme on a fixed grid. The variance uses
//! full truncation (the non-negative part enters both drift and diffusion),
//! while the index and the wage are stepped in log form so that positivity
//! holds pathwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::ShockStream;

/// Variance floor used inside the risk-premium denominator after truncation.
pub const NU_FLOOR: f64 = 1e-12;

const DIM: usize = 4;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Fails with the offending pivot index when the matrix is not positive
/// definite.
pub fn cholesky_factor(gamma: &[[f64; DIM]; DIM]) -> Result<[[f64; DIM]; DIM]> {
    let mut l = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in 0..=i {
            let mut sum = gamma[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::NotPositiveDefinite {
                        pivot: i,
                        value: sum,
                    });
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Pairwise correlations of the four Brownian drivers (index, variance, rate, wage).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationParams {
    pub rho_s_nu: f64,
    pub rho_s_r: f64,
    pub rho_s_e: f64,
    pub rho_nu_r: f64,
    pub rho_nu_e: f64,
    pub rho_r_e: f64,
}

impl CorrelationParams {
    pub fn uncorrelated() -> Self {
        CorrelationParams {
            rho_s_nu: 0.0,
            rho_s_r: 0.0,
            rho_s_e: 0.0,
            rho_nu_r: 0.0,
            rho_nu_e: 0.0,
            rho_r_e: 0.0,
        }
    }

    pub fn matrix(&self) -> [[f64; DIM]; DIM] {
        [
            [1.0, self.rho_s_nu, self.rho_s_r, self.rho_s_e],
            [self.rho_s_nu, 1.0, self.rho_nu_r, self.rho_nu_e],
            [self.rho_s_r, self.rho_nu_r, 1.0, self.rho_r_e],
            [self.rho_s_e, self.rho_nu_e, self.rho_r_e, 1.0],
        ]
    }
}

/// A validated correlation matrix together with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStructure {
    pub gamma: [[f64; DIM]; DIM],
    pub chol: [[f64; DIM]; DIM],
}

impl CorrelationStructure {
    pub fn new(params: &CorrelationParams) -> Result<Self> {
        Self::from_matrix(params.matrix())
    }

    pub fn from_matrix(gamma: [[f64; DIM]; DIM]) -> Result<Self> {
        for i in 0..DIM {
            if gamma[i][i] != 1.0 {
                return Err(Error::invalid(
                    "gamma",
                    format!("diagonal entry ({i},{i}) must be 1, got {}", gamma[i][i]),
                ));
            }
            for j in 0..DIM {
                if (gamma[i][j] - gamma[j][i]).abs() > 0.0 {
                    return Err(Error::invalid("gamma", "matrix must be symmetric"));
                }
                if !(-1.0..=1.0).contains(&gamma[i][j]) {
                    return Err(Error::invalid(
                        "gamma",
                        format!("entry ({i},{j}) = {} outside [-1, 1]", gamma[i][j]),
                    ));
                }
            }
        }
        let chol = cholesky_factor(&gamma)?;
        Ok(CorrelationStructure { gamma, chol })
    }

    /// Applies the factor to a vector of uncorrelated increments: dB = L z.
    #[inline]
    pub fn correlate_increments(&self, z: &[f64; DIM]) -> [f64; DIM] {
        let l = &self.chol;
        [
            l[0][0] * z[0],
            l[1][0] * z[0] + l[1][1] * z[1],
            l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2],
            l[3][0] * z[0] + l[3][1] * z[1] + l[3][2] * z[2] + l[3][3] * z[3],
        ]
    }

    /// t(L) d, the sensitivity vector expressed against the uncorrelated drivers.
    pub fn transpose_mul(&self, d: &[f64; DIM]) -> [f64; DIM] {
        let l = &self.chol;
        let mut out = [0.0; DIM];
        for j in 0..DIM {
            for i in j..DIM {
                out[j] += l[i][j] * d[i];
            }
        }
        out
    }
}

/// Constant parameters of the market and wage dynamics.
///
/// The equity drift is `r0 + mu_premium`, held constant over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Equity drift spread over the initial short rate (1/year).
    pub mu_premium: f64,
    /// Initial variance of the index (1/year).
    pub nu0: f64,
    /// Long-run variance (1/year).
    pub nu_bar: f64,
    /// Variance mean-reversion speed (1/year).
    pub kappa: f64,
    /// Volatility of volatility.
    pub sigma_nu: f64,
    /// Initial short rate (1/year).
    pub r0: f64,
    /// Long-run mean of the short rate (1/year).
    pub b: f64,
    /// Rate mean-reversion speed (1/year).
    pub a: f64,
    /// Short-rate volatility.
    pub sigma_r: f64,
    /// Initial average wage (currency thousands per year).
    pub e0: f64,
    /// Wage drift (1/year).
    pub lambda: f64,
    /// Wage volatility.
    pub sigma_e: f64,
    /// Initial index level (dimensionless).
    pub s0: f64,
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu0 > 0.0) {
            return Err(Error::invalid("nu0", "must be > 0"));
        }
        if !(self.nu_bar > 0.0) {
            return Err(Error::invalid("nu_bar", "must be > 0"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa", "must be > 0"));
        }
        if !(self.a > 0.0) {
            return Err(Error::invalid("a", "must be > 0"));
        }
        if !(self.e0 > 0.0) {
            return Err(Error::invalid("e0", "must be > 0"));
        }
        if !(self.s0 > 0.0) {
            return Err(Error::invalid("s0", "must be > 0"));
        }
        if self.sigma_nu < 0.0 || self.sigma_r < 0.0 || self.sigma_e < 0.0 {
            return Err(Error::invalid("sigma", "volatilities must be >= 0"));
        }
        let bound = 2.0 * self.kappa * self.nu_bar;
        if self.sigma_nu * self.sigma_nu >= bound {
            return Err(Error::FellerViolation {
                sigma_nu_sq: self.sigma_nu * self.sigma_nu,
                bound,
            });
        }
        Ok(())
    }

    /// Constant equity drift mu = r0 + premium.
    #[inline]
    pub fn mu(&self) -> f64 {
        self.r0 + self.mu_premium
    }
}

/// Uniform simulation grid over an integer number of years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon_years: u32,
    pub steps_per_year: u32,
}

impl TimeGrid {
    pub fn new(horizon_years: u32, steps_per_year: u32) -> Result<Self> {
        let grid = TimeGrid {
            horizon_years,
            steps_per_year,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_year < 1 {
            return Err(Error::invalid("steps_per_year", "must be >= 1"));
        }
        if self.horizon_years < 1 {
            return Err(Error::invalid("horizon_years", "must be >= 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_year as f64
    }

    /// Number of steps; the path has `n_steps() + 1` grid points.
    #[inline]
    pub fn n_steps(&self) -> usize {
        (self.horizon_years as usize) * (self.steps_per_year as usize)
    }

    #[inline]
    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.steps_per_year as f64
    }

    /// Grid index of an integer year mark.
    #[inline]
    pub fn year_index(&self, year: u32) -> usize {
        (year as usize) * (self.steps_per_year as usize)
    }
}

/// One realization of the market state variables on the grid.
///
/// State vectors hold `n_steps + 1` points; the shock vectors hold one entry
/// per step. `uncorrelated_shocks[k]` is the raw normal 4-vector scaled by
/// sqrt(dt) and `correlated_increments[k] = L * uncorrelated_shocks[k]`.
#[derive(Debug, Clone)]
pub struct MarketPath {
    pub s: Vec<f64>,
    pub nu: Vec<f64>,
    pub r: Vec<f64>,
    pub wage: Vec<f64>,
    pub eta: Vec<f64>,
    pub uncorrelated_shocks: Vec<[f64; DIM]>,
    pub correlated_increments: Vec<[f64; DIM]>,
}

impl MarketPath {
    pub fn n_points(&self) -> usize {
        self.s.len()
    }
}

/// Evolves the four state variables over the grid, consuming one normal
/// 4-vector per step from the shock stream.
pub fn simulate_market_path(
    params: &MarketParams,
    grid: &TimeGrid,
    correlation: &CorrelationStructure,
    shocks: &mut ShockStream,
) -> MarketPath {
    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mu = params.mu();

    let mut s = Vec::with_capacity(n + 1);
    let mut nu = Vec::with_capacity(n + 1);
    let mut r = Vec::with_capacity(n + 1);
    let mut wage = Vec::with_capacity(n + 1);
    let mut eta = Vec::with_capacity(n + 1);
    let mut zs = Vec::with_capacity(n);
    let mut dbs = Vec::with_capacity(n);

    // nu_raw may dip below zero between steps; the stored path is its
    // truncated value and the truncated value drives drift and diffusion.
    let mut nu_raw = params.nu0;
    let mut ln_s = params.s0.ln();
    let mut rate = params.r0;
    let mut ln_e = params.e0.ln();

    let risk_premium = |rate: f64, nu_plus: f64| (mu - rate) / nu_plus.max(NU_FLOOR).sqrt();

    s.push(params.s0);
    nu.push(nu_raw.max(0.0));
    r.push(rate);
    wage.push(params.e0);
    eta.push(risk_premium(rate, nu_raw.max(0.0)));

    for _ in 0..n {
        let raw = shocks.next_quad();
        let z = [
            raw[0] * sqrt_dt,
            raw[1] * sqrt_dt,
            raw[2] * sqrt_dt,
            raw[3] * sqrt_dt,
        ];
        let db = correlation.correlate_increments(&z);

        let nu_plus = nu_raw.max(0.0);
        ln_s += (mu - 0.5 * nu_plus) * dt + nu_plus.sqrt() * db[0];
        nu_raw += params.kappa * (params.nu_bar - nu_plus) * dt + params.sigma_nu * nu_plus.sqrt() * db[1];
        rate += params.a * (params.b - rate) * dt + params.sigma_r * db[2];
        ln_e += (params.lambda - 0.5 * params.sigma_e * params.sigma_e) * dt + params.sigma_e * db[3];

        let nu_next = nu_raw.max(0.0);
        s.push(ln_s.exp());
        nu.push(nu_next);
        r.push(rate);
        wage.push(ln_e.exp());
        eta.push(risk_premium(rate, nu_next));
        zs.push(z);
        dbs.push(db);
    }

    MarketPath {
        s,
        nu,
        r,
        wage,
        eta,
        uncorrelated_shocks: zs,
        correlated_increments: dbs,
    }
}
