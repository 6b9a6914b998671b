//! Scenario configuration: a strict, serializable document describing one
//! experiment, plus built-in presets reproducing the base parametrization.
//!
//! Configs are TOML on disk. Unknown keys are rejected so a typo in a
//! sensitivity study cannot silently fall back to a default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CorrelationParams, CorrelationStructure, MarketParams, TimeGrid};
use crate::pension::{DemographicSchedule, PensionParams};
use crate::preferences::{OmegaKind, PreferenceParams};

/// Preference block of the config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceConfig {
    /// Relative risk aversion (> 0, != 1).
    pub theta: f64,
    /// Time preference rate (1/year).
    pub beta: f64,
    /// Retiree utility normalizer Z_0.
    pub z0: f64,
    /// Initial buffer-utility weight Z^u_0.
    pub zu0: f64,
    /// Utility sensitivities to the (index, variance, rate, wage) drivers.
    pub delta: [f64; 4],
    /// Intergenerational weighting rule.
    pub omega: OmegaKind,
}

/// Execution block: initial fund, path count and master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Initial buffer fund (currency thousands).
    pub f0: f64,
    pub n_paths: usize,
    pub master_seed: u64,
}

/// Complete, serializable description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: TimeGrid,
    pub market: MarketParams,
    pub correlation: CorrelationParams,
    pub demographics: DemographicSchedule,
    pub pension: PensionParams,
    pub preferences: PreferenceConfig,
    pub run: RunConfig,
}

/// A validated scenario with derived structures cached.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub correlation: CorrelationStructure,
    pub prefs: PreferenceParams,
}

impl ScenarioConfig {
    /// Validates every component invariant and caches derived quantities.
    pub fn build(&self) -> Result<Scenario> {
        self.grid.validate()?;
        self.market.validate()?;
        self.demographics.validate()?;
        self.pension.validate()?;
        let correlation = CorrelationStructure::new(&self.correlation)?;
        let prefs = PreferenceParams::new(
            self.preferences.theta,
            self.preferences.beta,
            self.preferences.z0,
            self.preferences.zu0,
            self.preferences.delta,
            self.preferences.omega,
            &correlation,
        )?;
        if !(self.run.f0 > self.pension.k0) {
            return Err(Error::invalid(
                "f0",
                format!(
                    "initial fund {} must exceed the sustainability bound {}",
                    self.run.f0, self.pension.k0
                ),
            ));
        }
        if self.run.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be >= 1"));
        }
        Ok(Scenario {
            config: self.clone(),
            correlation,
            prefs,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        config.build()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes")
    }

    /// Initial annual contribution income C_0 = alpha * e_0 * N^w_0.
    pub fn initial_contributions(&self) -> f64 {
        self.pension.alpha * self.market.e0 * self.demographics.n_workers(0.0)
    }

    /// Initial PAYG pension p_min,0 = alpha * e_0 / DR_0.
    pub fn initial_min_pension(&self) -> f64 {
        self.pension.alpha * self.market.e0 / self.demographics.dr(0.0)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "table1_base" => Ok(table1_base()),
            "table1_bb" => Ok(table1_bb()),
            "table1_bb_delta0" => Ok(table1_bb_delta0()),
            "table1_bb_omega_dr" => Ok(table1_bb_omega_dr()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn preset_names() -> &'static [(&'static str, &'static str)] {
        &[
            (
                "table1_base",
                "base parametrization, steady-state demographics (DR = 0.3)",
            ),
            (
                "table1_bb",
                "base parametrization, baby-boom demographics (DR 0.3 -> 0.5 over 40y)",
            ),
            (
                "table1_bb_delta0",
                "baby boom with zero utility volatility (delta = 0)",
            ),
            (
                "table1_bb_omega_dr",
                "baby boom with dependency-ratio retiree weights",
            ),
        ]
    }
}

fn table1_base() -> ScenarioConfig {
    ScenarioConfig {
        grid: TimeGrid {
            horizon_years: 40,
            steps_per_year: 120,
        },
        market: MarketParams {
            mu_premium: 0.04,
            nu0: 0.04,
            nu_bar: 0.04,
            kappa: 3.0,
            sigma_nu: 0.2,
            r0: 0.03,
            b: 0.02,
            a: 0.5,
            sigma_r: 0.02,
            e0: 39.0,
            lambda: 0.02,
            sigma_e: 0.02,
            s0: 1.0,
        },
        correlation: CorrelationParams {
            rho_s_nu: -0.7,
            ..CorrelationParams::uncorrelated()
        },
        demographics: DemographicSchedule::steady_state(100.0, 0.3),
        pension: PensionParams {
            alpha: 0.15,
            k0: 0.0,
        },
        preferences: PreferenceConfig {
            theta: 4.0,
            beta: 0.03,
            z0: 1e-8,
            zu0: 1296.0,
            delta: [0.0, -0.2, -0.2, -0.2],
            omega: OmegaKind::EqualWeight,
        },
        run: RunConfig {
            f0: 585.0,
            n_paths: 10_000,
            master_seed: 42,
        },
    }
}

fn table1_bb() -> ScenarioConfig {
    let mut config = table1_base();
    config.demographics = DemographicSchedule::linear_ramp(100.0, 0.3, 0.5, 40.0);
    config
}

fn table1_bb_delta0() -> ScenarioConfig {
    let mut config = table1_bb();
    config.preferences.delta = [0.0; 4];
    config
}

fn table1_bb_omega_dr() -> ScenarioConfig {
    let mut config = table1_bb();
    config.preferences.omega = OmegaKind::DrRatio;
    config
}
