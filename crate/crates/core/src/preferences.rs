//! Forward preference state: the retiree time-preference weight Z, the
//! intergenerational weight omega, the stochastic discount factor xi, the
//! buffer-utility weight Z^u and the buffer depletion time tau.
//!
//! Z^u is produced from its closed form
//!
//!   Z^u_t = xi_t^{-1} ( (Z^u_0)^{1/theta} - int_0^t N^r_s (Z_s w_s xi_s)^{1/theta} ds )^theta
//!
//! with tau the first grid time the inner bracket reaches zero. The non-linear
//! SDE for Z^u is kept as a validation integrator only; the closed form is
//! exact given the discretized integrals and avoids the SDE's stiffness near
//! depletion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CorrelationStructure, MarketPath, TimeGrid};
use crate::pension::DemographicSchedule;

/// How the social planner weights individual retirees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaKind {
    /// Every retiree gets weight 1 regardless of cohort size.
    EqualWeight,
    /// Weight DR_t / DR_0, favouring larger cohorts.
    DrRatio,
}

/// Preference parameters with cached decompositions of the utility volatility
/// vector against the Cholesky factor.
#[derive(Debug, Clone)]
pub struct PreferenceParams {
    pub theta: f64,
    pub beta: f64,
    pub z0: f64,
    pub zu0: f64,
    pub delta: [f64; 4],
    pub omega_kind: OmegaKind,
    /// t(L) delta.
    pub lt_delta: [f64; 4],
    /// Hedgeable component, the first entry of t(L) delta.
    pub lt_delta_s: f64,
    /// Squared norm of the non-hedgeable components.
    pub lt_delta_perp_sq: f64,
    /// t(delta) Gamma delta.
    pub delta_gamma_delta: f64,
}

impl PreferenceParams {
    pub fn new(
        theta: f64,
        beta: f64,
        z0: f64,
        zu0: f64,
        delta: [f64; 4],
        omega_kind: OmegaKind,
        correlation: &CorrelationStructure,
    ) -> Result<Self> {
        if !(theta > 0.0) || theta == 1.0 {
            return Err(Error::invalid("theta", "must be > 0 and != 1"));
        }
        if !(z0 > 0.0) {
            return Err(Error::invalid("z0", "must be > 0"));
        }
        if !(zu0 > 0.0) {
            return Err(Error::invalid("zu0", "must be > 0"));
        }
        let lt_delta = correlation.transpose_mul(&delta);
        let lt_delta_s = lt_delta[0];
        let lt_delta_perp_sq =
            lt_delta[1] * lt_delta[1] + lt_delta[2] * lt_delta[2] + lt_delta[3] * lt_delta[3];

        let mut delta_gamma_delta = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                delta_gamma_delta += delta[i] * correlation.gamma[i][j] * delta[j];
            }
        }
        let identity_gap =
            (delta_gamma_delta - (lt_delta_s * lt_delta_s + lt_delta_perp_sq)).abs();
        let scale = delta_gamma_delta.abs().max(1.0);
        if identity_gap > 1e-12 * scale {
            return Err(Error::invalid(
                "delta",
                format!("Cholesky decomposition identity violated by {identity_gap:.3e}"),
            ));
        }

        Ok(PreferenceParams {
            theta,
            beta,
            z0,
            zu0,
            delta,
            omega_kind,
            lt_delta,
            lt_delta_s,
            lt_delta_perp_sq,
            delta_gamma_delta,
        })
    }

    /// Retiree time-preference weight Z_t = z0 exp(-beta t).
    #[inline]
    pub fn z(&self, t: f64) -> f64 {
        self.z0 * (-self.beta * t).exp()
    }
}

/// Intergenerational weight at time t.
pub fn omega_weight(t: f64, demo: &DemographicSchedule, kind: OmegaKind) -> f64 {
    match kind {
        OmegaKind::EqualWeight => 1.0,
        OmegaKind::DrRatio => demo.dr(t) / demo.dr(0.0),
    }
}

/// Log of the stochastic discount factor xi on the grid. The drift integral is
/// left-endpoint Euler (matching the market scheme); the stochastic integral
/// of delta against dB is accumulated per step as t(L)delta against the
/// uncorrelated shocks.
pub fn discount_factor_log_path(
    market: &MarketPath,
    prefs: &PreferenceParams,
    grid: &TimeGrid,
) -> Vec<f64> {
    let n = grid.n_steps();
    let dt = grid.dt();
    let theta = prefs.theta;
    let half_dgd = 0.5 * prefs.delta_gamma_delta;
    let drift_coeff = (1.0 - theta) / (2.0 * theta);
    let lt = prefs.lt_delta;

    let mut out = Vec::with_capacity(n + 1);
    let mut ln_xi = 0.0;
    out.push(0.0);
    for k in 0..n {
        let exposure = prefs.lt_delta_s + market.eta[k];
        let drift = (1.0 - theta) * market.r[k] + drift_coeff * exposure * exposure + half_dgd;
        let z = &market.uncorrelated_shocks[k];
        let stoch = lt[0] * z[0] + lt[1] * z[1] + lt[2] * z[2] + lt[3] * z[3];
        ln_xi += drift * dt - stoch;
        out.push(ln_xi);
    }
    out
}

/// Stochastic discount factor xi on the grid, xi_0 = 1.
pub fn discount_factor_path(
    market: &MarketPath,
    prefs: &PreferenceParams,
    grid: &TimeGrid,
) -> Vec<f64> {
    discount_factor_log_path(market, prefs, grid)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Closed-form Z^u path plus depletion bookkeeping.
pub struct ZuClosedForm {
    pub zu: Vec<f64>,
    /// Running value of int_0^t N^r (Z w xi / Z^u_0)^{1/theta} ds; depletion
    /// happens when this reaches 1.
    pub depletion_integral: Vec<f64>,
    /// First grid index where the bracket is <= 0, if any.
    pub tau_index: Option<usize>,
}

/// Evaluates the closed form of Z^u given the log discount factor, the retiree
/// weights and the population. The bracket integral is accumulated by the
/// trapezoid rule and is never raised to the power theta once negative.
pub fn zu_closed_form(
    ln_xi: &[f64],
    ln_z_omega: &[f64],
    retirees: &[f64],
    prefs: &PreferenceParams,
    dt: f64,
) -> ZuClosedForm {
    let n_points = ln_xi.len();
    let theta = prefs.theta;
    let inv_theta = 1.0 / theta;
    let budget = prefs.zu0.powf(inv_theta);

    let mut zu = Vec::with_capacity(n_points);
    let mut depletion = Vec::with_capacity(n_points);
    let mut tau_index = None;

    let integrand =
        |k: usize| retirees[k] * ((ln_z_omega[k] + ln_xi[k]) * inv_theta).exp();

    let mut bracket = budget;
    let mut g_prev = integrand(0);
    for k in 0..n_points {
        if k > 0 {
            let g_k = integrand(k);
            bracket -= 0.5 * (g_prev + g_k) * dt;
            g_prev = g_k;
        }
        depletion.push(((budget - bracket) / budget).min(1.0));
        if tau_index.is_none() && bracket <= 0.0 {
            tau_index = Some(k);
        }
        if tau_index.is_some() {
            zu.push(0.0);
        } else {
            zu.push(bracket.powf(theta) * (-ln_xi[k]).exp());
        }
    }

    ZuClosedForm {
        zu,
        depletion_integral: depletion,
        tau_index,
    }
}

/// Full preference state along one market path.
#[derive(Debug, Clone)]
pub struct PreferencePath {
    pub z: Vec<f64>,
    pub omega: Vec<f64>,
    pub xi: Vec<f64>,
    /// Log of xi, kept for downstream closed forms.
    pub ln_xi: Vec<f64>,
    pub zu: Vec<f64>,
    pub depletion_integral: Vec<f64>,
    /// Depletion time in years; infinity when the fund survives the horizon.
    pub tau: f64,
    pub tau_index: Option<usize>,
}

/// Evolves Z, omega, xi and Z^u over one market path and detects tau.
pub fn preference_path(
    market: &MarketPath,
    demo: &DemographicSchedule,
    prefs: &PreferenceParams,
    grid: &TimeGrid,
) -> PreferencePath {
    let n_points = grid.n_steps() + 1;
    let ln_xi = discount_factor_log_path(market, prefs, grid);

    let mut z = Vec::with_capacity(n_points);
    let mut omega = Vec::with_capacity(n_points);
    let mut retirees = Vec::with_capacity(n_points);
    let mut ln_z_omega = Vec::with_capacity(n_points);
    let ln_z0 = prefs.z0.ln();
    for k in 0..n_points {
        let t = grid.time(k);
        let w = omega_weight(t, demo, prefs.omega_kind);
        z.push(prefs.z(t));
        omega.push(w);
        retirees.push(demo.n_retirees(t));
        ln_z_omega.push(ln_z0 - prefs.beta * t + w.ln());
    }

    let closed = zu_closed_form(&ln_xi, &ln_z_omega, &retirees, prefs, grid.dt());
    let tau = closed
        .tau_index
        .map_or(f64::INFINITY, |k| grid.time(k));

    PreferencePath {
        z,
        omega,
        xi: ln_xi.iter().copied().map(f64::exp).collect(),
        ln_xi,
        zu: closed.zu,
        depletion_integral: closed.depletion_integral,
        tau,
        tau_index: closed.tau_index,
    }
}

/// Integrates the non-linear Z^u SDE by a log-Euler scheme, as a cross-check
/// of the closed form. Integration stops once Z^u falls below a relative
/// cutoff (the SDE is stiff near depletion) and the path is zero afterwards.
pub fn zu_sde_form(
    market: &MarketPath,
    demo: &DemographicSchedule,
    prefs: &PreferenceParams,
    grid: &TimeGrid,
) -> Vec<f64> {
    let n = grid.n_steps();
    let dt = grid.dt();
    let theta = prefs.theta;
    let inv_theta = 1.0 / theta;
    let drift_coeff = (1.0 - theta) / (2.0 * theta);
    let half_dgd = 0.5 * prefs.delta_gamma_delta;
    let lt = prefs.lt_delta;
    let ln_z0 = prefs.z0.ln();
    let ln_cutoff = prefs.zu0.ln() - 45.0;

    let mut out = Vec::with_capacity(n + 1);
    let mut ln_zu = prefs.zu0.ln();
    out.push(prefs.zu0);
    let mut depleted = false;
    for k in 0..n {
        if depleted {
            out.push(0.0);
            continue;
        }
        let t = grid.time(k);
        let exposure = prefs.lt_delta_s + market.eta[k];
        let ln_z_omega = ln_z0 - prefs.beta * t + omega_weight(t, demo, prefs.omega_kind).ln();
        let payout = demo.n_retirees(t) * ((ln_z_omega - ln_zu) * inv_theta).exp();
        let drift = -((1.0 - theta) * market.r[k]
            + drift_coeff * exposure * exposure
            + theta * payout);
        let z = &market.uncorrelated_shocks[k];
        let stoch = lt[0] * z[0] + lt[1] * z[1] + lt[2] * z[2] + lt[3] * z[3];
        ln_zu += (drift - half_dgd) * dt + stoch;
        if ln_zu < ln_cutoff || !ln_zu.is_finite() {
            depleted = true;
            out.push(0.0);
        } else {
            out.push(ln_zu.exp());
        }
    }
    out
}

/// Maximum relative gap between two Z^u paths over [0, fraction * tau],
/// used when validating the SDE integrator against the closed form.
pub fn max_relative_gap(
    reference: &[f64],
    candidate: &[f64],
    tau_index: Option<usize>,
    fraction: f64,
) -> f64 {
    let end = match tau_index {
        Some(k) => ((k as f64) * fraction).floor() as usize,
        None => reference.len() - 1,
    };
    let mut max_gap: f64 = 0.0;
    for k in 0..=end.min(reference.len() - 1) {
        if reference[k] > 0.0 {
            let gap = ((candidate[k] - reference[k]) / reference[k]).abs();
            max_gap = max_gap.max(gap);
        }
    }
    max_gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{
        simulate_market_path, CorrelationParams, CorrelationStructure, MarketParams,
    };
    use crate::pension::DemographicSchedule;
    use crate::rng::ShockStream;

    fn table1_market() -> MarketParams {
        MarketParams {
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
        }
    }

    fn deterministic_market() -> MarketParams {
        MarketParams {
            sigma_nu: 0.0,
            sigma_r: 0.0,
            sigma_e: 0.0,
            b: 0.03,
            ..table1_market()
        }
    }

    fn base_correlation() -> CorrelationStructure {
        CorrelationStructure::new(&CorrelationParams {
            rho_s_nu: -0.7,
            ..CorrelationParams::uncorrelated()
        })
        .unwrap()
    }

    fn base_prefs(corr: &CorrelationStructure) -> PreferenceParams {
        PreferenceParams::new(
            4.0,
            0.03,
            1e-8,
            1296.0,
            [0.0, -0.2, -0.2, -0.2],
            OmegaKind::EqualWeight,
            corr,
        )
        .unwrap()
    }

    #[test]
    fn theta_one_rejected() {
        let corr = base_correlation();
        assert!(PreferenceParams::new(
            1.0,
            0.03,
            1e-8,
            1296.0,
            [0.0; 4],
            OmegaKind::EqualWeight,
            &corr
        )
        .is_err());
    }

    #[test]
    fn volatility_decomposition_identity() {
        let corr = base_correlation();
        let prefs = base_prefs(&corr);
        // t(delta) Gamma delta = 0.12 for the base sensitivities.
        assert!((prefs.delta_gamma_delta - 0.12).abs() < 1e-12);
        assert!((prefs.lt_delta_s - 0.14).abs() < 1e-12);
        let recomposed = prefs.lt_delta_s * prefs.lt_delta_s + prefs.lt_delta_perp_sq;
        assert!((prefs.delta_gamma_delta - recomposed).abs() < 1e-12);
    }

    #[test]
    fn omega_examples() {
        let ss = DemographicSchedule::steady_state(100.0, 0.3);
        let bb = DemographicSchedule::linear_ramp(100.0, 0.3, 0.5, 40.0);
        assert_eq!(omega_weight(17.3, &ss, OmegaKind::EqualWeight), 1.0);
        assert_eq!(omega_weight(17.3, &ss, OmegaKind::DrRatio), 1.0);
        let w40 = omega_weight(40.0, &bb, OmegaKind::DrRatio);
        assert!((w40 - 0.5 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn xi_deterministic_case() {
        // With delta = 0 and a frozen market, xi_t = exp([(1-theta) rbar +
        // ((1-theta)/2theta) etabar^2] t).
        let corr = base_correlation();
        let prefs = PreferenceParams::new(
            4.0,
            0.03,
            1e-8,
            1296.0,
            [0.0; 4],
            OmegaKind::EqualWeight,
            &corr,
        )
        .unwrap();
        let grid = TimeGrid::new(10, 120).unwrap();
        let mut shocks = ShockStream::new(3, 0);
        let market = simulate_market_path(&deterministic_market(), &grid, &corr, &mut shocks);
        let xi = discount_factor_path(&market, &prefs, &grid);

        let rbar = 0.03;
        let etabar: f64 = 0.2;
        let rate = (1.0 - 4.0) * rbar + ((1.0 - 4.0) / 8.0) * etabar * etabar;
        for k in [0usize, 120, 600, 1200] {
            let expected = (rate * grid.time(k)).exp();
            assert!(
                (xi[k] - expected).abs() < 1e-12 * expected,
                "k = {k}: {} vs {expected}",
                xi[k]
            );
        }
    }

    #[test]
    fn xi_matches_independent_resummation() {
        // Kahan-compensated re-summation of the same increments.
        let corr = base_correlation();
        let prefs = base_prefs(&corr);
        let grid = TimeGrid::new(40, 120).unwrap();
        let mut shocks = ShockStream::new(99, 17);
        let market = simulate_market_path(&table1_market(), &grid, &corr, &mut shocks);
        let xi = discount_factor_path(&market, &prefs, &grid);

        let dt = grid.dt();
        let mut sum = 0.0;
        let mut comp = 0.0;
        let mut add = |x: f64, sum: &mut f64, comp: &mut f64| {
            let y = x - *comp;
            let t = *sum + y;
            *comp = (t - *sum) - y;
            *sum = t;
        };
        for k in 0..grid.n_steps() {
            let exposure = prefs.lt_delta_s + market.eta[k];
            let drift = (1.0 - prefs.theta) * market.r[k]
                + (1.0 - prefs.theta) / (2.0 * prefs.theta) * exposure * exposure
                + 0.5 * prefs.delta_gamma_delta;
            let z = &market.uncorrelated_shocks[k];
            let stoch: f64 = (0..4).map(|i| prefs.lt_delta[i] * z[i]).sum();
            add(drift * dt - stoch, &mut sum, &mut comp);
            let expected = sum.exp();
            assert!(
                (xi[k + 1] - expected).abs() <= 1e-12 * expected.abs(),
                "k = {k}"
            );
        }
    }

    #[test]
    fn zu_depletion_matches_quadrature_oracle() {
        // Deterministic market, delta = 0: the bracket is a scalar integral,
        // so tau can be bracketed independently with high-resolution
        // quadrature on the continuous-time integrand.
        let corr = base_correlation();
        let prefs = PreferenceParams::new(
            4.0,
            0.03,
            1e-8,
            1296.0,
            [0.0; 4],
            OmegaKind::EqualWeight,
            &corr,
        )
        .unwrap();
        let demo = DemographicSchedule::steady_state(100.0, 0.3);
        let grid = TimeGrid::new(40, 120).unwrap();
        let mut shocks = ShockStream::new(5, 0);
        let market = simulate_market_path(&deterministic_market(), &grid, &corr, &mut shocks);
        let path = preference_path(&market, &demo, &prefs, &grid);
        assert!(path.tau.is_finite(), "deterministic base case must deplete");

        // Oracle: integrand N^r (z0 e^{-beta s} xi_s)^{1/theta} with
        // xi_s = exp(g s); find the root of budget - integral by bisection on
        // a 64x refined trapezoid.
        let rbar = 0.03;
        let etabar: f64 = 0.2;
        let g = (1.0 - 4.0) * rbar + ((1.0 - 4.0) / 8.0) * etabar * etabar;
        let integrand = |s: f64| 30.0 * (1e-8f64).powf(0.25) * ((g - 0.03) * s / 4.0).exp();
        let budget = 1296.0f64.powf(0.25);
        let cumulative = |t: f64| {
            let n = 256_000usize;
            let h = t / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                acc += 0.5 * (integrand(h * i as f64) + integrand(h * (i + 1) as f64)) * h;
            }
            acc
        };
        let (mut lo, mut hi) = (0.0f64, 40.0f64);
        assert!(cumulative(hi) > budget);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if cumulative(mid) < budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle_tau = 0.5 * (lo + hi);
        assert!(
            (path.tau - oracle_tau).abs() <= grid.dt() + 1e-6,
            "engine tau {} vs oracle {oracle_tau}",
            path.tau
        );
    }

    #[test]
    fn huge_zu0_never_depletes() {
        let corr = base_correlation();
        let prefs = PreferenceParams::new(
            4.0,
            0.03,
            1e-8,
            1e12 * 1e-8,
            [0.0, -0.2, -0.2, -0.2],
            OmegaKind::EqualWeight,
            &corr,
        )
        .unwrap();
        let demo = DemographicSchedule::steady_state(100.0, 0.3);
        let grid = TimeGrid::new(40, 120).unwrap();
        let mut shocks = ShockStream::new(8, 3);
        let market = simulate_market_path(&table1_market(), &grid, &corr, &mut shocks);
        let path = preference_path(&market, &demo, &prefs, &grid);
        assert!(path.tau.is_infinite());
        assert!(path.zu.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn depletion_integral_and_bracket_agree_on_tau() {
        let corr = base_correlation();
        let prefs = base_prefs(&corr);
        let demo = DemographicSchedule::linear_ramp(100.0, 0.3, 0.5, 40.0);
        let grid = TimeGrid::new(40, 120).unwrap();
        for seed in 0..20u64 {
            let mut shocks = ShockStream::new(31, seed);
            let market = simulate_market_path(&table1_market(), &grid, &corr, &mut shocks);
            let path = preference_path(&market, &demo, &prefs, &grid);
            let from_integral = path.depletion_integral.iter().position(|&v| v >= 1.0);
            assert_eq!(path.tau_index, from_integral);
            for w in path.depletion_integral.windows(2) {
                assert!(w[1] >= w[0]);
            }
            if let Some(k) = path.tau_index {
                assert!(path.zu[k..].iter().all(|&v| v == 0.0));
                assert!(path.zu[..k].iter().all(|&v| v > 0.0));
            }
        }
    }

    #[test]
    fn sde_matches_closed_form_deterministic() {
        let corr = base_correlation();
        let prefs = PreferenceParams::new(
            4.0,
            0.03,
            1e-8,
            1296.0,
            [0.0; 4],
            OmegaKind::EqualWeight,
            &corr,
        )
        .unwrap();
        let demo = DemographicSchedule::steady_state(100.0, 0.3);
        let grid = TimeGrid::new(40, 1200).unwrap();
        let mut shocks = ShockStream::new(5, 0);
        let market = simulate_market_path(&deterministic_market(), &grid, &corr, &mut shocks);
        let path = preference_path(&market, &demo, &prefs, &grid);
        let sde = zu_sde_form(&market, &demo, &prefs, &grid);
        let gap = max_relative_gap(&path.zu, &sde, path.tau_index, 0.9);
        assert!(gap < 1e-6, "gap {gap}");
    }

    #[test]
    fn sde_matches_closed_form_stochastic() {
        let corr = base_correlation();
        let prefs = base_prefs(&corr);
        let demo = DemographicSchedule::steady_state(100.0, 0.3);
        let grid = TimeGrid::new(40, 120).unwrap();
        let mut shocks = ShockStream::new(13, 2);
        let market = simulate_market_path(&table1_market(), &grid, &corr, &mut shocks);
        let path = preference_path(&market, &demo, &prefs, &grid);
        let sde = zu_sde_form(&market, &demo, &prefs, &grid);
        let gap = max_relative_gap(&path.zu, &sde, path.tau_index, 0.9);
        assert!(gap < 0.01, "gap {gap}");
    }

    #[test]
    fn dr_ratio_weights_deplete_no_later_than_equal() {
        let corr = base_correlation();
        let bb = DemographicSchedule::linear_ramp(100.0, 0.3, 0.5, 40.0);
        let grid = TimeGrid::new(40, 120).unwrap();
        let equal = base_prefs(&corr);
        let ratio = PreferenceParams::new(
            4.0,
            0.03,
            1e-8,
            1296.0,
            [0.0, -0.2, -0.2, -0.2],
            OmegaKind::DrRatio,
            &corr,
        )
        .unwrap();
        for seed in 0..10u64 {
            let mut s1 = ShockStream::new(77, seed);
            let market = simulate_market_path(&table1_market(), &grid, &corr, &mut s1);
            let p_equal = preference_path(&market, &bb, &equal, &grid);
            let p_ratio = preference_path(&market, &bb, &ratio, &grid);
            for k in 0..p_equal.zu.len() {
                assert!(
                    p_ratio.zu[k] <= p_equal.zu[k] + 1e-15,
                    "seed {seed} k {k}"
                );
            }
        }
    }

    #[test]
    fn zero_delta_gives_finite_variation_weight() {
        // With delta = 0 the closed-form Z^u must move at drift scale only;
        // each log increment matches -b dt to second order.
        let corr = base_correlation();
        let prefs = PreferenceParams::new(
            4.0,
            0.03,
            1e-8,
            1296.0,
            [0.0; 4],
            OmegaKind::EqualWeight,
            &corr,
        )
        .unwrap();
        let demo = DemographicSchedule::linear_ramp(100.0, 0.3, 0.5, 40.0);
        let grid = TimeGrid::new(40, 120).unwrap();
        let dt = grid.dt();
        let mut shocks = ShockStream::new(23, 4);
        let market = simulate_market_path(&table1_market(), &grid, &corr, &mut shocks);
        let path = preference_path(&market, &demo, &prefs, &grid);
        let end = path
            .tau_index
            .map_or(grid.n_steps(), |k| (k as f64 * 0.8) as usize);
        for k in 0..end {
            let t = grid.time(k);
            let payout = demo.n_retirees(t)
                * (path.z[k] * path.omega[k] / path.zu[k]).powf(1.0 / prefs.theta);
            let exposure = prefs.lt_delta_s + market.eta[k];
            let b = -((1.0 - prefs.theta) * market.r[k]
                + (1.0 - prefs.theta) / (2.0 * prefs.theta) * exposure * exposure
                + prefs.theta * payout);
            let residual = (path.zu[k + 1].ln() - path.zu[k].ln()) - b * dt;
            assert!(
                residual.abs() < 1e-4,
                "k = {k}: residual {residual} (drift-only move expected)"
            );
        }
    }
}
