//! Optimal investment and pension policy induced by the forward criterion.
//!
//! The surplus over the sustainability bound is produced in closed form as
//! G_t = Y_t (Z^u_t)^{1/theta}, where Y is the exponential surplus factor.
//! The per-retiree pension surplus equals (Z_t w_t)^{1/theta} Y_t, which keeps
//! the computation stable through depletion (no division by Z^u). A log-Euler
//! integration of the fund SDE is retained as a validation route.

use crate::error::{Error, Result};
use crate::market::{MarketPath, TimeGrid, NU_FLOOR};
use crate::pension::{min_pension, sustainability_bound_path, DemographicSchedule, PensionParams};
use crate::preferences::{PreferencePath, PreferenceParams};

/// Optimal policy quantities along one path.
///
/// After depletion the scheme reverts to the minimum-pension regime: the
/// pension drops to p_min, the exposure to the bound strategy (zero here) and
/// the fund is pinned to the bound. The risky fraction is undefined (NaN) from
/// depletion onwards.
#[derive(Debug, Clone)]
pub struct PolicyPath {
    /// Rescaled risky exposure pi* (currency).
    pub pi_star: Vec<f64>,
    /// Unrescaled risky holding phi* = pi*/sqrt(nu) (currency).
    pub phi_star: Vec<f64>,
    /// phi*/F* where the fund sits above the bound; NaN once depleted.
    pub risky_fraction: Vec<f64>,
    /// Optimal pension per retiree (currency/year).
    pub p_star: Vec<f64>,
    /// Pure PAYG pension per retiree (currency/year).
    pub p_min: Vec<f64>,
    /// Buffer fund F* (currency).
    pub fund: Vec<f64>,
    /// Closed-form surplus factor Y_t.
    pub surplus_y: Vec<f64>,
    /// Sustainability bound path (currency).
    pub k_bound: Vec<f64>,
}

impl PolicyPath {
    #[inline]
    pub fn surplus(&self, k: usize) -> f64 {
        self.fund[k] - self.k_bound[k]
    }

    /// Per-retiree pension surplus series p* - p_min.
    pub fn pension_surplus(&self) -> Vec<f64> {
        self.p_star
            .iter()
            .zip(&self.p_min)
            .map(|(p, m)| p - m)
            .collect()
    }
}

/// Log-increments of the closed-form surplus factor Y.
#[inline]
fn y_log_increment(
    prefs: &PreferenceParams,
    market: &MarketPath,
    k: usize,
    dt: f64,
) -> f64 {
    let eta = market.eta[k];
    let exposure = prefs.lt_delta_s + eta;
    let z = &market.uncorrelated_shocks[k];
    let lt = prefs.lt_delta;
    let delta_db = lt[0] * z[0] + lt[1] * z[1] + lt[2] * z[2] + lt[3] * z[3];
    let db_s = market.correlated_increments[k][0];
    ((market.r[k] + 0.5 * (eta * eta + prefs.lt_delta_perp_sq)) * dt + exposure * db_s - delta_db)
        / prefs.theta
}

/// Builds the optimal policy path from the closed forms.
pub fn optimal_policy_path(
    market: &MarketPath,
    pref_path: &PreferencePath,
    demo: &DemographicSchedule,
    pension: &PensionParams,
    prefs: &PreferenceParams,
    f0: f64,
    grid: &TimeGrid,
) -> PolicyPath {
    let n = grid.n_steps();
    let dt = grid.dt();
    let theta = prefs.theta;
    let inv_theta = 1.0 / theta;
    let k_bound = sustainability_bound_path(pension.k0, &market.r, dt);

    let mut pi_star = Vec::with_capacity(n + 1);
    let mut phi_star = Vec::with_capacity(n + 1);
    let mut risky_fraction = Vec::with_capacity(n + 1);
    let mut p_star = Vec::with_capacity(n + 1);
    let mut p_min = Vec::with_capacity(n + 1);
    let mut fund = Vec::with_capacity(n + 1);
    let mut surplus_y = Vec::with_capacity(n + 1);

    let mut ln_y = ((f0 - pension.k0) * prefs.zu0.powf(-inv_theta)).ln();
    let tau_index = pref_path.tau_index.unwrap_or(usize::MAX);

    for k in 0..=n {
        if k > 0 {
            ln_y += y_log_increment(prefs, market, k - 1, dt);
        }
        let t = grid.time(k);
        let y = ln_y.exp();
        let pmin = min_pension(t, market.wage[k], demo, pension.alpha);
        surplus_y.push(y);
        p_min.push(pmin);

        if k < tau_index {
            let g = y * pref_path.zu[k].powf(inv_theta);
            let exposure = prefs.lt_delta_s + market.eta[k];
            let pi = g * exposure * inv_theta;
            let sqrt_nu = market.nu[k].max(NU_FLOOR).sqrt();
            let pension_surplus =
                (pref_path.z[k] * pref_path.omega[k]).powf(inv_theta) * y;
            pi_star.push(pi);
            phi_star.push(pi / sqrt_nu);
            // g/(g + k) is exactly 1 when the bound is zero, which keeps the
            // fraction a pure market quantity in the base case.
            risky_fraction.push(g / (g + k_bound[k]) * exposure * inv_theta / sqrt_nu);
            p_star.push(pmin + pension_surplus);
            fund.push(g + k_bound[k]);
        } else {
            pi_star.push(0.0);
            phi_star.push(0.0);
            risky_fraction.push(f64::NAN);
            p_star.push(pmin);
            fund.push(k_bound[k]);
        }
    }

    PolicyPath {
        pi_star,
        phi_star,
        risky_fraction,
        p_star,
        p_min,
        fund,
        surplus_y,
        k_bound,
    }
}

/// Fund path produced by log-Euler integration of the surplus SDE, with the
/// pension outflow optionally inflated by `pension_scale` (1.0 recovers the
/// optimal policy; values above 1 give an admissible suboptimal policy).
pub struct IntegratedFund {
    pub fund: Vec<f64>,
    pub p_star: Vec<f64>,
    pub p_min: Vec<f64>,
    pub k_bound: Vec<f64>,
}

pub fn integrate_fund_sde(
    market: &MarketPath,
    pref_path: &PreferencePath,
    demo: &DemographicSchedule,
    pension: &PensionParams,
    prefs: &PreferenceParams,
    f0: f64,
    grid: &TimeGrid,
    pension_scale: f64,
) -> IntegratedFund {
    let n = grid.n_steps();
    let dt = grid.dt();
    let theta = prefs.theta;
    let inv_theta = 1.0 / theta;
    let k_bound = sustainability_bound_path(pension.k0, &market.r, dt);
    let tau_index = pref_path.tau_index.unwrap_or(usize::MAX);

    let mut fund = Vec::with_capacity(n + 1);
    let mut p_star = Vec::with_capacity(n + 1);
    let mut p_min = Vec::with_capacity(n + 1);

    let mut ln_g = (f0 - pension.k0).ln();
    for k in 0..=n {
        let t = grid.time(k);
        let pmin = min_pension(t, market.wage[k], demo, pension.alpha);
        p_min.push(pmin);

        if k < tau_index {
            let g = ln_g.exp();
            // Payout rate per unit surplus: (Z w / Z^u)^{1/theta}.
            let payout = ((pref_path.z[k] * pref_path.omega[k]).ln() - pref_path.zu[k].ln())
                .mul_add(inv_theta, 0.0)
                .exp();
            fund.push(g + k_bound[k]);
            p_star.push(pmin + pension_scale * g * payout);

            if k < n {
                let eta = market.eta[k];
                let exposure = prefs.lt_delta_s + eta;
                let db_s = market.correlated_increments[k][0];
                let drift = market.r[k] - pension_scale * demo.n_retirees(t) * payout
                    + exposure * eta * inv_theta
                    - 0.5 * exposure * exposure * inv_theta * inv_theta;
                ln_g += drift * dt + exposure * inv_theta * db_s;
            }
        } else {
            fund.push(k_bound[k]);
            p_star.push(pmin);
        }
    }

    IntegratedFund {
        fund,
        p_star,
        p_min,
        k_bound,
    }
}

/// Validation route for the closed-form fund: the same path integrated from
/// the surplus SDE.
pub fn euler_fund_crosscheck(
    market: &MarketPath,
    pref_path: &PreferencePath,
    demo: &DemographicSchedule,
    pension: &PensionParams,
    prefs: &PreferenceParams,
    f0: f64,
    grid: &TimeGrid,
) -> IntegratedFund {
    integrate_fund_sde(market, pref_path, demo, pension, prefs, f0, grid, 1.0)
}

/// Evaluates the preference process U(t, F_t) + int_0^t V(s, p_s) ds along a
/// policy. For the optimal policy this is a martingale across paths; for
/// admissible suboptimal policies a supermartingale.
///
/// Fails when theta > 1 and the fund touches the bound, where the utility is
/// unbounded below.
pub fn evaluate_utility_process(
    fund: &[f64],
    k_bound: &[f64],
    p_star: &[f64],
    p_min: &[f64],
    pref_path: &PreferencePath,
    demo: &DemographicSchedule,
    prefs: &PreferenceParams,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let theta = prefs.theta;
    let one_minus = 1.0 - theta;
    let n_points = fund.len();

    let utility = |k: usize| -> Result<f64> {
        let g = fund[k] - k_bound[k];
        if g <= 0.0 {
            if theta > 1.0 {
                return Err(Error::UnboundedUtility { theta });
            }
            return Ok(0.0);
        }
        Ok(pref_path.zu[k] * g.powf(one_minus) / one_minus)
    };
    let retiree_flow = |k: usize| -> Result<f64> {
        let surplus = p_star[k] - p_min[k];
        if surplus <= 0.0 {
            if theta > 1.0 {
                return Err(Error::UnboundedUtility { theta });
            }
            return Ok(0.0);
        }
        let t = grid.time(k);
        Ok(demo.n_retirees(t) * pref_path.omega[k] * pref_path.z[k] * surplus.powf(one_minus)
            / one_minus)
    };

    let dt = grid.dt();
    let mut out = Vec::with_capacity(n_points);
    let mut integral = 0.0;
    let mut v_prev = retiree_flow(0)?;
    out.push(utility(0)? + integral);
    for k in 1..n_points {
        let v_k = retiree_flow(k)?;
        integral += 0.5 * (v_prev + v_k) * dt;
        v_prev = v_k;
        out.push(utility(k)? + integral);
    }
    Ok(out)
}

/// Maximum relative gap between the closed-form fund and an integrated fund on
/// [0, fraction * tau], measured on the surplus.
pub fn fund_crosscheck_gap(
    reference: &PolicyPath,
    candidate: &IntegratedFund,
    tau_index: Option<usize>,
    fraction: f64,
) -> f64 {
    let n = reference.fund.len() - 1;
    let end = match tau_index {
        Some(k) => ((k as f64) * fraction).floor() as usize,
        None => n,
    };
    let mut max_gap: f64 = 0.0;
    for k in 0..=end.min(n) {
        let ref_surplus = reference.fund[k] - reference.k_bound[k];
        let cand_surplus = candidate.fund[k] - candidate.k_bound[k];
        if ref_surplus > 0.0 {
            max_gap = max_gap.max(((cand_surplus - ref_surplus) / ref_surplus).abs());
        }
    }
    max_gap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{
        simulate_market_path, CorrelationParams, CorrelationStructure, MarketParams, TimeGrid,
    };
    use crate::pension::DemographicSchedule;
    use crate::preferences::{preference_path, OmegaKind, PreferenceParams};
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

    fn base_pension() -> PensionParams {
        PensionParams {
            alpha: 0.15,
            k0: 0.0,
        }
    }

    struct Setup {
        grid: TimeGrid,
        corr: CorrelationStructure,
        prefs: PreferenceParams,
        demo: DemographicSchedule,
        pension: PensionParams,
    }

    fn base_setup(spy: u32) -> Setup {
        let corr = base_correlation();
        let prefs = base_prefs(&corr);
        Setup {
            grid: TimeGrid::new(40, spy).unwrap(),
            corr,
            prefs,
            demo: DemographicSchedule::steady_state(100.0, 0.3),
            pension: base_pension(),
        }
    }

    fn run_path(setup: &Setup, seed: u64, path: u64, f0: f64) -> (MarketPath, PreferencePath, PolicyPath) {
        let mut shocks = ShockStream::new(seed, path);
        let market = simulate_market_path(&table1_market(), &setup.grid, &setup.corr, &mut shocks);
        let prefs_path = preference_path(&market, &setup.demo, &setup.prefs, &setup.grid);
        let policy = optimal_policy_path(
            &market,
            &prefs_path,
            &setup.demo,
            &setup.pension,
            &setup.prefs,
            f0,
            &setup.grid,
        );
        (market, prefs_path, policy)
    }

    #[test]
    fn time_zero_base_case_values() {
        let setup = base_setup(120);
        let (_, _, policy) = run_path(&setup, 42, 0, 585.0);
        // Risky fraction ((tL d)^S + eta_0)/(theta sqrt nu_0) = 0.34/0.8.
        assert!((policy.risky_fraction[0] - 0.425).abs() < 1e-12);
        // Initial pension 5% above the PAYG level: 1.05 * 19.5.
        assert!((policy.p_star[0] - 20.475).abs() < 1e-9);
        assert!((policy.p_min[0] - 19.5).abs() < 1e-12);
        assert_eq!(policy.fund[0], 585.0);
        assert!((policy.phi_star[0] - 0.425 * 585.0).abs() < 1e-9);
    }

    #[test]
    fn zero_exposure_limit() {
        // delta = 0 and eta = 0 (no equity premium, frozen market) gives a
        // zero optimal exposure at all times.
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
        let params = MarketParams {
            mu_premium: 0.0,
            sigma_nu: 0.0,
            sigma_r: 0.0,
            sigma_e: 0.0,
            b: 0.03,
            ..table1_market()
        };
        let grid = TimeGrid::new(40, 120).unwrap();
        let demo = DemographicSchedule::steady_state(100.0, 0.3);
        let mut shocks = ShockStream::new(1, 0);
        let market = simulate_market_path(&params, &grid, &corr, &mut shocks);
        let pref_path = preference_path(&market, &demo, &prefs, &grid);
        let policy = optimal_policy_path(
            &market,
            &pref_path,
            &demo,
            &base_pension(),
            &prefs,
            585.0,
            &grid,
        );
        assert!(policy.pi_star.iter().all(|&x| x == 0.0));
        assert!(policy.phi_star.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn adequacy_and_sustainability_pathwise() {
        let setup = base_setup(120);
        for path in 0..30 {
            let (_, pref_path, policy) = run_path(&setup, 7, path, 585.0);
            let tau_index = pref_path.tau_index.unwrap_or(usize::MAX);
            for k in 0..policy.fund.len() {
                assert!(policy.p_star[k] >= policy.p_min[k]);
                assert!(policy.fund[k] >= policy.k_bound[k]);
                if k >= tau_index {
                    assert_eq!(policy.p_star[k], policy.p_min[k]);
                    assert_eq!(policy.pi_star[k], 0.0);
                    assert_eq!(policy.fund[k], policy.k_bound[k]);
                    assert!(policy.risky_fraction[k].is_nan());
                }
            }
        }
    }

    #[test]
    fn surplus_linear_in_initial_cushion() {
        let setup = base_setup(120);
        let (_, pref_a, policy_a) = run_path(&setup, 11, 3, 585.0);
        let (_, pref_b, policy_b) = run_path(&setup, 11, 3, 585.0 * 0.5);
        assert_eq!(pref_a.tau_index, pref_b.tau_index);
        for k in 0..policy_a.fund.len() {
            let sa = policy_a.p_star[k] - policy_a.p_min[k];
            let sb = policy_b.p_star[k] - policy_b.p_min[k];
            assert!((sb - 0.5 * sa).abs() <= 1e-12 * sa.abs().max(1e-300));
        }
    }

    #[test]
    fn risky_fraction_and_tau_invariant_to_f0() {
        let setup = base_setup(120);
        let (_, pref_a, policy_a) = run_path(&setup, 19, 5, 585.0);
        for scale in [0.5, 1.5] {
            let (_, pref_b, policy_b) = run_path(&setup, 19, 5, 585.0 * scale);
            assert_eq!(pref_a.tau_index, pref_b.tau_index);
            for k in 0..policy_a.risky_fraction.len() {
                let a = policy_a.risky_fraction[k];
                let b = policy_b.risky_fraction[k];
                assert!(
                    a.to_bits() == b.to_bits(),
                    "k = {k}: {a} vs {b} (scale {scale})"
                );
            }
        }
    }

    #[test]
    fn pension_surplus_invariant_to_demographics_under_equal_weights() {
        let setup = base_setup(120);
        let bb = DemographicSchedule::linear_ramp(100.0, 0.3, 0.5, 40.0);
        let mut s1 = ShockStream::new(23, 1);
        let market = simulate_market_path(&table1_market(), &setup.grid, &setup.corr, &mut s1);
        let pref_ss = preference_path(&market, &setup.demo, &setup.prefs, &setup.grid);
        let pref_bb = preference_path(&market, &bb, &setup.prefs, &setup.grid);
        let pol_ss = optimal_policy_path(
            &market, &pref_ss, &setup.demo, &setup.pension, &setup.prefs, 585.0, &setup.grid,
        );
        let pol_bb = optimal_policy_path(
            &market, &pref_bb, &bb, &setup.pension, &setup.prefs, 585.0, &setup.grid,
        );
        // The BB fund depletes no later; surpluses agree bitwise while both
        // schemes are solvent and are zero afterwards.
        let t_ss = pref_ss.tau_index.unwrap_or(usize::MAX);
        let t_bb = pref_bb.tau_index.unwrap_or(usize::MAX);
        assert!(t_bb <= t_ss);
        for k in 0..pol_ss.fund.len() {
            let sa = pol_ss.p_star[k] - pol_ss.p_min[k];
            let sb = pol_bb.p_star[k] - pol_bb.p_min[k];
            if k < t_bb.min(t_ss) {
                assert_eq!(sa.to_bits(), sb.to_bits(), "k = {k}");
            }
            assert!(pol_ss.p_min[k] <= pol_bb.p_min[k] || (setup.demo.dr(0.0) - bb.dr(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn crosscheck_deterministic_market() {
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
        let params = MarketParams {
            sigma_nu: 0.0,
            sigma_r: 0.0,
            sigma_e: 0.0,
            b: 0.03,
            ..table1_market()
        };
        let grid = TimeGrid::new(40, 1200).unwrap();
        let demo = DemographicSchedule::steady_state(100.0, 0.3);
        let pension = base_pension();
        let mut shocks = ShockStream::new(1, 0);
        let market = simulate_market_path(&params, &grid, &corr, &mut shocks);
        let pref_path = preference_path(&market, &demo, &prefs, &grid);
        let policy = optimal_policy_path(&market, &pref_path, &demo, &pension, &prefs, 585.0, &grid);
        let sde = euler_fund_crosscheck(&market, &pref_path, &demo, &pension, &prefs, 585.0, &grid);
        let gap = fund_crosscheck_gap(&policy, &sde, pref_path.tau_index, 0.9);
        assert!(gap < 1e-6, "gap {gap}");
    }

    #[test]
    fn crosscheck_stochastic_market() {
        let setup = base_setup(120);
        for path in 0..5 {
            let (market, pref_path, policy) = run_path(&setup, 31, path, 585.0);
            let sde = euler_fund_crosscheck(
                &market,
                &pref_path,
                &setup.demo,
                &setup.pension,
                &setup.prefs,
                585.0,
                &setup.grid,
            );
            let gap = fund_crosscheck_gap(&policy, &sde, pref_path.tau_index, 0.9);
            assert!(gap < 0.01, "path {path}: gap {gap}");
        }
    }

    #[test]
    fn utility_initial_value() {
        let corr = base_correlation();
        let theta = 0.5;
        let prefs = PreferenceParams::new(
            theta,
            0.03,
            0.1,
            2.449,
            [0.0, -0.2, -0.2, -0.2],
            OmegaKind::EqualWeight,
            &corr,
        )
        .unwrap();
        let grid = TimeGrid::new(5, 120).unwrap();
        let demo = DemographicSchedule::steady_state(100.0, 0.3);
        let pension = base_pension();
        let mut shocks = ShockStream::new(3, 0);
        let market = simulate_market_path(&table1_market(), &grid, &corr, &mut shocks);
        let pref_path = preference_path(&market, &demo, &prefs, &grid);
        let policy = optimal_policy_path(&market, &pref_path, &demo, &pension, &prefs, 585.0, &grid);
        let process = evaluate_utility_process(
            &policy.fund,
            &policy.k_bound,
            &policy.p_star,
            &policy.p_min,
            &pref_path,
            &demo,
            &prefs,
            &grid,
        )
        .unwrap();
        let expected = 2.449 * 585.0f64.powf(1.0 - theta) / (1.0 - theta);
        assert!((process[0] - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn utility_unbounded_for_large_theta_at_depletion() {
        // Force depletion with a small zu0 and check the theta > 1 signal.
        let corr = base_correlation();
        let prefs = PreferenceParams::new(
            4.0,
            0.03,
            1e-8,
            1e-2,
            [0.0, -0.2, -0.2, -0.2],
            OmegaKind::EqualWeight,
            &corr,
        )
        .unwrap();
        let grid = TimeGrid::new(40, 120).unwrap();
        let demo = DemographicSchedule::steady_state(100.0, 0.3);
        let pension = base_pension();
        let mut shocks = ShockStream::new(3, 1);
        let market = simulate_market_path(&table1_market(), &grid, &corr, &mut shocks);
        let pref_path = preference_path(&market, &demo, &prefs, &grid);
        assert!(pref_path.tau.is_finite());
        let policy = optimal_policy_path(&market, &pref_path, &demo, &pension, &prefs, 585.0, &grid);
        let result = evaluate_utility_process(
            &policy.fund,
            &policy.k_bound,
            &policy.p_star,
            &policy.p_min,
            &pref_path,
            &demo,
            &prefs,
            &grid,
        );
        assert!(matches!(result, Err(Error::UnboundedUtility { .. })));
    }
}
