//! Fixed-point equilibrium seeking.
//!
//! Each round every adjacent system best-responds to the previous virtual
//! price, then the main system moves the price by `a * (omega_am - omega_hat)`.
//! The loop stops when both the price and the droop vector stop moving. The
//! closed-form interior equilibrium and the saturated regime are handled
//! separately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{marginal_response, price_error, price_step, steady_frequency, GameInstance, PriceState};
use crate::model::FaultedView;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eps_gamma: f64,
    pub eps_k: f64,
    pub max_iters: usize,
    /// Initial price; defaults to the midpoint of the admissible price set.
    pub gamma0: Option<f64>,
    /// Initial droop vector; defaults to zeros.
    pub k0: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { eps_gamma: 1e-10, eps_k: 1e-8, max_iters: 10_000, gamma0: None, k0: None }
    }
}

impl SolverConfig {
    pub fn with_gamma0(mut self, gamma0: f64) -> Self {
        self.gamma0 = Some(gamma0);
        self
    }

    pub fn with_k0(mut self, k0: Vec<f64>) -> Self {
        self.k0 = Some(k0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_gamma > 0.0 && self.eps_k > 0.0) {
            return Err(Error::invariant("solver tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invariant("solver max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumStatus {
    Converged,
    Saturated,
    MaxIterations,
    NoSupportNeeded,
}

impl EquilibriumStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            EquilibriumStatus::Converged => "Converged",
            EquilibriumStatus::Saturated => "Saturated",
            EquilibriumStatus::MaxIterations => "MaxIterations",
            EquilibriumStatus::NoSupportNeeded => "NoSupportNeeded",
        }
    }
}

impl std::str::FromStr for EquilibriumStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Converged" => EquilibriumStatus::Converged,
            "Saturated" => EquilibriumStatus::Saturated,
            "MaxIterations" => EquilibriumStatus::MaxIterations,
            "NoSupportNeeded" => EquilibriumStatus::NoSupportNeeded,
            other => return Err(Error::invariant(format!("unknown status `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub gamma: f64,
    pub k: Vec<f64>,
    pub omega_hat: f64,
    pub e_gamma: f64,
    pub max_e_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationReport {
    pub saturated: Vec<String>,
    /// Smallest price at which every best response sits at its upper bound.
    pub gamma_minimal: f64,
    /// Imbalance (MW) left for load shedding.
    pub uncovered_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub fault_id: String,
    pub delta_p: f64,
    pub omega_am: f64,
    pub ad_ids: Vec<String>,
    pub gamma_star: f64,
    pub k_star: Vec<f64>,
    pub reward_star: f64,
    pub omega_hat: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub status: EquilibriumStatus,
    pub saturation: Option<SaturationReport>,
}

impl EquilibriumResult {
    pub fn droop_sum(&self) -> f64 {
        self.k_star.iter().sum()
    }

    pub fn is_converged(&self) -> bool {
        self.status == EquilibriumStatus::Converged
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish(
    view: &FaultedView<'_>,
    ad_ids: &[String],
    omega_am: f64,
    gamma: f64,
    k: Vec<f64>,
    iterations: usize,
    trace: Vec<TraceRow>,
    status: EquilibriumStatus,
    saturation: Option<SaturationReport>,
) -> Result<EquilibriumResult> {
    let omega_hat = steady_frequency(view, &k)?;
    let reward = gamma * k.iter().sum::<f64>();
    Ok(EquilibriumResult {
        fault_id: view.fault.id.clone(),
        delta_p: view.delta_p(),
        omega_am,
        ad_ids: ad_ids.to_vec(),
        gamma_star: gamma,
        k_star: k,
        reward_star: reward,
        omega_hat,
        iterations,
        trace,
        status,
        saturation,
    })
}

/// Number of consecutive sign flips of the price error that triggers damping.
const ALTERNATION_LIMIT: usize = 4;

pub(crate) struct FixedPoint {
    pub gamma: f64,
    pub k: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

/// Price loop shared by the monolithic solver and the platform session.
/// `respond` maps the posted price (with its round number) to the droop vector.
pub(crate) fn run_fixed_point<F>(
    view: &FaultedView<'_>,
    omega_am: f64,
    cfg: &SolverConfig,
    n: usize,
    mut respond: F,
) -> Result<FixedPoint>
where
    F: FnMut(PriceState) -> Result<Vec<f64>>,
{
    let main = view.main();
    let mut price = PriceState {
        gamma: main.gamma_set.clamp(cfg.gamma0.unwrap_or_else(|| main.gamma_set.midpoint())),
        round: 0,
    };
    let mut k_prev = match &cfg.k0 {
        Some(k0) if k0.len() != n => return Err(Error::DroopLength { expected: n, got: k0.len() }),
        Some(k0) => k0.clone(),
        None => vec![0.0; n],
    };

    let a_floor = main.a_min / 64.0;
    let mut damping = 1.0;
    let mut last_sign = 0.0;
    let mut flips = 0;
    let mut prev_e_gamma = 0.0f64;
    let mut trace = Vec::new();

    for t in 1..=cfg.max_iters {
        let k = respond(PriceState { gamma: price.gamma, round: t })?;
        if k.len() != n {
            return Err(Error::DroopLength { expected: n, got: k.len() });
        }
        let k_sum: f64 = k.iter().sum();
        let omega_hat = steady_frequency(view, &k)?;
        let deviation = price_error(omega_am, omega_hat);
        let a = (marginal_response(main, deviation, k_sum) * damping).max(a_floor);
        let next = price_step(price, deviation, a, main.gamma_set)?;

        let e_gamma = next.gamma - price.gamma;
        let max_e_k = k.iter().zip(&k_prev).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        trace.push(TraceRow { round: t, gamma: next.gamma, k: k.clone(), omega_hat, e_gamma, max_e_k });

        // distance to the fixed point, estimated from the observed contraction ratio
        let ratio = if prev_e_gamma != 0.0 { e_gamma.abs() / prev_e_gamma.abs() } else { 0.0 };
        let remaining = if e_gamma.abs() < 1e-3 * cfg.eps_gamma {
            e_gamma.abs()
        } else if ratio < 1.0 {
            e_gamma.abs() * (ratio / (1.0 - ratio)).max(1.0)
        } else {
            f64::INFINITY
        };
        prev_e_gamma = e_gamma;
        // a price pinned at a gamma_set endpoint stops moving without clearing
        let unclamped_step = (a * deviation).abs();
        if remaining < cfg.eps_gamma && max_e_k < cfg.eps_k && unclamped_step < cfg.eps_gamma {
            return Ok(FixedPoint { gamma: next.gamma, k, iterations: t, trace, converged: true });
        }

        let sign = e_gamma.signum();
        if e_gamma != 0.0 && last_sign != 0.0 && sign != last_sign {
            flips += 1;
            if flips >= ALTERNATION_LIMIT {
                damping *= 0.5;
                flips = 0;
            }
        } else {
            flips = 0;
        }
        if e_gamma != 0.0 {
            last_sign = sign;
        }

        price = next;
        k_prev = k;
    }

    Ok(FixedPoint { gamma: price.gamma, k: k_prev, iterations: cfg.max_iters, trace, converged: false })
}

/// Runs the fixed-point iteration for one fault.
pub fn seek_equilibrium(
    view: &FaultedView<'_>,
    omega_am: f64,
    cfg: &SolverConfig,
) -> Result<EquilibriumResult> {
    cfg.validate()?;
    let inst = GameInstance::new(view, omega_am)?;
    let n = inst.len();
    let ids = &inst.ad_ids;

    if !(inst.required > 0.0) {
        let gamma = view.main().gamma_set.clamp(0.0);
        return finish(view, ids, omega_am, gamma, vec![0.0; n], 0, Vec::new(), EquilibriumStatus::NoSupportNeeded, None);
    }
    if inst.required > inst.upper_sum() {
        let report = saturation_report(&inst)?;
        let k = inst.bounds.iter().map(|b| b.hi).collect();
        let gamma = report.gamma_minimal;
        return finish(view, ids, omega_am, gamma, k, 0, Vec::new(), EquilibriumStatus::Saturated, Some(report));
    }

    let fp = run_fixed_point(view, omega_am, cfg, n, |price| Ok(inst.best_responses(price.gamma)))?;
    let status = if fp.converged { EquilibriumStatus::Converged } else { EquilibriumStatus::MaxIterations };
    finish(view, ids, omega_am, fp.gamma, fp.k, fp.iterations, fp.trace, status, None)
}

/// Closed-form equilibrium `k_i = W / (u_i * sum(1/u))`, `gamma = 2W / sum(1/u)`;
/// only valid when every `k_i` lands strictly inside its bounds.
pub fn analytic_equilibrium(view: &FaultedView<'_>, omega_am: f64) -> Result<EquilibriumResult> {
    let inst = GameInstance::new(view, omega_am)?;
    if let Some(i) = inst.curvatures.iter().position(|u| !(*u > 0.0)) {
        return Err(Error::DegenerateCurvature(inst.ad_ids[i].clone()));
    }
    let inv_sum: f64 = inst.curvatures.iter().map(|u| 1.0 / u).sum();
    let w = inst.required;
    let k: Vec<f64> = inst.curvatures.iter().map(|u| w / (u * inv_sum)).collect();
    for (i, (&ki, b)) in k.iter().zip(&inst.bounds).enumerate() {
        if !(b.lo < ki && ki < b.hi) {
            return Err(Error::NotInterior { id: inst.ad_ids[i].clone(), k: ki, lo: b.lo, hi: b.hi });
        }
    }
    let gamma = 2.0 * w / inv_sum;
    finish(view, &inst.ad_ids, omega_am, gamma, k, 0, Vec::new(), EquilibriumStatus::Converged, None)
}

pub(crate) fn saturation_report(inst: &GameInstance) -> Result<SaturationReport> {
    let capacity = inst.upper_sum();
    if inst.required < capacity {
        return Err(Error::NotSaturated { required: inst.required, capacity });
    }
    let gamma_minimal = inst
        .curvatures
        .iter()
        .zip(&inst.bounds)
        .map(|(u, b)| 2.0 * u * b.hi)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SaturationReport {
        saturated: inst.ad_ids.clone(),
        gamma_minimal,
        uncovered_imbalance: (inst.required - capacity) * inst.omega_am.abs(),
    })
}

/// Minimal price and residual imbalance once every link is at its upper bound.
pub fn saturate_price(view: &FaultedView<'_>, omega_am: f64) -> Result<SaturationReport> {
    saturation_report(&GameInstance::new(view, omega_am)?)
}

/// Equilibria for `steps` evenly spaced expected deviations from `from` to
/// `to` inclusive; a single step evaluates `from` only.
pub fn sweep_omega(
    view: &FaultedView<'_>,
    from: f64,
    to: f64,
    steps: usize,
    cfg: &SolverConfig,
) -> Result<Vec<EquilibriumResult>> {
    if steps == 0 {
        return Err(Error::invariant("sweep needs at least one step"));
    }
    let dw = if steps > 1 { (to - from) / (steps - 1) as f64 } else { 0.0 };
    (0..steps).map(|i| seek_equilibrium(view, from + dw * i as f64, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{apply_fault, FaultScenario};
    use approx::assert_relative_eq;

    const OMEGA: f64 = -0.2;

    #[test]
    fn f1_matches_reference_row() {
        let cfg = fixtures::case_study();
        let view = apply_fault(&cfg.system, cfg.fault("F1").unwrap()).unwrap();
        let r = seek_equilibrium(&view, OMEGA, &SolverConfig::default().with_gamma0(5.0)).unwrap();
        assert_eq!(r.status, EquilibriumStatus::Converged);
        assert_relative_eq!(r.gamma_star, 2.25, max_relative = 5e-3);
        for (k, p) in r.k_star.iter().zip([162.88, 179.38, 188.55, 174.18]) {
            assert_relative_eq!(*k, p, max_relative = 5e-3);
        }
        assert_relative_eq!(r.reward_star, 1589.17, max_relative = 5e-3);
        assert_relative_eq!(r.reward_star, r.gamma_star * r.droop_sum(), max_relative = 1e-12);
        assert!((r.omega_hat - OMEGA).abs() < 1e-9);
    }

    #[test]
    fn analytic_examples() {
        let cfg = fixtures::case_study();
        let f1 = apply_fault(&cfg.system, cfg.fault("F1").unwrap()).unwrap();
        let a = analytic_equilibrium(&f1, OMEGA).unwrap();
        assert_relative_eq!(a.gamma_star, 2.0 * 705.0 / 625.5050800749963, max_relative = 1e-12);
        assert_relative_eq!(a.k_star[0], 162.882, max_relative = 1e-5);
        let f8 = apply_fault(&cfg.system, cfg.fault("F8").unwrap()).unwrap();
        let a8 = analytic_equilibrium(&f8, OMEGA).unwrap();
        assert_relative_eq!(a8.gamma_star, 4.812, max_relative = 1e-4);
        assert_relative_eq!(a8.droop_sum(), 1505.0, max_relative = 1e-12);

        let big = apply_fault(&cfg.system, &FaultScenario::new("big", 600.0)).unwrap();
        assert!(matches!(analytic_equilibrium(&big, OMEGA), Err(Error::NotInterior { .. })));
    }

    #[test]
    fn symmetric_system_splits_evenly() {
        let mut sys = fixtures::case_study().system;
        let first = sys.adjacents[0].clone();
        for (i, ad) in sys.adjacents.iter_mut().enumerate() {
            *ad = first.clone();
            ad.id = format!("S{i}");
            ad.lcc.id = format!("L{i}");
        }
        let view = apply_fault(&sys, &FaultScenario::new("sym", 300.0)).unwrap();
        let a = analytic_equilibrium(&view, OMEGA).unwrap();
        let w = 300.0 / 0.2 - 995.0;
        for k in &a.k_star {
            assert_relative_eq!(*k, w / 4.0, max_relative = 1e-12);
        }
        let s = seek_equilibrium(&view, OMEGA, &SolverConfig::default()).unwrap();
        for (x, y) in s.k_star.iter().zip(&a.k_star) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn saturation_examples() {
        let cfg = fixtures::case_study();
        let huge = apply_fault(&cfg.system, &FaultScenario::new("huge", 2000.0)).unwrap();
        let rep = saturate_price(&huge, OMEGA).unwrap();
        assert_relative_eq!(rep.uncovered_imbalance, (9005.0 - 1605.0) * 0.2, max_relative = 1e-12);
        assert_relative_eq!(rep.gamma_minimal, 5.258947368421054, max_relative = 1e-12);
        assert_eq!(rep.saturated.len(), 4);

        let r = seek_equilibrium(&huge, OMEGA, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, EquilibriumStatus::Saturated);
        assert_eq!(r.k_star, vec![380.0, 415.0, 415.0, 395.0]);
        assert_eq!(r.gamma_star, rep.gamma_minimal);

        // W == capacity exactly: 0.2 * (1605 + 995) = 520 MW
        let edge = apply_fault(&cfg.system, &FaultScenario::new("edge", 520.0)).unwrap();
        let rep = saturate_price(&edge, OMEGA).unwrap();
        assert!(rep.uncovered_imbalance.abs() < 1e-9);

        let f1 = apply_fault(&cfg.system, cfg.fault("F1").unwrap()).unwrap();
        assert!(matches!(saturate_price(&f1, OMEGA), Err(Error::NotSaturated { .. })));
    }

    #[test]
    fn no_support_needed() {
        let cfg = fixtures::case_study();
        let calm = apply_fault(&cfg.system, &FaultScenario::new("calm", 100.0)).unwrap();
        let r = seek_equilibrium(&calm, OMEGA, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, EquilibriumStatus::NoSupportNeeded);
        assert_eq!(r.k_star, vec![0.0; 4]);
        assert_eq!(r.reward_star, 0.0);
    }

    #[test]
    fn trace_converges_monotonically_near_the_end() {
        let cfg = fixtures::case_study();
        let view = apply_fault(&cfg.system, cfg.fault("F2").unwrap()).unwrap();
        let r = seek_equilibrium(&view, OMEGA, &SolverConfig::default().with_gamma0(0.0)).unwrap();
        assert!(r.is_converged());
        let errs: Vec<f64> = r.trace.iter().map(|t| t.e_gamma.abs()).collect();
        let tail = &errs[errs.len() / 2..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0]), "{tail:?}");
    }

    #[test]
    fn clamped_price_does_not_fake_convergence() {
        let mut cfg = fixtures::case_study();
        cfg.system.main.gamma_set.hi = 1.0;
        let view = apply_fault(&cfg.system, cfg.fault("F1").unwrap()).unwrap();
        let solver = SolverConfig { max_iters: 200, ..SolverConfig::default() };
        let r = seek_equilibrium(&view, OMEGA, &solver).unwrap();
        assert_eq!(r.status, EquilibriumStatus::MaxIterations);
        assert_eq!(r.iterations, 200);
    }

    #[test]
    fn damping_tames_an_aggressive_response() {
        // a small imbalance makes a = 20 overshoot: contraction factor ~ a*12.5/dP
        let mut cfg = fixtures::case_study();
        cfg.system.main.a_min = 200.0;
        cfg.system.main.a_max = 400.0;
        let view = apply_fault(&cfg.system, &FaultScenario::new("small", 260.0)).unwrap();
        let r = seek_equilibrium(&view, OMEGA, &SolverConfig::default()).unwrap();
        assert!(r.is_converged(), "{:?} after {}", r.status, r.iterations);
        let a = analytic_equilibrium(&view, OMEGA).unwrap();
        assert!((r.gamma_star - a.gamma_star).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = fixtures::case_study();
        let view = apply_fault(&cfg.system, cfg.fault("F1").unwrap()).unwrap();
        assert!(matches!(
            seek_equilibrium(&view, 0.0, &SolverConfig::default()),
            Err(Error::ZeroFrequencyDeviation)
        ));
        let bad_k0 = SolverConfig::default().with_k0(vec![1.0; 3]);
        assert!(matches!(seek_equilibrium(&view, OMEGA, &bad_k0), Err(Error::DroopLength { .. })));
        let bad_eps = SolverConfig { eps_gamma: 0.0, ..SolverConfig::default() };
        assert!(seek_equilibrium(&view, OMEGA, &bad_eps).is_err());
    }
}
