//! Both players' problems in the incentive game: the adjacent systems' droop
//! best responses, the main system's virtual-price update, and the
//! disutility evaluators for the original and price-decoupled games.

use crate::error::{Error, Result};
use crate::model::{
    derive_droop_bounds, AdjacentSystem, FaultedView, Interval, LccParams, MainSystem,
};

/// Aggregate generation-cost curvature of an adjacent system as a function of
/// its link droop: cost = `u * k^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdCurvature {
    pub ad_id: String,
    pub u: f64,
}

impl AdCurvature {
    /// `u == 0` only happens at `omega_am == 0`, where the game is ill-posed.
    pub fn is_degenerate(&self) -> bool {
        self.u <= 0.0
    }
}

/// `u = omega_am^2 * sum(alpha_h k_h^2 / 2) / (sum k_h)^2`.
pub fn ad_curvature(ad: &AdjacentSystem, omega_am: f64) -> Result<AdCurvature> {
    let k_sum = ad.generator_droop_sum();
    if !(k_sum > 0.0) {
        return Err(Error::ZeroGeneratorDroop(ad.id.clone()));
    }
    let weighted: f64 = ad.generators.iter().map(|g| 0.5 * g.alpha * g.k_g * g.k_g).sum();
    Ok(AdCurvature {
        ad_id: ad.id.clone(),
        u: omega_am * omega_am * weighted / (k_sum * k_sum),
    })
}

/// Per-fault data shared by the solvers: every adjacent system's curvature
/// and feasible droop interval plus the total droop demand.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    pub ad_ids: Vec<String>,
    pub curvatures: Vec<f64>,
    pub bounds: Vec<Interval>,
    /// Required total HVDC droop `W` (MW/Hz).
    pub required: f64,
    pub omega_am: f64,
}

impl GameInstance {
    pub fn new(view: &FaultedView<'_>, omega_am: f64) -> Result<Self> {
        let required = required_total_droop(view, omega_am)?.value;
        let mut ad_ids = Vec::new();
        let mut curvatures = Vec::new();
        let mut bounds = Vec::new();
        for ad in view.adjacents() {
            ad_ids.push(ad.id.clone());
            curvatures.push(ad_curvature(ad, omega_am)?.u);
            bounds.push(derive_droop_bounds(ad, omega_am)?);
        }
        Ok(Self { ad_ids, curvatures, bounds, required, omega_am })
    }

    pub fn len(&self) -> usize {
        self.ad_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ad_ids.is_empty()
    }

    pub fn curvature(&self, i: usize) -> AdCurvature {
        AdCurvature { ad_id: self.ad_ids[i].clone(), u: self.curvatures[i] }
    }

    pub fn upper_sum(&self) -> f64 {
        self.bounds.iter().map(|b| b.hi).sum()
    }

    pub fn lower_sum(&self) -> f64 {
        self.bounds.iter().map(|b| b.lo).sum()
    }

    /// Every adjacent system's best response to `gamma`.
    pub fn best_responses(&self, gamma: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| best_response_droop(gamma, &self.curvature(i), self.bounds[i]))
            .collect()
    }
}

/// Total HVDC droop needed to hold the main grid at `omega_am`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequiredDroop {
    /// MW/Hz; zero or negative when the main-grid generators suffice.
    pub value: f64,
}

impl RequiredDroop {
    pub fn support_needed(&self) -> bool {
        self.value > 0.0
    }
}

/// `W = -delta_p / omega_am - sum(k_G)` over the generators still online.
pub fn required_total_droop(view: &FaultedView<'_>, omega_am: f64) -> Result<RequiredDroop> {
    if omega_am == 0.0 || !omega_am.is_finite() {
        return Err(Error::ZeroFrequencyDeviation);
    }
    Ok(RequiredDroop { value: -view.delta_p() / omega_am - view.am_droop_sum() })
}

/// Minimizer of `-gamma k + u k^2` over `bounds`.
pub fn best_response_droop(gamma: f64, curvature: &AdCurvature, bounds: Interval) -> f64 {
    if curvature.is_degenerate() {
        return if gamma > 0.0 { bounds.hi } else { bounds.lo };
    }
    bounds.clamp(gamma / (2.0 * curvature.u))
}

/// Steady-state main-grid deviation for HVDC droops `k_d`.
pub fn steady_frequency(view: &FaultedView<'_>, k_d: &[f64]) -> Result<f64> {
    let denom = k_d.iter().sum::<f64>() + view.am_droop_sum();
    if !(denom > 0.0) {
        return Err(Error::NonPositiveDroop(denom));
    }
    if view.delta_p() == 0.0 {
        return Ok(0.0);
    }
    Ok(-view.delta_p() / denom)
}

/// Virtual price posted by the main system in a given round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceState {
    pub gamma: f64,
    pub round: usize,
}

/// Marginal response coefficient that minimizes the main system's payment
/// `sum(k) * gamma` for the observed frequency error. Ties go to `a_min`.
pub fn marginal_response(main: &MainSystem, deviation: f64, k_sum: f64) -> f64 {
    if k_sum > 0.0 && deviation < 0.0 {
        main.a_max
    } else {
        main.a_min
    }
}

/// Frequency error that drives the price: `omega_am - omega_hat` for a
/// shortage, mirrored for a redundancy so that a larger excursion than
/// expected always raises the price.
pub fn price_error(omega_am: f64, omega_hat: f64) -> f64 {
    if omega_am > 0.0 {
        omega_hat - omega_am
    } else {
        omega_am - omega_hat
    }
}

/// Linear price response `gamma = a (omega_am - omega_hat) + gamma_prev`,
/// projected onto the admissible price interval.
pub fn price_update(
    prev: PriceState,
    omega_am: f64,
    omega_hat: f64,
    main: &MainSystem,
    k_sum: f64,
) -> Result<PriceState> {
    let deviation = price_error(omega_am, omega_hat);
    let a = marginal_response(main, deviation, k_sum);
    price_step(prev, deviation, a, main.gamma_set)
}

pub(crate) fn price_step(
    prev: PriceState,
    deviation: f64,
    a: f64,
    gamma_set: Interval,
) -> Result<PriceState> {
    if !(gamma_set.lo <= gamma_set.hi) {
        return Err(Error::EmptyGammaSet { lo: gamma_set.lo, hi: gamma_set.hi });
    }
    Ok(PriceState {
        gamma: gamma_set.clamp(a * deviation + prev.gamma),
        round: prev.round + 1,
    })
}

/// Price-decoupled adjacent disutility `-gamma k + u k^2`.
pub fn eval_modified_ad_disutility(gamma: f64, k: f64, curvature: &AdCurvature) -> f64 {
    -gamma * k + curvature.u * k * k
}

/// Generator output changes inside `ad` when its link runs droop `k`.
fn ad_generation_cost(ad: &AdjacentSystem, k: f64, omega_am: f64) -> f64 {
    let omega_ad = ad.frequency_deviation(k, omega_am);
    ad.generators
        .iter()
        .map(|g| {
            let dp = -g.k_g * omega_ad;
            0.5 * g.alpha * dp * dp
        })
        .sum()
}

fn share_denominator(k_d: &[f64], i: usize) -> Result<f64> {
    if i >= k_d.len() {
        return Err(Error::DroopLength { expected: i + 1, got: k_d.len() });
    }
    let total: f64 = k_d.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NonPositiveDroop(total));
    }
    Ok(total)
}

/// Original disutility of adjacent system `i`: minus its proportional share
/// of `reward` plus its generators' regulation cost.
pub fn eval_original_ad_disutility(
    reward: f64,
    k_d: &[f64],
    i: usize,
    ad: &AdjacentSystem,
    omega_am: f64,
) -> Result<f64> {
    let total = share_denominator(k_d, i)?;
    let k = k_d[i];
    Ok(-(k / total) * reward + ad_generation_cost(ad, k, omega_am))
}

/// Partial derivative of [`eval_original_ad_disutility`] with respect to
/// `k_d[i]` at fixed `reward`.
pub fn original_ad_gradient(
    reward: f64,
    k_d: &[f64],
    i: usize,
    ad: &AdjacentSystem,
    omega_am: f64,
) -> Result<f64> {
    let total = share_denominator(k_d, i)?;
    let u = ad_curvature(ad, omega_am)?.u;
    let k = k_d[i];
    Ok(-reward * (total - k) / (total * total) + 2.0 * u * k)
}

/// Main-system disutility: the reward paid plus online generators' regulation cost.
pub fn eval_am_disutility(reward: f64, view: &FaultedView<'_>, omega_am: f64) -> f64 {
    let cost: f64 = view
        .active_generators()
        .map(|g| {
            let dp = -g.k_g * omega_am;
            0.5 * g.alpha * dp * dp
        })
        .sum();
    reward + cost
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOrder {
    /// Signed power order (MW); negative for receiving-end links.
    pub mw: f64,
    pub within_limits: bool,
}

/// Droop-controlled link power order `P_nom - k * omega`.
pub fn lcc_power_order(lcc: &LccParams, k: f64, omega: f64) -> PowerOrder {
    let mw = lcc.sign() * lcc.p_nom - k * omega;
    let lim = lcc.signed_limits();
    PowerOrder { mw, within_limits: lim.lo - 1e-9 <= mw && mw <= lim.hi + 1e-9 }
}
