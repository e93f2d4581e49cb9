//! Domain types for a multi-infeed hybrid AC/DC system: the main AC grid, its
//! adjacent grids with their LCC-HVDC links, and the emergency fault set.
//!
//! Units follow the tabulated case-study data: MW, Hz, MW/Hz and p.u.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::invariant(format!("interval [{lo}, {hi}] has lo > hi")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub id: String,
    /// Nominal output (MW).
    pub p_nom: f64,
    pub p_max: f64,
    pub p_min: f64,
    /// Quadratic cost coefficient (p.u./MW^2).
    pub alpha: f64,
    /// Primary droop coefficient (MW/Hz).
    pub k_g: f64,
}

impl GeneratorParams {
    fn validate(&self) -> Result<()> {
        if !(self.p_min <= self.p_nom && self.p_nom <= self.p_max) {
            return Err(Error::invariant(format!(
                "generator `{}`: p_min <= p_nom <= p_max required (got {}, {}, {})",
                self.id, self.p_min, self.p_nom, self.p_max
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invariant(format!("generator `{}`: alpha > 0 required", self.id)));
        }
        if !(self.k_g >= 0.0) {
            return Err(Error::invariant(format!("generator `{}`: k_g >= 0 required", self.id)));
        }
        Ok(())
    }

    /// Headroom for moving output in `direction` (MW, nonnegative).
    pub fn headroom(&self, direction: SupportDirection) -> f64 {
        match direction {
            SupportDirection::Raise => self.p_max - self.p_nom,
            SupportDirection::Lower => self.p_nom - self.p_min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LccKind {
    SendingEnd,
    ReceivingEnd,
}

/// LCC-HVDC link. Powers are stored as magnitudes; `kind` carries the sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LccParams {
    pub id: String,
    pub kind: LccKind,
    pub p_nom: f64,
    pub p_max: f64,
    pub p_min: f64,
}

impl LccParams {
    /// +1 for a sending-end link (imports into the main grid), -1 for a receiving-end link.
    pub fn sign(&self) -> f64 {
        match self.kind {
            LccKind::SendingEnd => 1.0,
            LccKind::ReceivingEnd => -1.0,
        }
    }

    /// MW that the link can shift toward the main grid in `direction` before
    /// hitting a power limit.
    pub fn support_headroom(&self, direction: SupportDirection) -> f64 {
        match (self.kind, direction) {
            (LccKind::SendingEnd, SupportDirection::Raise)
            | (LccKind::ReceivingEnd, SupportDirection::Lower) => self.p_max - self.p_nom,
            (LccKind::SendingEnd, SupportDirection::Lower)
            | (LccKind::ReceivingEnd, SupportDirection::Raise) => self.p_nom - self.p_min,
        }
    }

    /// Signed limits `[lo, hi]` of the power order.
    pub fn signed_limits(&self) -> Interval {
        match self.kind {
            LccKind::SendingEnd => Interval { lo: self.p_min, hi: self.p_max },
            LccKind::ReceivingEnd => Interval { lo: -self.p_max, hi: -self.p_min },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p_min <= self.p_nom && self.p_nom <= self.p_max) {
            return Err(Error::invariant(format!(
                "LCC `{}`: p_min <= p_nom <= p_max required (got {}, {}, {})",
                self.id, self.p_min, self.p_nom, self.p_max
            )));
        }
        Ok(())
    }
}

/// Direction in which the main grid needs power after a fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportDirection {
    /// Shortage: main-grid frequency falls (`omega_am < 0`), more power is needed.
    Raise,
    /// Redundancy: main-grid frequency rises (`omega_am > 0`).
    Lower,
}

impl SupportDirection {
    pub fn from_omega(omega_am: f64) -> Self {
        if omega_am < 0.0 {
            SupportDirection::Raise
        } else {
            SupportDirection::Lower
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjacentSystem {
    pub id: String,
    pub lcc: LccParams,
    pub generators: Vec<GeneratorParams>,
    pub omega_max: f64,
    pub omega_min: f64,
}

impl AdjacentSystem {
    /// Sum of generator droop coefficients inside this system (MW/Hz).
    pub fn generator_droop_sum(&self) -> f64 {
        self.generators.iter().map(|g| g.k_g).sum()
    }

    /// Magnitude of the frequency limit the adjacent grid may reach while supporting.
    pub fn frequency_limit(&self, direction: SupportDirection) -> f64 {
        match direction {
            SupportDirection::Raise => -self.omega_min,
            SupportDirection::Lower => self.omega_max,
        }
    }

    /// Frequency deviation of this system when its link runs droop `k` at `omega_am`.
    pub fn frequency_deviation(&self, k: f64, omega_am: f64) -> f64 {
        k * omega_am / self.generator_droop_sum()
    }

    fn validate(&self) -> Result<()> {
        if self.generators.is_empty() {
            return Err(Error::invariant(format!(
                "adjacent system `{}`: at least one generator",
                self.id
            )));
        }
        if !(self.omega_min < 0.0 && 0.0 < self.omega_max) {
            return Err(Error::invariant(format!(
                "adjacent system `{}`: omega_min < 0 < omega_max required",
                self.id
            )));
        }
        self.lcc.validate()?;
        for g in &self.generators {
            g.validate()?;
        }
        if !(self.generator_droop_sum() > 0.0) {
            return Err(Error::invariant(format!(
                "adjacent system `{}`: generator droop sum must be positive",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainSystem {
    pub generators: Vec<GeneratorParams>,
    pub omega_max: f64,
    pub omega_min: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub gamma_set: Interval,
}

impl MainSystem {
    pub fn droop_sum(&self) -> f64 {
        self.generators.iter().map(|g| g.k_g).sum()
    }

    pub fn generator(&self, id: &str) -> Option<&GeneratorParams> {
        self.generators.iter().find(|g| g.id == id)
    }

    fn validate(&self) -> Result<()> {
        if self.generators.is_empty() {
            return Err(Error::invariant("main system: at least one generator"));
        }
        let mut seen = HashSet::new();
        for g in &self.generators {
            g.validate()?;
            if !seen.insert(g.id.as_str()) {
                return Err(Error::invariant(format!("duplicate main generator id `{}`", g.id)));
            }
        }
        if !(self.omega_min < 0.0 && 0.0 < self.omega_max) {
            return Err(Error::invariant("main system: omega_min < 0 < omega_max required"));
        }
        if !(0.0 < self.a_min && self.a_min <= self.a_max) {
            return Err(Error::invariant("incentive: 0 < a_min <= a_max required"));
        }
        if !(self.reward_min <= self.reward_max) {
            return Err(Error::invariant("incentive: reward_min <= reward_max required"));
        }
        if !(self.gamma_set.lo <= self.gamma_set.hi) {
            return Err(Error::EmptyGammaSet { lo: self.gamma_set.lo, hi: self.gamma_set.hi });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub main: MainSystem,
    pub adjacents: Vec<AdjacentSystem>,
}

impl SystemModel {
    pub fn new(main: MainSystem, adjacents: Vec<AdjacentSystem>) -> Result<Self> {
        let model = Self { main, adjacents };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.main.validate()?;
        if self.adjacents.is_empty() {
            return Err(Error::invariant("at least one adjacent system"));
        }
        let mut ids = HashSet::new();
        let mut links = HashSet::new();
        for ad in &self.adjacents {
            ad.validate()?;
            if !ids.insert(ad.id.as_str()) {
                return Err(Error::invariant(format!("duplicate adjacent system id `{}`", ad.id)));
            }
            if !links.insert(ad.lcc.id.as_str()) {
                return Err(Error::invariant(format!(
                    "LCC `{}` is attached to more than one adjacent system",
                    ad.lcc.id
                )));
            }
        }
        Ok(())
    }

    pub fn adjacent(&self, id: &str) -> Option<&AdjacentSystem> {
        self.adjacents.iter().find(|a| a.id == id)
    }

    pub fn adjacent_ids(&self) -> Vec<String> {
        self.adjacents.iter().map(|a| a.id.clone()).collect()
    }

    pub fn validate_fault(&self, fault: &FaultScenario) -> Result<()> {
        if !(fault.ratio >= 0.0) {
            return Err(Error::invariant(format!("fault `{}`: ratio >= 0 required", fault.id)));
        }
        if !fault.delta_p.is_finite() {
            return Err(Error::invariant(format!("fault `{}`: delta_p must be finite", fault.id)));
        }
        if let Some(g) = &fault.tripped_generator {
            if self.main.generator(g).is_none() {
                return Err(Error::UnknownGenerator(g.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultScenario {
    pub id: String,
    /// Power imbalance (MW); positive for shortage, negative for redundancy.
    pub delta_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tripped_generator: Option<String>,
    #[serde(default)]
    pub ratio: f64,
}

impl FaultScenario {
    pub fn new(id: impl Into<String>, delta_p: f64) -> Self {
        Self { id: id.into(), delta_p, tripped_generator: None, ratio: 0.0 }
    }

    pub fn tripping(mut self, generator: impl Into<String>) -> Self {
        self.tripped_generator = Some(generator.into());
        self
    }
}

/// Tolerance on the raw ratio sum accepted (and then normalized) at load time.
pub const RATIO_LOAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSet {
    pub faults: Vec<FaultScenario>,
    pub cycle: f64,
}

impl FaultSet {
    /// Builds a fault set, normalizing ratios that already sum to one within
    /// [`RATIO_LOAD_TOLERANCE`].
    pub fn new(mut faults: Vec<FaultScenario>, cycle: f64) -> Result<Self> {
        if faults.is_empty() {
            return Err(Error::EmptyFaultSet);
        }
        if let Some(f) = faults.iter().find(|f| !(f.ratio >= 0.0)) {
            return Err(Error::invariant(format!("fault `{}`: ratio >= 0 required", f.id)));
        }
        let total: f64 = faults.iter().map(|f| f.ratio).sum();
        if (total - 1.0).abs() > RATIO_LOAD_TOLERANCE {
            return Err(Error::invariant(format!("fault ratios must sum to 1 (got {total})")));
        }
        for f in &mut faults {
            f.ratio /= total;
        }
        Ok(Self { faults, cycle })
    }

    /// Same faults with equal ratios.
    pub fn uniform(mut faults: Vec<FaultScenario>, cycle: f64) -> Result<Self> {
        let n = faults.len() as f64;
        for f in &mut faults {
            f.ratio = 1.0 / n;
        }
        Self::new(faults, cycle)
    }

    pub fn get(&self, id: &str) -> Option<&FaultScenario> {
        self.faults.iter().find(|f| f.id == id)
    }
}

/// Read-only view of a model with one fault applied.
#[derive(Debug, Clone)]
pub struct FaultedView<'a> {
    pub model: &'a SystemModel,
    pub fault: FaultScenario,
    am_droop_sum: f64,
}

impl<'a> FaultedView<'a> {
    pub fn delta_p(&self) -> f64 {
        self.fault.delta_p
    }

    /// Droop of the main-grid generators still online (MW/Hz).
    pub fn am_droop_sum(&self) -> f64 {
        self.am_droop_sum
    }

    pub fn active_generators(&self) -> impl Iterator<Item = &'a GeneratorParams> + '_ {
        let tripped = self.fault.tripped_generator.as_deref();
        self.model.main.generators.iter().filter(move |g| Some(g.id.as_str()) != tripped)
    }

    pub fn adjacents(&self) -> &'a [AdjacentSystem] {
        &self.model.adjacents
    }

    pub fn main(&self) -> &'a MainSystem {
        &self.model.main
    }
}

/// Applies `fault` to `model`; the tripped generator (if any) contributes no droop.
pub fn apply_fault<'a>(model: &'a SystemModel, fault: &FaultScenario) -> Result<FaultedView<'a>> {
    model.validate_fault(fault)?;
    let tripped = fault
        .tripped_generator
        .as_deref()
        .and_then(|id| model.main.generator(id))
        .map_or(0.0, |g| g.k_g);
    Ok(FaultedView {
        model,
        fault: fault.clone(),
        am_droop_sum: model.main.droop_sum() - tripped,
    })
}

/// The three upper limits on an adjacent system's droop coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroopLimits {
    /// From the LCC power-order limit.
    pub lcc: f64,
    /// From the adjacent grid's frequency security limit.
    pub frequency: f64,
    /// From the tightest generator output limit (infinite if no generator moves).
    pub generators: f64,
}

impl DroopLimits {
    pub fn upper(&self) -> f64 {
        self.lcc.min(self.frequency).min(self.generators)
    }
}

pub fn droop_limits(ad: &AdjacentSystem, omega_am: f64) -> Result<DroopLimits> {
    if omega_am == 0.0 || !omega_am.is_finite() {
        return Err(Error::ZeroFrequencyDeviation);
    }
    let k_sum = ad.generator_droop_sum();
    if !(k_sum > 0.0) {
        return Err(Error::ZeroGeneratorDroop(ad.id.clone()));
    }
    let w = omega_am.abs();
    let dir = SupportDirection::from_omega(omega_am);
    let generators = ad
        .generators
        .iter()
        .filter(|g| g.k_g > 0.0)
        .map(|g| g.headroom(dir) * k_sum / (w * g.k_g))
        .fold(f64::INFINITY, f64::min);
    Ok(DroopLimits {
        lcc: ad.lcc.support_headroom(dir) / w,
        frequency: k_sum * ad.frequency_limit(dir) / w,
        generators,
    })
}

/// Feasible droop interval of `ad` at main-grid deviation `omega_am`. The
/// lower end is zero (non-participation).
pub fn derive_droop_bounds(ad: &AdjacentSystem, omega_am: f64) -> Result<Interval> {
    let hi = droop_limits(ad, omega_am)?.upper();
    if hi < 0.0 || hi.is_nan() {
        return Err(Error::InfeasibleAdjacent { id: ad.id.clone(), hi });
    }
    Ok(Interval { lo: 0.0, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn model() -> SystemModel {
        fixtures::case_study().system
    }

    /// Direct check of the adjacent-system constraints for droop `k`.
    fn feasible(ad: &AdjacentSystem, k: f64, omega_am: f64) -> bool {
        let omega_ad = ad.frequency_deviation(k, omega_am);
        let support = -k * omega_am;
        let signed = ad.lcc.sign() * ad.lcc.p_nom + support;
        let lcc_ok = ad.lcc.signed_limits().contains(signed);
        let freq_ok = ad.omega_min <= omega_ad && omega_ad <= ad.omega_max;
        let gen_ok = ad.generators.iter().all(|g| {
            let p = g.p_nom - g.k_g * omega_ad;
            g.p_min <= p && p <= g.p_max
        });
        lcc_ok && freq_ok && gen_ok
    }

    fn scan_upper(ad: &AdjacentSystem, omega_am: f64) -> f64 {
        let step = 0.01;
        let mut k = 0.0;
        let mut last = f64::NAN;
        while k < 5000.0 {
            if feasible(ad, k, omega_am) {
                last = k;
            } else {
                break;
            }
            k += step;
        }
        last
    }

    #[test]
    fn droop_bounds_match_grid_scan() {
        let m = model();
        for (ad, expected) in m.adjacents.iter().zip([380.0, 415.0, 415.0, 395.0]) {
            let b = derive_droop_bounds(ad, -0.2).unwrap();
            assert_eq!(b.lo, 0.0);
            assert!((b.hi - expected).abs() < 1e-9, "{}: {}", ad.id, b.hi);
            assert!((scan_upper(ad, -0.2) - expected).abs() <= 0.011);
        }
    }

    #[test]
    fn ad1_binding_limit_is_frequency() {
        let m = model();
        let lim = droop_limits(&m.adjacents[0], -0.2).unwrap();
        assert!((lim.lcc - 525.0).abs() < 1e-9);
        assert!((lim.frequency - 380.0).abs() < 1e-9);
        assert!(lim.generators >= 1266.0);
        let lim4 = droop_limits(&m.adjacents[3], -0.2).unwrap();
        assert!((lim4.lcc - 500.0).abs() < 1e-9);
    }

    #[test]
    fn zero_omega_is_rejected() {
        let m = model();
        assert!(matches!(
            derive_droop_bounds(&m.adjacents[0], 0.0),
            Err(Error::ZeroFrequencyDeviation)
        ));
    }

    #[test]
    fn redundancy_bounds_use_mirrored_headroom() {
        let m = model();
        // SE link lowering: (645 - 550) / 0.2 = 475; frequency 380 still binds.
        let lim = droop_limits(&m.adjacents[0], 0.2).unwrap();
        assert!((lim.lcc - 475.0).abs() < 1e-9);
        for ad in &m.adjacents {
            let hi = derive_droop_bounds(ad, 0.3).unwrap().hi;
            assert!((scan_upper(ad, 0.3) - hi).abs() <= 0.011, "{}", ad.id);
        }
    }

    #[test]
    fn apply_fault_effective_droop() {
        let m = model();
        let f1 = FaultScenario::new("F1", 320.0).tripping("G1");
        assert_eq!(apply_fault(&m, &f1).unwrap().am_droop_sum(), 895.0);
        let none = FaultScenario::new("X", 100.0);
        assert_eq!(apply_fault(&m, &none).unwrap().am_droop_sum(), 995.0);
        let f8 = FaultScenario::new("F8", 470.0).tripping("G8");
        let view = apply_fault(&m, &f8).unwrap();
        assert_eq!(view.am_droop_sum(), 845.0);
        assert_eq!(view.active_generators().count(), 7);
        assert_eq!(m, model());
    }

    #[test]
    fn unknown_trip_is_rejected() {
        let m = model();
        let bad = FaultScenario::new("X", 100.0).tripping("G42");
        assert!(matches!(apply_fault(&m, &bad), Err(Error::UnknownGenerator(id)) if id == "G42"));
    }

    #[test]
    fn fault_set_normalizes_and_rejects() {
        let mut a = FaultScenario::new("A", 100.0);
        a.ratio = 0.5 + 4e-7;
        let mut b = FaultScenario::new("B", 300.0);
        b.ratio = 0.5;
        let set = FaultSet::new(vec![a.clone(), b.clone()], 1.0).unwrap();
        let s: f64 = set.faults.iter().map(|f| f.ratio).sum();
        assert!((s - 1.0).abs() < 1e-12);

        b.ratio = 0.3;
        assert!(matches!(FaultSet::new(vec![a, b], 1.0), Err(Error::Invariant { .. })));
        assert!(matches!(FaultSet::new(vec![], 1.0), Err(Error::EmptyFaultSet)));
    }

    #[test]
    fn generator_bound_violation_names_generator() {
        let mut m = model();
        m.adjacents[1].generators[2].p_min = 900.0;
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("G2_3"), "{err}");
    }

    #[test]
    fn empty_adjacents_rejected() {
        let mut m = model();
        m.adjacents.clear();
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("at least one adjacent system"));
    }
}
