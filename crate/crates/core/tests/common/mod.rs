//! Random well-posed systems shared by the integration test targets.
#![allow(dead_code)]

use droop_incentive::game::GameInstance;
use droop_incentive::model::{
    apply_fault, derive_droop_bounds, AdjacentSystem, FaultScenario, GeneratorParams, Interval, LccKind, LccParams,
    MainSystem, SystemModel,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
pub struct RandomCase {
    pub model: SystemModel,
    pub fault: FaultScenario,
    pub omega_am: f64,
}

impl RandomCase {
    pub fn instance(&self) -> GameInstance {
        let view = apply_fault(&self.model, &self.fault).unwrap();
        GameInstance::new(&view, self.omega_am).unwrap()
    }
}

fn generator(prefix: String) -> impl Strategy<Value = GeneratorParams> {
    (100.0..600.0f64, 40.0..250.0f64, 40.0..250.0f64, 0.3..1.5f64, 40.0..250.0f64).prop_map(
        move |(p_nom, up, down, alpha, k_g)| GeneratorParams {
            id: prefix.clone(),
            p_nom,
            p_max: p_nom + up,
            p_min: (p_nom - down).max(0.0),
            alpha,
            k_g,
        },
    )
}

fn adjacent(index: usize) -> impl Strategy<Value = AdjacentSystem> {
    let gens = (1..=4usize).prop_flat_map(move |m| {
        (0..m).map(|h| generator(format!("G{index}_{h}"))).collect::<Vec<_>>()
    });
    (gens, 300.0..900.0f64, 40.0..200.0f64, 0.15..0.5f64, any::<bool>()).prop_map(
        move |(generators, p_nom, headroom, f_lim, sending)| {
            let kind = if sending { LccKind::SendingEnd } else { LccKind::ReceivingEnd };
            AdjacentSystem {
                id: format!("AD{}", index + 1),
                lcc: LccParams {
                    id: format!("LCC{}", index + 1),
                    kind,
                    p_nom,
                    p_max: p_nom + headroom,
                    p_min: (p_nom - headroom).max(0.0),
                },
                generators,
                omega_max: f_lim,
                omega_min: -f_lim,
            }
        },
    )
}

/// 2 to 6 adjacent systems, a shortage fault whose required droop is a
/// fraction `load` of the total capacity, and price-response gains scaled so
/// the price loop has a gain between 0.2 and 1.5 at the equilibrium.
pub fn random_case() -> impl Strategy<Value = RandomCase> {
    let ads = (2..=6usize).prop_flat_map(|n| (0..n).map(adjacent).collect::<Vec<_>>());
    let main_gens = proptest::collection::vec(60.0..200.0f64, 3..7);
    (ads, main_gens, 0.05..0.95f64, -0.3..-0.1f64, 0.2..1.5f64, 0.3..1.0f64).prop_map(
        |(adjacents, main_k, load, omega_am, gain, ratio)| build(adjacents, main_k, load, omega_am, gain, ratio),
    )
}

fn build(adjacents: Vec<AdjacentSystem>, main_k: Vec<f64>, load: f64, omega_am: f64, gain: f64, ratio: f64) -> RandomCase {
    let generators: Vec<GeneratorParams> = main_k
        .iter()
        .enumerate()
        .map(|(i, &k_g)| GeneratorParams {
            id: format!("G{}", i + 1),
            p_nom: 300.0,
            p_max: 500.0,
            p_min: 200.0,
            alpha: 1.0,
            k_g,
        })
        .collect();
    let k_main: f64 = main_k.iter().sum();
    let bounds: Vec<Interval> = adjacents.iter().map(|ad| derive_droop_bounds(ad, omega_am).unwrap()).collect();
    let capacity: f64 = bounds.iter().map(|b| b.hi).sum();
    let w = load * capacity;
    let delta_p = (w + k_main) * omega_am.abs();

    let curv: Vec<f64> = adjacents
        .iter()
        .map(|ad| droop_incentive::game::ad_curvature(ad, omega_am).unwrap().u)
        .collect();
    let inv: f64 = curv.iter().map(|u| 1.0 / u).sum();
    let gamma_eq = 2.0 * w / inv;
    let gamma_cap = curv.iter().zip(&bounds).map(|(u, b)| 2.0 * u * b.hi).fold(0.0, f64::max);
    // d omega_hat / d gamma near the equilibrium, treating all links as interior
    let slope = delta_p / (k_main + w).powi(2) * 0.5 * inv;
    let a_max = gain / slope;

    let main = MainSystem {
        generators,
        omega_max: 0.5,
        omega_min: -0.5,
        reward_min: 0.0,
        reward_max: 1e9,
        a_min: a_max * ratio,
        a_max,
        gamma_set: Interval { lo: 0.0, hi: 2.0 * gamma_cap.max(gamma_eq) + 1.0 },
    };
    let model = SystemModel::new(main, adjacents).unwrap();
    RandomCase { model, fault: FaultScenario::new("R", delta_p), omega_am }
}
