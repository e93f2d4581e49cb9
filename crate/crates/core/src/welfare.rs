//! Social-welfare oracle: minimize the adjacent systems' total regulation
//! cost `sum(u_i k_i^2)` subject to `sum(k_i) = W` and the droop bounds.
//!
//! Solved independently of the game iteration by bisection on the shared
//! multiplier `mu` with `k_i(mu) = clamp(mu / (2 u_i))`. At the optimum the
//! equality multiplier is `lambda = -mu`, which the equilibrium price must match.

use crate::error::{Error, Result};
use crate::game::GameInstance;
use crate::model::FaultedView;

#[derive(Debug, Clone, PartialEq)]
pub struct WelfareSolution {
    pub k_tilde: Vec<f64>,
    /// Multiplier of the droop-sum constraint (negative of the clearing price).
    pub lambda_tilde: f64,
    pub objective: f64,
}

const MAX_BISECTIONS: usize = 400;

fn allocation(inst: &GameInstance, mu: f64) -> Vec<f64> {
    inst.curvatures
        .iter()
        .zip(&inst.bounds)
        .map(|(u, b)| b.clamp(mu / (2.0 * u)))
        .collect()
}

/// Recomputes `mu` exactly for the coordinates left free at `mu`.
fn polish(inst: &GameInstance, mu: f64) -> Option<f64> {
    let mut clamped = 0.0;
    let mut inv = 0.0;
    for (u, b) in inst.curvatures.iter().zip(&inst.bounds) {
        let k = mu / (2.0 * u);
        if k <= b.lo {
            clamped += b.lo;
        } else if k >= b.hi {
            clamped += b.hi;
        } else {
            inv += 1.0 / u;
        }
    }
    if inv == 0.0 {
        return None;
    }
    let exact = 2.0 * (inst.required - clamped) / inv;
    exact.is_finite().then_some(exact)
}

fn residual(inst: &GameInstance, mu: f64) -> f64 {
    allocation(inst, mu).iter().sum::<f64>() - inst.required
}

pub fn solve_instance(inst: &GameInstance) -> Result<WelfareSolution> {
    if let Some(i) = inst.curvatures.iter().position(|u| !(*u > 0.0)) {
        return Err(Error::DegenerateCurvature(inst.ad_ids[i].clone()));
    }
    let (lo_sum, hi_sum, w) = (inst.lower_sum(), inst.upper_sum(), inst.required);
    if !(lo_sum <= w && w <= hi_sum) {
        return Err(Error::InfeasibleDemand { required: w, lo: lo_sum, hi: hi_sum });
    }

    let two_u = |i: usize| 2.0 * inst.curvatures[i];
    let mut lo = (0..inst.len()).map(|i| two_u(i) * inst.bounds[i].lo).fold(0.0, f64::min);
    let mut hi = (0..inst.len()).map(|i| two_u(i) * inst.bounds[i].hi).fold(0.0, f64::max);
    let tol = 1e-10 * w.abs().max(1.0);

    let mut mu = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        mu = 0.5 * (lo + hi);
        let r = residual(inst, mu);
        if r.abs() < tol {
            break;
        }
        if r < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    if let Some(exact) = polish(inst, mu) {
        if residual(inst, exact).abs() <= residual(inst, mu).abs() {
            mu = exact;
        }
    }

    let k_tilde = allocation(inst, mu);
    let objective = k_tilde.iter().zip(&inst.curvatures).map(|(k, u)| u * k * k).sum();
    Ok(WelfareSolution { k_tilde, lambda_tilde: -mu, objective })
}

/// Socially optimal droop allocation for one fault.
pub fn solve_social_welfare(view: &FaultedView<'_>, omega_am: f64) -> Result<WelfareSolution> {
    solve_instance(&GameInstance::new(view, omega_am)?)
}

/// Stationarity residuals of `0 in 2 u_i k_i - gamma + N(k_i)` plus the
/// droop-sum residual `sum(k) - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub stationarity: Vec<f64>,
    pub equality: f64,
}

impl KktReport {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_satisfied(&self, tol: f64) -> bool {
        self.max_stationarity() <= tol && self.equality.abs() <= tol
    }
}

/// Bound tolerance used to decide whether a coordinate sits on a face.
const FACE_TOL: f64 = 1e-9;

pub fn kkt_residual_instance(inst: &GameInstance, k: &[f64], gamma: f64) -> Result<KktReport> {
    if k.len() != inst.len() {
        return Err(Error::DroopLength { expected: inst.len(), got: k.len() });
    }
    let stationarity = k
        .iter()
        .zip(inst.curvatures.iter().zip(&inst.bounds))
        .map(|(&ki, (u, b))| {
            let g = 2.0 * u * ki - gamma;
            let at_lo = ki <= b.lo + FACE_TOL;
            let at_hi = ki >= b.hi - FACE_TOL;
            match (at_lo, at_hi) {
                (true, true) => 0.0,
                (true, false) => (-g).max(0.0),
                (false, true) => g.max(0.0),
                (false, false) => g.abs(),
            }
        })
        .collect();
    Ok(KktReport { stationarity, equality: k.iter().sum::<f64>() - inst.required })
}

pub fn kkt_residual(k: &[f64], gamma: f64, view: &FaultedView<'_>, omega_am: f64) -> Result<KktReport> {
    kkt_residual_instance(&GameInstance::new(view, omega_am)?, k, gamma)
}
