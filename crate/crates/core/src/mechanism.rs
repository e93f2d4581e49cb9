//! The incentive mechanism pipeline: per-fault equilibrium curves, the
//! pre-payment schedule keyed to the nearest-to-expected imbalance, and the
//! real-time droop adjustment once a fault actually happens.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{steady_frequency, GameInstance};
use crate::model::{apply_fault, FaultScenario, FaultSet, SystemModel};
use crate::solver::{seek_equilibrium, EquilibriumStatus, SaturationReport, SolverConfig};
use crate::welfare::kkt_residual_instance;

/// Two imbalances closer than this (MW) are treated as the same point.
const IMBALANCE_TOL: f64 = 1e-9;
/// Slack (Hz) on the main-grid frequency bounds in safety checks.
const FREQ_TOL: f64 = 1e-7;
const KKT_TOL: f64 = 1e-6;

/// Expected deviation used for a fault: the configured magnitude with the
/// sign opposite to the imbalance (frequency falls on a shortage).
pub fn fault_omega(delta_p: f64, omega_am: f64) -> f64 {
    if delta_p > 0.0 {
        -omega_am.abs()
    } else if delta_p < 0.0 {
        omega_am.abs()
    } else {
        omega_am
    }
}

pub fn expected_imbalance(faults: &FaultSet) -> f64 {
    faults.faults.iter().map(|f| f.ratio * f.delta_p).sum()
}

/// Fault whose imbalance is closest to the expected one; ties go to the larger imbalance.
pub fn nearest_to_expected(faults: &FaultSet) -> &FaultScenario {
    let expected = expected_imbalance(faults);
    let mut best = &faults.faults[0];
    for f in &faults.faults[1..] {
        let d = (f.delta_p - expected).abs();
        let d_best = (best.delta_p - expected).abs();
        if d < d_best - IMBALANCE_TOL || ((d - d_best).abs() <= IMBALANCE_TOL && f.delta_p > best.delta_p) {
            best = f;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowStatus {
    Converged,
    Saturated,
    MaxIterations,
    NoSupportNeeded,
    Failed,
}

impl From<EquilibriumStatus> for RowStatus {
    fn from(s: EquilibriumStatus) -> Self {
        match s {
            EquilibriumStatus::Converged => RowStatus::Converged,
            EquilibriumStatus::Saturated => RowStatus::Saturated,
            EquilibriumStatus::MaxIterations => RowStatus::MaxIterations,
            EquilibriumStatus::NoSupportNeeded => RowStatus::NoSupportNeeded,
        }
    }
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RowStatus::Converged => "Converged",
            RowStatus::Saturated => "Saturated",
            RowStatus::MaxIterations => "MaxIterations",
            RowStatus::NoSupportNeeded => "NoSupportNeeded",
            RowStatus::Failed => "Failed",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for RowStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Converged" => RowStatus::Converged,
            "Saturated" => RowStatus::Saturated,
            "MaxIterations" => RowStatus::MaxIterations,
            "NoSupportNeeded" => RowStatus::NoSupportNeeded,
            "Failed" => RowStatus::Failed,
            other => return Err(Error::invariant(format!("unknown row status `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub fault_id: String,
    pub delta_p: f64,
    pub gamma: f64,
    pub k: Vec<f64>,
    pub reward: f64,
    pub status: RowStatus,
    /// KKT certificate passed for this row.
    pub verified: bool,
}

impl CurveRow {
    pub fn droop_sum(&self) -> f64 {
        self.k.iter().sum()
    }
}

/// Scatter points of imbalance against reward and droop coefficients, sorted
/// by imbalance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub ad_ids: Vec<String>,
    pub omega_am: f64,
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    pub fn row(&self, fault_id: &str) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.fault_id == fault_id)
    }

    pub fn row_at(&self, delta_p: f64) -> Option<&CurveRow> {
        self.rows.iter().find(|r| (r.delta_p - delta_p).abs() <= IMBALANCE_TOL)
    }
}

fn solve_row(model: &SystemModel, fault: &FaultScenario, omega_am: f64, cfg: &SolverConfig) -> CurveRow {
    let n = model.adjacents.len();
    let failed = || CurveRow {
        fault_id: fault.id.clone(),
        delta_p: fault.delta_p,
        gamma: f64::NAN,
        k: vec![f64::NAN; n],
        reward: f64::NAN,
        status: RowStatus::Failed,
        verified: false,
    };
    let omega = fault_omega(fault.delta_p, omega_am);
    let Ok(view) = apply_fault(model, fault) else { return failed() };
    let Ok(eq) = seek_equilibrium(&view, omega, cfg) else { return failed() };
    let verified = match eq.status {
        EquilibriumStatus::Converged | EquilibriumStatus::Saturated => GameInstance::new(&view, omega)
            .and_then(|inst| kkt_residual_instance(&inst, &eq.k_star, eq.gamma_star))
            .map(|rep| {
                rep.max_stationarity() <= KKT_TOL
                    && (eq.status == EquilibriumStatus::Saturated || rep.equality.abs() <= KKT_TOL)
            })
            .unwrap_or(false),
        EquilibriumStatus::NoSupportNeeded => true,
        EquilibriumStatus::MaxIterations => false,
    };
    CurveRow {
        fault_id: fault.id.clone(),
        delta_p: fault.delta_p,
        gamma: eq.gamma_star,
        reward: eq.reward_star,
        k: eq.k_star,
        status: eq.status.into(),
        verified,
    }
}

/// Solves and certifies one equilibrium per fault. Faults with equal
/// imbalance collapse into one row (the one with the larger droop sum).
pub fn build_curves(
    model: &SystemModel,
    faults: &[FaultScenario],
    omega_am: f64,
    cfg: &SolverConfig,
) -> CurveTable {
    let rows: Vec<CurveRow> = std::thread::scope(|s| {
        let handles: Vec<_> = faults
            .iter()
            .map(|f| s.spawn(move || solve_row(model, f, omega_am, cfg)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("curve worker panicked")).collect()
    });

    let mut rows = rows;
    rows.sort_by(|a, b| a.delta_p.total_cmp(&b.delta_p));
    let mut deduped: Vec<CurveRow> = Vec::with_capacity(rows.len());
    for row in rows {
        match deduped.last_mut() {
            Some(last) if (last.delta_p - row.delta_p).abs() <= IMBALANCE_TOL => {
                if row.droop_sum() > last.droop_sum() + KKT_TOL {
                    *last = row;
                }
            }
            _ => deduped.push(row),
        }
    }
    CurveTable { ad_ids: model.adjacent_ids(), omega_am, rows: deduped }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSchedule {
    pub nearest_fault_id: String,
    pub nearest_delta_p: f64,
    pub expected_imbalance: f64,
    pub omega_am: f64,
    pub ad_ids: Vec<String>,
    pub prepaid_reward: f64,
    pub preset_droop: Vec<f64>,
    pub allocation: Vec<f64>,
}

/// Pre-payment and pre-set droops from the nearest-to-expected fault's row.
pub fn prepare_schedule(curves: &CurveTable, faults: &FaultSet) -> Result<MechanismSchedule> {
    let nearest = nearest_to_expected(faults);
    let row = curves
        .row(&nearest.id)
        .or_else(|| curves.row_at(nearest.delta_p))
        .filter(|r| r.status != RowStatus::Failed)
        .ok_or_else(|| Error::MissingRow(nearest.id.clone()))?;
    let total = row.droop_sum();
    let allocation = if total > 0.0 {
        row.k.iter().map(|k| row.reward * k / total).collect()
    } else {
        vec![0.0; row.k.len()]
    };
    Ok(MechanismSchedule {
        nearest_fault_id: nearest.id.clone(),
        nearest_delta_p: nearest.delta_p,
        expected_imbalance: expected_imbalance(faults),
        omega_am: curves.omega_am,
        ad_ids: curves.ad_ids.clone(),
        prepaid_reward: row.reward,
        preset_droop: row.k.clone(),
        allocation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AdjustmentAction {
    KeepPreset,
    AdjustTo { fault_id: String },
    SolveFresh,
    SaturateAndShed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentDecision {
    pub action: AdjustmentAction,
    pub realized_delta_p: f64,
    pub k: Vec<f64>,
    pub omega_hat: f64,
    pub prepaid_reward: f64,
    /// Reward of the equilibrium the droops were moved to (equals the
    /// pre-payment when the preset is kept).
    pub adjusted_reward: f64,
    pub reward_delta: f64,
    pub shed_mw: f64,
    pub rationale: String,
}

/// Builds the realized event: an explicit trip wins, otherwise the trip of a
/// fault-set entry with the same imbalance, otherwise none.
pub fn realized_event(delta_p: f64, trip: Option<String>, faults: &[FaultScenario]) -> FaultScenario {
    let tripped_generator = trip.or_else(|| {
        faults
            .iter()
            .find(|f| (f.delta_p - delta_p).abs() <= IMBALANCE_TOL)
            .and_then(|f| f.tripped_generator.clone())
    });
    FaultScenario { id: "realized".into(), delta_p, tripped_generator, ratio: 0.0 }
}

/// Decides how the droop coefficients respond to a realized fault.
pub fn realtime_adjust(
    schedule: &MechanismSchedule,
    curves: &CurveTable,
    realized: &FaultScenario,
    model: &SystemModel,
    omega_am: f64,
    cfg: &SolverConfig,
) -> Result<AdjustmentDecision> {
    let view = apply_fault(model, realized)?;
    let main = &model.main;
    let safe = |omega_hat: f64| main.omega_min - FREQ_TOL <= omega_hat && omega_hat <= main.omega_max + FREQ_TOL;
    let decision = |action, k: Vec<f64>, omega_hat, reward: f64, shed_mw, rationale: String| AdjustmentDecision {
        action,
        realized_delta_p: realized.delta_p,
        k,
        omega_hat,
        prepaid_reward: schedule.prepaid_reward,
        adjusted_reward: reward,
        reward_delta: reward - schedule.prepaid_reward,
        shed_mw,
        rationale,
    };

    let same_side = realized.delta_p * schedule.nearest_delta_p >= 0.0;
    if same_side && realized.delta_p.abs() <= schedule.nearest_delta_p.abs() + IMBALANCE_TOL {
        let omega_hat = steady_frequency(&view, &schedule.preset_droop)?;
        if safe(omega_hat) {
            return Ok(decision(
                AdjustmentAction::KeepPreset,
                schedule.preset_droop.clone(),
                omega_hat,
                schedule.prepaid_reward,
                0.0,
                format!(
                    "realized {} MW does not exceed the pre-set {} MW; preset droops hold the frequency at {omega_hat:.6} Hz",
                    realized.delta_p, schedule.nearest_delta_p
                ),
            ));
        }
    }

    if let Some(row) = curves.row_at(realized.delta_p).filter(|r| r.status == RowStatus::Converged) {
        let omega_hat = steady_frequency(&view, &row.k)?;
        if safe(omega_hat) {
            return Ok(decision(
                AdjustmentAction::AdjustTo { fault_id: row.fault_id.clone() },
                row.k.clone(),
                omega_hat,
                row.reward,
                0.0,
                format!("realized {} MW matches curve point {}", realized.delta_p, row.fault_id),
            ));
        }
    }

    let omega = fault_omega(realized.delta_p, omega_am);
    let eq = seek_equilibrium(&view, omega, cfg)?;
    match eq.status {
        EquilibriumStatus::Saturated => {
            let report: SaturationReport = eq.saturation.clone().unwrap_or(SaturationReport {
                saturated: eq.ad_ids.clone(),
                gamma_minimal: eq.gamma_star,
                uncovered_imbalance: 0.0,
            });
            Ok(decision(
                AdjustmentAction::SaturateAndShed,
                eq.k_star.clone(),
                eq.omega_hat,
                eq.reward_star,
                report.uncovered_imbalance,
                format!(
                    "all links saturate at gamma {:.6}; {:.6} MW must be shed",
                    report.gamma_minimal, report.uncovered_imbalance
                ),
            ))
        }
        EquilibriumStatus::MaxIterations => {
            Err(Error::NotConverged { fault: realized.id.clone(), iterations: eq.iterations })
        }
        EquilibriumStatus::Converged | EquilibriumStatus::NoSupportNeeded => Ok(decision(
            AdjustmentAction::SolveFresh,
            eq.k_star.clone(),
            eq.omega_hat,
            eq.reward_star,
            0.0,
            format!("solved a fresh equilibrium at {} MW ({})", realized.delta_p, eq.status.as_str()),
        )),
    }
}
