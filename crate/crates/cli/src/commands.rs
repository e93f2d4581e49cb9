use std::fs;
use std::path::Path;

use droop_incentive::config::{load_config, Config};
use droop_incentive::mechanism::{
    build_curves, fault_omega, prepare_schedule, realized_event, realtime_adjust, MechanismSchedule, RowStatus,
};
use droop_incentive::model::{apply_fault, FaultScenario};
use droop_incentive::platform::run_decentralized;
use droop_incentive::report::{curves_csv, equilibrium_csv, read_curves_csv, sweep_csv, trace_csv};
use droop_incentive::solver::{analytic_equilibrium, seek_equilibrium, sweep_omega, EquilibriumStatus, SolverConfig};
use droop_incentive::{Error, Result};

use crate::manifest::RunManifest;
use crate::{Command, SolverArgs};

const NOT_CONVERGED: u8 = 5;

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn load(path: &Path) -> Result<Config> {
    load_config(&read(path)?)
}

fn find_fault<'a>(cfg: &'a Config, id: &str) -> Result<&'a FaultScenario> {
    cfg.fault(id).ok_or_else(|| Error::UnknownFault(id.to_string()))
}

fn solver_config(args: &SolverArgs) -> Result<SolverConfig> {
    let cfg = SolverConfig { eps_gamma: args.eps_gamma, eps_k: args.eps_k, max_iters: args.max_iters, ..Default::default() };
    cfg.validate()?;
    Ok(cfg)
}

fn record_solver(m: &mut RunManifest, args: &SolverArgs) {
    m.set("eps_gamma", args.eps_gamma).set("eps_k", args.eps_k).set("max_iters", args.max_iters);
}

fn output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn status_code(status: EquilibriumStatus) -> u8 {
    if status == EquilibriumStatus::MaxIterations {
        NOT_CONVERGED
    } else {
        0
    }
}

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "ok: {} main generators, {} adjacent systems, {} faults, omega_am {} Hz",
                cfg.system.main.generators.len(),
                cfg.system.adjacents.len(),
                cfg.faults.len(),
                cfg.omega_am
            );
            Ok(0)
        }

        Command::Equilibrium { config, fault, omega, gamma0, k0, analytic, out, solver } => {
            let cfg = load(&config.config)?;
            let scenario = find_fault(&cfg, &fault)?;
            let omega = fault_omega(scenario.delta_p, omega.unwrap_or(cfg.omega_am));
            let mut solver_cfg = solver_config(&solver)?;
            solver_cfg.gamma0 = gamma0;
            solver_cfg.k0 = k0.clone();
            let view = apply_fault(&cfg.system, scenario)?;
            let result =
                if analytic { analytic_equilibrium(&view, omega)? } else { seek_equilibrium(&view, omega, &solver_cfg)? };
            let table = equilibrium_csv(std::slice::from_ref(&result))?;
            print!("{table}");
            let code = status_code(result.status);
            if code != 0 {
                eprintln!("error: no convergence within {} rounds", result.iterations);
            }
            if let Some(dir) = out {
                output_dir(&dir)?;
                let mut m = RunManifest::new("equilibrium");
                m.input(&config.config).set("fault", &fault).set("omega", omega).set("analytic", analytic);
                if let Some(g) = gamma0 {
                    m.set("gamma0", g);
                }
                if let Some(k) = &k0 {
                    m.set("k0", k.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
                }
                record_solver(&mut m, &solver);
                m.emit(&dir, "equilibrium.csv", &table)?;
                m.emit(&dir, "trace.csv", &trace_csv(&result)?)?;
                m.finish(&dir, code)?;
            }
            Ok(code)
        }

        Command::Mechanism { config, omega, out, solver } => {
            let cfg = load(&config.config)?;
            if cfg.faults.is_empty() {
                return Err(Error::EmptyFaultSet);
            }
            let omega = omega.unwrap_or(cfg.omega_am);
            let faults = cfg.fault_set()?;
            let curves = build_curves(&cfg.system, &cfg.faults, omega, &solver_config(&solver)?);
            let schedule = prepare_schedule(&curves, &faults)?;
            let mut code = 0;
            for row in &curves.rows {
                if matches!(row.status, RowStatus::MaxIterations | RowStatus::Failed) || !row.verified {
                    eprintln!("warning: curve point {} is {} (verified: {})", row.fault_id, row.status, row.verified);
                }
                if matches!(row.status, RowStatus::MaxIterations | RowStatus::Failed) {
                    code = NOT_CONVERGED;
                }
            }
            println!(
                "expected imbalance {:.6} MW; schedule keyed to {} ({:.6} MW), pre-payment {:.6}",
                schedule.expected_imbalance, schedule.nearest_fault_id, schedule.nearest_delta_p, schedule.prepaid_reward
            );
            output_dir(&out)?;
            let mut m = RunManifest::new("mechanism");
            m.input(&config.config).set("omega", omega);
            record_solver(&mut m, &solver);
            m.emit(&out, "curves.csv", &curves_csv(&curves)?)?;
            m.emit(&out, "schedule.json", &(serde_json::to_string_pretty(&schedule)? + "\n"))?;
            m.finish(&out, code)
        }

        Command::Adjust { schedule, curves, config, realized, trip, out, solver } => {
            let cfg = load(&config.config)?;
            let plan: MechanismSchedule = serde_json::from_str(&read(&schedule)?)?;
            if plan.ad_ids != cfg.system.adjacent_ids() {
                return Err(Error::Invariant {
                    rule: "schedule adjacent systems must match the configuration".into(),
                });
            }
            let table = read_curves_csv(&read(&curves)?, plan.ad_ids.clone(), plan.omega_am)?;
            let event = realized_event(realized, trip.clone(), &cfg.faults);
            let decision = realtime_adjust(&plan, &table, &event, &cfg.system, plan.omega_am, &solver_config(&solver)?)?;
            println!("{}", decision.rationale);
            output_dir(&out)?;
            let mut m = RunManifest::new("adjust");
            m.input(&schedule).input(&curves).input(&config.config).set("realized", realized);
            if let Some(t) = &trip {
                m.set("trip", t);
            }
            record_solver(&mut m, &solver);
            m.emit(&out, "decision.json", &(serde_json::to_string_pretty(&decision)? + "\n"))?;
            m.finish(&out, 0)
        }

        Command::SweepOmega { config, fault, from, to, steps, out, solver } => {
            let cfg = load(&config.config)?;
            let scenario = find_fault(&cfg, &fault)?;
            let view = apply_fault(&cfg.system, scenario)?;
            let rows = sweep_omega(&view, from, to, steps, &solver_config(&solver)?)?;
            let table = sweep_csv(&rows)?;
            print!("{table}");
            let code = rows.iter().map(|r| status_code(r.status)).max().unwrap_or(0);
            if let Some(dir) = out {
                output_dir(&dir)?;
                let mut m = RunManifest::new("sweep-omega");
                m.input(&config.config).set("fault", &fault).set("from", from).set("to", to).set("steps", steps);
                record_solver(&mut m, &solver);
                m.emit(&dir, "sweep.csv", &table)?;
                m.finish(&dir, code)?;
            }
            Ok(code)
        }

        Command::Decentralized { config, fault, omega, out, solver } => {
            let cfg = load(&config.config)?;
            let scenario = find_fault(&cfg, &fault)?;
            let omega = fault_omega(scenario.delta_p, omega.unwrap_or(cfg.omega_am));
            let (result, log) = run_decentralized(&cfg.system, scenario, omega, &solver_config(&solver)?)?;
            let table = equilibrium_csv(std::slice::from_ref(&result))?;
            print!("{table}");
            let code = status_code(result.status);
            if let Some(dir) = out {
                output_dir(&dir)?;
                let mut m = RunManifest::new("decentralized");
                m.input(&config.config).set("fault", &fault).set("omega", omega);
                record_solver(&mut m, &solver);
                m.emit(&dir, "result.json", &(serde_json::to_string_pretty(&result)? + "\n"))?;
                m.emit(&dir, "transcript.jsonl", &log.to_jsonl()?)?;
                m.finish(&dir, code)?;
            }
            Ok(code)
        }
    }
}
