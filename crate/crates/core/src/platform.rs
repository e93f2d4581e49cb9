//! Decentralized equilibrium seeking over a message platform.
//!
//! The main-system agent posts a virtual price each round; every adjacent
//! agent answers with its droop best response computed from parameters it
//! never discloses. Only `round`, `gamma`, `omega_am`, `ad_id` and `k` are
//! ever put on the wire. Rounds are synchronous: the main agent waits for
//! every reply before updating the price.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::game::{ad_curvature, best_response_droop, required_total_droop, AdCurvature, PriceState};
use crate::model::{apply_fault, derive_droop_bounds, AdjacentSystem, FaultScenario, FaultedView, Interval, SystemModel};
use crate::solver::{finish, run_fixed_point, EquilibriumResult, EquilibriumStatus, SaturationReport, SolverConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlatformError {
    #[error("adjacent system `{ad_id}` replied k = {k} outside its declared bounds [{lo}, {hi}] in round {round}")]
    InvalidReply { ad_id: String, round: usize, k: f64, lo: f64, hi: f64 },
    #[error("no reply from `{ad_id}` in round {round}")]
    MissingReply { ad_id: String, round: usize },
    #[error("reply from `{ad_id}` carries round {got}, expected {expected}")]
    StaleReply { ad_id: String, expected: usize, got: usize },
    #[error("transport timed out in round {round}")]
    Timeout { round: usize },
    #[error("agent `{ad_id}` failed to register: {reason}")]
    Registration { ad_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePost {
    pub round: usize,
    pub gamma: f64,
    pub omega_am: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroopReply {
    pub round: usize,
    pub ad_id: String,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Message {
    Price(PricePost),
    Droop(DroopReply),
}

/// Public strategy set an adjacent agent declares when joining a session.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub ad_id: String,
    pub bounds: Interval,
}

pub trait AdAgent {
    fn id(&self) -> &str;
    fn register(&mut self, omega_am: f64) -> Result<Interval, PlatformError>;
    fn respond(&mut self, post: &PricePost) -> DroopReply;
}

/// Adjacent agent holding its system's private generator data.
#[derive(Debug, Clone)]
pub struct PrivateAdAgent {
    system: AdjacentSystem,
    state: Option<(f64, AdCurvature, Interval)>,
}

impl PrivateAdAgent {
    pub fn new(system: AdjacentSystem) -> Self {
        Self { system, state: None }
    }

    fn prepare(&mut self, omega_am: f64) -> Result<(AdCurvature, Interval)> {
        match &self.state {
            Some((w, u, b)) if *w == omega_am => Ok((u.clone(), *b)),
            _ => {
                let u = ad_curvature(&self.system, omega_am)?;
                let b = derive_droop_bounds(&self.system, omega_am)?;
                self.state = Some((omega_am, u.clone(), b));
                Ok((u, b))
            }
        }
    }
}

impl AdAgent for PrivateAdAgent {
    fn id(&self) -> &str {
        &self.system.id
    }

    fn register(&mut self, omega_am: f64) -> Result<Interval, PlatformError> {
        self.prepare(omega_am)
            .map(|(_, b)| b)
            .map_err(|e| PlatformError::Registration { ad_id: self.system.id.clone(), reason: e.to_string() })
    }

    fn respond(&mut self, post: &PricePost) -> DroopReply {
        let k = match self.prepare(post.omega_am) {
            Ok((u, b)) => best_response_droop(post.gamma, &u, b),
            Err(_) => f64::NAN,
        };
        DroopReply { round: post.round, ad_id: self.system.id.clone(), k }
    }
}

pub trait Transport {
    fn open(&mut self, omega_am: f64) -> Result<Vec<Registration>, PlatformError>;
    /// Broadcasts `post` and returns the replies collected for that round.
    fn exchange(&mut self, post: &PricePost) -> Result<Vec<DroopReply>, PlatformError>;
}

/// Reference transport: agents live in the same process and answer in
/// registration order.
pub struct InProcessTransport {
    agents: Vec<Box<dyn AdAgent>>,
}

impl InProcessTransport {
    pub fn new(agents: Vec<Box<dyn AdAgent>>) -> Self {
        Self { agents }
    }

    pub fn for_model(model: &SystemModel) -> Self {
        Self::new(
            model
                .adjacents
                .iter()
                .map(|ad| Box::new(PrivateAdAgent::new(ad.clone())) as Box<dyn AdAgent>)
                .collect(),
        )
    }
}

impl Transport for InProcessTransport {
    fn open(&mut self, omega_am: f64) -> Result<Vec<Registration>, PlatformError> {
        self.agents
            .iter_mut()
            .map(|a| Ok(Registration { ad_id: a.id().to_string(), bounds: a.register(omega_am)? }))
            .collect()
    }

    fn exchange(&mut self, post: &PricePost) -> Result<Vec<DroopReply>, PlatformError> {
        Ok(self.agents.iter_mut().map(|a| a.respond(post)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub messages: Vec<Message>,
    pub result: EquilibriumResult,
}

impl SessionLog {
    /// One JSON object per line, fields in declaration order.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<Message>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }
}

struct Session<'t, T: Transport> {
    transport: &'t mut T,
    registry: Vec<Registration>,
    omega_am: f64,
    messages: Vec<Message>,
}

impl<T: Transport> Session<'_, T> {
    fn round(&mut self, round: usize, gamma: f64) -> Result<Vec<f64>, PlatformError> {
        let post = PricePost { round, gamma, omega_am: self.omega_am };
        self.messages.push(Message::Price(post.clone()));
        let replies = self.transport.exchange(&post)?;
        self.messages.extend(replies.iter().cloned().map(Message::Droop));

        let mut k = Vec::with_capacity(self.registry.len());
        for reg in &self.registry {
            let reply = replies
                .iter()
                .find(|r| r.ad_id == reg.ad_id)
                .ok_or_else(|| PlatformError::MissingReply { ad_id: reg.ad_id.clone(), round })?;
            if reply.round != round {
                return Err(PlatformError::StaleReply { ad_id: reg.ad_id.clone(), expected: round, got: reply.round });
            }
            if !reg.bounds.contains(reply.k) {
                return Err(PlatformError::InvalidReply {
                    ad_id: reg.ad_id.clone(),
                    round,
                    k: reply.k,
                    lo: reg.bounds.lo,
                    hi: reg.bounds.hi,
                });
            }
            k.push(reply.k);
        }
        Ok(k)
    }
}

/// Runs the price/droop exchange for an already faulted view over `transport`.
pub fn run_session<T: Transport>(
    view: &FaultedView<'_>,
    omega_am: f64,
    cfg: &SolverConfig,
    transport: &mut T,
) -> Result<(EquilibriumResult, SessionLog)> {
    cfg.validate()?;
    let required = required_total_droop(view, omega_am)?.value;
    let registry = transport.open(omega_am)?;
    let ids: Vec<String> = registry.iter().map(|r| r.ad_id.clone()).collect();
    let n = ids.len();
    let capacity: f64 = registry.iter().map(|r| r.bounds.hi).sum();
    let mut session = Session { transport, registry, omega_am, messages: Vec::new() };

    let result = if !(required > 0.0) {
        let gamma = view.main().gamma_set.clamp(0.0);
        finish(view, &ids, omega_am, gamma, vec![0.0; n], 0, Vec::new(), EquilibriumStatus::NoSupportNeeded, None)?
    } else if required > capacity {
        saturated_session(view, omega_am, cfg, &ids, required, capacity, &mut session)?
    } else {
        let fp = run_fixed_point(view, omega_am, cfg, n, |price: PriceState| {
            session.round(price.round, price.gamma).map_err(Error::from)
        })?;
        let status = if fp.converged { EquilibriumStatus::Converged } else { EquilibriumStatus::MaxIterations };
        finish(view, &ids, omega_am, fp.gamma, fp.k, fp.iterations, fp.trace, status, None)?
    };
    let log = SessionLog { messages: session.messages, result: result.clone() };
    Ok((result, log))
}

/// Bisects the price until every reply sits at its declared upper bound.
fn saturated_session<T: Transport>(
    view: &FaultedView<'_>,
    omega_am: f64,
    cfg: &SolverConfig,
    ids: &[String],
    required: f64,
    capacity: f64,
    session: &mut Session<'_, T>,
) -> Result<EquilibriumResult> {
    let his: Vec<f64> = session.registry.iter().map(|r| r.bounds.hi).collect();
    let saturated = |k: &[f64]| k.iter().zip(&his).all(|(k, hi)| *k >= *hi);
    let gamma_set = view.main().gamma_set;
    let (mut lo, mut hi) = (gamma_set.lo, gamma_set.hi);
    let mut round = 0;
    let mut next_round = || {
        round += 1;
        round
    };

    let mut k_hi = session.round(next_round(), hi)?;
    if saturated(&k_hi) {
        let mut rounds = 1;
        while hi - lo > cfg.eps_gamma && rounds < cfg.max_iters {
            let mid = 0.5 * (lo + hi);
            let k = session.round(next_round(), mid)?;
            rounds += 1;
            if saturated(&k) {
                hi = mid;
                k_hi = k;
            } else {
                lo = mid;
            }
        }
    }
    let report = SaturationReport {
        saturated: ids.to_vec(),
        gamma_minimal: hi,
        uncovered_imbalance: (required - capacity) * omega_am.abs(),
    };
    let iterations = round;
    finish(view, ids, omega_am, hi, k_hi, iterations, Vec::new(), EquilibriumStatus::Saturated, Some(report))
}

/// Full decentralized run for `fault` with the reference in-process transport.
pub fn run_decentralized(
    model: &SystemModel,
    fault: &FaultScenario,
    omega_am: f64,
    cfg: &SolverConfig,
) -> Result<(EquilibriumResult, SessionLog)> {
    let view = apply_fault(model, fault)?;
    let mut transport = InProcessTransport::for_model(model);
    run_session(&view, omega_am, cfg, &mut transport)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::solver::{saturate_price, seek_equilibrium};
    use std::collections::BTreeSet;

    const OMEGA: f64 = -0.2;

    #[test]
    fn f2_session_matches_monolithic_solve() {
        let cfg = fixtures::case_study();
        let f2 = cfg.fault("F2").unwrap();
        let solver = SolverConfig::default();
        let (res, log) = run_decentralized(&cfg.system, f2, OMEGA, &solver).unwrap();
        let view = apply_fault(&cfg.system, f2).unwrap();
        let mono = seek_equilibrium(&view, OMEGA, &solver).unwrap();
        assert_eq!(res.status, EquilibriumStatus::Converged);
        for (a, b) in res.k_star.iter().zip(&mono.k_star) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(log.messages.len(), res.iterations * 5);
    }

    #[test]
    fn transcript_has_only_public_fields() {
        let cfg = fixtures::case_study();
        let (_, log) = run_decentralized(&cfg.system, cfg.fault("F1").unwrap(), OMEGA, &SolverConfig::default()).unwrap();
        let text = log.to_jsonl().unwrap();
        let mut keys = BTreeSet::new();
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            keys.extend(v.as_object().unwrap().keys().cloned());
        }
        let expected: BTreeSet<String> =
            ["round", "gamma", "omega_am", "ad_id", "k"].iter().map(|s| s.to_string()).collect();
        assert_eq!(keys, expected);
        for private in ["alpha", "k_g", "p_max", "p_min", "p_nom"] {
            assert!(!text.contains(private));
        }
        let parsed = SessionLog::parse_jsonl(&text).unwrap();
        assert_eq!(parsed, log.messages);
        assert!(text.lines().next().unwrap().starts_with("{\"round\":1,\"gamma\":"));
    }

    struct Rogue(PrivateAdAgent);

    impl AdAgent for Rogue {
        fn id(&self) -> &str {
            self.0.id()
        }
        fn register(&mut self, omega_am: f64) -> Result<Interval, PlatformError> {
            self.0.register(omega_am)
        }
        fn respond(&mut self, post: &PricePost) -> DroopReply {
            let mut r = self.0.respond(post);
            r.k = 10_000.0;
            r
        }
    }

    #[test]
    fn out_of_bounds_reply_aborts() {
        let cfg = fixtures::case_study();
        let mut agents: Vec<Box<dyn AdAgent>> = Vec::new();
        for (i, ad) in cfg.system.adjacents.iter().enumerate() {
            let a = PrivateAdAgent::new(ad.clone());
            agents.push(if i == 2 { Box::new(Rogue(a)) } else { Box::new(a) });
        }
        let mut transport = InProcessTransport::new(agents);
        let view = apply_fault(&cfg.system, cfg.fault("F1").unwrap()).unwrap();
        let err = run_session(&view, OMEGA, &SolverConfig::default(), &mut transport).unwrap_err();
        match err {
            Error::Platform(PlatformError::InvalidReply { ad_id, round, .. }) => {
                assert_eq!(ad_id, "AD3");
                assert_eq!(round, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    struct Silent;

    impl Transport for Silent {
        fn open(&mut self, _: f64) -> Result<Vec<Registration>, PlatformError> {
            Ok(vec![Registration { ad_id: "AD1".into(), bounds: Interval { lo: 0.0, hi: 2000.0 } }])
        }
        fn exchange(&mut self, post: &PricePost) -> Result<Vec<DroopReply>, PlatformError> {
            Err(PlatformError::Timeout { round: post.round })
        }
    }

    #[test]
    fn transport_timeout_surfaces() {
        let cfg = fixtures::case_study();
        let view = apply_fault(&cfg.system, cfg.fault("F1").unwrap()).unwrap();
        let err = run_session(&view, OMEGA, &SolverConfig::default(), &mut Silent).unwrap_err();
        assert!(matches!(err, Error::Platform(PlatformError::Timeout { round: 1 })));
        assert_eq!(err.kind(), crate::error::ErrorKind::NonConvergence);
    }

    #[test]
    fn saturated_session_finds_minimal_price() {
        let cfg = fixtures::case_study();
        let huge = FaultScenario::new("huge", 2000.0);
        let solver = SolverConfig::default();
        let (res, _) = run_decentralized(&cfg.system, &huge, OMEGA, &solver).unwrap();
        let view = apply_fault(&cfg.system, &huge).unwrap();
        let rep = saturate_price(&view, OMEGA).unwrap();
        assert_eq!(res.status, EquilibriumStatus::Saturated);
        assert!((res.gamma_star - rep.gamma_minimal).abs() <= 2.0 * solver.eps_gamma);
        assert_eq!(res.k_star, vec![380.0, 415.0, 415.0, 395.0]);
    }

    #[test]
    fn sessions_are_deterministic() {
        let cfg = fixtures::case_study();
        let f = cfg.fault("F6").unwrap();
        let a = run_decentralized(&cfg.system, f, OMEGA, &SolverConfig::default()).unwrap().1;
        let b = run_decentralized(&cfg.system, f, OMEGA, &SolverConfig::default()).unwrap().1;
        assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
    }
}
