//! JSON configuration documents (`schema: 1`).
//!
//! ```json
//! {
//!   "schema": 1,
//!   "main": { "generators": [...], "omega_max": 0.2, "omega_min": -0.2 },
//!   "adjacents": [ { "id": "AD1", "lcc": {...}, "generators": [...], ... } ],
//!   "faults": { "cycle": 1.0, "faults": [ { "id": "F1", "delta_p": 320, ... } ] },
//!   "incentive": { "gamma_set": {"lo": 0, "hi": 20}, "a_min": 10, "a_max": 20,
//!                  "reward_min": 0, "reward_max": 20000, "omega_am": -0.2 }
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AdjacentSystem, FaultScenario, FaultSet, GeneratorParams, Interval, MainSystem, SystemModel,
    RATIO_LOAD_TOLERANCE,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    schema: u32,
    main: MainSection,
    adjacents: Vec<AdjacentSystem>,
    #[serde(default)]
    faults: FaultSection,
    incentive: IncentiveSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MainSection {
    generators: Vec<GeneratorParams>,
    omega_max: f64,
    omega_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultSection {
    #[serde(default = "default_cycle")]
    cycle: f64,
    #[serde(default)]
    faults: Vec<FaultScenario>,
}

impl Default for FaultSection {
    fn default() -> Self {
        Self { cycle: default_cycle(), faults: Vec::new() }
    }
}

fn default_cycle() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IncentiveSection {
    gamma_set: Interval,
    a_min: f64,
    a_max: f64,
    reward_min: f64,
    reward_max: f64,
    #[serde(default = "default_omega_am")]
    omega_am: f64,
}

fn default_omega_am() -> f64 {
    -0.2
}

/// A validated configuration: the system, its (possibly empty) fault list and
/// the default expected frequency deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub system: SystemModel,
    pub faults: Vec<FaultScenario>,
    pub cycle: f64,
    pub omega_am: f64,
}

impl Config {
    pub fn fault_set(&self) -> Result<FaultSet> {
        FaultSet::new(self.faults.clone(), self.cycle)
    }

    pub fn fault(&self, id: &str) -> Option<&FaultScenario> {
        self.faults.iter().find(|f| f.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        let main = &self.system.main;
        let doc = Document {
            schema: SCHEMA_VERSION,
            main: MainSection {
                generators: main.generators.clone(),
                omega_max: main.omega_max,
                omega_min: main.omega_min,
            },
            adjacents: self.system.adjacents.clone(),
            faults: FaultSection { cycle: self.cycle, faults: self.faults.clone() },
            incentive: IncentiveSection {
                gamma_set: main.gamma_set,
                a_min: main.a_min,
                a_max: main.a_max,
                reward_min: main.reward_min,
                reward_max: main.reward_max,
                omega_am: self.omega_am,
            },
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

fn parse_document(text: &str) -> Result<Document> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

pub fn load_config(text: &str) -> Result<Config> {
    let doc = parse_document(text)?;
    if doc.schema != SCHEMA_VERSION {
        return Err(Error::invariant(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            doc.schema
        )));
    }
    let inc = doc.incentive;
    let main = MainSystem {
        generators: doc.main.generators,
        omega_max: doc.main.omega_max,
        omega_min: doc.main.omega_min,
        reward_min: inc.reward_min,
        reward_max: inc.reward_max,
        a_min: inc.a_min,
        a_max: inc.a_max,
        gamma_set: inc.gamma_set,
    };
    let system = SystemModel::new(main, doc.adjacents)?;
    if inc.omega_am == 0.0 || !inc.omega_am.is_finite() {
        return Err(Error::invariant("incentive: omega_am must be nonzero"));
    }

    let mut faults = doc.faults.faults;
    let mut ids = std::collections::HashSet::new();
    for f in &faults {
        system.validate_fault(f)?;
        if !ids.insert(f.id.as_str()) {
            return Err(Error::invariant(format!("duplicate fault id `{}`", f.id)));
        }
    }
    if !faults.is_empty() {
        let total: f64 = faults.iter().map(|f| f.ratio).sum();
        if (total - 1.0).abs() > RATIO_LOAD_TOLERANCE {
            return Err(Error::invariant(format!("fault ratios must sum to 1 (got {total})")));
        }
        for f in &mut faults {
            f.ratio /= total;
        }
    }
    Ok(Config { system, faults, cycle: doc.faults.cycle, omega_am: inc.omega_am })
}

/// Parses and validates a configuration, returning only the system model.
pub fn load_system(text: &str) -> Result<SystemModel> {
    load_config(text).map(|c| c.system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn case_study_loads() {
        let cfg = load_config(fixtures::CASE_STUDY_JSON).unwrap();
        assert_eq!(cfg.system.main.generators.len(), 8);
        assert_eq!(cfg.system.adjacents.len(), 4);
        assert_eq!(cfg.faults.len(), 8);
        assert_eq!(cfg.system.main.droop_sum(), 995.0);
        assert_eq!(cfg.omega_am, -0.2);
    }

    #[test]
    fn emitted_config_round_trips() {
        let cfg = load_config(fixtures::CASE_STUDY_JSON).unwrap();
        let again = load_config(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn parse_error_carries_path_and_line() {
        let text = fixtures::CASE_STUDY_JSON.replacen("\"alpha\": 1.0", "\"alpha\": \"x\"", 1);
        match load_config(&text) {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "main.generators[0].alpha");
                assert!(line > 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(load_config("{ not json"), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_schema_is_a_parse_error() {
        let text = fixtures::CASE_STUDY_JSON.replacen("\"schema\": 1,", "", 1);
        assert!(matches!(load_config(&text), Err(Error::Parse { .. })));
        let text = fixtures::CASE_STUDY_JSON.replacen("\"schema\": 1,", "\"schema\": 2,", 1);
        assert!(matches!(load_config(&text), Err(Error::Invariant { .. })));
    }

    #[test]
    fn inverted_generator_limits_name_the_generator() {
        let mut cfg = load_config(fixtures::CASE_STUDY_JSON).unwrap();
        cfg.system.main.generators[3].p_min = 600.0;
        let text = cfg.to_json().unwrap();
        let err = load_config(&text).unwrap_err();
        assert!(matches!(err, Error::Invariant { .. }));
        assert!(err.to_string().contains("`G4`"), "{err}");
    }

    #[test]
    fn bad_ratio_sum_rejected() {
        let mut cfg = load_config(fixtures::CASE_STUDY_JSON).unwrap();
        cfg.faults[0].ratio = 0.5;
        let err = load_config(&cfg.to_json().unwrap()).unwrap_err();
        assert!(err.to_string().contains("ratios"));
    }
}
