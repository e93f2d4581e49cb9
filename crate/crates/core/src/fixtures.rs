//! The eight-generator, four-link test system with its eight generator-tripping faults.

use crate::config::{load_config, Config};

pub const CASE_STUDY_JSON: &str = include_str!("../fixtures/case_study.json");

pub fn case_study() -> Config {
    load_config(CASE_STUDY_JSON).expect("bundled case-study config is valid")
}
