//! Shared fixtures for the benchmarks in `benches/`.

use std::path::PathBuf;

use gridshare_core::coordinator::{Mode, Scenario, ScenarioConfig};

/// Directory of a feeder shipped in `cases/`.
pub fn case_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

/// Shipped feeder at a uniform penetration.
pub fn scenario(name: &str, mode: Mode, gamma: f64) -> Scenario {
    let base = Scenario::load(&ScenarioConfig::new(case_dir(name), mode)).expect("shipped case loads");
    base.with_gamma(gamma, mode).expect("penetration in range")
}
