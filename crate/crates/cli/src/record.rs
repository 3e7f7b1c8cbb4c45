//! Self-describing experiment records: command, full configuration, seed,
//! results and per-stage wall times. Re-running a record's command with its
//! embedded config and seed reproduces every numeric result bit-exactly;
//! only the wall times differ.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub results: serde_json::Value,
    pub wall_times_ms: BTreeMap<String, f64>,
}

/// Stage timer collecting the `wall_times_ms` map.
#[derive(Debug, Default)]
pub struct Stopwatch {
    times: BTreeMap<String, f64>,
}

impl Stopwatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.times
            .insert(stage.to_string(), t0.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn into_map(self) -> BTreeMap<String, f64> {
        self.times
    }
}

/// Compare two records for reproducibility: identical command, config, seed
/// and results; wall times are excluded by construction.
pub fn reproduces(a: &ExperimentRecord, b: &ExperimentRecord) -> bool {
    a.command == b.command && a.config == b.config && a.seed == b.seed && a.results == b.results
}
