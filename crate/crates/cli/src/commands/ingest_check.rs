//! Ingestion smoke check: summarize an existing CSV, or write a synthetic
//! file and verify that re-ingesting it reproduces the matrix bit-exactly.

use serde_json::json;
use std::path::Path;

use crate::config::IngestCheckConfig;
use crate::error::Result;
use crate::ingest::{ingest_csv, synthesize, write_csv, IngestOptions, SyntheticSpec};
use crate::record::{ExperimentRecord, Stopwatch};

pub fn run(cfg: &IngestCheckConfig, out_dir: &Path) -> Result<ExperimentRecord> {
    let mut watch = Stopwatch::new();
    let opts = IngestOptions {
        delimiter: ',',
        has_header: cfg.has_header,
        label_column: cfg.label_column.clone(),
        standardize: cfg.standardize,
    };

    let results = if let Some(path) = &cfg.csv {
        let d = watch.time("ingest", || ingest_csv(Path::new(path), &opts))?;
        let positives = d.y.iter().filter(|&&v| v > 0.0).count();
        json!({
            "status": "ok",
            "source": path,
            "n": d.n(),
            "k": d.k(),
            "labels_positive": positives,
            "labels_negative": d.n() - positives,
            "standardized": d.standardized,
        })
    } else {
        let spec = SyntheticSpec {
            n: cfg.n,
            k: cfg.k,
            rho: cfg.rho,
            slab_var: 1.0,
            noise_var: cfg.noise_var,
            x_scale: None,
            seed: cfg.seed,
        };
        let (dataset, _) = watch.time("synthesize", || synthesize(&spec))?;
        let path = out_dir.join("synthetic.csv");
        watch.time("write", || write_csv(&dataset, &path))?;
        let back = watch.time("reingest", || {
            ingest_csv(&path, &IngestOptions::default())
        })?;
        let exact = back.x == dataset.x && back.y == dataset.y;
        json!({
            "status": if exact { "ok" } else { "solver_error: roundtrip mismatch" },
            "source": path.display().to_string(),
            "n": dataset.n(),
            "k": dataset.k(),
            "roundtrip_exact": exact,
        })
    };

    Ok(ExperimentRecord {
        command: "ingest-check".into(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: cfg.seed,
        results,
        wall_times_ms: watch.into_map(),
    })
}
