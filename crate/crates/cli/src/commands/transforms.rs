//! Evaluate R- and S-transform grids for a configured spectrum and emit
//! them as JSON plus a plotting CSV.

use serde_json::json;
use std::path::Path;

use epfree_core::freeprob::{BracketConfig, EmpiricalSpectrum, TransformGrid};
use epfree_core::randmat::{self, DiagLaw};

use crate::config::TransformsConfig;
use crate::error::{CliError, Result};
use crate::record::{ExperimentRecord, Stopwatch};

fn build_spectrum(cfg: &TransformsConfig) -> Result<EmpiricalSpectrum> {
    if let Some(values) = &cfg.values {
        return Ok(EmpiricalSpectrum::new(values.clone())?);
    }
    let values = match cfg.law.as_str() {
        "point" => ndarray::Array1::from_elem(cfg.n, cfg.a),
        "uniform" => randmat::diag_from_law(
            cfg.n,
            DiagLaw::Uniform { a: cfg.a, b: cfg.b },
            randmat::derive_seed(cfg.seed, 1),
        )?,
        "two_point" => {
            let (x1, x2, p) = match (cfg.x1, cfg.x2, cfg.p) {
                (Some(x1), Some(x2), Some(p)) => (x1, x2, p),
                _ => {
                    return Err(CliError::Config(
                        "two_point law requires x1, x2 and p".into(),
                    ))
                }
            };
            randmat::diag_from_law(
                cfg.n,
                DiagLaw::TwoPoint { x1, x2, p },
                randmat::derive_seed(cfg.seed, 1),
            )?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown spectrum law {other:?} (expected point, uniform or two_point)"
            )))
        }
    };
    Ok(EmpiricalSpectrum::from_array(&values)?)
}

pub fn run(cfg: &TransformsConfig, out_dir: &Path) -> Result<ExperimentRecord> {
    let mut watch = Stopwatch::new();
    let spectrum = watch.time("build", || build_spectrum(cfg))?;
    let bracket = BracketConfig::default();
    let r_grid = watch.time("r_transform", || {
        TransformGrid::evaluate_r(&spectrum, &cfg.s_grid, &bracket)
    });
    let s_grid = watch.time("s_transform", || {
        TransformGrid::evaluate_s(&spectrum, &cfg.omega_grid, &bracket)
    });

    let mut rows = Vec::new();
    for i in 0..r_grid.s_values.len() {
        rows.push(format!(
            "r,{},{},{}",
            r_grid.s_values[i], r_grid.outputs[i], r_grid.converged_flags[i]
        ));
    }
    for i in 0..s_grid.s_values.len() {
        rows.push(format!(
            "s,{},{},{}",
            s_grid.s_values[i], s_grid.outputs[i], s_grid.converged_flags[i]
        ));
    }
    super::write_rows(
        &out_dir.join("transforms.csv"),
        "transform,argument,value,converged",
        rows,
    )?;

    let results = json!({
        "status": "ok",
        "spectrum": {
            "n": spectrum.len(),
            "min": spectrum.min(),
            "max": spectrum.max(),
            "mean": spectrum.mean(),
        },
        "r_grid": r_grid,
        "s_grid": s_grid,
    });
    Ok(ExperimentRecord {
        command: "transforms".into(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: cfg.seed,
        results,
        wall_times_ms: watch.into_map(),
    })
}
