//! Freeness scores for standard matrix families: a diagonal against a
//! rotated diagonal (Haar or permuted-Hadamard rotation), and the
//! commuting independent-diagonal negative control.

use ndarray::prelude::*;
use serde_json::json;
use std::path::Path;

use epfree_core::freeprob::freeness_score;
use epfree_core::randmat::{self, DiagLaw};

use crate::config::FreenessConfig;
use crate::error::{CliError, Result};
use crate::record::{ExperimentRecord, Stopwatch};

fn rotated_diagonal(u: &Array2<f64>, d: &Array1<f64>) -> Array2<f64> {
    let mut scaled = u.clone();
    for (mut col, &dv) in scaled.columns_mut().into_iter().zip(d.iter()) {
        col.mapv_inplace(|v| v * dv);
    }
    scaled.dot(&u.t())
}

pub fn run(cfg: &FreenessConfig, out_dir: &Path) -> Result<ExperimentRecord> {
    let n = cfg.n;
    let law = DiagLaw::Uniform {
        a: cfg.law_a,
        b: cfg.law_b,
    };
    let mut watch = Stopwatch::new();
    let family: Vec<Vec<Array2<f64>>> = watch.time("build", || -> Result<_> {
        Ok(match cfg.family.as_str() {
            "haar_pair" => {
                let d1 = randmat::diag_from_law(n, law, randmat::derive_seed(cfg.seed, 1))?;
                let d2 = randmat::diag_from_law(n, law, randmat::derive_seed(cfg.seed, 2))?;
                let u = randmat::haar_orthogonal(n, randmat::derive_seed(cfg.seed, 3));
                vec![
                    vec![Array2::from_diag(&d1)],
                    vec![rotated_diagonal(&u, &d2)],
                ]
            }
            "hadamard_pair" => {
                if !n.is_power_of_two() {
                    return Err(CliError::Config(format!(
                        "hadamard_pair requires a power-of-two size, got {n}"
                    )));
                }
                let d1 = randmat::diag_from_law(n, law, randmat::derive_seed(cfg.seed, 1))?;
                let d2 = randmat::diag_from_law(n, law, randmat::derive_seed(cfg.seed, 2))?;
                let h = randmat::permuted_hadamard(n, randmat::derive_seed(cfg.seed, 3))?;
                vec![
                    vec![Array2::from_diag(&d1)],
                    vec![rotated_diagonal(&h, &d2)],
                ]
            }
            // commuting negative control: independent sign diagonals have
            // unit variance, so the alternating length-4 word stays O(1)
            "independent_diag" => {
                let d1 = randmat::rademacher_diag(n, randmat::derive_seed(cfg.seed, 1));
                let d2 = randmat::rademacher_diag(n, randmat::derive_seed(cfg.seed, 2));
                vec![
                    vec![Array2::from_diag(&d1)],
                    vec![Array2::from_diag(&d2)],
                ]
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown family {other:?} (expected haar_pair, hadamard_pair or independent_diag)"
                )))
            }
        })
    })?;

    let report = watch.time("score", || {
        freeness_score(&family, cfg.degree_bound, cfg.length_bound)
    })?;

    super::write_rows(
        &out_dir.join("freeness_words.csv"),
        "word,trace",
        report
            .per_word
            .iter()
            .map(|w| format!("{},{}", w.word, w.trace)),
    )?;

    let results = json!({
        "status": "ok",
        "report": report,
    });
    Ok(ExperimentRecord {
        command: "freeness".into(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: cfg.seed,
        results,
        wall_times_ms: watch.into_map(),
    })
}
