//! CSV ingestion for binary-labelled expression-style tables (rows are
//! samples, columns are features plus one label column), with optional
//! per-column standardization, and a synthetic data generator that writes
//! compatible files.

use ndarray::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use epfree_core::randmat;

use crate::error::{CliError, Result};

/// In-memory dataset with strict +-1 labels and no non-finite entries.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub feature_names: Option<Vec<String>>,
    pub standardized: bool,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }
}

/// Ingestion options; the label column may be named (header) or a 0-based
/// index, defaulting to the last column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestOptions {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default)]
    pub standardize: bool,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            delimiter: ',',
            has_header: true,
            label_column: None,
            standardize: false,
        }
    }
}

fn map_label(raw: &str, row: usize) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v == 1.0 => Ok(1.0),
        Ok(v) if v == 0.0 || v == -1.0 => Ok(-1.0),
        _ => Err(CliError::UnmappableLabel {
            value: raw.trim().to_string(),
            row,
        }),
    }
}

/// Parse a rectangular table into a [`Dataset`]. Labels `{0, -1}` map to
/// `-1` and `{1}` to `+1`. With `standardize`, every feature column is
/// shifted and scaled to mean zero and unit variance; zero-variance columns
/// are dropped with a warning.
pub fn ingest_csv(path: &Path, opts: &IngestOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .has_headers(opts.has_header)
        .flexible(true)
        .from_path(path)?;

    let headers: Option<Vec<String>> = if opts.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| CliError::Config(format!("cannot read header: {e}")))?
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    } else {
        None
    };

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("csv read failed: {e}")))?;
        let row: Vec<String> = rec.iter().map(|s| s.to_string()).collect();
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::RaggedRows {
                    row: i + 1,
                    expected: first.len(),
                    got: row.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Config("empty table".into()));
    }
    let width = rows[0].len();
    if let Some(h) = &headers {
        if h.len() != width {
            return Err(CliError::RaggedRows {
                row: 0,
                expected: h.len(),
                got: width,
            });
        }
    }

    // locate the label column
    let label_idx = match &opts.label_column {
        None => width - 1,
        Some(spec) => {
            if let Ok(idx) = spec.parse::<usize>() {
                if idx >= width {
                    return Err(CliError::Config(format!(
                        "label column index {idx} out of range (width {width})"
                    )));
                }
                idx
            } else {
                let h = headers.as_ref().ok_or_else(|| {
                    CliError::Config("named label column requires a header row".into())
                })?;
                h.iter().position(|c| c == spec).ok_or_else(|| {
                    CliError::Config(format!("label column {spec:?} not found in header"))
                })?
            }
        }
    };

    let n = rows.len();
    let k = width - 1;
    let mut x = Array2::<f64>::zeros((n, k));
    let mut y = Array1::<f64>::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut col_out = 0;
        for (j, cell) in row.iter().enumerate() {
            if j == label_idx {
                y[i] = map_label(cell, i + 1)?;
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| CliError::Parse {
                line: i + 1 + usize::from(opts.has_header),
                column: j + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    line: i + 1 + usize::from(opts.has_header),
                    column: j + 1,
                    message: "non-finite value".into(),
                });
            }
            x[[i, col_out]] = v;
            col_out += 1;
        }
    }

    let mut feature_names = headers.map(|h| {
        h.iter()
            .enumerate()
            .filter(|(j, _)| *j != label_idx)
            .map(|(_, c)| c.clone())
            .collect::<Vec<_>>()
    });

    let standardized = opts.standardize;
    if standardized {
        let mut keep: Vec<usize> = Vec::with_capacity(k);
        let mut cols: Vec<Array1<f64>> = Vec::with_capacity(k);
        for j in 0..k {
            let col = x.column(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if var <= 1e-20 * (1.0 + mean * mean) {
                let name = feature_names
                    .as_ref()
                    .map(|f| f[j].clone())
                    .unwrap_or_else(|| format!("column {j}"));
                log::warn!("dropping zero-variance feature {name}");
                continue;
            }
            let sd = var.sqrt();
            keep.push(j);
            cols.push(col.mapv(|v| (v - mean) / sd));
        }
        if keep.is_empty() {
            return Err(CliError::Config(
                "standardization dropped every column".into(),
            ));
        }
        let mut xs = Array2::<f64>::zeros((n, keep.len()));
        for (out_j, col) in cols.iter().enumerate() {
            xs.column_mut(out_j).assign(col);
        }
        x = xs;
        feature_names = feature_names.map(|f| keep.iter().map(|&j| f[j].clone()).collect());
    }

    Ok(Dataset {
        x,
        y,
        feature_names,
        standardized,
    })
}

/// Parameters for synthetic expression-style data: Gaussian design, planted
/// sparse coefficients, probit labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub k: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_one")]
    pub slab_var: f64,
    #[serde(default = "default_one")]
    pub noise_var: f64,
    /// Entry scale of the design; defaults to `1/sqrt(K)`.
    #[serde(default)]
    pub x_scale: Option<f64>,
    pub seed: u64,
}

fn default_rho() -> f64 {
    0.1
}

fn default_one() -> f64 {
    1.0
}

/// Draw a synthetic dataset together with the planted coefficients.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(Dataset, Array1<f64>)> {
    if spec.n == 0 || spec.k == 0 {
        return Err(CliError::Config("synthetic sizes must be >= 1".into()));
    }
    if !(spec.rho > 0.0 && spec.rho <= 1.0) {
        return Err(CliError::Config(format!(
            "rho must lie in (0, 1], got {}",
            spec.rho
        )));
    }
    let scale = spec.x_scale.unwrap_or(1.0 / (spec.k as f64).sqrt());
    let x = randmat::gaussian_iid(spec.n, spec.k, scale, randmat::derive_seed(spec.seed, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(randmat::derive_seed(spec.seed, 2));
    let w = Array1::from_shape_fn(spec.k, |_| {
        if rng.gen::<f64>() < spec.rho {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * spec.slab_var.sqrt()
        } else {
            0.0
        }
    });
    let noise = randmat::gaussian_iid(spec.n, 1, spec.noise_var.sqrt(), randmat::derive_seed(spec.seed, 3))
        .column(0)
        .to_owned();
    let y = (x.dot(&w) + &noise).mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 });
    let feature_names = Some((1..=spec.k).map(|j| format!("g{j}")).collect());
    Ok((
        Dataset {
            x,
            y,
            feature_names,
            standardized: false,
        },
        w,
    ))
}

/// Write a dataset as CSV with a header and full-precision floats (shortest
/// representation that parses back to the same bits).
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let names: Vec<String> = dataset
        .feature_names
        .clone()
        .unwrap_or_else(|| (1..=dataset.k()).map(|j| format!("g{j}")).collect());
    writeln!(f, "{},label", names.join(","))?;
    for i in 0..dataset.n() {
        for j in 0..dataset.k() {
            write!(f, "{},", dataset.x[[i, j]])?;
        }
        writeln!(f, "{}", if dataset.y[i] > 0.0 { 1 } else { -1 })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn toy_csv_with_header() {
        let f = write_tmp("a,b,label\n0.5,1.5,1\n-0.25,2.0,0\n");
        let d = ingest_csv(f.path(), &IngestOptions::default()).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.k(), 2);
        assert_eq!(d.y.to_vec(), vec![1.0, -1.0]);
        assert_eq!(d.feature_names, Some(vec!["a".into(), "b".into()]));
        assert_eq!(d.x[[1, 0]], -0.25);
    }

    #[test]
    fn named_label_column_in_middle() {
        let f = write_tmp("a,label,b\n0.5,1,1.5\n-0.25,-1,2.0\n");
        let opts = IngestOptions {
            label_column: Some("label".into()),
            ..Default::default()
        };
        let d = ingest_csv(f.path(), &opts).unwrap();
        assert_eq!(d.k(), 2);
        assert_eq!(d.x[[0, 1]], 1.5);
        assert_eq!(d.y.to_vec(), vec![1.0, -1.0]);
    }

    #[test]
    fn ragged_rows_detected() {
        let f = write_tmp("a,b,label\n1,2,1\n1,2\n");
        assert!(matches!(
            ingest_csv(f.path(), &IngestOptions::default()),
            Err(CliError::RaggedRows { .. })
        ));
    }

    #[test]
    fn bad_label_detected() {
        let f = write_tmp("a,label\n1,2\n");
        assert!(matches!(
            ingest_csv(f.path(), &IngestOptions::default()),
            Err(CliError::UnmappableLabel { .. })
        ));
    }

    #[test]
    fn parse_error_reports_position() {
        let f = write_tmp("a,b,label\n1,x,1\n");
        match ingest_csv(f.path(), &IngestOptions::default()) {
            Err(CliError::Parse { line, column, .. }) => {
                assert_eq!((line, column), (2, 2));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn constant_column_dropped_under_standardization() {
        let f = write_tmp("a,b,label\n1,3.5,1\n2,3.5,0\n3,3.5,1\n");
        let opts = IngestOptions {
            standardize: true,
            ..Default::default()
        };
        let d = ingest_csv(f.path(), &opts).unwrap();
        assert_eq!(d.k(), 1);
        assert_eq!(d.feature_names, Some(vec!["a".into()]));
        // standardized column: mean 0, population variance 1
        let mean = d.x.column(0).sum() / 3.0;
        let var = d.x.column(0).iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!(d.standardized);
    }

    #[test]
    fn synthetic_roundtrip_is_bit_identical() {
        let spec = SyntheticSpec {
            n: 16,
            k: 8,
            rho: 0.3,
            slab_var: 1.0,
            noise_var: 1.0,
            x_scale: None,
            seed: 9,
        };
        let (d, _) = synthesize(&spec).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, f.path()).unwrap();
        let back = ingest_csv(f.path(), &IngestOptions::default()).unwrap();
        assert_eq!(d.x, back.x);
        assert_eq!(d.y, back.y);
        assert_eq!(d.feature_names, back.feature_names);
    }
}
