//! One module per subcommand. Every command is a pure function of its
//! typed config (plus the output directory for CSV side files) returning a
//! self-describing [`crate::record::ExperimentRecord`].

pub mod approx_quality;
pub mod bench;
pub mod ep_fit;
pub mod freeness;
pub mod ingest_check;
pub mod local_law;
pub mod transforms;

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Write a CSV side file with full-precision floats (Rust's shortest
/// round-trip formatting, so parsing the file back recovers exact bits).
pub(crate) fn write_rows(
    path: &Path,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}
