//! File emission. Every artifact is written to a temporary file in the
//! target directory and renamed into place, so an interrupted run never
//! leaves a partially written file under its final name.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use freejet::domain::{NodeClass, TruncatedDomainGrid};
use freejet::freeboundary::FreeBoundaryCurve;
use freejet::solver::StreamField;

/// Writes `content` to `dir/name` atomically (temp file + rename).
pub fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<PathBuf, String> {
    std::fs::create_dir_all(dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".freejet-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(|e| format!("cannot create temp file in {}: {e}", dir.display()))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| format!("cannot write {name}: {e}"))?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| format!("cannot rename into {}: {e}", path.display()))?;
    Ok(path)
}

/// Column dump of the stream field over non-exterior nodes, one line per
/// node, columns left to right and bottom to top within a column.
pub fn field_table(grid: &TruncatedDomainGrid, field: &StreamField, stride: usize) -> String {
    let mut s = String::from("x y psi wet\n");
    for i in (0..grid.nx()).step_by(stride) {
        for j in (0..grid.ny()).step_by(stride) {
            let k = grid.idx(i, j);
            if grid.class_at(k) == NodeClass::Exterior {
                continue;
            }
            let wet = if field.is_wet(k) { 1 } else { 0 };
            let _ = writeln!(s, "{} {} {} {}", grid.x_of(i), grid.y_of(j), field.value_at(k), wet);
        }
    }
    s
}

/// Column dump of the interface curve; gradient samples skipped near walls
/// print as nan.
pub fn curve_table(curve: &FreeBoundaryCurve) -> String {
    let mut s = String::from("x k grad\n");
    for smp in curve.samples() {
        match smp.grad_mag {
            Some(g) => {
                let _ = writeln!(s, "{} {} {}", smp.x, smp.k, g);
            }
            None => {
                let _ = writeln!(s, "{} {} nan", smp.x, smp.k);
            }
        }
    }
    s
}
