//! Matrix Market coordinate I/O (real, general or symmetric).
//!
//! Indices are 1-based on disk and 0-based in memory. Symmetric files store
//! the lower triangle and are mirrored on read. Values are written in
//! shortest-round-trip exponent form, so write/read reproduces doubles
//! exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dense::DenseMatrix;
use crate::ellpack::{EllpackEngine, EllpackMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtxSymmetry {
    General,
    Symmetric,
}

impl MtxSymmetry {
    fn keyword(self) -> &'static str {
        match self {
            MtxSymmetry::General => "general",
            MtxSymmetry::Symmetric => "symmetric",
        }
    }
}

fn bad(line_no: usize, msg: impl std::fmt::Display) -> Error {
    Error::MatrixMarket(format!("line {line_no}: {msg}"))
}

/// Reads a coordinate file into `(n, entries)` with 0-based indices;
/// symmetric files come back fully mirrored. Only square matrices are
/// accepted.
pub fn read_coo(path: &Path) -> Result<(usize, Vec<(usize, usize, f64)>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, banner) = lines
        .next()
        .ok_or_else(|| bad(1, "empty file"))
        .and_then(|(i, l)| l.map(|l| (i, l)).map_err(Error::Io))?;
    let banner_lc = banner.to_lowercase();
    if !banner_lc.starts_with("%%matrixmarket") {
        return Err(bad(1, "missing MatrixMarket banner"));
    }
    let fields: Vec<&str> = banner_lc.split_whitespace().collect();
    if fields.len() < 5
        || fields[1] != "matrix"
        || fields[2] != "coordinate"
        || fields[3] != "real"
    {
        return Err(bad(1, format!("unsupported banner `{}`", banner.trim())));
    }
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(bad(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let mut it = line.split_whitespace();
        match dims {
            None => {
                let rows: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(line_no, "bad size line"))?;
                let cols: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(line_no, "bad size line"))?;
                let nnz: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(line_no, "bad size line"))?;
                if rows != cols {
                    return Err(bad(line_no, "only square matrices are supported"));
                }
                dims = Some((rows, cols, nnz));
                entries.reserve(if symmetric { 2 * nnz } else { nnz });
            }
            Some((rows, _, _)) => {
                let i: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(line_no, "bad entry"))?;
                let j: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(line_no, "bad entry"))?;
                let v: f64 = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(line_no, "bad entry"))?;
                if i == 0 || j == 0 || i > rows || j > rows {
                    return Err(bad(line_no, "index out of range"));
                }
                if symmetric && j > i {
                    return Err(bad(line_no, "symmetric file stores the lower triangle"));
                }
                entries.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    entries.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (n, _, nnz) = dims.ok_or_else(|| bad(0, "missing size line"))?;
    // Mirroring added one entry per off-diagonal line; count file lines only.
    let stored = if symmetric {
        entries.iter().filter(|(i, j, _)| i >= j).count()
    } else {
        entries.len()
    };
    if stored != nnz {
        return Err(Error::MatrixMarket(format!(
            "size line declares {nnz} entries, file has {stored}"
        )));
    }
    Ok((n, entries))
}

pub fn read_dense(path: &Path) -> Result<DenseMatrix> {
    let (n, entries) = read_coo(path)?;
    let mut d = DenseMatrix::zeros(n);
    for (i, j, v) in entries {
        d.set(i, j, d.get(i, j) + v);
    }
    Ok(d)
}

pub fn read_ellpack(path: &Path, engine: &EllpackEngine) -> Result<EllpackMatrix> {
    let (n, mut entries) = read_coo(path)?;
    engine.from_coo(n, &mut entries)
}

fn write_entries<W: Write>(
    out: &mut W,
    n: usize,
    entries: &[(usize, usize, f64)],
    symmetry: MtxSymmetry,
) -> Result<()> {
    writeln!(
        out,
        "%%MatrixMarket matrix coordinate real {}",
        symmetry.keyword()
    )?;
    writeln!(out, "{} {} {}", n, n, entries.len())?;
    for &(i, j, v) in entries {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Writes entries with `|value| > threshold`; symmetric output keeps the
/// lower triangle and requires a symmetric matrix.
pub fn write_dense(
    path: &Path,
    d: &DenseMatrix,
    symmetry: MtxSymmetry,
    threshold: f64,
) -> Result<()> {
    if symmetry == MtxSymmetry::Symmetric && !d.is_symmetric() {
        return Err(Error::InvalidParams(
            "symmetric output requires a symmetric matrix",
        ));
    }
    let n = d.n();
    let mut entries = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if symmetry == MtxSymmetry::Symmetric && j > i {
                continue;
            }
            let v = d.get(i, j);
            if v.abs() > threshold {
                entries.push((i, j, v));
            }
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    write_entries(&mut out, n, &entries, symmetry)?;
    out.flush()?;
    Ok(())
}

/// Writes all stored entries of an ELLPACK matrix.
pub fn write_ellpack(path: &Path, m: &EllpackMatrix, symmetry: MtxSymmetry) -> Result<()> {
    let n = m.n();
    let mut entries = Vec::new();
    for i in 0..n {
        for (&j, &v) in m.row_cols(i).iter().zip(m.row_vals(i)) {
            if symmetry == MtxSymmetry::Symmetric && j > i {
                continue;
            }
            entries.push((i, j, v));
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    write_entries(&mut out, n, &entries, symmetry)?;
    out.flush()?;
    Ok(())
}
