//! Plain-text dense matrix format: a `<rows> <cols>` line followed by one
//! line of space-separated values per row. Values are written with Rust's
//! shortest round-trip representation, so reading back is exact.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn write_matrix<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_vector<W: Write>(out: &mut W, v: &DVector<f64>) -> Result<()> {
    write_matrix(out, &DMatrix::from_row_slice(1, v.len(), v.as_slice()))
}

/// Reads one matrix block from `lines`, advancing past it.
pub fn read_matrix<B: BufRead>(lines: &mut std::io::Lines<B>, origin: &str) -> Result<DMatrix<f64>> {
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(origin, "missing matrix header"))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::parse(origin, format!("bad matrix header `{header}`"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::parse(origin, format!("bad matrix header `{header}`")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(origin, format!("matrix ended after {r} of {rows} rows")))??;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(origin, format!("bad number `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, format!("non-finite value `{tok}`")));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                origin,
                format!("matrix row {r} has {} values, expected {cols}", data.len() - before),
            ));
        }
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_vector<B: BufRead>(lines: &mut std::io::Lines<B>, origin: &str) -> Result<DVector<f64>> {
    let m = read_matrix(lines, origin)?;
    if m.nrows() != 1 {
        return Err(Error::parse(origin, "expected a single-row vector"));
    }
    Ok(DVector::from_iterator(m.ncols(), m.iter().copied()))
}
