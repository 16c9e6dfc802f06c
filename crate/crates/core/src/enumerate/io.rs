//! Plain-text exchange formats for `A`.
//!
//! The compact format is a header line `I H` followed by one column per line as
//! space-separated 1-based within-budget pick indices.

use std::io::{BufRead, BufReader, Read, Write};

use super::RationalMatrix;
use crate::error::{Error, Result};
use crate::revpref::Axiom;

pub fn write_a_file<W: Write>(a: &RationalMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{} {}", a.n_rows(), a.n_cols())?;
    let mut line = String::new();
    for col in a.columns().take(a.n_cols()) {
        line.clear();
        for (i, p) in col.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&(p + 1).to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Read the compact format. Block sizes are not stored in the file and must match
/// the patch table the matrix was built from.
pub fn read_a_file<R: Read>(r: R, block_sizes: &[usize], axiom: Axiom) -> Result<RationalMatrix> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let bad = |line: usize, msg: String| Error::Data(format!("A file line {}: {msg}", line + 1));
    let (ln, header) = lines.next().ok_or_else(|| Error::Data("A file is empty".into()))?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad(ln, format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let [i, h] = dims[..] else {
        return Err(bad(ln, "header must be `I H`".into()));
    };
    let expected_i: usize = block_sizes.iter().sum();
    if i != expected_i {
        return Err(bad(ln, format!("I = {i} but the patch table has {expected_i} patches")));
    }
    let mut cols = Vec::with_capacity(h);
    for (ln, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let picks: Vec<u32> = line
            .split_whitespace()
            .map(|s| match s.parse::<u32>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(bad(ln, format!("bad pick {s:?}"))),
            })
            .collect::<Result<_>>()?;
        cols.push(picks);
    }
    if cols.len() != h {
        return Err(Error::Data(format!("A file declares H = {h} but has {} columns", cols.len())));
    }
    RationalMatrix::from_columns(block_sizes.to_vec(), cols, axiom).map_err(|e| match e {
        Error::Validation(m) => Error::Data(format!("A file: {m}")),
        other => other,
    })
}

/// Dense `I x H` 0/1 matrix as headerless CSV.
pub fn write_dense_csv<W: Write>(a: &RationalMatrix, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in a.to_rows() {
        wr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}
