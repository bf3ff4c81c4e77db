//! File formats: Matrix Market matrices, plain-text vectors, problem
//! manifests, PGM images and pixel label lists.

pub mod labels;
pub mod manifest;
pub mod matrix_market;
pub mod pgm;

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Whitespace-separated numbers. Lines starting with `#` or `%` are skipped.
pub fn read_vector(text: &str, source_name: &str) -> Result<DVector<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        for tok in line.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                msg: format!("not a number: `{tok}`"),
            })?;
            out.push(v);
        }
    }
    Ok(DVector::from_vec(out))
}

/// One value per line, in round-trip precision.
pub fn write_vector<W: Write>(v: &DVector<f64>, mut out: W) -> Result<()> {
    for x in v.iter() {
        writeln!(out, "{x:e}")?;
    }
    Ok(())
}

pub(crate) fn parse_error(source_name: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        msg: msg.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_round_trip() {
        let v = DVector::from_vec(vec![1.0, -2.5e-17, 3.0 / 7.0]);
        let mut buf = Vec::new();
        write_vector(&v, &mut buf).unwrap();
        let back = read_vector(std::str::from_utf8(&buf).unwrap(), "buf").unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn vector_reports_bad_token() {
        let err = read_vector("1 2\n# note\n3 x\n", "b.txt").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }
}
