//! `GTCE-TENSOR` text matrices.
//!
//! ```text
//! GTCE-TENSOR 1 <rows> <cols>
//! <cols space-separated reals>   (rows lines)
//! ```
//!
//! Values are written with 17 significant digits so that reading a file
//! back yields bit-identical `f64`s.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

const MAGIC: &str = "GTCE-TENSOR";
const VERSION: u32 = 1;

pub fn format_tensor(m: &Array2<f64>) -> String {
    let (rows, cols) = m.dim();
    let mut out = format!("{MAGIC} {VERSION} {rows} {cols}\n");
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_tensor(text: &str) -> Result<Array2<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::TensorFormat("empty document".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != MAGIC {
        return Err(Error::TensorFormat(format!("bad header {header:?}")));
    }
    let version: u32 = parse_field(fields[1], "version")?;
    if version != VERSION {
        return Err(Error::TensorFormat(format!(
            "unsupported version {version}"
        )));
    }
    let rows: usize = parse_field(fields[2], "rows")?;
    let cols: usize = parse_field(fields[3], "cols")?;

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (i, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::TensorFormat(format!("row {i}: bad number {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::TensorFormat(format!(
                "row {i}: expected {cols} values, found {}",
                data.len() - before
            )));
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::TensorFormat(format!(
            "expected {rows} rows, found {seen_rows}"
        )));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::TensorFormat(e.to_string()))
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::TensorFormat(format!("bad {what} {s:?}")))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    parse_tensor(&std::fs::read_to_string(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<()> {
    std::fs::write(path, format_tensor(m))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn header_and_layout() {
        let m = array![[0.5, 0.25], [1.0, -2.0]];
        let text = format_tensor(&m);
        assert!(text.starts_with("GTCE-TENSOR 1 2 2\n"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_tensor(&text).unwrap(), m);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(parse_tensor("").is_err());
        assert!(parse_tensor("GTCE-TENSOR 2 1 1\n0\n").is_err());
        assert!(parse_tensor("GTCE-TENSOR 1 2 2\n1 2\n").is_err());
        assert!(parse_tensor("GTCE-TENSOR 1 1 2\n1 2 3\n").is_err());
        assert!(parse_tensor("GTCE-TENSOR 1 1 1\nabc\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in proptest::collection::vec(-1e6f64..1e6, 25)
        ) {
            let m = Array2::from_shape_fn((rows, cols), |(r, c)| seed[r * 5 + c] / 7.0);
            let back = parse_tensor(&format_tensor(&m)).unwrap();
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
