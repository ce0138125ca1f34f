//! Text formats for matrices and sample batches.
//!
//! A matrix file holds one or more blocks
//!
//! ```text
//! hpd p
//! re im re im ...   (p rows of p complex entries)
//! ```
//!
//! and a batch file holds
//!
//! ```text
//! batch p n
//! re im re im ...   (n rows, one sample of p complex entries per row)
//! ```
//!
//! Numbers are written in shortest round-trip scientific notation, so reading
//! a written file gives back the same bits.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, ensure, Context, Result};
use cesgeo::{CMatrix, HpdMatrix, SampleBatch};
use num_complex::Complex64;

fn push_complex(out: &mut String, z: Complex64) {
    write!(out, "{:e} {:e}", z.re, z.im).expect("writing to a String cannot fail");
}

fn push_row<'a>(out: &mut String, row: impl Iterator<Item = &'a Complex64>) {
    for (k, z) in row.enumerate() {
        if k > 0 {
            out.push(' ');
        }
        push_complex(out, *z);
    }
    out.push('\n');
}

pub fn write_matrix(out: &mut String, m: &CMatrix) {
    writeln!(out, "hpd {}", m.nrows()).expect("writing to a String cannot fail");
    for i in 0..m.nrows() {
        push_row(out, m.row(i).iter());
    }
}

pub fn format_matrix(m: &CMatrix) -> String {
    let mut out = String::new();
    write_matrix(&mut out, m);
    out
}

pub fn format_batch(batch: &SampleBatch) -> String {
    let data = batch.data();
    let mut out = format!("batch {} {}\n", batch.dim(), batch.count());
    for j in 0..batch.count() {
        push_row(&mut out, data.column(j).iter());
    }
    out
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_complex_row(line_no: usize, line: &str, count: usize) -> Result<Vec<Complex64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| anyhow!("line {line_no}: cannot parse number {tok:?}"))
        })
        .collect::<Result<_>>()?;
    ensure!(
        values.len() == 2 * count,
        "line {line_no}: expected {} numbers ({count} complex entries), found {}",
        2 * count,
        values.len()
    );
    Ok(values.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

fn parse_header(line_no: usize, line: &str, keyword: &str, fields: usize) -> Result<Vec<usize>> {
    let mut parts = line.split_whitespace();
    ensure!(
        parts.next() == Some(keyword),
        "line {line_no}: expected a `{keyword}` header, found {line:?}"
    );
    let values: Vec<usize> = parts
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| anyhow!("line {line_no}: bad header field {t:?}"))
        })
        .collect::<Result<_>>()?;
    ensure!(
        values.len() == fields && values.iter().all(|&v| v > 0),
        "line {line_no}: `{keyword}` header needs {fields} positive integers"
    );
    Ok(values)
}

/// Raw matrices of a matrix file, in order. No positivity check.
pub fn parse_matrices(text: &str) -> Result<Vec<CMatrix>> {
    let mut lines = content_lines(text);
    let mut out = Vec::new();
    while let Some((line_no, header)) = lines.next() {
        let p = parse_header(line_no, header, "hpd", 1)?[0];
        let mut m = CMatrix::zeros(p, p);
        for i in 0..p {
            let (row_no, row) = lines
                .next()
                .ok_or_else(|| anyhow!("matrix {}: unexpected end of file in row {}", out.len(), i + 1))?;
            for (j, z) in parse_complex_row(row_no, row, p)?.into_iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        out.push(m);
    }
    ensure!(!out.is_empty(), "no matrix found");
    Ok(out)
}

/// Matrices validated as HPD; errors name the zero-based index of the offending matrix.
pub fn parse_hpd_list(text: &str) -> Result<Vec<HpdMatrix>> {
    let raw = parse_matrices(text)?;
    let p = raw[0].nrows();
    raw.into_iter()
        .enumerate()
        .map(|(k, m)| {
            ensure!(m.nrows() == p, "matrix {k}: dimension {} differs from {p}", m.nrows());
            HpdMatrix::from_matrix(m).with_context(|| format!("matrix {k} is not a valid HPD matrix"))
        })
        .collect()
}

pub fn parse_hpd(text: &str) -> Result<HpdMatrix> {
    let mut list = parse_hpd_list(text)?;
    if list.len() != 1 {
        bail!("expected one matrix, found {}", list.len());
    }
    Ok(list.remove(0))
}

pub fn parse_batch(text: &str) -> Result<SampleBatch> {
    let mut lines = content_lines(text);
    let (line_no, header) = lines.next().ok_or_else(|| anyhow!("empty batch file"))?;
    let dims = parse_header(line_no, header, "batch", 2)?;
    let (p, n) = (dims[0], dims[1]);
    let mut data = CMatrix::zeros(p, n);
    for j in 0..n {
        let (row_no, row) = lines
            .next()
            .ok_or_else(|| anyhow!("batch: expected {n} samples, found {j}"))?;
        for (i, z) in parse_complex_row(row_no, row, p)?.into_iter().enumerate() {
            data[(i, j)] = z;
        }
    }
    if let Some((extra, _)) = lines.next() {
        bail!("line {extra}: trailing content after {n} samples");
    }
    Ok(SampleBatch::new(data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cesgeo::models::sample_batch;
    use cesgeo::{CesModel, SeededRng};

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(1, 0);
        let a = rng.complex_normal_matrix(3, 3);
        let m = HpdMatrix::from_matrix(&a * a.adjoint()).unwrap();
        let text = format_matrix(m.matrix());
        assert!(text.starts_with("hpd 3\n"));
        let back = parse_hpd(&text).unwrap();
        assert_eq!(back.matrix(), m.matrix());
        assert_eq!(format_matrix(back.matrix()), text);
    }

    #[test]
    fn batch_round_trip_is_bit_exact() {
        let sigma = HpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let batch = sample_batch(&sigma, &CesModel::gaussian(2), 5, &mut SeededRng::new(2, 0)).unwrap();
        let text = format_batch(&batch);
        assert!(text.starts_with("batch 2 5\n"));
        assert_eq!(text.lines().count(), 6);
        assert_eq!(parse_batch(&text).unwrap(), batch);
    }

    #[test]
    fn hand_written_matrix() {
        let m = parse_hpd("# comment\nhpd 2\n2 0  0.5 0.5\n0.5 -0.5  1 0\n").unwrap();
        assert_eq!(m.matrix()[(0, 1)], Complex64::new(0.5, 0.5));
        assert_eq!(m.matrix()[(1, 0)], Complex64::new(0.5, -0.5));
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_batch("batch 2 2\n1 0 0 0\n").is_err());
        assert!(parse_batch("batch 2 1\n1 0 x 0\n").is_err());
        assert!(parse_batch("batch 2 1\n1 0 0 0\n1 0 0 0\n").is_err());
        assert!(parse_batch("hpd 2\n").is_err());
        assert!(parse_hpd("hpd 2\n1 0 0 0\n").is_err());
        assert!(parse_hpd("").is_err());
    }

    #[test]
    fn non_hpd_entry_is_named() {
        let text = "hpd 1\n1 0\nhpd 1\n2 0\nhpd 1\n-1 0\n";
        let err = format!("{:#}", parse_hpd_list(text).unwrap_err());
        assert!(err.contains("matrix 2"), "{err}");
    }
}
