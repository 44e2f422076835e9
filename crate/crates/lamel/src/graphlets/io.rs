//! Text serialization of feature matrices.
//!
//! Sparse format, one file carrying both matrix and vocabulary:
//!
//! ```text
//! rows cols nnz max_size
//! row col count            (nnz lines)
//! index canonical_form     (cols lines)
//! ```
//!
//! Small matrices can also be exported as dense CSV with one column per
//! canonical form.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{CanonicalKey, FeatureMatrix, FingerprintVocabulary, GraphletError, SparseEntry};

#[derive(Debug, Error)]
pub enum MatrixIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Graphlet(#[from] GraphletError),
}

fn malformed(line: usize, message: impl Into<String>) -> MatrixIoError {
    MatrixIoError::Malformed {
        line,
        message: message.into(),
    }
}

pub fn write_sparse<W: Write>(
    out: &mut W,
    matrix: &FeatureMatrix,
    vocab: &FingerprintVocabulary,
) -> Result<(), MatrixIoError> {
    writeln!(
        out,
        "{} {} {} {}",
        matrix.rows(),
        matrix.cols(),
        matrix.nnz(),
        vocab.max_size()
    )?;
    for e in matrix.entries() {
        writeln!(out, "{} {} {}", e.row, e.col, e.count)?;
    }
    for (i, key) in vocab.columns().iter().enumerate() {
        writeln!(out, "{} {}", i, key.canonical_form())?;
    }
    Ok(())
}

/// Reads the sparse format back. Row ids are not part of the format; they
/// come back as row indices.
pub fn read_sparse<R: BufRead>(
    input: R,
) -> Result<(FeatureMatrix, FingerprintVocabulary), MatrixIoError> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "missing header"))?;
    let header = header?;
    let fields: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| malformed(1, format!("bad header: {e}")))?;
    let [rows, cols, nnz, max_size] = fields[..] else {
        return Err(malformed(1, "header needs `rows cols nnz max_size`"));
    };

    let mut entries = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| malformed(0, "unexpected end of entries"))?;
        let line = line?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [row, col, count] = parts[..] else {
            return Err(malformed(idx + 1, "entry needs `row col count`"));
        };
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| malformed(idx + 1, format!("bad entry: {e}")))
        };
        let (row, col, count) = (parse(row)? as usize, parse(col)? as usize, parse(count)?);
        if row >= rows || col >= cols {
            return Err(malformed(idx + 1, "entry out of bounds"));
        }
        entries.push(SparseEntry { row, col, count });
    }

    let mut keys = Vec::with_capacity(cols);
    for _ in 0..cols {
        let (idx, line) = lines
            .next()
            .ok_or_else(|| malformed(0, "unexpected end of vocabulary"))?;
        let line = line?;
        let Some((index, form)) = line.split_once(' ') else {
            return Err(malformed(idx + 1, "vocabulary line needs `index form`"));
        };
        let index: usize = index
            .parse()
            .map_err(|e| malformed(idx + 1, format!("bad vocabulary index: {e}")))?;
        if index != keys.len() {
            return Err(malformed(idx + 1, "vocabulary indices out of order"));
        }
        keys.push(CanonicalKey::from_form(form.to_string()));
    }
    let vocab = FingerprintVocabulary::from_keys(keys.clone(), max_size)?;
    // from_keys sorts; the file must already be in canonical order
    if vocab.columns() != keys.as_slice() {
        return Err(malformed(0, "vocabulary not in canonical order"));
    }

    let row_ids = (0..rows).map(|r| r.to_string()).collect();
    Ok((FeatureMatrix::new(rows, cols, entries, row_ids), vocab))
}

/// Dense CSV with a header of canonical forms; intended for small
/// vocabularies.
pub fn write_dense_csv<W: Write>(
    out: &mut W,
    matrix: &FeatureMatrix,
    vocab: &FingerprintVocabulary,
) -> Result<(), MatrixIoError> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(
        vocab
            .columns()
            .iter()
            .map(|k| k.canonical_form().to_string()),
    );
    writer
        .write_record(&header)
        .map_err(|e| malformed(1, e.to_string()))?;
    let dense = matrix.to_dense();
    for (row, id) in matrix.row_ids().iter().enumerate() {
        let mut record = vec![id.clone()];
        record.extend((0..matrix.cols()).map(|c| format!("{}", dense[(row, c)] as u64)));
        writer
            .write_record(&record)
            .map_err(|e| malformed(row + 2, e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
