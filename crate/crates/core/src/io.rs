//! Field file formats.
//!
//! * CSV: one line per `s1`, comma-separated values along `s2`, no header.
//! * Binary: 16-byte header (`b"LATF"`, u32 LE version = 1, u32 LE `n1`,
//!   u32 LE `n2`) followed by `n1 * n2` little-endian f64 values in
//!   column-major order (`s1` varies fastest).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::LatticeField;

pub const BINARY_MAGIC: [u8; 4] = *b"LATF";
pub const BINARY_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), message: message.into() }
}

pub fn write_csv(field: &LatticeField, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    for row in field.values().rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| format_err(path, e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<LatticeField> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let mut data = Vec::new();
    let mut n2 = None;
    let mut n1 = 0;
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        if *n2.get_or_insert(record.len()) != record.len() {
            return Err(format_err(path, format!("row {} has {} columns", line + 1, record.len())));
        }
        for cell in record.iter() {
            let v: f64 = cell
                .parse()
                .map_err(|_| format_err(path, format!("row {}: cannot parse `{cell}`", line + 1)))?;
            data.push(v);
        }
        n1 += 1;
    }
    LatticeField::from_row_major(n1, n2.unwrap_or(0), data)
}

pub fn write_binary(field: &LatticeField, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(&BINARY_MAGIC);
    header.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    header.extend_from_slice(&(field.n1() as u32).to_le_bytes());
    header.extend_from_slice(&(field.n2() as u32).to_le_bytes());
    w.write_all(&header).map_err(io_err(path))?;
    for v in field.values().t().iter() {
        w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_binary(path: &Path) -> Result<LatticeField> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.len() < 16 || bytes[..4] != BINARY_MAGIC {
        return Err(format_err(path, "missing LATF header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != BINARY_VERSION {
        return Err(format_err(path, format!("unsupported version {}", word(4))));
    }
    let (n1, n2) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    if body.len() != n1 * n2 * 8 {
        return Err(format_err(path, format!("expected {} values, found {} bytes", n1 * n2, body.len())));
    }
    let mut row_major = vec![0.0; n1 * n2];
    for (i, chunk) in body.chunks_exact(8).enumerate() {
        let (s2, s1) = (i / n1, i % n1);
        row_major[s1 * n2 + s2] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    LatticeField::from_row_major(n1, n2, row_major)
}

/// Read either format, chosen by extension (`.csv` or anything else = binary).
pub fn read_field(path: &Path) -> Result<LatticeField> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path),
        _ => read_binary(path),
    }
}

pub fn write_field(field: &LatticeField, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => write_csv(field, path),
        _ => write_binary(field, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn both_formats_roundtrip(n1 in 1usize..9, n2 in 1usize..9, data in proptest::collection::vec(-1e6f64..1e6, 81)) {
            let field = LatticeField::from_row_major(n1, n2, data[..n1 * n2].to_vec()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            for name in ["f.csv", "f.bin"] {
                let path = dir.path().join(name);
                write_field(&field, &path).unwrap();
                prop_assert_eq!(&read_field(&path).unwrap(), &field);
            }
        }
    }

    #[test]
    fn binary_layout_is_column_major() {
        let field = LatticeField::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_binary(&field, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(&bytes[..4], b"LATF");
        let second = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        assert_eq!(second, 4.0);
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Format { .. })));
    }
}
