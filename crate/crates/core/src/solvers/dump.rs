//! Snapshot files.
//!
//! Binary layout, little-endian: `N: u64`, `n: u64`, `t: f64`, then for
//! every mode in storage order and every component `re: f64, im: f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{Grid, SpectralField};
use crate::system::C64;

pub fn write_binary(path: &Path, field: &SpectralField, t: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(field.grid.n() as u64).to_le_bytes())?;
    w.write_all(&(field.n as u64).to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    for z in &field.data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary snapshot; the torus length is not stored and must be
/// supplied.
pub fn read_binary(path: &Path, length: f64) -> Result<(SpectralField, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let nm = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let t = f64::from_le_bytes(b8);
    let grid = Grid::new(length, nm)?;
    let mut data = Vec::with_capacity(nm * n);
    for _ in 0..nm * n {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        data.push(C64::new(re, f64::from_le_bytes(b8)));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::SizeMismatch { expected: nm * n, got: nm * n + rest.len() / 16 });
    }
    Ok((SpectralField::from_data(grid, n, data)?, t))
}

/// One row per mode and component: `t, mode, k, component, re, im`.
pub fn write_csv(path: &Path, field: &SpectralField, t: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["t", "mode", "k", "component", "re", "im"]).map_err(csv_err)?;
    for i in 0..field.grid.n() {
        for (c, z) in field.at(i).iter().enumerate() {
            w.write_record([
                format!("{t:.16e}"),
                field.grid.mode(i).to_string(),
                format!("{:.16e}", field.grid.k(i)),
                c.to_string(),
                format!("{:.16e}", z.re),
                format!("{:.16e}", z.im),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidConfig(format!("csv: {other:?}")),
    }
}
