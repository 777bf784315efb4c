//! Field snapshot file format.
//!
//! One JSON header line followed by raw binary component data:
//! for each component in order, n³ little-endian f64 values in row-major
//! layout (the third coordinate varies fastest). Round-trips are bit-exact.

use super::field::{ScalarField, VectorField};
use super::grid::PeriodicGrid;
use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapshotHeader {
    pub grid_n: usize,
    pub field: String,
    pub components: usize,
    pub time: f64,
    pub byte_order: String,
    pub scalar: String,
}

impl SnapshotHeader {
    fn new(grid: PeriodicGrid, field: &str, components: usize, time: f64) -> Self {
        Self {
            grid_n: grid.n(),
            field: field.to_string(),
            components,
            time,
            byte_order: "little".to_string(),
            scalar: "f64".to_string(),
        }
    }
}

pub fn write_components(
    path: &Path,
    field_name: &str,
    time: f64,
    components: &[&ScalarField],
) -> Result<()> {
    if components.is_empty() {
        return Err(CoreError::InvalidInput("no components to write".into()));
    }
    let grid = components[0].grid();
    let header = SnapshotHeader::new(grid, field_name, components.len(), time);
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for comp in components {
        if comp.grid() != grid {
            return Err(CoreError::InvalidInput("component grid mismatch".into()));
        }
        for v in comp.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_scalar(path: &Path, name: &str, time: f64, f: &ScalarField) -> Result<()> {
    write_components(path, name, time, &[f])
}

pub fn write_vector(path: &Path, name: &str, time: f64, v: &VectorField) -> Result<()> {
    write_components(
        path,
        name,
        time,
        &[v.component(0), v.component(1), v.component(2)],
    )
}

pub struct Snapshot {
    pub header: SnapshotHeader,
    pub grid: PeriodicGrid,
    pub components: Vec<ScalarField>,
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_line = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
        if header_line.len() > 1 << 16 {
            return Err(CoreError::InvalidInput("snapshot header too long".into()));
        }
    }
    let header: SnapshotHeader = serde_json::from_slice(&header_line)?;
    if header.byte_order != "little" || header.scalar != "f64" {
        return Err(CoreError::InvalidInput(format!(
            "unsupported snapshot encoding: {} / {}",
            header.byte_order, header.scalar
        )));
    }
    let grid = PeriodicGrid::new(header.grid_n)?;
    let mut components = Vec::with_capacity(header.components);
    let mut buf = vec![0u8; grid.len() * 8];
    for _ in 0..header.components {
        r.read_exact(&mut buf)?;
        let values: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunked by 8")))
            .collect();
        components.push(ScalarField::from_values(grid, values)?);
    }
    Ok(Snapshot {
        header,
        grid,
        components,
    })
}

pub fn read_vector(path: &Path) -> Result<(SnapshotHeader, VectorField)> {
    let snap = read_snapshot(path)?;
    if snap.components.len() != 3 {
        return Err(CoreError::InvalidInput(format!(
            "expected 3 components in {}, found {}",
            path.display(),
            snap.components.len()
        )));
    }
    let mut it = snap.components.into_iter();
    let v = VectorField::new([
        it.next().expect("len checked"),
        it.next().expect("len checked"),
        it.next().expect("len checked"),
    ])?;
    Ok((snap.header, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.fld");
        let grid = PeriodicGrid::new(8).unwrap();
        let v = VectorField::from_fn(grid, |[x, y, z]| {
            [x.sin() * 1.0e-17 + 0.3, y.cos(), (x + z).sin()]
        });
        write_vector(&path, "u", 0.625, &v).unwrap();
        let (header, back) = read_vector(&path).unwrap();
        assert_eq!(header.time, 0.625);
        assert_eq!(header.grid_n, 8);
        for d in 0..3 {
            for (a, b) in v.component(d).values().iter().zip(back.component(d).values()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
