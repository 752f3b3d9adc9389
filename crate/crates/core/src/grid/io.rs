//! Field snapshot formats.
//!
//! CSV: a header `x[,y[,z]],value` followed by one row per node in
//! row-major order.
//!
//! Binary (all little-endian): `u32` dimension, `u64` node count per axis,
//! `f64` spacing per axis, then the nodal values as `f64` in row-major order.

use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use super::{Field, Mesh};
use crate::error::{Error, Result};

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn write_csv<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let mesh = field.mesh();
    let dim = mesh.dim();
    writeln!(out, "{},value", AXES[..dim].join(","))?;
    for (idx, v) in field.values().iter().enumerate() {
        let x = mesh.coords(idx);
        for xk in &x[..dim] {
            write!(out, "{xk},")?;
        }
        writeln!(out, "{v}")?;
    }
    Ok(())
}

/// Reads a CSV snapshot onto `mesh`. Rows must follow the node order;
/// coordinates are checked against the mesh.
pub fn read_csv<R: BufRead>(mesh: Arc<Mesh>, input: R) -> Result<Field> {
    let dim = mesh.dim();
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))??;
    let expected = format!("{},value", AXES[..dim].join(","));
    if header.trim() != expected {
        return Err(Error::Format(format!("expected header `{expected}`, got `{header}`")));
    }
    let mut values = Vec::with_capacity(mesh.len());
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != dim + 1 {
            return Err(Error::Format(format!("row {}: expected {} columns", row + 1, dim + 1)));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("row {}: {e}", row + 1)))
        };
        if values.len() >= mesh.len() {
            return Err(Error::Format("more rows than mesh nodes".into()));
        }
        let x = mesh.coords(values.len());
        for k in 0..dim {
            let c = parse(cols[k])?;
            if (c - x[k]).abs() > 1e-9 * (1.0 + mesh.lengths()[k]) {
                return Err(Error::Format(format!(
                    "row {}: coordinate {c} does not match node at {}",
                    row + 1,
                    x[k]
                )));
            }
        }
        values.push(parse(cols[dim])?);
    }
    Field::from_values(mesh, values)
}

pub fn write_binary<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let mesh = field.mesh();
    out.write_all(&(mesh.dim() as u32).to_le_bytes())?;
    for &n in mesh.counts() {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for &h in mesh.spacing() {
        out.write_all(&h.to_le_bytes())?;
    }
    for v in field.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a binary snapshot; the mesh is rebuilt from the header.
pub fn read_binary<R: Read>(mut input: R) -> Result<Field> {
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::Format(format!("bad dimension {dim} in header")));
    }
    let mut counts = Vec::with_capacity(dim);
    for _ in 0..dim {
        input.read_exact(&mut b8)?;
        counts.push(u64::from_le_bytes(b8) as usize);
    }
    let mut lengths = Vec::with_capacity(dim);
    for &n in &counts {
        input.read_exact(&mut b8)?;
        lengths.push(f64::from_le_bytes(b8) * n.saturating_sub(1) as f64);
    }
    let mesh = Arc::new(Mesh::new(&lengths, &counts)?);
    let mut values = Vec::with_capacity(mesh.len());
    for _ in 0..mesh.len() {
        input.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    Field::from_values(mesh, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 12), two_d in any::<bool>()) {
            let mesh = if two_d {
                Mesh::new(&[1.5, 0.25], &[4, 3]).unwrap()
            } else {
                Mesh::uniform_1d(0.3, 12).unwrap()
            };
            let f = Field::from_values(Arc::new(mesh), vals).unwrap();
            let mut buf = Vec::new();
            write_binary(&f, &mut buf).unwrap();
            let g = read_binary(&buf[..]).unwrap();
            prop_assert_eq!(g.values(), f.values());
            prop_assert_eq!(g.mesh().counts(), f.mesh().counts());

            let mut csv = Vec::new();
            write_csv(&f, &mut csv).unwrap();
            let h = read_csv(f.mesh_arc(), &csv[..]).unwrap();
            prop_assert_eq!(h.values(), f.values());
        }
    }

    #[test]
    fn binary_header_layout() {
        let f = Field::constant(Arc::new(Mesh::uniform_1d(1.0, 3).unwrap()), 2.0);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 8 + 8 + 3 * 8);
        assert_eq!(&buf[..4], &1u32.to_le_bytes());
        assert_eq!(&buf[4..12], &3u64.to_le_bytes());
        assert_eq!(&buf[12..20], &0.5f64.to_le_bytes());
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let mesh = Arc::new(Mesh::uniform_1d(1.0, 3).unwrap());
        assert!(read_csv(mesh, "x,y,value\n".as_bytes()).is_err());
    }
}
