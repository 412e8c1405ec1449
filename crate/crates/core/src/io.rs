//! Field dumps: nodal CSV and 8-bit binary PGM.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;

/// `x,y,value` with one row per node in row-major node order.
pub fn write_field_csv(mesh: &StructuredMesh, u: &DVector<f64>, path: impl AsRef<Path>) -> Result<()> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::dim("field csv", mesh.n_nodes(), u.len()));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "x,y,value")?;
    for (n, v) in u.iter().enumerate() {
        let (x, y) = mesh.node_coords(n);
        writeln!(w, "{x},{y},{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_field_csv`]; returns the value column.
pub fn read_field_csv(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("x,y,value") {
        return Err(Error::Format("field csv needs an `x,y,value` header".into()));
    }
    let values = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v = l.rsplit(',').next().unwrap_or("");
            v.parse::<f64>().map_err(|_| Error::Format(format!("bad value `{v}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

/// Min-max scaled 8-bit gray image of a row-major grid whose first row is
/// the bottom of the domain; the image is written top row first. A constant
/// grid maps to black.
pub fn write_pgm(width: usize, height: usize, values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::dim("pgm pixels", width * height, values.len()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    for row in (0..height).rev() {
        for col in 0..width {
            let v = values[row * width + col];
            let g = if span > 0.0 && span.is_finite() {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            bytes.push(g);
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// PGM of a nodal field, one pixel per node.
pub fn write_field_pgm(mesh: &StructuredMesh, u: &DVector<f64>, path: impl AsRef<Path>) -> Result<()> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::dim("field pgm", mesh.n_nodes(), u.len()));
    }
    write_pgm(mesh.nx() + 1, mesh.ny() + 1, u.as_slice(), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    #[test]
    fn csv_layout_and_round_trip() {
        let mesh = build_mesh(2, 3).unwrap();
        let u = DVector::from_fn(mesh.n_nodes(), |i, _| i as f64 * 0.1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        write_field_csv(&mesh, &u, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 12);
        assert_eq!(lines[0], "x,y,value");
        assert!(lines[2].starts_with("0.5,0,"));
        assert!(lines[4].starts_with("0,0.3333333333333333,"));
        assert_eq!(read_field_csv(&p).unwrap(), u);
    }

    #[test]
    fn pgm_scaling_and_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.pgm");
        write_pgm(2, 2, &[0.0, 1.0, 2.0, 4.0], &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // top row first: values 2 and 4
        assert_eq!(&bytes[header.len()..], &[128, 255, 0, 64]);
        write_pgm(1, 2, &[3.0, 3.0], &p).unwrap();
        assert_eq!(&fs::read(&p).unwrap()[header.len()..], &[0, 0]);
    }
}
