//! Text bundle for a nodal basis.
//!
//! ```text
//! podflow-basis 1
//! mesh,<nx>,<ny>
//! nodes,<n_1>,...,<n_m>
//! sigma,<s_1>,...,<s_N>
//! coefficients,<row 1 of the m x m coefficient matrix>
//! ...                      (m lines)
//! psi,<column 1 of Psi, interior DOF order>
//! ...                      (m lines)
//! ```
//!
//! Floats are written in shortest round-trip scientific notation, so a
//! read-back basis is bit-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;
use crate::pod::NodalBasis;

pub const BASIS_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "podflow-basis";

fn row<T: std::fmt::LowerExp>(tag: &str, values: impl IntoIterator<Item = T>) -> String {
    let mut s = String::from(tag);
    for v in values {
        s.push(',');
        s.push_str(&format!("{v:e}"));
    }
    s
}

pub fn write_basis(basis: &NodalBasis, path: impl AsRef<Path>) -> Result<()> {
    let mesh = basis.mesh();
    let m = basis.n_modes();
    let mut out = String::new();
    out.push_str(&format!("{MAGIC} {BASIS_FORMAT_VERSION}\n"));
    out.push_str(&format!("mesh,{},{}\n", mesh.nx(), mesh.ny()));
    let nodes: Vec<String> = basis.nodes().iter().map(|n| n.to_string()).collect();
    out.push_str(&format!("nodes,{}\n", nodes.join(",")));
    out.push_str(&row("sigma", basis.singular_values().iter().copied()));
    out.push('\n');
    for i in 0..m {
        out.push_str(&row("coefficients", basis.coefficients().row(i).iter().copied()));
        out.push('\n');
    }
    for k in 0..m {
        out.push_str(&row("psi", basis.psi().column(k).iter().copied()));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

fn fields<'a>(line: Option<&'a str>, tag: &str) -> Result<Vec<&'a str>> {
    let line = line.ok_or_else(|| Error::Format(format!("basis bundle ends before `{tag}`")))?;
    let mut parts = line.split(',');
    match parts.next() {
        Some(t) if t == tag => Ok(parts.collect()),
        other => Err(Error::Format(format!("expected `{tag}`, found `{}`", other.unwrap_or("")))),
    }
}

fn floats(parts: &[&str]) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number `{p}`: {e}"))))
        .collect()
}

fn ints(parts: &[&str]) -> Result<Vec<usize>> {
    parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|e| Error::Format(format!("bad index `{p}`: {e}"))))
        .collect()
}

pub fn read_basis(path: impl AsRef<Path>) -> Result<NodalBasis> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| Error::Format("not a basis bundle".into()))?;
    if version != BASIS_FORMAT_VERSION.to_string() {
        return Err(Error::Format(format!("unsupported basis bundle version {version}")));
    }
    let dims = ints(&fields(lines.next(), "mesh")?)?;
    if dims.len() != 2 {
        return Err(Error::Format("mesh line needs nx and ny".into()));
    }
    let mesh = StructuredMesh::new(dims[0], dims[1])?;
    let nodes = ints(&fields(lines.next(), "nodes")?)?;
    let m = nodes.len();
    let sigma = DVector::from_vec(floats(&fields(lines.next(), "sigma")?)?);
    let mut coefficients = DMatrix::zeros(m, m);
    for i in 0..m {
        let r = floats(&fields(lines.next(), "coefficients")?)?;
        if r.len() != m {
            return Err(Error::dim("basis bundle coefficients", m, r.len()));
        }
        for (j, v) in r.into_iter().enumerate() {
            coefficients[(i, j)] = v;
        }
    }
    let mut psi = DMatrix::zeros(mesh.n_interior(), m);
    for k in 0..m {
        let c = floats(&fields(lines.next(), "psi")?)?;
        if c.len() != mesh.n_interior() {
            return Err(Error::dim("basis bundle psi column", mesh.n_interior(), c.len()));
        }
        psi.set_column(k, &DVector::from_vec(c));
    }
    NodalBasis::from_parts(&mesh, nodes, coefficients, psi, sigma)
}
