//! Uniform rectangular partition of the unit square with a Q1 nodal layout.
//!
//! Nodes are numbered row-major: node `(i, j)` with `i` along x and `j`
//! along y has index `j * (nx + 1) + i`. Elements are numbered the same way
//! over the `nx * ny` cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshDescriptor {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone)]
pub struct StructuredMesh {
    nx: usize,
    ny: usize,
    boundary_mask: Vec<bool>,
    /// `interior_index[node]` is the DOF index of an interior node.
    interior_index: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
}

impl StructuredMesh {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidMesh(format!(
                "need at least 2 elements per axis for an interior node, got {nx}x{ny}"
            )));
        }
        let n_nodes = (nx + 1) * (ny + 1);
        let mut boundary_mask = Vec::with_capacity(n_nodes);
        let mut interior_index = Vec::with_capacity(n_nodes);
        let mut interior_nodes = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let on_boundary = i == 0 || j == 0 || i == nx || j == ny;
                boundary_mask.push(on_boundary);
                if on_boundary {
                    interior_index.push(None);
                } else {
                    interior_index.push(Some(interior_nodes.len()));
                    interior_nodes.push(j * (nx + 1) + i);
                }
            }
        }
        Ok(Self {
            nx,
            ny,
            boundary_mask,
            interior_index,
            interior_nodes,
        })
    }

    pub fn from_descriptor(d: &MeshDescriptor) -> Result<Self> {
        Self::new(d.nx, d.ny)
    }

    pub fn descriptor(&self) -> MeshDescriptor {
        MeshDescriptor {
            nx: self.nx,
            ny: self.ny,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let i = node % (self.nx + 1);
        let j = node / (self.nx + 1);
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary_mask[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    /// Mesh node index for every interior DOF, in DOF order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    /// The four nodes of element `e`, counterclockwise from the lower-left corner.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let i = e % self.nx;
        let j = e / self.nx;
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> (f64, f64) {
        let i = e % self.nx;
        let j = e / self.nx;
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    pub fn element_center(&self, e: usize) -> (f64, f64) {
        let (x0, y0) = self.element_origin(e);
        (x0 + 0.5 * self.hx(), y0 + 0.5 * self.hy())
    }

    /// Nearest mesh node to a physical point.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        let i = (x * self.nx as f64).round().clamp(0.0, self.nx as f64) as usize;
        let j = (y * self.ny as f64).round().clamp(0.0, self.ny as f64) as usize;
        self.node_index(i, j)
    }

    /// Scatters an interior DOF vector into a full nodal vector with zero boundary values.
    pub fn lift(&self, interior: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        let mut full = nalgebra::DVector::zeros(self.n_nodes());
        for (dof, &node) in self.interior_nodes.iter().enumerate() {
            full[node] = interior[dof];
        }
        full
    }

    /// Gathers the interior DOFs of a full nodal vector.
    pub fn restrict(&self, full: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(
            self.n_interior(),
            self.interior_nodes.iter().map(|&n| full[n]),
        )
    }
}

/// Builds the uniform `nx` by `ny` mesh of the unit square.
pub fn build_mesh(nx: usize, ny: usize) -> Result<StructuredMesh> {
    StructuredMesh::new(nx, ny)
}
