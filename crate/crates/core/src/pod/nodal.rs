use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;
use crate::pod::PodBasis;

/// Largest accepted condition number of the mode-at-node matrix.
pub const MAX_INTERPOLATION_CONDITION: f64 = 1e8;

/// Observation layout for `m` points: the domain center first, then the
/// four quarter points; larger counts use a regular interior lattice.
pub fn default_observation_points(m: usize) -> Vec<(f64, f64)> {
    let five = [(0.5, 0.5), (0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
    if m <= five.len() {
        return five[..m].to_vec();
    }
    let k = (m as f64).sqrt().ceil() as usize;
    let step = 1.0 / (k + 1) as f64;
    (0..m)
        .map(|i| (((i % k) + 1) as f64 * step, ((i / k) + 1) as f64 * step))
        .collect()
}

/// Snaps each point to its nearest mesh node. Points on or outside the
/// boundary, or snapping to a boundary node, are rejected, as are points
/// that share a node.
pub fn select_observation_nodes(mesh: &StructuredMesh, points: &[(f64, f64)]) -> Result<Vec<usize>> {
    let mut nodes = Vec::with_capacity(points.len());
    for &(x, y) in points {
        let node = mesh.nearest_node(x, y);
        let inside = x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0;
        if !inside || mesh.is_boundary(node) {
            return Err(Error::BoundaryNode { x, y, node });
        }
        if nodes.contains(&node) {
            return Err(Error::DuplicateNode { node });
        }
        nodes.push(node);
    }
    Ok(nodes)
}

/// Interpolatory basis `psi_k = sum_j coefficients[(k, j)] xi_j` with
/// `psi_k(x_l) = delta_kl` at the observation nodes.
#[derive(Debug, Clone)]
pub struct NodalBasis {
    mesh: StructuredMesh,
    nodes: Vec<usize>,
    dofs: Vec<usize>,
    coefficients: DMatrix<f64>,
    psi: DMatrix<f64>,
    singular_values: DVector<f64>,
}

impl NodalBasis {
    /// Assembles a basis from its parts; `psi` holds interior DOF values.
    pub fn from_parts(
        mesh: &StructuredMesh,
        nodes: Vec<usize>,
        coefficients: DMatrix<f64>,
        psi: DMatrix<f64>,
        singular_values: DVector<f64>,
    ) -> Result<Self> {
        let m = nodes.len();
        if psi.nrows() != mesh.n_interior() {
            return Err(Error::dim("nodal basis rows", mesh.n_interior(), psi.nrows()));
        }
        if psi.ncols() != m {
            return Err(Error::dim("nodal basis columns", m, psi.ncols()));
        }
        if coefficients.shape() != (m, m) {
            return Err(Error::dim("nodal basis coefficients", m, coefficients.nrows()));
        }
        let mut dofs = Vec::with_capacity(m);
        for &n in &nodes {
            if n >= mesh.n_nodes() {
                return Err(Error::InvalidArgument(format!("node {n} is not on the mesh")));
            }
            match mesh.interior_index(n) {
                Some(d) => dofs.push(d),
                None => {
                    let (x, y) = mesh.node_coords(n);
                    return Err(Error::BoundaryNode { x, y, node: n });
                }
            }
        }
        Ok(Self {
            mesh: mesh.clone(),
            nodes,
            dofs,
            coefficients,
            psi,
            singular_values,
        })
    }

    /// Every interior DOF is its own observation node and `psi` is the
    /// identity, so the reduced model coincides with the fine one.
    pub fn identity(mesh: &StructuredMesh) -> Self {
        let n = mesh.n_interior();
        Self {
            mesh: mesh.clone(),
            nodes: mesh.interior_nodes().to_vec(),
            dofs: (0..n).collect(),
            coefficients: DMatrix::identity(n, n),
            psi: DMatrix::identity(n, n),
            singular_values: DVector::from_element(n, 1.0),
        }
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn n_modes(&self) -> usize {
        self.nodes.len()
    }

    /// Mesh node index of each observation node.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Interior DOF index of each observation node.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// `n_interior x m`
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    /// POD modes recovered from the basis: `xi = Psi Xi^T`.
    pub fn modes(&self) -> DMatrix<f64> {
        let xi_at_nodes = self.coefficients.transpose().try_inverse();
        match xi_at_nodes {
            Some(inv) => &self.psi * inv,
            None => self.psi.clone(),
        }
    }

    /// `max_{k,l} |psi_k(x_l) - delta_kl|`
    pub fn interpolation_defect(&self) -> f64 {
        let m = self.n_modes();
        let mut worst: f64 = 0.0;
        for (l, &d) in self.dofs.iter().enumerate() {
            for k in 0..m {
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((self.psi[(d, k)] - target).abs());
            }
        }
        worst
    }

    /// Values of a full nodal vector at the observation nodes.
    pub fn observe(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.mesh.n_nodes() {
            return Err(Error::dim("observe", self.mesh.n_nodes(), u.len()));
        }
        Ok(DVector::from_iterator(self.nodes.len(), self.nodes.iter().map(|&n| u[n])))
    }

    /// `Psi c` on the interior DOFs.
    pub fn reconstruct_interior(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        if c.len() != self.n_modes() {
            return Err(Error::dim("reconstruct", self.n_modes(), c.len()));
        }
        Ok(&self.psi * c)
    }
}

/// Builds the nodal basis from the leading POD modes at the given nodes.
pub fn build_nodal_basis(mesh: &StructuredMesh, pod: &PodBasis, nodes: &[usize]) -> Result<NodalBasis> {
    let m = pod.n_modes();
    if nodes.len() != m {
        return Err(Error::dim("observation nodes vs modes", m, nodes.len()));
    }
    if pod.modes.nrows() != mesh.n_interior() {
        return Err(Error::dim("POD mode length", mesh.n_interior(), pod.modes.nrows()));
    }
    let mut dofs = Vec::with_capacity(m);
    for &n in nodes {
        match mesh.interior_index(n) {
            Some(d) => dofs.push(d),
            None => {
                let (x, y) = mesh.node_coords(n);
                return Err(Error::BoundaryNode { x, y, node: n });
            }
        }
    }
    // xi_at[(k, j)] = xi_j(x_k)
    let xi_at = DMatrix::from_fn(m, m, |k, j| pod.modes[(dofs[k], j)]);
    let sv = xi_at.singular_values();
    let smin = sv.min();
    let condition = if smin > 0.0 { sv.max() / smin } else { f64::INFINITY };
    if !(condition <= MAX_INTERPOLATION_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    // sum_j a_ij xi_j(x_k) = delta_ik  <=>  a xi_at^T = I
    let coefficients = xi_at
        .transpose()
        .try_inverse()
        .ok_or(Error::IllConditioned { condition })?;
    let psi = &pod.modes * coefficients.transpose();
    NodalBasis::from_parts(mesh, nodes.to_vec(), coefficients, psi, pod.singular_values.clone())
}

/// Full nodal field `Psi c` with zero boundary values.
pub fn reconstruct(basis: &NodalBasis, c: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(basis.mesh().lift(&basis.reconstruct_interior(c)?))
}

/// Interpolates nodal values with tensor-product hat functions centered at
/// the given nodes. The hat half-width is the smallest max-norm distance
/// between nodes or from a node to the boundary, so each hat vanishes at
/// the other nodes and on the boundary. Used to seed snapshot runs before
/// any POD basis exists.
pub fn hat_lift(mesh: &StructuredMesh, nodes: &[usize], c: &DVector<f64>) -> Result<DVector<f64>> {
    if c.len() != nodes.len() {
        return Err(Error::dim("hat_lift", nodes.len(), c.len()));
    }
    let centers: Vec<(f64, f64)> = nodes.iter().map(|&n| mesh.node_coords(n)).collect();
    let mut r = f64::INFINITY;
    for (a, &(xa, ya)) in centers.iter().enumerate() {
        r = r.min(xa).min(1.0 - xa).min(ya).min(1.0 - ya);
        for &(xb, yb) in &centers[a + 1..] {
            r = r.min((xa - xb).abs().max((ya - yb).abs()));
        }
    }
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("hat_lift needs distinct interior nodes".into()));
    }
    let hat = |s: f64| (1.0 - s.abs()).max(0.0);
    let mut u = DVector::zeros(mesh.n_nodes());
    for node in 0..mesh.n_nodes() {
        if mesh.is_boundary(node) {
            continue;
        }
        let (x, y) = mesh.node_coords(node);
        u[node] = centers
            .iter()
            .zip(c.iter())
            .map(|(&(cx, cy), ck)| ck * hat((x - cx) / r) * hat((y - cy) / r))
            .sum();
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::pod::{collect_snapshots, compute_pod};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_layout() {
        let mesh = build_mesh(32, 32).unwrap();
        let nodes = select_observation_nodes(&mesh, &default_observation_points(5)).unwrap();
        assert_eq!(nodes.len(), 5);
        assert_eq!(nodes[0], mesh.node_index(16, 16));
        assert_eq!(nodes[1], mesh.node_index(8, 8));
        assert_eq!(nodes[4], mesh.node_index(24, 24));
        assert_eq!(default_observation_points(9).len(), 9);
    }

    #[test]
    fn rejects_boundary_and_duplicates() {
        let mesh = build_mesh(32, 32).unwrap();
        assert!(matches!(
            select_observation_nodes(&mesh, &[(0.0, 0.5)]),
            Err(Error::BoundaryNode { .. })
        ));
        assert!(matches!(
            select_observation_nodes(&mesh, &[(0.01, 0.5)]),
            Err(Error::BoundaryNode { .. })
        ));
        assert!(matches!(
            select_observation_nodes(&mesh, &[(0.5, 0.5), (0.501, 0.5)]),
            Err(Error::DuplicateNode { .. })
        ));
    }

    fn random_basis(seed: u64) -> (StructuredMesh, NodalBasis, PodBasis) {
        let mesh = build_mesh(8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run: Vec<DVector<f64>> = (0..12)
            .map(|_| DVector::from_fn(mesh.n_interior(), |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let pod = compute_pod(&collect_snapshots(&[run]).unwrap(), 5).unwrap();
        let nodes = select_observation_nodes(&mesh, &default_observation_points(5)).unwrap();
        let basis = build_nodal_basis(&mesh, &pod, &nodes).unwrap();
        (mesh, basis, pod)
    }

    #[test]
    fn interpolation_and_inverse_oracle() {
        let (_, basis, pod) = random_basis(11);
        assert!(basis.interpolation_defect() <= 1e-10);
        let xi_at = DMatrix::from_fn(5, 5, |k, j| pod.modes[(basis.dofs()[k], j)]);
        let oracle = xi_at.clone().lu().solve(&DMatrix::identity(5, 5)).unwrap().transpose();
        assert!((basis.coefficients() - oracle).amax() < 1e-10);
        let recovered = basis.modes();
        assert!((recovered - &pod.modes).amax() < 1e-10);
    }

    #[test]
    fn already_nodal_modes_are_kept() {
        let mesh = build_mesh(4, 4).unwrap();
        let nodes = select_observation_nodes(&mesh, &default_observation_points(3)).unwrap();
        let mut modes = DMatrix::zeros(mesh.n_interior(), 3);
        for (j, &n) in nodes.iter().enumerate() {
            modes[(mesh.interior_index(n).unwrap(), j)] = 1.0;
        }
        let pod = PodBasis {
            modes: modes.clone(),
            singular_values: DVector::from_element(3, 1.0),
            eigenvectors: DMatrix::identity(3, 3),
        };
        let basis = build_nodal_basis(&mesh, &pod, &nodes).unwrap();
        assert_eq!(basis.coefficients(), &DMatrix::identity(3, 3));
        assert_eq!(basis.psi(), &modes);
    }

    #[test]
    fn singular_interpolation_rejected() {
        let mesh = build_mesh(4, 4).unwrap();
        let nodes = select_observation_nodes(&mesh, &default_observation_points(2)).unwrap();
        let mut modes = DMatrix::zeros(mesh.n_interior(), 2);
        modes[(0, 0)] = 1.0;
        modes[(1, 1)] = 1.0;
        let pod = PodBasis {
            modes,
            singular_values: DVector::from_element(2, 1.0),
            eigenvectors: DMatrix::identity(2, 2),
        };
        assert!(matches!(
            build_nodal_basis(&mesh, &pod, &nodes),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn reconstruct_hits_coefficients() {
        let (mesh, basis, _) = random_basis(5);
        let c = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0, 0.7]);
        let u = reconstruct(&basis, &c).unwrap();
        for (k, &n) in basis.nodes().iter().enumerate() {
            assert!((u[n] - c[k]).abs() <= 1e-10);
        }
        let e2 = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(mesh.restrict(&reconstruct(&basis, &e2).unwrap()), basis.psi().column(2));
        assert_eq!(reconstruct(&basis, &DVector::zeros(5)).unwrap().amax(), 0.0);
        assert_eq!(basis.observe(&u).unwrap().len(), 5);
    }

    #[test]
    fn hat_lift_interpolates() {
        let mesh = build_mesh(32, 32).unwrap();
        let nodes = select_observation_nodes(&mesh, &default_observation_points(5)).unwrap();
        let c = DVector::from_vec(vec![0.9, 0.1, 0.2, 0.3, 0.4]);
        let u = hat_lift(&mesh, &nodes, &c).unwrap();
        for (k, &n) in nodes.iter().enumerate() {
            assert_eq!(u[n], c[k]);
        }
        for n in 0..mesh.n_nodes() {
            if mesh.is_boundary(n) {
                assert_eq!(u[n], 0.0);
            }
        }
    }
}
