//! Q1 assembly on the structured mesh with a 2x2 Gauss rule.
//!
//! Sparsity patterns are built once per DOF set; assembly then writes
//! element contributions straight into the CSR value array through a
//! per-element slot table, so every assembled matrix on a given set shares
//! one pattern.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::source::SourceSpec;
use crate::linalg::CsrMatrix;
use crate::mesh::StructuredMesh;

/// Largest `|alpha u|` passed to `exp` before clamping.
pub const EXP_ARG_LIMIT: f64 = 50.0;

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // 1 / (2 sqrt 3)

/// Which nodes carry unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofSet {
    /// Every mesh node; matrices are the unconstrained ones.
    All,
    /// Interior nodes only; homogeneous Dirichlet values eliminated.
    Interior,
}

/// Q1 shape data at the four Gauss points of one `hx` by `hy` element.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    /// Gauss points on the reference square `[0,1]^2`.
    pub points: [(f64, f64); 4],
    /// Quadrature weight times element area.
    pub weight: f64,
    /// `shape[q][a]`
    pub shape: [[f64; 4]; 4],
    /// `grad[q][a]` in physical coordinates.
    pub grad: [[(f64, f64); 4]; 4],
    pub hx: f64,
    pub hy: f64,
}

impl ReferenceElement {
    pub fn new(hx: f64, hy: f64) -> Self {
        let lo = 0.5 - GAUSS_OFFSET;
        let hi = 0.5 + GAUSS_OFFSET;
        let points = [(lo, lo), (hi, lo), (hi, hi), (lo, hi)];
        let mut shape = [[0.0; 4]; 4];
        let mut grad = [[(0.0, 0.0); 4]; 4];
        for (q, &(s, t)) in points.iter().enumerate() {
            shape[q] = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
            grad[q] = [
                (-(1.0 - t) / hx, -(1.0 - s) / hy),
                ((1.0 - t) / hx, -s / hy),
                (t / hx, s / hy),
                (-t / hx, (1.0 - s) / hy),
            ];
        }
        Self {
            points,
            weight: 0.25 * hx * hy,
            shape,
            grad,
            hx,
            hy,
        }
    }

    /// Element mass matrix.
    pub fn local_mass(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for q in 0..4 {
            for a in 0..4 {
                for b in a..4 {
                    m[a][b] += self.weight * self.shape[q][a] * self.shape[q][b];
                }
            }
        }
        for a in 0..4 {
            for b in 0..a {
                m[a][b] = m[b][a];
            }
        }
        m
    }

    /// Element stiffness matrix with coefficient `coef[q]` at each Gauss point.
    pub fn local_stiffness(&self, coef: [f64; 4]) -> [[f64; 4]; 4] {
        let mut k = [[0.0; 4]; 4];
        for q in 0..4 {
            let w = self.weight * coef[q];
            for a in 0..4 {
                let (ax, ay) = self.grad[q][a];
                for b in a..4 {
                    let (bx, by) = self.grad[q][b];
                    k[a][b] += w * (ax * bx + ay * by);
                }
            }
        }
        for a in 0..4 {
            for b in 0..a {
                k[a][b] = k[b][a];
            }
        }
        k
    }
}

#[derive(Debug, Clone)]
struct Pattern {
    template: CsrMatrix,
    /// `slots[e][a][b]`: value index of local pair `(a, b)` in element `e`.
    slots: Vec<[[Option<usize>; 4]; 4]>,
    dof_of_node: Vec<Option<usize>>,
    n_dofs: usize,
}

impl Pattern {
    fn new(mesh: &StructuredMesh, dofs: DofSet) -> Self {
        let dof_of_node: Vec<Option<usize>> = match dofs {
            DofSet::All => (0..mesh.n_nodes()).map(Some).collect(),
            DofSet::Interior => (0..mesh.n_nodes()).map(|n| mesh.interior_index(n)).collect(),
        };
        let n_dofs = match dofs {
            DofSet::All => mesh.n_nodes(),
            DofSet::Interior => mesh.n_interior(),
        };
        let mut trip = Vec::with_capacity(16 * mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let nodes = mesh.element_nodes(e);
            for &na in &nodes {
                for &nb in &nodes {
                    if let (Some(da), Some(db)) = (dof_of_node[na], dof_of_node[nb]) {
                        trip.push((da, db, 0.0));
                    }
                }
            }
        }
        let template = CsrMatrix::from_triplets(n_dofs, n_dofs, &trip);
        let slots = (0..mesh.n_elements())
            .map(|e| {
                let nodes = mesh.element_nodes(e);
                let mut s = [[None; 4]; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        if let (Some(da), Some(db)) = (dof_of_node[nodes[a]], dof_of_node[nodes[b]]) {
                            s[a][b] = template.slot(da, db);
                        }
                    }
                }
                s
            })
            .collect();
        Self {
            template,
            slots,
            dof_of_node,
            n_dofs,
        }
    }
}

/// Assembles mass, stiffness and load on a fixed mesh.
#[derive(Debug, Clone)]
pub struct Assembler {
    mesh: StructuredMesh,
    reference: ReferenceElement,
    full: Pattern,
    interior: Pattern,
}

impl Assembler {
    pub fn new(mesh: &StructuredMesh) -> Self {
        Self {
            reference: ReferenceElement::new(mesh.hx(), mesh.hy()),
            full: Pattern::new(mesh, DofSet::All),
            interior: Pattern::new(mesh, DofSet::Interior),
            mesh: mesh.clone(),
        }
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    fn pattern(&self, dofs: DofSet) -> &Pattern {
        match dofs {
            DofSet::All => &self.full,
            DofSet::Interior => &self.interior,
        }
    }

    pub fn n_dofs(&self, dofs: DofSet) -> usize {
        self.pattern(dofs).n_dofs
    }

    fn scatter(&self, dofs: DofSet, mut local: impl FnMut(usize) -> [[f64; 4]; 4]) -> CsrMatrix {
        let pattern = self.pattern(dofs);
        let mut m = pattern.template.zeros_like();
        let values = m.values_mut();
        for (e, slots) in pattern.slots.iter().enumerate() {
            let k = local(e);
            for a in 0..4 {
                for b in 0..4 {
                    if let Some(s) = slots[a][b] {
                        values[s] += k[a][b];
                    }
                }
            }
        }
        m
    }

    pub fn mass(&self, dofs: DofSet) -> CsrMatrix {
        let local = self.reference.local_mass();
        self.scatter(dofs, |_| local)
    }

    /// Stiffness for coefficient `kappa_e * exp(alpha * u_prev)`, with `u_prev`
    /// a full nodal vector interpolated to the Gauss points.
    pub fn stiffness(
        &self,
        dofs: DofSet,
        kappa: &[f64],
        u_prev: &DVector<f64>,
        alpha: f64,
    ) -> Result<CsrMatrix> {
        if kappa.len() != self.mesh.n_elements() {
            return Err(Error::dim("stiffness (kappa)", self.mesh.n_elements(), kappa.len()));
        }
        if u_prev.len() != self.mesh.n_nodes() {
            return Err(Error::dim("stiffness (u_prev)", self.mesh.n_nodes(), u_prev.len()));
        }
        let coefs = self.quadrature_coefficients(kappa, u_prev, alpha)?;
        Ok(self.scatter(dofs, |e| self.reference.local_stiffness(coefs[e])))
    }

    /// `kappa * exp(alpha * u)` at the Gauss points of every element.
    pub fn quadrature_coefficients(
        &self,
        kappa: &[f64],
        u_prev: &DVector<f64>,
        alpha: f64,
    ) -> Result<Vec<[f64; 4]>> {
        let mut clamped = 0usize;
        let mut out = Vec::with_capacity(self.mesh.n_elements());
        for e in 0..self.mesh.n_elements() {
            let nodes = self.mesh.element_nodes(e);
            let mut c = [0.0; 4];
            for q in 0..4 {
                let mut c_q = kappa[e];
                if alpha != 0.0 {
                    let u_q: f64 = (0..4).map(|a| self.reference.shape[q][a] * u_prev[nodes[a]]).sum();
                    let arg = alpha * u_q;
                    if arg.is_nan() {
                        return Err(Error::NumericalRange(format!(
                            "non-finite nonlinearity argument in element {e}"
                        )));
                    }
                    if arg.abs() > EXP_ARG_LIMIT {
                        clamped += 1;
                    }
                    c_q *= arg.clamp(-EXP_ARG_LIMIT, EXP_ARG_LIMIT).exp();
                }
                if !c_q.is_finite() || !(c_q > 0.0) {
                    return Err(Error::NumericalRange(format!(
                        "diffusion coefficient {c_q} in element {e} is not a positive finite number"
                    )));
                }
                c[q] = c_q;
            }
            out.push(c);
        }
        if clamped > 0 {
            log::warn!(
                "clamped exp argument to [-{EXP_ARG_LIMIT}, {EXP_ARG_LIMIT}] at {clamped} quadrature points"
            );
        }
        Ok(out)
    }

    /// Load vector `b_i = int g(., t) v_i`.
    pub fn load(&self, dofs: DofSet, source: &SourceSpec, t: f64) -> DVector<f64> {
        let pattern = self.pattern(dofs);
        let mut b = DVector::zeros(pattern.n_dofs);
        if source.is_zero() {
            return b;
        }
        let r = &self.reference;
        for e in 0..self.mesh.n_elements() {
            let nodes = self.mesh.element_nodes(e);
            let (x0, y0) = self.mesh.element_origin(e);
            for q in 0..4 {
                let (s, tq) = r.points[q];
                let g = source.eval(x0 + s * r.hx, y0 + tq * r.hy, t);
                if g == 0.0 {
                    continue;
                }
                for a in 0..4 {
                    if let Some(d) = pattern.dof_of_node[nodes[a]] {
                        b[d] += r.weight * g * r.shape[q][a];
                    }
                }
            }
        }
        b
    }
}

/// Unconstrained global mass matrix.
pub fn assemble_mass(mesh: &StructuredMesh) -> CsrMatrix {
    Assembler::new(mesh).mass(DofSet::All)
}

/// Unconstrained global stiffness matrix for the lagged coefficient.
pub fn assemble_stiffness(
    mesh: &StructuredMesh,
    kappa: &crate::perm::PermField,
    u_prev: &DVector<f64>,
    alpha: f64,
) -> Result<CsrMatrix> {
    let k = crate::perm::eval_on_elements(kappa, mesh)?;
    Assembler::new(mesh).stiffness(DofSet::All, &k, u_prev, alpha)
}

/// Unconstrained global load vector.
pub fn assemble_load(mesh: &StructuredMesh, source: &SourceSpec, t: f64) -> DVector<f64> {
    Assembler::new(mesh).load(DofSet::All, source, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::source::{RateSchedule, WellSource};
    use crate::mesh::build_mesh;
    use crate::perm::PermField;

    #[test]
    fn unit_element_mass_matches_exact_integration() {
        let r = ReferenceElement::new(1.0, 1.0);
        let m = r.local_mass();
        let exact = [[4.0, 2.0, 1.0, 2.0], [2.0, 4.0, 2.0, 1.0], [1.0, 2.0, 4.0, 2.0], [2.0, 1.0, 2.0, 4.0]];
        for a in 0..4 {
            for b in 0..4 {
                assert!((m[a][b] - exact[a][b] / 36.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unit_element_stiffness_matches_exact_integration() {
        let r = ReferenceElement::new(1.0, 1.0);
        let k = r.local_stiffness([1.0; 4]);
        let exact = [
            [4.0, -1.0, -2.0, -1.0],
            [-1.0, 4.0, -1.0, -2.0],
            [-2.0, -1.0, 4.0, -1.0],
            [-1.0, -2.0, -1.0, 4.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert!((k[a][b] - exact[a][b] / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn element_mass_scales_with_area() {
        let unit = ReferenceElement::new(1.0, 1.0).local_mass();
        let scaled = ReferenceElement::new(0.5, 0.25).local_mass();
        for a in 0..4 {
            for b in 0..4 {
                assert!((scaled[a][b] - 0.125 * unit[a][b]).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn global_mass_properties() {
        let mesh = build_mesh(6, 4).unwrap();
        let m = assemble_mass(&mesh);
        assert!(m.is_symmetric());
        assert!((m.sum() - 1.0).abs() < 1e-12);
        // row sums are the partition-of-unity weights int v_i
        let ones = DVector::from_element(mesh.n_nodes(), 1.0);
        let rows = m.mul_vec(&ones);
        let corner = 0.25 * mesh.hx() * mesh.hy();
        assert!((rows[0] - corner).abs() < 1e-15);
        let interior = mesh.node_index(2, 2);
        assert!((rows[interior] - mesh.hx() * mesh.hy()).abs() < 1e-15);
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let mesh = build_mesh(8, 8).unwrap();
        let kappa =
            PermField::from_values(&mesh, (0..64).map(|e| 1.0 + 100.0 * (e % 7) as f64).collect()).unwrap();
        let u = DVector::zeros(mesh.n_nodes());
        let a = assemble_stiffness(&mesh, &kappa, &u, 0.0).unwrap();
        assert!(a.is_symmetric());
        let ones = DVector::from_element(mesh.n_nodes(), 1.0);
        assert!(a.mul_vec(&ones).amax() <= 1e-12);
    }

    #[test]
    fn zero_state_ignores_alpha() {
        let mesh = build_mesh(5, 5).unwrap();
        let kappa = PermField::uniform(&mesh, 2.0).unwrap();
        let u = DVector::zeros(mesh.n_nodes());
        let a0 = assemble_stiffness(&mesh, &kappa, &u, 0.0).unwrap();
        let a20 = assemble_stiffness(&mesh, &kappa, &u, 20.0).unwrap();
        assert_eq!(a0, a20);
    }

    #[test]
    fn stiffness_is_linear_in_kappa() {
        let mesh = build_mesh(5, 5).unwrap();
        let k1 = PermField::uniform(&mesh, 1.0).unwrap();
        let k10 = PermField::uniform(&mesh, 10.0).unwrap();
        let u = DVector::zeros(mesh.n_nodes());
        let a1 = assemble_stiffness(&mesh, &k1, &u, 0.0).unwrap();
        let a10 = assemble_stiffness(&mesh, &k10, &u, 0.0).unwrap();
        for (x, y) in a1.values().iter().zip(a10.values()) {
            assert!((10.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn clamping_keeps_coefficient_finite() {
        let mesh = build_mesh(4, 4).unwrap();
        let kappa = PermField::uniform(&mesh, 1.0).unwrap();
        let u = DVector::from_element(mesh.n_nodes(), 1e6);
        let a = assemble_stiffness(&mesh, &kappa, &u, 20.0).unwrap();
        assert!(a.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn nan_state_is_a_range_error() {
        let mesh = build_mesh(4, 4).unwrap();
        let kappa = PermField::uniform(&mesh, 1.0).unwrap();
        let u = DVector::from_element(mesh.n_nodes(), f64::NAN);
        assert!(matches!(
            assemble_stiffness(&mesh, &kappa, &u, 20.0),
            Err(Error::NumericalRange(_))
        ));
    }

    #[test]
    fn load_zero_and_constant() {
        let mesh = build_mesh(7, 5).unwrap();
        let b = assemble_load(&mesh, &SourceSpec::Zero, 0.3);
        assert_eq!(b.amax(), 0.0);
        let b = assemble_load(&mesh, &SourceSpec::Constant { value: 1.0 }, 0.3);
        assert!((b.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_bump_load_is_localized() {
        let mesh = build_mesh(32, 32).unwrap();
        let src = SourceSpec::Wells(WellSource {
            centers: vec![(0.5, 0.5)],
            width: 0.02,
            schedule: RateSchedule::Constant { rates: vec![1.0] },
        });
        let b = assemble_load(&mesh, &src, 0.0);
        let center = mesh.nearest_node(0.5, 0.5);
        let peak = b[center];
        assert_eq!(b.imax(), center);
        // direct quadrature oracle: int exp(-r^2/2w^2) v_center, fine midpoint rule
        let h = mesh.hx();
        let n = 400;
        let mut oracle = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = 0.5 - h + (i as f64 + 0.5) * 2.0 * h / n as f64;
                let y = 0.5 - h + (j as f64 + 0.5) * 2.0 * h / n as f64;
                let hat = (1.0 - (x - 0.5).abs() / h) * (1.0 - (y - 0.5).abs() / h);
                let g = (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / (2.0 * 0.02 * 0.02)).exp();
                oracle += g * hat * (2.0 * h / n as f64).powi(2);
            }
        }
        assert!((peak - oracle).abs() < 0.05 * oracle, "peak {peak} oracle {oracle}");
        for node in 0..mesh.n_nodes() {
            let (x, y) = mesh.node_coords(node);
            if ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt() > 0.2 {
                assert!(b[node] < 1e-12 * peak);
            }
        }
    }

    #[test]
    fn interior_matrices_are_restrictions() {
        let mesh = build_mesh(5, 4).unwrap();
        let asm = Assembler::new(&mesh);
        let full = asm.mass(DofSet::All);
        let inner = asm.mass(DofSet::Interior);
        let nodes = mesh.interior_nodes();
        for (a, &na) in nodes.iter().enumerate() {
            for (b, &nb) in nodes.iter().enumerate() {
                assert_eq!(inner.get(a, b), full.get(na, nb));
            }
        }
    }
}
