//! Fine-scale Q1 finite elements with implicit Euler time stepping.
//!
//! Each step solves `(M + dt A(u_n)) u_{n+1} = M u_n + dt b(t_{n+1})` on the
//! interior DOFs, where `A(u_n)` uses the lagged coefficient
//! `kappa exp(alpha u_n)`. Boundary values stay zero.

mod assembly;
mod source;

pub use assembly::{
    assemble_load, assemble_mass, assemble_stiffness, Assembler, DofSet, ReferenceElement,
    EXP_ARG_LIMIT,
};
pub use source::{RateSchedule, SourceSpec, WellSource};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{solve_spd, CgOptions, CsrMatrix};
use crate::mesh::StructuredMesh;
use crate::perm::{eval_on_elements, PermField};

#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    pub kappa: PermField,
    pub alpha: f64,
    pub source: SourceSpec,
    pub dt: f64,
    pub n_steps: usize,
    /// Full nodal initial condition with zero boundary values.
    pub u0: DVector<f64>,
}

impl DiffusionProblem {
    pub fn validate(&self, mesh: &StructuredMesh) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("need at least one time step".into()));
        }
        if self.u0.len() != mesh.n_nodes() {
            return Err(Error::dim("initial condition", mesh.n_nodes(), self.u0.len()));
        }
        if let Some(node) = (0..mesh.n_nodes()).find(|&n| mesh.is_boundary(n) && self.u0[n] != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "initial condition is nonzero on boundary node {node}"
            )));
        }
        eval_on_elements(&self.kappa, mesh)?;
        Ok(())
    }

    /// Time of step `n`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// Matrices of one fine step on the interior DOFs.
#[derive(Debug, Clone)]
pub struct FineSystem {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub load: DVector<f64>,
}

/// Fine solver bound to one mesh and one problem's coefficients.
#[derive(Debug, Clone)]
pub struct FineSolver {
    assembler: Assembler,
    mass: CsrMatrix,
    kappa: Vec<f64>,
    alpha: f64,
    dt: f64,
    source: SourceSpec,
    cg: CgOptions,
}

impl FineSolver {
    pub fn new(mesh: &StructuredMesh, problem: &DiffusionProblem) -> Result<Self> {
        Self::with_assembler(Assembler::new(mesh), problem)
    }

    /// Reuses a prebuilt assembler (its sparsity patterns) for a new problem.
    pub fn with_assembler(assembler: Assembler, problem: &DiffusionProblem) -> Result<Self> {
        problem.validate(assembler.mesh())?;
        let kappa = eval_on_elements(&problem.kappa, assembler.mesh())?;
        Ok(Self {
            mass: assembler.mass(DofSet::Interior),
            assembler,
            kappa,
            alpha: problem.alpha,
            dt: problem.dt,
            source: problem.source.clone(),
            cg: CgOptions::default(),
        })
    }

    pub fn with_cg_options(mut self, cg: CgOptions) -> Self {
        self.cg = cg;
        self
    }

    pub fn mesh(&self) -> &StructuredMesh {
        self.assembler.mesh()
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    /// Interior mass matrix.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn source(&self) -> &SourceSpec {
        &self.source
    }

    /// Interior stiffness for the lagged state `u_n` (full nodal vector).
    pub fn stiffness(&self, u_n: &DVector<f64>) -> Result<CsrMatrix> {
        self.assembler
            .stiffness(DofSet::Interior, &self.kappa, u_n, self.alpha)
    }

    /// Interior load at time `t`.
    pub fn load(&self, t: f64) -> DVector<f64> {
        self.assembler.load(DofSet::Interior, &self.source, t)
    }

    pub fn system(&self, u_n: &DVector<f64>, t_next: f64) -> Result<FineSystem> {
        Ok(FineSystem {
            mass: self.mass.clone(),
            stiffness: self.stiffness(u_n)?,
            load: self.load(t_next),
        })
    }

    /// One implicit Euler step from full nodal `u_n` to time `t_next`.
    pub fn step(&self, u_n: &DVector<f64>, t_next: f64) -> Result<DVector<f64>> {
        let mesh = self.mesh();
        if u_n.len() != mesh.n_nodes() {
            return Err(Error::dim("step_fine (u_n)", mesh.n_nodes(), u_n.len()));
        }
        let a = self.stiffness(u_n)?;
        let lhs = self.mass.linear_combination(1.0, &a, self.dt);
        let u_int = mesh.restrict(u_n);
        let mut rhs = self.mass.mul_vec(&u_int);
        if !self.source.is_zero() {
            rhs.axpy(self.dt, &self.load(t_next), 1.0);
        }
        let (x, _) = solve_spd(&lhs, &rhs, Some(&u_int), self.cg)?;
        Ok(mesh.lift(&x))
    }

    /// States `u_0 .. u_{n_steps}` starting from `u0`.
    pub fn run(&self, u0: &DVector<f64>, n_steps: usize) -> Result<Vec<DVector<f64>>> {
        let mut states = Vec::with_capacity(n_steps + 1);
        states.push(u0.clone());
        for n in 0..n_steps {
            let next = self.step(&states[n], (n + 1) as f64 * self.dt)?;
            states.push(next);
        }
        Ok(states)
    }
}

/// One fine step for `problem` from `u_n` to `t_next`.
pub fn step_fine(
    mesh: &StructuredMesh,
    problem: &DiffusionProblem,
    u_n: &DVector<f64>,
    t_next: f64,
) -> Result<DVector<f64>> {
    FineSolver::new(mesh, problem)?.step(u_n, t_next)
}

/// Absolute and percentage L2 error `sqrt(e^T M e)` between two full nodal
/// vectors. `mass` may be the unconstrained or the interior mass matrix.
pub fn l2_error(
    mesh: &StructuredMesh,
    mass: &CsrMatrix,
    u_ref: &DVector<f64>,
    u_pred: &DVector<f64>,
) -> Result<(f64, f64)> {
    if u_ref.len() != u_pred.len() {
        return Err(Error::dim("l2_error", u_ref.len(), u_pred.len()));
    }
    let (r, e) = if mass.nrows() == u_ref.len() {
        (u_ref.clone(), u_ref - u_pred)
    } else if mass.nrows() == mesh.n_interior() && u_ref.len() == mesh.n_nodes() {
        let r = mesh.restrict(u_ref);
        let p = mesh.restrict(u_pred);
        let e = &r - p;
        (r, e)
    } else {
        return Err(Error::dim("l2_error (mass)", u_ref.len(), mass.nrows()));
    };
    let abs = mass_norm(mass, &e);
    let denom = mass_norm(mass, &r);
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "percentage error undefined for a zero reference".into(),
        ));
    }
    Ok((abs, 100.0 * abs / denom))
}

/// `sqrt(v^T M v)`
pub fn mass_norm(mass: &CsrMatrix, v: &DVector<f64>) -> f64 {
    v.dot(&mass.mul_vec(v)).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::perm::gen_channelized;

    fn problem(mesh: &StructuredMesh, kappa: PermField, alpha: f64, source: SourceSpec) -> DiffusionProblem {
        DiffusionProblem {
            kappa,
            alpha,
            source,
            dt: 0.1,
            n_steps: 10,
            u0: DVector::zeros(mesh.n_nodes()),
        }
    }

    fn bump(mesh: &StructuredMesh) -> DVector<f64> {
        DVector::from_fn(mesh.n_nodes(), |n, _| {
            let (x, y) = mesh.node_coords(n);
            (16.0 * x * (1.0 - x) * y * (1.0 - y)).powi(2)
        })
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let mesh = build_mesh(8, 8).unwrap();
        let p = problem(&mesh, PermField::uniform(&mesh, 1.0).unwrap(), 20.0, SourceSpec::Zero);
        let u = step_fine(&mesh, &p, &DVector::zeros(mesh.n_nodes()), 0.1).unwrap();
        assert_eq!(u.amax(), 0.0);
    }

    #[test]
    fn unforced_steps_contract_in_mass_norm() {
        let mesh = build_mesh(32, 32).unwrap();
        let kappa = gen_channelized(4, 2, 1000.0, &mesh).unwrap();
        for alpha in [0.0, 5.0, 20.0] {
            let p = problem(&mesh, kappa.clone(), alpha, SourceSpec::Zero);
            let solver = FineSolver::new(&mesh, &p).unwrap();
            let states = solver.run(&bump(&mesh), 5).unwrap();
            for w in states.windows(2) {
                let before = mass_norm(solver.mass(), &mesh.restrict(&w[0]));
                let after = mass_norm(solver.mass(), &mesh.restrict(&w[1]));
                assert!(after <= before, "alpha {alpha}: {after} > {before}");
            }
        }
    }

    #[test]
    fn boundary_values_stay_zero() {
        let mesh = build_mesh(16, 16).unwrap();
        let p = problem(
            &mesh,
            PermField::uniform(&mesh, 1.0).unwrap(),
            20.0,
            SourceSpec::Constant { value: 5.0 },
        );
        let solver = FineSolver::new(&mesh, &p).unwrap();
        for u in solver.run(&bump(&mesh), 3).unwrap() {
            for n in 0..mesh.n_nodes() {
                if mesh.is_boundary(n) {
                    assert_eq!(u[n], 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_nonzero_boundary_initial_condition() {
        let mesh = build_mesh(4, 4).unwrap();
        let mut p = problem(&mesh, PermField::uniform(&mesh, 1.0).unwrap(), 0.0, SourceSpec::Zero);
        p.u0[0] = 1.0;
        assert!(FineSolver::new(&mesh, &p).is_err());
        p.u0[0] = 0.0;
        p.dt = 0.0;
        assert!(FineSolver::new(&mesh, &p).is_err());
    }

    #[test]
    fn capped_cg_step_falls_back_to_direct_solve() {
        let mesh = build_mesh(16, 16).unwrap();
        let p = problem(&mesh, PermField::uniform(&mesh, 1.0).unwrap(), 0.0, SourceSpec::Zero);
        let reference = FineSolver::new(&mesh, &p).unwrap().step(&bump(&mesh), 0.1).unwrap();
        let capped = FineSolver::new(&mesh, &p).unwrap().with_cg_options(CgOptions {
            rtol: 1e-300,
            max_iter_factor: 0,
        });
        let u = capped.step(&bump(&mesh), 0.1).unwrap();
        assert!((&u - &reference).amax() <= 1e-10 * reference.amax());
    }

    #[test]
    fn l2_error_identities() {
        let mesh = build_mesh(8, 8).unwrap();
        let m = assemble_mass(&mesh);
        let u = bump(&mesh);
        assert_eq!(l2_error(&mesh, &m, &u, &u).unwrap(), (0.0, 0.0));
        let (_, pct) = l2_error(&mesh, &m, &u, &DVector::zeros(mesh.n_nodes())).unwrap();
        assert!((pct - 100.0).abs() < 1e-12);
        let zero = DVector::zeros(mesh.n_nodes());
        assert!(l2_error(&mesh, &m, &zero, &u).is_err());
        // interior mass gives the same answer for vectors with zero boundary values
        let mi = Assembler::new(&mesh).mass(DofSet::Interior);
        let v = u.map(|x| 0.5 * x);
        let a = l2_error(&mesh, &m, &u, &v).unwrap();
        let b = l2_error(&mesh, &mi, &u, &v).unwrap();
        assert!((a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-12);
    }

    #[test]
    fn l2_error_of_interior_indicator_matches_quadrature() {
        let mesh = build_mesh(16, 16).unwrap();
        let m = assemble_mass(&mesh);
        let e = DVector::from_fn(mesh.n_nodes(), |n, _| if mesh.is_boundary(n) { 0.0 } else { 1.0 });
        let (abs, _) = l2_error(&mesh, &m, &e, &DVector::zeros(mesh.n_nodes())).unwrap();
        // oracle: midpoint quadrature of |e_h|^2 on a 10x refined grid
        let n = 160;
        let h = 1.0 / n as f64;
        let eval = |x: f64, y: f64| {
            let (i, j) = ((x * 16.0).floor() as usize, (y * 16.0).floor() as usize);
            let el = j * 16 + i;
            let nodes = mesh.element_nodes(el);
            let (x0, y0) = mesh.element_origin(el);
            let (s, t) = ((x - x0) * 16.0, (y - y0) * 16.0);
            let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
            (0..4).map(|a| w[a] * e[nodes[a]]).sum::<f64>()
        };
        let mut integral = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = eval((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                integral += v * v * h * h;
            }
        }
        assert!((abs - integral.sqrt()).abs() < 1e-3, "{abs} vs {}", integral.sqrt());
        assert!((abs - 1.0).abs() < 0.15);
    }
}
