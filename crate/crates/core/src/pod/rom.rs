use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::FineSolver;
use crate::linalg::CsrMatrix;
use crate::pod::NodalBasis;

/// Projected matrices of one reduced step.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub load: DVector<f64>,
}

fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

fn galerkin(psi: &DMatrix<f64>, a: &CsrMatrix) -> DMatrix<f64> {
    symmetrize(psi.transpose() * a.mul_dense(psi))
}

/// `(Psi^T M Psi, Psi^T A Psi, Psi^T b)` for an explicit basis matrix.
pub fn project_with(
    psi: &DMatrix<f64>,
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    load: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let n = psi.nrows();
    for (what, got) in [
        ("project (mass)", mass.nrows()),
        ("project (stiffness)", stiffness.nrows()),
        ("project (load)", load.len()),
    ] {
        if got != n {
            return Err(Error::dim(what, n, got));
        }
    }
    let m_red = galerkin(psi, mass);
    if m_red.clone().cholesky().is_none() {
        let rank = psi
            .singular_values()
            .iter()
            .filter(|&&s| s > 1e-12 * psi.norm())
            .count();
        return Err(Error::RankDeficient {
            requested: psi.ncols(),
            rank,
        });
    }
    let a_red = galerkin(psi, stiffness);
    let b_red = psi.transpose() * load;
    Ok((m_red, a_red, b_red))
}

/// Projects a fine system onto the nodal basis.
pub fn project_system(
    basis: &NodalBasis,
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    load: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    project_with(basis.psi(), mass, stiffness, load)
}

/// Galerkin reduced model on a nodal basis. The coefficient of
/// `kappa exp(alpha u)` is lagged on the reconstructed field `Psi c_n` and
/// the projected stiffness is reassembled every step.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    basis: NodalBasis,
    fine: FineSolver,
    mass: DMatrix<f64>,
}

impl ReducedModel {
    pub fn new(basis: NodalBasis, fine: FineSolver) -> Result<Self> {
        if basis.mesh().descriptor() != fine.mesh().descriptor() {
            return Err(Error::InvalidArgument(
                "basis and fine solver live on different meshes".into(),
            ));
        }
        let n = fine.mass().nrows();
        let (mass, _, _) = project_with(basis.psi(), fine.mass(), fine.mass(), &DVector::zeros(n))?;
        Ok(Self { basis, fine, mass })
    }

    pub fn basis(&self) -> &NodalBasis {
        &self.basis
    }

    pub fn fine(&self) -> &FineSolver {
        &self.fine
    }

    /// Reduced mass matrix.
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn system(&self, c_n: &DVector<f64>, t_next: f64) -> Result<ReducedSystem> {
        let psi = self.basis.psi();
        let u = self.basis.mesh().lift(&self.basis.reconstruct_interior(c_n)?);
        let a = self.fine.stiffness(&u)?;
        let load = if self.fine.source().is_zero() {
            DVector::zeros(psi.ncols())
        } else {
            psi.transpose() * self.fine.load(t_next)
        };
        Ok(ReducedSystem {
            mass: self.mass.clone(),
            stiffness: galerkin(psi, &a),
            load,
        })
    }

    /// Solves `(M + dt A(Psi c_n)) c_{n+1} = M c_n + dt b(t_next)` in the
    /// reduced space.
    pub fn step(&self, c_n: &DVector<f64>, t_next: f64) -> Result<DVector<f64>> {
        if c_n.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalRange("reduced state is not finite".into()));
        }
        let sys = self.system(c_n, t_next)?;
        let dt = self.fine.dt();
        let lhs = &sys.mass + &sys.stiffness * dt;
        let mut rhs = &sys.mass * c_n;
        rhs.axpy(dt, &sys.load, 1.0);
        let chol = lhs.cholesky().ok_or(Error::Factorization("reduced step"))?;
        Ok(chol.solve(&rhs))
    }

    /// Coefficients `c_0 .. c_{n_steps}`.
    pub fn run(&self, c0: &DVector<f64>, n_steps: usize) -> Result<Vec<DVector<f64>>> {
        let mut states = Vec::with_capacity(n_steps + 1);
        states.push(c0.clone());
        for n in 0..n_steps {
            let next = self.step(&states[n], (n + 1) as f64 * self.fine.dt())?;
            states.push(next);
        }
        Ok(states)
    }
}

/// One reduced step from `c_n` to `t_next`.
pub fn step_rom(model: &ReducedModel, c_n: &DVector<f64>, t_next: f64) -> Result<DVector<f64>> {
    model.step(c_n, t_next)
}
