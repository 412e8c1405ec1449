use nalgebra::DVector;

use crate::data::SampleRealization;
use crate::error::{Error, Result};
use crate::fem::l2_error;
use crate::linalg::CsrMatrix;
use crate::net::{rollout, rollout_per_step, Network};
use crate::pod::{reconstruct, NodalBasis};

/// A trained forward map: one network for all steps or one per step.
#[derive(Debug, Clone, PartialEq)]
pub enum Surrogate {
    Universal(Network),
    PerStep(Vec<Network>),
}

impl Surrogate {
    pub fn networks(&self) -> &[Network] {
        match self {
            Surrogate::Universal(n) => std::slice::from_ref(n),
            Surrogate::PerStep(ns) => ns,
        }
    }

    fn network_for(&self, step: usize) -> Result<&Network> {
        match self {
            Surrogate::Universal(n) => Ok(n),
            Surrogate::PerStep(ns) => ns
                .get(step)
                .ok_or_else(|| Error::dim("per-step networks", step + 1, ns.len())),
        }
    }

    /// `c_{n+1}` from `c_n` and `I_{n+1}`.
    pub fn step(&self, n: usize, c: &DVector<f64>, input: &DVector<f64>) -> Result<DVector<f64>> {
        let net = self.network_for(n)?;
        if c.len() + input.len() != net.input_dim() {
            return Err(Error::dim("surrogate input", net.input_dim(), c.len() + input.len()));
        }
        let x = DVector::from_iterator(net.input_dim(), c.iter().chain(input.iter()).copied());
        net.predict(&x)
    }

    pub fn rollout(&self, c0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        match self {
            Surrogate::Universal(n) => rollout(n, c0, inputs),
            Surrogate::PerStep(ns) => rollout_per_step(ns, c0, inputs),
        }
    }
}

/// Mean percentage errors of a surrogate on a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean over all test pairs.
    pub one_step_pct: f64,
    /// Mean over test realizations of the error at the last step.
    pub final_time_pct: f64,
    /// Final-time error of every test realization, in input order.
    pub final_time_each: Vec<f64>,
}

/// Percentage L2 error of the fields reconstructed from two coefficient
/// vectors. `mass` is the interior mass matrix of the basis mesh.
pub fn field_error_pct(basis: &NodalBasis, mass: &CsrMatrix, c_ref: &DVector<f64>, c_pred: &DVector<f64>) -> Result<f64> {
    let u_ref = reconstruct(basis, c_ref)?;
    let u_pred = reconstruct(basis, c_pred)?;
    Ok(l2_error(basis.mesh(), mass, &u_ref, &u_pred)?.1)
}

/// One-step and final-time errors against the trajectories stored in
/// `test`, which are the targets (simulation or observation data).
pub fn evaluate_network(
    surrogate: &Surrogate,
    test: &[SampleRealization],
    basis: &NodalBasis,
    mass: &CsrMatrix,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut one_step = Vec::new();
    let mut final_time_each = Vec::with_capacity(test.len());
    for r in test {
        if r.trajectory.len() != r.inputs.len() + 1 {
            return Err(Error::dim("test inputs", r.trajectory.len() - 1, r.inputs.len()));
        }
        for n in 0..r.n_steps() {
            let pred = surrogate.step(n, &r.trajectory[n], &r.inputs[n])?;
            one_step.push(field_error_pct(basis, mass, &r.trajectory[n + 1], &pred)?);
        }
        let states = surrogate.rollout(&r.trajectory[0], &r.inputs)?;
        let last = r.trajectory.last().expect("trajectory is non-empty");
        final_time_each.push(field_error_pct(basis, mass, last, states.last().expect("rollout is non-empty"))?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Evaluation {
        one_step_pct: mean(&one_step),
        final_time_pct: mean(&final_time_each),
        final_time_each,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    use crate::fem::{Assembler, DofSet, SourceSpec};
    use crate::mesh::build_mesh;
    use crate::net::{init_network, OutputActivation, Provenance};
    use crate::perm::PermField;
    use crate::pod::{build_nodal_basis, collect_snapshots, compute_pod, select_observation_nodes};

    fn setup() -> (NodalBasis, CsrMatrix) {
        let mesh = build_mesh(8, 8).unwrap();
        let nodes = select_observation_nodes(&mesh, &[(0.5, 0.5), (0.25, 0.25)]).unwrap();
        let n = mesh.n_interior();
        let runs = vec![(0..4)
            .map(|k| DVector::from_fn(n, |i, _| ((i * (k + 1)) as f64 * 0.37).sin() + 0.1 * k as f64))
            .collect::<Vec<_>>()];
        let pod = compute_pod(&collect_snapshots(&runs).unwrap(), 2).unwrap();
        let basis = build_nodal_basis(&mesh, &pod, &nodes).unwrap();
        let mass = Assembler::new(&mesh).mass(DofSet::Interior);
        (basis, mass)
    }

    /// Linear network computing `c -> a c`.
    fn scaling_net(a: f64) -> Network {
        Network::from_parts(
            vec![DMatrix::identity(2, 2) * a],
            vec![DVector::zeros(2)],
            0.01,
            OutputActivation::Linear,
            0,
            None,
        )
        .unwrap()
    }

    fn realization(a: f64) -> SampleRealization {
        let mesh = build_mesh(8, 8).unwrap();
        let trajectory: Vec<_> = (0..=4).map(|n| DVector::from_vec(vec![1.0, 0.5]) * a.powi(n)).collect();
        SampleRealization {
            id: 0,
            group: 0,
            provenance: Provenance::Simulation,
            field: PermField::uniform(&mesh, 1.0).unwrap().spec().clone(),
            source: SourceSpec::Zero,
            trajectory,
            inputs: vec![DVector::zeros(0); 4],
        }
    }

    #[test]
    fn exact_pushforward_has_zero_error() {
        let (basis, mass) = setup();
        let e = evaluate_network(&Surrogate::Universal(scaling_net(0.9)), &[realization(0.9)], &basis, &mass).unwrap();
        assert!(e.one_step_pct < 1e-12 && e.final_time_pct < 1e-12);
    }

    #[test]
    fn zero_network_is_one_hundred_percent() {
        let (basis, mass) = setup();
        let e = evaluate_network(&Surrogate::Universal(scaling_net(0.0)), &[realization(0.9)], &basis, &mass).unwrap();
        assert!((e.final_time_pct - 100.0).abs() < 1e-10);
        assert!((e.one_step_pct - 100.0).abs() < 1e-10);
    }

    #[test]
    fn per_step_and_mismatch() {
        let (basis, mass) = setup();
        let s = Surrogate::PerStep(vec![scaling_net(0.9); 4]);
        let e = evaluate_network(&s, &[realization(0.9)], &basis, &mass).unwrap();
        assert!(e.final_time_pct < 1e-12);
        let short = Surrogate::PerStep(vec![scaling_net(0.9); 3]);
        assert!(evaluate_network(&short, &[realization(0.9)], &basis, &mass).is_err());
        let wide = init_network(&[3, 4, 2], 0, 0.01, OutputActivation::Linear).unwrap();
        assert!(evaluate_network(&Surrogate::Universal(wide), &[realization(0.9)], &basis, &mass).is_err());
    }
}
