//! Builds a five-mode nodal basis from fine snapshots and compares the
//! reduced model with the fine solver on a fresh initial condition.

use nalgebra::DVector;
use podflow::fem::{DiffusionProblem, FineSolver, RateSchedule, SourceSpec, WellSource};
use podflow::mesh::build_mesh;
use podflow::perm::gen_channelized;
use podflow::pod::{
    build_nodal_basis, collect_fine_snapshots, compute_pod, default_observation_points, hat_lift, reconstruct,
    select_observation_nodes, ReducedModel,
};

fn main() -> podflow::Result<()> {
    let mesh = build_mesh(32, 32)?;
    let points = default_observation_points(5);
    let nodes = select_observation_nodes(&mesh, &points)?;
    let problem = DiffusionProblem {
        kappa: gen_channelized(3, 2, 1000.0, &mesh)?,
        alpha: 20.0,
        source: SourceSpec::Wells(WellSource {
            centers: points.clone(),
            width: 0.05,
            schedule: RateSchedule::Constant {
                rates: vec![50.0, 40.0, 60.0, 45.0, 55.0],
            },
        }),
        dt: 0.1,
        n_steps: 10,
        u0: DVector::zeros(mesh.n_nodes()),
    };
    let fine = FineSolver::new(&mesh, &problem)?;

    // snapshots from 20 runs with coefficients lifted through hat functions
    let runs = (0..20)
        .map(|k| {
            let c = DVector::from_fn(5, |i, _| 0.1 * ((k * 7 + i * 3) % 10) as f64 / 10.0);
            fine.run(&hat_lift(&mesh, &nodes, &c)?, problem.n_steps)
        })
        .collect::<podflow::Result<Vec<_>>>()?;
    let snapshots = collect_fine_snapshots(&mesh, &runs)?;
    let pod = compute_pod(&snapshots, 5)?;
    println!("leading singular values: {:.4?}", &pod.singular_values.as_slice()[..8]);
    let total: f64 = pod.singular_values.iter().map(|s| s * s).sum();
    println!("discarded energy fraction: {:.3e}", pod.discarded_energy() / total);

    let basis = build_nodal_basis(&mesh, &pod, &nodes)?;
    println!("max |psi_k(x_l) - delta_kl| = {:.2e}", basis.interpolation_defect());

    let rom = ReducedModel::new(basis.clone(), fine.clone())?;
    let c0 = DVector::from_vec(vec![0.05, 0.02, 0.08, 0.04, 0.06]);
    let reduced = rom.run(&c0, problem.n_steps)?;
    let full = fine.run(&reconstruct(&basis, &c0)?, problem.n_steps)?;
    println!("step  reduced coefficients                       fine values at nodes");
    for n in [0, 1, 2, 5, 10] {
        let observed = basis.observe(&full[n])?;
        println!("{n:>4}  {:.4?}  {:.4?}", reduced[n].as_slice(), observed.as_slice());
    }
    Ok(())
}
