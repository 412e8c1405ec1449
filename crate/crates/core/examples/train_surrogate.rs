//! Trains a small MLP on the one-step map of a reduced model and rolls it
//! out on a held-out initial condition.

use nalgebra::DVector;
use podflow::data::{assemble_dataset, generate_simulation_realization, sample_initial_conditions, InputEncoding, NetworkKind};
use podflow::fem::{DiffusionProblem, FineSolver, RateSchedule, SourceSpec, WellSource};
use podflow::mesh::build_mesh;
use podflow::net::{init_network, layer_dims, loss_standard, rollout, train, OutputActivation, TrainingConfig};
use podflow::perm::gen_channelized;
use podflow::pod::{
    build_nodal_basis, collect_fine_snapshots, compute_pod, default_observation_points, hat_lift,
    select_observation_nodes, ReducedModel,
};

fn main() -> podflow::Result<()> {
    let mesh = build_mesh(24, 24)?;
    let points = default_observation_points(5);
    let nodes = select_observation_nodes(&mesh, &points)?;
    let kappa = gen_channelized(5, 2, 1000.0, &mesh)?;
    let problem = DiffusionProblem {
        kappa: kappa.clone(),
        alpha: 20.0,
        source: SourceSpec::Wells(WellSource {
            centers: points,
            width: 0.05,
            schedule: RateSchedule::Constant { rates: vec![50.0; 5] },
        }),
        dt: 0.1,
        n_steps: 10,
        u0: DVector::zeros(mesh.n_nodes()),
    };
    let fine = FineSolver::new(&mesh, &problem)?;
    let c0 = sample_initial_conditions(41, 5, (0.0, 0.1), 9)?;

    let runs = c0[..40]
        .iter()
        .map(|c| fine.run(&hat_lift(&mesh, &nodes, c)?, 10))
        .collect::<podflow::Result<Vec<_>>>()?;
    let pod = compute_pod(&collect_fine_snapshots(&mesh, &runs)?, 5)?;
    let rom = ReducedModel::new(build_nodal_basis(&mesh, &pod, &nodes)?, fine)?;

    let enc = InputEncoding::state_only();
    let data = c0
        .iter()
        .enumerate()
        .map(|(id, c)| generate_simulation_realization(id, 0, c, &rom, &kappa, &enc, 10))
        .collect::<podflow::Result<Vec<_>>>()?;
    let ds = assemble_dataset(&data[..40], NetworkKind::C)?;

    let net = init_network(&layer_dims(5, 3, 50, 5), 1, 0.01, OutputActivation::Linear)?;
    let cfg = TrainingConfig { epochs: 200, ..TrainingConfig::default() };
    let (trained, history) = train(&net, &ds, &cfg)?;
    println!(
        "{} pairs, loss {:.3e} -> {:.3e} (standardized), data-unit MSE {:.3e}",
        ds.len(),
        history.losses[0],
        history.losses.last().unwrap(),
        loss_standard(&trained, &ds)?
    );

    let test = &data[40];
    let predicted = rollout(&trained, &test.trajectory[0], &test.inputs)?;
    for n in [1, 5, 10] {
        println!("step {n:>2}: reference {:.4?}", test.trajectory[n].as_slice());
        println!("         surrogate {:.4?}", predicted[n].as_slice());
    }
    Ok(())
}
