//! Desk-scale problem shared by the integration tests: a 32x32 mesh, a
//! two-channel contrast-1000 field, five wells at the default observation
//! points and fine runs started from lifted uniform coefficient draws.
#![allow(dead_code)]

use nalgebra::DVector;
use podflow::data::sample_initial_conditions;
use podflow::fem::{DiffusionProblem, FineSolver, RateSchedule, SourceSpec, WellSource};
use podflow::mesh::{build_mesh, StructuredMesh};
use podflow::perm::{gen_channelized, PermField};
use podflow::pod::{
    collect_fine_snapshots, default_observation_points, hat_lift, select_observation_nodes, SnapshotMatrix,
};

pub const ALPHA: f64 = 20.0;
pub const DT: f64 = 0.1;
pub const STEPS: usize = 10;
pub const MODES: usize = 5;

pub struct Problem {
    pub mesh: StructuredMesh,
    pub field: PermField,
    pub source: SourceSpec,
    pub nodes: Vec<usize>,
}

impl Problem {
    pub fn new(seed: u64) -> Self {
        let mesh = build_mesh(32, 32).unwrap();
        let field = gen_channelized(seed, 2, 1000.0, &mesh).unwrap();
        let points = default_observation_points(MODES);
        let nodes = select_observation_nodes(&mesh, &points).unwrap();
        let source = SourceSpec::Wells(WellSource {
            centers: points,
            width: 0.05,
            schedule: RateSchedule::Constant {
                rates: vec![50.0, 45.0, 55.0, 52.0, 48.0],
            },
        });
        Self {
            mesh,
            field,
            source,
            nodes,
        }
    }

    pub fn solver(&self) -> FineSolver {
        let problem = DiffusionProblem {
            kappa: self.field.clone(),
            alpha: ALPHA,
            source: self.source.clone(),
            dt: DT,
            n_steps: STEPS,
            u0: DVector::zeros(self.mesh.n_nodes()),
        };
        FineSolver::new(&self.mesh, &problem).unwrap()
    }

    pub fn initial_coefficients(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        sample_initial_conditions(count, MODES, (0.0, 0.1), seed).unwrap()
    }

    /// Fine trajectories from the hat lift of each coefficient vector.
    pub fn fine_runs(&self, c0: &[DVector<f64>]) -> Vec<Vec<DVector<f64>>> {
        let solver = self.solver();
        c0.iter()
            .map(|c| solver.run(&hat_lift(&self.mesh, &self.nodes, c).unwrap(), STEPS).unwrap())
            .collect()
    }

    pub fn snapshots(&self, realizations: usize, seed: u64) -> SnapshotMatrix {
        let runs = self.fine_runs(&self.initial_coefficients(realizations, seed));
        collect_fine_snapshots(&self.mesh, &runs).unwrap()
    }
}
