//! Proper orthogonal decomposition of fine snapshots, nodal (interpolatory)
//! bases pinned at observation nodes, and the Galerkin reduced model.

mod bundle;
mod nodal;
mod rom;

pub use bundle::{read_basis, write_basis, BASIS_FORMAT_VERSION};
pub use nodal::{
    build_nodal_basis, default_observation_points, hat_lift, reconstruct, select_observation_nodes,
    NodalBasis, MAX_INTERPOLATION_CONDITION,
};
pub use rom::{project_system, project_with, step_rom, ReducedModel, ReducedSystem};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;

/// Smallest admissible `sigma_m / sigma_1`.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Origin of one snapshot column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotMeta {
    pub run: usize,
    pub step: usize,
}

/// Columns are snapshot vectors, ordered run-major then time-major.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    meta: Vec<SnapshotMeta>,
}

impl SnapshotMatrix {
    pub fn from_columns(columns: &[DVector<f64>], meta: Vec<SnapshotMeta>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidArgument("snapshot set is empty".into()));
        }
        if meta.len() != columns.len() {
            return Err(Error::dim("snapshot metadata", columns.len(), meta.len()));
        }
        let n = columns[0].len();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::dim("snapshot length", n, c.len()));
        }
        Ok(Self {
            data: DMatrix::from_columns(columns),
            meta,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn meta(&self) -> &[SnapshotMeta] {
        &self.meta
    }

    pub fn n_dofs(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

/// Stacks trajectories into a snapshot matrix. Every state of every run
/// becomes one column.
pub fn collect_snapshots(runs: &[Vec<DVector<f64>>]) -> Result<SnapshotMatrix> {
    let mut columns = Vec::new();
    let mut meta = Vec::new();
    for (run, states) in runs.iter().enumerate() {
        for (step, s) in states.iter().enumerate() {
            columns.push(s.clone());
            meta.push(SnapshotMeta { run, step });
        }
    }
    SnapshotMatrix::from_columns(&columns, meta)
}

/// Like [`collect_snapshots`] for full nodal trajectories; keeps only the
/// interior DOFs.
pub fn collect_fine_snapshots(mesh: &StructuredMesh, runs: &[Vec<DVector<f64>>]) -> Result<SnapshotMatrix> {
    let mut restricted = Vec::with_capacity(runs.len());
    for states in runs {
        let mut r = Vec::with_capacity(states.len());
        for s in states {
            if s.len() != mesh.n_nodes() {
                return Err(Error::dim("fine snapshot", mesh.n_nodes(), s.len()));
            }
            r.push(mesh.restrict(s));
        }
        restricted.push(r);
    }
    collect_snapshots(&restricted)
}

/// Leading POD modes of a snapshot set.
#[derive(Debug, Clone)]
pub struct PodBasis {
    /// `n_dofs x m`, orthonormal columns.
    pub modes: DMatrix<f64>,
    /// Every singular value of the snapshot matrix (length `N`), nonincreasing.
    pub singular_values: DVector<f64>,
    /// `N x m` unit eigenvectors of the correlation matrix.
    pub eigenvectors: DMatrix<f64>,
}

impl PodBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    /// `sum_{j > m} sigma_j^2`
    pub fn discarded_energy(&self) -> f64 {
        self.singular_values
            .iter()
            .skip(self.n_modes())
            .map(|s| s * s)
            .sum()
    }
}

/// Top `m` POD modes through the eigen-decomposition of `C = Phi^T Phi`.
pub fn compute_pod(snapshots: &SnapshotMatrix, m: usize) -> Result<PodBasis> {
    let n = snapshots.len();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "mode count must be in 1..={n}, got {m}"
        )));
    }
    let phi = snapshots.matrix();
    let c = phi.transpose() * phi;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lambda: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let singular_values = DVector::from_iterator(n, lambda.iter().map(|l| l.sqrt()));

    // eigenvalues of C carry absolute noise around eps * lambda_1 * N
    let floor = n as f64 * f64::EPSILON * lambda[0];
    let resolved = |j: usize| {
        lambda[j] > floor && singular_values[j] >= RANK_TOLERANCE * singular_values[0] && lambda[j] > 0.0
    };
    if !resolved(m - 1) {
        let rank = (0..n).take_while(|&j| resolved(j)).count();
        return Err(Error::RankDeficient { requested: m, rank });
    }

    let mut eigenvectors = DMatrix::zeros(n, m);
    let mut modes = DMatrix::zeros(phi.nrows(), m);
    for (j, &k) in order.iter().take(m).enumerate() {
        let w = eig.eigenvectors.column(k);
        eigenvectors.set_column(j, &w);
        let xi = phi * w / singular_values[j];
        modes.set_column(j, &xi);
    }
    Ok(PodBasis {
        modes,
        singular_values,
        eigenvectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn snapshots_of(phi: &DMatrix<f64>) -> SnapshotMatrix {
        let cols: Vec<DVector<f64>> = phi.column_iter().map(|c| c.into_owned()).collect();
        let meta = (0..cols.len()).map(|step| SnapshotMeta { run: 0, step }).collect();
        SnapshotMatrix::from_columns(&cols, meta).unwrap()
    }

    #[test]
    fn column_counts() {
        let run: Vec<DVector<f64>> = (0..11).map(|k| DVector::from_element(4, k as f64)).collect();
        assert_eq!(collect_snapshots(&[run.clone()]).unwrap().len(), 11);
        let runs = vec![run.clone(); 10];
        let s = collect_snapshots(&runs).unwrap();
        assert_eq!(s.len(), 110);
        assert_eq!(s.meta()[12], SnapshotMeta { run: 1, step: 1 });
        let dup = collect_snapshots(&[run.clone(), run]).unwrap();
        assert_eq!(dup.matrix().column(3), dup.matrix().column(14));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let runs = vec![vec![DVector::zeros(3)], vec![DVector::zeros(4)]];
        assert!(collect_snapshots(&runs).is_err());
    }

    #[test]
    fn rank_one_snapshots() {
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let runs = vec![vec![v.clone(); 4]];
        let pod = compute_pod(&collect_snapshots(&runs).unwrap(), 1).unwrap();
        assert!((pod.singular_values[0] - 3.0 * 2.0).abs() < 1e-12);
        let xi = pod.modes.column(0);
        let sign = xi[0].signum();
        for k in 0..3 {
            assert!((sign * xi[k] - v[k] / 3.0).abs() < 1e-12);
        }
        assert!(matches!(
            compute_pod(&collect_snapshots(&runs).unwrap(), 2),
            Err(Error::RankDeficient { requested: 2, rank: 1 })
        ));
    }

    #[test]
    fn singular_values_match_svd() {
        let phi = random_matrix(50, 12, 3);
        let pod = compute_pod(&snapshots_of(&phi), 6).unwrap();
        let mut oracle: Vec<f64> = phi.clone().svd(false, false).singular_values.iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        for (s, o) in pod.singular_values.iter().zip(&oracle) {
            assert!((s - o).abs() <= 1e-10 * o, "{s} vs {o}");
        }
        let gram = pod.modes.transpose() * &pod.modes;
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-12);
    }

    #[test]
    fn orthogonal_columns_have_equal_sigma() {
        let phi = DMatrix::<f64>::identity(6, 4) * 2.0;
        let pod = compute_pod(&snapshots_of(&phi), 2).unwrap();
        for s in pod.singular_values.iter() {
            assert!((s - 2.0).abs() < 1e-12);
        }
        let proj = &pod.modes * (pod.modes.transpose() * &phi);
        let resid = (&phi - proj).norm_squared();
        assert!((resid - pod.discarded_energy()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mode_count() {
        let phi = random_matrix(5, 3, 1);
        assert!(compute_pod(&snapshots_of(&phi), 0).is_err());
        assert!(compute_pod(&snapshots_of(&phi), 4).is_err());
    }
}
