//! Realization generation (reduced model on the model field, fine solver on
//! the true field), input encoding and assembly of training sets.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FineSolver, SourceSpec};
use crate::mesh::StructuredMesh;
use crate::net::{Dataset, Provenance};
use crate::perm::{eval_on_elements, FieldSpec, PermField};
use crate::pod::{reconstruct, NodalBasis, ReducedModel};

/// `count` coefficient vectors of length `m`, entries i.i.d. uniform on `range`.
pub fn sample_initial_conditions(count: usize, m: usize, range: (f64, f64), seed: u64) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one initial condition".into()));
    }
    if !(range.0 < range.1) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(Error::InvalidArgument(format!("bad initial-condition range {range:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| DVector::from_fn(m, |_, _| rng.gen_range(range.0..=range.1)))
        .collect())
}

/// Which extra inputs accompany the state in a network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputEncoding {
    /// Append `log10 kappa` averaged over a `lattice x lattice` grid of cells.
    pub kappa: bool,
    /// Append the well rates at the target time.
    pub source: bool,
    pub lattice: usize,
}

impl Default for InputEncoding {
    fn default() -> Self {
        Self {
            kappa: false,
            source: false,
            lattice: 8,
        }
    }
}

impl InputEncoding {
    pub fn state_only() -> Self {
        Self::default()
    }

    pub fn with_kappa() -> Self {
        Self {
            kappa: true,
            ..Self::default()
        }
    }

    pub fn with_kappa_and_source() -> Self {
        Self {
            kappa: true,
            source: true,
            ..Self::default()
        }
    }

    /// Width of the encoded extra inputs.
    pub fn dim(&self, n_wells: usize) -> usize {
        let k = if self.kappa { self.lattice * self.lattice } else { 0 };
        let g = if self.source { n_wells } else { 0 };
        k + g
    }

    /// Coarse `log10 kappa` features, row-major over the lattice.
    pub fn kappa_features(&self, field: &PermField, mesh: &StructuredMesh) -> Result<Vec<f64>> {
        let p = self.lattice;
        if p == 0 {
            return Err(Error::InvalidArgument("lattice must be positive".into()));
        }
        let values = eval_on_elements(field, mesh)?;
        let (nx, ny) = (mesh.nx(), mesh.ny());
        let mut sum = vec![0.0; p * p];
        let mut count = vec![0usize; p * p];
        for j in 0..ny {
            let cj = j * p / ny;
            for i in 0..nx {
                let ci = i * p / nx;
                sum[cj * p + ci] += values[j * nx + i].log10();
                count[cj * p + ci] += 1;
            }
        }
        Ok(sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect())
    }

    /// Encoded `I^{n+1}` for `n = 0 .. n_steps - 1`.
    pub fn encode_inputs(
        &self,
        field: &PermField,
        mesh: &StructuredMesh,
        source: &SourceSpec,
        dt: f64,
        n_steps: usize,
    ) -> Result<Vec<DVector<f64>>> {
        let kappa = if self.kappa {
            self.kappa_features(field, mesh)?
        } else {
            Vec::new()
        };
        Ok((0..n_steps)
            .map(|n| {
                let mut v = kappa.clone();
                if self.source {
                    v.extend(source.rates_at((n + 1) as f64 * dt));
                }
                DVector::from_vec(v)
            })
            .collect())
    }
}

/// One trajectory of reduced coefficients with the inputs that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRealization {
    pub id: usize,
    /// Index of the permeability configuration.
    pub group: usize,
    pub provenance: Provenance,
    pub field: FieldSpec,
    pub source: SourceSpec,
    /// `c_0 .. c_k`
    pub trajectory: Vec<DVector<f64>>,
    /// Encoded `I^1 .. I^k`.
    pub inputs: Vec<DVector<f64>>,
}

impl SampleRealization {
    pub fn n_steps(&self) -> usize {
        self.trajectory.len() - 1
    }
}

/// Runs the reduced model from `c0`.
pub fn generate_simulation_realization(
    id: usize,
    group: usize,
    c0: &DVector<f64>,
    model: &ReducedModel,
    field: &PermField,
    encoding: &InputEncoding,
    n_steps: usize,
) -> Result<SampleRealization> {
    let fine = model.fine();
    let trajectory = model.run(c0, n_steps)?;
    let inputs = encoding.encode_inputs(field, fine.mesh(), fine.source(), fine.dt(), n_steps)?;
    Ok(SampleRealization {
        id,
        group,
        provenance: Provenance::Simulation,
        field: field.spec().clone(),
        source: fine.source().clone(),
        trajectory,
        inputs,
    })
}

/// Runs the fine solver from `reconstruct(basis, c0)` and records the
/// solution at the observation nodes.
#[allow(clippy::too_many_arguments)]
pub fn generate_observation_realization(
    id: usize,
    group: usize,
    c0: &DVector<f64>,
    fine: &FineSolver,
    basis: &NodalBasis,
    field: &PermField,
    encoding: &InputEncoding,
    n_steps: usize,
) -> Result<SampleRealization> {
    let u0 = reconstruct(basis, c0)?;
    observe_fine_run(id, group, &u0, fine, basis, field, encoding, n_steps)
}

/// Runs the fine solver from the full nodal field `u0` and records the
/// solution at the observation nodes.
#[allow(clippy::too_many_arguments)]
pub fn observe_fine_run(
    id: usize,
    group: usize,
    u0: &DVector<f64>,
    fine: &FineSolver,
    basis: &NodalBasis,
    field: &PermField,
    encoding: &InputEncoding,
    n_steps: usize,
) -> Result<SampleRealization> {
    let states = fine.run(u0, n_steps)?;
    let trajectory = states.iter().map(|u| basis.observe(u)).collect::<Result<Vec<_>>>()?;
    let inputs = encoding.encode_inputs(field, fine.mesh(), fine.source(), fine.dt(), n_steps)?;
    Ok(SampleRealization {
        id,
        group,
        provenance: Provenance::Observation,
        field: field.spec().clone(),
        source: fine.source().clone(),
        trajectory,
        inputs,
    })
}

/// Output type of the surrogate (A: observation, B: mixed, C: simulation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkKind {
    A,
    B,
    C,
}

fn pairs_of(r: &SampleRealization, input_states: &[DVector<f64>]) -> Vec<(DVector<f64>, DVector<f64>)> {
    (0..r.n_steps())
        .map(|n| {
            let c = &input_states[n];
            let i = &r.inputs[n];
            let x = DVector::from_iterator(c.len() + i.len(), c.iter().chain(i.iter()).copied());
            (x, r.trajectory[n + 1].clone())
        })
        .collect()
}

/// Pairs `(c_n, I_{n+1}) -> c_{n+1}` of every realization, tagged with
/// its provenance. Observation pairs take the observed state as input.
pub fn assemble_dataset(realizations: &[SampleRealization], kind: NetworkKind) -> Result<Dataset> {
    assemble_dataset_with(realizations, kind, &[])
}

/// Like [`assemble_dataset`], but observation realizations whose id has a
/// simulation counterpart in `paired` take the simulated state as input
/// instead of the observed one.
pub fn assemble_dataset_with(
    realizations: &[SampleRealization],
    kind: NetworkKind,
    paired: &[SampleRealization],
) -> Result<Dataset> {
    let n_obs = realizations.iter().filter(|r| r.provenance == Provenance::Observation).count();
    let n_sim = realizations.len() - n_obs;
    let ok = match kind {
        NetworkKind::A => n_obs > 0 && n_sim == 0,
        NetworkKind::B => n_obs > 0 && n_sim > 0,
        NetworkKind::C => n_sim > 0 && n_obs == 0,
    };
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "network {kind:?} cannot be trained on {n_sim} simulation and {n_obs} observation realizations"
        )));
    }
    let mut pairs = Vec::new();
    let (mut prov, mut runs, mut steps) = (Vec::new(), Vec::new(), Vec::new());
    for r in realizations {
        let states = match r.provenance {
            Provenance::Observation => paired
                .iter()
                .find(|s| s.id == r.id && s.provenance == Provenance::Simulation)
                .map(|s| &s.trajectory)
                .unwrap_or(&r.trajectory),
            Provenance::Simulation => &r.trajectory,
        };
        if states.len() != r.trajectory.len() {
            return Err(Error::dim("paired trajectory", r.trajectory.len(), states.len()));
        }
        for (n, p) in pairs_of(r, states).into_iter().enumerate() {
            pairs.push(p);
            prov.push(r.provenance);
            runs.push(r.id);
            steps.push(n);
        }
    }
    Dataset::from_pairs(&pairs, prov, runs, steps)
}

fn check_counts(total: usize, train: usize) -> Result<()> {
    if train == 0 || train >= total {
        return Err(Error::InvalidArgument(format!(
            "training count must be in 1..{total}, got {train}"
        )));
    }
    Ok(())
}

/// Seeded choice of `train_count` of `n` items. Both index lists are sorted.
pub fn split_indices(n: usize, train_count: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    check_counts(n, train_count)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train: BTreeSet<usize> = idx[..train_count].iter().copied().collect();
    Ok(partition_indices(n, |i| train.contains(&i)))
}

/// Holds out `per_group` items of every group, where `groups[i]` is the
/// group of item `i`.
pub fn stratified_indices(groups: &[usize], per_group: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let distinct: BTreeSet<usize> = groups.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = BTreeSet::new();
    for g in distinct {
        let mut members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        check_counts(members.len(), members.len().saturating_sub(per_group))?;
        members.shuffle(&mut rng);
        test.extend(members.into_iter().take(per_group));
    }
    Ok(partition_indices(groups.len(), |i| !test.contains(&i)))
}

/// Every item of group `held_out` goes to the test side.
pub fn group_indices(groups: &[usize], held_out: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (train, test) = partition_indices(groups.len(), |i| groups[i] != held_out);
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "holding out group {held_out} leaves an empty side"
        )));
    }
    Ok((train, test))
}

fn partition_indices(n: usize, keep: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<usize>) {
    (0..n).partition(|&i| keep(i))
}

fn pick(realizations: &[SampleRealization], (train, test): (Vec<usize>, Vec<usize>)) -> (Vec<SampleRealization>, Vec<SampleRealization>) {
    let take = |idx: Vec<usize>| idx.into_iter().map(|i| realizations[i].clone()).collect();
    (take(train), take(test))
}

fn groups_of(realizations: &[SampleRealization]) -> Vec<usize> {
    realizations.iter().map(|r| r.group).collect()
}

/// Seeded split at realization granularity.
pub fn split(
    realizations: &[SampleRealization],
    train_count: usize,
    seed: u64,
) -> Result<(Vec<SampleRealization>, Vec<SampleRealization>)> {
    Ok(pick(realizations, split_indices(realizations.len(), train_count, seed)?))
}

/// Holds out `per_group` realizations of every group, chosen by seed.
pub fn split_stratified(
    realizations: &[SampleRealization],
    per_group: usize,
    seed: u64,
) -> Result<(Vec<SampleRealization>, Vec<SampleRealization>)> {
    Ok(pick(realizations, stratified_indices(&groups_of(realizations), per_group, seed)?))
}

/// Every realization of group `held_out` goes to the test side.
pub fn split_by_group(
    realizations: &[SampleRealization],
    held_out: usize,
) -> Result<(Vec<SampleRealization>, Vec<SampleRealization>)> {
    Ok(pick(realizations, group_indices(&groups_of(realizations), held_out)?))
}

/// Everything needed to regenerate a persisted dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub kind: NetworkKind,
    pub encoding: InputEncoding,
    pub seeds: Vec<u64>,
    pub n_pairs: usize,
    pub n_simulation: usize,
    pub n_observation: usize,
    pub runs: Vec<usize>,
    pub fields: Vec<FieldSpec>,
}

/// Writes `<name>.csv` and `<name>.json` into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, dataset: &Dataset, manifest: &DatasetManifest) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    dataset.write_csv(dir.join(format!("{}.csv", manifest.name)))?;
    fs::write(
        dir.join(format!("{}.json", manifest.name)),
        serde_json::to_string_pretty(manifest)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::perm::gen_channelized;

    fn fake(id: usize, group: usize, provenance: Provenance) -> SampleRealization {
        let mesh = build_mesh(4, 4).unwrap();
        SampleRealization {
            id,
            group,
            provenance,
            field: PermField::uniform(&mesh, 1.0).unwrap().spec().clone(),
            source: SourceSpec::Zero,
            trajectory: (0..=10).map(|n| DVector::from_element(5, (id * 100 + n) as f64)).collect(),
            inputs: vec![DVector::from_element(2, 1.0); 10],
        }
    }

    #[test]
    fn initial_conditions() {
        let c = sample_initial_conditions(100, 5, (0.0, 1.0), 3).unwrap();
        assert_eq!(c.len(), 100);
        assert!(c.iter().all(|v| v.iter().all(|&x| (0.0..=1.0).contains(&x))));
        assert_eq!(c, sample_initial_conditions(100, 5, (0.0, 1.0), 3).unwrap());
        assert!(sample_initial_conditions(0, 5, (0.0, 1.0), 3).is_err());
    }

    #[test]
    fn pair_counts_and_tags() {
        let sims: Vec<_> = (0..90).map(|i| fake(i, 0, Provenance::Simulation)).collect();
        let ds = assemble_dataset(&sims, NetworkKind::C).unwrap();
        assert_eq!(ds.len(), 900);
        assert_eq!(ds.input_dim(), 7);
        let obs: Vec<_> = (90..100).map(|i| fake(i, 0, Provenance::Observation)).collect();
        let mixed: Vec<_> = sims.iter().chain(&obs).cloned().collect();
        let ds = assemble_dataset(&mixed, NetworkKind::B).unwrap();
        assert_eq!(ds.count(Provenance::Simulation), 900);
        assert_eq!(ds.count(Provenance::Observation), 100);
        assert!(assemble_dataset(&sims, NetworkKind::A).is_err());
        assert!(assemble_dataset(&obs, NetworkKind::B).is_err());
        assert!(assemble_dataset(&mixed, NetworkKind::C).is_err());
    }

    #[test]
    fn pairs_are_consecutive_states() {
        let r = fake(3, 0, Provenance::Simulation);
        let ds = assemble_dataset(&[r.clone()], NetworkKind::C).unwrap();
        for n in 0..10 {
            assert_eq!(ds.inputs()[(0, n)], r.trajectory[n][0]);
            assert_eq!(ds.inputs()[(5, n)], 1.0);
            assert_eq!(ds.targets()[(0, n)], r.trajectory[n + 1][0]);
            assert_eq!(ds.steps()[n], n);
        }
    }

    #[test]
    fn paired_simulation_inputs() {
        let sim = fake(7, 0, Provenance::Simulation);
        let mut obs = fake(7, 0, Provenance::Observation);
        obs.trajectory.iter_mut().for_each(|c| *c *= -1.0);
        let ds = assemble_dataset_with(&[obs.clone()], NetworkKind::A, &[sim.clone()]).unwrap();
        assert_eq!(ds.inputs()[(0, 2)], sim.trajectory[2][0]);
        assert_eq!(ds.targets()[(0, 2)], obs.trajectory[3][0]);
    }

    #[test]
    fn splits() {
        let all: Vec<_> = (0..100).map(|i| fake(i, i / 10, Provenance::Simulation)).collect();
        let (train, test) = split(&all, 90, 1).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        let ids: BTreeSet<usize> = train.iter().map(|r| r.id).collect();
        assert!(test.iter().all(|r| !ids.contains(&r.id)));
        assert_eq!(split(&all, 90, 1).unwrap().1, test);
        assert!(split(&all, 100, 1).is_err());

        let (train, test) = split_by_group(&all, 4).unwrap();
        assert_eq!(test.len(), 10);
        assert!(test.iter().all(|r| r.group == 4));
        assert!(train.iter().all(|r| r.group != 4));

        let (train, test) = split_stratified(&all, 1, 2).unwrap();
        assert_eq!((train.len(), test.len()), (90, 10));
        let groups: BTreeSet<usize> = test.iter().map(|r| r.group).collect();
        assert_eq!(groups.len(), 10);
    }

    #[test]
    fn kappa_features_are_log_averages() {
        let mesh = build_mesh(32, 32).unwrap();
        let enc = InputEncoding::with_kappa();
        let uniform = PermField::uniform(&mesh, 10.0).unwrap();
        let f = enc.kappa_features(&uniform, &mesh).unwrap();
        assert_eq!(f.len(), 64);
        assert!(f.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let field = gen_channelized(1, 2, 1000.0, &mesh).unwrap();
        let f = enc.kappa_features(&field, &mesh).unwrap();
        let mean: f64 = f.iter().sum::<f64>() / 64.0;
        let high = field.high_mask().iter().filter(|&&h| h).count() as f64 / 1024.0;
        assert!((mean - 3.0 * high).abs() < 1e-12);
        assert_eq!(enc.dim(5), 64);
        assert_eq!(InputEncoding::with_kappa_and_source().dim(5), 69);
    }
}
