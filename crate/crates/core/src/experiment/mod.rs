//! Configuration-driven harness for the four surrogate experiments:
//! fixed field and source (1), varying fields (2), varying fields with a
//! time-dependent source (3), and mixed simulation/observation training (4).
//!
//! Every random quantity draws from its own stream derived from the master
//! seed, so reruns with the same config are bit-identical regardless of the
//! worker count.

mod config;
mod eval;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{
    ChannelConfig, ExperimentConfig, HoldOut, NetworkMode, ObservationInput, OutputConfig, RealizationConfig,
    SourceConfig, SweepConfig,
};
pub use eval::{evaluate_network, field_error_pct, Evaluation, Surrogate};
pub use report::{emit_report, ErrorReport, ReportRow, RowStatus, DIVERGENCE_THRESHOLD_PCT};

use crate::data::{
    assemble_dataset_with, observe_fine_run, generate_simulation_realization, group_indices,
    sample_initial_conditions, split_indices, stratified_indices, write_dataset, DatasetManifest, InputEncoding,
    NetworkKind, SampleRealization,
};
use crate::error::{Error, Result};
use crate::fem::{Assembler, DiffusionProblem, DofSet, FineSolver, RateSchedule, SourceSpec, WellSource};
use crate::io::{write_field_csv, write_field_pgm, write_pgm};
use crate::linalg::CsrMatrix;
use crate::mesh::StructuredMesh;
use crate::net::{init_network, layer_dims, train, write_bundle, Dataset, LossConfig, Network, TrainingConfig};
use crate::perm::{gen_channelized_with, perturb_with, FieldSpec, PermField};
use crate::pod::{
    build_nodal_basis, collect_fine_snapshots, compute_pod, hat_lift, reconstruct, select_observation_nodes,
    write_basis, NodalBasis, ReducedModel,
};

/// Random streams, each seeded by [`derive_seed`] from the master seed.
pub mod stream {
    pub const FIELD: u64 = 1;
    pub const PERTURBATION: u64 = 2;
    pub const INITIAL: u64 = 3;
    pub const SOURCE: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
}

/// Seed of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// FNV-1a, used to give every sweep cell its own seed from its label.
fn label_key(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Threads used for data generation and sweep cells.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1 }
    }
}

/// In-memory products of a run, written by [`write_artifacts`].
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub fields: Vec<(String, PermField)>,
    pub bases: Vec<(String, NodalBasis)>,
    /// Trained surrogate of every row that finished training, by row label.
    pub surrogates: Vec<(String, Surrogate)>,
    /// Reference and predicted final-time nodal fields of the first test
    /// realization, by row label.
    pub final_fields: Vec<(String, DVector<f64>, DVector<f64>)>,
    pub datasets: Vec<(Dataset, DatasetManifest)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ErrorReport,
    pub artifacts: Artifacts,
    pub mesh: StructuredMesh,
}

/// One sweep cell as it will be trained, computed without generating data.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPlan {
    pub variant: String,
    pub layers: usize,
    pub neurons: usize,
    pub input_dim: usize,
    /// Summed over all networks of the cell.
    pub params: usize,
    pub train_pairs: usize,
    pub test_realizations: usize,
}

/// Sample counts and sweep cells of a config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub experiment: u8,
    pub interior_dofs: usize,
    pub realizations: usize,
    pub cells: Vec<CellPlan>,
}

impl fmt::Display for RunPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "experiment {}: {} interior dofs, {} realizations, {} networks to train",
            self.experiment,
            self.interior_dofs,
            self.realizations,
            self.cells.len()
        )?;
        writeln!(f, "{:<10} {:>6} {:>7} {:>6} {:>9} {:>11} {:>5}", "variant", "layers", "neurons", "input", "params", "train pairs", "test")?;
        for c in &self.cells {
            let v = if c.variant.is_empty() { "-" } else { &c.variant };
            writeln!(
                f,
                "{:<10} {:>6} {:>7} {:>6} {:>9} {:>11} {:>5}",
                v, c.layers, c.neurons, c.input_dim, c.params, c.train_pairs, c.test_realizations
            )?;
        }
        Ok(())
    }
}

/// (variant, train realizations, train pairs kind, test realizations) per
/// experiment, before any data exists.
fn variant_counts(cfg: &ExperimentConfig) -> Vec<(String, usize, usize)> {
    let r = &cfg.realizations;
    match cfg.experiment {
        1 => vec![(String::new(), r.train, r.total - r.train)],
        2 | 3 => {
            let per = r.total / r.configurations.max(1);
            let mut v = Vec::new();
            if matches!(cfg.hold_out, HoldOut::Shared | HoldOut::Both) {
                v.push(("shared".into(), r.total - r.configurations, r.configurations));
            }
            if matches!(cfg.hold_out, HoldOut::Configuration | HoldOut::Both) {
                v.push(("held_out".into(), r.total - per, per));
            }
            v
        }
        _ => vec![
            ("case1".into(), r.total, r.test_observations),
            ("case2".into(), r.total, r.test_observations),
            ("case3".into(), r.total, r.test_observations),
            ("case4".into(), r.total - r.train, r.test_observations),
        ],
    }
}

/// Sample counts and sweep cells, for dry runs.
pub fn plan(cfg: &ExperimentConfig) -> Result<RunPlan> {
    cfg.validate()?;
    let mesh = StructuredMesh::from_descriptor(&cfg.mesh)?;
    let d_in = cfg.modes + cfg.encoding().dim(cfg.observation_points().len());
    let nets = match cfg.network_mode {
        NetworkMode::Universal => 1,
        NetworkMode::PerStep => cfg.n_steps,
    };
    let mut cells = Vec::new();
    for (variant, train_real, test_real) in variant_counts(cfg) {
        for &layers in &cfg.sweep.depths {
            for &neurons in &cfg.sweep.widths {
                let dims = layer_dims(d_in, layers, neurons, cfg.modes);
                let params: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
                cells.push(CellPlan {
                    variant: variant.clone(),
                    layers,
                    neurons,
                    input_dim: d_in,
                    params: params * nets,
                    train_pairs: train_real * cfg.n_steps,
                    test_realizations: test_real,
                });
            }
        }
    }
    let r = &cfg.realizations;
    let realizations = if cfg.experiment == 4 {
        2 * r.total + r.test_observations
    } else {
        r.total
    };
    Ok(RunPlan {
        experiment: cfg.experiment,
        interior_dofs: mesh.n_interior(),
        realizations,
        cells,
    })
}

/// A realization before any trajectory exists.
#[derive(Debug, Clone)]
struct Spec {
    id: usize,
    group: usize,
    field: usize,
    source: SourceSpec,
    c0: DVector<f64>,
}

struct Setup<'a> {
    cfg: &'a ExperimentConfig,
    mesh: StructuredMesh,
    assembler: Assembler,
    mass: CsrMatrix,
    points: Vec<(f64, f64)>,
    nodes: Vec<usize>,
    encoding: InputEncoding,
    pool: rayon::ThreadPool,
    seeds: BTreeMap<String, u64>,
}

impl<'a> Setup<'a> {
    fn new(cfg: &'a ExperimentConfig, opts: &RunOptions) -> Result<Self> {
        let mesh = StructuredMesh::from_descriptor(&cfg.mesh)?;
        let points = cfg.observation_points();
        let nodes = select_observation_nodes(&mesh, &points)?;
        let assembler = Assembler::new(&mesh);
        let mass = assembler.mass(DofSet::Interior);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            cfg,
            mesh,
            assembler,
            mass,
            points,
            nodes,
            encoding: cfg.encoding(),
            pool,
            seeds: BTreeMap::new(),
        })
    }

    /// Seed of a stream, recorded in the report.
    fn seed(&mut self, name: &str, stream: u64) -> u64 {
        let s = derive_seed(self.cfg.seed, stream);
        self.seeds.insert(name.to_string(), s);
        s
    }

    fn field(&self, seed: u64) -> Result<PermField> {
        let c = &self.cfg.channels;
        gen_channelized_with(seed, c.count, c.contrast, &self.mesh, &c.params)
    }

    fn base_rates(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let s = &self.cfg.source;
        self.points
            .iter()
            .map(|_| s.base_rate * rng.gen_range(1.0 - s.rate_spread..=1.0 + s.rate_spread))
            .collect()
    }

    fn constant_source(&self, seed: u64) -> SourceSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.wells(RateSchedule::Constant {
            rates: self.base_rates(&mut rng),
        })
    }

    fn sinusoidal_source(&self, seed: u64) -> SourceSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = self.base_rates(&mut rng);
        let phase = self
            .points
            .iter()
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        self.wells(RateSchedule::Sinusoidal {
            base,
            relative_amplitude: self.cfg.source.relative_amplitude,
            frequency: self.cfg.source.frequency,
            phase,
        })
    }

    fn wells(&self, schedule: RateSchedule) -> SourceSpec {
        SourceSpec::Wells(WellSource {
            centers: self.points.clone(),
            width: self.cfg.source.width,
            schedule,
        })
    }

    fn solver(&self, field: &PermField, source: &SourceSpec) -> Result<FineSolver> {
        let problem = DiffusionProblem {
            kappa: field.clone(),
            alpha: self.cfg.alpha,
            source: source.clone(),
            dt: self.cfg.dt,
            n_steps: self.cfg.n_steps,
            u0: DVector::zeros(self.mesh.n_nodes()),
        };
        FineSolver::with_assembler(self.assembler.clone(), &problem)
    }

    fn initial_conditions(&mut self, count: usize) -> Result<Vec<DVector<f64>>> {
        let seed = self.seed("initial_conditions", stream::INITIAL);
        sample_initial_conditions(count, self.cfg.modes, self.cfg.realizations.initial_range, seed)
            .map_err(|e| e.in_stage("initial conditions", seed))
    }

    /// POD basis from fine runs of `specs` started at the provisional lift
    /// of their initial coefficients.
    fn basis(&self, fields: &[PermField], specs: &[&Spec]) -> Result<NodalBasis> {
        let start = Instant::now();
        let runs = self.pool.install(|| {
            specs
                .par_iter()
                .map(|s| {
                    let u0 = hat_lift(&self.mesh, &self.nodes, &s.c0)?;
                    self.solver(&fields[s.field], &s.source)?.run(&u0, self.cfg.n_steps)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let snapshots = collect_fine_snapshots(&self.mesh, &runs)?;
        let pod = compute_pod(&snapshots, self.cfg.modes)?;
        let basis = build_nodal_basis(&self.mesh, &pod, &self.nodes)?;
        log::info!(
            "basis from {} snapshots in {:.2}s, discarded energy {:.3e}",
            snapshots.len(),
            start.elapsed().as_secs_f64(),
            pod.discarded_energy()
        );
        Ok(basis)
    }

    fn simulate(&self, basis: &NodalBasis, fields: &[PermField], specs: &[&Spec]) -> Result<Vec<SampleRealization>> {
        self.pool.install(|| {
            specs
                .par_iter()
                .map(|s| {
                    let field = &fields[s.field];
                    let model = ReducedModel::new(basis.clone(), self.solver(field, &s.source)?)?;
                    generate_simulation_realization(s.id, s.group, &s.c0, &model, field, &self.encoding, self.cfg.n_steps)
                })
                .collect()
        })
    }

    fn observe(&self, basis: &NodalBasis, fields: &[PermField], specs: &[&Spec]) -> Result<Vec<SampleRealization>> {
        self.pool.install(|| {
            specs
                .par_iter()
                .map(|s| {
                    let field = &fields[s.field];
                    let fine = self.solver(field, &s.source)?;
                    // Psi c0 can dip well below zero between nodes, where exp(alpha u)
                    // then stalls diffusion under a well; the hat lift interpolates the
                    // same c0 and stays within its range
                    let u0 = hat_lift(&self.mesh, &self.nodes, &s.c0)?;
                    observe_fine_run(
                        s.id,
                        s.group,
                        &u0,
                        &fine,
                        basis,
                        field,
                        &self.encoding,
                        self.cfg.n_steps,
                    )
                })
                .collect()
        })
    }
}

/// Training data, test data and loss shared by the cells of one variant.
struct Variant {
    name: String,
    basis: usize,
    train: Dataset,
    test: Vec<SampleRealization>,
    loss: LossConfig,
}

struct CellOutcome {
    row: ReportRow,
    surrogate: Option<Surrogate>,
    final_field: Option<(DVector<f64>, DVector<f64>)>,
}

fn manifest(
    name: &str,
    kind: NetworkKind,
    encoding: InputEncoding,
    seeds: Vec<u64>,
    ds: &Dataset,
    realizations: &[SampleRealization],
) -> DatasetManifest {
    let runs: BTreeSet<usize> = realizations.iter().map(|r| r.id).collect();
    let mut fields: Vec<FieldSpec> = Vec::new();
    for r in realizations {
        if !fields.contains(&r.field) {
            fields.push(r.field.clone());
        }
    }
    DatasetManifest {
        name: name.to_string(),
        kind,
        encoding,
        seeds,
        n_pairs: ds.len(),
        n_simulation: ds.count(crate::net::Provenance::Simulation),
        n_observation: ds.count(crate::net::Provenance::Observation),
        runs: runs.into_iter().collect(),
        fields,
    }
}

fn refs<'s>(specs: &'s [Spec], idx: &[usize]) -> Vec<&'s Spec> {
    idx.iter().map(|&i| &specs[i]).collect()
}

/// Runs the experiment named in `cfg` end to end.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut setup = Setup::new(cfg, opts)?;
    let mut artifacts = Artifacts::default();
    let start = Instant::now();
    let variants = match cfg.experiment {
        1 => fixed_field(&mut setup, &mut artifacts)?,
        2 | 3 => varying_fields(&mut setup, &mut artifacts)?,
        _ => mixed_data(&mut setup, &mut artifacts)?,
    };
    log::info!("data ready in {:.2}s", start.elapsed().as_secs_f64());

    let init_seed = setup.seed("network_init", stream::INIT);
    let shuffle_seed = setup.seed("shuffle", stream::SHUFFLE);
    let mut jobs = Vec::new();
    for vi in 0..variants.len() {
        for &layers in &cfg.sweep.depths {
            for &neurons in &cfg.sweep.widths {
                jobs.push((vi, layers, neurons));
            }
        }
    }
    let bases: Vec<&NodalBasis> = artifacts.bases.iter().map(|(_, b)| b).collect();
    let outcomes: Vec<CellOutcome> = setup.pool.install(|| {
        jobs.par_iter()
            .map(|&(vi, layers, neurons)| {
                let v = &variants[vi];
                run_cell(&setup, v, bases[v.basis], layers, neurons, init_seed, shuffle_seed)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let label = o.row.label();
        if let Some(s) = o.surrogate {
            artifacts.surrogates.push((label.clone(), s));
        }
        if let Some((r, p)) = o.final_field {
            artifacts.final_fields.push((label, r, p));
        }
        rows.push(o.row);
    }
    log::info!("experiment {} finished in {:.1}s", cfg.experiment, start.elapsed().as_secs_f64());
    Ok(ExperimentOutput {
        report: ErrorReport {
            experiment: cfg.experiment,
            rows,
            config: cfg.clone(),
            seeds: setup.seeds,
        },
        artifacts,
        mesh: setup.mesh,
    })
}

fn run_cell(
    setup: &Setup,
    v: &Variant,
    basis: &NodalBasis,
    layers: usize,
    neurons: usize,
    init_seed: u64,
    shuffle_seed: u64,
) -> Result<CellOutcome> {
    let cfg = setup.cfg;
    let mut row = ReportRow {
        variant: v.name.clone(),
        layers,
        neurons,
        one_step_pct: f64::NAN,
        final_time_pct: f64::NAN,
        test_realizations: v.test.len(),
        train_pairs: v.train.len(),
        status: RowStatus::TrainingFailed,
    };
    let label = row.label();
    let key = label_key(&label);
    let dims = layer_dims(v.train.input_dim(), layers, neurons, cfg.modes);
    let start = Instant::now();

    let fit = |ds: &Dataset, k: u64| -> Result<Network> {
        let net = init_network(&dims, init_seed ^ key.wrapping_add(k), cfg.slope, cfg.output_activation)?;
        let tcfg = TrainingConfig {
            seed: shuffle_seed ^ key.wrapping_add(k),
            loss: v.loss,
            ..cfg.training.clone()
        };
        train(&net, ds, &tcfg).map(|(n, _)| n)
    };
    let trained = match cfg.network_mode {
        NetworkMode::Universal => fit(&v.train, 0).map(Surrogate::Universal),
        NetworkMode::PerStep => (0..cfg.n_steps)
            .map(|n| fit(&v.train.at_step(n), n as u64 + 1))
            .collect::<Result<Vec<_>>>()
            .map(Surrogate::PerStep),
    };
    let surrogate = match trained {
        Ok(s) => s,
        Err(Error::Divergence { epoch, loss }) => {
            log::warn!("{label}: training diverged at epoch {epoch} (loss {loss})");
            return Ok(CellOutcome {
                row,
                surrogate: None,
                final_field: None,
            });
        }
        Err(e) => return Err(e.in_stage(format!("training {label}"), shuffle_seed)),
    };
    let eval = evaluate_network(&surrogate, &v.test, basis, &setup.mass)
        .map_err(|e| e.in_stage(format!("evaluation {label}"), shuffle_seed))?;
    row.one_step_pct = eval.one_step_pct;
    row.final_time_pct = eval.final_time_pct;
    row.status = RowStatus::classify(eval.final_time_pct);
    log::info!(
        "{label}: 1-step {:.4}%, final-time {:.4}% ({:.1}s)",
        row.one_step_pct,
        row.final_time_pct,
        start.elapsed().as_secs_f64()
    );

    let first = &v.test[0];
    let states = surrogate.rollout(&first.trajectory[0], &first.inputs)?;
    let reference = reconstruct(basis, first.trajectory.last().expect("non-empty"))?;
    let predicted = reconstruct(basis, states.last().expect("non-empty"))?;
    Ok(CellOutcome {
        row,
        surrogate: Some(surrogate),
        final_field: Some((reference, predicted)),
    })
}

fn kind_for(realizations: &[SampleRealization]) -> NetworkKind {
    use crate::net::Provenance::*;
    let obs = realizations.iter().any(|r| r.provenance == Observation);
    let sim = realizations.iter().any(|r| r.provenance == Simulation);
    match (obs, sim) {
        (true, true) => NetworkKind::B,
        (true, false) => NetworkKind::A,
        _ => NetworkKind::C,
    }
}

/// Assembles a variant and records its datasets.
#[allow(clippy::too_many_arguments)]
fn variant(
    setup: &Setup,
    artifacts: &mut Artifacts,
    name: &str,
    basis: usize,
    train: &[SampleRealization],
    test: Vec<SampleRealization>,
    paired: &[SampleRealization],
    loss: LossConfig,
    split_seed: u64,
) -> Result<Variant> {
    let kind = kind_for(train);
    let stage = |e: Error| e.in_stage(format!("dataset assembly {name}"), split_seed);
    let train_ds = assemble_dataset_with(train, kind, paired).map_err(stage)?;
    if setup.cfg.output.datasets {
        let tag = if name.is_empty() { String::new() } else { format!("_{name}") };
        let seeds = vec![setup.cfg.seed, split_seed];
        let test_kind = kind_for(&test);
        let test_ds = assemble_dataset_with(&test, test_kind, &[]).map_err(stage)?;
        let m_train = manifest(&format!("train{tag}"), kind, setup.encoding, seeds.clone(), &train_ds, train);
        let m_test = manifest(&format!("test{tag}"), test_kind, setup.encoding, seeds, &test_ds, &test);
        artifacts.datasets.push((train_ds.clone(), m_train));
        artifacts.datasets.push((test_ds, m_test));
    }
    Ok(Variant {
        name: name.to_string(),
        basis,
        train: train_ds,
        test,
        loss,
    })
}

/// One field, one constant source, state-only inputs.
fn fixed_field(setup: &mut Setup, artifacts: &mut Artifacts) -> Result<Vec<Variant>> {
    let r = setup.cfg.realizations.clone();
    let field_seed = setup.seed("field", stream::FIELD);
    let field = setup.field(field_seed).map_err(|e| e.in_stage("field generation", field_seed))?;
    let source_seed = setup.seed("source", stream::SOURCE);
    let source = setup.constant_source(source_seed);
    let c0 = setup.initial_conditions(r.total)?;
    let specs: Vec<Spec> = c0
        .into_iter()
        .enumerate()
        .map(|(id, c0)| Spec {
            id,
            group: 0,
            field: 0,
            source: source.clone(),
            c0,
        })
        .collect();
    let split_seed = setup.seed("split", stream::SPLIT);
    let (train_idx, test_idx) = split_indices(r.total, r.train, split_seed)?;
    let fields = vec![field];
    let basis = setup
        .basis(&fields, &refs(&specs, &train_idx))
        .map_err(|e| e.in_stage("snapshot basis", split_seed))?;
    let all = setup
        .simulate(&basis, &fields, &refs(&specs, &(0..r.total).collect::<Vec<_>>()))
        .map_err(|e| e.in_stage("simulation data", field_seed))?;
    artifacts.fields.push(("kappa".into(), fields[0].clone()));
    artifacts.bases.push(("basis".into(), basis));
    let pick = |idx: &[usize]| idx.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
    let v = variant(setup, artifacts, "", 0, &pick(&train_idx), pick(&test_idx), &[], LossConfig::Standard, split_seed)?;
    Ok(vec![v])
}

/// Several field configurations sharing one source; constant rates for
/// experiment 2 and a sinusoidal schedule for experiment 3.
fn varying_fields(setup: &mut Setup, artifacts: &mut Artifacts) -> Result<Vec<Variant>> {
    let r = setup.cfg.realizations.clone();
    let field_seed = setup.seed("field", stream::FIELD);
    let fields = (0..r.configurations)
        .map(|g| {
            let s = derive_seed(field_seed, g as u64);
            setup.field(s).map_err(|e| e.in_stage(format!("field generation (configuration {g})"), s))
        })
        .collect::<Result<Vec<_>>>()?;
    let source_seed = setup.seed("source", stream::SOURCE);
    let source = if setup.cfg.experiment == 2 {
        setup.constant_source(source_seed)
    } else {
        setup.sinusoidal_source(source_seed)
    };
    let per = r.total / r.configurations;
    let c0 = setup.initial_conditions(r.total)?;
    let specs: Vec<Spec> = c0
        .into_iter()
        .enumerate()
        .map(|(id, c0)| Spec {
            id,
            group: id / per,
            field: id / per,
            source: source.clone(),
            c0,
        })
        .collect();
    for (g, f) in fields.iter().enumerate() {
        artifacts.fields.push((format!("kappa_cfg{g:02}"), f.clone()));
    }
    let groups: Vec<usize> = specs.iter().map(|s| s.group).collect();
    let split_seed = setup.seed("split", stream::SPLIT);
    let mut splits = Vec::new();
    if matches!(setup.cfg.hold_out, HoldOut::Shared | HoldOut::Both) {
        splits.push(("shared", stratified_indices(&groups, 1, split_seed)?));
    }
    if matches!(setup.cfg.hold_out, HoldOut::Configuration | HoldOut::Both) {
        let held = (split_seed % r.configurations as u64) as usize;
        log::info!("holding out configuration {held}");
        splits.push(("held_out", group_indices(&groups, held)?));
    }
    let all_idx: Vec<usize> = (0..r.total).collect();
    let mut variants = Vec::new();
    for (name, (train_idx, test_idx)) in splits {
        let basis = setup
            .basis(&fields, &refs(&specs, &train_idx))
            .map_err(|e| e.in_stage(format!("snapshot basis {name}"), split_seed))?;
        let all = setup
            .simulate(&basis, &fields, &refs(&specs, &all_idx))
            .map_err(|e| e.in_stage(format!("simulation data {name}"), field_seed))?;
        artifacts.bases.push((format!("basis_{name}"), basis));
        let pick = |idx: &[usize]| idx.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
        let b = artifacts.bases.len() - 1;
        variants.push(variant(
            setup,
            artifacts,
            name,
            b,
            &pick(&train_idx),
            pick(&test_idx),
            &[],
            LossConfig::Standard,
            split_seed,
        )?);
    }
    Ok(variants)
}

/// True field for observations, perturbed field for the reduced model, and
/// a random sinusoidal source per realization.
fn mixed_data(setup: &mut Setup, artifacts: &mut Artifacts) -> Result<Vec<Variant>> {
    let r = setup.cfg.realizations.clone();
    let field_seed = setup.seed("field", stream::FIELD);
    let truth = setup.field(field_seed).map_err(|e| e.in_stage("field generation", field_seed))?;
    let perturb_seed = setup.seed("perturbation", stream::PERTURBATION);
    let c = &setup.cfg.channels;
    let model = perturb_with(&truth, c.perturbation, perturb_seed, &c.params)
        .map_err(|e| e.in_stage("field perturbation", perturb_seed))?;
    let fields = vec![truth, model];
    let n = r.total + r.test_observations;
    let source_seed = setup.seed("source", stream::SOURCE);
    let c0 = setup.initial_conditions(n)?;
    let sources: Vec<SourceSpec> = (0..n)
        .map(|id| setup.sinusoidal_source(derive_seed(source_seed, id as u64)))
        .collect();
    let spec = |id: usize, field: usize| Spec {
        id,
        group: 0,
        field,
        source: sources[id].clone(),
        c0: c0[id].clone(),
    };
    let sim_specs: Vec<Spec> = (0..r.total).map(|id| spec(id, 1)).collect();
    let obs_specs: Vec<Spec> = (0..n).map(|id| spec(id, 0)).collect();
    let sim_refs: Vec<&Spec> = sim_specs.iter().collect();
    let obs_refs: Vec<&Spec> = obs_specs.iter().collect();

    let basis = setup
        .basis(&fields, &sim_refs)
        .map_err(|e| e.in_stage("snapshot basis", perturb_seed))?;
    let sims = setup
        .simulate(&basis, &fields, &sim_refs)
        .map_err(|e| e.in_stage("simulation data", perturb_seed))?;
    let obs = setup
        .observe(&basis, &fields, &obs_refs)
        .map_err(|e| e.in_stage("observation data", field_seed))?;
    artifacts.fields.push(("kappa_obs".into(), fields[0].clone()));
    artifacts.fields.push(("kappa_sim".into(), fields[1].clone()));
    artifacts.bases.push(("basis".into(), basis));

    let paired: &[SampleRealization] = match setup.cfg.observation_input {
        ObservationInput::Own => &[],
        ObservationInput::PairedSimulation => &sims,
    };
    let test: Vec<SampleRealization> = obs[r.total..].to_vec();
    let mixed: Vec<SampleRealization> = sims[..r.train].iter().chain(&obs[r.train..r.total]).cloned().collect();
    let split_seed = source_seed;
    let cases = [
        ("case1", sims.clone(), LossConfig::Standard),
        ("case2", mixed, setup.cfg.mixed_loss),
        ("case3", obs[..r.total].to_vec(), LossConfig::Standard),
        ("case4", obs[r.train..r.total].to_vec(), LossConfig::Standard),
    ];
    cases
        .into_iter()
        .map(|(name, train, loss)| variant(setup, artifacts, name, 0, &train, test.clone(), paired, loss, split_seed))
        .collect()
}

/// Writes fields, bases, network bundles and datasets under `dir` as
/// enabled in the config's output section.
pub fn write_artifacts(out: &ExperimentOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let opts = &out.report.config.output;
    fs::create_dir_all(dir)?;
    if opts.fields {
        let fd = dir.join("fields");
        fs::create_dir_all(&fd)?;
        for (name, field) in &out.artifacts.fields {
            field.write_csv(fd.join(format!("{name}.csv")))?;
            field.write_sidecar(fd.join(format!("{name}.json")))?;
            let (nx, ny) = field.dims();
            let log: Vec<f64> = field.values().iter().map(|v| v.log10()).collect();
            write_pgm(nx, ny, &log, fd.join(format!("{name}.pgm")))?;
        }
        for (label, reference, predicted) in &out.artifacts.final_fields {
            for (tag, u) in [("reference", reference), ("predicted", predicted)] {
                write_field_csv(&out.mesh, u, fd.join(format!("{label}_{tag}.csv")))?;
                write_field_pgm(&out.mesh, u, fd.join(format!("{label}_{tag}.pgm")))?;
            }
        }
    }
    if opts.networks {
        let nd = dir.join("networks");
        fs::create_dir_all(&nd)?;
        for (label, s) in &out.artifacts.surrogates {
            match s {
                Surrogate::Universal(n) => write_bundle(n, nd.join(format!("{label}.bundle")))?,
                Surrogate::PerStep(ns) => {
                    for (k, n) in ns.iter().enumerate() {
                        write_bundle(n, nd.join(format!("{label}_step{k:02}.bundle")))?;
                    }
                }
            }
        }
        for (name, b) in &out.artifacts.bases {
            write_basis(b, nd.join(format!("{name}.txt")))?;
        }
    }
    if opts.datasets {
        for (ds, m) in &out.artifacts.datasets {
            write_dataset(dir.join("datasets"), ds, m)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(0, stream::FIELD), derive_seed(0, stream::FIELD));
        let all: BTreeSet<u64> = (1..=7).map(|s| derive_seed(0, s)).collect();
        assert_eq!(all.len(), 7);
        assert_ne!(derive_seed(0, 1), derive_seed(1, 1));
    }

    #[test]
    fn plan_counts() {
        let p = plan(&ExperimentConfig::for_experiment(1).unwrap()).unwrap();
        assert_eq!(p.cells.len(), 9);
        assert!(p.cells.iter().all(|c| c.train_pairs == 900 && c.test_realizations == 10 && c.input_dim == 5));
        let p = plan(&ExperimentConfig::for_experiment(2).unwrap()).unwrap();
        assert_eq!(p.cells.len(), 10);
        assert_eq!(p.cells[0].input_dim, 5 + 64);
        assert!(p.cells.iter().all(|c| c.train_pairs == 900 && c.test_realizations == 10));
        let p = plan(&ExperimentConfig::for_experiment(4).unwrap()).unwrap();
        let pairs: Vec<usize> = p.cells.iter().map(|c| c.train_pairs).collect();
        assert_eq!(pairs, vec![1000, 1000, 1000, 100]);
        assert_eq!(p.cells[0].input_dim, 5 + 64 + 5);
        assert_eq!(p.realizations, 210);
    }
}
