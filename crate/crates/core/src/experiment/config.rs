use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::InputEncoding;
use crate::error::{Error, Result};
use crate::mesh::MeshDescriptor;
use crate::net::{LossConfig, OutputActivation, TrainingConfig, DEFAULT_SLOPE};
use crate::perm::ChannelParams;
use crate::pod::default_observation_points;

/// One network for every step, or a separate network per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    #[default]
    Universal,
    PerStep,
}

/// How the varying-field experiment separates training and test data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HoldOut {
    /// One realization of every configuration is held out.
    Shared,
    /// All realizations of one configuration are held out.
    Configuration,
    #[default]
    Both,
}

/// Input state paired with each observed target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObservationInput {
    /// The observed state at the previous step.
    #[default]
    Own,
    /// The simulated state of the matching realization.
    PairedSimulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub count: usize,
    pub contrast: f64,
    pub params: ChannelParams,
    /// Relative jitter applied to obtain the simulation field when the
    /// experiment distinguishes true and model fields.
    pub perturbation: f64,
}

/// Wells at the observation points with Gaussian profiles.
///
/// Base rates are `base_rate * U[1 - rate_spread, 1 + rate_spread]` per well.
/// Sinusoidal schedules add `relative_amplitude sin(2 pi frequency t + phase)`
/// with uniform phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub width: f64,
    pub base_rate: f64,
    pub rate_spread: f64,
    pub relative_amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationConfig {
    /// Realizations generated per data kind (training and test for
    /// experiments 1-3, training only for experiment 4).
    pub total: usize,
    /// Training share of `total`. In experiment 4 this is the number of
    /// simulation realizations in the mixed set.
    pub train: usize,
    /// Number of permeability configurations (experiments 2 and 3).
    pub configurations: usize,
    /// Extra observation realizations used for testing in experiment 4.
    pub test_observations: usize,
    pub initial_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Hidden-layer counts.
    pub depths: Vec<usize>,
    /// Neurons per hidden layer.
    pub widths: Vec<usize>,
}

/// Which artifacts to write next to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Permeability fields and final-time reference/predicted fields.
    pub fields: bool,
    /// Network bundles and reduced bases.
    pub networks: bool,
    pub datasets: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            fields: true,
            networks: true,
            datasets: false,
        }
    }
}

/// Full description of one experiment run. Missing keys in a config file
/// take the defaults of the experiment named by `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: u8,
    pub seed: u64,
    pub mesh: MeshDescriptor,
    pub alpha: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub modes: usize,
    /// Empty means the default layout for `modes`.
    pub observation_points: Vec<(f64, f64)>,
    pub channels: ChannelConfig,
    pub source: SourceConfig,
    pub realizations: RealizationConfig,
    pub kappa_lattice: usize,
    pub sweep: SweepConfig,
    pub training: TrainingConfig,
    /// Loss of the mixed simulation/observation network in experiment 4.
    pub mixed_loss: LossConfig,
    pub slope: f64,
    pub output_activation: OutputActivation,
    pub network_mode: NetworkMode,
    pub hold_out: HoldOut,
    pub observation_input: ObservationInput,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Defaults for experiment `id`.
    pub fn for_experiment(id: u8) -> Result<Self> {
        if !(1..=4).contains(&id) {
            return Err(Error::InvalidArgument(format!("experiment id must be 1-4, got {id}")));
        }
        let (depths, widths) = match id {
            1 => (vec![3, 5, 10], vec![20, 100, 400]),
            2 | 3 => (vec![2, 3, 4, 5, 10], vec![100]),
            _ => (vec![5], vec![100]),
        };
        Ok(Self {
            experiment: id,
            seed: 0,
            mesh: MeshDescriptor { nx: 32, ny: 32 },
            alpha: 20.0,
            dt: 0.1,
            n_steps: 10,
            modes: 5,
            observation_points: Vec::new(),
            channels: ChannelConfig {
                count: 2,
                contrast: 1000.0,
                params: ChannelParams::default(),
                perturbation: 0.05,
            },
            source: SourceConfig {
                width: 0.05,
                base_rate: 50.0,
                rate_spread: 0.2,
                relative_amplitude: 0.5,
                frequency: 1.0,
            },
            realizations: RealizationConfig {
                total: 100,
                train: 90,
                configurations: if matches!(id, 2 | 3) { 10 } else { 1 },
                test_observations: 10,
                initial_range: (0.0, 0.1),
            },
            kappa_lattice: 8,
            sweep: SweepConfig { depths, widths },
            training: TrainingConfig::default(),
            mixed_loss: LossConfig::Weighted { w_obs: 10.0, w_sim: 1.0 },
            slope: DEFAULT_SLOPE,
            output_activation: OutputActivation::Linear,
            network_mode: NetworkMode::Universal,
            hold_out: if id == 3 { HoldOut::Shared } else { HoldOut::Both },
            observation_input: ObservationInput::Own,
            output: OutputConfig::default(),
        })
    }

    /// Parses a JSON config, filling absent keys from the defaults of its
    /// experiment id. `experiment` overrides the id stored in the file.
    pub fn from_json_str(text: &str, experiment: Option<u8>) -> Result<Self> {
        let mut user: Value = serde_json::from_str(text)?;
        let obj = user
            .as_object_mut()
            .ok_or_else(|| Error::Format("config must be a JSON object".into()))?;
        if let Some(id) = experiment {
            obj.insert("experiment".into(), Value::from(id));
        }
        let id = match obj.get("experiment") {
            None => 1,
            Some(v) => v
                .as_u64()
                .and_then(|v| u8::try_from(v).ok())
                .ok_or_else(|| Error::Format(format!("bad experiment id {v}")))?,
        };
        let mut merged = serde_json::to_value(Self::for_experiment(id)?)?;
        merge(&mut merged, user);
        let cfg: Self = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, experiment: Option<u8>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?, experiment)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn observation_points(&self) -> Vec<(f64, f64)> {
        if self.observation_points.is_empty() {
            default_observation_points(self.modes)
        } else {
            self.observation_points.clone()
        }
    }

    /// Extra network inputs used by this experiment.
    pub fn encoding(&self) -> InputEncoding {
        let base = match self.experiment {
            1 => InputEncoding::state_only(),
            2 => InputEncoding::with_kappa(),
            _ => InputEncoding::with_kappa_and_source(),
        };
        InputEncoding {
            lattice: self.kappa_lattice,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(1..=4).contains(&self.experiment) {
            return bad(format!("experiment id must be 1-4, got {}", self.experiment));
        }
        if self.modes == 0 || self.n_steps == 0 {
            return bad("modes and n_steps must be positive".into());
        }
        if !(self.dt > 0.0) || !self.alpha.is_finite() {
            return bad(format!("bad time step {} or alpha {}", self.dt, self.alpha));
        }
        if self.observation_points().len() != self.modes {
            return bad(format!(
                "{} observation points for {} modes",
                self.observation_points().len(),
                self.modes
            ));
        }
        let r = &self.realizations;
        if r.train == 0 || r.train >= r.total {
            return bad(format!("training realizations must be in 1..{}, got {}", r.total, r.train));
        }
        if matches!(self.experiment, 2 | 3) && (r.configurations < 2 || r.total % r.configurations != 0) {
            return bad(format!(
                "{} realizations do not divide into {} configurations",
                r.total, r.configurations
            ));
        }
        if self.experiment == 4 && r.test_observations == 0 {
            return bad("experiment 4 needs test observations".into());
        }
        if self.sweep.depths.iter().chain(&self.sweep.widths).any(|&v| v == 0) {
            return bad("sweep depths and widths must be positive".into());
        }
        if self.kappa_lattice == 0 {
            return bad("kappa lattice must be positive".into());
        }
        self.training.validate()?;
        TrainingConfig {
            loss: self.mixed_loss,
            ..self.training.clone()
        }
        .validate()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_experiment(1).expect("experiment 1 exists")
    }
}

/// Overlays `patch` on `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        for id in 1..=4 {
            let cfg = ExperimentConfig::for_experiment(id).unwrap();
            let text = cfg.to_json_string().unwrap();
            assert_eq!(ExperimentConfig::from_json_str(&text, None).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_file_takes_experiment_defaults() {
        let cfg = ExperimentConfig::from_json_str(r#"{"experiment": 2, "training": {"epochs": 7}}"#, None).unwrap();
        assert_eq!(cfg.sweep.depths, vec![2, 3, 4, 5, 10]);
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.training.batch_size, 32);
        assert_eq!(cfg.realizations.configurations, 10);
        let over = ExperimentConfig::from_json_str(r#"{"experiment": 2}"#, Some(4)).unwrap();
        assert_eq!(over.experiment, 4);
        assert_eq!(over.sweep.depths, vec![5]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ids() {
        assert!(ExperimentConfig::from_json_str(r#"{"experimnet": 2}"#, None).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"experiment": 7}"#, None).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"modes": 4}"#, None).is_ok());
        assert!(ExperimentConfig::from_json_str(r#"{"modes": 4, "observation_points": [[0.5, 0.5]]}"#, None).is_err());
    }
}
