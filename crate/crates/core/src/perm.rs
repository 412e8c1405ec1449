//! Channelized high-contrast permeability fields.
//!
//! A field is piecewise constant per element: `contrast` inside sinuous
//! channels, 1 elsewhere. Each channel has centerline
//! `y(x) = y0 + a sin(2 pi f x + phase)` and constant thickness, swept
//! across the whole domain and rasterized at element centers.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::StructuredMesh;

pub const BACKGROUND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Centerline offset `y0`.
    pub ordinate: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub thickness: f64,
    pub phase: f64,
}

impl ChannelSpec {
    pub fn centerline(&self, x: f64) -> f64 {
        self.ordinate + self.amplitude * (2.0 * PI * self.frequency * x + self.phase).sin()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (y - self.centerline(x)).abs() <= 0.5 * self.thickness
    }

    fn inside_domain(&self, margin: f64) -> bool {
        let reach = self.amplitude.abs() + 0.5 * self.thickness;
        self.ordinate - reach >= margin && self.ordinate + reach <= 1.0 - margin
    }
}

/// Ranges the generator samples channel parameters from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    pub thickness: (f64, f64),
    pub amplitude: (f64, f64),
    pub frequency: (f64, f64),
    /// Minimum distance between a channel's outer edge and the top/bottom walls.
    pub margin: f64,
    pub max_attempts: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            thickness: (0.08, 0.12),
            amplitude: (0.03, 0.08),
            frequency: (0.5, 1.5),
            margin: 0.05,
            max_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub magnitude: f64,
    pub seed: u64,
}

/// Everything needed to regenerate a field exactly; persisted as the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub nx: usize,
    pub ny: usize,
    pub seed: u64,
    pub contrast: f64,
    pub background: f64,
    pub channels: Vec<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermField {
    spec: FieldSpec,
    values: Vec<f64>,
}

impl PermField {
    /// Homogeneous field with the given value on every element.
    pub fn uniform(mesh: &StructuredMesh, value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "permeability must be positive and finite, got {value}"
            )));
        }
        Ok(Self {
            spec: FieldSpec {
                nx: mesh.nx(),
                ny: mesh.ny(),
                seed: 0,
                contrast: value,
                background: value,
                channels: Vec::new(),
                perturbation: None,
            },
            values: vec![value; mesh.n_elements()],
        })
    }

    /// Arbitrary positive per-element values.
    pub fn from_values(mesh: &StructuredMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_elements() {
            return Err(Error::dim("permeability values", mesh.n_elements(), values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "permeability must be positive and finite, got {v}"
            )));
        }
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        Ok(Self {
            spec: FieldSpec {
                nx: mesh.nx(),
                ny: mesh.ny(),
                seed: 0,
                contrast: max,
                background: BACKGROUND,
                channels: Vec::new(),
                perturbation: None,
            },
            values,
        })
    }

    /// Rasterizes a field from its spec.
    pub fn from_spec(spec: FieldSpec) -> Result<Self> {
        let mesh = StructuredMesh::new(spec.nx, spec.ny)?;
        let values = rasterize(&mesh, &spec.channels, spec.contrast, spec.background);
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.spec.channels
    }

    pub fn contrast(&self) -> f64 {
        self.spec.contrast
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.spec.nx, self.spec.ny)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Per-channel element masks.
    pub fn channel_masks(&self, mesh: &StructuredMesh) -> Vec<Vec<bool>> {
        self.spec
            .channels
            .iter()
            .map(|c| channel_mask(mesh, c))
            .collect()
    }

    /// Union of all channel masks.
    pub fn high_mask(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v > self.spec.background).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let (nx, ny) = self.dims();
        let mut out = String::new();
        for j in 0..ny {
            let row: Vec<String> = (0..nx)
                .map(|i| format!("{}", self.values[j * nx + i]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn write_sidecar(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.spec)?)?;
        Ok(())
    }

    /// Reads a field back from its CSV grid and JSON sidecar.
    pub fn read(csv: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<Self> {
        let spec: FieldSpec = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let text = std::fs::read_to_string(csv)?;
        let mut values = Vec::with_capacity(spec.nx * spec.ny);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            for tok in line.split(',') {
                values.push(
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad permeability value {tok:?}: {e}")))?,
                );
            }
        }
        if values.len() != spec.nx * spec.ny {
            return Err(Error::dim("permeability csv", spec.nx * spec.ny, values.len()));
        }
        Ok(Self { spec, values })
    }
}

fn channel_mask(mesh: &StructuredMesh, channel: &ChannelSpec) -> Vec<bool> {
    (0..mesh.n_elements())
        .map(|e| {
            let (x, y) = mesh.element_center(e);
            channel.contains(x, y)
        })
        .collect()
}

fn rasterize(mesh: &StructuredMesh, channels: &[ChannelSpec], contrast: f64, background: f64) -> Vec<f64> {
    let mut values = vec![background; mesh.n_elements()];
    for c in channels {
        for (v, inside) in values.iter_mut().zip(channel_mask(mesh, c)) {
            if inside {
                *v = contrast;
            }
        }
    }
    values
}

/// Number of 4-connected components of `true` cells on an `nx` by `ny` grid.
pub fn count_components(mask: &[bool], nx: usize, ny: usize) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(e) = stack.pop() {
            let (i, j) = (e % nx, e / nx);
            let mut visit = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(e - 1);
            }
            if i + 1 < nx {
                visit(e + 1);
            }
            if j > 0 {
                visit(e - nx);
            }
            if j + 1 < ny {
                visit(e + nx);
            }
        }
    }
    count
}

/// A channel layout is admissible when every channel spans the domain as a
/// single 4-connected band and no two channels overlap or touch.
fn admissible(mesh: &StructuredMesh, channels: &[ChannelSpec], margin: f64) -> bool {
    let (nx, ny) = (mesh.nx(), mesh.ny());
    let mut owner: Vec<Option<usize>> = vec![None; mesh.n_elements()];
    for (k, c) in channels.iter().enumerate() {
        if !c.inside_domain(margin) || c.thickness <= 0.0 {
            return false;
        }
        let mask = channel_mask(mesh, c);
        for i in 0..nx {
            if !(0..ny).any(|j| mask[j * nx + i]) {
                return false;
            }
        }
        if count_components(&mask, nx, ny) != 1 {
            return false;
        }
        for (e, inside) in mask.into_iter().enumerate() {
            if inside {
                if owner[e].is_some() {
                    return false;
                }
                owner[e] = Some(k);
            }
        }
    }
    // no edge-adjacent cells owned by different channels
    for e in 0..owner.len() {
        let Some(k) = owner[e] else { continue };
        let (i, j) = (e % nx, e / nx);
        let right = (i + 1 < nx).then(|| e + 1);
        let up = (j + 1 < ny).then(|| e + nx);
        for n in [right, up].into_iter().flatten() {
            if matches!(owner[n], Some(k2) if k2 != k) {
                return false;
            }
        }
    }
    true
}

fn sample_channel(rng: &mut ChaCha8Rng, params: &ChannelParams) -> ChannelSpec {
    let thickness = rng.gen_range(params.thickness.0..=params.thickness.1);
    let amplitude = rng.gen_range(params.amplitude.0..=params.amplitude.1);
    let frequency = rng.gen_range(params.frequency.0..=params.frequency.1);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let reach = amplitude + 0.5 * thickness + params.margin;
    let ordinate = if reach < 0.5 {
        rng.gen_range(reach..=1.0 - reach)
    } else {
        0.5
    };
    ChannelSpec {
        ordinate,
        amplitude,
        frequency,
        thickness,
        phase,
    }
}

/// Generates a field with `n_channels` disjoint channels of value `contrast`
/// on a unit background, rejection-sampling until the layout is admissible.
pub fn gen_channelized(
    seed: u64,
    n_channels: usize,
    contrast: f64,
    mesh: &StructuredMesh,
) -> Result<PermField> {
    gen_channelized_with(seed, n_channels, contrast, mesh, &ChannelParams::default())
}

pub fn gen_channelized_with(
    seed: u64,
    n_channels: usize,
    contrast: f64,
    mesh: &StructuredMesh,
    params: &ChannelParams,
) -> Result<PermField> {
    if !(contrast >= 1.0) || !contrast.is_finite() {
        return Err(Error::InvalidArgument(format!("contrast must be >= 1, got {contrast}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.max_attempts.max(1) {
        let channels: Vec<ChannelSpec> = (0..n_channels)
            .map(|_| sample_channel(&mut rng, params))
            .collect();
        if admissible(mesh, &channels, params.margin) {
            let spec = FieldSpec {
                nx: mesh.nx(),
                ny: mesh.ny(),
                seed,
                contrast,
                background: BACKGROUND,
                channels,
                perturbation: None,
            };
            let values = rasterize(mesh, &spec.channels, contrast, BACKGROUND);
            return Ok(PermField { spec, values });
        }
    }
    Err(Error::ChannelPlacement {
        channels: n_channels,
        attempts: params.max_attempts,
    })
}

/// Jitters every channel parameter by an independent uniform relative
/// perturbation in `[-magnitude, magnitude]` and re-rasterizes.
///
/// Amplitude, frequency and thickness scale multiplicatively. The ordinate
/// shifts relative to the channel thickness and the phase relative to one
/// radian, since both are positions rather than scales.
pub fn perturb(field: &PermField, magnitude: f64, seed: u64) -> Result<PermField> {
    perturb_with(field, magnitude, seed, &ChannelParams::default())
}

pub fn perturb_with(
    field: &PermField,
    magnitude: f64,
    seed: u64,
    params: &ChannelParams,
) -> Result<PermField> {
    if !(0.0..1.0).contains(&magnitude) {
        return Err(Error::InvalidArgument(format!(
            "perturbation magnitude must lie in [0, 1), got {magnitude}"
        )));
    }
    if magnitude == 0.0 {
        return Ok(field.clone());
    }
    let (nx, ny) = field.dims();
    let mesh = StructuredMesh::new(nx, ny)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(-magnitude..=magnitude);
    for _ in 0..params.max_attempts.max(1) {
        let channels: Vec<ChannelSpec> = field
            .channels()
            .iter()
            .map(|c| ChannelSpec {
                ordinate: c.ordinate + jitter(&mut rng) * c.thickness,
                amplitude: c.amplitude * (1.0 + jitter(&mut rng)),
                frequency: c.frequency * (1.0 + jitter(&mut rng)),
                thickness: c.thickness * (1.0 + jitter(&mut rng)),
                phase: c.phase + jitter(&mut rng),
            })
            .collect();
        if admissible(&mesh, &channels, 0.0) {
            let spec = FieldSpec {
                channels,
                perturbation: Some(Perturbation { magnitude, seed }),
                ..field.spec.clone()
            };
            let values = rasterize(&mesh, &spec.channels, spec.contrast, spec.background);
            return Ok(PermField { spec, values });
        }
    }
    Err(Error::ChannelPlacement {
        channels: field.channels().len(),
        attempts: params.max_attempts,
    })
}

/// Per-element coefficient array for assembly.
pub fn eval_on_elements(field: &PermField, mesh: &StructuredMesh) -> Result<Vec<f64>> {
    let (nx, ny) = field.dims();
    if nx != mesh.nx() || ny != mesh.ny() {
        return Err(Error::MeshMismatch {
            field_nx: nx,
            field_ny: ny,
            mesh_nx: mesh.nx(),
            mesh_ny: mesh.ny(),
        });
    }
    Ok(field.values.clone())
}
