use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which solver produced a pair's target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Reduced model on the model field.
    Simulation,
    /// Fine solver on the true field.
    Observation,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Simulation => "simulation",
            Provenance::Observation => "observation",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulation" => Ok(Provenance::Simulation),
            "observation" => Ok(Provenance::Observation),
            _ => Err(Error::Format(format!("unknown provenance `{s}`"))),
        }
    }
}

/// Training pairs stored column-wise, with per-pair provenance, run id and
/// step index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    provenance: Vec<Provenance>,
    runs: Vec<usize>,
    steps: Vec<usize>,
}

impl Dataset {
    pub fn new(
        inputs: DMatrix<f64>,
        targets: DMatrix<f64>,
        provenance: Vec<Provenance>,
        runs: Vec<usize>,
        steps: Vec<usize>,
    ) -> Result<Self> {
        let n = inputs.ncols();
        for (what, got) in [
            ("dataset targets", targets.ncols()),
            ("dataset provenance", provenance.len()),
            ("dataset run ids", runs.len()),
            ("dataset steps", steps.len()),
        ] {
            if got != n {
                return Err(Error::dim(what, n, got));
            }
        }
        Ok(Self {
            inputs,
            targets,
            provenance,
            runs,
            steps,
        })
    }

    /// Builds a dataset from individual pairs.
    pub fn from_pairs(
        pairs: &[(DVector<f64>, DVector<f64>)],
        provenance: Vec<Provenance>,
        runs: Vec<usize>,
        steps: Vec<usize>,
    ) -> Result<Self> {
        let first = pairs.first().ok_or(Error::EmptyDataset)?;
        let (dx, dy) = (first.0.len(), first.1.len());
        let mut inputs = DMatrix::zeros(dx, pairs.len());
        let mut targets = DMatrix::zeros(dy, pairs.len());
        for (j, (x, y)) in pairs.iter().enumerate() {
            if x.len() != dx {
                return Err(Error::dim("pair input", dx, x.len()));
            }
            if y.len() != dy {
                return Err(Error::dim("pair target", dy, y.len()));
            }
            inputs.set_column(j, x);
            targets.set_column(j, y);
        }
        Self::new(inputs, targets, provenance, runs, steps)
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.nrows()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn runs(&self) -> &[usize] {
        &self.runs
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn count(&self, tag: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == tag).count()
    }

    /// Pairs at the given column indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_columns(idx),
            targets: self.targets.select_columns(idx),
            provenance: idx.iter().map(|&j| self.provenance[j]).collect(),
            runs: idx.iter().map(|&j| self.runs[j]).collect(),
            steps: idx.iter().map(|&j| self.steps[j]).collect(),
        }
    }

    /// Pairs whose step index equals `step`.
    pub fn at_step(&self, step: usize) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&j| self.steps[j] == step).collect();
        self.select(&idx)
    }

    /// Appends the pairs of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if other.input_dim() != self.input_dim() {
            return Err(Error::dim("concat inputs", self.input_dim(), other.input_dim()));
        }
        if other.output_dim() != self.output_dim() {
            return Err(Error::dim("concat targets", self.output_dim(), other.output_dim()));
        }
        let n = self.len() + other.len();
        let mut inputs = DMatrix::zeros(self.input_dim(), n);
        inputs.columns_mut(0, self.len()).copy_from(&self.inputs);
        inputs.columns_mut(self.len(), other.len()).copy_from(&other.inputs);
        let mut targets = DMatrix::zeros(self.output_dim(), n);
        targets.columns_mut(0, self.len()).copy_from(&self.targets);
        targets.columns_mut(self.len(), other.len()).copy_from(&other.targets);
        let cat = |a: &[usize], b: &[usize]| a.iter().chain(b).copied().collect::<Vec<_>>();
        Ok(Dataset {
            inputs,
            targets,
            provenance: self.provenance.iter().chain(&other.provenance).copied().collect(),
            runs: cat(&self.runs, &other.runs),
            steps: cat(&self.steps, &other.steps),
        })
    }

    /// One row per pair: `provenance,run,step,x_1..x_d,y_1..y_m`, after a
    /// header line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let mut header = vec!["provenance".to_string(), "run".into(), "step".into()];
        header.extend((0..self.input_dim()).map(|i| format!("x{i}")));
        header.extend((0..self.output_dim()).map(|i| format!("y{i}")));
        writeln!(w, "{}", header.join(","))?;
        for j in 0..self.len() {
            write!(w, "{},{},{}", self.provenance[j], self.runs[j], self.steps[j])?;
            for v in self.inputs.column(j).iter().chain(self.targets.column(j).iter()) {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or(Error::EmptyDataset)?.split(',').collect();
        let dx = header.iter().filter(|h| h.starts_with('x')).count();
        let dy = header.iter().filter(|h| h.starts_with('y')).count();
        let mut cols_x = Vec::new();
        let mut cols_y = Vec::new();
        let (mut prov, mut runs, mut steps) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 + dx + dy {
                return Err(Error::dim("dataset row", 3 + dx + dy, f.len()));
            }
            prov.push(f[0].parse()?);
            runs.push(f[1].parse().map_err(|_| Error::Format(format!("bad run id `{}`", f[1])))?);
            steps.push(f[2].parse().map_err(|_| Error::Format(format!("bad step `{}`", f[2])))?);
            let nums: Vec<f64> = f[3..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number `{s}`"))))
                .collect::<Result<_>>()?;
            cols_x.push(DVector::from_column_slice(&nums[..dx]));
            cols_y.push(DVector::from_column_slice(&nums[dx..]));
        }
        if cols_x.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Dataset::new(DMatrix::from_columns(&cols_x), DMatrix::from_columns(&cols_y), prov, runs, steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..4)
            .map(|j| {
                (
                    DVector::from_vec(vec![j as f64, 0.1 * j as f64]),
                    DVector::from_vec(vec![1.0 / (j as f64 + 3.0)]),
                )
            })
            .collect();
        Dataset::from_pairs(
            &pairs,
            vec![
                Provenance::Simulation,
                Provenance::Observation,
                Provenance::Simulation,
                Provenance::Simulation,
            ],
            vec![0, 0, 1, 1],
            vec![0, 1, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn counts_and_selection() {
        let d = toy();
        assert_eq!(d.count(Provenance::Observation), 1);
        let s = d.at_step(1);
        assert_eq!(s.len(), 2);
        assert_eq!(s.runs(), &[0, 1]);
        let c = d.concat(&s).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c.inputs().column(4), d.inputs().column(1));
    }

    #[test]
    fn csv_round_trip() {
        let d = toy();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.write_csv(&p).unwrap();
        assert_eq!(Dataset::read_csv(&p).unwrap(), d);
    }
}
