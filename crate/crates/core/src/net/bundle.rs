//! Binary network bundle. All integers and floats are little-endian.
//!
//! | field            | type                    | notes                                  |
//! |------------------|-------------------------|----------------------------------------|
//! | magic            | 8 bytes                 | `PFNETBND`                             |
//! | version          | u32                     | currently 1                            |
//! | layer count + 1  | u32                     | `n`, length of `dims`                  |
//! | dims             | u32 x n                 | `d_0 .. d_L`                           |
//! | output activation| u8                      | 0 linear, 1 leaky ReLU                 |
//! | slope            | f64                     | leaky-ReLU negative slope              |
//! | seed             | u64                     | initialization seed                    |
//! | has stats        | u8                      | 1 if normalization follows             |
//! | stats            | f64 x (2 d_0 + 2 d_L)   | in_mean, in_scale, out_mean, out_scale |
//! | layers           | per layer `l = 1..L`    | `W_l` row-major (`d_l x d_{l-1}`), then `b_l` |
//!
//! [`NetworkJson`] carries the same content as JSON, with weights as nested
//! row lists.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Network, Normalization, OutputActivation};

pub const BUNDLE_MAGIC: &[u8; 8] = b"PFNETBND";
pub const BUNDLE_VERSION: u32 = 1;

impl Network {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.n_params());
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims().len() as u32).to_le_bytes());
        for &d in self.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(match self.output_activation() {
            OutputActivation::Linear => 0,
            OutputActivation::LeakyRelu => 1,
        });
        out.extend_from_slice(&self.slope().to_le_bytes());
        out.extend_from_slice(&self.seed().to_le_bytes());
        let put = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        match self.normalization() {
            Some(n) => {
                out.push(1);
                put(&mut out, &n.in_mean);
                put(&mut out, &n.in_scale);
                put(&mut out, &n.out_mean);
                put(&mut out, &n.out_scale);
            }
            None => out.push(0),
        }
        put(&mut out, &self.flat_params());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != BUNDLE_MAGIC {
            return Err(Error::Format("not a network bundle (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != BUNDLE_VERSION {
            return Err(Error::Format(format!("unsupported bundle version {version}")));
        }
        let n = r.u32()? as usize;
        if !(2..=4096).contains(&n) {
            return Err(Error::Format(format!("implausible layer count {n}")));
        }
        let dims: Vec<usize> = (0..n).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let output = match r.u8()? {
            0 => OutputActivation::Linear,
            1 => OutputActivation::LeakyRelu,
            k => return Err(Error::Format(format!("unknown output activation code {k}"))),
        };
        let slope = r.f64()?;
        let seed = r.u64()?;
        let (d0, dl) = (dims[0], dims[n - 1]);
        let normalization = match r.u8()? {
            0 => None,
            1 => Some(Normalization {
                in_mean: r.f64s(d0)?,
                in_scale: r.f64s(d0)?,
                out_mean: r.f64s(dl)?,
                out_scale: r.f64s(dl)?,
            }),
            k => return Err(Error::Format(format!("bad normalization flag {k}"))),
        };
        let mut weights = Vec::with_capacity(n - 1);
        let mut biases = Vec::with_capacity(n - 1);
        for w in dims.windows(2) {
            let vals = r.f64s(w[0] * w[1])?;
            weights.push(DMatrix::from_row_slice(w[1], w[0], &vals));
            biases.push(DVector::from_vec(r.f64s(w[1])?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes in bundle", bytes.len() - r.pos)));
        }
        Network::from_parts(weights, biases, slope, output, seed, normalization)
    }

    pub fn to_json(&self) -> NetworkJson {
        NetworkJson {
            format_version: BUNDLE_VERSION,
            dims: self.dims().to_vec(),
            output_activation: self.output_activation(),
            slope: self.slope(),
            seed: self.seed(),
            normalization: self.normalization().cloned(),
            weights: self
                .weights()
                .iter()
                .map(|w| w.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
            biases: self.biases().iter().map(|b| b.iter().copied().collect()).collect(),
        }
    }

    pub fn from_json(j: &NetworkJson) -> Result<Network> {
        let mut weights = Vec::with_capacity(j.weights.len());
        for rows in &j.weights {
            let nrows = rows.len();
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::Format("ragged weight matrix in JSON".into()));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            weights.push(DMatrix::from_row_slice(nrows, ncols, &flat));
        }
        let biases = j.biases.iter().map(|b| DVector::from_vec(b.clone())).collect();
        let net = Network::from_parts(weights, biases, j.slope, j.output_activation, j.seed, j.normalization.clone())?;
        if net.dims() != j.dims.as_slice() {
            return Err(Error::Format("JSON dims disagree with weight shapes".into()));
        }
        Ok(net)
    }
}

/// JSON form of a network bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkJson {
    pub format_version: u32,
    pub dims: Vec<usize>,
    pub output_activation: OutputActivation,
    pub slope: f64,
    pub seed: u64,
    pub normalization: Option<Normalization>,
    /// `weights[l][i][j]`: row `i`, column `j` of layer `l + 1`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Format("network bundle is truncated".into())),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn write_bundle(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, net.to_bytes())?;
    Ok(())
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<Network> {
    Network::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_network;

    fn sample() -> Network {
        let mut net = init_network(&[4, 7, 3], 12, 0.02, OutputActivation::LeakyRelu).unwrap();
        net.set_normalization(Some(Normalization {
            in_mean: vec![0.1, 0.2, 0.3, 0.4],
            in_scale: vec![1.0, 0.0, 2.0, 3.0],
            out_mean: vec![-1.0, 0.0, 1.0],
            out_scale: vec![0.5, 1.0, 2.0],
        }));
        net
    }

    #[test]
    fn bytes_round_trip() {
        let net = sample();
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..8], BUNDLE_MAGIC);
        assert_eq!(Network::from_bytes(&bytes).unwrap(), net);
        let expected_len = 8 + 4 + 4 + 3 * 4 + 1 + 8 + 8 + 1 + 8 * (2 * 4 + 2 * 3) + 8 * net.n_params();
        assert_eq!(bytes.len(), expected_len);
    }

    #[test]
    fn truncated_and_corrupt() {
        let bytes = sample().to_bytes();
        assert!(Network::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Network::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Network::from_bytes(&extra).is_err());
    }

    #[test]
    fn json_round_trip() {
        let net = sample();
        let text = serde_json::to_string(&net.to_json()).unwrap();
        let back: NetworkJson = serde_json::from_str(&text).unwrap();
        assert_eq!(Network::from_json(&back).unwrap(), net);
    }
}
