//! `GSRM1` measurement files: a short `key=value` text header followed by
//! little-endian `f64` measurements.
//!
//! Operators are not stored; they are regenerated from kind, image size,
//! subrate and seed.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::measurement::{MeasurementOp, NoiseModel, NoiseSpec, OperatorKind};

pub const MAGIC: &str = "GSRM1";

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFile {
    pub kind: OperatorKind,
    pub width: usize,
    pub height: usize,
    pub subrate: f64,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Realized SNR in dB, `inf` when noiseless.
    pub snr_db: f64,
    pub measurements: Vec<f64>,
}

fn format_error(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "GSRM1",
        reason: reason.into(),
    }
}

impl MeasurementFile {
    pub fn operator(&self) -> Result<MeasurementOp> {
        let op = MeasurementOp::new(self.kind, self.width, self.height, self.subrate, self.seed)?;
        if crate::measurement::LinearOperator::rows(&op) != self.measurements.len() {
            return Err(format_error(format!(
                "file holds {} measurements but the regenerated operator has {}",
                self.measurements.len(),
                crate::measurement::LinearOperator::rows(&op)
            )));
        }
        Ok(op)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut header = vec![
            MAGIC.to_string(),
            format!("op={}", self.kind),
            format!("width={}", self.width),
            format!("height={}", self.height),
            format!("subrate={:?}", self.subrate),
            format!("seed={}", self.seed),
        ];
        match self.noise.model {
            NoiseModel::None => header.push("noise=none".into()),
            NoiseModel::Gaussian { sigma } => {
                header.push("noise=gaussian".into());
                header.push(format!("noise_sigma={sigma:?}"));
            }
            NoiseModel::GaussianMixture { xi, kappa, sigma } => {
                header.push("noise=mixture".into());
                header.push(format!("noise_sigma={sigma:?}"));
                header.push(format!("noise_xi={xi:?}"));
                header.push(format!("noise_kappa={kappa:?}"));
            }
        }
        if let Some(t) = self.noise.target_snr_db {
            header.push(format!("target_snr_db={t:?}"));
        }
        header.push(format!("snr_db={:?}", self.snr_db));
        header.push(format!("count={}", self.measurements.len()));
        header.push("data".into());
        let mut out = header.join("\n").into_bytes();
        out.push(b'\n');
        for v in &self.measurements {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut fields = HashMap::new();
        let mut pos = 0;
        let mut first = true;
        loop {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| format_error("header is not terminated by a 'data' line"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end])
                .map_err(|_| format_error("header is not UTF-8"))?;
            pos += end + 1;
            if first {
                if line != MAGIC {
                    return Err(format_error("missing GSRM1 magic"));
                }
                first = false;
                continue;
            }
            if line == "data" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_error(format!("bad header line '{line}'")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| format_error(format!("missing header field '{k}'")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| format_error(format!("field '{k}' has invalid value '{v}'")))
        }
        let float = |k: &str| -> Result<f64> { num(k, get(k)?) };

        let kind: OperatorKind = get("op")?.parse()?;
        let model = match get("noise")? {
            "none" => NoiseModel::None,
            "gaussian" => NoiseModel::Gaussian {
                sigma: float("noise_sigma")?,
            },
            "mixture" => NoiseModel::GaussianMixture {
                xi: float("noise_xi")?,
                kappa: float("noise_kappa")?,
                sigma: float("noise_sigma")?,
            },
            other => return Err(format_error(format!("unknown noise model '{other}'"))),
        };
        let target_snr_db = match fields.get("target_snr_db") {
            Some(v) => Some(num("target_snr_db", v)?),
            None => None,
        };
        let count: usize = num("count", get("count")?)?;
        let payload = &bytes[pos..];
        if payload.len() != count * 8 {
            return Err(format_error(format!(
                "expected {} data bytes, found {}",
                count * 8,
                payload.len()
            )));
        }
        let measurements = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(MeasurementFile {
            kind,
            width: num("width", get("width")?)?,
            height: num("height", get("height")?)?,
            subrate: float("subrate")?,
            seed: num("seed", get("seed")?)?,
            noise: NoiseSpec {
                model,
                target_snr_db,
            },
            snr_db: float("snr_db")?,
            measurements,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
