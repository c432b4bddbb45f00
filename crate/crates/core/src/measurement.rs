//! Linear measurement operators and measurement noise.
//!
//! All operators act on row-major pixel vectors. Random operators are
//! regenerated bit-for-bit from `(kind, width, height, subrate, seed)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Complex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// A real linear map `H: R^cols → R^rows` with its exact adjoint.
pub trait LinearOperator: Sync {
    /// Number of measurements `M`.
    fn rows(&self) -> usize;
    /// Number of pixels `N`.
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    DenseGaussian,
    BlockGaussian,
    MaskedDft,
    Identity,
}

impl OperatorKind {
    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::DenseGaussian => "dense",
            OperatorKind::BlockGaussian => "block",
            OperatorKind::MaskedDft => "dft",
            OperatorKind::Identity => "identity",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(OperatorKind::DenseGaussian),
            "block" => Ok(OperatorKind::BlockGaussian),
            "dft" => Ok(OperatorKind::MaskedDft),
            "identity" => Ok(OperatorKind::Identity),
            _ => Err(Error::Config(format!(
                "unknown operator '{s}'; valid operators: dense, block, dft, identity"
            ))),
        }
    }
}

/// Side of the square tiles sampled independently by the block operator.
pub const BLOCK_SIDE: usize = 32;

#[derive(Debug, Clone)]
struct GaussianBlock {
    row0: usize,
    col0: usize,
    height: usize,
    width: usize,
    /// First measurement index owned by this block.
    offset: usize,
    /// `m × (height·width)`, row-major; block pixels row-major.
    entries: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Coefficient {
    /// Frequency equal to its own conjugate: one real measurement.
    Real { u: usize, v: usize },
    /// Representative of a conjugate pair: real and imaginary parts.
    Pair { u: usize, v: usize },
}

#[derive(Debug, Clone)]
struct Twiddles {
    rows: Vec<Complex<f64>>,
    cols: Vec<Complex<f64>>,
}

impl Twiddles {
    fn new(height: usize, width: usize) -> Self {
        let table = |n: usize| {
            (0..n)
                .map(|k| {
                    let a = -2.0 * PI * k as f64 / n as f64;
                    Complex::new(a.cos(), a.sin())
                })
                .collect()
        };
        Twiddles {
            rows: table(height),
            cols: table(width),
        }
    }
}

#[derive(Debug, Clone)]
enum OpData {
    Dense { entries: Vec<f64> },
    Block { blocks: Vec<GaussianBlock> },
    Dft { coefficients: Vec<Coefficient>, twiddles: Twiddles },
    Identity,
}

#[derive(Debug, Clone)]
pub struct MeasurementOp {
    kind: OperatorKind,
    width: usize,
    height: usize,
    subrate: f64,
    seed: u64,
    rows: usize,
    data: OpData,
}

fn gaussian_entries(rng: &mut ChaCha8Rng, count: usize, scale: f64) -> Vec<f64> {
    (0..count)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

impl MeasurementOp {
    /// Builds a seeded random operator for a `width × height` image keeping
    /// `subrate · N` measurements.
    pub fn new(kind: OperatorKind, width: usize, height: usize, subrate: f64, seed: u64) -> Result<Self> {
        let n = width * height;
        if n == 0 {
            return Err(Error::Config("image must have at least one pixel".into()));
        }
        if kind == OperatorKind::Identity {
            return Ok(Self::identity(width, height));
        }
        if !(subrate > 0.0 && subrate <= 1.0) {
            return Err(Error::Config(format!("subrate must lie in (0, 1], got {subrate}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = ((subrate * n as f64).round() as usize).clamp(1, n);
        let (rows, data) = match kind {
            OperatorKind::DenseGaussian => {
                let entries = gaussian_entries(&mut rng, target * n, 1.0 / (target as f64).sqrt());
                (target, OpData::Dense { entries })
            }
            OperatorKind::BlockGaussian => {
                let mut blocks = Vec::new();
                let mut offset = 0;
                for row0 in (0..height).step_by(BLOCK_SIDE) {
                    for col0 in (0..width).step_by(BLOCK_SIDE) {
                        let bh = BLOCK_SIDE.min(height - row0);
                        let bw = BLOCK_SIDE.min(width - col0);
                        let len = bh * bw;
                        let m = ((subrate * len as f64).round() as usize).clamp(1, len);
                        let entries = gaussian_entries(&mut rng, m * len, 1.0 / (m as f64).sqrt());
                        blocks.push(GaussianBlock {
                            row0,
                            col0,
                            height: bh,
                            width: bw,
                            offset,
                            entries,
                        });
                        offset += m;
                    }
                }
                (offset, OpData::Block { blocks })
            }
            OperatorKind::MaskedDft => {
                let coefficients = sample_mask(width, height, target, &mut rng);
                let rows = coefficients
                    .iter()
                    .map(|c| match c {
                        Coefficient::Real { .. } => 1,
                        Coefficient::Pair { .. } => 2,
                    })
                    .sum();
                (
                    rows,
                    OpData::Dft {
                        coefficients,
                        twiddles: Twiddles::new(height, width),
                    },
                )
            }
            OperatorKind::Identity => unreachable!(),
        };
        Ok(MeasurementOp {
            kind,
            width,
            height,
            subrate,
            seed,
            rows,
            data,
        })
    }

    pub fn identity(width: usize, height: usize) -> Self {
        MeasurementOp {
            kind: OperatorKind::Identity,
            width,
            height,
            subrate: 1.0,
            seed: 0,
            rows: width * height,
            data: OpData::Identity,
        }
    }

    /// Dense operator with explicit row-major `rows × (width·height)` entries.
    pub fn dense_from_rows(rows: usize, width: usize, height: usize, entries: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if entries.len() != rows * n {
            return Err(Error::Dimension {
                expected: rows * n,
                actual: entries.len(),
            });
        }
        Ok(MeasurementOp {
            kind: OperatorKind::DenseGaussian,
            width,
            height,
            subrate: rows as f64 / n as f64,
            seed: 0,
            rows,
            data: OpData::Dense { entries },
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Configured subrate.
    pub fn subrate(&self) -> f64 {
        self.subrate
    }

    /// Realized sampling rate `M / N`.
    pub fn sampling_rate(&self) -> f64 {
        self.rows as f64 / (self.width * self.height) as f64
    }

    /// Checked forward map of an image.
    pub fn forward(&self, x: &Image) -> Result<Vec<f64>> {
        if x.width() != self.width || x.height() != self.height {
            return Err(Error::Dimension {
                expected: self.cols(),
                actual: x.len(),
            });
        }
        Ok(self.apply(x.data()))
    }

    /// Checked adjoint map back to an image.
    pub fn adjoint(&self, y: &[f64]) -> Result<Image> {
        if y.len() != self.rows {
            return Err(Error::Dimension {
                expected: self.rows,
                actual: y.len(),
            });
        }
        Image::new(self.width, self.height, self.apply_adjoint(y))
    }

    fn spectrum(&self, x: &[f64], tw: &Twiddles) -> Vec<Complex<f64>> {
        let (h, w) = (self.height, self.width);
        // along columns within each row
        let mut rows = vec![Complex::new(0.0, 0.0); h * w];
        for r in 0..h {
            for v in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for c in 0..w {
                    acc += tw.cols[(v * c) % w] * x[r * w + c];
                }
                rows[r * w + v] = acc;
            }
        }
        let norm = 1.0 / ((h * w) as f64).sqrt();
        let mut out = vec![Complex::new(0.0, 0.0); h * w];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for r in 0..h {
                    acc += tw.rows[(u * r) % h] * rows[r * w + v];
                }
                out[u * w + v] = acc * norm;
            }
        }
        out
    }

    fn inverse_spectrum(&self, spec: &[Complex<f64>], tw: &Twiddles) -> Vec<Complex<f64>> {
        let (h, w) = (self.height, self.width);
        let mut cols = vec![Complex::new(0.0, 0.0); h * w];
        for r in 0..h {
            for v in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for u in 0..h {
                    acc += tw.rows[(u * r) % h].conj() * spec[u * w + v];
                }
                cols[r * w + v] = acc;
            }
        }
        let norm = 1.0 / ((h * w) as f64).sqrt();
        let mut out = vec![Complex::new(0.0, 0.0); h * w];
        for r in 0..h {
            for c in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for v in 0..w {
                    acc += tw.cols[(v * c) % w].conj() * cols[r * w + v];
                }
                out[r * w + c] = acc * norm;
            }
        }
        out
    }

    /// Adjoint of the masked DFT before discarding the imaginary part.
    pub(crate) fn dft_adjoint_complex(&self, y: &[f64]) -> Option<Vec<Complex<f64>>> {
        let OpData::Dft {
            coefficients,
            twiddles,
        } = &self.data
        else {
            return None;
        };
        let (h, w) = (self.height, self.width);
        let mut spec = vec![Complex::new(0.0, 0.0); h * w];
        let mut k = 0;
        for coef in coefficients {
            match *coef {
                Coefficient::Real { u, v } => {
                    spec[u * w + v] += Complex::new(y[k], 0.0);
                    k += 1;
                }
                Coefficient::Pair { u, v } => {
                    let z = Complex::new(y[k], y[k + 1]) * std::f64::consts::FRAC_1_SQRT_2;
                    spec[u * w + v] += z;
                    spec[((h - u) % h) * w + (w - v) % w] += z.conj();
                    k += 2;
                }
            }
        }
        Some(self.inverse_spectrum(&spec, twiddles))
    }
}

/// Random conjugate-symmetric frequency mask holding `target` real degrees
/// of freedom (or one fewer when only a pair would fit). DC is always kept.
fn sample_mask(width: usize, height: usize, target: usize, rng: &mut ChaCha8Rng) -> Vec<Coefficient> {
    let conj = |u: usize, v: usize| ((height - u) % height, (width - v) % width);
    let mut candidates = Vec::new();
    for u in 0..height {
        for v in 0..width {
            if (u, v) == (0, 0) {
                continue;
            }
            let c = conj(u, v);
            if c == (u, v) {
                candidates.push(Coefficient::Real { u, v });
            } else if (u, v) < c {
                candidates.push(Coefficient::Pair { u, v });
            }
        }
    }
    candidates.shuffle(rng);
    let mut chosen = vec![Coefficient::Real { u: 0, v: 0 }];
    let mut dof = 1;
    for c in candidates {
        let need = match c {
            Coefficient::Real { .. } => 1,
            Coefficient::Pair { .. } => 2,
        };
        if dof + need <= target {
            chosen.push(c);
            dof += need;
        }
        if dof == target {
            break;
        }
    }
    chosen
}

impl LinearOperator for MeasurementOp {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.width * self.height
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.cols();
        assert_eq!(x.len(), n, "operator input length");
        match &self.data {
            OpData::Identity => x.to_vec(),
            OpData::Dense { entries } => entries
                .par_chunks(n)
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
            OpData::Block { blocks } => {
                let mut y = vec![0.0; self.rows];
                for b in blocks {
                    let len = b.height * b.width;
                    let mut patch = Vec::with_capacity(len);
                    for r in 0..b.height {
                        let start = (b.row0 + r) * self.width + b.col0;
                        patch.extend_from_slice(&x[start..start + b.width]);
                    }
                    for (i, row) in b.entries.chunks(len).enumerate() {
                        y[b.offset + i] = row.iter().zip(&patch).map(|(a, p)| a * p).sum();
                    }
                }
                y
            }
            OpData::Dft {
                coefficients,
                twiddles,
            } => {
                let spec = self.spectrum(x, twiddles);
                let w = self.width;
                let mut y = Vec::with_capacity(self.rows);
                for coef in coefficients {
                    match *coef {
                        Coefficient::Real { u, v } => y.push(spec[u * w + v].re),
                        Coefficient::Pair { u, v } => {
                            let z = spec[u * w + v] * std::f64::consts::SQRT_2;
                            y.push(z.re);
                            y.push(z.im);
                        }
                    }
                }
                y
            }
        }
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let n = self.cols();
        assert_eq!(y.len(), self.rows, "adjoint input length");
        match &self.data {
            OpData::Identity => y.to_vec(),
            OpData::Dense { entries } => {
                let mut x = vec![0.0; n];
                const CHUNK: usize = 256;
                x.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, out)| {
                    let start = ci * CHUNK;
                    for (i, &yi) in y.iter().enumerate() {
                        if yi == 0.0 {
                            continue;
                        }
                        let row = &entries[i * n + start..i * n + start + out.len()];
                        for (o, a) in out.iter_mut().zip(row) {
                            *o += yi * a;
                        }
                    }
                });
                x
            }
            OpData::Block { blocks } => {
                let mut x = vec![0.0; n];
                for b in blocks {
                    let len = b.height * b.width;
                    let mut patch = vec![0.0; len];
                    for (i, row) in b.entries.chunks(len).enumerate() {
                        let yi = y[b.offset + i];
                        for (p, a) in patch.iter_mut().zip(row) {
                            *p += yi * a;
                        }
                    }
                    for r in 0..b.height {
                        let start = (b.row0 + r) * self.width + b.col0;
                        x[start..start + b.width].copy_from_slice(&patch[r * b.width..(r + 1) * b.width]);
                    }
                }
                x
            }
            OpData::Dft { .. } => self
                .dft_adjoint_complex(y)
                .expect("dft operator")
                .into_iter()
                .map(|z| z.re)
                .collect(),
        }
    }
}

/// Largest singular value of `H` by power iteration on `HᵀH`.
pub fn operator_norm_estimate(op: &impl LinearOperator) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..op.cols())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut estimate = 0.0;
    for _ in 0..200 {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        let hv = op.apply(&v);
        let next = hv.iter().map(|a| a * a).sum::<f64>().sqrt();
        v = op.apply_adjoint(&hv);
        let done = (next - estimate).abs() <= 1e-12 * next;
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    Gaussian { sigma: f64 },
    /// `(1 − ξ)·N(0, σ²) + ξ·N(0, κσ²)`.
    GaussianMixture { xi: f64, kappa: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    /// When set, the drawn noise vector is rescaled to hit this SNR exactly.
    pub target_snr_db: Option<f64>,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        model: NoiseModel::None,
        target_snr_db: None,
    };

    pub fn validate(&self) -> Result<()> {
        match self.model {
            NoiseModel::None => {}
            NoiseModel::Gaussian { sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
                }
            }
            NoiseModel::GaussianMixture { xi, kappa, sigma } => {
                if !(0.0..1.0).contains(&xi) {
                    return Err(Error::Config(format!("mixture xi must lie in [0, 1), got {xi}")));
                }
                if !(kappa > 1.0 && kappa.is_finite()) {
                    return Err(Error::Config(format!("mixture kappa must exceed 1, got {kappa}")));
                }
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
                }
            }
        }
        if let Some(snr) = self.target_snr_db {
            if !snr.is_finite() {
                return Err(Error::Config(format!("target SNR must be finite, got {snr}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NoisyMeasurements {
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
    /// `+∞` when no noise was added.
    pub snr_db: f64,
}

/// `20·log10(‖y − mean(y)‖ / ‖n‖)`.
pub fn snr_db(clean: &[f64], noise: &[f64]) -> f64 {
    let mean = clean.iter().sum::<f64>() / clean.len().max(1) as f64;
    let signal = clean.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
    let noise = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    if noise == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (signal / noise).log10()
    }
}

/// Corrupts clean measurements `Hx` with noise drawn from `spec`.
pub fn add_noise(clean: &[f64], spec: &NoiseSpec, rng: &mut impl Rng) -> Result<NoisyMeasurements> {
    spec.validate()?;
    let draw_sigma = |sigma: f64| {
        if sigma == 0.0 && spec.target_snr_db.is_some() {
            1.0
        } else {
            sigma
        }
    };
    let mut noise: Vec<f64> = match spec.model {
        NoiseModel::None => vec![0.0; clean.len()],
        NoiseModel::Gaussian { sigma } => {
            let s = draw_sigma(sigma);
            (0..clean.len())
                .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        NoiseModel::GaussianMixture { xi, kappa, sigma } => {
            let s = draw_sigma(sigma);
            let wide = s * kappa.sqrt();
            (0..clean.len())
                .map(|_| {
                    let outlier = rng.random::<f64>() < xi;
                    let z: f64 = rng.sample(StandardNormal);
                    if outlier {
                        wide * z
                    } else {
                        s * z
                    }
                })
                .collect()
        }
    };
    if let (Some(target), false) = (spec.target_snr_db, matches!(spec.model, NoiseModel::None)) {
        let current = snr_db(clean, &noise);
        if current.is_finite() {
            let scale = 10f64.powf((current - target) / 20.0);
            noise.iter_mut().for_each(|v| *v *= scale);
        }
    }
    let y = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let snr = snr_db(clean, &noise);
    Ok(NoisyMeasurements {
        y,
        noise,
        snr_db: snr,
    })
}
