//! The seeded 64×64 benchmark shared by the solver tests and the acceptance
//! suite.

#![allow(dead_code)]

use gsr_core::synthetic::repeated_motif;
use gsr_core::{
    add_noise, Image, MeasurementOp, NoiseModel, NoiseSpec, OperatorKind, Penalty, PenaltyKind, SolverConfig,
    WeightScheme, WeightingMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 64;
pub const IMAGE_SEED: u64 = 7;
pub const OPERATOR_SEED: u64 = 11;
pub const NOISE_SEED: u64 = 5;

pub fn ground_truth() -> Image {
    repeated_motif(SIDE, SIDE, 6, IMAGE_SEED)
}

pub fn dense(subrate: f64) -> MeasurementOp {
    MeasurementOp::new(OperatorKind::DenseGaussian, SIDE, SIDE, subrate, OPERATOR_SEED).unwrap()
}

/// `(1 − 0.1)·N(0, σ²) + 0.1·N(0, 100σ²)` rescaled to the requested SNR.
pub fn mixture_noise(clean: &[f64], snr_db: f64) -> Vec<f64> {
    let spec = NoiseSpec {
        model: NoiseModel::GaussianMixture {
            xi: 0.1,
            kappa: 100.0,
            sigma: 1.0,
        },
        target_snr_db: Some(snr_db),
    };
    add_noise(clean, &spec, &mut ChaCha8Rng::seed_from_u64(NOISE_SEED)).unwrap().y
}

/// Combined-weight logarithm penalty run used throughout the benchmark.
pub fn config() -> SolverConfig {
    SolverConfig {
        lambda: 5e4,
        mu: 1.0,
        penalty: Penalty::new(PenaltyKind::Logarithm, 1.0, 1.0).unwrap(),
        weighting: WeightingMode::new(WeightScheme::Combined),
        outer_iters: 80,
        gd_steps_per_outer: 20,
        ..Default::default()
    }
}

/// Convex nuclear norm baseline: every weight is one.
pub fn nnm_config(lambda: f64) -> SolverConfig {
    SolverConfig {
        lambda,
        weighting: WeightingMode::new(WeightScheme::Uniform),
        ..config()
    }
}

/// A random dense least-squares instance with its explicit matrix.
pub struct DenseSystem {
    pub op: MeasurementOp,
    pub h: nalgebra::DMatrix<f64>,
    pub y: Vec<f64>,
    pub x0: Image,
    pub z: Image,
    pub w: Image,
    pub mu: f64,
    pub q: Vec<f64>,
}

pub fn dense_system(seed: u64) -> DenseSystem {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.random_range(4..=16);
    let height = rng.random_range(4..=16);
    let n = width * height;
    let m = rng.random_range(n / 4..=n);
    let scale = 1.0 / (m as f64).sqrt();
    let entries: Vec<f64> = (0..m * n)
        .map(|_| { let v: f64 = StandardNormal.sample(&mut rng); scale * v })
        .collect();
    let h = nalgebra::DMatrix::from_row_slice(m, n, &entries);
    let op = MeasurementOp::dense_from_rows(m, width, height, entries).unwrap();
    let mut image = |amp: f64| Image::from_fn(width, height, |_, _| rng.random_range(-amp..amp));
    let (x0, z, w) = (image(100.0), image(100.0), image(10.0));
    let y = (0..m).map(|_| rng.random_range(-300.0..300.0)).collect();
    let mu = rng.random_range(0.5..2.0);
    let q = (0..m).map(|_| rng.random_range(0.05..=1.0)).collect();
    DenseSystem {
        op,
        h,
        y,
        x0,
        z,
        w,
        mu,
        q,
    }
}

/// `(HᵀQH + μI)⁻¹ (HᵀQy + μ(Z + W))` by Cholesky.
pub fn weighted_normal_solution(s: &DenseSystem, q: &[f64]) -> nalgebra::DVector<f64> {
    let n = s.h.ncols();
    let qh = nalgebra::DMatrix::from_fn(s.h.nrows(), n, |i, j| q[i] * s.h[(i, j)]);
    let lhs = s.h.transpose() * &qh + nalgebra::DMatrix::identity(n, n) * s.mu;
    let qy = nalgebra::DVector::from_iterator(s.y.len(), s.y.iter().zip(q).map(|(a, b)| a * b));
    let anchor = nalgebra::DVector::from_iterator(n, s.z.data().iter().zip(s.w.data()).map(|(a, b)| a + b));
    let rhs = s.h.transpose() * qy + anchor * s.mu;
    lhs.cholesky().expect("positive definite").solve(&rhs)
}

pub fn relative_error(got: &[f64], want: &nalgebra::DVector<f64>) -> f64 {
    let diff: f64 = got.iter().zip(want.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    (diff / want.norm_squared()).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `(first-quarter median, last-quarter median)` of the `‖X − Z‖` trace.
pub fn gap_medians(trace: &[gsr_core::TraceRecord]) -> (f64, f64) {
    let gaps: Vec<f64> = trace.iter().map(|t| t.x_minus_z_norm).collect();
    let k = (gaps.len() / 4).max(1);
    (median(&gaps[..k]), median(&gaps[gaps.len() - k..]))
}
