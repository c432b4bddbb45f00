//! Spectral shrinkage of patch groups: thin SVD, weighted singular value
//! thresholding (WSVT), and the iteratively reweighted nuclear norm (IRNN)
//! group denoiser.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grouping::PatchGroup;
use crate::penalty::Penalty;

/// Machine epsilon for f64, the default guard in combined weights.
pub const DEFAULT_EPSILON: f64 = 2.2204e-16;

/// Thin SVD `M = U Σ Vᵀ` with `r = min(rows, cols)` singular triplets.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    /// Nonincreasing, nonnegative.
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    /// `U · diag(values) · Vᵀ`.
    pub fn compose(&self, values: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.u.clone();
        for (mut col, &s) in scaled.column_iter_mut().zip(values) {
            col *= s;
        }
        scaled * self.v.transpose()
    }
}

/// Thin SVD with singular values sorted nonincreasing and a fixed sign
/// convention: the first non-negligible entry of every `U` column is
/// nonnegative.
pub fn svd_small(m: &DMatrix<f64>) -> Result<SvdFactors> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("SVD input contains non-finite entries".into()));
    }
    let r = m.nrows().min(m.ncols());
    if r == 0 {
        return Ok(SvdFactors {
            u: DMatrix::zeros(m.nrows(), 0),
            sigma: vec![],
            v: DMatrix::zeros(m.ncols(), 0),
        });
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let values = svd.singular_values;

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut u_out = DMatrix::zeros(m.nrows(), r);
    let mut v_out = DMatrix::zeros(m.ncols(), r);
    let mut sigma = Vec::with_capacity(r);
    for (j, &src) in order.iter().enumerate() {
        let mut uc = u.column(src).clone_owned();
        let mut vc = v_t.row(src).transpose();
        let lead = uc.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(0.0);
        if lead < 0.0 {
            uc.neg_mut();
            vc.neg_mut();
        }
        u_out.set_column(j, &uc);
        v_out.set_column(j, &vc);
        sigma.push(values[src].max(0.0));
    }
    Ok(SvdFactors {
        u: u_out,
        sigma,
        v: v_out,
    })
}

fn validate_weights(weights: &[f64], r: usize) -> Result<()> {
    if weights.len() != r {
        return Err(Error::Dimension {
            expected: r,
            actual: weights.len(),
        });
    }
    for (i, &w) in weights.iter().enumerate() {
        if w.is_nan() || w < 0.0 {
            return Err(Error::Contract(format!("weight {i} is {w}, must be >= 0")));
        }
        if i > 0 && w < weights[i - 1] {
            return Err(Error::Contract(format!(
                "weights must be nondecreasing, w[{}] = {} > w[{i}] = {w}",
                i - 1,
                weights[i - 1]
            )));
        }
    }
    Ok(())
}

/// `τ·w`, with an infinite weight meaning full truncation and `τ = 0`
/// meaning no shrinkage.
#[inline]
fn threshold(tau: f64, w: f64) -> f64 {
    if tau == 0.0 || w == 0.0 {
        0.0
    } else {
        tau * w
    }
}

/// Shrinks a nonincreasing spectrum by `τ·w_i`, clipping at zero.
pub fn shrink_spectrum(sigma: &[f64], weights: &[f64], tau: f64) -> Vec<f64> {
    sigma
        .iter()
        .zip(weights)
        .map(|(&s, &w)| (s - threshold(tau, w)).max(0.0))
        .collect()
}

/// Weighted singular value thresholding: `U · diag((σ_i − τ w_i)_+) · Vᵀ`.
///
/// Weights must be nonnegative and nondecreasing; `+∞` zeroes the matching
/// singular value.
pub fn wsvt(r: &DMatrix<f64>, weights: &[f64], tau: f64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Contract(format!("tau must be finite and >= 0, got {tau}")));
    }
    validate_weights(weights, r.nrows().min(r.ncols()))?;
    if weights.iter().all(|&w| threshold(tau, w) == 0.0) {
        return Ok(r.clone());
    }
    let svd = svd_small(r)?;
    Ok(svd.compose(&shrink_spectrum(&svd.sigma, weights, tau)))
}

/// Counts nonzero singular values (relative tolerance `1e-10·σ₁`) and,
/// independently, the rank by Gaussian elimination with complete pivoting.
/// The two agree for any group; the pair is a diagnostic of the rank /
/// group-sparsity equivalence.
pub fn rank_sparsity_check(group: &PatchGroup) -> Result<(usize, usize)> {
    let m = &group.matrix;
    let svd = svd_small(m)?;
    let s1 = svd.sigma.first().copied().unwrap_or(0.0);
    let nnz = svd.sigma.iter().filter(|&&s| s > 1e-10 * s1 && s > 0.0).count();
    Ok((elimination_rank(m), nnz))
}

fn elimination_rank(m: &DMatrix<f64>) -> usize {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let first = a.amax();
    if first == 0.0 {
        return 0;
    }
    let mut rank = 0;
    while rank < rows.min(cols) {
        let mut best = (rank, rank, 0.0f64);
        for j in rank..cols {
            for i in rank..rows {
                if a[(i, j)].abs() > best.2 {
                    best = (i, j, a[(i, j)].abs());
                }
            }
        }
        if best.2 <= 1e-10 * first {
            break;
        }
        a.swap_rows(rank, best.0);
        a.swap_columns(rank, best.1);
        let pivot = a[(rank, rank)];
        for i in rank + 1..rows {
            let f = a[(i, rank)] / pivot;
            if f != 0.0 {
                for j in rank..cols {
                    let v = a[(rank, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// How the per-singular-value weights are formed from the current spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    /// `w_i = ∂ρ(σ_i)`.
    Supergradient,
    /// `w_i = ∂ρ(σ_i) / (σ_i + ε)`.
    Combined,
    /// `w_i = 1`: plain nuclear norm soft thresholding.
    Uniform,
}

/// Spectrum the first sweep's weights are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitWeights {
    /// Singular values of the noisy group itself.
    Observation,
    /// A zero iterate, so every first-sweep weight is `∂ρ(0)`.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingMode {
    pub scheme: WeightScheme,
    pub epsilon: f64,
    pub init: InitWeights,
}

impl Default for WeightingMode {
    fn default() -> Self {
        WeightingMode {
            scheme: WeightScheme::Combined,
            epsilon: DEFAULT_EPSILON,
            init: InitWeights::Observation,
        }
    }
}

impl WeightingMode {
    pub fn new(scheme: WeightScheme) -> Self {
        WeightingMode {
            scheme,
            ..Default::default()
        }
    }

    /// Weights for a nonincreasing spectrum; the result is nondecreasing.
    pub fn weights(&self, penalty: &Penalty, sigma: &[f64]) -> Vec<f64> {
        let mut w: Vec<f64> = sigma
            .iter()
            .map(|&s| {
                let s = s.max(0.0);
                match self.scheme {
                    WeightScheme::Supergradient => penalty.supergradient_unchecked(s),
                    WeightScheme::Combined => {
                        penalty.supergradient_unchecked(s) / (s.abs() + self.epsilon)
                    }
                    WeightScheme::Uniform => 1.0,
                }
            })
            .collect();
        // exact in real arithmetic; absorbs last-ulp rounding
        for i in 1..w.len() {
            if w[i] < w[i - 1] {
                w[i] = w[i - 1];
            }
        }
        w
    }
}

/// `½‖R − Z‖²_F + τ Σ ρ(σ_i(Z))` for `Z` sharing the singular vectors of `R`.
pub fn surrogate_objective(penalty: &Penalty, tau: f64, observed: &[f64], shrunk: &[f64]) -> f64 {
    let fit: f64 = observed
        .iter()
        .zip(shrunk)
        .map(|(s, z)| (s - z) * (s - z))
        .sum();
    let reg: f64 = shrunk.iter().map(|&z| penalty.rho_unchecked(z)).sum();
    0.5 * fit + if tau == 0.0 { 0.0 } else { tau * reg }
}

/// Relative change below which standalone denoising stops sweeping.
pub const SWEEP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SpectrumSweeps {
    pub shrunk: Vec<f64>,
    pub weights_trace: Vec<Vec<f64>>,
    pub objective_trace: Vec<f64>,
}

/// IRNN sweeps on a spectrum: each sweep reweights from the current iterate
/// and applies one WSVT to the observed spectrum.
pub fn irnn_spectrum(
    observed: &[f64],
    penalty: &Penalty,
    tau: f64,
    mode: &WeightingMode,
    inner_iters: usize,
) -> SpectrumSweeps {
    let mut current = match mode.init {
        InitWeights::Observation => observed.to_vec(),
        InitWeights::Zero => vec![0.0; observed.len()],
    };
    let mut weights_trace = Vec::with_capacity(inner_iters);
    let mut objective_trace = Vec::with_capacity(inner_iters);
    for sweep in 0..inner_iters {
        let w = mode.weights(penalty, &current);
        let next = shrink_spectrum(observed, &w, tau);
        objective_trace.push(surrogate_objective(penalty, tau, observed, &next));
        weights_trace.push(w);
        let change: f64 = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = current.iter().map(|v| v * v).sum::<f64>().sqrt();
        current = next;
        if sweep > 0 && change <= SWEEP_TOLERANCE * scale {
            break;
        }
    }
    SpectrumSweeps {
        shrunk: current,
        weights_trace,
        objective_trace,
    }
}

#[derive(Debug, Clone)]
pub struct DenoiseResult {
    pub group: PatchGroup,
    pub weights_trace: Vec<Vec<f64>>,
    pub objective_trace: Vec<f64>,
    /// Singular values of the denoised group.
    pub singular_values: Vec<f64>,
}

/// Approximately solves `min_Z ½‖R − Z‖²_F + τ Σ ρ(σ_i(Z))` for one group.
pub fn irnn_denoise_group(
    group: &PatchGroup,
    penalty: &Penalty,
    tau: f64,
    mode: &WeightingMode,
    inner_iters: usize,
) -> Result<DenoiseResult> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Contract(format!("tau must be finite and >= 0, got {tau}")));
    }
    if inner_iters == 0 {
        return Err(Error::Contract("inner_iters must be at least 1".into()));
    }
    let svd = svd_small(&group.matrix)?;
    let sweeps = irnn_spectrum(&svd.sigma, penalty, tau, mode, inner_iters);
    for w in &sweeps.weights_trace {
        validate_weights(w, svd.sigma.len())?;
    }
    let unchanged = sweeps
        .weights_trace
        .last()
        .is_some_and(|w| w.iter().all(|&w| threshold(tau, w) == 0.0));
    let matrix = if unchanged {
        group.matrix.clone()
    } else {
        svd.compose(&sweeps.shrunk)
    };
    Ok(DenoiseResult {
        group: group.with_matrix(matrix),
        weights_trace: sweeps.weights_trace,
        objective_trace: sweeps.objective_trace,
        singular_values: sweeps.shrunk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::PenaltyKind;
    use nalgebra::DVector;

    fn group_of(m: DMatrix<f64>) -> PatchGroup {
        let cols = m.ncols();
        PatchGroup {
            matrix: m,
            positions: vec![(0, 0); cols],
            ref_index: 0,
            patch_side: 1,
        }
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        DMatrix::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn diagonal_spectrum() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        let svd = svd_small(&m).unwrap();
        assert!((svd.sigma[0] - 3.0).abs() < 1e-14);
        assert!((svd.sigma[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        let svd = svd_small(&DMatrix::zeros(3, 5)).unwrap();
        assert_eq!(svd.sigma, vec![0.0; 3]);
    }

    #[test]
    fn random_reconstruction_and_orthogonality() {
        for (rows, cols) in [(4, 6), (6, 4), (36, 60), (5, 5)] {
            let m = lcg_matrix(rows, cols, rows as u64 * 31 + cols as u64);
            let svd = svd_small(&m).unwrap();
            let back = svd.compose(&svd.sigma);
            assert!((back - &m).norm() <= 1e-9 * m.norm().max(1.0));
            let r = rows.min(cols);
            assert!((svd.u.transpose() * &svd.u - DMatrix::identity(r, r)).amax() < 1e-9);
            assert!((svd.v.transpose() * &svd.v - DMatrix::identity(r, r)).amax() < 1e-9);
            assert!(svd.sigma.windows(2).all(|p| p[0] >= p[1]));
            for col in svd.u.column_iter() {
                let lead = col.iter().find(|x| x.abs() > 1e-12).unwrap();
                assert!(*lead >= 0.0);
            }
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(svd_small(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn wsvt_zero_weights_is_identity() {
        let m = lcg_matrix(4, 5, 3);
        assert_eq!(wsvt(&m, &[0.0; 4], 1.0).unwrap(), m);
    }

    #[test]
    fn wsvt_full_truncation() {
        let m = lcg_matrix(3, 3, 9);
        let s1 = svd_small(&m).unwrap().sigma[0];
        let out = wsvt(&m, &[s1, s1, f64::INFINITY], 1.0).unwrap();
        assert!(out.amax() < 1e-12);
    }

    #[test]
    fn wsvt_known_spectrum() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let out = wsvt(&m, &[0.5, 2.0], 1.0).unwrap();
        let s = svd_small(&out).unwrap().sigma;
        assert!((s[0] - 2.5).abs() < 1e-12 && s[1].abs() < 1e-12);
    }

    #[test]
    fn wsvt_rejects_bad_weights() {
        let m = lcg_matrix(2, 2, 1);
        assert!(matches!(wsvt(&m, &[1.0, 0.5], 1.0), Err(Error::Contract(_))));
        assert!(matches!(wsvt(&m, &[-1.0, 0.5], 1.0), Err(Error::Contract(_))));
        assert!(matches!(wsvt(&m, &[1.0], 1.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rank_of_outer_product_and_zero() {
        let a = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let b = DVector::from_vec(vec![0.5, 1.0, 3.0, -2.0]);
        let g = group_of(&a * b.transpose());
        assert_eq!(rank_sparsity_check(&g).unwrap(), (1, 1));
        assert_eq!(
            rank_sparsity_check(&group_of(DMatrix::zeros(3, 4))).unwrap(),
            (0, 0)
        );
        assert_eq!(
            rank_sparsity_check(&group_of(lcg_matrix(5, 7, 11))).unwrap(),
            (5, 5)
        );
    }

    #[test]
    fn zero_lambda_leaves_group_untouched() {
        let g = group_of(lcg_matrix(4, 6, 5));
        let pen = Penalty::new(PenaltyKind::Logarithm, 0.0, 1.5).unwrap();
        for scheme in [WeightScheme::Supergradient, WeightScheme::Combined] {
            let out = irnn_denoise_group(&g, &pen, 3.0, &WeightingMode::new(scheme), 3).unwrap();
            assert_eq!(out.group.matrix, g.matrix);
        }
    }

    #[test]
    fn huge_tau_zeroes_group() {
        let g = group_of(lcg_matrix(4, 6, 5));
        let pen = Penalty::new(PenaltyKind::Etp, 1.0, 1.0).unwrap();
        let out = irnn_denoise_group(&g, &pen, 1e9, &WeightingMode::new(WeightScheme::Supergradient), 1)
            .unwrap();
        assert!(out.group.matrix.amax() < 1e-12);
    }

    #[test]
    fn zero_init_uses_origin_supergradient() {
        let g = group_of(lcg_matrix(3, 3, 2));
        let pen = Penalty::new(PenaltyKind::Logarithm, 1.0, 1.5).unwrap();
        let mode = WeightingMode {
            scheme: WeightScheme::Supergradient,
            init: InitWeights::Zero,
            ..Default::default()
        };
        let out = irnn_denoise_group(&g, &pen, 0.1, &mode, 1).unwrap();
        let w0 = pen.supergradient(0.0).unwrap();
        assert!(out.weights_trace[0].iter().all(|&w| w == w0));
    }

    #[test]
    fn inner_iters_must_be_positive() {
        let g = group_of(lcg_matrix(2, 2, 2));
        let pen = Penalty::new(PenaltyKind::Logarithm, 1.0, 1.5).unwrap();
        assert!(irnn_denoise_group(&g, &pen, 0.1, &WeightingMode::default(), 0).is_err());
    }
}
