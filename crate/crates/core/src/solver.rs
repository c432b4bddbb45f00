//! ADMM reconstruction with a low-rank group prior.
//!
//! The splitting `X = Z` alternates a data-fit step on `X` (gradient descent
//! with exact line search), a group-denoising step on `Z` (IRNN per group),
//! and a scaled multiplier update on `W`. The data fit is either least
//! squares or the exponential M-estimator `1 − exp(−r²/σ²)` handled by
//! half-quadratic reweighting.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grouping::{aggregate_groups, build_groups, lattice_anchors, GroupingConfig};
use crate::image::Image;
use crate::lowrank::{irnn_denoise_group, WeightingMode};
use crate::measurement::LinearOperator;
use crate::metrics::psnr;
use crate::penalty::{Penalty, PenaltyKind};

/// Smallest half-quadratic weight; keeps every `q_i` strictly positive.
pub const MIN_WEIGHT: f64 = 1e-300;

/// Consistency factor turning a median absolute deviation into a Gaussian
/// standard deviation.
pub const MAD_TO_SIGMA: f64 = 1.4826;

/// Welsch tuning constant (95% Gaussian efficiency) applied to the robust
/// residual scale.
pub const WELSCH_TUNING: f64 = 2.9846;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobustScale {
    /// `2.9846 · 1.4826 · MAD` of the current residual, re-estimated every
    /// iteration.
    Mad,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fidelity {
    L2,
    MEstimator { scale: RobustScale },
}

impl Fidelity {
    pub fn name(&self) -> &'static str {
        match self {
            Fidelity::L2 => "l2",
            Fidelity::MEstimator { .. } => "m_estimator",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// `X⁰ = Hᵀy`.
    Adjoint,
    Given(Image),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub mu: f64,
    pub grouping: GroupingConfig,
    pub penalty: Penalty,
    pub weighting: WeightingMode,
    /// IRNN sweeps per group per outer iteration.
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub gd_steps_per_outer: usize,
    pub fidelity: Fidelity,
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.5,
            mu: 0.0025,
            grouping: GroupingConfig::default(),
            penalty: Penalty::new(PenaltyKind::Logarithm, 1.0, 1.0).expect("valid default"),
            weighting: WeightingMode::default(),
            inner_iters: 1,
            outer_iters: 80,
            gd_steps_per_outer: 20,
            fidelity: Fidelity::L2,
            init: Init::Adjoint,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        positive("epsilon", self.weighting.epsilon)?;
        if self.outer_iters == 0 || self.gd_steps_per_outer == 0 || self.inner_iters == 0 {
            return Err(Error::Config(
                "outer_iters, gd_steps and inner_iters must be at least 1".into(),
            ));
        }
        if let Fidelity::MEstimator {
            scale: RobustScale::Fixed(s),
        } = self.fidelity
        {
            if !(s > 0.0) {
                return Err(Error::Config(format!("M-estimator sigma must be positive, got {s}")));
            }
        }
        self.grouping.validate()
    }
}

/// Number of reference groups the lattice produces for an image size.
pub fn group_count(width: usize, height: usize, grouping: &GroupingConfig) -> usize {
    lattice_anchors(height, grouping.patch_side, grouping.stride).len()
        * lattice_anchors(width, grouping.patch_side, grouping.stride).len()
}

/// Group-level threshold scale `τ = λK / (μN)` with `K = n·c·B_s`.
pub fn tau_from_config(cfg: &SolverConfig, n_groups: usize, n_pixels: usize) -> f64 {
    let k = (n_groups * cfg.grouping.group_size * cfg.grouping.patch_len()) as f64;
    cfg.lambda * k / (cfg.mu * n_pixels as f64)
}

#[derive(Debug, Clone)]
pub struct XStep {
    pub x: Image,
    /// Objective before the first step and after every step.
    pub objective: Vec<f64>,
    /// `½‖√q (y − HX)‖²` at the returned iterate.
    pub data_fidelity: f64,
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

/// Steepest descent with exact line search on
/// `½‖√q (y − HX)‖² + (μ/2)‖X − Z − W‖²`; `q = None` means unit weights.
#[allow(clippy::too_many_arguments)]
fn descend(
    y: &[f64],
    op: &impl LinearOperator,
    x0: &Image,
    z: &Image,
    w: &Image,
    mu: f64,
    q: Option<&[f64]>,
    steps: usize,
) -> Result<XStep> {
    check_len(op.rows(), y.len())?;
    for img in [x0, z, w] {
        check_len(op.cols(), img.len())?;
    }
    if let Some(q) = q {
        check_len(op.rows(), q.len())?;
    }
    let weight = |i: usize, v: f64| match q {
        Some(q) => q[i] * v,
        None => v,
    };
    let anchor: Vec<f64> = z.data().iter().zip(w.data()).map(|(a, b)| a + b).collect();
    let mut x = x0.data().to_vec();
    // residual Hx − y, updated along the search direction
    let mut resid: Vec<f64> = op.apply(&x).iter().zip(y).map(|(a, b)| a - b).collect();
    let mut objective = Vec::with_capacity(steps + 1);
    let mut fit = 0.0;
    for step in 0..=steps {
        let weighted: Vec<f64> = resid.iter().enumerate().map(|(i, &r)| weight(i, r)).collect();
        fit = 0.5 * weighted.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>();
        let prox: f64 = x.iter().zip(&anchor).map(|(a, b)| (a - b) * (a - b)).sum();
        objective.push(fit + 0.5 * mu * prox);
        if step == steps {
            break;
        }
        let grad = op.apply_adjoint(&weighted);
        let d: Vec<f64> = grad
            .iter()
            .zip(x.iter().zip(&anchor))
            .map(|(g, (xi, ai))| g + mu * (xi - ai))
            .collect();
        let dd: f64 = d.iter().map(|v| v * v).sum();
        if dd == 0.0 {
            break;
        }
        let hd = op.apply(&d);
        let curvature: f64 = hd.iter().enumerate().map(|(i, &v)| weight(i, v) * v).sum::<f64>() + mu * dd;
        let eta = dd / curvature;
        x.iter_mut().zip(&d).for_each(|(xi, di)| *xi -= eta * di);
        resid.iter_mut().zip(&hd).for_each(|(ri, hi)| *ri -= eta * hi);
    }
    Ok(XStep {
        x: Image::new(x0.width(), x0.height(), x)?,
        objective,
        data_fidelity: fit,
    })
}

/// Least-squares X-step from the starting iterate `x0`.
pub fn x_step_standard(
    y: &[f64],
    op: &impl LinearOperator,
    x0: &Image,
    z: &Image,
    w: &Image,
    mu: f64,
    steps: usize,
) -> Result<XStep> {
    descend(y, op, x0, z, w, mu, None, steps)
}

/// Half-quadratic X-step with fixed weights `q`.
#[allow(clippy::too_many_arguments)]
pub fn x_step_robust(
    y: &[f64],
    op: &impl LinearOperator,
    x0: &Image,
    z: &Image,
    w: &Image,
    mu: f64,
    q: &[f64],
    steps: usize,
) -> Result<XStep> {
    if q.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
        return Err(Error::Contract("half-quadratic weights must lie in (0, 1]".into()));
    }
    descend(y, op, x0, z, w, mu, Some(q), steps)
}

/// Half-quadratic weights `q_i = exp(−r_i² / σ²)` with `r = y − Hx`,
/// floored at [`MIN_WEIGHT`].
pub fn q_update(y: &[f64], op: &impl LinearOperator, x: &Image, sigma: f64) -> Result<Vec<f64>> {
    check_len(op.rows(), y.len())?;
    check_len(op.cols(), x.len())?;
    if !(sigma > 0.0) {
        return Err(Error::Contract(format!("M-estimator sigma must be positive, got {sigma}")));
    }
    let hx = op.apply(x.data());
    Ok(y.iter()
        .zip(&hx)
        .map(|(a, b)| weight_of(a - b, sigma))
        .collect())
}

#[inline]
fn weight_of(r: f64, sigma: f64) -> f64 {
    (-(r * r) / (sigma * sigma)).exp().max(MIN_WEIGHT)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust residual scale `1.4826 · median(|r − median(r)|)`, never zero.
pub fn mad_scale(residual: &[f64]) -> f64 {
    let mut r = residual.to_vec();
    let center = median(&mut r);
    let mut dev: Vec<f64> = residual.iter().map(|v| (v - center).abs()).collect();
    (MAD_TO_SIGMA * median(&mut dev)).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone)]
pub struct ZStep {
    pub z: Image,
    /// `Σ_k Σ_i ρ(σ_i(Z_Gk))` over the denoised groups.
    pub penalty_sum: f64,
    pub groups: usize,
}

/// Groups `R`, shrinks every group's spectrum, and averages the groups back.
pub fn z_step(r: &Image, cfg: &SolverConfig, tau: f64) -> Result<ZStep> {
    let groups = build_groups(r, &cfg.grouping)?;
    let denoised = groups
        .par_iter()
        .map(|g| irnn_denoise_group(g, &cfg.penalty, tau, &cfg.weighting, cfg.inner_iters))
        .collect::<Result<Vec<_>>>()?;
    let penalty_sum = denoised
        .iter()
        .flat_map(|d| d.singular_values.iter())
        .map(|&s| cfg.penalty.rho_unchecked(s))
        .sum();
    let shrunk: Vec<_> = denoised.into_iter().map(|d| d.group).collect();
    let z = aggregate_groups(&shrunk, r.width(), r.height())?;
    Ok(ZStep {
        z,
        penalty_sum,
        groups: shrunk.len(),
    })
}

/// `W ← W − (X − Z)`.
pub fn multiplier_update(w: &Image, x: &Image, z: &Image) -> Result<Image> {
    if !w.same_shape(x) || !w.same_shape(z) {
        return Err(Error::Dimension {
            expected: w.len(),
            actual: if w.same_shape(x) { z.len() } else { x.len() },
        });
    }
    let data = w
        .data()
        .iter()
        .zip(x.data().iter().zip(z.data()))
        .map(|(wi, (xi, zi))| wi - (xi - zi))
        .collect();
    Image::new(w.width(), w.height(), data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub data_fidelity: f64,
    /// `λ Σ_k Σ_i ρ(σ_i(Z_Gk))`.
    pub reg_surrogate: f64,
    pub x_minus_z_norm: f64,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Image,
    pub z: Image,
    pub w: Image,
    /// Half-quadratic weights of the last iteration (robust mode only).
    pub q: Option<Vec<f64>>,
    pub iteration: usize,
    pub trace: Vec<TraceRecord>,
}

/// Runs the ADMM reconstruction for `outer_iters` iterations.
///
/// The returned iterate is unclamped; callers quantize at output time.
pub fn recover(
    y: &[f64],
    op: &(impl LinearOperator + ImageShape),
    cfg: &SolverConfig,
    ground_truth: Option<&Image>,
) -> Result<SolverState> {
    cfg.validate()?;
    check_len(op.rows(), y.len())?;
    let (width, height) = op.shape();
    check_len(op.cols(), width * height)?;
    if let Some(gt) = ground_truth {
        check_len(width * height, gt.len())?;
    }
    let x0 = match &cfg.init {
        Init::Adjoint => Image::new(width, height, op.apply_adjoint(y))?,
        Init::Given(img) => {
            check_len(width * height, img.len())?;
            img.clone()
        }
    };
    let tau = tau_from_config(cfg, group_count(width, height, &cfg.grouping), width * height);

    let mut state = SolverState {
        z: x0.clone(),
        x: x0,
        w: Image::zeros(width, height),
        q: None,
        iteration: 0,
        trace: Vec::with_capacity(cfg.outer_iters),
    };
    for t in 0..cfg.outer_iters {
        let xs = match cfg.fidelity {
            Fidelity::L2 => x_step_standard(
                y,
                op,
                &state.x,
                &state.z,
                &state.w,
                cfg.mu,
                cfg.gd_steps_per_outer,
            )?,
            Fidelity::MEstimator { scale } => {
                let sigma = match scale {
                    RobustScale::Fixed(s) => s,
                    RobustScale::Mad => {
                        let hx = op.apply(state.x.data());
                        let resid: Vec<f64> = y.iter().zip(&hx).map(|(a, b)| a - b).collect();
                        WELSCH_TUNING * mad_scale(&resid)
                    }
                };
                let q = q_update(y, op, &state.x, sigma)?;
                let xs = x_step_robust(
                    y,
                    op,
                    &state.x,
                    &state.z,
                    &state.w,
                    cfg.mu,
                    &q,
                    cfg.gd_steps_per_outer,
                )?;
                state.q = Some(q);
                xs
            }
        };
        state.x = xs.x;
        let r = multiplier_residual(&state.x, &state.w);
        let zs = z_step(&r, cfg, tau)?;
        state.z = zs.z;
        state.w = multiplier_update(&state.w, &state.x, &state.z)?;
        state.iteration = t + 1;
        let gap = state
            .x
            .data()
            .iter()
            .zip(state.z.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let quality = match ground_truth {
            Some(gt) => Some(psnr(&state.x, gt)?.psnr_db),
            None => None,
        };
        state.trace.push(TraceRecord {
            iter: t + 1,
            data_fidelity: xs.data_fidelity,
            reg_surrogate: cfg.lambda * zs.penalty_sum,
            x_minus_z_norm: gap,
            psnr: quality,
        });
    }
    Ok(state)
}

/// `R = X − W`.
fn multiplier_residual(x: &Image, w: &Image) -> Image {
    let data = x.data().iter().zip(w.data()).map(|(a, b)| a - b).collect();
    Image::new(x.width(), x.height(), data).expect("matching shapes")
}

/// Operators that know the image grid they act on.
pub trait ImageShape {
    /// `(width, height)`.
    fn shape(&self) -> (usize, usize);
}

impl ImageShape for crate::measurement::MeasurementOp {
    fn shape(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
}
