//! Nonconvex surrogate penalties for singular values and their
//! super-gradients.
//!
//! Every penalty is concave and nondecreasing on `[0, ∞)` with `ρ(0) = 0`,
//! so its super-gradient is nonnegative and nonincreasing. That ordering is
//! what lets the reweighted nuclear norm step use the closed-form weighted
//! singular value thresholding.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyKind {
    Lp,
    Scad,
    Logarithm,
    Mcp,
    Etp,
    CappedL1,
    Geman,
    Laplace,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 8] = [
        PenaltyKind::Lp,
        PenaltyKind::Scad,
        PenaltyKind::Logarithm,
        PenaltyKind::Mcp,
        PenaltyKind::Etp,
        PenaltyKind::CappedL1,
        PenaltyKind::Geman,
        PenaltyKind::Laplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::Lp => "lp",
            PenaltyKind::Scad => "scad",
            PenaltyKind::Logarithm => "log",
            PenaltyKind::Mcp => "mcp",
            PenaltyKind::Etp => "etp",
            PenaltyKind::CappedL1 => "capped_l1",
            PenaltyKind::Geman => "geman",
            PenaltyKind::Laplace => "laplace",
        }
    }

    /// Comma-separated list of accepted names.
    pub fn valid_names() -> String {
        Self::ALL.map(|k| k.name()).join(", ")
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown penalty kind '{s}'; valid kinds: {}",
                    Self::valid_names()
                ))
            })
    }
}

/// A penalty family member with its scale `lambda` and shape parameter
/// (`p` for Lp, `γ` otherwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    kind: PenaltyKind,
    lambda: f64,
    shape: f64,
}

impl Penalty {
    /// `lambda = 0` is accepted and yields the zero penalty.
    pub fn new(kind: PenaltyKind, lambda: f64, shape: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("penalty lambda must be >= 0, got {lambda}")));
        }
        let shape_ok = shape.is_finite()
            && match kind {
                PenaltyKind::Lp => shape > 0.0 && shape < 1.0,
                PenaltyKind::Scad => shape > 2.0,
                _ => shape > 0.0,
            };
        if !shape_ok {
            let need = match kind {
                PenaltyKind::Lp => "0 < p < 1",
                PenaltyKind::Scad => "gamma > 2",
                _ => "gamma > 0",
            };
            return Err(Error::Config(format!(
                "{kind} penalty needs {need}, got shape {shape}"
            )));
        }
        Ok(Penalty {
            kind,
            lambda,
            shape,
        })
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    fn check(theta: f64) -> Result<()> {
        if theta >= 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("penalty argument must be >= 0, got {theta}")))
        }
    }

    /// Penalty value `ρ(θ)` for `θ ≥ 0`.
    pub fn rho(&self, theta: f64) -> Result<f64> {
        Self::check(theta)?;
        Ok(self.rho_unchecked(theta))
    }

    /// Super-gradient `∂ρ(θ)` for `θ ≥ 0`. Lp returns `+∞` at the origin; the
    /// set-valued Capped-L1 breakpoint returns `λ/2`.
    pub fn supergradient(&self, theta: f64) -> Result<f64> {
        Self::check(theta)?;
        Ok(self.supergradient_unchecked(theta))
    }

    pub(crate) fn rho_unchecked(&self, t: f64) -> f64 {
        let (l, g) = (self.lambda, self.shape);
        match self.kind {
            PenaltyKind::Lp => l * t.powf(g),
            PenaltyKind::Scad => {
                if t <= l {
                    l * t
                } else if t <= g * l {
                    (-t * t + 2.0 * g * l * t - l * l) / (2.0 * (g - 1.0))
                } else {
                    l * l * (g + 1.0) / 2.0
                }
            }
            PenaltyKind::Logarithm => l / g.ln_1p() * (g * t).ln_1p(),
            PenaltyKind::Mcp => {
                if t < g * l {
                    l * t - t * t / (2.0 * g)
                } else {
                    g * l * l / 2.0
                }
            }
            PenaltyKind::Etp => l / (-(-g).exp_m1()) * (-(-g * t).exp_m1()),
            PenaltyKind::CappedL1 => {
                if t < g {
                    l * t
                } else {
                    l * g
                }
            }
            PenaltyKind::Geman => l * t / (t + g),
            PenaltyKind::Laplace => -l * (-t / g).exp_m1(),
        }
    }

    pub(crate) fn supergradient_unchecked(&self, t: f64) -> f64 {
        let (l, g) = (self.lambda, self.shape);
        if l == 0.0 {
            return 0.0;
        }
        match self.kind {
            PenaltyKind::Lp => {
                if t == 0.0 {
                    f64::INFINITY
                } else {
                    l * g * t.powf(g - 1.0)
                }
            }
            PenaltyKind::Scad => {
                if t <= l {
                    l
                } else if t <= g * l {
                    (g * l - t) / (g - 1.0)
                } else {
                    0.0
                }
            }
            PenaltyKind::Logarithm => g * l / ((g * t + 1.0) * g.ln_1p()),
            PenaltyKind::Mcp => {
                if t < g * l {
                    l - t / g
                } else {
                    0.0
                }
            }
            PenaltyKind::Etp => l * g / (-(-g).exp_m1()) * (-g * t).exp(),
            PenaltyKind::CappedL1 => {
                if t < g {
                    l
                } else if t == g {
                    l / 2.0
                } else {
                    0.0
                }
            }
            PenaltyKind::Geman => l * g / ((t + g) * (t + g)),
            PenaltyKind::Laplace => l / g * (-t / g).exp(),
        }
    }

    /// Points where the formula switches branches (non-smooth points).
    pub fn breakpoints(&self) -> Vec<f64> {
        let (l, g) = (self.lambda, self.shape);
        match self.kind {
            PenaltyKind::Scad => vec![l, g * l],
            PenaltyKind::Mcp => vec![g * l],
            PenaltyKind::CappedL1 => vec![g],
            PenaltyKind::Lp => vec![0.0],
            _ => vec![],
        }
    }
}
