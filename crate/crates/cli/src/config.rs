//! Flat `key = value` experiment configuration.
//!
//! A config file holds one pair per line; `#` starts a comment. Command-line
//! overrides (`--key value`) are applied on top, and dashes in keys are read
//! as underscores.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gsr_core::{
    Error, Fidelity, GroupingConfig, Init, InitWeights, NoiseModel, NoiseSpec, OperatorKind, Penalty, PenaltyKind,
    Result, RobustScale, SolverConfig, WeightScheme, WeightingMode,
};

/// Every key the CLI understands.
pub const KEYS: &[&str] = &[
    "input",
    "measurements",
    "output",
    "trace",
    "ground_truth",
    "seed",
    "jobs",
    "op",
    "subrate",
    "noise",
    "noise_sigma",
    "noise_xi",
    "noise_kappa",
    "snr_db",
    "lambda",
    "mu",
    "penalty",
    "penalty_lambda",
    "shape",
    "weighting",
    "epsilon",
    "init_weights",
    "inner_iters",
    "outer_iters",
    "gd_steps",
    "fidelity",
    "sigma_m",
    "init",
    "patch_side",
    "stride",
    "window",
    "group_size",
    "tau",
    "subrates",
    "snrs",
    "penalties",
    "weightings",
    "lambdas",
    "timing",
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_error(format!("line {}: expected key=value, got '{line}'", n + 1)))?;
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize(key);
        if !KEYS.contains(&key.as_str()) {
            return Err(config_error(format!("unknown key '{key}'; valid keys: {}", KEYS.join(", "))));
        }
        self.values.insert(key, value.to_string());
        Ok(())
    }

    /// Applies `--key value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| config_error(format!("expected --key, got '{flag}'")))?;
            if let Some((k, v)) = key.split_once('=') {
                self.set(k, v)?;
                continue;
            }
            let value = it
                .next()
                .ok_or_else(|| config_error(format!("--{key} needs a value")))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| config_error(format!("key '{key}' has invalid value '{v}'"))),
        }
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| config_error(format!("missing required key '{key}'")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.get(key)
            .map(PathBuf::from)
            .ok_or_else(|| config_error(format!("missing required key '{key}'")))
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    pub fn seed(&self) -> Result<u64> {
        self.or("seed", 0)
    }

    pub fn operator_kind(&self) -> Result<OperatorKind> {
        self.get("op").unwrap_or("dense").parse()
    }

    pub fn noise(&self) -> Result<NoiseSpec> {
        let sigma = self.or("noise_sigma", 1.0)?;
        let model = match self.get("noise").unwrap_or("none") {
            "none" => NoiseModel::None,
            "gaussian" => NoiseModel::Gaussian { sigma },
            "mixture" => NoiseModel::GaussianMixture {
                xi: self.or("noise_xi", 0.1)?,
                kappa: self.or("noise_kappa", 100.0)?,
                sigma,
            },
            other => {
                return Err(config_error(format!(
                    "unknown noise model '{other}'; valid models: none, gaussian, mixture"
                )))
            }
        };
        let spec = NoiseSpec {
            model,
            target_snr_db: self.parsed("snr_db")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn grouping(&self) -> Result<GroupingConfig> {
        let d = GroupingConfig::default();
        let g = GroupingConfig {
            patch_side: self.or("patch_side", d.patch_side)?,
            stride: self.or("stride", d.stride)?,
            window_side: self.or("window", d.window_side)?,
            group_size: self.or("group_size", d.group_size)?,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn penalty(&self) -> Result<Penalty> {
        let kind: PenaltyKind = self.get("penalty").unwrap_or("log").parse()?;
        Penalty::new(kind, self.or("penalty_lambda", 1.0)?, self.or("shape", default_shape(kind))?)
    }

    pub fn weighting(&self) -> Result<WeightingMode> {
        let scheme = parse_weighting(self.get("weighting").unwrap_or("combined"))?;
        let init = match self.get("init_weights").unwrap_or("observation") {
            "observation" => InitWeights::Observation,
            "zero" => InitWeights::Zero,
            other => {
                return Err(config_error(format!(
                    "unknown init_weights '{other}'; valid values: observation, zero"
                )))
            }
        };
        Ok(WeightingMode {
            scheme,
            epsilon: self.or("epsilon", WeightingMode::default().epsilon)?,
            init,
        })
    }

    pub fn fidelity(&self) -> Result<Fidelity> {
        match self.get("fidelity").unwrap_or("l2") {
            "l2" => Ok(Fidelity::L2),
            "m_estimator" => {
                let scale = match self.get("sigma_m").unwrap_or("mad") {
                    "mad" => RobustScale::Mad,
                    v => RobustScale::Fixed(
                        v.parse()
                            .map_err(|_| config_error(format!("sigma_m must be 'mad' or a number, got '{v}'")))?,
                    ),
                };
                Ok(Fidelity::MEstimator { scale })
            }
            other => Err(config_error(format!(
                "unknown fidelity '{other}'; valid values: l2, m_estimator"
            ))),
        }
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        let init = match self.get("init").unwrap_or("adjoint") {
            "adjoint" => Init::Adjoint,
            path => Init::Given(gsr_core::read_pgm(path)?),
        };
        let cfg = SolverConfig {
            lambda: self.or("lambda", d.lambda)?,
            mu: self.or("mu", d.mu)?,
            grouping: self.grouping()?,
            penalty: self.penalty()?,
            weighting: self.weighting()?,
            inner_iters: self.or("inner_iters", d.inner_iters)?,
            outer_iters: self.or("outer_iters", d.outer_iters)?,
            gd_steps_per_outer: self.or("gd_steps", d.gd_steps_per_outer)?,
            fidelity: self.fidelity()?,
            init,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Shape used when `shape` is not set: SCAD needs `γ > 2` and Lp needs
/// `p < 1`.
pub fn default_shape(kind: PenaltyKind) -> f64 {
    match kind {
        PenaltyKind::Scad => 3.7,
        PenaltyKind::Lp => 0.5,
        _ => 1.0,
    }
}

pub fn parse_weighting(s: &str) -> Result<WeightScheme> {
    match s {
        "supergradient" => Ok(WeightScheme::Supergradient),
        "combined" => Ok(WeightScheme::Combined),
        "none" => Ok(WeightScheme::Uniform),
        other => Err(config_error(format!(
            "unknown weighting '{other}'; valid values: supergradient, combined, none"
        ))),
    }
}

pub fn weighting_name(s: WeightScheme) -> &'static str {
    match s {
        WeightScheme::Supergradient => "supergradient",
        WeightScheme::Combined => "combined",
        WeightScheme::Uniform => "none",
    }
}
