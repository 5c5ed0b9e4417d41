//! Experiment configuration: one TOML file, validated before anything runs.
//!
//! ```toml
//! model = "bond"            # bond | site
//! b = 2
//! r = 0.0                   # single point, or
//! r_grid = [-3, -2, -1, 0]  # a grid (takes precedence)
//! n = 6
//! n_grid = [100, 1000]
//! beta = 0.3                # optional; otherwise the exact-inversion schedule at r
//! replicas = 1000
//! seed = 1
//! m_max = 4
//! depth = 64
//! schedule = "exact-inversion"   # or "series"
//!
//! [disorder]
//! family = "two_point"      # gaussian | rademacher | uniform_centered | two_point
//! p = 0.3
//!
//! [tolerances]
//! r_tol = 1e-13
//!
//! [output]
//! format = "csv"            # csv | bin
//!
//! [converge]
//! x = "a.csv"               # two sample files, or omit both for the probe
//! y = "b.csv"
//! moment = 3
//! pool_size = 100000
//! pool_r0 = -30.0
//! pool_steps = 30
//! ```

use std::path::PathBuf;

use diamond::disorder::DisorderSpec;
use diamond::recursion::M_MAX_CAP;
use diamond::scaling::ScheduleMode;
use diamond::Model;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_b")]
    pub b: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_disorder")]
    pub disorder: DisorderSpec,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_depth")]
    pub depth: u64,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleMode,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_r_tol")]
    pub r_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { r_tol: default_r_tol() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: SampleFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<PathBuf>,
    #[serde(default = "default_moment")]
    pub moment: u32,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_pool_r0")]
    pub pool_r0: f64,
    #[serde(default = "default_pool_steps")]
    pub pool_steps: u32,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            x: None,
            y: None,
            moment: default_moment(),
            pool_size: default_pool_size(),
            pool_r0: default_pool_r0(),
            pool_steps: default_pool_steps(),
        }
    }
}

fn default_model() -> Model {
    Model::Bond
}
fn default_b() -> u32 {
    2
}
fn default_disorder() -> DisorderSpec {
    DisorderSpec::Gaussian
}
fn default_replicas() -> usize {
    1000
}
fn default_m_max() -> usize {
    4
}
fn default_depth() -> u64 {
    64
}
fn default_schedule() -> ScheduleMode {
    ScheduleMode::ExactInversion
}
fn default_r_tol() -> f64 {
    diamond::recursion::R_TOL
}
fn default_moment() -> u32 {
    3
}
fn default_pool_size() -> usize {
    100_000
}
fn default_pool_r0() -> f64 {
    -30.0
}
fn default_pool_steps() -> u32 {
    30
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config takes every default")
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.b < 2 || self.b > 64 {
            return Err(format!("b must lie in 2..=64, got {}", self.b));
        }
        self.disorder.validate().map_err(|e| e.to_string())?;
        if !(2..=M_MAX_CAP).contains(&self.m_max) {
            return Err(format!("m_max must lie in 2..={M_MAX_CAP}, got {}", self.m_max));
        }
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be finite"))
            }
        };
        if let Some(r) = self.r {
            finite(r, "r")?;
        }
        for &r in self.r_grid.iter().flatten() {
            finite(r, "r_grid entries")?;
        }
        if let Some(beta) = self.beta {
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(format!("beta must be finite and >= 0, got {beta}"));
            }
        }
        if !(self.tolerances.r_tol > 0.0 && self.tolerances.r_tol < 1.0) {
            return Err("tolerances.r_tol must lie in (0, 1)".into());
        }
        if self.depth == 0 {
            return Err("depth must be positive".into());
        }
        let c = &self.converge;
        if c.x.is_some() != c.y.is_some() {
            return Err("converge.x and converge.y must be given together".into());
        }
        if c.moment == 0 {
            return Err("converge.moment must be >= 1".into());
        }
        finite(c.pool_r0, "converge.pool_r0")?;
        Ok(())
    }

    pub fn r_points(&self) -> Vec<f64> {
        match (&self.r_grid, self.r) {
            (Some(g), _) => g.clone(),
            (None, Some(r)) => vec![r],
            (None, None) => vec![],
        }
    }

    pub fn r_or_zero(&self) -> f64 {
        self.r.unwrap_or(0.0)
    }

    pub fn n_points(&self) -> Vec<u64> {
        match (&self.n_grid, self.n) {
            (Some(g), _) => g.clone(),
            (None, Some(n)) => vec![n],
            (None, None) => vec![],
        }
    }
}
