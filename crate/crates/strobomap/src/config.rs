//! JSON run configuration for the CLI: one file describes a model, a
//! fixed-point search, and optional continuation / transit / cap sections.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::models::{Model, ModelConfig, PhaseState};
use crate::porbit::{BCP_L1_FIXED_POINT, DEFAULT_CORRECTOR_TOL, DEFAULT_SEGMENTS, ER3BP_L1_FIXED_POINT};
use crate::transit::BoundarySide;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: ModelConfig,
    /// Section phase of the stroboscopic map, radians.
    #[serde(default)]
    pub theta0: f64,
    /// Fixed-point seed (x, y, px, py); defaults to the built-in L1 seed for
    /// the chosen model.
    pub initial_guess: Option<[f64; 4]>,
    #[serde(default)]
    pub corrector: CorrectorConfig,
    pub continuation: Option<ContinuationConfig>,
    pub transit: Option<TransitConfig>,
    pub cap: Option<CapConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub segments: usize,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        Self { tol: DEFAULT_CORRECTOR_TOL, max_iter: 25, segments: DEFAULT_SEGMENTS }
    }
}

/// Natural-parameter continuation from the unperturbed circular problem: each
/// schedule entry eps in (0, 1] scales the perturbation (mu0 for the
/// bicircular model, e for the elliptic one) relative to its configured full
/// value.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationConfig {
    pub schedule: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitConfig {
    /// Effective-Hamiltonian level h of the sample set.
    pub h: f64,
    /// Offset c of the bounding lines p1 - q1 = +-c.
    pub c: f64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_side")]
    pub side: String,
    /// Section phases at which to anchor the local frame; defaults to the
    /// run's theta0.
    pub phases: Option<Vec<f64>>,
    #[serde(default = "default_max_periods")]
    pub max_periods: f64,
    #[serde(default = "default_half_width")]
    pub window_half_width: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapConfig {
    pub h: f64,
    pub c: f64,
    #[serde(default = "default_n_saddle")]
    pub n_saddle: usize,
    #[serde(default = "default_n_angle")]
    pub n_angle: usize,
    #[serde(default = "default_side")]
    pub side: String,
    /// Map iterates to apply when tracing the cap forward.
    #[serde(default = "default_max_iterates")]
    pub max_iterates: i64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub samples_per_period: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { samples_per_period: 512 }
    }
}

fn default_n_samples() -> usize {
    50
}
fn default_side() -> String {
    "n1".into()
}
fn default_max_periods() -> f64 {
    6.0
}
fn default_half_width() -> f64 {
    0.15
}
fn default_n_saddle() -> usize {
    16
}
fn default_n_angle() -> usize {
    32
}
fn default_max_iterates() -> i64 {
    8
}

pub fn parse_side(s: &str) -> Result<BoundarySide> {
    match s {
        "n1" => Ok(BoundarySide::N1),
        "n2" => Ok(BoundarySide::N2),
        other => Err(Error::Validation(format!("unknown boundary side '{other}' (expected n1|n2)"))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.system.build()?;
        if self.corrector.tol <= 0.0 || self.corrector.max_iter == 0 || self.corrector.segments == 0 {
            return Err(Error::Validation("corrector tol, max_iter, and segments must be positive".into()));
        }
        if let Some(c) = &self.continuation {
            if c.schedule.is_empty() {
                return Err(Error::Validation("continuation schedule is empty".into()));
            }
            if c.schedule.iter().any(|&e| !(0.0..=1.0).contains(&e) || e == 0.0) {
                return Err(Error::Validation("continuation schedule entries must lie in (0, 1]".into()));
            }
        }
        if let Some(t) = &self.transit {
            parse_side(&t.side)?;
            if t.h <= 0.0 || t.c <= 0.0 || t.n_samples == 0 {
                return Err(Error::Validation("transit h, c, and n_samples must be positive".into()));
            }
        }
        if let Some(c) = &self.cap {
            parse_side(&c.side)?;
            if c.h <= 0.0 || c.c <= 0.0 || c.n_saddle == 0 || c.n_angle == 0 {
                return Err(Error::Validation("cap h, c, and grid sizes must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        self.system.build()
    }

    pub fn guess(&self, model: &Model) -> Result<PhaseState> {
        let raw = match (self.initial_guess, model) {
            (Some(g), _) => g,
            (None, Model::Bcp(_)) => BCP_L1_FIXED_POINT,
            (None, Model::Er3bp(_)) => ER3BP_L1_FIXED_POINT,
            (None, Model::Cr3bp(_)) => {
                return Err(Error::Validation(
                    "the circular model needs an explicit initial_guess (it has no built-in seed)".into(),
                ))
            }
        };
        Ok(PhaseState::new(raw[0], raw[1], raw[2], raw[3]))
    }

    /// Factory over the continuation parameter eps in (0, 1].
    pub fn scaled_model(&self, eps: f64) -> Result<Model> {
        let full = self.system.build()?;
        Ok(match full {
            Model::Bcp(mut p) => {
                p.mu0 *= eps;
                Model::Bcp(p)
            }
            Model::Er3bp(mut p) => {
                p.e *= eps;
                Model::Er3bp(p)
            }
            Model::Cr3bp(_) => {
                return Err(Error::Validation("continuation requires a perturbed model (bcp or er3bp)".into()))
            }
        })
    }
}
