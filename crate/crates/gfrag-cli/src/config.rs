//! Experiment configuration. Every field has a default, so `{}` is a valid
//! config that runs the full-scale suites.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use gfrag::Spec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// MAP spec (JSON) replacing the built-in M2 fixture in the M2 suites.
    pub spec_path: Option<PathBuf>,
    /// Index for the spine and empirical-measure suites (negative).
    pub alpha: f64,
    /// Index for the temporal decay variant (positive).
    pub alpha_decay: f64,
    /// Index for the entrance-law suite (positive).
    pub alpha_entrance: f64,
    pub seeds: Seeds,
    pub controls: Controls,
    /// Subcommands run by `all`, in order.
    pub suites: Vec<String>,
    pub output_dir: PathBuf,
    pub replicas: Replicas,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
}

/// Truncation of the genealogical tree suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Controls {
    pub max_generation: usize,
    pub min_size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Replicas {
    pub laplace_paths: usize,
    pub wald_paths: usize,
    pub dufresne_samples: usize,
    pub functional_samples: usize,
    pub stopped_paths: usize,
    pub trees: usize,
    pub tail_trees: usize,
    pub spine_samples: usize,
    pub rebuild_roots: usize,
    pub decay_trees: usize,
    pub empirical_trees: usize,
    pub entrance_samples: usize,
    pub cascade_pool: usize,
    pub cascade_bank: usize,
    pub tail_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub z: f64,
    pub ks_p: f64,
    pub eigen_residual: f64,
    pub duality: f64,
    pub tilt: f64,
    pub admissible_residual: f64,
    pub two_exponent: f64,
    pub dufresne_rel: f64,
    pub hill_rel: f64,
    pub degeneracy_ratio: f64,
    pub flagged_weight: f64,
    pub decay_rel: f64,
    pub empirical_mae_rel: f64,
    pub marginal_rel: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            spec_path: None,
            alpha: -0.5,
            alpha_decay: 6.0,
            alpha_entrance: 1.0,
            seeds: Seeds::default(),
            controls: Controls::default(),
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            output_dir: PathBuf::from("results"),
            replicas: Replicas::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self { master: 20_240_601 }
    }
}

impl Default for Controls {
    fn default() -> Self {
        Self { max_generation: 9, min_size: 1e-3 }
    }
}

impl Default for Replicas {
    fn default() -> Self {
        Self {
            laplace_paths: 100_000,
            wald_paths: 100_000,
            dufresne_samples: 1_000_000,
            functional_samples: 100_000,
            stopped_paths: 100_000,
            trees: 10_000,
            tail_trees: 100_000,
            spine_samples: 10_000,
            rebuild_roots: 10_000,
            decay_trees: 20_000,
            empirical_trees: 2_000,
            entrance_samples: 20_000,
            cascade_pool: 10_000,
            cascade_bank: 20_000,
            tail_samples: 100_000,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            z: 3.0,
            ks_p: 0.01,
            eigen_residual: 1e-10,
            duality: 1e-12,
            tilt: 1e-9,
            admissible_residual: 1e-9,
            two_exponent: 1e-8,
            dufresne_rel: 0.02,
            hill_rel: 0.15,
            degeneracy_ratio: 0.1,
            flagged_weight: 0.01,
            decay_rel: 0.2,
            empirical_mae_rel: 0.05,
            marginal_rel: 0.15,
        }
    }
}

/// Subcommands in the order `all` runs them.
pub const SUITES: [&str; 9] = ["spectral", "simulate-map", "tails", "exponents", "simulate-gf", "spine-check", "empirical", "entrance", "renewal"];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.spec_path {
            if !p.exists() {
                return Err(CliError::Config(format!("spec file {} does not exist", p.display())));
            }
        }
        for s in &self.suites {
            if !SUITES.contains(&s.as_str()) {
                return Err(CliError::Config(format!("unknown suite {s}")));
            }
        }
        if !(self.alpha < 0.0) || !(self.alpha_decay > 0.0) || !(self.alpha_entrance > 0.0) {
            return Err(CliError::Config("alpha must be negative, alpha_decay and alpha_entrance positive".into()));
        }
        if !(self.controls.min_size > 0.0) || self.controls.max_generation < 2 {
            return Err(CliError::Config("controls need min_size > 0 and max_generation >= 2".into()));
        }
        let r = &self.replicas;
        let min = [
            ("laplace_paths", r.laplace_paths, 1000),
            ("wald_paths", r.wald_paths, 1000),
            ("dufresne_samples", r.dufresne_samples, 1000),
            ("functional_samples", r.functional_samples, 10_000),
            ("stopped_paths", r.stopped_paths, 1000),
            ("trees", r.trees, 100),
            ("tail_trees", r.tail_trees, 10_000),
            ("spine_samples", r.spine_samples, 100),
            ("rebuild_roots", r.rebuild_roots, 100),
            ("decay_trees", r.decay_trees, 100),
            ("empirical_trees", r.empirical_trees, 100),
            ("entrance_samples", r.entrance_samples, 1000),
            ("cascade_pool", r.cascade_pool, 1000),
            ("cascade_bank", r.cascade_bank, 1000),
            ("tail_samples", r.tail_samples, 10_000),
        ];
        for (name, got, need) in min {
            if got < need {
                return Err(CliError::Config(format!("replicas.{name} = {got} is below the suite minimum {need}")));
            }
        }
        Ok(())
    }

    /// Spec used by the M2 suites.
    pub fn m2_spec(&self) -> Result<Spec> {
        match &self.spec_path {
            None => Ok(gfrag::fixtures::m2()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let s: Spec = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                gfrag::map::validate_spec(&s)?;
                Ok(s)
            }
        }
    }
}
