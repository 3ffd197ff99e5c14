//! Experiment configuration: one JSON document covering every stage.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::distill::DistillConfig;
use crate::env::{EnvConfig, PhysicsConfig, RandomizationConfig};
use crate::error::{io_err, Error, Result};
use crate::evalsuite::EvalConfig;
use crate::geometry::ShapeKind;
use crate::rl::train::RlConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Training shape.
    pub peg_shape: ShapeKind,
    pub physics: PhysicsConfig,
    pub env: EnvConfig,
    pub randomization: RandomizationConfig,
    pub rl: RlConfig,
    pub distill: DistillConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            workers: 8,
            output_dir: PathBuf::from("runs"),
            peg_shape: ShapeKind::Circle,
            physics: PhysicsConfig::default(),
            env: EnvConfig::default(),
            randomization: RandomizationConfig::default(),
            rl: RlConfig::default(),
            distill: DistillConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Teacher-training ablations: one randomization or the alignment channel
/// switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    All,
    FixedAngle,
    FixedHole,
    FixedStiffness,
    NoAlignment,
}

impl Ablation {
    pub const ROWS: [Ablation; 5] =
        [Ablation::All, Ablation::FixedAngle, Ablation::FixedHole, Ablation::FixedStiffness, Ablation::NoAlignment];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::All => "all",
            Ablation::FixedAngle => "fixed-angle",
            Ablation::FixedHole => "fixed-hole",
            Ablation::FixedStiffness => "fixed-stiffness",
            Ablation::NoAlignment => "no-alignment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ROWS.into_iter().find(|a| a.name() == s)
    }

    /// Training-time config for this ablation.
    pub fn apply(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        match self {
            Ablation::All => {}
            Ablation::FixedAngle => c.randomization.angle = false,
            Ablation::FixedHole => c.randomization.hole = false,
            Ablation::FixedStiffness => c.randomization.stiffness = false,
            Ablation::NoAlignment => c.env.include_alignment = false,
        }
        c
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::Config(format!("config not found: {}", path.display())))
            }
            Err(e) => return Err(io_err(path)(e)),
        };
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::write(path, self.to_json() + "\n").map_err(io_err(path))
    }

    /// Write `config.resolved.json` into `dir`.
    pub fn snapshot(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join("config.resolved.json");
        self.save(&p)?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        let p = &self.physics;
        p.wrist.validate().map_err(|e| Error::Config(e.to_string()))?;
        p.contact.validate().map_err(|e| Error::Config(e.to_string()))?;
        p.body.validate().map_err(|e| Error::Config(e.to_string()))?;
        let g = &p.geometry;
        let lengths = [g.peg_size, g.clearance, g.peg_length, g.pivot_to_grasp, g.hole_depth, g.plate_extent];
        if lengths.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("geometry dimensions must be positive".into());
        }
        if !(p.control_period > 0.0) || p.substeps == 0 {
            return bad("control_period must be > 0 and substeps >= 1".into());
        }
        let e = &self.env;
        if !(e.action_scale > 0.0) || !(e.max_reference_lead > 0.0) || e.insertion_depth > g.hole_depth {
            return bad("env action_scale and max_reference_lead must be > 0; insertion_depth within the hole".into());
        }
        let n = &e.normalization;
        if !(n.position_scale > 0.0 && n.force_scale > 0.0 && n.peg_scale > 0.0) {
            return bad("normalization scales must be > 0".into());
        }
        let t = &e.termination;
        if !(t.success_radius > 0.0) || !(t.alignment_radius > 0.0) || !(t.divergence_factor > 1.0) || t.max_steps == 0 {
            return bad("termination thresholds must be positive, divergence_factor > 1".into());
        }
        let r = &self.randomization;
        if !(r.gain_range[0] > 0.0 && r.gain_range[1] >= r.gain_range[0]) || !(r.fixed_gain > 0.0) {
            return bad("tracking gains must be positive with gain_range[0] <= gain_range[1]".into());
        }
        if r.max_grasp_angle_deg < 0.0 || r.max_hole_offset < 0.0 || r.init_noise_std < 0.0 || r.start_shift < 0.0 {
            return bad("randomization ranges must be >= 0".into());
        }
        self.rl.validate().map_err(Error::Config)?;
        self.distill.validate().map_err(Error::Config)?;
        self.eval.validate().map_err(Error::Config)?;
        Ok(())
    }

    /// Reduced problem used for the scaled teacher experiment: grasp ±2°,
    /// hole ±5 mm, fixed tracking gain.
    pub fn desk_scale() -> Self {
        let mut c = Self::default();
        c.randomization.max_grasp_angle_deg = 2.0;
        c.randomization.max_hole_offset = 0.005;
        c.randomization.stiffness = false;
        c.rl.iterations = 1500;
        c.distill.iterations = 1000;
        c.eval.n_trials = 20;
        c
    }

    /// Contact-free reach toy: the peg is driven from a perturbed start to a
    /// fixed free-space target.
    pub fn reach_toy() -> Self {
        let mut c = Self::default();
        c.env.contact_enabled = false;
        c.randomization = c.randomization.all_off();
        c.randomization.init = true;
        c.randomization.init_noise_std = 0.005;
        c.rl.iterations = 100;
        c
    }
}
