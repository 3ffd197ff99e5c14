//! The peg-in-hole MDP on top of the soft-wrist simulator.

use nalgebra::Vector4;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dynamics::{step_physics, BodyParams, ContactParams, PhysicsModel, WristParams, WristState};
use crate::error::EnvError;
use crate::geometry::{rotation_to_6d, HoleGeometry, PegGeometry, Pose, Rotation6D, ShapeKind, Vec3};
use crate::seed::Rng;

pub const OBS_DIM: usize = 6;
pub const ACTION_DIM: usize = 3;
pub const POSE_DIM: usize = 9;

/// Dimensions of the peg, hole and gripper (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Peg radius, half-side or circumradius.
    pub peg_size: f64,
    /// Face-to-face gap between peg and hole walls.
    pub clearance: f64,
    /// Grasp point to peg tip.
    pub peg_length: f64,
    /// Wrist pivot to grasp point.
    pub pivot_to_grasp: f64,
    pub hole_depth: f64,
    pub plate_extent: f64,
    pub hole_top_z: f64,
    /// Nominal hole axis in the x-y plane.
    pub hole_nominal: [f64; 2],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            peg_size: 0.020,
            clearance: 0.001,
            peg_length: 0.06,
            pivot_to_grasp: 0.05,
            hole_depth: 0.030,
            plate_extent: 0.2,
            hole_top_z: 0.0,
            hole_nominal: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub wrist: WristParams,
    pub contact: ContactParams,
    pub body: BodyParams,
    pub geometry: GeometryConfig,
    /// Policy period (s).
    pub control_period: f64,
    /// Physics substeps per control period.
    pub substeps: usize,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            wrist: WristParams::default(),
            contact: ContactParams::default(),
            body: BodyParams::default(),
            geometry: GeometryConfig::default(),
            control_period: 0.05,
            substeps: 25,
        }
    }
}

impl PhysicsConfig {
    pub fn substep_dt(&self) -> f64 {
        self.control_period / self.substeps as f64
    }
}

/// Offsets and scales applied to raw sensor and privileged quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationConstants {
    pub position_offset: [f64; 3],
    pub position_scale: f64,
    pub force_offset: [f64; 3],
    pub force_scale: f64,
    /// Applied to the peg tip position relative to the insertion target.
    pub peg_offset: [f64; 3],
    pub peg_scale: f64,
}

impl NormalizationConstants {
    pub fn normalize_position(&self, p: &Vec3) -> [f64; 3] {
        std::array::from_fn(|i| (p[i] - self.position_offset[i]) / self.position_scale)
    }

    pub fn normalize_force(&self, f: &Vec3) -> [f64; 3] {
        std::array::from_fn(|i| (f[i] - self.force_offset[i]) / self.force_scale)
    }

    pub fn normalize_peg(&self, p: &Vec3) -> [f64; 3] {
        std::array::from_fn(|i| (p[i] - self.peg_offset[i]) / self.peg_scale)
    }

    pub fn denormalize_peg(&self, p: &[f64]) -> Vec3 {
        Vec3::new(
            p[0] * self.peg_scale + self.peg_offset[0],
            p[1] * self.peg_scale + self.peg_offset[1],
            p[2] * self.peg_scale + self.peg_offset[2],
        )
    }
}

/// Normalization as configured; a `None` position offset resolves to the
/// nominal pre-insertion wrist position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationConfig {
    pub position_offset: Option<[f64; 3]>,
    pub position_scale: f64,
    pub force_offset: [f64; 3],
    pub force_scale: f64,
    pub peg_offset: [f64; 3],
    pub peg_scale: f64,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            position_offset: None,
            position_scale: 0.05,
            force_offset: [0.0; 3],
            force_scale: 20.0,
            peg_offset: [0.0; 3],
            peg_scale: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Denominator of the progress reward (m).
    pub progress_scale: f64,
    /// Diagonal of the distance weight matrix.
    pub distance_weights: [f64; 3],
    pub insertion_weight_aligned: f64,
    pub insertion_weight_unaligned: f64,
    pub success_reward: f64,
    pub failure_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            progress_scale: 0.001,
            distance_weights: [1.0, 1.0, 10.0],
            insertion_weight_aligned: 0.001,
            insertion_weight_unaligned: 1.0,
            success_reward: 1.0,
            failure_penalty: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationConfig {
    pub success_radius: f64,
    pub alignment_radius: f64,
    pub divergence_factor: f64,
    pub max_steps: usize,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self { success_radius: 0.005, alignment_radius: 0.007, divergence_factor: 1.2, max_steps: 200 }
    }
}

/// Reference point for the privileged peg position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrivilegedFrame {
    /// Relative to the actual (offset) insertion target.
    Hole,
    /// Relative to the insertion target of the un-offset hole.
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Displacement of a unit action per control period (m).
    pub action_scale: f64,
    /// Nominal start: peg tip this far from the hole axis along -y (m).
    pub start_lateral_offset: f64,
    /// Nominal start: peg tip this far above the plate (m).
    pub start_height: f64,
    /// Depth below the hole top of the insertion target point (m).
    pub insertion_depth: f64,
    /// Maximum distance the tracker reference may lead the measured base (m).
    pub max_reference_lead: f64,
    /// Half-widths of the allowed base workspace around the nominal start (m).
    pub workspace_half_extent: [f64; 2],
    /// Allowed base z range relative to the nominal start (m).
    pub workspace_z_range: [f64; 2],
    /// Include the alignment flag in the privileged state.
    pub include_alignment: bool,
    pub privileged_frame: PrivilegedFrame,
    /// Disabling contact turns the task into a free-space reach.
    pub contact_enabled: bool,
    pub normalization: NormalizationConfig,
    pub reward: RewardConfig,
    pub termination: TerminationConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            action_scale: 0.003,
            start_lateral_offset: 0.015,
            start_height: 0.002,
            insertion_depth: 0.025,
            max_reference_lead: 0.006,
            workspace_half_extent: [0.05, 0.05],
            workspace_z_range: [-0.04, 0.05],
            include_alignment: true,
            privileged_frame: PrivilegedFrame::Hole,
            contact_enabled: true,
            normalization: NormalizationConfig::default(),
            reward: RewardConfig::default(),
            termination: TerminationConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn privileged_dim(&self) -> usize {
        if self.include_alignment {
            POSE_DIM + 1
        } else {
            POSE_DIM
        }
    }

    pub fn policy_input_dim(&self) -> usize {
        OBS_DIM + self.privileged_dim()
    }
}

/// How the initial base perturbation is drawn when `init` is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartNoise {
    /// Gaussian on all three axes (training).
    Gaussian,
    /// Uniform lateral shift (evaluation start-shift protocol).
    UniformShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub angle: bool,
    pub hole: bool,
    pub stiffness: bool,
    pub init: bool,
    pub max_grasp_angle_deg: f64,
    pub max_hole_offset: f64,
    pub gain_range: [f64; 2],
    /// Tracker gain used when stiffness randomization is off.
    pub fixed_gain: f64,
    pub init_noise_std: f64,
    /// Half-width of the uniform evaluation start shift (m).
    pub start_shift: f64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            angle: true,
            hole: true,
            stiffness: true,
            init: true,
            max_grasp_angle_deg: 5.0,
            max_hole_offset: 0.010,
            gain_range: [1.0e3, 1.0e4],
            fixed_gain: 10f64.powf(3.5),
            init_noise_std: 0.001,
            start_shift: 0.010,
        }
    }
}

impl RandomizationConfig {
    pub fn flags(&self) -> RandomizationFlags {
        RandomizationFlags { angle: self.angle, hole: self.hole, stiffness: self.stiffness, init: self.init }
    }

    pub fn all_off(&self) -> Self {
        Self { angle: false, hole: false, stiffness: false, init: false, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomizationFlags {
    pub angle: bool,
    pub hole: bool,
    pub stiffness: bool,
    pub init: bool,
}

/// One episode's randomized parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// In-grasp peg tilt (rad).
    pub grasp_angle: f64,
    /// Direction in the x-y plane of the tilt axis (rad).
    pub grasp_axis_azimuth: f64,
    pub hole_offset: [f64; 2],
    pub tracking_gain: f64,
    pub init_noise: [f64; 3],
    pub peg_shape: ShapeKind,
    pub flags: RandomizationFlags,
}

impl Scenario {
    /// Fully nominal scenario for `shape` under `cfg`'s fixed values.
    pub fn nominal(cfg: &RandomizationConfig, shape: ShapeKind) -> Self {
        Self {
            grasp_angle: 0.0,
            grasp_axis_azimuth: 0.0,
            hole_offset: [0.0; 2],
            tracking_gain: cfg.fixed_gain,
            init_noise: [0.0; 3],
            peg_shape: shape,
            flags: cfg.all_off().flags(),
        }
    }

    /// Draw a scenario according to `cfg`'s flags and ranges.
    pub fn sample(cfg: &RandomizationConfig, noise: StartNoise, shape: ShapeKind, rng: &mut Rng) -> Self {
        let mut s = Self::nominal(cfg, shape);
        s.flags = cfg.flags();
        if cfg.angle {
            let max = cfg.max_grasp_angle_deg.to_radians();
            s.grasp_angle = rng.random_range(-max..=max);
            s.grasp_axis_azimuth = rng.random_range(0.0..2.0 * PI);
        }
        if cfg.hole {
            let m = cfg.max_hole_offset;
            s.hole_offset = [rng.random_range(-m..=m), rng.random_range(-m..=m)];
        }
        if cfg.stiffness {
            let (lo, hi) = (cfg.gain_range[0].ln(), cfg.gain_range[1].ln());
            s.tracking_gain = rng.random_range(lo..=hi).exp().clamp(cfg.gain_range[0], cfg.gain_range[1]);
        }
        if cfg.init {
            s.init_noise = match noise {
                StartNoise::Gaussian => {
                    let n = Normal::new(0.0, cfg.init_noise_std).expect("noise std must be finite and >= 0");
                    [n.sample(rng), n.sample(rng), n.sample(rng)]
                }
                StartNoise::UniformShift => {
                    let w = cfg.start_shift;
                    [rng.random_range(-w..=w), rng.random_range(-w..=w), 0.0]
                }
            };
        }
        s
    }

    pub fn validate(&self, cfg: &RandomizationConfig) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidScenario(msg));
        let finite = [self.grasp_angle, self.grasp_axis_azimuth, self.tracking_gain]
            .iter()
            .chain(self.hole_offset.iter())
            .chain(self.init_noise.iter())
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite scenario field".into());
        }
        if self.flags.angle && self.grasp_angle.abs() > cfg.max_grasp_angle_deg.to_radians() + 1e-12 {
            return bad(format!("grasp angle {:.4} rad exceeds ±{}°", self.grasp_angle, cfg.max_grasp_angle_deg));
        }
        if self.grasp_angle.abs() >= PI / 4.0 {
            return bad(format!("grasp angle {:.4} rad is not a plausible in-grasp tilt", self.grasp_angle));
        }
        let max_off = self.hole_offset.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if self.flags.hole {
            if max_off > cfg.max_hole_offset + 1e-12 {
                return bad(format!("hole offset {max_off} exceeds {}", cfg.max_hole_offset));
            }
        } else if max_off != 0.0 {
            return bad("hole offset set while hole randomization is off".into());
        }
        if self.flags.stiffness {
            let [lo, hi] = cfg.gain_range;
            if self.tracking_gain < lo || self.tracking_gain > hi {
                return bad(format!("tracking gain {} outside [{lo}, {hi}]", self.tracking_gain));
            }
        } else if self.tracking_gain != cfg.fixed_gain {
            return bad(format!(
                "tracking gain {} differs from the fixed gain {} while stiffness randomization is off",
                self.tracking_gain, cfg.fixed_gain
            ));
        }
        if !self.flags.init && self.init_noise.iter().any(|v| *v != 0.0) {
            return bad("initial noise set while init randomization is off".into());
        }
        Ok(())
    }
}

/// Clipped, normalized end-effector displacement command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action(pub [f64; 3]);

impl Action {
    pub fn zero() -> Self {
        Action([0.0; 3])
    }

    pub fn clipped(&self) -> Action {
        Action(self.0.map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) }))
    }

    fn as_vec(&self) -> Vec3 {
        Vec3::new(self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub p_wrist: [f64; 3],
    pub force: [f64; 3],
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [self.p_wrist[0], self.p_wrist[1], self.p_wrist[2], self.force[0], self.force[1], self.force[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivilegedState {
    /// Normalized peg tip position.
    pub p_peg: [f64; 3],
    pub rotation: Rotation6D,
    pub aligned: bool,
    pub include_alignment: bool,
}

impl PrivilegedState {
    /// Peg position followed by the 6D rotation.
    pub fn pose9(&self) -> [f64; POSE_DIM] {
        let mut out = [0.0; POSE_DIM];
        out[..3].copy_from_slice(&self.p_peg);
        out[3..].copy_from_slice(&self.rotation.0);
        out
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.pose9().to_vec();
        if self.include_alignment {
            v.push(if self.aligned { 1.0 } else { 0.0 });
        }
        v
    }
}

/// Concatenated teacher input `[observation, privileged]`.
pub fn policy_input(obs: &Observation, privileged: &[f64]) -> Vec<f64> {
    let mut v = obs.to_array().to_vec();
    v.extend_from_slice(privileged);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Continue,
    Success,
    FailDivergence,
    FailTimeout,
}

impl Termination {
    pub fn is_terminal(self) -> bool {
        self != Termination::Continue
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Termination::FailDivergence | Termination::FailTimeout)
    }

    pub fn name(self) -> &'static str {
        match self {
            Termination::Continue => "continue",
            Termination::Success => "success",
            Termination::FailDivergence => "fail_divergence",
            Termination::FailTimeout => "fail_timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub d: f64,
    pub e: Vec3,
    pub aligned: bool,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub privileged: PrivilegedState,
    pub reward: f64,
    pub terminated: bool,
    pub success: bool,
    pub info: StepInfo,
}

impl RewardConfig {
    pub fn weighted_distance(&self, e: &Vec3) -> f64 {
        let w = self.distance_weights;
        (w[0] * e.x * e.x + w[1] * e.y * e.y + w[2] * e.z * e.z).sqrt()
    }

    /// `r_p - r_i - r_a + r_s`, without the failure penalty.
    pub fn reward(&self, d_prev: f64, d: f64, a: &Action, a_prev: &Action, aligned: bool, success: bool) -> f64 {
        let progress = (d_prev - d) / self.progress_scale;
        let w_i = if aligned { self.insertion_weight_aligned } else { self.insertion_weight_unaligned };
        let insertion = w_i * a.0[2] * a.0[2];
        let smooth = (a.as_vec() - a_prev.as_vec()).norm_squared();
        let success = if success { self.success_reward } else { 0.0 };
        progress - insertion - smooth + success
    }
}

impl TerminationConfig {
    pub fn aligned(&self, e: &Vec3) -> bool {
        (e.x * e.x + e.y * e.y).sqrt() < self.alignment_radius
    }

    pub fn check(&self, d: f64, d0: f64, e: &Vec3, step: usize) -> Termination {
        if e.norm() < self.success_radius {
            Termination::Success
        } else if d > self.divergence_factor * d0 {
            Termination::FailDivergence
        } else if step >= self.max_steps {
            Termination::FailTimeout
        } else {
            Termination::Continue
        }
    }
}

/// `sqrt(eᵀ W e)` with `W = diag(1, 1, 10)`.
pub fn weighted_distance(e: &Vec3) -> f64 {
    RewardConfig::default().weighted_distance(e)
}

/// Lateral peg error strictly below 7 mm.
pub fn alignment_state(e: &Vec3) -> bool {
    TerminationConfig::default().aligned(e)
}

pub fn compute_reward(d_prev: f64, d: f64, a: &Action, a_prev: &Action, aligned: bool, success: bool) -> f64 {
    RewardConfig::default().reward(d_prev, d, a, a_prev, aligned, success)
}

pub fn check_termination(d: f64, d0: f64, e: &Vec3, step: usize) -> Termination {
    TerminationConfig::default().check(d, d0, e, step)
}

pub fn normalize_observation(p_wrist_raw: &Vec3, force_raw: &Vec3, norm: &NormalizationConstants) -> Observation {
    Observation { p_wrist: norm.normalize_position(p_wrist_raw), force: norm.normalize_force(force_raw) }
}

/// Peg geometry for `shape` at the configured size.
pub fn peg_geometry(geom: &GeometryConfig, shape: ShapeKind) -> PegGeometry {
    PegGeometry::new(shape.with_size(geom.peg_size), geom.peg_length)
}

pub fn hole_geometry(geom: &GeometryConfig, shape: ShapeKind, offset: [f64; 2]) -> HoleGeometry {
    HoleGeometry {
        cross_section: shape.with_size(geom.peg_size + geom.clearance / shape.inradius_ratio()),
        center: [geom.hole_nominal[0] + offset[0], geom.hole_nominal[1] + offset[1]],
        top_z: geom.hole_top_z,
        depth: geom.hole_depth,
        plate_extent: geom.plate_extent,
    }
}

/// Nominal (noise-free, untilted) start of the peg tip.
pub fn nominal_tip_start(physics: &PhysicsConfig, env: &EnvConfig) -> Vec3 {
    let g = &physics.geometry;
    Vec3::new(g.hole_nominal[0], g.hole_nominal[1] - env.start_lateral_offset, g.hole_top_z + env.start_height)
}

/// Nominal base position that places the peg tip at its nominal start with
/// the wrist sagging under gravity.
pub fn nominal_base_start(physics: &PhysicsConfig, env: &EnvConfig) -> Vec3 {
    let g = &physics.geometry;
    let sag = physics.body.distal_mass * physics.body.gravity / physics.wrist.k_z;
    let tip_below_base = g.pivot_to_grasp + g.peg_length + sag;
    nominal_tip_start(physics, env) + Vec3::new(0.0, 0.0, tip_below_base)
}

/// Normalization constants with automatic offsets resolved.
pub fn resolve_normalization(physics: &PhysicsConfig, env: &EnvConfig) -> NormalizationConstants {
    let n = &env.normalization;
    let base = nominal_base_start(physics, env);
    NormalizationConstants {
        position_offset: n.position_offset.unwrap_or([base.x, base.y, base.z]),
        position_scale: n.position_scale,
        force_offset: n.force_offset,
        force_scale: n.force_scale,
        peg_offset: n.peg_offset,
        peg_scale: n.peg_scale,
    }
}

#[derive(Debug, Clone)]
struct Episode {
    model: PhysicsModel,
    state: WristState,
    target: Vec3,
    /// Insertion target of the un-offset hole; privileged peg positions are
    /// measured from here.
    /// Origin of the privileged peg position.
    peg_origin: Vec3,
    d0: f64,
    d_prev: f64,
    a_prev: Action,
    steps: usize,
    done: bool,
}

/// One peg-in-hole environment instance.
#[derive(Debug, Clone)]
pub struct PegInHoleEnv {
    physics: PhysicsConfig,
    env: EnvConfig,
    randomization: RandomizationConfig,
    norm: NormalizationConstants,
    base_start: Vec3,
    episode: Option<Episode>,
}

impl PegInHoleEnv {
    pub fn new(physics: PhysicsConfig, env: EnvConfig, randomization: RandomizationConfig) -> Self {
        let norm = resolve_normalization(&physics, &env);
        let base_start = nominal_base_start(&physics, &env);
        Self { physics, env, randomization, norm, base_start, episode: None }
    }

    pub fn with_normalization(mut self, norm: NormalizationConstants) -> Self {
        self.norm = norm;
        self
    }

    pub fn normalization(&self) -> &NormalizationConstants {
        &self.norm
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env
    }

    pub fn physics_config(&self) -> &PhysicsConfig {
        &self.physics
    }

    pub fn randomization(&self) -> &RandomizationConfig {
        &self.randomization
    }

    pub fn privileged_dim(&self) -> usize {
        self.env.privileged_dim()
    }

    fn episode(&self) -> Result<&Episode, EnvError> {
        self.episode.as_ref().ok_or(EnvError::NotReset)
    }

    pub fn model(&self) -> Option<&PhysicsModel> {
        self.episode.as_ref().map(|e| &e.model)
    }

    pub fn state(&self) -> Option<&WristState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn hole_target(&self) -> Option<Vec3> {
        self.episode.as_ref().map(|e| e.target)
    }

    pub fn peg_tip(&self) -> Option<Vec3> {
        self.episode.as_ref().map(|e| e.model.tip(&e.state))
    }

    /// Peg tip minus insertion target.
    pub fn error(&self) -> Option<Vec3> {
        self.episode.as_ref().map(|e| e.model.tip(&e.state) - e.target)
    }

    pub fn steps(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    pub fn initial_distance(&self) -> Option<f64> {
        self.episode.as_ref().map(|e| e.d0)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    pub fn reset(&mut self, scenario: &Scenario) -> Result<(Observation, PrivilegedState), EnvError> {
        scenario.validate(&self.randomization)?;
        let g = &self.physics.geometry;
        let hole = hole_geometry(g, scenario.peg_shape, scenario.hole_offset);
        let peg = peg_geometry(g, scenario.peg_shape);
        let axis = Vec3::new(scenario.grasp_axis_azimuth.cos(), scenario.grasp_axis_azimuth.sin(), 0.0);
        let mut grasp = Pose::from_axis_angle(axis, scenario.grasp_angle);
        grasp.position = Vec3::new(0.0, 0.0, -g.pivot_to_grasp);
        let mut model = PhysicsModel::new(
            self.physics.wrist,
            self.physics.contact,
            self.physics.body,
            scenario.tracking_gain,
            hole,
            peg,
            grasp,
        )
        .map_err(EnvError::Sim)?;
        model.contact_enabled = self.env.contact_enabled;

        let sag = model.gravity_sag();
        let noise = Vec3::new(scenario.init_noise[0], scenario.init_noise[1], scenario.init_noise[2]);
        let tip_start = nominal_tip_start(&self.physics, &self.env) + noise;
        let base = tip_start - model.tip_offset(&sag);
        let mut state = WristState::at_rest(base);
        state.q = sag;
        state.qdot = Vector4::zeros();

        let target = hole.axis_point(self.env.insertion_depth);
        let peg_origin = match self.env.privileged_frame {
            PrivilegedFrame::Hole => target,
            PrivilegedFrame::Nominal => hole_geometry(g, scenario.peg_shape, [0.0, 0.0]).axis_point(self.env.insertion_depth),
        };
        let e = model.tip(&state) - target;
        let d0 = self.env.reward.weighted_distance(&e);
        let reading = model.force_reading(&state);
        let obs = normalize_observation(&state.base_pos, &reading, &self.norm);
        let privileged = self.privileged(&model, &state, &e, &peg_origin);
        self.episode =
            Some(Episode { model, state, target, peg_origin, d0, d_prev: d0, a_prev: Action::zero(), steps: 0, done: false });
        Ok((obs, privileged))
    }

    fn privileged(&self, model: &PhysicsModel, state: &WristState, e: &Vec3, origin: &Vec3) -> PrivilegedState {
        let pose = model.peg_pose(state);
        PrivilegedState {
            p_peg: self.norm.normalize_peg(&(model.tip(state) - origin)),
            rotation: rotation_to_6d(&pose.rotation),
            aligned: self.env.termination.aligned(e),
            include_alignment: self.env.include_alignment,
        }
    }

    /// Current privileged state without stepping.
    pub fn current_privileged(&self) -> Result<PrivilegedState, EnvError> {
        let ep = self.episode()?;
        let e = ep.model.tip(&ep.state) - ep.target;
        Ok(self.privileged(&ep.model, &ep.state, &e, &ep.peg_origin))
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        let ep = self.episode.as_ref().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::EpisodeOver);
        }
        let a = action.clipped();
        let state = ep.state;
        let mut target = state.base_ref + a.as_vec() * self.env.action_scale;
        let lead = self.env.max_reference_lead;
        let ws = self.env.workspace_half_extent;
        let zr = self.env.workspace_z_range;
        for i in 0..3 {
            target[i] = target[i].clamp(state.base_pos[i] - lead, state.base_pos[i] + lead);
            let (lo, hi) = if i < 2 { (-ws[i], ws[i]) } else { (zr[0], zr[1]) };
            target[i] = target[i].clamp(self.base_start[i] + lo, self.base_start[i] + hi);
        }
        let (next, reading) =
            step_physics(&state, &target, &ep.model, self.physics.control_period, self.physics.substeps)?;

        let e = ep.model.tip(&next) - ep.target;
        let d = self.env.reward.weighted_distance(&e);
        let aligned = self.env.termination.aligned(&e);
        let steps = ep.steps + 1;
        let termination = self.env.termination.check(d, ep.d0, &e, steps);
        let success = termination == Termination::Success;
        let mut reward = self.env.reward.reward(ep.d_prev, d, &a, &ep.a_prev, aligned, success);
        if termination.is_failure() {
            reward -= self.env.reward.failure_penalty;
        }
        let observation = normalize_observation(&next.base_pos, &reading, &self.norm);
        let privileged = self.privileged(&ep.model, &next, &e, &ep.peg_origin);

        let ep = self.episode.as_mut().expect("episode checked above");
        ep.state = next;
        ep.d_prev = d;
        ep.a_prev = a;
        ep.steps = steps;
        ep.done = termination.is_terminal();
        Ok(StepResult {
            observation,
            privileged,
            reward,
            terminated: termination.is_terminal(),
            success,
            info: StepInfo { d, e, aligned, termination },
        })
    }
}

/// One row of an exported episode trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub episode: usize,
    pub t: usize,
    pub observation: [f64; OBS_DIM],
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub privileged: Vec<f64>,
    pub termination: Termination,
}

impl TraceRow {
    pub fn csv_header(privileged_dim: usize) -> String {
        let mut cols: Vec<String> = ["episode", "t", "obs_px", "obs_py", "obs_pz", "obs_fx", "obs_fy", "obs_fz"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend(["act_x", "act_y", "act_z", "reward"].iter().map(|s| s.to_string()));
        let priv_names = ["peg_x", "peg_y", "peg_z", "rot_0", "rot_1", "rot_2", "rot_3", "rot_4", "rot_5", "align"];
        cols.extend(priv_names[..privileged_dim].iter().map(|s| s.to_string()));
        cols.push("termination".into());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut vals = vec![self.episode.to_string(), self.t.to_string()];
        vals.extend(self.observation.iter().map(|v| v.to_string()));
        vals.extend(self.action.iter().map(|v| v.to_string()));
        vals.push(self.reward.to_string());
        vals.extend(self.privileged.iter().map(|v| v.to_string()));
        vals.push(self.termination.name().to_string());
        vals.join(",")
    }
}
