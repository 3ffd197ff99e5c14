//! Batch evaluation: success rates per condition, ablation grids and
//! per-seed summary statistics.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::config::{Ablation, ExperimentConfig};
use crate::distill::{HistoryBuffer, StudentController};
use crate::env::{
    policy_input, Action, NormalizationConstants, Observation, PegInHoleEnv, PrivilegedState, RandomizationConfig,
    Scenario, StartNoise, Termination, TraceRow,
};
use crate::error::{io_err, Error, Result};
use crate::geometry::ShapeKind;
use crate::nn::{ActorCritic, Checkpoint, MlpPolicy, Tcn, TcnPolicy};
use crate::seed;

/// Closed-loop decision rule driven by `run_episode`.
pub trait Controller {
    /// Called before the first step of every episode.
    fn reset(&mut self) {}
    fn act(&mut self, obs: &Observation, privileged: &PrivilegedState, env: &PegInHoleEnv) -> Result<Action>;
}

/// Privileged teacher, deterministic mean action.
pub struct TeacherController<'a>(pub &'a MlpPolicy);

impl Controller for TeacherController<'_> {
    fn act(&mut self, obs: &Observation, privileged: &PrivilegedState, _env: &PegInHoleEnv) -> Result<Action> {
        let m = self.0.mean(&policy_input(obs, &privileged.to_vec()))?;
        Ok(Action([m[0], m[1], m[2]]))
    }
}

/// History-only TCN policy.
pub struct TcnBaselineController<'a> {
    pub policy: &'a TcnPolicy,
    pub history: HistoryBuffer,
}

impl<'a> TcnBaselineController<'a> {
    pub fn new(policy: &'a TcnPolicy) -> Self {
        Self { policy, history: HistoryBuffer::new(policy.seq_len()) }
    }
}

impl Controller for TcnBaselineController<'_> {
    fn reset(&mut self) {
        self.history.reset();
    }

    fn act(&mut self, obs: &Observation, _privileged: &PrivilegedState, _env: &PegInHoleEnv) -> Result<Action> {
        self.history.push(obs);
        let m = self.policy.mean(&self.history.flat())?;
        Ok(Action([m[0], m[1], m[2]]))
    }
}

/// Scripted policy reading the true peg error: servo laterally onto the hole
/// axis, descend once within `descend_radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedOracle {
    /// Lateral error mapped to a full-scale action (m).
    pub lateral_scale: f64,
    pub descend_radius: f64,
}

impl Default for ScriptedOracle {
    fn default() -> Self {
        Self { lateral_scale: 0.003, descend_radius: 0.003 }
    }
}

impl Controller for ScriptedOracle {
    fn act(&mut self, _obs: &Observation, _privileged: &PrivilegedState, env: &PegInHoleEnv) -> Result<Action> {
        let e = env.error().ok_or(crate::error::EnvError::NotReset)?;
        let ax = (-e.x / self.lateral_scale).clamp(-1.0, 1.0);
        let ay = (-e.y / self.lateral_scale).clamp(-1.0, 1.0);
        let lateral = e.x.hypot(e.y);
        let az = if lateral < self.descend_radius { -1.0 } else { 0.0 };
        Ok(Action([ax, ay, az]))
    }
}

/// Always commands zero displacement.
pub struct ZeroController;

impl Controller for ZeroController {
    fn act(&mut self, _: &Observation, _: &PrivilegedState, _: &PegInHoleEnv) -> Result<Action> {
        Ok(Action::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub termination: Termination,
    pub steps: usize,
    pub episode_return: f64,
}

/// Run one episode to termination, optionally recording a trace.
pub fn run_episode(
    env: &mut PegInHoleEnv,
    scenario: &Scenario,
    ctl: &mut dyn Controller,
    mut trace: Option<(&mut Vec<TraceRow>, usize)>,
) -> Result<EpisodeOutcome> {
    let (mut obs, mut privileged) = env.reset(scenario)?;
    ctl.reset();
    let mut ret = 0.0;
    loop {
        let a = ctl.act(&obs, &privileged, env)?;
        let t = env.steps();
        let r = env.step(&a)?;
        ret += r.reward;
        if let Some((rows, episode)) = trace.as_mut() {
            rows.push(TraceRow {
                episode: *episode,
                t,
                observation: obs.to_array(),
                action: a.clipped().0,
                reward: r.reward,
                privileged: privileged.to_vec(),
                termination: r.info.termination,
            });
        }
        obs = r.observation;
        privileged = r.privileged;
        if r.terminated {
            return Ok(EpisodeOutcome {
                success: r.success,
                termination: r.info.termination,
                steps: env.steps(),
                episode_return: ret,
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Teacher,
    Student,
    StudentNoAlign,
    TcnBaseline,
    Oracle,
    Zero,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Teacher => "teacher",
            PolicyKind::Student => "student",
            PolicyKind::StudentNoAlign => "student_no_align",
            PolicyKind::TcnBaseline => "tcn_baseline",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Zero => "zero",
        }
    }
}

/// A loaded policy ready for evaluation.
#[derive(Debug, Clone)]
pub enum Agent {
    Teacher(MlpPolicy),
    Student { encoder: Tcn, teacher: MlpPolicy, threshold: bool },
    TcnBaseline(TcnPolicy),
    Oracle(ScriptedOracle),
    Zero,
}

impl Agent {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Agent::Teacher(_) => PolicyKind::Teacher,
            Agent::Student { encoder, .. } => {
                if encoder.config().output_dim() > crate::env::POSE_DIM {
                    PolicyKind::Student
                } else {
                    PolicyKind::StudentNoAlign
                }
            }
            Agent::TcnBaseline(_) => PolicyKind::TcnBaseline,
            Agent::Oracle(_) => PolicyKind::Oracle,
            Agent::Zero => PolicyKind::Zero,
        }
    }

    pub fn controller(&self) -> Box<dyn Controller + '_> {
        match self {
            Agent::Teacher(p) => Box::new(TeacherController(p)),
            Agent::Student { encoder, teacher, threshold } => Box::new(StudentController::new(encoder, teacher, *threshold)),
            Agent::TcnBaseline(p) => Box::new(TcnBaselineController::new(p)),
            Agent::Oracle(o) => Box::new(*o),
            Agent::Zero => Box::new(ZeroController),
        }
    }

    /// Verify the network widths against the privileged layout implied by
    /// `include_alignment`.
    pub fn check_widths(&self, include_alignment: bool, history_len: usize) -> Result<()> {
        let privileged = crate::env::POSE_DIM + usize::from(include_alignment);
        let want_in = crate::env::OBS_DIM + privileged;
        let mismatch = |m: String| Err(Error::CheckpointMismatch(m));
        match self {
            Agent::Teacher(p) if p.input_dim() != want_in => {
                mismatch(format!("teacher input width {} but the condition needs {want_in}", p.input_dim()))
            }
            Agent::Student { encoder, teacher, .. } => {
                if teacher.input_dim() != want_in {
                    return mismatch(format!("teacher input width {} but the condition needs {want_in}", teacher.input_dim()));
                }
                if encoder.config().output_dim() != privileged {
                    return mismatch(format!(
                        "encoder output width {} but the condition needs {privileged}",
                        encoder.config().output_dim()
                    ));
                }
                if encoder.config().seq_len != history_len {
                    return mismatch(format!("encoder history {} but config uses {history_len}", encoder.config().seq_len));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Build from checkpoints: a teacher (MLP) or TCN baseline policy plus an
    /// optional encoder.
    pub fn from_checkpoints(policy: &Checkpoint, encoder: Option<&Checkpoint>, threshold: bool) -> Result<Self> {
        use crate::nn::NetworkSpec;
        let wrong = |m: &str| Error::CheckpointMismatch(m.to_string());
        match (&policy.network, encoder) {
            (NetworkSpec::MlpPolicy { .. }, None) => Ok(Agent::Teacher(policy.mlp_policy()?)),
            (NetworkSpec::MlpPolicy { .. }, Some(e)) => {
                let enc = e.encoder().map_err(|err| Error::CheckpointMismatch(format!("encoder: {err}")))?;
                Ok(Agent::Student { encoder: enc, teacher: policy.mlp_policy()?, threshold })
            }
            (NetworkSpec::TcnPolicy { .. }, None) => Ok(Agent::TcnBaseline(policy.tcn_policy()?)),
            (NetworkSpec::TcnPolicy { .. }, Some(_)) => Err(wrong("a TCN baseline policy does not take an encoder")),
            (NetworkSpec::TcnEncoder { .. }, _) => Err(wrong("--policy must be a policy checkpoint, got an encoder")),
        }
    }
}

/// One evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCondition {
    pub name: String,
    pub peg_shape: ShapeKind,
    /// Fixed grasp tilt (degrees); `None` keeps the randomized angle.
    pub misalignment_deg: Option<f64>,
    /// Uniform lateral start shift instead of Gaussian start noise.
    pub start_shift: bool,
    pub n_trials: usize,
    pub policy: PolicyKind,
    /// Alignment channel in the privileged layout.
    pub alignment: bool,
    /// Replaces the experiment's randomization for this condition.
    pub randomization: Option<RandomizationConfig>,
}

impl Default for EvalCondition {
    fn default() -> Self {
        Self {
            name: "default".into(),
            peg_shape: ShapeKind::Circle,
            misalignment_deg: None,
            start_shift: false,
            n_trials: 100,
            policy: PolicyKind::Teacher,
            alignment: true,
            randomization: None,
        }
    }
}

impl EvalCondition {
    pub fn include_alignment(&self) -> bool {
        self.alignment && self.policy != PolicyKind::StudentNoAlign
    }

    fn randomization(&self, base: &RandomizationConfig) -> RandomizationConfig {
        let mut r = self.randomization.unwrap_or(*base);
        if self.misalignment_deg.is_some() {
            r.angle = false;
        }
        if self.start_shift {
            r.init = true;
        }
        r
    }

    /// Scenario of trial `trial`; a pure function of its arguments.
    pub fn scenario(
        &self,
        base: &RandomizationConfig,
        azimuth: f64,
        base_seed: u64,
        index: usize,
        trial: usize,
    ) -> Scenario {
        let r = self.randomization(base);
        let mut rng = seed::stream(seed::derive_seed(base_seed, "eval-condition", index as u64), "eval-trial", trial as u64);
        let noise = if self.start_shift { StartNoise::UniformShift } else { StartNoise::Gaussian };
        let mut s = Scenario::sample(&r, noise, self.peg_shape, &mut rng);
        if let Some(deg) = self.misalignment_deg {
            s.grasp_angle = deg.to_radians();
            s.grasp_axis_azimuth = azimuth;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_trials: usize,
    pub shapes: Vec<ShapeKind>,
    /// Fixed grasp tilts of the shape grid (degrees).
    pub misalignments_deg: Vec<f64>,
    /// Horizontal direction of the tilt axis for fixed misalignments
    /// (degrees from +x).
    pub misalignment_axis_deg: f64,
    pub start_shift: bool,
    /// Explicit conditions; empty means the shape × misalignment grid.
    pub conditions: Vec<EvalCondition>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_trials: 100,
            shapes: ShapeKind::ALL.to_vec(),
            misalignments_deg: vec![-5.0, 0.0, 5.0],
            misalignment_axis_deg: 0.0,
            start_shift: true,
            conditions: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.n_trials == 0 || self.conditions.iter().any(|c| c.n_trials == 0) {
            return Err("eval n_trials must be >= 1".into());
        }
        if self.conditions.is_empty() && (self.shapes.is_empty() || self.misalignments_deg.is_empty()) {
            return Err("eval grid needs at least one shape and one misalignment".into());
        }
        if self.misalignments_deg.iter().any(|d| !d.is_finite() || d.abs() >= 45.0) {
            return Err("eval misalignments must be finite and below 45 degrees".into());
        }
        Ok(())
    }

    /// Shape × misalignment grid for `policy`.
    pub fn grid(&self, policy: PolicyKind, alignment: bool) -> Vec<EvalCondition> {
        let mut out = Vec::new();
        for &shape in &self.shapes {
            for &deg in &self.misalignments_deg {
                out.push(EvalCondition {
                    name: format!("{shape}/{deg:+}deg"),
                    peg_shape: shape,
                    misalignment_deg: Some(deg),
                    start_shift: self.start_shift,
                    n_trials: self.n_trials,
                    policy,
                    alignment,
                    randomization: None,
                });
            }
        }
        out
    }

    /// Explicit conditions if given, else the grid.
    pub fn conditions_for(&self, policy: PolicyKind, alignment: bool) -> Vec<EvalCondition> {
        if self.conditions.is_empty() {
            self.grid(policy, alignment)
        } else {
            self.conditions.iter().cloned().map(|c| EvalCondition { policy, ..c }).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub index: usize,
    pub name: String,
    pub policy: PolicyKind,
    pub peg_shape: ShapeKind,
    pub misalignment_deg: Option<f64>,
    pub start_shift: bool,
    pub seed: u64,
    pub n_trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_episode_len: f64,
    pub mean_return: f64,
    /// Per-trial success in trial order.
    pub trial_success: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ConditionResult>,
}

pub const REPORT_CSV_HEADER: &str =
    "condition,policy,peg_shape,misalignment_deg,start_shift,seed,n_trials,successes,success_rate,mean_episode_len,mean_return";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.name,
                r.policy.name(),
                r.peg_shape,
                r.misalignment_deg.map_or(String::new(), |d| d.to_string()),
                r.start_shift,
                r.seed,
                r.n_trials,
                r.successes,
                r.success_rate,
                r.mean_episode_len,
                r.mean_return
            ));
        }
        s
    }

    pub fn merge(reports: &[EvalReport]) -> EvalReport {
        EvalReport { rows: reports.iter().flat_map(|r| r.rows.iter().cloned()).collect() }
    }

    /// Write `eval.csv` and `eval.json` (rows plus per-condition quartiles)
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let csv = dir.join("eval.csv");
        std::fs::write(&csv, self.to_csv()).map_err(io_err(&csv))?;
        let summary = EvalSummary { quartile_method: QUARTILE_METHOD.into(), rows: self.rows.clone(), seeds: summarize_seeds(self) };
        let json = dir.join("eval.json");
        let text = serde_json::to_string_pretty(&summary).expect("report serializes");
        std::fs::write(&json, text + "\n").map_err(io_err(&json))
    }
}

/// Evaluation context shared by every condition.
pub struct EvalSetup<'a> {
    pub cfg: &'a ExperimentConfig,
    pub agent: &'a Agent,
    /// Normalization stored with the policy; `None` uses the config's.
    pub normalization: Option<NormalizationConstants>,
    pub base_seed: u64,
}

fn run_trials(setup: &EvalSetup, cond: &EvalCondition, index: usize, trials: std::ops::Range<usize>) -> Result<Vec<EpisodeOutcome>> {
    let cfg = setup.cfg;
    let mut env_cfg = cfg.env;
    env_cfg.include_alignment = cond.include_alignment();
    let base_rand = cfg.randomization;
    let cond_rand = cond.randomization(&base_rand);
    let mut env = PegInHoleEnv::new(cfg.physics, env_cfg, cond_rand);
    if let Some(n) = setup.normalization {
        env = env.with_normalization(n);
    }
    let azimuth = cfg.eval.misalignment_axis_deg.to_radians();
    let mut ctl = setup.agent.controller();
    trials
        .map(|t| {
            let sc = cond.scenario(&base_rand, azimuth, setup.base_seed, index, t);
            run_episode(&mut env, &sc, ctl.as_mut(), None)
        })
        .collect()
}

/// Evaluate one condition; trials fan out over `cfg.workers` threads and
/// are reduced in trial order.
pub fn run_condition(setup: &EvalSetup, cond: &EvalCondition, index: usize) -> Result<ConditionResult> {
    if cond.n_trials == 0 {
        return Err(Error::Config(format!("condition {} has n_trials = 0", cond.name)));
    }
    setup.agent.check_widths(cond.include_alignment(), setup.cfg.distill.history_len)?;
    let workers = setup.cfg.workers.clamp(1, cond.n_trials);
    let outcomes: Vec<EpisodeOutcome> = if workers == 1 {
        run_trials(setup, cond, index, 0..cond.n_trials)?
    } else {
        let per = cond.n_trials.div_ceil(workers);
        let parts: Vec<Result<Vec<EpisodeOutcome>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let r = (w * per).min(cond.n_trials)..((w + 1) * per).min(cond.n_trials);
                    s.spawn(move || run_trials(setup, cond, index, r))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("eval worker panicked")).collect()
        });
        let mut all = Vec::with_capacity(cond.n_trials);
        for p in parts {
            all.extend(p?);
        }
        all
    };
    let n = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.success).count();
    Ok(ConditionResult {
        index,
        name: cond.name.clone(),
        policy: cond.policy,
        peg_shape: cond.peg_shape,
        misalignment_deg: cond.misalignment_deg,
        start_shift: cond.start_shift,
        seed: setup.base_seed,
        n_trials: n,
        successes,
        success_rate: successes as f64 / n as f64,
        mean_episode_len: outcomes.iter().map(|o| o.steps as f64).sum::<f64>() / n as f64,
        mean_return: outcomes.iter().map(|o| o.episode_return).sum::<f64>() / n as f64,
        trial_success: outcomes.iter().map(|o| o.success).collect(),
    })
}

pub fn run_eval(setup: &EvalSetup, conditions: &[EvalCondition]) -> Result<EvalReport> {
    let rows = conditions.iter().enumerate().map(|(i, c)| run_condition(setup, c, i)).collect::<Result<_>>()?;
    Ok(EvalReport { rows })
}

/// Evaluate one policy per ablation on the fully randomized environment.
/// Rows come out ablation-major, one per shape.
pub fn run_randomization_ablation(
    cfg: &ExperimentConfig,
    agents: &[(Ablation, Agent, Option<NormalizationConstants>)],
    shapes: &[ShapeKind],
    n_trials: usize,
) -> Result<EvalReport> {
    let mut full = cfg.randomization;
    full.angle = true;
    full.hole = true;
    full.stiffness = true;
    full.init = true;
    let mut rows = Vec::new();
    for (ablation, agent, norm) in agents {
        let setup = EvalSetup { cfg, agent, normalization: *norm, base_seed: cfg.seed };
        for (si, &shape) in shapes.iter().enumerate() {
            let cond = EvalCondition {
                name: format!("{}/{shape}", ablation.name()),
                peg_shape: shape,
                n_trials,
                policy: agent.kind(),
                alignment: *ablation != Ablation::NoAlignment,
                randomization: Some(full),
                ..EvalCondition::default()
            };
            // the same trial seeds for every ablation row
            rows.push(run_condition(&setup, &cond, si)?);
        }
    }
    Ok(EvalReport { rows })
}

pub const QUARTILE_METHOD: &str = "linear interpolation between order statistics at p·(n−1)";

/// Quantile with linear interpolation between closest ranks.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub condition: String,
    pub values: Vec<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub quartile_method: String,
    pub rows: Vec<ConditionResult>,
    pub seeds: Vec<SeedSummary>,
}

pub fn summarize_values(condition: &str, values: &[f64]) -> SeedSummary {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    SeedSummary {
        condition: condition.to_string(),
        values: values.to_vec(),
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[s.len() - 1],
    }
}

/// Per-condition quartiles over seeds, conditions grouped by name in
/// first-seen order.
pub fn summarize_seeds(report: &EvalReport) -> Vec<SeedSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !names.contains(&r.name.as_str()) {
            names.push(&r.name);
        }
    }
    names
        .into_iter()
        .map(|n| {
            let v: Vec<f64> = report.rows.iter().filter(|r| r.name == n).map(|r| r.success_rate).collect();
            summarize_values(n, &v)
        })
        .collect()
}

/// Shape × misalignment success counts, one row per shape.
pub fn table_one(report: &EvalReport) -> String {
    let mut degs: Vec<f64> = Vec::new();
    let mut shapes: Vec<ShapeKind> = Vec::new();
    for r in &report.rows {
        if let Some(d) = r.misalignment_deg {
            if !degs.contains(&d) {
                degs.push(d);
            }
        }
        if !shapes.contains(&r.peg_shape) {
            shapes.push(r.peg_shape);
        }
    }
    let mut s = String::from("peg_shape");
    for d in &degs {
        s.push_str(&format!(",{d:+}deg"));
    }
    s.push_str(",trials\n");
    for shape in shapes {
        s.push_str(shape.name());
        let mut trials = 0;
        for d in &degs {
            let cell = report.rows.iter().find(|r| r.peg_shape == shape && r.misalignment_deg == Some(*d));
            match cell {
                Some(r) => {
                    s.push_str(&format!(",{}", r.successes));
                    trials = r.n_trials;
                }
                None => s.push(','),
            }
        }
        s.push_str(&format!(",{trials}\n"));
    }
    s
}

pub fn write_table_one(report: &EvalReport, path: &Path) -> Result<()> {
    std::fs::write(path, table_one(report)).map_err(io_err(path))
}

/// Run `n_episodes` with `agent` and return env trace rows.
pub fn record_rollouts(
    cfg: &ExperimentConfig,
    agent: &Agent,
    normalization: Option<NormalizationConstants>,
    n_episodes: usize,
) -> Result<(Vec<TraceRow>, Vec<EpisodeOutcome>)> {
    let mut env = PegInHoleEnv::new(cfg.physics, cfg.env, cfg.randomization);
    if let Some(n) = normalization {
        env = env.with_normalization(n);
    }
    let mut ctl = agent.controller();
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for ep in 0..n_episodes {
        let sc = Scenario::sample(
            &cfg.randomization,
            StartNoise::Gaussian,
            cfg.peg_shape,
            &mut seed::stream(cfg.seed, "rollout", ep as u64),
        );
        outcomes.push(run_episode(&mut env, &sc, ctl.as_mut(), Some((&mut rows, ep)))?);
    }
    Ok((rows, outcomes))
}

pub fn write_trace(rows: &[TraceRow], privileged_dim: usize, path: &Path) -> Result<()> {
    let mut s = TraceRow::csv_header(privileged_dim);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, s).map_err(io_err(path))
}
