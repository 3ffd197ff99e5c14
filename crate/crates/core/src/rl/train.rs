//! Teacher training loop: lockstep rollout collection over several envs,
//! GAE, PPO, periodic deterministic evaluation and checkpoints.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::ppo::{ppo_update, PpoConfig, PpoStats, RolloutBuffer};
use crate::config::ExperimentConfig;
use crate::distill::HistoryBuffer;
use crate::env::{
    policy_input, resolve_normalization, Action, Observation, PegInHoleEnv, PrivilegedState, Scenario, StartNoise,
    ACTION_DIM, OBS_DIM,
};
use crate::error::{io_err, Result};
use crate::evalsuite::{run_condition, Agent, EvalCondition, EvalSetup};
use crate::nn::{
    gaussian_log_prob, gaussian_sample, ActorCritic, Adam, AdamConfig, Checkpoint, CheckpointMeta, MlpPolicy,
    TcnConfig, TcnPolicy,
};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArch {
    /// MLP on `[observation, privileged]`.
    Mlp,
    /// TCN on the observation history only (no privileged input).
    Tcn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub hidden: Vec<usize>,
    pub arch: PolicyArch,
    /// History length and channel width of the TCN baseline.
    pub tcn_history: usize,
    pub tcn_channels: usize,
    /// Initial log standard deviation of the exploration noise.
    pub init_log_std: f64,
    pub ppo: PpoConfig,
    /// Periodic checkpoint interval; 0 disables.
    pub checkpoint_every: usize,
    /// Deterministic evaluation interval; 0 disables.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Stop once a periodic evaluation reaches this success rate.
    pub stop_at_success: Option<f64>,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            steps_per_iteration: 1000,
            hidden: vec![256, 256],
            arch: PolicyArch::Mlp,
            tcn_history: 20,
            tcn_channels: 32,
            init_log_std: (0.1f64).ln(),
            ppo: PpoConfig::default(),
            checkpoint_every: 500,
            eval_every: 50,
            eval_episodes: 100,
            stop_at_success: None,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.steps_per_iteration == 0 || self.hidden.contains(&0) || self.eval_episodes == 0 {
            return Err("rl steps_per_iteration, hidden widths and eval_episodes must be >= 1".into());
        }
        if !self.init_log_std.is_finite() {
            return Err("rl init_log_std must be finite".into());
        }
        if self.tcn_history == 0 || self.tcn_channels == 0 {
            return Err("rl tcn_history and tcn_channels must be >= 1".into());
        }
        if let Some(s) = self.stop_at_success {
            if !(0.0..=1.0).contains(&s) {
                return Err("rl stop_at_success must lie in [0, 1]".into());
            }
        }
        self.ppo.validate()
    }

    pub fn tcn_trunk(&self) -> TcnConfig {
        TcnConfig { channels: self.tcn_channels, ..TcnConfig::encoder(self.tcn_history, false) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub timesteps: usize,
    /// Over episodes that ended during the iteration; NaN when none did.
    pub mean_return: f64,
    pub success_rate: f64,
    pub mean_episode_len: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub const CURVE_CSV_HEADER: &str =
    "iteration,timesteps,mean_return,success_rate,mean_episode_len,policy_loss,value_loss,entropy";

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

impl CurveRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iteration,
            self.timesteps,
            num(self.mean_return),
            num(self.success_rate),
            num(self.mean_episode_len),
            self.policy_loss,
            self.value_loss,
            self.entropy
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_episode_len: f64,
}

#[derive(Debug, Clone)]
pub struct TeacherRun {
    pub curve: Vec<CurveRow>,
    pub evals: Vec<EvalPoint>,
    /// Iteration of the best periodic evaluation (last iteration if none ran).
    pub best_iteration: usize,
    pub best_success: f64,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
}

impl TeacherRun {
    /// Trailing `window`-iteration mean of the curve's mean return ending at
    /// `iteration`, skipping iterations without completed episodes.
    pub fn smoothed_return(&self, iteration: usize, window: usize) -> f64 {
        let vals: Vec<f64> = self
            .curve
            .iter()
            .filter(|r| r.iteration <= iteration && r.iteration + window > iteration && !r.mean_return.is_nan())
            .map(|r| r.mean_return)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Env plus per-worker RNG streams and the unfinished episode.
struct Worker {
    env: PegInHoleEnv,
    scenario_rng: Rng,
    action_rng: Rng,
    history: Option<HistoryBuffer>,
    obs: Observation,
    privileged: Option<PrivilegedState>,
    ep_return: f64,
    ep_len: usize,
}

impl Worker {
    fn input(&self) -> Vec<f64> {
        match &self.history {
            Some(h) => h.flat(),
            None => policy_input(&self.obs, &self.privileged.expect("worker started").to_vec()),
        }
    }

    fn start_episode(&mut self, cfg: &ExperimentConfig) -> Result<()> {
        let sc = Scenario::sample(&cfg.randomization, StartNoise::Gaussian, cfg.peg_shape, &mut self.scenario_rng);
        let (obs, privileged) = self.env.reset(&sc)?;
        self.obs = obs;
        self.privileged = Some(privileged);
        if let Some(h) = self.history.as_mut() {
            h.reset();
            h.push(&obs);
        }
        self.ep_return = 0.0;
        self.ep_len = 0;
        Ok(())
    }
}

struct Transition {
    input: Vec<f64>,
    action: Vec<f64>,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
}

#[derive(Default)]
struct EpisodeStats {
    returns: Vec<f64>,
    lengths: Vec<usize>,
    successes: usize,
}

/// Collect `n` transitions in lockstep: one batched forward pass per tick
/// across all workers that still owe steps. Worker `w` owes
/// `n / W` steps plus one if `w < n % W`.
fn collect<P: ActorCritic>(
    cfg: &ExperimentConfig,
    policy: &P,
    workers: &mut [Worker],
    n: usize,
) -> Result<(RolloutBuffer, EpisodeStats)> {
    let wn = workers.len();
    let quota: Vec<usize> = (0..wn).map(|w| n / wn + usize::from(w < n % wn)).collect();
    let mut local: Vec<Vec<Transition>> = (0..wn).map(|w| Vec::with_capacity(quota[w])).collect();
    let mut stats = EpisodeStats::default();
    let d = policy.input_dim();
    loop {
        let active: Vec<usize> = (0..wn).filter(|&w| local[w].len() < quota[w]).collect();
        if active.is_empty() {
            break;
        }
        let mut x = Vec::with_capacity(active.len() * d);
        for &w in &active {
            x.extend(workers[w].input());
        }
        let (means, values, _) = policy.forward_batch(&x, active.len())?;
        let log_std = policy.log_std().to_vec();
        for (k, &w) in active.iter().enumerate() {
            let mean = &means[k * ACTION_DIM..(k + 1) * ACTION_DIM];
            let wk = &mut workers[w];
            let a = gaussian_sample(mean, &log_std, &mut wk.action_rng);
            let lp = gaussian_log_prob(&a, mean, &log_std);
            let r = wk.env.step(&Action([a[0], a[1], a[2]]))?;
            wk.ep_return += r.reward;
            wk.ep_len += 1;
            local[w].push(Transition {
                input: x[k * d..(k + 1) * d].to_vec(),
                action: a,
                log_prob: lp,
                value: values[k],
                reward: r.reward * cfg.rl.ppo.reward_scale,
                done: r.terminated,
            });
            if r.terminated {
                stats.returns.push(wk.ep_return);
                stats.lengths.push(wk.ep_len);
                stats.successes += usize::from(r.success);
                wk.start_episode(cfg)?;
            } else {
                wk.obs = r.observation;
                wk.privileged = Some(r.privileged);
                if let Some(h) = wk.history.as_mut() {
                    h.push(&r.observation);
                }
            }
        }
    }
    // bootstrap values for episodes cut by the iteration boundary
    let mut x = Vec::with_capacity(wn * d);
    for w in workers.iter() {
        x.extend(w.input());
    }
    let (_, boot, _) = policy.forward_batch(&x, wn)?;
    let mut buf = RolloutBuffer::new(d, ACTION_DIM);
    for (w, ts) in local.iter().enumerate() {
        for t in ts {
            buf.push(&t.input, &t.action, t.log_prob, t.value, t.reward, t.done);
        }
        buf.end_segment(boot[w]);
    }
    Ok((buf, stats))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Train the privileged teacher (or the TCN baseline when
/// `cfg.rl.arch == Tcn`). Writes `learning_curve.csv`, `eval_curve.csv`,
/// checkpoints and a resolved config snapshot under `out_dir`.
pub fn train_teacher(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TeacherRun> {
    cfg.validate()?;
    let mut init_rng = seed::stream(cfg.seed, "policy-init", 0);
    match cfg.rl.arch {
        PolicyArch::Mlp => {
            let p = MlpPolicy::new(cfg.env.policy_input_dim(), &cfg.rl.hidden, ACTION_DIM, &mut init_rng);
            train_loop(cfg, p, out_dir, false, |p| Agent::Teacher(p.clone()))
        }
        PolicyArch::Tcn => {
            let p = TcnPolicy::new(&cfg.rl.tcn_trunk(), ACTION_DIM, &mut init_rng)?;
            train_loop(cfg, p, out_dir, true, |p| Agent::TcnBaseline(p.clone()))
        }
    }
}

fn train_loop<P: ActorCritic>(
    cfg: &ExperimentConfig,
    mut policy: P,
    out_dir: &Path,
    history_input: bool,
    agent_of: impl Fn(&P) -> Agent,
) -> Result<TeacherRun> {
    let rl = &cfg.rl;
    let ls = policy.log_std_range();
    policy.params_mut()[ls].fill(rl.init_log_std);
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    cfg.snapshot(out_dir)?;
    let norm = resolve_normalization(&cfg.physics, &cfg.env);
    let mut opt = Adam::new(policy.num_params(), AdamConfig::with_lr(rl.ppo.lr));
    let mut shuffle_rng = seed::stream(cfg.seed, "ppo-shuffle", 0);
    let zero_obs = Observation { p_wrist: [0.0; OBS_DIM / 2], force: [0.0; OBS_DIM / 2] };
    let mut workers: Vec<Worker> = (0..cfg.workers)
        .map(|w| Worker {
            env: PegInHoleEnv::new(cfg.physics, cfg.env, cfg.randomization),
            scenario_rng: seed::stream(cfg.seed, "train-scenario", w as u64),
            action_rng: seed::stream(cfg.seed, "train-action", w as u64),
            history: history_input.then(|| HistoryBuffer::new(rl.tcn_history)),
            obs: zero_obs,
            privileged: None,
            ep_return: 0.0,
            ep_len: 0,
        })
        .collect();
    for w in workers.iter_mut() {
        w.start_episode(cfg)?;
    }

    let meta = |iteration: usize| CheckpointMeta {
        iteration,
        seed: cfg.seed,
        include_alignment: cfg.env.include_alignment,
        extra: serde_json::json!({
            "role": if history_input { "tcn_baseline" } else { "teacher" },
            "peg_shape": cfg.peg_shape,
            "randomization": cfg.randomization,
        }),
    };
    let save = |policy: &P, it: usize, path: &Path| -> Result<()> {
        Checkpoint::from_policy(policy, Some(norm), meta(it))?.save(path)?;
        Ok(())
    };

    let curve_path = out_dir.join("learning_curve.csv");
    let mut curve_file = std::fs::File::create(&curve_path).map_err(io_err(&curve_path))?;
    writeln!(curve_file, "{CURVE_CSV_HEADER}").map_err(io_err(&curve_path))?;
    let eval_path = out_dir.join("eval_curve.csv");
    let mut eval_file = std::fs::File::create(&eval_path).map_err(io_err(&eval_path))?;
    writeln!(eval_file, "iteration,success_rate,mean_return,mean_episode_len").map_err(io_err(&eval_path))?;

    let eval_cond = EvalCondition {
        name: "training-eval".into(),
        peg_shape: cfg.peg_shape,
        n_trials: rl.eval_episodes,
        policy: agent_of(&policy).kind(),
        alignment: cfg.env.include_alignment,
        ..EvalCondition::default()
    };
    let eval_seed = seed::derive_seed(cfg.seed, "teacher-eval", 0);

    let best_path = out_dir.join("teacher_best.swck");
    let final_path = out_dir.join("teacher_final.swck");
    let mut run = TeacherRun {
        curve: Vec::new(),
        evals: Vec::new(),
        best_iteration: 0,
        best_success: f64::NEG_INFINITY,
        best_checkpoint: best_path.clone(),
        final_checkpoint: final_path.clone(),
    };
    let mut timesteps = 0;
    for it in 1..=rl.iterations {
        let (mut buf, stats) = collect(cfg, &policy, &mut workers, rl.steps_per_iteration)?;
        timesteps += buf.len();
        buf.finish(rl.ppo.gamma, rl.ppo.lambda, rl.ppo.normalize_advantages);
        let ppo: PpoStats = ppo_update(&mut policy, &mut opt, &buf, &rl.ppo, &mut shuffle_rng, it)?;
        let episodes = stats.returns.len();
        let row = CurveRow {
            iteration: it,
            timesteps,
            mean_return: mean(stats.returns.iter().copied()),
            success_rate: if episodes == 0 { f64::NAN } else { stats.successes as f64 / episodes as f64 },
            mean_episode_len: mean(stats.lengths.iter().map(|&l| l as f64)),
            policy_loss: ppo.policy_loss,
            value_loss: ppo.value_loss,
            entropy: ppo.entropy,
        };
        writeln!(curve_file, "{}", row.csv_row()).map_err(io_err(&curve_path))?;
        log::debug!(
            "it {it}: return {:.3} success {:.2} len {:.1} kl {:.4} clip {:.3}",
            row.mean_return,
            row.success_rate,
            row.mean_episode_len,
            ppo.approx_kl,
            ppo.clip_fraction
        );
        run.curve.push(row);

        if rl.checkpoint_every > 0 && it % rl.checkpoint_every == 0 {
            save(&policy, it, &out_dir.join(format!("teacher_{it:06}.swck")))?;
        }
        if rl.eval_every > 0 && (it % rl.eval_every == 0 || it == rl.iterations) {
            let agent = agent_of(&policy);
            let setup = EvalSetup { cfg, agent: &agent, normalization: Some(norm), base_seed: eval_seed };
            let r = run_condition(&setup, &eval_cond, 0)?;
            let p = EvalPoint {
                iteration: it,
                success_rate: r.success_rate,
                mean_return: r.mean_return,
                mean_episode_len: r.mean_episode_len,
            };
            writeln!(eval_file, "{it},{},{},{}", p.success_rate, p.mean_return, p.mean_episode_len)
                .map_err(io_err(&eval_path))?;
            log::info!(
                "iteration {it}: eval success {:.2} return {:.2} len {:.1}; train return {:.2}",
                p.success_rate,
                p.mean_return,
                p.mean_episode_len,
                row.mean_return
            );
            run.evals.push(p);
            if p.success_rate > run.best_success {
                run.best_success = p.success_rate;
                run.best_iteration = it;
                save(&policy, it, &best_path)?;
            }
            if rl.stop_at_success.is_some_and(|s| p.success_rate >= s) {
                log::info!("stopping at iteration {it}: eval success {:.2}", p.success_rate);
                break;
            }
        }
    }
    let last = run.curve.last().map_or(0, |r| r.iteration);
    save(&policy, last, &final_path)?;
    if run.evals.is_empty() {
        save(&policy, last, &best_path)?;
        run.best_iteration = last;
        run.best_success = f64::NAN;
    }
    curve_file.flush().map_err(io_err(&curve_path))?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(workers: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::reach_toy();
        c.workers = workers;
        c.rl.iterations = 3;
        c.rl.steps_per_iteration = 120;
        c.rl.hidden = vec![16];
        c.rl.ppo.epochs = 2;
        c.rl.ppo.minibatch_size = 40;
        c.rl.eval_every = 3;
        c.rl.eval_episodes = 2;
        c.rl.checkpoint_every = 0;
        c
    }

    #[test]
    fn writes_curve_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let run = train_teacher(&tiny(3), dir.path()).unwrap();
        assert_eq!(run.curve.len(), 3);
        assert_eq!(run.curve[2].timesteps, 360);
        let csv = std::fs::read_to_string(dir.path().join("learning_curve.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), CURVE_CSV_HEADER);
        assert_eq!(csv.lines().count(), 4);
        assert!(run.final_checkpoint.exists() && run.best_checkpoint.exists());
        assert!(dir.path().join("config.resolved.json").exists());
        let ck = Checkpoint::load(&run.final_checkpoint).unwrap();
        assert_eq!(ck.mlp_policy().unwrap().input_dim(), 16);
        assert!(ck.normalization.is_some());
    }

    #[test]
    fn single_worker_runs_are_bitwise_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = train_teacher(&tiny(1), a.path()).unwrap();
        let rb = train_teacher(&tiny(1), b.path()).unwrap();
        let fa = std::fs::read(&ra.final_checkpoint).unwrap();
        let fb = std::fs::read(&rb.final_checkpoint).unwrap();
        assert_eq!(fa, fb);
        assert_eq!(
            std::fs::read(a.path().join("learning_curve.csv")).unwrap(),
            std::fs::read(b.path().join("learning_curve.csv")).unwrap()
        );
    }

    #[test]
    fn tcn_baseline_trains() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(2);
        c.rl.arch = PolicyArch::Tcn;
        c.rl.tcn_channels = 4;
        c.rl.iterations = 1;
        let run = train_teacher(&c, dir.path()).unwrap();
        let ck = Checkpoint::load(&run.final_checkpoint).unwrap();
        assert_eq!(ck.tcn_policy().unwrap().input_dim(), 120);
    }

    #[test]
    fn no_alignment_width() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(1);
        c.env.include_alignment = false;
        c.rl.iterations = 1;
        let run = train_teacher(&c, dir.path()).unwrap();
        let ck = Checkpoint::load(&run.final_checkpoint).unwrap();
        assert_eq!(ck.mlp_policy().unwrap().input_dim(), 15);
        assert!(!ck.metadata.include_alignment);
    }

    #[test]
    fn smoothed_return_window() {
        let row = |i, r| CurveRow {
            iteration: i,
            timesteps: 0,
            mean_return: r,
            success_rate: 0.0,
            mean_episode_len: 0.0,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
        };
        let run = TeacherRun {
            curve: vec![row(1, 1.0), row(2, f64::NAN), row(3, 3.0), row(4, 5.0)],
            evals: vec![],
            best_iteration: 0,
            best_success: 0.0,
            best_checkpoint: PathBuf::new(),
            final_checkpoint: PathBuf::new(),
        };
        assert_eq!(run.smoothed_return(3, 3), 2.0);
        assert_eq!(run.smoothed_return(4, 2), 4.0);
    }
}
