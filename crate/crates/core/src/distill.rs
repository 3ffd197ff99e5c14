//! Student phase: a TCN encoder learns to estimate the privileged state
//! from sensor history while the teacher policy stays frozen.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::env::{
    policy_input, Action, Observation, PegInHoleEnv, PrivilegedState, Scenario, StartNoise, OBS_DIM, POSE_DIM,
};
use crate::error::{io_err, Error, Result};
use crate::evalsuite::Controller;
use crate::nn::{
    sigmoid, student_loss_grad, Adam, AdamConfig, Checkpoint, CheckpointMeta, MlpPolicy, StudentLoss, Tcn, TcnConfig,
};
use crate::seed::{self, Rng};

/// Fixed-length observation history, oldest first, zero-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    rows: VecDeque<[f64; OBS_DIM]>,
    len: usize,
}

impl HistoryBuffer {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "history length must be positive");
        Self { rows: std::iter::repeat_n([0.0; OBS_DIM], len).collect(), len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn reset(&mut self) {
        self.rows.iter_mut().for_each(|r| *r = [0.0; OBS_DIM]);
    }

    pub fn push(&mut self, obs: &Observation) {
        self.rows.pop_front();
        self.rows.push_back(obs.to_array());
    }

    pub fn row(&self, i: usize) -> &[f64; OBS_DIM] {
        &self.rows[i]
    }

    /// `len × 6`, row-major, oldest first.
    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub history_len: usize,
    pub channels: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    /// Weight of the alignment BCE term.
    pub bce_weight: f64,
    /// Feed the teacher a hard 0/1 alignment estimate instead of the
    /// probability.
    pub threshold_alignment: bool,
    pub eval_every: usize,
    pub heldout_steps: usize,
    pub checkpoint_every: usize,
    /// Stop early once held-out alignment accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            steps_per_iteration: 1000,
            history_len: 20,
            channels: 32,
            epochs: 4,
            minibatch_size: 250,
            lr: 1e-3,
            bce_weight: 0.1,
            threshold_alignment: false,
            eval_every: 25,
            heldout_steps: 2000,
            checkpoint_every: 100,
            stop_at_accuracy: None,
        }
    }
}

impl DistillConfig {
    pub fn encoder_config(&self, include_alignment: bool) -> TcnConfig {
        TcnConfig { channels: self.channels, ..TcnConfig::encoder(self.history_len, include_alignment) }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.history_len == 0 || self.steps_per_iteration == 0 || self.minibatch_size == 0 || self.channels == 0 {
            return Err("distill sizes must be >= 1".into());
        }
        if !(self.lr > 0.0) || self.bce_weight < 0.0 {
            return Err("distill lr must be > 0 and bce_weight >= 0".into());
        }
        Ok(())
    }
}

/// Privileged vector the teacher sees from encoder outputs.
pub fn estimate_to_privileged(out: &[f64], include_alignment: bool, threshold: bool) -> Vec<f64> {
    let mut v = out[..POSE_DIM].to_vec();
    if include_alignment {
        let p = sigmoid(out[POSE_DIM]);
        v.push(if threshold { if p >= 0.5 { 1.0 } else { 0.0 } } else { p });
    }
    v
}

/// Deterministic student action: encode the history (already holding the
/// current observation) and query the teacher mean.
pub fn student_act(
    encoder: &Tcn,
    teacher: &MlpPolicy,
    history: &HistoryBuffer,
    obs: &Observation,
    threshold: bool,
) -> Result<(Action, Vec<f64>)> {
    let out = encoder.predict(&history.flat())?;
    let include_alignment = encoder.config().output_dim() > POSE_DIM;
    let privileged = estimate_to_privileged(&out, include_alignment, threshold);
    let mean = teacher.mean(&policy_input(obs, &privileged))?;
    Ok((Action([mean[0], mean[1], mean[2]]), out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillSample {
    pub history: Vec<f64>,
    pub truth_pose9: [f64; POSE_DIM],
    pub truth_align: bool,
}

/// Student-driven episodes on one env, carried over between calls.
struct StudentWorker {
    env: PegInHoleEnv,
    scenario_rng: Rng,
    history: HistoryBuffer,
    obs: Observation,
    privileged: PrivilegedState,
    needs_reset: bool,
}

impl StudentWorker {
    fn new(cfg: &ExperimentConfig, scenario_rng: Rng) -> Self {
        let env = PegInHoleEnv::new(cfg.physics, cfg.env, cfg.randomization);
        let zero = Observation { p_wrist: [0.0; 3], force: [0.0; 3] };
        let privileged = PrivilegedState {
            p_peg: [0.0; 3],
            rotation: crate::geometry::Rotation6D([0.0; 6]),
            aligned: false,
            include_alignment: cfg.env.include_alignment,
        };
        Self {
            env,
            scenario_rng,
            history: HistoryBuffer::new(cfg.distill.history_len),
            obs: zero,
            privileged,
            needs_reset: true,
        }
    }

    fn ensure_started(&mut self, cfg: &ExperimentConfig) -> Result<()> {
        if self.needs_reset {
            let sc = Scenario::sample(&cfg.randomization, StartNoise::Gaussian, cfg.peg_shape, &mut self.scenario_rng);
            let (obs, privileged) = self.env.reset(&sc)?;
            self.history.reset();
            self.history.push(&obs);
            self.obs = obs;
            self.privileged = privileged;
            self.needs_reset = false;
        }
        Ok(())
    }
}

/// Drive `n_steps` student steps across `workers` envs in lockstep and record
/// (history, ground truth) pairs.
fn collect(
    cfg: &ExperimentConfig,
    encoder: &Tcn,
    teacher: &MlpPolicy,
    workers: &mut [StudentWorker],
    n_steps: usize,
) -> Result<Vec<DistillSample>> {
    let mut out = Vec::with_capacity(n_steps);
    let threshold = cfg.distill.threshold_alignment;
    'outer: loop {
        for w in workers.iter_mut() {
            if out.len() == n_steps {
                break 'outer;
            }
            w.ensure_started(cfg)?;
            let pose9 = w.privileged.pose9();
            out.push(DistillSample { history: w.history.flat(), truth_pose9: pose9, truth_align: w.privileged.aligned });
            let (action, _) = student_act(encoder, teacher, &w.history, &w.obs, threshold)?;
            let r = w.env.step(&action)?;
            w.obs = r.observation;
            w.privileged = r.privileged;
            w.history.push(&r.observation);
            w.needs_reset = r.terminated;
        }
    }
    Ok(out)
}

/// Collect `n_steps` fresh samples from new student-driven episodes.
pub fn collect_distill_data(
    cfg: &ExperimentConfig,
    encoder: &Tcn,
    teacher: &MlpPolicy,
    n_steps: usize,
    stream_label: &str,
) -> Result<Vec<DistillSample>> {
    let mut workers: Vec<StudentWorker> = (0..cfg.workers.max(1))
        .map(|w| StudentWorker::new(cfg, seed::stream(cfg.seed, stream_label, w as u64)))
        .collect();
    collect(cfg, encoder, teacher, &mut workers, n_steps)
}

/// Mean loss terms and alignment accuracy of `encoder` on `samples`.
pub fn evaluate_encoder(encoder: &Tcn, samples: &[DistillSample], bce_weight: f64) -> Result<(StudentLoss, f64)> {
    let t = encoder.config().input_dim();
    let od = encoder.config().output_dim();
    let with_align = od > POSE_DIM;
    let mut sum = StudentLoss { mse: 0.0, bce: 0.0, total: 0.0 };
    let mut correct = 0usize;
    for chunk in samples.chunks(500) {
        let x: Vec<f64> = chunk.iter().flat_map(|s| s.history.iter().copied()).collect();
        debug_assert_eq!(x.len(), chunk.len() * t);
        let (y, _) = encoder.forward(&x, chunk.len())?;
        for (k, s) in chunk.iter().enumerate() {
            let o = &y[k * od..(k + 1) * od];
            let logit = with_align.then(|| o[POSE_DIM]);
            let (l, _, _) = student_loss_grad(&o[..POSE_DIM], logit, &s.truth_pose9, s.truth_align, bce_weight);
            sum.mse += l.mse;
            sum.bce += l.bce;
            sum.total += l.total;
            if let Some(z) = logit {
                if (z >= 0.0) == s.truth_align {
                    correct += 1;
                }
            }
        }
    }
    let n = samples.len().max(1) as f64;
    let acc = if with_align { correct as f64 / n } else { f64::NAN };
    Ok((StudentLoss { mse: sum.mse / n, bce: sum.bce / n, total: sum.total / n }, acc))
}

/// One minibatch gradient of the mean student loss.
pub fn encoder_gradient(encoder: &Tcn, batch: &[&DistillSample], bce_weight: f64) -> Result<(Vec<f64>, StudentLoss)> {
    let od = encoder.config().output_dim();
    let with_align = od > POSE_DIM;
    let x: Vec<f64> = batch.iter().flat_map(|s| s.history.iter().copied()).collect();
    let (y, cache) = encoder.forward(&x, batch.len())?;
    let n = batch.len() as f64;
    let mut dy = vec![0.0; y.len()];
    let mut sum = StudentLoss { mse: 0.0, bce: 0.0, total: 0.0 };
    for (k, s) in batch.iter().enumerate() {
        let o = &y[k * od..(k + 1) * od];
        let logit = with_align.then(|| o[POSE_DIM]);
        let (l, dp, dl) = student_loss_grad(&o[..POSE_DIM], logit, &s.truth_pose9, s.truth_align, bce_weight);
        for (j, g) in dp.iter().enumerate() {
            dy[k * od + j] = g / n;
        }
        if let Some(g) = dl {
            dy[k * od + POSE_DIM] = g / n;
        }
        sum.mse += l.mse / n;
        sum.bce += l.bce / n;
        sum.total += l.total / n;
    }
    let mut grad = vec![0.0; encoder.num_params()];
    encoder.backward(&cache, &dy, &mut grad);
    Ok((grad, sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudentCurveRow {
    pub iteration: usize,
    pub mse: f64,
    pub bce: f64,
    pub align_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeldoutPoint {
    pub iteration: usize,
    pub mse: f64,
    pub bce: f64,
    pub align_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct StudentRun {
    pub curve: Vec<StudentCurveRow>,
    pub heldout: Vec<HeldoutPoint>,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub best_accuracy: f64,
    pub encoder: Tcn,
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Check that a teacher checkpoint fits the configured privileged width.
pub fn load_teacher(cfg: &ExperimentConfig, ckpt: &Checkpoint) -> Result<MlpPolicy> {
    let teacher = ckpt.mlp_policy().map_err(|e| Error::CheckpointMismatch(format!("teacher: {e}")))?;
    let want = cfg.env.policy_input_dim();
    if crate::nn::ActorCritic::input_dim(&teacher) != want || ckpt.metadata.include_alignment != cfg.env.include_alignment {
        return Err(Error::CheckpointMismatch(format!(
            "teacher takes {} inputs (alignment {}), config expects {want} (alignment {})",
            crate::nn::ActorCritic::input_dim(&teacher),
            ckpt.metadata.include_alignment,
            cfg.env.include_alignment
        )));
    }
    Ok(teacher)
}

/// Phase-2 training loop. Writes `student_curve.csv`, `student_heldout.csv`
/// and encoder checkpoints under `out_dir`.
pub fn train_student(cfg: &ExperimentConfig, teacher_ckpt: &Checkpoint, out_dir: &Path) -> Result<StudentRun> {
    cfg.validate()?;
    let teacher = load_teacher(cfg, teacher_ckpt)?;
    let dc = &cfg.distill;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut encoder = Tcn::new(dc.encoder_config(cfg.env.include_alignment), &mut seed::stream(cfg.seed, "encoder-init", 0))?;
    let mut opt = Adam::new(encoder.num_params(), AdamConfig::with_lr(dc.lr));
    let mut shuffle_rng = seed::stream(cfg.seed, "distill-shuffle", 0);
    let mut workers: Vec<StudentWorker> = (0..cfg.workers.max(1))
        .map(|w| StudentWorker::new(cfg, seed::stream(cfg.seed, "distill-scenario", w as u64)))
        .collect();
    // held-out scenarios never overlap the training streams
    let heldout_label = "distill-heldout";
    let normalization = teacher_ckpt.normalization;
    let meta = |iteration: usize| CheckpointMeta {
        iteration,
        seed: cfg.seed,
        include_alignment: cfg.env.include_alignment,
        extra: serde_json::json!({ "role": "student_encoder", "threshold_alignment": dc.threshold_alignment }),
    };

    let curve_path = out_dir.join("student_curve.csv");
    let mut curve_file = std::fs::File::create(&curve_path).map_err(io_err(&curve_path))?;
    writeln!(curve_file, "iteration,mse,bce,align_accuracy").map_err(io_err(&curve_path))?;
    let held_path = out_dir.join("student_heldout.csv");
    let mut held_file = std::fs::File::create(&held_path).map_err(io_err(&held_path))?;
    writeln!(held_file, "iteration,mse,bce,align_accuracy").map_err(io_err(&held_path))?;

    let best_path = out_dir.join("encoder_best.swck");
    let final_path = out_dir.join("encoder_final.swck");
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_mse = f64::INFINITY;
    let mut curve = Vec::new();
    let mut heldout = Vec::new();

    use rand::seq::SliceRandom;
    for it in 1..=dc.iterations {
        let data = collect(cfg, &encoder, &teacher, &mut workers, dc.steps_per_iteration)?;
        let aligned = data.iter().filter(|s| s.truth_align).count();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut sum = StudentLoss { mse: 0.0, bce: 0.0, total: 0.0 };
        let mut batches = 0.0;
        for _ in 0..dc.epochs {
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(dc.minibatch_size) {
                let batch: Vec<&DistillSample> = chunk.iter().map(|&i| &data[i]).collect();
                let (grad, l) = encoder_gradient(&encoder, &batch, dc.bce_weight)?;
                if !l.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss { iteration: it, detail: format!("student loss {l:?}") });
                }
                opt.step(encoder.params_mut(), &grad);
                sum.mse += l.mse;
                sum.bce += l.bce;
                batches += 1.0;
            }
        }
        // accuracy of the model that drove this batch's rollouts
        let (_, acc) = evaluate_encoder(&encoder, &data, dc.bce_weight)?;
        let row = StudentCurveRow { iteration: it, mse: sum.mse / batches, bce: sum.bce / batches, align_accuracy: acc };
        writeln!(curve_file, "{},{},{},{}", row.iteration, row.mse, row.bce, fmt(row.align_accuracy))
            .map_err(io_err(&curve_path))?;
        log::debug!("student it {it}: mse {:.5} bce {:.4} acc {:.3} aligned {aligned}/{}", row.mse, row.bce, acc, data.len());
        curve.push(row);

        if it % dc.eval_every.max(1) == 0 || it == dc.iterations {
            let held = collect_distill_data(cfg, &encoder, &teacher, dc.heldout_steps, heldout_label)?;
            let (l, acc) = evaluate_encoder(&encoder, &held, dc.bce_weight)?;
            writeln!(held_file, "{it},{},{},{}", l.mse, l.bce, fmt(acc)).map_err(io_err(&held_path))?;
            log::info!("student it {it}: held-out mse {:.5} bce {:.4} align accuracy {:.3}", l.mse, l.bce, acc);
            heldout.push(HeldoutPoint { iteration: it, mse: l.mse, bce: l.bce, align_accuracy: acc });
            let score = if acc.is_nan() { -l.mse } else { acc };
            let best_score = if acc.is_nan() { -best_mse } else { best_accuracy };
            if score > best_score {
                best_accuracy = acc;
                best_mse = l.mse;
                Checkpoint::from_encoder(&encoder, normalization, meta(it))?.save(&best_path)?;
            }
            if let (Some(target), false) = (dc.stop_at_accuracy, acc.is_nan()) {
                if acc >= target {
                    log::info!("student reached held-out accuracy {acc:.3} at iteration {it}");
                    break;
                }
            }
        }
        if dc.checkpoint_every > 0 && it % dc.checkpoint_every == 0 {
            let p = out_dir.join(format!("encoder_{it:06}.swck"));
            Checkpoint::from_encoder(&encoder, normalization, meta(it))?.save(&p)?;
        }
    }
    let last_it = curve.last().map_or(0, |r| r.iteration);
    Checkpoint::from_encoder(&encoder, normalization, meta(last_it))?.save(&final_path)?;
    if !best_path.exists() {
        std::fs::copy(&final_path, &best_path).map_err(io_err(&best_path))?;
    }
    Ok(StudentRun {
        curve,
        heldout,
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        best_accuracy,
        encoder,
    })
}

/// Encoder plus frozen teacher as a closed-loop controller.
pub struct StudentController<'a> {
    pub encoder: &'a Tcn,
    pub teacher: &'a MlpPolicy,
    pub history: HistoryBuffer,
    pub threshold: bool,
    /// Raw encoder output of the last step.
    pub last_output: Vec<f64>,
}

impl<'a> StudentController<'a> {
    pub fn new(encoder: &'a Tcn, teacher: &'a MlpPolicy, threshold: bool) -> Self {
        Self {
            encoder,
            teacher,
            history: HistoryBuffer::new(encoder.config().seq_len),
            threshold,
            last_output: Vec::new(),
        }
    }
}

impl Controller for StudentController<'_> {
    fn reset(&mut self) {
        self.history.reset();
    }

    fn act(&mut self, obs: &Observation, _privileged: &PrivilegedState, _env: &PegInHoleEnv) -> Result<Action> {
        self.history.push(obs);
        let (a, out) = student_act(self.encoder, self.teacher, &self.history, obs, self.threshold)?;
        self.last_output = out;
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub t: usize,
    pub pred: [f64; 3],
    pub truth: [f64; 3],
    pub pred_align_prob: f64,
    pub true_align: bool,
}

pub const PREDICTION_TRACE_HEADER: &str = "t,pred_x,true_x,pred_y,true_y,pred_z,true_z,pred_align_prob,true_align";

/// Roll out the student for `n_episodes` and record its estimates next to
/// the ground truth. Episodes follow each other; `t` restarts at 0.
pub fn prediction_trace(
    cfg: &ExperimentConfig,
    encoder: &Tcn,
    teacher: &MlpPolicy,
    n_episodes: usize,
    stream_label: &str,
) -> Result<Vec<TraceRow>> {
    let mut env = PegInHoleEnv::new(cfg.physics, cfg.env, cfg.randomization);
    let mut ctl = StudentController::new(encoder, teacher, cfg.distill.threshold_alignment);
    let with_align = encoder.config().output_dim() > POSE_DIM;
    let mut rows = Vec::new();
    for ep in 0..n_episodes {
        let sc = Scenario::sample(
            &cfg.randomization,
            StartNoise::Gaussian,
            cfg.peg_shape,
            &mut seed::stream(cfg.seed, stream_label, ep as u64),
        );
        let (mut obs, mut privileged) = env.reset(&sc)?;
        ctl.reset();
        for t in 0.. {
            let a = ctl.act(&obs, &privileged, &env)?;
            let out = &ctl.last_output;
            rows.push(TraceRow {
                episode: ep,
                t,
                pred: [out[0], out[1], out[2]],
                truth: privileged.p_peg,
                pred_align_prob: if with_align { sigmoid(out[POSE_DIM]) } else { f64::NAN },
                true_align: privileged.aligned,
            });
            let r = env.step(&a)?;
            obs = r.observation;
            privileged = r.privileged;
            if r.terminated {
                break;
            }
        }
    }
    Ok(rows)
}

pub fn write_prediction_trace(rows: &[TraceRow], path: &Path) -> Result<()> {
    let mut s = String::from(PREDICTION_TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.pred[0],
            r.truth[0],
            r.pred[1],
            r.truth[1],
            r.pred[2],
            r.truth[2],
            fmt(r.pred_align_prob),
            u8::from(r.true_align)
        ));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, s).map_err(io_err(path))
}

/// Roll out and write the prediction trace CSV.
pub fn dump_prediction_trace(
    cfg: &ExperimentConfig,
    encoder: &Tcn,
    teacher: &MlpPolicy,
    n_episodes: usize,
    path: &Path,
) -> Result<Vec<TraceRow>> {
    let rows = prediction_trace(cfg, encoder, teacher, n_episodes, "prediction-trace")?;
    write_prediction_trace(&rows, path)?;
    Ok(rows)
}

/// Per-axis RMSE of the predicted peg position.
pub fn trace_rmse(rows: &[TraceRow]) -> [f64; 3] {
    let n = rows.len().max(1) as f64;
    std::array::from_fn(|i| (rows.iter().map(|r| (r.pred[i] - r.truth[i]).powi(2)).sum::<f64>() / n).sqrt())
}

/// Fraction of episodes with a true alignment transition where the
/// predicted probability crosses 0.5 within `window` steps of it.
pub fn alignment_transition_hit_rate(rows: &[TraceRow], window: usize) -> Option<f64> {
    let mut episodes = 0;
    let mut hits = 0;
    let mut start = 0;
    while start < rows.len() {
        let ep = rows[start].episode;
        let end = rows[start..].iter().position(|r| r.episode != ep).map_or(rows.len(), |p| start + p);
        let slice = &rows[start..end];
        if let Some(tt) = (1..slice.len()).find(|&i| slice[i].true_align != slice[i - 1].true_align) {
            episodes += 1;
            let want = slice[tt].true_align;
            let lo = tt.saturating_sub(window).max(1);
            let hi = (tt + window).min(slice.len() - 1);
            let crossed = (lo..=hi).any(|i| {
                let before = slice[i - 1].pred_align_prob >= 0.5;
                let after = slice[i].pred_align_prob >= 0.5;
                before != after && after == want
            });
            if crossed {
                hits += 1;
            }
        }
        start = end;
    }
    (episodes > 0).then(|| hits as f64 / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(v: f64) -> Observation {
        Observation { p_wrist: [v; 3], force: [v; 3] }
    }

    #[test]
    fn history_zero_padding() {
        let mut h = HistoryBuffer::new(20);
        for k in 1..=5 {
            h.push(&obs(k as f64));
            let zero_rows = (0..20).filter(|&i| h.row(i).iter().all(|v| *v == 0.0)).count();
            assert_eq!(zero_rows, 20 - k);
        }
        assert_eq!(h.row(19)[0], 5.0);
        assert_eq!(h.row(15)[0], 1.0);
        assert_eq!(h.flat().len(), 120);
        h.reset();
        assert!(h.flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn history_keeps_latest() {
        let mut h = HistoryBuffer::new(3);
        for k in 1..=5 {
            h.push(&obs(k as f64));
        }
        assert_eq!([h.row(0)[0], h.row(1)[0], h.row(2)[0]], [3.0, 4.0, 5.0]);
    }

    #[test]
    fn logit_zero_is_half_probability() {
        let mut out = vec![0.0; 10];
        out[0] = 0.25;
        let p = estimate_to_privileged(&out, true, false);
        assert_eq!(p.len(), 10);
        assert_eq!(p[9], 0.5);
        assert_eq!(p[0], 0.25);
        assert_eq!(estimate_to_privileged(&out, true, true)[9], 1.0);
        assert_eq!(estimate_to_privileged(&out[..9], false, false).len(), 9);
    }

    #[test]
    fn transition_hit_rate() {
        let mk = |t, p, a| TraceRow { episode: 0, t, pred: [0.0; 3], truth: [0.0; 3], pred_align_prob: p, true_align: a };
        let rows = vec![mk(0, 0.1, false), mk(1, 0.2, false), mk(2, 0.3, true), mk(3, 0.9, true)];
        assert_eq!(alignment_transition_hit_rate(&rows, 3), Some(1.0));
        assert_eq!(alignment_transition_hit_rate(&rows, 0), Some(0.0));
    }
}
