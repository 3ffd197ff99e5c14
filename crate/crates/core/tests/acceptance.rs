//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test -p softwrist --test acceptance -- [FILTER...] [--include-ignored]`
//!
//! A filter selects criteria by number or by a substring of the slug.
//! Criterion 7 is an extended multi-seed run and only runs with
//! `--include-ignored` (or `--ignored`).

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::Complex;
use rand::Rng as _;
use softwrist::config::ExperimentConfig;
use softwrist::distill::{prediction_trace, train_student, write_prediction_trace, StudentRun, PREDICTION_TRACE_HEADER};
use softwrist::env::{
    alignment_state, check_termination, compute_reward, weighted_distance, Action, PegInHoleEnv, PhysicsConfig, Scenario,
    Termination,
};
use softwrist::evalsuite::{
    run_condition, run_eval, summarize_values, table_one, Agent, ConditionResult, EvalCondition, EvalSetup,
    ScriptedOracle, REPORT_CSV_HEADER,
};
use softwrist::geometry::{rotation_to_6d, Mat3, ShapeKind, Vec3};
use softwrist::nn::{student_loss, student_loss_grad, ActorCritic, Checkpoint, CheckpointMeta, MlpPolicy, Tcn, TcnConfig};
use softwrist::physcheck::{damped_oscillator, gravity_sag, max_energy_increase, oscillator_error};
use softwrist::rl::train::{train_teacher, TeacherRun};
use softwrist::seed;

// criterion 1
const OSC_RMS_TOL: f64 = 0.02;
const OSC_SUBSTEP_HZ: f64 = 500.0;
const ENERGY_TOL: f64 = 1e-9;
const SAG_TOL: f64 = 1e-4;
const PHYSICS_BUDGET: Duration = Duration::from_secs(60);
// criterion 2
const FORMULA_TOL: f64 = 1e-9;
// criterion 3
const GRAD_TOL: f64 = 1e-4;
const GRAD_SAMPLES: usize = 200;
const GRAD_EPS: f64 = 1e-5;
const GRADIENT_BUDGET: Duration = Duration::from_secs(300);
// criterion 4
const REACH_SUCCESS: f64 = 0.95;
const REACH_ITERATIONS: usize = 100;
const REACH_BUDGET: Duration = Duration::from_secs(600);
// criterion 5
const DESK_SUCCESS: f64 = 0.60;
const DESK_ITERATIONS: usize = 1500;
const EVAL_TRIALS: usize = 100;
const CURVE_START: usize = 100;
const CURVE_WINDOW: usize = 10;
// criterion 6
const ALIGN_ACCURACY: f64 = 0.90;
const STUDENT_GAP: f64 = 0.20;
// criterion 7
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];
// criterion 8
const ORACLE_OFF: f64 = 1.0;
const ORACLE_FULL: f64 = 0.90;
const ORACLE_BUDGET: Duration = Duration::from_secs(300);
// criterion 10
const GRID_DEGREES: [f64; 3] = [-5.0, 0.0, 5.0];

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

type Checked = Result<Outcome, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Desk-scale artifacts shared by criteria 5, 6 and 9.
struct DeskTeacher {
    cfg: ExperimentConfig,
    run: TeacherRun,
    checkpoint: Checkpoint,
    eval: ConditionResult,
    eval_csv: String,
}

struct DeskStudent {
    run: StudentRun,
    eval: ConditionResult,
    eval_csv: String,
}

struct Ctx {
    root: PathBuf,
    reach: Option<(TeacherRun, Duration)>,
    teacher: Option<DeskTeacher>,
    student: Option<DeskStudent>,
}

/// Desk-scale problem. Training keeps the default eight environment slots,
/// all stepped on one thread.
fn desk_config(seed_value: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk_scale();
    c.seed = seed_value;
    c.rl.iterations = DESK_ITERATIONS;
    c
}

fn reach_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::reach_toy();
    c.workers = 1;
    c.rl.iterations = REACH_ITERATIONS;
    c.rl.eval_every = 10;
    c
}

/// 100-trial evaluation on the desk distribution; every agent sees the same
/// scenario seeds.
fn desk_eval(cfg: &ExperimentConfig, agent: &Agent, ck: &Checkpoint) -> Result<(ConditionResult, String), String> {
    let cond = EvalCondition { name: "desk".into(), n_trials: EVAL_TRIALS, policy: agent.kind(), ..Default::default() };
    let setup = EvalSetup {
        cfg,
        agent,
        normalization: ck.normalization,
        base_seed: seed::derive_seed(cfg.seed, "acceptance-eval", 0),
    };
    let rep = run_eval(&setup, std::slice::from_ref(&cond)).map_err(err)?;
    let csv = rep.to_csv();
    Ok((rep.rows.into_iter().next().expect("one condition"), csv))
}

fn train_desk_teacher(cfg: &ExperimentConfig, dir: &Path) -> Result<DeskTeacher, String> {
    let run = train_teacher(cfg, dir).map_err(err)?;
    let checkpoint = Checkpoint::load(&run.best_checkpoint).map_err(err)?;
    let agent = Agent::from_checkpoints(&checkpoint, None, false).map_err(err)?;
    let (eval, eval_csv) = desk_eval(cfg, &agent, &checkpoint)?;
    Ok(DeskTeacher { cfg: cfg.clone(), run, checkpoint, eval, eval_csv })
}

fn train_desk_student(t: &DeskTeacher, dir: &Path) -> Result<DeskStudent, String> {
    let run = train_student(&t.cfg, &t.checkpoint, dir).map_err(err)?;
    let enc = Checkpoint::load(&run.best_checkpoint).map_err(err)?;
    let agent = Agent::from_checkpoints(&t.checkpoint, Some(&enc), t.cfg.distill.threshold_alignment).map_err(err)?;
    let (eval, eval_csv) = desk_eval(&t.cfg, &agent, &t.checkpoint)?;
    Ok(DeskStudent { run, eval, eval_csv })
}

impl Ctx {
    fn reach(&mut self) -> Result<&(TeacherRun, Duration), String> {
        if self.reach.is_none() {
            let t = Instant::now();
            let run = train_teacher(&reach_config(), &self.root.join("reach-1")).map_err(err)?;
            self.reach = Some((run, t.elapsed()));
        }
        Ok(self.reach.as_ref().unwrap())
    }

    fn teacher(&mut self) -> Result<&DeskTeacher, String> {
        if self.teacher.is_none() {
            self.teacher = Some(train_desk_teacher(&desk_config(0), &self.root.join("desk-teacher-1"))?);
        }
        Ok(self.teacher.as_ref().unwrap())
    }

    fn student(&mut self) -> Result<&DeskStudent, String> {
        if self.student.is_none() {
            let dir = self.root.join("desk-student-1");
            let s = train_desk_student(self.teacher()?, &dir)?;
            self.student = Some(s);
        }
        Ok(self.student.as_ref().unwrap())
    }
}

// ---------------------------------------------------------------- 1

/// Closed-form free response of `m x'' + b x' + k x = 0` from rest at `x0`,
/// via the characteristic roots.
fn oscillator_by_roots(m: f64, k: f64, b: f64, x0: f64, t: f64) -> f64 {
    let disc = Complex::new(b * b - 4.0 * m * k, 0.0).sqrt();
    let r1 = (Complex::new(-b, 0.0) + disc) / (2.0 * m);
    let r2 = (Complex::new(-b, 0.0) - disc) / (2.0 * m);
    if (r1 - r2).norm() < 1e-12 * r1.norm().max(1.0) {
        // repeated root
        let r = r1.re;
        return x0 * (1.0 - r * t) * (r * t).exp();
    }
    // x(0) = x0, x'(0) = 0
    let c1 = x0 * r2 / (r2 - r1);
    let c2 = -x0 * r1 / (r2 - r1);
    (c1 * (r1 * t).exp() + c2 * (r2 * t).exp()).re
}

fn physics_fidelity(_: &mut Ctx) -> Checked {
    let start = Instant::now();
    let cfg = PhysicsConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();

    let hz = 1.0 / cfg.substep_dt();
    ok &= (hz - OSC_SUBSTEP_HZ).abs() < 1e-6;
    parts.push(format!("substep {hz:.0} Hz"));

    let masses = [cfg.body.distal_mass, cfg.body.distal_inertia[0], cfg.body.distal_inertia[1], cfg.body.distal_inertia[2]];
    let (k, b) = (cfg.wrist.stiffness(), cfg.wrist.damping());
    let amplitudes = [0.01, 0.05, 0.05, 0.05];
    for dof in 0..4 {
        // the reference used by the simulator check agrees with an independent root solve
        let ref_gap = (0..=250)
            .map(|i| {
                let t = i as f64 * 0.002;
                (damped_oscillator(masses[dof], k[dof], b[dof], 1.0, t) - oscillator_by_roots(masses[dof], k[dof], b[dof], 1.0, t)).abs()
            })
            .fold(0.0, f64::max);
        let e = oscillator_error(&cfg, dof, amplitudes[dof]).map_err(err)?;
        ok &= ref_gap < 1e-9 && e < OSC_RMS_TOL;
        parts.push(format!("{} rms {:.3}% (tol {:.0}%, ref gap {ref_gap:.1e})", ["z", "rx", "ry", "rz"][dof], 100.0 * e, 100.0 * OSC_RMS_TOL));
    }

    let inc = max_energy_increase(&cfg, 8, 0).map_err(err)?;
    ok &= inc <= ENERGY_TOL;
    parts.push(format!("max rel energy increase {inc:.2e} (tol {ENERGY_TOL:.0e})"));

    let q = gravity_sag(&cfg).map_err(err)?;
    let want = -cfg.body.distal_mass * cfg.body.gravity / cfg.wrist.k_z;
    ok &= (q - want).abs() <= SAG_TOL;
    parts.push(format!("sag {q:.6} vs m*g/k_z {want:.6} (tol {SAG_TOL:.0e})"));

    let el = start.elapsed();
    ok &= el < PHYSICS_BUDGET;
    parts.push(format!("{:.1} s", el.as_secs_f64()));
    Ok(Outcome::new(ok, parts.join("; ")))
}

// ---------------------------------------------------------------- 2

struct Tally {
    worst: f64,
    failures: Vec<String>,
}

impl Tally {
    fn num(&mut self, what: &str, got: f64, want: f64) {
        let e = (got - want).abs();
        self.worst = self.worst.max(e);
        if e.is_nan() || e > FORMULA_TOL {
            self.failures.push(format!("{what}: {got} != {want}"));
        }
    }

    fn truth(&mut self, what: &str, ok: bool) {
        if !ok {
            self.failures.push(what.to_string());
        }
    }
}

fn formula_exactness(_: &mut Ctx) -> Checked {
    let mut t = Tally { worst: 0.0, failures: Vec::new() };
    let zero = Action([0.0; 3]);
    let down = Action([0.0, 0.0, -1.0]);

    // reward terms
    t.num("progress", compute_reward(0.020, 0.019, &zero, &zero, false, false), 1.0);
    t.num("insertion penalty", compute_reward(0.02, 0.02, &down, &down, false, false), -1.0);
    t.num("aligned success", compute_reward(0.02, 0.02, &down, &down, true, true), 0.999);
    t.num("smoothness", compute_reward(0.02, 0.02, &Action([1.0, 0.0, 0.0]), &Action([0.0, 1.0, 0.0]), true, false), -2.0);

    // weighted distance and alignment
    t.num("d(0)", weighted_distance(&Vec3::zeros()), 0.0);
    t.num("d(x)", weighted_distance(&Vec3::new(0.01, 0.0, 0.0)), 0.01);
    t.num("d(z)", weighted_distance(&Vec3::new(0.0, 0.0, 0.01)), 0.001f64.sqrt());
    t.truth("aligned on axis", alignment_state(&Vec3::new(0.0, 0.0, 0.05)));
    t.truth("not aligned at 7 mm", !alignment_state(&Vec3::new(0.007, 0.0, 0.01)));
    t.truth("aligned at 5.66 mm", alignment_state(&Vec3::new(0.004, 0.004, 0.02)));

    // termination
    t.truth("success below 5 mm", check_termination(0.01, 0.02, &Vec3::new(0.0, 0.0, 0.004), 3) == Termination::Success);
    t.truth(
        "divergence beyond 1.2 d0",
        check_termination(0.025, 0.020, &Vec3::new(0.0, 0.02, 0.0), 3) == Termination::FailDivergence,
    );
    t.truth(
        "no divergence at 1.19 d0",
        check_termination(0.0238, 0.020, &Vec3::new(0.0, 0.02, 0.0), 3) == Termination::Continue,
    );
    t.truth("timeout at 200 steps", check_termination(0.01, 0.01, &Vec3::new(0.01, 0.0, 0.0), 200) == Termination::FailTimeout);
    t.truth("running at 199 steps", check_termination(0.01, 0.01, &Vec3::new(0.01, 0.0, 0.0), 199) == Termination::Continue);

    // failure penalty end to end: drive the peg straight up until it diverges
    let cfg = ExperimentConfig::default();
    let mut env = PegInHoleEnv::new(cfg.physics, cfg.env, cfg.randomization.all_off());
    env.reset(&Scenario::nominal(&cfg.randomization, ShapeKind::Circle)).map_err(err)?;
    let up = Action([0.0, 0.0, 1.0]);
    let mut d_prev = env.initial_distance().expect("reset");
    let mut prev = Action::zero();
    let mut last = None;
    for _ in 0..200 {
        let r = env.step(&up).map_err(err)?;
        let expected = compute_reward(d_prev, r.info.d, &up, &prev, r.info.aligned, false);
        d_prev = r.info.d;
        prev = up;
        if r.terminated {
            last = Some((r.info.termination, r.reward - expected));
            break;
        }
    }
    match last {
        Some((Termination::FailDivergence, penalty)) => t.num("failure penalty", penalty, -5.0),
        other => t.failures.push(format!("upward drive ended with {other:?}")),
    }

    // 6D rotation encoding
    let six = |r: Mat3| rotation_to_6d(&r).0;
    let rz = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner();
    let a5 = 5f64.to_radians();
    let rx = nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), a5).into_inner();
    for (name, got, want) in [
        ("6d identity", six(Mat3::identity()), [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        ("6d rz90", six(rz), [0.0, 1.0, 0.0, -1.0, 0.0, 0.0]),
        ("6d rx5", six(rx), [1.0, 0.0, 0.0, 0.0, a5.cos(), a5.sin()]),
    ] {
        for i in 0..6 {
            t.num(name, got[i], want[i]);
        }
    }

    // student loss
    let truth = [0.1, -0.2, 0.3, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    t.num("loss exact", student_loss(&truth, Some(50.0), &truth, true, 0.1), 0.0);
    let mut off = truth;
    off[4] += 0.1;
    t.num("loss mse", student_loss(&off, Some(-50.0), &truth, false, 0.1), 0.01 / 9.0);
    t.num("loss bce", student_loss(&truth, Some(0.0), &truth, true, 0.1), 0.1 * 2f64.ln());

    let n_fail = t.failures.len();
    let detail = if n_fail == 0 {
        format!("reward, alignment, termination, 6D encoding and loss examples within {FORMULA_TOL:.0e} (worst {:.1e})", t.worst)
    } else {
        t.failures.join("; ")
    };
    Ok(Outcome::new(n_fail == 0, detail))
}

// ---------------------------------------------------------------- 3

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn uniform(n: usize, s: u64) -> Vec<f64> {
    let mut r = seed::stream(s, "acceptance-gradient", 0);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Worst relative error over `GRAD_SAMPLES` probes that do not straddle a
/// ReLU kink, and the number of skipped probes.
fn probe(
    params: &mut [f64],
    range: std::ops::Range<usize>,
    grad: &[f64],
    seed_value: u64,
    f: impl Fn(&[f64]) -> (f64, Vec<bool>),
) -> (f64, usize) {
    let mut r = seed::stream(seed_value, "acceptance-probe", 0);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    while checked < GRAD_SAMPLES {
        let i = r.random_range(range.clone());
        let orig = params[i];
        params[i] = orig + GRAD_EPS;
        let (fp, kp) = f(params);
        params[i] = orig - GRAD_EPS;
        let (fm, km) = f(params);
        params[i] = orig;
        if kp != km {
            skipped += 1;
            continue;
        }
        worst = worst.max(rel_err(grad[i], (fp - fm) / (2.0 * GRAD_EPS)));
        checked += 1;
    }
    (worst, skipped)
}

fn gradient_correctness(_: &mut Ctx) -> Checked {
    let start = Instant::now();

    // MLP actor-critic, full-size trunk
    let mut p = MlpPolicy::new(16, &[256, 256], 3, &mut seed::stream(21, "acceptance-init", 0));
    let mut jitter = seed::stream(21, "acceptance-jitter", 0);
    for v in p.params_mut().iter_mut() {
        *v += jitter.random_range(-0.05..0.05);
    }
    let batch = 4;
    let x = uniform(batch * 16, 1);
    let (cm, cv) = (uniform(batch * 3, 2), uniform(batch, 3));
    let (_, _, cache) = p.forward_batch(&x, batch).map_err(err)?;
    let mut grad = vec![0.0; p.num_params()];
    p.backward_batch(&cache, &cm, &cv, &mut grad);
    let head = p.log_std_range().start;
    let template = p.clone();
    let mut params = p.params().to_vec();
    let (mlp_worst, _) = probe(&mut params, 0..head, &grad, 22, |q| {
        let mut p = template.clone();
        p.params_mut().copy_from_slice(q);
        let (m, v, _) = p.forward_batch(&x, batch).unwrap();
        let f = m.iter().zip(&cm).map(|(a, b)| a * b).sum::<f64>() + v.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>();
        (f, Vec::new())
    });

    // TCN encoder under the student loss
    let cfg = TcnConfig::encoder(20, true);
    let t = Tcn::new(cfg.clone(), &mut seed::stream(23, "acceptance-init", 0)).map_err(err)?;
    let batch = 3;
    let x = uniform(batch * 20 * 6, 4);
    let truth = uniform(batch * 9, 5);
    let labels = [true, false, true];
    let (y, cache) = t.forward(&x, batch).map_err(err)?;
    let mut dy = vec![0.0; batch * 10];
    for b in 0..batch {
        let (_, dp, dl) = student_loss_grad(&y[b * 10..b * 10 + 9], Some(y[b * 10 + 9]), &truth[b * 9..b * 9 + 9], labels[b], 0.1);
        dy[b * 10..b * 10 + 9].copy_from_slice(&dp);
        dy[b * 10 + 9] = dl.expect("alignment head");
    }
    let mut grad = vec![0.0; t.num_params()];
    t.backward(&cache, &dy, &mut grad);
    let mut params = t.params().to_vec();
    let n = params.len();
    let (tcn_worst, skipped) = probe(&mut params, 0..n, &grad, 24, |q| {
        let t = Tcn::from_params(cfg.clone(), q.to_vec()).unwrap();
        let (y, cache) = t.forward(&x, batch).unwrap();
        let l = (0..batch)
            .map(|b| student_loss(&y[b * 10..b * 10 + 9], Some(y[b * 10 + 9]), &truth[b * 9..b * 9 + 9], labels[b], 0.1))
            .sum();
        (l, cache.relu_pattern())
    });

    let el = start.elapsed();
    let ok = mlp_worst < GRAD_TOL && tcn_worst < GRAD_TOL && el < GRADIENT_BUDGET;
    Ok(Outcome::new(
        ok,
        format!(
            "MLP worst rel err {mlp_worst:.2e}, TCN worst rel err {tcn_worst:.2e} over {GRAD_SAMPLES} params each \
             ({skipped} kink probes skipped; tol {GRAD_TOL:.0e}); {:.1} s",
            el.as_secs_f64()
        ),
    ))
}

// ---------------------------------------------------------------- 4

fn rl_sanity(ctx: &mut Ctx) -> Checked {
    let (run, el) = ctx.reach()?;
    let hit = run.evals.iter().find(|e| e.iteration <= REACH_ITERATIONS && e.success_rate >= REACH_SUCCESS);
    let ok = hit.is_some() && *el < REACH_BUDGET;
    let detail = match hit {
        Some(e) => format!("{:.0}% success at iteration {} ({} eval episodes)", 100.0 * e.success_rate, e.iteration, reach_config().rl.eval_episodes),
        None => format!("best {:.0}% at iteration {}", 100.0 * run.best_success, run.best_iteration),
    };
    Ok(Outcome::new(ok, format!("{detail}; {:.0} s", el.as_secs_f64())))
}

// ---------------------------------------------------------------- 5

fn desk_teacher(ctx: &mut Ctx) -> Checked {
    let t = ctx.teacher()?;
    let start = t.run.smoothed_return(CURVE_START, CURVE_WINDOW);
    let best = t.run.smoothed_return(t.run.best_iteration, CURVE_WINDOW);
    let rate = t.eval.success_rate;
    let ok = rate >= DESK_SUCCESS && best > start && t.run.best_iteration > CURVE_START;
    Ok(Outcome::new(
        ok,
        format!(
            "best checkpoint (iteration {}) {:.0}% on {EVAL_TRIALS} held-out trials (need {:.0}%); \
             mean return {start:.1} at iteration {CURVE_START} -> {best:.1} at best ({CURVE_WINDOW}-iteration average)",
            t.run.best_iteration,
            100.0 * rate,
            100.0 * DESK_SUCCESS
        ),
    ))
}

// ---------------------------------------------------------------- 6

fn distillation(ctx: &mut Ctx) -> Checked {
    let teacher_rate = ctx.teacher()?.eval.success_rate;
    let s = ctx.student()?;
    let acc = s.run.best_accuracy;
    let gap = teacher_rate - s.eval.success_rate;
    let ok = acc >= ALIGN_ACCURACY && gap <= STUDENT_GAP + 1e-12;
    Ok(Outcome::new(
        ok,
        format!(
            "held-out alignment accuracy {:.1}% (need {:.0}%); student {:.0}% vs teacher {:.0}% on identical seeds, \
             gap {:.0} pts (max {:.0})",
            100.0 * acc,
            100.0 * ALIGN_ACCURACY,
            100.0 * s.eval.success_rate,
            100.0 * teacher_rate,
            100.0 * gap,
            100.0 * STUDENT_GAP
        ),
    ))
}

// ---------------------------------------------------------------- 7

fn ablation_trend(ctx: &mut Ctx) -> Checked {
    let mut with = Vec::new();
    let mut without = Vec::new();
    for &s in &ABLATION_SEEDS {
        for alignment in [true, false] {
            let mut cfg = desk_config(s);
            cfg.env.include_alignment = alignment;
            let tag = if alignment { "align" } else { "noalign" };
            let dir = ctx.root.join(format!("ablation-{tag}-{s}"));
            let t = train_desk_teacher(&cfg, &dir.join("teacher"))?;
            let st = train_desk_student(&t, &dir.join("student"))?;
            if alignment { &mut with } else { &mut without }.push(st.eval.success_rate);
        }
    }
    let a = summarize_values("with-alignment", &with);
    let b = summarize_values("no-alignment", &without);
    let ok = a.median >= b.median;
    Ok(Outcome::new(
        ok,
        format!(
            "student success quartiles over {} seeds: with alignment min {:.2} q1 {:.2} median {:.2} q3 {:.2} max {:.2}; \
             without min {:.2} q1 {:.2} median {:.2} q3 {:.2} max {:.2}",
            ABLATION_SEEDS.len(),
            a.min,
            a.q1,
            a.median,
            a.q3,
            a.max,
            b.min,
            b.q1,
            b.median,
            b.q3,
            b.max
        ),
    ))
}

// ---------------------------------------------------------------- 8

fn oracle_solvability(_: &mut Ctx) -> Checked {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let agent = Agent::Oracle(ScriptedOracle::default());
    let setup = EvalSetup { cfg: &cfg, agent: &agent, normalization: None, base_seed: seed::derive_seed(cfg.seed, "acceptance-oracle", 0) };
    let off = EvalCondition {
        name: "off".into(),
        n_trials: EVAL_TRIALS,
        policy: agent.kind(),
        randomization: Some(cfg.randomization.all_off()),
        ..Default::default()
    };
    let full = EvalCondition { name: "full".into(), n_trials: EVAL_TRIALS, policy: agent.kind(), ..Default::default() };
    let r_off = run_condition(&setup, &off, 0).map_err(err)?;
    let r_full = run_condition(&setup, &full, 1).map_err(err)?;
    let el = start.elapsed();
    let ok = r_off.success_rate >= ORACLE_OFF && r_full.success_rate >= ORACLE_FULL && el < ORACLE_BUDGET;
    Ok(Outcome::new(
        ok,
        format!(
            "randomization off {}/{} (need 100%), full randomization {}/{} (need {:.0}%); {:.0} s",
            r_off.successes,
            r_off.n_trials,
            r_full.successes,
            r_full.n_trials,
            100.0 * ORACLE_FULL,
            el.as_secs_f64()
        ),
    ))
}

// ---------------------------------------------------------------- 9

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

/// Names of files that differ between two run directories.
fn differing(a: &Path, b: &Path, files: &[&str]) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for f in files {
        if read(&a.join(f))? != read(&b.join(f))? {
            out.push(f.to_string());
        }
    }
    Ok(out)
}

fn reproducibility(ctx: &mut Ctx) -> Checked {
    let root = ctx.root.clone();
    let mut diffs = Vec::new();

    ctx.reach()?;
    train_teacher(&reach_config(), &root.join("reach-2")).map_err(err)?;
    let teacher_files = ["teacher_best.swck", "teacher_final.swck", "learning_curve.csv", "eval_curve.csv"];
    diffs.extend(differing(&root.join("reach-1"), &root.join("reach-2"), &teacher_files)?.into_iter().map(|f| format!("reach/{f}")));

    let (t1_csv, s1_csv) = {
        let t = ctx.teacher()?.eval_csv.clone();
        (t, ctx.student()?.eval_csv.clone())
    };
    let t2 = train_desk_teacher(&desk_config(0), &root.join("desk-teacher-2"))?;
    let s2 = train_desk_student(&t2, &root.join("desk-student-2"))?;
    diffs.extend(
        differing(&root.join("desk-teacher-1"), &root.join("desk-teacher-2"), &teacher_files)?
            .into_iter()
            .map(|f| format!("teacher/{f}")),
    );
    let student_files = ["encoder_best.swck", "encoder_final.swck", "student_curve.csv", "student_heldout.csv"];
    diffs.extend(
        differing(&root.join("desk-student-1"), &root.join("desk-student-2"), &student_files)?
            .into_iter()
            .map(|f| format!("student/{f}")),
    );
    if t1_csv != t2.eval_csv {
        diffs.push("teacher eval report".into());
    }
    if s1_csv != s2.eval_csv {
        diffs.push("student eval report".into());
    }
    Ok(Outcome::new(
        diffs.is_empty(),
        if diffs.is_empty() {
            "reach, teacher and student checkpoints, curves and eval reports bitwise identical across two single-threaded runs"
                .to_string()
        } else {
            format!("differences: {}", diffs.join(", "))
        },
    ))
}

// ---------------------------------------------------------------- 10

fn report_formats(ctx: &mut Ctx) -> Checked {
    let mut problems = Vec::new();
    let mut cfg = ExperimentConfig::default();
    cfg.eval.n_trials = 2;
    cfg.workers = 1;
    let policy = MlpPolicy::new(cfg.env.policy_input_dim(), &[16, 16], 3, &mut seed::stream(5, "acceptance-policy", 0));
    let agent = Agent::Teacher(policy.clone());
    let setup = EvalSetup { cfg: &cfg, agent: &agent, normalization: None, base_seed: cfg.seed };
    let conditions = cfg.eval.conditions_for(agent.kind(), true);
    let rep = run_eval(&setup, &conditions).map_err(err)?;

    let csv = rep.to_csv();
    let mut lines = csv.lines();
    if lines.next() != Some(REPORT_CSV_HEADER) {
        problems.push("report header".to_string());
    }
    let cols = REPORT_CSV_HEADER.split(',').count();
    let body: Vec<&str> = lines.collect();
    let shapes = ShapeKind::ALL.len();
    if body.len() != shapes * GRID_DEGREES.len() || body.iter().any(|l| l.split(',').count() != cols) {
        problems.push(format!("report has {} rows, want {}", body.len(), shapes * GRID_DEGREES.len()));
    }
    for shape in ShapeKind::ALL {
        for deg in GRID_DEGREES {
            let n = rep.rows.iter().filter(|r| r.peg_shape == shape && r.misalignment_deg == Some(deg) && r.n_trials == 2).count();
            if n != 1 {
                problems.push(format!("grid cell {shape}/{deg:+} appears {n} times"));
            }
        }
    }
    let table = table_one(&rep);
    let mut tl = table.lines();
    if tl.next() != Some("peg_shape,-5deg,+0deg,+5deg,trials") || tl.count() != shapes {
        problems.push(format!("table layout:\n{table}"));
    }

    let enc = Tcn::new(cfg.distill.encoder_config(true), &mut seed::stream(6, "acceptance-encoder", 0)).map_err(err)?;
    let rows = prediction_trace(&cfg, &enc, &policy, 2, "acceptance-trace").map_err(err)?;
    let path = ctx.root.join("formats").join("prediction_trace.csv");
    write_prediction_trace(&rows, &path).map_err(err)?;
    let text = std::fs::read_to_string(&path).map_err(err)?;
    let mut pl = text.lines();
    if pl.next() != Some(PREDICTION_TRACE_HEADER) {
        problems.push("prediction trace header".into());
    }
    let data: Vec<&str> = pl.collect();
    let well_formed = data.len() == rows.len()
        && data.iter().all(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f.len() == 9 && f[..8].iter().all(|v| v.parse::<f64>().is_ok()) && (f[8] == "0" || f[8] == "1")
        });
    if !well_formed {
        problems.push("prediction trace rows".into());
    }

    // the checkpoint that would feed an eval round-trips with its metadata
    let meta = CheckpointMeta { iteration: 0, seed: 0, include_alignment: true, extra: serde_json::Value::Null };
    let ck = Checkpoint::from_policy(&policy, None, meta).map_err(err)?;
    if Checkpoint::from_bytes(&ck.to_bytes()).map_err(err)? != ck {
        problems.push("checkpoint round trip".into());
    }

    Ok(Outcome::new(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{} grid rows ({shapes} shapes x {{-5, 0, +5}} deg x 2 trials), table layout, {} prediction-trace rows", body.len(), rows.len())
        } else {
            problems.join("; ")
        },
    ))
}

// ----------------------------------------------------------------

struct Criterion {
    number: u32,
    slug: &'static str,
    extended: bool,
    run: fn(&mut Ctx) -> Checked,
}

const CRITERIA: [Criterion; 10] = [
    Criterion { number: 1, slug: "physics-fidelity", extended: false, run: physics_fidelity },
    Criterion { number: 2, slug: "formula-exactness", extended: false, run: formula_exactness },
    Criterion { number: 3, slug: "gradient-correctness", extended: false, run: gradient_correctness },
    Criterion { number: 4, slug: "rl-sanity-reach", extended: false, run: rl_sanity },
    Criterion { number: 5, slug: "desk-scale-teacher", extended: false, run: desk_teacher },
    Criterion { number: 6, slug: "distillation-quality", extended: false, run: distillation },
    Criterion { number: 7, slug: "ablation-trend", extended: true, run: ablation_trend },
    Criterion { number: 8, slug: "oracle-solvability", extended: false, run: oracle_solvability },
    Criterion { number: 9, slug: "reproducibility", extended: false, run: reproducibility },
    Criterion { number: 10, slug: "report-formats", extended: false, run: report_formats },
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let include_extended = args.iter().any(|a| a == "--include-ignored" || a == "--ignored");
    let only_extended = args.iter().any(|a| a == "--ignored");
    let filters: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
    if args.iter().any(|a| a == "--list") {
        for c in &CRITERIA {
            println!("criterion-{}-{}: test", c.number, c.slug);
        }
        return;
    }

    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).expect("acceptance work directory");
    let mut ctx = Ctx { root, reach: None, teacher: None, student: None };

    let mut failed = 0;
    let mut ran = 0;
    for c in &CRITERIA {
        let selected = filters.is_empty() || filters.iter().any(|f| *f == c.number.to_string() || c.slug.contains(f));
        if !selected || (only_extended && !c.extended) {
            continue;
        }
        if c.extended && !include_extended {
            println!("SKIP criterion {} {}: extended run (pass --include-ignored)", c.number, c.slug);
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = (c.run)(&mut ctx).unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        if !outcome.passed {
            failed += 1;
        }
        println!("{tag} criterion {} {}: {} [{:.1} s]", c.number, c.slug, outcome.detail, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
