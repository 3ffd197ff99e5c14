use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use softwrist::config::Ablation;
use softwrist::distill::{dump_prediction_trace, train_student};
use softwrist::evalsuite::{record_rollouts, run_eval, write_table_one, write_trace, Agent, EvalSetup, PolicyKind};
use softwrist::nn::Checkpoint;
use softwrist::physcheck::run_physics_checks;
use softwrist::rl::train::{train_teacher, PolicyArch};
use softwrist::{Error, ExperimentConfig};

const EXIT_CHECK: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "softwrist", version, about = "Soft-wrist peg-in-hole simulation, training and evaluation")]
struct Cli {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker count; overrides the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchArg {
    Mlp,
    Tcn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationArg {
    NoAlignment,
    FixedAngle,
    FixedHole,
    FixedStiffness,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum KindArg {
    Teacher,
    Student,
    StudentNoAlign,
    TcnBaseline,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the privileged teacher (or the TCN baseline with --arch tcn).
    TrainTeacher {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        ablation: Option<AblationArg>,
        #[arg(long, value_enum)]
        arch: Option<ArchArg>,
        /// Override the iteration budget.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Train the student encoder against a frozen teacher.
    TrainStudent {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate a policy over the configured condition grid.
    Eval {
        /// Teacher or TCN-baseline checkpoint.
        #[arg(long)]
        policy: PathBuf,
        /// Student encoder checkpoint; pairs with a teacher --policy.
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Output directory for eval.csv, eval.json and table_one.csv.
        #[arg(long)]
        report: PathBuf,
        /// Policy kind; inferred from the checkpoints when omitted.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Override the trial count of every condition.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the simulator self-checks.
    PhysicsCheck,
    /// Record per-step episode traces.
    Rollout {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        encoder: Option<PathBuf>,
        /// Per-step episode trace CSV.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Prediction-trace output; defaults to `prediction_trace.csv` next to --trace.
        #[arg(long)]
        prediction_trace: Option<PathBuf>,
    },
}

/// Error carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_USAGE,
            Error::CheckpointMismatch(_) => EXIT_MISMATCH,
            Error::Nn(softwrist::NnError::ShapeMismatch(_)) => EXIT_MISMATCH,
            _ => EXIT_CHECK,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    if !path.exists() {
        return Err(usage(format!("checkpoint not found: {}", path.display())));
    }
    Checkpoint::load(path).map_err(|e| Failure::from(Error::from(e)))
}

fn train_teacher_cmd(
    mut cfg: ExperimentConfig,
    out: &Path,
    ablation: Option<AblationArg>,
    arch: Option<ArchArg>,
    iterations: Option<usize>,
) -> Result<(), Failure> {
    if let Some(a) = ablation {
        let ab = match a {
            AblationArg::NoAlignment => Ablation::NoAlignment,
            AblationArg::FixedAngle => Ablation::FixedAngle,
            AblationArg::FixedHole => Ablation::FixedHole,
            AblationArg::FixedStiffness => Ablation::FixedStiffness,
        };
        cfg = ab.apply(&cfg);
    }
    if let Some(a) = arch {
        cfg.rl.arch = match a {
            ArchArg::Mlp => PolicyArch::Mlp,
            ArchArg::Tcn => PolicyArch::Tcn,
        };
    }
    if let Some(n) = iterations {
        cfg.rl.iterations = n;
    }
    cfg.validate()?;
    let run = train_teacher(&cfg, out)?;
    println!(
        "teacher: best eval success {:.3} at iteration {}; checkpoints in {}",
        run.best_success,
        run.best_iteration,
        out.display()
    );
    Ok(())
}

fn train_student_cmd(mut cfg: ExperimentConfig, teacher: &Path, out: &Path, iterations: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = iterations {
        cfg.distill.iterations = n;
    }
    cfg.validate()?;
    let ck = load_checkpoint(teacher)?;
    cfg.snapshot(out)?;
    let run = train_student(&cfg, &ck, out)?;
    println!(
        "student: best held-out alignment accuracy {:.3}; encoder in {}",
        run.best_accuracy,
        run.best_checkpoint.display()
    );
    Ok(())
}

fn eval_cmd(
    mut cfg: ExperimentConfig,
    policy: &Path,
    encoder: Option<&Path>,
    report: &Path,
    kind: Option<KindArg>,
    trials: Option<usize>,
) -> Result<(), Failure> {
    let wants_encoder = matches!(kind, Some(KindArg::Student | KindArg::StudentNoAlign));
    if wants_encoder && encoder.is_none() {
        return Err(usage("student evaluation requires --encoder <CKPT> (the trained student encoder)"));
    }
    let pck = load_checkpoint(policy)?;
    let eck = encoder.map(load_checkpoint).transpose()?;
    let agent = Agent::from_checkpoints(&pck, eck.as_ref(), cfg.distill.threshold_alignment)?;
    if let Some(k) = kind {
        let want = match k {
            KindArg::Teacher => PolicyKind::Teacher,
            KindArg::Student => PolicyKind::Student,
            KindArg::StudentNoAlign => PolicyKind::StudentNoAlign,
            KindArg::TcnBaseline => PolicyKind::TcnBaseline,
        };
        if agent.kind() != want {
            return Err(Failure::from(Error::CheckpointMismatch(format!(
                "--kind {} but the checkpoints form a {} policy",
                want.name(),
                agent.kind().name()
            ))));
        }
    }
    if let Some(n) = trials {
        cfg.eval.n_trials = n;
        for c in &mut cfg.eval.conditions {
            c.n_trials = n;
        }
    }
    cfg.validate()?;
    let alignment = pck.metadata.include_alignment;
    let conditions = cfg.eval.conditions_for(agent.kind(), alignment);
    let setup = EvalSetup { cfg: &cfg, agent: &agent, normalization: pck.normalization, base_seed: cfg.seed };
    let rep = run_eval(&setup, &conditions)?;
    rep.write(report)?;
    write_table_one(&rep, &report.join("table_one.csv"))?;
    cfg.snapshot(report)?;
    for r in &rep.rows {
        println!("{}: {}/{} ({:.3})", r.name, r.successes, r.n_trials, r.success_rate);
    }
    Ok(())
}

fn physics_check_cmd(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let checks = run_physics_checks(&cfg.physics);
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure { code: EXIT_CHECK, message: format!("{failed} physics check(s) failed") });
    }
    Ok(())
}

fn rollout_cmd(
    mut cfg: ExperimentConfig,
    policy: &Path,
    encoder: Option<&Path>,
    trace: &Path,
    episodes: usize,
    prediction_trace: Option<&Path>,
) -> Result<(), Failure> {
    if episodes == 0 {
        return Err(usage("--episodes must be >= 1"));
    }
    let pck = load_checkpoint(policy)?;
    let eck = encoder.map(load_checkpoint).transpose()?;
    let agent = Agent::from_checkpoints(&pck, eck.as_ref(), cfg.distill.threshold_alignment)?;
    cfg.env.include_alignment = pck.metadata.include_alignment;
    if let Some(n) = pck.normalization {
        cfg.env.normalization.position_offset = Some(n.position_offset);
    }
    agent.check_widths(cfg.env.include_alignment, cfg.distill.history_len)?;
    let (rows, outcomes) = record_rollouts(&cfg, &agent, pck.normalization, episodes)?;
    write_trace(&rows, cfg.env.privileged_dim(), trace)?;
    let successes = outcomes.iter().filter(|o| o.success).count();
    println!("rollout: {successes}/{episodes} successful; trace in {}", trace.display());
    if let Agent::Student { encoder, teacher, .. } = &agent {
        let path = prediction_trace
            .map(Path::to_path_buf)
            .unwrap_or_else(|| trace.parent().unwrap_or(Path::new("")).join("prediction_trace.csv"));
        dump_prediction_trace(&cfg, encoder, teacher, episodes, &path)?;
        println!("prediction trace in {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(usage("no command given; see --help"));
    };
    info!("seed {} workers {}", cfg.seed, cfg.workers);
    match command {
        Command::TrainTeacher { out, ablation, arch, iterations } => train_teacher_cmd(cfg, out, *ablation, *arch, *iterations),
        Command::TrainStudent { teacher, out, iterations } => train_student_cmd(cfg, teacher, out, *iterations),
        Command::Eval { policy, encoder, report, kind, trials } => {
            eval_cmd(cfg, policy, encoder.as_deref(), report, *kind, *trials)
        }
        Command::PhysicsCheck => physics_check_cmd(&cfg),
        Command::Rollout { policy, encoder, trace, episodes, prediction_trace } => {
            rollout_cmd(cfg, policy, encoder.as_deref(), trace, *episodes, prediction_trace.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SOFTWRIST_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
