//! `epochreg`: register two epochs of a scene, map their changes, evaluate
//! against ground truth, and generate synthetic test scenes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epochreg::change::colorize;
use epochreg::eval::{ablation_sweep, evaluate, KBudget};
use epochreg::geom::apply_transform;
use epochreg::io::report::InputSummary;
use epochreg::io::scene_dir::read_joint_dir;
use epochreg::io::{read_epoch_dir, to_json_bytes, write_ply, write_scene_dir, EpochDir, GroundTruth, PlyEncoding, RunReport};
use epochreg::keyframes::KeyframeSet;
use epochreg::pipeline::{detect, register, EpochInput, JointInference, OracleJoint, PrecomputedJoint};
use epochreg::synth::{generate_scene, mock_joint_inference, JointPerturbation, SceneSpec};
use epochreg::{Error, Mode, PipelineConfig, Sim3Transform};

#[derive(Parser)]
#[command(name = "epochreg", version, about = "Bi-temporal point cloud registration and change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory.
    Synth(SynthArgs),
    /// Estimate the epoch-1 → epoch-2 similarity transform.
    Register(RegisterArgs),
    /// Write change-colored clouds and change statistics.
    Detect(DetectArgs),
    /// Score a run report against ground truth.
    Eval(EvalArgs),
    /// Sweep keyframe budgets and modes on a synthetic scene.
    Ablate(AblateArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Keyframes per epoch.
    #[arg(long)]
    k: Option<usize>,
    /// Correspondence cap per epoch.
    #[arg(long)]
    cap: Option<usize>,
    /// Static-set threshold as a multiple of the median residual.
    #[arg(long)]
    alpha: Option<f64>,
    /// Voxel grid resolution for the fine stage.
    #[arg(long)]
    grid: Option<u32>,
    /// Change threshold as a fraction of the scene extent.
    #[arg(long)]
    tau_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `full` or `coarse_only`.
    #[arg(long)]
    mode: Option<Mode>,
    /// JSON pipeline config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => serde_json::from_slice(&read(p, "config")?)
                .map_err(|e| CliError::data("config", Error::Json { path: p.clone(), source: e }))?,
            None => PipelineConfig::default(),
        };
        c.k_keyframes = self.k.unwrap_or(c.k_keyframes);
        c.correspondence_cap = self.cap.unwrap_or(c.correspondence_cap);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.grid_resolution = self.grid.unwrap_or(c.grid_resolution);
        c.tau_ratio = self.tau_ratio.unwrap_or(c.tau_ratio);
        c.seed = self.seed.unwrap_or(c.seed);
        c.mode = self.mode.unwrap_or(c.mode);
        c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scene spec JSON; defaults to a demo scene drawn from `--seed`.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also render depth bundles of this size, e.g. `64x48`.
    #[arg(long, value_parser = parse_size)]
    bundle: Option<(usize, usize)>,
    /// Noise of the exported joint reconstruction (world units).
    #[arg(long, default_value_t = JointPerturbation::default().sigma)]
    joint_sigma: f64,
}

#[derive(Args)]
struct RegisterArgs {
    /// Epoch-1 directory.
    #[arg(long)]
    t1: PathBuf,
    /// Epoch-2 directory.
    #[arg(long)]
    t2: PathBuf,
    /// Directory with the joint reconstruction (`e1.ply`, `e2.ply`).
    #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
    joint: Option<PathBuf>,
    /// Mock the joint reconstruction from ground-truth epoch frames.
    #[arg(long)]
    oracle: bool,
    /// Ground truth file; defaults to `gt.json` next to `--t1`.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Joint-pass noise used with `--oracle` (world units).
    #[arg(long, default_value_t = JointPerturbation::default().sigma)]
    joint_sigma: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    t1: PathBuf,
    #[arg(long)]
    t2: PathBuf,
    /// Run report whose final transform aligns epoch 1.
    #[arg(long, conflicts_with = "transform", required_unless_present = "transform")]
    report: Option<PathBuf>,
    /// Sim(3) JSON aligning epoch 1 to epoch 2.
    #[arg(long)]
    transform: Option<PathBuf>,
    #[arg(long)]
    tau_ratio: Option<f64>,
    /// Output directory for colored clouds and `changes.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Epoch directories holding the predicted trajectories.
    #[arg(long)]
    t1: PathBuf,
    #[arg(long)]
    t2: PathBuf,
    /// Write the metrics here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Scene directory written by `synth`.
    #[arg(long)]
    scene: PathBuf,
    /// Keyframe budgets, e.g. `2,3,5,9,all`.
    #[arg(long, value_delimiter = ',', default_value = "2,3,5,9,20,all")]
    budgets: Vec<KBudget>,
    #[arg(long, value_delimiter = ',', default_value = "coarse_only,full")]
    modes: Vec<Mode>,
    #[arg(long, default_value_t = JointPerturbation::default().sigma)]
    joint_sigma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w = w.parse().map_err(|_| format!("bad width `{w}`"))?;
    let h = h.parse().map_err(|_| format!("bad height `{h}`"))?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data { stage: &'static str, source: Error },
}

impl CliError {
    fn data(stage: &'static str, source: Error) -> Self {
        CliError::Data { stage, source }
    }
}

fn read(path: &Path, stage: &'static str) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::data(stage, Error::Io { path: path.into(), source: e }))
}

fn write(path: &Path, bytes: &[u8], stage: &'static str) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::data(stage, Error::Io { path: path.into(), source: e }))
}

fn stage(name: &'static str) -> impl FnOnce(Error) -> CliError {
    move |e| CliError::data(name, e)
}

fn load_epochs(t1: &Path, t2: &Path) -> Result<[EpochDir; 2], CliError> {
    Ok([
        read_epoch_dir(t1).map_err(stage("load epoch 1"))?,
        read_epoch_dir(t2).map_err(stage("load epoch 2"))?,
    ])
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = match &args.spec {
        Some(p) => serde_json::from_slice(&read(p, "scene spec")?)
            .map_err(|e| CliError::data("scene spec", Error::Json { path: p.clone(), source: e }))?,
        None => SceneSpec::demo(args.seed),
    };
    let scene = generate_scene(&spec).map_err(stage("generate scene"))?;
    let n = scene.n_frames();
    let all = [
        KeyframeSet::select(1, n, n).map_err(stage("joint reconstruction"))?,
        KeyframeSet::select(2, n, n).map_err(stage("joint reconstruction"))?,
    ];
    let p = JointPerturbation { sigma: args.joint_sigma, seed: spec.seed, ..JointPerturbation::default() };
    let joint = mock_joint_inference(&scene, &all, &p).map_err(stage("joint reconstruction"))?;
    write_scene_dir(&scene, Some(&joint), args.bundle, &args.out).map_err(stage("write scene"))?;
    log::info!(
        "wrote {} + {} points to {}",
        scene.epochs[0].cloud.len(),
        scene.epochs[1].cloud.len(),
        args.out.display()
    );
    Ok(())
}

fn register_cmd(args: RegisterArgs) -> Result<(), CliError> {
    let config = args.config.resolve()?;
    let epochs = load_epochs(&args.t1, &args.t2)?;
    let gt_path = args
        .gt
        .clone()
        .or_else(|| args.t1.parent().map(|p| p.join("gt.json")).filter(|p| p.exists()));
    let gt = match &gt_path {
        Some(p) => Some(GroundTruth::read(p).map_err(stage("load ground truth"))?),
        None => None,
    };

    let inputs = [
        EpochInput::from_cloud(&epochs[0].cloud).map_err(stage("load epoch 1"))?,
        EpochInput::from_cloud(&epochs[1].cloud).map_err(stage("load epoch 2"))?,
    ];
    let joint: Box<dyn JointInference + '_> = if args.oracle {
        let gt = gt.as_ref().ok_or_else(|| {
            CliError::Usage("--oracle needs ground truth (--gt or gt.json next to --t1)".into())
        })?;
        Box::new(OracleJoint {
            clouds: [&epochs[0].cloud, &epochs[1].cloud],
            epoch_transforms: gt.epoch_transforms.clone(),
            perturbation: JointPerturbation { sigma: args.joint_sigma, seed: config.seed, ..JointPerturbation::default() },
        })
    } else {
        let dir = args.joint.as_ref().expect("clap requires --joint or --oracle");
        Box::new(PrecomputedJoint(read_joint_dir(dir).map_err(stage("load joint reconstruction"))?))
    };
    let out = register(inputs, joint.as_ref(), &config).map_err(stage("registration"))?;

    let summary = |path: &Path, e: &EpochInput| InputSummary {
        source: path.display().to_string(),
        n_points: e.cloud.len(),
        n_frames: e.n_frames,
    };
    let mut report = RunReport::new(&config, [summary(&args.t1, &inputs[0]), summary(&args.t2, &inputs[1])], &out);
    let map = detect(&epochs[0].cloud, &epochs[1].cloud, &out.final_transform, config.tau_ratio)
        .map_err(stage("change detection"))?;
    report.change = map.stats();
    if let (Some(gt), Some(p1), Some(p2)) = (&gt, &epochs[0].trajectory, &epochs[1].trajectory) {
        let metrics = evaluate(
            &out.final_transform,
            [p1, p2],
            [&gt.trajectories[0], &gt.trajectories[1]],
            &gt.gt_relative,
            &config,
        )
        .map_err(stage("evaluation"))?;
        report.metrics = Some(metrics);
    }
    if let Some(path) = &args.report {
        report.write(path).map_err(stage("write report"))?;
    }
    print!("{}", String::from_utf8_lossy(&to_json_bytes(&out.final_transform)));
    Ok(())
}

fn detect_cmd(args: DetectArgs) -> Result<(), CliError> {
    let (transform, mut tau_ratio) = match (&args.report, &args.transform) {
        (Some(p), _) => {
            let r = RunReport::read(p).map_err(stage("load report"))?;
            (r.final_transform, r.config.tau_ratio)
        }
        (None, Some(p)) => {
            let t: Sim3Transform = serde_json::from_slice(&read(p, "load transform")?)
                .map_err(|e| CliError::data("load transform", Error::Json { path: p.clone(), source: e }))?;
            (t, PipelineConfig::default().tau_ratio)
        }
        (None, None) => unreachable!("clap requires --report or --transform"),
    };
    tau_ratio = args.tau_ratio.unwrap_or(tau_ratio);
    let epochs = load_epochs(&args.t1, &args.t2)?;
    let map = detect(&epochs[0].cloud, &epochs[1].cloud, &transform, tau_ratio)
        .map_err(stage("change detection"))?;
    let aligned = apply_transform(&transform, &epochs[0].cloud);
    let (c1, c2) = colorize(&map, &aligned, &epochs[1].cloud).map_err(stage("colorize"))?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::data("write changes", Error::Io { path: args.out.clone(), source: e }))?;
    let enc = if args.ascii { PlyEncoding::Ascii } else { PlyEncoding::BinaryLittleEndian };
    write_ply(&c1, args.out.join("t1_changes.ply"), enc).map_err(stage("write changes"))?;
    write_ply(&c2, args.out.join("t2_changes.ply"), enc).map_err(stage("write changes"))?;
    let stats = map.stats().expect("classified map");
    let bytes = to_json_bytes(&stats);
    write(&args.out.join("changes.json"), &bytes, "write changes")?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<(), CliError> {
    let report = RunReport::read(&args.report).map_err(stage("load report"))?;
    let gt = GroundTruth::read(&args.gt).map_err(stage("load ground truth"))?;
    let epochs = load_epochs(&args.t1, &args.t2)?;
    let traj = |e: &EpochDir, which: &str| {
        e.trajectory
            .clone()
            .ok_or_else(|| CliError::data("evaluation", Error::TooFewPoses(format!("{which} has no trajectory.json"))))
    };
    let (p1, p2) = (traj(&epochs[0], "--t1")?, traj(&epochs[1], "--t2")?);
    let mut metrics = evaluate(
        &report.final_transform,
        [&p1, &p2],
        [&gt.trajectories[0], &gt.trajectories[1]],
        &gt.gt_relative,
        &report.config,
    )
    .map_err(stage("evaluation"))?;
    metrics.registration_time_s = report.timing.map(|t| t.registration_s);
    let bytes = to_json_bytes(&metrics);
    match &args.out {
        Some(p) => write(p, &bytes, "write metrics")?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn ablate_cmd(args: AblateArgs) -> Result<(), CliError> {
    let config = args.config.resolve()?;
    let spec_path = args.scene.join("spec.json");
    let spec: SceneSpec = serde_json::from_slice(&read(&spec_path, "load scene")?)
        .map_err(|e| CliError::data("load scene", Error::Json { path: spec_path.clone(), source: e }))?;
    let scene = generate_scene(&spec).map_err(stage("load scene"))?;
    let p = JointPerturbation { sigma: args.joint_sigma, seed: config.seed, ..JointPerturbation::default() };
    let table = ablation_sweep(&scene, &args.budgets, &args.modes, &config, &p).map_err(stage("ablation"))?;
    let csv = table.to_csv();
    match &args.out {
        Some(path) => write(path, csv.as_bytes(), "write table")?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Register(a) => register_cmd(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data { stage, source }) => {
            eprintln!("error during {stage}: {source}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("64x48"), Ok((64, 48)));
        assert!(parse_size("64").is_err());
        assert!(parse_size("0x4").is_err());
    }
}
