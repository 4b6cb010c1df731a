use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gasdf::eval::{
    eval_sdf_field, extract_mesh, mesh_metrics, prior_study, EvalReport, OraclePredictor, SdfGridSpec, Slice,
    TriMesh, DEFAULT_SAMPLES, DEFAULT_THRESHOLD,
};
use gasdf::geometry::rng::mix_seed;
use gasdf::geometry::frames::{load_frames, write_frame_set};
use gasdf::geometry::{generate_frames, AnalyticScene, Frame, SceneFile, ROOM_SCENE};
use gasdf::sampling::{generate_batch, write_batch_dump};
use gasdf::training::{save_checkpoint, Config, FrameLog, Profile, SdfPredictor};
use gasdf::{Checkpoint, State};

/// Padding around the scene bounds for evaluation and meshing grids, meters.
const GRID_PADDING: f64 = 0.15;
/// Central-difference step for evaluated gradients, meters.
const FD_STEP: f64 = 0.01;

#[derive(Parser)]
#[command(name = "gasdf", version, about = "Online SDF reconstruction from posed point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ray-cast a scene's trajectory into frame files and a manifest.
    Synth(SynthArgs),
    /// Train online over a frame stream and write a checkpoint.
    Run(RunArgs),
    /// Extract the zero level set of a checkpoint as PLY.
    Mesh(MeshArgs),
    /// Sample predicted distances on a horizontal plane (NSLC).
    Slice(SliceArgs),
    /// Compare a checkpoint against the scene's analytic distance.
    Eval(EvalArgs),
    /// Compare prior structures and interpolations with exact vertex data.
    Study(StudyArgs),
}

#[derive(Args)]
struct SceneArg {
    /// Scene file (TOML); the bundled room when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
}

impl SceneArg {
    fn load(&self) -> anyhow::Result<SceneFile> {
        match &self.scene {
            Some(p) => SceneFile::load(p).with_context(|| format!("loading scene {}", p.display())),
            None => Ok(SceneFile::parse(ROOM_SCENE)?),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2048)]
    rays: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// Frame manifest written by `synth`.
    #[arg(long)]
    frames: PathBuf,
    /// TOML overrides applied on top of the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// paper-defaults or desk-scale.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from this checkpoint; its configuration is used.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Also write a checkpoint every k frames.
    #[arg(long)]
    every: Option<u64>,
    /// Write the batch the next step would draw to this file (NSBT).
    #[arg(long)]
    dump_batch: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long)]
    out: PathBuf,
    /// Grid spacing, meters.
    #[arg(long, default_value_t = 0.05)]
    res: f64,
}

#[derive(Args)]
struct SliceArgs {
    /// Checkpoint to sample; required unless --oracle.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sample the scene's analytic distance instead of a checkpoint.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long)]
    z: f64,
    #[arg(long, default_value_t = 0.05)]
    res: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate; required unless --oracle.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluate the analytic distance itself.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, default_value_t = 0.05)]
    res: f64,
    /// Report file; printed to stdout as well.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Seed for surface sampling of the mesh metrics.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    scene: SceneArg,
    /// Frame manifest; frames are ray-cast from the scene trajectory when omitted.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// paper-defaults or desk-scale; selects the octree.
    #[arg(long, default_value = "desk-scale")]
    profile: String,
    #[arg(long, default_value_t = 0.05)]
    res: f64,
    #[arg(long, default_value_t = 2048)]
    rays: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Invalid flag combinations.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<gasdf::Error>() {
            return match e {
                gasdf::Error::Config(_) | gasdf::Error::Scene(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GASDF_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Mesh(a) => mesh(a),
        Command::Slice(a) => slice(a),
        Command::Eval(a) => eval(a),
        Command::Study(a) => study(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let file = a.scene.load()?;
    let scene = file.scene()?;
    let poses = file.poses()?;
    if poses.is_empty() {
        return Err(gasdf::Error::Scene("scene has no trajectory".into()).into());
    }
    let frames = generate_frames(&scene, &poses, a.rays, a.seed)?;
    let manifest = write_frame_set(&a.out, &frames)?;
    log::info!("wrote {} frames, manifest {}", frames.len(), manifest.display());
    Ok(())
}

fn parse_profile(name: &str) -> anyhow::Result<Profile> {
    Ok(name.parse::<Profile>()?)
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    if a.every == Some(0) {
        return Err(usage("--every must be at least 1"));
    }
    let frames = load_frames(&a.frames).with_context(|| format!("reading frames from {}", a.frames.display()))?;
    let mut state: State = match &a.checkpoint {
        Some(path) => {
            if a.config.is_some() || a.profile.is_some() || a.seed.is_some() {
                return Err(usage("--config, --profile and --seed cannot be combined with --checkpoint"));
            }
            Checkpoint::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?
                .into_state(&frames)?
        }
        None => {
            let profile = parse_profile(a.profile.as_deref().unwrap_or("desk-scale"))?;
            let mut config = Config::load(profile, a.config.as_deref())?;
            if let Some(seed) = a.seed {
                config.train.seed = seed;
            }
            State::new(config)?
        }
    };
    let start = usize::try_from(state.frames_seen)?.min(frames.len());
    if start == frames.len() && !frames.is_empty() {
        log::warn!("checkpoint has consumed the whole stream; nothing to train");
    }
    fs::create_dir_all(&a.out)?;
    let mut log_file = BufWriter::new(File::create(a.out.join("frames.log"))?);
    for frame in &frames[start..] {
        let entry = match state.process_frame(frame) {
            Ok(entry) => entry,
            Err(gasdf::Error::EmptyFrame(id)) => {
                log::warn!("skipping empty frame {id}");
                continue;
            }
            Err(e) => {
                log_file.flush()?;
                return Err(e.into());
            }
        };
        log::info!("{entry}");
        writeln!(log_file, "{}", log_line(&entry))?;
        if let Some(k) = a.every {
            if state.frames_seen.is_multiple_of(k) {
                save_checkpoint(&a.out.join(format!("checkpoint_{:05}.nsck", state.frames_seen)), &state)?;
            }
        }
    }
    log_file.flush()?;
    save_checkpoint(&a.out.join("checkpoint.nsck"), &state)?;
    if let Some(path) = &a.dump_batch {
        dump_next_batch(&state, path)?;
    }
    Ok(())
}

/// The per-frame log line without wall time, so reruns compare equal.
fn log_line(l: &FrameLog) -> String {
    format!(
        "frame_id={} octants_created={} vertices_created={} keyframe_inserted={} keyframes={} steps={} recon={:.6e} eik={:.6e} proj={:.6e}",
        l.frame_id, l.octants_created, l.vertices_created, l.keyframe_inserted, l.keyframes, l.steps, l.recon, l.eik, l.proj
    )
}

fn dump_next_batch(state: &State, path: &Path) -> anyhow::Result<()> {
    let selected = state.keyframes.select(state.config.sampling.window);
    if selected.is_empty() {
        bail!("no keyframes to draw a batch from");
    }
    let refs: Vec<&Frame> = selected.iter().map(|&i| &*state.keyframes.get(i).frame).collect();
    let batch = generate_batch(&refs, &state.config.sampling, mix_seed(state.config.train.seed, state.step))?;
    let mut w = BufWriter::new(File::create(path)?);
    write_batch_dump(&mut w, &batch)?;
    w.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<gasdf::Model> {
    Ok(Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?.model)
}

fn grid_for(scene: &AnalyticScene<f64>, predictor: &dyn SdfPredictor, res: f64) -> anyhow::Result<SdfGridSpec> {
    Ok(SdfGridSpec::around(scene.bounds(), GRID_PADDING, &predictor.root(), res)?)
}

fn write_ply(mesh: &TriMesh, path: &Path) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    mesh.write_ply(&mut w)?;
    w.flush()?;
    Ok(())
}

fn mesh(a: MeshArgs) -> anyhow::Result<()> {
    let model = load_model(&a.checkpoint)?;
    let grid = match &a.scene.scene {
        Some(_) => grid_for(&a.scene.load()?.scene()?, &model, a.res)?,
        None => SdfGridSpec { bounds: model.root(), resolution: a.res },
    };
    let mesh = extract_mesh(&model, &grid, 0.0)?;
    write_ply(&mesh, &a.out)?;
    log::info!("{} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    Ok(())
}

/// Either a loaded checkpoint or `--oracle`, never both.
fn pick_checkpoint(checkpoint: &Option<PathBuf>, oracle: bool) -> anyhow::Result<Option<&Path>> {
    match (checkpoint, oracle) {
        (Some(_), true) => Err(usage("--checkpoint and --oracle are mutually exclusive")),
        (None, false) => Err(usage("one of --checkpoint or --oracle is required")),
        (Some(p), false) => Ok(Some(p)),
        (None, true) => Ok(None),
    }
}

fn slice(a: SliceArgs) -> anyhow::Result<()> {
    let slice = match pick_checkpoint(&a.checkpoint, a.oracle)? {
        Some(path) => Slice::sample(&load_model(path)?, a.z, a.res)?,
        None => Slice::sample(&OraclePredictor::new(&a.scene.load()?.scene()?), a.z, a.res)?,
    };
    let mut w = BufWriter::new(File::create(&a.out)?);
    slice.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let scene = a.scene.load()?.scene()?;
    let oracle = OraclePredictor::new(&scene);
    let model = pick_checkpoint(&a.checkpoint, a.oracle)?.map(load_model).transpose()?;
    let predictor: &dyn SdfPredictor = match &model {
        Some(m) => m,
        None => &oracle,
    };
    let grid = grid_for(&scene, predictor, a.res)?;
    let sdf = eval_sdf_field(predictor, &scene, &grid, FD_STEP)?;
    let gt = extract_mesh(&oracle, &grid, 0.0)?;
    let mesh = match extract_mesh(predictor, &grid, 0.0) {
        Ok(recon) => Some(mesh_metrics(&recon, &gt, DEFAULT_SAMPLES, DEFAULT_THRESHOLD, a.seed)?),
        Err(gasdf::Error::EmptyMesh) => {
            log::warn!("prediction has no zero crossing; mesh metrics omitted");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let report = EvalReport { mesh, sdf };
    print!("{report}");
    if let Some(path) = &a.report {
        fs::write(path, report.to_string())?;
    }
    Ok(())
}

fn study(a: StudyArgs) -> anyhow::Result<()> {
    let file = a.scene.load()?;
    let scene = file.scene()?;
    let frames = match &a.frames {
        Some(m) => load_frames(m)?,
        None => generate_frames(&scene, &file.poses()?, a.rays, a.seed)?,
    };
    let octree = Config::profile(parse_profile(&a.profile)?).octree;
    let grid = SdfGridSpec::around(scene.bounds(), GRID_PADDING, &octree.root(), a.res)?;
    let report = prior_study(&scene, &frames, &octree, &grid)?;
    log::info!("{:?}", report.audit);
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    match &a.out {
        Some(p) => fs::write(p, buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}
