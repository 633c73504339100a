use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semantic_mcl::eval::{evaluate_run, write_csv, RunResult, Summary};
use semantic_mcl::map::load_map;
use semantic_mcl::render::{render, save_png, Overlay};
use semantic_mcl::runner::{read_pose_csv, read_snapshots, write_pose_csv};
use semantic_mcl::world::write_assets;
use semantic_mcl::{
    compute_edt, generate_sequence, run_sequence, Mode, RunManifest, Sequence, SimConfig, WaypointFile,
};

/// Semantic Monte Carlo localization: simulate, run, evaluate, render.
#[derive(Parser)]
#[command(name = "smcl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the bundled demo and twin-room worlds, routes and configs.
    World {
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a flight along a waypoint file.
    Generate(GenerateArgs),
    /// Replay sequences through the filter and score them.
    Run(RunArgs),
    /// Score estimate files against ground-truth checkpoints.
    Eval(EvalArgs),
    /// Draw the map with particles, trajectories and ground truth.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    waypoints: PathBuf,
    /// Simulator settings (TOML); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Sequence file to write (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint CSV; defaults to `<out stem>.checkpoints.csv`.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML manifest; flags below override its fields.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Sequence files; replaces the manifest list when given.
    #[arg(long = "sequence")]
    sequences: Vec<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra particle snapshot times, seconds.
    #[arg(long = "snapshot")]
    snapshots: Vec<f64>,
    /// Count a run as converged at the first checkpoint under 0.5 m.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimate CSV (t,x,y,theta); repeat and pair with --checkpoints.
    #[arg(long = "estimates", required = true)]
    estimates: Vec<PathBuf>,
    /// Checkpoint CSV or sequence file, one per --estimates.
    #[arg(long = "checkpoints", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    lenient: bool,
    /// Results CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Particle snapshots written by `run`; one image per snapshot.
    #[arg(long)]
    particles: Option<PathBuf>,
    /// Estimate CSV drawn as a time-colored trajectory.
    #[arg(long)]
    estimates: Option<PathBuf>,
    /// Sequence file or checkpoint CSV whose checkpoints are drawn as stars.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Pixels per map cell.
    #[arg(long, default_value_t = 2)]
    scale: u32,
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: semantic_mcl::Error| e.to_string())
}

fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.split('.').next().unwrap_or(&name).to_owned()
}

/// Checkpoints from a sequence file (`.jsonl`) or a pose CSV.
fn read_checkpoints(path: &Path) -> Result<Vec<(f64, semantic_mcl::Pose2D)>> {
    if path.extension().is_some_and(|e| e == "jsonl" || e == "json") {
        Ok(Sequence::read(path)?.checkpoints())
    } else {
        Ok(read_pose_csv(path)?)
    }
}

fn print_summary(summary: &Summary) {
    let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.2}"));
    println!(
        "success {}/{} ({:.0}%)  ATE {} m  convergence {} s",
        summary.successes,
        summary.runs,
        summary.success_rate * 100.0,
        fmt(summary.mean_ate),
        fmt(summary.mean_convergence_time)
    );
}

fn world(out: &Path) -> Result<()> {
    write_assets(out)?;
    let sim = toml::to_string(&SimConfig::default())?;
    std::fs::write(out.join("sim.toml"), sim)?;
    let mut manifest = RunManifest::new(
        "map.pgm".into(),
        "map.json".into(),
        (1..=10).map(|k| PathBuf::from(format!("seq/s{k:02}.jsonl"))).collect(),
        "out".into(),
    );
    manifest.snapshot_times = vec![30.0];
    std::fs::write(out.join("manifest.toml"), manifest.to_toml()?)?;
    println!("wrote demo assets to {}", out.display());
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let map = load_map(&args.map, &args.annotations)?;
    let mut config = match &args.config {
        Some(p) => SimConfig::read(p)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    let waypoints = WaypointFile::read(&args.waypoints)?.waypoints;
    let seq = generate_sequence(&map, &waypoints, &config)
        .with_context(|| format!("simulating {}", args.waypoints.display()))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    seq.write(&args.out)?;
    let cp_path = args
        .checkpoints
        .unwrap_or_else(|| args.out.with_file_name(format!("{}.checkpoints.csv", stem(&args.out))));
    write_pose_csv(&cp_path, &seq.checkpoints())?;
    println!(
        "{}: {:.1} s, {} records, {} checkpoints",
        args.out.display(),
        seq.duration(),
        seq.events.len(),
        seq.checkpoints().len()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut manifest = match &args.manifest {
        Some(p) => RunManifest::read(p)?,
        None => {
            let (Some(map), Some(ann), Some(out)) = (&args.map, &args.annotations, &args.output) else {
                bail!("without --manifest, --map, --annotations, --output and --sequence are required");
            };
            RunManifest::new(map.clone(), ann.clone(), Vec::new(), out.clone())
        }
    };
    if let Some(m) = args.map {
        manifest.map = m;
    }
    if let Some(a) = args.annotations {
        manifest.annotations = a;
    }
    if !args.sequences.is_empty() {
        manifest.sequences = args.sequences;
    }
    if let Some(m) = args.mode {
        manifest.mode = m;
    }
    if let Some(o) = args.output {
        manifest.output = o;
    }
    if let Some(n) = args.particles {
        manifest.filter.n_particles = n;
    }
    if let Some(s) = args.seed {
        manifest.filter.rng_seed = s;
    }
    manifest.snapshot_times.extend(args.snapshots);
    manifest.validate()?;

    let map = load_map(&manifest.map, &manifest.annotations)?;
    let edt = compute_edt(&map, manifest.sensor.r_max)?;
    let options = manifest.run_options()?;
    std::fs::create_dir_all(&manifest.output)?;
    let mut results: Vec<(String, RunResult)> = Vec::new();
    for path in &manifest.sequences {
        let seq = Sequence::read(path).with_context(|| format!("reading {}", path.display()))?;
        let log = run_sequence(&map, &edt, &seq, options.clone())?;
        let name = stem(path);
        let out = |suffix: &str| manifest.output.join(format!("{name}.{suffix}"));
        log.write_estimates(&out("estimates.csv"))?;
        log.write_timings(&out("timings.csv"))?;
        if !log.snapshots.is_empty() {
            log.write_snapshots(&out("snapshots.csv"))?;
        }
        let checkpoints = seq.checkpoints();
        if checkpoints.is_empty() {
            println!("{name}: no checkpoints, not scored");
            continue;
        }
        let result = evaluate_run(&log.estimates, &checkpoints, args.lenient)?;
        let worst_ms = log.timings.iter().map(|t| t.seconds).fold(0.0, f64::max) * 1e3;
        println!(
            "{name}: success {}  convergence {}  ATE {}  ({} updates, worst {worst_ms:.1} ms)",
            result.success,
            result.convergence_time.map_or("-".into(), |t| format!("{t:.1} s")),
            result.ate_after_convergence.map_or("-".into(), |a| format!("{a:.2} m")),
            log.timings.len(),
        );
        results.push((name, result));
    }
    if !results.is_empty() {
        let summary = write_csv(&manifest.output.join("results.csv"), &results)?;
        print_summary(&summary);
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    if args.estimates.len() != args.checkpoints.len() {
        bail!(
            "{} estimate files but {} checkpoint files; pass them in pairs",
            args.estimates.len(),
            args.checkpoints.len()
        );
    }
    let mut results = Vec::new();
    for (est, cp) in args.estimates.iter().zip(&args.checkpoints) {
        let r = evaluate_run(&read_pose_csv(est)?, &read_checkpoints(cp)?, args.lenient)
            .with_context(|| format!("scoring {}", est.display()))?;
        results.push((stem(est), r));
    }
    let summary = match &args.out {
        Some(out) => write_csv(out, &results)?,
        None => semantic_mcl::eval::aggregate(&results.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())?,
    };
    for (name, r) in &results {
        println!(
            "{name}: success {}  convergence {:?}  ATE {:?}",
            r.success, r.convergence_time, r.ate_after_convergence
        );
    }
    print_summary(&summary);
    Ok(())
}

fn render_cmd(args: RenderArgs) -> Result<()> {
    let map = load_map(&args.map, &args.annotations)?;
    std::fs::create_dir_all(&args.out)?;
    let trajectory = args
        .estimates
        .as_deref()
        .map(read_pose_csv)
        .transpose()?
        .unwrap_or_default();
    let ground_truth = args
        .ground_truth
        .as_deref()
        .map(read_checkpoints)
        .transpose()?
        .unwrap_or_default();
    let base = Overlay {
        trajectory: &trajectory,
        ground_truth: &ground_truth,
        estimate: trajectory.last().map(|(_, p)| *p),
        ..Overlay::default()
    };
    let path = args.out.join("trajectory.png");
    save_png(&render(&map, &base, args.scale), &path)?;
    println!("{}", path.display());
    if let Some(p) = &args.particles {
        for snap in read_snapshots(p)? {
            let upto: Vec<_> = trajectory.iter().copied().filter(|(t, _)| *t <= snap.t).collect();
            let overlay = Overlay {
                particles: &snap.particles,
                trajectory: &upto,
                estimate: upto.last().map(|(_, p)| *p),
                ground_truth: &[],
            };
            let path = args.out.join(format!("particles_{:07.2}.png", snap.t));
            save_png(&render(&map, &overlay, args.scale), &path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::World { out } => world(&out),
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render_cmd(a),
    }
}
