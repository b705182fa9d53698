use clap::{Parser, Subcommand, ValueEnum};
use line_slam::geometry::Pose2;
use line_slam::harness::{
    self, loop_trajectory, metrics_csv, metrics_table, run_extraction_benchmark, run_slam,
    RunConfig,
};
use line_slam::render::render_svg;
use line_slam::sim::{
    benchmark_env_42, cast_scan, load_environment, room_env, sample_poses, save_environment,
    ScanRecord, SensorModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "line-slam", about = "Line map SLAM benchmark harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvKind {
    /// 42-segment benchmark world with doors and clutter.
    Benchmark,
    /// Small single room.
    Room,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrajectoryKind {
    /// Independent random poses with odometry linking them.
    Random,
    /// Smooth closed loop through the environment.
    Loop,
}

#[derive(Subcommand)]
enum Command {
    /// Write a ground-truth environment file.
    GenEnv {
        #[arg(long, value_enum, default_value_t = EnvKind::Benchmark)]
        kind: EnvKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate scans along a trajectory and write a JSONL scan log.
    GenScans {
        #[arg(long)]
        env: PathBuf,
        /// Number of poses (= scans).
        #[arg(long)]
        poses: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Range noise standard deviation, meters.
        #[arg(long, default_value_t = 0.010)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = TrajectoryKind::Random)]
        trajectory: TrajectoryKind,
        /// Odometry translation noise, meters (0 = exact odometry).
        #[arg(long, default_value_t = 0.0)]
        odom_sigma_xy: f64,
        /// Odometry heading noise, radians.
        #[arg(long, default_value_t = 0.0)]
        odom_sigma_theta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the extraction benchmark described by a config file.
    BenchExtract {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full SLAM pipeline described by a config file.
    Slam {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render a map file (and optional trajectory) to SVG.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum AppError {
    Config(String),
    Runtime(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Runtime(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Runtime(m) => m,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Config(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Runtime(e.to_string())
}

fn gen_scans(
    env_path: &Path,
    poses: usize,
    seed: u64,
    sigma: f64,
    trajectory: TrajectoryKind,
    odom_sigma: (f64, f64),
    out: &Path,
) -> Result<(), AppError> {
    let (odom_sigma_xy, odom_sigma_theta) = odom_sigma;
    if poses == 0 {
        return Err(AppError::Config("--poses must be at least 1".into()));
    }
    let env = load_environment(env_path).map_err(config_err)?;
    let sensor = SensorModel { sigma, ..Default::default() };
    let trajectory: Vec<Pose2> = match trajectory {
        TrajectoryKind::Random => sample_poses(&env, poses, seed, 0.3).map_err(runtime_err)?,
        TrajectoryKind::Loop => loop_trajectory(&env, poses),
    };
    // Odometry noise draws from a stream disjoint from every scan stream.
    let mut odom_rng = ChaCha8Rng::seed_from_u64(seed);
    odom_rng.set_stream(u64::MAX);
    let mut lines = String::new();
    let mut prev: Option<Pose2> = None;
    for (i, pose) in trajectory.iter().enumerate() {
        let scan = cast_scan(&env, pose, &sensor, seed, i as u64);
        let odom = prev.map(|q| {
            let u = q.between(pose);
            Pose2::new(
                u.x + odom_sigma_xy * sample_gauss(&mut odom_rng),
                u.y + odom_sigma_xy * sample_gauss(&mut odom_rng),
                u.theta + odom_sigma_theta * sample_gauss(&mut odom_rng),
            )
        });
        let record = ScanRecord::from_scan(&scan, Some(*pose), odom);
        lines.push_str(&serde_json::to_string(&record).map_err(runtime_err)?);
        lines.push('\n');
        prev = Some(*pose);
    }
    std::fs::write(out, lines).map_err(runtime_err)?;
    Ok(())
}

fn sample_gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on the shared odometry stream; two uniforms per draw.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn load_records(path: &Path) -> Result<Vec<ScanRecord>, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("reading scan log {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(config_err))
        .collect()
}

fn bench_extract(config_path: &Path) -> Result<(), AppError> {
    let config = RunConfig::load(config_path).map_err(config_err)?;
    let env = load_environment(&config.environment).map_err(config_err)?;
    let poses =
        sample_poses(&env, config.scan_count, config.rng_seed, 0.3).map_err(runtime_err)?;
    let extractors: Vec<(String, _)> = config
        .extractors
        .iter()
        .map(|e| (e.name.clone(), e.config.clone()))
        .collect();
    let outcomes = run_extraction_benchmark(
        &env,
        &config.sensor,
        &poses,
        config.rng_seed,
        &extractors,
        config.tol_r,
        config.tol_alpha,
    );
    std::fs::create_dir_all(&config.output_dir).map_err(runtime_err)?;
    std::fs::write(config.output_dir.join("metrics.csv"), metrics_csv(&outcomes))
        .map_err(runtime_err)?;
    eprint!("{}", metrics_table(&outcomes));
    Ok(())
}

fn slam(config_path: &Path) -> Result<(), AppError> {
    let config = RunConfig::load(config_path).map_err(config_err)?;
    let scan_log = config
        .scan_log
        .as_ref()
        .ok_or_else(|| AppError::Config("slam requires scan_log in the config".into()))?;
    let records = load_records(scan_log)?;
    let result = run_slam(&config, &records).map_err(runtime_err)?;
    let map_path = harness::write_slam_outputs(&result, config.rng_seed, &config.output_dir)
        .map_err(runtime_err)?;
    let map: harness::MapOut = serde_json::from_str(
        &std::fs::read_to_string(&map_path).map_err(runtime_err)?,
    )
    .map_err(runtime_err)?;
    let svg = render_svg(&map, &result.trajectory);
    std::fs::write(config.output_dir.join("map.svg"), svg).map_err(runtime_err)?;
    Ok(())
}

fn render(map: &Path, trajectory: Option<&PathBuf>, out: &Path) -> Result<(), AppError> {
    let map: harness::MapOut = serde_json::from_str(
        &std::fs::read_to_string(map)
            .map_err(|e| AppError::Config(format!("reading map {}: {e}", map.display())))?,
    )
    .map_err(config_err)?;
    let traj: Vec<(u64, Pose2)> = match trajectory {
        None => Vec::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(config_err)?;
            let mut traj = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let v: serde_json::Value = serde_json::from_str(line).map_err(config_err)?;
                let id = v["pose_id"].as_u64().unwrap_or(0);
                let p = &v["pose"];
                traj.push((
                    id,
                    Pose2::new(
                        p[0].as_f64().unwrap_or(0.0),
                        p[1].as_f64().unwrap_or(0.0),
                        p[2].as_f64().unwrap_or(0.0),
                    ),
                ));
            }
            traj
        }
    };
    std::fs::write(out, render_svg(&map, &traj)).map_err(runtime_err)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::GenEnv { kind, out } => {
            let env = match kind {
                EnvKind::Benchmark => benchmark_env_42(),
                EnvKind::Room => room_env(),
            };
            save_environment(out, &env).map_err(runtime_err)
        }
        Command::GenScans {
            env,
            poses,
            seed,
            sigma,
            trajectory,
            odom_sigma_xy,
            odom_sigma_theta,
            out,
        } => gen_scans(env, *poses, *seed, *sigma, *trajectory, (*odom_sigma_xy, *odom_sigma_theta), out),
        Command::BenchExtract { config } => bench_extract(config),
        Command::Slam { config } => slam(config),
        Command::Render { map, trajectory, out } => render(map, trajectory.as_ref(), out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
