use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fundrank::experiment::{run_experiment, ExperimentSpec};
use fundrank::io::{self, SolutionFile};
use fundrank::multiview::{block_rank2_ratio, MultiviewBlockMatrix, DEFAULT_RANK_TOL};
use fundrank::solver::{solve, Initialization, SolverConfig};
use fundrank::synth::{corrupt, generate_scene, Layout, SceneConfig};
use fundrank::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;
const DEFAULT_PIPELINE_DIR: &str = "fundrank-out";

#[derive(Parser)]
#[command(name = "fundrank", version, about = "Low-rank consistency recovery for pairwise fundamental matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and its corrupted pairwise estimates.
    Gen(GenArgs),
    /// Report the spectrum and numeric rank of a scene's or estimate set's multiview matrix.
    Rankcheck(RankcheckArgs),
    /// Recover consistent pairwise matrices from an estimates file.
    Solve(SolveArgs),
    /// Run a seeded multi-trial experiment described by a JSON spec.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value = "sphere")]
    layout: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative block noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Fraction of observed pairs replaced by random rank-2 blocks.
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    /// Fraction of pairs left unobserved.
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    /// Keep the injected per-pair scales instead of unit-normalizing blocks.
    #[arg(long)]
    raw_scales: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RankcheckArgs {
    /// Scene or estimates JSON file.
    file: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    tol: f64,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, default_value_t = 30)]
    max_irls: usize,
    #[arg(long, default_value_t = 1000)]
    max_admm: usize,
    #[arg(long)]
    tol_irls: Option<f64>,
    #[arg(long)]
    tol_admm: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let defaults = SolverConfig::default();
        SolverConfig {
            delta: self.delta,
            max_irls: self.max_irls,
            max_admm: self.max_admm,
            irls_tol: self.tol_irls.unwrap_or(defaults.irls_tol),
            admm_tol: self.tol_admm.unwrap_or(defaults.admm_tol),
            ..defaults
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Estimates JSON file.
    estimates: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Scene file whose poses seed the factor instead of the completion start.
    #[arg(long)]
    warm_start: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Experiment spec JSON file.
    spec: PathBuf,
    /// Overrides the spec's output directory (default `fundrank-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Command-line flag corresponding to a configuration field.
fn flag_for(field: &str) -> Option<&'static str> {
    Some(match field {
        "n_cameras" => "--n",
        "layout" => "--layout",
        "noise_sigma" => "--noise",
        "outlier_fraction" => "--outliers",
        "missing_fraction" => "--missing",
        "delta" => "--delta",
        "max_irls" => "--max-irls",
        "max_admm" => "--max-admm",
        "irls_tol" => "--tol-irls",
        "admm_tol" => "--tol-admm",
        _ => return None,
    })
}

fn report(err: &Error) -> ExitCode {
    match err {
        Error::InvalidConfig { field, .. } => match flag_for(field) {
            Some(flag) => eprintln!("error: {err} ({flag})"),
            None => eprintln!("error: {err}"),
        },
        _ => eprintln!("error: {err}"),
    }
    if err.is_io() {
        ExitCode::from(EXIT_IO)
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn cmd_gen(args: &GenArgs) -> fundrank::Result<()> {
    let config = SceneConfig {
        n_cameras: args.n,
        n_points: args.points,
        layout: args.layout.parse::<Layout>()?,
        noise_sigma: args.noise,
        outlier_fraction: args.outliers,
        missing_fraction: args.missing,
        seed: args.seed,
        unit_normalize: !args.raw_scales,
        ..SceneConfig::default()
    };
    config.validate()?;
    let scene = generate_scene(&config)?;
    let (f_hat, report) = corrupt(&MultiviewBlockMatrix::from_poses(&scene.poses), &config)?;
    let scene_path = args.out.join("scene.json");
    let estimates_path = args.out.join("estimates.json");
    io::write_scene(&scene_path, &scene)?;
    io::write_estimates(&estimates_path, &f_hat)?;
    println!("n: {}", scene.poses.len());
    println!("layout: {}", config.layout.as_str());
    println!("collinear: {}", scene.is_collinear());
    println!(
        "pairs: {} observed, {} missing, {} outliers",
        f_hat.observed_count() / 2,
        report.missing_pairs.len(),
        report.outlier_pairs.len()
    );
    println!("scene: {}", scene_path.display());
    println!("estimates: {}", estimates_path.display());
    Ok(())
}

/// Scene files give the exact multiview matrix; estimate files give Ω's blocks.
fn load_matrix(path: &Path) -> fundrank::Result<MultiviewBlockMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let value: serde_json::Value = io::parse_json(&text, path)?;
    if value.get("cameras").is_some() {
        let scene = io::parse_json::<io::SceneFile>(&text, path)?.to_scene()?;
        Ok(MultiviewBlockMatrix::from_poses(&scene.poses))
    } else {
        io::parse_json::<io::EstimatesFile>(&text, path)?.to_matrix()
    }
}

fn cmd_rankcheck(args: &RankcheckArgs) -> fundrank::Result<()> {
    if !(args.tol > 0.0 && args.tol < 1.0) {
        return Err(Error::InvalidConfig {
            field: "tol".into(),
            message: format!("must lie in (0, 1), got {}", args.tol),
        });
    }
    let m = load_matrix(&args.file)?;
    let profile = m.rank_profile(args.tol);
    let values: Vec<String> = profile.singular_values.iter().map(|s| format!("{s:.6e}")).collect();
    println!("singular values: {}", values.join(" "));
    println!("rank: {}", profile.rank);
    let stats = block_rank2_ratio(&m);
    println!(
        "block sigma3/sigma2: median {:.3e}, mean {:.3e}, max {:.3e} over {} blocks",
        stats.median, stats.mean, stats.max, stats.count
    );
    println!("symmetry residual: {:.3e}", m.symmetry_residual());
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> fundrank::Result<()> {
    let config = args.solver.config();
    config.validate()?;
    let f_hat = io::read_estimates(&args.estimates)?;
    let init = match &args.warm_start {
        Some(path) => Initialization::Poses(io::read_scene(path)?.poses),
        None => Initialization::Completion,
    };
    let out = solve(&f_hat, &config, &init)?;
    let solution_path = args.out.join("solution.json");
    let costs_path = args.out.join("cost_history.csv");
    io::write_json(&solution_path, &SolutionFile::from_output(&out, &f_hat))?;
    io::write_text(&costs_path, &io::cost_history_csv(out.cost_history()))?;
    println!("status: {}", out.status.as_str());
    println!("irls passes: {}", out.cost_history().len());
    println!("final cost: {:.6e}", out.final_cost());
    println!("monotonicity violations: {}", out.monotonicity_violations.len());
    println!("solution: {}", solution_path.display());
    println!("cost history: {}", costs_path.display());
    Ok(())
}

fn cmd_pipeline(args: &PipelineArgs) -> fundrank::Result<()> {
    let mut spec: ExperimentSpec = io::read_json(&args.spec)?;
    if let Some(out) = &args.out {
        spec.output_dir = Some(out.clone());
    }
    if spec.output_dir.is_none() {
        spec.output_dir = Some(PathBuf::from(DEFAULT_PIPELINE_DIR));
    }
    let record = run_experiment(&spec)?;
    let failed = record.trials.iter().filter(|t| t.error.is_some()).count();
    for t in record.trials.iter().filter(|t| t.error.is_some()) {
        eprintln!("trial {}: {}", t.trial, t.error.as_deref().unwrap_or_default());
    }
    println!("spec hash: {}", record.spec_hash);
    println!("trials: {} ({} with errors)", record.trials.len(), failed);
    println!("relative improvement: {:.6}", record.relative_improvement);
    println!("improved fraction: {:.6}", record.improved_fraction);
    if let Some(dir) = &spec.output_dir {
        println!("metrics: {}", dir.join("metrics.csv").display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Rankcheck(a) => cmd_rankcheck(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
