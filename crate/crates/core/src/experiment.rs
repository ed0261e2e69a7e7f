//! Seeded end-to-end trials: generate, corrupt, solve, extract directions,
//! recover locations, and score against the raw input.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{self, MetricsRow};
use crate::location::{
    compare_methods, essential_error, extract_direction, location_error, recover_locations,
    DirectionSet, ErrorReport,
};
use crate::multiview::MultiviewBlockMatrix;
use crate::solver::{completion_factor, solve, Initialization, SolverConfig, SolverStatus};
use crate::synth::{corrupt, generate_scene, reestimate_pairs, Scene, SceneConfig};

/// RNG stream that per-trial seeds are drawn from.
const STREAM_TRIALS: u64 = 3;
/// Scene points used to vote on each direction's sign.
const CHEIRALITY_POINTS: usize = 20;
/// Environment variable capping the number of concurrent trials.
pub const THREADS_ENV: &str = "FUNDRANK_THREADS";

/// What the solver output is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// The corrupted estimates fed to the solver.
    InputEstimates,
    /// The solver's starting point, before any IRLS pass.
    WarmStartOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub scene: SceneConfig,
    pub solver: SolverConfig,
    pub trials: usize,
    pub baseline: Baseline,
    /// Replace observed blocks by eight-point estimates from noisy points.
    pub reestimate: bool,
    /// Where per-trial files and the metric table go; nothing is written when unset.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            scene: SceneConfig::default(),
            solver: SolverConfig::default(),
            trials: 1,
            baseline: Baseline::InputEstimates,
            reestimate: false,
            output_dir: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidConfig {
                field: "trials".into(),
                message: "must be at least 1".into(),
            });
        }
        self.scene.validate()?;
        self.solver.validate()
    }

    /// SHA-256 of the spec's JSON form, output location excluded.
    pub fn hash(&self) -> String {
        let canonical = ExperimentSpec {
            output_dir: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("spec serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Seed of trial `trial`, read from a counter position of one ChaCha stream
/// so any trial can be rerun alone.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_TRIALS);
    rng.set_word_pos(2 * trial as u128);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub status: Option<SolverStatus>,
    pub cost_history: Vec<f64>,
    pub ours: Option<ErrorReport>,
    pub baseline: Option<ErrorReport>,
    /// Set when a stage of the trial failed; the remaining fields hold what finished.
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl TrialRecord {
    fn medians(&self) -> Option<(f64, f64)> {
        match (&self.ours, &self.baseline) {
            (Some(o), Some(b)) => Some((o.median_essential, b.median_essential)),
            _ => None,
        }
    }

    pub fn metrics_row(&self) -> MetricsRow {
        let (ours, other) = self.medians().unwrap_or((f64::NAN, f64::NAN));
        MetricsRow {
            trial: self.trial,
            seed: self.seed,
            median_ess_err: ours,
            mean_ess_err: self.ours.as_ref().map_or(f64::NAN, |o| o.mean_essential),
            median_loc_err: self.ours.as_ref().map_or(f64::NAN, |o| o.median_location),
            rel_improvement: if other != 0.0 { (other - ours) / other } else { f64::NAN },
            improved: ours < other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec_hash: String,
    pub seed: u64,
    pub trials: Vec<TrialRecord>,
    pub relative_improvement: f64,
    pub improved_fraction: f64,
    pub zero_baseline_trials: Vec<usize>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn metrics(&self) -> Vec<MetricsRow> {
        self.trials.iter().map(TrialRecord::metrics_row).collect()
    }
}

/// Essential matrix of a pair from its fundamental: `K_i^T F K_j`.
fn to_essential(scene: &Scene, i: usize, j: usize, f: &Matrix3<f64>) -> Matrix3<f64> {
    scene.poses[i].intrinsics().transpose() * f * scene.poses[j].intrinsics()
}

/// Errors of the blocks of `f` on the pairs observed in `omega`, and of the
/// locations recovered from the directions those blocks imply.
fn score(
    scene: &Scene,
    f: &MultiviewBlockMatrix,
    omega: &MultiviewBlockMatrix,
    e_true: &MultiviewBlockMatrix,
    bearings: &[Vec<Vector3<f64>>],
) -> (ErrorReport, Option<Error>) {
    let essential_errors = omega
        .unordered_pairs()
        .filter_map(|(i, j)| {
            essential_error(&to_essential(scene, i, j, &f.block(i, j)), &e_true.block(i, j)).ok()
        })
        .collect();

    let n = scene.poses.len();
    let mut directions = DirectionSet::new();
    for (i, j) in f.unordered_pairs() {
        let e = to_essential(scene, i, j, &f.block(i, j));
        let rays: Vec<_> = bearings[i].iter().cloned().zip(bearings[j].iter().cloned()).collect();
        let (ri, rj) = (scene.poses[i].rotation(), scene.poses[j].rotation());
        if let Ok(gamma) = extract_direction(&e, ri, rj, Some(&rays)) {
            directions.insert(i, j, gamma);
        }
    }
    let located = recover_locations(&directions, n, true)
        .and_then(|sol| location_error(&sol.t, &scene.centers()));
    match located {
        Ok(loc) => (ErrorReport::new(essential_errors, loc), None),
        Err(e) => (ErrorReport::new(essential_errors, Vec::new()), Some(e)),
    }
}

fn camera_bearings(scene: &Scene) -> Result<Vec<Vec<Vector3<f64>>>> {
    (0..scene.poses.len())
        .map(|i| {
            let k_inv = scene.poses[i].intrinsics_inverse();
            Ok(scene
                .observations(i)?
                .into_iter()
                .take(CHEIRALITY_POINTS)
                .map(|x| k_inv * x)
                .collect())
        })
        .collect()
}

/// Files of one trial, written under `dir`.
fn write_trial_files(
    dir: &Path,
    scene: &Scene,
    f_hat: &MultiviewBlockMatrix,
    solution: &io::SolutionFile,
    costs: &[f64],
) -> Result<()> {
    io::write_scene(&dir.join("scene.json"), scene)?;
    io::write_estimates(&dir.join("estimates.json"), f_hat)?;
    io::write_json(&dir.join("solution.json"), solution)?;
    io::write_text(&dir.join("cost_history.csv"), &io::cost_history_csv(costs))
}

/// Runs one trial. Stage failures are recorded in the returned record.
pub fn run_trial(spec: &ExperimentSpec, trial: usize) -> TrialRecord {
    let start = Instant::now();
    let seed = trial_seed(spec.scene.seed, trial);
    let mut record = TrialRecord {
        trial,
        seed,
        status: None,
        cost_history: Vec::new(),
        ours: None,
        baseline: None,
        error: None,
        wall_time_s: 0.0,
    };
    if let Err(e) = trial_body(spec, trial, seed, &mut record) {
        record.error = Some(e.to_string());
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    record
}

fn trial_body(
    spec: &ExperimentSpec,
    trial: usize,
    seed: u64,
    record: &mut TrialRecord,
) -> Result<()> {
    let config = SceneConfig {
        seed,
        ..spec.scene.clone()
    };
    let scene = generate_scene(&config)?;
    let f_true = MultiviewBlockMatrix::from_poses(&scene.poses);
    let e_true = MultiviewBlockMatrix::essentials_from_poses(&scene.poses);
    let (mut f_hat, _) = corrupt(&f_true, &config)?;
    if spec.reestimate {
        f_hat = reestimate_pairs(&scene, &config, &f_hat)?;
    }
    let bearings = camera_bearings(&scene)?;

    let out = solve(&f_hat, &spec.solver, &Initialization::Completion)?;
    record.status = Some(out.status);
    record.cost_history = out.cost_history().to_vec();

    let baseline_f = match spec.baseline {
        Baseline::InputEstimates => f_hat.clone(),
        Baseline::WarmStartOnly => {
            let a = completion_factor(&f_hat);
            let start = &a + a.transpose();
            let n = f_hat.n();
            let mut m = MultiviewBlockMatrix::zeros(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    m.set_pair(i, j, &start.fixed_view::<3, 3>(3 * i, 3 * j).into_owned());
                }
            }
            m
        }
    };

    let (ours, ours_err) = score(&scene, &out.f, &f_hat, &e_true, &bearings);
    let (base, base_err) = score(&scene, &baseline_f, &f_hat, &e_true, &bearings);
    record.ours = Some(ours);
    record.baseline = Some(base);

    if let Some(dir) = &spec.output_dir {
        let solution = io::SolutionFile::from_output(&out, &f_hat);
        write_trial_files(
            &dir.join(format!("trial_{trial:03}")),
            &scene,
            &f_hat,
            &solution,
            &record.cost_history,
        )?;
    }
    match ours_err.or(base_err) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|k| *k > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|k| k.get())
                .unwrap_or(1)
        })
}

/// Runs every trial, concurrently up to the `FUNDRANK_THREADS` cap, and
/// writes the metric table and run record when an output directory is set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunRecord> {
    spec.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let trials: Vec<TrialRecord> =
        pool.install(|| (0..spec.trials).into_par_iter().map(|k| run_trial(spec, k)).collect());

    let (ours, other): (Vec<f64>, Vec<f64>) = trials.iter().filter_map(TrialRecord::medians).unzip();
    let comparison = compare_methods(&ours, &other)?;
    let record = RunRecord {
        spec_hash: spec.hash(),
        seed: spec.scene.seed,
        trials,
        relative_improvement: comparison.relative_improvement,
        improved_fraction: comparison.improved_fraction,
        zero_baseline_trials: comparison.zero_baseline,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &spec.output_dir {
        io::write_text(&dir.join("metrics.csv"), &io::metrics_csv(&record.metrics()))?;
        io::write_json(&dir.join("run_record.json"), &record)?;
    }
    Ok(record)
}
