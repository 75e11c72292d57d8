use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use orbitrl_core::env::{ELEMENT_COUNT, OBSERVATION_DIM};
use orbitrl_core::nn::Checkpoint;
use orbitrl_core::orbit::KeplerianElements;
use orbitrl_core::rl::{
    load_policy, policy_checkpoint, run_episode, train_with, Algorithm, EpisodeReport, EvalRecord, TrainOutcome,
    TrainerConfig, METRIC_HEADER,
};
use orbitrl_core::tle::Catalog;
use orbitrl_core::{MissionConfig, OrbitEnv};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::*;
use crate::source::{is_url, load_catalog, read_catalog_bytes, LoadedCatalog, CATALOG_URL_ENV, DEFAULT_CATALOG_URL};
use crate::CliError;

pub const EVALUATION_HEADER: &str = "timesteps,mean_reward,std_reward,objectives_met_rate";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

/// Counts of one ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub report: String,
}

/// Parses a catalog and writes the accepted records to `output`.
pub fn ingest(source: Option<&str>, output: &Path) -> Result<IngestSummary, CliError> {
    let source = match source {
        Some(s) => s.to_string(),
        None => std::env::var(CATALOG_URL_ENV).unwrap_or_else(|_| DEFAULT_CATALOG_URL.to_string()),
    };
    let bytes = read_catalog_bytes(&source)?;
    let catalog = Catalog::parse(&String::from_utf8_lossy(&bytes));
    let mut report = format!(
        "{} accepted, {} rejected\n",
        catalog.records.len(),
        catalog.issues.len()
    );
    for issue in &catalog.issues {
        let _ = writeln!(report, "  line {}: {}", issue.line, issue.error);
    }
    if catalog.records.is_empty() {
        return Err(CliError::data(format!(
            "{source}: 0 accepted, {} rejected",
            catalog.issues.len()
        )));
    }
    std::fs::write(output, catalog.to_tle_text()).map_err(|e| io_err(output, e))?;
    let _ = writeln!(report, "wrote {}", output.display());
    Ok(IngestSummary {
        accepted: catalog.records.len(),
        rejected: catalog.issues.len(),
        report,
    })
}

pub struct TrainRequest<'a> {
    pub trainer: TrainerConfig,
    pub mission: MissionConfig,
    pub catalog: LoadedCatalog,
    pub out: &'a Path,
}

fn catalog_elements(catalog: &Catalog, mission: &MissionConfig) -> Vec<KeplerianElements> {
    catalog.elements(&mission.constants)
}

fn write_checkpoint(
    path: &Path,
    params: &orbitrl_core::nn::MlpParams,
    normalizer: &orbitrl_core::rl::RunningNormalizer,
    trainer: &TrainerConfig,
    timesteps: u64,
) -> Result<(), CliError> {
    let mut ckpt = policy_checkpoint(params, normalizer);
    ckpt.metadata.insert("algorithm".into(), trainer.algorithm.to_string());
    ckpt.metadata.insert("seed".into(), trainer.seed.to_string());
    ckpt.metadata.insert("timesteps".into(), timesteps.to_string());
    ckpt.save(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Trains, writing the metric log as it grows, then the checkpoints and
/// the manifest.
pub fn run_training(req: TrainRequest<'_>) -> Result<(RunManifest, TrainOutcome), CliError> {
    let TrainRequest {
        trainer,
        mission,
        catalog,
        out,
    } = req;
    mission.validate().map_err(CliError::config)?;
    trainer.validate().map_err(CliError::config)?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let copy = out.join(CATALOG_COPY_FILE);
    std::fs::write(&copy, &catalog.bytes).map_err(|e| io_err(&copy, e))?;

    let metrics_path = out.join(METRICS_FILE);
    let evals_path = out.join(EVALUATIONS_FILE);
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(|e| io_err(&metrics_path, e))?);
    let mut evals = BufWriter::new(File::create(&evals_path).map_err(|e| io_err(&evals_path, e))?);
    writeln!(metrics, "{METRIC_HEADER}").map_err(|e| io_err(&metrics_path, e))?;
    writeln!(evals, "{EVALUATION_HEADER}").map_err(|e| io_err(&evals_path, e))?;

    let elements = catalog_elements(&catalog.catalog, &mission);
    let mut write_error = None;
    let mut last_eval: Option<EvalRecord> = None;
    let result = train_with(&trainer, &mission, &elements, |row, eval| {
        let mut write = || -> std::io::Result<()> {
            writeln!(metrics, "{row}")?;
            metrics.flush()?;
            if last_eval.as_ref() != Some(eval) {
                writeln!(
                    evals,
                    "{},{},{},{}",
                    eval.timesteps, eval.mean_reward, eval.std_reward, eval.objectives_met_rate
                )?;
                evals.flush()?;
            }
            Ok(())
        };
        if let Err(e) = write() {
            write_error.get_or_insert(e);
        }
        last_eval = Some(*eval);
    });
    if let Some(e) = write_error {
        return Err(io_err(&metrics_path, e));
    }
    let outcome = result.map_err(CliError::training)?;

    let ckpt_path = out.join(CHECKPOINT_FILE);
    write_checkpoint(
        &ckpt_path,
        &outcome.params,
        &outcome.normalizer,
        &trainer,
        outcome.timesteps,
    )?;
    let best_checkpoint = match &outcome.best {
        Some((params, normalizer, record)) => {
            let path = out.join(BEST_CHECKPOINT_FILE);
            write_checkpoint(&path, params, normalizer, &trainer, record.timesteps)?;
            Some(BEST_CHECKPOINT_FILE.to_string())
        }
        None => None,
    };

    let manifest = RunManifest {
        tool: format!("orbitrl {}", env!("CARGO_PKG_VERSION")),
        seed: trainer.seed,
        catalog: CatalogInfo {
            source: catalog.source.clone(),
            copy: CATALOG_COPY_FILE.into(),
            records: catalog.catalog.records.len(),
            rejected: catalog.catalog.issues.len(),
        },
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        timesteps: outcome.timesteps,
        updates: outcome.updates,
        interventions: outcome.interventions,
        first_success_timesteps: outcome.first_success,
        final_evaluation: EvalSummary {
            episodes: outcome.final_eval.episodes.len(),
            mean_reward: outcome.final_eval.mean_reward,
            std_reward: outcome.final_eval.std_reward,
            objectives_met_rate: outcome.final_eval.objectives_met_rate,
        },
        artifacts: Artifacts {
            metrics: METRICS_FILE.into(),
            evaluations: EVALUATIONS_FILE.into(),
            checkpoint: CHECKPOINT_FILE.into(),
            best_checkpoint,
        },
        trainer,
        mission,
    };
    manifest.write(out)?;
    Ok((manifest, outcome))
}

pub fn train_summary(m: &RunManifest) -> String {
    let e = &m.final_evaluation;
    format!(
        "{} seed {}: {} timesteps, {} updates, {} interventions\n\
         final evaluation over {} episodes: mean reward {:.6} (std {:.6}), objectives met {:.0}%\n\
         first success: {}\n",
        m.trainer.algorithm,
        m.seed,
        m.timesteps,
        m.updates,
        m.interventions,
        e.episodes,
        e.mean_reward,
        e.std_reward,
        100.0 * e.objectives_met_rate,
        m.first_success_timesteps
            .map_or("none".to_string(), |t| format!("{t} timesteps")),
    )
}

/// Re-runs the training described by a manifest into `out`.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<(RunManifest, TrainOutcome), CliError> {
    let manifest = RunManifest::read(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let copy = dir.join(&manifest.catalog.copy);
    let bytes = std::fs::read(&copy).map_err(|e| io_err(&copy, e))?;
    let catalog = Catalog::parse(&String::from_utf8_lossy(&bytes));
    run_training(TrainRequest {
        trainer: manifest.trainer,
        mission: manifest.mission,
        catalog: LoadedCatalog {
            source: manifest.catalog.source,
            bytes,
            catalog,
        },
        out,
    })
}

/// Plays one episode with a saved policy.
pub fn predict(
    checkpoint: &Path,
    mission: &MissionConfig,
    catalog: &Catalog,
    seed: u64,
    deterministic: bool,
) -> Result<EpisodeReport, CliError> {
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| CliError::data(format!("{}: {e}", checkpoint.display())))?;
    let (params, normalizer) =
        load_policy(&ckpt).map_err(|e| CliError::config(format!("{}: {e}", checkpoint.display())))?;
    if params.shape.input != OBSERVATION_DIM || params.shape.action_dim != ELEMENT_COUNT {
        return Err(CliError::config(format!(
            "{}: network maps {} inputs to {} actions, the environment needs {OBSERVATION_DIM} -> {ELEMENT_COUNT}",
            checkpoint.display(),
            params.shape.input,
            params.shape.action_dim
        )));
    }
    mission.validate().map_err(CliError::config)?;
    let elements = catalog_elements(catalog, mission);
    let mut env = OrbitEnv::new(Arc::new(mission.clone()), &elements, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_episode(&params, &normalizer, &mut env, Some(seed), deterministic, &mut rng).map_err(CliError::training)
}

/// Parameter table in the order: a, e, i, raan, argp, reward, success.
pub fn format_report(r: &EpisodeReport) -> String {
    let el = &r.elements;
    let rows = [
        ("Semi-major axis (km)", format!("{:.3}", el.a)),
        ("Eccentricity", format!("{:.6}", el.e)),
        ("Inclination (rad)", format!("{:.6}", el.i)),
        ("RAAN (rad)", format!("{:.6}", el.raan)),
        ("Argument of periapsis (rad)", format!("{:.6}", el.arg_perigee)),
        ("Cumulative Reward", format!("{:.6}", r.cumulative_reward)),
        (
            "Objectives Met",
            if r.objectives_met { "True" } else { "False" }.to_string(),
        ),
    ];
    let mut out = format!("{:<28} {}\n", "Parameter", "Value");
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<28} {v}");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub timesteps: u64,
    pub first_success: Option<u64>,
    pub final_reward: f64,
    pub objectives_met: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareFailure {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub error: String,
}

pub struct CompareRequest<'a> {
    pub mission: &'a MissionConfig,
    pub catalog: &'a Catalog,
    pub seeds: &'a [u64],
    pub a2c_timesteps: u64,
    pub ppo_timesteps: u64,
    /// Per-run artifacts go to `<out>/<algorithm>-seed<seed>/` when set.
    pub out: Option<&'a Path>,
}

/// Trains both algorithms on every seed. Failed runs are reported
/// alongside the successful ones.
pub fn compare<F: FnMut(&Result<CompareRow, CompareFailure>)>(
    req: &CompareRequest<'_>,
    mut on_result: F,
) -> Vec<Result<CompareRow, CompareFailure>> {
    let mut results = Vec::new();
    for &seed in req.seeds {
        for (algorithm, budget) in [(Algorithm::A2c, req.a2c_timesteps), (Algorithm::Ppo, req.ppo_timesteps)] {
            let mut trainer = TrainerConfig::for_algorithm(algorithm);
            trainer.seed = seed;
            trainer.total_timesteps = budget;
            let result = compare_one(req, trainer).map_err(|e| CompareFailure {
                algorithm,
                seed,
                error: e.to_string(),
            });
            on_result(&result);
            results.push(result);
        }
    }
    results
}

fn compare_one(req: &CompareRequest<'_>, trainer: TrainerConfig) -> Result<CompareRow, CliError> {
    let (algorithm, seed) = (trainer.algorithm, trainer.seed);
    let outcome = match req.out {
        Some(out) => {
            let dir: PathBuf = out.join(format!("{algorithm}-seed{seed}"));
            let text = req.catalog.to_tle_text();
            run_training(TrainRequest {
                trainer,
                mission: req.mission.clone(),
                catalog: LoadedCatalog {
                    source: "compare".into(),
                    bytes: text.into_bytes(),
                    catalog: req.catalog.clone(),
                },
                out: &dir,
            })?
            .1
        }
        None => {
            let elements = catalog_elements(req.catalog, req.mission);
            train_with(&trainer, req.mission, &elements, |_, _| {}).map_err(CliError::training)?
        }
    };
    Ok(CompareRow {
        algorithm,
        seed,
        timesteps: outcome.timesteps,
        first_success: outcome.first_success,
        final_reward: outcome.final_eval.mean_reward,
        objectives_met: outcome.final_eval.objectives_met_rate >= 1.0,
    })
}

/// Median timesteps-to-first-success; runs that never succeed rank last.
/// `None` when the median itself falls on such a run.
pub fn median_first_success(rows: &[CompareRow], algorithm: Algorithm) -> Option<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.algorithm == algorithm)
        .map(|r| r.first_success.map_or(f64::INFINITY, |t| t as f64))
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    let m = if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    };
    m.is_finite().then_some(m)
}

pub const COMPARE_HEADER: &str = "algorithm,seed,timesteps,first_success,final_reward,objectives_met";

pub fn compare_line(r: &CompareRow) -> String {
    format!(
        "{},{},{},{},{:.6},{}",
        r.algorithm,
        r.seed,
        r.timesteps,
        r.first_success.map_or("none".to_string(), |t| t.to_string()),
        r.final_reward,
        r.objectives_met
    )
}

pub fn compare_table(results: &[Result<CompareRow, CompareFailure>]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n");
    let rows: Vec<CompareRow> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    for r in results {
        match r {
            Ok(row) => out.push_str(&(compare_line(row) + "\n")),
            Err(f) => {
                let _ = writeln!(out, "{},{},failed,none,nan,false", f.algorithm, f.seed);
            }
        }
    }
    for alg in [Algorithm::A2c, Algorithm::Ppo] {
        let median = median_first_success(&rows, alg).map_or("none".to_string(), |m| m.to_string());
        let _ = writeln!(out, "median,{alg},first_success,{median}");
    }
    out
}

/// Accepts a path, URL or nothing (the built-in ISS set).
pub fn load_catalog_arg(source: Option<&str>) -> Result<LoadedCatalog, CliError> {
    if let Some(s) = source {
        if !is_url(s) && !Path::new(s).exists() {
            return Err(CliError::data(format!("catalog {s} does not exist")));
        }
    }
    load_catalog(source)
}
