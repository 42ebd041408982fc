//! Command implementations behind the `memarch` binary and the data files
//! they emit: evaluation reports, the baseline matrix CSV and the scaling
//! curve CSV.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::{export_tree, ArchiveDir, TreeDocument};
use crate::builtin;
use crate::config::{LoadedConfig, RunConfig};
use crate::environments::task_set;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, evaluate_split, no_memory_run, write_report, EvaluationReport, Mode, NoMemory};
use crate::meta::{candidate_id, run_learning, LearningSetup, RunLayout, RunOutcome};
use crate::provider::ModelProvider;
use crate::sandbox::{ArtifactLauncher, Sandbox};
use crate::util::{ensure_dir, read_string, write_json, write_string};

/// A design to evaluate: shipped name or artifact path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedDesign {
    pub design_id: String,
    pub artifact: PathBuf,
}

/// Shipped designs are written to `<dir>/designs/<name>/design.json` and keep
/// their name as id; artifacts on disk get their content id.
pub fn resolve_design(reference: &str, dir: &Path) -> Result<ResolvedDesign> {
    if let Some(source) = builtin::shipped(reference) {
        let artifact = dir.join("designs").join(reference).join("design.json");
        write_string(&artifact, source)?;
        return Ok(ResolvedDesign {
            design_id: reference.to_string(),
            artifact,
        });
    }
    let path = Path::new(reference);
    if !path.is_file() {
        let names: Vec<&str> = builtin::SHIPPED.iter().map(|(n, _)| *n).collect();
        return Err(Error::Config(format!(
            "{reference:?} is neither a shipped design ({}) nor an existing file",
            names.join(", ")
        )));
    }
    let source = read_string(path)?;
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let file_name = if file_name.ends_with(".py") { "design.py" } else { "design.json" };
    builtin::check_conformance(file_name, &source).map_err(|e| Error::Config(format!("{reference}: {e}")))?;
    Ok(ResolvedDesign {
        design_id: candidate_id(&source, None),
        artifact: path.to_path_buf(),
    })
}

fn prepare_run_dir(loaded: &LoadedConfig) -> Result<PathBuf> {
    let dir = loaded.config.run_dir();
    ensure_dir(&dir)?;
    write_string(&dir.join("config.json"), &loaded.raw)?;
    Ok(dir)
}

fn sandbox_for(config: &RunConfig, dir: &Path) -> Sandbox {
    Sandbox::new(dir.join("sandbox"), config.runtime.clone(), config.sandbox)
}

/// `learn`: the full search loop.
pub fn cmd_learn(loaded: &LoadedConfig) -> Result<RunOutcome> {
    let config = &loaded.config;
    let layout = RunLayout::new(prepare_run_dir(loaded)?);
    let provider = config.build_provider()?;
    let tasks = config.tasks()?;
    let setup = LearningSetup {
        learning: &config.learning,
        sampling: config.sampling.clone(),
        family: &config.environment.family,
        tasks: &tasks,
        provider: &provider,
        policy: &config.policy,
        runtime: config.runtime.clone(),
        limits: config.sandbox,
    };
    run_learning(&setup, &layout)
}

/// `eval`: both phases for one design; report files land in
/// `<run>/eval/<design_id>/`.
pub fn cmd_eval(loaded: &LoadedConfig, design: &str) -> Result<EvaluationReport> {
    let config = &loaded.config;
    let dir = prepare_run_dir(loaded)?;
    let resolved = resolve_design(design, &dir)?;
    let provider = config.build_provider()?;
    let sandbox = sandbox_for(config, &dir);
    let harness = config.harness(&provider);
    let launcher = ArtifactLauncher::new(&sandbox, resolved.design_id.clone(), resolved.artifact);
    let report = evaluate(
        &harness,
        &launcher,
        &config.tasks()?,
        config.evaluation.mode,
        config.evaluation.repeats,
    )?;
    write_report(&dir.join("eval").join(&resolved.design_id), &report)?;
    Ok(report)
}

/// `measure-baseline`: the no-memory score, written to `<run>/baseline/`.
pub fn cmd_measure_baseline(loaded: &LoadedConfig) -> Result<EvaluationReport> {
    let config = &loaded.config;
    let dir = prepare_run_dir(loaded)?;
    let provider = config.build_provider()?;
    let report = no_memory_run(&config.harness(&provider), &config.tasks()?, config.evaluation.repeats)?;
    write_report(&dir.join("baseline"), &report)?;
    Ok(report)
}

/// `tree`: re-exports `tree.json` and `tree.dot` from a run's archive.
pub fn cmd_tree(run_dir: &Path) -> Result<TreeDocument> {
    let archive = ArchiveDir::new(run_dir.join("archive")).load()?;
    let tree = export_tree(&archive);
    write_json(&run_dir.join("tree.json"), &tree)?;
    write_string(&run_dir.join("tree.dot"), &tree.to_dot())?;
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub family: String,
    pub design: String,
    pub mode: Mode,
    pub mean_score: f64,
    pub standard_error: f64,
    pub end_to_end_memory_cost_micros: u64,
    pub mean_retrieved_tokens: f64,
}

/// `baseline-matrix`: every configured design (plus `extra`) on every
/// configured family. Writes `<run>/matrix.csv`.
pub fn cmd_baseline_matrix(loaded: &LoadedConfig, extra: Option<&str>) -> Result<Vec<MatrixRow>> {
    let config = &loaded.config;
    let dir = prepare_run_dir(loaded)?;
    let mut designs = config.matrix.designs.clone();
    designs.extend(extra.map(str::to_string));
    let resolved = designs
        .iter()
        .map(|d| resolve_design(d, &dir))
        .collect::<Result<Vec<_>>>()?;
    let sandbox = sandbox_for(config, &dir);
    let mut rows = Vec::new();
    for family in &config.matrix.families {
        let tasks = task_set(family, config.environment.tasks, config.environment.seed)
            .map_err(|e| Error::Config(e.to_string()))?;
        for (name, design) in designs.iter().zip(&resolved) {
            let provider = config.build_provider()?;
            let launcher = ArtifactLauncher::new(&sandbox, design.design_id.clone(), design.artifact.clone());
            let report = evaluate(
                &config.harness(&provider),
                &launcher,
                &tasks,
                config.evaluation.mode,
                config.evaluation.repeats,
            )?;
            write_report(&dir.join("matrix").join(family).join(&design.design_id), &report)?;
            rows.push(MatrixRow {
                family: family.clone(),
                design: name.clone(),
                mode: config.evaluation.mode,
                mean_score: report.mean_score,
                standard_error: report.standard_error,
                end_to_end_memory_cost_micros: report.cost.end_to_end_memory_cost_micros,
                mean_retrieved_tokens: report.cost.mean_retrieved_tokens,
            });
        }
    }
    write_string(&dir.join("matrix.csv"), &to_csv(&rows)?)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub collection_tasks: usize,
    pub mean_score: f64,
    pub standard_error: f64,
}

/// `scaling`: one evaluation per collection size against a fixed deployment
/// split (the tasks after the largest collection). Size 0 runs no updates.
/// Writes `<run>/scaling.csv`.
pub fn cmd_scaling(loaded: &LoadedConfig, design: Option<&str>, sizes: Option<&[usize]>) -> Result<Vec<ScalingRow>> {
    let config = &loaded.config;
    let sizes = sizes.unwrap_or(&config.scaling.sizes);
    if sizes.is_empty() || config.scaling.deployment_tasks == 0 {
        return Err(Error::Config("scaling needs at least one size and one deployment task".into()));
    }
    let dir = prepare_run_dir(loaded)?;
    let resolved = resolve_design(design.unwrap_or(&config.scaling.design), &dir)?;
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let tasks = task_set(
        &config.environment.family,
        largest + config.scaling.deployment_tasks,
        config.environment.seed,
    )?;
    let deployment = &tasks[largest..];
    let sandbox = sandbox_for(config, &dir);
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let provider = config.build_provider()?;
        let launcher = ArtifactLauncher::new(&sandbox, resolved.design_id.clone(), resolved.artifact.clone());
        let report = evaluate_split(
            &config.harness(&provider),
            &launcher,
            &tasks[..size],
            deployment,
            config.evaluation.mode,
            config.evaluation.repeats,
        )?;
        write_report(&dir.join("scaling").join(size.to_string()), &report)?;
        rows.push(ScalingRow {
            collection_tasks: size,
            mean_score: report.mean_score,
            standard_error: report.standard_error,
        });
    }
    write_string(&dir.join("scaling.csv"), &to_csv(&rows)?)?;
    Ok(rows)
}

/// No-memory reference on the scaling deployment split.
pub fn scaling_reference(config: &RunConfig, provider: &ModelProvider, largest: usize) -> Result<EvaluationReport> {
    let tasks = task_set(
        &config.environment.family,
        largest + config.scaling.deployment_tasks,
        config.environment.seed,
    )?;
    evaluate_split(
        &config.harness(provider),
        &NoMemory,
        &tasks[..0],
        &tasks[largest..],
        Mode::Static,
        config.evaluation.repeats,
    )
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| Error::usage(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Config(format!("csv: {e}")))
}
