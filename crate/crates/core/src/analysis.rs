//! Leave-one-out corpus evaluation: hint every project against the rest of
//! the pool, apply all hints once, and compare metrics before and after.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::ast::{is_hat_opcode, is_opcode, Program};
use crate::hinter::{self, HintKind, HintSet};
use crate::pipeline;
use crate::pool::{self, PoolEntry, PoolError, TestReport, Threshold};
use crate::pqgram::{self, Distance, PqGramProfile, PqParams};
use crate::sb3::{self, ProjectFile};
use crate::stats::{self, Correlation, MannWhitney};
use crate::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub block_count: usize,
    pub dead_code_scripts: usize,
    pub empty_scripts: usize,
}

pub fn compute_metrics(program: &Program) -> Metrics {
    let mut m = Metrics::default();
    for script in program.actors.iter().flat_map(|a| &a.scripts) {
        m.block_count += script
            .root
            .preorder()
            .filter(|n| is_opcode(&n.label) && !is_hat_opcode(&n.label))
            .count();
        if !script.has_hat {
            m.dead_code_scripts += 1;
        }
        if script.is_empty_handler() {
            m.empty_scripts += 1;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectStatus {
    Hinted,
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectResult {
    pub project_id: String,
    pub status: ProjectStatus,
    pub candidates: usize,
    pub target_id: Option<String>,
    pub distance: Option<Distance>,
    pub tests_passed_before: usize,
    pub tests_passed_after: Option<usize>,
    pub metrics_before: Metrics,
    pub metrics_after: Metrics,
    pub hint_count: usize,
    pub hints_by_kind: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub mean_before: f64,
    pub mean_after: f64,
    pub mann_whitney: Option<MannWhitney>,
    /// P(before > after) + 0.5 P(before = after); below 0.5 means the
    /// values grew after applying hints.
    pub a12: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub projects: usize,
    pub hinted: usize,
    pub no_candidates: usize,
    pub mean_hint_count: Option<f64>,
    pub tests_passed: Option<Comparison>,
    pub block_count: Option<Comparison>,
    pub dead_code_scripts: Option<Comparison>,
    pub empty_scripts: Option<Comparison>,
    /// Blocks before hinting against the number of hints.
    pub blocks_vs_hints: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub params: PqParams,
    pub threshold: Threshold,
    pub per_project: Vec<ProjectResult>,
    pub aggregates: Aggregates,
}

/// Result of evaluating one project, with the artifacts to write.
pub struct ProjectOutcome {
    pub result: ProjectResult,
    pub hints: Option<HintSet>,
    pub program_after: Option<Program>,
}

/// Evaluates every pool entry against the others. The pool must hold at
/// least two projects; results are ordered by project id.
pub fn evaluate_pool(
    pool: &[PoolEntry],
    threshold: Threshold,
    params: PqParams,
    after_reports: Option<&[TestReport]>,
) -> Result<(EvalSummary, Vec<ProjectOutcome>), Error> {
    if pool.len() < 2 {
        return Err(Error::Usage(format!(
            "evaluation needs at least 2 projects, found {}",
            pool.len()
        )));
    }
    let profiles: HashMap<&str, PqGramProfile> = pool
        .par_iter()
        .map(|e| Ok((e.id(), pqgram::program_profile(&e.program, params)?)))
        .collect::<Result<_, Error>>()?;
    let after: Option<HashMap<&str, usize>> = after_reports.map(|rs| {
        rs.iter()
            .map(|r| (r.project_id.as_str(), r.passed()))
            .collect()
    });

    let mut outcomes: Vec<ProjectOutcome> = pool
        .par_iter()
        .map(|entry| evaluate_one(entry, pool, &profiles, threshold, params, after.as_ref()))
        .collect::<Result<_, Error>>()?;
    outcomes.sort_by(|a, b| a.result.project_id.cmp(&b.result.project_id));

    let per_project: Vec<ProjectResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    let summary = EvalSummary {
        params,
        threshold,
        aggregates: aggregate(&per_project),
        per_project,
    };
    Ok((summary, outcomes))
}

fn evaluate_one(
    entry: &PoolEntry,
    pool: &[PoolEntry],
    profiles: &HashMap<&str, PqGramProfile>,
    threshold: Threshold,
    params: PqParams,
    after: Option<&HashMap<&str, usize>>,
) -> Result<ProjectOutcome, Error> {
    let source = &entry.program;
    let metrics_before = compute_metrics(source);
    let mut result = ProjectResult {
        project_id: entry.id().to_string(),
        status: ProjectStatus::NoCandidates,
        candidates: pool
            .iter()
            .filter(|e| e.id() != entry.id() && threshold.admits(e.pass_fraction))
            .count(),
        target_id: None,
        distance: None,
        tests_passed_before: entry.report.passed(),
        tests_passed_after: None,
        metrics_before,
        metrics_after: metrics_before,
        hint_count: 0,
        hints_by_kind: BTreeMap::new(),
    };
    let run = pipeline::generate_hints_cached(
        source,
        &profiles[entry.id()],
        pool,
        threshold,
        params,
        None,
        |e| Ok(profiles[e.id()].clone()),
    );
    let run = match run {
        Ok(run) => run,
        Err(Error::Pool(PoolError::NoCandidates)) => {
            log::info!(
                "{}: no candidates at threshold {}",
                entry.id(),
                threshold.min_pass_fraction()
            );
            return Ok(ProjectOutcome {
                result,
                hints: None,
                program_after: None,
            });
        }
        Err(e) => return Err(e),
    };
    let target = &run.selection.target.program;
    let applied = hinter::apply_hints(source, &run.hints, target)?;

    result.status = ProjectStatus::Hinted;
    result.target_id = Some(target.source_id.clone());
    result.distance = Some(run.selection.distance);
    result.tests_passed_after = after.and_then(|m| m.get(entry.id()).copied());
    result.metrics_after = compute_metrics(&applied);
    result.hint_count = run.hints.hints.len();
    for kind in [
        HintKind::Add,
        HintKind::Delete,
        HintKind::NewScript,
        HintKind::NewActor,
    ] {
        let n = run.hints.count(kind);
        if n > 0 {
            let key = serde_json::to_value(kind).expect("kind serializes");
            result
                .hints_by_kind
                .insert(key.as_str().unwrap_or_default().to_string(), n);
        }
    }
    Ok(ProjectOutcome {
        result,
        hints: Some(run.hints),
        program_after: Some(applied),
    })
}

fn compare(before: &[f64], after: &[f64]) -> Option<Comparison> {
    Some(Comparison {
        mean_before: stats::mean(before)?,
        mean_after: stats::mean(after)?,
        mann_whitney: stats::mann_whitney_u(before, after).ok(),
        a12: stats::vargha_delaney_a12(before, after).ok(),
    })
}

fn aggregate(results: &[ProjectResult]) -> Aggregates {
    let hinted: Vec<&ProjectResult> = results
        .iter()
        .filter(|r| r.status == ProjectStatus::Hinted)
        .collect();
    let column =
        |f: &dyn Fn(&ProjectResult) -> f64| -> Vec<f64> { hinted.iter().map(|r| f(r)).collect() };

    let with_after: Vec<&&ProjectResult> = hinted
        .iter()
        .filter(|r| r.tests_passed_after.is_some())
        .collect();
    let tests_passed = compare(
        &with_after
            .iter()
            .map(|r| r.tests_passed_before as f64)
            .collect::<Vec<_>>(),
        &with_after
            .iter()
            .filter_map(|r| r.tests_passed_after)
            .map(|v| v as f64)
            .collect::<Vec<_>>(),
    );
    let metric = |f: fn(&Metrics) -> usize| {
        compare(
            &column(&|r| f(&r.metrics_before) as f64),
            &column(&|r| f(&r.metrics_after) as f64),
        )
    };

    Aggregates {
        projects: results.len(),
        hinted: hinted.len(),
        no_candidates: results.len() - hinted.len(),
        mean_hint_count: stats::mean(&column(&|r| r.hint_count as f64)),
        tests_passed,
        block_count: metric(|m| m.block_count),
        dead_code_scripts: metric(|m| m.dead_code_scripts),
        empty_scripts: metric(|m| m.empty_scripts),
        blocks_vs_hints: stats::pearson_r(
            &column(&|r| r.metrics_before.block_count as f64),
            &column(&|r| r.hint_count as f64),
        )
        .ok(),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("summary types serialize");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs [`evaluate_pool`] over a pool directory and writes `summary.json`,
/// `out/<id>.json` and `hints/<id>.hints.json` under `out_dir`.
pub fn evaluate_corpus(
    pool_dir: &Path,
    reports: &[TestReport],
    threshold: Threshold,
    params: PqParams,
    out_dir: &Path,
    after_reports: Option<&[TestReport]>,
) -> Result<EvalSummary, Error> {
    let pool = pool::load_pool(pool_dir, reports)?;
    let files: HashMap<String, PathBuf> = pool::pool_files(pool_dir)?
        .into_iter()
        .map(|p| {
            (
                p.file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                p,
            )
        })
        .collect();
    let (summary, outcomes) = evaluate_pool(&pool, threshold, params, after_reports)?;

    let (programs_dir, hints_dir) = (out_dir.join("out"), out_dir.join("hints"));
    for dir in [&programs_dir, &hints_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for outcome in &outcomes {
        let id = &outcome.result.project_id;
        if let Some(hints) = &outcome.hints {
            write_json(&hints_dir.join(format!("{id}.hints.json")), hints)?;
        }
        if let Some(program) = &outcome.program_after {
            let template = ProjectFile::open(&files[id])?;
            let bytes = sb3::serialize_project(program, &template)?;
            let path = programs_dir.join(format!("{id}.json"));
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
    }
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
