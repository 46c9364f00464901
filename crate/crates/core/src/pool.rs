//! Test-report ingestion, pass-rate filtering and target selection.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::Program;
use crate::pqgram::{self, Distance, PqGramError, PqGramProfile, PqParams};
use crate::sb3::{self, ParseError};

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report schema error: {0}")]
    SchemaError(String),
    #[error("duplicate project id `{0}` in report")]
    DuplicateProjectId(String),
    #[error("project `{0}` has no non-skipped tests")]
    EmptyReport(String),
    #[error("no candidate satisfies the pass threshold")]
    NoCandidates,
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    PqGram(#[from] PqGramError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Error,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub project_id: String,
    pub outcomes: BTreeMap<String, Outcome>,
}

impl TestReport {
    pub fn new(
        project_id: impl Into<String>,
        outcomes: BTreeMap<String, Outcome>,
    ) -> Result<Self, PoolError> {
        let report = TestReport {
            project_id: project_id.into(),
            outcomes,
        };
        if report.considered() == 0 {
            return Err(PoolError::EmptyReport(report.project_id));
        }
        Ok(report)
    }

    pub fn passed(&self) -> usize {
        self.outcomes
            .values()
            .filter(|o| **o == Outcome::Pass)
            .count()
    }

    /// Tests that count towards the pass fraction; skips are excluded.
    pub fn considered(&self) -> usize {
        self.outcomes
            .values()
            .filter(|o| **o != Outcome::Skip)
            .count()
    }

    /// Errors count as failures.
    pub fn pass_fraction(&self) -> f64 {
        self.passed() as f64 / self.considered() as f64
    }
}

#[derive(Deserialize)]
struct ReportFile {
    projects: Vec<ReportEntry>,
}

#[derive(Deserialize)]
struct ReportEntry {
    id: String,
    tests: BTreeMap<String, Outcome>,
}

pub fn parse_reports(json: &str) -> Result<Vec<TestReport>, PoolError> {
    let file: ReportFile =
        serde_json::from_str(json).map_err(|e| PoolError::SchemaError(e.to_string()))?;
    let mut seen = HashSet::new();
    file.projects
        .into_iter()
        .map(|entry| {
            if !seen.insert(entry.id.clone()) {
                return Err(PoolError::DuplicateProjectId(entry.id));
            }
            TestReport::new(entry.id, entry.tests)
        })
        .collect()
}

pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<TestReport>, PoolError> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|source| PoolError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_reports(&json)
}

/// Minimum pass fraction a pool entry needs to become a candidate.
///
/// Values above 1 are accepted and act as an unreachable bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(min_pass_fraction: f64) -> Result<Self, PoolError> {
        if !min_pass_fraction.is_finite() || min_pass_fraction < 0.0 {
            return Err(PoolError::InvalidThreshold(min_pass_fraction));
        }
        Ok(Threshold(min_pass_fraction))
    }

    pub fn min_pass_fraction(self) -> f64 {
        self.0
    }

    pub fn admits(self, pass_fraction: f64) -> bool {
        pass_fraction >= self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold(0.9)
    }
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub program: Program,
    pub report: TestReport,
    pub pass_fraction: f64,
}

impl PoolEntry {
    pub fn new(program: Program, report: TestReport) -> Self {
        debug_assert_eq!(program.source_id, report.project_id);
        PoolEntry {
            pass_fraction: report.pass_fraction(),
            program,
            report,
        }
    }

    pub fn id(&self) -> &str {
        &self.program.source_id
    }
}

/// Project files (`*.json`, `*.sb3`) of a pool directory, sorted by file name.
pub fn pool_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, PoolError> {
    let dir = dir.as_ref();
    let io_err = |source| PoolError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        if path.is_file() && (ext == "json" || ext == "sb3") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every pool project that has a test report; files without one
/// (such as the report file itself) are skipped.
pub fn load_pool(
    dir: impl AsRef<Path>,
    reports: &[TestReport],
) -> Result<Vec<PoolEntry>, PoolError> {
    let by_id: BTreeMap<&str, &TestReport> =
        reports.iter().map(|r| (r.project_id.as_str(), r)).collect();
    let mut entries = Vec::new();
    for path in pool_files(dir)? {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let Some(report) = by_id.get(stem.as_str()) else {
            log::debug!("skipping {}: no test report", path.display());
            continue;
        };
        let program = sb3::parse_path(&path).map_err(|source| PoolError::Parse {
            path: path.clone(),
            source,
        })?;
        entries.push(PoolEntry::new(program, (*report).clone()));
    }
    for report in reports {
        if !entries.iter().any(|e| e.id() == report.project_id) {
            log::warn!(
                "report for `{}` has no project file in the pool",
                report.project_id
            );
        }
    }
    Ok(entries)
}

/// Entries meeting the threshold, in input order.
pub fn filter_candidates(
    pool: &[PoolEntry],
    threshold: Threshold,
) -> Result<Vec<&PoolEntry>, PoolError> {
    let kept: Vec<&PoolEntry> = pool
        .iter()
        .filter(|e| threshold.admits(e.pass_fraction))
        .collect();
    if kept.is_empty() {
        return Err(PoolError::NoCandidates);
    }
    Ok(kept)
}

#[derive(Debug, Clone, Serialize)]
pub struct Ranked {
    pub project_id: String,
    pub distance: Distance,
}

#[derive(Debug, Clone)]
pub struct TargetSelection<'a> {
    pub target: &'a PoolEntry,
    pub distance: Distance,
    /// All candidates ascending by (distance, project id).
    pub ranked: Vec<Ranked>,
}

/// Picks the candidate nearest to `source`. Ties go to the smallest project
/// id, or to a uniformly random tied candidate when `seed` is given.
pub fn select_target<'a>(
    source: &Program,
    candidates: &[&'a PoolEntry],
    params: PqParams,
    seed: Option<u64>,
) -> Result<TargetSelection<'a>, PoolError> {
    let source_profile = pqgram::program_profile(source, params)?;
    select_target_with(&source_profile, candidates, params, seed, |entry| {
        pqgram::program_profile(&entry.program, params)
    })
}

/// Same as [`select_target`] with a caller-supplied profile source, so
/// corpus runs can reuse profiles across projects.
pub fn select_target_with<'a, F>(
    source_profile: &PqGramProfile,
    candidates: &[&'a PoolEntry],
    params: PqParams,
    seed: Option<u64>,
    profile_of: F,
) -> Result<TargetSelection<'a>, PoolError>
where
    F: Fn(&PoolEntry) -> Result<PqGramProfile, PqGramError> + Sync,
{
    if candidates.is_empty() {
        return Err(PoolError::NoCandidates);
    }
    debug_assert_eq!(source_profile.params(), params);
    let distances: Vec<Distance> = candidates
        .par_iter()
        .map(|entry| pqgram::distance(source_profile, &profile_of(entry)?))
        .collect::<Result<_, _>>()?;

    let ids: Vec<&str> = candidates.iter().map(|e| e.id()).collect();
    let (winner, ranked) = rank(&ids, &distances, seed);
    Ok(TargetSelection {
        target: candidates[winner],
        distance: distances[winner],
        ranked,
    })
}

/// Orders candidates by (distance, id) and picks the winner: the first one,
/// or a random one among those tied at the minimum when `seed` is given.
/// Returns the winner's index into the inputs.
pub fn rank(ids: &[&str], distances: &[Distance], seed: Option<u64>) -> (usize, Vec<Ranked>) {
    assert_eq!(ids.len(), distances.len());
    assert!(!ids.is_empty(), "ranking needs at least one candidate");
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .total_cmp(&distances[b])
            .then_with(|| ids[a].cmp(ids[b]))
    });
    let best = distances[order[0]];
    let winner = match seed {
        Some(seed) => {
            let tied: Vec<usize> = order
                .iter()
                .copied()
                .take_while(|&i| distances[i].total_cmp(&best).is_eq())
                .collect();
            *tied
                .choose(&mut ChaCha8Rng::seed_from_u64(seed))
                .expect("at least one candidate is tied with the minimum")
        }
        None => order[0],
    };
    let ranked = order
        .iter()
        .map(|&i| Ranked {
            project_id: ids[i].to_string(),
            distance: distances[i],
        })
        .collect();
    (winner, ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Actor;

    fn entry(id: &str, pass: usize, fail: usize) -> PoolEntry {
        let mut outcomes = BTreeMap::new();
        for i in 0..pass {
            outcomes.insert(format!("p{i}"), Outcome::Pass);
        }
        for i in 0..fail {
            outcomes.insert(format!("f{i}"), Outcome::Fail);
        }
        PoolEntry::new(
            Program::new(id, vec![Actor::new("Stage", true, vec![])]),
            TestReport::new(id, outcomes).unwrap(),
        )
    }

    #[test]
    fn report_parsing() {
        let reports =
            parse_reports(r#"{"projects":[{"id":"s01","tests":{"t1":"pass","t2":"fail"}}]}"#)
                .unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pass_fraction(), 0.5);

        let all: BTreeMap<_, _> = (0..28).map(|i| (format!("t{i}"), Outcome::Pass)).collect();
        assert_eq!(TestReport::new("x", all).unwrap().pass_fraction(), 1.0);
    }

    #[test]
    fn report_errors() {
        let dup =
            r#"{"projects":[{"id":"s01","tests":{"t":"pass"}},{"id":"s01","tests":{"t":"pass"}}]}"#;
        assert!(
            matches!(parse_reports(dup), Err(PoolError::DuplicateProjectId(id)) if id == "s01")
        );
        let skipped = r#"{"projects":[{"id":"s01","tests":{"t":"skip"}}]}"#;
        assert!(matches!(
            parse_reports(skipped),
            Err(PoolError::EmptyReport(_))
        ));
        assert!(matches!(
            parse_reports(r#"{"projects":[{"id":"s"}]}"#),
            Err(PoolError::SchemaError(_))
        ));
        assert!(matches!(
            parse_reports(r#"{"projects":[{"id":"s","tests":{"t":"maybe"}}]}"#),
            Err(PoolError::SchemaError(_))
        ));
    }

    #[test]
    fn skips_are_excluded_and_errors_fail() {
        let reports = parse_reports(
            r#"{"projects":[{"id":"s","tests":{"a":"pass","b":"error","c":"skip","d":"pass"}}]}"#,
        )
        .unwrap();
        assert!((reports[0].pass_fraction() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_filtering() {
        let pool = vec![entry("a", 10, 0), entry("b", 8, 2), entry("c", 19, 1)];
        let kept: Vec<_> = filter_candidates(&pool, Threshold::new(0.9).unwrap())
            .unwrap()
            .iter()
            .map(|e| e.id())
            .collect();
        assert_eq!(kept, ["a", "c"]);
        assert_eq!(
            filter_candidates(&pool, Threshold::new(0.0).unwrap())
                .unwrap()
                .len(),
            3
        );
        assert!(matches!(
            filter_candidates(&pool, Threshold::new(1.1).unwrap()),
            Err(PoolError::NoCandidates)
        ));
        assert!(Threshold::new(-0.1).is_err());
        assert_eq!(Threshold::default().min_pass_fraction(), 0.9);
    }

    #[test]
    fn identical_candidates_tie_break_by_id() {
        let pool = [entry("c", 1, 0), entry("b", 1, 0), entry("a", 1, 0)];
        let candidates: Vec<&PoolEntry> = pool.iter().collect();
        let source = Program::new("src", vec![Actor::new("Stage", true, vec![])]);
        let sel = select_target(&source, &candidates, PqParams::default(), None).unwrap();
        assert_eq!(sel.target.id(), "a");
        assert_eq!(sel.distance, Distance::ZERO);
        let ids: Vec<_> = sel.ranked.iter().map(|r| r.project_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);

        let seeded: Vec<_> = (0..2)
            .map(|_| {
                select_target(&source, &candidates, PqParams::default(), Some(7))
                    .unwrap()
                    .target
                    .id()
                    .to_string()
            })
            .collect();
        assert_eq!(seeded[0], seeded[1]);
    }

    #[test]
    fn ranking_ties_go_to_the_smallest_id() {
        let d = |v| Distance::new(v);
        let (winner, ranked) = rank(&["a", "b", "c"], &[d(0.4), d(0.2), d(0.2)], None);
        assert_eq!(winner, 1);
        let ids: Vec<_> = ranked.iter().map(|r| r.project_id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        let (seeded, _) = rank(&["a", "b", "c"], &[d(0.4), d(0.2), d(0.2)], Some(3));
        assert!(seeded == 1 || seeded == 2);
    }

    #[test]
    fn no_candidates() {
        let source = Program::new("src", vec![]);
        assert!(matches!(
            select_target(&source, &[], PqParams::default(), None),
            Err(PoolError::NoCandidates)
        ));
    }
}
