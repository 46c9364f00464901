//! Source program to hint set: filter, select, match, diff, synthesize.

use crate::ast::Program;
use crate::differ::{self, DiffResult};
use crate::hinter::{self, HintSet};
use crate::matcher::{self, MatchPlan};
use crate::pool::{self, PoolEntry, TargetSelection, Threshold};
use crate::pqgram::{PqGramProfile, PqParams};
use crate::Error;

pub struct HintRun<'a> {
    pub selection: TargetSelection<'a>,
    pub plan: MatchPlan,
    pub diff: DiffResult,
    pub hints: HintSet,
}

/// Pool entries other than the source itself that meet the threshold.
pub fn candidates<'a>(
    source_id: &str,
    pool: &'a [PoolEntry],
    threshold: Threshold,
) -> Result<Vec<&'a PoolEntry>, Error> {
    let kept: Vec<&PoolEntry> = pool::filter_candidates(pool, threshold)?
        .into_iter()
        .filter(|e| e.id() != source_id)
        .collect();
    if kept.is_empty() {
        return Err(pool::PoolError::NoCandidates.into());
    }
    Ok(kept)
}

pub fn generate_hints<'a>(
    source: &Program,
    pool: &'a [PoolEntry],
    threshold: Threshold,
    params: PqParams,
    seed: Option<u64>,
) -> Result<HintRun<'a>, Error> {
    let candidates = candidates(&source.source_id, pool, threshold)?;
    let selection = pool::select_target(source, &candidates, params, seed)?;
    finish(source, selection, threshold, params, seed)
}

/// As [`generate_hints`] with precomputed program profiles.
pub fn generate_hints_cached<'a, F>(
    source: &Program,
    source_profile: &PqGramProfile,
    pool: &'a [PoolEntry],
    threshold: Threshold,
    params: PqParams,
    seed: Option<u64>,
    profile_of: F,
) -> Result<HintRun<'a>, Error>
where
    F: Fn(&PoolEntry) -> Result<PqGramProfile, crate::pqgram::PqGramError> + Sync,
{
    let candidates = candidates(&source.source_id, pool, threshold)?;
    let selection =
        pool::select_target_with(source_profile, &candidates, params, seed, profile_of)?;
    finish(source, selection, threshold, params, seed)
}

fn finish<'a>(
    source: &Program,
    selection: TargetSelection<'a>,
    threshold: Threshold,
    params: PqParams,
    seed: Option<u64>,
) -> Result<HintRun<'a>, Error> {
    let target = &selection.target.program;
    let plan = matcher::build_plan(source, target, params, seed)?;
    let diff = differ::diff_programs(source, target, &plan);
    let mut hints = hinter::synthesize(source, target, &diff, params);
    hints.threshold = threshold;
    Ok(HintRun {
        selection,
        plan,
        diff,
        hints,
    })
}
