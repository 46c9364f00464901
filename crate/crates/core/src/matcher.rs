//! Greedy actor and script matching between a source and a target program.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ast::{Actor, Program};
use crate::pqgram::{self, Distance, PqGramError, PqGramProfile, PqParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchKind {
    ExactName,
    Distance,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActorMatch {
    pub source_actor: String,
    pub target_actor: Option<String>,
    pub match_kind: MatchKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<Distance>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptMatch {
    pub source_script: Option<usize>,
    pub target_script: Option<usize>,
    pub distance: Option<Distance>,
}

impl ScriptMatch {
    pub fn is_pair(&self) -> bool {
        self.source_script.is_some() && self.target_script.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActorPairScripts {
    pub source_actor: String,
    pub target_actor: String,
    pub matches: Vec<ScriptMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchPlan {
    pub actor_matches: Vec<ActorMatch>,
    pub script_matches: Vec<ActorPairScripts>,
    /// Target actors no source actor was matched with, in declaration order.
    pub unmatched_target_actors: Vec<String>,
}

impl MatchPlan {
    pub fn scripts_for(&self, source_actor: &str) -> Option<&ActorPairScripts> {
        self.script_matches
            .iter()
            .find(|p| p.source_actor == source_actor)
    }

    /// The source actor a target actor was matched with.
    pub fn source_of(&self, target_actor: &str) -> Option<&str> {
        self.actor_matches
            .iter()
            .find(|m| m.target_actor.as_deref() == Some(target_actor))
            .map(|m| m.source_actor.as_str())
    }
}

/// Exact names first; the remaining source actors, in declaration order,
/// each take the nearest remaining target actor.
pub fn match_actors(
    source: &Program,
    target: &Program,
    params: PqParams,
    seed: Option<u64>,
) -> Result<Vec<ActorMatch>, PqGramError> {
    let mut taken = vec![false; target.actors.len()];
    let mut matches: Vec<Option<ActorMatch>> = vec![None; source.actors.len()];

    for (si, actor) in source.actors.iter().enumerate() {
        if let Some(ti) = target.actors.iter().position(|t| t.name == actor.name) {
            if !taken[ti] {
                taken[ti] = true;
                matches[si] = Some(ActorMatch {
                    source_actor: actor.name.clone(),
                    target_actor: Some(target.actors[ti].name.clone()),
                    match_kind: MatchKind::ExactName,
                    distance: None,
                });
            }
        }
    }

    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut target_profiles: Vec<Option<PqGramProfile>> = vec![None; target.actors.len()];
    for (si, actor) in source.actors.iter().enumerate() {
        if matches[si].is_some() {
            continue;
        }
        let remaining: Vec<usize> = (0..target.actors.len()).filter(|&ti| !taken[ti]).collect();
        if remaining.is_empty() {
            matches[si] = Some(ActorMatch {
                source_actor: actor.name.clone(),
                target_actor: None,
                match_kind: MatchKind::Unmatched,
                distance: None,
            });
            continue;
        }
        let source_profile = pqgram::profile(&actor.tree(), params)?;
        let mut scored = Vec::with_capacity(remaining.len());
        for &ti in &remaining {
            if target_profiles[ti].is_none() {
                target_profiles[ti] = Some(pqgram::profile(&target.actors[ti].tree(), params)?);
            }
            let d = pqgram::distance(
                &source_profile,
                target_profiles[ti].as_ref().expect("just filled"),
            )?;
            scored.push((ti, d));
        }
        let best = scored
            .iter()
            .map(|(_, d)| *d)
            .min_by(|a, b| a.total_cmp(b))
            .expect("remaining is non-empty");
        let tied: Vec<(usize, Distance)> = scored
            .into_iter()
            .filter(|(_, d)| d.total_cmp(&best).is_eq())
            .collect();
        let (ti, d) = match rng.as_mut() {
            Some(rng) => *tied.choose(rng).expect("non-empty"),
            None => tied[0],
        };
        taken[ti] = true;
        matches[si] = Some(ActorMatch {
            source_actor: actor.name.clone(),
            target_actor: Some(target.actors[ti].name.clone()),
            match_kind: MatchKind::Distance,
            distance: Some(d),
        });
    }

    Ok(matches
        .into_iter()
        .map(|m| m.expect("every source actor is decided"))
        .collect())
}

/// Pairs scripts of two matched actors. The side with fewer scripts (the
/// source on equal counts) is iterated in index order; each of its scripts
/// takes the nearest unconsumed script of the other side, ties to the
/// smaller index. Output lists pairs and source leftovers by source index,
/// then target leftovers by target index.
pub fn match_scripts(
    source_actor: &Actor,
    target_actor: &Actor,
    params: PqParams,
) -> Result<Vec<ScriptMatch>, PqGramError> {
    let source_profiles = script_profiles(source_actor, params)?;
    let target_profiles = script_profiles(target_actor, params)?;
    let iterate_target = source_profiles.len() > target_profiles.len();
    let (iterated, other) = if iterate_target {
        (&target_profiles, &source_profiles)
    } else {
        (&source_profiles, &target_profiles)
    };

    let mut consumed = vec![false; other.len()];
    let mut pairs = Vec::new();
    for (i, profile) in iterated.iter().enumerate() {
        let mut best: Option<(usize, Distance)> = None;
        for (j, candidate) in other.iter().enumerate() {
            if consumed[j] {
                continue;
            }
            let d = pqgram::distance(profile, candidate)?;
            if best.is_none_or(|(_, b)| d.total_cmp(&b).is_lt()) {
                best = Some((j, d));
            }
        }
        let Some((j, d)) = best else { break };
        consumed[j] = true;
        let (s, t) = if iterate_target { (j, i) } else { (i, j) };
        pairs.push((s, t, d));
    }

    let mut out: Vec<ScriptMatch> = Vec::new();
    for s in 0..source_profiles.len() {
        match pairs.iter().find(|(ps, _, _)| *ps == s) {
            Some(&(_, t, d)) => out.push(ScriptMatch {
                source_script: Some(s),
                target_script: Some(t),
                distance: Some(d),
            }),
            None => out.push(ScriptMatch {
                source_script: Some(s),
                target_script: None,
                distance: None,
            }),
        }
    }
    for t in 0..target_profiles.len() {
        if !pairs.iter().any(|(_, pt, _)| *pt == t) {
            out.push(ScriptMatch {
                source_script: None,
                target_script: Some(t),
                distance: None,
            });
        }
    }
    Ok(out)
}

fn script_profiles(actor: &Actor, params: PqParams) -> Result<Vec<PqGramProfile>, PqGramError> {
    actor
        .scripts
        .iter()
        .map(|s| pqgram::profile(&s.root, params))
        .collect()
}

pub fn build_plan(
    source: &Program,
    target: &Program,
    params: PqParams,
    seed: Option<u64>,
) -> Result<MatchPlan, PqGramError> {
    let actor_matches = match_actors(source, target, params, seed)?;
    let mut script_matches = Vec::new();
    for m in &actor_matches {
        let Some(target_name) = &m.target_actor else {
            continue;
        };
        let src = source
            .actor(&m.source_actor)
            .expect("matched source actor exists");
        let tgt = target
            .actor(target_name)
            .expect("matched target actor exists");
        script_matches.push(ActorPairScripts {
            source_actor: m.source_actor.clone(),
            target_actor: target_name.clone(),
            matches: match_scripts(src, tgt, params)?,
        });
    }
    let unmatched_target_actors = target
        .actors
        .iter()
        .filter(|t| {
            !actor_matches
                .iter()
                .any(|m| m.target_actor.as_deref() == Some(t.name.as_str()))
        })
        .map(|t| t.name.clone())
        .collect();
    Ok(MatchPlan {
        actor_matches,
        script_matches,
        unmatched_target_actors,
    })
}
