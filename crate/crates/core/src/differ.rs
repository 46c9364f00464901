//! Addition and deletion sets between matched programs.
//!
//! Nodes are compared by a one-level fingerprint: the node label plus the
//! ordered labels of its children. Only non-shadow blocks are candidates on
//! their own; leaves, shadow menus and containers take part only through the
//! fingerprint of the block that owns them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ast::{Actor, Node, Program, Script};
use crate::matcher::MatchPlan;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub actor: String,
    #[serde(rename = "script")]
    pub script_index: usize,
    pub node_id: usize,
    pub label: String,
}

impl NodeRef {
    fn new(actor: &str, script: &Script, node: &Node) -> Self {
        NodeRef {
            actor: actor.to_string(),
            script_index: script.script_index,
            node_id: node.node_id,
            label: node.label.clone(),
        }
    }

    /// The node this reference points at, if it still exists with the same label.
    pub fn resolve<'p>(&self, program: &'p Program) -> Option<&'p Node> {
        let script = program.actor(&self.actor)?.scripts.get(self.script_index)?;
        script
            .root
            .find(self.node_id)
            .filter(|n| n.label == self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint<'a> {
    pub label: &'a str,
    pub children: Vec<&'a str>,
}

pub fn fingerprint(node: &Node) -> Fingerprint<'_> {
    Fingerprint {
        label: &node.label,
        children: node.children.iter().map(|c| c.label.as_str()).collect(),
    }
}

/// Fingerprints of the hint-eligible nodes of a tree, in preorder.
pub fn eligible_nodes(root: &Node) -> impl Iterator<Item = &Node> {
    root.preorder().filter(|n| n.is_hint_eligible())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Addition {
    /// A node of a paired target script, to be added to the paired source script.
    Node {
        node: NodeRef,
        into_actor: String,
        into_script: usize,
    },
    /// The event handler of an unmatched target script.
    Script { hat: NodeRef, into_actor: String },
    /// An unmatched target actor.
    Actor { name: String, index: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DiffResult {
    pub deletions: Vec<NodeRef>,
    pub additions: Vec<Addition>,
}

impl DiffResult {
    pub fn is_empty(&self) -> bool {
        self.deletions.is_empty() && self.additions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.deletions.len() + self.additions.len()
    }
}

/// Nodes whose fingerprint occurs more often on one side than the other.
/// Occurrences up to the shared count are matched leftmost-first in preorder;
/// the rest are returned as `(deletions, additions)`.
pub fn diff_scripts<'s, 't>(src: &'s Script, tgt: &'t Script) -> (Vec<&'s Node>, Vec<&'t Node>) {
    (
        bag_excess(&src.root, &tgt.root),
        bag_excess(&tgt.root, &src.root),
    )
}

fn bag_excess<'a>(side: &'a Node, other: &Node) -> Vec<&'a Node> {
    let mut available: HashMap<Fingerprint<'_>, usize> = HashMap::new();
    for node in eligible_nodes(other) {
        *available.entry(fingerprint(node)).or_insert(0) += 1;
    }
    eligible_nodes(side)
        .filter(|node| match available.get_mut(&fingerprint(node)) {
            Some(count) if *count > 0 => {
                *count -= 1;
                false
            }
            _ => true,
        })
        .collect()
}

fn all_deletions(actor: &Actor, script: &Script, out: &mut Vec<NodeRef>) {
    out.extend(eligible_nodes(&script.root).map(|n| NodeRef::new(&actor.name, script, n)));
}

fn script_addition(into_actor: &str, actor: &Actor, script: &Script) -> Option<Addition> {
    // Loose target scripts are dead code; they are never suggested.
    script.hat().map(|hat| Addition::Script {
        hat: NodeRef::new(&actor.name, script, hat),
        into_actor: into_actor.to_string(),
    })
}

pub fn diff_programs(source: &Program, target: &Program, plan: &MatchPlan) -> DiffResult {
    let mut result = DiffResult::default();

    for actor_match in &plan.actor_matches {
        let src_actor = source
            .actor(&actor_match.source_actor)
            .expect("plan matches the source");
        let Some(pair) = plan.scripts_for(&src_actor.name) else {
            for script in &src_actor.scripts {
                all_deletions(src_actor, script, &mut result.deletions);
            }
            continue;
        };
        let tgt_actor = target
            .actor(&pair.target_actor)
            .expect("plan matches the target");
        for m in &pair.matches {
            match (m.source_script, m.target_script) {
                (Some(s), Some(t)) => {
                    let (src_script, tgt_script) = (&src_actor.scripts[s], &tgt_actor.scripts[t]);
                    let (deleted, added) = diff_scripts(src_script, tgt_script);
                    result.deletions.extend(
                        deleted
                            .into_iter()
                            .map(|n| NodeRef::new(&src_actor.name, src_script, n)),
                    );
                    result
                        .additions
                        .extend(added.into_iter().map(|n| Addition::Node {
                            node: NodeRef::new(&tgt_actor.name, tgt_script, n),
                            into_actor: src_actor.name.clone(),
                            into_script: s,
                        }));
                }
                (Some(s), None) => {
                    all_deletions(src_actor, &src_actor.scripts[s], &mut result.deletions)
                }
                (None, Some(t)) => {
                    result.additions.extend(script_addition(
                        &src_actor.name,
                        tgt_actor,
                        &tgt_actor.scripts[t],
                    ));
                }
                (None, None) => {}
            }
        }
    }

    for name in &plan.unmatched_target_actors {
        let index = target
            .actors
            .iter()
            .position(|a| &a.name == name)
            .expect("plan matches the target");
        let actor = &target.actors[index];
        result.additions.push(Addition::Actor {
            name: name.clone(),
            index,
        });
        for script in &actor.scripts {
            result
                .additions
                .extend(script_addition(name, actor, script));
        }
    }
    result
}
