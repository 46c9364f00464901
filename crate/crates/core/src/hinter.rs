//! Turning a diff into contextualized hints, and applying hints to a program.
//!
//! Add hints describe the node in the context it has in the target: parent
//! label and up to `q - 1` siblings on each side are read from the target
//! tree. Delete hints use the source tree.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{Actor, Node, Program, Script, ACTOR, PROGRAM, SCRIPT};
use crate::differ::{Addition, DiffResult, NodeRef};
use crate::pool::Threshold;
use crate::pqgram::PqParams;

#[derive(Debug, Error)]
pub enum ApplyError {
    #[error("stale hint: {0}")]
    StaleHint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HintKind {
    Add,
    Delete,
    NewScript,
    NewActor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hint {
    pub kind: HintKind,
    #[serde(rename = "node")]
    pub node_label: String,
    #[serde(rename = "parent")]
    pub parent_label: String,
    #[serde(rename = "left")]
    pub left_siblings: Vec<String>,
    #[serde(rename = "right")]
    pub right_siblings: Vec<String>,
    /// Source actor the hint applies to (the new actor's name for `new-actor`).
    pub actor: String,
    /// Source script index; the target script index for `new-script`.
    #[serde(rename = "script")]
    pub script_index: usize,
    pub position: usize,
    #[serde(rename = "from")]
    pub provenance: String,
    /// Where the node lives: the source program for deletions, the target
    /// program otherwise. Absent for `new-actor`.
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub node_ref: Option<NodeRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintSet {
    pub source_id: String,
    pub target_id: String,
    pub params: PqParams,
    pub threshold: Threshold,
    pub hints: Vec<Hint>,
}

impl HintSet {
    pub fn count(&self, kind: HintKind) -> usize {
        self.hints.iter().filter(|h| h.kind == kind).count()
    }
}

struct Context {
    parent: String,
    left: Vec<String>,
    right: Vec<String>,
    position: usize,
}

/// Child-index path from `root` to the node with `node_id`.
fn path_to(root: &Node, node_id: usize) -> Option<Vec<usize>> {
    if root.node_id == node_id {
        return Some(Vec::new());
    }
    // Children are in preorder, so the target sits under the last child
    // whose id does not exceed it.
    let idx = root.children.iter().rposition(|c| c.node_id <= node_id)?;
    let mut path = path_to(&root.children[idx], node_id)?;
    path.insert(0, idx);
    Some(path)
}

fn node_at<'a>(root: &'a Node, path: &[usize]) -> &'a Node {
    path.iter().fold(root, |n, &i| &n.children[i])
}

fn context_of(script: &Script, node_id: usize, width: usize) -> Option<Context> {
    let path = path_to(&script.root, node_id)?;
    let (&position, parent_path) = path.split_last()?;
    let parent = node_at(&script.root, parent_path);
    let labels = |range: std::ops::Range<usize>| -> Vec<String> {
        parent.children[range]
            .iter()
            .map(|c| c.label.clone())
            .collect()
    };
    Some(Context {
        parent: parent.label.clone(),
        left: labels(position.saturating_sub(width)..position),
        right: labels(position + 1..(position + 1 + width).min(parent.children.len())),
        position,
    })
}

fn script_of<'p>(program: &'p Program, r: &NodeRef) -> &'p Script {
    &program
        .actor(&r.actor)
        .expect("diff refers to existing actors")
        .scripts[r.script_index]
}

/// One hint per deletion and per addition, in a fixed order: actors in
/// source order (new actors last), scripts by index, deletions before
/// additions, nodes by preorder.
pub fn synthesize(
    source: &Program,
    target: &Program,
    diff: &DiffResult,
    params: PqParams,
) -> HintSet {
    let width = params.q.saturating_sub(1);
    let from = target.source_id.clone();
    let mut hints = Vec::with_capacity(diff.len());

    for r in &diff.deletions {
        let ctx = context_of(script_of(source, r), r.node_id, width)
            .expect("deletions resolve in the source");
        hints.push(Hint {
            kind: HintKind::Delete,
            node_label: r.label.clone(),
            parent_label: ctx.parent,
            left_siblings: ctx.left,
            right_siblings: ctx.right,
            actor: r.actor.clone(),
            script_index: r.script_index,
            position: ctx.position,
            provenance: from.clone(),
            node_ref: Some(r.clone()),
        });
    }

    for addition in &diff.additions {
        hints.push(match addition {
            Addition::Node {
                node,
                into_actor,
                into_script,
            } => {
                let ctx = context_of(script_of(target, node), node.node_id, width)
                    .expect("additions resolve in the target");
                Hint {
                    kind: HintKind::Add,
                    node_label: node.label.clone(),
                    parent_label: ctx.parent,
                    left_siblings: ctx.left,
                    right_siblings: ctx.right,
                    actor: into_actor.clone(),
                    script_index: *into_script,
                    position: ctx.position,
                    provenance: from.clone(),
                    node_ref: Some(node.clone()),
                }
            }
            Addition::Script { hat, into_actor } => Hint {
                kind: HintKind::NewScript,
                node_label: hat.label.clone(),
                parent_label: SCRIPT.to_string(),
                left_siblings: Vec::new(),
                right_siblings: Vec::new(),
                actor: into_actor.clone(),
                script_index: hat.script_index,
                position: 0,
                provenance: from.clone(),
                node_ref: Some(hat.clone()),
            },
            Addition::Actor { name, index } => Hint {
                kind: HintKind::NewActor,
                node_label: ACTOR.to_string(),
                parent_label: PROGRAM.to_string(),
                left_siblings: Vec::new(),
                right_siblings: Vec::new(),
                actor: name.clone(),
                script_index: 0,
                position: *index,
                provenance: from.clone(),
                node_ref: None,
            },
        });
    }

    let actor_rank = |name: &str| -> usize {
        source
            .actors
            .iter()
            .position(|a| a.name == name)
            .or_else(|| {
                target
                    .actors
                    .iter()
                    .position(|a| a.name == name)
                    .map(|i| source.actors.len() + i)
            })
            .unwrap_or(usize::MAX)
    };
    hints.sort_by_cached_key(|h| {
        let node_id = h.node_ref.as_ref().map_or(0, |r| r.node_id);
        let (script_rank, kind_rank) = match h.kind {
            HintKind::NewActor => ((0, 0), 0),
            HintKind::Delete => ((0, h.script_index), 0),
            HintKind::Add => ((0, h.script_index), 1),
            HintKind::NewScript => ((1, h.script_index), 2),
        };
        (actor_rank(&h.actor), script_rank, kind_rank, node_id)
    });

    HintSet {
        source_id: source.source_id.clone(),
        target_id: target.source_id.clone(),
        params,
        threshold: Threshold::default(),
        hints,
    }
}

/// Copy of a target node without its non-shadow block children. Containers
/// are kept empty, shadow menus are kept whole and literal values are
/// replaced by placeholders.
fn one_level_copy(node: &Node) -> Node {
    let children = node
        .children
        .iter()
        .filter_map(|child| {
            if child.is_container() {
                Some(Node {
                    children: Vec::new(),
                    ..detached(child)
                })
            } else if child.is_block() && !child.is_shadow() {
                None
            } else {
                Some(deep_copy(child))
            }
        })
        .collect();
    Node {
        children,
        ..detached(node)
    }
}

fn deep_copy(node: &Node) -> Node {
    Node {
        children: node.children.iter().map(deep_copy).collect(),
        ..detached(node)
    }
}

fn detached(node: &Node) -> Node {
    let is_literal = node.label.starts_with("lit:");
    Node {
        label: node.label.clone(),
        children: Vec::new(),
        node_id: 0,
        raw_ref: None,
        slot: node.slot.clone(),
        payload: if is_literal {
            None
        } else {
            node.payload.clone()
        },
    }
}

/// Removes marked nodes. The bodies of a removed C-block are spliced into
/// its place; everything else it owned goes with it.
fn remove_marked(node: &Node, marks: &HashSet<usize>) -> Vec<Node> {
    let mut kept_children = Vec::new();
    for child in &node.children {
        kept_children.extend(remove_marked(child, marks));
    }
    if marks.contains(&node.node_id) {
        return node
            .children
            .iter()
            .filter(|c| c.is_container())
            .flat_map(|c| c.children.iter().flat_map(|gc| remove_marked(gc, marks)))
            .collect();
    }
    vec![Node {
        children: kept_children,
        ..node.clone_shallow()
    }]
}

impl Node {
    fn clone_shallow(&self) -> Node {
        Node {
            label: self.label.clone(),
            children: Vec::new(),
            node_id: self.node_id,
            raw_ref: self.raw_ref.clone(),
            slot: self.slot.clone(),
            payload: self.payload.clone(),
        }
    }
}

/// Label path from the script root down to `path`'s end, and how many nodes
/// with the same label path precede it in preorder.
fn anchor_of(root: &Node, path: &[usize]) -> (Vec<String>, usize) {
    let mut labels = vec![root.label.clone()];
    let mut node = root;
    for &i in path {
        node = &node.children[i];
        labels.push(node.label.clone());
    }
    let target_id = node.node_id;
    let mut occurrence = 0;
    walk_label_paths(root, &mut Vec::new(), &mut |n, p| {
        if n.node_id < target_id && p == labels.as_slice() {
            occurrence += 1;
        }
    });
    (labels, occurrence)
}

fn walk_label_paths<'a>(
    node: &'a Node,
    prefix: &mut Vec<String>,
    visit: &mut dyn FnMut(&'a Node, &[String]),
) {
    prefix.push(node.label.clone());
    visit(node, prefix);
    for child in &node.children {
        walk_label_paths(child, prefix, visit);
    }
    prefix.pop();
}

/// The `occurrence`-th node (clamped) with the given label path, or the root.
fn find_anchor_mut<'a>(root: &'a mut Node, labels: &[String], occurrence: usize) -> &'a mut Node {
    let mut found: Vec<Vec<usize>> = Vec::new();
    collect_paths(root, labels, 1, &mut Vec::new(), &mut found);
    let path = if found.is_empty() {
        Vec::new()
    } else {
        found.swap_remove(occurrence.min(found.len() - 1))
    };
    path.iter().fold(root, |n, &i| &mut n.children[i])
}

fn collect_paths(
    node: &Node,
    labels: &[String],
    depth: usize,
    cur: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if labels.first() != Some(&node.label) {
        return;
    }
    if depth == labels.len() {
        out.push(cur.clone());
        return;
    }
    for (i, child) in node.children.iter().enumerate() {
        if child.label == labels[depth] {
            cur.push(i);
            collect_paths(child, &labels[depth..], 1, cur, out);
            cur.pop();
        }
    }
}

fn stale(hint: &Hint, why: &str) -> ApplyError {
    ApplyError::StaleHint(format!(
        "{:?} `{}` in {} script {}: {why}",
        hint.kind, hint.node_label, hint.actor, hint.script_index
    ))
}

fn resolve_checked<'p>(hint: &Hint, program: &'p Program) -> Result<&'p Node, ApplyError> {
    let r = hint
        .node_ref
        .as_ref()
        .ok_or_else(|| stale(hint, "missing node reference"))?;
    if r.label != hint.node_label {
        return Err(stale(hint, "reference label differs from hinted node"));
    }
    r.resolve(program)
        .ok_or_else(|| stale(hint, "node reference does not resolve"))
}

/// Applies every hint to a copy of `source`.
///
/// Deletions are resolved against the unmodified source and applied in one
/// pass; additions are then inserted in hint order, which is target preorder
/// within each script, so parents are in place before their children.
pub fn apply_hints(
    source: &Program,
    hints: &HintSet,
    target: &Program,
) -> Result<Program, ApplyError> {
    for hint in &hints.hints {
        match hint.kind {
            HintKind::Delete => {
                resolve_checked(hint, source)?;
            }
            HintKind::Add => {
                resolve_checked(hint, target)?;
                let exists = source
                    .actor(&hint.actor)
                    .is_some_and(|a| hint.script_index < a.scripts.len());
                if !exists {
                    return Err(stale(
                        hint,
                        "destination script does not exist in the source",
                    ));
                }
            }
            HintKind::NewScript => {
                resolve_checked(hint, target)?;
                let declared = source.actor(&hint.actor).is_some()
                    || hints
                        .hints
                        .iter()
                        .any(|h| h.kind == HintKind::NewActor && h.actor == hint.actor);
                if !declared {
                    return Err(stale(hint, "destination actor does not exist"));
                }
            }
            HintKind::NewActor => {
                if target.actor(&hint.actor).is_none() {
                    return Err(stale(hint, "actor does not exist in the target"));
                }
                if source.actor(&hint.actor).is_some() {
                    return Err(stale(hint, "actor already exists in the source"));
                }
            }
        }
    }

    let mut out = source.clone();

    let mut marks: HashMap<(String, usize), HashSet<usize>> = HashMap::new();
    for hint in hints.hints.iter().filter(|h| h.kind == HintKind::Delete) {
        let r = hint.node_ref.as_ref().expect("checked above");
        marks
            .entry((r.actor.clone(), r.script_index))
            .or_default()
            .insert(r.node_id);
    }
    for ((actor, index), ids) in &marks {
        let script = &mut out.actor_mut(actor).expect("checked above").scripts[*index];
        let mut rebuilt = remove_marked(&script.root, ids);
        script.root = rebuilt.pop().expect("script roots are never marked");
    }

    for hint in hints.hints.iter().filter(|h| h.kind == HintKind::NewActor) {
        let template = target.actor(&hint.actor).expect("checked above");
        let mut actor = Actor::new(hint.actor.clone(), false, Vec::new());
        actor.payload = template.payload.clone();
        out.actors.push(actor);
    }

    for hint in &hints.hints {
        match hint.kind {
            HintKind::Add => {
                let r = hint.node_ref.as_ref().expect("checked above");
                let tgt_script = script_of(target, r);
                let path = path_to(&tgt_script.root, r.node_id).expect("checked above");
                let parent_path = &path[..path.len().saturating_sub(1)];
                let (labels, occurrence) = anchor_of(&tgt_script.root, parent_path);
                let node = one_level_copy(node_at(&tgt_script.root, &path));

                let script = &mut out.actor_mut(&hint.actor).expect("checked above").scripts
                    [hint.script_index];
                let parent = find_anchor_mut(&mut script.root, &labels, occurrence);
                let at = hint.position.min(parent.children.len());
                parent.children.insert(at, node);
                // Keep ids current for later anchor lookups in this script.
                script.root.renumber_from(0);
            }
            HintKind::NewScript => {
                let r = hint.node_ref.as_ref().expect("checked above");
                let hat = one_level_copy(r.resolve(target).expect("checked above"));
                let actor = out.actor_mut(&hint.actor).expect("checked above");
                let index = actor.scripts.len();
                actor.scripts.push(Script::new(vec![hat], index));
            }
            HintKind::Delete | HintKind::NewActor => {}
        }
    }

    for actor in &mut out.actors {
        actor.scripts.retain(|s| !s.root.children.is_empty());
        actor.reindex();
    }
    Ok(out)
}
