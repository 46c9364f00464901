//! Normalized labeled AST for Scratch 3 programs.
//!
//! Every program has the same shape: a `program` root, one `actor` child per
//! stage/sprite and one `script` child per top-level block. Statement chains
//! (`next` links) become consecutive children of their enclosing container,
//! C-block bodies hang under `substack` / `else-substack` containers, and
//! field values and literals become leaves.

use serde_json::Value;

pub const PROGRAM: &str = "program";
pub const ACTOR: &str = "actor";
pub const SCRIPT: &str = "script";
pub const SUBSTACK: &str = "substack";
pub const ELSE_SUBSTACK: &str = "else-substack";
pub const LIT_NUMBER: &str = "lit:number";
pub const LIT_STRING: &str = "lit:string";
pub const FIELD_PREFIX: &str = "field:";

/// Label used for padding positions in pq-grams. Never a real node label.
pub const DUMMY: &str = "*";

/// Where a node sits relative to its parent block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Slot {
    /// Containers and statements in a chain.
    Body,
    /// A block, literal or container plugged into the named input.
    Input(String),
    /// An entry of the parent block's `fields` object.
    Field(String),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub label: String,
    pub children: Vec<Node>,
    /// Preorder ordinal within the owning script; the script root is 0.
    pub node_id: usize,
    /// Original sb3 block id. Absent for synthesized nodes.
    pub raw_ref: Option<String>,
    pub slot: Slot,
    /// Raw sb3 JSON backing this node: the block object for blocks, the
    /// primitive / field array for leaves. Used when serializing.
    pub payload: Option<Value>,
}

impl Node {
    pub fn new(label: impl Into<String>, children: Vec<Node>) -> Self {
        Node {
            label: escape_label(label.into()),
            children,
            node_id: 0,
            raw_ref: None,
            slot: Slot::Body,
            payload: None,
        }
    }

    pub fn leaf(label: impl Into<String>) -> Self {
        Node::new(label, Vec::new())
    }

    pub fn with_slot(mut self, slot: Slot) -> Self {
        self.slot = slot;
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_block(&self) -> bool {
        is_opcode(&self.label)
    }

    pub fn is_container(&self) -> bool {
        is_container_label(&self.label)
    }

    /// Shadow blocks are dropdown menus and custom-block prototypes: parts of
    /// their parent block rather than blocks of their own.
    pub fn is_shadow(&self) -> bool {
        self.payload
            .as_ref()
            .and_then(|p| p.get("shadow"))
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }

    /// Blocks that can be the subject of a hint on their own.
    pub fn is_hint_eligible(&self) -> bool {
        self.is_block() && !self.is_shadow()
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Node::size).sum::<usize>()
    }

    pub fn preorder(&self) -> Preorder<'_> {
        Preorder { stack: vec![self] }
    }

    /// Reassigns `node_id` in preorder starting at `start`; returns the next free id.
    pub fn renumber_from(&mut self, start: usize) -> usize {
        self.node_id = start;
        let mut next = start + 1;
        for child in &mut self.children {
            next = child.renumber_from(next);
        }
        next
    }

    pub fn find(&self, node_id: usize) -> Option<&Node> {
        self.preorder().find(|n| n.node_id == node_id)
    }

    /// Labels and topology only.
    pub fn same_structure(&self, other: &Node) -> bool {
        self.label == other.label
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.same_structure(b))
    }
}

pub struct Preorder<'a> {
    stack: Vec<&'a Node>,
}

impl<'a> Iterator for Preorder<'a> {
    type Item = &'a Node;

    fn next(&mut self) -> Option<&'a Node> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

#[derive(Debug, Clone)]
pub struct Script {
    pub root: Node,
    pub has_hat: bool,
    pub script_index: usize,
}

impl Script {
    /// Wraps a chain of top-level statements in a `script` root.
    pub fn new(chain: Vec<Node>, script_index: usize) -> Self {
        let mut script = Script {
            root: Node::new(SCRIPT, chain),
            has_hat: false,
            script_index,
        };
        script.refresh();
        script
    }

    /// Recomputes `has_hat` and node ids after the tree was edited.
    pub fn refresh(&mut self) {
        self.has_hat = self
            .root
            .children
            .first()
            .is_some_and(|first| is_hat_opcode(&first.label));
        self.root.renumber_from(0);
    }

    pub fn hat(&self) -> Option<&Node> {
        if self.has_hat {
            self.root.children.first()
        } else {
            None
        }
    }

    pub fn is_empty_handler(&self) -> bool {
        self.has_hat && self.root.children.len() == 1
    }
}

#[derive(Debug, Clone)]
pub struct Actor {
    pub name: String,
    pub is_stage: bool,
    pub scripts: Vec<Script>,
    /// The sb3 target object with its `blocks` removed.
    pub payload: Option<Value>,
}

impl Actor {
    pub fn new(name: impl Into<String>, is_stage: bool, scripts: Vec<Script>) -> Self {
        Actor {
            name: name.into(),
            is_stage,
            scripts,
            payload: None,
        }
    }

    /// The actor subtree as a standalone tree (`actor` root, script children).
    pub fn tree(&self) -> Node {
        Node::new(ACTOR, self.scripts.iter().map(|s| s.root.clone()).collect())
    }

    pub fn reindex(&mut self) {
        for (i, script) in self.scripts.iter_mut().enumerate() {
            script.script_index = i;
            script.refresh();
        }
    }
}

#[derive(Debug, Clone)]
pub struct Program {
    pub actors: Vec<Actor>,
    pub source_id: String,
}

impl Program {
    pub fn new(source_id: impl Into<String>, actors: Vec<Actor>) -> Self {
        Program {
            actors,
            source_id: source_id.into(),
        }
    }

    /// The whole program as one tree; input to program-level distance.
    pub fn tree(&self) -> Node {
        Node::new(PROGRAM, self.actors.iter().map(Actor::tree).collect())
    }

    pub fn actor(&self, name: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.name == name)
    }

    pub fn actor_mut(&mut self, name: &str) -> Option<&mut Actor> {
        self.actors.iter_mut().find(|a| a.name == name)
    }

    pub fn stage(&self) -> Option<&Actor> {
        self.actors.iter().find(|a| a.is_stage)
    }

    pub fn script_count(&self) -> usize {
        self.actors.iter().map(|a| a.scripts.len()).sum()
    }

    /// Labels and topology of every actor and script, ignoring ids and payloads.
    pub fn same_structure(&self, other: &Program) -> bool {
        self.actors.len() == other.actors.len()
            && self.actors.iter().zip(&other.actors).all(|(a, b)| {
                a.name == b.name
                    && a.is_stage == b.is_stage
                    && a.scripts.len() == b.scripts.len()
                    && a.scripts
                        .iter()
                        .zip(&b.scripts)
                        .all(|(x, y)| x.has_hat == y.has_hat && x.root.same_structure(&y.root))
            })
    }
}

/// One visited node together with its owning actor and script.
#[derive(Debug, Clone, Copy)]
pub struct Visit<'a> {
    pub actor: &'a Actor,
    pub script: &'a Script,
    pub node: &'a Node,
}

/// Deterministic preorder over every script node of the program, actors in
/// declaration order and scripts by index.
pub fn iter_nodes(program: &Program) -> impl Iterator<Item = Visit<'_>> {
    program.actors.iter().flat_map(|actor| {
        actor.scripts.iter().flat_map(move |script| {
            script.root.preorder().map(move |node| Visit {
                actor,
                script,
                node,
            })
        })
    })
}

pub fn escape_label(label: String) -> String {
    if label == DUMMY {
        "\\*".to_string()
    } else {
        label
    }
}

pub fn is_container_label(label: &str) -> bool {
    matches!(label, PROGRAM | ACTOR | SCRIPT | SUBSTACK | ELSE_SUBSTACK)
}

/// sb3 opcodes are `<category>_<name>` identifiers.
pub fn is_opcode(label: &str) -> bool {
    let Some((category, name)) = label.split_once('_') else {
        return false;
    };
    !category.is_empty()
        && !name.is_empty()
        && category.chars().all(|c| c.is_ascii_alphanumeric())
        && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn is_hat_opcode(label: &str) -> bool {
    if matches!(label, "control_start_as_clone" | "procedures_definition") {
        return true;
    }
    is_opcode(label)
        && label
            .split_once('_')
            .is_some_and(|(_, name)| name.to_ascii_lowercase().starts_with("when"))
}

pub fn field_label(value: &str) -> String {
    format!("{FIELD_PREFIX}{value}")
}

/// C-blocks whose bodies are always materialized as containers, even when
/// the sb3 file omits the empty input.
pub fn c_block_containers(opcode: &str) -> &'static [&'static str] {
    match opcode {
        "control_if_else" => &["SUBSTACK", "SUBSTACK2"],
        "control_forever"
        | "control_repeat"
        | "control_repeat_until"
        | "control_if"
        | "control_while"
        | "control_for_each"
        | "control_all_at_once" => &["SUBSTACK"],
        _ => &[],
    }
}

pub fn container_label_for_input(input: &str) -> Option<&'static str> {
    match input {
        "SUBSTACK" => Some(SUBSTACK),
        "SUBSTACK2" => Some(ELSE_SUBSTACK),
        _ => None,
    }
}
