//! Reading and writing Scratch 3 `project.json` documents.
//!
//! Parsing keeps the raw block JSON on every node so that serialization can
//! reproduce blocks it knows nothing about (mutations, shadows, coordinates)
//! and only rewrites the links that edits may have changed.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Seek};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::ast::{
    c_block_containers, container_label_for_input, field_label, is_opcode, Actor, Node, Program,
    Script, Slot, LIT_NUMBER, LIT_STRING,
};

const ZIP_MAGIC: &[u8; 4] = b"PK\x03\x04";

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("not a Scratch 3 project: {0}")]
    NotAScratchProject(String),
    #[error("project has no stage target")]
    NoStage,
    #[error("invalid block graph: {0}")]
    InvalidBlockGraph(String),
    #[error("cannot read sb3 archive: {0}")]
    Archive(String),
}

#[derive(Debug, Error)]
pub enum SerializeError {
    #[error(transparent)]
    Template(#[from] ParseError),
    #[error("node `{label}` has no sb3 opcode mapping")]
    UnserializableNode { label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectKind {
    Sb3Zip,
    RawJson,
}

#[derive(Debug, Clone)]
pub struct ProjectFile {
    pub path: PathBuf,
    pub kind: ProjectKind,
}

impl ProjectFile {
    /// Detects the file kind from its leading bytes.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ParseError> {
        let path = path.as_ref().to_path_buf();
        let mut head = [0u8; 4];
        let read = File::open(&path)
            .and_then(|mut f| f.read(&mut head))
            .map_err(|source| ParseError::Io {
                path: path.clone(),
                source,
            })?;
        let kind = if read == 4 && &head == ZIP_MAGIC {
            ProjectKind::Sb3Zip
        } else {
            ProjectKind::RawJson
        };
        Ok(ProjectFile { path, kind })
    }

    pub fn stem(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn read_document(&self) -> Result<Value, ParseError> {
        let io_err = |source| ParseError::Io {
            path: self.path.clone(),
            source,
        };
        let bytes = match self.kind {
            ProjectKind::RawJson => std::fs::read(&self.path).map_err(io_err)?,
            ProjectKind::Sb3Zip => read_project_json(File::open(&self.path).map_err(io_err)?)?,
        };
        serde_json::from_slice(&bytes).map_err(|e| ParseError::MalformedJson(e.to_string()))
    }
}

fn read_project_json<R: Read + Seek>(reader: R) -> Result<Vec<u8>, ParseError> {
    let mut archive =
        zip::ZipArchive::new(reader).map_err(|e| ParseError::Archive(e.to_string()))?;
    let mut entry = archive
        .by_name("project.json")
        .map_err(|e| ParseError::Archive(e.to_string()))?;
    let mut bytes = Vec::new();
    entry
        .read_to_end(&mut bytes)
        .map_err(|e| ParseError::Archive(e.to_string()))?;
    Ok(bytes)
}

pub fn parse_project(file: &ProjectFile) -> Result<Program, ParseError> {
    parse_document(&file.read_document()?, &file.stem())
}

pub fn parse_path(path: impl AsRef<Path>) -> Result<Program, ParseError> {
    parse_project(&ProjectFile::open(path)?)
}

pub fn parse_str(json: &str, source_id: &str) -> Result<Program, ParseError> {
    let doc: Value =
        serde_json::from_str(json).map_err(|e| ParseError::MalformedJson(e.to_string()))?;
    parse_document(&doc, source_id)
}

pub fn parse_document(doc: &Value, source_id: &str) -> Result<Program, ParseError> {
    let targets = doc
        .get("targets")
        .and_then(Value::as_array)
        .ok_or_else(|| ParseError::NotAScratchProject("missing `targets` array".into()))?;

    let mut stage = None;
    let mut sprites = Vec::new();
    for target in targets {
        let obj = target
            .as_object()
            .ok_or_else(|| ParseError::NotAScratchProject("target is not an object".into()))?;
        let is_stage = obj.get("isStage").and_then(Value::as_bool).unwrap_or(false);
        let name = obj
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or(if is_stage { "Stage" } else { "Sprite" })
            .to_string();
        let empty = Map::new();
        let blocks = obj
            .get("blocks")
            .and_then(Value::as_object)
            .unwrap_or(&empty);
        let scripts = BlockGraph::new(blocks).scripts()?;

        let mut payload = obj.clone();
        payload.remove("blocks");
        let mut actor = Actor::new(name, is_stage, scripts);
        actor.payload = Some(Value::Object(payload));

        if is_stage {
            if stage.is_some() {
                return Err(ParseError::NotAScratchProject("more than one stage".into()));
            }
            stage = Some(actor);
        } else {
            sprites.push(actor);
        }
    }

    let mut actors = vec![stage.ok_or(ParseError::NoStage)?];
    actors.extend(sprites);
    dedupe_names(&mut actors);
    Ok(Program::new(source_id, actors))
}

fn dedupe_names(actors: &mut [Actor]) {
    let mut taken: HashSet<String> = HashSet::new();
    for actor in actors.iter_mut() {
        if taken.insert(actor.name.clone()) {
            continue;
        }
        let base = actor.name.clone();
        let mut n = 2;
        while taken.contains(&format!("{base}#{n}")) {
            n += 1;
        }
        actor.name = format!("{base}#{n}");
        taken.insert(actor.name.clone());
    }
}

struct BlockGraph<'a> {
    blocks: &'a Map<String, Value>,
    visited: HashSet<&'a str>,
}

impl<'a> BlockGraph<'a> {
    fn new(blocks: &'a Map<String, Value>) -> Self {
        BlockGraph {
            blocks,
            visited: HashSet::new(),
        }
    }

    fn scripts(mut self) -> Result<Vec<Script>, ParseError> {
        let mut scripts = Vec::new();
        for (id, block) in self.blocks {
            let chain = match block {
                Value::Object(obj)
                    if obj.get("topLevel").and_then(Value::as_bool) == Some(true) =>
                {
                    self.chain(id)?
                }
                Value::Array(arr) => match top_level_primitive(id, arr) {
                    Some(node) => vec![node],
                    None => continue,
                },
                _ => continue,
            };
            if !chain.is_empty() {
                let index = scripts.len();
                scripts.push(Script::new(chain, index));
            }
        }
        Ok(scripts)
    }

    fn chain(&mut self, start: &'a str) -> Result<Vec<Node>, ParseError> {
        let mut nodes = Vec::new();
        let mut cursor = Some(start);
        while let Some(id) = cursor {
            let Some((key, Value::Object(obj))) = self.blocks.get_key_value(id) else {
                break;
            };
            nodes.push(self.block(key, Slot::Body)?);
            cursor = obj.get("next").and_then(Value::as_str);
        }
        Ok(nodes)
    }

    fn block(&mut self, id: &'a str, slot: Slot) -> Result<Node, ParseError> {
        if !self.visited.insert(id) {
            return Err(ParseError::InvalidBlockGraph(format!(
                "block `{id}` is reachable more than once"
            )));
        }
        let obj = self.blocks[id].as_object().ok_or_else(|| {
            ParseError::InvalidBlockGraph(format!("block `{id}` is not an object"))
        })?;
        let opcode = obj
            .get("opcode")
            .and_then(Value::as_str)
            .ok_or_else(|| ParseError::InvalidBlockGraph(format!("block `{id}` has no opcode")))?;

        let mut children = Vec::new();

        if let Some(fields) = obj.get("fields").and_then(Value::as_object) {
            let mut keys: Vec<&String> = fields.keys().collect();
            keys.sort();
            for key in keys {
                let value = &fields[key];
                let text = value.get(0).map(scalar_text).unwrap_or_default();
                let mut leaf = Node::leaf(field_label(&text)).with_slot(Slot::Field(key.clone()));
                leaf.payload = Some(value.clone());
                children.push(leaf);
            }
        }

        let empty = Map::new();
        let inputs = obj
            .get("inputs")
            .and_then(Value::as_object)
            .unwrap_or(&empty);
        let mut containers = Vec::new();
        for key in input_order(obj, inputs) {
            let entry = &inputs[key];
            let reference = entry.get(1).unwrap_or(&Value::Null);
            if let Some(label) = container_label_for_input(key) {
                let first = reference
                    .as_str()
                    .and_then(|r| self.blocks.get_key_value(r));
                let body = match first {
                    Some((first, _)) => self.chain(first)?,
                    None => Vec::new(),
                };
                containers.push(Node::new(label, body).with_slot(Slot::Input(key.clone())));
                continue;
            }
            match reference {
                Value::String(child) => {
                    if let Some((child_key, Value::Object(_))) =
                        self.blocks.get_key_value(child.as_str())
                    {
                        children.push(self.block(child_key, Slot::Input(key.clone()))?);
                    }
                }
                Value::Array(prim) => {
                    if let Some(mut leaf) = primitive_leaf(prim) {
                        leaf.slot = Slot::Input(key.clone());
                        children.push(leaf);
                    }
                }
                _ => {}
            }
        }
        for key in c_block_containers(opcode) {
            if !inputs.contains_key(*key) {
                let label = container_label_for_input(key).expect("c-block inputs are containers");
                containers.push(Node::leaf(label).with_slot(Slot::Input((*key).to_string())));
            }
        }
        containers.sort_by(|a, b| slot_key(&a.slot).cmp(slot_key(&b.slot)));
        children.extend(containers);

        let mut node = Node::new(opcode, children).with_slot(slot);
        node.raw_ref = Some(id.to_string());
        node.payload = Some(Value::Object(obj.clone()));
        Ok(node)
    }
}

fn slot_key(slot: &Slot) -> &str {
    match slot {
        Slot::Input(k) | Slot::Field(k) => k,
        Slot::Body => "",
    }
}

/// Inputs sorted by name; custom-block prototypes follow their declared
/// argument order instead.
fn input_order<'m>(block: &Map<String, Value>, inputs: &'m Map<String, Value>) -> Vec<&'m String> {
    let mut keys: Vec<&String> = inputs.keys().collect();
    keys.sort();
    let declared: Vec<String> = block
        .get("mutation")
        .and_then(|m| m.get("argumentids"))
        .and_then(Value::as_str)
        .and_then(|s| serde_json::from_str(s).ok())
        .unwrap_or_default();
    if !declared.is_empty() {
        keys.sort_by_key(|k| declared.iter().position(|d| d == *k).unwrap_or(usize::MAX));
    }
    keys
}

fn scalar_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn primitive_leaf(prim: &[Value]) -> Option<Node> {
    let code = prim.first()?.as_u64()?;
    let label = match code {
        4..=8 => LIT_NUMBER.to_string(),
        9 | 10 => LIT_STRING.to_string(),
        11..=13 => field_label(&prim.get(1).map(scalar_text).unwrap_or_default()),
        _ => return None,
    };
    let mut leaf = Node::leaf(label);
    leaf.payload = Some(Value::Array(prim.to_vec()));
    Some(leaf)
}

/// Variables and lists dropped loose on the workspace are stored as bare
/// arrays `[12|13, name, id, x, y]`; they become reporter blocks.
fn top_level_primitive(id: &str, arr: &[Value]) -> Option<Node> {
    let (opcode, field) = match arr.first()?.as_u64()? {
        12 => ("data_variable", "VARIABLE"),
        13 => ("data_listcontents", "LIST"),
        _ => return None,
    };
    let name = arr.get(1).map(scalar_text).unwrap_or_default();
    let var_id = arr.get(2).cloned().unwrap_or(Value::Null);
    let mut leaf = Node::leaf(field_label(&name)).with_slot(Slot::Field(field.into()));
    leaf.payload = Some(json!([name, var_id]));
    let mut node = Node::new(opcode, vec![leaf]);
    node.raw_ref = Some(id.to_string());
    node.payload = Some(json!({
        "opcode": opcode,
        "x": arr.get(3).cloned().unwrap_or(json!(0)),
        "y": arr.get(4).cloned().unwrap_or(json!(0)),
    }));
    Some(node)
}

/// Writes `program` into a copy of the template document.
pub fn serialize_project(
    program: &Program,
    template: &ProjectFile,
) -> Result<Vec<u8>, SerializeError> {
    let doc = template.read_document()?;
    serialize_with_template(program, &doc)
}

pub fn serialize_with_template(
    program: &Program,
    template: &Value,
) -> Result<Vec<u8>, SerializeError> {
    let doc = serialize_document(program, template)?;
    Ok(serde_json::to_vec(&doc).expect("JSON values always serialize"))
}

pub fn serialize_document(program: &Program, template: &Value) -> Result<Value, SerializeError> {
    let mut doc = match template {
        Value::Object(obj) => obj.clone(),
        _ => Map::new(),
    };
    let template_targets: Vec<&Value> = template
        .get("targets")
        .and_then(Value::as_array)
        .map(|t| t.iter().collect())
        .unwrap_or_default();

    let mut emitter = Emitter::new(program);
    let mut targets = Vec::with_capacity(program.actors.len());
    for (layer, actor) in program.actors.iter().enumerate() {
        let mut target = match &actor.payload {
            Some(Value::Object(obj)) => obj.clone(),
            _ => template_targets
                .iter()
                .find(|t| t.get("name").and_then(Value::as_str) == Some(actor.name.as_str()))
                .and_then(|t| t.as_object().cloned())
                .unwrap_or_else(|| blank_target(actor, layer)),
        };
        let blocks = emitter.actor_blocks(actor)?;
        target.insert("blocks".into(), Value::Object(blocks));
        targets.push(Value::Object(target));
    }
    doc.insert("targets".into(), Value::Array(targets));
    Ok(Value::Object(doc))
}

fn blank_target(actor: &Actor, layer: usize) -> Map<String, Value> {
    let value = if actor.is_stage {
        json!({
            "isStage": true, "name": "Stage", "variables": {}, "lists": {}, "broadcasts": {},
            "comments": {}, "currentCostume": 0, "costumes": [], "sounds": [], "volume": 100,
            "layerOrder": 0, "tempo": 60, "videoTransparency": 50, "videoState": "on",
            "textToSpeechLanguage": null
        })
    } else {
        json!({
            "isStage": false, "name": actor.name, "variables": {}, "lists": {}, "broadcasts": {},
            "comments": {}, "currentCostume": 0, "costumes": [], "sounds": [], "volume": 100,
            "layerOrder": layer, "visible": true, "x": 0, "y": 0, "size": 100, "direction": 90,
            "draggable": false, "rotationStyle": "all around"
        })
    };
    match value {
        Value::Object(obj) => obj,
        _ => unreachable!(),
    }
}

struct Emitter {
    reserved: HashSet<String>,
    emitted: HashSet<String>,
    counter: usize,
}

impl Emitter {
    fn new(program: &Program) -> Self {
        let reserved = program
            .actors
            .iter()
            .flat_map(|a| a.scripts.iter())
            .flat_map(|s| s.root.preorder())
            .filter_map(|n| n.raw_ref.clone())
            .collect();
        Emitter {
            reserved,
            emitted: HashSet::new(),
            counter: 0,
        }
    }

    fn id_for(&mut self, node: &Node) -> String {
        if let Some(raw) = &node.raw_ref {
            if self.emitted.insert(raw.clone()) {
                return raw.clone();
            }
        }
        loop {
            self.counter += 1;
            let id = format!("catnip-{}", self.counter);
            if !self.reserved.contains(&id) && self.emitted.insert(id.clone()) {
                return id;
            }
        }
    }

    fn actor_blocks(&mut self, actor: &Actor) -> Result<Map<String, Value>, SerializeError> {
        let mut blocks = Map::new();
        for script in &actor.scripts {
            let origin = (0.0, 200.0 * script.script_index as f64);
            self.chain(&mut blocks, &script.root.children, None, Some(origin))?;
        }
        Ok(blocks)
    }

    fn chain(
        &mut self,
        blocks: &mut Map<String, Value>,
        nodes: &[Node],
        parent: Option<&str>,
        top_level: Option<(f64, f64)>,
    ) -> Result<Option<String>, SerializeError> {
        let ids: Vec<String> = nodes.iter().map(|n| self.id_for(n)).collect();
        for (i, node) in nodes.iter().enumerate() {
            let prev = if i == 0 {
                parent
            } else {
                Some(ids[i - 1].as_str())
            };
            let next = ids.get(i + 1).map(String::as_str);
            let top = if i == 0 { top_level } else { None };
            self.block(blocks, node, &ids[i], prev, next, top)?;
        }
        Ok(ids.into_iter().next())
    }

    fn block(
        &mut self,
        blocks: &mut Map<String, Value>,
        node: &Node,
        id: &str,
        parent: Option<&str>,
        next: Option<&str>,
        top_level: Option<(f64, f64)>,
    ) -> Result<(), SerializeError> {
        if !is_opcode(&node.label) {
            return Err(SerializeError::UnserializableNode {
                label: node.label.clone(),
            });
        }
        // Reserve the slot so parents precede their children in the output.
        blocks.insert(id.to_string(), Value::Null);

        let mut obj = match &node.payload {
            Some(Value::Object(obj)) => obj.clone(),
            _ => Map::new(),
        };
        if node.raw_ref.is_none() {
            obj.remove("comment");
        }
        let empty = Map::new();
        let original_inputs = match obj.get("inputs") {
            Some(Value::Object(inputs)) => inputs.clone(),
            _ => empty.clone(),
        };

        let mut inputs = Map::new();
        let mut fields = Map::new();
        for child in &node.children {
            match &child.slot {
                Slot::Field(name) => {
                    let Some(text) = child.label.strip_prefix(crate::ast::FIELD_PREFIX) else {
                        return Err(SerializeError::UnserializableNode {
                            label: child.label.clone(),
                        });
                    };
                    let value = match &child.payload {
                        Some(v @ Value::Array(_)) => v.clone(),
                        _ => json!([text, null]),
                    };
                    fields.insert(name.clone(), value);
                }
                Slot::Input(name) => {
                    let original = original_inputs.get(name);
                    if let Some(entry) = self.input_entry(blocks, child, id, original)? {
                        inputs.insert(name.clone(), entry);
                    }
                }
                Slot::Body => {
                    return Err(SerializeError::UnserializableNode {
                        label: child.label.clone(),
                    })
                }
            }
        }
        for (name, entry) in &original_inputs {
            if inputs.contains_key(name) {
                continue;
            }
            let reference = entry.get(1).unwrap_or(&Value::Null);
            if reference.is_null() {
                inputs.insert(name.clone(), entry.clone());
            } else if let Some(shadow) = entry.get(2).filter(|s| !s.is_null()) {
                inputs.insert(name.clone(), json!([1, shadow]));
            }
        }

        obj.insert("opcode".into(), Value::String(node.label.clone()));
        obj.insert("next".into(), next.map_or(Value::Null, |n| json!(n)));
        obj.insert("parent".into(), parent.map_or(Value::Null, |p| json!(p)));
        obj.insert("inputs".into(), Value::Object(inputs));
        obj.insert("fields".into(), Value::Object(fields));
        obj.insert("shadow".into(), json!(node.is_shadow()));
        obj.insert("topLevel".into(), json!(top_level.is_some()));
        match top_level {
            Some((x, y)) => {
                obj.entry("x").or_insert(json!(x));
                obj.entry("y").or_insert(json!(y));
            }
            None => {
                obj.remove("x");
                obj.remove("y");
            }
        }
        blocks.insert(id.to_string(), Value::Object(obj));
        Ok(())
    }

    fn input_entry(
        &mut self,
        blocks: &mut Map<String, Value>,
        child: &Node,
        parent_id: &str,
        original: Option<&Value>,
    ) -> Result<Option<Value>, SerializeError> {
        if child.is_container() {
            let first = self.chain(blocks, &child.children, Some(parent_id), None)?;
            return Ok(match (first, original) {
                (Some(first), _) => Some(json!([2, first])),
                (None, Some(orig)) if orig.get(1).is_none_or(Value::is_null) => Some(orig.clone()),
                (None, _) => None,
            });
        }
        if child.is_block() {
            let child_id = self.id_for(child);
            self.block(blocks, child, &child_id, Some(parent_id), None, None)?;
            if child.is_shadow() {
                return Ok(Some(json!([1, child_id])));
            }
            let obscured = original.and_then(|orig| match orig.get(2) {
                Some(shadow) if !shadow.is_null() => Some(shadow.clone()),
                _ => orig.get(1).filter(|r| r.is_array()).cloned(),
            });
            return Ok(Some(match obscured {
                Some(shadow) => json!([3, child_id, shadow]),
                None => json!([2, child_id]),
            }));
        }
        if child.label == LIT_NUMBER || child.label == LIT_STRING {
            let prim = match &child.payload {
                Some(v @ Value::Array(_)) => v.clone(),
                _ if child.label == LIT_NUMBER => json!([4, "0"]),
                _ => json!([10, ""]),
            };
            return Ok(Some(json!([1, prim])));
        }
        if child.label.starts_with(crate::ast::FIELD_PREFIX) {
            let Some(prim @ Value::Array(_)) = &child.payload else {
                return Err(SerializeError::UnserializableNode {
                    label: child.label.clone(),
                });
            };
            if let Some(orig) = original.filter(|o| o.get(1) == Some(prim)) {
                return Ok(Some(orig.clone()));
            }
            return Ok(Some(if prim.get(0).and_then(Value::as_u64) == Some(11) {
                json!([1, prim])
            } else {
                json!([3, prim, [10, ""]])
            }));
        }
        Err(SerializeError::UnserializableNode {
            label: child.label.clone(),
        })
    }
}

/// Reads a project from raw bytes, detecting zip archives by magic number.
pub fn parse_bytes(bytes: &[u8], source_id: &str) -> Result<Program, ParseError> {
    let json = if bytes.starts_with(ZIP_MAGIC) {
        read_project_json(std::io::Cursor::new(bytes))?
    } else {
        bytes.to_vec()
    };
    let doc: Value =
        serde_json::from_slice(&json).map_err(|e| ParseError::MalformedJson(e.to_string()))?;
    parse_document(&doc, source_id)
}
