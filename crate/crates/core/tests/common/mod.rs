#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use catnip::ast::{Node, Program};
use catnip::differ::fingerprint;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn all_project_fixtures() -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![fixture("")];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path).unwrap();
                if text.contains("\"targets\"") {
                    out.push(path);
                }
            }
        }
    }
    out.sort();
    out
}

/// Random tree with `size` nodes over labels `l0..l{alphabet-1}`; each new
/// node attaches to a uniformly chosen existing node.
pub fn random_tree(rng: &mut impl Rng, size: usize, alphabet: usize) -> Node {
    let labels: Vec<String> = (0..size)
        .map(|_| format!("l{}", rng.gen_range(0..alphabet)))
        .collect();
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); size];
    for i in 1..size {
        kids[rng.gen_range(0..i)].push(i);
    }
    fn build(i: usize, labels: &[String], kids: &[Vec<usize>]) -> Node {
        Node::new(
            labels[i].clone(),
            kids[i].iter().map(|&k| build(k, labels, kids)).collect(),
        )
    }
    build(0, &labels, &kids)
}

/// Explicit extended tree: `p - 1` dummy ancestors above the root, `q - 1`
/// dummies on both sides of every child list, `q` dummy children under
/// every leaf. Grams are read off it by brute force.
struct Ext {
    label: String,
    dummy: bool,
    parent: Option<usize>,
    children: Vec<usize>,
}

fn push(nodes: &mut Vec<Ext>, label: &str, dummy: bool, parent: Option<usize>) -> usize {
    nodes.push(Ext {
        label: label.to_string(),
        dummy,
        parent,
        children: Vec::new(),
    });
    let id = nodes.len() - 1;
    if let Some(par) = parent {
        nodes[par].children.push(id);
    }
    id
}

pub fn brute_force_grams(tree: &Node, p: usize, q: usize) -> BTreeMap<Vec<String>, usize> {
    let mut nodes: Vec<Ext> = Vec::new();
    let mut top = None;
    for _ in 1..p {
        top = Some(push(&mut nodes, "*", true, top));
    }
    fn extend(n: &Node, parent: Option<usize>, q: usize, nodes: &mut Vec<Ext>) {
        let me = push(nodes, &n.label, false, parent);
        if n.children.is_empty() {
            for _ in 0..q {
                push(nodes, "*", true, Some(me));
            }
            return;
        }
        for _ in 1..q {
            push(nodes, "*", true, Some(me));
        }
        for c in &n.children {
            extend(c, Some(me), q, nodes);
        }
        for _ in 1..q {
            push(nodes, "*", true, Some(me));
        }
    }
    extend(tree, top, q, &mut nodes);

    let mut grams = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if n.dummy {
            continue;
        }
        let mut stem = vec![n.label.clone()];
        let mut cursor = n.parent;
        while stem.len() < p {
            let a = cursor.expect("p - 1 dummy ancestors exist");
            stem.insert(0, nodes[a].label.clone());
            cursor = nodes[a].parent;
        }
        let kids = &nodes[i].children;
        for w in kids.windows(q) {
            let mut gram = stem.clone();
            gram.extend(w.iter().map(|&k| nodes[k].label.clone()));
            *grams.entry(gram).or_insert(0) += 1;
        }
    }
    grams
}

pub fn profile_as_map(profile: &catnip::pqgram::PqGramProfile) -> BTreeMap<Vec<String>, usize> {
    profile
        .iter()
        .map(|(k, c)| (k.labels().into_iter().map(String::from).collect(), c))
        .collect()
}

/// Closed-form profile size counted by hand over the tree.
pub fn closed_form_size(tree: &Node, q: usize) -> usize {
    let own = if tree.children.is_empty() {
        1
    } else {
        tree.children.len() + q - 1
    };
    own + tree
        .children
        .iter()
        .map(|c| closed_form_size(c, q))
        .sum::<usize>()
}

/// Multiset of hint-eligible fingerprints over a whole program, keyed by
/// actor name.
pub fn fingerprint_bag(program: &Program) -> BTreeMap<(String, String, Vec<String>), usize> {
    let mut bag = BTreeMap::new();
    for actor in &program.actors {
        for script in &actor.scripts {
            for n in script.root.preorder().filter(|n| n.is_hint_eligible()) {
                let f = fingerprint(n);
                let key = (
                    actor.name.clone(),
                    f.label.to_string(),
                    f.children.iter().map(|s| s.to_string()).collect(),
                );
                *bag.entry(key).or_insert(0) += 1;
            }
        }
    }
    bag
}

pub fn read(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap()
}
