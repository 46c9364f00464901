//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis;
use crate::ast::Node;
use crate::hinter::{self, Hint, HintSet};
use crate::matcher::MatchPlan;
use crate::pipeline;
use crate::pool::{self, Ranked, Threshold};
use crate::pqgram::{self, Distance, PqParams};
use crate::sb3::{self, ParseError, ProjectFile};
use crate::Error;

#[derive(Debug, Parser)]
#[command(
    name = "catnip",
    version,
    about = "Next-step hints for Scratch projects"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Ancestor count of a pq-gram
    #[arg(long = "p", global = true, default_value_t = 2)]
    pub p: usize,
    /// Sibling window of a pq-gram
    #[arg(long = "q", global = true, default_value_t = 3)]
    pub q: usize,
    /// Seed for random tie-breaking; ties go to the lowest id without one
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file (directory for `eval`); stdout when omitted
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Pretty,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Directory of peer projects
    #[arg(long)]
    pub pool: PathBuf,
    /// Test report JSON for the pool
    #[arg(long)]
    pub reports: PathBuf,
    /// Minimum pass fraction; integers above 1 are read as percentages
    #[arg(long, default_value = "0.9", value_parser = parse_threshold)]
    pub threshold: Threshold,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the pq-gram profile summary of a project or tree file
    Profile {
        project: PathBuf,
        /// Number of most frequent grams to list
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Print the pq-gram distance between two projects or tree files
    Distance { a: PathBuf, b: PathBuf },
    /// Generate hints for a project from a pool of peer solutions
    Hint {
        source: PathBuf,
        #[command(flatten)]
        pool: PoolArgs,
        /// Also print the target ranking and the match plan
        #[arg(long)]
        explain: bool,
    },
    /// Apply a hints file to a project
    Apply {
        source: PathBuf,
        hints: PathBuf,
        /// The project the hints were generated from
        target: PathBuf,
    },
    /// Leave-one-out evaluation over a whole pool
    Eval {
        #[command(flatten)]
        pool: PoolArgs,
        /// Reports from re-running the tests on the hinted programs
        #[arg(long)]
        after_reports: Option<PathBuf>,
    },
}

/// Reads a threshold as a fraction, or as a percentage when it is an
/// integer between 2 and 100.
pub fn parse_threshold(raw: &str) -> Result<Threshold, String> {
    let value: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("not a number: {raw}"))?;
    let value = if value > 1.0 && value <= 100.0 && value.fract() == 0.0 {
        value / 100.0
    } else {
        value
    };
    Threshold::new(value).map_err(|e| e.to_string())
}

/// Bare labelled tree, as used for hand-written test inputs.
#[derive(Debug, Deserialize)]
struct TreeSpec {
    label: String,
    #[serde(default)]
    children: Vec<TreeSpec>,
}

impl TreeSpec {
    fn into_node(self) -> Node {
        Node::new(
            self.label,
            self.children.into_iter().map(TreeSpec::into_node).collect(),
        )
    }
}

/// A project file, or a `{"label", "children"}` tree file.
fn load_tree(path: &Path) -> Result<(String, Node), Error> {
    let file = ProjectFile::open(path)?;
    let doc = file.read_document()?;
    if doc.get("label").is_some() && doc.get("targets").is_none() {
        let spec: TreeSpec = serde_json::from_value(doc)
            .map_err(|e| ParseError::MalformedJson(format!("{}: {e}", path.display())))?;
        let mut node = spec.into_node();
        node.renumber_from(0);
        return Ok((file.stem(), node));
    }
    let program = sb3::parse_document(&doc, &file.stem())?;
    Ok((program.source_id.clone(), program.tree()))
}

fn params(common: &Common) -> Result<PqParams, Error> {
    PqParams::new(common.p, common.q).map_err(Error::from)
}

fn emit(
    out: &mut dyn Write,
    common: &Common,
    value: &impl Serialize,
    pretty: impl FnOnce() -> String,
) -> Result<(), Error> {
    let text = match common.format {
        Format::Json => serde_json::to_string_pretty(value).expect("output types serialize") + "\n",
        Format::Pretty => pretty(),
    };
    match &common.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

#[derive(Serialize)]
struct GramCount {
    gram: Vec<String>,
    count: usize,
}

#[derive(Serialize)]
struct ProfileOutput {
    project: String,
    p: usize,
    q: usize,
    size: usize,
    distinct: usize,
    top: Vec<GramCount>,
}

#[derive(Serialize)]
struct DistanceOutput {
    a: String,
    b: String,
    p: usize,
    q: usize,
    distance: Distance,
}

#[derive(Serialize)]
struct Explanation<'a> {
    target: &'a str,
    distance: Distance,
    ranked: &'a [Ranked],
    plan: &'a MatchPlan,
}

#[derive(Serialize)]
struct HintOutput<'a> {
    #[serde(flatten)]
    hints: &'a HintSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    explain: Option<Explanation<'a>>,
}

fn describe_hint(h: &Hint) -> String {
    format!(
        "{:<10} {} in {}/{} under {} at {} (left {:?}, right {:?})",
        serde_json::to_value(h.kind)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        h.node_label,
        h.actor,
        h.script_index,
        h.parent_label,
        h.position,
        h.left_siblings,
        h.right_siblings
    )
}

fn read_hints(path: &Path) -> Result<HintSet, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::InvalidHints(e.to_string()))?;
    if value.is_array() {
        let hints: Vec<Hint> =
            serde_json::from_value(value).map_err(|e| Error::InvalidHints(e.to_string()))?;
        return Ok(HintSet {
            source_id: String::new(),
            target_id: String::new(),
            params: PqParams::default(),
            threshold: Threshold::default(),
            hints,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::InvalidHints(e.to_string()))
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), Error> {
    let common = &cli.common;
    let params = params(common)?;
    match &cli.command {
        Command::Profile { project, top } => {
            let (id, tree) = load_tree(project)?;
            let profile = pqgram::profile(&tree, params)?;
            let output = ProfileOutput {
                project: id,
                p: params.p,
                q: params.q,
                size: profile.size(),
                distinct: profile.distinct(),
                top: profile
                    .top(*top)
                    .into_iter()
                    .map(|(gram, count)| GramCount {
                        gram: gram.into_iter().map(String::from).collect(),
                        count,
                    })
                    .collect(),
            };
            emit(stdout, common, &output, || {
                let mut s = format!(
                    "{}: {} grams ({} distinct), p={} q={}\n",
                    output.project, output.size, output.distinct, output.p, output.q
                );
                for g in &output.top {
                    s += &format!("{:>6}  {}\n", g.count, g.gram.join(" "));
                }
                s
            })
        }
        Command::Distance { a, b } => {
            let (id_a, tree_a) = load_tree(a)?;
            let (id_b, tree_b) = load_tree(b)?;
            let output = DistanceOutput {
                distance: pqgram::tree_distance(&tree_a, &tree_b, params)?,
                a: id_a,
                b: id_b,
                p: params.p,
                q: params.q,
            };
            emit(stdout, common, &output, || format!("{}\n", output.distance))
        }
        Command::Hint {
            source,
            pool: args,
            explain,
        } => {
            let source = sb3::parse_path(source)?;
            let reports = pool::load_reports(&args.reports)?;
            let pool = pool::load_pool(&args.pool, &reports)?;
            let run =
                pipeline::generate_hints(&source, &pool, args.threshold, params, common.seed)?;
            let output = HintOutput {
                hints: &run.hints,
                explain: explain.then(|| Explanation {
                    target: run.selection.target.id(),
                    distance: run.selection.distance,
                    ranked: &run.selection.ranked,
                    plan: &run.plan,
                }),
            };
            emit(stdout, common, &output, || {
                let mut s = format!(
                    "{} -> {} (distance {}), {} hints\n",
                    run.hints.source_id,
                    run.hints.target_id,
                    run.selection.distance,
                    run.hints.hints.len()
                );
                for h in &run.hints.hints {
                    s += &describe_hint(h);
                    s.push('\n');
                }
                s
            })
        }
        Command::Apply {
            source,
            hints,
            target,
        } => {
            let source_file = ProjectFile::open(source)?;
            let source_program = sb3::parse_project(&source_file)?;
            let target_program = sb3::parse_path(target)?;
            let hints = read_hints(hints)?;
            let applied = hinter::apply_hints(&source_program, &hints, &target_program)?;
            let bytes = sb3::serialize_project(&applied, &source_file)?;
            match &common.out {
                Some(path) => std::fs::write(path, bytes).map_err(|e| Error::io(path, e)),
                None => stdout
                    .write_all(&bytes)
                    .map_err(|e| Error::io("<stdout>", e)),
            }
        }
        Command::Eval {
            pool: args,
            after_reports,
        } => {
            let out_dir = common
                .out
                .as_deref()
                .ok_or_else(|| Error::Usage("eval needs --out <dir>".into()))?;
            let reports = pool::load_reports(&args.reports)?;
            let after = after_reports.as_ref().map(pool::load_reports).transpose()?;
            let summary = analysis::evaluate_corpus(
                &args.pool,
                &reports,
                args.threshold,
                params,
                out_dir,
                after.as_deref(),
            )?;
            let text = match common.format {
                Format::Json => {
                    serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"
                }
                Format::Pretty => {
                    let mut s = String::new();
                    for r in &summary.per_project {
                        s += &format!(
                            "{:<24} {:<12} target={:<24} hints={}\n",
                            r.project_id,
                            serde_json::to_value(r.status)
                                .ok()
                                .and_then(|v| v.as_str().map(String::from))
                                .unwrap_or_default(),
                            r.target_id.as_deref().unwrap_or("-"),
                            r.hint_count
                        );
                    }
                    s
                }
            };
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Worker count from `CATNIP_THREADS`; 0 or unset lets rayon decide.
pub fn thread_count() -> usize {
    std::env::var("CATNIP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}
