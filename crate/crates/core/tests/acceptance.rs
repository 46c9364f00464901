//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use catnip::analysis::compute_metrics;
use catnip::ast::{Node, Program};
use catnip::differ;
use catnip::hinter::{self, HintKind, HintSet};
use catnip::matcher;
use catnip::pool::{self, Outcome, PoolEntry, TestReport, Threshold};
use catnip::pqgram::{self, PqParams};
use catnip::sb3::{self, ProjectFile};
use catnip::stats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    all_project_fixtures, brute_force_grams, closed_form_size, fingerprint_bag, fixture,
    profile_as_map, random_tree,
};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_trees() -> Vec<Node> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..500)
        .map(|_| {
            let n = rng.gen_range(1..=200);
            random_tree(&mut rng, n, 10)
        })
        .collect()
}

fn ac1_oracle_equivalence(trees: &[Node]) -> Check {
    let params = PqParams::default();
    let start = Instant::now();
    let mismatches = trees
        .iter()
        .filter(|t| {
            profile_as_map(&pqgram::profile(t, params).unwrap())
                != brute_force_grams(t, params.p, params.q)
        })
        .count();
    let elapsed = start.elapsed();
    ensure(mismatches == 0, format!("{mismatches} mismatching trees"))?;
    ensure(
        elapsed < Duration::from_secs(10),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "500 trees, 0 mismatches, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn ac2_worked_distance() -> Check {
    let params = PqParams::default();
    let load = |rel: &str| -> Node {
        let v: serde_json::Value = serde_json::from_str(&common::read(&fixture(rel))).unwrap();
        fn build(v: &serde_json::Value) -> Node {
            let kids = v
                .get("children")
                .and_then(|c| c.as_array())
                .map(|c| c.iter().map(build).collect())
                .unwrap_or_default();
            Node::new(v["label"].as_str().unwrap(), kids)
        }
        build(&v)
    };
    let (abc, acb) = (load("trees/abc.json"), load("trees/acb.json"));
    let d = pqgram::tree_distance(&abc, &acb, params).unwrap().value();
    ensure(
        (d - 2.0 / 3.0).abs() <= 1e-12,
        format!("a(b,c)/a(c,b) = {d}"),
    )?;
    let same = pqgram::tree_distance(&abc, &abc.clone(), params)
        .unwrap()
        .value();
    ensure(same == 0.0, format!("identical = {same}"))?;
    let disjoint =
        pqgram::tree_distance(&load("trees/left.json"), &load("trees/right.json"), params)
            .unwrap()
            .value();
    ensure(disjoint == 1.0, format!("disjoint = {disjoint}"))?;
    Ok(format!("{d:.12} / {same} / {disjoint}"))
}

fn ac3_closed_form(trees: &[Node]) -> Check {
    let params = PqParams::default();
    let bad = trees
        .iter()
        .filter(|t| pqgram::profile(t, params).unwrap().size() != closed_form_size(t, params.q))
        .count();
    ensure(bad == 0, format!("{bad} trees off the closed form"))?;
    Ok("500 trees".into())
}

fn graded_entry(k: usize) -> PoolEntry {
    let id = format!("p{k:02}");
    let outcomes = (0..10)
        .map(|i| {
            (
                format!("t{i}"),
                if i < k { Outcome::Pass } else { Outcome::Fail },
            )
        })
        .collect();
    PoolEntry::new(
        Program::new(&id, vec![]),
        TestReport::new(&id, outcomes).unwrap(),
    )
}

fn ac4_filter_monotonicity() -> Check {
    let corpus: Vec<PoolEntry> = (0..=10).map(graded_entry).collect();
    let kept = |t: f64| {
        pool::filter_candidates(&corpus, Threshold::new(t).unwrap())
            .map(|v| v.len())
            .unwrap_or(0)
    };
    let (at90, at70, at0) = (kept(0.9), kept(0.7), kept(0.0));
    ensure(at90 == 2, format!("0.9 keeps {at90}"))?;
    ensure(at70 == 4, format!("0.7 keeps {at70}"))?;
    ensure(at0 == corpus.len(), format!("0 keeps {at0}"))?;
    let counts: Vec<usize> = (0..=100).map(|t| kept(t as f64 / 100.0)).collect();
    ensure(
        counts.windows(2).all(|w| w[1] <= w[0]),
        "count rose with the threshold",
    )?;
    Ok(format!(
        "{} projects: 0.9 -> {at90}, 0.7 -> {at70}, 0 -> {at0}",
        corpus.len()
    ))
}

fn catnip(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_catnip"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("CATNIP_THREADS", t);
    }
    cmd.output().unwrap()
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn ac5_end_to_end() -> Check {
    let expected = [
        ("student1", "control_stop"),
        ("student2", "motion_changexby"),
        ("student3", "looks_show"),
        ("student4", "data_setvariableto"),
        ("student5", "data_changevariableby"),
    ];
    let dir = tempfile::tempdir().unwrap();
    let complete = sb3::parse_path(fixture("fruit/complete.json")).unwrap();
    let (pool, reports, target) = (
        path_str(&fixture("fruit")),
        path_str(&fixture("fruit/reports.json")),
        path_str(&fixture("fruit/complete.json")),
    );
    let start = Instant::now();
    for (id, opcode) in expected {
        let source = path_str(&fixture(&format!("fruit/{id}.json")));
        let out = catnip(
            &["hint", &source, "--pool", &pool, "--reports", &reports],
            None,
        );
        ensure(
            out.status.success(),
            format!("{id}: hint exited {:?}", out.status.code()),
        )?;
        let set: HintSet = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        ensure(
            set.hints.len() == 1,
            format!("{id}: {} hints", set.hints.len()),
        )?;
        let hint = &set.hints[0];
        ensure(
            hint.kind == HintKind::Add && hint.node_label == opcode,
            format!("{id}: {:?} {}", hint.kind, hint.node_label),
        )?;

        let hints_path = dir.path().join(format!("{id}.hints.json"));
        std::fs::write(&hints_path, &out.stdout).unwrap();
        let applied = catnip(&["apply", &source, &path_str(&hints_path), &target], None);
        ensure(
            applied.status.success(),
            format!("{id}: apply exited {:?}", applied.status.code()),
        )?;
        let reparsed = sb3::parse_bytes(&applied.stdout, id).map_err(|e| e.to_string())?;
        ensure(
            fingerprint_bag(&reparsed) == fingerprint_bag(&complete),
            format!("{id}: fingerprint bags differ"),
        )?;
    }
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(5),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!("5 students, {:.2}s", elapsed.as_secs_f64()))
}

fn hints_between(source: &Program, target: &Program) -> HintSet {
    let params = PqParams::default();
    let plan = matcher::build_plan(source, target, params, None).unwrap();
    let diff = differ::diff_programs(source, target, &plan);
    hinter::synthesize(source, target, &diff, params)
}

fn ac6_unmatched_script() -> Check {
    let source = sb3::parse_path(fixture("extra_script/source.json")).unwrap();
    let target = sb3::parse_path(fixture("extra_script/target.json")).unwrap();
    let set = hints_between(&source, &target);
    ensure(set.hints.len() == 1, format!("{} hints", set.hints.len()))?;
    let h = &set.hints[0];
    ensure(
        h.kind == HintKind::NewScript && h.node_label == "event_whenkeypressed",
        format!("{:?} {}", h.kind, h.node_label),
    )?;
    let applied = hinter::apply_hints(&source, &set, &target).map_err(|e| e.to_string())?;
    let (before, after) = (
        compute_metrics(&source).empty_scripts,
        compute_metrics(&applied).empty_scripts,
    );
    ensure(
        after == before + 1,
        format!("empty scripts {before} -> {after}"),
    )?;
    Ok(format!(
        "one new-script hint, empty scripts {before} -> {after}"
    ))
}

fn ac7_dead_code() -> Check {
    let source = sb3::parse_path(fixture("dead_code/source.json")).unwrap();
    let target = sb3::parse_path(fixture("dead_code/target.json")).unwrap();
    let set = hints_between(&source, &target);
    let loose = source
        .actors
        .iter()
        .flat_map(|a| a.scripts.iter().map(move |s| (a, s)))
        .find(|(_, s)| !s.has_hat)
        .ok_or("fixture has no loose script")?;
    for node in loose.1.root.preorder().filter(|n| n.is_hint_eligible()) {
        let covered = set.hints.iter().any(|h| {
            h.kind == HintKind::Delete
                && h.node_ref.as_ref().is_some_and(|r| {
                    r.actor == loose.0.name
                        && r.script_index == loose.1.script_index
                        && r.node_id == node.node_id
                })
        });
        ensure(covered, format!("{} has no delete hint", node.label))?;
    }
    let applied = hinter::apply_hints(&source, &set, &target).map_err(|e| e.to_string())?;
    let dead = compute_metrics(&applied).dead_code_scripts;
    ensure(dead == 0, format!("{dead} loose scripts remain"))?;
    Ok(format!(
        "{} delete hints, dead code 1 -> 0",
        set.count(HintKind::Delete)
    ))
}

fn pair_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let mut score = 0.0;
    for x in a {
        for y in b {
            score += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    score
}

fn ac8_statistics() -> Check {
    let (lo, hi) = ([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]);
    let u = stats::mann_whitney_u(&lo, &hi).unwrap().u;
    ensure(
        u == 0.0 && u == pair_enumeration(&lo, &hi),
        format!("U = {u}"),
    )?;
    for (a, b, want) in [(&lo, &hi, 0.0), (&hi, &lo, 1.0), (&lo, &lo, 0.5)] {
        let got = stats::vargha_delaney_a12(a, b).unwrap();
        let brute = pair_enumeration(a, b) / (a.len() * b.len()) as f64;
        ensure(
            got == want && got == brute,
            format!("A12({a:?}, {b:?}) = {got}"),
        )?;
    }
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let r = stats::pearson_r(&x, &y).unwrap().r;
    ensure((r - 1.0).abs() <= 1e-12, format!("r = {r}"))?;
    Ok(format!("U = {u}, A12 = 0/1/0.5, r = {r}"))
}

fn ac9_determinism() -> Check {
    let (pool, reports) = (
        path_str(&fixture("fruit")),
        path_str(&fixture("fruit/reports.json")),
    );
    let source = path_str(&fixture("fruit/student1.json"));
    let dir = tempfile::tempdir().unwrap();
    let mut hint_outputs = Vec::new();
    let mut eval_outputs = Vec::new();
    for threads in ["1", "4"] {
        for run in 0..3 {
            let hint = catnip(
                &[
                    "hint",
                    &source,
                    "--pool",
                    &pool,
                    "--reports",
                    &reports,
                    "--threshold",
                    "0",
                    "--explain",
                ],
                Some(threads),
            );
            ensure(hint.status.success(), "hint failed")?;
            hint_outputs.push(hint.stdout);
            let out_dir = path_str(&dir.path().join(format!("eval-{threads}-{run}")));
            let eval = catnip(
                &[
                    "eval",
                    "--pool",
                    &pool,
                    "--reports",
                    &reports,
                    "--threshold",
                    "0",
                    "--out",
                    &out_dir,
                ],
                Some(threads),
            );
            ensure(eval.status.success(), "eval failed")?;
            let mut files = Vec::new();
            for sub in ["out", "hints"] {
                let mut names: Vec<_> = std::fs::read_dir(Path::new(&out_dir).join(sub))
                    .unwrap()
                    .map(|e| e.unwrap().path())
                    .collect();
                names.sort();
                for p in names {
                    files.push(std::fs::read(p).unwrap());
                }
            }
            eval_outputs.push((
                eval.stdout,
                std::fs::read(Path::new(&out_dir).join("summary.json")).unwrap(),
                files,
            ));
        }
    }
    ensure(
        hint_outputs.windows(2).all(|w| w[0] == w[1]),
        "hint output differs between runs",
    )?;
    ensure(
        eval_outputs.windows(2).all(|w| w[0] == w[1]),
        "eval output differs between runs",
    )?;
    Ok("6 runs each of hint and eval identical".into())
}

fn ac10_round_trip() -> Check {
    let files = all_project_fixtures();
    for path in &files {
        let file = ProjectFile::open(path).map_err(|e| e.to_string())?;
        let program = sb3::parse_project(&file).map_err(|e| e.to_string())?;
        let bytes = sb3::serialize_project(&program, &file).map_err(|e| e.to_string())?;
        let again = sb3::parse_bytes(&bytes, &program.source_id).map_err(|e| e.to_string())?;
        ensure(
            program.same_structure(&again),
            format!("{} changed", path.display()),
        )?;
    }
    Ok(format!("{} fixtures", files.len()))
}

fn main() -> ExitCode {
    let trees = random_trees();
    let criteria: Vec<Criterion> = vec![
        (
            "AC1 pq-gram oracle equivalence",
            Box::new(|| ac1_oracle_equivalence(&trees)),
        ),
        ("AC2 worked distance example", Box::new(ac2_worked_distance)),
        (
            "AC3 profile-size closed form",
            Box::new(|| ac3_closed_form(&trees)),
        ),
        ("AC4 filter monotonicity", Box::new(ac4_filter_monotonicity)),
        ("AC5 end-to-end hint correctness", Box::new(ac5_end_to_end)),
        (
            "AC6 unmatched-script behavior",
            Box::new(ac6_unmatched_script),
        ),
        ("AC7 dead-code deletion", Box::new(ac7_dead_code)),
        ("AC8 statistics oracles", Box::new(ac8_statistics)),
        ("AC9 determinism", Box::new(ac9_determinism)),
        ("AC10 round-trip serialization", Box::new(ac10_round_trip)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let result =
            panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
