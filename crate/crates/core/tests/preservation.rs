//! Properties of instrumentation over the random project corpus, and checks
//! that the corpus and the visit oracle are not vacuous.

mod common;

use plccov::depmodel::{build_model, NodeKind};
use plccov::frontend::{pretty_print, SourceFile};
use plccov::instrument::{instrument, InstrumentedProject};
use plccov::runtime::Runtime;

#[test]
fn corpus_exercises_every_construct() {
    let sources: Vec<String> = (0..200).map(|s| common::generate(s).source).collect();
    for word in [
        "CASE", "FOR", "BY 2", "WHILE", "REPEAT", "EXIT;", "RETURN;", "ELSIF", "FUNCTION U", "STEP S1",
        "QUALIFIER N", "QUALIFIER P1", "QUALIFIER P0", "PROGRAM Aux", " MOD ", " / ", "..",
    ] {
        let n = sources.iter().filter(|s| s.contains(word)).count();
        assert!(n >= 5, "only {n} projects contain {word}");
    }
}

#[test]
fn generator_is_deterministic() {
    assert_eq!(common::generate(17).source, common::generate(17).source);
    assert_ne!(common::generate(17).source, common::generate(18).source);
}

#[test]
fn printing_is_stable() {
    for seed in 0..100 {
        let g = common::generate(seed);
        let printed = pretty_print(&g.project());
        let files: Vec<SourceFile> = printed.iter().map(|(p, t)| SourceFile::new(p, t.as_str())).collect();
        let again = plccov::frontend::parse_project(&files, g.tasks.clone()).expect("printed source parses");
        assert_eq!(pretty_print(&again), printed, "seed {seed}");
    }
}

#[test]
fn points_match_leaves_and_erase_restores() {
    for seed in 0..200 {
        let project = common::generate(seed).project();
        let model = build_model(&project);
        let (inst, db) = instrument(&project, &model).unwrap();
        let leaves = model
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::BasicBlock | NodeKind::Step))
            .count();
        assert_eq!(db.len(), leaves, "seed {seed}");
        assert!(db.ids().eq(0..db.len() as u32), "seed {seed}");
        assert_eq!(inst.erase(), project, "seed {seed}");

        // The printed instrumented sources parse back to the same project.
        let files: Vec<SourceFile> = inst.sources().iter().map(|(p, t)| SourceFile::new(p, t.as_str())).collect();
        let reparsed = InstrumentedProject::parse(&files, project.tasks.clone()).unwrap();
        assert_eq!(reparsed.fingerprint(), inst.fingerprint(), "seed {seed}");
    }
}

/// Retargeting one trace call must be caught by the visit oracle.
#[test]
fn oracle_detects_a_misplaced_trace_call() {
    let mut detected = 0;
    for seed in 0..40 {
        let g = common::generate(seed);
        let project = g.project();
        let model = build_model(&project);
        let (inst, db) = instrument(&project, &model).unwrap();
        let a = Runtime::new(project.clone()).unwrap();
        let b = Runtime::new(inst.base.clone()).unwrap();
        let run = common::lock_step(&a, &b, &g, 200, seed);
        let Some(victim) = run.instrumented.tpa.iter().position(|v| *v) else {
            continue;
        };
        let Some(other) = db.points.iter().find(|p| p.kind == db.points[victim].kind && p.id as usize != victim) else {
            continue;
        };

        let call = format!("{}(i:={victim});", db.names.record);
        let files: Vec<SourceFile> = inst
            .sources()
            .into_iter()
            .map(|(p, t)| SourceFile::new(p, t.replace(&call, &format!("{}(i:={});", db.names.record, other.id))))
            .collect();
        let broken = InstrumentedProject::parse(&files, project.tasks.clone()).unwrap();
        let b = Runtime::new(broken.base).unwrap();
        let run = common::lock_step(&a, &b, &g, 200, seed);
        assert_eq!(run.divergence, None, "trace calls must not change outputs");
        let traced: std::collections::BTreeSet<u32> =
            (0..run.instrumented.tpa.len() as u32).filter(|i| run.instrumented.tpa[*i as usize]).collect();
        let expected = common::visits_from_log(&model, &db, run.original.log.as_ref().unwrap());
        assert!(expected.contains(&(victim as u32)));
        assert_ne!(traced, expected, "seed {seed}: misplaced call went unnoticed");
        detected += 1;
    }
    assert!(detected >= 30, "only {detected} projects had a visited point");
}
