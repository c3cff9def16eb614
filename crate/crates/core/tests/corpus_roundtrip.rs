//! save -> load -> save is byte-stable for every record kind.

use std::path::Path;

use ace_core::corpus::{
    load_records, save_records, CandidateProgram, EvalRecord, Extra, PreferencePair, Provenance,
    Record, SeedExample, SourceTag, Task, TestOutcome, TestStatus,
};
use proptest::prelude::*;

fn twice<R: Record + PartialEq + std::fmt::Debug>(records: &[R], dir: &Path) {
    let a = dir.join("a.jsonl");
    let b = dir.join("b.jsonl");
    save_records(records, &a).unwrap();
    let loaded: Vec<R> = load_records(&a).unwrap();
    assert_eq!(loaded, records);
    save_records(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

fn text() -> impl Strategy<Value = String> {
    "\\PC{0,40}"
}

fn tag() -> impl Strategy<Value = SourceTag> {
    prop_oneof![
        Just(SourceTag::Evol),
        Just(SourceTag::Oss),
        Just(SourceTag::Stack)
    ]
}

fn status() -> impl Strategy<Value = TestStatus> {
    prop_oneof![
        Just(TestStatus::Pass),
        Just(TestStatus::Fail),
        Just(TestStatus::Error),
        Just(TestStatus::Timeout),
        Just(TestStatus::ResourceExceeded)
    ]
}

fn extra() -> impl Strategy<Value = Extra> {
    prop::collection::btree_map("x_[a-z]{1,6}", any::<i32>(), 0..3).prop_map(|m| {
        m.into_iter()
            .map(|(k, v)| (k, serde_json::json!(v)))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn seeds(items in prop::collection::vec((text(), prop::option::of(text()), "\\PC{1,40}", tag(), extra()), 0..5)) {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = items.into_iter().enumerate().map(|(i, (_, instruction, program_text, source_tag, extra))| SeedExample {
            seed_id: format!("s{i}"), instruction, program_text, source_tag, extra,
        }).collect();
        twice(&recs, dir.path());
    }

    #[test]
    fn tasks(items in prop::collection::vec((text(), prop::collection::vec("assert [a-z]{1,8}", 0..8), prop::option::of(text()), tag(), extra()), 0..5)) {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = items.into_iter().map(|(q, tests, oracle, t, extra)| {
            let mut task = Task::new(q, tests, Provenance { seed_id: "s".into(), source_tag: Some(t), ..Default::default() });
            task.oracle_program = oracle;
            task.extra = extra;
            task
        }).collect();
        twice(&recs, dir.path());
    }

    #[test]
    fn programs(items in prop::collection::vec((text(), prop::option::of(0.0f64..2.0), extra()), 0..5)) {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = items.into_iter().enumerate().map(|(i, (source_text, sampling_temperature, extra))| CandidateProgram {
            task_id: "t".into(), sample_index: i as u32, source_text, generator_tag: "m".into(), sampling_temperature, extra,
        }).collect();
        twice(&recs, dir.path());
    }

    #[test]
    fn evals(items in prop::collection::vec(prop::collection::vec((status(), 0u64..100_000, text()), 0..20), 0..5)) {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = items.into_iter().enumerate().map(|(i, outs)| {
            EvalRecord::new("t", i as u32, outs.into_iter().map(|(s, d, m)| TestOutcome::new(s, d, m)).collect())
        }).collect();
        for r in &recs {
            let recomputed = r.outcomes.iter().filter(|o| o.status == TestStatus::Pass).count() as f64
                / (r.outcomes.len().max(1)) as f64;
            prop_assert!((recomputed - r.pass_rate).abs() < 1e-12);
        }
        twice(&recs, dir.path());
    }

    #[test]
    fn pairs(items in prop::collection::vec((17u64..=20, 1u64..=8, extra()), 0..5)) {
        let dir = tempfile::tempdir().unwrap();
        let recs: Vec<_> = items.into_iter().map(|(p, n, extra)| PreferencePair {
            task_id: "t".into(), positive_index: 0, negative_index: 1,
            s_pos: p as f64 / 20.0, s_neg: n as f64 / 20.0, extra,
        }).collect();
        twice(&recs, dir.path());
    }
}

#[test]
fn degenerate_empty_program_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let recs = vec![CandidateProgram {
        task_id: "t".into(),
        sample_index: 0,
        source_text: String::new(),
        generator_tag: String::new(),
        sampling_temperature: None,
        extra: Extra::new(),
    }];
    twice(&recs, dir.path());
}
