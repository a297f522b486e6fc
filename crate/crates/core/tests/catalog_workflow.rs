use std::path::Path;

use chrono::DateTime;
use posekit::catalog::{read_log, AnnotationStore, Catalog, Stage, Target, Verdict, LOG_FILE};
use posekit::fixture::{synthetic_catalog, write_fixture};
use posekit::pose::TargetMorph;
use posekit::Error;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/catalog12");
const FIXTURE_MIN_MODELS: usize = 6;

fn replay_fixture() -> AnnotationStore {
    let dir = Path::new(FIXTURE);
    let events = read_log(&dir.join(LOG_FILE)).unwrap();
    AnnotationStore::replay(Catalog::load(dir).unwrap(), FIXTURE_MIN_MODELS, events).unwrap()
}

#[test]
fn replaying_the_fixture_log_is_reproducible() {
    let a = replay_fixture();
    let b = replay_fixture();
    assert_eq!(a.version(), 50);
    assert_eq!(a.snapshot_table(), b.snapshot_table());
    assert_eq!(a.mapping_table(), b.mapping_table());
    let opened = AnnotationStore::open(Path::new(FIXTURE), FIXTURE_MIN_MODELS).unwrap();
    assert_eq!(opened.snapshot_table(), a.snapshot_table());
}

#[test]
fn rejected_morphs_are_never_available() {
    let store = replay_fixture();
    let rejected = store.records().filter(|r| r.target == Target::Rejected).count();
    assert!(rejected > 0, "fixture log should contain rejections");
    // availability only ever holds inspected, accepted targets
    for id in store.catalog().models.keys() {
        let accepted: std::collections::BTreeSet<u8> = store
            .records()
            .filter(|r| &r.model_id == id && r.stage == Stage::Inspected)
            .filter_map(|r| match r.target {
                Target::Morph(m) => Some(m.id()),
                Target::Rejected => None,
            })
            .collect();
        assert_eq!(store.availability(id, 0).unwrap().available, accepted);
    }
}

#[test]
fn sub_threshold_group_cannot_be_annotated() {
    let mut store = replay_fixture();
    let filtered = store.group_candidates().into_iter().find(|g| g.filtered).expect("a filtered group");
    let before = store.snapshot_table();
    let err = store
        .annotate_group(&filtered.name, TargetMorph::from_id(18).unwrap(), "t", DateTime::from_timestamp(0, 0).unwrap())
        .unwrap_err();
    assert!(matches!(err, Error::Invalid(_)));
    assert_eq!(store.snapshot_table(), before);
}

#[test]
fn tampered_log_is_rejected_on_replay() {
    let dir = tempfile::tempdir().unwrap();
    let src = Path::new(FIXTURE);
    std::fs::copy(src.join("catalog.tsv"), dir.path().join("catalog.tsv")).unwrap();
    let mut log = std::fs::read_to_string(src.join(LOG_FILE)).unwrap();
    // Re-inspect the last record: violates finality.
    let last = log.lines().last().unwrap().to_string();
    log.push_str(&last);
    log.push('\n');
    std::fs::write(dir.path().join(LOG_FILE), log).unwrap();
    assert!(AnnotationStore::open(dir.path(), FIXTURE_MIN_MODELS).is_err());
}

#[test]
fn full_workflow_on_fresh_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(dir.path(), 10, 3, 0.75, 256).unwrap();
    for (id, entry) in &fx.catalog.models {
        assert!(dir.path().join(entry.neutral_image.as_ref().unwrap()).exists(), "{id}");
        for m in entry.morphs.values() {
            assert!(dir.path().join(&m.preview_image).exists());
        }
    }
    let mut store = AnnotationStore::open(dir.path(), 3).unwrap();
    let at = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
    let groups: Vec<_> = store.group_candidates().into_iter().filter(|g| !g.filtered).collect();
    for g in groups.iter().filter(|g| fx.truth[&g.name].is_some()).take(3) {
        let n = store.annotate_group(&g.name, fx.truth[&g.name].unwrap(), "t", at).unwrap().len();
        assert_eq!(n, g.count);
    }
    let pending: Vec<(String, String)> = store.records().map(|r| (r.model_id.clone(), r.name.clone())).collect();
    for (i, (m, n)) in pending.iter().enumerate() {
        let v = if i < 2 { Verdict::Reject } else { Verdict::Accept };
        store.inspect(m, n, v, "t", at).unwrap();
    }
    let stats = store.stats();
    assert_eq!(stats.progress, 1.0);
    assert_eq!(stats.model_count, 10);
    let table = store.mapping_table();
    assert!(table.lines().any(|l| l.ends_with("\tX")));
    let reopened = AnnotationStore::open(dir.path(), 3).unwrap();
    assert_eq!(reopened.snapshot_table(), store.snapshot_table());
}

#[test]
fn accepting_every_spelling_recovers_supported_sets() {
    let fx = synthetic_catalog(200, 8, 0.95);
    let mut store = AnnotationStore::new(fx.catalog.clone(), 1);
    let at = DateTime::from_timestamp(0, 0).unwrap();
    let names: Vec<String> = store.group_candidates().into_iter().map(|g| g.name).collect();
    for n in &names {
        if let Some(t) = fx.truth[n] {
            store.annotate_group(n, t, "t", at).unwrap();
        }
    }
    let pending: Vec<(String, String)> = store.records().map(|r| (r.model_id.clone(), r.name.clone())).collect();
    for (m, n) in pending {
        store.inspect(&m, &n, Verdict::Accept, "t", at).unwrap();
    }
    let rich = (0..200).filter(|i| store.availability(&posekit::fixture::model_id(*i), 0).unwrap().len() > 20).count();
    assert!(rich > 100, "only {rich} of 200 models have more than 20 target morphs");
    // Availability equals the descriptor's supported set when every spelling is accepted.
    for (id, ch) in &fx.characters {
        assert_eq!(store.availability(id, 0).unwrap().available, ch.supported);
    }
}
