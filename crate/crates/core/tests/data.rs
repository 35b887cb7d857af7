use sepsislab::data::{generate_cohort, ingest_cohort, write_cohort, GeneratorConfig};

#[test]
fn generated_cohort_round_trips_through_files() {
    let cohort = generate_cohort(7, 100, &GeneratorConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_cohort(dir.path(), &cohort).unwrap();
    let back = ingest_cohort(dir.path()).unwrap();
    assert_eq!(back.vocabulary, cohort.vocabulary);
    assert_eq!(back.records, cohort.records);

    let again = tempfile::tempdir().unwrap();
    write_cohort(again.path(), &back).unwrap();
    for f in ["events.csv", "statics.csv", "labels.csv", "vocabulary.json"] {
        let a = std::fs::read(dir.path().join(f)).unwrap();
        let b = std::fs::read(again.path().join(f)).unwrap();
        assert!(a == b, "{f} differs after a round trip");
    }
}

#[test]
fn same_seed_writes_identical_bytes() {
    let write = |seed| {
        let dir = tempfile::tempdir().unwrap();
        write_cohort(dir.path(), &generate_cohort(seed, 25, &GeneratorConfig::default()).unwrap()).unwrap();
        std::fs::read(dir.path().join("events.csv")).unwrap()
    };
    assert_eq!(write(1), write(1));
    assert_ne!(write(1), write(2));
}

#[test]
fn records_sorted_by_patient_and_time() {
    let cohort = generate_cohort(9, 40, &GeneratorConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_cohort(dir.path(), &cohort).unwrap();
    let back = ingest_cohort(dir.path()).unwrap();
    assert!(back.records.windows(2).all(|w| w[0].patient_id < w[1].patient_id));
    for r in &back.records {
        assert!(r.observations().windows(2).all(|w| w[0].time <= w[1].time));
        assert!(r.label.is_some());
    }
}

#[test]
fn missing_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ingest_cohort(&dir.path().join("nope")).is_err());
}
