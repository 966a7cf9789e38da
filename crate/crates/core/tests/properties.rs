use chrono::{DateTime, TimeZone, Utc};
use cxrlabel::his::{parse_session_file, write_session_xml, ReportRecord, SessionRecord};
use cxrlabel::label_map::{map_row, ChexpertRow, Observation, ObservationValue, UncertainPolicy};
use cxrlabel::labels::{Flags, LabelClass, LabelVector};
use cxrlabel::pacs::{parse_study_manifest, write_study_manifest, StudyRecord};
use cxrlabel::review::{qc_sample, Payload, QcCandidate, QueueStore, ReviewItem};
use cxrlabel::splitter::{check_distribution, random_split, stratified_split, train_size};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instant(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_600_000_000 + secs, 0).unwrap()
}

fn flags_strategy() -> impl Strategy<Value = Flags> {
    prop::array::uniform4(prop::bool::weighted(0.2)).prop_flat_map(|loc| {
        let any = loc.iter().any(|&b| b);
        (Just(loc), if any { Just(true).boxed() } else { prop::bool::weighted(0.1).boxed() })
            .prop_map(|(l, ab)| Flags([l[0], l[1], l[2], l[3], ab]))
    })
}

fn labels_strategy(max: usize) -> impl Strategy<Value = Vec<(String, Flags)>> {
    prop::collection::vec(flags_strategy(), 10..max)
        .prop_map(|fs| fs.into_iter().enumerate().map(|(i, f)| (format!("1.2.{i:04}"), f)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn split_is_a_sized_partition(labels in labels_strategy(300), seed: u64, ratio in 0.1f64..0.9) {
        let s = stratified_split(&labels, ratio, seed, 0.05).unwrap();
        prop_assert_eq!(s.train_uids.len(), train_size(labels.len(), ratio));
        let mut all: Vec<&String> = s.train_uids.iter().chain(&s.val_uids).collect();
        all.sort();
        let mut expected: Vec<&String> = labels.iter().map(|(u, _)| u).collect();
        expected.sort();
        prop_assert_eq!(all, expected);
        let again = stratified_split(&labels, ratio, seed, 0.05).unwrap();
        prop_assert_eq!(again.train_uids, s.train_uids);
    }

    #[test]
    fn session_xml_round_trips(
        ids in ("[A-Z]{1,3}[0-9]{1,4}", "P[0-9]{1,6}"),
        span in (0i64..86_400, 0i64..86_400),
        reports in prop::collection::vec(
            ("[A-Z]{2,4}", 0i64..86_400, "[a-zA-Z0-9àáảãạđêếôơưữ&<>\"'(),.]([a-zA-Z0-9àáảãạđêếôơưữ&<>\"'(),. ]{0,30}[a-zA-Z0-9đ.])?"),
            0..5,
        ),
    ) {
        let session = SessionRecord {
            session_id: ids.0.clone(),
            patient_id: ids.1.clone(),
            check_in_time: instant(span.0),
            check_out_time: instant(span.0 + span.1),
        };
        let records: Vec<ReportRecord> = reports
            .iter()
            .enumerate()
            .map(|(i, (service, t, desc))| ReportRecord {
                report_id: format!("{}#{i}", ids.0),
                session_id: ids.0.clone(),
                patient_id: ids.1.clone(),
                service_id: service.clone(),
                report_time: instant(*t),
                description: desc.clone(),
                check_in_time: session.check_in_time,
                check_out_time: session.check_out_time,
            })
            .collect();
        let xml = write_session_xml(&session, &records);
        let (s, r) = parse_session_file(xml.as_bytes()).unwrap();
        prop_assert_eq!(s, session);
        prop_assert_eq!(r, records);
    }

    #[test]
    fn study_manifest_round_trips(
        rows in prop::collection::vec(("[0-9.]{3,20}", "P[0-9]{1,5}", 0i64..10_000_000, prop::option::of(0.0f64..=1.0)), 0..20)
    ) {
        let studies: Vec<StudyRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (uid, p, t, pa))| StudyRecord {
                study_uid: format!("{uid}{i}"),
                patient_id: p.clone(),
                study_time: instant(*t),
                pa_probability: *pa,
                image_ref: format!("dicom/{i}.dcm"),
            })
            .collect();
        let mut buf = Vec::new();
        write_study_manifest(&mut buf, &studies).unwrap();
        prop_assert_eq!(parse_study_manifest(buf.as_slice()).unwrap(), studies);
    }

    #[test]
    fn mapping_is_monotone_and_ignores_no_finding(
        values in prop::array::uniform14(0u8..4),
        flip in 1usize..14,
        policy in prop_oneof![Just(UncertainPolicy::AsNegative), Just(UncertainPolicy::AsPositive)],
    ) {
        let value = |v: u8| [
            ObservationValue::Positive,
            ObservationValue::Negative,
            ObservationValue::Uncertain,
            ObservationValue::Blank,
        ][v as usize];
        let row = |vals: &[ObservationValue; 14]| ChexpertRow {
            identifier: "r".into(),
            observations: Observation::ALL.iter().zip(vals).map(|(o, v)| (o.name().to_owned(), *v)).collect(),
        };
        let mut vals = values.map(value);
        let before = map_row(&row(&vals), policy).unwrap();
        prop_assert!(before.is_consistent());

        let no_finding = Observation::ALL.iter().position(|o| o.name() == "No Finding").unwrap();
        for v in [ObservationValue::Positive, ObservationValue::Negative, ObservationValue::Blank] {
            let mut other = vals;
            other[no_finding] = v;
            prop_assert_eq!(map_row(&row(&other), policy).unwrap(), before);
        }

        let i = (no_finding + flip) % 14;
        vals[i] = ObservationValue::Positive;
        let after = map_row(&row(&vals), policy).unwrap();
        for c in LabelClass::ALL {
            prop_assert!(!before.get(c) || after.get(c));
        }
        prop_assert!(after.get(LabelClass::Abnormal));
    }
}

fn synthetic_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<(String, Flags)> {
    let rates = [0.024, 0.022, 0.217, 0.078];
    (0..n)
        .map(|i| {
            let loc: [bool; 4] = std::array::from_fn(|c| rng.random_bool(rates[c]));
            let ab = loc.iter().any(|&b| b) || rng.random_bool(0.02);
            (format!("1.3.{i:05}"), Flags([loc[0], loc[1], loc[2], loc[3], ab]))
        })
        .collect()
}

#[test]
fn stratified_beats_random_at_scale() {
    let mut wins = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let labels = synthetic_labels(10_000, &mut rng);
        let strat = stratified_split(&labels, 0.7, trial, 0.01).unwrap();
        let rand = random_split(&labels, 0.7, trial);
        let s = strat.ratio_report.max_deviation;
        let r = check_distribution(&rand, &labels, 0.01).unwrap().max_deviation;
        assert!(strat.ratio_report.within_tolerance, "trial {trial}: deviation {s}");
        if s < r {
            wins += 1;
        }
    }
    assert!(wins >= 95, "stratified won only {wins} of 100 trials");
}

#[test]
fn qc_items_survive_store_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let candidates: Vec<QcCandidate> = synthetic_labels(400, &mut rng)
        .into_iter()
        .map(|(uid, flags)| QcCandidate {
            study_uid: uid,
            labels: LabelVector::new(flags, cxrlabel::labels::LabelSource::Keyword),
            description: "Dày tổ chức kẽ".into(),
        })
        .collect();
    let t0 = Utc.with_ymd_and_hms(2021, 3, 2, 9, 0, 0).unwrap();
    let drawn = qc_sample(&candidates, 0.25, 9, t0).unwrap();
    assert_eq!(drawn.len(), 100);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("queue.jsonl");
    let mut store = QueueStore::open(&path).unwrap();
    let mut ids = Vec::new();
    for item in drawn {
        ids.push(store.enqueue(item).unwrap());
    }
    for (k, id) in ids.iter().enumerate().filter(|(k, _)| k % 3 == 0) {
        let flags = if k % 2 == 0 { Flags::NORMAL } else { Flags::from_bits([0, 0, 1, 0, 1]) };
        store.submit_labels(id, flags, "qc", t0).unwrap();
    }
    let before: Vec<ReviewItem> = store.items().cloned().collect();
    drop(store);
    let reopened = QueueStore::open(&path).unwrap();
    let after: Vec<ReviewItem> = reopened.items().cloned().collect();
    assert_eq!(before, after);
    assert_eq!(reopened.stats().resolved, 34);
    assert!(after.iter().all(|i| matches!(i.payload, Payload::Audit { round_seed: 9, .. })));
}
