use std::collections::BTreeSet;

use ivtsc::dgp::{build_dataset, build_multivariate, DgpKind, LabeledDataset, Samples, Scenario};
use ivtsc::harness::csv_io::{read_dataset, write_dataset};
use ivtsc::harness::ingest::ingest_raw;
use ivtsc::harness::pgm::{pgm_bytes, pixel};
use ivtsc::harness::{stratified_split, ExperimentConfig};
use ivtsc::imaging::RecurrenceImage;
use ivtsc::interval::IntervalSeries;
use ivtsc::Error;
use proptest::prelude::*;

fn round_trip(data: &LabeledDataset) -> LabeledDataset {
    let mut bytes = Vec::new();
    write_dataset(data, &mut bytes).unwrap();
    read_dataset(bytes.as_slice()).unwrap()
}

#[test]
fn csv_round_trip_univariate() {
    let data = build_dataset(DgpKind::Dgp2, &[-0.5, 0.3, 0.7], 4, 12, 5).unwrap();
    let back = round_trip(&data);
    assert_eq!(back.samples, data.samples);
    assert_eq!(back.classes, 3);
}

#[test]
fn csv_round_trip_multivariate() {
    let data = build_multivariate(Scenario::C2, &[-0.9, 0.0], 3, 10, 2).unwrap();
    let back = round_trip(&data);
    assert!(back.is_multivariate());
    assert_eq!(back.samples, data.samples);
}

proptest! {
    #[test]
    fn csv_round_trip_is_field_exact(
        values in proptest::collection::vec((-1e6..1e6f64, 0.0..1e3f64), 3..12),
        label in 0usize..4,
    ) {
        let lower: Vec<f64> = values.iter().map(|v| v.0).collect();
        let upper: Vec<f64> = values.iter().map(|v| v.0 + v.1).collect();
        let s = IntervalSeries::new(lower, upper, Some(label)).unwrap();
        let data = LabeledDataset::new(
            Samples::Univariate(vec![s]),
            label + 1,
            (0..=label).map(|k| k.to_string()).collect(),
        ).unwrap();
        prop_assert_eq!(round_trip(&data), data);
    }
}

#[test]
fn csv_rejects_bad_rows() {
    let header = "sample_id,t,dim,lower,upper,label\n";
    let bad_value = format!("{header}a,0,0,1.0,2.0,0\na,1,0,x,2.0,0\n");
    assert!(matches!(
        read_dataset(bad_value.as_bytes()),
        Err(Error::MalformedRow { row: 3, .. })
    ));
    let inverted = format!("{header}a,0,0,3.0,2.0,0\n");
    assert!(matches!(read_dataset(inverted.as_bytes()), Err(Error::MalformedRow { row: 2, .. })));
    let gap = format!("{header}a,0,0,1,2,0\na,2,0,1,2,0\n");
    assert!(read_dataset(gap.as_bytes()).is_err());
    let two_labels = format!("{header}a,0,0,1,2,0\na,1,0,1,2,1\n");
    assert!(read_dataset(two_labels.as_bytes()).is_err());
    assert!(read_dataset("t,dim\n".as_bytes()).is_err());
}

#[test]
fn pgm_examples() {
    let ones = RecurrenceImage::from_values(3, vec![1.0; 9], None).unwrap();
    let bytes = pgm_bytes(&ones).unwrap();
    assert!(bytes.starts_with(b"P5\n3 3\n255\n"));
    assert!(bytes[bytes.len() - 9..].iter().all(|&b| b == 255));

    assert_eq!(pixel(0.5), 128);

    let img = RecurrenceImage::from_values(2, vec![0.0, 1.0, 0.25, 0.75], None).unwrap();
    let bytes = pgm_bytes(&img).unwrap();
    assert_eq!(&bytes[bytes.len() - 4..], &[0, 255, 64, 191]);

    let bad = RecurrenceImage::from_values(1, vec![1.5], None).unwrap();
    assert!(pgm_bytes(&bad).is_err());
}

fn raw_csv(days: &[(u32, u32)], per_day: usize, source: &str) -> String {
    let mut out = String::new();
    for &(month, day) in days {
        for k in 0..per_day {
            out.push_str(&format!("{source},2024-{month:02}-{day:02},0,{}\n", (day as usize * 10 + k) as f64 / 4.0));
        }
    }
    out
}

fn days_from_jan(n: u32) -> Vec<(u32, u32)> {
    let lens = [31, 29, 31, 30];
    let mut out = Vec::new();
    let (mut month, mut day) = (1, 1);
    for _ in 0..n {
        out.push((month, day));
        day += 1;
        if day > lens[month as usize - 1] {
            month += 1;
            day = 1;
        }
    }
    out
}

#[test]
fn ingest_daily_min_max() {
    let csv = format!("sample_id,day,dim,value\n{}", raw_csv(&days_from_jan(2), 8, "x"));
    let data = ingest_raw(csv.as_bytes(), 2).unwrap();
    let Samples::Univariate(s) = &data.samples else { panic!() };
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].lower(), &[2.5, 5.0]);
    assert_eq!(s[0].upper(), &[4.25, 6.75]);
}

#[test]
fn ingest_single_observation_is_degenerate() {
    let csv = format!("sample_id,day,dim,value\n{}", raw_csv(&days_from_jan(3), 1, "x"));
    let data = ingest_raw(csv.as_bytes(), 3).unwrap();
    let Samples::Univariate(s) = &data.samples else { panic!() };
    assert_eq!(s[0].lower(), s[0].upper());
}

#[test]
fn ingest_windows_and_gaps() {
    let csv = format!("sample_id,day,dim,value\n{}", raw_csv(&days_from_jan(65), 2, "x"));
    let data = ingest_raw(csv.as_bytes(), 30).unwrap();
    assert_eq!(data.len(), 2);

    // A missing day splits 40 days into runs of 20 and 19: no full 30-day window.
    let mut days = days_from_jan(40);
    days.remove(20);
    let csv = format!("sample_id,day,dim,value\n{}", raw_csv(&days, 2, "x"));
    assert!(ingest_raw(csv.as_bytes(), 30).unwrap().is_empty());
}

#[test]
fn ingest_labels_sources_in_sorted_order() {
    let days = days_from_jan(4);
    let csv = format!(
        "sample_id,day,dim,value\n{}{}",
        raw_csv(&days, 2, "zurich"),
        raw_csv(&days, 2, "athens")
    );
    let data = ingest_raw(csv.as_bytes(), 2).unwrap();
    assert_eq!(data.class_names, vec!["athens", "zurich"]);
    assert_eq!(data.labels(), vec![0, 0, 1, 1]);
}

#[test]
fn ingest_multivariate_and_errors() {
    let csv = "sample_id,day,dim,value\na,2024-01-01,0,1\na,2024-01-01,1,5\na,2024-01-02,0,2\na,2024-01-02,1,6\n";
    let data = ingest_raw(csv.as_bytes(), 2).unwrap();
    assert!(data.is_multivariate());
    assert_eq!(data.dims(), 2);

    let bad = "sample_id,day,dim,value\na,2024-13-01,0,1\n";
    assert!(matches!(ingest_raw(bad.as_bytes(), 2), Err(Error::MalformedRow { row: 2, .. })));
    assert!(ingest_raw(csv.as_bytes(), 1).is_err());
}

#[test]
fn split_is_stratified_disjoint_and_deterministic() {
    let labels: Vec<usize> = (0..53).map(|i| i % 3).collect();
    let (train, eval) = stratified_split(&labels, 3, 0.8, 9);
    assert_eq!(stratified_split(&labels, 3, 0.8, 9), (train.clone(), eval.clone()));
    assert_ne!(stratified_split(&labels, 3, 0.8, 10).0, train);
    let a: BTreeSet<_> = train.iter().collect();
    let b: BTreeSet<_> = eval.iter().collect();
    assert!(a.is_disjoint(&b));
    assert_eq!(a.len() + b.len(), labels.len());
    for class in 0..3 {
        let n = labels.iter().filter(|&&l| l == class).count() as f64;
        let got = train.iter().filter(|&&i| labels[i] == class).count() as f64;
        assert!((got - 0.8 * n).abs() <= 1.0);
    }
}

#[test]
fn config_parsing() {
    let text = r#"{
        "data": {"simulate": {"dgp": "1", "rhos": [-0.9, 0.9], "per_class": 10, "length": 30}},
        "output_dir": "out",
        "seed": 3,
        "imaging": {"thr": {"quantile": 0.2}, "nu": 5.0},
        "admm": {"outer_iters": 2}
    }"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    assert_eq!(cfg.split, 0.8);
    assert_eq!(cfg.admm.outer_iters, 2);
    assert_eq!(cfg.admm.inner_theta_epochs, 3);
    assert_eq!(cfg.train_config().seed, 3);
    assert_eq!(cfg.load_data().unwrap().len(), 20);

    let typo = text.replace("\"seed\"", "\"sed\"");
    assert!(ExperimentConfig::from_json(&typo).is_err());
    let nested_typo = text.replace("outer_iters", "outer_iter");
    assert!(ExperimentConfig::from_json(&nested_typo).is_err());
    let bad_split = text.replace("\"seed\": 3", "\"seed\": 3, \"split\": 1.0");
    assert!(ExperimentConfig::from_json(&bad_split).is_err());
}
