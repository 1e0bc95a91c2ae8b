use dflmtd::report::{read_rounds, write_rounds, ROUNDS_HEADER};
use dflmtd_core::aggregate::AggregatorKind;
use dflmtd_core::config::{DatasetConfig, ExperimentConfig};
use dflmtd_core::federation::{run_experiment, AttackKind, ExperimentData, Role, RunOptions};
use dflmtd_core::metrics::RoundRecord;
use proptest::prelude::*;

fn to_csv(records: &[RoundRecord]) -> String {
    let mut buf = Vec::new();
    write_rounds(records, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn round6(v: f64) -> f64 {
    format!("{v:.6}").parse().unwrap()
}

fn rounded(r: &RoundRecord) -> RoundRecord {
    RoundRecord {
        f1: round6(r.f1),
        val_loss: round6(r.val_loss),
        asr: r.asr.map(round6),
        ..r.clone()
    }
}

fn record() -> impl Strategy<Value = RoundRecord> {
    let role = prop_oneof![
        Just(Role::Benign),
        Just(Role::LabelFlipper),
        Just(Role::ModelPoisoner),
        Just(Role::Backdoorer)
    ];
    let agg = prop::sample::select(AggregatorKind::ALL.to_vec());
    let ids = prop::collection::btree_set(0usize..50, 0..6).prop_map(|s| s.into_iter().collect::<Vec<_>>());
    (
        (1usize..100, 0usize..50, role, 0.0f64..=1.0, 0.0f64..50.0),
        (prop::option::of(0.0f64..=1.0), ids.clone(), agg, any::<bool>(), ids),
    )
        .prop_map(
            |((round, node_id, role, f1, val_loss), (asr, neighbors, aggregator, mtd_triggered, detected))| {
                RoundRecord {
                    round,
                    node_id,
                    role,
                    f1,
                    val_loss,
                    asr,
                    neighbors,
                    aggregator,
                    mtd_triggered,
                    detected,
                }
            },
        )
}

#[test]
fn header_and_row_format() {
    let r = RoundRecord {
        round: 3,
        node_id: 2,
        role: Role::Benign,
        f1: 0.5,
        val_loss: 1.0 / 3.0,
        asr: None,
        neighbors: vec![0, 4, 7],
        aggregator: AggregatorKind::TrimmedMean,
        mtd_triggered: true,
        detected: vec![4],
    };
    let text = to_csv(std::slice::from_ref(&r));
    assert_eq!(
        text,
        "round,node_id,role,f1,val_loss,asr,neighbors,aggregator,mtd_triggered,detected\n\
         3,2,benign,0.500000,0.333333,,0;4;7,trimmed_mean,true,4\n"
    );
    assert_eq!(ROUNDS_HEADER.join(","), text.lines().next().unwrap());

    let with_asr = RoundRecord {
        asr: Some(0.25),
        detected: vec![],
        ..r
    };
    assert!(to_csv(&[with_asr]).ends_with(",0.250000,0;4;7,trimmed_mean,true,\n"));
}

#[test]
fn rejects_foreign_header() {
    assert!(read_rounds("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn full_run_has_header_plus_one_line_per_node_round_and_round_trips() {
    let mut cfg = ExperimentConfig::new(DatasetConfig {
        samples_per_node: 60,
        test_samples: 100,
        n_features: 144,
        ..DatasetConfig::default()
    });
    cfg.model.hidden = vec![16];
    cfg.attack.kind = AttackKind::Backdoor;
    cfg.attack.pnr = 0.3;
    let data = ExperimentData::synthetic(&cfg).unwrap();
    let report = run_experiment(&cfg, &data, RunOptions::default()).unwrap();
    let text = to_csv(&report.records);
    assert_eq!(text.lines().count(), 101);

    let parsed = read_rounds(text.as_bytes()).unwrap();
    let expected: Vec<_> = report.records.iter().map(rounded).collect();
    assert_eq!(parsed, expected);
    assert_eq!(to_csv(&parsed), text);

    // final F1 is the benign mean of the last round
    let last: Vec<f64> = report
        .records
        .iter()
        .filter(|r| r.round == cfg.rounds && r.role.is_benign())
        .map(|r| r.f1)
        .collect();
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    assert!((report.final_f1 - mean).abs() < 1e-9);
    assert!(report.final_asr.is_some());
}

proptest! {
    #[test]
    fn csv_round_trip_at_six_decimals(records in prop::collection::vec(record(), 0..20)) {
        let text = to_csv(&records);
        let parsed = read_rounds(text.as_bytes()).unwrap();
        let expected: Vec<_> = records.iter().map(rounded).collect();
        prop_assert_eq!(&parsed, &expected);
        prop_assert_eq!(to_csv(&parsed), text);
    }
}
