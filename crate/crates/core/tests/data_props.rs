use std::collections::BTreeSet;

use ltn_core::data::{
    beam_rfs, clean, decode_categorical, encode, group_kdd_categories, kfold, label_counts,
    parse_schema, read_table, split, synth_generate, Cell, Column, ColumnKind, DataError,
    DatasetTable, EncodingSpec, LabelSpec, SynthKind, KDD_CATEGORIES,
};
use proptest::prelude::*;

fn schema() -> Vec<Column> {
    parse_schema("size,numeric\nproto,categorical\nlabel,label\n").unwrap()
}

fn cell_strategy() -> impl Strategy<Value = (Cell, Cell, Cell)> {
    let num = prop_oneof![
        4 => (0i32..4).prop_map(|v| Cell::Num(f64::from(v))),
        1 => Just(Cell::Num(f64::NAN)),
        1 => Just(Cell::Missing),
    ];
    let text = |pool: &'static [&'static str]| {
        prop_oneof![
            5 => prop::sample::select(pool).prop_map(|s| Cell::Text(s.to_string())),
            1 => Just(Cell::Missing),
        ]
    };
    (
        num,
        text(&["tcp", "udp", "icmp"]),
        text(&["normal", "smurf"]),
    )
}

fn table(rows: Vec<(Cell, Cell, Cell)>) -> DatasetTable {
    let mut t = DatasetTable::new(schema());
    for (a, b, c) in rows {
        t.push_row(vec![a, b, c]).unwrap();
    }
    t
}

fn label_spec() -> LabelSpec {
    LabelSpec::OneHot {
        column: "label".into(),
        classes: vec!["normal".into(), "smurf".into()],
    }
}

proptest! {
    #[test]
    fn clean_is_idempotent(rows in prop::collection::vec(cell_strategy(), 0..40)) {
        let once = clean(&table(rows));
        let twice = clean(&once);
        prop_assert_eq!(once.rows(), twice.rows());
        prop_assert!(once.rows().iter().all(|r| r.iter().all(|c| !matches!(c, Cell::Missing))));
        let distinct: BTreeSet<String> = once.rows().iter().map(|r| format!("{r:?}")).collect();
        prop_assert_eq!(distinct.len(), once.len());
    }

    #[test]
    fn one_hot_decoding_recovers_categories(rows in prop::collection::vec(cell_strategy(), 2..40)) {
        let t = clean(&table(rows));
        prop_assume!(t.len() >= 2);
        let spec = EncodingSpec::fit(&t, label_spec(), &[]).unwrap();
        let (x, y) = encode(&t, &spec).unwrap();
        let original: Vec<String> = t.column_cells("proto").unwrap().iter().map(|c| c.to_string()).collect();
        prop_assert_eq!(decode_categorical(&x, &spec, "proto").unwrap(), original);
        prop_assert_eq!(y.shape(), &[t.len(), 2]);
        prop_assert!(y.data().chunks(2).all(|r| r.iter().sum::<f64>() == 1.0));
        // the numeric column is min-max scaled into [0,1]
        prop_assert!(x.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn kfold_partitions_the_indices(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let plan = kfold(n, k, seed).unwrap();
        let mut seen = vec![false; n];
        for fold in &plan.folds {
            for &i in fold {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for i in 0..k {
            prop_assert_eq!(plan.train_indices(i).len() + plan.validation_indices(i).len(), n);
        }
        prop_assert_eq!(kfold(n, k, seed).unwrap(), plan);
    }

    #[test]
    fn split_partitions_the_indices(n in 2usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let (train, test) = split(n, frac, seed).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        let all: BTreeSet<usize> = train.iter().chain(&test).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(train.len() + test.len(), n);
    }
}

#[test]
fn csv_round_trip_and_missing_markers() {
    let text = "size,proto,label\n1.5,tcp,normal\n?,udp,smurf.\n2,,normal\n";
    let t = read_table(text, &schema()).unwrap();
    assert_eq!(t.len(), 3);
    assert_eq!(t.rows()[1][0], Cell::Missing);
    assert_eq!(t.rows()[2][1], Cell::Missing);
    assert_eq!(clean(&t).len(), 1);
    let back = read_table(&t.to_csv().unwrap(), &schema()).unwrap();
    assert_eq!(back.rows(), t.rows());
    // headerless input is accepted too
    assert_eq!(read_table("3,icmp,normal\n", &schema()).unwrap().len(), 1);
}

#[test]
fn schema_and_arity_errors() {
    let err = read_table("size,proto,label\n1,tcp\n", &schema()).unwrap_err();
    assert!(
        matches!(
            err,
            DataError::Arity {
                row: 2,
                expected: 3,
                found: 2
            }
        ),
        "{err}"
    );
    assert!(parse_schema("size,number\n").is_err());
    assert!(parse_schema("").is_err());
    let t = read_table("size,proto,label\n1,sctp,normal\n2,tcp,normal\n", &schema()).unwrap();
    let spec = EncodingSpec::fit(&t, label_spec(), &[])
        .unwrap()
        .with_vocabulary("proto", &["tcp", "udp"])
        .unwrap();
    assert!(matches!(
        encode(&t, &spec),
        Err(DataError::UnknownCategory { .. })
    ));
    assert!(matches!(kfold(3, 4, 0), Err(DataError::InvalidSplit(_))));
    assert!(split(1, 0.5, 0).is_err());
    assert_eq!(
        ColumnKind::Numeric
            .to_string()
            .parse::<ColumnKind>()
            .unwrap(),
        ColumnKind::Numeric
    );
}

#[test]
fn kdd_grouping_rejects_unknown_labels() {
    let mut t = DatasetTable::new(schema());
    t.push_row(vec![
        Cell::Num(1.0),
        Cell::Text("tcp".into()),
        Cell::Text("smurf.".into()),
    ])
    .unwrap();
    t.push_row(vec![
        Cell::Num(2.0),
        Cell::Text("tcp".into()),
        Cell::Text("portseep".into()),
    ])
    .unwrap();
    let grouped = group_kdd_categories(&t, "label").unwrap();
    let labels: Vec<String> = grouped
        .column_cells("label")
        .unwrap()
        .iter()
        .map(|c| c.to_string())
        .collect();
    assert_eq!(labels, ["DOS", "probe"]);
    t.push_row(vec![
        Cell::Num(3.0),
        Cell::Text("tcp".into()),
        Cell::Text("mailbomb".into()),
    ])
    .unwrap();
    assert!(matches!(
        group_kdd_categories(&t, "label"),
        Err(DataError::UnknownAttack(_))
    ));
}

#[test]
fn synthetic_data_is_seeded() {
    for kind in SynthKind::ALL {
        let a = synth_generate(kind, 300, 4).unwrap();
        assert_eq!(a, synth_generate(kind, 300, 4).unwrap(), "{kind}");
        assert_ne!(a, synth_generate(kind, 300, 5).unwrap(), "{kind}");
        assert_eq!(a.len(), 300);
        assert_eq!(kind.to_string().parse::<SynthKind>().unwrap(), kind);
    }
    assert!(synth_generate(SynthKind::BeamRfs, 5, 0).is_err());
}

#[test]
fn protocol_rows_follow_the_flag_rules() {
    let t = synth_generate(SynthKind::ProtocolFlags, 4000, 1).unwrap();
    let protos = t.column_cells("protocol_type").unwrap();
    let flags = t.column_cells("flag").unwrap();
    let mut udp = 0;
    for (p, f) in protos.iter().zip(&flags) {
        let (p, f) = (p.to_string(), f.to_string());
        assert_eq!(p == "tcp", f != "SF", "{p} {f}");
        udp += usize::from(p == "udp");
    }
    let share = udp as f64 / 4000.0;
    assert!((share - 0.80).abs() < 0.03, "udp share {share}");
}

#[test]
fn attack_rows_map_to_all_categories() {
    let t = synth_generate(SynthKind::AttackCategories, 2000, 1).unwrap();
    let grouped = group_kdd_categories(&t, "label").unwrap();
    let counts = label_counts(&grouped, "label").unwrap();
    for c in KDD_CATEGORIES {
        assert!(
            counts.get(c).copied().unwrap_or(0) > 0,
            "{c} missing: {counts:?}"
        );
    }
    let normal = counts["normal"] as f64 / 2000.0;
    assert!((normal - 0.60).abs() < 0.05, "{counts:?}");
}

#[test]
fn three_class_counts_follow_the_shares() {
    let t = synth_generate(SynthKind::ThreeClass, 3000, 2).unwrap();
    let counts = label_counts(&t, "Label").unwrap();
    let total = 57305.0 + 212718.0 + 128005.0;
    for (name, share) in [
        ("BENIGN", 57305.0),
        ("DDoS", 212718.0),
        ("PortScan", 128005.0),
    ] {
        let want = 3000.0 * share / total;
        assert!(
            (counts[name] as f64 - want).abs() <= 1.0,
            "{name}: {counts:?}"
        );
    }
}

#[test]
fn beam_features_track_the_position() {
    let t = synth_generate(SynthKind::BeamRfs, 200, 3).unwrap();
    let pos_idx = t.column_index("position").unwrap();
    for row in t.rows() {
        let Cell::Num(s) = row[pos_idx] else { panic!() };
        assert!((0.02..=0.98).contains(&s));
        let clean = beam_rfs(s);
        for (m, want) in clean.iter().enumerate() {
            let Cell::Num(v) = row[m] else { panic!() };
            assert!((v - want).abs() < 0.002 * 6.0, "mode {m}: {v} vs {want}");
        }
    }
}
