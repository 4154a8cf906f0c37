use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use proptest::prelude::*;
use zeroday_core::autoencoder::{build_autoencoder, detect, score, Architecture};
use zeroday_core::dataset::{
    encode_categoricals, load_feature_csv, read_matrix_csv, split_benign_indices, write_matrix_csv,
    Column, FeatureTable, LabeledDataset, LoadOptions, SplitSpec,
};
use zeroday_core::eval::{
    evaluate_autoencoder, Detector, EvalReport, Render, ReportFormat, ReportMetadata,
    ThresholdSweep,
};
use zeroday_core::ocsvm::{self, project_capped_simplex, KernelSpec, SmoConfig};
use zeroday_core::preprocess::PreprocessPipeline;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        prop::num::f64::NORMAL,
        prop::num::f64::SUBNORMAL,
        prop::num::f64::ZERO,
        -1e3..1e3f64,
    ]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(finite(), rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

/// `n_attack` attack rows interleaved with `n_benign` benign rows.
fn labelled(n_benign: usize, n_attack: usize) -> LabeledDataset {
    let n = n_benign + n_attack;
    let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
    let labels = (0..n)
        .map(|i| {
            if i % 2 == 1 && i / 2 < n_attack {
                "attack"
            } else {
                "benign"
            }
        })
        .map(str::to_owned)
        .collect::<Vec<_>>();
    let labels = if labels.iter().filter(|l| *l == "attack").count() < n_attack {
        let mut l = labels;
        let missing = n_attack - l.iter().filter(|l| *l == "attack").count();
        l.iter_mut()
            .rev()
            .filter(|l| *l == "benign")
            .take(missing)
            .for_each(|l| *l = "attack".into());
        l
    } else {
        labels
    };
    LabeledDataset::new(vec!["f".into()], x, labels, "benign").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_parts_are_disjoint_and_cover_benign(n in 2usize..200, n_attack in 0usize..20, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let data = labelled(n, n_attack);
        let benign: BTreeSet<usize> = data.class_index()["benign"].iter().copied().collect();
        let spec = SplitSpec { train_fraction: frac, seed, shuffle: true };
        match split_benign_indices(&data, &spec) {
            Ok((train, val)) => {
                let t: BTreeSet<usize> = train.iter().copied().collect();
                let v: BTreeSet<usize> = val.iter().copied().collect();
                prop_assert_eq!(t.len(), train.len());
                prop_assert!(t.is_disjoint(&v));
                prop_assert_eq!(t.union(&v).copied().collect::<BTreeSet<_>>(), benign.clone());
                prop_assert_eq!(train.len(), (frac * benign.len() as f64).floor() as usize);
                prop_assert_eq!(split_benign_indices(&data, &spec).unwrap(), (train, val));
            }
            // Only a fraction that rounds one part to nothing is refused.
            Err(_) => {
                let k = (frac * benign.len() as f64).floor() as usize;
                prop_assert!(k == 0 || k == benign.len());
            }
        }
    }

    #[test]
    fn one_hot_rows_sum_to_one(tokens in prop::collection::vec(0usize..5, 1..60), nums in prop::collection::vec(-5.0f64..5.0, 60)) {
        let n = tokens.len();
        let names = ["icmp", "tcp", "udp", "gre", "sctp"];
        let table = FeatureTable::new(
            vec!["x".into(), "proto".into()],
            vec![
                Column::Numeric(nums[..n].to_vec()),
                Column::Categorical(tokens.iter().map(|&t| names[t].to_string()).collect()),
            ],
            None,
        )
        .unwrap();
        let enc = encode_categoricals(&table);
        prop_assert_eq!(enc.n_rows(), n);
        prop_assert!(enc.is_numeric());
        let distinct: BTreeSet<usize> = tokens.iter().copied().collect();
        prop_assert_eq!(enc.n_columns(), 1 + distinct.len());
        let indicator: Vec<&Vec<f64>> = enc
            .columns
            .iter()
            .zip(&enc.column_names)
            .filter(|(_, name)| name.starts_with("proto="))
            .map(|(c, _)| match c {
                Column::Numeric(v) => v,
                Column::Categorical(_) => unreachable!(),
            })
            .collect();
        let mut sorted = enc.column_names[1..].to_vec();
        sorted.sort();
        prop_assert_eq!(&sorted[..], &enc.column_names[1..]);
        for i in 0..n {
            let s: f64 = indicator.iter().map(|c| c[i]).sum();
            prop_assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn matrix_csv_round_trip_is_exact(x in (1usize..12, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let names: Vec<String> = (0..x.ncols()).map(|j| format!("c{j}")).collect();
        write_matrix_csv(&path, &names, &x).unwrap();
        let (n2, y) = read_matrix_csv(&path).unwrap();
        prop_assert_eq!(n2, names);
        prop_assert_eq!(x.shape(), y.shape());
        for (a, b) in x.iter().zip(y.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn load_encode_load_round_trip_is_exact(
        nums in prop::collection::vec(finite(), 1..30),
        tokens in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 30),
    ) {
        let n = nums.len();
        let labels: Vec<String> = (0..n).map(|i| if i % 2 == 0 { "benign" } else { "bad" }.to_string()).collect();
        let table = FeatureTable::new(
            vec!["v".into(), "tok".into()],
            vec![Column::Numeric(nums.clone()), Column::Categorical(tokens[..n].iter().map(|s| s.to_string()).collect())],
            Some(labels),
        )
        .unwrap();
        let data = LabeledDataset::from_table(&encode_categoricals(&table), "benign").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        data.write_csv(&path, "label").unwrap();
        let again = LabeledDataset::from_table(&load_feature_csv(&path, &LoadOptions::with_label("label")).unwrap(), "benign").unwrap();
        prop_assert_eq!(&again.feature_names, &data.feature_names);
        prop_assert_eq!(&again.labels, &data.labels);
        for (a, b) in data.features.iter().zip(again.features.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn detection_rate_is_monotone_in_threshold(scores in prop::collection::vec(0.0f64..2.0, 1..100), mut ts in prop::collection::vec(0.0f64..2.0, 2..10)) {
        ts.sort_by(f64::total_cmp);
        let rates: Vec<f64> = ts.iter().map(|&t| detect(&scores, t).unwrap()).collect();
        prop_assert!(rates.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn capped_simplex_projection_is_feasible(v in prop::collection::vec(-10.0f64..10.0, 1..40), slack in 1.0f64..5.0) {
        let n = v.len();
        let upper = slack / n as f64;
        let p = project_capped_simplex(&ndarray::Array1::from(v), upper);
        prop_assert!((p.sum() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|a| *a >= 0.0 && *a <= upper + 1e-12));
    }
}

fn report_strategy() -> impl Strategy<Value = EvalReport> {
    (
        prop::collection::btree_set(1u32..1000, 1..5),
        prop::collection::btree_map("[a-z]{1,6}", 1usize..5000, 0..4),
        1usize..5000,
        any::<bool>(),
        any::<u64>(),
    )
        .prop_flat_map(|(sweep, classes, benign_count, ae, seed)| {
            let sweep: Vec<f64> = sweep.into_iter().map(|v| f64::from(v) / 1000.0).collect();
            let k = sweep.len();
            let classes: BTreeMap<String, usize> =
                classes.into_iter().filter(|(c, _)| c != "benign").collect();
            let n_classes = classes.len();
            (
                Just((sweep, classes, benign_count, ae, seed)),
                prop::collection::vec(0.0f64..=1.0, k),
                prop::collection::vec(prop::collection::vec(0.0f64..=1.0, k), n_classes),
                prop::collection::vec(0.0f64..=1.0, k),
            )
        })
        .prop_map(
            |((sweep, classes, benign_count, ae, seed), spec, recall, acc)| EvalReport {
                detector: if ae {
                    Detector::Autoencoder
                } else {
                    Detector::Ocsvm
                },
                dataset_id: "prop".into(),
                sweep,
                benign_label: "benign".into(),
                benign_count,
                benign_specificity: spec,
                per_class_recall: classes.keys().cloned().zip(recall).collect(),
                class_counts: classes,
                overall_accuracy: acc,
                metadata: ReportMetadata {
                    seed: Some(seed),
                    notes: vec!["note".into()],
                    ..ReportMetadata::default()
                },
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn report_emit_parse_emit_is_byte_identical(r in report_strategy()) {
        for fmt in ReportFormat::ALL {
            let first = r.render(fmt);
            let parsed = EvalReport::parse(&first, fmt).unwrap();
            prop_assert_eq!(&parsed.sweep, &r.sweep);
            prop_assert_eq!(parsed.render(fmt), first);
        }
    }

    #[test]
    fn sweep_requires_strictly_increasing_positive_values(v in prop::collection::vec(-1.0f64..1.0, 1..6)) {
        let ok = v.iter().all(|x| *x > 0.0) && v.windows(2).all(|w| w[0] < w[1]);
        prop_assert_eq!(ThresholdSweep::new(v).is_ok(), ok);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn specificity_complements_benign_exceedance(seed in any::<u64>(), raw in matrix(40, 3)) {
        let raw = raw.mapv(|v| v.clamp(-1e3, 1e3));
        let labels: Vec<String> = (0..40).map(|i| if i < 30 { "benign" } else if i < 35 { "a" } else { "b" }.to_string()).collect();
        let names: Vec<String> = (0..3).map(|j| format!("f{j}")).collect();
        let data = LabeledDataset::new(names.clone(), raw.clone(), labels, "benign").unwrap();
        let benign = data.benign_rows();
        prop_assume!(benign.columns().into_iter().all(|c| c.iter().any(|v| *v != c[0])));
        let pipeline = PreprocessPipeline::fit(&benign, &names, None).unwrap();
        let mut model = build_autoencoder(&Architecture::new(3, &[2]), 0.0, seed).unwrap();
        model.pipeline_id = Some(pipeline.id());
        let sweep = ThresholdSweep::new(vec![0.1, 0.5, 1.0, 2.0]).unwrap();
        let r = evaluate_autoencoder(&model, &pipeline, &data, &sweep, "p").unwrap();
        r.validate().unwrap();
        let scores = score(&model, &pipeline.apply(&benign).unwrap()).unwrap();
        for (k, &t) in sweep.values().iter().enumerate() {
            prop_assert_eq!(r.benign_specificity[k] + detect(&scores, t).unwrap(), 1.0);
        }
        for rates in r.per_class_recall.values() {
            prop_assert!(rates.windows(2).all(|w| w[1] <= w[0]));
        }
        prop_assert!(r.benign_specificity.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn svm_dual_is_feasible(x in matrix(25, 2), nu in prop::sample::select(vec![0.1, 0.2, 0.5, 1.0]), seed in any::<u64>()) {
        let x = x.mapv(|v| v.clamp(-10.0, 10.0));
        let cfg = SmoConfig { seed, ..SmoConfig::default() };
        let m = ocsvm::fit(&x, nu, &KernelSpec::rbf(0.5), &cfg).unwrap();
        let total: f64 = m.alphas.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-8);
        prop_assert!(m.alphas.iter().all(|a| *a > 0.0 && *a <= m.upper_bound + 1e-12));
    }
}
