mod common;

use std::collections::BTreeMap;

use paramfactor::baselines::{
    joint_multilingual, joint_multilingual_predict, select_largest_source, select_nearest_source,
    train_head, CellClassifier, LangFeatures,
};
use paramfactor::data::{Cell, Example};
use paramfactor::hypernet::HeadParams;
use paramfactor::rng::{derive_seed, label_index};
use paramfactor::train::TrainingSet;
use paramfactor::LangId;
use proptest::prelude::*;

const LANGS: [&str; 5] = ["a", "b", "c", "d", "x"];

fn classifiers(sizes: &[usize], head_fill: f64) -> BTreeMap<Cell, CellClassifier> {
    sizes
        .iter()
        .zip(LANGS)
        .map(|(&n, l)| {
            let cell = Cell::new("t", l);
            let mut head = HeadParams::zeros(2, 2);
            head.bias.fill(head_fill);
            (
                cell.clone(),
                CellClassifier {
                    cell,
                    head,
                    train_tokens: n,
                },
            )
        })
        .collect()
}

fn features(rows: &[Vec<f64>]) -> LangFeatures {
    LangFeatures::new(
        rows.iter()
            .zip(LANGS)
            .map(|(v, l)| (LangId::from(l), v.clone()))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn nearest_source_ignores_vector_lengths(
        rows in prop::collection::vec(prop::collection::vec(0.1..2.0f64, 3), 5),
        scales in prop::collection::vec(0.01..100.0f64, 5),
    ) {
        let clf = classifiers(&[1, 1, 1, 1], 0.0);
        let target = Cell::new("t", "x");
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .zip(&scales)
            .map(|(v, s)| v.iter().map(|x| x * s).collect())
            .collect();
        let a = select_nearest_source(&clf, &features(&rows), &target).unwrap();
        let b = select_nearest_source(&clf, &features(&scaled), &target).unwrap();
        prop_assert_eq!(&a.cell, &b.cell);
    }

    #[test]
    fn largest_source_depends_only_on_sizes(
        sizes in prop::collection::vec(0usize..50, 4),
        fill in -5.0..5.0f64,
    ) {
        let target = Cell::new("t", "x");
        let a = select_largest_source(&classifiers(&sizes, 0.0), &target).unwrap().cell.clone();
        let b = select_largest_source(&classifiers(&sizes, fill), &target).unwrap().cell.clone();
        prop_assert_eq!(&a, &b);
        let max = *sizes.iter().max().unwrap();
        let first = sizes.iter().position(|&n| n == max).unwrap();
        prop_assert_eq!(a.lang.as_str(), LANGS[first]);
    }
}

#[test]
fn joint_head_on_one_language_is_the_cell_head() {
    let t = common::acceptance_grid();
    let tc = t.data.cells[0].clone();
    let task = tc.cell.task.clone();
    let schema = t.data.schemas[&task].clone();
    let single =
        TrainingSet::new([(task.clone(), schema.clone())].into(), vec![tc.clone()]).unwrap();
    let joint = joint_multilingual(&single, &t.config).unwrap();
    let train: Vec<&Example> = tc.train.iter().collect();
    let dev: Vec<&Example> = tc.dev.iter().collect();
    let seed = derive_seed(t.config.seed, "jm-head", &[label_index(task.as_str())]);
    let direct = train_head(&train, &dev, &schema, &t.config, seed).unwrap();
    assert_eq!(joint[&task], direct);
}

#[test]
fn joint_head_beats_chance_on_unseen_cells() {
    let t = common::acceptance_grid();
    let heads = joint_multilingual(&t.data, &t.config).unwrap();
    for cell in &t.part.unseen {
        let schema = &t.truth.schemas[&cell.task];
        let ex = t.truth.examples(cell).unwrap();
        let acc = joint_multilingual_predict(&heads, cell, schema, &ex)
            .unwrap()
            .accuracy
            .unwrap();
        assert!(acc >= 1.0 / schema.class_count() as f64, "{cell}: {acc}");
    }
}
