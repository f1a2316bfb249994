use std::collections::BTreeSet;

use paramfactor::data::{constraint_violations, load_conll, partition, write_conll, Cell};
use paramfactor::encoder::{featurize, FeaturizerConfig};
use proptest::prelude::*;

#[test]
fn partition_constraint_holds_across_seeds() {
    let grid: Vec<Cell> = ["pos", "ner"]
        .iter()
        .flat_map(|t| (0..6).map(move |l| Cell::new(*t, format!("l{l}"))))
        .collect();
    for seed in 0..1000 {
        let p = partition(&grid, 0.5, seed).unwrap();
        assert_eq!(p.unseen.len(), 6);
        assert!(p.seen.is_disjoint(&p.unseen), "seed {seed}");
        let all: BTreeSet<Cell> = p.seen.union(&p.unseen).cloned().collect();
        assert_eq!(all, grid.iter().cloned().collect(), "seed {seed}");
        assert!(
            constraint_violations(&p.seen, &p.unseen).is_empty(),
            "seed {seed}"
        );
    }
}

fn word() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9.,'-]{1,8}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conll_write_reload_round_trip(
        sentences in prop::collection::vec(
            prop::collection::vec((word(), "[A-Z]{1,3}(-[A-Z]{2,4})?"), 1..6),
            1..6,
        )
    ) {
        let dir = tempfile::tempdir().unwrap();
        let text: String = sentences
            .iter()
            .map(|s| s.iter().map(|(w, l)| format!("{w}\t{l}\n")).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n");
        let src = dir.path().join("in.tsv");
        std::fs::write(&src, text).unwrap();
        let corpus = load_conll(&src, "t".into(), "l".into(), None).unwrap();
        prop_assert_eq!(corpus.sentences.len(), sentences.len());
        let out = dir.path().join("out.tsv");
        write_conll(&corpus, &out).unwrap();
        prop_assert_eq!(load_conll(&out, "t".into(), "l".into(), None).unwrap(), corpus);
    }

    #[test]
    fn features_ignore_tokens_outside_the_window(
        tokens in prop::collection::vec(word(), 1..12),
        replacement in word(),
        window in 0usize..3,
        target in 0usize..12,
        far in 0usize..12,
    ) {
        let n = tokens.len();
        let (i, j) = (target % n, far % n);
        prop_assume!(i.abs_diff(j) > window);
        let config = FeaturizerConfig { window, ..FeaturizerConfig::new(64) };
        let mut changed = tokens.clone();
        changed[j] = replacement;
        let a = featurize(&tokens, &config).unwrap();
        let b = featurize(&changed, &config).unwrap();
        prop_assert_eq!(&a[i], &b[i]);
    }
}

#[test]
fn distinct_tokens_get_distinct_vectors() {
    let config = FeaturizerConfig {
        window: 0,
        ..FeaturizerConfig::new(64)
    };
    let tokens: Vec<String> = (0..100).map(|i| format!("tok{i}")).collect();
    let vectors = featurize(&tokens, &config).unwrap();
    let unique: BTreeSet<Vec<u64>> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x.to_bits()).collect())
        .collect();
    assert_eq!(unique.len(), 100);
}
