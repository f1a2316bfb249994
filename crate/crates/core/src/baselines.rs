//! Point-estimate comparison systems: per-cell classifiers transferred by
//! nearest source (NS) or largest source (LS), and per-task joint
//! multilingual (JM) heads.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::{Cell, Example};
use crate::error::{Error, Result};
use crate::hypernet::HeadParams;
use crate::latents::{LangId, TaskId};
use crate::likelihood::{log_softmax, logits, nll_backward, TaskSchema};
use crate::predict::{predict_with_head, PredictiveReport};
use crate::rng;
use crate::train::{Adam, AdamHyper, TrainConfig, TrainingSet};

/// Per-language feature vectors used to rank NS sources.
#[derive(Debug, Clone, PartialEq)]
pub struct LangFeatures {
    vectors: BTreeMap<LangId, Vec<f64>>,
}

impl LangFeatures {
    pub fn new(vectors: BTreeMap<LangId, Vec<f64>>) -> Result<Self> {
        let mut width = None;
        for (lang, v) in &vectors {
            if *width.get_or_insert(v.len()) != v.len() {
                return Err(Error::InvalidArgument(format!(
                    "feature vector of `{lang}` has length {}, expected {}",
                    v.len(),
                    width.unwrap_or(0)
                )));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "feature vector of `{lang}` is zero"
                )));
            }
        }
        Ok(Self { vectors })
    }

    pub fn get(&self, lang: &LangId) -> Result<&[f64]> {
        self.vectors
            .get(lang)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingFeatures(lang.0.clone()))
    }

    pub fn langs(&self) -> impl Iterator<Item = &LangId> {
        self.vectors.keys()
    }

    /// Multiplies every vector by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vectors: self
                .vectors
                .iter()
                .map(|(l, v)| (l.clone(), v.iter().map(|x| x * factor).collect()))
                .collect(),
        }
    }

    /// `lang v1 ... vh`, whitespace separated.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(lang) = fields.next() else { continue };
            let v = fields
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::parse(path, i + 1, "non-numeric feature"))?;
            if v.is_empty() {
                return Err(Error::parse(path, i + 1, "language has no features"));
            }
            if vectors.insert(LangId::new(lang), v).is_some() {
                return Err(Error::DuplicateId(lang.to_string()));
            }
        }
        Self::new(vectors)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (lang, v) in &self.vectors {
            out.push_str(lang.as_str());
            for x in v {
                out.push_str(&format!(" {x:?}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellClassifier {
    pub cell: Cell,
    pub head: HeadParams,
    /// Tokens in the training split the head was fit on.
    pub train_tokens: usize,
}

fn mean_log_lik(head: &HeadParams, schema: &TaskSchema, data: &[&Example]) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ex in data {
        let gold = ex.gold.as_ref()?;
        for (x, &y) in ex.embeddings.iter().zip(gold) {
            total += log_softmax(&logits(head, x, schema.class_count()))[y];
            n += 1;
        }
    }
    (n > 0).then(|| total / n as f64)
}

/// Maximum-likelihood softmax head, Adam with early stopping on dev
/// log-likelihood. Starts from zero weights; `seed` drives batch order.
pub fn train_head(
    train: &[&Example],
    dev: &[&Example],
    schema: &TaskSchema,
    config: &TrainConfig,
    seed: u64,
) -> Result<HeadParams> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingData);
    }
    let e = train[0]
        .embeddings
        .first()
        .map(Vec::len)
        .ok_or(Error::EmptyTrainingData)?;
    let c = schema.class_count();
    for ex in train.iter().chain(dev) {
        if ex.gold.is_none() {
            return Err(Error::InvalidArgument(format!(
                "example {} has no gold labels",
                ex.id
            )));
        }
        if let Some(x) = ex.embeddings.iter().find(|x| x.len() != e) {
            return Err(Error::DimensionMismatch {
                what: "token embedding",
                expected: e,
                got: x.len(),
            });
        }
    }
    let hp = AdamHyper::from_config(config);
    let mut head = HeadParams::zeros(e, c);
    let n_params = (e + 1) * c;
    let frozen = vec![false; n_params];
    let mut adam = Adam::new(n_params);
    let mut best = head.clone();
    let mut best_dev = mean_log_lik(&head, schema, dev);
    let mut bad = 0usize;
    let (mut epoch, mut pos) = (0u64, train.len());
    let mut perm: Vec<usize> = Vec::new();

    for step in 1..=config.max_steps {
        if pos >= train.len() {
            perm = (0..train.len()).collect();
            perm.shuffle(&mut rng::stream(seed, "head-epoch", &[epoch]));
            epoch += 1;
            pos = 0;
        }
        let end = (pos + config.batch_size).min(train.len());
        let mut grad = vec![0.0; n_params];
        let mut loss = 0.0;
        for &i in &perm[pos..end] {
            let ex = train[i];
            let gold = ex.gold.as_ref().expect("checked above");
            for (x, &y) in ex.embeddings.iter().zip(gold) {
                loss += nll_backward(&head, x, c, y, 1.0, &mut grad);
            }
        }
        pos = end;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                task: schema.task.0.clone(),
                lang: String::from("-"),
                loss,
            });
        }
        let mut params = head.flatten();
        adam.step(&mut params, &grad, &frozen, hp);
        head = crate::hypernet::reshape_theta(&params, e, c)?;

        if step % config.validation_every == 0 {
            match mean_log_lik(&head, schema, dev) {
                None => best = head.clone(),
                Some(d) if best_dev.is_none_or(|b| d > b) => {
                    best_dev = Some(d);
                    best = head.clone();
                    bad = 0;
                }
                Some(_) => {
                    bad += 1;
                    if bad >= config.patience {
                        break;
                    }
                }
            }
        }
    }
    if dev.is_empty() {
        best = head;
    }
    Ok(best)
}

fn cell_seed(seed: u64, tag: &str, cell: &Cell) -> u64 {
    rng::derive_seed(
        seed,
        tag,
        &[
            rng::label_index(cell.task.as_str()),
            rng::label_index(cell.lang.as_str()),
        ],
    )
}

/// One classifier per seen cell, each fit only on that cell's train split.
pub fn train_cell_classifiers(
    data: &TrainingSet,
    config: &TrainConfig,
) -> Result<BTreeMap<Cell, CellClassifier>> {
    let mut out = BTreeMap::new();
    for tc in &data.cells {
        let schema = &data.schemas[&tc.cell.task];
        let train: Vec<&Example> = tc.train.iter().collect();
        let dev: Vec<&Example> = tc.dev.iter().collect();
        let head = train_head(
            &train,
            &dev,
            schema,
            config,
            cell_seed(config.seed, "cell-head", &tc.cell),
        )?;
        out.insert(
            tc.cell.clone(),
            CellClassifier {
                cell: tc.cell.clone(),
                head,
                train_tokens: tc.train.iter().map(Example::len).sum(),
            },
        );
    }
    Ok(out)
}

fn same_task_sources<'a>(
    classifiers: &'a BTreeMap<Cell, CellClassifier>,
    target: &Cell,
) -> Result<Vec<&'a CellClassifier>> {
    // BTreeMap order puts same-task cells in lexicographic language order.
    let out: Vec<&CellClassifier> = classifiers
        .values()
        .filter(|c| c.cell.task == target.task && c.cell.lang != target.lang)
        .collect();
    if out.is_empty() {
        return Err(Error::NoSource(target.to_string()));
    }
    Ok(out)
}

/// Same-task source whose language features are most cosine-similar.
pub fn select_nearest_source<'a>(
    classifiers: &'a BTreeMap<Cell, CellClassifier>,
    features: &LangFeatures,
    target: &Cell,
) -> Result<&'a CellClassifier> {
    let tf = features.get(&target.lang)?;
    let mut best: Option<(&CellClassifier, f64)> = None;
    for c in same_task_sources(classifiers, target)? {
        let sim = cosine(features.get(&c.cell.lang)?, tf);
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((c, sim));
        }
    }
    Ok(best.expect("sources non-empty").0)
}

/// Same-task source with the most training tokens.
pub fn select_largest_source<'a>(
    classifiers: &'a BTreeMap<Cell, CellClassifier>,
    target: &Cell,
) -> Result<&'a CellClassifier> {
    let mut best: Option<&CellClassifier> = None;
    for c in same_task_sources(classifiers, target)? {
        if best.is_none_or(|b| c.train_tokens > b.train_tokens) {
            best = Some(c);
        }
    }
    Ok(best.expect("sources non-empty"))
}

pub fn nearest_source_predict(
    classifiers: &BTreeMap<Cell, CellClassifier>,
    features: &LangFeatures,
    target: &Cell,
    schema: &TaskSchema,
    examples: &[Example],
) -> Result<PredictiveReport> {
    let src = select_nearest_source(classifiers, features, target)?;
    predict_with_head(&src.head, target, schema, examples)
}

pub fn largest_source_predict(
    classifiers: &BTreeMap<Cell, CellClassifier>,
    target: &Cell,
    schema: &TaskSchema,
    examples: &[Example],
) -> Result<PredictiveReport> {
    let src = select_largest_source(classifiers, target)?;
    predict_with_head(&src.head, target, schema, examples)
}

/// One head per task, fit on the union of that task's seen train splits.
pub fn joint_multilingual(
    data: &TrainingSet,
    config: &TrainConfig,
) -> Result<BTreeMap<TaskId, HeadParams>> {
    let mut out = BTreeMap::new();
    for (task, schema) in &data.schemas {
        let cells: Vec<_> = data.cells.iter().filter(|c| &c.cell.task == task).collect();
        if cells.is_empty() {
            continue;
        }
        let train: Vec<&Example> = cells.iter().flat_map(|c| c.train.iter()).collect();
        let dev: Vec<&Example> = cells.iter().flat_map(|c| c.dev.iter()).collect();
        let seed = rng::derive_seed(config.seed, "jm-head", &[rng::label_index(task.as_str())]);
        out.insert(
            task.clone(),
            train_head(&train, &dev, schema, config, seed)?,
        );
    }
    Ok(out)
}

pub fn joint_multilingual_predict(
    heads: &BTreeMap<TaskId, HeadParams>,
    target: &Cell,
    schema: &TaskSchema,
    examples: &[Example],
) -> Result<PredictiveReport> {
    let head = heads
        .get(&target.task)
        .ok_or_else(|| Error::NoSource(target.to_string()))?;
    predict_with_head(head, target, schema, examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clf(task: &str, lang: &str, tokens: usize) -> (Cell, CellClassifier) {
        let cell = Cell::new(task, lang);
        (
            cell.clone(),
            CellClassifier {
                cell,
                head: HeadParams::zeros(2, 2),
                train_tokens: tokens,
            },
        )
    }

    fn feats(rows: &[(&str, Vec<f64>)]) -> LangFeatures {
        LangFeatures::new(
            rows.iter()
                .map(|(l, v)| (LangId::from(*l), v.clone()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn largest_source_rules() {
        let mut m: BTreeMap<Cell, CellClassifier> = [
            clf("t", "a", 100),
            clf("t", "b", 200),
            clf("t", "c", 150),
            clf("u", "z", 999),
        ]
        .into();
        let target = Cell::new("t", "x");
        assert_eq!(
            select_largest_source(&m, &target)
                .unwrap()
                .cell
                .lang
                .as_str(),
            "b"
        );
        m.remove(&Cell::new("t", "b"));
        assert_eq!(
            select_largest_source(&m, &target)
                .unwrap()
                .cell
                .lang
                .as_str(),
            "c"
        );
        let tied: BTreeMap<Cell, CellClassifier> = [clf("t", "q", 5), clf("t", "p", 5)].into();
        assert_eq!(
            select_largest_source(&tied, &target)
                .unwrap()
                .cell
                .lang
                .as_str(),
            "p"
        );
        assert!(matches!(
            select_largest_source(&tied, &Cell::new("v", "x")),
            Err(Error::NoSource(_))
        ));
    }

    #[test]
    fn nearest_source_rules() {
        let m: BTreeMap<Cell, CellClassifier> = [clf("t", "a", 1), clf("t", "b", 1)].into();
        let target = Cell::new("t", "x");
        let f = feats(&[
            ("a", vec![0.0, 1.0]),
            ("b", vec![1.0, 3.0_f64.sqrt()]),
            ("x", vec![1.0, 0.0]),
        ]);
        assert_eq!(
            select_nearest_source(&m, &f, &target)
                .unwrap()
                .cell
                .lang
                .as_str(),
            "b"
        );
        assert_eq!(
            select_nearest_source(&m, &f.scaled(3.0), &target)
                .unwrap()
                .cell
                .lang
                .as_str(),
            "b"
        );
        let same = feats(&[
            ("a", vec![0.2, 0.7]),
            ("b", vec![1.0, 0.1]),
            ("x", vec![0.2, 0.7]),
        ]);
        assert_eq!(
            select_nearest_source(&m, &same, &target)
                .unwrap()
                .cell
                .lang
                .as_str(),
            "a"
        );
        assert!(matches!(
            select_nearest_source(&m, &feats(&[("a", vec![1.0])]), &target),
            Err(Error::MissingFeatures(_))
        ));
    }

    #[test]
    fn zero_feature_vector_rejected() {
        let rows = [(LangId::from("a"), vec![0.0, 0.0])].into();
        assert!(LangFeatures::new(rows).is_err());
    }

    #[test]
    fn single_class_head_is_perfect() {
        let schema = TaskSchema::new(TaskId::from("t"), vec!["only".into()]).unwrap();
        let ex: Vec<Example> = (0..6)
            .map(|i| Example {
                id: i,
                embeddings: vec![vec![i as f64, 1.0]],
                gold: Some(vec![0]),
            })
            .collect();
        let refs: Vec<&Example> = ex.iter().collect();
        let cfg = TrainConfig {
            max_steps: 20,
            learning_rate: 0.01,
            ..TrainConfig::desk()
        };
        let head = train_head(&refs, &[], &schema, &cfg, 0).unwrap();
        let r = predict_with_head(&head, &Cell::new("t", "l"), &schema, &ex).unwrap();
        assert_eq!(r.accuracy, Some(1.0));
    }

    #[test]
    fn head_training_is_deterministic_and_learns() {
        let schema = TaskSchema::new(TaskId::from("t"), vec!["neg".into(), "pos".into()]).unwrap();
        let ex: Vec<Example> = (0..60)
            .map(|i| {
                let x = (i as f64 - 30.0) / 10.0;
                Example {
                    id: i,
                    embeddings: vec![vec![x, 1.0]],
                    gold: Some(vec![usize::from(x > 0.0)]),
                }
            })
            .collect();
        let refs: Vec<&Example> = ex.iter().collect();
        let cfg = TrainConfig {
            max_steps: 500,
            learning_rate: 0.05,
            validation_every: 50,
            ..TrainConfig::desk()
        };
        let a = train_head(&refs, &refs, &schema, &cfg, 3).unwrap();
        let b = train_head(&refs, &refs, &schema, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let r = predict_with_head(&a, &Cell::new("t", "l"), &schema, &ex).unwrap();
        assert!(r.accuracy.unwrap() > 0.95);
    }
}
