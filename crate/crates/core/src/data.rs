//! Corpora, the task × language grid, seen/unseen partitioning and splits.
//!
//! Corpus files use a two-column format: one `token<TAB>label` line per
//! token, sentences separated by blank lines. A grid manifest ties corpora
//! to cells:
//!
//! ```text
//! # comment
//! @schema <TAB> task <TAB> schema_path
//! task <TAB> lang <TAB> corpus_path [<TAB> embeddings_path]
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::latents::{LangId, TaskId};
use crate::likelihood::TaskSchema;
use crate::rng;

const PARTITION_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub task: TaskId,
    pub lang: LangId,
}

impl Cell {
    pub fn new(task: impl Into<String>, lang: impl Into<String>) -> Self {
        Self {
            task: TaskId(task.into()),
            lang: LangId(lang.into()),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.task, self.lang)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub cell: Cell,
    pub sentences: Vec<Sentence>,
    pub schema: TaskSchema,
}

impl Corpus {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    /// Re-targets the corpus to a (wider) schema of the same task.
    pub fn with_schema(mut self, schema: TaskSchema) -> Result<Self> {
        for s in &self.sentences {
            for l in &s.labels {
                if schema.index_of(l).is_none() {
                    return Err(Error::UnknownLabel(l.clone()));
                }
            }
        }
        self.schema = schema;
        Ok(self)
    }
}

/// An encoded sentence ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Sentence index within its corpus.
    pub id: usize,
    pub embeddings: Vec<Vec<f64>>,
    /// Gold class indices, when known.
    pub gold: Option<Vec<usize>>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

/// Pairs each sentence of `corpus` with its token embeddings.
pub fn examples_from(corpus: &Corpus, embeddings: Vec<Vec<Vec<f64>>>) -> Result<Vec<Example>> {
    if embeddings.len() != corpus.sentences.len() {
        return Err(Error::DimensionMismatch {
            what: "embedded sentences",
            expected: corpus.sentences.len(),
            got: embeddings.len(),
        });
    }
    corpus
        .sentences
        .iter()
        .zip(embeddings)
        .enumerate()
        .map(|(id, (s, emb))| {
            if emb.len() != s.tokens.len() {
                return Err(Error::DimensionMismatch {
                    what: "embedded tokens",
                    expected: s.tokens.len(),
                    got: emb.len(),
                });
            }
            let gold = s
                .labels
                .iter()
                .map(|l| {
                    corpus
                        .schema
                        .index_of(l)
                        .ok_or_else(|| Error::UnknownLabel(l.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Example {
                id,
                embeddings: emb,
                gold: Some(gold),
            })
        })
        .collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// One label per line; blank lines are ignored.
pub fn read_schema_file(path: &Path, task: TaskId) -> Result<TaskSchema> {
    let text = read_text(path)?;
    let labels: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if labels.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    TaskSchema::new(task, labels)
}

/// Parses the two-column format.
///
/// Without `schema`, the label inventory is collected in first-appearance
/// order; with it, every label must already be listed.
pub fn load_conll(
    path: &Path,
    task: TaskId,
    lang: LangId,
    schema: Option<&TaskSchema>,
) -> Result<Corpus> {
    let text = read_text(path)?;
    let mut sentences = Vec::new();
    let mut current = Sentence {
        tokens: Vec::new(),
        labels: Vec::new(),
    };
    let mut inventory: Vec<String> = Vec::new();
    let mut known: BTreeSet<String> = BTreeSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.tokens.is_empty() {
                sentences.push(std::mem::replace(
                    &mut current,
                    Sentence {
                        tokens: Vec::new(),
                        labels: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let mut fields = line.split('\t');
        let (token, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(l), None) if !t.is_empty() && !l.is_empty() => (t, l),
            (_, None, _) => {
                return Err(Error::parse(
                    path,
                    line_no,
                    "expected `token<TAB>label`, found no tab",
                ))
            }
            _ => {
                return Err(Error::parse(
                    path,
                    line_no,
                    "expected exactly two non-empty tab-separated columns",
                ))
            }
        };
        match schema {
            Some(s) if s.index_of(label).is_none() => {
                return Err(Error::LabelNotInSchema {
                    path: path.to_path_buf(),
                    line: line_no,
                    label: label.to_string(),
                })
            }
            Some(_) => {}
            None => {
                if known.insert(label.to_string()) {
                    inventory.push(label.to_string());
                }
            }
        }
        current.tokens.push(token.to_string());
        current.labels.push(label.to_string());
    }
    if !current.tokens.is_empty() {
        sentences.push(current);
    }
    if sentences.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let schema = match schema {
        Some(s) => s.clone(),
        None => TaskSchema::new(task.clone(), inventory)?,
    };
    Ok(Corpus {
        cell: Cell { task, lang },
        sentences,
        schema,
    })
}

pub fn conll_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    for (i, s) in corpus.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (t, l) in s.tokens.iter().zip(&s.labels) {
            out.push_str(t);
            out.push('\t');
            out.push_str(l);
            out.push('\n');
        }
    }
    out
}

pub fn write_conll(corpus: &Corpus, path: &Path) -> Result<()> {
    fs::write(path, conll_string(corpus)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub cell: Cell,
    pub corpus: PathBuf,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub schemas: BTreeMap<TaskId, PathBuf>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let mut manifest = Manifest::default();
        let mut cells = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields[0] == "@schema" {
                if fields.len() != 3 {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        "expected `@schema<TAB>task<TAB>path`",
                    ));
                }
                manifest
                    .schemas
                    .insert(TaskId::new(fields[1]), resolve(fields[2]));
                continue;
            }
            if !(3..=4).contains(&fields.len()) || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "expected `task<TAB>lang<TAB>corpus[<TAB>embeddings]`",
                ));
            }
            let cell = Cell::new(fields[0], fields[1]);
            if !cells.insert(cell.clone()) {
                return Err(Error::DuplicateId(cell.to_string()));
            }
            manifest.entries.push(ManifestEntry {
                cell,
                corpus: resolve(fields[2]),
                embeddings: fields.get(3).map(|p| resolve(p)),
            });
        }
        if manifest.entries.is_empty() {
            return Err(Error::EmptyFile(path.to_path_buf()));
        }
        Ok(manifest)
    }

    /// Serializes with paths written as given.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (task, p) in &self.schemas {
            out.push_str(&format!("@schema\t{task}\t{}\n", p.display()));
        }
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}",
                e.cell.task,
                e.cell.lang,
                e.corpus.display()
            ));
            if let Some(emb) = &e.embeddings {
                out.push_str(&format!("\t{}", emb.display()));
            }
            out.push('\n');
        }
        out
    }
}

/// All corpora of a grid, with one label schema per task.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub corpora: BTreeMap<Cell, Corpus>,
    pub schemas: BTreeMap<TaskId, TaskSchema>,
    pub embeddings: BTreeMap<Cell, PathBuf>,
}

impl Grid {
    /// Loads every corpus in the manifest.
    ///
    /// Tasks without a schema file get the union of their corpora's labels,
    /// in manifest order, so every language of a task shares one label map.
    pub fn load(manifest: &Manifest) -> Result<Self> {
        let mut fixed = BTreeMap::new();
        for (task, p) in &manifest.schemas {
            fixed.insert(task.clone(), read_schema_file(p, task.clone())?);
        }
        let mut loaded = Vec::new();
        let mut unions: BTreeMap<TaskId, Vec<String>> = BTreeMap::new();
        for e in &manifest.entries {
            let corpus = load_conll(
                &e.corpus,
                e.cell.task.clone(),
                e.cell.lang.clone(),
                fixed.get(&e.cell.task),
            )?;
            let union = unions.entry(e.cell.task.clone()).or_default();
            for l in corpus.schema.labels() {
                if !union.contains(l) {
                    union.push(l.clone());
                }
            }
            loaded.push(corpus);
        }
        let mut schemas = fixed;
        for (task, labels) in unions {
            if !schemas.contains_key(&task) {
                schemas.insert(task.clone(), TaskSchema::new(task, labels)?);
            }
        }
        let mut corpora = BTreeMap::new();
        for c in loaded {
            let schema = schemas[&c.cell.task].clone();
            corpora.insert(c.cell.clone(), c.with_schema(schema)?);
        }
        let embeddings = manifest
            .entries
            .iter()
            .filter_map(|e| e.embeddings.clone().map(|p| (e.cell.clone(), p)))
            .collect();
        Ok(Self {
            corpora,
            schemas,
            embeddings,
        })
    }

    pub fn cells(&self) -> Vec<Cell> {
        self.corpora.keys().cloned().collect()
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        self.schemas.keys().cloned().collect()
    }

    pub fn langs(&self) -> Vec<LangId> {
        self.corpora
            .keys()
            .map(|c| c.lang.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn max_classes(&self) -> usize {
        self.schemas
            .values()
            .map(TaskSchema::class_count)
            .max()
            .unwrap_or(0)
    }
}

/// Sentence indices of one seen cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split proportions in percent; test takes whatever train and dev leave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatios {
    pub train_pct: usize,
    pub dev_pct: usize,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train_pct: 80,
            dev_pct: 10,
        }
    }
}

/// Shuffles `0..n` by seed and cuts it at `floor(train)`, `floor(dev)`, remainder.
pub fn split_cell(n_sentences: usize, ratios: SplitRatios, seed: u64) -> Result<Split> {
    if n_sentences < 10 {
        return Err(Error::TooFewSentences(n_sentences));
    }
    if ratios.train_pct + ratios.dev_pct > 100 {
        return Err(Error::InvalidArgument("split ratios exceed 100%".into()));
    }
    let mut idx: Vec<usize> = (0..n_sentences).collect();
    idx.shuffle(&mut rng::stream(seed, "split", &[]));
    let n_train = n_sentences * ratios.train_pct / 100;
    let n_dev = n_sentences * ratios.dev_pct / 100;
    let test = idx.split_off(n_train + n_dev);
    let dev = idx.split_off(n_train);
    Ok(Split {
        train: idx,
        dev,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPartition {
    pub grid: Vec<Cell>,
    pub seen: BTreeSet<Cell>,
    pub unseen: BTreeSet<Cell>,
    /// Per seen cell. Unseen cells are evaluated on their whole corpus.
    pub splits: BTreeMap<Cell, Split>,
}

/// Unseen cells lacking a seen cell with the same task (other language) or
/// the same language (other task).
pub fn constraint_violations(seen: &BTreeSet<Cell>, unseen: &BTreeSet<Cell>) -> Vec<Cell> {
    unseen
        .iter()
        .filter(|u| {
            let same_task = seen.iter().any(|s| s.task == u.task && s.lang != u.lang);
            let same_lang = seen.iter().any(|s| s.lang == u.lang && s.task != u.task);
            !(same_task && same_lang)
        })
        .cloned()
        .collect()
}

/// Randomly holds out about `hold_out_fraction` of the grid as unseen such
/// that every unseen cell's task and language are both observed elsewhere.
pub fn partition(grid: &[Cell], hold_out_fraction: f64, seed: u64) -> Result<CellPartition> {
    if !(hold_out_fraction > 0.0 && hold_out_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "hold-out fraction {hold_out_fraction} must lie in (0, 1)"
        )));
    }
    let cells: Vec<Cell> = grid
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if cells.len() != grid.len() {
        return Err(Error::InvalidArgument("grid lists a cell twice".into()));
    }
    let n_unseen = ((hold_out_fraction * cells.len() as f64).round() as usize)
        .clamp(1, cells.len().saturating_sub(1).max(1));

    let mut rng = rng::stream(seed, "partition", &[]);
    let mut order = cells.clone();
    let mut last_violations = Vec::new();
    for _ in 0..PARTITION_ATTEMPTS {
        order.shuffle(&mut rng);
        let unseen: BTreeSet<Cell> = order[..n_unseen].iter().cloned().collect();
        let seen: BTreeSet<Cell> = order[n_unseen..].iter().cloned().collect();
        let violations = constraint_violations(&seen, &unseen);
        if violations.is_empty() {
            return Ok(CellPartition {
                grid: cells,
                seen,
                unseen,
                splits: BTreeMap::new(),
            });
        }
        last_violations = violations;
    }
    Err(Error::Infeasible {
        cells: last_violations.iter().map(Cell::to_string).collect(),
    })
}

impl CellPartition {
    /// Splits every seen cell 80/10/10 with a per-cell seed stream.
    pub fn assign_splits(&mut self, sizes: &BTreeMap<Cell, usize>, seed: u64) -> Result<()> {
        self.splits.clear();
        for cell in &self.seen {
            let n = *sizes.get(cell).ok_or_else(|| Error::UnknownCell {
                task: cell.task.0.clone(),
                lang: cell.lang.0.clone(),
            })?;
            let cell_seed = rng::derive_seed(
                seed,
                "cell-split",
                &[
                    rng::label_index(cell.task.as_str()),
                    rng::label_index(cell.lang.as_str()),
                ],
            );
            self.splits.insert(
                cell.clone(),
                split_cell(n, SplitRatios::default(), cell_seed)?,
            );
        }
        Ok(())
    }

    /// `task<TAB>lang<TAB>seen|unseen`, one cell per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.grid {
            let status = if self.seen.contains(c) {
                "seen"
            } else {
                "unseen"
            };
            out.push_str(&format!("{}\t{}\t{status}\n", c.task, c.lang));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut p = CellPartition {
            grid: Vec::new(),
            seen: BTreeSet::new(),
            unseen: BTreeSet::new(),
            splits: BTreeMap::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    "expected `task<TAB>lang<TAB>status`",
                ));
            }
            let cell = Cell::new(f[0], f[1]);
            match f[2] {
                "seen" => p.seen.insert(cell.clone()),
                "unseen" => p.unseen.insert(cell.clone()),
                other => {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        format!("unknown status `{other}`"),
                    ))
                }
            };
            p.grid.push(cell);
        }
        p.grid.sort();
        let violations = constraint_violations(&p.seen, &p.unseen);
        if !violations.is_empty() {
            return Err(Error::Infeasible {
                cells: violations.iter().map(Cell::to_string).collect(),
            });
        }
        Ok(p)
    }
}
