//! Synthetic grids drawn from the model's own generative story.
//!
//! Task and language latents come from `N(0, I)`, a fixed random
//! hypernetwork maps each pair to a head distribution, one head θ* is drawn
//! per cell, and token labels are sampled from that head's softmax over
//! Gaussian token embeddings. The true heads give an oracle accuracy.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::baselines::LangFeatures;
use crate::checkpoint::{join_list, split_list, Container};
use crate::data::{write_conll, Cell, Corpus, Example, Manifest, ManifestEntry, Sentence};
use crate::encoder::write_precomputed;
use crate::error::{Error, Result};
use crate::hypernet::{reshape_theta, sample_theta, HeadParams, HyperDims, HyperNet};
use crate::latents::{LangId, TaskId};
use crate::likelihood::{class_distribution, TaskSchema};
use crate::rng::{self, GaussianNoise, NoiseSource};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_tasks: usize,
    pub n_langs: usize,
    pub h: usize,
    pub e: usize,
    /// One entry per task.
    pub class_counts: Vec<usize>,
    pub examples_per_cell: usize,
    pub sentence_length: usize,
    pub seed: u64,
    /// Shared widths of the generator network.
    pub generator_hidden: Vec<usize>,
    /// Multiplies the generator's mean-head outputs; larger means more
    /// peaked label distributions.
    pub head_scale: f64,
    /// Standard deviation of the noise added to language latents to form
    /// the language feature vectors.
    pub feature_noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_tasks: 3,
            n_langs: 6,
            h: 8,
            e: 16,
            class_counts: vec![3, 4, 5],
            examples_per_cell: 500,
            sentence_length: 1,
            seed: 0,
            generator_hidden: vec![32],
            head_scale: 1.0,
            feature_noise_std: 0.1_f64.sqrt(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0
            || self.n_langs == 0
            || self.h == 0
            || self.e == 0
            || self.examples_per_cell == 0
            || self.sentence_length == 0
        {
            return Err(Error::InvalidArgument(
                "synthetic grid counts must all be >= 1".into(),
            ));
        }
        if self.class_counts.len() != self.n_tasks || self.class_counts.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "need one positive class count per task ({} tasks, got {:?})",
                self.n_tasks, self.class_counts
            )));
        }
        if !(self.head_scale.is_finite() && self.feature_noise_std >= 0.0) {
            return Err(Error::InvalidArgument(
                "bad head_scale or feature noise".into(),
            ));
        }
        Ok(())
    }

    pub fn task_ids(&self) -> Vec<TaskId> {
        (0..self.n_tasks)
            .map(|i| TaskId(format!("task{i}")))
            .collect()
    }

    pub fn lang_ids(&self) -> Vec<LangId> {
        (0..self.n_langs)
            .map(|j| LangId(format!("lang{j}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub task_latents: BTreeMap<TaskId, Vec<f64>>,
    pub lang_latents: BTreeMap<LangId, Vec<f64>>,
    pub generator: HyperNet,
    pub heads: BTreeMap<Cell, HeadParams>,
    pub schemas: BTreeMap<TaskId, TaskSchema>,
    pub corpora: BTreeMap<Cell, Corpus>,
    /// Per cell, per sentence, per token.
    pub embeddings: BTreeMap<Cell, Vec<Vec<Vec<f64>>>>,
    pub lang_features: LangFeatures,
}

fn std_normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn generate(config: &SynthConfig) -> Result<GroundTruth> {
    config.validate()?;
    let seed = config.seed;
    let tasks = config.task_ids();
    let langs = config.lang_ids();
    let c_max = *config.class_counts.iter().max().expect("n_tasks >= 1");

    let mut latent_rng = rng::stream(seed, "synth-latents", &[]);
    let task_latents: BTreeMap<TaskId, Vec<f64>> = tasks
        .iter()
        .map(|t| (t.clone(), std_normal_vec(&mut latent_rng, config.h)))
        .collect();
    let lang_latents: BTreeMap<LangId, Vec<f64>> = langs
        .iter()
        .map(|l| (l.clone(), std_normal_vec(&mut latent_rng, config.h)))
        .collect();

    let dims = HyperDims {
        h: config.h,
        e: config.e,
        c: c_max,
    };
    let mut generator = HyperNet::init(
        dims,
        &config.generator_hidden,
        rng::derive_seed(seed, "synth-generator", &[]),
    )?;
    generator
        .psi_head
        .weight
        .as_mut_slice()
        .iter_mut()
        .chain(generator.psi_head.bias.iter_mut())
        .for_each(|w| *w *= config.head_scale);

    let schemas: BTreeMap<TaskId, TaskSchema> = tasks
        .iter()
        .zip(&config.class_counts)
        .map(|(t, &n)| {
            let labels = (0..n).map(|k| format!("c{k}")).collect();
            Ok((t.clone(), TaskSchema::new(t.clone(), labels)?))
        })
        .collect::<Result<_>>()?;

    let mut heads = BTreeMap::new();
    let mut corpora = BTreeMap::new();
    let mut embeddings = BTreeMap::new();
    for (ti, task) in tasks.iter().enumerate() {
        for (li, lang) in langs.iter().enumerate() {
            let cell = Cell {
                task: task.clone(),
                lang: lang.clone(),
            };
            let idx = [ti as u64, li as u64];
            let (mean, var) = generator.forward(&task_latents[task], &lang_latents[lang])?;
            let noise = GaussianNoise::new(rng::stream(seed, "synth-theta", &idx)).draw(dims.d());
            let head = reshape_theta(&sample_theta(&mean, &var, &noise), dims.e, dims.c)?;

            let schema = &schemas[task];
            let mut data_rng = rng::stream(seed, "synth-data", &idx);
            let mut sentences = Vec::with_capacity(config.examples_per_cell);
            let mut cell_emb = Vec::with_capacity(config.examples_per_cell);
            for s in 0..config.examples_per_cell {
                let mut tokens = Vec::with_capacity(config.sentence_length);
                let mut labels = Vec::with_capacity(config.sentence_length);
                let mut sent_emb = Vec::with_capacity(config.sentence_length);
                for p in 0..config.sentence_length {
                    let x = std_normal_vec(&mut data_rng, config.e);
                    let dist = class_distribution(&head, &x, schema)?;
                    let y = sample_categorical(&mut data_rng, &dist.probs);
                    tokens.push(format!("tok_{task}-{lang}_{s}_{p}"));
                    labels.push(schema.label(y).to_string());
                    sent_emb.push(x);
                }
                sentences.push(Sentence { tokens, labels });
                cell_emb.push(sent_emb);
            }
            corpora.insert(
                cell.clone(),
                Corpus {
                    cell: cell.clone(),
                    sentences,
                    schema: schema.clone(),
                },
            );
            embeddings.insert(cell.clone(), cell_emb);
            heads.insert(cell, head);
        }
    }

    let mut feat_rng = rng::stream(seed, "synth-features", &[]);
    let noise = Normal::new(0.0, config.feature_noise_std).expect("std checked");
    let lang_features = LangFeatures::new(
        lang_latents
            .iter()
            .map(|(l, v)| {
                let f = v.iter().map(|x| x + noise.sample(&mut feat_rng)).collect();
                (l.clone(), f)
            })
            .collect(),
    )?;

    Ok(GroundTruth {
        config: config.clone(),
        task_latents,
        lang_latents,
        generator,
        heads,
        schemas,
        corpora,
        embeddings,
        lang_features,
    })
}

fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Paths written by [`GroundTruth::write`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub manifest: PathBuf,
    pub lang_features: PathBuf,
    pub truth: PathBuf,
}

impl GroundTruth {
    pub fn cells(&self) -> Vec<Cell> {
        self.corpora.keys().cloned().collect()
    }

    /// Encoded examples of one cell, in sentence order.
    pub fn examples(&self, cell: &Cell) -> Result<Vec<Example>> {
        let corpus = self.corpora.get(cell).ok_or_else(|| unknown(cell))?;
        crate::data::examples_from(corpus, self.embeddings[cell].clone())
    }

    /// Writes corpora, embeddings, schemas, a manifest, language features
    /// and the truth container under `dir`.
    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        for sub in ["corpora", "embeddings", "schemas"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let mut manifest = Manifest::default();
        for (task, schema) in &self.schemas {
            let rel = PathBuf::from("schemas").join(format!("{task}.txt"));
            let p = dir.join(&rel);
            fs::write(&p, schema.labels().join("\n") + "\n").map_err(|e| Error::io(&p, e))?;
            manifest.schemas.insert(task.clone(), rel);
        }
        for (cell, corpus) in &self.corpora {
            let stem = format!("{}_{}", cell.task, cell.lang);
            let corpus_rel = PathBuf::from("corpora").join(format!("{stem}.tsv"));
            let emb_rel = PathBuf::from("embeddings").join(format!("{stem}.emb"));
            write_conll(corpus, &dir.join(&corpus_rel))?;
            let rows: Vec<(usize, usize, Vec<f64>)> = self.embeddings[cell]
                .iter()
                .enumerate()
                .flat_map(|(s, sent)| sent.iter().enumerate().map(move |(p, v)| (s, p, v.clone())))
                .collect();
            write_precomputed(&dir.join(&emb_rel), self.config.e, &rows)?;
            manifest.entries.push(ManifestEntry {
                cell: cell.clone(),
                corpus: corpus_rel,
                embeddings: Some(emb_rel),
            });
        }
        let files = SynthFiles {
            manifest: dir.join("grid.tsv"),
            lang_features: dir.join("lang_features.txt"),
            truth: dir.join("truth.bin"),
        };
        fs::write(&files.manifest, manifest.to_text())
            .map_err(|e| Error::io(&files.manifest, e))?;
        self.lang_features.write(&files.lang_features)?;
        self.truth_container().write(&files.truth)?;
        Ok(files)
    }

    fn truth_container(&self) -> Container {
        let mut c = Container::new();
        let tasks: Vec<&str> = self.task_latents.keys().map(|t| t.as_str()).collect();
        let langs: Vec<&str> = self.lang_latents.keys().map(|l| l.as_str()).collect();
        c.set("kind", "synthetic-truth");
        c.set("tasks", join_list(&tasks));
        c.set("langs", join_list(&langs));
        c.set("h", self.config.h);
        c.set("e", self.config.e);
        c.set("seed", self.config.seed);
        for (i, (task, schema)) in self.schemas.iter().enumerate() {
            c.set(format!("schema.{i}.task"), task);
            c.set(format!("schema.{i}.labels"), join_list(schema.labels()));
        }
        for (i, v) in self.task_latents.values().enumerate() {
            c.push_array(format!("task_latent.{i}"), vec![v.len()], v.clone());
        }
        for (j, v) in self.lang_latents.values().enumerate() {
            c.push_array(format!("lang_latent.{j}"), vec![v.len()], v.clone());
        }
        for (ti, task) in self.task_latents.keys().enumerate() {
            for (li, lang) in self.lang_latents.keys().enumerate() {
                let head = &self.heads[&Cell {
                    task: task.clone(),
                    lang: lang.clone(),
                }];
                c.push_array(
                    format!("head.{ti}.{li}"),
                    vec![head.embedding_dim() + 1, head.class_dim()],
                    head.flatten(),
                );
            }
        }
        c
    }
}

fn unknown(cell: &Cell) -> Error {
    Error::UnknownCell {
        task: cell.task.0.clone(),
        lang: cell.lang.0.clone(),
    }
}

/// True heads and label maps, as read back from a truth file.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthHeads {
    pub heads: BTreeMap<Cell, HeadParams>,
    pub schemas: BTreeMap<TaskId, TaskSchema>,
}

impl From<&GroundTruth> for TruthHeads {
    fn from(g: &GroundTruth) -> Self {
        Self {
            heads: g.heads.clone(),
            schemas: g.schemas.clone(),
        }
    }
}

impl TruthHeads {
    pub fn read(path: &Path) -> Result<Self> {
        let c = Container::read(path)?;
        let tasks = split_list(c.get("tasks")?);
        let langs = split_list(c.get("langs")?);
        let e: usize = c.parse("e")?;
        let mut heads = BTreeMap::new();
        for (ti, task) in tasks.iter().enumerate() {
            for (li, lang) in langs.iter().enumerate() {
                let a = c.array(&format!("head.{ti}.{li}"))?;
                let classes = a.data.len() / (e + 1);
                heads.insert(
                    Cell::new(task.as_str(), lang.as_str()),
                    reshape_theta(&a.data, e, classes)?,
                );
            }
        }
        Ok(Self {
            heads,
            schemas: crate::train::read_schemas(&c)?,
        })
    }
}

/// Accuracy of the true head's argmax on `examples`.
pub fn oracle_score(truth: &TruthHeads, cell: &Cell, examples: &[Example]) -> Result<f64> {
    let head = truth.heads.get(cell).ok_or_else(|| unknown(cell))?;
    let schema = truth
        .schemas
        .get(&cell.task)
        .ok_or_else(|| Error::UnknownTask(cell.task.0.clone()))?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let gold = ex.gold.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("example {} has no gold labels", ex.id))
        })?;
        for (x, &y) in ex.embeddings.iter().zip(gold) {
            if class_distribution(head, x, schema)?.argmax() == y {
                correct += 1;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidArgument("no tokens to score".into()));
    }
    Ok(correct as f64 / total as f64)
}
