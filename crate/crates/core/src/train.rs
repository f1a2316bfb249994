//! Stochastic variational training over the seen cells of a grid.
//!
//! Every source of randomness in a step is a fresh stream keyed by the step
//! index (cell choice, ε, ζ, θ noise) or by `(cell, epoch)` (batch order),
//! so the complete sampler state is just the step counter plus one epoch
//! cursor per cell. That makes checkpoints resume bit-identically.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::checkpoint::{join_list, split_list, Container};
use crate::data::{examples_from, Cell, CellPartition, Example, Grid};
use crate::elbo::{value_and_gradient, LabeledToken, NoiseSources, StepNoise};
use crate::encoder::Embedder;
use crate::error::{Error, Result};
use crate::hypernet::{HyperDims, HyperNet};
use crate::latents::{init_store, Family, LangId, TaskId};
use crate::likelihood::{log_softmax, logits, TaskSchema};
use crate::model::Model;
use crate::rng::{self, GaussianNoise};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Monte Carlo samples per step.
    pub mc_samples: usize,
    pub patience: usize,
    pub validation_every: u64,
    pub max_steps: u64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Hold low-rank factors at zero for the whole run.
    pub freeze_factor: bool,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-6,
            batch_size: 8,
            mc_samples: 3,
            patience: 10,
            validation_every: 2500,
            max_steps: 1_000_000,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            freeze_factor: false,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    /// Settings sized for small synthetic grids.
    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            validation_every: 200,
            max_steps: 20_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.mc_samples == 0 || self.patience == 0 {
            return bad("batch_size, mc_samples and patience must be >= 1");
        }
        if self.validation_every == 0 {
            return bad("validation_every must be >= 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm must be positive");
            }
        }
        Ok(())
    }

    fn header(&self, c: &mut Container) {
        c.set("config.learning_rate", format!("{:?}", self.learning_rate));
        c.set("config.batch_size", self.batch_size);
        c.set("config.mc_samples", self.mc_samples);
        c.set("config.patience", self.patience);
        c.set("config.validation_every", self.validation_every);
        c.set("config.max_steps", self.max_steps);
        c.set("config.seed", self.seed);
        c.set("config.adam_beta1", format!("{:?}", self.adam_beta1));
        c.set("config.adam_beta2", format!("{:?}", self.adam_beta2));
        c.set("config.adam_eps", format!("{:?}", self.adam_eps));
        c.set("config.freeze_factor", self.freeze_factor);
        c.set(
            "config.clip_norm",
            self.clip_norm
                .map_or("none".to_string(), |v| format!("{v:?}")),
        );
    }

    fn from_header(c: &Container) -> Result<Self> {
        let clip = c.get("config.clip_norm")?;
        Ok(Self {
            learning_rate: c.parse("config.learning_rate")?,
            batch_size: c.parse("config.batch_size")?,
            mc_samples: c.parse("config.mc_samples")?,
            patience: c.parse("config.patience")?,
            validation_every: c.parse("config.validation_every")?,
            max_steps: c.parse("config.max_steps")?,
            seed: c.parse("config.seed")?,
            adam_beta1: c.parse("config.adam_beta1")?,
            adam_beta2: c.parse("config.adam_beta2")?,
            adam_eps: c.parse("config.adam_eps")?,
            freeze_factor: c.parse("config.freeze_factor")?,
            clip_norm: if clip == "none" {
                None
            } else {
                Some(c.parse("config.clip_norm")?)
            },
        })
    }
}

/// Per-coordinate Adam state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdamScalar {
    pub m: f64,
    pub v: f64,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn from_config(c: &TrainConfig) -> Self {
        Self {
            lr: c.learning_rate,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            eps: c.adam_eps,
        }
    }
}

#[inline]
fn adam_core(param: f64, grad: f64, m: &mut f64, v: &mut f64, t: u64, hp: AdamHyper) -> f64 {
    *m = hp.beta1 * *m + (1.0 - hp.beta1) * grad;
    *v = hp.beta2 * *v + (1.0 - hp.beta2) * grad * grad;
    let m_hat = *m / (1.0 - hp.beta1.powf(t as f64));
    let v_hat = *v / (1.0 - hp.beta2.powf(t as f64));
    param - hp.lr * m_hat / (v_hat.sqrt() + hp.eps)
}

/// One Adam step on a single coordinate; `state.t` counts completed steps.
pub fn adam_update(param: f64, grad: f64, state: AdamScalar, hp: AdamHyper) -> (f64, AdamScalar) {
    let mut s = state;
    s.t += 1;
    let p = adam_core(param, grad, &mut s.m, &mut s.v, s.t, hp);
    (p, s)
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Updates every coordinate whose `frozen` flag is false.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], frozen: &[bool], hp: AdamHyper) {
        self.t += 1;
        for i in 0..params.len() {
            if frozen[i] {
                continue;
            }
            params[i] = adam_core(
                params[i],
                grads[i],
                &mut self.m[i],
                &mut self.v[i],
                self.t,
                hp,
            );
        }
    }
}

/// Training and development data of one seen cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainCell {
    pub cell: Cell,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub schemas: BTreeMap<TaskId, TaskSchema>,
    /// Sorted by cell.
    pub cells: Vec<TrainCell>,
}

impl TrainingSet {
    pub fn new(schemas: BTreeMap<TaskId, TaskSchema>, mut cells: Vec<TrainCell>) -> Result<Self> {
        cells.sort_by(|a, b| a.cell.cmp(&b.cell));
        if cells.iter().all(|c| c.train.is_empty()) {
            return Err(Error::EmptyTrainingData);
        }
        for c in &cells {
            if !schemas.contains_key(&c.cell.task) {
                return Err(Error::UnknownTask(c.cell.task.0.clone()));
            }
            for ex in c.train.iter().chain(&c.dev) {
                if ex.gold.is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "example {} of {} has no gold labels",
                        ex.id, c.cell
                    )));
                }
            }
        }
        cells.retain(|c| !c.train.is_empty());
        Ok(Self { schemas, cells })
    }

    /// Encodes the seen cells of `grid` and applies the partition's splits.
    pub fn from_grid(grid: &Grid, partition: &CellPartition, embedder: &Embedder) -> Result<Self> {
        let mut cells = Vec::new();
        for cell in &partition.seen {
            let corpus = grid.corpora.get(cell).ok_or_else(|| Error::UnknownCell {
                task: cell.task.0.clone(),
                lang: cell.lang.0.clone(),
            })?;
            let split = partition
                .splits
                .get(cell)
                .ok_or_else(|| Error::InvalidArgument(format!("seen cell {cell} has no split")))?;
            let examples = examples_from(corpus, embedder.embed(corpus)?)?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect();
            cells.push(TrainCell {
                cell: cell.clone(),
                train: pick(&split.train),
                dev: pick(&split.dev),
            });
        }
        Self::new(grid.schemas.clone(), cells)
    }

    pub fn train_sentences(&self) -> usize {
        self.cells.iter().map(|c| c.train.len()).sum()
    }

    /// `1 / |K|` with `|K| = ceil(train sentences / batch_size)`.
    pub fn kl_weight(&self, batch_size: usize) -> f64 {
        1.0 / self.train_sentences().div_ceil(batch_size) as f64
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        self.schemas.keys().cloned().collect()
    }
}

/// Mean per-token log-likelihood of the dev splits under the plug-in heads.
///
/// `None` when no seen cell has development tokens.
pub fn dev_objective(model: &Model, data: &TrainingSet) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut count = 0usize;
    for c in &data.cells {
        if c.dev.is_empty() {
            continue;
        }
        let schema = &data.schemas[&c.cell.task];
        let head = model.mean_head(&c.cell.task, &c.cell.lang)?;
        for ex in &c.dev {
            let gold = ex.gold.as_ref().expect("checked on construction");
            for (x, &y) in ex.embeddings.iter().zip(gold) {
                total += log_softmax(&logits(&head, x, schema.class_count()))[y];
                count += 1;
            }
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub task: TaskId,
    pub lang: LangId,
    pub loss: f64,
    pub neg_log_lik: f64,
    pub kl_weighted: f64,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.step, self.task, self.lang, self.loss, self.neg_log_lik, self.kl_weighted
        )
    }
}

/// Position in a cell's current epoch permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cursor {
    pub epoch: u64,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    /// Completed steps.
    pub step: u64,
    pub cursors: Vec<Cursor>,
    pub best_model: Model,
    pub best_dev: Option<f64>,
    pub best_step: u64,
    pub bad_validations: usize,
    pub stopped: bool,
}

/// Model architecture settings needed to build a fresh model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub h: usize,
    pub e: usize,
    pub hidden: Vec<usize>,
}

/// Fresh model over the given ids with `c` = the widest schema.
pub fn init_model(
    spec: &ModelSpec,
    tasks: &[TaskId],
    langs: &[LangId],
    max_classes: usize,
    seed: u64,
) -> Result<Model> {
    let store = init_store(
        tasks,
        langs,
        spec.family,
        spec.h,
        rng::derive_seed(seed, "init-latents", &[]),
    )?;
    let dims = HyperDims {
        h: spec.h,
        e: spec.e,
        c: max_classes,
    };
    let net = HyperNet::init(dims, &spec.hidden, rng::derive_seed(seed, "init-net", &[]))?;
    Model::new(store, net)
}

/// Index of the cell trained at step `step` (0-based), uniform over `n_cells`.
pub fn sample_cell(seed: u64, step: u64, n_cells: usize) -> usize {
    rng::stream(seed, "cell", &[step]).random_range(0..n_cells)
}

pub struct Trainer<'a> {
    data: &'a TrainingSet,
    config: TrainConfig,
    state: TrainState,
    frozen: Vec<bool>,
    kl_weight: f64,
}

impl<'a> Trainer<'a> {
    /// Starts a run; the initial model is validated as step 0.
    pub fn new(data: &'a TrainingSet, mut model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        check_model_covers(&model, data)?;
        if config.freeze_factor {
            model.zero_factors();
        }
        let best_dev = dev_objective(&model, data)?;
        let n = model.param_count();
        let state = TrainState {
            best_model: model.clone(),
            model,
            adam: Adam::new(n),
            step: 0,
            cursors: vec![Cursor::default(); data.cells.len()],
            best_dev,
            best_step: 0,
            bad_validations: 0,
            stopped: false,
        };
        Ok(Self::assemble(data, config, state))
    }

    fn assemble(data: &'a TrainingSet, config: TrainConfig, state: TrainState) -> Self {
        let frozen = frozen_mask(&state.model, config.freeze_factor);
        let kl_weight = data.kl_weight(config.batch_size);
        Self {
            data,
            config,
            state,
            frozen,
            kl_weight,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn finished(&self) -> bool {
        self.state.stopped || self.state.step >= self.config.max_steps
    }

    /// Raises the step limit, e.g. to continue a resumed run further.
    pub fn set_max_steps(&mut self, max_steps: u64) {
        self.config.max_steps = max_steps;
    }

    fn batch_indices(&mut self, cell_idx: usize) -> Vec<usize> {
        let n = self.data.cells[cell_idx].train.len();
        let cursor = &mut self.state.cursors[cell_idx];
        if cursor.pos >= n {
            cursor.epoch += 1;
            cursor.pos = 0;
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::stream(
            self.config.seed,
            "epoch",
            &[cell_idx as u64, cursor.epoch],
        ));
        let end = (cursor.pos + self.config.batch_size).min(n);
        let out = perm[cursor.pos..end].to_vec();
        cursor.pos = end;
        out
    }

    /// Noise sources for step `s` (0-based).
    fn noise_for(
        &self,
        s: u64,
    ) -> (
        impl crate::rng::NoiseSource,
        impl crate::rng::NoiseSource,
        impl crate::rng::NoiseSource,
    ) {
        let seed = self.config.seed;
        (
            GaussianNoise::new(rng::stream(seed, "eps", &[s])),
            GaussianNoise::new(rng::stream(seed, "zeta", &[s])),
            GaussianNoise::new(rng::stream(seed, "theta", &[s])),
        )
    }

    /// Runs one SVI step, then validates if due.
    pub fn step(&mut self) -> Result<LogRecord> {
        let s = self.state.step;
        let cell_idx = sample_cell(self.config.seed, s, self.data.cells.len());
        let batch_idx = self.batch_indices(cell_idx);
        let tc = &self.data.cells[cell_idx];
        let schema = &self.data.schemas[&tc.cell.task];
        let mut batch = Vec::new();
        for &i in &batch_idx {
            let ex = &tc.train[i];
            let gold = ex.gold.as_ref().expect("checked on construction");
            for (x, &y) in ex.embeddings.iter().zip(gold) {
                batch.push(LabeledToken {
                    embedding: x,
                    gold: y,
                });
            }
        }

        let (mut eps, mut zeta, mut theta) = self.noise_for(s);
        let mut sources = NoiseSources {
            latent: &mut eps,
            factor: &mut zeta,
            theta: &mut theta,
        };
        let noise = StepNoise::draw(
            &self.state.model,
            &tc.cell.task,
            &tc.cell.lang,
            self.config.mc_samples,
            &mut sources,
        )?;
        let (obj, grad) = value_and_gradient(
            &self.state.model,
            &batch,
            schema,
            &tc.cell.task,
            &tc.cell.lang,
            self.kl_weight,
            &noise,
        )?;
        if !obj.value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: s + 1,
                task: tc.cell.task.0.clone(),
                lang: tc.cell.lang.0.clone(),
                loss: obj.value,
            });
        }
        let mut g = grad.flatten();
        if let Some(cap) = self.config.clip_norm {
            let norm = g
                .iter()
                .zip(&self.frozen)
                .filter(|(_, &f)| !f)
                .map(|(x, _)| x * x)
                .sum::<f64>()
                .sqrt();
            if norm > cap {
                let scale = cap / norm;
                g.iter_mut().for_each(|x| *x *= scale);
            }
        }
        let mut params = self.state.model.flatten();
        self.state.adam.step(
            &mut params,
            &g,
            &self.frozen,
            AdamHyper::from_config(&self.config),
        );
        self.state.model.load_flat(&params)?;
        self.state.step = s + 1;

        let record = LogRecord {
            step: s + 1,
            task: tc.cell.task.clone(),
            lang: tc.cell.lang.clone(),
            loss: obj.value,
            neg_log_lik: obj.neg_log_lik,
            kl_weighted: obj.kl_weighted,
        };
        if self.state.step % self.config.validation_every == 0 {
            self.validate()?;
        }
        Ok(record)
    }

    fn validate(&mut self) -> Result<()> {
        let Some(dev) = dev_objective(&self.state.model, self.data)? else {
            // Without dev data the latest model is the one kept.
            self.state.best_model = self.state.model.clone();
            self.state.best_step = self.state.step;
            return Ok(());
        };
        if self.state.best_dev.is_none_or(|b| dev > b) {
            self.state.best_dev = Some(dev);
            self.state.best_model = self.state.model.clone();
            self.state.best_step = self.state.step;
            self.state.bad_validations = 0;
        } else {
            self.state.bad_validations += 1;
            if self.state.bad_validations >= self.config.patience {
                self.state.stopped = true;
            }
        }
        Ok(())
    }

    /// Steps until early stopping or `max_steps`, passing each record to `log`.
    pub fn run(&mut self, mut log: impl FnMut(&LogRecord)) -> Result<()> {
        while !self.finished() {
            let r = self.step()?;
            log(&r);
        }
        Ok(())
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let st = &self.state;
        write_model_header(&mut c, &st.model, &self.data.schemas);
        self.config.header(&mut c);
        c.set("step", st.step);
        c.set("adam_t", st.adam.t);
        c.set(
            "best_dev",
            st.best_dev.map_or("none".to_string(), |v| format!("{v:?}")),
        );
        c.set("best_step", st.best_step);
        c.set("bad_validations", st.bad_validations);
        c.set("stopped", st.stopped);
        c.set("cells", self.data.cells.len());
        for (i, tc) in self.data.cells.iter().enumerate() {
            c.set(
                format!("cell.{i}"),
                join_list(&[tc.cell.task.as_str(), tc.cell.lang.as_str()]),
            );
        }
        let cur: Vec<f64> = st
            .cursors
            .iter()
            .flat_map(|k| [k.epoch as f64, k.pos as f64])
            .collect();
        c.push_array("cursors", vec![st.cursors.len(), 2], cur);
        push_model(&mut c, "best", &st.best_model);
        push_model(&mut c, "model", &st.model);
        let n = st.adam.m.len();
        c.push_array("adam.m", vec![n], st.adam.m.clone());
        c.push_array("adam.v", vec![n], st.adam.v.clone());
        c
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    /// Restores a run from [`Trainer::to_container`] output.
    pub fn from_container(data: &'a TrainingSet, c: &Container) -> Result<Self> {
        let config = TrainConfig::from_header(c)?;
        config.validate()?;
        let n_cells: usize = c.parse("cells")?;
        if n_cells != data.cells.len() {
            return Err(Error::CheckpointFormat(format!(
                "checkpoint has {n_cells} training cells, data has {}",
                data.cells.len()
            )));
        }
        for (i, tc) in data.cells.iter().enumerate() {
            let ids = split_list(c.get(&format!("cell.{i}"))?);
            if ids != [tc.cell.task.as_str(), tc.cell.lang.as_str()] {
                return Err(Error::CheckpointFormat(format!(
                    "training cell {i} is {} in the data but {:?} in the checkpoint",
                    tc.cell, ids
                )));
            }
        }
        let model = read_model(c, "model")?;
        let best_model = read_model(c, "best")?;
        check_model_covers(&model, data)?;
        let cur = c.array("cursors")?;
        if cur.data.len() != 2 * n_cells {
            return Err(Error::CheckpointEntry {
                entry: "cursors".into(),
                msg: "wrong length".into(),
            });
        }
        let cursors = cur
            .data
            .chunks_exact(2)
            .map(|p| Cursor {
                epoch: p[0] as u64,
                pos: p[1] as usize,
            })
            .collect();
        let n = model.param_count();
        let m = c.array("adam.m")?.data.clone();
        let v = c.array("adam.v")?.data.clone();
        if m.len() != n || v.len() != n {
            return Err(Error::CheckpointEntry {
                entry: "adam.m".into(),
                msg: format!("expected {n} values"),
            });
        }
        let best_dev = match c.get("best_dev")? {
            "none" => None,
            _ => Some(c.parse("best_dev")?),
        };
        let state = TrainState {
            model,
            adam: Adam {
                m,
                v,
                t: c.parse("adam_t")?,
            },
            step: c.parse("step")?,
            cursors,
            best_model,
            best_dev,
            best_step: c.parse("best_step")?,
            bad_validations: c.parse("bad_validations")?,
            stopped: c.parse("stopped")?,
        };
        Ok(Self::assemble(data, config, state))
    }

    pub fn resume(data: &'a TrainingSet, path: &Path) -> Result<Self> {
        Self::from_container(data, &Container::read(path)?)
    }
}

fn frozen_mask(model: &Model, freeze_factor: bool) -> Vec<bool> {
    let mut out = Vec::with_capacity(model.param_count());
    for ((_, _, a), is_factor) in model.arrays().iter().zip(model.factor_mask()) {
        out.extend(std::iter::repeat_n(freeze_factor && is_factor, a.len()));
    }
    out
}

fn check_model_covers(model: &Model, data: &TrainingSet) -> Result<()> {
    let dims = model.dims();
    for tc in &data.cells {
        model.store.task(&tc.cell.task)?;
        model.store.lang(&tc.cell.lang)?;
        let classes = data.schemas[&tc.cell.task].class_count();
        if classes > dims.c {
            return Err(Error::DimensionMismatch {
                what: "head classes",
                expected: classes,
                got: dims.c,
            });
        }
        for ex in tc.train.iter().chain(&tc.dev) {
            if let Some(x) = ex.embeddings.iter().find(|x| x.len() != dims.e) {
                return Err(Error::DimensionMismatch {
                    what: "token embedding",
                    expected: dims.e,
                    got: x.len(),
                });
            }
        }
    }
    Ok(())
}

/// Train with `config` from `model`; returns the final training state, whose
/// `best_model` is the early-stopping choice.
pub fn train(
    data: &TrainingSet,
    model: Model,
    config: TrainConfig,
    log: impl FnMut(&LogRecord),
) -> Result<TrainState> {
    let mut t = Trainer::new(data, model, config)?;
    t.run(log)?;
    Ok(t.into_state())
}

/// Architecture, ids and label maps.
pub fn write_model_header(
    c: &mut Container,
    model: &Model,
    schemas: &BTreeMap<TaskId, TaskSchema>,
) {
    let dims = model.dims();
    c.set("version", CHECKPOINT_VERSION);
    c.set("family", model.store.family());
    c.set("h", dims.h);
    c.set("e", dims.e);
    c.set("c", dims.c);
    c.set(
        "hidden",
        model
            .net
            .hidden_widths()
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    let tasks: Vec<&str> = model.store.task_ids().map(|t| t.as_str()).collect();
    let langs: Vec<&str> = model.store.lang_ids().map(|l| l.as_str()).collect();
    c.set("tasks", join_list(&tasks));
    c.set("langs", join_list(&langs));
    for (i, (task, schema)) in schemas.iter().enumerate() {
        c.set(format!("schema.{i}.task"), task);
        c.set(format!("schema.{i}.labels"), join_list(schema.labels()));
    }
}

pub fn push_model(c: &mut Container, prefix: &str, model: &Model) {
    for (name, shape, data) in model.arrays() {
        c.push_array(format!("{prefix}.{name}"), shape, data.to_vec());
    }
}

/// Label maps stored by [`write_model_header`].
pub fn read_schemas(c: &Container) -> Result<BTreeMap<TaskId, TaskSchema>> {
    let mut out = BTreeMap::new();
    let mut i = 0;
    while let Some(task) = c.get_opt(&format!("schema.{i}.task")) {
        let task = TaskId::new(task);
        let labels = split_list(c.get(&format!("schema.{i}.labels"))?);
        out.insert(task.clone(), TaskSchema::new(task, labels)?);
        i += 1;
    }
    Ok(out)
}

/// Rebuilds the model stored under `prefix` (`"model"` or `"best"`).
pub fn read_model(c: &Container, prefix: &str) -> Result<Model> {
    let version: u32 = c.parse("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointFormat(format!(
            "unsupported version {version}"
        )));
    }
    let family: Family = c.parse("family")?;
    let h: usize = c.parse("h")?;
    let dims = HyperDims {
        h,
        e: c.parse("e")?,
        c: c.parse("c")?,
    };
    let hidden = c
        .get("hidden")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::CheckpointEntry {
                entry: "hidden".into(),
                msg: format!("bad width `{s}`"),
            })
        })
        .collect::<Result<Vec<usize>>>()?;
    let tasks: Vec<TaskId> = split_list(c.get("tasks")?)
        .into_iter()
        .map(TaskId)
        .collect();
    let langs: Vec<LangId> = split_list(c.get("langs")?)
        .into_iter()
        .map(LangId)
        .collect();
    let store = init_store(&tasks, &langs, family, h, 0)?;
    let mut model = Model::new(store, HyperNet::zeros(dims, &hidden))?;
    let names: Vec<(String, Vec<usize>)> =
        model.arrays().into_iter().map(|(n, s, _)| (n, s)).collect();
    for ((name, shape), dst) in names.into_iter().zip(model.arrays_mut()) {
        let entry = format!("{prefix}.{name}");
        let a = c.array(&entry)?;
        if a.shape != shape {
            return Err(Error::CheckpointEntry {
                entry,
                msg: format!("shape {:?}, expected {:?}", a.shape, shape),
            });
        }
        dst.copy_from_slice(&a.data);
    }
    Ok(model)
}

/// Best model plus label maps from a training checkpoint.
pub fn load_best(path: &Path) -> Result<(Model, BTreeMap<TaskId, TaskSchema>)> {
    let c = Container::read(path)?;
    Ok((read_model(&c, "best")?, read_schemas(&c)?))
}
