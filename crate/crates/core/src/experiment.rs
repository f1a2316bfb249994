//! Synthetic zero-shot experiment: generate a grid, hold out a third of the
//! cells, train on the rest and score every held-out cell with the
//! factorized model, the largest-source baseline, chance and the true heads.

use crate::baselines::{largest_source_predict, train_cell_classifiers};
use crate::data::{partition, Cell, CellPartition};
use crate::predict::{bma_predict, plug_in_predict, PredictiveReport};
use crate::synth::{generate, oracle_score, GroundTruth, SynthConfig, TruthHeads};
use crate::train::{init_model, train, ModelSpec, TrainCell, TrainConfig, TrainingSet};
use crate::{Error, Family, Result};

#[derive(Debug, Clone)]
pub struct ZeroShotConfig {
    pub synth: SynthConfig,
    pub family: Family,
    pub hidden: Vec<usize>,
    pub hold_out_fraction: f64,
    pub train: TrainConfig,
    /// Samples for an additional BMA pass; `None` skips it.
    pub bma_samples: Option<usize>,
}

impl ZeroShotConfig {
    /// The 3 × 6 grid with desk-scale training, seeded throughout by `seed`.
    pub fn acceptance(seed: u64) -> Self {
        Self {
            synth: SynthConfig {
                seed,
                ..SynthConfig::default()
            },
            family: Family::Diagonal,
            hidden: vec![32],
            hold_out_fraction: 1.0 / 3.0,
            train: TrainConfig {
                seed,
                ..TrainConfig::desk()
            },
            bma_samples: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub plug_in: PredictiveReport,
    pub bma: Option<PredictiveReport>,
    pub largest_source: PredictiveReport,
    /// Frequency of the most common gold label.
    pub chance: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone)]
pub struct ZeroShotRun {
    pub seed: u64,
    pub steps: u64,
    pub best_step: u64,
    pub best_dev: Option<f64>,
    pub unseen: Vec<CellOutcome>,
}

impl ZeroShotRun {
    pub fn mean_accuracy(&self, pick: impl Fn(&CellOutcome) -> &PredictiveReport) -> f64 {
        let n = self.unseen.len() as f64;
        self.unseen
            .iter()
            .map(|o| pick(o).accuracy.unwrap_or(0.0))
            .sum::<f64>()
            / n
    }
}

/// Train and dev splits of the seen cells, encoded by the generator.
pub fn seen_training_set(truth: &GroundTruth, part: &CellPartition) -> Result<TrainingSet> {
    let mut cells = Vec::new();
    for cell in &part.seen {
        let ex = truth.examples(cell)?;
        let split = part.splits.get(cell).ok_or_else(|| {
            Error::InvalidArgument(format!("no split assigned for seen cell {cell}"))
        })?;
        cells.push(TrainCell {
            cell: cell.clone(),
            train: split.train.iter().map(|&i| ex[i].clone()).collect(),
            dev: split.dev.iter().map(|&i| ex[i].clone()).collect(),
        });
    }
    TrainingSet::new(truth.schemas.clone(), cells)
}

/// Generates the grid, draws the partition and assigns splits.
pub fn prepare(
    synth: &SynthConfig,
    hold_out_fraction: f64,
) -> Result<(GroundTruth, CellPartition)> {
    let truth = generate(synth)?;
    let mut part = partition(&truth.cells(), hold_out_fraction, synth.seed)?;
    let sizes = truth
        .corpora
        .iter()
        .map(|(c, corpus)| (c.clone(), corpus.sentences.len()))
        .collect();
    part.assign_splits(&sizes, synth.seed)?;
    Ok((truth, part))
}

pub fn run_zero_shot(cfg: &ZeroShotConfig) -> Result<ZeroShotRun> {
    let seed = cfg.synth.seed;
    let (truth, part) = prepare(&cfg.synth, cfg.hold_out_fraction)?;
    let oracle = TruthHeads::from(&truth);

    let data = seen_training_set(&truth, &part)?;
    let spec = ModelSpec {
        family: cfg.family,
        h: cfg.synth.h,
        e: cfg.synth.e,
        hidden: cfg.hidden.clone(),
    };
    let max_classes = truth
        .schemas
        .values()
        .map(|s| s.class_count())
        .max()
        .unwrap_or(1);
    let model = init_model(
        &spec,
        &cfg.synth.task_ids(),
        &cfg.synth.lang_ids(),
        max_classes,
        seed,
    )?;
    let state = train(&data, model, cfg.train.clone(), |_| {})?;
    let classifiers = train_cell_classifiers(&data, &cfg.train)?;

    let mut unseen = Vec::new();
    for cell in &part.unseen {
        let ex = truth.examples(cell)?;
        let schema = &truth.schemas[&cell.task];
        let plug_in = plug_in_predict(&state.best_model, schema, cell, &ex)?;
        let bma = match cfg.bma_samples {
            Some(v) => Some(bma_predict(&state.best_model, schema, cell, &ex, v, seed)?),
            None => None,
        };
        let largest_source = largest_source_predict(&classifiers, cell, schema, &ex)?;
        let mut counts = vec![0usize; schema.class_count()];
        for e in &ex {
            for &g in e.gold.as_deref().unwrap_or_default() {
                counts[g] += 1;
            }
        }
        let n: usize = counts.iter().sum();
        let chance = counts.iter().copied().max().unwrap_or(0) as f64 / n.max(1) as f64;
        unseen.push(CellOutcome {
            cell: cell.clone(),
            plug_in,
            bma,
            largest_source,
            chance,
            oracle: oracle_score(&oracle, cell, &ex)?,
        });
    }
    Ok(ZeroShotRun {
        seed,
        steps: state.step,
        best_step: state.best_step,
        best_dev: state.best_dev,
        unseen,
    })
}
