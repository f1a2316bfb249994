//! A trained model on the default synthetic grid, built once per test binary.

#![allow(dead_code)]

use std::sync::OnceLock;

use paramfactor::data::CellPartition;
use paramfactor::experiment::{prepare, seen_training_set};
use paramfactor::synth::{GroundTruth, SynthConfig};
use paramfactor::train::{
    init_model, train, LogRecord, ModelSpec, TrainConfig, TrainState, TrainingSet,
};
use paramfactor::Family;

pub struct Trained {
    pub truth: GroundTruth,
    pub part: CellPartition,
    pub data: TrainingSet,
    pub config: TrainConfig,
    pub state: TrainState,
    pub log: Vec<LogRecord>,
}

pub fn acceptance_grid() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let synth = SynthConfig::default();
        let (truth, part) = prepare(&synth, 1.0 / 3.0).unwrap();
        let data = seen_training_set(&truth, &part).unwrap();
        let spec = ModelSpec {
            family: Family::Diagonal,
            h: synth.h,
            e: synth.e,
            hidden: vec![32],
        };
        let model = init_model(&spec, &synth.task_ids(), &synth.lang_ids(), 5, synth.seed).unwrap();
        let config = TrainConfig::desk();
        let mut log = Vec::new();
        let state = train(&data, model, config.clone(), |r| log.push(r.clone())).unwrap();
        Trained {
            truth,
            part,
            data,
            config,
            state,
            log,
        }
    })
}
