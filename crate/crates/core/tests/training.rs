mod common;

use paramfactor::experiment::{prepare, seen_training_set};
use paramfactor::predict::plug_in_predict;
use paramfactor::synth::SynthConfig;
use paramfactor::train::{dev_objective, init_model, sample_cell, ModelSpec, TrainConfig, Trainer};
use paramfactor::Family;

#[test]
fn training_improves_dev_objective_on_small_grid() {
    let synth = SynthConfig {
        n_tasks: 2,
        n_langs: 3,
        class_counts: vec![3, 4],
        examples_per_cell: 200,
        seed: 5,
        ..SynthConfig::default()
    };
    let (truth, part) = prepare(&synth, 1.0 / 3.0).unwrap();
    let data = seen_training_set(&truth, &part).unwrap();
    let spec = ModelSpec {
        family: Family::LowRank { k: 2 },
        h: 8,
        e: synth.e,
        hidden: vec![16],
    };
    let model = init_model(&spec, &synth.task_ids(), &synth.lang_ids(), 4, 5).unwrap();
    let initial = dev_objective(&model, &data).unwrap().unwrap();
    let config = TrainConfig {
        seed: 5,
        max_steps: 3000,
        ..TrainConfig::desk()
    };
    let mut trainer = Trainer::new(&data, model, config).unwrap();
    trainer.run(|_| {}).unwrap();
    let best = trainer.state().best_dev.unwrap();
    assert!(best > initial, "best dev {best} vs initial {initial}");
}

#[test]
fn smoothed_loss_decreases() {
    let t = common::acceptance_grid();
    let losses: Vec<f64> = t.log.iter().map(|r| r.loss).collect();
    assert!(losses.len() > 200);
    let smooth = |end: usize| losses[end - 50..end].iter().sum::<f64>() / 50.0;
    let early = smooth(50);
    let late = smooth(losses.len());
    assert!(
        late < early,
        "smoothed loss {late} at end vs {early} at step 50"
    );
}

#[test]
fn seen_cells_beat_uniform_on_dev() {
    let t = common::acceptance_grid();
    for tc in &t.data.cells {
        let schema = &t.data.schemas[&tc.cell.task];
        let r = plug_in_predict(&t.state.best_model, schema, &tc.cell, &tc.dev).unwrap();
        let acc = r.accuracy.unwrap();
        assert!(
            acc > 1.0 / schema.class_count() as f64,
            "{}: {acc}",
            tc.cell
        );
    }
}

#[test]
fn cell_sampling_is_uniform() {
    let n_cells = 12;
    let draws = 100_000u64;
    let mut counts = vec![0u64; n_cells];
    for s in 0..draws {
        counts[sample_cell(3, s, n_cells)] += 1;
    }
    let p = 1.0 / n_cells as f64;
    let expect = draws as f64 * p;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - expect).abs() < 3.0 * sd,
            "cell {i}: {c} vs {expect}"
        );
    }
}

#[test]
fn trainer_visits_the_sampled_cells() {
    let t = common::acceptance_grid();
    let n = t.data.cells.len();
    for r in t.log.iter().take(500) {
        let cell = &t.data.cells[sample_cell(t.config.seed, r.step - 1, n)].cell;
        assert_eq!((&r.task, &r.lang), (&cell.task, &cell.lang));
    }
}

#[test]
fn resumed_step_reproduces_logged_loss() {
    let t = common::acceptance_grid();
    let model = {
        let spec = ModelSpec {
            family: Family::Diagonal,
            h: 8,
            e: 16,
            hidden: vec![32],
        };
        init_model(
            &spec,
            &t.truth.config.task_ids(),
            &t.truth.config.lang_ids(),
            5,
            0,
        )
        .unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt");
    let mut head = Trainer::new(&t.data, model, t.config.clone()).unwrap();
    head.set_max_steps(321);
    head.run(|_| {}).unwrap();
    head.save(&path).unwrap();
    let mut resumed = Trainer::resume(&t.data, &path).unwrap();
    resumed.set_max_steps(t.config.max_steps);
    for logged in &t.log[321..340] {
        let r = resumed.step().unwrap();
        assert_eq!(r.step, logged.step);
        assert_eq!(r.loss.to_bits(), logged.loss.to_bits());
    }
}
