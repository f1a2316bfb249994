use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use paramfactor::baselines::{
    joint_multilingual, joint_multilingual_predict, largest_source_predict, nearest_source_predict,
    train_cell_classifiers, CellClassifier, LangFeatures,
};
use paramfactor::data::{
    examples_from, load_conll, partition, Cell, CellPartition, Example, Grid, Manifest,
};
use paramfactor::encoder::{embed_from_table, load_precomputed, Embedder};
use paramfactor::hypernet::HeadParams;
use paramfactor::predict::{
    bma_predict, correlation_from_summaries, plug_in_predict, predict_with_head, write_summaries,
    CellSummary, PredictiveReport,
};
use paramfactor::synth::generate;
use paramfactor::train::{init_model, load_best, ModelSpec, Trainer, TrainingSet};
use paramfactor::{LangId, Model, TaskId};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Anything failing at run time; exit code 1.
    Runtime(String),
}

impl From<paramfactor::Error> for CliError {
    fn from(e: paramfactor::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum System {
    Factor,
    Ns,
    Ls,
    Jm,
}

impl System {
    fn name(self) -> &'static str {
        match self {
            System::Factor => "factor",
            System::Ns => "ns",
            System::Ls => "ls",
            System::Jm => "jm",
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Writes the resolved configuration next to the outputs.
pub fn echo_config(cfg: &RunConfig) -> CliResult<()> {
    write_file(&cfg.paths.out.join("config.json"), cfg.to_json())
}

pub fn synth(cfg: &RunConfig) -> CliResult<()> {
    let sc = cfg.synth_config();
    sc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let truth = generate(&sc)?;
    fs::create_dir_all(&cfg.paths.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", cfg.paths.out.display())))?;
    let files = truth.write(&cfg.paths.out)?;
    echo_config(cfg)?;
    println!(
        "wrote {} cells; manifest {}",
        truth.corpora.len(),
        files.manifest.display()
    );
    Ok(())
}

/// The grid, its partition with splits, and how to embed it.
struct Setup {
    grid: Grid,
    partition: CellPartition,
    embedder: Embedder,
}

fn setup(cfg: &RunConfig) -> CliResult<Setup> {
    let manifest = Manifest::read(&cfg.manifest_path())?;
    let grid = Grid::load(&manifest)?;
    let embedder = if grid.embeddings.len() == grid.corpora.len() {
        Embedder::Precomputed(grid.embeddings.clone().into_iter().collect())
    } else {
        let fc = cfg.featurizer_config();
        fc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Embedder::Featurizer(fc)
    };
    let mut part = match &cfg.paths.partition {
        Some(p) => CellPartition::read(p)?,
        None => partition(&grid.cells(), cfg.partition.hold_out_fraction, cfg.seed)?,
    };
    if part.grid != grid.cells() {
        return Err(CliError::Runtime(
            "partition file does not list exactly the manifest's cells".into(),
        ));
    }
    let sizes = grid
        .corpora
        .iter()
        .map(|(c, corpus)| (c.clone(), corpus.sentences.len()))
        .collect();
    part.assign_splits(&sizes, cfg.seed)?;
    Ok(Setup {
        grid,
        partition: part,
        embedder,
    })
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out.join("checkpoint.bin")
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> CliResult<()> {
    let s = setup(cfg)?;
    let data = TrainingSet::from_grid(&s.grid, &s.partition, &s.embedder)?;
    let out = &cfg.paths.out;
    write_file(&out.join("partition.tsv"), s.partition.to_text())?;
    echo_config(cfg)?;

    let mut trainer = match resume {
        Some(p) => {
            let mut t = Trainer::resume(&data, p)?;
            t.set_max_steps(cfg.train.max_steps);
            println!("resuming at step {}", t.state().step);
            t
        }
        None => {
            let max_classes = s.grid.max_classes();
            let c = cfg.dims.c.unwrap_or(max_classes);
            if c < max_classes {
                return Err(CliError::Usage(format!(
                    "dims.c = {c} is below the widest schema ({max_classes} labels)"
                )));
            }
            let spec = ModelSpec {
                family: cfg.family(),
                h: cfg.dims.h,
                e: cfg.dims.e,
                hidden: cfg.dims.hidden.clone(),
            };
            let model = init_model(&spec, &s.grid.tasks(), &s.grid.langs(), c, cfg.seed)?;
            Trainer::new(&data, model, cfg.train_config())?
        }
    };

    let log_path = out.join("train.log");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&log_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", log_path.display())))?;
    let mut buf = String::new();
    trainer.run(|r| {
        let _ = writeln!(buf, "{r}");
    })?;
    let st = trainer.state();
    let best = st.best_dev.map_or("none".to_string(), |v| format!("{v}"));
    let _ = writeln!(
        buf,
        "# final\tstep\t{}\tbest_step\t{}\tbest_dev\t{best}",
        st.step, st.best_step
    );
    log.write_all(buf.as_bytes())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", log_path.display())))?;
    trainer.save(&checkpoint_path(cfg))?;
    println!(
        "trained to step {} (best step {}, dev mean log-likelihood {best}); checkpoint {}",
        st.step,
        st.best_step,
        checkpoint_path(cfg).display()
    );
    Ok(())
}

/// A cell to evaluate and the examples it is evaluated on.
struct EvalCell {
    cell: Cell,
    seen: bool,
    examples: Vec<Example>,
}

/// Seen cells on their test split, unseen cells on their whole corpus.
fn eval_cells(s: &Setup) -> CliResult<Vec<EvalCell>> {
    let mut out = Vec::new();
    for (cell, corpus) in &s.grid.corpora {
        let all = examples_from(corpus, s.embedder.embed(corpus)?)?;
        let seen = s.partition.seen.contains(cell);
        let examples = if seen {
            s.partition.splits[cell]
                .test
                .iter()
                .map(|&i| all[i].clone())
                .collect()
        } else {
            all
        };
        out.push(EvalCell {
            cell: cell.clone(),
            seen,
            examples,
        });
    }
    Ok(out)
}

enum Predictor {
    Factor {
        model: Model,
        bma: Option<usize>,
        seed: u64,
    },
    Sources {
        system: System,
        classifiers: BTreeMap<Cell, CellClassifier>,
        features: Option<LangFeatures>,
    },
    Joint(BTreeMap<TaskId, HeadParams>),
}

fn load_features(cfg: &RunConfig) -> CliResult<LangFeatures> {
    let path = cfg.paths.features.as_ref().ok_or_else(|| {
        CliError::Usage("the ns system needs a language feature file (paths.features)".into())
    })?;
    Ok(LangFeatures::read(path)?)
}

fn predictor(
    cfg: &RunConfig,
    s: &Setup,
    system: System,
    bma: Option<usize>,
) -> CliResult<Predictor> {
    // Checked first so a missing feature file is reported before any training.
    let features = match system {
        System::Ns => Some(load_features(cfg)?),
        _ => None,
    };
    if bma.is_some() && system != System::Factor {
        return Err(CliError::Usage(
            "--bma applies only to the factor system".into(),
        ));
    }
    if bma == Some(0) {
        return Err(CliError::Usage("--bma needs V >= 1".into()));
    }
    match system {
        System::Factor => {
            let path = checkpoint_path(cfg);
            if !path.exists() {
                return Err(CliError::Runtime(format!(
                    "missing checkpoint {}; run `train` first",
                    path.display()
                )));
            }
            let (model, _) = load_best(&path)?;
            Ok(Predictor::Factor {
                model,
                bma,
                seed: cfg.seed,
            })
        }
        System::Ns | System::Ls => {
            let data = TrainingSet::from_grid(&s.grid, &s.partition, &s.embedder)?;
            Ok(Predictor::Sources {
                system,
                classifiers: train_cell_classifiers(&data, &cfg.train_config())?,
                features,
            })
        }
        System::Jm => {
            let data = TrainingSet::from_grid(&s.grid, &s.partition, &s.embedder)?;
            Ok(Predictor::Joint(joint_multilingual(
                &data,
                &cfg.train_config(),
            )?))
        }
    }
}

impl Predictor {
    fn predict(&self, s: &Setup, ec: &EvalCell) -> CliResult<PredictiveReport> {
        let schema = &s.grid.schemas[&ec.cell.task];
        let r = match self {
            Predictor::Factor { model, bma, seed } => match bma {
                Some(v) => bma_predict(model, schema, &ec.cell, &ec.examples, *v, *seed)?,
                None => plug_in_predict(model, schema, &ec.cell, &ec.examples)?,
            },
            Predictor::Sources {
                system,
                classifiers,
                features,
            } => {
                if let Some(own) = classifiers.get(&ec.cell) {
                    predict_with_head(&own.head, &ec.cell, schema, &ec.examples)?
                } else if *system == System::Ns {
                    let f = features.as_ref().expect("loaded for ns");
                    nearest_source_predict(classifiers, f, &ec.cell, schema, &ec.examples)?
                } else {
                    largest_source_predict(classifiers, &ec.cell, schema, &ec.examples)?
                }
            }
            Predictor::Joint(heads) => {
                joint_multilingual_predict(heads, &ec.cell, schema, &ec.examples)?
            }
        };
        Ok(r)
    }
}

fn run_dir(cfg: &RunConfig, kind: &str, system: System, bma: Option<usize>) -> PathBuf {
    let mut name = format!("{kind}_{}", system.name());
    if let Some(v) = bma {
        name.push_str(&format!("_bma{v}"));
    }
    cfg.paths.out.join(name)
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

pub fn eval(cfg: &RunConfig, system: System, bma: Option<usize>) -> CliResult<()> {
    let s = setup(cfg)?;
    let pred = predictor(cfg, &s, system, bma)?;
    let dir = run_dir(cfg, "eval", system, bma);
    let mut seen_rows = Vec::new();
    let mut unseen_rows = Vec::new();
    for ec in eval_cells(&s)? {
        let report = pred.predict(&s, &ec)?;
        let stem = format!("{}_{}", ec.cell.task, ec.cell.lang);
        write_file(&dir.join(format!("{stem}.report.tsv")), report.to_tsv())?;
        let split = if ec.seen { "seen-test" } else { "unseen" };
        println!(
            "{}\t{}\t{split}\t{}\t{}\t{:.4}",
            ec.cell.task,
            ec.cell.lang,
            report.n_examples,
            fmt_score(report.score()),
            report.mean_entropy
        );
        if ec.seen {
            seen_rows.push(report.summary());
        } else {
            unseen_rows.push(report.summary());
        }
    }
    write_summaries(&dir.join("summary_seen.tsv"), &seen_rows)?;
    write_summaries(&dir.join("summary_unseen.tsv"), &unseen_rows)?;
    echo_config(cfg)?;
    Ok(())
}

pub fn baseline(cfg: &RunConfig, system: System) -> CliResult<()> {
    if system == System::Factor {
        return Err(CliError::Usage(
            "baseline takes --system ns, ls or jm; use `eval` for the factor model".into(),
        ));
    }
    eval(cfg, system, None)
}

pub fn entropy(
    cfg: &RunConfig,
    system: System,
    bma: Option<usize>,
    per_example: bool,
) -> CliResult<()> {
    let s = setup(cfg)?;
    let pred = predictor(cfg, &s, system, bma)?;
    let mut out = String::new();
    if per_example {
        out.push_str("# task\tlang\texample\ttokens\tmean_entropy\taccuracy\n");
    } else {
        out.push_str("# task\tlang\texample\ttoken\tentropy\tcorrect\n");
    }
    let mut rows: Vec<CellSummary> = Vec::new();
    for ec in eval_cells(&s)?.into_iter().filter(|c| !c.seen) {
        let report = pred.predict(&s, &ec)?;
        let (task, lang) = (&ec.cell.task, &ec.cell.lang);
        let correct = |r: &paramfactor::predict::TokenRecord| match r.gold {
            Some(g) => u8::from(g == r.predicted).to_string(),
            None => "-".into(),
        };
        if per_example {
            let mut by_example: BTreeMap<usize, Vec<&paramfactor::predict::TokenRecord>> =
                BTreeMap::new();
            for r in &report.records {
                by_example.entry(r.example_id).or_default().push(r);
            }
            for (id, recs) in by_example {
                let n = recs.len() as f64;
                let h = recs.iter().map(|r| r.entropy).sum::<f64>() / n;
                let acc = if recs.iter().all(|r| r.gold.is_some()) {
                    format!(
                        "{:.6}",
                        recs.iter().filter(|r| r.gold == Some(r.predicted)).count() as f64 / n
                    )
                } else {
                    "-".into()
                };
                let _ = writeln!(out, "{task}\t{lang}\t{id}\t{}\t{h:.6}\t{acc}", recs.len());
            }
        } else {
            for r in &report.records {
                let _ = writeln!(
                    out,
                    "{task}\t{lang}\t{}\t{}\t{:.6}\t{}",
                    r.example_id,
                    r.token,
                    r.entropy,
                    correct(r)
                );
            }
        }
        rows.push(report.summary());
    }
    let dir = run_dir(cfg, "entropy", system, bma);
    let file = if per_example {
        "per_example.tsv"
    } else {
        "per_token.tsv"
    };
    write_file(&dir.join(file), out)?;
    write_summaries(&dir.join("summary_unseen.tsv"), &rows)?;
    match correlation_from_summaries(&rows) {
        Ok((r, p)) => {
            let line = format!("pearson_r\t{r}\np_value\t{p}\nn_cells\t{}\n", rows.len());
            write_file(&dir.join("correlation.tsv"), &line)?;
            print!("{line}");
        }
        Err(e) => println!("correlation unavailable: {e}"),
    }
    echo_config(cfg)?;
    Ok(())
}

pub fn predict(
    cfg: &RunConfig,
    task: &str,
    lang: &str,
    corpus_path: &Path,
    embeddings: Option<&Path>,
    bma: Option<usize>,
) -> CliResult<()> {
    let path = checkpoint_path(cfg);
    if !path.exists() {
        return Err(CliError::Runtime(format!(
            "missing checkpoint {}; run `train` first",
            path.display()
        )));
    }
    let (model, schemas) = load_best(&path)?;
    let task = TaskId::new(task);
    let schema = schemas
        .get(&task)
        .ok_or_else(|| CliError::Runtime(format!("task `{task}` is not in the checkpoint")))?;
    let corpus = load_conll(corpus_path, task.clone(), LangId::new(lang), Some(schema))?;
    let emb = match embeddings {
        Some(p) => embed_from_table(&corpus, &load_precomputed(p)?)?,
        None => Embedder::Featurizer(cfg.featurizer_config()).embed(&corpus)?,
    };
    let examples = examples_from(&corpus, emb)?;
    let report = match bma {
        Some(0) => return Err(CliError::Usage("--bma needs V >= 1".into())),
        Some(v) => bma_predict(&model, schema, &corpus.cell, &examples, v, cfg.seed)?,
        None => plug_in_predict(&model, schema, &corpus.cell, &examples)?,
    };
    let out = cfg.paths.out.join(format!(
        "predict_{}_{}.report.tsv",
        corpus.cell.task, corpus.cell.lang
    ));
    write_file(&out, report.to_tsv())?;
    println!(
        "{}\t{}\t{}\t{}\t{:.4}",
        corpus.cell.task,
        corpus.cell.lang,
        report.n_examples,
        fmt_score(report.score()),
        report.mean_entropy
    );
    echo_config(cfg)?;
    Ok(())
}
