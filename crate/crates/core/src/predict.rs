//! Zero-shot prediction, Bayesian model averaging and uncertainty reports.

use std::fmt::Write as _;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Cell, Example};
use crate::error::{Error, Result};
use crate::hypernet::{reshape_theta, sample_theta, HeadParams};
use crate::likelihood::{class_distribution, entropy, PredictiveDist, TaskSchema};
use crate::model::Model;
use crate::rng::{self, GaussianNoise, NoiseSource};

pub const DEFAULT_BMA_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub example_id: usize,
    pub token: usize,
    pub gold: Option<usize>,
    pub predicted: usize,
    pub probs: Vec<f64>,
    /// Nats.
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveReport {
    pub cell: Cell,
    pub schema: TaskSchema,
    /// Ordered by example id, then token.
    pub records: Vec<TokenRecord>,
    pub n_examples: usize,
    /// `None` when no record carries a gold label.
    pub accuracy: Option<f64>,
    /// Only for span-based schemas with gold labels.
    pub span_f1: Option<f64>,
    pub mean_entropy: f64,
}

impl PredictiveReport {
    /// Builds a report from one distribution per token of each example.
    pub fn from_distributions(
        cell: Cell,
        schema: TaskSchema,
        examples: &[Example],
        dists: Vec<Vec<PredictiveDist>>,
    ) -> Result<Self> {
        if dists.len() != examples.len() {
            return Err(Error::DimensionMismatch {
                what: "predicted examples",
                expected: examples.len(),
                got: dists.len(),
            });
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.sort_by_key(|&i| examples[i].id);

        let mut records = Vec::new();
        let mut gold_seqs = Vec::new();
        let mut pred_seqs = Vec::new();
        for &i in &order {
            let ex = &examples[i];
            let mut preds = Vec::with_capacity(ex.len());
            for (tok, d) in dists[i].iter().enumerate() {
                let predicted = d.argmax();
                preds.push(predicted);
                records.push(TokenRecord {
                    example_id: ex.id,
                    token: tok,
                    gold: ex.gold.as_ref().map(|g| g[tok]),
                    predicted,
                    entropy: entropy(d),
                    probs: d.probs.clone(),
                });
            }
            if let Some(g) = &ex.gold {
                gold_seqs.push(g.iter().map(|&k| schema.label(k)).collect::<Vec<_>>());
                pred_seqs.push(preds.iter().map(|&k| schema.label(k)).collect::<Vec<_>>());
            }
        }

        let with_gold: Vec<&TokenRecord> = records.iter().filter(|r| r.gold.is_some()).collect();
        let accuracy = (!with_gold.is_empty()).then(|| {
            with_gold
                .iter()
                .filter(|r| r.gold == Some(r.predicted))
                .count() as f64
                / with_gold.len() as f64
        });
        let span_f1 = (schema.is_span_based() && !gold_seqs.is_empty())
            .then(|| span_f1(&gold_seqs, &pred_seqs));
        let mean_entropy = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.entropy).sum::<f64>() / records.len() as f64
        };
        Ok(Self {
            cell,
            schema,
            records,
            n_examples: examples.len(),
            accuracy,
            span_f1,
            mean_entropy,
        })
    }

    /// Span F1 for span-based tasks, accuracy otherwise.
    pub fn score(&self) -> Option<f64> {
        self.span_f1.or(self.accuracy)
    }

    /// Per-token records then a `#`-prefixed aggregate block.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("example\ttoken\tgold\tpredicted\tentropy\tprobs\n");
        for r in &self.records {
            let gold = r.gold.map_or("-", |g| self.schema.label(g));
            let probs: Vec<String> = r.probs.iter().map(|p| format!("{p:.6}")).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{}",
                r.example_id,
                r.token,
                gold,
                self.schema.label(r.predicted),
                r.entropy,
                probs.join(",")
            );
        }
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        let _ = writeln!(out, "# task\t{}", self.cell.task);
        let _ = writeln!(out, "# lang\t{}", self.cell.lang);
        let _ = writeln!(out, "# n_examples\t{}", self.n_examples);
        let _ = writeln!(out, "# accuracy\t{}", fmt_opt(self.accuracy));
        let _ = writeln!(out, "# span_f1\t{}", fmt_opt(self.span_f1));
        let _ = writeln!(out, "# mean_entropy\t{:.6}", self.mean_entropy);
        out
    }

    pub fn summary(&self) -> CellSummary {
        CellSummary {
            cell: self.cell.clone(),
            n_examples: self.n_examples,
            score: self.score(),
            mean_entropy: self.mean_entropy,
        }
    }
}

/// One row of the per-cell summary file.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: Cell,
    pub n_examples: usize,
    pub score: Option<f64>,
    pub mean_entropy: f64,
}

pub const SUMMARY_HEADER: &str = "task\tlang\tn_examples\taccuracy_or_f1\tmean_entropy";

impl CellSummary {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.cell.task,
            self.cell.lang,
            self.n_examples,
            self.score.map_or("-".to_string(), |s| format!("{s:?}")),
            format_args!("{:?}", self.mean_entropy)
        )
    }
}

pub fn write_summaries(path: &Path, rows: &[CellSummary]) -> Result<()> {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_summaries(path: &Path) -> Result<Vec<CellSummary>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line == SUMMARY_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| Error::parse(path, i + 1, m);
        if f.len() != 5 {
            return Err(bad("expected five tab-separated columns"));
        }
        out.push(CellSummary {
            cell: Cell::new(f[0], f[1]),
            n_examples: f[2].parse().map_err(|_| bad("bad n_examples"))?,
            score: match f[3] {
                "-" => None,
                s => Some(s.parse().map_err(|_| bad("bad score"))?),
            },
            mean_entropy: f[4].parse().map_err(|_| bad("bad mean_entropy"))?,
        });
    }
    Ok(out)
}

fn check_examples(examples: &[Example], e: usize) -> Result<()> {
    for ex in examples {
        if let Some(x) = ex.embeddings.iter().find(|x| x.len() != e) {
            return Err(Error::DimensionMismatch {
                what: "token embedding",
                expected: e,
                got: x.len(),
            });
        }
    }
    Ok(())
}

/// Applies a fixed head to every token.
pub fn predict_with_head(
    head: &HeadParams,
    cell: &Cell,
    schema: &TaskSchema,
    examples: &[Example],
) -> Result<PredictiveReport> {
    check_examples(examples, head.embedding_dim())?;
    let dists = examples
        .iter()
        .map(|ex| {
            ex.embeddings
                .iter()
                .map(|x| class_distribution(head, x, schema))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PredictiveReport::from_distributions(cell.clone(), schema.clone(), examples, dists)
}

/// Predicts with the mean head at the posterior means.
pub fn plug_in_predict(
    model: &Model,
    schema: &TaskSchema,
    cell: &Cell,
    examples: &[Example],
) -> Result<PredictiveReport> {
    let head = model.mean_head(&cell.task, &cell.lang)?;
    predict_with_head(&head, cell, schema, examples)
}

/// Noise for the posterior samples of one example.
pub struct ExampleNoise {
    pub latent: Box<dyn NoiseSource>,
    pub factor: Box<dyn NoiseSource>,
    pub theta: Box<dyn NoiseSource>,
}

/// Averages the class probabilities of `v` posterior samples per example.
pub fn bma_predict(
    model: &Model,
    schema: &TaskSchema,
    cell: &Cell,
    examples: &[Example],
    v: usize,
    seed: u64,
) -> Result<PredictiveReport> {
    bma_predict_with(model, schema, cell, examples, v, |id| {
        let id = id as u64;
        ExampleNoise {
            latent: Box::new(GaussianNoise::new(rng::stream(seed, "bma-eps", &[id]))),
            factor: Box::new(GaussianNoise::new(rng::stream(seed, "bma-zeta", &[id]))),
            theta: Box::new(GaussianNoise::new(rng::stream(seed, "bma-theta", &[id]))),
        }
    })
}

/// [`bma_predict`] with caller-supplied noise, keyed by example id.
pub fn bma_predict_with(
    model: &Model,
    schema: &TaskSchema,
    cell: &Cell,
    examples: &[Example],
    v: usize,
    mut noise_for: impl FnMut(usize) -> ExampleNoise,
) -> Result<PredictiveReport> {
    if v == 0 {
        return Err(Error::InvalidArgument("V must be >= 1".into()));
    }
    let tq = model.store.task(&cell.task)?;
    let lq = model.store.lang(&cell.lang)?;
    let dims = model.dims();
    check_examples(examples, dims.e)?;
    let mut dists = Vec::with_capacity(examples.len());
    for ex in examples {
        let mut noise = noise_for(ex.id);
        let mut sums = vec![vec![0.0; schema.class_count()]; ex.len()];
        for _ in 0..v {
            let t = tq.sample(&tq.draw_noise(noise.latent.as_mut(), noise.factor.as_mut()));
            let l = lq.sample(&lq.draw_noise(noise.latent.as_mut(), noise.factor.as_mut()));
            let (mean, var) = model.net.forward(&t, &l)?;
            let theta = sample_theta(&mean, &var, &noise.theta.draw(dims.d()));
            let head = reshape_theta(&theta, dims.e, dims.c)?;
            for (x, acc) in ex.embeddings.iter().zip(&mut sums) {
                let d = class_distribution(&head, x, schema)?;
                acc.iter_mut().zip(&d.probs).for_each(|(a, p)| *a += p);
            }
        }
        dists.push(
            sums.into_iter()
                .map(|s| PredictiveDist {
                    probs: s.into_iter().map(|p| p / v as f64).collect(),
                })
                .collect(),
        );
    }
    PredictiveReport::from_distributions(cell.clone(), schema.clone(), examples, dists)
}

/// A labeled span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

/// Decodes BIO tags; an `I-X` that does not continue an `X` span opens one.
pub fn bio_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (prefix, kind) = match tag.split_once('-') {
            Some((p @ ("B" | "I"), k)) => (p, k),
            _ => ("O", ""),
        };
        let continues = prefix == "I" && open.as_ref().is_some_and(|s| s.kind == kind);
        if continues {
            if let Some(s) = open.as_mut() {
                s.end = i + 1;
            }
            continue;
        }
        spans.extend(open.take());
        if prefix != "O" {
            open = Some(Span {
                start: i,
                end: i + 1,
                kind: kind.to_string(),
            });
        }
    }
    spans.extend(open);
    spans
}

/// Micro-averaged exact-match span F1 over sentences; 0 without true positives.
pub fn span_f1<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>]) -> f64 {
    let (mut tp, mut n_gold, mut n_pred) = (0usize, 0usize, 0usize);
    for (g, p) in gold.iter().zip(predicted) {
        let gs = bio_spans(g);
        let ps = bio_spans(p);
        n_gold += gs.len();
        n_pred += ps.len();
        tp += ps.iter().filter(|s| gs.contains(s)).count();
    }
    if tp == 0 {
        return 0.0;
    }
    // 2PR / (P + R) with the fractions cleared.
    2.0 * tp as f64 / (n_gold + n_pred) as f64
}

/// Pearson r with a two-tailed p-value from the t transform.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            what: "paired samples",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((r, p))
}

/// Correlation between per-cell mean entropy and per-cell score.
pub fn entropy_accuracy_correlation(reports: &[PredictiveReport]) -> Result<(f64, f64)> {
    let rows: Vec<CellSummary> = reports.iter().map(PredictiveReport::summary).collect();
    correlation_from_summaries(&rows)
}

pub fn correlation_from_summaries(rows: &[CellSummary]) -> Result<(f64, f64)> {
    let scored: Vec<&CellSummary> = rows.iter().filter(|r| r.score.is_some()).collect();
    if scored.len() < 3 {
        return Err(Error::TooFewPoints(scored.len()));
    }
    let ent: Vec<f64> = scored.iter().map(|r| r.mean_entropy).collect();
    let acc: Vec<f64> = scored.iter().map(|r| r.score.expect("filtered")).collect();
    pearson(&ent, &acc)
}
