//! Classification head: masked softmax, token log-likelihood and entropy.
//!
//! Every task pads its classes up to the global maximum `c`. Classes beyond
//! a task's own inventory are masked out of the softmax, so they carry
//! exactly zero probability whatever values the head holds there.

use crate::error::{Error, Result};
use crate::hypernet::HeadParams;
use crate::latents::TaskId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSchema {
    pub task: TaskId,
    labels: Vec<String>,
}

impl TaskSchema {
    pub fn new(task: TaskId, labels: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateId(l.clone()));
            }
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "task `{task}` has no labels"
            )));
        }
        Ok(Self { task, labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// A BIO tag set: `O` plus labels that all start with `B-` or `I-`.
    pub fn is_span_based(&self) -> bool {
        self.labels.iter().any(|l| l == "O")
            && self
                .labels
                .iter()
                .all(|l| l == "O" || l.starts_with("B-") || l.starts_with("I-"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDist {
    pub probs: Vec<f64>,
}

impl PredictiveDist {
    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// `Wᵀ·x + b` restricted to the first `n_classes` columns.
pub fn logits(params: &HeadParams, embedding: &[f64], n_classes: usize) -> Vec<f64> {
    debug_assert_eq!(embedding.len(), params.embedding_dim());
    let mut out = params.bias[..n_classes].to_vec();
    for (i, &x) in embedding.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &params.weight.row(i)[..n_classes];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
    out
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

fn check_width(params: &HeadParams, embedding: &[f64], schema: &TaskSchema) -> Result<()> {
    if embedding.len() != params.embedding_dim() {
        return Err(Error::DimensionMismatch {
            what: "token embedding",
            expected: params.embedding_dim(),
            got: embedding.len(),
        });
    }
    if schema.class_count() > params.class_dim() {
        return Err(Error::DimensionMismatch {
            what: "head classes",
            expected: schema.class_count(),
            got: params.class_dim(),
        });
    }
    Ok(())
}

pub fn class_distribution(
    params: &HeadParams,
    embedding: &[f64],
    schema: &TaskSchema,
) -> Result<PredictiveDist> {
    check_width(params, embedding, schema)?;
    let lp = log_softmax(&logits(params, embedding, schema.class_count()));
    Ok(PredictiveDist {
        probs: lp.into_iter().map(f64::exp).collect(),
    })
}

pub fn log_likelihood(
    params: &HeadParams,
    embedding: &[f64],
    schema: &TaskSchema,
    gold: &str,
) -> Result<f64> {
    check_width(params, embedding, schema)?;
    let gold = schema
        .index_of(gold)
        .ok_or_else(|| Error::UnknownLabel(gold.to_string()))?;
    Ok(log_softmax(&logits(params, embedding, schema.class_count()))[gold])
}

/// Token negative log-likelihood and its gradient.
///
/// Adds `scale · ∂(−ln p(gold))/∂θ` into `d_theta`, laid out like
/// [`HeadParams::flatten`] with `c` columns. Masked classes get no gradient.
pub(crate) fn nll_backward(
    params: &HeadParams,
    embedding: &[f64],
    n_classes: usize,
    gold: usize,
    scale: f64,
    d_theta: &mut [f64],
) -> f64 {
    let c = params.class_dim();
    let e = params.embedding_dim();
    let lp = log_softmax(&logits(params, embedding, n_classes));
    let mut dz: Vec<f64> = lp.iter().map(|&v| v.exp()).collect();
    dz[gold] -= 1.0;
    for (i, &x) in embedding.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &mut d_theta[i * c..i * c + n_classes];
        for (g, &d) in row.iter_mut().zip(&dz) {
            *g += scale * d * x;
        }
    }
    for (g, &d) in d_theta[e * c..e * c + n_classes].iter_mut().zip(&dz) {
        *g += scale * d;
    }
    -lp[gold]
}

/// Entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy(dist: &PredictiveDist) -> f64 {
    -dist
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}
