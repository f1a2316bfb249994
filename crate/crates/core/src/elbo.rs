//! The stochastic ELBO for one SVI step and its exact pathwise gradient.
//!
//! For a sampled cell `(task, lang)` and a batch of labeled tokens, the
//! negative ELBO contribution is
//!
//! ```text
//! value = −(1/V) Σ_v Σ_batch ln p(y | x, θ⁽ᵛ⁾)  +  kl_weight · Σ_posteriors KL(q ‖ N(0, I))
//! ```
//!
//! where each MC sample draws `t⁽ᵛ⁾`, `l⁽ᵛ⁾` from their posteriors and
//! `θ⁽ᵛ⁾ ~ N(f_ψ(t, l), diag(f_φ(t, l)))`, all by reparametrization. The
//! latent and θ draws are shared across the batch within one sample `v`.
//!
//! Once the noise is fixed ([`StepNoise`]) the value is a deterministic
//! function of the parameters, and [`value_and_gradient`] returns its exact
//! gradient by hand-written reverse-mode differentiation.

use crate::error::{Error, Result};
use crate::gauss::NoiseDraw;
use crate::hypernet::{reshape_theta, sample_theta, sample_theta_backward};
use crate::latents::{kl_penalty, kl_penalty_backward, LangId, TaskId};
use crate::likelihood::{log_softmax, logits, nll_backward, TaskSchema};
use crate::model::Model;
use crate::rng::NoiseSource;

/// One batch item.
#[derive(Debug, Clone, Copy)]
pub struct LabeledToken<'a> {
    pub embedding: &'a [f64],
    /// Index into the task schema's labels.
    pub gold: usize,
}

/// Noise consumed by one Monte Carlo sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleNoise {
    pub task: NoiseDraw,
    pub lang: NoiseDraw,
    pub theta: Vec<f64>,
}

/// All noise used by one step; replaying it reproduces the step exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    pub samples: Vec<SampleNoise>,
}

/// Separate sources for the latent ε, the low-rank ζ and the θ noise.
pub struct NoiseSources<'a> {
    pub latent: &'a mut dyn NoiseSource,
    pub factor: &'a mut dyn NoiseSource,
    pub theta: &'a mut dyn NoiseSource,
}

impl StepNoise {
    pub fn draw(
        model: &Model,
        task: &TaskId,
        lang: &LangId,
        mc_samples: usize,
        sources: &mut NoiseSources<'_>,
    ) -> Result<Self> {
        let tq = model.store.task(task)?;
        let lq = model.store.lang(lang)?;
        let d = model.dims().d();
        let samples = (0..mc_samples)
            .map(|_| {
                let task = tq.draw_noise(sources.latent, sources.factor);
                let lang = lq.draw_noise(sources.latent, sources.factor);
                let theta = sources.theta.draw(d);
                SampleNoise { task, lang, theta }
            })
            .collect();
        Ok(Self { samples })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepObjective {
    /// `neg_log_lik + kl_weighted`
    pub value: f64,
    pub neg_log_lik: f64,
    pub kl_weighted: f64,
    pub noise_record: StepNoise,
}

fn validate(
    model: &Model,
    batch: &[LabeledToken<'_>],
    schema: &TaskSchema,
    task: &TaskId,
    lang: &LangId,
    noise: &StepNoise,
) -> Result<()> {
    if model.store.task(task).is_err() || model.store.lang(lang).is_err() {
        return Err(Error::UnknownCell {
            task: task.0.clone(),
            lang: lang.0.clone(),
        });
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if noise.samples.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one Monte Carlo sample".into(),
        ));
    }
    let dims = model.dims();
    if schema.class_count() > dims.c {
        return Err(Error::DimensionMismatch {
            what: "task class count",
            expected: dims.c,
            got: schema.class_count(),
        });
    }
    for tok in batch {
        if tok.embedding.len() != dims.e {
            return Err(Error::DimensionMismatch {
                what: "token embedding",
                expected: dims.e,
                got: tok.embedding.len(),
            });
        }
        if tok.gold >= schema.class_count() {
            return Err(Error::UnknownLabel(format!("class index {}", tok.gold)));
        }
    }
    Ok(())
}

fn run(
    model: &Model,
    batch: &[LabeledToken<'_>],
    schema: &TaskSchema,
    task: &TaskId,
    lang: &LangId,
    kl_weight: f64,
    noise: &StepNoise,
    mut grad: Option<&mut Model>,
) -> Result<StepObjective> {
    validate(model, batch, schema, task, lang, noise)?;
    let dims = model.dims();
    let n_classes = schema.class_count();
    let tq = model.store.task(task)?;
    let lq = model.store.lang(lang)?;
    let v_count = noise.samples.len() as f64;
    let scale = 1.0 / v_count;

    let mut nll_total = 0.0;
    for sample in &noise.samples {
        let t = tq.sample(&sample.task);
        let l = lq.sample(&sample.lang);
        let cache = model.net.forward_cached(&t, &l)?;
        let theta = sample_theta(&cache.theta_mean, &cache.theta_var, &sample.theta);
        let head = reshape_theta(&theta, dims.e, dims.c)?;

        let mut sample_nll = 0.0;
        match grad.as_deref_mut() {
            None => {
                for tok in batch {
                    sample_nll -= log_softmax(&logits(&head, tok.embedding, n_classes))[tok.gold];
                }
            }
            Some(g) => {
                let mut d_theta = vec![0.0; dims.d()];
                for tok in batch {
                    sample_nll += nll_backward(
                        &head,
                        tok.embedding,
                        n_classes,
                        tok.gold,
                        scale,
                        &mut d_theta,
                    );
                }
                let (d_mean, d_var) =
                    sample_theta_backward(&cache.theta_var, &sample.theta, &d_theta);
                let (dt, dl) = model
                    .net
                    .backward(&t, &l, &cache, &d_mean, &d_var, &mut g.net);
                tq.sample_backward(&sample.task, &dt, g.store.task_mut(task)?);
                lq.sample_backward(&sample.lang, &dl, g.store.lang_mut(lang)?);
            }
        }
        nll_total += sample_nll;
    }
    let neg_log_lik = nll_total / v_count;
    let kl_weighted = kl_weight * kl_penalty(&model.store)?;
    if let Some(g) = grad {
        if kl_weight != 0.0 {
            kl_penalty_backward(&model.store, kl_weight, &mut g.store)?;
        }
    }
    Ok(StepObjective {
        value: neg_log_lik + kl_weighted,
        neg_log_lik,
        kl_weighted,
        noise_record: noise.clone(),
    })
}

/// Evaluates the step objective for a fixed noise record.
pub fn evaluate_with_noise(
    model: &Model,
    batch: &[LabeledToken<'_>],
    schema: &TaskSchema,
    task: &TaskId,
    lang: &LangId,
    kl_weight: f64,
    noise: &StepNoise,
) -> Result<StepObjective> {
    run(model, batch, schema, task, lang, kl_weight, noise, None)
}

/// Draws `mc_samples` noise samples from `sources` and evaluates the step.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_step(
    model: &Model,
    batch: &[LabeledToken<'_>],
    schema: &TaskSchema,
    task: &TaskId,
    lang: &LangId,
    mc_samples: usize,
    kl_weight: f64,
    sources: &mut NoiseSources<'_>,
) -> Result<StepObjective> {
    if mc_samples == 0 {
        return Err(Error::InvalidArgument("V must be >= 1".into()));
    }
    let noise = StepNoise::draw(model, task, lang, mc_samples, sources)?;
    evaluate_with_noise(model, batch, schema, task, lang, kl_weight, &noise)
}

/// Objective value plus its gradient, shaped like the model.
pub fn value_and_gradient(
    model: &Model,
    batch: &[LabeledToken<'_>],
    schema: &TaskSchema,
    task: &TaskId,
    lang: &LangId,
    kl_weight: f64,
    noise: &StepNoise,
) -> Result<(StepObjective, Model)> {
    let mut grad = model.zeros_like();
    let obj = run(
        model,
        batch,
        schema,
        task,
        lang,
        kl_weight,
        noise,
        Some(&mut grad),
    )?;
    Ok((obj, grad))
}

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, params: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Exact gradient of `objective` at `params`.
pub fn gradient<O: Objective + ?Sized>(objective: &O, params: &[f64]) -> Result<Vec<f64>> {
    if params.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: objective.dim(),
            got: params.len(),
        });
    }
    Ok(objective.value_and_gradient(params)?.1)
}

/// The step objective as a function of all model parameters, noise fixed.
pub struct StepProblem<'a> {
    pub template: Model,
    pub batch: Vec<LabeledToken<'a>>,
    pub schema: TaskSchema,
    pub task: TaskId,
    pub lang: LangId,
    pub kl_weight: f64,
    pub noise: StepNoise,
}

impl StepProblem<'_> {
    fn model_at(&self, params: &[f64]) -> Result<Model> {
        let mut m = self.template.clone();
        m.load_flat(params)?;
        Ok(m)
    }
}

impl Objective for StepProblem<'_> {
    fn dim(&self) -> usize {
        self.template.param_count()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let m = self.model_at(params)?;
        Ok(evaluate_with_noise(
            &m,
            &self.batch,
            &self.schema,
            &self.task,
            &self.lang,
            self.kl_weight,
            &self.noise,
        )?
        .value)
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.model_at(params)?;
        let (obj, grad) = value_and_gradient(
            &m,
            &self.batch,
            &self.schema,
            &self.task,
            &self.lang,
            self.kl_weight,
            &self.noise,
        )?;
        Ok((obj.value, grad.flatten()))
    }
}
