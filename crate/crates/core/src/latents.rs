//! Variational posteriors for every task and every language.
//!
//! Priors are fixed to `N(0, I)`, so the store only holds the variational
//! side. All posteriors share one covariance family and width.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::gauss::{self, DiagGaussian, LowRankGaussian, NoiseDraw};
use crate::linalg::Matrix;
use crate::rng::{self, NoiseSource};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(TaskId);
string_id!(LangId);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Diagonal,
    LowRank { k: usize },
}

impl Family {
    pub fn rank(self) -> usize {
        match self {
            Family::Diagonal => 0,
            Family::LowRank { k } => k,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Diagonal => f.write_str("diagonal"),
            Family::LowRank { k } => write!(f, "low_rank:{k}"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "diagonal" {
            return Ok(Family::Diagonal);
        }
        if let Some(k) = s.strip_prefix("low_rank:") {
            let k = k
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad rank in family `{s}`")))?;
            return Ok(Family::LowRank { k });
        }
        Err(Error::InvalidArgument(format!("unknown family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Posterior {
    Diag(DiagGaussian),
    LowRank(LowRankGaussian),
}

impl Posterior {
    pub fn mean(&self) -> &[f64] {
        match self {
            Posterior::Diag(q) => &q.mean,
            Posterior::LowRank(q) => &q.mean,
        }
    }

    pub fn rho(&self) -> &[f64] {
        match self {
            Posterior::Diag(q) => &q.rho,
            Posterior::LowRank(q) => &q.rho,
        }
    }

    pub fn rho_mut(&mut self) -> &mut [f64] {
        match self {
            Posterior::Diag(q) => &mut q.rho,
            Posterior::LowRank(q) => &mut q.rho,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean().len()
    }

    pub fn factor(&self) -> Option<&Matrix> {
        match self {
            Posterior::Diag(_) => None,
            Posterior::LowRank(q) => Some(&q.factor),
        }
    }

    pub fn kl_to_std(&self) -> Result<f64> {
        match self {
            Posterior::Diag(q) => Ok(gauss::kl_diag_to_std(q)),
            Posterior::LowRank(q) => gauss::kl_lowrank_to_std(q),
        }
    }

    pub fn kl_backward(&self, weight: f64, grad: &mut Posterior) -> Result<()> {
        match (self, grad) {
            (Posterior::Diag(q), Posterior::Diag(g)) => {
                gauss::kl_diag_backward(q, weight, g);
                Ok(())
            }
            (Posterior::LowRank(q), Posterior::LowRank(g)) => {
                gauss::kl_lowrank_backward(q, weight, g)
            }
            _ => unreachable!("gradient shape differs from posterior"),
        }
    }

    /// Draws the noise this posterior's reparametrization consumes.
    ///
    /// `epsilon` comes from `latent`, `zeta` (low-rank only) from `factor`,
    /// so the epsilon stream is the same whichever family is in use.
    pub fn draw_noise(
        &self,
        latent: &mut dyn NoiseSource,
        factor: &mut dyn NoiseSource,
    ) -> NoiseDraw {
        let epsilon = latent.draw(self.dim());
        let zeta = match self {
            Posterior::Diag(_) => None,
            Posterior::LowRank(q) => Some(factor.draw(q.rank())),
        };
        NoiseDraw { epsilon, zeta }
    }

    pub fn sample(&self, noise: &NoiseDraw) -> Vec<f64> {
        match self {
            Posterior::Diag(q) => gauss::sample_diag(q, noise),
            Posterior::LowRank(q) => gauss::sample_lowrank(q, noise),
        }
    }

    pub fn sample_backward(&self, noise: &NoiseDraw, upstream: &[f64], grad: &mut Posterior) {
        match (self, grad) {
            (Posterior::Diag(q), Posterior::Diag(g)) => {
                gauss::sample_diag_backward(q, noise, upstream, g)
            }
            (Posterior::LowRank(q), Posterior::LowRank(g)) => {
                gauss::sample_lowrank_backward(q, noise, upstream, g)
            }
            _ => unreachable!("gradient shape differs from posterior"),
        }
    }

    pub fn zeros_like(&self) -> Posterior {
        match self {
            Posterior::Diag(q) => Posterior::Diag(q.zeros_like()),
            Posterior::LowRank(q) => Posterior::LowRank(q.zeros_like()),
        }
    }

    /// Named parameter arrays in a fixed order: mean, rho, then factor.
    pub fn arrays(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let h = self.dim();
        match self {
            Posterior::Diag(q) => vec![("mean", vec![h], &q.mean), ("rho", vec![h], &q.rho)],
            Posterior::LowRank(q) => vec![
                ("mean", vec![h], &q.mean),
                ("rho", vec![h], &q.rho),
                ("factor", vec![h, q.rank()], q.factor.as_slice()),
            ],
        }
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Posterior::Diag(q) => vec![&mut q.mean, &mut q.rho],
            Posterior::LowRank(q) => {
                vec![&mut q.mean, &mut q.rho, q.factor.as_mut_slice()]
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.arrays().iter().map(|(_, _, a)| a.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentStore {
    pub(crate) h: usize,
    pub(crate) family: Family,
    pub(crate) tasks: BTreeMap<TaskId, Posterior>,
    pub(crate) langs: BTreeMap<LangId, Posterior>,
}

fn check_unique<T: fmt::Display + Ord>(ids: &[T]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

/// Means start at `N(0, 0.1²)`, rho and factor entries at `U(0, 0.5)`.
///
/// Factors come from their own generator so that a low-rank store shares
/// its means and rho with the diagonal store built from the same seed.
fn init_posterior<R: Rng>(rng: &mut R, factor_rng: &mut R, family: Family, h: usize) -> Posterior {
    let normal = Normal::new(0.0, 0.1).expect("valid std");
    let uniform = Uniform::new(0.0, 0.5).expect("valid range");
    let mean: Vec<f64> = (0..h).map(|_| normal.sample(rng)).collect();
    let rho: Vec<f64> = (0..h).map(|_| uniform.sample(rng)).collect();
    match family {
        Family::Diagonal => Posterior::Diag(DiagGaussian { mean, rho }),
        Family::LowRank { k } => {
            let factor = Matrix::from_fn(h, k, |_, _| uniform.sample(factor_rng));
            Posterior::LowRank(LowRankGaussian { mean, rho, factor })
        }
    }
}

pub fn init_store(
    tasks: &[TaskId],
    langs: &[LangId],
    family: Family,
    h: usize,
    seed: u64,
) -> Result<LatentStore> {
    if h == 0 {
        return Err(Error::InvalidArgument("latent width h must be >= 1".into()));
    }
    if let Family::LowRank { k } = family {
        if k == 0 || k > h {
            return Err(Error::InvalidArgument(format!(
                "rank k = {k} must satisfy 1 <= k <= h = {h}"
            )));
        }
    }
    if tasks.is_empty() || langs.is_empty() {
        return Err(Error::InvalidArgument(
            "task and language lists must be non-empty".into(),
        ));
    }
    check_unique(tasks)?;
    check_unique(langs)?;

    let mut rng = rng::stream(seed, "latent-init", &[]);
    let mut factor_rng = rng::stream(seed, "latent-init-factor", &[]);
    let mut store = LatentStore {
        h,
        family,
        tasks: BTreeMap::new(),
        langs: BTreeMap::new(),
    };
    for t in tasks {
        store.tasks.insert(
            t.clone(),
            init_posterior(&mut rng, &mut factor_rng, family, h),
        );
    }
    for l in langs {
        store.langs.insert(
            l.clone(),
            init_posterior(&mut rng, &mut factor_rng, family, h),
        );
    }
    Ok(store)
}

impl LatentStore {
    /// Builds a store from explicit posteriors.
    pub fn from_posteriors(
        family: Family,
        tasks: Vec<(TaskId, Posterior)>,
        langs: Vec<(LangId, Posterior)>,
    ) -> Result<Self> {
        let h = tasks
            .first()
            .map(|(_, p)| p.dim())
            .ok_or_else(|| Error::InvalidArgument("store needs at least one task".into()))?;
        let mut store = LatentStore {
            h,
            family,
            tasks: BTreeMap::new(),
            langs: BTreeMap::new(),
        };
        let check = |p: &Posterior| -> Result<()> {
            let ok_family = matches!(
                (family, p),
                (Family::Diagonal, Posterior::Diag(_))
                    | (Family::LowRank { .. }, Posterior::LowRank(_))
            );
            if !ok_family || p.dim() != h || p.factor().map_or(0, |f| f.cols()) != family.rank() {
                return Err(Error::InvalidArgument(
                    "posteriors must share family and dimensions".into(),
                ));
            }
            Ok(())
        };
        for (id, p) in tasks {
            check(&p)?;
            if store.tasks.insert(id.clone(), p).is_some() {
                return Err(Error::DuplicateId(id.0));
            }
        }
        for (id, p) in langs {
            check(&p)?;
            if store.langs.insert(id.clone(), p).is_some() {
                return Err(Error::DuplicateId(id.0));
            }
        }
        Ok(store)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks.keys()
    }

    pub fn lang_ids(&self) -> impl Iterator<Item = &LangId> {
        self.langs.keys()
    }

    pub fn task(&self, id: &TaskId) -> Result<&Posterior> {
        self.tasks
            .get(id)
            .ok_or_else(|| Error::UnknownTask(id.0.clone()))
    }

    pub fn lang(&self, id: &LangId) -> Result<&Posterior> {
        self.langs
            .get(id)
            .ok_or_else(|| Error::UnknownLang(id.0.clone()))
    }

    pub fn task_mut(&mut self, id: &TaskId) -> Result<&mut Posterior> {
        self.tasks
            .get_mut(id)
            .ok_or_else(|| Error::UnknownTask(id.0.clone()))
    }

    pub fn lang_mut(&mut self, id: &LangId) -> Result<&mut Posterior> {
        self.langs
            .get_mut(id)
            .ok_or_else(|| Error::UnknownLang(id.0.clone()))
    }

    pub fn posteriors(&self) -> impl Iterator<Item = &Posterior> {
        self.tasks.values().chain(self.langs.values())
    }

    pub fn posteriors_mut(&mut self) -> impl Iterator<Item = &mut Posterior> {
        self.tasks.values_mut().chain(self.langs.values_mut())
    }

    pub fn zeros_like(&self) -> LatentStore {
        LatentStore {
            h: self.h,
            family: self.family,
            tasks: self
                .tasks
                .iter()
                .map(|(k, v)| (k.clone(), v.zeros_like()))
                .collect(),
            langs: self
                .langs
                .iter()
                .map(|(k, v)| (k.clone(), v.zeros_like()))
                .collect(),
        }
    }

    /// Named parameter arrays: `task.<id>.<field>` then `lang.<id>.<field>`.
    pub fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (id, p) in &self.tasks {
            for (field, shape, a) in p.arrays() {
                out.push((format!("task.{id}.{field}"), shape, a));
            }
        }
        for (id, p) in &self.langs {
            for (field, shape, a) in p.arrays() {
                out.push((format!("lang.{id}.{field}"), shape, a));
            }
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        self.tasks
            .values_mut()
            .chain(self.langs.values_mut())
            .flat_map(|p| p.arrays_mut())
            .collect()
    }
}

/// Sum of `KL(q ‖ N(0, I))` over every task and language posterior.
pub fn kl_penalty(store: &LatentStore) -> Result<f64> {
    let mut total = 0.0;
    for p in store.posteriors() {
        total += p.kl_to_std()?;
    }
    Ok(total)
}

pub fn kl_penalty_backward(store: &LatentStore, weight: f64, grad: &mut LatentStore) -> Result<()> {
    for (p, g) in store.posteriors().zip(grad.posteriors_mut()) {
        p.kl_backward(weight, g)?;
    }
    Ok(())
}
