//! The full trainable state: latent posteriors plus the hypernetwork.

use crate::error::{Error, Result};
use crate::hypernet::{HeadParams, HyperDims, HyperNet};
use crate::latents::{LangId, LatentStore, TaskId};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub store: LatentStore,
    pub net: HyperNet,
}

impl Model {
    pub fn new(store: LatentStore, net: HyperNet) -> Result<Self> {
        if store.h() != net.dims().h {
            return Err(Error::DimensionMismatch {
                what: "hypernetwork latent width",
                expected: store.h(),
                got: net.dims().h,
            });
        }
        Ok(Self { store, net })
    }

    pub fn dims(&self) -> HyperDims {
        self.net.dims()
    }

    pub fn zeros_like(&self) -> Model {
        Model {
            store: self.store.zeros_like(),
            net: self.net.zeros_like(),
        }
    }

    /// Every parameter array with its checkpoint name and shape.
    pub fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = self.store.arrays();
        out.extend(self.net.arrays());
        out
    }

    /// Mutable views in the same order as [`Model::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.store.arrays_mut();
        out.extend(self.net.arrays_mut());
        out
    }

    /// Per-array flag marking low-rank covariance factors.
    pub fn factor_mask(&self) -> Vec<bool> {
        self.arrays()
            .iter()
            .map(|(name, _, _)| name.ends_with(".factor"))
            .collect()
    }

    /// Sets every low-rank factor to zero. No-op for diagonal stores.
    pub fn zero_factors(&mut self) {
        let mask = self.factor_mask();
        for (a, is_factor) in self.arrays_mut().into_iter().zip(mask) {
            if is_factor {
                a.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.arrays().iter().map(|(_, _, a)| a.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, _, a) in self.arrays() {
            out.extend_from_slice(a);
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "flat parameter vector",
                expected,
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for a in self.arrays_mut() {
            let n = a.len();
            a.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Plug-in head `f_ψ(m_t, m_l)` for a cell, reshaped into `(W, b)`.
    pub fn mean_head(&self, task: &TaskId, lang: &LangId) -> Result<HeadParams> {
        let t = self.store.task(task)?.mean();
        let l = self.store.lang(lang)?.mean();
        let theta = self.net.forward_mean(t, l)?;
        let dims = self.dims();
        crate::hypernet::reshape_theta(&theta, dims.e, dims.c)
    }
}
