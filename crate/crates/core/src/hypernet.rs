//! The parameter generator.
//!
//! A task latent `t` and a language latent `l` are combined into
//! `t ⊕ l ⊕ (t − l) ⊕ (t ⊙ l)` and pushed through a stack of affine + ReLU
//! layers shared by two heads: a linear head producing the mean of the
//! classifier parameters θ and a softplus head producing their variance.
//! θ has `d = e·c + c` entries and is reshaped into a weight `W ∈ ℝ^{e×c}`
//! and a bias `b ∈ ℝ^c`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::gauss::{sigmoid, softplus, softplus_inv};
use crate::linalg::Matrix;
use crate::rng;

/// Initial variance of every generated parameter.
const INITIAL_THETA_VARIANCE: f64 = 1e-3;
/// Extra shrink applied to the variance head's initial weights.
const PHI_HEAD_WEIGHT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    fn uniform<R: Rng>(rng: &mut R, input: usize, output: usize, bound: f64) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Self {
            weight: Matrix::from_fn(output, input, |_, _| dist.sample(rng)),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        y
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Affine) -> Vec<f64> {
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[r] += g;
            for (w, &xi) in grad.weight.row_mut(r).iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        self.weight.matvec_t(dy)
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim())
    }
}

/// Sizes shared by the generator and the classifier head it feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HyperDims {
    /// Latent width.
    pub h: usize,
    /// Token-embedding width.
    pub e: usize,
    /// Maximum class count over all tasks.
    pub c: usize,
}

impl HyperDims {
    pub fn d(&self) -> usize {
        self.e * self.c + self.c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperNet {
    dims: HyperDims,
    /// Tied trunk used by both heads.
    pub shared: Vec<Affine>,
    /// Mean head, linear output.
    pub psi_head: Affine,
    /// Variance head, softplus output.
    pub phi_head: Affine,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `combine(t, l)` followed by each shared layer's ReLU output.
    activations: Vec<Vec<f64>>,
    phi_pre: Vec<f64>,
    pub theta_mean: Vec<f64>,
    pub theta_var: Vec<f64>,
}

pub fn combine(t: &[f64], l: &[f64]) -> Result<Vec<f64>> {
    if t.len() != l.len() {
        return Err(Error::DimensionMismatch {
            what: "language latent",
            expected: t.len(),
            got: l.len(),
        });
    }
    let mut out = Vec::with_capacity(4 * t.len());
    out.extend_from_slice(t);
    out.extend_from_slice(l);
    out.extend(t.iter().zip(l).map(|(a, b)| a - b));
    out.extend(t.iter().zip(l).map(|(a, b)| a * b));
    Ok(out)
}

fn combine_backward(t: &[f64], l: &[f64], dz: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = t.len();
    let (d_t, rest) = dz.split_at(h);
    let (d_l, rest) = rest.split_at(h);
    let (d_diff, d_prod) = rest.split_at(h);
    let dt = (0..h)
        .map(|i| d_t[i] + d_diff[i] + d_prod[i] * l[i])
        .collect();
    let dl = (0..h)
        .map(|i| d_l[i] - d_diff[i] + d_prod[i] * t[i])
        .collect();
    (dt, dl)
}

impl HyperNet {
    /// Randomly initialized network with the given shared hidden widths.
    ///
    /// Hidden layers use Kaiming-uniform fan-in scaling, the mean head
    /// LeCun-uniform scaling, and the variance head starts near-constant at
    /// a small variance.
    pub fn init(dims: HyperDims, hidden: &[usize], seed: u64) -> Result<Self> {
        if dims.h == 0 || dims.e == 0 || dims.c == 0 {
            return Err(Error::InvalidArgument(
                "hypernetwork dims must be positive".into(),
            ));
        }
        if hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden widths must be positive".into(),
            ));
        }
        let mut rng = rng::stream(seed, "hypernet-init", &[]);
        let mut shared = Vec::with_capacity(hidden.len());
        let mut fan_in = 4 * dims.h;
        for &width in hidden {
            let bound = (6.0 / fan_in as f64).sqrt();
            shared.push(Affine::uniform(&mut rng, fan_in, width, bound));
            fan_in = width;
        }
        let head_bound = (3.0 / fan_in as f64).sqrt();
        let psi_head = Affine::uniform(&mut rng, fan_in, dims.d(), head_bound);
        let mut phi_head = Affine::uniform(
            &mut rng,
            fan_in,
            dims.d(),
            head_bound * PHI_HEAD_WEIGHT_SCALE,
        );
        phi_head.bias = vec![softplus_inv(INITIAL_THETA_VARIANCE); dims.d()];
        Ok(Self {
            dims,
            shared,
            psi_head,
            phi_head,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(dims: HyperDims, hidden: &[usize]) -> Self {
        let mut fan_in = 4 * dims.h;
        let mut shared = Vec::with_capacity(hidden.len());
        for &width in hidden {
            shared.push(Affine::zeros(fan_in, width));
            fan_in = width;
        }
        Self {
            dims,
            shared,
            psi_head: Affine::zeros(fan_in, dims.d()),
            phi_head: Affine::zeros(fan_in, dims.d()),
        }
    }

    pub fn dims(&self) -> HyperDims {
        self.dims
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.shared.iter().map(Affine::output_dim).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims,
            shared: self.shared.iter().map(Affine::zeros_like).collect(),
            psi_head: self.psi_head.zeros_like(),
            phi_head: self.phi_head.zeros_like(),
        }
    }

    pub fn forward_cached(&self, t: &[f64], l: &[f64]) -> Result<ForwardCache> {
        if t.len() != self.dims.h {
            return Err(Error::DimensionMismatch {
                what: "task latent",
                expected: self.dims.h,
                got: t.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.shared.len() + 1);
        activations.push(combine(t, l)?);
        for layer in &self.shared {
            let mut a = layer.forward(activations.last().expect("non-empty"));
            a.iter_mut().for_each(|v| *v = v.max(0.0));
            activations.push(a);
        }
        let top = activations.last().expect("non-empty");
        let theta_mean = self.psi_head.forward(top);
        let phi_pre = self.phi_head.forward(top);
        let theta_var = phi_pre.iter().map(|&x| softplus(x)).collect();
        Ok(ForwardCache {
            activations,
            phi_pre,
            theta_mean,
            theta_var,
        })
    }

    /// Mean and variance of θ for the latent pair `(t, l)`.
    pub fn forward(&self, t: &[f64], l: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.forward_cached(t, l)?;
        Ok((cache.theta_mean, cache.theta_var))
    }

    /// Only the mean head; skips the variance head entirely.
    pub fn forward_mean(&self, t: &[f64], l: &[f64]) -> Result<Vec<f64>> {
        let mut a = combine(t, l)?;
        for layer in &self.shared {
            a = layer.forward(&a);
            a.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(self.psi_head.forward(&a))
    }

    /// Accumulates parameter gradients into `grad` and returns `(∂L/∂t, ∂L/∂l)`.
    pub fn backward(
        &self,
        t: &[f64],
        l: &[f64],
        cache: &ForwardCache,
        d_mean: &[f64],
        d_var: &[f64],
        grad: &mut HyperNet,
    ) -> (Vec<f64>, Vec<f64>) {
        let top = cache.activations.last().expect("non-empty");
        let d_phi_pre: Vec<f64> = d_var
            .iter()
            .zip(&cache.phi_pre)
            .map(|(g, &x)| g * sigmoid(x))
            .collect();
        let mut da = self.psi_head.backward(top, d_mean, &mut grad.psi_head);
        let da_phi = self.phi_head.backward(top, &d_phi_pre, &mut grad.phi_head);
        for (a, b) in da.iter_mut().zip(da_phi) {
            *a += b;
        }
        for (i, layer) in self.shared.iter().enumerate().rev() {
            let out = &cache.activations[i + 1];
            for (g, &o) in da.iter_mut().zip(out) {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }
            da = layer.backward(&cache.activations[i], &da, &mut grad.shared[i]);
        }
        combine_backward(t, l, &da)
    }

    /// Named parameter arrays in a fixed order.
    pub fn arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn push<'a>(
            name: String,
            layer: &'a Affine,
            out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
        ) {
            let (o, i) = (layer.output_dim(), layer.input_dim());
            out.push((
                format!("{name}.weight"),
                vec![o, i],
                layer.weight.as_slice(),
            ));
            out.push((format!("{name}.bias"), vec![o], layer.bias.as_slice()));
        }
        let mut out = Vec::new();
        for (i, layer) in self.shared.iter().enumerate() {
            push(format!("net.shared.{i}"), layer, &mut out);
        }
        push("net.psi_head".into(), &self.psi_head, &mut out);
        push("net.phi_head".into(), &self.phi_head, &mut out);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in self
            .shared
            .iter_mut()
            .chain([&mut self.psi_head, &mut self.phi_head])
        {
            out.push(layer.weight.as_mut_slice());
            out.push(&mut layer.bias);
        }
        out
    }
}

/// `mean + sqrt(var) ⊙ noise`
pub fn sample_theta(mean: &[f64], var: &[f64], noise: &[f64]) -> Vec<f64> {
    mean.iter()
        .zip(var)
        .zip(noise)
        .map(|((&m, &v), &z)| m + v.sqrt() * z)
        .collect()
}

/// Backpropagates `∂L/∂θ` through [`sample_theta`] into `(∂L/∂mean, ∂L/∂var)`.
pub fn sample_theta_backward(var: &[f64], noise: &[f64], d_theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d_mean = d_theta.to_vec();
    let d_var = d_theta
        .iter()
        .zip(var)
        .zip(noise)
        .map(|((&g, &v), &z)| g * z / (2.0 * v.sqrt()))
        .collect();
    (d_mean, d_var)
}

/// Affine classifier head: `logits = Wᵀ·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `e × c`; row = embedding index, column = class.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(e: usize, c: usize) -> Self {
        Self {
            weight: Matrix::zeros(e, c),
            bias: vec![0.0; c],
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn class_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.weight.as_slice().to_vec();
        out.extend_from_slice(&self.bias);
        out
    }
}

pub fn reshape_theta(theta: &[f64], e: usize, c: usize) -> Result<HeadParams> {
    let d = e * c + c;
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            what: "theta",
            expected: d,
            got: theta.len(),
        });
    }
    let (w, b) = theta.split_at(e * c);
    Ok(HeadParams {
        weight: Matrix::from_row_major(e, c, w.to_vec())?,
        bias: b.to_vec(),
    })
}
