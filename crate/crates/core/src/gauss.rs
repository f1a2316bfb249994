//! Gaussian variational families over a latent vector of width `h`.
//!
//! Variances are parameterized as `δ² = softplus(ρ)` so every unconstrained
//! `ρ` yields a valid covariance. Two structures are supported:
//!
//! * diagonal, `S = diag(δ²)`;
//! * diagonal plus low rank, `S = diag(δ²) + B·Bᵀ` with `B` of shape `h × k`.
//!
//! KL divergences to the standard normal are evaluated in closed form, and
//! the low-rank log-determinant goes through the matrix determinant lemma so
//! that the `h × h` covariance is never formed. Randomness never lives here:
//! reparametrized draws take their noise as an explicit [`NoiseDraw`].
//!
//! Each KL and sampling routine has a matching `*_backward` function that
//! accumulates the exact gradient with respect to `(mean, rho, factor)`.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Lu, Matrix};

/// Above this point `ln(1 + eˣ) − x < 1e−13`, so the stable branch is used.
const SOFTPLUS_THRESHOLD: f64 = 30.0;

pub fn softplus(x: f64) -> f64 {
    if x > SOFTPLUS_THRESHOLD {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], i.e. the logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > SOFTPLUS_THRESHOLD {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub rho: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if mean.len() != rho.len() {
            return Err(Error::DimensionMismatch {
                what: "diagonal Gaussian rho",
                expected: mean.len(),
                got: rho.len(),
            });
        }
        Ok(Self { mean, rho })
    }

    /// Standard normal of width `h`.
    pub fn standard(h: usize) -> Self {
        Self {
            mean: vec![0.0; h],
            rho: vec![softplus_inv(1.0); h],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mean: vec![0.0; self.dim()],
            rho: vec![0.0; self.dim()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankGaussian {
    pub mean: Vec<f64>,
    pub rho: Vec<f64>,
    /// Rank factor `B`, `h × k`.
    pub factor: Matrix,
}

impl LowRankGaussian {
    pub fn new(mean: Vec<f64>, rho: Vec<f64>, factor: Matrix) -> Result<Self> {
        let h = mean.len();
        if rho.len() != h {
            return Err(Error::DimensionMismatch {
                what: "low-rank Gaussian rho",
                expected: h,
                got: rho.len(),
            });
        }
        if factor.rows() != h {
            return Err(Error::DimensionMismatch {
                what: "low-rank Gaussian factor rows",
                expected: h,
                got: factor.rows(),
            });
        }
        if factor.cols() > h {
            return Err(Error::InvalidArgument(format!(
                "rank {} exceeds latent width {h}",
                factor.cols()
            )));
        }
        Ok(Self { mean, rho, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.factor.cols()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }

    /// The full `h × h` covariance. Only for tests and diagnostics.
    pub fn covariance_dense(&self) -> Matrix {
        let h = self.dim();
        let mut s = self.factor.matmul(&self.factor.transpose());
        for (i, v) in self.variance().into_iter().enumerate().take(h) {
            s[(i, i)] += v;
        }
        s
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mean: vec![0.0; self.dim()],
            rho: vec![0.0; self.dim()],
            factor: Matrix::zeros(self.dim(), self.rank()),
        }
    }
}

/// Standard-normal noise for one reparametrized draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub epsilon: Vec<f64>,
    /// Present only for the low-rank family.
    pub zeta: Option<Vec<f64>>,
}

pub fn kl_diag_to_std(q: &DiagGaussian) -> f64 {
    let h = q.dim() as f64;
    let mut quad = 0.0;
    let mut ln_var = 0.0;
    for (&m, &r) in q.mean.iter().zip(&q.rho) {
        let s2 = softplus(r);
        quad += m * m + s2;
        ln_var += s2.ln();
    }
    0.5 * (quad - h - ln_var)
}

/// Accumulates `∂ KL(q ‖ N(0, I)) / ∂(mean, rho)` scaled by `weight` into `grad`.
pub fn kl_diag_backward(q: &DiagGaussian, weight: f64, grad: &mut DiagGaussian) {
    for i in 0..q.dim() {
        let r = q.rho[i];
        let s2 = softplus(r);
        grad.mean[i] += weight * q.mean[i];
        grad.rho[i] += weight * (0.5 * (1.0 - 1.0 / s2) * sigmoid(r));
    }
}

/// Inner `k × k` matrix `I + Bᵀ diag(δ⁻²) B` of the determinant lemma.
fn lemma_inner(q: &LowRankGaussian, inv_var: &[f64]) -> Matrix {
    let k = q.rank();
    let mut inner = Matrix::identity(k);
    for (i, &w) in inv_var.iter().enumerate() {
        let row = q.factor.row(i);
        for a in 0..k {
            let ra = row[a] * w;
            if ra == 0.0 {
                continue;
            }
            for b in 0..k {
                inner[(a, b)] += ra * row[b];
            }
        }
    }
    inner
}

/// `ln det(diag(δ²) + B·Bᵀ)` via the matrix determinant lemma.
pub fn logdet_lowrank(q: &LowRankGaussian) -> Result<f64> {
    let var = q.variance();
    let inv_var: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
    let inner = lemma_inner(q, &inv_var);
    let (inner_logdet, sign) = Lu::factor(&inner)
        .map_err(|_| Error::Singular("low-rank inner matrix (rho underflow?)"))?
        .ln_abs_det();
    if sign <= 0.0 || !inner_logdet.is_finite() {
        return Err(Error::Singular("low-rank inner matrix (rho underflow?)"));
    }
    let diag_logdet: f64 = var.iter().map(|v| v.ln()).sum();
    Ok(inner_logdet + diag_logdet)
}

pub fn kl_lowrank_to_std(q: &LowRankGaussian) -> Result<f64> {
    let h = q.dim() as f64;
    let mut quad = 0.0;
    for i in 0..q.dim() {
        let m = q.mean[i];
        let b_sq: f64 = q.factor.row(i).iter().map(|b| b * b).sum();
        quad += m * m + softplus(q.rho[i]) + b_sq;
    }
    Ok(0.5 * (quad - h - logdet_lowrank(q)?))
}

/// Accumulates the scaled gradient of [`kl_lowrank_to_std`] into `grad`.
///
/// With `M = I + BᵀD⁻¹B`, the Woodbury identity gives `S⁻¹B = D⁻¹BM⁻¹` and
/// `(S⁻¹)ᵢᵢ = 1/δ²ᵢ − (BM⁻¹Bᵀ)ᵢᵢ/δ⁴ᵢ`, so only `M⁻¹` has to be formed.
pub fn kl_lowrank_backward(
    q: &LowRankGaussian,
    weight: f64,
    grad: &mut LowRankGaussian,
) -> Result<()> {
    let k = q.rank();
    let var = q.variance();
    let inv_var: Vec<f64> = var.iter().map(|v| 1.0 / v).collect();
    let inner = lemma_inner(q, &inv_var);
    let inner_inv = Lu::factor(&inner)
        .map_err(|_| Error::Singular("low-rank inner matrix (rho underflow?)"))?
        .inverse();
    for i in 0..q.dim() {
        let row = q.factor.row(i);
        // (B M⁻¹)ᵢ
        let bm: Vec<f64> = (0..k)
            .map(|b| (0..k).map(|a| row[a] * inner_inv[(a, b)]).sum())
            .collect();
        let quad: f64 = bm.iter().zip(row).map(|(x, y)| x * y).sum();
        let inv_d = inv_var[i];
        let s_inv_ii = inv_d - inv_d * inv_d * quad;
        grad.mean[i] += weight * q.mean[i];
        grad.rho[i] += weight * (0.5 * (1.0 - s_inv_ii) * sigmoid(q.rho[i]));
        let grow = grad.factor.row_mut(i);
        for j in 0..k {
            grow[j] += weight * (row[j] - inv_d * bm[j]);
        }
    }
    Ok(())
}

/// KL(first ‖ second) between two dense Gaussians. Used as a test oracle.
pub fn kl_general(q_mean: &[f64], q_cov: &Matrix, p_mean: &[f64], p_cov: &Matrix) -> Result<f64> {
    let d = q_mean.len();
    for (what, got) in [
        ("q covariance", q_cov.rows()),
        ("p mean", p_mean.len()),
        ("p covariance", p_cov.rows()),
    ] {
        if got != d {
            return Err(Error::DimensionMismatch {
                what,
                expected: d,
                got,
            });
        }
    }
    let q_chol = Cholesky::factor(q_cov)?;
    let p_chol = Cholesky::factor(p_cov)?;
    let mut trace = 0.0;
    let mut col = vec![0.0; d];
    for c in 0..d {
        for r in 0..d {
            col[r] = q_cov[(r, c)];
        }
        trace += p_chol.solve(&col)[c];
    }
    let diff: Vec<f64> = p_mean.iter().zip(q_mean).map(|(p, q)| p - q).collect();
    let maha: f64 = p_chol
        .solve(&diff)
        .iter()
        .zip(&diff)
        .map(|(a, b)| a * b)
        .sum();
    Ok(0.5 * (p_chol.ln_det() - q_chol.ln_det() - d as f64 + trace + maha))
}

/// `mean + sqrt(variance) ⊙ ε`
pub fn sample_diag(q: &DiagGaussian, noise: &NoiseDraw) -> Vec<f64> {
    sample_diag_part(&q.mean, &q.rho, &noise.epsilon)
}

fn sample_diag_part(mean: &[f64], rho: &[f64], epsilon: &[f64]) -> Vec<f64> {
    debug_assert_eq!(epsilon.len(), mean.len());
    mean.iter()
        .zip(rho)
        .zip(epsilon)
        .map(|((&m, &r), &e)| m + softplus(r).sqrt() * e)
        .collect()
}

fn sample_diag_part_backward(
    rho: &[f64],
    epsilon: &[f64],
    upstream: &[f64],
    grad_mean: &mut [f64],
    grad_rho: &mut [f64],
) {
    for i in 0..rho.len() {
        let g = upstream[i];
        let r = rho[i];
        let sd = softplus(r).sqrt();
        grad_mean[i] += g;
        grad_rho[i] += g * epsilon[i] / (2.0 * sd) * sigmoid(r);
    }
}

/// Backpropagates `upstream = ∂L/∂sample` through [`sample_diag`].
pub fn sample_diag_backward(
    q: &DiagGaussian,
    noise: &NoiseDraw,
    upstream: &[f64],
    grad: &mut DiagGaussian,
) {
    sample_diag_part_backward(
        &q.rho,
        &noise.epsilon,
        upstream,
        &mut grad.mean,
        &mut grad.rho,
    );
}

/// `mean + δ ⊙ ε + B·ζ`
pub fn sample_lowrank(q: &LowRankGaussian, noise: &NoiseDraw) -> Vec<f64> {
    let mut out = sample_diag_part(&q.mean, &q.rho, &noise.epsilon);
    let zeta = noise
        .zeta
        .as_deref()
        .expect("low-rank draw needs zeta noise");
    debug_assert_eq!(zeta.len(), q.rank());
    let bz = q.factor.matvec(zeta);
    for (o, b) in out.iter_mut().zip(bz) {
        *o += b;
    }
    out
}

pub fn sample_lowrank_backward(
    q: &LowRankGaussian,
    noise: &NoiseDraw,
    upstream: &[f64],
    grad: &mut LowRankGaussian,
) {
    sample_diag_part_backward(
        &q.rho,
        &noise.epsilon,
        upstream,
        &mut grad.mean,
        &mut grad.rho,
    );
    let zeta = noise
        .zeta
        .as_deref()
        .expect("low-rank draw needs zeta noise");
    for (i, &g) in upstream.iter().enumerate() {
        for (b, &z) in grad.factor.row_mut(i).iter_mut().zip(zeta) {
            *b += g * z;
        }
    }
}
