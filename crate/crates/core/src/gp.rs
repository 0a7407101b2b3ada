//! Gaussian-process model of the unknown drift.
//!
//! The model regresses the wrapped one-step displacement `wrap_signed(s' - s)`
//! on the joint input `z = (cos 2 pi s, sin 2 pi s, a, distribution features)`.
//! Posterior mean and variance follow the usual noisy-observation formulas
//!
//! ```text
//! mean(z)  = k(z)^T (K + lambda I)^-1 y
//! var(z)   = k(z, z) - k(z)^T (K + lambda I)^-1 k(z)
//! ```
//!
//! Large datasets are reduced to a subset of at most `subset_cap` points,
//! chosen greedily: each new point is the one whose posterior variance under
//! the points chosen so far is largest.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{wrap, GridDistribution};

/// Jitter added to the diagonal, in order, when a factorization fails.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "se")]
    SquaredExponential,
    #[serde(rename = "matern52")]
    Matern52,
    #[serde(rename = "rq")]
    RationalQuadratic,
    #[serde(rename = "linear")]
    Linear,
}

/// Kernel family plus hyperparameters, one lengthscale per input coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub lengthscales: Vec<f64>,
    pub variance: f64,
    /// Shape parameter of the rational-quadratic kernel.
    #[serde(default = "default_rq_alpha")]
    pub rq_alpha: f64,
}

fn default_rq_alpha() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lengthscales: Vec<f64>, variance: f64) -> Self {
        KernelSpec {
            kind,
            lengthscales,
            variance,
            rq_alpha: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::config("model.lengthscale", "lengthscales must be positive"));
        }
        if !(self.variance > 0.0) {
            return Err(Error::config("model.variance", "kernel variance must be positive"));
        }
        if !(self.rq_alpha > 0.0) {
            return Err(Error::config("model.rq_alpha", "rq_alpha must be positive"));
        }
        Ok(())
    }

    /// `k(x, y)`, checking that both inputs match the kernel's dimension.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        for v in [x, y] {
            if v.len() != self.dim() {
                return Err(Error::FeatureDim {
                    expected: self.dim(),
                    got: v.len(),
                });
            }
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => {
                self.variance
                    * x.iter()
                        .zip(y)
                        .zip(&self.lengthscales)
                        .map(|((a, b), l)| a * b / (l * l))
                        .sum::<f64>()
            }
            kind => {
                let r2: f64 = x
                    .iter()
                    .zip(y)
                    .zip(&self.lengthscales)
                    .map(|((a, b), l)| {
                        let d = (a - b) / l;
                        d * d
                    })
                    .sum();
                match kind {
                    KernelKind::SquaredExponential => self.variance * (-r2).exp(),
                    KernelKind::Matern52 => {
                        let r = (5.0 * r2).sqrt();
                        self.variance * (1.0 + r + r * r / 3.0) * (-r).exp()
                    }
                    KernelKind::RationalQuadratic => {
                        self.variance * (1.0 + r2 / (2.0 * self.rq_alpha)).powf(-self.rq_alpha)
                    }
                    KernelKind::Linear => unreachable!(),
                }
            }
        }
    }

    /// `k(x, x)`.
    #[inline]
    pub fn diag(&self, x: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => self.eval_unchecked(x, x),
            _ => self.variance,
        }
    }
}

/// How the population distribution enters the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    /// No distribution features.
    #[default]
    None,
    /// The density at the agent's own position.
    Local,
    /// The histogram average-pooled into this many blocks.
    Global(usize),
}

impl FeatureMode {
    /// Number of distribution features.
    pub fn width(&self) -> usize {
        match self {
            FeatureMode::None => 0,
            FeatureMode::Local => 1,
            FeatureMode::Global(f) => *f,
        }
    }

    pub fn check_grid(&self, m: usize) -> Result<()> {
        if let FeatureMode::Global(f) = self {
            if *f == 0 || m % f != 0 {
                return Err(Error::config(
                    "feat_mode",
                    format!("global({f}) does not divide grid size {m}"),
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMode::None => f.write_str("none"),
            FeatureMode::Local => f.write_str("local"),
            FeatureMode::Global(n) => write!(f, "global({n})"),
        }
    }
}

impl FromStr for FeatureMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "none" => Ok(FeatureMode::None),
            "local" => Ok(FeatureMode::Local),
            _ => t
                .strip_prefix("global(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|n| n.trim().parse::<usize>().ok())
                .filter(|n| *n > 0)
                .map(FeatureMode::Global)
                .ok_or_else(|| {
                    format!("expected \"none\", \"local\" or \"global(F)\", got {s:?}")
                }),
        }
    }
}

impl Serialize for FeatureMode {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureMode {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Distribution features of `mu` seen from position `s`.
pub fn distribution_features(s: f64, mu: &GridDistribution, mode: FeatureMode) -> Result<Vec<f64>> {
    match mode {
        FeatureMode::None => Ok(Vec::new()),
        FeatureMode::Local => Ok(vec![mu.density_at(s)]),
        FeatureMode::Global(f) => mu.pooled(f),
    }
}

/// Model input `z = (s features, action, distribution features)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointInput {
    pub s_feat: [f64; 2],
    pub a: f64,
    pub mu_feat: Vec<f64>,
}

impl JointInput {
    /// Flat feature vector `[cos, sin, a, mu_feat...]`.
    pub fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + self.mu_feat.len());
        v.extend_from_slice(&self.s_feat);
        v.push(self.a);
        v.extend_from_slice(&self.mu_feat);
        v
    }
}

/// Encode a state, action and distribution as a model input.
pub fn make_joint_input(s: f64, a: f64, mu: &GridDistribution, mode: FeatureMode) -> Result<JointInput> {
    let (sin, cos) = (TAU * wrap(s)).sin_cos();
    Ok(JointInput {
        s_feat: [cos, sin],
        a,
        mu_feat: distribution_features(s, mu, mode)?,
    })
}

/// How the confidence scale beta is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum BetaMode {
    Fixed { value: f64 },
    /// `B_f + (sigma / sqrt(lambda)) sqrt(2 (ln(1/delta) + gamma))` with the
    /// realized information gain in place of `gamma`.
    Theory { b_f: f64, sigma: f64, delta: f64 },
}

impl Default for BetaMode {
    fn default() -> Self {
        BetaMode::Fixed { value: 2.0 }
    }
}

/// GP posterior over drift displacements.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    /// Flattened `n x d` feature matrix of the (possibly subset) inputs.
    inputs: Vec<f64>,
    targets: Vec<f64>,
    noise_var: f64,
    jitter: f64,
    /// Row-major lower Cholesky factor of `K + (noise_var + jitter) I`.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    info_gain: f64,
    beta: f64,
}

/// Serialized posterior: reloading refactorizes the stored subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpCheckpoint {
    pub kernel: KernelSpec,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub noise_var: f64,
    pub jitter: f64,
    pub beta_mode: BetaMode,
    pub beta: f64,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let [d] = dot_many(&a[..n], [&b[..n]]);
    d
}

/// Four dot products against one shared left operand, each summed in the
/// same order as [`dot`] so results agree bit for bit.
fn dot4(a: &[f64], bs: [&[f64]; 4]) -> [f64; 4] {
    dot_many(a, bs)
}

/// `R` dot products of `a` with equally long `bs`. Each uses four partial
/// sums over strided lanes plus a scalar tail, combined as
/// `(s0 + s1) + (s2 + s3) + tail`.
#[inline(always)]
fn dot_many<const R: usize>(a: &[f64], bs: [&[f64]; R]) -> [f64; R] {
    let n = a.len();
    let whole = n / 4 * 4;
    let acc = partial_sums(&a[..whole], bs.map(|b| &b[..whole]));
    let mut out = [0.0; R];
    for ((o, s), b) in out.iter_mut().zip(acc).zip(&bs) {
        let mut tail = 0.0;
        for c in whole..n {
            tail += a[c] * b[c];
        }
        *o = (s[0] + s[1]) + (s[2] + s[3]) + tail;
    }
    out
}

#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn partial_sums<const R: usize>(a: &[f64], bs: [&[f64]; R]) -> [[f64; 4]; R] {
    use std::arch::x86_64::*;
    assert!(a.len() % 4 == 0 && bs.iter().all(|b| b.len() == a.len()));
    // SSE2 is part of the x86_64 baseline. Lane k of (lo, hi) holds partial
    // sum k, so the arithmetic matches the scalar path exactly.
    unsafe {
        let mut lo = [_mm_setzero_pd(); R];
        let mut hi = [_mm_setzero_pd(); R];
        let mut c = 0;
        while c < a.len() {
            let x0 = _mm_loadu_pd(a.as_ptr().add(c));
            let x1 = _mm_loadu_pd(a.as_ptr().add(c + 2));
            for r in 0..R {
                let p = bs[r].as_ptr().add(c);
                lo[r] = _mm_add_pd(lo[r], _mm_mul_pd(x0, _mm_loadu_pd(p)));
                hi[r] = _mm_add_pd(hi[r], _mm_mul_pd(x1, _mm_loadu_pd(p.add(2))));
            }
            c += 4;
        }
        let mut out = [[0.0; 4]; R];
        for r in 0..R {
            _mm_storeu_pd(out[r].as_mut_ptr(), lo[r]);
            _mm_storeu_pd(out[r].as_mut_ptr().add(2), hi[r]);
        }
        out
    }
}

#[cfg(not(target_arch = "x86_64"))]
#[inline(always)]
fn partial_sums<const R: usize>(a: &[f64], bs: [&[f64]; R]) -> [[f64; 4]; R] {
    let mut out = [[0.0; 4]; R];
    for (c, x) in a.chunks_exact(4).enumerate() {
        for r in 0..R {
            let y = &bs[r][4 * c..4 * c + 4];
            for k in 0..4 {
                out[r][k] += x[k] * y[k];
            }
        }
    }
    out
}

impl GpPosterior {
    /// The zero-data posterior: mean 0, variance `k(z, z)`.
    pub fn prior(kernel: KernelSpec, noise_var: f64) -> Self {
        GpPosterior {
            kernel,
            inputs: Vec::new(),
            targets: Vec::new(),
            noise_var,
            jitter: 0.0,
            chol: Vec::new(),
            alpha: Vec::new(),
            info_gain: 0.0,
            beta: BetaMode::default().fixed_value(),
        }
    }

    /// Condition on `data`, keeping at most `subset_cap` points.
    pub fn fit(
        kernel: KernelSpec,
        data: &[(JointInput, f64)],
        noise_var: f64,
        subset_cap: usize,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Fit("no training data".into()));
        }
        if !(noise_var > 0.0) {
            return Err(Error::Fit(format!("noise variance must be positive, got {noise_var}")));
        }
        kernel.validate()?;
        let d = kernel.dim();
        let mut inputs = Vec::with_capacity(data.len() * d);
        for (z, _) in data {
            let f = z.features();
            if f.len() != d {
                return Err(Error::FeatureDim {
                    expected: d,
                    got: f.len(),
                });
            }
            inputs.extend_from_slice(&f);
        }
        let targets: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
        if subset_cap == 0 {
            return Err(Error::Fit("subset cap must be at least 1".into()));
        }
        if data.len() <= subset_cap {
            Self::fit_exact(kernel, inputs, targets, noise_var, None)
        } else {
            Self::fit_greedy(kernel, inputs, targets, noise_var, subset_cap)
        }
    }

    fn fit_exact(
        kernel: KernelSpec,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        noise_var: f64,
        fixed_jitter: Option<f64>,
    ) -> Result<Self> {
        let d = kernel.dim();
        let n = targets.len();
        let row = |i: usize| &inputs[i * d..(i + 1) * d];
        let gram = DMatrix::from_fn(n, n, |i, j| kernel.eval_unchecked(row(i), row(j)));
        let ladder: &[f64] = match &fixed_jitter {
            Some(j) => std::slice::from_ref(j),
            None => &JITTER_LADDER,
        };
        for &jitter in ladder {
            let lambda = noise_var + jitter;
            let mut a = gram.clone();
            for i in 0..n {
                a[(i, i)] += lambda;
            }
            let Some(chol) = a.cholesky() else {
                continue;
            };
            let alpha = chol.solve(&DVector::from_column_slice(&targets));
            let l = chol.l();
            if !alpha.iter().all(|x| x.is_finite()) {
                continue;
            }
            let mut flat = vec![0.0; n * n];
            let mut log_det_half = 0.0;
            for i in 0..n {
                for j in 0..=i {
                    flat[i * n + j] = l[(i, j)];
                }
                log_det_half += l[(i, i)].ln();
            }
            return Ok(GpPosterior {
                info_gain: log_det_half - 0.5 * n as f64 * lambda.ln(),
                kernel,
                inputs,
                targets,
                noise_var,
                jitter,
                chol: flat,
                alpha: alpha.iter().copied().collect(),
                beta: BetaMode::default().fixed_value(),
            });
        }
        Err(Error::Fit(format!(
            "kernel matrix of {n} points is not positive definite even with jitter {:e}",
            ladder[ladder.len() - 1]
        )))
    }

    fn fit_greedy(
        kernel: KernelSpec,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        noise_var: f64,
        cap: usize,
    ) -> Result<Self> {
        let d = kernel.dim();
        let n = targets.len();
        let row = |i: usize| &inputs[i * d..(i + 1) * d];
        'ladder: for &jitter in &JITTER_LADDER {
            let lambda = noise_var + jitter;
            // Latent posterior variance of every candidate, and the rows
            // v_c = L^-1 k_S(c) of each candidate against the selected set.
            let mut var: Vec<f64> = (0..n).map(|c| kernel.diag(row(c))).collect();
            let mut v = vec![0.0; n * cap];
            let mut taken = vec![false; n];
            let mut selected = Vec::with_capacity(cap);
            let mut chol = vec![0.0; cap * cap];
            for step in 0..cap {
                let mut best = usize::MAX;
                let mut best_var = f64::NEG_INFINITY;
                for c in 0..n {
                    if !taken[c] && var[c] > best_var {
                        best = c;
                        best_var = var[c];
                    }
                }
                if best == usize::MAX {
                    continue 'ladder;
                }
                let d2 = best_var + lambda;
                if !(d2 > 0.0) || !d2.is_finite() {
                    continue 'ladder;
                }
                let diag = d2.sqrt();
                taken[best] = true;
                selected.push(best);
                let vp: Vec<f64> = v[best * cap..best * cap + step].to_vec();
                chol[step * cap..step * cap + step].copy_from_slice(&vp);
                chol[step * cap + step] = diag;
                for c in 0..n {
                    if taken[c] {
                        continue;
                    }
                    let vc = &v[c * cap..c * cap + step];
                    let e = (kernel.eval_unchecked(row(c), row(best)) - dot(vc, &vp)) / diag;
                    v[c * cap + step] = e;
                    var[c] -= e * e;
                }
            }

            let y: Vec<f64> = selected.iter().map(|&i| targets[i]).collect();
            // L w = y, then L^T alpha = w.
            let mut w = vec![0.0; cap];
            for i in 0..cap {
                w[i] = (y[i] - dot(&chol[i * cap..i * cap + i], &w[..i])) / chol[i * cap + i];
            }
            let mut alpha = vec![0.0; cap];
            for i in (0..cap).rev() {
                let mut acc = w[i];
                for j in i + 1..cap {
                    acc -= chol[j * cap + i] * alpha[j];
                }
                alpha[i] = acc / chol[i * cap + i];
            }
            if !alpha.iter().all(|x| x.is_finite()) {
                continue;
            }
            let log_det_half: f64 = (0..cap).map(|i| chol[i * cap + i].ln()).sum();
            let sub_inputs = selected.iter().flat_map(|&i| row(i).iter().copied()).collect();
            return Ok(GpPosterior {
                info_gain: log_det_half - 0.5 * cap as f64 * lambda.ln(),
                kernel,
                inputs: sub_inputs,
                targets: y,
                noise_var,
                jitter,
                chol,
                alpha,
                beta: BetaMode::default().fixed_value(),
            });
        }
        Err(Error::Fit(format!(
            "greedy subset factorization failed even with jitter {:e}",
            JITTER_LADDER[JITTER_LADDER.len() - 1]
        )))
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Number of points the posterior conditions on.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `1/2 log det(I + K / lambda)` of the conditioning set.
    pub fn info_gain(&self) -> f64 {
        self.info_gain
    }

    /// Confidence scale used by the hallucinated dynamics.
    pub fn confidence(&self) -> f64 {
        self.beta
    }

    pub fn with_confidence(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn set_confidence(&mut self, beta: f64) {
        self.beta = beta;
    }

    /// Feature rows of the conditioning set.
    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks(self.kernel.dim().max(1)).take(self.len())
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Posterior mean and standard deviation at `z`.
    pub fn predict(&self, z: &JointInput) -> Result<(f64, f64)> {
        let x = z.features();
        if x.len() != self.kernel.dim() {
            return Err(Error::FeatureDim {
                expected: self.kernel.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict_features(&x, &mut Vec::new()))
    }

    /// Posterior mean and standard deviation for a flat feature vector,
    /// using `scratch` for intermediate vectors.
    pub fn predict_features(&self, x: &[f64], scratch: &mut Vec<f64>) -> (f64, f64) {
        let n = self.len();
        let prior = self.kernel.diag(x);
        if n == 0 {
            return (0.0, prior.max(0.0).sqrt());
        }
        let d = self.kernel.dim();
        scratch.clear();
        scratch.resize(2 * n, 0.0);
        let (k, v) = scratch.split_at_mut(n);
        for (i, ki) in k.iter_mut().enumerate() {
            *ki = self.kernel.eval_unchecked(x, &self.inputs[i * d..(i + 1) * d]);
        }
        let mean = dot(k, &self.alpha);
        let mut explained = 0.0;
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let vi = (k[i] - dot(row, &v[..i])) / self.chol[i * n + i];
            v[i] = vi;
            explained += vi * vi;
        }
        (mean, (prior - explained).max(0.0).sqrt())
    }

    /// `predict_features` for many flat feature vectors of the kernel's
    /// dimension, stored back to back in `xs`.
    ///
    /// Queries go through the triangular solve in blocks so each factor row
    /// is read once per block. Every result is bitwise equal to the
    /// single-query path.
    pub fn predict_features_batch(&self, xs: &[f64]) -> Vec<(f64, f64)> {
        const BLOCK: usize = 16;
        let d = self.kernel.dim();
        let n = self.len();
        let queries: Vec<&[f64]> = xs.chunks_exact(d).collect();
        let mut out = Vec::with_capacity(queries.len());
        let mut k = vec![0.0; BLOCK * n];
        let mut v = vec![0.0; BLOCK * n];
        for block in queries.chunks(BLOCK) {
            for (q, x) in block.iter().enumerate() {
                for i in 0..n {
                    k[q * n + i] = self.kernel.eval_unchecked(x, &self.inputs[i * d..(i + 1) * d]);
                }
            }
            let mut explained = [0.0; BLOCK];
            let quads = block.len() / 4 * 4;
            for i in 0..n {
                let row = &self.chol[i * n..i * n + i];
                let diag = self.chol[i * n + i];
                for q0 in (0..quads).step_by(4) {
                    let d4 = dot4(row, [q0, q0 + 1, q0 + 2, q0 + 3].map(|q| &v[q * n..q * n + i]));
                    for (j, dj) in d4.into_iter().enumerate() {
                        let q = q0 + j;
                        let vi = (k[q * n + i] - dj) / diag;
                        v[q * n + i] = vi;
                        explained[q] += vi * vi;
                    }
                }
                for q in quads..block.len() {
                    let vq = &mut v[q * n..(q + 1) * n];
                    let vi = (k[q * n + i] - dot(row, &vq[..i])) / diag;
                    vq[i] = vi;
                    explained[q] += vi * vi;
                }
            }
            for (q, x) in block.iter().enumerate() {
                let prior = self.kernel.diag(x);
                if n == 0 {
                    out.push((0.0, prior.max(0.0).sqrt()));
                } else {
                    let mean = dot(&k[q * n..(q + 1) * n], &self.alpha);
                    out.push((mean, (prior - explained[q]).max(0.0).sqrt()));
                }
            }
        }
        out
    }

    /// Posterior mean only, skipping the variance solve.
    pub fn predict_mean_features(&self, x: &[f64]) -> f64 {
        let d = self.kernel.dim();
        let mut acc = 0.0;
        for (i, a) in self.alpha.iter().enumerate() {
            acc += a * self.kernel.eval_unchecked(x, &self.inputs[i * d..(i + 1) * d]);
        }
        acc
    }

    /// Confidence scale for `mode` given the current information gain.
    pub fn beta(&self, mode: BetaMode) -> Result<f64> {
        match mode {
            BetaMode::Fixed { value } => {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(Error::config("model.beta", "fixed beta must be finite and non-negative"));
                }
                Ok(value)
            }
            BetaMode::Theory { b_f, sigma, delta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::config("model.delta", format!("delta must lie in (0, 1), got {delta}")));
                }
                let lambda = self.noise_var + self.jitter;
                Ok(b_f + sigma / lambda.sqrt() * (2.0 * ((1.0 / delta).ln() + self.info_gain)).sqrt())
            }
        }
    }

    pub fn checkpoint(&self, beta_mode: BetaMode) -> GpCheckpoint {
        GpCheckpoint {
            kernel: self.kernel.clone(),
            inputs: self.inputs().map(|r| r.to_vec()).collect(),
            targets: self.targets.clone(),
            noise_var: self.noise_var,
            jitter: self.jitter,
            beta_mode,
            beta: self.beta,
        }
    }

    /// Rebuild a posterior from a checkpoint by refactorizing its inputs.
    pub fn from_checkpoint(cp: &GpCheckpoint) -> Result<Self> {
        cp.kernel.validate()?;
        let gp = if cp.targets.is_empty() {
            GpPosterior::prior(cp.kernel.clone(), cp.noise_var)
        } else {
            let d = cp.kernel.dim();
            if let Some(r) = cp.inputs.iter().find(|r| r.len() != d) {
                return Err(Error::FeatureDim {
                    expected: d,
                    got: r.len(),
                });
            }
            let inputs = cp.inputs.iter().flatten().copied().collect();
            Self::fit_exact(
                cp.kernel.clone(),
                inputs,
                cp.targets.clone(),
                cp.noise_var,
                Some(cp.jitter),
            )?
        };
        Ok(gp.with_confidence(cp.beta))
    }
}

impl BetaMode {
    fn fixed_value(&self) -> f64 {
        match self {
            BetaMode::Fixed { value } => *value,
            BetaMode::Theory { .. } => 2.0,
        }
    }
}
