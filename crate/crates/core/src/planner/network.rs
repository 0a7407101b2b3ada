//! Small tanh networks for the policy and the auxiliary control.
//!
//! Both are one-hidden-layer maps with a flat weight layout
//! `[input->hidden weights (row per hidden unit), hidden bias, hidden->out weights, out bias]`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::flow::Policy;
use crate::gp::FeatureMode;
use crate::torus::GridDistribution;

/// Number of weights in a network with `inputs` inputs and `hidden` units.
pub fn weight_count(inputs: usize, hidden: usize) -> usize {
    inputs * hidden + 2 * hidden + 1
}

/// Pre-squash network output.
#[inline]
pub fn forward(weights: &[f64], inputs: usize, hidden: usize, x: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), weight_count(inputs, hidden));
    debug_assert_eq!(x.len(), inputs);
    let (w_in, rest) = weights.split_at(inputs * hidden);
    let (b_hidden, rest) = rest.split_at(hidden);
    let (w_out, b_out) = rest.split_at(hidden);
    let mut out = b_out[0];
    for k in 0..hidden {
        let row = &w_in[k * inputs..(k + 1) * inputs];
        let pre = b_hidden[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        out += w_out[k] * pre.tanh();
    }
    out
}

/// Distribution features for every grid point of `mu`, computed once.
pub(crate) enum GridFeatures {
    None,
    Local,
    Global(Vec<f64>),
}

impl GridFeatures {
    pub(crate) fn new(mu: &GridDistribution, mode: FeatureMode) -> Self {
        match mode {
            FeatureMode::None => GridFeatures::None,
            FeatureMode::Local => GridFeatures::Local,
            FeatureMode::Global(f) => {
                GridFeatures::Global(mu.pooled(f).expect("pooling width checked at config time"))
            }
        }
    }

    #[inline]
    pub(crate) fn push(&self, s: f64, mu: &GridDistribution, buf: &mut Vec<f64>) {
        match self {
            GridFeatures::None => {}
            GridFeatures::Local => buf.push(mu.density_at(s)),
            GridFeatures::Global(p) => buf.extend_from_slice(p),
        }
    }
}

/// Time-homogeneous policy network `a = mid + half * tanh(net(cos, sin, mu features))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub hidden: usize,
    pub feat_mode: FeatureMode,
    pub a_min: f64,
    pub a_max: f64,
    pub weights: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(hidden: usize, feat_mode: FeatureMode, a_min: f64, a_max: f64) -> Self {
        let mut p = PolicyParams {
            hidden,
            feat_mode,
            a_min,
            a_max,
            weights: Vec::new(),
        };
        p.weights = vec![0.0; p.len()];
        p
    }

    pub fn inputs(&self) -> usize {
        2 + self.feat_mode.width()
    }

    pub fn len(&self) -> usize {
        weight_count(self.inputs(), self.hidden)
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Same shape with new weights.
    pub fn with_weights(&self, weights: &[f64]) -> Self {
        debug_assert_eq!(weights.len(), self.len());
        PolicyParams {
            weights: weights.to_vec(),
            ..self.clone()
        }
    }

    #[inline]
    fn squash(&self, out: f64) -> f64 {
        let mid = 0.5 * (self.a_max + self.a_min);
        let half = 0.5 * (self.a_max - self.a_min);
        let a = (mid + half * out.tanh()).clamp(self.a_min, self.a_max);
        debug_assert!(a >= self.a_min && a <= self.a_max);
        a
    }

    #[inline]
    pub(crate) fn eval_features(&self, x: &[f64]) -> f64 {
        self.squash(forward(&self.weights, self.inputs(), self.hidden, x))
    }

    /// Action scaled onto `[-1, 1]`.
    #[inline]
    pub(crate) fn normalized(&self, a: f64) -> f64 {
        let mid = 0.5 * (self.a_max + self.a_min);
        let half = 0.5 * (self.a_max - self.a_min);
        (a - mid) / half
    }
}

#[inline]
pub(crate) fn push_state_features(s: f64, buf: &mut Vec<f64>) {
    let (sin, cos) = (TAU * s).sin_cos();
    buf.push(cos);
    buf.push(sin);
}

impl Policy for PolicyParams {
    fn action(&self, s: f64, mu: &GridDistribution) -> f64 {
        let feats = GridFeatures::new(mu, self.feat_mode);
        let mut x = Vec::with_capacity(self.inputs());
        push_state_features(s, &mut x);
        feats.push(s, mu, &mut x);
        self.eval_features(&x)
    }

    fn reads_distribution(&self) -> bool {
        self.feat_mode != FeatureMode::None
    }

    fn actions_on_grid(&self, mu: &GridDistribution, out: &mut [f64]) {
        let feats = GridFeatures::new(mu, self.feat_mode);
        let mut x = Vec::with_capacity(self.inputs());
        for (i, o) in out.iter_mut().enumerate() {
            let s = mu.grid_point(i);
            x.clear();
            push_state_features(s, &mut x);
            feats.push(s, mu, &mut x);
            *o = self.eval_features(&x);
        }
    }
}

/// Auxiliary control `eta = tanh(net(policy features, normalized action))` in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaParams {
    pub hidden: usize,
    pub feat_mode: FeatureMode,
    pub weights: Vec<f64>,
}

impl EtaParams {
    pub fn zeros(hidden: usize, feat_mode: FeatureMode) -> Self {
        let mut e = EtaParams {
            hidden,
            feat_mode,
            weights: Vec::new(),
        };
        e.weights = vec![0.0; e.len()];
        e
    }

    pub fn inputs(&self) -> usize {
        3 + self.feat_mode.width()
    }

    pub fn len(&self) -> usize {
        weight_count(self.inputs(), self.hidden)
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn with_weights(&self, weights: &[f64]) -> Self {
        debug_assert_eq!(weights.len(), self.len());
        EtaParams {
            weights: weights.to_vec(),
            ..self.clone()
        }
    }

    /// `x` holds the policy features followed by the normalized action.
    #[inline]
    pub(crate) fn eval_features(&self, x: &[f64]) -> f64 {
        let e = forward(&self.weights, self.inputs(), self.hidden, x).tanh();
        debug_assert!((-1.0..=1.0).contains(&e));
        e
    }

    pub fn reads_distribution(&self) -> bool {
        self.feat_mode != FeatureMode::None
    }
}
