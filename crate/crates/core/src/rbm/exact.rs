//! Exhaustive enumeration over all joint states of a tiny binary RBM.

use ndarray::{Array1, Array2, ArrayView1};

use super::{RbmParams, VisibleKind};
use crate::dataset::SampleVector;
use crate::error::{check_len, Error, Result};

/// Largest `M + J` accepted by the enumeration routines.
pub const ENUMERATION_LIMIT: usize = 20;

/// Gradient (or update) with the same shape as [`RbmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl RbmGradient {
    /// `after - before`, e.g. the update applied by one CD-1 step.
    pub fn between(before: &RbmParams, after: &RbmParams) -> Self {
        RbmGradient {
            weights: after.weights() - before.weights(),
            visible_bias: after.visible_bias() - before.visible_bias(),
            hidden_bias: after.hidden_bias() - before.hidden_bias(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.visible_bias).chain(&self.hidden_bias)
    }

    pub fn dot(&self, other: &RbmGradient) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn cosine(&self, other: &RbmGradient) -> f64 {
        self.dot(other) / (self.norm() * other.norm())
    }
}

fn check_enumerable(params: &RbmParams) -> Result<()> {
    if params.kind() != VisibleKind::Binary {
        return Err(Error::Unsupported("exact enumeration requires binary visible units".into()));
    }
    let size = params.visible() + params.hidden();
    if size > ENUMERATION_LIMIT {
        return Err(Error::Unsupported(format!(
            "exact enumeration limited to M + J <= {ENUMERATION_LIMIT}, got {size}"
        )));
    }
    Ok(())
}

fn bits(state: usize, len: usize) -> Array1<f64> {
    (0..len).map(|i| ((state >> i) & 1) as f64).collect()
}

/// Calls `f(v, h, -E(v, h))` for every joint binary state.
fn for_each_state(params: &RbmParams, mut f: impl FnMut(&Array1<f64>, &Array1<f64>, f64)) {
    let (m, j) = (params.visible(), params.hidden());
    let hs: Vec<Array1<f64>> = (0..1usize << j).map(|s| bits(s, j)).collect();
    for vs in 0..1usize << m {
        let v = bits(vs, m);
        let vw = v.dot(params.weights());
        let vb = v.dot(params.visible_bias());
        for h in &hs {
            let neg_energy = vb + params.hidden_bias().dot(h) + vw.dot(h);
            f(&v, h, neg_energy);
        }
    }
}

/// `log Z`, accumulated with a running log-sum-exp.
pub fn log_partition(params: &RbmParams) -> Result<f64> {
    check_enumerable(params)?;
    let mut max = f64::NEG_INFINITY;
    for_each_state(params, |_, _, x| max = max.max(x));
    let mut sum = 0.0;
    for_each_state(params, |_, _, x| sum += (x - max).exp());
    Ok(max + sum.ln())
}

/// `Z = Σ_{v,h} exp(-E(v, h))` over all `2^(M+J)` states.
pub fn exact_partition(params: &RbmParams) -> Result<f64> {
    Ok(log_partition(params)?.exp())
}

/// Mean log-likelihood `mean_n log p(v_n)`.
pub fn exact_loglik(params: &RbmParams, data: &[SampleVector]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Argument("log-likelihood of an empty set".into()));
    }
    let log_z = log_partition(params)?;
    let mut total = 0.0;
    for v in data {
        total -= params.free_energy(v)?;
    }
    Ok(total / data.len() as f64 - log_z)
}

/// Exact gradient of the mean log-likelihood: data expectation minus model
/// expectation, with the model side summed over every joint state.
pub fn exact_loglik_gradient(params: &RbmParams, data: &[SampleVector]) -> Result<RbmGradient> {
    if data.is_empty() {
        return Err(Error::Argument("log-likelihood gradient of an empty set".into()));
    }
    let w = vec![1.0 / data.len() as f64; data.len()];
    exact_loglik_gradient_weighted(params, data, &w)
}

/// As [`exact_loglik_gradient`] with an arbitrary empirical distribution
/// `weights` (summing to one) over `data`.
pub fn exact_loglik_gradient_weighted(
    params: &RbmParams,
    data: &[SampleVector],
    weights: &[f64],
) -> Result<RbmGradient> {
    check_len("gradient weights", data.len(), weights.len())?;
    let log_z = log_partition(params)?;
    let (m, j) = (params.visible(), params.hidden());
    let mut grad = RbmGradient {
        weights: Array2::zeros((m, j)),
        visible_bias: Array1::zeros(m),
        hidden_bias: Array1::zeros(j),
    };
    for (v, &wt) in data.iter().zip(weights) {
        check_len("gradient sample", m, v.len())?;
        let v = ArrayView1::from(v.as_slice());
        let ph = params.hidden_probs(v);
        for i in 0..m {
            for k in 0..j {
                grad.weights[[i, k]] += wt * v[i] * ph[k];
            }
        }
        grad.visible_bias.scaled_add(wt, &v);
        grad.hidden_bias.scaled_add(wt, &ph);
    }
    for_each_state(params, |v, h, neg_energy| {
        let p = (neg_energy - log_z).exp();
        for i in 0..m {
            if v[i] != 0.0 {
                for k in 0..j {
                    grad.weights[[i, k]] -= p * h[k];
                }
            }
        }
        grad.visible_bias.scaled_add(-p, v);
        grad.hidden_bias.scaled_add(-p, h);
    });
    Ok(grad)
}
