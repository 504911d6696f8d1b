use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};

use crate::dataset::LabeledDataset;
use crate::error::{check_len, Error, Result};
use crate::rbm::RbmParams;
use crate::textio;

/// Max-shifted softmax `exp(z_k - max z) / Σ_i exp(z_i - max z)`.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("softmax input must be finite".into()));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Linear output layer on top of the hidden units: `z = Vᵀ h + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl SoftmaxHead {
    pub fn zeros(hidden: usize, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Argument(format!("softmax head needs at least 2 classes, got {classes}")));
        }
        Ok(SoftmaxHead {
            weights: Array2::zeros((hidden, classes)),
            bias: Array1::zeros(classes),
        })
    }

    pub fn from_parts(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        check_len("head bias", weights.ncols(), bias.len())?;
        if weights.ncols() < 2 {
            return Err(Error::Argument("softmax head needs at least 2 classes".into()));
        }
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::Argument("head parameters must be finite".into()));
        }
        Ok(SoftmaxHead { weights, bias })
    }

    pub fn hidden(&self) -> usize {
        self.weights.nrows()
    }

    pub fn classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        check_len("head input", self.hidden(), h.len())?;
        Ok((ArrayView1::from(h).dot(&self.weights) + &self.bias).to_vec())
    }

    /// Mean over samples of `½ Σ_k (target_k - z_k)²` with one-hot targets.
    pub fn mean_error(&self, hidden: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (h, &label) in hidden.iter().zip(labels) {
            let z = self.logits(h)?;
            total += z
                .iter()
                .enumerate()
                .map(|(k, zk)| 0.5 * (one_hot(k, label) - zk).powi(2))
                .sum::<f64>();
        }
        Ok(total / hidden.len().max(1) as f64)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("HEAD v1 J={} L={}\n", self.hidden(), self.classes());
        for row in self.weights.rows() {
            out.push_str(&textio::join_reals(row.iter().copied()));
            out.push('\n');
        }
        out.push_str(&textio::join_reals(self.bias.iter().copied()));
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "head file";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = textio::next_line(WHAT, &mut lines)?;
        let pairs = textio::parse_header(WHAT, header, &["HEAD", "v1"])?;
        let j = textio::header_usize(WHAT, &pairs, "J")?;
        let l = textio::header_usize(WHAT, &pairs, "L")?;
        let mut w = Vec::with_capacity(j * l);
        for _ in 0..j {
            let (n, line) = textio::next_line(WHAT, &mut lines)?;
            w.extend(textio::parse_reals(WHAT, n, line, l)?);
        }
        let (n, line) = textio::next_line(WHAT, &mut lines)?;
        let bias = textio::parse_reals(WHAT, n, line, l)?;
        let weights = Array2::from_shape_vec((j, l), w).expect("shape checked while parsing");
        SoftmaxHead::from_parts(weights, Array1::from(bias))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn one_hot(k: usize, label: usize) -> f64 {
    if k == label {
        1.0
    } else {
        0.0
    }
}

/// Delta-rule fine-tuning of the head on frozen hidden probabilities.
///
/// Per sample and output unit: `δ_k = t_k - z_k`, `V_jk += η' δ_k h_j`,
/// `d_k += η' δ_k`, with one-hot targets `t`. The step is capped at
/// `η' = min(η, 1 / (1 + ‖h‖²))`, which leaves the plain rule untouched
/// whenever it contracts and keeps it stable for wide hidden layers.
/// Training stops once the mean error drops below `e_min`.
pub fn finetune_head(
    rbm: &RbmParams,
    head: &SoftmaxHead,
    train: &LabeledDataset,
    eta: f64,
    epochs: usize,
    e_min: f64,
) -> Result<SoftmaxHead> {
    if !(0.1..=1.0).contains(&eta) {
        return Err(Error::Argument(format!("head learning rate must lie in [0.1, 1.0], got {eta}")));
    }
    if epochs == 0 {
        return Err(Error::Argument("head fine-tuning needs at least one epoch".into()));
    }
    if train.is_empty() {
        return Err(Error::Argument("head fine-tuning needs training data".into()));
    }
    check_len("head input", rbm.hidden(), head.hidden())?;
    if let Some(bad) = train.labels().iter().find(|&&l| l >= head.classes()) {
        return Err(Error::Argument(format!("label {bad} out of range for head with {} classes", head.classes())));
    }
    let hidden = train
        .samples()
        .iter()
        .map(|v| rbm.hidden_conditional(v))
        .collect::<Result<Vec<_>>>()?;
    let mut head = head.clone();
    for epoch in 0..epochs {
        for (h, &label) in hidden.iter().zip(train.labels()) {
            let norm2: f64 = h.iter().map(|x| x * x).sum();
            let rate = eta.min(1.0 / (1.0 + norm2));
            let z = head.logits(h)?;
            for (k, zk) in z.iter().enumerate() {
                let step = rate * (one_hot(k, label) - zk);
                for (j, hj) in h.iter().enumerate() {
                    head.weights[[j, k]] += step * hj;
                }
                head.bias[k] += step;
            }
        }
        let err = head.mean_error(&hidden, train.labels())?;
        if !err.is_finite() {
            return Err(Error::Numerical(format!("head fine-tuning diverged at epoch {}", epoch + 1)));
        }
        if err < e_min {
            break;
        }
    }
    Ok(head)
}
