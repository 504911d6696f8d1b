//! Restricted Boltzmann machine with binary hidden units and either binary
//! or unit-variance Gaussian visible units.
//!
//! Energy convention (binary visible units):
//!
//! ```text
//! E(v, h) = -Σ_i b_i v_i - Σ_j c_j h_j - Σ_ij v_i W_ij h_j
//! ```
//!
//! Gaussian visible units replace the visible-bias term with
//! `Σ_i (v_i - b_i)² / 2`.

mod exact;
mod train;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};
use crate::rng::Rng;
use crate::textio;

pub use exact::{RbmGradient, exact_loglik, exact_loglik_gradient, exact_loglik_gradient_weighted, exact_partition, log_partition, ENUMERATION_LIMIT};
pub use train::{cd1_step, reconstruction_error, train_rbm, EpochRecord, TrainOptions, TrainTrace};

/// Standard deviation of the initial weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibleKind {
    Binary,
    Gaussian,
}

impl fmt::Display for VisibleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VisibleKind::Binary => "binary",
            VisibleKind::Gaussian => "gaussian",
        })
    }
}

impl FromStr for VisibleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(VisibleKind::Binary),
            "gaussian" => Ok(VisibleKind::Gaussian),
            other => Err(Error::Argument(format!("unknown visible kind {other:?}"))),
        }
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Weights `W` (visible × hidden), visible biases `b` and hidden biases `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    weights: Array2<f64>,
    visible_bias: Array1<f64>,
    hidden_bias: Array1<f64>,
    kind: VisibleKind,
}

impl RbmParams {
    /// All-zero parameters.
    pub fn zeros(visible: usize, hidden: usize, kind: VisibleKind) -> Self {
        RbmParams {
            weights: Array2::zeros((visible, hidden)),
            visible_bias: Array1::zeros(visible),
            hidden_bias: Array1::zeros(hidden),
            kind,
        }
    }

    /// Weights drawn from N(0, 0.01²), biases zero.
    pub fn init(visible: usize, hidden: usize, kind: VisibleKind, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid normal");
        RbmParams {
            weights: Array2::from_shape_simple_fn((visible, hidden), || normal.sample(rng)),
            ..Self::zeros(visible, hidden, kind)
        }
    }

    pub fn from_parts(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        kind: VisibleKind,
    ) -> Result<Self> {
        let (m, j) = weights.dim();
        check_len("visible bias", m, visible_bias.len())?;
        check_len("hidden bias", j, hidden_bias.len())?;
        let finite = weights.iter().chain(&visible_bias).chain(&hidden_bias).all(|x| x.is_finite());
        if !finite {
            return Err(Error::Argument("RBM parameters must be finite".into()));
        }
        Ok(RbmParams {
            weights,
            visible_bias,
            hidden_bias,
            kind,
        })
    }

    pub fn visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn kind(&self) -> VisibleKind {
        self.kind
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>, &mut Array1<f64>) {
        (&mut self.weights, &mut self.visible_bias, &mut self.hidden_bias)
    }

    fn check_visible(&self, v: &[f64]) -> Result<()> {
        check_len("visible vector", self.visible(), v.len())
    }

    fn check_hidden(&self, h: &[f64]) -> Result<()> {
        check_len("hidden vector", self.hidden(), h.len())
    }

    /// Joint energy `E(v, h)`.
    pub fn energy(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        self.check_visible(v)?;
        self.check_hidden(h)?;
        if h.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::Argument("hidden states must be 0 or 1".into()));
        }
        if self.kind == VisibleKind::Binary && v.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::Argument("binary visible states must be 0 or 1".into()));
        }
        let v = ArrayView1::from(v);
        let h = ArrayView1::from(h);
        let interaction = v.dot(&self.weights).dot(&h);
        let hidden_term = self.hidden_bias.dot(&h);
        let visible_term = match self.kind {
            VisibleKind::Binary => -self.visible_bias.dot(&v),
            VisibleKind::Gaussian => {
                v.iter().zip(&self.visible_bias).map(|(x, b)| (x - b) * (x - b)).sum::<f64>() / 2.0
            }
        };
        Ok(visible_term - hidden_term - interaction)
    }

    /// Hidden pre-activations `c_j + Σ_i W_ij v_i`.
    pub(crate) fn hidden_input(&self, v: ArrayView1<f64>) -> Array1<f64> {
        v.dot(&self.weights) + &self.hidden_bias
    }

    pub(crate) fn hidden_probs(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.hidden_input(v).mapv_into(sigmoid)
    }

    /// Binary visible: `sigm(b_i + Σ_j W_ij h_j)`; Gaussian visible: the mean
    /// `b_i + Σ_j W_ij h_j`.
    pub(crate) fn visible_mean(&self, h: ArrayView1<f64>) -> Array1<f64> {
        let input = self.weights.dot(&h) + &self.visible_bias;
        match self.kind {
            VisibleKind::Binary => input.mapv_into(sigmoid),
            VisibleKind::Gaussian => input,
        }
    }

    /// `p(h_j = 1 | v)` for every hidden unit.
    pub fn hidden_conditional(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_visible(v)?;
        Ok(self.hidden_probs(ArrayView1::from(v)).to_vec())
    }

    /// `p(v_i = 1 | h)` for binary units, the conditional mean for Gaussian
    /// units.
    pub fn visible_conditional(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_hidden(h)?;
        Ok(self.visible_mean(ArrayView1::from(h)).to_vec())
    }

    /// `F(v) = -log Σ_h exp(-E(v, h))`, so that `p(v) = exp(-F(v)) / Z`.
    pub fn free_energy(&self, v: &[f64]) -> Result<f64> {
        self.check_visible(v)?;
        Ok(self.free_energy_unchecked(ArrayView1::from(v)))
    }

    pub(crate) fn free_energy_unchecked(&self, v: ArrayView1<f64>) -> f64 {
        let visible_term = match self.kind {
            VisibleKind::Binary => -self.visible_bias.dot(&v),
            VisibleKind::Gaussian => {
                v.iter().zip(&self.visible_bias).map(|(x, b)| (x - b) * (x - b)).sum::<f64>() / 2.0
            }
        };
        visible_term - self.hidden_input(v).iter().map(|&x| softplus(x)).sum::<f64>()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("RBM v1 kind={} M={} J={}\n", self.kind, self.visible(), self.hidden());
        out.push_str(&textio::join_reals(self.visible_bias.iter().copied()));
        out.push('\n');
        out.push_str(&textio::join_reals(self.hidden_bias.iter().copied()));
        out.push('\n');
        for row in self.weights.rows() {
            out.push_str(&textio::join_reals(row.iter().copied()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "RBM file";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = textio::next_line(WHAT, &mut lines)?;
        let pairs = textio::parse_header(WHAT, header, &["RBM", "v1"])?;
        let kind: VisibleKind = textio::header_value(WHAT, &pairs, "kind")?.parse()?;
        let m = textio::header_usize(WHAT, &pairs, "M")?;
        let j = textio::header_usize(WHAT, &pairs, "J")?;
        let (n, line) = textio::next_line(WHAT, &mut lines)?;
        let b = textio::parse_reals(WHAT, n, line, m)?;
        let (n, line) = textio::next_line(WHAT, &mut lines)?;
        let c = textio::parse_reals(WHAT, n, line, j)?;
        let mut w = Vec::with_capacity(m * j);
        for _ in 0..m {
            let (n, line) = textio::next_line(WHAT, &mut lines)?;
            w.extend(textio::parse_reals(WHAT, n, line, j)?);
        }
        let weights = Array2::from_shape_vec((m, j), w).expect("shape checked while parsing");
        RbmParams::from_parts(weights, Array1::from(b), Array1::from(c), kind)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Element-wise Bernoulli draws, one uniform per entry in order.
pub fn sample_binary(probs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Argument(format!("probability {p} outside [0, 1]")));
    }
    Ok(probs.iter().map(|&p| bernoulli(p, rng)).collect())
}

pub(crate) fn bernoulli(p: f64, rng: &mut Rng) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn binary_2x1() -> RbmParams {
        RbmParams::from_parts(array![[1.0], [-1.0]], array![0.5, -0.5], array![0.25], VisibleKind::Binary).unwrap()
    }

    #[test]
    fn energy_examples() {
        let zero = RbmParams::zeros(3, 2, VisibleKind::Binary);
        assert_eq!(zero.energy(&[1.0, 0.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_2x1().energy(&[1.0, 0.0], &[1.0]).unwrap(), -1.75, epsilon = 1e-15);

        let mut g = RbmParams::zeros(2, 2, VisibleKind::Gaussian);
        g.visible_bias = array![0.3, -1.2];
        g.weights = array![[0.4, 0.1], [2.0, -3.0]];
        assert_eq!(g.energy(&[0.3, -1.2], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn energy_rejects_bad_states() {
        let p = binary_2x1();
        assert!(matches!(p.energy(&[1.0], &[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(p.energy(&[0.5, 0.0], &[1.0]), Err(Error::Argument(_))));
        assert!(matches!(p.energy(&[1.0, 0.0], &[0.5]), Err(Error::Argument(_))));
    }

    #[test]
    fn hidden_conditional_examples() {
        let zero = RbmParams::zeros(2, 3, VisibleKind::Binary);
        assert_eq!(zero.hidden_conditional(&[1.0, 0.0]).unwrap(), vec![0.5; 3]);

        let p = RbmParams::from_parts(array![[1.0], [1.0]], array![0.0, 0.0], array![0.0], VisibleKind::Binary).unwrap();
        assert_abs_diff_eq!(p.hidden_conditional(&[1.0, 1.0]).unwrap()[0], 0.880797, epsilon = 1e-6);

        let sat = RbmParams::from_parts(array![[0.0]], array![0.0], array![-30.0], VisibleKind::Binary).unwrap();
        assert!(sat.hidden_conditional(&[1.0]).unwrap()[0] < 1e-12);
        assert!(zero.hidden_conditional(&[1.0]).is_err());
    }

    #[test]
    fn visible_conditional_examples() {
        let zero = RbmParams::zeros(3, 2, VisibleKind::Binary);
        assert_eq!(zero.visible_conditional(&[1.0, 1.0]).unwrap(), vec![0.5; 3]);

        let mut g = RbmParams::zeros(2, 2, VisibleKind::Gaussian);
        g.visible_bias = array![0.7, -0.2];
        g.weights = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(g.visible_conditional(&[0.0, 0.0]).unwrap(), vec![0.7, -0.2]);

        let p = RbmParams::from_parts(array![[2.0, -1.0]], array![0.0], array![0.0, 0.0], VisibleKind::Binary).unwrap();
        assert_abs_diff_eq!(p.visible_conditional(&[1.0, 1.0]).unwrap()[0], 0.731059, epsilon = 1e-6);
        assert!(p.visible_conditional(&[1.0]).is_err());
    }

    #[test]
    fn sample_binary_examples() {
        let mut rng = seeded(42, 0);
        assert_eq!(sample_binary(&[0.0; 8], &mut rng).unwrap(), vec![0.0; 8]);
        assert_eq!(sample_binary(&[1.0; 8], &mut rng).unwrap(), vec![1.0; 8]);
        let draws = sample_binary(&vec![0.5; 10_000], &mut seeded(2024, 0)).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        assert!(sample_binary(&[1.5], &mut rng).is_err());
        assert!(sample_binary(&[-0.1], &mut rng).is_err());
    }

    #[test]
    fn free_energy_examples() {
        let zero = RbmParams::zeros(3, 5, VisibleKind::Binary);
        assert_abs_diff_eq!(zero.free_energy(&[1.0, 0.0, 1.0]).unwrap(), -5.0 * 2f64.ln(), epsilon = 1e-12);

        let mut g = RbmParams::zeros(2, 3, VisibleKind::Gaussian);
        g.visible_bias = array![0.5, -0.5];
        g.hidden_bias = array![-60.0, -60.0, -60.0];
        assert!(g.free_energy(&[0.5, -0.5]).unwrap().abs() < 1e-20);
    }

    #[test]
    fn lower_free_energy_means_higher_probability() {
        let p = binary_2x1();
        let states = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let unnorm: Vec<(f64, f64)> = states
            .iter()
            .map(|v| {
                let f = p.free_energy(v).unwrap();
                let direct: f64 = [[0.0], [1.0]].iter().map(|h| (-p.energy(v, h).unwrap()).exp()).sum();
                (f, direct)
            })
            .collect();
        for a in &unnorm {
            for b in &unnorm {
                if a.0 < b.0 {
                    assert!(a.1 > b.1);
                }
            }
        }
    }

    #[test]
    fn stable_nonlinearities() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert_abs_diff_eq!(softplus(0.0), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mut rng = seeded(5, 1);
        let mut p = RbmParams::init(6, 4, VisibleKind::Gaussian, &mut rng);
        p.visible_bias[2] = 1.0 / 3.0;
        p.hidden_bias[1] = -2.5e-300;
        let back = RbmParams::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
        assert!(RbmParams::from_text("RBM v1 kind=binary M=1 J=1\n0\n").is_err());
        assert!(RbmParams::from_text("RBM v2 kind=binary M=1 J=1\n0\n0\n0\n").is_err());
    }
}
