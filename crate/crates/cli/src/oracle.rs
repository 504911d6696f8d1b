//! Tiny-model consistency checks for the RBM learning rule.

use csaim_core::dataset::SampleVector;
use csaim_core::rbm::{
    cd1_step, exact_loglik, exact_loglik_gradient, exact_partition, RbmGradient, RbmParams, VisibleKind,
};
use csaim_core::rng::{seeded, stream, Rng};
use csaim_core::Result;
use ndarray::{Array1, Array2};
use rand::Rng as _;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub seed: u64,
    /// Parameter draws for the CD-1 direction statistic.
    pub draws: usize,
    /// CD-1 runs averaged per draw.
    pub cd_repeats: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            seed: 0,
            draws: 50,
            cd_repeats: 200,
        }
    }
}

fn states(len: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1usize << len).map(move |s| (0..len).map(|i| ((s >> i) & 1) as f64).collect())
}

pub fn random_rbm(m: usize, j: usize, rng: &mut Rng) -> RbmParams {
    let mut u = || rng.random_range(-1.0..1.0);
    let w = Array2::from_shape_simple_fn((m, j), &mut u);
    let b = Array1::from_shape_simple_fn(m, &mut u);
    let c = Array1::from_shape_simple_fn(j, &mut u);
    RbmParams::from_parts(w, b, c, VisibleKind::Binary).expect("finite parameters")
}

pub fn random_binary_data(m: usize, n: usize, rng: &mut Rng) -> Vec<SampleVector> {
    (0..n)
        .map(|_| (0..m).map(|_| f64::from(rng.random_bool(0.5))).collect())
        .collect()
}

/// Largest deviation of `Σ p(v,h)` from 1 and of `exp(-F(v))/Z` from the
/// enumerated marginal over `models` random RBMs with `M, J ≤ 4`.
fn normalization(seed: u64, models: usize) -> Result<(f64, f64)> {
    let mut rng = seeded(seed, stream::ORACLE);
    let (mut total_err, mut marginal_err) = (0.0f64, 0.0f64);
    for _ in 0..models {
        let m = rng.random_range(1..=4);
        let j = rng.random_range(1..=4);
        let rbm = random_rbm(m, j, &mut rng);
        let z = exact_partition(&rbm)?;
        let mut total = 0.0;
        for v in states(m) {
            let mut marginal = 0.0;
            for h in states(j) {
                marginal += (-rbm.energy(&v, &h)?).exp() / z;
            }
            total += marginal;
            marginal_err = marginal_err.max(((-rbm.free_energy(&v)?).exp() / z - marginal).abs());
        }
        total_err = total_err.max((total - 1.0).abs());
    }
    Ok((total_err, marginal_err))
}

fn flatten(rbm: &RbmParams) -> Vec<f64> {
    rbm.weights()
        .iter()
        .chain(rbm.visible_bias())
        .chain(rbm.hidden_bias())
        .copied()
        .collect()
}

fn unflatten(like: &RbmParams, flat: &[f64]) -> RbmParams {
    let (m, j) = (like.visible(), like.hidden());
    let w = Array2::from_shape_vec((m, j), flat[..m * j].to_vec()).expect("shape");
    let b = Array1::from(flat[m * j..m * j + m].to_vec());
    let c = Array1::from(flat[m * j + m..].to_vec());
    RbmParams::from_parts(w, b, c, like.kind()).expect("finite parameters")
}

/// Largest gap between the exact gradient and central differences of the
/// exact log-likelihood on a 4×3 model with 8 samples.
fn finite_difference(seed: u64) -> Result<f64> {
    let mut rng = seeded(seed, stream::ORACLE);
    let rbm = random_rbm(4, 3, &mut rng);
    let data = random_binary_data(4, 8, &mut rng);
    let analytic: Vec<f64> = exact_loglik_gradient(&rbm, &data)?.iter().copied().collect();
    let base = flatten(&rbm);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for (i, g) in analytic.iter().enumerate() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += step;
        minus[i] -= step;
        let numeric = (exact_loglik(&unflatten(&rbm, &plus), &data)?
            - exact_loglik(&unflatten(&rbm, &minus), &data)?)
            / (2.0 * step);
        worst = worst.max((numeric - g).abs());
    }
    Ok(worst)
}

/// Fraction of parameter draws whose seed-averaged CD-1 update points into
/// the same half-space as the exact gradient.
fn cd_direction(options: OracleOptions) -> Result<(usize, usize)> {
    let mut rng = seeded(options.seed.wrapping_add(1), stream::ORACLE);
    let eta = 0.01;
    let mut positive = 0;
    for _ in 0..options.draws {
        let rbm = random_rbm(4, 3, &mut rng);
        let data = random_binary_data(4, 8, &mut rng);
        let exact = exact_loglik_gradient(&rbm, &data)?;
        let mut sum: Option<RbmGradient> = None;
        for r in 0..options.cd_repeats {
            let after = cd1_step(&rbm, &data, eta, &mut seeded(options.seed, 1000 + r as u64))?;
            let d = RbmGradient::between(&rbm, &after);
            sum = Some(match sum {
                None => d,
                Some(s) => RbmGradient {
                    weights: s.weights + d.weights,
                    visible_bias: s.visible_bias + d.visible_bias,
                    hidden_bias: s.hidden_bias + d.hidden_bias,
                },
            });
        }
        if sum.is_some_and(|s| s.cosine(&exact) > 0.0) {
            positive += 1;
        }
    }
    Ok((positive, options.draws))
}

pub fn run_oracles(options: OracleOptions) -> Result<Vec<Check>> {
    let zero = RbmParams::zeros(3, 2, VisibleKind::Binary);
    let z = exact_partition(&zero)?;
    let zero_total: f64 = states(3)
        .flat_map(|v| states(2).map(move |h| (v.clone(), h)))
        .map(|(v, h)| zero.energy(&v, &h).map(|e| (-e).exp() / z))
        .sum::<Result<f64>>()?;
    let (total_err, marginal_err) = normalization(options.seed, 25)?;
    let fd = finite_difference(options.seed)?;
    let (positive, draws) = cd_direction(options)?;
    Ok(vec![
        Check {
            name: "zero-model normalization",
            passed: zero_total == 1.0,
            detail: format!("sum p = {zero_total}"),
        },
        Check {
            name: "partition normalization",
            passed: total_err <= 1e-9,
            detail: format!("max |sum p - 1| = {total_err:.3e} over 25 models"),
        },
        Check {
            name: "free-energy consistency",
            passed: marginal_err <= 1e-9,
            detail: format!("max |exp(-F)/Z - p(v)| = {marginal_err:.3e}"),
        },
        Check {
            name: "exact gradient vs finite differences",
            passed: fd <= 1e-5,
            detail: format!("max abs gap = {fd:.3e}"),
        },
        Check {
            name: "CD-1 direction",
            passed: positive * 100 >= draws * 95,
            detail: format!("{positive}/{draws} draws with positive cosine"),
        },
    ])
}
