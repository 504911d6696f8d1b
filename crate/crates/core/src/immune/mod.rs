//! Clonal selection engine: antibodies, hypermutation, receptor editing,
//! suppression and the generation loop.

mod config;

use rand::Rng as _;

pub use config::{config_hash, CsaimConfig, HmReRatio, Range};

use crate::dataset::SampleVector;
use crate::error::{check_len, Error, Result};
use crate::memory::scale_sample;
use crate::rng::Rng;

/// Receptor pattern, threshold and perceptron weights of one antibody.
#[derive(Debug, Clone, PartialEq)]
pub struct Antibody {
    pub pattern: Vec<f64>,
    pub theta: f64,
    pub weights: Vec<f64>,
    /// Cached affinity from the last evaluation.
    pub affinity: f64,
}

fn uniform(range: Range, rng: &mut Rng) -> f64 {
    range.lo + (range.hi - range.lo) * rng.random::<f64>()
}

const UNIT: Range = Range::new(-1.0, 1.0);

impl Antibody {
    /// Pattern, threshold and weights uniform in `[-1, 1]`.
    pub fn random(k: usize, rng: &mut Rng) -> Self {
        let pattern = (0..k).map(|_| uniform(UNIT, rng)).collect();
        let theta = uniform(UNIT, rng);
        let weights = (0..k).map(|_| uniform(UNIT, rng)).collect();
        Antibody {
            pattern,
            theta,
            weights,
            affinity: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.pattern.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pattern.is_empty()
    }
}

pub fn init_population(n: usize, k: usize, rng: &mut Rng) -> Result<Vec<Antibody>> {
    if n == 0 || k == 0 {
        return Err(Error::Argument("population size and pattern length must be at least 1".into()));
    }
    Ok((0..n).map(|_| Antibody::random(k, rng)).collect())
}

/// `1 / (1 + ‖d' - h‖)` where `d'` is the sample rescaled onto the pattern.
pub fn affinity(ab: &Antibody, sample: &[f64]) -> Result<f64> {
    check_len("affinity", ab.len(), sample.len())?;
    let scaled = scale_sample(sample, &ab.pattern)?;
    Ok(1.0 / (1.0 + crate::euclidean(&scaled, &ab.pattern)))
}

/// Best affinity over a set of samples. Samples that cannot be rescaled onto
/// the pattern count as no recognition (affinity 0).
pub fn best_affinity(ab: &Antibody, samples: &[SampleVector]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for s in samples {
        match affinity(ab, s) {
            Ok(a) => best = best.max(a),
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

fn evaluate(population: &mut [Antibody], samples: &[SampleVector]) -> Result<()> {
    for ab in population {
        ab.affinity = best_affinity(ab, samples)?;
    }
    Ok(())
}

/// Stable sort by descending cached affinity.
fn sort_by_affinity(population: &mut [Antibody]) {
    population.sort_by(|a, b| b.affinity.total_cmp(&a.affinity));
}

/// Somatic hypermutation: each pattern element is shifted by a draw from
/// `r_w` with probability `rate`, the threshold always by a draw from
/// `r_theta`; everything is clamped to `[-1, 1]`.
pub fn hypermutate(ab: &Antibody, r_w: Range, r_theta: Range, rate: f64, rng: &mut Rng) -> Antibody {
    let mut out = ab.clone();
    for x in &mut out.pattern {
        if rng.random::<f64>() < rate {
            *x = (*x + uniform(r_w, rng)).clamp(-1.0, 1.0);
        }
    }
    out.theta = (out.theta + uniform(r_theta, rng)).clamp(-1.0, 1.0);
    out
}

/// Receptor editing: a random contiguous segment of the pattern and the
/// threshold are redrawn uniformly from `[-1, 1]`.
pub fn receptor_edit(ab: &Antibody, rng: &mut Rng) -> Antibody {
    let k = ab.len();
    let start = rng.random_range(0..k);
    let len = rng.random_range(1..=k - start);
    edit_segment(ab, start, len, rng)
}

pub(crate) fn edit_segment(ab: &Antibody, start: usize, len: usize, rng: &mut Rng) -> Antibody {
    let mut out = ab.clone();
    for x in &mut out.pattern[start..start + len] {
        *x = uniform(UNIT, rng);
    }
    out.theta = uniform(UNIT, rng);
    out
}

/// Keeps antibodies in descending-affinity order, dropping any whose pattern
/// lies within `e_sim · sqrt(k)` of one already kept.
pub fn suppress(population: Vec<Antibody>, e_sim: f64) -> Vec<Antibody> {
    let mut sorted = population;
    sort_by_affinity(&mut sorted);
    let mut kept: Vec<Antibody> = Vec::with_capacity(sorted.len());
    for ab in sorted {
        let radius = e_sim * (ab.len() as f64).sqrt();
        if kept.iter().all(|k| crate::euclidean(&k.pattern, &ab.pattern) > radius) {
            kept.push(ab);
        }
    }
    kept
}

/// Splits `total` clones across parents proportionally to affinity using
/// largest remainders; equal shares when every affinity is zero.
pub(crate) fn clone_counts(affinities: &[f64], total: usize) -> Vec<usize> {
    if affinities.is_empty() {
        return Vec::new();
    }
    let sum: f64 = affinities.iter().sum();
    let shares: Vec<f64> = if sum > 0.0 {
        affinities.iter().map(|a| a / sum * total as f64).collect()
    } else {
        vec![total as f64 / affinities.len() as f64; affinities.len()]
    };
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())));
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Hypermutation rate for a parent: `1 - affinity` clamped to `[0.05, 1]`.
pub fn hm_rate(affinity: f64) -> f64 {
    (1.0 - affinity).clamp(0.05, 1.0)
}

fn too_close(candidate: &Antibody, kept: &[Antibody], radius: f64) -> bool {
    kept.iter().any(|k| crate::euclidean(&k.pattern, &candidate.pattern) <= radius)
}

const REFILL_ATTEMPTS: usize = 1000;

/// One generation of clonal selection.
///
/// 1. evaluate the best affinity of every antibody over `samples`;
/// 2. select the top `Q`;
/// 3. allot `m` clones proportionally to affinity;
/// 4. mutate clones, alternating hypermutation and receptor editing by the
///    `HM:RE` ratio (receptor editing only when `stagnant`);
/// 5. evaluate the clones;
/// 6. keep the best `n` of parents and clones;
/// 7. suppress near duplicates;
/// 8. keep at most `n - c` survivors and refill to `n` with fresh random
///    antibodies.
///
/// The returned population is sorted by descending affinity.
pub fn recsa_generation(
    population: Vec<Antibody>,
    samples: &[SampleVector],
    cfg: &CsaimConfig,
    stagnant: bool,
    rng: &mut Rng,
) -> Result<Vec<Antibody>> {
    if samples.is_empty() {
        return Err(Error::Argument("clonal selection needs at least one sample".into()));
    }
    let Some(k) = population.first().map(Antibody::len) else {
        return Err(Error::Argument("clonal selection needs a non-empty population".into()));
    };
    let mut population = population;
    evaluate(&mut population, samples)?;
    sort_by_affinity(&mut population);

    let selected = &population[..cfg.q.min(population.len())];
    let affinities: Vec<f64> = selected.iter().map(|a| a.affinity).collect();
    let counts = clone_counts(&affinities, cfg.m);
    let mut clones = Vec::with_capacity(cfg.m);
    for (parent, count) in selected.iter().zip(counts) {
        for _ in 0..count {
            let idx = clones.len();
            let clone = if !stagnant && cfg.hm_re_ratio.uses_hm(idx) {
                hypermutate(parent, cfg.r_w, cfg.r_theta, hm_rate(parent.affinity), rng)
            } else {
                receptor_edit(parent, rng)
            };
            clones.push(clone);
        }
    }
    evaluate(&mut clones, samples)?;

    population.extend(clones);
    sort_by_affinity(&mut population);
    population.truncate(cfg.n);

    let mut survivors = suppress(population, cfg.e_sim);
    survivors.truncate(cfg.n - cfg.c);
    let radius = cfg.e_sim * (k as f64).sqrt();
    while survivors.len() < cfg.n {
        let mut fresh = Antibody::random(k, rng);
        for _ in 0..REFILL_ATTEMPTS {
            if !too_close(&fresh, &survivors, radius) {
                break;
            }
            fresh = Antibody::random(k, rng);
        }
        fresh.affinity = best_affinity(&fresh, samples)?;
        survivors.push(fresh);
    }
    sort_by_affinity(&mut survivors);
    Ok(survivors)
}

#[derive(Debug, Clone)]
pub struct RecsaRun {
    /// Final population, sorted by descending affinity.
    pub population: Vec<Antibody>,
    /// Best affinity after each completed generation.
    pub history: Vec<f64>,
}

/// Iterates [`recsa_generation`] up to `G_max` times, stopping early once the
/// best affinity reaches `1 - E_min`. After `t` generations without
/// improvement, one generation uses receptor editing only.
pub fn run_recsa(samples: &[SampleVector], cfg: &CsaimConfig, rng: &mut Rng) -> Result<RecsaRun> {
    cfg.validate()?;
    let k = samples
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Argument("clonal selection needs at least one sample".into()))?;
    let mut population = init_population(cfg.n, k, rng)?;
    evaluate(&mut population, samples)?;
    let mut best = population.iter().map(|a| a.affinity).fold(0.0, f64::max);
    let mut history = Vec::with_capacity(cfg.g_max);
    let mut since_improvement = 0;
    for _ in 0..cfg.g_max {
        let stagnant = since_improvement >= cfg.t;
        if stagnant {
            since_improvement = 0;
        }
        population = recsa_generation(population, samples, cfg, stagnant, rng)?;
        let now = population[0].affinity;
        if now > best {
            best = now;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        history.push(now);
        if now >= 1.0 - cfg.e_min {
            break;
        }
    }
    Ok(RecsaRun { population, history })
}
