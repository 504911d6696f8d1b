use std::time::Instant;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;

use super::{bernoulli, RbmParams, VisibleKind};
use crate::dataset::SampleVector;
use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

/// One CD-1 update on a mini-batch.
///
/// For every sample the positive phase uses `p(h | v)`, a binary hidden
/// sample drives the reconstruction `v'` (sampled for binary units, the
/// conditional mean for Gaussian units), and the negative phase uses
/// `p(h' | v')`. The per-sample deltas are averaged and applied once.
pub fn cd1_step(params: &RbmParams, batch: &[SampleVector], eta: f64, rng: &mut Rng) -> Result<RbmParams> {
    if batch.is_empty() {
        return Err(Error::Argument("CD-1 batch must not be empty".into()));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Argument(format!("learning rate must be >= 0, got {eta}")));
    }
    let (m, j) = (params.visible(), params.hidden());
    let n = batch.len();
    let mut v0 = Array2::zeros((n, m));
    let mut ph0 = Array2::zeros((n, j));
    let mut v1 = Array2::zeros((n, m));
    let mut ph1 = Array2::zeros((n, j));
    for (row, sample) in batch.iter().enumerate() {
        check_len("CD-1 sample", m, sample.len())?;
        let v = ArrayView1::from(sample.as_slice());
        let p_h = params.hidden_probs(v);
        let h = p_h.mapv(|p| bernoulli(p, rng));
        let mean = params.visible_mean(h.view());
        let recon = match params.kind() {
            VisibleKind::Binary => mean.mapv(|p| bernoulli(p, rng)),
            VisibleKind::Gaussian => mean,
        };
        let p_h_recon = params.hidden_probs(recon.view());
        v0.row_mut(row).assign(&v);
        ph0.row_mut(row).assign(&p_h);
        v1.row_mut(row).assign(&recon);
        ph1.row_mut(row).assign(&p_h_recon);
    }
    let scale = eta / n as f64;
    let dw = (v0.t().dot(&ph0) - v1.t().dot(&ph1)) * scale;
    let db = (v0.sum_axis(Axis(0)) - v1.sum_axis(Axis(0))) * scale;
    let dc = (ph0.sum_axis(Axis(0)) - ph1.sum_axis(Axis(0))) * scale;

    let mut next = params.clone();
    let (w, b, c) = next.parts_mut();
    *w += &dw;
    *b += &db;
    *c += &dc;
    if w.iter().chain(b.iter()).chain(c.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("CD-1 update produced non-finite parameters".into()));
    }
    Ok(next)
}

/// Mean squared distance between each sample and its deterministic one-step
/// reconstruction `visible_mean(p(h | v))`.
pub fn reconstruction_error(params: &RbmParams, data: &[SampleVector]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Argument("reconstruction error of an empty set".into()));
    }
    let mut total = 0.0;
    for sample in data {
        check_len("reconstruction sample", params.visible(), sample.len())?;
        let v = ArrayView1::from(sample.as_slice());
        let recon = params.visible_mean(params.hidden_probs(v).view());
        total += v.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub free_energy: f64,
    pub recon_error: f64,
    pub seconds: f64,
}

/// Per-epoch monitor of RBM training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn free_energy_at(&self, epoch: usize) -> Option<f64> {
        self.records.iter().find(|r| r.epoch == epoch).map(|r| r.free_energy)
    }

    /// CSV with header `epoch,free_energy,recon_error,seconds`. When
    /// `wall_clock` is false the seconds column is written as 0 so the file
    /// depends only on seed and configuration.
    pub fn to_csv(&self, wall_clock: bool) -> String {
        let mut out = String::from("epoch,free_energy,recon_error,seconds\n");
        for r in &self.records {
            let secs = if wall_clock { r.seconds } else { 0.0 };
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.free_energy, r.recon_error, secs));
        }
        out
    }
}

/// Mini-batch CD-1 training with a seeded reshuffle every epoch.
pub fn train_rbm(
    params: &RbmParams,
    data: &[SampleVector],
    options: TrainOptions,
    rng: &mut Rng,
) -> Result<(RbmParams, TrainTrace)> {
    if options.epochs == 0 || options.batch_size == 0 {
        return Err(Error::Argument("epochs and batch size must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    let mut params = params.clone();
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(options.batch_size);
    for epoch in 1..=options.epochs {
        let start = Instant::now();
        order.shuffle(rng);
        for chunk in order.chunks(options.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            params = cd1_step(&params, &batch, options.eta, rng)?;
        }
        let free_energy = data
            .iter()
            .map(|v| params.free_energy_unchecked(ArrayView1::from(v.as_slice())))
            .sum::<f64>()
            / data.len() as f64;
        let recon_error = reconstruction_error(&params, data)?;
        log::debug!("epoch {epoch}: free energy {free_energy:.4}, reconstruction {recon_error:.4}");
        trace.records.push(EpochRecord {
            epoch,
            free_energy,
            recon_error,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn zero_step_leaves_params_unchanged() {
        let p = RbmParams::init(5, 3, VisibleKind::Binary, &mut seeded(1, 0));
        let batch = vec![vec![1.0, 0.0, 1.0, 1.0, 0.0]];
        let next = cd1_step(&p, &batch, 0.0, &mut seeded(2, 0)).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn exact_reconstruction_is_a_fixed_point() {
        // Gaussian units with zero weights reconstruct to b; a sample equal
        // to b gives v' = v and p(h'|v') = p(h|v).
        let mut p = RbmParams::zeros(3, 2, VisibleKind::Gaussian);
        p.parts_mut().1.assign(&array![0.2, -0.4, 1.0]);
        p.parts_mut().2.assign(&array![0.3, -0.1]);
        let next = cd1_step(&p, &[vec![0.2, -0.4, 1.0]], 0.5, &mut seeded(3, 0)).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn cd1_golden_snapshot() {
        let p = RbmParams::from_parts(
            array![[0.5, -0.25], [0.125, 0.75]],
            array![0.1, -0.2],
            array![0.05, -0.05],
            VisibleKind::Binary,
        )
        .unwrap();
        let next = cd1_step(&p, &[vec![1.0, 0.0]], 0.1, &mut seeded(2015, 0)).unwrap();
        let expected = RbmParams::from_text(include_str!("../../tests/golden/cd1_2x2.txt")).unwrap();
        assert_eq!(next, expected, "got:\n{}", next.to_text());
    }

    #[test]
    fn cd1_rejects_bad_input() {
        let p = RbmParams::zeros(2, 2, VisibleKind::Binary);
        let mut rng = seeded(0, 0);
        assert!(cd1_step(&p, &[], 0.1, &mut rng).is_err());
        assert!(cd1_step(&p, &[vec![1.0, 0.0]], -0.1, &mut rng).is_err());
        assert!(matches!(cd1_step(&p, &[vec![1.0]], 0.1, &mut rng), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reconstruction_error_examples() {
        let zero = RbmParams::zeros(4, 2, VisibleKind::Binary);
        let data = vec![vec![0.0; 4], vec![0.0; 4]];
        assert_eq!(reconstruction_error(&zero, &data).unwrap(), 0.25 * 4.0);

        let g = RbmParams::zeros(3, 2, VisibleKind::Gaussian);
        assert_eq!(reconstruction_error(&g, &[vec![0.0; 3]]).unwrap(), 0.0);

        let p = RbmParams::init(4, 3, VisibleKind::Binary, &mut seeded(9, 0));
        let a = vec![vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 1.0], vec![1.0; 4]];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(reconstruction_error(&p, &a).unwrap(), reconstruction_error(&p, &b).unwrap());
    }

    #[test]
    fn train_trace_shape_and_determinism() {
        let data: Vec<Vec<f64>> = (0..24)
            .map(|i| (0..6).map(|j| ((i + j) % 3 == 0) as u8 as f64).collect())
            .collect();
        let p = RbmParams::init(6, 4, VisibleKind::Binary, &mut seeded(1, 0));
        let opts = TrainOptions {
            epochs: 50,
            batch_size: 6,
            eta: 0.1,
        };
        let (a, trace) = train_rbm(&p, &data, opts, &mut seeded(7, 0)).unwrap();
        assert_eq!(trace.len(), 50);
        assert!(trace.records.windows(2).all(|w| w[0].epoch < w[1].epoch));
        let (b, trace_b) = train_rbm(&p, &data, opts, &mut seeded(7, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(trace.to_csv(false), trace_b.to_csv(false));

        let (frozen, _) = train_rbm(&p, &data, TrainOptions { eta: 0.0, ..opts }, &mut seeded(7, 0)).unwrap();
        assert_eq!(frozen, p);
        assert!(train_rbm(&p, &data, TrainOptions { epochs: 0, ..opts }, &mut seeded(7, 0)).is_err());
        assert!(train_rbm(&p, &[], opts, &mut seeded(7, 0)).is_err());
    }
}
