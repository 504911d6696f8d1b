//! The hybrid model: a shared RBM feature extractor, a delta-rule trained
//! softmax head and memory cells living in the RBM's hidden space. Also
//! hosts the perceptron-only baseline and the evaluation report.

mod baseline;
mod bundle;
mod head;
mod report;

use std::fmt;
use std::str::FromStr;

pub use baseline::{train_baseline, BaselineModel};
pub use bundle::{read_bundle, write_bundle, Bundle, Model, BUNDLE_FILES};
pub use head::{argmax, finetune_head, softmax, SoftmaxHead};
pub use report::{evaluate, Classifier, EvalReport, Tally, CSV_HEADER};

use crate::dataset::{FeatureStats, LabeledDataset};
use crate::error::{check_len, Error, Result};
use crate::immune::{Antibody, CsaimConfig};
use crate::memory::{leader_cluster, medoid_index, CellStatus, MemoryCell, MemoryStore};
use crate::normalized_distance;
use crate::rbm::{train_rbm, RbmParams, TrainOptions, TrainTrace, VisibleKind};
use crate::rng::{seeded, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hybrid,
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Hybrid => "hybrid",
            Mode::Baseline => "baseline",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hybrid" => Ok(Mode::Hybrid),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode {other:?} (expected hybrid or baseline)")),
        }
    }
}

/// RBM and head hyperparameters. Randomness comes from the clonal config's
/// seed on the RBM streams.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmConfig {
    pub kind: VisibleKind,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// CD-1 learning rate.
    pub eta: f64,
}

impl Default for RbmConfig {
    fn default() -> Self {
        RbmConfig {
            kind: VisibleKind::Gaussian,
            hidden: 80,
            epochs: 50,
            batch_size: 6,
            eta: 0.01,
        }
    }
}

impl RbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument("hidden, epochs and batch_size must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Argument(format!("RBM learning rate must be positive, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "kind={}\nhidden={}\nepochs={}\nbatch_size={}\neta={}\n",
            self.kind, self.hidden, self.epochs, self.batch_size, self.eta
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "rbm config";
        let mut cfg = RbmConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |e: String| Error::parse(WHAT, i + 1, e);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, found {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "kind" => cfg.kind = value.parse().map_err(|e| bad(format!("{e}")))?,
                "hidden" => cfg.hidden = value.parse().map_err(|e| bad(format!("bad hidden: {e}")))?,
                "epochs" => cfg.epochs = value.parse().map_err(|e| bad(format!("bad epochs: {e}")))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(format!("bad batch_size: {e}")))?,
                "eta" => cfg.eta = value.parse().map_err(|e| bad(format!("bad eta: {e}")))?,
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub rbm: RbmParams,
    pub head: SoftmaxHead,
    pub memory: MemoryStore,
    pub stats: Option<FeatureStats>,
    pub mu_theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub confidence: Vec<f64>,
    pub cell: Option<usize>,
}

impl HybridModel {
    pub fn preprocess(&self, raw: &[f64]) -> Result<Vec<f64>> {
        match &self.stats {
            Some(stats) => stats.apply(raw),
            None => Ok(raw.to_vec()),
        }
    }
}

/// Hidden probabilities and softmax output for a preprocessed sample.
pub fn forward(model: &HybridModel, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = model.rbm.hidden_conditional(v)?;
    let y = softmax(&model.head.logits(&h)?)?;
    Ok((h, y))
}

/// Head label plus the nearest memory cell within `μ_θ` in hidden space.
pub fn predict(model: &HybridModel, v: &[f64]) -> Result<Prediction> {
    let (h, y) = forward(model, v)?;
    let mut cell = None;
    let mut nearest = model.mu_theta;
    for c in &model.memory.cells {
        check_len("memory signature", h.len(), c.pattern().len())?;
        let dist = normalized_distance(&h, c.pattern());
        if dist < nearest {
            nearest = dist;
            cell = Some(c.id);
        }
    }
    Ok(Prediction {
        label: argmax(&y),
        confidence: y,
        cell,
    })
}

impl Classifier for HybridModel {
    fn classify(&self, raw: &[f64]) -> Result<Option<usize>> {
        Ok(Some(predict(self, &self.preprocess(raw)?)?.label))
    }
}

/// Most frequent label, lowest label on ties.
pub(crate) fn majority(labels: impl IntoIterator<Item = usize>, classes: usize) -> Option<usize> {
    let mut counts = vec![0usize; classes];
    let mut any = false;
    for l in labels {
        counts[l] += 1;
        any = true;
    }
    any.then(|| {
        let best = counts.iter().copied().max().unwrap_or(0);
        counts.iter().position(|&c| c == best).unwrap_or(0)
    })
}

/// Clusters the training samples' hidden probability vectors into memory
/// cells. Each cluster's medoid becomes the cell signature, its majority
/// label the cell label. A cell is converged when the head's mean error on
/// its members is below `E_min`, otherwise it is marked expired.
pub fn generate_rbm_memory_cells(
    rbm: &RbmParams,
    head: &SoftmaxHead,
    train: &LabeledDataset,
    cfg: &CsaimConfig,
) -> Result<MemoryStore> {
    if train.is_empty() {
        return Err(Error::Argument("memory generation needs training data".into()));
    }
    let hidden = train
        .samples()
        .iter()
        .map(|v| rbm.hidden_conditional(v))
        .collect::<Result<Vec<_>>>()?;
    let (clusters, discarded) = leader_cluster(&hidden, cfg.mu_theta, cfg.c_max_memory);
    if discarded > 0 {
        log::warn!(
            "memory capacity {} reached; {discarded} samples left without a cell",
            cfg.c_max_memory
        );
    }
    let mut store = MemoryStore::from_config(cfg);
    for (q, members) in clusters.iter().enumerate() {
        let points: Vec<&[f64]> = members.iter().map(|&i| hidden[i].as_slice()).collect();
        let signature = points[medoid_index(&points).expect("clusters are non-empty")].to_vec();
        let labels: Vec<usize> = members.iter().map(|&i| train.labels()[i]).collect();
        let member_hidden: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        let error = head.mean_error(&member_hidden, &labels)?;
        store.cells.push(MemoryCell {
            id: q,
            center: Antibody {
                pattern: signature,
                theta: 0.0,
                weights: Vec::new(),
                affinity: 0.0,
            },
            theta_q: crate::memory::category_target(q, cfg.im),
            label: majority(labels, train.classes()),
            trained_error: error,
            status: if error < cfg.e_min {
                CellStatus::Converged
            } else {
                CellStatus::Expired
            },
        });
    }
    Ok(store)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub model: HybridModel,
    pub trace: TrainTrace,
    pub baseline: Option<BaselineModel>,
}

/// End-to-end training on raw samples: standardization (Gaussian RBMs),
/// CD-1 training, head fine-tuning and memory generation, optionally
/// followed by the baseline clonal selection path.
pub fn train_pipeline(
    train: &LabeledDataset,
    csaim: &CsaimConfig,
    rbm_cfg: &RbmConfig,
    with_baseline: bool,
) -> Result<PipelineOutput> {
    if train.is_empty() {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    csaim.validate()?;
    rbm_cfg.validate()?;
    let (data, stats) = match rbm_cfg.kind {
        VisibleKind::Gaussian => {
            let stats = FeatureStats::from_samples(train.samples(), train.k())?;
            (train.apply_stats(&stats)?, Some(stats))
        }
        VisibleKind::Binary => (train.clone(), None),
    };
    let init = RbmParams::init(
        train.k(),
        rbm_cfg.hidden,
        rbm_cfg.kind,
        &mut seeded(csaim.seed, stream::RBM_INIT),
    );
    let options = TrainOptions {
        epochs: rbm_cfg.epochs,
        batch_size: rbm_cfg.batch_size,
        eta: rbm_cfg.eta,
    };
    let (rbm, trace) = train_rbm(
        &init,
        data.samples(),
        options,
        &mut seeded(csaim.seed, stream::RBM_TRAIN),
    )?;
    let head = SoftmaxHead::zeros(rbm_cfg.hidden, train.classes())?;
    let head = finetune_head(&rbm, &head, &data, csaim.eta, csaim.t_im, csaim.e_min)?;
    let memory = generate_rbm_memory_cells(&rbm, &head, &data, csaim)?;
    let baseline = if with_baseline {
        Some(train_baseline(train, csaim)?)
    } else {
        None
    };
    Ok(PipelineOutput {
        model: HybridModel {
            rbm,
            head,
            memory,
            stats,
            mu_theta: csaim.mu_theta,
        },
        trace,
        baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_dataset;
    use approx::assert_abs_diff_eq;

    fn tiny_model(classes: usize) -> HybridModel {
        HybridModel {
            rbm: RbmParams::zeros(4, 3, VisibleKind::Gaussian),
            head: SoftmaxHead::zeros(3, classes).unwrap(),
            memory: MemoryStore::new(3, 5),
            stats: None,
            mu_theta: 0.3,
        }
    }

    #[test]
    fn zero_head_is_uniform_and_picks_label_zero() {
        let model = tiny_model(3);
        let p = predict(&model, &[0.3, -1.0, 2.0, 0.0]).unwrap();
        for y in &p.confidence {
            assert_abs_diff_eq!(*y, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(p.label, 0);
        assert_eq!(p.cell, None);
        assert!(forward(&model, &[0.0; 5]).is_err());
    }

    #[test]
    fn full_size_dimensions_flow() {
        let model = HybridModel {
            rbm: RbmParams::zeros(2304, 80, VisibleKind::Gaussian),
            head: SoftmaxHead::zeros(80, 3).unwrap(),
            memory: MemoryStore::new(3, 50),
            stats: None,
            mu_theta: 0.3,
        };
        let (h, y) = forward(&model, &vec![0.5; 2304]).unwrap();
        assert_eq!((h.len(), y.len()), (80, 3));
    }

    #[test]
    fn majority_ties_go_low() {
        assert_eq!(majority([2, 1, 2, 1], 3), Some(1));
        assert_eq!(majority([], 3), None);
    }

    #[test]
    fn single_sample_gives_one_cell() {
        let rbm = RbmParams::zeros(4, 3, VisibleKind::Gaussian);
        let head = SoftmaxHead::zeros(3, 2).unwrap();
        let data = LabeledDataset::new(vec![vec![0.1, 0.2, 0.3, 0.4]], vec![1], 4, 2).unwrap();
        let store = generate_rbm_memory_cells(&rbm, &head, &data, &CsaimConfig::default()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.cells[0].label, Some(1));
    }

    #[test]
    fn rbm_config_round_trip() {
        let cfg = RbmConfig {
            kind: VisibleKind::Binary,
            hidden: 12,
            epochs: 7,
            batch_size: 3,
            eta: 0.05,
        };
        assert_eq!(RbmConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        assert!(RbmConfig::from_text("bogus=1").is_err());
    }

    #[test]
    fn empty_training_set_rejected() {
        let empty = LabeledDataset::new(vec![], vec![], 4, 2).unwrap();
        assert!(train_pipeline(&empty, &CsaimConfig::default(), &RbmConfig::default(), false).is_err());
    }

    fn small_setup() -> (LabeledDataset, CsaimConfig, RbmConfig) {
        let data = synth_dataset(3, 4, 36, 0.05, 11).unwrap();
        let rbm = RbmConfig {
            hidden: 12,
            epochs: 30,
            ..RbmConfig::default()
        };
        (data, CsaimConfig::default(), rbm)
    }

    #[test]
    fn separable_data_is_learned() {
        let (data, csaim, rbm) = small_setup();
        let out = train_pipeline(&data, &csaim, &rbm, false).unwrap();
        let report = evaluate(&out.model, &data).unwrap();
        assert_eq!(report.overall.correct, data.len());
        assert_eq!(out.trace.len(), 30);
        assert!(out.model.memory.len() <= csaim.c_max_memory);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let (data, csaim, rbm) = small_setup();
        let a = train_pipeline(&data, &csaim, &rbm, false).unwrap();
        let b = train_pipeline(&data, &csaim, &rbm, false).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.trace.to_csv(false), b.trace.to_csv(false));
    }

    #[test]
    fn finetune_leaves_rbm_untouched() {
        let (data, csaim, rbm_cfg) = small_setup();
        let out = train_pipeline(&data, &csaim, &rbm_cfg, false).unwrap();
        let before = out.model.rbm.to_text();
        let std = data.apply_stats(out.model.stats.as_ref().unwrap()).unwrap();
        let head = SoftmaxHead::zeros(12, 3).unwrap();
        finetune_head(&out.model.rbm, &head, &std, 0.1, 5, 1e-3).unwrap();
        assert_eq!(out.model.rbm.to_text(), before);
    }

    #[test]
    fn duplicated_data_gives_identical_store() {
        let (data, csaim, rbm_cfg) = small_setup();
        let out = train_pipeline(&data, &csaim, &rbm_cfg, false).unwrap();
        let std = data.apply_stats(out.model.stats.as_ref().unwrap()).unwrap();
        let mut samples = std.samples().to_vec();
        samples.extend_from_slice(std.samples());
        let mut labels = std.labels().to_vec();
        labels.extend_from_slice(std.labels());
        let doubled = LabeledDataset::new(samples, labels, std.k(), std.classes()).unwrap();
        let once = generate_rbm_memory_cells(&out.model.rbm, &out.model.head, &std, &csaim).unwrap();
        let twice = generate_rbm_memory_cells(&out.model.rbm, &out.model.head, &doubled, &csaim).unwrap();
        assert_eq!(once, twice);
    }
}
