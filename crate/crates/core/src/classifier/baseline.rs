use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::immune::{run_recsa, CsaimConfig};
use crate::memory::{category_target, classify_by_memory, cluster_antibodies, train_perceptron, MemoryStore};
use crate::rng::{seeded, stream};

use super::majority;
use super::report::Classifier;

/// Clonal selection with perceptron memory cells and no RBM.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub memory: MemoryStore,
    pub mu_theta: f64,
}

impl BaselineModel {
    /// Responding cell id and its label, if any cell responds.
    pub fn respond(&self, raw: &[f64]) -> Result<Option<(usize, Option<usize>)>> {
        let id = classify_by_memory(&self.memory, raw, self.mu_theta)?;
        Ok(id.map(|id| (id, self.memory.get(id).and_then(|c| c.label))))
    }
}

impl Classifier for BaselineModel {
    fn classify(&self, raw: &[f64]) -> Result<Option<usize>> {
        Ok(self.respond(raw)?.and_then(|(_, label)| label))
    }

    fn can_abstain(&self) -> bool {
        true
    }
}

fn unit(x: &[f64]) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter().map(|v| v / norm).collect()
    } else {
        x.to_vec()
    }
}

/// One clonal selection run per class on the raw samples, clustering of the
/// evolved populations into memory cells, majority labelling by response,
/// pruning of cells no training sample reaches and perceptron training of
/// the rest on unit-normalized samples.
pub fn train_baseline(train: &LabeledDataset, cfg: &CsaimConfig) -> Result<BaselineModel> {
    if train.is_empty() {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    cfg.validate()?;
    let mut rng = seeded(cfg.seed, stream::CLONAL);
    let mut store = MemoryStore::from_config(cfg);
    for class in 0..train.classes() {
        let samples: Vec<Vec<f64>> = train
            .iter()
            .filter(|&(_, l)| l == class)
            .map(|(s, _)| s.clone())
            .collect();
        if samples.is_empty() {
            continue;
        }
        let run = run_recsa(&samples, cfg, &mut rng)?;
        store = cluster_antibodies(&run.population, &store, cfg);
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); store.len()];
    for (i, sample) in train.samples().iter().enumerate() {
        if let Some(id) = classify_by_memory(&store, sample, cfg.mu_theta)? {
            members[id].push(i);
        }
    }
    let mut cells = Vec::new();
    for (mut cell, idx) in store.cells.into_iter().zip(members) {
        if idx.is_empty() {
            continue;
        }
        cell.id = cells.len();
        cell.theta_q = category_target(cell.id, store.im);
        cell.label = majority(idx.iter().map(|&i| train.labels()[i]), train.classes());
        let xs: Vec<Vec<f64>> = idx.iter().map(|&i| unit(&train.samples()[i])).collect();
        cells.push(train_perceptron(&cell, &xs, cfg.eta, cfg.t_im, cfg.e_min)?);
    }
    log::info!("baseline kept {} memory cells", cells.len());
    Ok(BaselineModel {
        memory: MemoryStore {
            cells,
            im: store.im,
            capacity: store.capacity,
        },
        mu_theta: cfg.mu_theta,
    })
}
