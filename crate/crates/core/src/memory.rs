//! Memory cells: the sample-scaling response test, leader clustering of
//! antibodies, medoids, per-cell perceptron training and the memory store.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::immune::{Antibody, CsaimConfig};
use crate::textio;
use crate::{euclidean, normalized_distance};

/// Rescales a sample onto an antibody's range: `d'_i = d_i · h_j / d_j`,
/// where `j` is the index of the smallest `d_i` among elements with
/// `d_i ≠ 0 ∧ h_i ≠ 0` (lowest index on ties). Elements outside that set
/// are passed through unscaled.
pub fn scale_sample(d: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    check_len("scale_sample", d.len(), h.len())?;
    let eligible = |i: usize| d[i] != 0.0 && h[i] != 0.0;
    let j = (0..d.len())
        .filter(|&i| eligible(i))
        .min_by(|&a, &b| d[a].total_cmp(&d[b]))
        .ok_or_else(|| Error::Degenerate("no element with both sample and pattern nonzero".into()))?;
    let factor = h[j] / d[j];
    Ok((0..d.len())
        .map(|i| if eligible(i) { d[i] * factor } else { d[i] })
        .collect())
}

/// `‖scale_sample(d, h) - h‖ / sqrt(k)`.
pub fn scaled_distance(d: &[f64], h: &[f64]) -> Result<f64> {
    let scaled = scale_sample(d, h)?;
    Ok(normalized_distance(&scaled, h))
}

/// How a cell came to be committed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    /// Not trained yet.
    Pending,
    /// Training error fell below `E_min`.
    Converged,
    /// Committed when the `t_IM` epoch budget ran out.
    Expired,
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellStatus::Pending => "pending",
            CellStatus::Converged => "converged",
            CellStatus::Expired => "expired",
        })
    }
}

impl std::str::FromStr for CellStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pending" => Ok(CellStatus::Pending),
            "converged" => Ok(CellStatus::Converged),
            "expired" => Ok(CellStatus::Expired),
            other => Err(format!("unknown cell status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryCell {
    pub id: usize,
    /// Medoid antibody of the crowd (for RBM-backed cells the pattern holds
    /// the hidden-space signature).
    pub center: Antibody,
    pub theta_q: f64,
    pub label: Option<usize>,
    pub trained_error: f64,
    pub status: CellStatus,
}

impl MemoryCell {
    pub fn pattern(&self) -> &[f64] {
        &self.center.pattern
    }
}

/// Target output for category `q`: `(q + 1) / (IM + 1)`.
pub fn category_target(q: usize, im: usize) -> f64 {
    (q + 1) as f64 / (im + 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    pub cells: Vec<MemoryCell>,
    pub im: usize,
    pub capacity: usize,
}

impl MemoryStore {
    pub fn new(im: usize, capacity: usize) -> Self {
        MemoryStore {
            cells: Vec::new(),
            im,
            capacity,
        }
    }

    pub fn from_config(cfg: &CsaimConfig) -> Self {
        Self::new(cfg.im, cfg.c_max_memory)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&MemoryCell> {
        self.cells.iter().find(|c| c.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("MEMSTORE v1 IM={} cap={} count={}\n", self.im, self.capacity, self.cells.len());
        for cell in &self.cells {
            let label = cell.label.map_or_else(|| "-".to_string(), |l| l.to_string());
            out.push_str(&format!(
                "{} {} {} {} {} {} {}\n",
                cell.id,
                label,
                cell.theta_q,
                cell.trained_error,
                cell.status,
                cell.center.theta,
                cell.center.affinity
            ));
            out.push_str(&textio::join_reals(cell.center.pattern.iter().copied()));
            out.push('\n');
            out.push_str(&textio::join_reals(cell.center.weights.iter().copied()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "memory store";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = textio::next_line(WHAT, &mut lines)?;
        let pairs = textio::parse_header(WHAT, header, &["MEMSTORE", "v1"])?;
        let im = textio::header_usize(WHAT, &pairs, "IM")?;
        let capacity = textio::header_usize(WHAT, &pairs, "cap")?;
        let count = textio::header_usize(WHAT, &pairs, "count")?;
        let mut cells = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, line) = textio::next_line(WHAT, &mut lines)?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, label, theta_q, err, status, theta, affinity] = fields[..] else {
                return Err(Error::parse(WHAT, no, "expected 7 cell fields"));
            };
            let bad = |e: String| Error::parse(WHAT, no, e);
            let id = id.parse().map_err(|e| bad(format!("bad id: {e}")))?;
            let label = match label {
                "-" => None,
                l => Some(l.parse().map_err(|e| bad(format!("bad label: {e}")))?),
            };
            let reals = textio::parse_reals(WHAT, no, &format!("{theta_q} {err} {theta} {affinity}"), 4)?;
            let status = status.parse().map_err(bad)?;
            let (no, line) = textio::next_line(WHAT, &mut lines)?;
            let k = line.split_whitespace().count();
            let pattern = textio::parse_reals(WHAT, no, line, k)?;
            let (no, line) = textio::next_line(WHAT, &mut lines)?;
            let k = line.split_whitespace().count();
            let weights = textio::parse_reals(WHAT, no, line, k)?;
            cells.push(MemoryCell {
                id,
                center: Antibody {
                    pattern,
                    theta: reals[2],
                    weights,
                    affinity: reals[3],
                },
                theta_q: reals[0],
                label,
                trained_error: reals[1],
                status,
            });
        }
        Ok(MemoryStore { cells, im, capacity })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Whether a cell recognizes `d`: normalized scaled distance below
/// `mu_theta`. Samples that cannot be scaled do not elicit a response.
pub fn responds(cell: &MemoryCell, d: &[f64], mu_theta: f64) -> Result<bool> {
    check_len("responds", cell.pattern().len(), d.len())?;
    match scaled_distance(d, cell.pattern()) {
        Ok(dist) => Ok(dist < mu_theta),
        Err(Error::Degenerate(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Index of the member minimizing the summed Euclidean distance to all
/// members (lowest index on ties).
pub fn medoid_index<P: AsRef<[f64]>>(points: &[P]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let total: f64 = points.iter().map(|q| euclidean(p.as_ref(), q.as_ref())).sum();
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((i, total));
        }
    }
    best.map(|(i, _)| i)
}

/// The central antibody of a crowd.
pub fn crowd_medoid(antibodies: &[Antibody]) -> Result<Antibody> {
    let patterns: Vec<&[f64]> = antibodies.iter().map(|a| a.pattern.as_slice()).collect();
    medoid_index(&patterns)
        .map(|i| antibodies[i].clone())
        .ok_or_else(|| Error::Argument("medoid of an empty crowd".into()))
}

/// Greedy leader clustering. Each point joins the first cluster whose
/// current medoid lies within `threshold` (normalized distance), otherwise
/// opens a new cluster while fewer than `capacity` exist. Medoids are
/// recomputed after every join. Returns member indices per cluster and the
/// number of points discarded for lack of capacity.
pub fn leader_cluster<P: AsRef<[f64]>>(points: &[P], threshold: f64, capacity: usize) -> (Vec<Vec<usize>>, usize) {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut medoids: Vec<usize> = Vec::new();
    let mut discarded = 0;
    for (i, p) in points.iter().enumerate() {
        let home = medoids
            .iter()
            .position(|&m| normalized_distance(points[m].as_ref(), p.as_ref()) < threshold);
        match home {
            Some(c) => {
                clusters[c].push(i);
                let members: Vec<&[f64]> = clusters[c].iter().map(|&j| points[j].as_ref()).collect();
                medoids[c] = clusters[c][medoid_index(&members).expect("non-empty cluster")];
            }
            None if clusters.len() < capacity => {
                clusters.push(vec![i]);
                medoids.push(i);
            }
            None => discarded += 1,
        }
    }
    (clusters, discarded)
}

/// Allocates antibodies to memory categories and returns the resulting
/// store. Existing cells seed the clustering (keeping their ids and labels);
/// the remaining antibodies are visited in descending-affinity order. Each
/// non-empty cluster becomes a pending cell centred on its medoid.
pub fn cluster_antibodies(population: &[Antibody], store: &MemoryStore, cfg: &CsaimConfig) -> MemoryStore {
    let mut ordered: Vec<Antibody> = store.cells.iter().map(|c| c.center.clone()).collect();
    let seeds = ordered.len();
    let mut rest = population.to_vec();
    rest.sort_by(|a, b| b.affinity.total_cmp(&a.affinity));
    ordered.extend(rest);

    let patterns: Vec<&[f64]> = ordered.iter().map(|a| a.pattern.as_slice()).collect();
    let (clusters, discarded) = leader_cluster(&patterns, cfg.mu_theta, store.capacity);
    if discarded > 0 {
        log::warn!(
            "memory capacity {} reached; {discarded} antibodies left unassigned",
            store.capacity
        );
    }
    let cells = clusters
        .iter()
        .enumerate()
        .map(|(q, members)| {
            let crowd: Vec<Antibody> = members.iter().map(|&i| ordered[i].clone()).collect();
            let label = members
                .iter()
                .find(|&&i| i < seeds)
                .and_then(|&i| store.cells[i].label);
            MemoryCell {
                id: q,
                center: crowd_medoid(&crowd).expect("clusters are non-empty"),
                theta_q: category_target(q, store.im),
                label,
                trained_error: 0.0,
                status: CellStatus::Pending,
            }
        })
        .collect();
    MemoryStore {
        cells,
        im: store.im,
        capacity: store.capacity,
    }
}

fn perceptron_output(weights: &[f64], x: &[f64]) -> f64 {
    weights.iter().zip(x).map(|(w, x)| w * x).sum()
}

/// Largest `½(θ_q - w·x)²` over the samples.
pub fn perceptron_error(weights: &[f64], samples: &[Vec<f64>], target: f64) -> f64 {
    samples
        .iter()
        .map(|x| 0.5 * (target - perceptron_output(weights, x)).powi(2))
        .fold(0.0, f64::max)
}

/// Trains the cell's weights towards output `θ_q` on every sample:
/// `O = Σ w_i x_i`, `δ = θ_q - O`, `w_i += η δ x_i`, for at most `t_im`
/// epochs, stopping once every per-sample error `½δ²` is below `e_min`.
pub fn train_perceptron(cell: &MemoryCell, samples: &[Vec<f64>], eta: f64, t_im: usize, e_min: f64) -> Result<MemoryCell> {
    if samples.is_empty() {
        return Err(Error::Argument("perceptron training needs at least one sample".into()));
    }
    if !(0.1..=1.0).contains(&eta) {
        return Err(Error::Argument(format!("perceptron learning rate must lie in [0.1, 1.0], got {eta}")));
    }
    for s in samples {
        check_len("perceptron sample", cell.center.weights.len(), s.len())?;
    }
    let mut out = cell.clone();
    let target = cell.theta_q;
    let weights = &mut out.center.weights;
    let mut error = perceptron_error(weights, samples, target);
    let mut epoch = 0;
    while epoch < t_im && error >= e_min {
        for x in samples {
            let delta = target - perceptron_output(weights, x);
            for (w, xi) in weights.iter_mut().zip(x) {
                *w += eta * delta * xi;
            }
        }
        error = perceptron_error(weights, samples, target);
        if !error.is_finite() {
            return Err(Error::Numerical(format!("perceptron diverged at epoch {}", epoch + 1)));
        }
        epoch += 1;
    }
    out.trained_error = error;
    out.status = if error < e_min {
        CellStatus::Converged
    } else {
        CellStatus::Expired
    };
    Ok(out)
}

/// The responding cell with the smallest normalized scaled distance, or
/// `None` when no cell responds.
pub fn classify_by_memory(store: &MemoryStore, d: &[f64], mu_theta: f64) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for cell in &store.cells {
        check_len("classify_by_memory", cell.pattern().len(), d.len())?;
        let dist = match scaled_distance(d, cell.pattern()) {
            Ok(dist) => dist,
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        if dist < mu_theta && best.is_none_or(|(_, b)| dist < b) {
            best = Some((cell.id, dist));
        }
    }
    Ok(best.map(|(id, _)| id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ab(pattern: Vec<f64>) -> Antibody {
        let k = pattern.len();
        Antibody {
            pattern,
            theta: 0.0,
            weights: vec![0.0; k],
            affinity: 0.0,
        }
    }

    fn cell(id: usize, pattern: Vec<f64>) -> MemoryCell {
        MemoryCell {
            id,
            center: ab(pattern),
            theta_q: category_target(id, 10),
            label: None,
            trained_error: 0.0,
            status: CellStatus::Pending,
        }
    }

    #[test]
    fn scale_sample_examples() {
        let d = [0.3, 0.7, 0.2];
        assert_eq!(scale_sample(&d, &d).unwrap(), d.to_vec());
        assert_eq!(scale_sample(&[2.0, 4.0], &[1.0, 3.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(scale_sample(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), vec![2.0, 4.0]);
        // zero sample element and zero pattern element pass through
        assert_eq!(scale_sample(&[0.0, 2.0, 5.0], &[1.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0, 5.0]);
        assert!(matches!(scale_sample(&[0.0, 1.0], &[1.0, 0.0]), Err(Error::Degenerate(_))));
        assert!(scale_sample(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn responds_examples() {
        let c = cell(0, vec![0.2, 0.5, 0.9]);
        assert!(responds(&c, &[0.4, 1.0, 1.8], 0.3).unwrap());
        let c2 = cell(0, vec![1.0, 3.0]);
        assert_abs_diff_eq!(scaled_distance(&[2.0, 4.0], &[1.0, 3.0]).unwrap(), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert!(!responds(&c2, &[2.0, 4.0], 0.3).unwrap());
        assert!(!responds(&c2, &[2.0, 4.0], 0.0).unwrap());
        assert!(!responds(&c2, &[0.0, 0.0], 0.3).unwrap());
    }

    #[test]
    fn medoid_examples() {
        let one = ab(vec![0.3]);
        assert_eq!(crowd_medoid(std::slice::from_ref(&one)).unwrap(), one);
        let same = vec![ab(vec![0.1, 0.2]); 3];
        assert_eq!(crowd_medoid(&same).unwrap().pattern, vec![0.1, 0.2]);
        let line = vec![ab(vec![0.0]), ab(vec![1.0]), ab(vec![5.0])];
        assert_eq!(crowd_medoid(&line).unwrap().pattern, vec![1.0]);
        assert!(crowd_medoid(&[]).is_err());
    }

    #[test]
    fn clustering_identical_and_distant() {
        let cfg = CsaimConfig::default();
        let store = MemoryStore::from_config(&cfg);
        let same = vec![ab(vec![0.5, -0.5]); 6];
        assert_eq!(cluster_antibodies(&same, &store, &cfg).len(), 1);

        let distant: Vec<Antibody> = (0..5).map(|i| ab(vec![i as f64 * 0.5 - 1.0, 0.0])).collect();
        assert_eq!(cluster_antibodies(&distant, &store, &cfg).len(), 5);
        let small = MemoryStore::new(10, 3);
        let capped = cluster_antibodies(&distant, &small, &cfg);
        assert_eq!(capped.len(), 3);
        assert_eq!(capped.cells.iter().map(|c| c.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_abs_diff_eq!(capped.cells[1].theta_q, 2.0 / 11.0);
    }

    #[test]
    fn clustering_keeps_existing_cell_labels() {
        let cfg = CsaimConfig::default();
        let mut store = MemoryStore::from_config(&cfg);
        let mut c = cell(0, vec![0.9, 0.9]);
        c.label = Some(2);
        store.cells.push(c);
        let pop = vec![ab(vec![0.85, 0.9]), ab(vec![-0.9, -0.9])];
        let next = cluster_antibodies(&pop, &store, &cfg);
        assert_eq!(next.len(), 2);
        assert_eq!(next.cells[0].label, Some(2));
        assert_eq!(next.cells[1].label, None);
    }

    #[test]
    fn perceptron_single_update_hand_example() {
        let mut c = cell(0, vec![0.0, 0.0]);
        c.center.weights = vec![0.5, 0.5];
        c.theta_q = 2.0;
        let x = vec![vec![1.0, 1.0]];
        assert_eq!(perceptron_error(&c.center.weights, &x, 2.0), 0.5);
        let out = train_perceptron(&c, &x, 0.1, 1, 0.001).unwrap();
        assert_abs_diff_eq!(out.center.weights[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(out.center.weights[1], 0.6, epsilon = 1e-15);
        assert_eq!(out.status, CellStatus::Expired);
    }

    #[test]
    fn perceptron_zero_input_and_bad_eta() {
        let mut c = cell(0, vec![0.0; 3]);
        c.center.weights = vec![0.2, -0.4, 0.1];
        let out = train_perceptron(&c, &[vec![0.0; 3]], 0.5, 50, 0.001).unwrap();
        assert_eq!(out.center.weights, c.center.weights);
        assert!(train_perceptron(&c, &[vec![1.0; 3]], 0.05, 50, 0.001).is_err());
        assert!(train_perceptron(&c, &[vec![1.0; 3]], 1.5, 50, 0.001).is_err());
        assert!(train_perceptron(&c, &[], 0.5, 50, 0.001).is_err());
    }

    #[test]
    fn perceptron_converges_on_single_sample() {
        let mut c = cell(0, vec![0.0; 4]);
        c.center.weights = vec![0.0; 4];
        c.theta_q = 1.0;
        let x = vec![vec![0.5, 0.5, 0.5, 0.5]];
        let out = train_perceptron(&c, &x, 0.1, 50, 0.001).unwrap();
        assert_eq!(out.status, CellStatus::Converged);
        assert!(out.trained_error < 0.001);
    }

    #[test]
    fn classify_by_memory_examples() {
        let mut store = MemoryStore::new(10, 50);
        store.cells.push(cell(0, vec![0.5, 0.5, 0.5, 0.5]));
        store.cells.push(cell(1, vec![0.5, 0.5, 0.5, 0.9]));
        assert_eq!(classify_by_memory(&store, &[0.5, 0.5, 0.5, 0.5], 0.3).unwrap(), Some(0));
        assert_eq!(classify_by_memory(&store, &[0.5, 0.5, 0.5, 0.9], 0.3).unwrap(), Some(1));
        assert_eq!(classify_by_memory(&store, &[0.1, 0.9, 0.1, 0.9], 0.3).unwrap(), None);
        // Scaled distances 0.1 to cell 0 and 0.2 to cell 1 (k = 4, offsets on the last element).
        let mut s2 = MemoryStore::new(10, 50);
        s2.cells.push(cell(0, vec![1.0, 1.0, 1.0, 1.2]));
        s2.cells.push(cell(1, vec![1.0, 1.0, 1.0, 1.8]));
        let d = [1.0, 1.0, 1.0, 1.4];
        assert_abs_diff_eq!(scaled_distance(&d, s2.cells[0].pattern()).unwrap(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled_distance(&d, s2.cells[1].pattern()).unwrap(), 0.2, epsilon = 1e-12);
        assert_eq!(classify_by_memory(&s2, &d, 0.3).unwrap(), Some(0));
    }

    #[test]
    fn store_text_round_trip() {
        let mut store = MemoryStore::new(10, 50);
        let mut c = cell(0, vec![0.25, -1.0 / 3.0]);
        c.label = Some(1);
        c.status = CellStatus::Converged;
        store.cells.push(c);
        store.cells.push(cell(1, vec![0.5, 0.5]));
        assert_eq!(MemoryStore::from_text(&store.to_text()).unwrap(), store);
        assert!(MemoryStore::from_text("MEMSTORE v1 IM=1 cap=1 count=1\n0 - 0.5\n").is_err());
    }
}
