//! Image loading, labeled datasets, standardization, synthetic stand-in data
//! and train/test splitting.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::{check_len, Error, Result};
use crate::rng::{self, stream};
use crate::textio;

/// One flattened feature vector (row-major pixels for images).
pub type SampleVector = Vec<f64>;

/// Per-feature mean and standard deviation computed on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn from_samples(samples: &[SampleVector], k: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Argument("cannot compute statistics of an empty dataset".into()));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; k];
        for s in samples {
            check_len("feature statistics", k, s.len())?;
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; k];
        for s in samples {
            for ((v, x), m) in var.iter_mut().zip(s).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(FeatureStats { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Maps `x` to `(x - mean) / std`; zero-variance features map to 0.
    pub fn apply(&self, sample: &[f64]) -> Result<SampleVector> {
        check_len("standardization", self.len(), sample.len())?;
        Ok(sample
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect())
    }

    pub fn to_text(&self) -> String {
        format!(
            "STATS v1 k={}\n{}\n{}\n",
            self.len(),
            textio::join_reals(self.mean.iter().copied()),
            textio::join_reals(self.std.iter().copied())
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "stats file";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = textio::next_line(WHAT, &mut lines)?;
        let pairs = textio::parse_header(WHAT, header, &["STATS", "v1"])?;
        let k = textio::header_usize(WHAT, &pairs, "k")?;
        let (n, line) = textio::next_line(WHAT, &mut lines)?;
        let mean = textio::parse_reals(WHAT, n, line, k)?;
        let (n, line) = textio::next_line(WHAT, &mut lines)?;
        let std = textio::parse_reals(WHAT, n, line, k)?;
        Ok(FeatureStats { mean, std })
    }
}

/// Feature vectors with integer class labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<SampleVector>,
    labels: Vec<usize>,
    k: usize,
    classes: usize,
    stats: Option<FeatureStats>,
}

impl LabeledDataset {
    pub fn new(samples: Vec<SampleVector>, labels: Vec<usize>, k: usize, classes: usize) -> Result<Self> {
        check_len("dataset labels", samples.len(), labels.len())?;
        for s in &samples {
            check_len("dataset sample", k, s.len())?;
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::Argument("dataset sample has a non-finite entry".into()));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Argument(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(LabeledDataset {
            samples,
            labels,
            k,
            classes,
            stats: None,
        })
    }

    pub fn samples(&self) -> &[SampleVector] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Statistics used to standardize this dataset, if it was standardized.
    pub fn stats(&self) -> Option<&FeatureStats> {
        self.stats.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SampleVector, usize)> {
        self.samples.iter().zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Applies previously computed statistics (e.g. training-set stats to a
    /// test set).
    pub fn apply_stats(&self, stats: &FeatureStats) -> Result<LabeledDataset> {
        let samples = self
            .samples
            .iter()
            .map(|s| stats.apply(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset {
            samples,
            labels: self.labels.clone(),
            k: self.k,
            classes: self.classes,
            stats: Some(stats.clone()),
        })
    }

    /// Serializes to the `DATASET v1` cache format.
    pub fn to_cache_string(&self) -> String {
        let mut out = format!(
            "DATASET v1 k={} L={} n={}\n",
            self.k,
            self.classes,
            self.samples.len()
        );
        for (s, l) in self.iter() {
            out.push_str(&l.to_string());
            out.push(' ');
            out.push_str(&textio::join_reals(s.iter().copied()));
            out.push('\n');
        }
        out
    }

    pub fn from_cache_str(text: &str) -> Result<Self> {
        const WHAT: &str = "dataset cache";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = textio::next_line(WHAT, &mut lines)?;
        let pairs = textio::parse_header(WHAT, header, &["DATASET", "v1"])?;
        let k = textio::header_usize(WHAT, &pairs, "k")?;
        let classes = textio::header_usize(WHAT, &pairs, "L")?;
        let n = textio::header_usize(WHAT, &pairs, "n")?;
        let mut samples = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (no, line) = textio::next_line(WHAT, &mut lines)?;
            let (label, rest) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(WHAT, no, "expected label followed by values"))?;
            let label = label
                .parse::<usize>()
                .map_err(|e| Error::parse(WHAT, no, format!("bad label {label:?}: {e}")))?;
            samples.push(textio::parse_reals(WHAT, no, rest, k)?);
            labels.push(label);
        }
        LabeledDataset::new(samples, labels, k, classes)
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_cache_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_cache_str(&text)
    }

    fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
            classes: self.classes,
            stats: self.stats.clone(),
        }
    }
}

/// Loads an image as a grayscale `side × side` vector with values in `[0, 1]`.
///
/// Color is reduced with luma `0.299 R + 0.587 G + 0.114 B`; the image is
/// resized with bilinear interpolation (pixel-center aligned) and flattened
/// row-major.
pub fn load_image(path: &Path, side: usize) -> Result<SampleVector> {
    if side == 0 {
        return Err(Error::Argument("image side must be at least 1".into()));
    }
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let gray: Vec<f64> = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            let luma = 299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b);
            luma as f64 / 1000.0 / 255.0
        })
        .collect();
    Ok(resize_bilinear(&gray, w, h, side, side))
}

/// Bilinear resampling of a row-major grayscale buffer.
pub fn resize_bilinear(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    if w == out_w && h == out_h {
        return src.to_vec();
    }
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let x = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(n_in - 1);
        (x0, x1, x - x0 as f64)
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let (y0, y1, fy) = coord(oy, h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = coord(ox, w, out_w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    out
}

/// Standardizes every feature with the dataset's own mean and standard
/// deviation. The statistics are kept on the result for reuse on test data.
pub fn standardize(dataset: &LabeledDataset) -> Result<LabeledDataset> {
    if dataset.is_empty() {
        return Err(Error::Argument("cannot standardize an empty dataset".into()));
    }
    let stats = FeatureStats::from_samples(dataset.samples(), dataset.k())?;
    dataset.apply_stats(&stats)
}

/// Rows of a `path,label` manifest with label ids assigned in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<(PathBuf, usize)>,
    pub label_names: Vec<String>,
}

impl DatasetManifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        const WHAT: &str = "manifest";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = textio::next_line(WHAT, &mut lines)?;
        if header.trim() != "path,label" {
            return Err(Error::parse(WHAT, 1, format!("expected header \"path,label\", found {header:?}")));
        }
        let mut rows = Vec::new();
        let mut label_names: Vec<String> = Vec::new();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [path, label] = fields[..] else {
                return Err(Error::parse(WHAT, no, format!("expected 2 fields, found {}", fields.len())));
            };
            let (path, label) = (path.trim(), label.trim());
            if path.is_empty() || label.is_empty() {
                return Err(Error::parse(WHAT, no, "empty path or label"));
            }
            let id = match label_names.iter().position(|n| n == label) {
                Some(id) => id,
                None => {
                    label_names.push(label.to_string());
                    label_names.len() - 1
                }
            };
            rows.push((base.join(path), id));
        }
        if rows.is_empty() {
            return Err(Error::Argument("manifest has no rows".into()));
        }
        Ok(DatasetManifest { rows, label_names })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        Self::parse(&text, base)
    }

    pub fn load(&self, side: usize) -> Result<LabeledDataset> {
        let mut samples = Vec::with_capacity(self.rows.len());
        for (row, (path, _)) in self.rows.iter().enumerate() {
            let sample = load_image(path, side).map_err(|e| {
                Error::parse("manifest", row + 2, format!("cannot load {}: {e}", path.display()))
            })?;
            samples.push(sample);
        }
        let labels = self.rows.iter().map(|(_, l)| *l).collect();
        LabeledDataset::new(samples, labels, side * side, self.label_names.len())
    }
}

/// Reads a `path,label` CSV manifest and loads every image at `side × side`.
pub fn load_manifest(path: &Path, side: usize) -> Result<LabeledDataset> {
    DatasetManifest::read(path)?.load(side)
}

/// Background and block intensities of the synthetic class templates.
pub const SYNTH_BACKGROUND: f64 = 0.1;
pub const SYNTH_BLOCK: f64 = 0.9;

/// Feature range `[start, end)` of class `class`'s high-intensity block.
pub fn synth_block(class: usize, classes: usize, k: usize) -> std::ops::Range<usize> {
    class * k / classes..(class + 1) * k / classes
}

/// Generates `classes × per_class` noisy copies of orthogonal block templates.
///
/// Class `c` is bright on its own `k / classes` slice of the features and dark
/// elsewhere; Gaussian noise of standard deviation `noise` is added and the
/// result clipped to `[0, 1]`. Samples are ordered class by class.
pub fn synth_dataset(classes: usize, per_class: usize, k: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    if classes == 0 || per_class == 0 || k == 0 {
        return Err(Error::Argument("classes, per_class and k must all be at least 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Argument(format!("noise must be a finite value >= 0, got {noise}")));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rng = rng::seeded(seed, stream::DATA);
    let mut samples = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let block = synth_block(class, classes, k);
        let template: Vec<f64> = (0..k)
            .map(|i| if block.contains(&i) { SYNTH_BLOCK } else { SYNTH_BACKGROUND })
            .collect();
        for _ in 0..per_class {
            let sample = if noise == 0.0 {
                template.clone()
            } else {
                template
                    .iter()
                    .map(|t| (t + normal.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect()
            };
            samples.push(sample);
            labels.push(class);
        }
    }
    LabeledDataset::new(samples, labels, k, classes)
}

/// Per-class shuffled split into disjoint train and test sets.
pub fn split(
    dataset: &LabeledDataset,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut rng = rng::seeded(seed, stream::SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..dataset.classes() {
        let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == class).collect();
        if idx.len() < train_per_class + test_per_class {
            return Err(Error::Argument(format!(
                "class {class} has {} samples, need {}",
                idx.len(),
                train_per_class + test_per_class
            )));
        }
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..train_per_class]);
        test.extend_from_slice(&idx[train_per_class..train_per_class + test_per_class]);
    }
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ds(samples: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> LabeledDataset {
        let k = samples[0].len();
        LabeledDataset::new(samples, labels, k, classes).unwrap()
    }

    fn write_png(dir: &Path, name: &str, w: u32, h: u32, px: &[u8]) -> PathBuf {
        let path = dir.join(name);
        image::GrayImage::from_raw(w, h, px.to_vec()).unwrap().save(&path).unwrap();
        path
    }

    #[test]
    fn load_image_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_png(dir.path(), "a.png", 2, 2, &[0, 255, 255, 0]);
        assert_eq!(load_image(&path, 2).unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn load_image_black_and_resized() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_png(dir.path(), "b.png", 48, 48, &[0; 48 * 48]);
        let v = load_image(&path, 48).unwrap();
        assert_eq!(v.len(), 2304);
        assert!(v.iter().all(|&x| x == 0.0));
        let v = load_image(&path, 7).unwrap();
        assert_eq!(v.len(), 49);
    }

    #[test]
    fn load_image_color_luma() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        image::RgbImage::from_raw(1, 1, vec![255, 0, 0]).unwrap().save(&path).unwrap();
        assert_abs_diff_eq!(load_image(&path, 1).unwrap()[0], 0.299 * 255.0 / 255.0, epsilon = 1e-12);
    }

    #[test]
    fn load_image_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.png");
        let err = load_image(&missing, 4).unwrap_err();
        assert!(err.to_string().contains("missing.png"), "{err}");
        let junk = dir.path().join("junk.png");
        fs::write(&junk, b"not an image").unwrap();
        assert!(load_image(&junk, 4).is_err());
        let ok = write_png(dir.path(), "ok.png", 1, 1, &[3]);
        assert!(matches!(load_image(&ok, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn bilinear_upscale_interpolates() {
        let out = resize_bilinear(&[0.0, 1.0], 2, 1, 4, 1);
        assert_eq!(out, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn standardize_hand_example() {
        let d = ds(vec![vec![1.0, 1.0], vec![3.0, 3.0]], vec![0, 0], 1);
        let s = standardize(&d).unwrap();
        assert_eq!(s.samples(), &[vec![-1.0, -1.0], vec![1.0, 1.0]]);
        let stats = s.stats().unwrap();
        assert_eq!(stats.mean, vec![2.0, 2.0]);
        assert_eq!(stats.std, vec![1.0, 1.0]);
    }

    #[test]
    fn standardize_constant_column_and_idempotence() {
        let d = ds(vec![vec![5.0, 0.0], vec![5.0, 2.0], vec![5.0, 7.0]], vec![0, 0, 0], 1);
        let s = standardize(&d).unwrap();
        assert!(s.samples().iter().all(|x| x[0] == 0.0));
        let again = standardize(&s).unwrap();
        for (a, b) in s.samples().iter().zip(again.samples()) {
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
        // Reapplying the stored stats reproduces the standardized set exactly.
        let replay = d.apply_stats(s.stats().unwrap()).unwrap();
        assert_eq!(replay.samples(), s.samples());
    }

    #[test]
    fn standardize_empty_is_error() {
        let d = LabeledDataset::new(vec![], vec![], 3, 1).unwrap();
        assert!(matches!(standardize(&d), Err(Error::Argument(_))));
    }

    #[test]
    fn manifest_maps_labels_in_first_seen_order() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.png", "b.png", "c.png"] {
            write_png(dir.path(), name, 2, 2, &[0, 10, 20, 30]);
        }
        let text = "path,label\na.png,torii\nb.png,dome\nc.png,torii\na.png,yamato\n";
        let manifest_path = dir.path().join("m.csv");
        fs::write(&manifest_path, text).unwrap();
        let manifest = DatasetManifest::read(&manifest_path).unwrap();
        assert_eq!(manifest.label_names, vec!["torii", "dome", "yamato"]);
        let data = load_manifest(&manifest_path, 2).unwrap();
        assert_eq!(data.labels(), &[0, 1, 0, 2]);
        assert_eq!(data.classes(), 3);
        // duplicate paths are kept as duplicated samples
        assert_eq!(data.samples()[0], data.samples()[3]);
    }

    #[test]
    fn manifest_errors_carry_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let empty = DatasetManifest::parse("path,label\n", dir.path());
        assert!(matches!(empty, Err(Error::Argument(_))));
        let bad = DatasetManifest::parse("path,label\na.png,x\nb.png\n", dir.path()).unwrap_err();
        assert!(bad.to_string().contains("line 3"), "{bad}");
        let m = DatasetManifest::parse("path,label\nnope.png,x\n", dir.path()).unwrap();
        let err = m.load(2).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(DatasetManifest::read(&dir.path().join("absent.csv")).is_err());
    }

    #[test]
    fn synth_zero_noise_matches_templates() {
        let d = synth_dataset(3, 4, 12, 0.0, 1).unwrap();
        assert_eq!(d.len(), 12);
        for (s, l) in d.iter() {
            for (i, &x) in s.iter().enumerate() {
                let expected = if synth_block(l, 3, 12).contains(&i) { SYNTH_BLOCK } else { SYNTH_BACKGROUND };
                assert_eq!(x, expected);
            }
        }
    }

    #[test]
    fn synth_counts_and_determinism() {
        let a = synth_dataset(3, 10, 2304, 0.05, 7).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(a.class_counts(), vec![10, 10, 10]);
        assert!(a.samples().iter().flatten().all(|x| (0.0..=1.0).contains(x)));
        let b = synth_dataset(3, 10, 2304, 0.05, 7).unwrap();
        assert_eq!(a.to_cache_string(), b.to_cache_string());
        assert!(synth_dataset(0, 1, 1, 0.0, 0).is_err());
        assert!(synth_dataset(1, 1, 1, -1.0, 0).is_err());
    }

    #[test]
    fn split_counts_disjoint_and_deterministic() {
        let d = synth_dataset(3, 10, 9, 0.3, 3).unwrap();
        let (train, test) = split(&d, 8, 2, 11).unwrap();
        assert_eq!(train.class_counts(), vec![8, 8, 8]);
        assert_eq!(test.class_counts(), vec![2, 2, 2]);
        for s in test.samples() {
            assert!(!train.samples().contains(s));
            assert!(d.samples().contains(s));
        }
        let (train2, test2) = split(&d, 8, 2, 11).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let (all, none) = split(&d, 10, 0, 11).unwrap();
        assert_eq!(all.len(), 30);
        assert!(none.is_empty());
        let err = split(&d, 9, 2, 11).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn cache_round_trip() {
        let d = synth_dataset(2, 3, 5, 0.2, 9).unwrap();
        let back = LabeledDataset::from_cache_str(&d.to_cache_string()).unwrap();
        assert_eq!(back, d);
        assert!(LabeledDataset::from_cache_str("DATASET v1 k=2 L=1 n=1\n0 1.0\n").is_err());
    }
}
