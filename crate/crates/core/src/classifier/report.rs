use std::fmt::Write as _;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

/// Anything that maps a raw sample to a class label. `None` means the model
/// declined to answer, which counts as a miss.
pub trait Classifier {
    fn classify(&self, raw: &[f64]) -> Result<Option<usize>>;

    /// Whether `classify` can return `None`.
    fn can_abstain(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }

    /// `83.3% (20/24)`.
    pub fn formatted(&self) -> String {
        match self.percent() {
            Some(p) => format!("{p:.1}% ({}/{})", self.correct, self.total),
            None => "n/a (0/0)".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub overall: Tally,
    pub per_class: Vec<Tally>,
    /// Samples that no memory cell recognized (baseline models only).
    pub no_response: Option<usize>,
}

impl EvalReport {
    pub fn to_text(&self, title: &str) -> String {
        let mut out = format!("{title}\n");
        writeln!(out, "  overall   {}", self.overall.formatted()).unwrap();
        for (c, t) in self.per_class.iter().enumerate() {
            writeln!(out, "  class {c:<3} {}", t.formatted()).unwrap();
        }
        if let Some(n) = self.no_response {
            writeln!(out, "  no response {n}").unwrap();
        }
        out
    }

    /// Rows `split,class,correct,total,percent`, with `all` for the overall row.
    pub fn csv_rows(&self, split: &str) -> String {
        let mut out = String::new();
        let mut row = |class: String, t: &Tally| {
            let pct = t.percent().map_or_else(String::new, |p| format!("{p:.1}"));
            writeln!(out, "{split},{class},{},{},{pct}", t.correct, t.total).unwrap();
        };
        row("all".into(), &self.overall);
        for (c, t) in self.per_class.iter().enumerate() {
            row(c.to_string(), t);
        }
        out
    }
}

pub const CSV_HEADER: &str = "split,class,correct,total,percent";

pub fn evaluate<C: Classifier + ?Sized>(model: &C, data: &LabeledDataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Argument("cannot evaluate on an empty dataset".into()));
    }
    let mut overall = Tally::default();
    let mut per_class = vec![Tally::default(); data.classes()];
    let mut silent = 0;
    for (sample, label) in data.iter() {
        let guess = model.classify(sample)?;
        let hit = guess == Some(label);
        if guess.is_none() {
            silent += 1;
        }
        for t in [&mut overall, &mut per_class[label]] {
            t.total += 1;
            t.correct += usize::from(hit);
        }
    }
    Ok(EvalReport {
        overall,
        per_class,
        no_response: model.can_abstain().then_some(silent),
    })
}
