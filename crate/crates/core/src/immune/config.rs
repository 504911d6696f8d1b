use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lo, self.hi)
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let (lo, hi) = inner.split_once(',').ok_or("expected \"lo,hi\"")?;
        let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
        let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(format!("range [{lo}, {hi}] is not well ordered"));
        }
        Ok(Range { lo, hi })
    }
}

/// Share of clones mutated by hypermutation versus receptor editing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HmReRatio {
    pub hm: u32,
    pub re: u32,
}

impl HmReRatio {
    /// Whether the `index`-th clone uses hypermutation.
    pub fn uses_hm(&self, index: usize) -> bool {
        (index % (self.hm + self.re) as usize) < self.hm as usize
    }
}

impl fmt::Display for HmReRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.hm, self.re)
    }
}

impl FromStr for HmReRatio {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (hm, re) = s.trim().split_once(':').ok_or("expected \"hm:re\"")?;
        let hm: u32 = hm.trim().parse().map_err(|e| format!("{e}"))?;
        let re: u32 = re.trim().parse().map_err(|e| format!("{e}"))?;
        if hm + re == 0 {
            return Err("ratio must have a non-zero part".into());
        }
        Ok(HmReRatio { hm, re })
    }
}

/// Clonal selection and memory-cell hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CsaimConfig {
    /// Maximum number of generations.
    pub g_max: usize,
    /// Total clones produced per generation.
    pub m: usize,
    /// Population size.
    pub n: usize,
    /// Antibodies selected for cloning.
    pub q: usize,
    pub hm_re_ratio: HmReRatio,
    /// Hypermutation step range.
    pub r_w: Range,
    /// Threshold mutation range.
    pub r_theta: Range,
    /// Suppression radius (per-element, scaled by `sqrt(k)`).
    pub e_sim: f64,
    /// Generations without improvement before a receptor-editing-only generation.
    pub t: usize,
    /// Fresh random antibodies injected per generation.
    pub c: usize,
    /// Perceptron learning rate.
    pub eta: f64,
    /// Response threshold on normalized scaled distance.
    pub mu_theta: f64,
    /// Perceptron epoch budget.
    pub t_im: usize,
    /// Target error for training and early stopping.
    pub e_min: f64,
    /// Memory capacity.
    pub c_max_memory: usize,
    /// Initial number of memory categories.
    pub im: usize,
    pub seed: u64,
}

impl Default for CsaimConfig {
    fn default() -> Self {
        let n = 100;
        CsaimConfig {
            g_max: 100,
            m: 150,
            n,
            q: 50,
            hm_re_ratio: HmReRatio { hm: 1, re: 1 },
            r_w: Range::new(-1.0, 1.0),
            r_theta: Range::new(-1.0, 1.0),
            e_sim: 0.05,
            t: 10,
            c: 10,
            eta: 0.1,
            mu_theta: 0.3,
            t_im: 50,
            e_min: 0.001,
            c_max_memory: n / 2,
            im: 10,
            seed: 0,
        }
    }
}

const KEYS: [&str; 17] = [
    "G_max",
    "m",
    "n",
    "Q",
    "hm_re_ratio",
    "r_w",
    "r_theta",
    "E_sim",
    "t",
    "c",
    "eta",
    "mu_theta",
    "t_IM",
    "E_min",
    "c_max_memory",
    "IM",
    "seed",
];

impl CsaimConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("G_max", self.g_max),
            ("m", self.m),
            ("n", self.n),
            ("Q", self.q),
            ("t", self.t),
            ("t_IM", self.t_im),
            ("c_max_memory", self.c_max_memory),
            ("IM", self.im),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Argument(format!("{name} must be at least 1")));
        }
        if self.q > self.n {
            return Err(Error::Argument(format!("Q = {} exceeds n = {}", self.q, self.n)));
        }
        if self.c >= self.n {
            return Err(Error::Argument(format!("c = {} must be below n = {}", self.c, self.n)));
        }
        let reals = [("E_sim", self.e_sim), ("eta", self.eta), ("mu_theta", self.mu_theta), ("E_min", self.e_min)];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Argument(format!("{name} must be finite and >= 0, got {v}")));
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "G_max" => self.g_max.to_string(),
            "m" => self.m.to_string(),
            "n" => self.n.to_string(),
            "Q" => self.q.to_string(),
            "hm_re_ratio" => self.hm_re_ratio.to_string(),
            "r_w" => self.r_w.to_string(),
            "r_theta" => self.r_theta.to_string(),
            "E_sim" => self.e_sim.to_string(),
            "t" => self.t.to_string(),
            "c" => self.c.to_string(),
            "eta" => self.eta.to_string(),
            "mu_theta" => self.mu_theta.to_string(),
            "t_IM" => self.t_im.to_string(),
            "E_min" => self.e_min.to_string(),
            "c_max_memory" => self.c_max_memory.to_string(),
            "IM" => self.im.to_string(),
            "seed" => self.seed.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Canonical `key=value` text, one line per field in a fixed order.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k}={}\n", self.value_of(k))).collect()
    }

    /// Parses `key=value` lines; blank lines and `#` comments are ignored,
    /// missing keys keep their defaults and unknown keys are rejected. When
    /// `c_max_memory` is absent it follows `n / 2`.
    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "config";
        let mut cfg = CsaimConfig::default();
        let mut saw_capacity = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(WHAT, line_no, format!("expected key=value, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| Error::parse(WHAT, line_no, format!("bad value for {key}: {e}"));
            match key {
                "G_max" => cfg.g_max = num(value).map_err(bad)?,
                "m" => cfg.m = num(value).map_err(bad)?,
                "n" => cfg.n = num(value).map_err(bad)?,
                "Q" => cfg.q = num(value).map_err(bad)?,
                "hm_re_ratio" => cfg.hm_re_ratio = value.parse().map_err(bad)?,
                "r_w" => cfg.r_w = value.parse().map_err(bad)?,
                "r_theta" => cfg.r_theta = value.parse().map_err(bad)?,
                "E_sim" => cfg.e_sim = num(value).map_err(bad)?,
                "t" => cfg.t = num(value).map_err(bad)?,
                "c" => cfg.c = num(value).map_err(bad)?,
                "eta" => cfg.eta = num(value).map_err(bad)?,
                "mu_theta" => cfg.mu_theta = num(value).map_err(bad)?,
                "t_IM" => cfg.t_im = num(value).map_err(bad)?,
                "E_min" => cfg.e_min = num(value).map_err(bad)?,
                "c_max_memory" => {
                    cfg.c_max_memory = num(value).map_err(bad)?;
                    saw_capacity = true;
                }
                "IM" => cfg.im = num(value).map_err(bad)?,
                "seed" => cfg.seed = num(value).map_err(bad)?,
                other => return Err(Error::parse(WHAT, line_no, format!("unknown key {other:?}"))),
            }
        }
        if !saw_capacity {
            cfg.c_max_memory = cfg.n / 2;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

/// Hex SHA-256 of arbitrary canonical configuration text.
pub fn config_hash(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reported_parameters() {
        let c = CsaimConfig::default();
        assert_eq!((c.g_max, c.m, c.n, c.q), (100, 150, 100, 50));
        assert_eq!(c.hm_re_ratio, HmReRatio { hm: 1, re: 1 });
        assert_eq!(c.r_w, Range::new(-1.0, 1.0));
        assert_eq!(c.r_theta, Range::new(-1.0, 1.0));
        assert_eq!((c.e_sim, c.t, c.c, c.eta, c.mu_theta), (0.05, 10, 10, 0.1, 0.3));
        assert_eq!((c.t_im, c.e_min, c.c_max_memory, c.im), (50, 0.001, 50, 10));
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = CsaimConfig::default();
        c.n = 40;
        c.q = 10;
        c.r_w = Range::new(-0.5, 0.25);
        c.hm_re_ratio = HmReRatio { hm: 3, re: 1 };
        c.c_max_memory = 7;
        assert_eq!(CsaimConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn partial_file_and_capacity_default() {
        let c = CsaimConfig::from_text("# small run\nn = 20\nQ=5\n\nc=2\n").unwrap();
        assert_eq!((c.n, c.q, c.c_max_memory), (20, 5, 10));
        assert_eq!(c.m, 150);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let err = CsaimConfig::from_text("G_max=10\nbogus=1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(CsaimConfig::from_text("r_w=1,-1\n").is_err());
        assert!(CsaimConfig::from_text("hm_re_ratio=0:0\n").is_err());
        assert!(CsaimConfig::from_text("n\n").is_err());
        assert!(CsaimConfig::from_text("G_max=0\n").is_err());
        assert!(CsaimConfig::from_text("g_max=3\n").is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&CsaimConfig::default().to_text());
        let b = config_hash(&CsaimConfig::default().to_text());
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let mut other = CsaimConfig::default();
        other.seed = 1;
        assert_ne!(a, config_hash(&other.to_text()));
    }

    #[test]
    fn ratio_alternates() {
        let r = HmReRatio { hm: 1, re: 1 };
        assert_eq!((0..4).map(|i| r.uses_hm(i)).collect::<Vec<_>>(), [true, false, true, false]);
        let r = HmReRatio { hm: 2, re: 1 };
        assert_eq!((0..3).map(|i| r.uses_hm(i)).collect::<Vec<_>>(), [true, true, false]);
    }
}
