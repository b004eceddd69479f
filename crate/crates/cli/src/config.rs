//! Line-based `key = value` experiment configuration.
//!
//! Blank lines and text after `#` are ignored. Lists are comma separated; integer ranges may be
//! written `a..b` (inclusive). `horizons` also accepts `geometric lo hi count`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use stokeslab::Rect;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("key `{0}` is required for this command")]
    Missing(String),
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

const KEYS: &[&str] = &[
    "n",
    "m",
    "omega",
    "windows",
    "lambdas",
    "window",
    "horizons",
    "epsilon",
    "ratio",
    "extra_intervals",
    "target",
    "kappa",
    "penalty",
    "seed",
    "lemma_draws",
    "lemma_s",
    "out",
];

/// Which frequencies a spectral-inequality sweep visits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cutoffs {
    /// Window sizes `k`; the cutoff sits halfway between `mu_k` and `mu_{k+1}`.
    Windows(Vec<usize>),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub omega: Rect,
    pub cutoffs: Option<Cutoffs>,
    /// Control / observation window size for `obscost`, `lr` and `hum`.
    pub window: Option<usize>,
    pub horizons: Option<Vec<f64>>,
    pub epsilon: f64,
    pub ratio: f64,
    pub extra_intervals: usize,
    pub target: f64,
    pub kappa: f64,
    pub penalty: f64,
    pub seed: u64,
    pub lemma_draws: usize,
    pub lemma_s: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        let mut order = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: line.to_string(),
                });
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::UnknownKey(k));
            }
            if raw.insert(k.clone(), v).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: k });
            }
            order.push(k);
        }
        let get = |k: &str| raw.get(k).map(String::as_str);

        let n: usize = required(get("n"), "n").and_then(|v| number(v, "n"))?;
        if n < 2 || n % 2 == 1 {
            return Err(invalid("n", format!("mesh size must be even and at least 2, got {n}")));
        }
        let m: usize = required(get("m"), "m").and_then(|v| number(v, "m"))?;
        if m == 0 || m > n * n {
            return Err(invalid("m", format!("basis size must lie in 1..={}, got {m}", n * n)));
        }
        let omega = match get("omega") {
            Some(v) => {
                let c: Vec<f64> = list(v, "omega")?;
                if c.len() != 4 {
                    return Err(invalid("omega", "expected `x0, x1, y0, y1`"));
                }
                Rect::new(c[0], c[1], c[2], c[3]).map_err(|e| invalid("omega", e.to_string()))?
            }
            None => Rect::new(0.0, 0.3, 0.0, 0.3).expect("default omega"),
        };
        let cutoffs = match (get("windows"), get("lambdas")) {
            (Some(_), Some(_)) => return Err(invalid("lambdas", "give either `windows` or `lambdas`, not both")),
            (Some(v), None) => {
                let ks = usize_list(v, "windows")?;
                if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= m) {
                    return Err(invalid("windows", format!("window size {k} must lie in 1..{m}")));
                }
                Some(Cutoffs::Windows(ks))
            }
            (None, Some(v)) => {
                let ls: Vec<f64> = list(v, "lambdas")?;
                if let Some(l) = ls.iter().find(|l| !(**l > 0.0)) {
                    return Err(invalid("lambdas", format!("cutoffs must be positive, got {l}")));
                }
                Some(Cutoffs::Values(ls))
            }
            (None, None) => None,
        };
        let window = match get("window") {
            Some(v) => {
                let k: usize = number(v, "window")?;
                // the last mode has no successor to place a midpoint against
                let top = if m == 1 { 1 } else { m - 1 };
                if k == 0 || k > top {
                    return Err(invalid("window", format!("window size must lie in 1..={top}, got {k}")));
                }
                Some(k)
            }
            None => None,
        };
        let horizons = get("horizons").map(horizon_list).transpose()?;
        let epsilon = get("epsilon").map_or(Ok(0.3), |v| number(v, "epsilon"))?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
        }
        let ratio = get("ratio").map_or(Ok(0.5), |v| number(v, "ratio"))?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(invalid("ratio", format!("must lie in (0, 1), got {ratio}")));
        }
        let extra_intervals = get("extra_intervals").map_or(Ok(0), |v| number(v, "extra_intervals"))?;
        let target = get("target").map_or(Ok(1e-6), |v| number(v, "target"))?;
        if !(target > 0.0) {
            return Err(invalid("target", format!("must be positive, got {target}")));
        }
        let kappa = get("kappa").map_or(Ok(3.0), |v| number(v, "kappa"))?;
        if !(kappa > 0.0) {
            return Err(invalid("kappa", format!("must be positive, got {kappa}")));
        }
        let penalty = get("penalty").map_or(Ok(1e-10), |v| number(v, "penalty"))?;
        if !(penalty > 0.0) {
            return Err(invalid("penalty", format!("must be positive, got {penalty}")));
        }
        let seed = get("seed").map_or(Ok(0), |v| number(v, "seed"))?;
        let lemma_draws = get("lemma_draws").map_or(Ok(20), |v| number(v, "lemma_draws"))?;
        let lemma_s = get("lemma_s").map_or(Ok(vec![0.1, 0.3, 0.5, 0.7, 0.9]), |v| list(v, "lemma_s"))?;
        if let Some(s) = lemma_s.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
            return Err(invalid("lemma_s", format!("samples must lie in (0, 1), got {s}")));
        }
        Ok(Self {
            n,
            m,
            omega,
            cutoffs,
            window,
            horizons,
            epsilon,
            ratio,
            extra_intervals,
            target,
            kappa,
            penalty,
            seed,
            lemma_draws,
            lemma_s,
            out: get("out").map(PathBuf::from),
        })
    }

    pub fn require_window(&self) -> Result<usize, ConfigError> {
        self.window.ok_or_else(|| ConfigError::Missing("window".into()))
    }

    pub fn require_horizons(&self) -> Result<&[f64], ConfigError> {
        self.horizons
            .as_deref()
            .ok_or_else(|| ConfigError::Missing("horizons".into()))
    }

    pub fn require_cutoffs(&self) -> Result<&Cutoffs, ConfigError> {
        self.cutoffs
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("windows".into()))
    }
}

fn required<'a>(v: Option<&'a str>, key: &str) -> Result<&'a str, ConfigError> {
    v.ok_or_else(|| ConfigError::Missing(key.into()))
}

fn number<T: std::str::FromStr>(v: &str, key: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| invalid(key, format!("cannot parse {v:?}")))
}

fn list<T: std::str::FromStr>(v: &str, key: &str) -> Result<Vec<T>, ConfigError> {
    let out: Vec<T> = v
        .split(',')
        .map(|x| number(x.trim(), key))
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(out)
}

fn usize_list(v: &str, key: &str) -> Result<Vec<usize>, ConfigError> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (number(a.trim(), key)?, number(b.trim(), key)?);
                if a > b {
                    return Err(invalid(key, format!("empty range {item}")));
                }
                out.extend(a..=b);
            }
            None => out.push(number(item, key)?),
        }
    }
    Ok(out)
}

fn horizon_list(v: &str) -> Result<Vec<f64>, ConfigError> {
    const KEY: &str = "horizons";
    let ts = match v.strip_prefix("geometric") {
        Some(rest) => {
            let p: Vec<&str> = rest.split_whitespace().collect();
            if p.len() != 3 {
                return Err(invalid(KEY, "expected `geometric lo hi count`"));
            }
            let (lo, hi): (f64, f64) = (number(p[0], KEY)?, number(p[1], KEY)?);
            let count: usize = number(p[2], KEY)?;
            if !(lo > 0.0 && hi > lo) || count < 2 {
                return Err(invalid(KEY, "need 0 < lo < hi and count >= 2"));
            }
            (0..count)
                .map(|i| hi * (lo / hi).powf(i as f64 / (count - 1) as f64))
                .collect()
        }
        None => list(v, KEY)?,
    };
    if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(invalid(KEY, format!("horizons must be positive, got {t}")));
    }
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: ConfigError) -> String {
        match e {
            ConfigError::Invalid { key, .. } | ConfigError::Missing(key) | ConfigError::UnknownKey(key) => key,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parses_comments_lists_and_ranges() {
        let c = ExperimentConfig::parse(
            "# standard\nn = 16   # mesh\nm = 20\nomega = 0, 0.5, 0, 0.5\nwindows = 1..3, 7\nhorizons = geometric 0.1 0.4 3\nseed = 9\n",
        )
        .unwrap();
        assert_eq!((c.n, c.m, c.seed), (16, 20, 9));
        assert_eq!(c.cutoffs, Some(Cutoffs::Windows(vec![1, 2, 3, 7])));
        let h = c.horizons.unwrap();
        assert!((h[0] - 0.4).abs() < 1e-15 && (h[1] - 0.2).abs() < 1e-15 && (h[2] - 0.1).abs() < 1e-15);
        assert_eq!((c.epsilon, c.ratio, c.target), (0.3, 0.5, 1e-6));
    }

    #[test]
    fn names_the_failing_key() {
        let bad = [
            ("n = 15\nm = 2", "n"),
            ("n = 4\nm = 17", "m"),
            ("n = 4", "m"),
            ("n = 4\nm = 4\nomega = 0, 2, 0, 1", "omega"),
            ("n = 4\nm = 4\nwindows = 4", "windows"),
            ("n = 4\nm = 4\nepsilon = 1", "epsilon"),
            ("n = 4\nm = 4\nhorizons = 0.1, -1", "horizons"),
            ("n = 4\nm = 4\ncolour = red", "colour"),
            ("n = 4\nm = 4\nseed = -1", "seed"),
        ];
        for (text, key) in bad {
            assert_eq!(key_of(ExperimentConfig::parse(text).unwrap_err()), key, "{text}");
        }
    }

    #[test]
    fn rejects_syntax_and_duplicates() {
        assert!(matches!(ExperimentConfig::parse("n 4"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(
            ExperimentConfig::parse("n = 4\nn = 6"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
    }
}
