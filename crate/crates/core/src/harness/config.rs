//! Line-oriented run configuration.
//!
//! ```text
//! # comments start with '#'
//! name = quartic-demo
//! order = 2
//! eta = 0.3
//! alpha = 0.4 0.2 0 0.05
//! n_max = 8
//! cutoffs = 6 8 10 12
//! checks = decompose ground excited hvz pullthrough convergence
//! seed = 7
//!
//! [modes]
//! # energy  weight  tag
//! 1.0  1.0  discrete
//! 1.5  1.0  essential
//!
//! [couplings]
//! f1 = 0.3 0.2
//! f2 = 0.25 0.15
//! f3 = 0.25 0.15
//! f4 = 0.25 0.15
//!
//! [sweep]
//! eta = linspace 0.1 0.9 9
//! scale = 0.5 1.0
//! alpha.4 = 0.05 0.1
//! ```
//!
//! Complex coupling entries are written `a`, `bi` or `a+bi`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::{EigenOptions, DEFAULT_DENSE_THRESHOLD, DEFAULT_TOL};
use crate::fock::DEFAULT_CAPACITY;
use crate::onebody::{validate_hypotheses, CouplingFamily, Mode, ModeSet, ModeTag, ModelParams};
use crate::spectra::AnalysisConfig;

/// A parse or validation failure with its location.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(line: Option<usize>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Decompose,
    Ground,
    Excited,
    Hvz,
    Pullthrough,
    Convergence,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::Decompose,
        Check::Ground,
        Check::Excited,
        Check::Hvz,
        Check::Pullthrough,
        Check::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Decompose => "decompose",
            Check::Ground => "ground",
            Check::Excited => "excited",
            Check::Hvz => "hvz",
            Check::Pullthrough => "pullthrough",
            Check::Convergence => "convergence",
        }
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown check '{s}'"))
    }
}

/// A sweepable parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum AxisKind {
    Eta,
    /// Multiplies every coupling vector.
    Scale,
    /// `α_i`, 1-based.
    Alpha(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub label: String,
    pub kind: AxisKind,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub name: String,
    pub base: ModelParams,
    pub axes: Vec<Axis>,
    pub n_max: usize,
    pub cutoffs: Vec<usize>,
    pub checks: Vec<Check>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: u64,
    pub tol: f64,
    pub pullthrough_tol: f64,
    pub dense_threshold: usize,
    pub capacity: usize,
}

impl SweepConfig {
    pub fn has(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }

    pub fn grid_size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            tol: self.tol,
            dense_threshold: self.dense_threshold,
            seed: self.seed,
            ..EigenOptions::default()
        }
    }

    pub fn analysis(&self, n_max: usize) -> AnalysisConfig {
        AnalysisConfig {
            n_max,
            eigen: self.eigen_options(),
            capacity: self.capacity,
        }
    }
}

/// Read and validate a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SweepConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(None, path.display().to_string(), e.to_string()))?;
    parse_config(&text)
}

#[derive(Default)]
struct Raw {
    keys: BTreeMap<String, (usize, String)>,
    modes: Vec<(usize, String)>,
    couplings: BTreeMap<usize, (usize, String)>,
    sweep: Vec<(usize, String, String)>,
}

fn split_kv(line: &str, lineno: usize) -> Result<(String, String), ConfigError> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| ConfigError::new(Some(lineno), "syntax", format!("expected 'key = value', got '{line}'")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(ConfigError::new(Some(lineno), "syntax", "empty key"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn read_raw(text: &str) -> Result<Raw, ConfigError> {
    let mut raw = Raw::default();
    let mut section = String::new();
    for (idx, full) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = full.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::new(Some(lineno), "syntax", "unterminated section header"))?
                .trim();
            if !matches!(name, "modes" | "couplings" | "sweep") {
                return Err(ConfigError::new(Some(lineno), name, "unknown section"));
            }
            section = name.to_string();
            continue;
        }
        match section.as_str() {
            "" => {
                let (k, v) = split_kv(line, lineno)?;
                if let Some((prev, _)) = raw.keys.get(&k) {
                    return Err(ConfigError::new(Some(lineno), k, format!("duplicate key (first set on line {prev})")));
                }
                raw.keys.insert(k, (lineno, v));
            }
            "modes" => raw.modes.push((lineno, line.to_string())),
            "couplings" => {
                let (k, v) = split_kv(line, lineno)?;
                let i: usize = k
                    .strip_prefix('f')
                    .and_then(|s| s.parse().ok())
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| ConfigError::new(Some(lineno), format!("couplings.{k}"), "coupling rows are named f1, f2, ..."))?;
                if raw.couplings.insert(i, (lineno, v)).is_some() {
                    return Err(ConfigError::new(Some(lineno), format!("couplings.f{i}"), "duplicate coupling row"));
                }
            }
            _ => {
                let (k, v) = split_kv(line, lineno)?;
                if raw.sweep.iter().any(|(_, name, _)| *name == k) {
                    return Err(ConfigError::new(Some(lineno), format!("sweep.{k}"), "duplicate sweep axis"));
                }
                raw.sweep.push((lineno, k, v));
            }
        }
    }
    Ok(raw)
}

fn parse_num<T: FromStr>(s: &str, line: usize, field: &str) -> Result<T, ConfigError> {
    s.parse()
        .map_err(|_| ConfigError::new(Some(line), field, format!("cannot parse '{s}'")))
}

fn parse_list<T: FromStr>(s: &str, line: usize, field: &str) -> Result<Vec<T>, ConfigError> {
    s.split_whitespace().map(|t| parse_num(t, line, field)).collect()
}

/// Parse `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    // find the sign that separates the real part, skipping exponent signs
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&p| (bytes[p] == b'+' || bytes[p] == b'-') && !matches!(bytes[p - 1], b'e' | b'E'));
    let imag = |t: &str| match t {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        _ => t.parse::<f64>().ok(),
    };
    match split {
        Some(p) => Some(Complex64::new(body[..p].parse().ok()?, imag(&body[p..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

fn parse_values(s: &str, line: usize, field: &str) -> Result<Vec<f64>, ConfigError> {
    let toks: Vec<&str> = s.split_whitespace().collect();
    if toks.first() == Some(&"linspace") {
        if toks.len() != 4 {
            return Err(ConfigError::new(Some(line), field, "expected 'linspace <start> <stop> <count>'"));
        }
        let a: f64 = parse_num(toks[1], line, field)?;
        let b: f64 = parse_num(toks[2], line, field)?;
        let n: usize = parse_num(toks[3], line, field)?;
        if n == 0 {
            return Err(ConfigError::new(Some(line), field, "linspace count must be positive"));
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        let d = (n - 1) as f64;
        let mut v: Vec<f64> = (0..n).map(|i| (a * (d - i as f64) + b * i as f64) / d).collect();
        v[0] = a;
        v[n - 1] = b;
        return Ok(v);
    }
    let v: Vec<f64> = parse_list(s, line, field)?;
    if v.is_empty() {
        return Err(ConfigError::new(Some(line), field, "no values"));
    }
    Ok(v)
}

/// Parse and validate configuration text.
pub fn parse_config(text: &str) -> Result<SweepConfig, ConfigError> {
    let mut raw = read_raw(text)?;
    const KNOWN: [&str; 14] = [
        "name",
        "order",
        "eta",
        "alpha",
        "n_max",
        "cutoffs",
        "checks",
        "seed",
        "workers",
        "tol",
        "pullthrough_tol",
        "dense_threshold",
        "capacity",
        "output",
    ];
    if let Some((k, (l, _))) = raw.keys.iter().find(|(k, _)| !KNOWN.contains(&k.as_str())) {
        return Err(ConfigError::new(Some(*l), k.clone(), "unknown key"));
    }
    let mut take = |k: &str| raw.keys.remove(k);
    let required = |v: Option<(usize, String)>, k: &str| v.ok_or_else(|| ConfigError::new(None, k, "missing required key"));

    let name = take("name").map(|(_, v)| v).unwrap_or_else(|| "run".into());
    let (ol, ov) = required(take("order"), "order")?;
    let order: usize = parse_num(&ov, ol, "order")?;
    if order == 0 {
        return Err(ConfigError::new(Some(ol), "order", "must be at least 1"));
    }
    let eta = match take("eta") {
        Some((l, v)) => parse_num(&v, l, "eta")?,
        None => 0.0,
    };
    let (al, av) = required(take("alpha"), "alpha")?;
    let alpha: Vec<f64> = parse_list(&av, al, "alpha")?;
    if alpha.len() != 2 * order {
        return Err(ConfigError::new(
            Some(al),
            "alpha",
            format!("{} coefficients given but order {order} requires {}", alpha.len(), 2 * order),
        ));
    }
    if let Some(i) = alpha.iter().position(|a| !a.is_finite()) {
        return Err(ConfigError::new(Some(al), format!("alpha[{}]", i + 1), "must be finite"));
    }
    let (nl, nv) = required(take("n_max"), "n_max")?;
    let n_max: usize = parse_num(&nv, nl, "n_max")?;
    let cutoffs = match take("cutoffs") {
        Some((l, v)) => {
            let c: Vec<usize> = parse_list(&v, l, "cutoffs")?;
            if c.is_empty() || c.windows(2).any(|w| w[1] < w[0]) {
                return Err(ConfigError::new(Some(l), "cutoffs", "must be a nonempty nondecreasing list"));
            }
            c
        }
        None => vec![n_max],
    };
    let checks = match take("checks") {
        Some((l, v)) => {
            let mut c = v
                .split_whitespace()
                .map(|t| t.parse::<Check>().map_err(|e| ConfigError::new(Some(l), "checks", e)))
                .collect::<Result<Vec<_>, _>>()?;
            c.sort();
            c.dedup();
            c
        }
        None => vec![Check::Decompose, Check::Ground, Check::Excited],
    };
    let seed = match take("seed") {
        Some((l, v)) => parse_num(&v, l, "seed")?,
        None => crate::eigen::DEFAULT_SEED,
    };
    let workers = match take("workers") {
        Some((l, v)) => {
            let w: usize = parse_num(&v, l, "workers")?;
            if w == 0 {
                return Err(ConfigError::new(Some(l), "workers", "must be positive"));
            }
            Some(w)
        }
        None => None,
    };
    let positive = |v: Option<(usize, String)>, k: &str, default: f64| -> Result<f64, ConfigError> {
        match v {
            Some((l, s)) => {
                let x: f64 = parse_num(&s, l, k)?;
                if !(x > 0.0 && x.is_finite()) {
                    return Err(ConfigError::new(Some(l), k, "must be positive"));
                }
                Ok(x)
            }
            None => Ok(default),
        }
    };
    let tol = positive(take("tol"), "tol", DEFAULT_TOL)?;
    let pullthrough_tol = positive(take("pullthrough_tol"), "pullthrough_tol", 1e-6)?;
    let dense_threshold = match take("dense_threshold") {
        Some((l, v)) => parse_num(&v, l, "dense_threshold")?,
        None => DEFAULT_DENSE_THRESHOLD,
    };
    let capacity = match take("capacity") {
        Some((l, v)) => parse_num(&v, l, "capacity")?,
        None => DEFAULT_CAPACITY,
    };
    let output = take("output").map(|(_, v)| PathBuf::from(v));

    // modes
    if raw.modes.is_empty() {
        return Err(ConfigError::new(None, "modes", "at least one mode row is required"));
    }
    let mut modes = Vec::with_capacity(raw.modes.len());
    for (k, (l, row)) in raw.modes.iter().enumerate() {
        let toks: Vec<&str> = row.split_whitespace().collect();
        if !(2..=3).contains(&toks.len()) {
            return Err(ConfigError::new(Some(*l), format!("modes[{k}]"), "expected 'energy weight [tag]'"));
        }
        let energy: f64 = parse_num(toks[0], *l, &format!("modes[{k}].energy"))?;
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(ConfigError::new(
                Some(*l),
                format!("modes[{k}].energy"),
                format!("mode energy must be positive (got {energy}); omega must be injective"),
            ));
        }
        let weight: f64 = parse_num(toks[1], *l, &format!("modes[{k}].weight"))?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(ConfigError::new(Some(*l), format!("modes[{k}].weight"), "weight must be positive"));
        }
        let tag = match toks.get(2).copied().unwrap_or("discrete") {
            "discrete" => ModeTag::Discrete,
            "essential" => ModeTag::Essential,
            other => {
                return Err(ConfigError::new(Some(*l), format!("modes[{k}].tag"), format!("unknown tag '{other}'")));
            }
        };
        modes.push(Mode::new(energy, weight, tag));
    }
    let mode_set = ModeSet::new(modes, name.clone()).map_err(|e| ConfigError::new(None, "modes", e.to_string()))?;

    // couplings
    let m = mode_set.len();
    let mut vectors = Vec::with_capacity(2 * order);
    for i in 1..=2 * order {
        let (l, row) = raw
            .couplings
            .get(&i)
            .ok_or_else(|| ConfigError::new(None, format!("couplings.f{i}"), "missing coupling row"))?;
        let v = row
            .split_whitespace()
            .enumerate()
            .map(|(k, t)| {
                parse_complex(t).filter(|z| z.re.is_finite() && z.im.is_finite()).ok_or_else(|| {
                    ConfigError::new(Some(*l), format!("couplings.f{i}[{k}]"), format!("cannot parse '{t}'"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if v.len() != m {
            return Err(ConfigError::new(
                Some(*l),
                format!("couplings.f{i}"),
                format!("{} entries for {m} modes", v.len()),
            ));
        }
        vectors.push(v);
    }
    if let Some((&i, (l, _))) = raw.couplings.iter().find(|(&i, _)| i > 2 * order) {
        return Err(ConfigError::new(
            Some(*l),
            format!("couplings.f{i}"),
            format!("order {order} allows f1..f{}", 2 * order),
        ));
    }
    let coupling = CouplingFamily::new(order, vectors).map_err(|e| ConfigError::new(None, "couplings", e.to_string()))?;
    let base = ModelParams::new(eta, alpha, coupling, mode_set).map_err(|e| ConfigError::new(None, "model", e.to_string()))?;
    let report = validate_hypotheses(&base);
    if let Some(h1) = report.checks.iter().find(|c| c.number == 1 && !c.passed) {
        return Err(ConfigError::new(Some(al), "alpha", format!("hypothesis 1 fails: {}", h1.reason)));
    }

    // sweep axes
    let mut axes = Vec::with_capacity(raw.sweep.len());
    for (l, k, v) in &raw.sweep {
        let field = format!("sweep.{k}");
        let kind = match k.as_str() {
            "eta" => AxisKind::Eta,
            "scale" => AxisKind::Scale,
            other => match other.strip_prefix("alpha.").and_then(|s| s.parse::<usize>().ok()) {
                Some(i) if (1..=2 * order).contains(&i) => AxisKind::Alpha(i),
                _ => {
                    return Err(ConfigError::new(
                        Some(*l),
                        field,
                        format!("unknown parameter path (use eta, scale or alpha.1..alpha.{})", 2 * order),
                    ))
                }
            },
        };
        let values = parse_values(v, *l, &field)?;
        if values.iter().any(|x| !x.is_finite()) {
            return Err(ConfigError::new(Some(*l), field, "values must be finite"));
        }
        axes.push(Axis {
            label: k.clone(),
            kind,
            values,
        });
    }

    Ok(SweepConfig {
        name,
        base,
        axes,
        n_max,
        cutoffs,
        checks,
        output,
        workers,
        seed,
        tol,
        pullthrough_tol,
        dense_threshold,
        capacity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "order = 1\nalpha = 0.4 0\nn_max = 6\n[modes]\n1.0 1.0\n[couplings]\nf1 = 1\nf2 = 0\n";

    #[test]
    fn minimal_config_parses() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.base.modes().len(), 1);
        assert_eq!(c.base.order(), 1);
        assert_eq!(c.base.eta, 0.0);
        assert_eq!(c.grid_size(), 1);
        assert_eq!(c.cutoffs, vec![6]);
    }

    #[test]
    fn zero_energy_names_the_mode() {
        let text = MINIMAL.replace("1.0 1.0\n", "1.0 1.0\n0.0 1.0\n").replace("f1 = 1", "f1 = 1 0").replace("f2 = 0", "f2 = 0 0");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.field, "modes[1].energy");
        assert_eq!(err.line, Some(6));
    }

    #[test]
    fn alpha_length_must_match_order() {
        let text = MINIMAL.replace("alpha = 0.4 0", "alpha = 0.4 0 0 1");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.field, "alpha");
    }

    #[test]
    fn hypothesis_one_failure_is_a_config_error() {
        let text = MINIMAL.replace("alpha = 0.4 0", "alpha = 0.4 -1");
        let err = parse_config(&text).unwrap_err();
        assert!(err.message.contains("hypothesis 1"), "{err}");
    }

    #[test]
    fn sweep_axes_and_linspace() {
        let text = format!("{MINIMAL}[sweep]\neta = linspace 0 1 5\nscale = 0.5 1\nalpha.1 = 0.1 0.2 0.3\n");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.axes.len(), 3);
        assert_eq!(c.axes[0].values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let sym = parse_config(&format!("{MINIMAL}[sweep]\neta = linspace -0.9 0.9 19\n")).unwrap();
        assert_eq!(sym.axes[0].values[9], 0.0);
        assert_eq!(sym.axes[0].values[18], 0.9);
        assert_eq!(c.axes[2].kind, AxisKind::Alpha(1));
        assert_eq!(c.grid_size(), 30);
        let bad = format!("{MINIMAL}[sweep]\nalpha.3 = 1\n");
        assert_eq!(parse_config(&bad).unwrap_err().field, "sweep.alpha.3");
    }

    #[test]
    fn unknown_keys_and_sections() {
        assert_eq!(parse_config(&format!("bogus = 1\n{MINIMAL}")).unwrap_err().field, "bogus");
        assert_eq!(parse_config(&format!("{MINIMAL}[extra]\n")).unwrap_err().field, "extra");
        assert!(parse_config(&format!("{MINIMAL}checks = ground nonsense\n")).is_err());
    }

    #[test]
    fn complex_entries() {
        assert_eq!(parse_complex("1.5"), Some(Complex64::new(1.5, 0.0)));
        assert_eq!(parse_complex("2i"), Some(Complex64::new(0.0, 2.0)));
        assert_eq!(parse_complex("-i"), Some(Complex64::new(0.0, -1.0)));
        assert_eq!(parse_complex("0.5-0.25i"), Some(Complex64::new(0.5, -0.25)));
        assert_eq!(parse_complex("1e-3+2e-2i"), Some(Complex64::new(1e-3, 2e-2)));
        assert_eq!(parse_complex("abc"), None);
    }
}
