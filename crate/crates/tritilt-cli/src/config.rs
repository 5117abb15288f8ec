//! Flat `key = value` experiment configs and their resolution into
//! concrete run parameters. Command-line flags override file values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use tritilt::glauber::ConstraintSet;
use tritilt::rates::{ProblemSpec, ThresholdMode, TiltParams};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse { line: usize, text: String },
    BadValue { key: &'static str, text: String },
    Missing(&'static str),
    Unresolvable(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config i/o: {e}"),
            ConfigError::Parse { line, text } => {
                write!(f, "config line {line} is not `key = value`: {text:?}")
            }
            ConfigError::BadValue { key, text } => {
                write!(f, "config value for `{key}` is invalid: {text:?}")
            }
            ConfigError::Missing(key) => write!(f, "required parameter `{key}` is missing"),
            ConfigError::Unresolvable(msg) => write!(f, "cannot resolve tilt: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// One experiment description: everything needed to resolve tilt
/// parameters, budgets and outputs. All fields optional so that file
/// values and flag overrides merge field by field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub p: Option<f64>,
    pub t: Option<f64>,
    pub n: Option<Vec<usize>>,
    pub tilt: Option<String>,
    pub alpha: Option<f64>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub steps_coeff: Option<f64>,
    pub burnin_coeff: Option<f64>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub threshold_mode: Option<ThresholdMode>,
    pub budget_frac: Option<f64>,
    pub out: Option<String>,
    pub hist_out: Option<String>,
}

impl ExperimentConfig {
    /// Parse the flat `key = value` format. Blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line: lineno + 1, text: raw.into() })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |key: &'static str| ConfigError::BadValue { key, text: value.into() };
            match key {
                "p" => cfg.p = Some(value.parse().map_err(|_| bad("p"))?),
                "t" => cfg.t = Some(value.parse().map_err(|_| bad("t"))?),
                "n" => {
                    let ns: Result<Vec<usize>, _> =
                        value.split(',').map(|s| s.trim().parse()).collect();
                    cfg.n = Some(ns.map_err(|_| bad("n"))?);
                }
                "tilt" => cfg.tilt = Some(value.to_string()),
                "alpha" => cfg.alpha = Some(value.parse().map_err(|_| bad("alpha"))?),
                "q" => cfg.q = Some(value.parse().map_err(|_| bad("q"))?),
                "r" => cfg.r = Some(value.parse().map_err(|_| bad("r"))?),
                "steps_coeff" => {
                    cfg.steps_coeff = Some(value.parse().map_err(|_| bad("steps_coeff"))?)
                }
                "burnin_coeff" => {
                    cfg.burnin_coeff = Some(value.parse().map_err(|_| bad("burnin_coeff"))?)
                }
                "seed" => cfg.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "replicas" => cfg.replicas = Some(value.parse().map_err(|_| bad("replicas"))?),
                "threshold_mode" => {
                    cfg.threshold_mode = Some(match value {
                        "binomial" => ThresholdMode::Binomial,
                        "graphon" => ThresholdMode::Graphon,
                        _ => return Err(bad("threshold_mode")),
                    })
                }
                "budget_frac" => {
                    cfg.budget_frac = Some(value.parse().map_err(|_| bad("budget_frac"))?)
                }
                "out" => cfg.out = Some(value.to_string()),
                "hist_out" => cfg.hist_out = Some(value.to_string()),
                _ => {
                    return Err(ConfigError::Parse { line: lineno + 1, text: raw.into() });
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::parse(&text)
    }

    /// Serialize back to the flat format; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut rows: BTreeMap<&str, String> = BTreeMap::new();
        if let Some(v) = self.p {
            rows.insert("p", v.to_string());
        }
        if let Some(v) = self.t {
            rows.insert("t", v.to_string());
        }
        if let Some(v) = &self.n {
            rows.insert(
                "n",
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            );
        }
        if let Some(v) = &self.tilt {
            rows.insert("tilt", v.clone());
        }
        if let Some(v) = self.alpha {
            rows.insert("alpha", v.to_string());
        }
        if let Some(v) = self.q {
            rows.insert("q", v.to_string());
        }
        if let Some(v) = self.r {
            rows.insert("r", v.to_string());
        }
        if let Some(v) = self.steps_coeff {
            rows.insert("steps_coeff", v.to_string());
        }
        if let Some(v) = self.burnin_coeff {
            rows.insert("burnin_coeff", v.to_string());
        }
        if let Some(v) = self.seed {
            rows.insert("seed", v.to_string());
        }
        if let Some(v) = self.replicas {
            rows.insert("replicas", v.to_string());
        }
        if let Some(v) = self.threshold_mode {
            rows.insert(
                "threshold_mode",
                match v {
                    ThresholdMode::Binomial => "binomial".into(),
                    ThresholdMode::Graphon => "graphon".into(),
                },
            );
        }
        if let Some(v) = self.budget_frac {
            rows.insert("budget_frac", v.to_string());
        }
        if let Some(v) = &self.out {
            rows.insert("out", v.clone());
        }
        if let Some(v) = &self.hist_out {
            rows.insert("hist_out", v.clone());
        }
        rows.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Overlay `other` on top of `self`: any field set in `other` wins.
    pub fn overlaid(mut self, other: &ExperimentConfig) -> Self {
        macro_rules! take {
            ($field:ident) => {
                if other.$field.is_some() {
                    self.$field = other.$field.clone();
                }
            };
        }
        take!(p);
        take!(t);
        take!(n);
        take!(tilt);
        take!(alpha);
        take!(q);
        take!(r);
        take!(steps_coeff);
        take!(burnin_coeff);
        take!(seed);
        take!(replicas);
        take!(threshold_mode);
        take!(budget_frac);
        take!(out);
        take!(hist_out);
        self
    }
}

/// A fully resolved estimation run for one graph size.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub spec: ProblemSpec,
    pub tilt: TiltParams,
    pub tilt_name: String,
    pub constraint: Option<ConstraintSet>,
    pub n: usize,
    pub total_steps: u64,
    pub steps_per_replica: u64,
    pub burnin: u64,
    pub replicas: usize,
    pub seed: u64,
}

/// Default budget coefficient: the paper's rule of `5e4` up to `n=64`
/// and `1e5` at larger sizes.
pub fn default_steps_coeff(n: usize) -> f64 {
    if n <= 64 {
        5e4
    } else {
        1e5
    }
}

/// Resolve the tilt descriptor to concrete Gibbs parameters.
/// Descriptors: `mc`, `edge`, `triangle[:alpha]`, `hybrid[:q]`.
pub fn resolve_tilt(
    descriptor: &str,
    spec: &ProblemSpec,
    alpha_flag: Option<f64>,
    q_flag: Option<f64>,
) -> Result<(TiltParams, String), ConfigError> {
    let (kind, inline) = match descriptor.split_once(':') {
        Some((k, v)) => (k, Some(v)),
        None => (descriptor, None),
    };
    let parse_inline = |v: &str| -> Result<f64, ConfigError> {
        v.parse().map_err(|_| ConfigError::Unresolvable(format!("bad tilt argument {v:?}")))
    };
    match kind {
        "mc" | "source" => Ok((TiltParams::source(spec.p), "mc".into())),
        "edge" => Ok((TiltParams::edge(spec.t), "edge".into())),
        "triangle" => {
            let alpha = match inline {
                Some(v) => parse_inline(v)?,
                None => alpha_flag.unwrap_or(1.0),
            };
            let tilt = TiltParams::triangle(spec, alpha)
                .map_err(|e| ConfigError::Unresolvable(e.to_string()))?;
            Ok((tilt, format!("triangle:{alpha}")))
        }
        "hybrid" => {
            let q = match inline {
                Some(v) => parse_inline(v)?,
                None => q_flag.ok_or(ConfigError::Missing("q"))?,
            };
            let tilt = TiltParams::hybrid(q, spec.t)
                .map_err(|e| ConfigError::Unresolvable(e.to_string()))?;
            Ok((tilt, format!("hybrid:{q}")))
        }
        other => Err(ConfigError::Unresolvable(format!("unknown tilt {other:?}"))),
    }
}

impl ExperimentConfig {
    /// Resolve into one run per requested `n`.
    pub fn resolve(&self) -> Result<Vec<ResolvedRun>, ConfigError> {
        let p = self.p.ok_or(ConfigError::Missing("p"))?;
        let t = self.t.ok_or(ConfigError::Missing("t"))?;
        let mode = self.threshold_mode.unwrap_or(ThresholdMode::Binomial);
        let spec = ProblemSpec::new(p, t, mode)
            .map_err(|e| ConfigError::Unresolvable(e.to_string()))?;
        let ns = self.n.clone().ok_or(ConfigError::Missing("n"))?;
        let descriptor = self.tilt.clone().ok_or(ConfigError::Missing("tilt"))?;
        let (tilt, tilt_name) = resolve_tilt(&descriptor, &spec, self.alpha, self.q)?;
        let constraint = self.r.map(ConstraintSet::a_r);
        let replicas = self.replicas.unwrap_or(1).max(1);
        let frac = self.budget_frac.unwrap_or(1.0);
        if !(frac > 0.0) {
            return Err(ConfigError::BadValue { key: "budget_frac", text: frac.to_string() });
        }
        let seed = self.seed.unwrap_or(0);
        let mut runs = Vec::with_capacity(ns.len());
        for &n in &ns {
            if n < 2 {
                return Err(ConfigError::BadValue { key: "n", text: n.to_string() });
            }
            let coeff = self.steps_coeff.unwrap_or_else(|| default_steps_coeff(n));
            let total_steps = tritilt::glauber::steps_budget(n, coeff * frac).max(replicas as u64);
            let burnin_coeff = self.burnin_coeff.unwrap_or(10.0);
            let burnin = tritilt::glauber::steps_budget(n, burnin_coeff * frac);
            runs.push(ResolvedRun {
                spec,
                tilt,
                tilt_name: tilt_name.clone(),
                constraint,
                n,
                total_steps,
                steps_per_replica: total_steps.div_ceil(replicas as u64),
                burnin,
                replicas,
                seed,
            });
        }
        Ok(runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let text = "\
# an experiment
p = 0.35
t = 0.4
n = 16,32
tilt = hybrid:0.37
seed = 7
replicas = 2
threshold_mode = binomial
budget_frac = 0.25
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let cfg2 = ExperimentConfig::parse(&cfg.serialize()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(cfg.serialize(), cfg2.serialize());
    }

    #[test]
    fn flags_override_file_values() {
        let file = ExperimentConfig::parse("p = 0.2\nt = 0.3\nseed = 1\n").unwrap();
        let flags = ExperimentConfig { seed: Some(9), ..Default::default() };
        let merged = file.overlaid(&flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.p, Some(0.2));
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(matches!(
            ExperimentConfig::parse("p 0.2"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("frobnicate = 1"),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("p = zebra"),
            Err(ConfigError::BadValue { key: "p", .. })
        ));
    }

    #[test]
    fn tilt_resolution() {
        let spec = ProblemSpec::new(0.35, 0.4, ThresholdMode::Binomial).unwrap();
        let (tri, name) = resolve_tilt("triangle:1", &spec, None, None).unwrap();
        assert_eq!(name, "triangle:1");
        assert!(tri.beta > 0.0);
        let (hy, _) = resolve_tilt("hybrid", &spec, None, Some(0.37)).unwrap();
        assert!(hy.beta > 0.0 && hy.beta < tri.beta);
        assert!(resolve_tilt("hybrid", &spec, None, None).is_err());
        assert!(resolve_tilt("wedge", &spec, None, None).is_err());
        // replica-breaking triangle tilt is a resolution error
        let breaking = ProblemSpec::new(0.01, 0.07, ThresholdMode::Binomial).unwrap();
        assert!(matches!(
            resolve_tilt("triangle:1", &breaking, None, None),
            Err(ConfigError::Unresolvable(_))
        ));
    }
}
