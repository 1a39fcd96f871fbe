//! The run configuration document.
//!
//! A config is a TOML file. Top-level keys:
//!
//! | key              | type                         | default              |
//! |------------------|------------------------------|----------------------|
//! | `algorithm`      | `ppa`, `saddle`, `kt`, `engine` | required          |
//! | `n_iter`         | integer ≥ 1                  | required             |
//! | `seeds`          | list of u64, or `{ count, base }` | required        |
//! | `output`         | path                         | `"out"`              |
//! | `residual_every` | integer, 0 disables          | 0                    |
//! | `zero_tol`       | float ≥ 0                    | 1e-24                |
//! | `rho`            | float ≥ 2, relaxation cap    | 2.0                  |
//! | `audit`          | bool                         | false                |
//! | `relax_rule`     | relaxation law table         | `{ kind = "constant", value = 1.0 }` |
//! | `reference`      | reference table              | `{ source = "none" }` |
//! | `blocks`         | block sampler table          | full activation      |
//!
//! plus one table named after the algorithm and an optional `sweep` table.

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stosplit_core::kt::KTStepSizes;
use stosplit_core::ppa::{ErrorRule, GammaRule};
use stosplit_core::{
    BlockLaw, CocoerciveOp, KTProblem, MaxMonotoneOp, MinProblemSpec, RelaxationSampler, SaddleProblem, StepSizes,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ppa,
    Saddle,
    Kt,
    Engine,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ppa => "ppa",
            Algorithm::Saddle => "saddle",
            Algorithm::Kt => "kt",
            Algorithm::Engine => "engine",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Either an explicit list or `base + 0..count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range {
        count: usize,
        #[serde(default)]
        base: u64,
    },
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { count, base } => (0..*count as u64).map(|j| base.wrapping_add(j)).collect(),
        }
    }

    /// Parses the `--seeds` flag: a bare integer is a count, anything with a
    /// comma is a list.
    pub fn parse_flag(s: &str, base: u64) -> Result<Seeds, String> {
        let s = s.trim();
        if s.contains(',') {
            s.split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(Seeds::List)
        } else {
            s.parse::<usize>()
                .map(|count| Seeds::Range { count, base })
                .map_err(|e| format!("bad seed count `{s}`: {e}"))
        }
    }

    pub fn base(&self) -> u64 {
        match self {
            Seeds::List(_) => 0,
            Seeds::Range { base, .. } => *base,
        }
    }
}

/// A point given by parts. Missing parts are filled where the algorithm
/// allows it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vstar: Option<Vec<f64>>,
}

/// Where distances are measured to.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Reference {
    #[default]
    None,
    /// The problem is shifted so that this point is a solution.
    Constructed(PointSpec),
    /// A JSON file holding a [`PointSpec`] that solves the problem as given.
    /// Relative paths resolve against the config file's directory.
    OracleFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksSpec {
    #[serde(default = "full_law")]
    pub primal: BlockLaw,
    #[serde(default = "full_law")]
    pub dual: BlockLaw,
    #[serde(default = "one")]
    pub window: usize,
}

impl Default for BlocksSpec {
    fn default() -> Self {
        BlocksSpec {
            primal: BlockLaw::Full,
            dual: BlockLaw::Full,
            window: 1,
        }
    }
}

fn full_law() -> BlockLaw {
    BlockLaw::Full
}

fn one() -> usize {
    1
}

fn zero_errors() -> ErrorRule {
    ErrorRule::Zero
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_zero_tol() -> f64 {
    stosplit_core::engine::DEFAULT_ZERO_TOL
}

fn default_rho() -> f64 {
    2.0
}

fn default_relax() -> RelaxationSampler {
    RelaxationSampler::constant(1.0)
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpaSection {
    pub operator: MaxMonotoneOp,
    pub gamma_rule: GammaRule,
    #[serde(default = "zero_errors")]
    pub error_rule: ErrorRule,
    pub x0: Vec<f64>,
}

/// Forward-backward supplier on `A + C`: `w = J_{γA}(x − γCx)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub operator: MaxMonotoneOp,
    #[serde(default)]
    pub cocoercive: CocoerciveOp,
    pub gamma: f64,
    #[serde(default = "zero_errors")]
    pub error_rule: ErrorRule,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SaddleSteps {
    /// Largest admissible constant steps for the given `sigma`.
    Largest { sigma: f64, sigma_k: f64 },
    Explicit(StepSizes),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<SaddleProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_problem: Option<MinProblemSpec>,
    pub steps: SaddleSteps,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<PointSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum KtSteps {
    Uniform { epsilon: f64, gamma: f64, mu: f64 },
    Explicit(KTStepSizes),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KtSection {
    pub problem: KTProblem,
    pub steps: KtSteps,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
}

/// Sweep axes. A grid point takes one value per declared axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relax_rule: Option<Vec<RelaxationSampler>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<BlocksSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub n_iter: usize,
    pub seeds: Seeds,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub residual_every: usize,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub audit: bool,
    #[serde(default = "default_relax")]
    pub relax_rule: RelaxationSampler,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<BlocksSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppa: Option<PpaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saddle: Option<SaddleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kt: Option<KtSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// A message tied to a key path and, when it can be found, a source line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            line: None,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn located(mut self, source: &str) -> Self {
        if self.line.is_none() {
            self.line = locate(source, &self.path);
        }
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.path.is_empty()) {
            (Some(l), false) => write!(f, "line {l}: {}: {}", self.path, self.message),
            (Some(l), true) => write!(f, "line {l}: {}", self.message),
            (None, false) => write!(f, "{}: {}", self.path, self.message),
            (None, true) => f.write_str(&self.message),
        }
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Parses a config document. Syntax and schema errors carry the line of the
/// offending span.
pub fn parse(source: &str) -> Result<RunConfig, Diagnostic> {
    toml::from_str::<RunConfig>(source).map_err(|e| {
        let line = e.span().map(|Range { start, .. }| line_of_offset(source, start));
        Diagnostic {
            line,
            path: String::new(),
            message: e.message().trim().to_string(),
        }
    })
}

fn header_of(line: &str) -> Option<String> {
    let t = line.trim();
    let inner = t.strip_prefix("[[").and_then(|r| r.split("]]").next());
    let inner = inner.or_else(|| t.strip_prefix('[').and_then(|r| r.split(']').next()))?;
    Some(inner.trim().replace(' ', ""))
}

fn assigns(line: &str, key: &str) -> bool {
    let bytes = line.as_bytes();
    let mut from = 0;
    while let Some(pos) = line[from..].find(key) {
        let start = from + pos;
        let end = start + key.len();
        let before_ok = start == 0 || matches!(bytes[start - 1], b' ' | b'\t' | b'{' | b',' | b'.' | b'"');
        let rest = line[end..].trim_start_matches('"').trim_start();
        if before_ok && (rest.starts_with('=') || rest.starts_with('.')) {
            return true;
        }
        from = end;
    }
    false
}

/// Best-effort line of a dotted key path such as `saddle.steps.sigma`.
/// Indices like `gamma[1]` are ignored. Prefers assignments inside the
/// deepest matching table.
pub fn locate(source: &str, path: &str) -> Option<usize> {
    let parts: Vec<String> = path
        .split('.')
        .map(|p| p.split('[').next().unwrap_or(p).to_string())
        .filter(|p| !p.is_empty())
        .collect();
    let key = parts.last()?;
    let mut table = String::new();
    let mut best: Option<(usize, usize)> = None;
    for (j, line) in source.lines().enumerate() {
        let code = line.split('#').next().unwrap_or("");
        if let Some(h) = header_of(code) {
            table = h;
            if table == parts.join(".") {
                return Some(j + 1);
            }
            continue;
        }
        if !assigns(code, key) {
            continue;
        }
        let tparts: Vec<&str> = if table.is_empty() { vec![] } else { table.split('.').collect() };
        let depth = tparts.iter().zip(&parts).take_while(|(a, b)| **a == b.as_str()).count();
        if depth < tparts.len() {
            continue;
        }
        if best.map_or(true, |(d, _)| depth > d) {
            best = Some((depth, j + 1));
        }
    }
    best.map(|(_, l)| l).or_else(|| {
        let parent = &parts[..parts.len() - 1];
        (!parent.is_empty()).then(|| locate(source, &parent.join("."))).flatten()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PPA: &str = r#"
algorithm = "ppa"
n_iter = 10
seeds = { count = 3, base = 7 }

[relax_rule]
kind = "uniform"
lo = 0.5
hi = 1.5

[ppa]
operator = { kind = "l1", weight = 1.0 }
gamma_rule = { kind = "constant", value = 1.0 }
x0 = [5.0]
"#;

    #[test]
    fn parses_defaults() {
        let c = parse(PPA).unwrap();
        assert_eq!(c.algorithm, Algorithm::Ppa);
        assert_eq!(c.seeds.expand(), vec![7, 8, 9]);
        assert_eq!(c.rho, 2.0);
        assert_eq!(c.reference, Reference::None);
        assert_eq!(c.ppa.unwrap().error_rule, ErrorRule::Zero);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let bad = PPA.replace("hi = 1.5", "hi = ");
        let d = parse(&bad).unwrap_err();
        assert_eq!(d.line, Some(9));
        let unknown = PPA.replace("x0 = [5.0]", "x0 = [5.0]\nx1 = 2");
        let d = parse(&unknown).unwrap_err();
        assert_eq!(d.line, Some(15), "{d}");
    }

    #[test]
    fn locates_nested_keys() {
        assert_eq!(locate(PPA, "relax_rule.hi"), Some(9));
        assert_eq!(locate(PPA, "ppa.gamma_rule"), Some(13));
        assert_eq!(locate(PPA, "ppa.x0"), Some(14));
        assert_eq!(locate(PPA, "seeds"), Some(4));
        assert_eq!(locate(PPA, "relax_rule"), Some(6));
        assert_eq!(locate(PPA, "ppa.error_rule"), Some(11));
        assert_eq!(locate(PPA, "nothing"), None);
    }

    #[test]
    fn seed_flags() {
        assert_eq!(Seeds::parse_flag("4", 10).unwrap().expand(), vec![10, 11, 12, 13]);
        assert_eq!(Seeds::parse_flag("3, 1,2", 0).unwrap().expand(), vec![3, 1, 2]);
        assert_eq!(Seeds::parse_flag("9,", 0).unwrap(), Seeds::List(vec![9]));
        assert!(Seeds::parse_flag("x", 0).is_err());
    }

    #[test]
    fn json_echo_round_trips() {
        let c = parse(PPA).unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
