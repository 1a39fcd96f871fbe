//! Turns a parsed config into a runnable job, collecting every violation.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use stosplit_core::engine::quarter_inv;
use stosplit_core::kt::KTStepSizes;
use stosplit_core::operators::{check_cocoercive, check_firm_nonexpansive, check_lipschitz, check_monotone};
use stosplit_core::ppa::{validate_regime, ErrorRule, PpaConfig, Regime};
use stosplit_core::saddle::validate_step_sizes;
use stosplit_core::sampling::{stream_rng, Stream};
use stosplit_core::spaces::dist_sq;
use stosplit_core::{
    build_min_problem, instances, BlockSampler, BlockSamplers, CocoerciveOp, KTProblem, LipschitzMonotoneOp,
    MaxMonotoneOp, RelaxationSampler, SaddlePoint, SaddleProblem, StepSizes,
};

use crate::config::{
    Algorithm, BlocksSpec, Diagnostic, EngineSection, KtSection, KtSteps, PointSpec, PpaSection, Reference,
    RunConfig, SaddleSection, SaddleSteps,
};

const PROPERTY_PAIRS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub operator: String,
    pub property: String,
    pub pairs: usize,
    /// Largest violation seen; nonpositive means the property held.
    pub worst: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    /// Cocoercivity constant of the saddle operator's single-valued part;
    /// absent when it is `+∞`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub relaxation_moment: f64,
    pub unchecked_operators: Vec<String>,
    pub property_checks: Vec<PropertyCheck>,
    pub iterations_executed: usize,
}

/// Problem data ready to run.
#[derive(Debug, Clone)]
pub enum Job {
    Ppa {
        cfg: PpaConfig,
        x0: Vec<f64>,
    },
    Engine {
        op: MaxMonotoneOp,
        coco: CocoerciveOp,
        gamma: f64,
        errors: ErrorRule,
        x0: Vec<f64>,
    },
    Saddle {
        problem: SaddleProblem,
        steps: StepSizes,
        samplers: BlockSamplers,
        start: SaddlePoint,
    },
    Kt {
        problem: KTProblem,
        steps: KTStepSizes,
        samplers: BlockSamplers,
        x0: Vec<f64>,
        v0: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub job: Job,
    pub relax: RelaxationSampler,
    pub reference: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
}

struct Collector {
    errors: Vec<Diagnostic>,
    warnings: Vec<Diagnostic>,
}

impl Collector {
    fn err(&mut self, path: &str, msg: impl Into<String>) {
        self.errors.push(Diagnostic::new(path, msg));
    }

    fn warn(&mut self, path: &str, msg: impl Into<String>) {
        self.warnings.push(Diagnostic::new(path, msg));
    }

    fn check<T, E: std::fmt::Display>(&mut self, path: &str, r: Result<T, E>) -> Option<T> {
        r.map_err(|e| self.err(path, e.to_string())).ok()
    }
}

/// Runs every validator. Returns the job only when no error was found.
/// `base_dir` resolves relative oracle files; `source` supplies line numbers.
pub fn prepare(cfg: &RunConfig, source: &str, base_dir: &Path) -> (Option<Prepared>, ValidationReport) {
    let mut c = Collector {
        errors: Vec::new(),
        warnings: Vec::new(),
    };
    let seeds = cfg.seeds.expand();
    common_checks(cfg, &seeds, &mut c);
    let reference_point = load_reference(&cfg.reference, base_dir, &mut c);

    let mut report = ValidationReport {
        ok: false,
        algorithm: cfg.algorithm,
        seeds: seeds.clone(),
        errors: Vec::new(),
        warnings: Vec::new(),
        regime: None,
        alpha: None,
        relaxation_moment: cfg.relax_rule.moment(),
        unchecked_operators: Vec::new(),
        property_checks: Vec::new(),
        iterations_executed: 0,
    };

    let name = cfg.algorithm.name();
    let present = [
        ("ppa", cfg.ppa.is_some()),
        ("saddle", cfg.saddle.is_some()),
        ("kt", cfg.kt.is_some()),
        ("engine", cfg.engine.is_some()),
    ];
    for (other, there) in present {
        if there && other != name {
            c.warn(other, format!("table ignored for algorithm `{name}`"));
        }
    }
    if cfg.blocks.is_some() && matches!(cfg.algorithm, Algorithm::Ppa | Algorithm::Engine) {
        c.warn("blocks", format!("block samplers are ignored for algorithm `{name}`"));
    }

    let built = match cfg.algorithm {
        Algorithm::Ppa => match &cfg.ppa {
            Some(s) => ppa_job(cfg, s, reference_point.as_ref(), &mut c, &mut report),
            None => missing(&mut c, name),
        },
        Algorithm::Engine => match &cfg.engine {
            Some(s) => engine_job(cfg, s, reference_point.as_ref(), &mut c, &mut report),
            None => missing(&mut c, name),
        },
        Algorithm::Saddle => match &cfg.saddle {
            Some(s) => saddle_job(cfg, s, reference_point.as_ref(), &mut c, &mut report),
            None => missing(&mut c, name),
        },
        Algorithm::Kt => match &cfg.kt {
            Some(s) => kt_job(cfg, s, reference_point.as_ref(), &mut c, &mut report),
            None => missing(&mut c, name),
        },
    };

    report.errors = c.errors.into_iter().map(|d| d.located(source)).collect();
    report.warnings = c.warnings.into_iter().map(|d| d.located(source)).collect();
    report.ok = report.errors.is_empty();
    let prepared = match built {
        Some((job, reference)) if report.ok => Some(Prepared {
            job,
            relax: cfg.relax_rule.clone(),
            reference,
            seeds,
        }),
        _ => None,
    };
    (prepared, report)
}

fn missing<T>(c: &mut Collector, name: &str) -> Option<T> {
    c.err(name, format!("algorithm `{name}` needs a [{name}] table"));
    None
}

fn common_checks(cfg: &RunConfig, seeds: &[u64], c: &mut Collector) {
    if cfg.n_iter == 0 {
        c.err("n_iter", "must be at least 1");
    }
    if seeds.is_empty() {
        c.err("seeds", "the seed list is empty");
    }
    let distinct: BTreeSet<_> = seeds.iter().collect();
    if distinct.len() != seeds.len() {
        c.err("seeds", "seeds must be distinct");
    }
    if !(cfg.rho >= 2.0 && cfg.rho.is_finite()) {
        c.err("rho", format!("rho = {} must be finite and at least 2", cfg.rho));
    }
    if !(cfg.zero_tol >= 0.0) {
        c.err("zero_tol", "must be nonnegative");
    }
    if let Err(e) = cfg.relax_rule.validate(cfg.rho) {
        c.err("relax_rule", reason(&e));
    }
}

fn reason(e: &stosplit_core::Error) -> String {
    match e {
        stosplit_core::Error::Parameter { reason, .. } => reason.clone(),
        other => other.to_string(),
    }
}

fn load_reference(r: &Reference, base_dir: &Path, c: &mut Collector) -> Option<PointSpec> {
    match r {
        Reference::None => None,
        Reference::Constructed(p) => Some(p.clone()),
        Reference::OracleFile { path } => {
            let full = base_dir.join(path);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| c.err("reference.path", format!("cannot read {}: {e}", full.display())))
                .ok()?;
            serde_json::from_str::<PointSpec>(&text)
                .map_err(|e| c.err("reference.path", format!("{}: {e}", full.display())))
                .ok()
        }
    }
}

fn constructed(cfg: &RunConfig) -> bool {
    matches!(cfg.reference, Reference::Constructed(_))
}

fn check_len(c: &mut Collector, path: &str, v: &[f64], want: usize) -> bool {
    if v.len() != want {
        c.err(path, format!("has length {}, expected {want}", v.len()));
        return false;
    }
    if v.iter().any(|x| !x.is_finite()) {
        c.err(path, "entries must be finite");
        return false;
    }
    true
}

fn sample_pair(rng: &mut impl Rng, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut draw = || (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect::<Vec<f64>>();
    (draw(), draw())
}

fn firm_check(name: &str, op: &MaxMonotoneOp, gamma: f64, dim: usize) -> PropertyCheck {
    let mut rng = stream_rng(0, Stream::Init);
    let mut worst = f64::NEG_INFINITY;
    let mut passed = true;
    for _ in 0..PROPERTY_PAIRS {
        let (x, y) = sample_pair(&mut rng, dim);
        let r = check_firm_nonexpansive(op, gamma, &x, &y).unwrap_or(f64::INFINITY);
        worst = worst.max(r);
        passed &= r <= 1e-10 * (1.0 + dist_sq(&x, &y));
    }
    PropertyCheck {
        operator: name.into(),
        property: "firmly nonexpansive resolvent".into(),
        pairs: PROPERTY_PAIRS,
        worst,
        passed,
    }
}

fn coco_check(name: &str, op: &CocoerciveOp, dim: usize) -> Option<PropertyCheck> {
    if op.is_zero() || !op.map.is_catalog() {
        return None;
    }
    let mut rng = stream_rng(1, Stream::Init);
    let mut worst = f64::NEG_INFINITY;
    let mut passed = true;
    for _ in 0..PROPERTY_PAIRS {
        let (x, y) = sample_pair(&mut rng, dim);
        let r = check_cocoercive(op, &x, &y);
        worst = worst.max(r);
        passed &= r <= 1e-9 * (1.0 + dist_sq(&x, &y));
    }
    Some(PropertyCheck {
        operator: name.into(),
        property: format!("cocoercive with constant {}", op.alpha),
        pairs: PROPERTY_PAIRS,
        worst,
        passed,
    })
}

fn lip_checks(name: &str, op: &LipschitzMonotoneOp, dim: usize) -> Vec<PropertyCheck> {
    if op.is_zero() || !op.map.is_catalog() {
        return Vec::new();
    }
    let mut rng = stream_rng(2, Stream::Init);
    let (mut wm, mut wl) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut pm, mut pl) = (true, true);
    for _ in 0..PROPERTY_PAIRS {
        let (x, y) = sample_pair(&mut rng, dim);
        let scale = 1.0 + dist_sq(&x, &y);
        let m = check_monotone(op, &x, &y);
        let l = check_lipschitz(op, &x, &y);
        wm = wm.max(m);
        wl = wl.max(l);
        pm &= m <= 1e-9 * scale;
        pl &= l <= 1e-9 * scale.sqrt();
    }
    vec![
        PropertyCheck {
            operator: name.into(),
            property: "monotone".into(),
            pairs: PROPERTY_PAIRS,
            worst: wm,
            passed: pm,
        },
        PropertyCheck {
            operator: name.into(),
            property: format!("Lipschitz with constant {}", op.lip),
            pairs: PROPERTY_PAIRS,
            worst: wl,
            passed: pl,
        },
    ]
}

fn record_checks(checks: Vec<PropertyCheck>, c: &mut Collector, report: &mut ValidationReport, path: &str) {
    for chk in checks {
        if !chk.passed {
            c.err(
                path,
                format!("{} fails the {} check (worst violation {:e})", chk.operator, chk.property, chk.worst),
            );
        }
        report.property_checks.push(chk);
    }
}

fn ppa_job(
    cfg: &RunConfig,
    s: &PpaSection,
    reference: Option<&PointSpec>,
    c: &mut Collector,
    report: &mut ValidationReport,
) -> Option<(Job, Option<Vec<f64>>)> {
    let dim = s.x0.len();
    let ok = dim > 0 && check_len(c, "ppa.x0", &s.x0, dim);
    if dim == 0 {
        c.err("ppa.x0", "must be nonempty");
    }
    let op_ok = c.check("ppa.operator", s.operator.validate(Some(dim))).is_some();
    c.check("ppa.gamma_rule", s.gamma_rule.validate());
    c.check("ppa.error_rule", s.error_rule.validate(dim));
    let (_, hi) = cfg.relax_rule.support();
    if hi >= 2.0 {
        c.err("relax_rule", format!("proximal point relaxation must stay below 2, support reaches {hi}"));
    }
    let mut ppa = PpaConfig {
        op: s.operator.clone(),
        gamma: s.gamma_rule.clone(),
        errors: s.error_rule.clone(),
        relax: cfg.relax_rule.clone(),
    };
    let regime = validate_regime(&ppa);
    report.regime = Some(regime);
    if regime == Regime::None {
        c.warn("ppa", "no convergence regime applies to these rules");
    }
    if !(ok && op_ok) {
        return None;
    }
    record_checks(vec![firm_check("ppa.operator", &ppa.op, ppa.gamma.at(0), dim)], c, report, "ppa.operator");
    let z = match reference {
        Some(pt) => {
            if !check_len(c, "reference.x", &pt.x, dim) {
                return None;
            }
            if constructed(cfg) {
                let Some(u) = ppa.op.min_norm_element(&pt.x) else {
                    c.err("reference.x", "point lies outside the operator's domain");
                    return None;
                };
                ppa.op = ppa.op.clone().shifted(u);
            }
            Some(pt.x.clone())
        }
        None => None,
    };
    Some((Job::Ppa { cfg: ppa, x0: s.x0.clone() }, z))
}

fn engine_job(
    cfg: &RunConfig,
    s: &EngineSection,
    reference: Option<&PointSpec>,
    c: &mut Collector,
    report: &mut ValidationReport,
) -> Option<(Job, Option<Vec<f64>>)> {
    let dim = s.x0.len();
    if dim == 0 {
        c.err("engine.x0", "must be nonempty");
        return None;
    }
    if !check_len(c, "engine.x0", &s.x0, dim) {
        return None;
    }
    let op_ok = c.check("engine.operator", s.operator.validate(Some(dim))).is_some();
    let coco_ok = c
        .check("engine.cocoercive", s.cocoercive.map.validate(Some(dim)))
        .is_some();
    if !(s.cocoercive.alpha > 0.0) {
        c.err("engine.cocoercive.alpha", "cocoercivity constant must be positive");
    }
    let alpha = s.cocoercive.alpha;
    report.alpha = alpha.is_finite().then_some(alpha);
    let floor = quarter_inv(alpha);
    if !(s.gamma > 0.0 && s.gamma.is_finite()) {
        c.err("engine.gamma", format!("gamma = {} must be positive", s.gamma));
    } else if !(1.0 / s.gamma > floor) {
        c.err(
            "engine.gamma",
            format!("1/gamma = {} must exceed 1/(4 alpha) = {floor}", 1.0 / s.gamma),
        );
    }
    c.check("engine.error_rule", s.error_rule.validate(dim));
    if !s.cocoercive.map.is_catalog() {
        report.unchecked_operators.push("engine.cocoercive".into());
    }
    if !(op_ok && coco_ok) || !c.errors.is_empty() {
        return None;
    }
    let mut checks = vec![firm_check("engine.operator", &s.operator, s.gamma, dim)];
    checks.extend(coco_check("engine.cocoercive", &s.cocoercive, dim));
    record_checks(checks, c, report, "engine");
    let mut op = s.operator.clone();
    let z = match reference {
        Some(pt) => {
            if !check_len(c, "reference.x", &pt.x, dim) {
                return None;
            }
            if constructed(cfg) {
                let Some(mut u) = op.min_norm_element(&pt.x) else {
                    c.err("reference.x", "point lies outside the operator's domain");
                    return None;
                };
                for (ui, ci) in u.iter_mut().zip(s.cocoercive.apply(&pt.x)) {
                    *ui += ci;
                }
                op = op.shifted(u);
            }
            Some(pt.x.clone())
        }
        None => None,
    };
    Some((
        Job::Engine {
            op,
            coco: s.cocoercive.clone(),
            gamma: s.gamma,
            errors: s.error_rule.clone(),
            x0: s.x0.clone(),
        },
        z,
    ))
}

fn samplers(cfg: &RunConfig, m: usize, k: usize, c: &mut Collector) -> Option<BlockSamplers> {
    let spec: BlocksSpec = cfg.blocks.clone().unwrap_or_default();
    let primal = c.check("blocks.primal", BlockSampler::new(spec.primal, m, spec.window));
    let dual = c.check("blocks.dual", BlockSampler::new(spec.dual, k, spec.window));
    Some(BlockSamplers { primal: primal?, dual: dual? })
}

/// The config key a step-size violation refers to.
fn step_key(msg: &str) -> &str {
    let tok = msg.split([' ', '[', ':']).next().unwrap_or("");
    tok.trim_start_matches("1/")
}

fn saddle_problem_checks(p: &SaddleProblem, c: &mut Collector, report: &mut ValidationReport) {
    let mut checks = Vec::new();
    for (i, b) in p.primal.iter().enumerate() {
        let d = p.h.block_dim(i);
        checks.push(firm_check(&format!("primal[{i}].a"), &b.a, 1.0, d));
        checks.extend(coco_check(&format!("primal[{i}].c"), &b.c, d));
        checks.extend(lip_checks(&format!("primal[{i}].q"), &b.q, d));
    }
    for (k, b) in p.dual.iter().enumerate() {
        let d = p.g.block_dim(k);
        checks.push(firm_check(&format!("dual[{k}].b_m"), &b.b_m, 1.0, d));
        checks.push(firm_check(&format!("dual[{k}].d_m"), &b.d_m, 1.0, d));
        checks.extend(coco_check(&format!("dual[{k}].b_c"), &b.b_c, d));
        checks.extend(coco_check(&format!("dual[{k}].d_c"), &b.d_c, d));
        checks.extend(lip_checks(&format!("dual[{k}].b_l"), &b.b_l, d));
        checks.extend(lip_checks(&format!("dual[{k}].d_l"), &b.d_l, d));
    }
    checks.extend(lip_checks("coupling", &p.coupling, p.h.total_dim()));
    record_checks(checks, c, report, "saddle");
}

fn saddle_job(
    cfg: &RunConfig,
    s: &SaddleSection,
    reference: Option<&PointSpec>,
    c: &mut Collector,
    report: &mut ValidationReport,
) -> Option<(Job, Option<Vec<f64>>)> {
    let (problem, spec) = match (&s.problem, &s.min_problem) {
        (Some(p), None) => (c.check("saddle.problem", p.clone().validated())?, None),
        (None, Some(m)) => {
            c.check("saddle.min_problem", m.validate())?;
            (c.check("saddle.min_problem", build_min_problem(m))?, Some(m))
        }
        (Some(_), Some(_)) => {
            c.err("saddle", "give either `problem` or `min_problem`, not both");
            return None;
        }
        (None, None) => {
            c.err("saddle", "needs a `problem` or a `min_problem` table");
            return None;
        }
    };
    report.unchecked_operators = problem.unchecked_operators();
    let alpha = problem.alpha();
    report.alpha = alpha.is_finite().then_some(alpha);
    saddle_problem_checks(&problem, c, report);

    let steps = match &s.steps {
        SaddleSteps::Largest { sigma, sigma_k } => {
            if !(*sigma > 0.0 && sigma.is_finite()) || !(*sigma_k > 0.0 && sigma_k.is_finite()) {
                c.err("saddle.steps", "sigma and sigma_k must be positive and finite");
                return None;
            }
            StepSizes::largest(&problem, *sigma, *sigma_k)
        }
        SaddleSteps::Explicit(st) => st.clone(),
    };
    for v in validate_step_sizes(&problem, &steps) {
        c.err(&format!("saddle.steps.{}", step_key(&v)), v);
    }
    let samplers = samplers(cfg, problem.num_primal(), problem.num_dual(), c);

    let full = |pt: &PointSpec, what: &str, c: &mut Collector| -> Option<SaddlePoint> {
        let ng = problem.g.total_dim();
        let (y, z) = match (&pt.y, &pt.z, spec) {
            (Some(y), Some(z), _) => (y.clone(), z.clone()),
            (None, None, Some(m)) if pt.x.len() == problem.h.total_dim() => {
                let zp = instances::min_saddle_zero(m, &pt.x, &vec![0.0; ng]);
                (zp.y, zp.z)
            }
            _ => {
                c.err(what, "needs `y` and `z` (they may be omitted only for a `min_problem`)");
                return None;
            }
        };
        let p = SaddlePoint {
            x: pt.x.clone(),
            y,
            z,
            vstar: pt.vstar.clone().unwrap_or_else(|| vec![0.0; ng]),
        };
        c.check(what, p.check(&problem).map(|_| p))
    };

    let start = match &s.start {
        Some(pt) => full(pt, "saddle.start", c)?,
        None => SaddlePoint::zeros(&problem),
    };
    let (problem, z) = match reference {
        Some(pt) => {
            let z = full(pt, "reference", c)?;
            if constructed(cfg) {
                (c.check("reference", problem.with_zero_at(&z))?, Some(z.flat()))
            } else {
                (problem, Some(z.flat()))
            }
        }
        None => (problem, None),
    };
    Some((
        Job::Saddle {
            problem,
            steps,
            samplers: samplers?,
            start,
        },
        z,
    ))
}

fn kt_job(
    cfg: &RunConfig,
    s: &KtSection,
    reference: Option<&PointSpec>,
    c: &mut Collector,
    report: &mut ValidationReport,
) -> Option<(Job, Option<Vec<f64>>)> {
    let problem = c.check("kt.problem", s.problem.clone().validated())?;
    let (nh, ng) = (problem.h.total_dim(), problem.g.total_dim());
    let mut checks = Vec::new();
    for (i, a) in problem.a.iter().enumerate() {
        checks.push(firm_check(&format!("a[{i}]"), a, 1.0, problem.h.block_dim(i)));
    }
    for (k, b) in problem.b.iter().enumerate() {
        checks.push(firm_check(&format!("b[{k}]"), b, 1.0, problem.g.block_dim(k)));
    }
    record_checks(checks, c, report, "kt.problem");
    let steps = match &s.steps {
        KtSteps::Uniform { epsilon, gamma, mu } => KTStepSizes::uniform(&problem, *epsilon, *gamma, *mu),
        KtSteps::Explicit(st) => st.clone(),
    };
    for v in steps.violations(&problem) {
        c.err(&format!("kt.steps.{}", step_key(&v)), v);
    }
    let samplers = samplers(cfg, problem.num_primal(), problem.num_dual(), c);
    let x0 = s.x0.clone().unwrap_or_else(|| vec![0.0; nh]);
    let v0 = s.v0.clone().unwrap_or_else(|| vec![0.0; ng]);
    let starts_ok = check_len(c, "kt.x0", &x0, nh) & check_len(c, "kt.v0", &v0, ng);
    let (problem, z) = match reference {
        Some(pt) => {
            let v = pt.vstar.clone().unwrap_or_else(|| vec![0.0; ng]);
            if !(check_len(c, "reference.x", &pt.x, nh) && check_len(c, "reference.vstar", &v, ng)) {
                return None;
            }
            let z = [&pt.x[..], &v].concat();
            if constructed(cfg) {
                (c.check("reference", problem.with_kt_point(&pt.x, &v))?, Some(z))
            } else {
                (problem, Some(z))
            }
        }
        None => (problem, None),
    };
    if !starts_ok {
        return None;
    }
    Some((
        Job::Kt {
            problem,
            steps,
            samplers: samplers?,
            x0,
            v0,
        },
        z,
    ))
}
