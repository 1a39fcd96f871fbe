//! Seed ensembles: one worker per trajectory, atomic per-seed files, one
//! summary after the join.

use std::cell::RefCell;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stosplit_core::diagnostics::format_active;
use stosplit_core::engine::{run_with, EngineConfig, GraphSample};
use stosplit_core::sampling::StreamRng;
use stosplit_core::spaces::dist_sq;
use stosplit_core::{
    run_kt, run_ppa, run_saddle, summarize, BlockSampler, EnsembleSummary, Error as CoreError, RelaxationSampler,
    RunOptions, Trace,
};

use crate::config::{RunConfig, Seeds};
use crate::validate::{Job, Prepared, ValidationReport};
use crate::CliError;

pub const TRACE_PREFIX: &str = "trace_seed_";

pub fn trace_file_name(seed: u64) -> String {
    format!("{TRACE_PREFIX}{seed}.csv")
}

/// SHA-256 of the config's JSON form with the seed list and output
/// directory blanked, so every seed of one configuration shares it.
pub fn fingerprint(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.seeds = Seeds::List(Vec::new());
    c.output = PathBuf::new();
    c.sweep = None;
    let json = serde_json::to_vec(&c).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub trace_file: String,
    pub final_dist: Option<f64>,
    pub final_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_staleness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_identity_rel_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_engine_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEcho {
    pub primal: BlockSampler,
    pub dual: BlockSampler,
    pub primal_cover: Vec<f64>,
    pub dual_cover: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerEcho {
    pub relax_rule: RelaxationSampler,
    pub relaxation_moment: f64,
    pub prob_above_two: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<BlockEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub fingerprint: String,
    pub seeds: Vec<u64>,
    pub samplers: SamplerEcho,
    pub final_mean_distance: Option<f64>,
    pub final_mean_residual: Option<f64>,
    pub per_seed: Vec<SeedReport>,
    pub statistics: EnsembleSummary,
}

fn cover(s: &BlockSampler) -> Vec<f64> {
    (0..s.count).map(|i| s.cover_probability(i).unwrap_or(f64::NAN)).collect()
}

fn sampler_echo(p: &Prepared) -> SamplerEcho {
    let blocks = match &p.job {
        Job::Saddle { samplers, .. } | Job::Kt { samplers, .. } => Some(BlockEcho {
            primal_cover: cover(&samplers.primal),
            dual_cover: cover(&samplers.dual),
            primal: samplers.primal.clone(),
            dual: samplers.dual.clone(),
        }),
        _ => None,
    };
    SamplerEcho {
        relax_rule: p.relax.clone(),
        relaxation_moment: p.relax.moment(),
        prob_above_two: p.relax.prob_above_two(),
        blocks,
    }
}

fn fail(seed: u64, e: CoreError) -> CliError {
    match e {
        CoreError::NonFinite { iteration, what } => CliError::Numerical { seed, iteration, what },
        other => CliError::Run {
            seed,
            message: other.to_string(),
        },
    }
}

fn options(cfg: &RunConfig, p: &Prepared, seed: u64) -> RunOptions {
    RunOptions {
        n_iter: cfg.n_iter,
        seed,
        residual_every: cfg.residual_every,
        reference: p.reference.clone(),
        zero_tol: cfg.zero_tol,
        rho: cfg.rho,
        audit: cfg.audit,
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// One trajectory of the configured algorithm.
pub fn run_seed(cfg: &RunConfig, p: &Prepared, seed: u64) -> Result<(Trace, SeedReport), CliError> {
    let mut report = SeedReport {
        seed,
        trace_file: trace_file_name(seed),
        final_dist: None,
        final_residual: None,
        mean_staleness: None,
        cache_violations: None,
        max_identity_rel_err: None,
        max_engine_gap: None,
    };
    let trace = match &p.job {
        Job::Ppa { cfg: ppa, x0 } => {
            let run = run_ppa(ppa, x0, cfg.n_iter, seed, p.reference.as_deref(), cfg.residual_every)
                .map_err(|e| fail(seed, e))?;
            report.max_engine_gap = Some(run.max_engine_gap);
            run.trace
        }
        Job::Engine {
            op,
            coco,
            gamma,
            errors,
            x0,
        } => forward_backward(cfg, p, op, coco, *gamma, errors, x0, seed).map_err(|e| fail(seed, e))?,
        Job::Saddle {
            problem,
            steps,
            samplers,
            start,
        } => {
            let run = run_saddle(problem, steps, samplers, &p.relax, start, &options(cfg, p, seed))
                .map_err(|e| fail(seed, e))?;
            if cfg.audit {
                report.cache_violations = Some(run.audit.cache_violations);
                report.max_identity_rel_err = Some(run.audit.max_identity_rel_err);
            }
            run.trace
        }
        Job::Kt {
            problem,
            steps,
            samplers,
            x0,
            v0,
        } => {
            let run = run_kt(problem, steps, samplers, &p.relax, x0, v0, &options(cfg, p, seed))
                .map_err(|e| fail(seed, e))?;
            if cfg.audit {
                report.cache_violations = Some(run.cache_violations);
            }
            run.trace
        }
    };
    report.final_dist = trace.final_dist;
    report.final_residual = trace.final_residual;
    if !trace.staleness.is_empty() {
        report.mean_staleness = Some(trace.staleness.iter().sum::<f64>() / trace.staleness.len() as f64);
    }
    Ok((trace, report))
}

/// Forward-backward supplier on `A + C`: `w = J_{γA}(x − γCx) − e`,
/// `w* = (x − w)/γ − Cx`, `q = x`, `c* = Cx`.
#[allow(clippy::too_many_arguments)]
fn forward_backward(
    cfg: &RunConfig,
    p: &Prepared,
    op: &stosplit_core::MaxMonotoneOp,
    coco: &stosplit_core::CocoerciveOp,
    gamma: f64,
    errors: &stosplit_core::ppa::ErrorRule,
    x0: &[f64],
    seed: u64,
) -> Result<Trace, CoreError> {
    let dim = x0.len();
    let backward = |x: &[f64]| -> Result<(Vec<f64>, Vec<f64>), CoreError> {
        let cx = coco.apply(x);
        let arg: Vec<f64> = x.iter().zip(&cx).map(|(a, c)| a - gamma * c).collect();
        Ok((op.resolvent(gamma, &arg)?, cx))
    };
    let mut sup = |n: usize, x: &[f64], rng: &mut StreamRng| -> Result<GraphSample, CoreError> {
        let (j, cx) = backward(x)?;
        let err = errors.at(n, dim, rng);
        let w = sub(&j, &err);
        let wstar: Vec<f64> = x.iter().zip(&w).zip(&cx).map(|((a, b), c)| (a - b) / gamma - c).collect();
        Ok(GraphSample {
            estar: err.iter().map(|v| -v / gamma).collect(),
            e: err,
            q: x.to_vec(),
            fstar: vec![0.0; dim],
            cstar: cx,
            w,
            wstar,
        })
    };
    let ecfg = EngineConfig {
        alpha: coco.alpha,
        rho: cfg.rho,
        zero_tol: cfg.zero_tol,
    };
    let reference = p.reference.as_deref();
    let residual = |x: &[f64]| backward(x).map(|(j, _)| dist_sq(x, &j).sqrt());
    let mut trace = Trace::new("", seed);
    let failure = RefCell::new(None);
    let (x, _) = run_with(x0, &mut sup, &p.relax, &ecfg, cfg.n_iter, seed, &mut |ev| {
        let res = if cfg.residual_every > 0 && ev.n % cfg.residual_every == 0 {
            residual(ev.before).map_err(|e| failure.borrow_mut().get_or_insert(e).clone()).ok()
        } else {
            None
        };
        let dist = reference.map(|z| dist_sq(ev.before, z).sqrt());
        trace.rows.push(ev.record.to_row(dist, res, format_active(&[0], &[])));
    })?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite {
            iteration: cfg.n_iter,
            what: "iterate".into(),
        });
    }
    trace.final_dist = reference.map(|z| dist_sq(&x, z).sqrt());
    trace.final_residual = Some(residual(&x)?);
    trace.final_state = x;
    Ok(trace)
}

/// Runs every seed in parallel, writing `trace_seed_<seed>.csv` per seed and
/// `summary.json` once all have finished. `validation.json` is written first.
pub fn execute(
    cfg: &RunConfig,
    p: &Prepared,
    report: &ValidationReport,
    out: &Path,
    quiet: bool,
) -> Result<RunSummary, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    write_json(&out.join("validation.json"), report)?;
    let fp = fingerprint(cfg);
    let results: Vec<Result<(Trace, SeedReport), CliError>> = p
        .seeds
        .par_iter()
        .map(|&seed| {
            let (mut trace, rep) = run_seed(cfg, p, seed)?;
            trace.fingerprint = fp.clone();
            let csv = trace.to_csv_string().map_err(|e| fail(seed, e))?;
            write_atomic(&out.join(&rep.trace_file), csv.as_bytes())?;
            if !quiet {
                let d = rep.final_dist.map_or("-".into(), |d| format!("{d:.3e}"));
                let r = rep.final_residual.map_or("-".into(), |r| format!("{r:.3e}"));
                eprintln!("seed {seed}: final dist {d}, final residual {r}");
            }
            Ok((trace, rep))
        })
        .collect();
    let mut traces = Vec::with_capacity(results.len());
    let mut per_seed = Vec::with_capacity(results.len());
    for r in results {
        let (t, s) = r?;
        traces.push(t);
        per_seed.push(s);
    }
    let statistics = summarize(&traces).map_err(|e| CliError::Io(e.to_string()))?;
    let summary = RunSummary {
        config: cfg.clone(),
        fingerprint: fp,
        seeds: p.seeds.clone(),
        samplers: sampler_echo(p),
        final_mean_distance: statistics.final_dist.as_ref().map(|s| s.mean),
        final_mean_residual: statistics.final_residual.as_ref().map(|s| s.mean),
        per_seed,
        statistics,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    #[test]
    fn fingerprint_ignores_seeds_and_output() {
        let src = "algorithm = \"ppa\"\nn_iter = 3\nseeds = [1]\n[ppa]\noperator = { kind = \"l1\", weight = 1.0 }\ngamma_rule = { kind = \"constant\", value = 1.0 }\nx0 = [1.0]\n";
        let a = parse(src).unwrap();
        let mut b = a.clone();
        b.seeds = Seeds::Range { count: 9, base: 4 };
        b.output = "elsewhere".into();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        b.n_iter = 4;
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 64);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
