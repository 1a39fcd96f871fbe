//! Parameter grids: one run directory per point and a comparison table.

use std::path::Path;

use serde::Serialize;

use crate::config::{Diagnostic, RunConfig};
use crate::run::RunSummary;
use crate::CliError;

pub const TABLE_NAME: &str = "sweep.csv";

/// Relative tolerance for the speed column: the first `n` at which the
/// ensemble-mean distance falls below this fraction of its initial value.
pub const SPEED_TOL: f64 = 1e-6;

/// Expands the `[sweep]` axes into one config per grid point, in row-major
/// order (relaxation outermost). Output directories are `point_000`, ...
pub fn grid(cfg: &RunConfig, source: &str) -> Result<Vec<RunConfig>, CliError> {
    let empty = |msg: &str| CliError::Config {
        diagnostics: vec![Diagnostic::new("sweep", msg).located(source)],
    };
    let sw = cfg.sweep.as_ref().ok_or_else(|| empty("a sweep needs a [sweep] table"))?;
    if sw.relax_rule.is_none() && sw.blocks.is_none() {
        return Err(empty("empty grid: no axes declared"));
    }
    let relax: Vec<_> = match &sw.relax_rule {
        Some(v) => v.iter().cloned().map(Some).collect(),
        None => vec![None],
    };
    let blocks: Vec<_> = match &sw.blocks {
        Some(v) => v.iter().cloned().map(Some).collect(),
        None => vec![None],
    };
    if relax.is_empty() || blocks.is_empty() {
        return Err(empty("empty grid: an axis has no values"));
    }
    let mut out = Vec::with_capacity(relax.len() * blocks.len());
    for r in &relax {
        for b in &blocks {
            let mut c = cfg.clone();
            c.sweep = None;
            if let Some(r) = r {
                c.relax_rule = r.clone();
            }
            if let Some(b) = b {
                c.blocks = Some(b.clone());
            }
            c.output = cfg.output.join(format!("point_{:03}", out.len()));
            out.push(c);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub directory: String,
    pub relax_rule: String,
    pub blocks: String,
    pub relaxation_moment: f64,
    pub fingerprint: String,
    pub seeds: usize,
    pub final_dist_mean: Option<f64>,
    pub final_dist_std_err: Option<f64>,
    pub final_residual_mean: Option<f64>,
    pub final_residual_median: Option<f64>,
    pub n_mean_dist_below_tol: Option<usize>,
}

pub fn row(point: usize, dir: &Path, s: &RunSummary) -> SweepRow {
    let st = &s.statistics;
    let speed = st.dist.as_ref().and_then(|d| {
        let tol = SPEED_TOL * d.mean.first().copied().unwrap_or(0.0);
        d.mean.iter().position(|m| *m <= tol)
    });
    SweepRow {
        point,
        directory: dir.display().to_string(),
        relax_rule: compact(&s.config.relax_rule),
        blocks: s.config.blocks.as_ref().map_or(String::new(), compact),
        relaxation_moment: s.samplers.relaxation_moment,
        fingerprint: s.fingerprint.clone(),
        seeds: s.seeds.len(),
        final_dist_mean: st.final_dist.as_ref().map(|x| x.mean),
        final_dist_std_err: st.final_dist.as_ref().map(|x| x.std_err),
        final_residual_mean: st.final_residual.as_ref().map(|x| x.mean),
        final_residual_median: st.final_residual.as_ref().map(|x| x.median),
        n_mean_dist_below_tol: speed,
    }
}

fn compact<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

pub fn write_table(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    crate::run::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse;

    const BASE: &str = r#"
algorithm = "kt"
n_iter = 4
seeds = [0]
output = "sw"

[kt]
problem = { h = [1], g = [1], a = [{ kind = "zero" }], b = [{ kind = "zero" }], links = [] }
steps = { rule = "uniform", epsilon = 0.5, gamma = 1.0, mu = 1.0 }
"#;

    #[test]
    fn grid_is_the_product_of_axes() {
        let src = format!(
            "{BASE}\n[sweep]\nrelax_rule = [{{ kind = \"constant\", value = 1.0 }}, {{ kind = \"constant\", value = 0.5 }}, {{ kind = \"uniform\", lo = 0.5, hi = 1.5 }}]\nblocks = [{{ primal = {{ kind = \"full\" }} }}, {{ primal = {{ kind = \"uniform_singleton\" }} }}]\n"
        );
        let cfg = parse(&src).unwrap();
        let pts = grid(&cfg, &src).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[5].output, Path::new("sw/point_005"));
        assert!(pts.iter().all(|p| p.sweep.is_none()));
    }

    #[test]
    fn empty_grids_are_rejected() {
        let cfg = parse(BASE).unwrap();
        assert!(grid(&cfg, BASE).is_err());
        let src = format!("{BASE}\n[sweep]\nrelax_rule = []\n");
        let cfg = parse(&src).unwrap();
        let e = grid(&cfg, &src).unwrap_err();
        assert!(e.to_string().contains("empty grid"), "{e}");
        let src = format!("{BASE}\n[sweep]\n");
        assert!(grid(&parse(&src).unwrap(), &src).is_err());
    }
}
