//! Per-iteration traces, Fejér monitoring and ensemble statistics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names of the trace CSV, in order.
pub const TRACE_COLUMNS: [&str; 9] = [
    "n",
    "delta",
    "theta",
    "lambda",
    "d_norm",
    "tstar_norm",
    "dist_to_ref",
    "residual",
    "active_blocks",
];

/// One iteration. `dist_to_ref` is measured at the iterate *before* the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: usize,
    pub delta: f64,
    pub theta: f64,
    pub lambda: f64,
    pub d_norm: f64,
    pub tstar_norm: f64,
    pub dist_to_ref: Option<f64>,
    pub residual: Option<f64>,
    /// Primal indices, then `|`, then dual indices, each `;`-separated.
    pub active_blocks: String,
}

pub fn format_active(primal: &[usize], dual: &[usize]) -> String {
    let join = |s: &[usize]| s.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
    if dual.is_empty() {
        join(primal)
    } else {
        format!("{}|{}", join(primal), join(dual))
    }
}

/// A seeded trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub fingerprint: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    /// Distance to the reference after the last step.
    pub final_dist: Option<f64>,
    pub final_residual: Option<f64>,
    pub final_state: Vec<f64>,
    /// `‖(x, y, z)_{last activation} − (x, y, z)_n‖` after each step, for
    /// block-iterative runs.
    pub staleness: Vec<f64>,
}

impl Trace {
    pub fn new(fingerprint: impl Into<String>, seed: u64) -> Self {
        Trace {
            fingerprint: fingerprint.into(),
            seed,
            ..Trace::default()
        }
    }

    /// `‖x_n − z‖` for `n = 0..=rows.len()`, when a reference was tracked.
    pub fn distances(&self) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = self.rows.iter().map(|r| r.dist_to_ref).collect::<Option<_>>()?;
        out.push(self.final_dist?);
        Some(out)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(TRACE_COLUMNS)?;
        for row in &self.rows {
            wr.serialize(row)?;
        }
        wr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Csv(e.to_string()))
    }
}

/// Reads rows written by [`Trace::write_csv`], rejecting a wrong header.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(Error::Csv(format!("unexpected header {:?}", header)));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Iterations at which `‖x_{n+1} − z‖² ≤ ‖x_n − z‖² − λ(2−λ)‖d_n‖² + tol·max(1, ‖x_n − z‖²)`
/// fails. Traces without distances yield no violations.
pub fn fejer_check(trace: &Trace, tol: f64) -> Vec<usize> {
    let Some(dist) = trace.distances() else {
        return Vec::new();
    };
    trace
        .rows
        .iter()
        .enumerate()
        .filter_map(|(j, r)| {
            let before = dist[j] * dist[j];
            let after = dist[j + 1] * dist[j + 1];
            let bound = before - r.lambda * (2.0 - r.lambda) * r.d_norm * r.d_norm + tol * before.max(1.0);
            (after > bound).then_some(r.n)
        })
        .collect()
}

/// Order statistics and moments of one quantity across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std_err: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Sorts first, so the result depends only on the multiset of values.
    pub fn from_values(values: &[f64]) -> Stats {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            dev.sort_by(f64::total_cmp);
            dev.iter().sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stats {
            mean,
            std_err: (var / n).sqrt(),
            median: quantile(&v, 0.5),
            q10: quantile(&v, 0.1),
            q90: quantile(&v, 0.9),
            min: v[0],
            max: v[v.len() - 1],
        }
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-iteration series of [`Stats`], stored column-wise.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Series {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub median: Vec<f64>,
    pub q10: Vec<f64>,
    pub q90: Vec<f64>,
}

impl Series {
    fn push(&mut self, s: &Stats) {
        self.mean.push(s.mean);
        self.std_err.push(s.std_err);
        self.median.push(s.median);
        self.q10.push(s.q10);
        self.q90.push(s.q90);
    }

    fn from_columns(columns: &[Vec<f64>]) -> Series {
        let mut s = Series::default();
        for c in columns {
            s.push(&Stats::from_values(c));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub fingerprint: String,
    pub seed_count: usize,
    pub n_iter: usize,
    /// `‖x_n − z‖` for `n = 0..=n_iter`.
    pub dist: Option<Series>,
    pub delta: Series,
    pub d_norm: Series,
    pub final_dist: Option<Stats>,
    pub final_residual: Option<Stats>,
}

/// Aggregates seeds of one configuration. Traces may come in any order.
pub fn summarize(traces: &[Trace]) -> Result<EnsembleSummary> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Usage("cannot summarize an empty trace set".into()))?;
    for t in traces {
        if t.fingerprint != first.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: first.fingerprint.clone(),
                found: t.fingerprint.clone(),
            });
        }
        if t.rows.len() != first.rows.len() {
            return Err(Error::Usage("traces have different lengths".into()));
        }
    }
    let n_iter = first.rows.len();
    let column = |f: &dyn Fn(&TraceRow) -> f64| -> Vec<Vec<f64>> {
        (0..n_iter).map(|j| traces.iter().map(|t| f(&t.rows[j])).collect()).collect()
    };
    let dist = traces
        .iter()
        .map(Trace::distances)
        .collect::<Option<Vec<_>>>()
        .map(|d| {
            let cols: Vec<Vec<f64>> = (0..=n_iter).map(|j| d.iter().map(|t| t[j]).collect()).collect();
            Series::from_columns(&cols)
        });
    let finals = |f: &dyn Fn(&Trace) -> Option<f64>| {
        traces.iter().map(f).collect::<Option<Vec<_>>>().map(|v| Stats::from_values(&v))
    };
    Ok(EnsembleSummary {
        fingerprint: first.fingerprint.clone(),
        seed_count: traces.len(),
        n_iter,
        dist,
        delta: Series::from_columns(&column(&|r| r.delta)),
        d_norm: Series::from_columns(&column(&|r| r.d_norm)),
        final_dist: finals(&|t| t.final_dist),
        final_residual: finals(&|t| t.final_residual),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ppa_like_trace() -> Trace {
        // x_n = max(5 − n, 0), z = 0, λ = 1, d_n = x_n − x_{n+1}
        let mut t = Trace::new("fp", 1);
        for n in 0..8usize {
            let x = (5.0 - n as f64).max(0.0);
            let next = (x - 1.0).max(0.0);
            t.rows.push(TraceRow {
                n,
                delta: x - next,
                theta: 1.0,
                lambda: 1.0,
                d_norm: x - next,
                tstar_norm: x - next,
                dist_to_ref: Some(x),
                residual: None,
                active_blocks: "0".into(),
            });
        }
        t.final_dist = Some(0.0);
        t
    }

    #[test]
    fn fejer_examples() {
        let t = ppa_like_trace();
        assert!(fejer_check(&t, 1e-10).is_empty());
        let mut still = t.clone();
        for r in &mut still.rows {
            r.dist_to_ref = Some(0.0);
            r.d_norm = 0.0;
        }
        assert!(fejer_check(&still, 1e-10).is_empty());
        let mut bad = t.clone();
        bad.rows[3].dist_to_ref = Some(2.9);
        assert_eq!(fejer_check(&bad, 1e-10), vec![2]);
    }

    #[test]
    fn summary_of_one_trace_is_its_series() {
        let t = ppa_like_trace();
        let s = summarize(std::slice::from_ref(&t)).unwrap();
        assert_eq!(s.dist.as_ref().unwrap().mean, t.distances().unwrap());
        assert_eq!(s.seed_count, 1);
        let s2 = summarize(&[t.clone(), t.clone()]).unwrap();
        assert!(s2.dist.unwrap().std_err.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn summary_rejects_mixed_fingerprints() {
        let a = ppa_like_trace();
        let mut b = a.clone();
        b.fingerprint = "other".into();
        assert!(matches!(summarize(&[a, b]), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn summary_is_permutation_invariant() {
        let mut traces = Vec::new();
        for s in 0..5u64 {
            let mut t = ppa_like_trace();
            t.seed = s;
            for r in &mut t.rows {
                r.delta *= 1.0 + 0.1 * s as f64;
                r.dist_to_ref = r.dist_to_ref.map(|d| d * (1.0 + 0.37 * s as f64));
            }
            traces.push(t);
        }
        let a = summarize(&traces).unwrap();
        traces.reverse();
        traces.swap(0, 2);
        let b = summarize(&traces).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let t = ppa_like_trace();
        let s = t.to_csv_string().unwrap();
        assert!(s.starts_with("n,delta,theta,lambda,d_norm,tstar_norm,dist_to_ref,residual,active_blocks\n"));
        let rows = read_csv(s.as_bytes()).unwrap();
        assert_eq!(rows, t.rows);
    }

    #[test]
    fn stats_quantiles_are_ordered() {
        let s = Stats::from_values(&[3.0, 1.0, 2.0, 10.0]);
        assert!(s.q10 <= s.median && s.median <= s.q90);
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.median, 2.5);
    }
}
