//! The relaxed half-space projection template.
//!
//! Each iteration receives a graph sample `(w, w*, e, e*, q, c*, f*)` with
//! `(w+e, w*+e*) ∈ gra W` and `c* + f* = C q`, forms `t* = w* + c*` and
//!
//! ```text
//! Δ = ⟨x − w | t*⟩ − ‖w − q‖² / (4α)
//! θ = Δ / ‖t*‖²   if Δ > 0 and t* ≠ 0, else 0
//! x⁺ = x − λ θ t*
//! ```

use crate::diagnostics::{format_active, Trace, TraceRow};
use crate::error::{Error, Result};
use crate::sampling::{RelaxationSampler, StreamRng, TrajectoryRng};
use crate::spaces::{dist_sq, dot, norm_sq};

/// One iteration's input. Error fields are zero for exact suppliers.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub w: Vec<f64>,
    pub wstar: Vec<f64>,
    pub e: Vec<f64>,
    pub estar: Vec<f64>,
    pub q: Vec<f64>,
    pub cstar: Vec<f64>,
    pub fstar: Vec<f64>,
}

impl GraphSample {
    /// Error-free sample with `c* = C q`.
    pub fn exact(w: Vec<f64>, wstar: Vec<f64>, q: Vec<f64>, cstar: Vec<f64>) -> Self {
        let zeros = vec![0.0; w.len()];
        GraphSample {
            w,
            wstar,
            e: zeros.clone(),
            estar: zeros.clone(),
            q,
            cstar,
            fstar: zeros,
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `t* = w* + c*`.
    pub fn tstar(&self) -> Vec<f64> {
        self.wstar.iter().zip(&self.cstar).map(|(a, b)| a + b).collect()
    }

    fn check(&self, dim: usize) -> Result<()> {
        for (name, v) in [
            ("w", &self.w),
            ("wstar", &self.wstar),
            ("e", &self.e),
            ("estar", &self.estar),
            ("q", &self.q),
            ("cstar", &self.cstar),
            ("fstar", &self.fstar),
        ] {
            if v.len() != dim {
                return Err(Error::dim(format!("graph sample field {name}"), dim, v.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Cocoercivity constant of `C`; `+∞` when `C = 0`.
    pub alpha: f64,
    /// Upper bound on the relaxation, at least 2.
    pub rho: f64,
    /// `t*` counts as zero when `‖t*‖² ≤ zero_tol · max(1, ‖x‖²)`.
    pub zero_tol: f64,
}

pub const DEFAULT_ZERO_TOL: f64 = 1e-24;

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            alpha: f64::INFINITY,
            rho: 2.0,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::param("alpha", "must be positive (or +inf)"));
        }
        if !(self.rho >= 2.0) || !self.rho.is_finite() {
            return Err(Error::param("rho", "must be finite and at least 2"));
        }
        if !(self.zero_tol >= 0.0) {
            return Err(Error::param("zero_tol", "must be nonnegative"));
        }
        Ok(())
    }

    /// Absolute threshold on `‖t*‖²` at iterate `x`.
    pub fn threshold(&self, x: &[f64]) -> f64 {
        self.zero_tol * norm_sq(x).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub n: usize,
    pub delta: f64,
    pub theta: f64,
    pub lambda: f64,
    pub dnorm: f64,
    pub tstar_norm: f64,
}

impl StepRecord {
    pub fn to_row(&self, dist_to_ref: Option<f64>, residual: Option<f64>, active: String) -> TraceRow {
        TraceRow {
            n: self.n,
            delta: self.delta,
            theta: self.theta,
            lambda: self.lambda,
            d_norm: self.dnorm,
            tstar_norm: self.tstar_norm,
            dist_to_ref,
            residual,
            active_blocks: active,
        }
    }
}

/// Settings shared by the block-iterative runners.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub n_iter: usize,
    pub seed: u64,
    /// Evaluate the problem residual every this many iterations; 0 disables.
    pub residual_every: usize,
    /// Flat reference point for `dist_to_ref`.
    pub reference: Option<Vec<f64>>,
    pub zero_tol: f64,
    pub rho: f64,
    /// Check cache bookkeeping every iteration.
    pub audit: bool,
}

impl RunOptions {
    pub fn new(n_iter: usize, seed: u64) -> Self {
        RunOptions {
            n_iter,
            seed,
            residual_every: 0,
            reference: None,
            zero_tol: DEFAULT_ZERO_TOL,
            rho: 2.0,
            audit: false,
        }
    }

    pub fn with_reference(mut self, z: Vec<f64>) -> Self {
        self.reference = Some(z);
        self
    }
}

/// `(4α)⁻¹`, zero for `α = +∞`.
pub fn quarter_inv(alpha: f64) -> f64 {
    0.25 / alpha
}

/// `Δ = ⟨x − w | w* + c*⟩ − (4α)⁻¹‖w − q‖²`.
pub fn gap(x: &[f64], s: &GraphSample, alpha: f64) -> Result<f64> {
    s.check(x.len())?;
    let inner: f64 = x
        .iter()
        .zip(&s.w)
        .zip(s.wstar.iter().zip(&s.cstar))
        .map(|((xi, wi), (ws, cs))| (xi - wi) * (ws + cs))
        .sum();
    let pen = if alpha.is_infinite() { 0.0 } else { quarter_inv(alpha) * dist_sq(&s.w, &s.q) };
    Ok(inner - pen)
}

/// `θ = Δ/‖t*‖²` when `Δ > 0` and `‖t*‖² > zero_tol`, else 0. `zero_tol` is
/// an absolute threshold on `‖t*‖²`.
pub fn step_size(delta: f64, tstar: &[f64], zero_tol: f64) -> f64 {
    step_size_sq(delta, norm_sq(tstar), zero_tol)
}

pub(crate) fn step_size_sq(delta: f64, tstar_sq: f64, zero_tol: f64) -> f64 {
    if delta > 0.0 && tstar_sq > zero_tol {
        delta / tstar_sq
    } else {
        0.0
    }
}

/// `x − λθt*` for `λ ∈ (0, ρ]`.
pub fn relaxed_update(x: &[f64], theta: f64, tstar: &[f64], lambda: f64, rho: f64) -> Result<Vec<f64>> {
    check_lambda(lambda, rho)?;
    if x.len() != tstar.len() {
        return Err(Error::dim("relaxed_update", x.len(), tstar.len()));
    }
    let s = lambda * theta;
    Ok(x.iter().zip(tstar).map(|(a, b)| a - s * b).collect())
}

pub(crate) fn check_lambda(lambda: f64, rho: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= rho {
        Ok(())
    } else {
        Err(Error::param("lambda", format!("{lambda} is outside (0, {rho}]")))
    }
}

/// `max{0, θ⟨w − z | e* + f*⟩ + ⟨e | w* + Cz⟩ + ⟨e | e*⟩}`.
pub fn realized_error_term(s: &GraphSample, theta: f64, z: &[f64], cz: &[f64]) -> f64 {
    let mut a = 0.0;
    let mut b = 0.0;
    for j in 0..s.w.len() {
        a += (s.w[j] - z[j]) * (s.estar[j] + s.fstar[j]);
        b += s.e[j] * (s.wstar[j] + cz[j] + s.estar[j]);
    }
    (theta * a + b).max(0.0)
}

/// Source of graph samples. Receives the iteration index, the current
/// iterate and the trajectory's noise stream.
pub trait Supplier {
    fn sample(&mut self, n: usize, x: &[f64], rng: &mut StreamRng) -> Result<GraphSample>;
}

impl<F> Supplier for F
where
    F: FnMut(usize, &[f64], &mut StreamRng) -> Result<GraphSample>,
{
    fn sample(&mut self, n: usize, x: &[f64], rng: &mut StreamRng) -> Result<GraphSample> {
        self(n, x, rng)
    }
}

/// One iteration, in place. Returns the record and `t*`.
pub fn engine_step(
    x: &mut [f64],
    s: &GraphSample,
    lambda: f64,
    cfg: &EngineConfig,
    n: usize,
) -> Result<(StepRecord, Vec<f64>)> {
    check_lambda(lambda, cfg.rho)?;
    let delta = gap(x, s, cfg.alpha)?;
    let tstar = s.tstar();
    let tsq = norm_sq(&tstar);
    if !delta.is_finite() {
        return Err(Error::NonFinite { iteration: n, what: "delta".into() });
    }
    if !tsq.is_finite() {
        return Err(Error::NonFinite { iteration: n, what: "tstar".into() });
    }
    let theta = step_size_sq(delta, tsq, cfg.threshold(x));
    let step = lambda * theta;
    for (xi, ti) in x.iter_mut().zip(&tstar) {
        *xi -= step * ti;
    }
    let rec = StepRecord {
        n,
        delta,
        theta,
        lambda,
        dnorm: theta * tsq.sqrt(),
        tstar_norm: tsq.sqrt(),
    };
    Ok((rec, tstar))
}

/// What an observer sees after each iteration.
pub struct EngineEvent<'a> {
    pub n: usize,
    pub before: &'a [f64],
    pub after: &'a [f64],
    pub sample: &'a GraphSample,
    pub record: &'a StepRecord,
}

/// Runs `n_iter` iterations from `x0`. λ is drawn from the relaxation
/// stream, supplier noise from the noise stream.
pub fn run(
    x0: &[f64],
    supplier: &mut dyn Supplier,
    relax: &RelaxationSampler,
    cfg: &EngineConfig,
    n_iter: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<StepRecord>)> {
    run_with(x0, supplier, relax, cfg, n_iter, seed, &mut |_| {})
}

pub fn run_with(
    x0: &[f64],
    supplier: &mut dyn Supplier,
    relax: &RelaxationSampler,
    cfg: &EngineConfig,
    n_iter: usize,
    seed: u64,
    observer: &mut dyn FnMut(&EngineEvent<'_>),
) -> Result<(Vec<f64>, Vec<StepRecord>)> {
    cfg.validate()?;
    relax.validate(cfg.rho)?;
    let mut rng = TrajectoryRng::new(seed);
    let mut x = x0.to_vec();
    let mut records = Vec::with_capacity(n_iter);
    for n in 0..n_iter {
        let s = supplier.sample(n, &x, &mut rng.noise)?;
        let lambda = relax.sample(&mut rng.relax);
        let before = x.clone();
        let (rec, _) = engine_step(&mut x, &s, lambda, cfg, n)?;
        observer(&EngineEvent {
            n,
            before: &before,
            after: &x,
            sample: &s,
            record: &rec,
        });
        records.push(rec);
    }
    Ok((x, records))
}

/// Runs the engine and packages the result as a [`Trace`] with distances to
/// `reference`.
pub fn run_traced(
    x0: &[f64],
    supplier: &mut dyn Supplier,
    relax: &RelaxationSampler,
    cfg: &EngineConfig,
    n_iter: usize,
    seed: u64,
    reference: Option<&[f64]>,
) -> Result<Trace> {
    let mut trace = Trace::new("", seed);
    let dist = |x: &[f64]| reference.map(|z| dist_sq(x, z).sqrt());
    let (x, _) = run_with(x0, supplier, relax, cfg, n_iter, seed, &mut |ev| {
        trace.rows.push(ev.record.to_row(dist(ev.before), None, format_active(&[0], &[])));
    })?;
    trace.final_dist = dist(&x);
    trace.final_state = x;
    Ok(trace)
}

/// `⟨w | t*⟩ + (4α)⁻¹‖w − q‖² − ⟨z | t*⟩`, nonnegative when `z` is a zero of
/// `W + C` and the sample is exact.
pub fn half_space_margin(s: &GraphSample, z: &[f64], alpha: f64) -> f64 {
    let t = s.tstar();
    let pen = if alpha.is_infinite() { 0.0 } else { quarter_inv(alpha) * dist_sq(&s.w, &s.q) };
    dot(&s.w, &t) + pen - dot(z, &t)
}
