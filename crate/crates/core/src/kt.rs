//! Randomized block-iterative Kuhn–Tucker projective splitting.
//!
//! Solves `0 ∈ Aᵢxᵢ + Σₖ L*ₖᵢ Bₖ(Σⱼ Lₖⱼxⱼ)` jointly with its dual by
//! projecting onto half-spaces built from points of the graphs of `Aᵢ` and
//! `Bₖ`. A pair `(x, v*)` is a Kuhn–Tucker point when
//! `−Σₖ L*ₖᵢv*ₖ ∈ Aᵢxᵢ` and `v*ₖ ∈ Bₖ(Σᵢ Lₖᵢxᵢ)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{format_active, Trace};
use crate::engine::{step_size_sq, GraphSample, RunOptions, StepRecord};
use crate::error::{Error, Result};
use crate::operators::MaxMonotoneOp;
use crate::saddle::{BlockSamplers, Couplings, StepRule};
use crate::sampling::{LastActivation, RelaxationSampler, TrajectoryRng};
use crate::spaces::{add_scaled, dist_sq, dot, norm_sq, SpaceLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTProblem {
    pub h: Arc<SpaceLayout>,
    pub g: Arc<SpaceLayout>,
    pub a: Vec<MaxMonotoneOp>,
    pub b: Vec<MaxMonotoneOp>,
    pub links: Couplings,
}

impl KTProblem {
    pub fn new(h: SpaceLayout, g: SpaceLayout, a: Vec<MaxMonotoneOp>, b: Vec<MaxMonotoneOp>, links: Couplings) -> Result<Self> {
        if a.len() != h.num_blocks() {
            return Err(Error::dim("primal operators", h.num_blocks(), a.len()));
        }
        if b.len() != g.num_blocks() {
            return Err(Error::dim("dual operators", g.num_blocks(), b.len()));
        }
        for (i, op) in a.iter().enumerate() {
            op.validate(Some(h.block_dim(i))).map_err(|e| Error::param(format!("a[{i}]"), e.to_string()))?;
        }
        for (k, op) in b.iter().enumerate() {
            op.validate(Some(g.block_dim(k))).map_err(|e| Error::param(format!("b[{k}]"), e.to_string()))?;
        }
        links.validate(&h, &g)?;
        Ok(KTProblem {
            h: Arc::new(h),
            g: Arc::new(g),
            a,
            b,
            links,
        })
    }

    pub fn validated(self) -> Result<Self> {
        KTProblem::new((*self.h).clone(), (*self.g).clone(), self.a, self.b, self.links)
    }

    pub fn num_primal(&self) -> usize {
        self.a.len()
    }

    pub fn num_dual(&self) -> usize {
        self.b.len()
    }

    pub fn state_dim(&self) -> usize {
        self.h.total_dim() + self.g.total_dim()
    }

    /// A copy whose Kuhn–Tucker set contains `(x, v*)`: `Aᵢ` is shifted by
    /// `aᵢ + Σₖ L*ₖᵢv*ₖ` and `Bₖ` by `bₖ − v*ₖ`, where `aᵢ ∈ Aᵢxᵢ` and
    /// `bₖ ∈ Bₖ(Lx)ₖ` are minimal-norm elements.
    pub fn with_kt_point(&self, x: &[f64], vstar: &[f64]) -> Result<KTProblem> {
        self.check_point(x, vstar)?;
        let (h, g) = (&*self.h, &*self.g);
        let mut out = self.clone();
        for (i, op) in out.a.iter_mut().enumerate() {
            let xi = &x[h.block_range(i)];
            let mut u = op
                .min_norm_element(xi)
                .ok_or_else(|| Error::param(format!("a[{i}]"), "point outside the operator domain"))?;
            self.links.adjoint_add(i, vstar, g, &mut u);
            *op = op.clone().shifted(u);
        }
        let lx = self.links.forward(x, h, g);
        for (k, op) in out.b.iter_mut().enumerate() {
            let r = g.block_range(k);
            let mut u = op
                .min_norm_element(&lx[r.clone()])
                .ok_or_else(|| Error::param(format!("b[{k}]"), "point outside the operator domain"))?;
            add_scaled(&mut u, -1.0, &vstar[r]);
            *op = op.clone().shifted(u);
        }
        Ok(out)
    }

    fn check_point(&self, x: &[f64], vstar: &[f64]) -> Result<()> {
        if x.len() != self.h.total_dim() {
            return Err(Error::dim("x", self.h.total_dim(), x.len()));
        }
        if vstar.len() != self.g.total_dim() {
            return Err(Error::dim("vstar", self.g.total_dim(), vstar.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTStepSizes {
    pub epsilon: f64,
    pub gamma: Vec<StepRule>,
    pub mu: Vec<StepRule>,
}

impl KTStepSizes {
    pub fn uniform(p: &KTProblem, epsilon: f64, gamma: f64, mu: f64) -> Self {
        KTStepSizes {
            epsilon,
            gamma: vec![StepRule::Constant(gamma); p.num_primal()],
            mu: vec![StepRule::Constant(mu); p.num_dual()],
        }
    }

    /// Every violated interval constraint; empty when admissible.
    pub fn violations(&self, p: &KTProblem) -> Vec<String> {
        let mut v = Vec::new();
        let eps = self.epsilon;
        if !(eps > 0.0 && eps <= 1.0) {
            v.push(format!("epsilon = {eps} must lie in (0, 1]"));
        }
        for (name, rules, count) in [("gamma", &self.gamma, p.num_primal()), ("mu", &self.mu, p.num_dual())] {
            if rules.len() != count {
                v.push(format!("{name}: expected {count} rules, found {}", rules.len()));
                continue;
            }
            for (j, r) in rules.iter().enumerate() {
                if !(r.min() >= eps && r.max() <= 1.0 / eps) {
                    v.push(format!("{name}[{j}]: values in [{}, {}] must lie in [{eps}, {}]", r.min(), r.max(), 1.0 / eps));
                }
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KTState {
    pub n: usize,
    pub x: Vec<f64>,
    pub vstar: Vec<f64>,
    pub a: Vec<f64>,
    pub astar: Vec<f64>,
    pub b: Vec<f64>,
    pub bstar: Vec<f64>,
    /// Recomputed every iteration for all blocks.
    pub tstar: Vec<f64>,
    pub t: Vec<f64>,
    pub last_primal: LastActivation,
    pub last_dual: LastActivation,
}

impl KTState {
    pub fn new(p: &KTProblem, x: &[f64], vstar: &[f64]) -> Result<Self> {
        p.check_point(x, vstar)?;
        let (nh, ng) = (p.h.total_dim(), p.g.total_dim());
        Ok(KTState {
            n: 0,
            x: x.to_vec(),
            vstar: vstar.to_vec(),
            a: vec![0.0; nh],
            astar: vec![0.0; nh],
            b: vec![0.0; ng],
            bstar: vec![0.0; ng],
            tstar: vec![0.0; nh],
            t: vec![0.0; ng],
            last_primal: LastActivation::new(p.num_primal()),
            last_dual: LastActivation::new(p.num_dual()),
        })
    }

    pub fn flat(&self) -> Vec<f64> {
        [&self.x[..], &self.vstar].concat()
    }

    /// The iteration as an engine sample on `H ⊕ G` with `C = 0`:
    /// `w = (a, b*)`, `w* = (t*, t)`.
    pub fn engine_view(&self) -> GraphSample {
        let w = [&self.a[..], &self.bstar].concat();
        let wstar = [&self.tstar[..], &self.t].concat();
        let zeros = vec![0.0; w.len()];
        GraphSample::exact(w.clone(), wstar, w, zeros)
    }
}

/// One iteration. The first call must activate every block.
#[allow(clippy::too_many_arguments)]
pub fn kt_iterate(
    p: &KTProblem,
    s: &KTStepSizes,
    st: &mut KTState,
    active_i: &[usize],
    active_k: &[usize],
    lambda: f64,
    zero_tol: f64,
) -> Result<StepRecord> {
    let n = st.n;
    let (h, g) = (&*p.h, &*p.g);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("{lambda} must be positive")));
    }
    st.last_primal.update(n, active_i)?;
    st.last_dual.update(n, active_k)?;

    for &i in active_i {
        let r = h.block_range(i);
        let gamma = s.gamma[i].at(n);
        let xi = &st.x[r.clone()];
        let mut lstar = vec![0.0; xi.len()];
        p.links.adjoint_add(i, &st.vstar, g, &mut lstar);
        let arg: Vec<f64> = xi.iter().zip(&lstar).map(|(x, l)| x - gamma * l).collect();
        let a = p.a[i].resolvent(gamma, &arg)?;
        let astar: Vec<f64> = (0..a.len()).map(|j| (xi[j] - a[j]) / gamma - lstar[j]).collect();
        if astar.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: n, what: format!("primal block {i}") });
        }
        st.a[r.clone()].copy_from_slice(&a);
        st.astar[r].copy_from_slice(&astar);
    }
    for &k in active_k {
        let r = g.block_range(k);
        let mu = s.mu[k].at(n);
        let v = &st.vstar[r.clone()];
        let mut l = vec![0.0; r.len()];
        p.links.forward_add(k, &st.x, h, &mut l);
        let arg: Vec<f64> = l.iter().zip(v).map(|(l, v)| l + mu * v).collect();
        let b = p.b[k].resolvent(mu, &arg)?;
        let bstar: Vec<f64> = (0..b.len()).map(|j| v[j] + (l[j] - b[j]) / mu).collect();
        if bstar.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: n, what: format!("dual block {k}") });
        }
        st.b[r.clone()].copy_from_slice(&b);
        st.bstar[r].copy_from_slice(&bstar);
    }

    for i in 0..p.num_primal() {
        let r = h.block_range(i);
        let mut ts = st.astar[r.clone()].to_vec();
        p.links.adjoint_add(i, &st.bstar, g, &mut ts);
        st.tstar[r].copy_from_slice(&ts);
    }
    for k in 0..p.num_dual() {
        let r = g.block_range(k);
        let mut la = vec![0.0; r.len()];
        p.links.forward_add(k, &st.a, h, &mut la);
        for (j, idx) in r.enumerate() {
            st.t[idx] = st.b[idx] - la[j];
        }
    }

    // Equal to Σ(⟨x|t*⟩ − ⟨a|a*⟩) + Σ(⟨t|v*⟩ − ⟨b|b*⟩), without the cancellation.
    let dx: Vec<f64> = st.x.iter().zip(&st.a).map(|(x, a)| x - a).collect();
    let dv: Vec<f64> = st.vstar.iter().zip(&st.bstar).map(|(v, b)| v - b).collect();
    let delta = dot(&dx, &st.tstar) + dot(&dv, &st.t);
    let denom = norm_sq(&st.tstar) + norm_sq(&st.t);
    if !delta.is_finite() || !denom.is_finite() {
        return Err(Error::NonFinite { iteration: n, what: "delta".into() });
    }
    let scale = (norm_sq(&st.x) + norm_sq(&st.vstar)).max(1.0);
    let theta = step_size_sq(delta, denom, zero_tol * scale);
    let step = lambda * theta;
    if step != 0.0 {
        add_scaled(&mut st.x, -step, &st.tstar);
        add_scaled(&mut st.vstar, -step, &st.t);
    }
    st.n += 1;
    Ok(StepRecord {
        n,
        delta,
        theta,
        lambda,
        dnorm: theta * denom.sqrt(),
        tstar_norm: denom.sqrt(),
    })
}

/// Norm of `‖xᵢ − J_{Aᵢ}(xᵢ − Σₖ L*ₖᵢv*ₖ)‖` over `i` and
/// `‖J_{Bₖ}(v*ₖ + (Lx)ₖ) − (Lx)ₖ‖` over `k`.
pub fn kt_residual(p: &KTProblem, x: &[f64], vstar: &[f64]) -> Result<f64> {
    p.check_point(x, vstar)?;
    let (h, g) = (&*p.h, &*p.g);
    let mut total = 0.0;
    for (i, op) in p.a.iter().enumerate() {
        let xi = &x[h.block_range(i)];
        let mut arg = xi.to_vec();
        let mut ls = vec![0.0; xi.len()];
        p.links.adjoint_add(i, vstar, g, &mut ls);
        add_scaled(&mut arg, -1.0, &ls);
        total += dist_sq(xi, &op.resolvent(1.0, &arg)?);
    }
    let lx = p.links.forward(x, h, g);
    for (k, op) in p.b.iter().enumerate() {
        let r = g.block_range(k);
        let l = &lx[r.clone()];
        let arg: Vec<f64> = l.iter().zip(&vstar[r]).map(|(a, b)| a + b).collect();
        total += dist_sq(&op.resolvent(1.0, &arg)?, l);
    }
    Ok(total.sqrt())
}

pub struct KTRun {
    pub state: KTState,
    pub trace: Trace,
    pub cache_violations: usize,
}

pub fn run_kt(
    p: &KTProblem,
    s: &KTStepSizes,
    samplers: &BlockSamplers,
    relax: &RelaxationSampler,
    x0: &[f64],
    v0: &[f64],
    opts: &RunOptions,
) -> Result<KTRun> {
    run_kt_with(p, s, samplers, relax, x0, v0, opts, &mut |_, _| {})
}

#[allow(clippy::too_many_arguments)]
pub fn run_kt_with(
    p: &KTProblem,
    s: &KTStepSizes,
    samplers: &BlockSamplers,
    relax: &RelaxationSampler,
    x0: &[f64],
    v0: &[f64],
    opts: &RunOptions,
    observer: &mut dyn FnMut(&KTState, &StepRecord),
) -> Result<KTRun> {
    let violations = s.violations(p);
    if !violations.is_empty() {
        return Err(Error::param("step_sizes", violations.join("; ")));
    }
    if samplers.primal.count != p.num_primal() || samplers.dual.count != p.num_dual() {
        return Err(Error::param("samplers", "sampler index counts do not match the problem"));
    }
    relax.validate(opts.rho)?;
    let reference = opts.reference.as_deref();
    if let Some(z) = reference {
        if z.len() != p.state_dim() {
            return Err(Error::dim("reference point", p.state_dim(), z.len()));
        }
    }
    let mut st = KTState::new(p, x0, v0)?;
    let mut rng = TrajectoryRng::new(opts.seed);
    let mut trace = Trace::new("", opts.seed);
    let mut cache_violations = 0;
    let (h, g) = (&*p.h, &*p.g);
    for n in 0..opts.n_iter {
        let ai = samplers.primal.sample(n, &mut rng.blocks);
        let ak = samplers.dual.sample(n, &mut rng.blocks);
        let lambda = relax.sample(&mut rng.relax);
        let before = st.flat();
        let dist = reference.map(|z| dist_sq(&before, z).sqrt());
        let res = if opts.residual_every > 0 && n % opts.residual_every == 0 {
            Some(kt_residual(p, &st.x, &st.vstar)?)
        } else {
            None
        };
        let prev = opts.audit.then(|| st.clone());
        let rec = kt_iterate(p, s, &mut st, &ai, &ak, lambda, opts.zero_tol)?;
        if let Some(prev) = prev.filter(|_| n > 0) {
            for i in (0..p.num_primal()).filter(|i| !ai.contains(i)) {
                let r = h.block_range(i);
                if st.a[r.clone()] != prev.a[r.clone()] || st.astar[r.clone()] != prev.astar[r] {
                    cache_violations += 1;
                }
            }
            for k in (0..p.num_dual()).filter(|k| !ak.contains(k)) {
                let r = g.block_range(k);
                if st.b[r.clone()] != prev.b[r.clone()] || st.bstar[r.clone()] != prev.bstar[r] {
                    cache_violations += 1;
                }
            }
        }
        trace.rows.push(rec.to_row(dist, res, format_active(&ai, &ak)));
        observer(&st, &rec);
    }
    let fin = st.flat();
    trace.final_dist = reference.map(|z| dist_sq(&fin, z).sqrt());
    trace.final_residual = Some(kt_residual(p, &st.x, &st.vstar)?);
    trace.final_state = fin;
    Ok(KTRun {
        state: st,
        trace,
        cache_violations,
    })
}
