//! Randomized block-iterative saddle projective splitting.
//!
//! Problem data per primal block `i`: `Aᵢ` (maximally monotone), `Cᵢ`
//! (cocoercive), `Qᵢ` (Lipschitz monotone), offset `s*ᵢ`; a Lipschitz
//! monotone coupling `R` on the whole primal space; per dual block `k`:
//! `Bₖᵐ, Bₖᶜ, Bₖˡ, Dₖᵐ, Dₖᶜ, Dₖˡ` and offset `rₖ`; linear links `Lₖᵢ`.
//! A point `(x, y, z, v*)` is a zero of the saddle operator when
//!
//! ```text
//! s*ᵢ ∈ Aᵢxᵢ + Cᵢxᵢ + Qᵢxᵢ + Rᵢx + Σₖ L*ₖᵢ v*ₖ
//! v*ₖ ∈ (Bₖᵐ + Bₖᶜ + Bₖˡ) yₖ,   v*ₖ ∈ (Dₖᵐ + Dₖᶜ + Dₖˡ) zₖ
//! rₖ + yₖ + zₖ = Σᵢ Lₖᵢ xᵢ
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{format_active, Trace};
use crate::engine::{quarter_inv, step_size_sq, GraphSample, RunOptions, StepRecord};
use crate::error::{Error, Result};
use crate::operators::{CocoerciveOp, LinearMap, LipschitzMonotoneOp, MaxMonotoneOp, SingleValuedMap};
use crate::sampling::{BlockSampler, LastActivation, RelaxationSampler, TrajectoryRng};
use crate::spaces::{add_scaled, dist_sq, dot, norm_sq, SpaceLayout};

/// One nonzero link `L_{ki}: H_i → G_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub k: usize,
    pub i: usize,
    pub matrix: LinearMap,
}

/// Sparse table of links; absent pairs are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Couplings {
    pub links: Vec<Link>,
}

impl Couplings {
    pub fn new() -> Self {
        Couplings::default()
    }

    pub fn with(mut self, k: usize, i: usize, matrix: LinearMap) -> Self {
        self.links.push(Link { k, i, matrix });
        self
    }

    /// `Lₖᵢ = Id` for every pair of blocks of equal dimension.
    pub fn identity_all(h: &SpaceLayout, g: &SpaceLayout) -> Self {
        let mut c = Couplings::new();
        for k in 0..g.num_blocks() {
            for i in 0..h.num_blocks() {
                if g.block_dim(k) == h.block_dim(i) {
                    c = c.with(k, i, LinearMap::identity(h.block_dim(i)));
                }
            }
        }
        c
    }

    pub fn validate(&self, h: &SpaceLayout, g: &SpaceLayout) -> Result<()> {
        for (j, l) in self.links.iter().enumerate() {
            if l.i >= h.num_blocks() || l.k >= g.num_blocks() {
                return Err(Error::param(
                    format!("links[{j}]"),
                    format!("pair (k={}, i={}) is out of range", l.k, l.i),
                ));
            }
            if l.matrix.rows() != g.block_dim(l.k) || l.matrix.cols() != h.block_dim(l.i) {
                return Err(Error::param(
                    format!("links[{j}]"),
                    format!(
                        "matrix is {}x{}, expected {}x{}",
                        l.matrix.rows(),
                        l.matrix.cols(),
                        g.block_dim(l.k),
                        h.block_dim(l.i)
                    ),
                ));
            }
        }
        Ok(())
    }

    /// `out += Σᵢ Lₖᵢ xᵢ`, with `x` a flat primal vector.
    pub fn forward_add(&self, k: usize, x: &[f64], h: &SpaceLayout, out: &mut [f64]) {
        for l in self.links.iter().filter(|l| l.k == k) {
            l.matrix.apply_add(&x[h.block_range(l.i)], out);
        }
    }

    /// `out += Σₖ L*ₖᵢ vₖ`, with `v` a flat dual vector.
    pub fn adjoint_add(&self, i: usize, v: &[f64], g: &SpaceLayout, out: &mut [f64]) {
        for l in self.links.iter().filter(|l| l.i == i) {
            l.matrix.adjoint_apply_add(&v[g.block_range(l.k)], out);
        }
    }

    /// Full `Lx` on the dual layout.
    pub fn forward(&self, x: &[f64], h: &SpaceLayout, g: &SpaceLayout) -> Vec<f64> {
        let mut out = vec![0.0; g.total_dim()];
        for k in 0..g.num_blocks() {
            let r = g.block_range(k);
            self.forward_add(k, x, h, &mut out[r]);
        }
        out
    }

    /// Full `L*v` on the primal layout.
    pub fn adjoint(&self, v: &[f64], h: &SpaceLayout, g: &SpaceLayout) -> Vec<f64> {
        let mut out = vec![0.0; h.total_dim()];
        for i in 0..h.num_blocks() {
            let r = h.block_range(i);
            self.adjoint_add(i, v, g, &mut out[r]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrimalBlock {
    #[serde(default)]
    pub a: MaxMonotoneOp,
    #[serde(default)]
    pub c: CocoerciveOp,
    #[serde(default)]
    pub q: LipschitzMonotoneOp,
    /// Empty means zero.
    #[serde(default)]
    pub s_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DualBlock {
    #[serde(default)]
    pub b_m: MaxMonotoneOp,
    #[serde(default)]
    pub b_c: CocoerciveOp,
    #[serde(default)]
    pub b_l: LipschitzMonotoneOp,
    #[serde(default)]
    pub d_m: MaxMonotoneOp,
    #[serde(default)]
    pub d_c: CocoerciveOp,
    #[serde(default)]
    pub d_l: LipschitzMonotoneOp,
    /// Empty means zero.
    #[serde(default)]
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleProblem {
    pub h: Arc<SpaceLayout>,
    pub g: Arc<SpaceLayout>,
    pub primal: Vec<PrimalBlock>,
    pub dual: Vec<DualBlock>,
    /// `R` on the whole primal space; its Lipschitz constant is `χ`.
    #[serde(default)]
    pub coupling: LipschitzMonotoneOp,
    #[serde(default)]
    pub links: Couplings,
}

fn check_vec_dim(name: String, expected: usize, v: &mut Vec<f64>) -> Result<()> {
    if v.is_empty() {
        *v = vec![0.0; expected];
    }
    if v.len() != expected {
        return Err(Error::dim(name, expected, v.len()));
    }
    Ok(())
}

fn validate_coco(name: &str, c: &CocoerciveOp, dim: usize) -> Result<()> {
    c.map.validate(Some(dim)).map_err(|e| Error::param(name, e.to_string()))?;
    if !(c.alpha > 0.0) {
        return Err(Error::param(name, "cocoercivity constant must be positive"));
    }
    Ok(())
}

fn validate_lip(name: &str, l: &LipschitzMonotoneOp, dim: usize) -> Result<()> {
    l.map.validate(Some(dim)).map_err(|e| Error::param(name, e.to_string()))?;
    if !(l.lip >= 0.0 && l.lip.is_finite()) {
        return Err(Error::param(name, "Lipschitz constant must be finite and nonnegative"));
    }
    Ok(())
}

fn validate_mm(name: &str, a: &MaxMonotoneOp, dim: usize) -> Result<()> {
    a.validate(Some(dim)).map_err(|e| Error::param(name, e.to_string()))
}

impl SaddleProblem {
    /// Validates dimensions and constants; empty offsets become zeros.
    pub fn new(
        h: SpaceLayout,
        g: SpaceLayout,
        mut primal: Vec<PrimalBlock>,
        mut dual: Vec<DualBlock>,
        coupling: LipschitzMonotoneOp,
        links: Couplings,
    ) -> Result<Self> {
        if primal.len() != h.num_blocks() {
            return Err(Error::dim("primal blocks", h.num_blocks(), primal.len()));
        }
        if dual.len() != g.num_blocks() {
            return Err(Error::dim("dual blocks", g.num_blocks(), dual.len()));
        }
        for (i, b) in primal.iter_mut().enumerate() {
            let d = h.block_dim(i);
            validate_mm(&format!("primal[{i}].a"), &b.a, d)?;
            validate_coco(&format!("primal[{i}].c"), &b.c, d)?;
            validate_lip(&format!("primal[{i}].q"), &b.q, d)?;
            check_vec_dim(format!("primal[{i}].s_star"), d, &mut b.s_star)?;
        }
        for (k, b) in dual.iter_mut().enumerate() {
            let d = g.block_dim(k);
            validate_mm(&format!("dual[{k}].b_m"), &b.b_m, d)?;
            validate_coco(&format!("dual[{k}].b_c"), &b.b_c, d)?;
            validate_lip(&format!("dual[{k}].b_l"), &b.b_l, d)?;
            validate_mm(&format!("dual[{k}].d_m"), &b.d_m, d)?;
            validate_coco(&format!("dual[{k}].d_c"), &b.d_c, d)?;
            validate_lip(&format!("dual[{k}].d_l"), &b.d_l, d)?;
            check_vec_dim(format!("dual[{k}].r"), d, &mut b.r)?;
        }
        validate_lip("coupling", &coupling, h.total_dim())?;
        links.validate(&h, &g)?;
        Ok(SaddleProblem {
            h: Arc::new(h),
            g: Arc::new(g),
            primal,
            dual,
            coupling,
            links,
        })
    }

    /// Re-runs the constructor checks, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        SaddleProblem::new(
            (*self.h).clone(),
            (*self.g).clone(),
            self.primal,
            self.dual,
            self.coupling,
            self.links,
        )
    }

    pub fn num_primal(&self) -> usize {
        self.primal.len()
    }

    pub fn num_dual(&self) -> usize {
        self.dual.len()
    }

    /// Dimension of the product space `H ⊕ G ⊕ G ⊕ G`.
    pub fn state_dim(&self) -> usize {
        self.h.total_dim() + 3 * self.g.total_dim()
    }

    /// Smallest cocoercivity constant over the cocoercive parts. Zero
    /// operators carry `+∞` and never decide the minimum.
    pub fn alpha(&self) -> f64 {
        let mut a = f64::INFINITY;
        for b in &self.primal {
            a = a.min(b.c.alpha);
        }
        for b in &self.dual {
            a = a.min(b.b_c.alpha).min(b.d_c.alpha);
        }
        a
    }

    pub fn chi(&self) -> f64 {
        self.coupling.lip
    }

    /// Names of operators given as opaque callables, whose declared
    /// constants are not verified.
    pub fn unchecked_operators(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut note = |name: String, m: &SingleValuedMap| {
            if !m.is_catalog() {
                out.push(name);
            }
        };
        for (i, b) in self.primal.iter().enumerate() {
            note(format!("primal[{i}].c"), &b.c.map);
            note(format!("primal[{i}].q"), &b.q.map);
        }
        for (k, b) in self.dual.iter().enumerate() {
            note(format!("dual[{k}].b_c"), &b.b_c.map);
            note(format!("dual[{k}].b_l"), &b.b_l.map);
            note(format!("dual[{k}].d_c"), &b.d_c.map);
            note(format!("dual[{k}].d_l"), &b.d_l.map);
        }
        note("coupling".into(), &self.coupling.map);
        out
    }

    fn coupling_value(&self, x: &[f64]) -> Option<Vec<f64>> {
        (!self.coupling.is_zero()).then(|| self.coupling.apply(x))
    }

    /// A copy of the problem whose saddle operator vanishes at `pt`: the
    /// offsets `s*` and `r` are back-solved and `Bᵐ`, `Dᵐ` are shifted.
    pub fn with_zero_at(&self, pt: &SaddlePoint) -> Result<SaddleProblem> {
        pt.check(self)?;
        let (h, g) = (&*self.h, &*self.g);
        let mut out = self.clone();
        let rx = self.coupling_value(&pt.x);
        for (i, b) in out.primal.iter_mut().enumerate() {
            let r = h.block_range(i);
            let xi = &pt.x[r.clone()];
            let mut s = b
                .a
                .min_norm_element(xi)
                .ok_or_else(|| Error::param(format!("primal[{i}].a"), "point outside the operator domain"))?;
            add_scaled(&mut s, 1.0, &b.c.apply(xi));
            add_scaled(&mut s, 1.0, &b.q.apply(xi));
            if let Some(rx) = &rx {
                add_scaled(&mut s, 1.0, &rx[r]);
            }
            self.links.adjoint_add(i, &pt.vstar, g, &mut s);
            b.s_star = s;
        }
        for (k, b) in out.dual.iter_mut().enumerate() {
            let r = g.block_range(k);
            let (y, z, v) = (&pt.y[r.clone()], &pt.z[r.clone()], &pt.vstar[r.clone()]);
            let shift = |m: &MaxMonotoneOp, c: &CocoerciveOp, l: &LipschitzMonotoneOp, p: &[f64], name: &str| {
                let mut u = m
                    .min_norm_element(p)
                    .ok_or_else(|| Error::param(format!("dual[{k}].{name}"), "point outside the operator domain"))?;
                add_scaled(&mut u, 1.0, &c.apply(p));
                add_scaled(&mut u, 1.0, &l.apply(p));
                add_scaled(&mut u, -1.0, v);
                Ok::<_, Error>(u)
            };
            let ub = shift(&b.b_m, &b.b_c, &b.b_l, y, "b_m")?;
            let ud = shift(&b.d_m, &b.d_c, &b.d_l, z, "d_m")?;
            b.b_m = b.b_m.clone().shifted(ub);
            b.d_m = b.d_m.clone().shifted(ud);
            let mut rk = vec![0.0; g.block_dim(k)];
            self.links.forward_add(k, &pt.x, h, &mut rk);
            add_scaled(&mut rk, -1.0, y);
            add_scaled(&mut rk, -1.0, z);
            b.r = rk;
        }
        Ok(out)
    }
}

/// A point `(x, y, z, v*)` of `H ⊕ G ⊕ G ⊕ G`, each part flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub vstar: Vec<f64>,
}

impl SaddlePoint {
    pub fn zeros(p: &SaddleProblem) -> Self {
        let (nh, ng) = (p.h.total_dim(), p.g.total_dim());
        SaddlePoint {
            x: vec![0.0; nh],
            y: vec![0.0; ng],
            z: vec![0.0; ng],
            vstar: vec![0.0; ng],
        }
    }

    pub fn check(&self, p: &SaddleProblem) -> Result<()> {
        let (nh, ng) = (p.h.total_dim(), p.g.total_dim());
        for (name, v, d) in [("x", &self.x, nh), ("y", &self.y, ng), ("z", &self.z, ng), ("vstar", &self.vstar, ng)] {
            if v.len() != d {
                return Err(Error::dim(format!("saddle point {name}"), d, v.len()));
            }
        }
        Ok(())
    }

    /// Concatenation `(x, y, z, v*)`.
    pub fn flat(&self) -> Vec<f64> {
        [&self.x[..], &self.y, &self.z, &self.vstar].concat()
    }

    pub fn from_flat(p: &SaddleProblem, v: &[f64]) -> Result<Self> {
        let (nh, ng) = (p.h.total_dim(), p.g.total_dim());
        if v.len() != nh + 3 * ng {
            return Err(Error::dim("flat saddle point", nh + 3 * ng, v.len()));
        }
        Ok(SaddlePoint {
            x: v[..nh].to_vec(),
            y: v[nh..nh + ng].to_vec(),
            z: v[nh + ng..nh + 2 * ng].to_vec(),
            vstar: v[nh + 2 * ng..].to_vec(),
        })
    }
}

/// Step-size rule: a constant, or a list cycled through by iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepRule {
    Constant(f64),
    Cyclic(Vec<f64>),
}

impl StepRule {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            StepRule::Constant(v) => *v,
            StepRule::Cyclic(vs) => vs[n % vs.len()],
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            StepRule::Constant(v) => *v,
            StepRule::Cyclic(vs) => vs.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            StepRule::Constant(v) => *v,
            StepRule::Cyclic(vs) => vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn is_empty(&self) -> bool {
        matches!(self, StepRule::Cyclic(v) if v.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub sigma: f64,
    pub epsilon: f64,
    pub gamma: Vec<StepRule>,
    pub mu: Vec<StepRule>,
    pub nu: Vec<StepRule>,
    pub sigma_k: Vec<StepRule>,
}

impl StepSizes {
    /// Every rule constant; `gamma`, `mu`, `nu`, `sigma_k` shared by all blocks.
    pub fn uniform(p: &SaddleProblem, sigma: f64, epsilon: f64, gamma: f64, mu: f64, nu: f64, sigma_k: f64) -> Self {
        let (m, kk) = (p.num_primal(), p.num_dual());
        StepSizes {
            sigma,
            epsilon,
            gamma: vec![StepRule::Constant(gamma); m],
            mu: vec![StepRule::Constant(mu); kk],
            nu: vec![StepRule::Constant(nu); kk],
            sigma_k: vec![StepRule::Constant(sigma_k); kk],
        }
    }

    /// Largest admissible constant steps for the given `σ`, with
    /// `σₖ = sigma_k` and `ε` half the smallest admissible bound.
    pub fn largest(p: &SaddleProblem, sigma: f64, sigma_k: f64) -> Self {
        let chi = p.chi();
        let gamma: Vec<f64> = p.primal.iter().map(|b| 1.0 / (b.q.lip + chi + sigma)).collect();
        let mu: Vec<f64> = p.dual.iter().map(|b| 1.0 / (b.b_l.lip + sigma)).collect();
        let nu: Vec<f64> = p.dual.iter().map(|b| 1.0 / (b.d_l.lip + sigma)).collect();
        let smallest = gamma
            .iter()
            .chain(&mu)
            .chain(&nu)
            .copied()
            .fold(sigma_k.min(1.0 / sigma_k).min(1.0), f64::min);
        let c = |v: Vec<f64>| v.into_iter().map(StepRule::Constant).collect();
        StepSizes {
            sigma,
            epsilon: 0.5 * smallest,
            gamma: c(gamma),
            mu: c(mu),
            nu: c(nu),
            sigma_k: vec![StepRule::Constant(sigma_k); p.num_dual()],
        }
    }
}

/// Lists every violated step-size bound; empty when admissible.
pub fn validate_step_sizes(p: &SaddleProblem, s: &StepSizes) -> Vec<String> {
    let mut v = Vec::new();
    let alpha = p.alpha();
    let chi = p.chi();
    let floor = quarter_inv(alpha);
    if !(s.sigma > floor) || !s.sigma.is_finite() {
        v.push(format!("sigma = {} must exceed 1/(4 alpha) = {floor}", s.sigma));
    }
    let eps = s.epsilon;
    if !(eps > 0.0 && eps < 1.0) {
        v.push(format!("epsilon = {eps} must lie in (0, 1)"));
    }
    let mut worst = f64::NEG_INFINITY;
    for b in &p.primal {
        worst = worst.max(b.q.lip + chi + s.sigma);
    }
    for b in &p.dual {
        worst = worst.max(b.b_l.lip + s.sigma).max(b.d_l.lip + s.sigma);
    }
    if !(1.0 / eps > worst) {
        v.push(format!("1/epsilon = {} must exceed {worst}", 1.0 / eps));
    }
    let mut check = |name: &str, rules: &[StepRule], count: usize, upper: &dyn Fn(usize) -> f64| {
        if rules.len() != count {
            v.push(format!("{name}: expected {count} rules, found {}", rules.len()));
            return;
        }
        for (j, r) in rules.iter().enumerate() {
            if r.is_empty() {
                v.push(format!("{name}[{j}]: empty cycle"));
                continue;
            }
            let hi = upper(j);
            if !(r.min() >= eps) || !(r.max() <= hi) {
                v.push(format!("{name}[{j}]: values in [{}, {}] must lie in [{eps}, {hi}]", r.min(), r.max()));
            }
        }
    };
    check("gamma", &s.gamma, p.num_primal(), &|i| 1.0 / (p.primal[i].q.lip + chi + s.sigma));
    check("mu", &s.mu, p.num_dual(), &|k| 1.0 / (p.dual[k].b_l.lip + s.sigma));
    check("nu", &s.nu, p.num_dual(), &|k| 1.0 / (p.dual[k].d_l.lip + s.sigma));
    check("sigma_k", &s.sigma_k, p.num_dual(), &|_| 1.0 / eps);
    v
}

/// Iterate plus the per-block caches carried between activations.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleState {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub vstar: Vec<f64>,
    pub a: Vec<f64>,
    pub astar: Vec<f64>,
    pub xi: Vec<f64>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub estar: Vec<f64>,
    pub qstar: Vec<f64>,
    pub tstar: Vec<f64>,
    pub eta: Vec<f64>,
    /// `x`, `y`, `z` at each block's last activation.
    pub x_snap: Vec<f64>,
    pub y_snap: Vec<f64>,
    pub z_snap: Vec<f64>,
    /// Recomputed every iteration for all blocks.
    pub e: Vec<f64>,
    pub pstar: Vec<f64>,
    pub last_primal: LastActivation,
    pub last_dual: LastActivation,
}

impl SaddleState {
    pub fn new(p: &SaddleProblem, start: &SaddlePoint) -> Result<Self> {
        start.check(p)?;
        let (nh, ng) = (p.h.total_dim(), p.g.total_dim());
        Ok(SaddleState {
            n: 0,
            x: start.x.clone(),
            y: start.y.clone(),
            z: start.z.clone(),
            vstar: start.vstar.clone(),
            a: vec![0.0; nh],
            astar: vec![0.0; nh],
            xi: vec![0.0; p.num_primal()],
            b: vec![0.0; ng],
            d: vec![0.0; ng],
            estar: vec![0.0; ng],
            qstar: vec![0.0; ng],
            tstar: vec![0.0; ng],
            eta: vec![0.0; p.num_dual()],
            x_snap: start.x.clone(),
            y_snap: start.y.clone(),
            z_snap: start.z.clone(),
            e: vec![0.0; ng],
            pstar: vec![0.0; nh],
            last_primal: LastActivation::new(p.num_primal()),
            last_dual: LastActivation::new(p.num_dual()),
        })
    }

    pub fn point(&self) -> SaddlePoint {
        SaddlePoint {
            x: self.x.clone(),
            y: self.y.clone(),
            z: self.z.clone(),
            vstar: self.vstar.clone(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        [&self.x[..], &self.y, &self.z, &self.vstar].concat()
    }

    /// The current iteration seen as an engine sample on `H ⊕ G ⊕ G ⊕ G`:
    /// `w = (a, b, d, e*)`, `q = (x, y, z)` at last activation with `e*`,
    /// `c* = (Cx, Bᶜy, Dᶜz, 0)` at `q`, and `w* = (p*, q*, t*, e) − c*`.
    /// Valid after at least one iteration.
    pub fn engine_view(&self, p: &SaddleProblem) -> GraphSample {
        let (h, g) = (&*p.h, &*p.g);
        let w = [&self.a[..], &self.b, &self.d, &self.estar].concat();
        let q = [&self.x_snap[..], &self.y_snap, &self.z_snap, &self.estar].concat();
        let mut cx = vec![0.0; h.total_dim()];
        for (i, blk) in p.primal.iter().enumerate() {
            let r = h.block_range(i);
            blk.c.map.apply_add(&self.x_snap[r.clone()], &mut cx[r]);
        }
        let mut cy = vec![0.0; g.total_dim()];
        let mut cz = vec![0.0; g.total_dim()];
        for (k, blk) in p.dual.iter().enumerate() {
            let r = g.block_range(k);
            blk.b_c.map.apply_add(&self.y_snap[r.clone()], &mut cy[r.clone()]);
            blk.d_c.map.apply_add(&self.z_snap[r.clone()], &mut cz[r]);
        }
        let cstar = [&cx[..], &cy, &cz, &vec![0.0; g.total_dim()]].concat();
        let t = [&self.pstar[..], &self.qstar, &self.tstar, &self.e].concat();
        let wstar = t.iter().zip(&cstar).map(|(a, b)| a - b).collect();
        GraphSample::exact(w, wstar, q, cstar)
    }
}

fn finite_or(v: &[f64], n: usize, what: impl FnOnce() -> String) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration: n, what: what() })
    }
}

/// One iteration on the activated sets `active_i`, `active_k` with relaxation
/// `lambda`. `zero_tol` is relative, as in the engine. The first call must
/// activate every block.
#[allow(clippy::too_many_arguments)]
pub fn saddle_iterate(
    p: &SaddleProblem,
    s: &StepSizes,
    st: &mut SaddleState,
    active_i: &[usize],
    active_k: &[usize],
    lambda: f64,
    alpha: f64,
    zero_tol: f64,
) -> Result<StepRecord> {
    let n = st.n;
    let (h, g) = (&*p.h, &*p.g);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("{lambda} must be positive")));
    }
    st.last_primal.update(n, active_i)?;
    st.last_dual.update(n, active_k)?;

    let rx = p.coupling_value(&st.x);
    for &i in active_i {
        let r = h.block_range(i);
        let blk = &p.primal[i];
        let xi = &st.x[r.clone()];
        let gamma = s.gamma[i].at(n);
        let mut lstar = blk.q.apply(xi);
        if let Some(rx) = &rx {
            add_scaled(&mut lstar, 1.0, &rx[r.clone()]);
        }
        p.links.adjoint_add(i, &st.vstar, g, &mut lstar);
        let cx = blk.c.apply(xi);
        let arg: Vec<f64> = (0..xi.len())
            .map(|j| xi[j] + gamma * (blk.s_star[j] - lstar[j] - cx[j]))
            .collect();
        let a = blk.a.resolvent(gamma, &arg)?;
        let qa = blk.q.apply(&a);
        let astar: Vec<f64> = (0..xi.len()).map(|j| (xi[j] - a[j]) / gamma - lstar[j] + qa[j]).collect();
        finite_or(&astar, n, || format!("primal block {i}"))?;
        st.xi[i] = dist_sq(&a, xi);
        st.x_snap[r.clone()].copy_from_slice(xi);
        st.a[r.clone()].copy_from_slice(&a);
        st.astar[r].copy_from_slice(&astar);
    }

    for &k in active_k {
        let r = g.block_range(k);
        let blk = &p.dual[k];
        let (y, z, v) = (&st.y[r.clone()], &st.z[r.clone()], &st.vstar[r.clone()]);
        let (mu, nu, sk) = (s.mu[k].at(n), s.nu[k].at(n), s.sigma_k[k].at(n));
        let dim = y.len();
        let by = blk.b_l.apply(y);
        let dz = blk.d_l.apply(z);
        let ustar: Vec<f64> = (0..dim).map(|j| v[j] - by[j]).collect();
        let wstar: Vec<f64> = (0..dim).map(|j| v[j] - dz[j]).collect();
        let bcy = blk.b_c.apply(y);
        let dcz = blk.d_c.apply(z);
        let barg: Vec<f64> = (0..dim).map(|j| y[j] + mu * (ustar[j] - bcy[j])).collect();
        let darg: Vec<f64> = (0..dim).map(|j| z[j] + nu * (wstar[j] - dcz[j])).collect();
        let b = blk.b_m.resolvent(mu, &barg)?;
        let d = blk.d_m.resolvent(nu, &darg)?;
        let mut lx = vec![0.0; dim];
        p.links.forward_add(k, &st.x, h, &mut lx);
        let estar: Vec<f64> = (0..dim).map(|j| sk * (lx[j] - y[j] - z[j] - blk.r[j]) + v[j]).collect();
        let bl_b = blk.b_l.apply(&b);
        let dl_d = blk.d_l.apply(&d);
        let qstar: Vec<f64> = (0..dim).map(|j| (y[j] - b[j]) / mu + ustar[j] + bl_b[j] - estar[j]).collect();
        let tstar: Vec<f64> = (0..dim).map(|j| (z[j] - d[j]) / nu + wstar[j] + dl_d[j] - estar[j]).collect();
        finite_or(&qstar, n, || format!("dual block {k} (B row)"))?;
        finite_or(&tstar, n, || format!("dual block {k} (D row)"))?;
        st.eta[k] = dist_sq(&b, y) + dist_sq(&d, z);
        st.y_snap[r.clone()].copy_from_slice(y);
        st.z_snap[r.clone()].copy_from_slice(z);
        st.b[r.clone()].copy_from_slice(&b);
        st.d[r.clone()].copy_from_slice(&d);
        st.estar[r.clone()].copy_from_slice(&estar);
        st.qstar[r.clone()].copy_from_slice(&qstar);
        st.tstar[r].copy_from_slice(&tstar);
    }

    // e and p* use the current caches of every block.
    for k in 0..p.num_dual() {
        let r = g.block_range(k);
        let mut la = vec![0.0; r.len()];
        p.links.forward_add(k, &st.a, h, &mut la);
        for (j, idx) in r.enumerate() {
            st.e[idx] = p.dual[k].r[j] + st.b[idx] + st.d[idx] - la[j];
        }
    }
    let ra = p.coupling_value(&st.a);
    for i in 0..p.num_primal() {
        let r = h.block_range(i);
        let mut ps = st.astar[r.clone()].to_vec();
        if let Some(ra) = &ra {
            add_scaled(&mut ps, 1.0, &ra[r.clone()]);
        }
        p.links.adjoint_add(i, &st.estar, g, &mut ps);
        st.pstar[r].copy_from_slice(&ps);
    }

    let pen: f64 = st.xi.iter().sum::<f64>() + st.eta.iter().sum::<f64>();
    let mut delta = if alpha.is_infinite() { 0.0 } else { -quarter_inv(alpha) * pen };
    delta += dot(&sub_vec(&st.x, &st.a), &st.pstar);
    delta += dot(&sub_vec(&st.y, &st.b), &st.qstar);
    delta += dot(&sub_vec(&st.z, &st.d), &st.tstar);
    delta += dot(&st.e, &sub_vec(&st.vstar, &st.estar));
    let denom = norm_sq(&st.pstar) + norm_sq(&st.qstar) + norm_sq(&st.tstar) + norm_sq(&st.e);
    if !delta.is_finite() || !denom.is_finite() {
        return Err(Error::NonFinite { iteration: n, what: "delta".into() });
    }
    let scale = (norm_sq(&st.x) + norm_sq(&st.y) + norm_sq(&st.z) + norm_sq(&st.vstar)).max(1.0);
    let theta = step_size_sq(delta, denom, zero_tol * scale);
    let step = lambda * theta;
    if step != 0.0 {
        add_scaled(&mut st.x, -step, &st.pstar);
        add_scaled(&mut st.y, -step, &st.qstar);
        add_scaled(&mut st.z, -step, &st.tstar);
        add_scaled(&mut st.vstar, -step, &st.e);
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

fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Norm of the row-wise resolvent fixed-point residuals of the saddle
/// inclusion at `pt`; zero exactly at zeros of the saddle operator.
pub fn saddle_residual(p: &SaddleProblem, pt: &SaddlePoint) -> Result<f64> {
    pt.check(p)?;
    let (h, g) = (&*p.h, &*p.g);
    let mut total = 0.0;
    let rx = p.coupling_value(&pt.x);
    for (i, blk) in p.primal.iter().enumerate() {
        let r = h.block_range(i);
        let xi = &pt.x[r.clone()];
        let mut u = blk.c.apply(xi);
        add_scaled(&mut u, 1.0, &blk.q.apply(xi));
        add_scaled(&mut u, -1.0, &blk.s_star);
        if let Some(rx) = &rx {
            add_scaled(&mut u, 1.0, &rx[r]);
        }
        p.links.adjoint_add(i, &pt.vstar, g, &mut u);
        let arg = sub_vec(xi, &u);
        total += dist_sq(xi, &blk.a.resolvent(1.0, &arg)?);
    }
    for (k, blk) in p.dual.iter().enumerate() {
        let r = g.block_range(k);
        let (y, z, v) = (&pt.y[r.clone()], &pt.z[r.clone()], &pt.vstar[r.clone()]);
        let row = |m: &MaxMonotoneOp, c: &CocoerciveOp, l: &LipschitzMonotoneOp, p: &[f64]| -> Result<f64> {
            let mut u = c.apply(p);
            add_scaled(&mut u, 1.0, &l.apply(p));
            add_scaled(&mut u, -1.0, v);
            Ok(dist_sq(p, &m.resolvent(1.0, &sub_vec(p, &u))?))
        };
        total += row(&blk.b_m, &blk.b_c, &blk.b_l, y)?;
        total += row(&blk.d_m, &blk.d_c, &blk.d_l, z)?;
        let mut aff: Vec<f64> = (0..y.len()).map(|j| blk.r[j] + y[j] + z[j]).collect();
        let mut lx = vec![0.0; y.len()];
        p.links.forward_add(k, &pt.x, h, &mut lx);
        add_scaled(&mut aff, -1.0, &lx);
        total += norm_sq(&aff);
    }
    Ok(total.sqrt())
}

/// Consistency checks accumulated over a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub iterations: usize,
    /// Inactive cache entries that differed from their last-activation value.
    pub cache_violations: usize,
    /// Largest relative gap between `Σξ + Ση` and `‖w − q‖²`.
    pub max_identity_rel_err: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Cache values per block, as copied at activation time.
#[derive(Clone)]
struct CacheCopy {
    primal: Vec<(Vec<f64>, Vec<f64>, f64)>,
    dual: Vec<[Vec<f64>; 5]>,
    eta: Vec<f64>,
}

impl CacheCopy {
    fn primal_entry(p: &SaddleProblem, st: &SaddleState, i: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let r = p.h.block_range(i);
        (st.a[r.clone()].to_vec(), st.astar[r].to_vec(), st.xi[i])
    }

    fn dual_entry(p: &SaddleProblem, st: &SaddleState, k: usize) -> [Vec<f64>; 5] {
        let r = p.g.block_range(k);
        [
            st.b[r.clone()].to_vec(),
            st.d[r.clone()].to_vec(),
            st.estar[r.clone()].to_vec(),
            st.qstar[r.clone()].to_vec(),
            st.tstar[r].to_vec(),
        ]
    }

    fn capture(p: &SaddleProblem, st: &SaddleState) -> Self {
        CacheCopy {
            primal: (0..p.num_primal()).map(|i| Self::primal_entry(p, st, i)).collect(),
            dual: (0..p.num_dual()).map(|k| Self::dual_entry(p, st, k)).collect(),
            eta: st.eta.clone(),
        }
    }
}

/// Block samplers for the primal and dual index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSamplers {
    pub primal: BlockSampler,
    pub dual: BlockSampler,
}

impl BlockSamplers {
    pub fn full(primal: usize, dual: usize) -> Self {
        BlockSamplers {
            primal: BlockSampler::full(primal),
            dual: BlockSampler::full(dual),
        }
    }

    pub fn singleton(primal: usize, dual: usize) -> Self {
        BlockSamplers {
            primal: BlockSampler::uniform_singleton(primal),
            dual: BlockSampler::uniform_singleton(dual),
        }
    }
}

pub struct SaddleRun {
    pub state: SaddleState,
    pub trace: Trace,
    pub alpha: f64,
    pub audit: AuditReport,
    /// `‖x − a‖, ‖y − b‖, ‖z − d‖, ‖v* − e*‖` at the end.
    pub final_gaps: [f64; 4],
}

pub fn run_saddle(
    p: &SaddleProblem,
    s: &StepSizes,
    samplers: &BlockSamplers,
    relax: &RelaxationSampler,
    start: &SaddlePoint,
    opts: &RunOptions,
) -> Result<SaddleRun> {
    run_saddle_with(p, s, samplers, relax, start, opts, &mut |_, _| {})
}

/// As [`run_saddle`], calling `observer` after every iteration.
pub fn run_saddle_with(
    p: &SaddleProblem,
    s: &StepSizes,
    samplers: &BlockSamplers,
    relax: &RelaxationSampler,
    start: &SaddlePoint,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&SaddleState, &StepRecord),
) -> Result<SaddleRun> {
    let violations = validate_step_sizes(p, s);
    if !violations.is_empty() {
        return Err(Error::param("step_sizes", violations.join("; ")));
    }
    if samplers.primal.count != p.num_primal() || samplers.dual.count != p.num_dual() {
        return Err(Error::param("samplers", "sampler index counts do not match the problem"));
    }
    relax.validate(opts.rho)?;
    let alpha = p.alpha();
    let mut st = SaddleState::new(p, start)?;
    let mut rng = TrajectoryRng::new(opts.seed);
    let mut trace = Trace::new("", opts.seed);
    let mut audit = AuditReport::default();
    let mut copy: Option<CacheCopy> = None;
    let reference = opts.reference.as_deref();
    if let Some(z) = reference {
        if z.len() != p.state_dim() {
            return Err(Error::dim("reference point", p.state_dim(), z.len()));
        }
    }
    for n in 0..opts.n_iter {
        let ai = samplers.primal.sample(n, &mut rng.blocks);
        let ak = samplers.dual.sample(n, &mut rng.blocks);
        let lambda = relax.sample(&mut rng.relax);
        let before = st.flat();
        let dist = reference.map(|z| dist_sq(&before, z).sqrt());
        let res = if opts.residual_every > 0 && n % opts.residual_every == 0 {
            Some(saddle_residual(p, &st.point())?)
        } else {
            None
        };
        let rec = saddle_iterate(p, s, &mut st, &ai, &ak, lambda, alpha, opts.zero_tol)?;
        if opts.audit {
            audit_step(p, &st, &ai, &ak, &mut copy, &mut audit);
        }
        trace.rows.push(rec.to_row(dist, res, format_active(&ai, &ak)));
        trace.staleness.push(staleness(&st));
        observer(&st, &rec);
    }
    let fin = st.flat();
    trace.final_dist = reference.map(|z| dist_sq(&fin, z).sqrt());
    trace.final_residual = Some(saddle_residual(p, &st.point())?);
    trace.final_state = fin;
    let final_gaps = [
        dist_sq(&st.x, &st.a).sqrt(),
        dist_sq(&st.y, &st.b).sqrt(),
        dist_sq(&st.z, &st.d).sqrt(),
        dist_sq(&st.vstar, &st.estar).sqrt(),
    ];
    Ok(SaddleRun {
        state: st,
        trace,
        alpha,
        audit,
        final_gaps,
    })
}

fn staleness(st: &SaddleState) -> f64 {
    (dist_sq(&st.x_snap, &st.x) + dist_sq(&st.y_snap, &st.y) + dist_sq(&st.z_snap, &st.z)).sqrt()
}

fn audit_step(
    p: &SaddleProblem,
    st: &SaddleState,
    ai: &[usize],
    ak: &[usize],
    copy: &mut Option<CacheCopy>,
    audit: &mut AuditReport,
) {
    let c = copy.get_or_insert_with(|| CacheCopy::capture(p, st));
    for i in 0..p.num_primal() {
        let now = CacheCopy::primal_entry(p, st, i);
        if ai.contains(&i) {
            c.primal[i] = now;
        } else if c.primal[i] != now {
            audit.cache_violations += 1;
        }
    }
    for k in 0..p.num_dual() {
        let now = CacheCopy::dual_entry(p, st, k);
        if ak.contains(&k) {
            c.dual[k] = now;
            c.eta[k] = st.eta[k];
        } else if c.dual[k] != now || c.eta[k] != st.eta[k] {
            audit.cache_violations += 1;
        }
    }
    let lhs: f64 = st.xi.iter().sum::<f64>() + st.eta.iter().sum::<f64>();
    let view = st.engine_view(p);
    let rhs = dist_sq(&view.w, &view.q);
    audit.max_identity_rel_err = audit.max_identity_rel_err.max(rel_err(lhs, rhs));
    audit.iterations += 1;
}

/// Data of a structured minimization problem
/// `Θ(x) + Σᵢ (fᵢ + φᵢ)(xᵢ) + Σₖ ((gₖ + ψₖ) □ hₖ)(Σᵢ Lₖᵢxᵢ)`,
/// with `f, g, h` given by their subdifferentials and `φ, ψ, Θ` by gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinProblemSpec {
    pub h: SpaceLayout,
    pub g: SpaceLayout,
    pub f: Vec<MaxMonotoneOp>,
    #[serde(default)]
    pub phi: Vec<CocoerciveOp>,
    #[serde(default)]
    pub theta: LipschitzMonotoneOp,
    pub g_ops: Vec<MaxMonotoneOp>,
    #[serde(default)]
    pub psi: Vec<CocoerciveOp>,
    pub h_ops: Vec<MaxMonotoneOp>,
    pub links: Couplings,
}

fn is_gradient_map(m: &SingleValuedMap) -> bool {
    match m {
        SingleValuedMap::Zero => true,
        SingleValuedMap::ScaledIdentity { scale } => *scale >= 0.0,
        SingleValuedMap::DiagAffine { q, .. } => q.iter().all(|v| *v >= 0.0),
        SingleValuedMap::Affine { matrix, .. } => matrix.is_symmetric(1e-14) && matrix.is_monotone(),
        SingleValuedMap::Rotation { angle, .. } => angle.sin() == 0.0 && angle.cos() > 0.0,
        SingleValuedMap::Custom(_) => false,
    }
}

fn is_origin_cone(op: &MaxMonotoneOp) -> bool {
    matches!(op, MaxMonotoneOp::Box { lo, hi } if lo.iter().chain(hi).all(|v| *v == 0.0))
}

impl MinProblemSpec {
    fn padded<T: Clone + Default>(v: &[T], n: usize) -> Vec<T> {
        if v.is_empty() {
            vec![T::default(); n]
        } else {
            v.to_vec()
        }
    }

    fn phi_all(&self) -> Vec<CocoerciveOp> {
        Self::padded(&self.phi, self.h.num_blocks())
    }

    fn psi_all(&self) -> Vec<CocoerciveOp> {
        Self::padded(&self.psi, self.g.num_blocks())
    }

    pub fn validate(&self) -> Result<()> {
        let (m, kk) = (self.h.num_blocks(), self.g.num_blocks());
        if self.f.len() != m {
            return Err(Error::dim("f", m, self.f.len()));
        }
        if self.g_ops.len() != kk || self.h_ops.len() != kk {
            return Err(Error::dim("g/h", kk, self.g_ops.len().min(self.h_ops.len())));
        }
        if !self.phi.is_empty() && self.phi.len() != m {
            return Err(Error::dim("phi", m, self.phi.len()));
        }
        if !self.psi.is_empty() && self.psi.len() != kk {
            return Err(Error::dim("psi", kk, self.psi.len()));
        }
        for (name, op, d) in self
            .f
            .iter()
            .enumerate()
            .map(|(i, o)| (format!("f[{i}]"), o, self.h.block_dim(i)))
            .chain(self.g_ops.iter().enumerate().map(|(k, o)| (format!("g[{k}]"), o, self.g.block_dim(k))))
            .chain(self.h_ops.iter().enumerate().map(|(k, o)| (format!("h[{k}]"), o, self.g.block_dim(k))))
        {
            if op.potential(&vec![0.0; d]).is_none() {
                return Err(Error::Unsupported(format!("{name} is not the subdifferential of a catalog function")));
            }
        }
        for (name, map) in self
            .phi_all()
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("phi[{i}]"), &c.map))
            .chain(self.psi_all().iter().enumerate().map(|(k, c)| (format!("psi[{k}]"), &c.map)))
            .chain(std::iter::once(("theta".to_string(), &self.theta.map)))
        {
            if !is_gradient_map(map) {
                return Err(Error::Unsupported(format!("{name} is not the gradient of a catalog function")));
            }
        }
        Ok(())
    }
}

/// Saddle problem realizing the minimization: `Aᵢ = ∂fᵢ`, `Cᵢ = ∇φᵢ`,
/// `Qᵢ = 0`, `R = ∇Θ`, `s* = 0`, `Bᵐ = ∂g`, `Bᶜ = ∇ψ`, `Dᵐ = ∂h`,
/// `Bˡ = Dᶜ = Dˡ = 0`, `r = 0`.
pub fn build_min_problem(spec: &MinProblemSpec) -> Result<SaddleProblem> {
    spec.validate()?;
    let primal = spec
        .f
        .iter()
        .zip(spec.phi_all())
        .map(|(f, phi)| PrimalBlock {
            a: f.clone(),
            c: phi,
            ..PrimalBlock::default()
        })
        .collect();
    let dual = spec
        .g_ops
        .iter()
        .zip(spec.psi_all())
        .zip(&spec.h_ops)
        .map(|((g, psi), h)| DualBlock {
            b_m: g.clone(),
            b_c: psi,
            d_m: h.clone(),
            ..DualBlock::default()
        })
        .collect();
    SaddleProblem::new(
        spec.h.clone(),
        spec.g.clone(),
        primal,
        dual,
        spec.theta.clone(),
        spec.links.clone(),
    )
}

/// Residual of the Kuhn–Tucker conditions of the minimization problem at
/// `(x, v*)`. Each dual row needs `h = ι{0}`, `g = ι{0}` with `ψ = 0`, or
/// `h = 0`; other rows are unsupported.
pub fn kt_condition_residual(spec: &MinProblemSpec, x: &[f64], vstar: &[f64]) -> Result<f64> {
    spec.validate()?;
    let (h, g) = (&spec.h, &spec.g);
    if x.len() != h.total_dim() {
        return Err(Error::dim("x", h.total_dim(), x.len()));
    }
    if vstar.len() != g.total_dim() {
        return Err(Error::dim("vstar", g.total_dim(), vstar.len()));
    }
    let phi = spec.phi_all();
    let psi = spec.psi_all();
    let mut total = 0.0;
    let grad_theta = (!spec.theta.is_zero()).then(|| spec.theta.apply(x));
    for (i, f) in spec.f.iter().enumerate() {
        let r = h.block_range(i);
        let xi = &x[r.clone()];
        let mut u = phi[i].apply(xi);
        if let Some(gt) = &grad_theta {
            add_scaled(&mut u, 1.0, &gt[r]);
        }
        spec.links.adjoint_add(i, vstar, g, &mut u);
        total += dist_sq(xi, &f.resolvent(1.0, &sub_vec(xi, &u))?);
    }
    for k in 0..g.num_blocks() {
        let r = g.block_range(k);
        let v = &vstar[r.clone()];
        let mut l = vec![0.0; r.len()];
        spec.links.forward_add(k, x, h, &mut l);
        let (gk, hk) = (&spec.g_ops[k], &spec.h_ops[k]);
        total += if is_origin_cone(hk) {
            // v* ∈ ∂g(Lx) + ∇ψ(Lx)
            let mut arg: Vec<f64> = l.iter().zip(v).map(|(a, b)| a + b).collect();
            add_scaled(&mut arg, -1.0, &psi[k].apply(&l));
            dist_sq(&gk.resolvent(1.0, &arg)?, &l)
        } else if is_origin_cone(gk) && psi[k].is_zero() {
            // v* ∈ ∂h(Lx)
            let arg: Vec<f64> = l.iter().zip(v).map(|(a, b)| a + b).collect();
            dist_sq(&hk.resolvent(1.0, &arg)?, &l)
        } else if hk.is_zero() {
            // h = 0 forces v* = 0
            norm_sq(v)
        } else {
            return Err(Error::Unsupported(format!(
                "Kuhn-Tucker residual for dual block {k} needs h = indicator of 0, g = indicator of 0 with psi = 0, or h = 0"
            )));
        };
    }
    Ok(total.sqrt())
}
