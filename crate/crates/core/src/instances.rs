//! Small reference problems with known solutions, and random problems with
//! constructed zeros.

use rand::Rng;

use crate::error::Result;
use crate::kt::KTProblem;
use crate::operators::{CocoerciveOp, LinearMap, LipschitzMonotoneOp, MaxMonotoneOp, SingleValuedMap};
use crate::saddle::{build_min_problem, Couplings, DualBlock, MinProblemSpec, PrimalBlock, SaddlePoint, SaddleProblem};
use crate::spaces::SpaceLayout;

/// `min ½(x − 3)² + |x| + ι_[−1, 1.5](x)`.
pub fn scalar_min_spec() -> MinProblemSpec {
    let l = SpaceLayout::scalar_blocks(1).expect("layout");
    MinProblemSpec {
        h: l.clone(),
        g: l,
        f: vec![MaxMonotoneOp::l1(1.0)],
        phi: vec![CocoerciveOp::quadratic_gradient(vec![1.0], vec![3.0])],
        theta: LipschitzMonotoneOp::zero(),
        g_ops: vec![MaxMonotoneOp::boxed(vec![-1.0], vec![1.5])],
        psi: vec![],
        h_ops: vec![MaxMonotoneOp::origin_cone(1)],
        links: Couplings::new().with(0, 0, LinearMap::identity(1)),
    }
}

/// Minimizer and multiplier of [`scalar_min_spec`].
pub const SCALAR_MIN_SOLUTION: (f64, f64) = (1.5, 0.5);

/// `min Σᵢ ½(xᵢ − cᵢ)² + |xᵢ|` with `c = (3, 1)` subject to
/// `x₁ + x₂ ∈ [−10, 1.8]` and `x₁ − x₂ ∈ [−0.5, 0.5]`.
pub fn box_min_spec() -> MinProblemSpec {
    let l = SpaceLayout::scalar_blocks(2).expect("layout");
    let one = LinearMap::identity(1);
    MinProblemSpec {
        h: l.clone(),
        g: l,
        f: vec![MaxMonotoneOp::l1(1.0), MaxMonotoneOp::l1(1.0)],
        phi: vec![
            CocoerciveOp::quadratic_gradient(vec![1.0], vec![3.0]),
            CocoerciveOp::quadratic_gradient(vec![1.0], vec![1.0]),
        ],
        theta: LipschitzMonotoneOp::zero(),
        g_ops: vec![
            MaxMonotoneOp::boxed(vec![-10.0], vec![1.8]),
            MaxMonotoneOp::boxed(vec![-0.5], vec![0.5]),
        ],
        psi: vec![],
        h_ops: vec![MaxMonotoneOp::origin_cone(1), MaxMonotoneOp::origin_cone(1)],
        links: Couplings::new()
            .with(0, 0, one.clone())
            .with(0, 1, one.clone())
            .with(1, 0, one.clone())
            .with(1, 1, LinearMap::scalar(1, -1.0)),
    }
}

pub const BOX_MIN_SOLUTION: ([f64; 2], [f64; 2]) = ([1.15, 0.65], [0.1, 0.75]);

/// Zero of the saddle operator built from a minimization problem with
/// `h = ι{0}`, from a primal solution and its multipliers.
pub fn min_saddle_zero(spec: &MinProblemSpec, x: &[f64], vstar: &[f64]) -> SaddlePoint {
    let y = spec.links.forward(x, &spec.h, &spec.g);
    SaddlePoint {
        x: x.to_vec(),
        z: vec![0.0; y.len()],
        y,
        vstar: vstar.to_vec(),
    }
}

pub fn scalar_min_problem() -> (SaddleProblem, SaddlePoint) {
    let spec = scalar_min_spec();
    let (x, v) = SCALAR_MIN_SOLUTION;
    let z = min_saddle_zero(&spec, &[x], &[v]);
    (build_min_problem(&spec).expect("valid instance"), z)
}

pub fn box_min_problem() -> (SaddleProblem, SaddlePoint) {
    let spec = box_min_spec();
    let (x, v) = BOX_MIN_SOLUTION;
    let z = min_saddle_zero(&spec, &x, &v);
    (build_min_problem(&spec).expect("valid instance"), z)
}

/// `0 ∈ ∂|x| + (x − 1)` written as `A = ∂|·|`, `B = ∇½(· − 1)²`, `L = 1`.
pub fn scalar_kt() -> KTProblem {
    let l = SpaceLayout::scalar_blocks(1).expect("layout");
    KTProblem::new(
        l.clone(),
        l,
        vec![MaxMonotoneOp::l1(1.0)],
        vec![MaxMonotoneOp::quadratic(vec![1.0], vec![1.0])],
        Couplings::new().with(0, 0, LinearMap::identity(1)),
    )
    .expect("valid instance")
}

pub const SCALAR_KT_POINT: (f64, f64) = (0.0, -1.0);

fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> LinearMap {
    LinearMap::new(rows, cols, uniform_vec(rng, rows * cols, -scale, scale)).expect("shape")
}

fn frobenius(m: &LinearMap) -> f64 {
    let mut s = 0.0;
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            s += m.get(r, c) * m.get(r, c);
        }
    }
    s.sqrt()
}

/// `S + K` with `S ⪰ 0` and `K` skew.
fn random_monotone_matrix(rng: &mut impl Rng, n: usize) -> LinearMap {
    let g = random_matrix(rng, n, n, 1.0);
    let k = random_matrix(rng, n, n, 1.0);
    let mut data = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += g.get(j, r) * g.get(j, c);
            }
            data[r * n + c] = 0.5 * s + 0.5 * (k.get(r, c) - k.get(c, r));
        }
    }
    LinearMap::new(n, n, data).expect("shape")
}

/// A catalog operator whose domain contains `p`.
fn random_max_monotone(rng: &mut impl Rng, p: &[f64]) -> MaxMonotoneOp {
    let n = p.len();
    match rng.random_range(0..5) {
        0 => MaxMonotoneOp::Zero,
        1 => MaxMonotoneOp::l1(rng.random_range(0.1..2.0)),
        2 => {
            let lo = p.iter().map(|v| v - rng.random_range(0.0..1.0)).collect();
            let hi = p
                .iter()
                .map(|v| if rng.random_bool(0.3) { *v } else { v + rng.random_range(0.1..1.0) })
                .collect();
            MaxMonotoneOp::boxed(lo, hi)
        }
        3 => MaxMonotoneOp::quadratic(uniform_vec(rng, n, 0.0, 2.0), uniform_vec(rng, n, -1.0, 1.0)),
        _ => MaxMonotoneOp::affine(random_monotone_matrix(rng, n), uniform_vec(rng, n, -1.0, 1.0)),
    }
}

fn random_cocoercive(rng: &mut impl Rng, n: usize) -> CocoerciveOp {
    if rng.random_bool(0.3) {
        CocoerciveOp::zero()
    } else {
        CocoerciveOp::quadratic_gradient(uniform_vec(rng, n, 0.2, 2.0), uniform_vec(rng, n, -1.0, 1.0))
    }
}

fn random_lipschitz(rng: &mut impl Rng, n: usize) -> LipschitzMonotoneOp {
    match (n, rng.random_range(0..3)) {
        (_, 0) => LipschitzMonotoneOp::zero(),
        (2, 1) => {
            let angle = rng.random_range(-1.5..1.5);
            LipschitzMonotoneOp::rotation(angle, rng.random_range(0.1..1.0))
        }
        _ => {
            let s = rng.random_range(0.0..1.0);
            LipschitzMonotoneOp::new(SingleValuedMap::ScaledIdentity { scale: s }, s).expect("lip")
        }
    }
}

/// Links for every `(k, i)` pair with probability 0.7, at least one per dual block.
fn random_links(rng: &mut impl Rng, h: &SpaceLayout, g: &SpaceLayout) -> Couplings {
    let mut links = Couplings::new();
    for k in 0..g.num_blocks() {
        let forced = rng.random_range(0..h.num_blocks());
        for i in 0..h.num_blocks() {
            if i == forced || rng.random_bool(0.7) {
                links = links.with(k, i, random_matrix(rng, g.block_dim(k), h.block_dim(i), 1.0));
            }
        }
    }
    links
}

fn default_layouts() -> (SpaceLayout, SpaceLayout) {
    (
        SpaceLayout::new(vec![2, 1]).expect("layout"),
        SpaceLayout::new(vec![1, 2]).expect("layout"),
    )
}

/// Random saddle problem on `H = ℝ²⊕ℝ`, `G = ℝ⊕ℝ²` together with a zero
/// of its saddle operator.
pub fn random_saddle(rng: &mut impl Rng) -> Result<(SaddleProblem, SaddlePoint)> {
    let (h, g) = default_layouts();
    let pt = SaddlePoint {
        x: uniform_vec(rng, h.total_dim(), -2.0, 2.0),
        y: uniform_vec(rng, g.total_dim(), -2.0, 2.0),
        z: uniform_vec(rng, g.total_dim(), -2.0, 2.0),
        vstar: uniform_vec(rng, g.total_dim(), -2.0, 2.0),
    };
    let primal = (0..h.num_blocks())
        .map(|i| {
            let r = h.block_range(i);
            PrimalBlock {
                a: random_max_monotone(rng, &pt.x[r.clone()]),
                c: random_cocoercive(rng, r.len()),
                q: random_lipschitz(rng, r.len()),
                s_star: vec![],
            }
        })
        .collect();
    let dual = (0..g.num_blocks())
        .map(|k| {
            let r = g.block_range(k);
            DualBlock {
                b_m: random_max_monotone(rng, &pt.y[r.clone()]),
                b_c: random_cocoercive(rng, r.len()),
                b_l: random_lipschitz(rng, r.len()),
                d_m: random_max_monotone(rng, &pt.z[r.clone()]),
                d_c: random_cocoercive(rng, r.len()),
                d_l: random_lipschitz(rng, r.len()),
                r: vec![],
            }
        })
        .collect();
    let coupling = if rng.random_bool(0.5) {
        LipschitzMonotoneOp::zero()
    } else {
        let n = h.total_dim();
        let k = random_matrix(rng, n, n, 0.5);
        let skew = LinearMap::new(n, n, (0..n * n).map(|j| 0.5 * (k.get(j / n, j % n) - k.get(j % n, j / n))).collect())?;
        let lip = frobenius(&skew);
        LipschitzMonotoneOp::new(
            SingleValuedMap::Affine {
                matrix: skew,
                b: vec![0.0; n],
            },
            lip,
        )?
    };
    let links = random_links(rng, &h, &g);
    let p = SaddleProblem::new(h, g, primal, dual, coupling, links)?;
    Ok((p.with_zero_at(&pt)?, pt))
}

/// Random KT problem on the same layouts with a constructed KT point `(x, v*)`.
pub fn random_kt(rng: &mut impl Rng) -> Result<(KTProblem, Vec<f64>, Vec<f64>)> {
    let (h, g) = default_layouts();
    let x = uniform_vec(rng, h.total_dim(), -2.0, 2.0);
    let v = uniform_vec(rng, g.total_dim(), -2.0, 2.0);
    let links = random_links(rng, &h, &g);
    let lx = links.forward(&x, &h, &g);
    let a = (0..h.num_blocks()).map(|i| random_max_monotone(rng, &x[h.block_range(i)])).collect();
    let b = (0..g.num_blocks()).map(|k| random_max_monotone(rng, &lx[g.block_range(k)])).collect();
    let p = KTProblem::new(h, g, a, b, links)?;
    Ok((p.with_kt_point(&x, &v)?, x, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kt::kt_residual;
    use crate::saddle::{kt_condition_residual, saddle_residual};
    use crate::sampling::{stream_rng, Stream};

    #[test]
    fn reference_solutions_satisfy_optimality() {
        let (x, v) = SCALAR_MIN_SOLUTION;
        assert!(kt_condition_residual(&scalar_min_spec(), &[x], &[v]).unwrap() <= 1e-12);
        assert!(kt_condition_residual(&scalar_min_spec(), &[1.4], &[v]).unwrap() > 1e-3);
        let (x, v) = BOX_MIN_SOLUTION;
        assert!(kt_condition_residual(&box_min_spec(), &x, &v).unwrap() <= 1e-12);
        for (p, z) in [scalar_min_problem(), box_min_problem()] {
            assert!(saddle_residual(&p, &z).unwrap() <= 1e-12);
        }
        let (x, v) = SCALAR_KT_POINT;
        assert!(kt_residual(&scalar_kt(), &[x], &[v]).unwrap() <= 1e-15);
    }

    #[test]
    fn random_instances_have_their_zeros() {
        let mut rng = stream_rng(7, Stream::Init);
        for _ in 0..50 {
            let (p, z) = random_saddle(&mut rng).unwrap();
            assert!(saddle_residual(&p, &z).unwrap() <= 1e-10);
            let (q, x, v) = random_kt(&mut rng).unwrap();
            assert!(kt_residual(&q, &x, &v).unwrap() <= 1e-10);
        }
    }
}
