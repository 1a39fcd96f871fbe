//! Oracles shared by the integration tests and the acceptance suite,
//! written without reference to the library's own iteration code.
#![allow(dead_code)]

use stosplit_core::engine::GraphSample;
use stosplit_core::kt::{KTProblem, KTStepSizes};
use stosplit_core::spaces::{add_scaled, dist_sq, norm_sq};
use stosplit_core::{SaddleProblem, StepSizes};

pub const STEP: f64 = 1e-4;

/// Minimizer of `f(z) + ‖x − z‖²/(2γ)` over the grid `lo + j·STEP`.
pub fn grid_prox_1d(f: &dyn Fn(f64) -> f64, x: f64, gamma: f64) -> f64 {
    let (lo, n) = (-10.0, 200_001);
    let mut best = (f64::INFINITY, lo);
    for j in 0..n {
        let z = lo + j as f64 * STEP;
        let v = f(z) + (x - z) * (x - z) / (2.0 * gamma);
        if v < best.0 {
            best = (v, z);
        }
    }
    best.1
}

/// Coarse scan at step 1e-2, then a step-1e-4 scan around the coarse winner.
pub fn grid_prox_2d(f: &dyn Fn(f64, f64) -> f64, x: [f64; 2], gamma: f64) -> [f64; 2] {
    let obj = |z1: f64, z2: f64| f(z1, z2) + ((x[0] - z1).powi(2) + (x[1] - z2).powi(2)) / (2.0 * gamma);
    let scan = |c: [f64; 2], half: f64, h: f64| {
        let n = (2.0 * half / h).round() as i64;
        let mut best = (f64::INFINITY, c);
        for i in 0..=n {
            for j in 0..=n {
                let z = [c[0] - half + i as f64 * h, c[1] - half + j as f64 * h];
                let v = obj(z[0], z[1]);
                if v < best.0 {
                    best = (v, z);
                }
            }
        }
        best.1
    };
    let coarse = scan([0.0, 0.0], 6.0, 1e-2);
    scan(coarse, 0.03, STEP)
}

pub fn indicator(inside: bool) -> f64 {
    if inside {
        0.0
    } else {
        f64::INFINITY
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Graph point of the saddle operator's monotone part, and the cocoercive
/// part evaluated at the current point.
pub fn saddle_sample(p: &SaddleProblem, s: &StepSizes, n: usize, u: &[f64]) -> GraphSample {
    let (h, g) = (&*p.h, &*p.g);
    let (nh, ng) = (h.total_dim(), g.total_dim());
    let (x, y, z, v) = (&u[..nh], &u[nh..nh + ng], &u[nh + ng..nh + 2 * ng], &u[nh + 2 * ng..]);
    let rx = p.coupling.apply(x);
    let (mut a, mut cx, mut astar) = (vec![0.0; nh], vec![0.0; nh], vec![0.0; nh]);
    for (i, blk) in p.primal.iter().enumerate() {
        let r = h.block_range(i);
        let gam = s.gamma[i].at(n);
        let xi = &x[r.clone()];
        let mut l = blk.q.apply(xi);
        add_scaled(&mut l, 1.0, &rx[r.clone()]);
        p.links.adjoint_add(i, v, g, &mut l);
        let c = blk.c.apply(xi);
        let arg: Vec<f64> = (0..xi.len()).map(|j| xi[j] + gam * (blk.s_star[j] - l[j] - c[j])).collect();
        let ai = blk.a.resolvent(gam, &arg).unwrap();
        let qa = blk.q.apply(&ai);
        for j in 0..xi.len() {
            astar[r.start + j] = (xi[j] - ai[j]) / gam - l[j] + qa[j];
        }
        a[r.clone()].copy_from_slice(&ai);
        cx[r].copy_from_slice(&c);
    }
    let (mut b, mut d, mut es, mut qs, mut ts) = (vec![0.0; ng], vec![0.0; ng], vec![0.0; ng], vec![0.0; ng], vec![0.0; ng]);
    let (mut cy, mut cz) = (vec![0.0; ng], vec![0.0; ng]);
    let lx = p.links.forward(x, h, g);
    for (k, blk) in p.dual.iter().enumerate() {
        let r = g.block_range(k);
        let (mu, nu, sk) = (s.mu[k].at(n), s.nu[k].at(n), s.sigma_k[k].at(n));
        let (yk, zk, vk) = (&y[r.clone()], &z[r.clone()], &v[r.clone()]);
        let (by, dz) = (blk.b_l.apply(yk), blk.d_l.apply(zk));
        let (cyk, czk) = (blk.b_c.apply(yk), blk.d_c.apply(zk));
        let m = yk.len();
        let bk = blk.b_m.resolvent(mu, &(0..m).map(|j| yk[j] + mu * (vk[j] - by[j] - cyk[j])).collect::<Vec<_>>()).unwrap();
        let dk = blk.d_m.resolvent(nu, &(0..m).map(|j| zk[j] + nu * (vk[j] - dz[j] - czk[j])).collect::<Vec<_>>()).unwrap();
        let (bb, dd) = (blk.b_l.apply(&bk), blk.d_l.apply(&dk));
        for j in 0..m {
            let idx = r.start + j;
            let e = sk * (lx[idx] - yk[j] - zk[j] - blk.r[j]) + vk[j];
            es[idx] = e;
            qs[idx] = (yk[j] - bk[j]) / mu + vk[j] - by[j] + bb[j] - e;
            ts[idx] = (zk[j] - dk[j]) / nu + vk[j] - dz[j] + dd[j] - e;
            b[idx] = bk[j];
            d[idx] = dk[j];
            cy[idx] = cyk[j];
            cz[idx] = czk[j];
        }
    }
    let ra = p.coupling.apply(&a);
    let la = p.links.forward(&a, h, g);
    let mut pstar = astar.clone();
    add_scaled(&mut pstar, 1.0, &ra);
    add_scaled(&mut pstar, 1.0, &p.links.adjoint(&es, h, g));
    let e: Vec<f64> = (0..ng)
        .map(|idx| {
            let k = (0..p.num_dual()).find(|&k| g.block_range(k).contains(&idx)).unwrap();
            p.dual[k].r[idx - g.block_range(k).start] + b[idx] + d[idx] - la[idx]
        })
        .collect();
    let cstar = [&cx[..], &cy, &cz, &vec![0.0; ng]].concat();
    let t = [&pstar[..], &qs, &ts, &e].concat();
    GraphSample::exact(
        [&a[..], &b, &d, &es].concat(),
        sub(&t, &cstar),
        [x, y, z, &es[..]].concat(),
        cstar,
    )
}

pub fn kt_sample(p: &KTProblem, s: &KTStepSizes, n: usize, u: &[f64]) -> GraphSample {
    let (h, g) = (&*p.h, &*p.g);
    let nh = h.total_dim();
    let (x, v) = (&u[..nh], &u[nh..]);
    let ls = p.links.adjoint(v, h, g);
    let lx = p.links.forward(x, h, g);
    let mut a = vec![0.0; nh];
    for i in 0..p.num_primal() {
        let r = h.block_range(i);
        let gam = s.gamma[i].at(n);
        let arg: Vec<f64> = r.clone().map(|j| x[j] - gam * ls[j]).collect();
        a[r].copy_from_slice(&p.a[i].resolvent(gam, &arg).unwrap());
    }
    let astar: Vec<f64> = (0..nh).map(|j| {
        let i = (0..p.num_primal()).find(|&i| h.block_range(i).contains(&j)).unwrap();
        (x[j] - a[j]) / s.gamma[i].at(n) - ls[j]
    }).collect();
    let mut b = vec![0.0; v.len()];
    let mut bstar = vec![0.0; v.len()];
    for k in 0..p.num_dual() {
        let r = g.block_range(k);
        let mu = s.mu[k].at(n);
        let arg: Vec<f64> = r.clone().map(|j| lx[j] + mu * v[j]).collect();
        let bk = p.b[k].resolvent(mu, &arg).unwrap();
        for (o, j) in r.enumerate() {
            b[j] = bk[o];
            bstar[j] = v[j] + (lx[j] - bk[o]) / mu;
        }
    }
    let mut tstar = astar;
    add_scaled(&mut tstar, 1.0, &p.links.adjoint(&bstar, h, g));
    let t = sub(&b, &p.links.forward(&a, h, g));
    let w = [&a[..], &bstar].concat();
    let zeros = vec![0.0; w.len()];
    GraphSample::exact(w.clone(), [&tstar[..], &t].concat(), w, zeros)
}

pub fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt() / norm_sq(b).sqrt().max(1.0)
}

