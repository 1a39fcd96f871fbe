//! Acceptance suite. Prints one `criterion N PASS|FAIL` line per criterion
//! and exits nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use stosplit_cli::{cmd_run, cmd_sweep, CommonArgs};
use stosplit_core::engine::{quarter_inv, run_with, EngineConfig};
use stosplit_core::kt::run_kt_with;
use stosplit_core::operators::check_firm_nonexpansive;
use stosplit_core::ppa::validate_regime;
use stosplit_core::saddle::{run_saddle_with, AuditReport, SaddleRun, SaddleState};
use stosplit_core::sampling::stream_rng;
use stosplit_core::{
    fejer_check, instances, kt_residual, run_kt, run_ppa, saddle_iterate, BlockLaw, BlockSampler,
    BlockSamplers, ErrorRule, GammaRule, KTStepSizes, LinearMap, MaxMonotoneOp, PpaConfig, Regime,
    RelaxationSampler, RunOptions, SaddlePoint, SaddleProblem, StepSizes, Stream,
};

#[path = "../../core/tests/support/mod.rs"]
mod support;
use support::{grid_prox_1d, grid_prox_2d, indicator, kt_sample, rel_gap, saddle_sample, STEP};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Audit totals over every saddle run made by this suite.
#[derive(Default)]
struct Tally {
    runs: usize,
    iterations: usize,
    violations: usize,
    worst_identity: f64,
}

static AUDITS: Mutex<Tally> = Mutex::new(Tally {
    runs: 0,
    iterations: 0,
    violations: 0,
    worst_identity: 0.0,
});

fn record(a: &AuditReport) {
    let mut t = AUDITS.lock().unwrap();
    t.runs += 1;
    t.iterations += a.iterations;
    t.violations += a.cache_violations;
    t.worst_identity = t.worst_identity.max(a.max_identity_rel_err);
}

fn audited(opts: RunOptions) -> RunOptions {
    RunOptions { audit: true, ..opts }
}

fn saddle(
    p: &SaddleProblem,
    s: &StepSizes,
    samplers: &BlockSamplers,
    relax: &RelaxationSampler,
    start: &SaddlePoint,
    opts: RunOptions,
    observer: &mut dyn FnMut(&SaddleState, &stosplit_core::StepRecord),
) -> Result<SaddleRun, String> {
    let run = ok(run_saddle_with(p, s, samplers, relax, start, &audited(opts), observer))?;
    record(&run.audit);
    Ok(run)
}

fn criterion_1() -> Outcome {
    let mut worst_grid = 0.0f64;
    let mut cases = 0;
    let one_d: Vec<(MaxMonotoneOp, Box<dyn Fn(f64) -> f64>)> = vec![
        (MaxMonotoneOp::Zero, Box::new(|_| 0.0)),
        (MaxMonotoneOp::l1(0.7), Box::new(|z: f64| 0.7 * z.abs())),
        (MaxMonotoneOp::boxed(vec![-1.0], vec![2.0]), Box::new(|z| indicator((-1.0..=2.0).contains(&z)))),
        (MaxMonotoneOp::origin_cone(1), Box::new(|z: f64| indicator(z.abs() < STEP / 2.0))),
        (MaxMonotoneOp::quadratic(vec![1.5], vec![0.5]), Box::new(|z: f64| 0.75 * (z - 0.5).powi(2))),
        (MaxMonotoneOp::affine(LinearMap::scalar(1, 2.0), vec![-1.0]), Box::new(|z: f64| z * z - z)),
        (MaxMonotoneOp::l1(1.0).shifted(vec![0.3]), Box::new(|z: f64| z.abs() - 0.3 * z)),
    ];
    for (op, f) in &one_d {
        for g in [0.5, 1.0, 2.0] {
            for x in [-3.7, -0.4, 0.0, 0.25, 1.3, 5.0] {
                let got = ok(op.resolvent(g, &[x]))?[0];
                let want = grid_prox_1d(f.as_ref(), x, g);
                let gap = (got - want).abs();
                ensure!(gap <= 2.0 * STEP, "{op:?} gamma {g} x {x}: {got} vs grid {want}");
                worst_grid = worst_grid.max(gap);
                cases += 1;
            }
        }
    }
    let m = ok(LinearMap::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]))?;
    let two_d: Vec<(MaxMonotoneOp, Box<dyn Fn(f64, f64) -> f64>)> = vec![
        (MaxMonotoneOp::l1(0.5), Box::new(|a: f64, b: f64| 0.5 * (a.abs() + b.abs()))),
        (
            MaxMonotoneOp::boxed(vec![-1.0, 0.0], vec![1.0, 0.5]),
            Box::new(|a, b| indicator((-1.0..=1.0).contains(&a) && (0.0..=0.5).contains(&b))),
        ),
        (
            MaxMonotoneOp::quadratic(vec![1.0, 0.25], vec![1.0, -2.0]),
            Box::new(|a: f64, b: f64| 0.5 * (a - 1.0).powi(2) + 0.125 * (b + 2.0).powi(2)),
        ),
        (
            MaxMonotoneOp::affine(m, vec![0.5, -1.0]),
            Box::new(|a: f64, b: f64| a * a + 0.5 * a * b + 0.5 * b * b + 0.5 * a - b),
        ),
    ];
    for (op, f) in &two_d {
        for x in [[2.0, -1.5], [-0.3, 0.8]] {
            let got = ok(op.resolvent(1.0, &x))?;
            let want = grid_prox_2d(f.as_ref(), x, 1.0);
            for j in 0..2 {
                let gap = (got[j] - want[j]).abs();
                ensure!(gap <= 2.0 * STEP, "{op:?} x {x:?}: {got:?} vs grid {want:?}");
                worst_grid = worst_grid.max(gap);
            }
            cases += 1;
        }
    }

    let skew = ok(LinearMap::from_rows(&[vec![0.3, 1.0], vec![-1.0, 0.0]]))?;
    let ops = [
        MaxMonotoneOp::Zero,
        MaxMonotoneOp::l1(1.3),
        MaxMonotoneOp::boxed(vec![-1.0, -2.0], vec![0.5, 2.0]),
        MaxMonotoneOp::origin_cone(2),
        MaxMonotoneOp::quadratic(vec![0.0, 3.0], vec![1.0, -1.0]),
        MaxMonotoneOp::affine(skew, vec![0.1, 0.2]),
        MaxMonotoneOp::l1(0.4).shifted(vec![1.0, -0.5]),
    ];
    let mut rng = stream_rng(11, Stream::Init);
    let mut worst_fne = f64::NEG_INFINITY;
    for op in &ops {
        for _ in 0..1000 {
            let gamma = rng.random_range(0.05..5.0);
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
            let r = ok(check_firm_nonexpansive(op, gamma, &x, &y))?;
            ensure!(r <= 1e-10, "{op:?}: firm nonexpansiveness residual {r}");
            worst_fne = worst_fne.max(r);
        }
    }
    Ok(format!(
        "{cases} resolvents within {worst_grid:.1e} of the grid oracle; {} operators x 1000 pairs, worst residual {worst_fne:.1e}",
        ops.len()
    ))
}

const FEJER_SEEDS: u64 = 50;
const FEJER_ITERS: usize = 500;

fn criterion_2() -> Outcome {
    let relax = || RelaxationSampler::Uniform { lo: 0.1, hi: 2.0 };
    let mut runs = 0;
    let m = ok(LinearMap::from_rows(&[vec![1.0, 2.0], vec![-2.0, 0.5]]))?;
    let ops = [
        (MaxMonotoneOp::l1(1.0), vec![0.0, 0.0]),
        (MaxMonotoneOp::affine(m, vec![1.0, -1.0]), vec![0.0, 0.0]),
        (MaxMonotoneOp::boxed(vec![-1.0, 0.5], vec![2.0, 1.0]).shifted(vec![1.0, 0.0]), vec![2.0, 0.75]),
    ];
    for (op, fallback) in &ops {
        let zero = op.known_zero(2).unwrap_or_else(|| fallback.clone());
        let r = ok(op.graph_residual(&zero, &[0.0, 0.0]))?;
        ensure!(r <= 1e-12, "{op:?}: reference is not a zero ({r})");
        for seed in 0..FEJER_SEEDS {
            let cfg = PpaConfig {
                op: op.clone(),
                gamma: GammaRule::Alternating { a: 0.3, b: 2.0 },
                errors: ErrorRule::Zero,
                relax: RelaxationSampler::Uniform { lo: 0.1, hi: 1.99 },
            };
            let x0 = [5.0 - seed as f64 * 0.2, -3.0 + seed as f64 * 0.1];
            let run = ok(run_ppa(&cfg, &x0, FEJER_ITERS, seed, Some(&zero), 0))?;
            let bad = fejer_check(&run.trace, 1e-10);
            ensure!(bad.is_empty(), "ppa {op:?} seed {seed}: violations at {bad:?}");
            runs += 1;
        }
    }
    for seed in 0..FEJER_SEEDS {
        let mut rng = stream_rng(seed, Stream::Init);
        let (p, z) = ok(instances::random_saddle(&mut rng))?;
        let s = StepSizes::largest(&p, quarter_inv(p.alpha()) + 0.2, 1.0);
        let start = ok(SaddlePoint::from_flat(&p, &vec![2.0; p.state_dim()]))?;
        let opts = RunOptions::new(FEJER_ITERS, seed).with_reference(z.flat());
        let run = saddle(&p, &s, &BlockSamplers::full(2, 2), &relax(), &start, opts, &mut |_, _| {})?;
        let bad = fejer_check(&run.trace, 1e-10);
        ensure!(bad.is_empty(), "saddle seed {seed}: violations at {bad:?}");
        runs += 1;

        let (q, x, v) = ok(instances::random_kt(&mut rng))?;
        let s = KTStepSizes::uniform(&q, 0.2, 1.0, 1.0);
        let opts = RunOptions::new(FEJER_ITERS, seed).with_reference([&x[..], &v].concat());
        let run = ok(run_kt(&q, &s, &BlockSamplers::full(2, 2), &relax(), &vec![2.0; x.len()], &vec![-1.0; v.len()], &opts))?;
        let bad = fejer_check(&run.trace, 1e-10);
        ensure!(bad.is_empty(), "kt seed {seed}: violations at {bad:?}");
        runs += 1;
    }
    Ok(format!("{runs} runs x {FEJER_ITERS} iterations, no violations"))
}

fn abs_ppa(gamma: GammaRule, errors: ErrorRule, relax: RelaxationSampler) -> PpaConfig {
    PpaConfig {
        op: MaxMonotoneOp::l1(1.0),
        gamma,
        errors,
        relax,
    }
}

fn criterion_3() -> Outcome {
    let cfg = abs_ppa(GammaRule::Constant { value: 1.0 }, ErrorRule::Zero, RelaxationSampler::constant(1.0));
    let run = ok(run_ppa(&cfg, &[5.0], 12, 0, Some(&[0.0]), 0))?;
    let dist = run.trace.distances().ok_or("no distances")?;
    let mut x = 5.0f64;
    for (n, d) in dist.iter().enumerate() {
        ensure!((d - x).abs() <= 1e-12, "n {n}: {d} vs {x}");
        x = (x - 1.0).max(0.0);
    }
    let geo = ErrorRule::Geometric { c: 1.0, q: 0.5 };
    let cases = [
        (GammaRule::Constant { value: 1.0 }, geo.clone(), RelaxationSampler::Uniform { lo: 0.5, hi: 1.5 }, Regime::I),
        (GammaRule::Alternating { a: 0.5, b: 2.0 }, geo.clone(), RelaxationSampler::constant(1.5), Regime::II),
        (GammaRule::InverseSqrt { scale: 1.0 }, geo.clone(), RelaxationSampler::constant(1.0), Regime::III),
        (GammaRule::Harmonic { scale: 1.0 }, geo.clone(), RelaxationSampler::constant(1.0), Regime::None),
        (
            GammaRule::Constant { value: 1.0 },
            ErrorRule::Constant { value: vec![0.1] },
            RelaxationSampler::constant(1.0),
            Regime::None,
        ),
        (GammaRule::InverseSqrt { scale: 1.0 }, geo, RelaxationSampler::constant(1.5), Regime::None),
    ];
    for (g, e, r, want) in cases {
        let cfg = abs_ppa(g, e, r);
        let got = validate_regime(&cfg);
        ensure!(got == want, "{cfg:?}: classified {got:?}, expected {want:?}");
    }
    Ok(format!("{} iterates exact to 1e-12; 6 regime cases classified", dist.len()))
}

fn scalar_objective(x: f64) -> f64 {
    0.5 * (x - 3.0).powi(2) + x.abs() + indicator((-1.0..=1.5).contains(&x))
}

fn box_objective(a: f64, b: f64) -> f64 {
    let feasible = a + b <= 1.8 && a + b >= -10.0 && (a - b).abs() <= 0.5;
    0.5 * (a - 3.0).powi(2) + 0.5 * (b - 1.0).powi(2) + a.abs() + b.abs() + indicator(feasible)
}

/// Grid minimizer of `f` on `[-5, 5]` at step 1e-4.
fn grid_min_1d(f: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for j in 0..=100_000 {
        let z = -5.0 + j as f64 * STEP;
        let v = f(z);
        if v < best.0 {
            best = (v, z);
        }
    }
    best.1
}

/// Coarse scan at step 1e-2, then step 1e-4 around the coarse winner.
fn grid_min_2d(f: impl Fn(f64, f64) -> f64) -> [f64; 2] {
    let scan = |c: [f64; 2], half: f64, h: f64| {
        let n = (2.0 * half / h).round() as i64;
        let mut best = (f64::INFINITY, c);
        for i in 0..=n {
            for j in 0..=n {
                let z = [c[0] - half + i as f64 * h, c[1] - half + j as f64 * h];
                let v = f(z[0], z[1]);
                if v < best.0 {
                    best = (v, z);
                }
            }
        }
        best.1
    };
    scan(scan([0.0, 0.0], 5.0, 1e-2), 0.03, STEP)
}

/// Iterations until `‖x − x̄‖∞ ≤ tol` holds for the rest of the run.
fn hitting_time(p: &SaddleProblem, samplers: &BlockSamplers, seed: u64, xbar: &[f64], tol: f64, budget: usize) -> Result<Option<usize>, String> {
    let s = StepSizes::largest(p, 0.3, 1.0);
    let mut last_bad = 0usize;
    saddle(
        p,
        &s,
        samplers,
        &RelaxationSampler::constant(1.0),
        &SaddlePoint::zeros(p),
        RunOptions::new(budget, seed),
        &mut |st, rec| {
            if st.x.iter().zip(xbar).any(|(a, b)| (a - b).abs() > tol) {
                last_bad = rec.n + 1;
            }
        },
    )?;
    Ok((last_bad < budget).then_some(last_bad))
}

fn criterion_4() -> Outcome {
    let mut rng = stream_rng(5, Stream::Init);
    let mut worst_fixed = 0.0f64;
    for _ in 0..20 {
        let (p, z) = ok(instances::random_saddle(&mut rng))?;
        let s = StepSizes::largest(&p, quarter_inv(p.alpha()) + 0.2, 1.0);
        let mut st = ok(SaddleState::new(&p, &z))?;
        ok(saddle_iterate(&p, &s, &mut st, &[0, 1], &[0, 1], 1.0, p.alpha(), 1e-24))?;
        let gap = st.flat().iter().zip(z.flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure!(gap <= 1e-10, "constructed zero moved by {gap}");
        worst_fixed = worst_fixed.max(gap);
    }

    let xbar = grid_min_1d(scalar_objective);
    let (p, _) = instances::scalar_min_problem();
    let n_full = hitting_time(&p, &BlockSamplers::full(1, 1), 0, &[xbar], 1e-4, 5000)?
        .ok_or("scalar instance did not reach 1e-4 of the grid minimizer in 5000 iterations")?;

    let bbar = grid_min_2d(box_objective);
    let (q, _) = instances::box_min_problem();
    let mut worst_single = 0;
    for (name, prob, target) in [("scalar", &p, &[xbar][..]), ("box", &q, &bbar[..])] {
        let samplers = BlockSamplers::singleton(prob.num_primal(), prob.num_dual());
        for seed in 0..20 {
            let n = hitting_time(prob, &samplers, seed, target, 1e-3, 20_000)?
                .ok_or_else(|| format!("{name} singleton seed {seed} did not reach 1e-3 in 20000 iterations"))?;
            worst_single = worst_single.max(n);
        }
    }
    Ok(format!(
        "fixed point gap {worst_fixed:.1e}; full activation within 1e-4 after {n_full} iterations; 40 singleton runs within 1e-3 by {worst_single}"
    ))
}

/// First iteration whose KT residual is at most `tol`.
fn kt_hit(samplers: &BlockSamplers, seed: u64, tol: f64, budget: usize) -> Result<Option<usize>, String> {
    let p = instances::scalar_kt();
    let s = KTStepSizes::uniform(&p, 0.5, 1.0, 1.0);
    let mut hit = None;
    run_kt_with(&p, &s, samplers, &RelaxationSampler::constant(1.0), &[3.0], &[2.0], &RunOptions::new(budget, seed), &mut |st, rec| {
        if hit.is_none() && kt_residual(&p, &st.x, &st.vstar).is_ok_and(|r| r <= tol) {
            hit = Some(rec.n + 1);
        }
    })
    .map_err(|e| e.to_string())?;
    Ok(hit)
}

fn criterion_5() -> Outcome {
    let (mut full, mut single) = (0, 0);
    for seed in 0..20 {
        let n = kt_hit(&BlockSamplers::full(1, 1), seed, 1e-6, 2000)?
            .ok_or_else(|| format!("full activation seed {seed}: residual above 1e-6 after 2000 iterations"))?;
        full = full.max(n);
        let n = kt_hit(&BlockSamplers::singleton(1, 1), seed, 1e-4, 10_000)?
            .ok_or_else(|| format!("singleton seed {seed}: residual above 1e-4 after 10000 iterations"))?;
        single = single.max(n);
    }
    Ok(format!(
        "20/20 full-activation runs at 1e-6 by iteration {full}; 20/20 singleton runs at 1e-4 by iteration {single}"
    ))
}

fn criterion_6() -> Outcome {
    let relax = RelaxationSampler::Uniform { lo: 0.3, hi: 1.9 };
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = stream_rng(seed, Stream::Init);
        let (p, _) = ok(instances::random_saddle(&mut rng))?;
        let alpha = p.alpha();
        let s = StepSizes::largest(&p, quarter_inv(alpha) + 0.5, 1.0);
        let start = ok(SaddlePoint::from_flat(&p, &vec![1.0; p.state_dim()]))?;
        let mut direct = Vec::new();
        saddle(&p, &s, &BlockSamplers::full(2, 2), &relax, &start, RunOptions::new(200, seed), &mut |st, _| {
            direct.push(st.flat())
        })?;
        let cfg = EngineConfig {
            alpha,
            ..EngineConfig::default()
        };
        let mut sup = |n: usize, u: &[f64], _: &mut _| Ok(saddle_sample(&p, &s, n, u));
        let mut via = Vec::new();
        ok(run_with(&start.flat(), &mut sup, &relax, &cfg, 200, seed, &mut |ev| via.push(ev.after.to_vec())))?;
        ensure!(direct.len() == 200 && via.len() == 200, "saddle seed {seed}: short trajectory");
        for (n, (a, b)) in direct.iter().zip(&via).enumerate() {
            let g = rel_gap(a, b);
            ensure!(g <= 1e-10, "saddle seed {seed} n {n}: gap {g}");
            worst = worst.max(g);
        }

        let (q, _, _) = ok(instances::random_kt(&mut rng))?;
        let s = KTStepSizes::uniform(&q, 0.2, 0.7, 1.3);
        let x0 = vec![1.0; q.h.total_dim()];
        let v0 = vec![-0.5; q.g.total_dim()];
        let mut direct = Vec::new();
        ok(run_kt_with(&q, &s, &BlockSamplers::full(2, 2), &relax, &x0, &v0, &RunOptions::new(200, seed), &mut |st, _| {
            direct.push(st.flat())
        }))?;
        let mut sup = |n: usize, u: &[f64], _: &mut _| Ok(kt_sample(&q, &s, n, u));
        let mut via = Vec::new();
        ok(run_with(&[&x0[..], &v0].concat(), &mut sup, &relax, &EngineConfig::default(), 200, seed, &mut |ev| {
            via.push(ev.after.to_vec())
        }))?;
        ensure!(direct.len() == 200 && via.len() == 200, "kt seed {seed}: short trajectory");
        for (n, (a, b)) in direct.iter().zip(&via).enumerate() {
            let g = rel_gap(a, b);
            ensure!(g <= 1e-10, "kt seed {seed} n {n}: gap {g}");
            worst = worst.max(g);
        }
    }
    Ok(format!("10 saddle and 10 KT seeds x 200 iterations, largest relative gap {worst:.1e}"))
}

const WINDOWS: usize = 10_000;

fn criterion_7() -> Outcome {
    let samplers = [
        ok(BlockSampler::new(BlockLaw::Full, 3, 1))?,
        ok(BlockSampler::new(BlockLaw::UniformSingleton, 3, 1))?,
        ok(BlockSampler::new(BlockLaw::UniformSingleton, 3, 2))?,
        ok(BlockSampler::new(BlockLaw::Bernoulli { probs: vec![0.3, 0.5, 0.05] }, 3, 1))?,
        ok(BlockSampler::new(BlockLaw::Bernoulli { probs: vec![0.1, 0.1, 0.1] }, 3, 3))?,
    ];
    for (j, s) in samplers.iter().enumerate() {
        let mut rng = stream_rng(17 + j as u64, Stream::Blocks);
        let mut hits = vec![0usize; s.count];
        let mut n = 1;
        for _ in 0..WINDOWS {
            let mut seen = vec![false; s.count];
            for _ in 0..s.window {
                for i in s.sample(n, &mut rng) {
                    seen[i] = true;
                }
                n += 1;
            }
            for (h, s) in hits.iter_mut().zip(seen) {
                *h += usize::from(s);
            }
        }
        for (i, h) in hits.iter().enumerate() {
            let f = *h as f64 / WINDOWS as f64;
            let p = ok(s.cover_probability(i))?;
            let se = (p * (1.0 - p) / WINDOWS as f64).sqrt();
            ensure!((f - p).abs() <= 3.0 * se, "{s:?} index {i}: frequency {f} vs {p}");
        }
    }
    let laws = [
        RelaxationSampler::constant(1.3),
        RelaxationSampler::Uniform { lo: 0.2, hi: 1.8 },
        RelaxationSampler::TwoPoint { low: 0.5, high: 2.5, p_high: 0.2 },
        RelaxationSampler::TwoPoint { low: 1.0, high: 1.9, p_high: 0.7 },
    ];
    for law in &laws {
        let mut rng = stream_rng(8, Stream::Relax);
        let vals: Vec<f64> = (0..100_000)
            .map(|_| {
                let l = law.sample(&mut rng);
                l * (2.0 - l)
            })
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        ensure!(
            (mean - law.moment()).abs() <= 3.0 * sd / n.sqrt() + 1e-9,
            "{law:?}: Monte Carlo {mean} vs {}",
            law.moment()
        );
    }
    let good = RelaxationSampler::TwoPoint { low: 0.5, high: 2.5, p_high: 0.2 };
    ensure!((good.moment() - 0.35).abs() <= 1e-15, "moment {}", good.moment());
    ensure!(good.prob_above_two() == 0.2, "P(λ>2) = {}", good.prob_above_two());
    ensure!(good.validate(2.5).is_ok(), "super-relaxation law rejected");
    let bad = RelaxationSampler::TwoPoint { low: 0.5, high: 2.5, p_high: 0.5 };
    ensure!(bad.validate(2.5).is_err(), "equal-weight law accepted");
    Ok(format!(
        "{} samplers over {WINDOWS} windows and {} relaxation laws over 1e5 draws within 3 SE; super-relaxation law accepted, equal-weight variant rejected",
        samplers.len(),
        laws.len()
    ))
}

fn criterion_8() -> Outcome {
    let p = instances::scalar_kt();
    let (xb, vb) = instances::SCALAR_KT_POINT;
    let s = KTStepSizes::uniform(&p, 0.5, 1.0, 1.0);
    let law = RelaxationSampler::TwoPoint { low: 0.5, high: 2.5, p_high: 0.2 };
    let (seeds, iters) = (500usize, 500usize);
    let mut sq = vec![vec![0.0; seeds]; iters + 1];
    for seed in 0..seeds {
        let mut opts = RunOptions::new(iters, seed as u64).with_reference(vec![xb, vb]);
        opts.rho = 2.5;
        let run = ok(run_kt(&p, &s, &BlockSamplers::full(1, 1), &law, &[3.0], &[2.0], &opts))?;
        for (n, d) in run.trace.distances().ok_or("no distances")?.into_iter().enumerate() {
            sq[n][seed] = d * d;
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for n in 0..iters {
        let diff: Vec<f64> = (0..seeds).map(|j| sq[n + 1][j] - sq[n][j]).collect();
        let m = diff.iter().sum::<f64>() / seeds as f64;
        let sd = (diff.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (seeds as f64 - 1.0)).sqrt();
        let se = sd / (seeds as f64).sqrt();
        ensure!(m <= 3.0 * se, "n {n}: mean increase {m} exceeds 3 SE ({se})");
        if se > 0.0 {
            worst = worst.max(m / se);
        }
    }
    let drop = sq[0].iter().sum::<f64>() / sq[iters].iter().sum::<f64>().max(f64::MIN_POSITIVE);
    Ok(format!(
        "{seeds} seeds x {iters} iterations, largest mean increase {worst:.2} SE; mean squared distance fell by a factor {drop:.1e}"
    ))
}

fn criterion_9() -> Outcome {
    let relax = RelaxationSampler::Uniform { lo: 0.1, hi: 2.0 };
    for seed in 0..20u64 {
        let mut rng = stream_rng(seed, Stream::Init);
        let (p, z) = ok(instances::random_saddle(&mut rng))?;
        let s = StepSizes::largest(&p, quarter_inv(p.alpha()) + 0.2, 1.0);
        let start = ok(SaddlePoint::from_flat(&p, &vec![-1.0; p.state_dim()]))?;
        for samplers in [
            BlockSamplers::singleton(2, 2),
            BlockSamplers {
                primal: ok(BlockSampler::new(BlockLaw::Bernoulli { probs: vec![0.5, 0.3] }, 2, 2))?,
                dual: ok(BlockSampler::new(BlockLaw::Bernoulli { probs: vec![0.2, 0.6] }, 2, 2))?,
            },
        ] {
            let opts = RunOptions::new(400, seed).with_reference(z.flat());
            saddle(&p, &s, &samplers, &relax, &start, opts, &mut |_, _| {})?;
        }
    }
    let t = AUDITS.lock().unwrap();
    ensure!(t.violations == 0, "{} cache violations over {} saddle runs", t.violations, t.runs);
    ensure!(t.worst_identity <= 1e-12, "identity relative error {:.3e}", t.worst_identity);
    Ok(format!(
        "{} audited saddle runs ({} iterations): 0 cache violations, largest identity error {:.1e}",
        t.runs, t.iterations, t.worst_identity
    ))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Trace CSV bytes under `dir`, keyed by path relative to `dir`.
fn traces(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in ok(std::fs::read_dir(&d))? {
            let path = ok(e)?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n.to_string_lossy().starts_with("trace_seed_")) {
                let rel = path.strip_prefix(dir).map_err(|e| e.to_string())?.to_path_buf();
                out.insert(rel, ok(std::fs::read(&path))?);
            }
        }
    }
    Ok(out)
}

fn criterion_10() -> Outcome {
    let mut files = 0;
    let mut configs = 0;
    let mut entries: Vec<PathBuf> = ok(std::fs::read_dir(configs_dir()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    entries.sort();
    for cfg in entries {
        let tmp = ok(tempfile::tempdir())?;
        let is_sweep = ok(std::fs::read_to_string(&cfg))?.contains("[sweep]");
        let mut outputs = Vec::new();
        for pass in ["a", "b"] {
            let mut args = CommonArgs::new(&cfg);
            args.out = Some(tmp.path().join(pass));
            if is_sweep {
                ok(cmd_sweep(&args))?;
            } else {
                let s = ok(cmd_run(&args, None))?;
                for r in &s.per_seed {
                    if let Some(v) = r.cache_violations {
                        ensure!(v == 0, "{}: seed {} cache violations {v}", cfg.display(), r.seed);
                    }
                    if let Some(e) = r.max_identity_rel_err {
                        ensure!(e <= 1e-12, "{}: seed {} identity error {e}", cfg.display(), r.seed);
                    }
                }
            }
            outputs.push(traces(&tmp.path().join(pass))?);
        }
        ensure!(!outputs[0].is_empty(), "{}: no trace files", cfg.display());
        ensure!(outputs[0] == outputs[1], "{}: re-run traces differ", cfg.display());
        files += outputs[0].len();
        configs += 1;
    }
    Ok(format!("{configs} configs re-run, {files} trace CSVs byte-identical"))
}

fn main() -> ExitCode {
    let criteria: [(fn() -> Outcome, Option<u64>); 10] = [
        (criterion_1, Some(10)),
        (criterion_2, Some(60)),
        (criterion_3, None),
        (criterion_4, Some(300)),
        (criterion_5, Some(120)),
        (criterion_6, None),
        (criterion_7, None),
        (criterion_8, None),
        (criterion_9, None),
        (criterion_10, None),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if took > Duration::from_secs(*b) => Err(format!("took {took:.1?}, budget {b} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {} PASS: {detail} [{took:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL: {detail} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
