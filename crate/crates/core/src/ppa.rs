//! Stochastic proximal point iteration `x⁺ = x + λ(J_{γA}x − e − x)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{format_active, Trace};
use crate::engine::{self, EngineConfig, GraphSample};
use crate::error::{Error, Result};
use crate::operators::MaxMonotoneOp;
use crate::sampling::{RelaxationSampler, StreamRng, TrajectoryRng};
use crate::spaces::dist_sq;

/// Rule producing `γₙ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaRule {
    Constant { value: f64 },
    /// `a` on even `n`, `b` on odd `n`.
    Alternating { a: f64, b: f64 },
    /// `scale / sqrt(n + 1)`.
    InverseSqrt { scale: f64 },
    /// `scale / (n + 1)`.
    Harmonic { scale: f64 },
}

impl GammaRule {
    pub fn at(&self, n: usize) -> f64 {
        let k = (n + 1) as f64;
        match *self {
            GammaRule::Constant { value } => value,
            GammaRule::Alternating { a, b } => {
                if n % 2 == 0 {
                    a
                } else {
                    b
                }
            }
            GammaRule::InverseSqrt { scale } => scale / k.sqrt(),
            GammaRule::Harmonic { scale } => scale / k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            GammaRule::Constant { value } => value > 0.0 && value.is_finite(),
            GammaRule::Alternating { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            GammaRule::InverseSqrt { scale } | GammaRule::Harmonic { scale } => scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("gamma", "step sizes must be positive and finite"))
        }
    }

    pub fn is_identically_one(&self) -> bool {
        match *self {
            GammaRule::Constant { value } => value == 1.0,
            GammaRule::Alternating { a, b } => a == 1.0 && b == 1.0,
            _ => false,
        }
    }

    pub fn infimum(&self) -> f64 {
        match *self {
            GammaRule::Constant { value } => value,
            GammaRule::Alternating { a, b } => a.min(b),
            GammaRule::InverseSqrt { .. } | GammaRule::Harmonic { .. } => 0.0,
        }
    }

    /// Whether `Σ γₙ² = +∞`.
    pub fn square_sum_diverges(&self) -> bool {
        !matches!(self, GammaRule::Harmonic { .. })
    }
}

/// Rule producing the resolvent error `eₙ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorRule {
    Zero,
    /// Deterministic `c qⁿ u` with `u` the normalized all-ones vector.
    Geometric { c: f64, q: f64 },
    /// Independent Gaussian coordinates with standard deviation `c qⁿ`.
    Gaussian { c: f64, q: f64 },
    /// The same vector at every iteration; not summable unless zero.
    Constant { value: Vec<f64> },
}

impl ErrorRule {
    pub fn at(&self, n: usize, dim: usize, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            ErrorRule::Zero => vec![0.0; dim],
            ErrorRule::Geometric { c, q } => {
                let s = c * q.powi(n as i32) / (dim as f64).sqrt();
                vec![s; dim]
            }
            ErrorRule::Gaussian { c, q } => {
                let s = c * q.powi(n as i32);
                (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            ErrorRule::Constant { value } => value.clone(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ErrorRule::Zero => Ok(()),
            ErrorRule::Geometric { c, q } | ErrorRule::Gaussian { c, q } => {
                if *c >= 0.0 && c.is_finite() && *q > 0.0 && *q < 1.0 {
                    Ok(())
                } else {
                    Err(Error::param("errors", "need c >= 0 and 0 < q < 1"))
                }
            }
            ErrorRule::Constant { value } => {
                if value.len() != dim {
                    Err(Error::dim("constant error vector", dim, value.len()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ErrorRule::Zero => true,
            ErrorRule::Geometric { c, .. } | ErrorRule::Gaussian { c, .. } => *c == 0.0,
            ErrorRule::Constant { value } => value.iter().all(|v| *v == 0.0),
        }
    }

    /// Whether `Σ sqrt(E‖eₙ‖²) < +∞` (which also bounds `E‖eₙ‖²`).
    pub fn summable(&self) -> bool {
        !matches!(self, ErrorRule::Constant { .. }) || self.is_zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpaConfig {
    pub op: MaxMonotoneOp,
    pub gamma: GammaRule,
    pub errors: ErrorRule,
    pub relax: RelaxationSampler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    I,
    II,
    III,
    None,
}

/// First convergence regime whose hypotheses the declared rules satisfy.
pub fn validate_regime(cfg: &PpaConfig) -> Regime {
    let (lo, hi) = cfg.relax.support();
    if !(lo > 0.0 && hi < 2.0) || cfg.gamma.validate().is_err() {
        return Regime::None;
    }
    let moment = cfg.relax.moment();
    let summable = cfg.errors.summable();
    if cfg.gamma.is_identically_one() && moment > 0.0 && summable {
        Regime::I
    } else if moment > 0.0 && cfg.gamma.infimum() > 0.0 && summable {
        Regime::II
    } else if cfg.gamma.square_sum_diverges() && summable && cfg.relax.is_constant_one() {
        Regime::III
    } else {
        Regime::None
    }
}

/// `x + λ(J_{γA}x − e − x)` for `γ > 0` and `0 < λ < 2`.
pub fn ppa_step(op: &MaxMonotoneOp, x: &[f64], gamma: f64, e: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda < 2.0) {
        return Err(Error::param("lambda", format!("{lambda} is outside (0, 2)")));
    }
    if e.len() != x.len() {
        return Err(Error::dim("ppa error vector", x.len(), e.len()));
    }
    let j = op.resolvent(gamma, x)?;
    Ok(x.iter()
        .zip(j.iter().zip(e))
        .map(|(xi, (ji, ei))| xi + lambda * (ji - ei - xi))
        .collect())
}

/// The engine supplier realizing the iteration: `w = J_{γA}x − e`,
/// `w* = (x − w)/γ`, `q = w`, `c* = f* = 0`, `e* = −e/γ`.
pub struct PpaSupplier<'a> {
    pub cfg: &'a PpaConfig,
}

impl PpaSupplier<'_> {
    fn build(&self, n: usize, x: &[f64], rng: &mut StreamRng) -> Result<(GraphSample, f64)> {
        let gamma = self.cfg.gamma.at(n);
        let err = self.cfg.errors.at(n, x.len(), rng);
        let j = self.cfg.op.resolvent(gamma, x)?;
        let w: Vec<f64> = j.iter().zip(&err).map(|(a, b)| a - b).collect();
        let wstar: Vec<f64> = x.iter().zip(&w).map(|(a, b)| (a - b) / gamma).collect();
        let estar = err.iter().map(|v| -v / gamma).collect();
        let zeros = vec![0.0; x.len()];
        let s = GraphSample {
            q: w.clone(),
            w,
            wstar,
            e: err,
            estar,
            cstar: zeros.clone(),
            fstar: zeros,
        };
        Ok((s, gamma))
    }
}

impl engine::Supplier for PpaSupplier<'_> {
    fn sample(&mut self, n: usize, x: &[f64], rng: &mut StreamRng) -> Result<GraphSample> {
        Ok(self.build(n, x, rng)?.0)
    }
}

pub struct PpaRun {
    pub trace: Trace,
    /// Largest `‖x_engine − x_direct‖ / max(1, ‖x_direct‖)` over the run.
    pub max_engine_gap: f64,
}

/// Runs the iteration directly and, in parallel, through the engine update
/// with `θ = γ`; the trajectory follows the direct formula.
pub fn run_ppa(
    cfg: &PpaConfig,
    x0: &[f64],
    n_iter: usize,
    seed: u64,
    reference: Option<&[f64]>,
    residual_every: usize,
) -> Result<PpaRun> {
    cfg.gamma.validate()?;
    cfg.errors.validate(x0.len())?;
    cfg.relax.validate(2.0)?;
    if cfg.relax.support().1 >= 2.0 {
        return Err(Error::param("relaxation", "proximal point relaxation must stay below 2"));
    }
    let ecfg = EngineConfig::default();
    let mut rng = TrajectoryRng::new(seed);
    let sup = PpaSupplier { cfg };
    let mut trace = Trace::new("", seed);
    let mut x = x0.to_vec();
    let mut max_gap = 0.0f64;
    let dist = |x: &[f64]| reference.map(|z| dist_sq(x, z).sqrt());
    let residual = |x: &[f64]| -> Result<f64> {
        let j = cfg.op.resolvent(1.0, x)?;
        Ok(dist_sq(x, &j).sqrt())
    };
    for n in 0..n_iter {
        let (s, _gamma) = sup.build(n, &x, &mut rng.noise)?;
        let lambda = cfg.relax.sample(&mut rng.relax);
        // Direct formula, reusing the sampled error.
        let direct: Vec<f64> = x
            .iter()
            .zip(&s.w)
            .map(|(xi, wi)| xi + lambda * (wi - xi))
            .collect();
        let mut via_engine = x.clone();
        let (rec, _) = engine::engine_step(&mut via_engine, &s, lambda, &ecfg, n)?;
        let scale = crate::spaces::norm_sq(&direct).sqrt().max(1.0);
        max_gap = max_gap.max(dist_sq(&via_engine, &direct).sqrt() / scale);
        if direct.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: n, what: "ppa iterate".into() });
        }
        let res = if residual_every > 0 && n % residual_every == 0 {
            Some(residual(&x)?)
        } else {
            None
        };
        trace.rows.push(rec.to_row(dist(&x), res, format_active(&[0], &[])));
        x = direct;
    }
    trace.final_dist = dist(&x);
    trace.final_residual = Some(residual(&x)?);
    trace.final_state = x;
    Ok(PpaRun {
        trace,
        max_engine_gap: max_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_cfg() -> PpaConfig {
        PpaConfig {
            op: MaxMonotoneOp::l1(1.0),
            gamma: GammaRule::Constant { value: 1.0 },
            errors: ErrorRule::Zero,
            relax: RelaxationSampler::constant(1.0),
        }
    }

    #[test]
    fn step_examples() {
        let op = MaxMonotoneOp::l1(1.0);
        assert_eq!(ppa_step(&op, &[5.0], 1.0, &[0.0], 1.0).unwrap(), vec![4.0]);
        assert_eq!(ppa_step(&op, &[0.5], 1.0, &[0.0], 1.0).unwrap(), vec![0.0]);
        assert_eq!(ppa_step(&op, &[0.0], 1.0, &[0.0], 1.7).unwrap(), vec![0.0]);
        assert_eq!(ppa_step(&op, &[5.0], 1.0, &[0.5], 1.5).unwrap(), vec![2.75]);
        assert!(ppa_step(&op, &[5.0], 1.0, &[0.0], 2.0).is_err());
        assert!(ppa_step(&op, &[5.0], 0.0, &[0.0], 1.0).is_err());
    }

    #[test]
    fn regime_examples() {
        assert_eq!(validate_regime(&abs_cfg()), Regime::I);
        let ii = PpaConfig {
            gamma: GammaRule::Constant { value: 0.5 },
            errors: ErrorRule::Geometric { c: 1.0, q: 0.5 },
            relax: RelaxationSampler::TwoPoint { low: 0.5, high: 1.5, p_high: 0.5 },
            ..abs_cfg()
        };
        assert_eq!(validate_regime(&ii), Regime::II);
        let iii = PpaConfig {
            gamma: GammaRule::InverseSqrt { scale: 1.0 },
            ..abs_cfg()
        };
        assert_eq!(validate_regime(&iii), Regime::III);
        let none = PpaConfig {
            gamma: GammaRule::Harmonic { scale: 1.0 },
            ..abs_cfg()
        };
        assert_eq!(validate_regime(&none), Regime::None);
        let biased = PpaConfig {
            errors: ErrorRule::Constant { value: vec![0.1] },
            ..abs_cfg()
        };
        assert_eq!(validate_regime(&biased), Regime::None);
    }

    #[test]
    fn soft_threshold_recursion() {
        let run = run_ppa(&abs_cfg(), &[5.0], 8, 0, Some(&[0.0]), 1).unwrap();
        let d = run.trace.distances().unwrap();
        assert_eq!(d, vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(run.max_engine_gap <= 1e-15);
    }

    #[test]
    fn geometric_recursion() {
        let cfg = PpaConfig {
            op: MaxMonotoneOp::quadratic(vec![1.0], vec![0.0]),
            ..abs_cfg()
        };
        let run = run_ppa(&cfg, &[3.0], 6, 0, Some(&[0.0]), 0).unwrap();
        for (n, d) in run.trace.distances().unwrap().iter().enumerate() {
            assert!((d - 3.0 * 0.5f64.powi(n as i32)).abs() <= 1e-15);
        }
    }

    #[test]
    fn start_at_zero_is_constant() {
        let cfg = PpaConfig {
            relax: RelaxationSampler::Uniform { lo: 0.1, hi: 1.9 },
            ..abs_cfg()
        };
        let run = run_ppa(&cfg, &[0.0, 0.0], 20, 4, Some(&[0.0, 0.0]), 0).unwrap();
        assert_eq!(run.trace.final_state, vec![0.0, 0.0]);
    }
}
