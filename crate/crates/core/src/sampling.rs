//! Random block activation, random relaxation, and per-trajectory RNG streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

/// Named sub-streams of one trajectory. All share the seed's key and differ
/// only in the ChaCha stream id, so they never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Noise = 0,
    Blocks = 1,
    Relax = 2,
    Init = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// The three RNG streams a trajectory consumes.
#[derive(Debug, Clone)]
pub struct TrajectoryRng {
    pub noise: StreamRng,
    pub blocks: StreamRng,
    pub relax: StreamRng,
}

impl TrajectoryRng {
    pub fn new(seed: u64) -> Self {
        TrajectoryRng {
            noise: stream_rng(seed, Stream::Noise),
            blocks: stream_rng(seed, Stream::Blocks),
            relax: stream_rng(seed, Stream::Relax),
        }
    }
}

/// Law of the activated index set at iterations `n ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockLaw {
    Full,
    UniformSingleton,
    /// Index `i` is included independently with probability `probs[i]`;
    /// empty draws are rejected and redrawn.
    Bernoulli { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSampler {
    pub law: BlockLaw,
    pub count: usize,
    pub window: usize,
}

impl BlockSampler {
    pub fn new(law: BlockLaw, count: usize, window: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("count", "index set must be nonempty"));
        }
        if window == 0 {
            return Err(Error::param("window", "must be at least 1"));
        }
        if let BlockLaw::Bernoulli { probs } = &law {
            if probs.len() != count {
                return Err(Error::dim("bernoulli probabilities", count, probs.len()));
            }
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::param("probs", "inclusion probabilities must lie in [0, 1]"));
            }
            if probs.iter().all(|p| *p == 0.0) {
                return Err(Error::param(
                    "probs",
                    "all inclusion probabilities are zero; no nonempty set can be drawn",
                ));
            }
        }
        Ok(BlockSampler { law, count, window })
    }

    pub fn full(count: usize) -> Self {
        BlockSampler::new(BlockLaw::Full, count, 1).expect("count must be positive")
    }

    pub fn uniform_singleton(count: usize) -> Self {
        BlockSampler::new(BlockLaw::UniformSingleton, count, 1).expect("count must be positive")
    }

    /// Sorted nonempty index set for iteration `n`; `n = 0` gives all indices.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        if n == 0 {
            return (0..self.count).collect();
        }
        match &self.law {
            BlockLaw::Full => (0..self.count).collect(),
            BlockLaw::UniformSingleton => vec![rng.random_range(0..self.count)],
            BlockLaw::Bernoulli { probs } => loop {
                let set: Vec<usize> = probs
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &p)| (rng.random::<f64>() < p).then_some(i))
                    .collect();
                if !set.is_empty() {
                    break set;
                }
            },
        }
    }

    /// Probability that index `i` is activated at least once in a window of
    /// `self.window` consecutive iterations `n ≥ 1`.
    pub fn cover_probability(&self, i: usize) -> Result<f64> {
        if i >= self.count {
            return Err(Error::param("i", format!("index {i} out of range 0..{}", self.count)));
        }
        let per_step = match &self.law {
            BlockLaw::Full => return Ok(1.0),
            BlockLaw::UniformSingleton => 1.0 / self.count as f64,
            BlockLaw::Bernoulli { probs } => {
                // Conditioned on a nonempty draw.
                let empty: f64 = probs.iter().map(|p| 1.0 - p).product();
                probs[i] / (1.0 - empty)
            }
        };
        Ok(1.0 - (1.0 - per_step).powi(self.window as i32))
    }
}

/// Law of the relaxation parameter `λₙ`, drawn i.i.d. across iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelaxationSampler {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `high` with probability `p_high`, otherwise `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
}

impl RelaxationSampler {
    pub fn constant(value: f64) -> Self {
        RelaxationSampler::Constant { value }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            RelaxationSampler::Constant { value } => value,
            RelaxationSampler::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
            RelaxationSampler::TwoPoint { low, high, p_high } => {
                if rng.random::<f64>() < p_high {
                    high
                } else {
                    low
                }
            }
        }
    }

    /// `E[λ(2 − λ)]`.
    pub fn moment(&self) -> f64 {
        match *self {
            RelaxationSampler::Constant { value } => value * (2.0 - value),
            RelaxationSampler::Uniform { lo, hi } => {
                let mean = 0.5 * (lo + hi);
                let second = (hi * hi + hi * lo + lo * lo) / 3.0;
                2.0 * mean - second
            }
            RelaxationSampler::TwoPoint { low, high, p_high } => {
                (1.0 - p_high) * low * (2.0 - low) + p_high * high * (2.0 - high)
            }
        }
    }

    /// `P(λ > 2)`.
    pub fn prob_above_two(&self) -> f64 {
        match *self {
            RelaxationSampler::Constant { value } => f64::from(u8::from(value > 2.0)),
            RelaxationSampler::Uniform { lo, hi } => {
                if hi <= 2.0 {
                    0.0
                } else if lo >= 2.0 {
                    1.0
                } else {
                    (hi - 2.0) / (hi - lo)
                }
            }
            RelaxationSampler::TwoPoint { low, high, p_high } => {
                let mut p = 0.0;
                if high > 2.0 {
                    p += p_high;
                }
                if low > 2.0 {
                    p += 1.0 - p_high;
                }
                p
            }
        }
    }

    /// Smallest and largest values in the support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            RelaxationSampler::Constant { value } => (value, value),
            RelaxationSampler::Uniform { lo, hi } => (lo, hi),
            RelaxationSampler::TwoPoint { low, high, p_high } => {
                if p_high == 0.0 {
                    (low, low)
                } else if p_high == 1.0 {
                    (high, high)
                } else {
                    (low.min(high), low.max(high))
                }
            }
        }
    }

    pub fn is_constant_one(&self) -> bool {
        self.support() == (1.0, 1.0)
    }

    /// Checks the support lies in `(0, rho]` and that `E[λ(2−λ)] ≥ 0`, with a
    /// strictly positive moment whenever `λ > 2` has positive probability.
    pub fn validate(&self, rho: f64) -> Result<()> {
        match *self {
            RelaxationSampler::Uniform { lo, hi } if !(lo <= hi) => {
                return Err(Error::param("relaxation", "uniform law needs lo <= hi"));
            }
            RelaxationSampler::TwoPoint { p_high, .. } if !(0.0..=1.0).contains(&p_high) => {
                return Err(Error::param("relaxation", "p_high must lie in [0, 1]"));
            }
            _ => {}
        }
        let (lo, hi) = self.support();
        if !(lo > 0.0 && hi <= rho && hi.is_finite()) {
            return Err(Error::param(
                "relaxation",
                format!("support [{lo}, {hi}] must lie in (0, {rho}]"),
            ));
        }
        let m = self.moment();
        if m < 0.0 {
            return Err(Error::param(
                "relaxation",
                format!("E[λ(2−λ)] = {m} is negative; need E[λ(2−λ)] ≥ 0"),
            ));
        }
        if self.prob_above_two() > 0.0 && m <= 0.0 {
            return Err(Error::param(
                "relaxation",
                "super-relaxation needs E[λ(2−λ)] > 0",
            ));
        }
        Ok(())
    }
}

/// Per-index iteration of last activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LastActivation {
    counters: Vec<usize>,
    last_n: Option<usize>,
}

impl LastActivation {
    pub fn new(count: usize) -> Self {
        LastActivation {
            counters: vec![0; count],
            last_n: None,
        }
    }

    /// Marks `active` as activated at iteration `n`. Calls must have strictly
    /// increasing `n`, starting from the full set at `n = 0`.
    pub fn update(&mut self, n: usize, active: &[usize]) -> Result<()> {
        match self.last_n {
            Some(prev) if n <= prev => {
                return Err(Error::Usage(format!(
                    "activation at n = {n} after n = {prev}; iterations must increase"
                )));
            }
            None if active.len() != self.counters.len() => {
                return Err(Error::Usage("the first activation must cover every index".into()));
            }
            _ => {}
        }
        for &i in active {
            let slot = self
                .counters
                .get_mut(i)
                .ok_or_else(|| Error::Usage(format!("index {i} out of range")))?;
            *slot = n;
        }
        self.last_n = Some(n);
        Ok(())
    }

    pub fn get(&self, i: usize) -> usize {
        self.counters[i]
    }

    pub fn counters(&self) -> &[usize] {
        &self.counters
    }
}
