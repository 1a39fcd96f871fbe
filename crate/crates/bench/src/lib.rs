//! Fixed problem instances for the benchmarks.

use stosplit_core::engine::quarter_inv;
use stosplit_core::sampling::{stream_rng, Stream};
use stosplit_core::{instances, KTProblem, KTStepSizes, SaddlePoint, SaddleProblem, StepSizes};

/// A random saddle instance with admissible steps and an all-ones start.
pub fn saddle_fixture(seed: u64) -> (SaddleProblem, StepSizes, SaddlePoint) {
    let mut rng = stream_rng(seed, Stream::Init);
    let (p, _) = instances::random_saddle(&mut rng).expect("instance");
    let s = StepSizes::largest(&p, quarter_inv(p.alpha()) + 0.2, 1.0);
    let start = SaddlePoint::from_flat(&p, &vec![1.0; p.state_dim()]).expect("start");
    (p, s, start)
}

pub fn kt_fixture(seed: u64) -> (KTProblem, KTStepSizes, Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(seed, Stream::Init);
    let (p, x, v) = instances::random_kt(&mut rng).expect("instance");
    let s = KTStepSizes::uniform(&p, 0.2, 1.0, 1.0);
    (p, s, vec![1.0; x.len()], vec![-1.0; v.len()])
}
