//! Shared helpers for the statistical integration tests.

use tritilt::estimate::WeightObserver;
use tritilt::glauber::{self, ConstraintSet};
use tritilt::rates::{ProblemSpec, TiltParams};

/// Batch-means standard error of the self-normalized ratio estimate:
/// the run is split into `batches` contiguous blocks, each block gives
/// its own ratio estimate, and the spread of the block estimates
/// absorbs the autocorrelation of the chain.
pub struct BatchedRatio {
    pub batches: usize,
    sums_w: Vec<f64>,
    sums_hit_w: Vec<f64>,
    len: u64,
    per_batch: u64,
    idx: u64,
}

impl BatchedRatio {
    pub fn new(total_observations: u64, batches: usize) -> Self {
        BatchedRatio {
            batches,
            sums_w: vec![0.0; batches],
            sums_hit_w: vec![0.0; batches],
            len: total_observations,
            per_batch: total_observations.div_ceil(batches as u64),
            idx: 0,
        }
    }

    pub fn push(&mut self, hit: bool, w: f64) {
        let b = ((self.idx / self.per_batch) as usize).min(self.batches - 1);
        self.sums_w[b] += w;
        if hit {
            self.sums_hit_w[b] += w;
        }
        self.idx += 1;
    }

    /// `(pooled estimate, standard error)`: the estimate is the global
    /// ratio, the error comes from the spread of per-batch ratios.
    pub fn estimate_and_se(&self) -> (f64, f64) {
        assert_eq!(self.idx, self.len, "fill the batches before reading");
        let pooled = self.sums_hit_w.iter().sum::<f64>() / self.sums_w.iter().sum::<f64>();
        let ratios: Vec<f64> = self
            .sums_w
            .iter()
            .zip(&self.sums_hit_w)
            .filter(|&(&w, _)| w > 0.0)
            .map(|(&w, &hw)| hw / w)
            .collect();
        let b = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / b;
        let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (b - 1.0);
        (pooled, (var / b).sqrt())
    }
}

/// Run one chain and return `(mu_hat, batch-means SE)` for the
/// self-normalized estimator, plus the merged accumulator.
pub fn run_with_se(
    n: usize,
    spec: &ProblemSpec,
    tilt: &TiltParams,
    constraint: Option<ConstraintSet>,
    steps: u64,
    burnin: u64,
    seed: u64,
    batches: usize,
) -> (f64, f64, tritilt::WeightAccumulator) {
    let mut obs = WeightObserver::new(n, spec, tilt, true);
    let mut batched = BatchedRatio::new(steps - burnin, batches);
    // weights re-scaled against a running max would complicate batching;
    // at oracle scales the raw weights are well within range
    glauber::run_chain(n, *tilt, constraint, steps, burnin, seed, |e, t| {
        let lw = obs.log_weight(e, t);
        let thr_hit = {
            // WeightObserver::observe applies the same rule internally
            t as f64 >= spec.triangle_threshold(n)
        };
        batched.push(thr_hit, lw.exp());
        obs.observe(e, t);
    })
    .expect("chain must run");
    let (mu, se) = batched.estimate_and_se();
    (mu, se, obs.into_accumulator())
}
