//! Importance-sampling weights, the streaming weight accumulator, and
//! the estimators with their variance diagnostics.
//!
//! The exact estimator needs the free energies of both measures, which
//! are unavailable beyond enumeration scale once `beta > 0`. The
//! default is therefore the self-normalized ratio estimator: the
//! normalizing constants cancel between numerator and denominator, at
//! the price of a `O(1/K)` bias that the exact-psi mode does not have.

use serde::Serialize;

use crate::glauber::{self, ConstraintSet};
use crate::rates::{log_odds, ProblemSpec, TiltParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("no observations were accumulated")]
    EmptyStream,
    #[error("no hits: the edge histogram is undefined")]
    NoHits,
    #[error("edge counts were not tracked on this stream")]
    NoEdgeCounts,
}

/// The psi-free part of the log importance weight,
/// `n^2 ((h_p - h)/2 eps - (beta/6) tau^alpha)`.
///
/// For an edge tilt this depends on the sample only through its edge
/// density; for a triangle tilt (`h = h_p`) only through its triangle
/// density.
pub fn log_unnormalized_weight(
    eps: f64,
    tau: f64,
    n: usize,
    source_p: f64,
    tilt: &TiltParams,
) -> f64 {
    let n2 = (n * n) as f64;
    let tri = if tilt.beta == 0.0 { 0.0 } else { tilt.beta / 6.0 * tau.powf(tilt.alpha) };
    n2 * ((log_odds(source_p) - tilt.h) / 2.0 * eps - tri)
}

/// Exact finite-`n` free energy of an edge-only (`beta = 0`) tilt,
/// `psi_n^{h_p,0} = ((n-1)/(2n)) log(1/(1-p))`; increases towards the
/// limit `-log(1-p)/2`. With it, the exact-psi estimator is available
/// at any `n` for edge tilts.
pub fn psi_er_exact(n: usize, p: f64) -> f64 {
    assert!(n >= 2, "free energy needs n >= 2");
    assert!(p > 0.0 && p < 1.0, "psi_er_exact needs p in (0,1)");
    (n as f64 - 1.0) / (2.0 * n as f64) * (1.0 / (1.0 - p)).ln()
}

/// Which estimator produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    ExactPsi,
    SelfNormalized,
    /// Self-normalized over a restricted chain: unbiased for the
    /// restricted probability `nu`, and biased for `mu_n` by
    /// `P(W ∩ A^c)` terms that vanish exponentially faster than `mu_n`
    /// itself.
    Conditioned,
}

/// Everything the tables report about one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    #[serde(rename = "K")]
    pub k: u64,
    pub mu_hat: f64,
    pub sample_variance: f64,
    /// `(1/n^2) log` of the sample mean of the squared estimator.
    pub log_second_moment: f64,
    /// `(1/n^2) log mu_hat`.
    pub log_prob: f64,
    /// `(sum w)^2 / sum w^2` over the post-burn-in observations.
    pub ess: f64,
    pub hit_rate: f64,
    pub seed: u64,
    pub steps: u64,
    pub mode: EstimatorMode,
    /// Set when no sample hit the event; `mu_hat` is then 0 and the
    /// log-scale fields are meaningless.
    pub degenerate: bool,
}

/// Streaming accumulator over `(hit, log-weight)` observations.
///
/// All weights are kept relative to one running maximum, so the ratio
/// estimator never exponentiates an absolute log weight: adding a
/// common constant to every log weight cancels exactly. Accumulators
/// merge associatively; parallel replicas are merged in replica order
/// for determinism.
#[derive(Debug, Clone)]
pub struct WeightAccumulator {
    n: usize,
    count: u64,
    hits: u64,
    /// Running max of the log weights.
    m: f64,
    /// Sums of `exp(lw - m)` and its square, over all samples and over
    /// hits.
    s_all: f64,
    s2_all: f64,
    s_hit: f64,
    s2_hit: f64,
    /// Memo of the last scaled weight: consecutive chain states often
    /// repeat (rejected or value-preserving updates), and the memo is
    /// only valid while `m` stands, so rescales clear it.
    last_lw: f64,
    last_w: f64,
    /// Histogram of edge counts among hits, when edge counts are fed.
    edge_hist: Option<Vec<u64>>,
}

impl WeightAccumulator {
    pub fn new(n: usize) -> Self {
        WeightAccumulator {
            n,
            count: 0,
            hits: 0,
            m: f64::NEG_INFINITY,
            s_all: 0.0,
            s2_all: 0.0,
            s_hit: 0.0,
            s2_hit: 0.0,
            last_lw: f64::NAN,
            last_w: 0.0,
            edge_hist: None,
        }
    }

    /// Track the hit-conditional edge histogram as well. `n` fixes the
    /// bin range `0 ..= C(n,2)`.
    pub fn with_edge_histogram(n: usize) -> Self {
        let mut acc = WeightAccumulator::new(n);
        acc.edge_hist = Some(vec![0u64; n * (n - 1) / 2 + 1]);
        acc
    }

    #[inline]
    fn rescale(&mut self, new_max: f64) {
        let f = (self.m - new_max).exp();
        self.s_all *= f;
        self.s2_all *= f * f;
        self.s_hit *= f;
        self.s2_hit *= f * f;
        self.m = new_max;
        self.last_lw = f64::NAN;
    }

    /// One `(hit, log-weight)` observation.
    #[inline]
    pub fn push_weighted(&mut self, hit: bool, log_w: f64) {
        if log_w > self.m {
            self.rescale(log_w);
        }
        let w = if log_w == self.last_lw {
            self.last_w
        } else {
            let w = (log_w - self.m).exp();
            self.last_lw = log_w;
            self.last_w = w;
            w
        };
        self.s_all += w;
        self.s2_all += w * w;
        if hit {
            self.s_hit += w;
            self.s2_hit += w * w;
            self.hits += 1;
        }
        self.count += 1;
    }

    /// One observation carrying the sample's edge count, for the
    /// hit-conditional histogram.
    #[inline]
    pub fn push_with_edges(&mut self, hit: bool, log_w: f64, edges: u64) {
        self.push_weighted(hit, log_w);
        if hit {
            if let Some(h) = &mut self.edge_hist {
                h[edges as usize] += 1;
            }
        }
    }

    /// Associative merge; the left accumulator keeps its `n`.
    pub fn merge(&mut self, other: &WeightAccumulator) {
        if other.count == 0 {
            return;
        }
        if other.m > self.m {
            self.rescale(other.m);
        }
        let f = (other.m - self.m).exp();
        self.s_all += other.s_all * f;
        self.s2_all += other.s2_all * f * f;
        self.s_hit += other.s_hit * f;
        self.s2_hit += other.s2_hit * f * f;
        self.count += other.count;
        self.hits += other.hits;
        if let (Some(mine), Some(theirs)) = (&mut self.edge_hist, &other.edge_hist) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += *b;
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    /// Hit-conditional histogram of edge counts, indexed by edge count.
    pub fn edge_histogram(&self) -> Result<&[u64], EstimateError> {
        let h = self.edge_hist.as_ref().ok_or(EstimateError::NoEdgeCounts)?;
        if self.hits == 0 {
            return Err(EstimateError::NoHits);
        }
        Ok(h)
    }

    fn n2(&self) -> f64 {
        (self.n * self.n) as f64
    }

    fn base_report(&self, mode: EstimatorMode, seed: u64, steps: u64) -> EstimateReport {
        let k = self.count as f64;
        let ess = if self.s2_all > 0.0 { self.s_all * self.s_all / self.s2_all } else { 0.0 };
        EstimateReport {
            k: self.count,
            mu_hat: 0.0,
            sample_variance: 0.0,
            log_second_moment: f64::NEG_INFINITY,
            log_prob: f64::NEG_INFINITY,
            ess,
            hit_rate: self.hits as f64 / k,
            seed,
            steps,
            mode,
            degenerate: self.hits == 0,
        }
    }

    /// Self-normalized ratio estimate `sum_W w / sum w`; consistent for
    /// the target probability without any normalizing constants.
    pub fn report_self_normalized(
        &self,
        seed: u64,
        steps: u64,
    ) -> Result<EstimateReport, EstimateError> {
        self.ratio_report(EstimatorMode::SelfNormalized, seed, steps)
    }

    /// The same ratio estimate over a restricted chain: an unbiased
    /// estimator of the restricted probability `nu`, reported under the
    /// conditioned mode tag to flag the residual `P(W ∩ A^c)` bias
    /// against `mu_n`.
    pub fn report_conditioned(
        &self,
        seed: u64,
        steps: u64,
    ) -> Result<EstimateReport, EstimateError> {
        self.ratio_report(EstimatorMode::Conditioned, seed, steps)
    }

    fn ratio_report(
        &self,
        mode: EstimatorMode,
        seed: u64,
        steps: u64,
    ) -> Result<EstimateReport, EstimateError> {
        if self.count == 0 {
            return Err(EstimateError::EmptyStream);
        }
        let mut rep = self.base_report(mode, seed, steps);
        if self.hits == 0 {
            return Ok(rep);
        }
        let k = self.count as f64;
        // mu = s_hit / s_all: the shared scale exp(m) cancels without
        // ever being applied
        rep.mu_hat = self.s_hit / self.s_all;
        // normalized weights w/mean(w) square-sum to K^2 s2/s_all^2
        let mean_sq = k * self.s2_hit / (self.s_all * self.s_all);
        rep.sample_variance = mean_sq - rep.mu_hat * rep.mu_hat;
        rep.log_second_moment =
            (self.s2_hit.ln() + k.ln() - 2.0 * self.s_all.ln()) / self.n2();
        rep.log_prob = rep.mu_hat.ln() / self.n2();
        Ok(rep)
    }

    /// Unbiased estimate using exact free energies: each weight is
    /// `exp(lw + n^2 (psi_tilt - psi_source))`. Only available where
    /// the free energies are exactly computable (enumeration scale, or
    /// any `n` for `beta = 0` tilts via the closed form).
    pub fn report_exact_psi(
        &self,
        psi_tilt: f64,
        psi_source: f64,
        seed: u64,
        steps: u64,
    ) -> Result<EstimateReport, EstimateError> {
        if self.count == 0 {
            return Err(EstimateError::EmptyStream);
        }
        let mut rep = self.base_report(EstimatorMode::ExactPsi, seed, steps);
        if self.hits == 0 {
            return Ok(rep);
        }
        let k = self.count as f64;
        let shift = self.n2() * (psi_tilt - psi_source);
        let log_mean = self.m + self.s_hit.ln() - k.ln() + shift;
        let log_mean_sq = 2.0 * self.m + self.s2_hit.ln() - k.ln() + 2.0 * shift;
        rep.mu_hat = log_mean.exp();
        rep.sample_variance = log_mean_sq.exp() - rep.mu_hat * rep.mu_hat;
        rep.log_second_moment = log_mean_sq / self.n2();
        rep.log_prob = log_mean / self.n2();
        Ok(rep)
    }
}

/// Per-(E,T) weight evaluator for one chain: the log weight of a state
/// depends only on the cached counts, and the triangle part is
/// precomputed per count so the per-step cost is a table lookup.
pub struct WeightObserver {
    acc: WeightAccumulator,
    field_coeff: f64,
    tri_table: Vec<f64>,
    threshold: f64,
}

impl WeightObserver {
    pub fn new(n: usize, spec: &ProblemSpec, tilt: &TiltParams, with_histogram: bool) -> Self {
        let nf = n as f64;
        let t_max = n * (n - 1) * (n - 2) / 6;
        let tri_table: Vec<f64> = (0..=t_max)
            .map(|t| {
                if tilt.beta == 0.0 {
                    0.0
                } else {
                    let tau = 6.0 * t as f64 / (nf * nf * nf);
                    tilt.beta / 6.0 * nf * nf * tau.powf(tilt.alpha)
                }
            })
            .collect();
        WeightObserver {
            acc: if with_histogram {
                WeightAccumulator::with_edge_histogram(n)
            } else {
                WeightAccumulator::new(n)
            },
            field_coeff: log_odds(spec.p) - tilt.h,
            tri_table,
            threshold: spec.triangle_threshold(n),
        }
    }

    /// `n^2 ((h_p - h)/2 eps - (beta/6) tau^alpha)` from the counts.
    #[inline]
    pub fn log_weight(&self, edges: u64, triangles: u64) -> f64 {
        self.field_coeff * edges as f64 - self.tri_table[triangles as usize]
    }

    #[inline]
    pub fn observe(&mut self, edges: u64, triangles: u64) {
        let hit = triangles as f64 >= self.threshold;
        let lw = self.log_weight(edges, triangles);
        self.acc.push_with_edges(hit, lw, edges);
    }

    pub fn into_accumulator(self) -> WeightAccumulator {
        self.acc
    }

    pub fn accumulator(&self) -> &WeightAccumulator {
        &self.acc
    }
}

/// Estimation run over parallel replica chains with seeds split from
/// one master seed; per-replica accumulators merge in replica order.
#[derive(Debug, Clone, Copy)]
pub struct RunPlan {
    pub n: usize,
    pub total_steps: u64,
    pub burnin: u64,
    pub master_seed: u64,
    pub replicas: usize,
}

/// Run the plan and return the merged accumulator. `total_steps` and
/// `burnin` are per replica.
pub fn run_replicas(
    plan: &RunPlan,
    spec: &ProblemSpec,
    tilt: &TiltParams,
    constraint: Option<ConstraintSet>,
    with_histogram: bool,
) -> Result<WeightAccumulator, crate::glauber::GlauberError> {
    let chain_results: Vec<Result<WeightAccumulator, crate::glauber::GlauberError>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..plan.replicas)
                .map(|r| {
                    let seed = glauber::replica_seed(plan.master_seed, r);
                    scope.spawn(move || {
                        let mut obs = WeightObserver::new(plan.n, spec, tilt, with_histogram);
                        glauber::run_chain(
                            plan.n,
                            *tilt,
                            constraint,
                            plan.total_steps,
                            plan.burnin,
                            seed,
                            |e, t| obs.observe(e, t),
                        )?;
                        Ok(obs.into_accumulator())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("replica panicked")).collect()
        });
    let mut merged = if with_histogram {
        WeightAccumulator::with_edge_histogram(plan.n)
    } else {
        WeightAccumulator::new(plan.n)
    };
    for res in chain_results {
        merged.merge(&res?);
    }
    Ok(merged)
}
