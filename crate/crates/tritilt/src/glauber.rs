//! Single-edge heat-bath (Glauber) dynamics targeting the Gibbs measure
//! of the exponential random graph, with optional restriction of the
//! state space to a triangle/edge-density region.
//!
//! One step: pick an unordered pair uniformly, resample that edge from
//! its conditional law given the rest of the graph, and, when a
//! restriction is active, revert any proposal that leaves the region.
//! The stationary law is the (restricted, renormalized) Gibbs measure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::graph::Graph;
use crate::rates::{logistic, maximize_v, TiltParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GlauberError {
    #[error("initial graph violates the constraint after {0} attempts")]
    InitOutsideConstraint(u32),
    #[error("total steps {total} must be at least the burn-in {burnin}")]
    BadBudget { total: u64, burnin: u64 },
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

/// Restriction region: a closed interval for the triangle density plus
/// an optional edge-density cap. Membership is decidable from the
/// cached counts alone.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConstraintSet {
    pub tau_min: f64,
    pub tau_max: f64,
    pub eps_max: Option<f64>,
}

impl ConstraintSet {
    /// General triangle-density interval `J` with an optional edge cap.
    /// Chains stay connected when `J` touches 0 or 1; an interior
    /// interval may split the state space, so it draws a warning.
    pub fn new(tau_interval: (f64, f64), eps_cap: Option<f64>) -> Self {
        let (tau_min, tau_max) = tau_interval;
        assert!(
            (0.0..=1.0).contains(&tau_min) && tau_min <= tau_max && tau_max <= 1.0,
            "triangle-density interval must satisfy 0 <= lo <= hi <= 1"
        );
        if tau_min > 0.0 && tau_max < 1.0 {
            log::warn!(
                "triangle-density interval [{tau_min}, {tau_max}] is interior; \
                 the restricted state space may be disconnected"
            );
        }
        ConstraintSet { tau_min, tau_max, eps_max: eps_cap }
    }

    /// The cap region `A_r`: triangle density at most `r^3` and edge
    /// density at most `r`.
    pub fn a_r(r: f64) -> Self {
        assert!(r > 0.0 && r <= 1.0, "A_r needs r in (0,1]");
        ConstraintSet { tau_min: 0.0, tau_max: r * r * r, eps_max: Some(r) }
    }

    /// Membership from the integer caches.
    #[inline]
    pub fn contains_counts(&self, edges: u64, triangles: u64, n: usize) -> bool {
        let nf = n as f64;
        let tau = 6.0 * triangles as f64 / (nf * nf * nf);
        if tau < self.tau_min || tau > self.tau_max {
            return false;
        }
        match self.eps_max {
            Some(cap) => 2.0 * edges as f64 / (nf * nf) <= cap,
            None => true,
        }
    }

    #[inline]
    pub fn contains(&self, g: &Graph) -> bool {
        self.contains_counts(g.edge_count(), g.triangle_count(), g.n())
    }

    /// Largest edge density compatible with the region, used to place
    /// the initial draw inside it.
    fn density_cap(&self) -> f64 {
        let tau_cap = self.tau_max.cbrt();
        match self.eps_max {
            Some(eps) => eps.min(tau_cap),
            None => tau_cap,
        }
    }
}

/// Conditional probability that edge `ij` is present given the rest of
/// the graph, for the Gibbs measure with the given parameters.
///
/// `l` is the 2-star count at the pair and `m` the number of triangles
/// avoiding the edge; the log-odds of the two completions is
/// `h + (beta/n)(n^3/6)^{1-alpha} [(l+m)^alpha - m^alpha]`.
#[inline]
pub fn acceptance_delta(l: u64, m: u64, n: usize, params: &TiltParams) -> f64 {
    if params.beta == 0.0 {
        return params.h;
    }
    let nf = n as f64;
    let scale = params.beta / nf * (nf * nf * nf / 6.0).powf(1.0 - params.alpha);
    let lm = (l + m) as f64;
    let mf = m as f64;
    params.h + scale * (lm.powf(params.alpha) - mf.powf(params.alpha))
}

/// Heat-bath probability for the edge `ij` of `g`; evaluated through
/// the logistic of the conditional log-odds, so it stays in `(0,1)`
/// for any parameter scale. At `alpha = 1` the triangles avoiding the
/// edge cancel and this reduces to `logistic(h + beta L_ij / n)`.
pub fn acceptance_prob(g: &Graph, i: usize, j: usize, params: &TiltParams) -> f64 {
    let l = g.common_neighbors(i, j);
    let through = if g.has_edge(i, j) { l } else { 0 };
    let m = g.triangle_count() - through;
    logistic(acceptance_delta(l, m, g.n(), params))
}

/// One Markov chain with exclusive ownership of its graph.
#[derive(Debug, Clone)]
pub struct ChainState {
    graph: Graph,
    params: TiltParams,
    constraint: Option<ConstraintSet>,
    rng: ChaCha12Rng,
    step: u64,
    pairs: Vec<(u32, u32)>,
    /// `(beta/n)(n^3/6)^{1-alpha}`, hoisted out of the step loop.
    scale: f64,
    /// `k^alpha` for every possible triangle count; the general
    /// acceptance rule needs two of these per step.
    pow_table: Vec<f64>,
    /// At `alpha = 1` (and for any pure edge field) the heat-bath
    /// probability depends on the state only through the 2-star count,
    /// so it is precomputed per count.
    phi_by_stars: Vec<f64>,
}

impl ChainState {
    /// Start a chain from an explicit graph. Returns an error when a
    /// constraint is supplied and the graph sits outside it.
    pub fn from_graph(
        graph: Graph,
        params: TiltParams,
        constraint: Option<ConstraintSet>,
        seed: u64,
    ) -> Result<Self, GlauberError> {
        if let Some(c) = &constraint {
            if !c.contains(&graph) {
                return Err(GlauberError::InitOutsideConstraint(0));
            }
        }
        let n = graph.n();
        let nf = n as f64;
        let scale = if params.beta == 0.0 {
            0.0
        } else {
            params.beta / nf * (nf * nf * nf / 6.0).powf(1.0 - params.alpha)
        };
        let pow_table = if params.beta != 0.0 && params.alpha != 1.0 {
            let t_max = n * (n - 1) * (n - 2) / 6;
            (0..=t_max).map(|k| (k as f64).powf(params.alpha)).collect()
        } else {
            Vec::new()
        };
        let phi_by_stars = if params.beta == 0.0 || params.alpha == 1.0 {
            (0..n.max(2) - 1)
                .map(|l| crate::rates::logistic(params.h + scale * l as f64))
                .collect()
        } else {
            Vec::new()
        };
        Ok(ChainState {
            pairs: crate::graph::pair_list(n),
            graph,
            params,
            constraint,
            rng: ChaCha12Rng::seed_from_u64(seed),
            step: 0,
            scale,
            pow_table,
            phi_by_stars,
        })
    }

    /// Start near the tilt's predicted density: independent
    /// Bernoulli(`u*`) edges with `u*` from the capped variational
    /// maximizer, redrawn up to 100 times if a constraint rejects it.
    pub fn new(
        n: usize,
        params: TiltParams,
        constraint: Option<ConstraintSet>,
        seed: u64,
    ) -> Result<Self, GlauberError> {
        let cap = constraint.as_ref().map(|c| c.density_cap().clamp(1e-6, 1.0));
        let u_star = maximize_v(&params, cap).u_star();
        let prob = match cap {
            Some(r) => u_star.min(r),
            None => u_star,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        const ATTEMPTS: u32 = 100;
        for _ in 0..ATTEMPTS {
            let graph = Graph::bernoulli(n, prob, &mut rng)?;
            let ok = constraint.as_ref().map_or(true, |c| c.contains(&graph));
            if ok {
                let mut chain = ChainState::from_graph(graph, params, constraint, seed)?;
                chain.rng = rng;
                return Ok(chain);
            }
        }
        Err(GlauberError::InitOutsideConstraint(ATTEMPTS))
    }

    #[inline]
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    #[inline]
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &TiltParams {
        &self.params
    }

    /// One Glauber update: resample a uniformly chosen pair from its
    /// conditional law; with a constraint, proposals leaving the region
    /// are reverted (the revert reuses the already-computed 2-star
    /// count, so it costs one cache update and no RNG draws).
    #[inline]
    pub fn step(&mut self) {
        let idx = self.rng.gen_range(0..self.pairs.len());
        let (i, j) = self.pairs[idx];
        let (i, j) = (i as usize, j as usize);
        let cur = self.graph.has_edge(i, j);
        let l = self.graph.common_neighbors(i, j);
        let phi = if !self.phi_by_stars.is_empty() {
            self.phi_by_stars[l as usize]
        } else {
            let through = if cur { l } else { 0 };
            let m = (self.graph.triangle_count() - through) as usize;
            logistic(
                self.params.h
                    + self.scale * (self.pow_table[m + l as usize] - self.pow_table[m]),
            )
        };
        let want = self.rng.gen_bool(phi);
        if want != cur {
            self.graph.apply_flip(i, j, l);
            if let Some(c) = &self.constraint {
                if !c.contains(&self.graph) {
                    self.graph.apply_flip(i, j, l);
                }
            }
        }
        self.step += 1;
        #[cfg(debug_assertions)]
        if let Some(c) = &self.constraint {
            debug_assert!(c.contains(&self.graph), "chain left the constraint region");
        }
    }
}

/// Step budget `coeff * n^2 * ln n`, rounded up.
pub fn steps_budget(n: usize, coeff: f64) -> u64 {
    let nf = n as f64;
    (coeff * nf * nf * nf.ln()).ceil() as u64
}

/// Default burn-in, `10 n^2 ln n`.
pub fn default_burnin(n: usize) -> u64 {
    steps_budget(n, 10.0)
}

/// Seed for parallel replica `k` of a master seed: the `k+1`-th output
/// of a SplitMix64 stream started at the master seed.
pub fn replica_seed(master: u64, replica: usize) -> u64 {
    let mut state = master;
    let mut out = 0u64;
    for _ in 0..=replica {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        out = z ^ (z >> 31);
    }
    out
}

/// Run one chain for `total_steps` and feed every post-burn-in state's
/// `(edge count, triangle count)` to the observer. Deterministic in the
/// seed within a release.
pub fn run_chain<F: FnMut(u64, u64)>(
    n: usize,
    params: TiltParams,
    constraint: Option<ConstraintSet>,
    total_steps: u64,
    burnin: u64,
    seed: u64,
    mut observe: F,
) -> Result<ChainState, GlauberError> {
    if total_steps < burnin {
        return Err(GlauberError::BadBudget { total: total_steps, burnin });
    }
    let mut chain = ChainState::new(n, params, constraint, seed)?;
    for _ in 0..burnin {
        chain.step();
    }
    for _ in burnin..total_steps {
        chain.step();
        observe(chain.graph.edge_count(), chain.graph.triangle_count());
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::{ProblemSpec, ThresholdMode};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn acceptance_reduces_to_er_without_triangle_field() {
        let g = Graph::new(8, &[(0, 1), (1, 2), (0, 2), (3, 4)]).unwrap();
        let p = 0.37;
        let params = TiltParams::source(p);
        for (i, j) in [(0, 1), (5, 6), (2, 7)] {
            assert!(close(acceptance_prob(&g, i, j, &params), p, 1e-15));
        }
    }

    #[test]
    fn alpha_one_matches_neater_expression() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let params = TiltParams { h: -0.9, beta: 2.7, alpha: 1.0 };
        for _ in 0..50 {
            let g = Graph::bernoulli(12, 0.5, &mut rng).unwrap();
            for i in 0..12 {
                for j in (i + 1)..12 {
                    let phi = acceptance_prob(&g, i, j, &params);
                    let l = g.common_neighbors(i, j) as f64;
                    let neat = logistic(params.h + params.beta * l / 12.0);
                    assert!(
                        (phi - neat).abs() <= 1e-14 * neat.max(1.0),
                        "phi={phi} neat={neat}"
                    );
                }
            }
        }
    }

    /// Full-recount Hamiltonian difference oracle: the conditional
    /// log-odds must equal n^2 (H(X with edge) - H(X without edge)).
    #[test]
    fn acceptance_matches_energy_oracle_at_half_alpha() {
        let n = 10;
        let params = TiltParams { h: -0.4, beta: 1.9, alpha: 0.5 };
        let hamiltonian = |g: &Graph| -> f64 {
            let (eps, tau) = g.densities();
            params.h / 2.0 * eps + params.beta / 6.0 * tau.powf(params.alpha)
        };
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..30 {
            let mut g = Graph::bernoulli(n, 0.45, &mut rng).unwrap();
            for (i, j) in [(0, 1), (2, 9), (4, 5)] {
                let phi = acceptance_prob(&g, i, j, &params);
                let present = g.has_edge(i, j);
                if !present {
                    g.flip_edge(i, j);
                }
                let h1 = hamiltonian(&g);
                g.flip_edge(i, j);
                let h0 = hamiltonian(&g);
                if present {
                    g.flip_edge(i, j);
                }
                let delta = (n * n) as f64 * (h1 - h0);
                assert!(
                    close(phi, logistic(delta), 1e-12),
                    "phi={phi} vs logistic({delta})"
                );
            }
        }
    }

    #[test]
    fn er_chain_reaches_stationary_density() {
        let n = 16;
        let p = 0.3;
        let steps = 200_000u64;
        let mut sum_eps = 0.0;
        let samples = run_chain(n, TiltParams::source(p), None, steps, 10_000, 42, |e, _| {
            sum_eps += 2.0 * e as f64 / (n * n) as f64;
        })
        .map(|_| steps - 10_000)
        .unwrap();
        let mean = sum_eps / samples as f64;
        // iid-ish SE of the mean edge density across the run
        let pairs = (n * (n - 1) / 2) as f64;
        let se = (p * (1.0 - p) / pairs).sqrt() / (samples as f64 / (pairs * 2.0)).sqrt();
        assert!(close(mean, 2.0 * pairs * p / (n * n) as f64, 3.0 * se.max(2e-3)));
    }

    #[test]
    fn vacuous_constraint_gives_identical_trajectory() {
        let params = TiltParams { h: -1.2, beta: 3.0, alpha: 1.0 };
        let mut a = ChainState::new(10, params, None, 7).unwrap();
        let mut b = ChainState::new(10, params, Some(ConstraintSet::a_r(1.0)), 7).unwrap();
        for _ in 0..30_000 {
            a.step();
            b.step();
            assert_eq!(
                (a.graph().edge_count(), a.graph().triangle_count()),
                (b.graph().edge_count(), b.graph().triangle_count())
            );
        }
    }

    #[test]
    fn conditioned_chain_respects_the_cap() {
        let spec = ProblemSpec::new(0.2, 0.3, ThresholdMode::Binomial).unwrap();
        let params = TiltParams::triangle(&spec, 1.0).unwrap();
        let r = 0.4272;
        let c = ConstraintSet::a_r(r);
        let mut chain = ChainState::new(24, params, Some(c), 99).unwrap();
        let mut max_eps = 0.0f64;
        let mut max_tau = 0.0f64;
        for _ in 0..1_000_000 {
            chain.step();
            let (eps, tau) = chain.graph().densities();
            max_eps = max_eps.max(eps);
            max_tau = max_tau.max(tau);
        }
        assert!(max_eps <= r);
        assert!(max_tau <= r * r * r);
        // the chain actually moves inside the region
        assert!(max_eps > 0.2);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = ProblemSpec::new(0.35, 0.4, ThresholdMode::Binomial).unwrap();
        let params = TiltParams::triangle(&spec, 2.0 / 3.0).unwrap();
        let run = || {
            let mut trace = Vec::new();
            run_chain(12, params, None, 20_000, 1_000, 1234, |e, t| trace.push((e, t))).unwrap();
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn budget_rule_matches_paper_scale() {
        assert_eq!(steps_budget(16, 5e4), 35_489_136);
        assert!(close(steps_budget(16, 5e4) as f64, 3.55e7, 1e5));
        assert_eq!(default_burnin(16), 7_098);
    }

    #[test]
    fn budget_validation() {
        let err = run_chain(6, TiltParams::source(0.3), None, 10, 20, 0, |_, _| {});
        assert!(matches!(err, Err(GlauberError::BadBudget { .. })));
    }

    #[test]
    fn replica_seeds_are_distinct_and_stable() {
        let s: Vec<u64> = (0..8).map(|k| replica_seed(77, k)).collect();
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
        assert_eq!(replica_seed(77, 3), replica_seed(77, 3));
    }

    #[test]
    fn interior_interval_is_flagged() {
        // warning only; construction must still succeed
        let c = ConstraintSet::new((0.1, 0.5), None);
        assert!(c.contains_counts(10, 30, 8));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// Every state visited by a conditioned chain satisfies the
        /// constraint.
        #[test]
        fn conditioned_support_invariant(seed in any::<u64>(), r01 in 0.45f64..0.9) {
            let params = TiltParams { h: -1.0, beta: 2.5, alpha: 1.0 };
            let c = ConstraintSet::a_r(r01);
            let mut chain = ChainState::new(10, params, Some(c), seed).unwrap();
            for _ in 0..20_000 {
                chain.step();
                prop_assert!(c.contains(chain.graph()));
            }
        }
    }
}
