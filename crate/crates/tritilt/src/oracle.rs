//! Exhaustive enumeration over all labelled graphs for small `n`.
//!
//! The Hamiltonian depends on a graph only through `(E, T)`, so the
//! enumeration stores the joint count histogram once and answers exact
//! questions for any `(p, h, beta, alpha)` afterwards: exact event
//! probabilities, exact free energies, exact Gibbs laws, exact
//! estimator moments, and full Glauber transition matrices.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::estimate::log_unnormalized_weight;
use crate::glauber::{acceptance_prob, ConstraintSet};
use crate::graph::{pair_list, Graph};
use crate::rates::{ProblemSpec, ThresholdMode, TiltParams};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("enumeration supports 2 <= n <= 7 (n = 8 behind the slow flag), got {0}")]
    NOutOfRange(usize),
    #[error("the full transition matrix is limited to n <= 4, got {0}")]
    MatrixTooLarge(usize),
    #[error("histogram file is malformed at line {0}")]
    BadHistogramLine(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Joint `(E, T)` histogram over all `2^{C(n,2)}` labelled graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDistribution {
    n: usize,
    e_max: usize,
    t_max: usize,
    /// Row-major `[e][t]` counts.
    counts: Vec<u64>,
}

/// `n^2 H(E, T)` for the Gibbs measure: `h E + (beta/6) n^2 tau^alpha`.
fn log_gibbs_factor(e: u64, t: u64, n: usize, params: &TiltParams) -> f64 {
    let nf = n as f64;
    let tri = if params.beta == 0.0 {
        0.0
    } else {
        let tau = 6.0 * t as f64 / (nf * nf * nf);
        params.beta / 6.0 * nf * nf * tau.powf(params.alpha)
    };
    params.h * e as f64 + tri
}

/// Exact log of `P_{n,p}(X)` for a graph with `e` edges.
fn log_er_prob(e: u64, pairs: u64, p: f64) -> f64 {
    e as f64 * p.ln() + (pairs - e) as f64 * (1.0 - p).ln()
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let mut m = f64::NEG_INFINITY;
    let mut s = 0.0f64;
    for x in terms {
        if x == f64::NEG_INFINITY {
            continue;
        }
        if x <= m {
            s += (x - m).exp();
        } else {
            s = s * (m - x).exp() + 1.0;
            m = x;
        }
    }
    m + s.ln()
}

/// Enumerate the joint `(E, T)` histogram by walking all graphs in
/// Gray-code order, so consecutive graphs differ by one edge flip and
/// the counts update incrementally. `n = 7` covers 2,097,152 graphs in
/// well under a second; `n = 8` (268M graphs) only runs when
/// `allow_n8` is set.
pub fn enumerate_joint(n: usize, allow_n8: bool) -> Result<JointDistribution, OracleError> {
    let max_n = if allow_n8 { 8 } else { 7 };
    if !(2..=max_n).contains(&n) {
        return Err(OracleError::NOutOfRange(n));
    }
    let pairs = pair_list(n);
    let m = pairs.len();
    let e_max = m;
    let t_max = n * (n - 1) * (n - 2) / 6;
    let mut counts = vec![0u64; (e_max + 1) * (t_max + 1)];
    let mut g = Graph::empty(n).expect("n >= 2");
    counts[0] += 1;
    for code in 1u64..(1u64 << m) {
        let bit = code.trailing_zeros() as usize;
        let (i, j) = pairs[bit];
        g.flip_edge(i as usize, j as usize);
        counts[g.edge_count() as usize * (t_max + 1) + g.triangle_count() as usize] += 1;
    }
    Ok(JointDistribution { n, e_max, t_max, counts })
}

impl JointDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pair_total(&self) -> u64 {
        self.e_max as u64
    }

    /// Total number of graphs, `2^{C(n,2)}`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, e: usize, t: usize) -> u64 {
        self.counts[e * (self.t_max + 1) + t]
    }

    /// Nonzero cells as `(e, t, count)`.
    pub fn cells(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        (0..=self.e_max).flat_map(move |e| {
            (0..=self.t_max).filter_map(move |t| {
                let c = self.count(e, t);
                (c > 0).then_some((e as u64, t as u64, c))
            })
        })
    }

    /// Exact `mu_n = P(T >= threshold)` under the source measure.
    /// Unlike a full [`ProblemSpec`], `t = p` and even `t < p` are
    /// meaningful here, so the inputs are taken raw.
    pub fn exact_mu(&self, p: f64, t: f64, mode: ThresholdMode) -> f64 {
        assert!(p > 0.0 && p < 1.0, "exact_mu needs p in (0,1)");
        assert!((0.0..=1.0).contains(&t), "exact_mu needs t in [0,1]");
        let thr = crate::rates::triangle_threshold(self.n, t, mode);
        let pairs = self.pair_total();
        self.cells()
            .filter(|&(_, tc, _)| tc as f64 >= thr)
            .map(|(e, _, c)| c as f64 * log_er_prob(e, pairs, p).exp())
            .sum()
    }

    /// Exact conditioned probability `nu = P(W_t ∩ A) / P(A)`.
    pub fn exact_nu(&self, spec: &ProblemSpec, constraint: &ConstraintSet) -> f64 {
        let thr = spec.triangle_threshold(self.n);
        let pairs = self.pair_total();
        let mut in_a = 0.0;
        let mut in_both = 0.0;
        for (e, t, c) in self.cells() {
            if !constraint.contains_counts(e, t, self.n) {
                continue;
            }
            let pr = c as f64 * log_er_prob(e, pairs, spec.p).exp();
            in_a += pr;
            if t as f64 >= thr {
                in_both += pr;
            }
        }
        in_both / in_a
    }

    /// Exact free energy `psi_n = (1/n^2) log sum_X e^{n^2 H(X)}` by
    /// log-sum-exp over the histogram.
    pub fn exact_psi(&self, params: &TiltParams) -> f64 {
        let lse = log_sum_exp(
            self.cells()
                .map(|(e, t, c)| (c as f64).ln() + log_gibbs_factor(e, t, self.n, params)),
        );
        lse / (self.n * self.n) as f64
    }

    /// Exact free energy of the constrained Gibbs measure on `A`.
    pub fn exact_psi_constrained(&self, params: &TiltParams, constraint: &ConstraintSet) -> f64 {
        let lse = log_sum_exp(
            self.cells()
                .filter(|&(e, t, _)| constraint.contains_counts(e, t, self.n))
                .map(|(e, t, c)| (c as f64).ln() + log_gibbs_factor(e, t, self.n, params)),
        );
        lse / (self.n * self.n) as f64
    }

    /// Exact Gibbs probabilities per `(E, T)` cell, optionally
    /// restricted and renormalized to a constraint region.
    pub fn gibbs_law(
        &self,
        params: &TiltParams,
        constraint: Option<&ConstraintSet>,
    ) -> Vec<(u64, u64, f64)> {
        let cells: Vec<(u64, u64, u64)> = self
            .cells()
            .filter(|&(e, t, _)| {
                constraint.map_or(true, |c| c.contains_counts(e, t, self.n))
            })
            .collect();
        let logz = log_sum_exp(
            cells
                .iter()
                .map(|&(e, t, c)| (c as f64).ln() + log_gibbs_factor(e, t, self.n, params)),
        );
        cells
            .into_iter()
            .map(|(e, t, c)| {
                let lp = (c as f64).ln() + log_gibbs_factor(e, t, self.n, params) - logz;
                (e, t, lp.exp())
            })
            .collect()
    }

    /// Exact first and second moments of the importance-sampling
    /// estimator under the (optionally restricted) tilted measure.
    ///
    /// The estimator value on each state is assembled exactly the way
    /// the sampling code assembles it — the psi-free log weight plus
    /// `n^2 (psi_Q - psi_P)` with exact free energies (the restricted
    /// ones when conditioning) — and then averaged under the exact
    /// Gibbs law. `mean == target` is therefore a genuine end-to-end
    /// check of the weight pipeline, not an algebraic identity of this
    /// routine.
    pub fn exact_estimator_moments(
        &self,
        spec: &ProblemSpec,
        tilt: &TiltParams,
        constraint: Option<&ConstraintSet>,
    ) -> ExactMoments {
        let thr = spec.triangle_threshold(self.n);
        let n2 = (self.n * self.n) as f64;
        let nf = self.n as f64;
        let source = TiltParams::source(spec.p);
        let (psi_q, psi_p) = match constraint {
            Some(c) => (
                self.exact_psi_constrained(tilt, c),
                self.exact_psi_constrained(&source, c),
            ),
            None => (self.exact_psi(tilt), self.exact_psi(&source)),
        };

        let law = self.gibbs_law(tilt, constraint);
        let mut mean = 0.0;
        let mut second = 0.0;
        for &(e, t, q_prob) in &law {
            if (t as f64) < thr {
                continue;
            }
            let eps = 2.0 * e as f64 / (nf * nf);
            let tau = 6.0 * t as f64 / (nf * nf * nf);
            let log_qhat =
                log_unnormalized_weight(eps, tau, self.n, spec.p, tilt) + n2 * (psi_q - psi_p);
            mean += q_prob * log_qhat.exp();
            second += q_prob * (2.0 * log_qhat).exp();
        }
        let target = match constraint {
            Some(c) => self.exact_nu(spec, c),
            None => self.exact_mu(spec.p, spec.t, spec.threshold_mode),
        };
        ExactMoments {
            mean,
            second,
            variance: second - mean * mean,
            target,
        }
    }

    /// Persist as CSV rows `n,e,t,count` under a single header.
    pub fn write_csv(&self, path: &Path) -> Result<(), OracleError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "n,edges,triangles,count")?;
        for (e, t, c) in self.cells() {
            writeln!(f, "{},{},{},{}", self.n, e, t, c)?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, OracleError> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut n = 0usize;
        let mut rows: Vec<(usize, usize, u64)> = Vec::new();
        for (lineno, line) in f.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                continue;
            }
            let mut it = line.split(',');
            let bad = || OracleError::BadHistogramLine(lineno + 1);
            let nn: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let e: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let t: usize = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let c: u64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            n = nn;
            rows.push((e, t, c));
        }
        if n < 2 {
            return Err(OracleError::BadHistogramLine(1));
        }
        let e_max = n * (n - 1) / 2;
        let t_max = n * (n - 1) * (n - 2) / 6;
        let mut counts = vec![0u64; (e_max + 1) * (t_max + 1)];
        for (e, t, c) in rows {
            counts[e * (t_max + 1) + t] = c;
        }
        Ok(JointDistribution { n, e_max, t_max, counts })
    }
}

/// Exact moments of the estimator under the tilted measure.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ExactMoments {
    /// `E_Q[q]`; equals the target by the change-of-measure identity.
    pub mean: f64,
    /// `E_Q[q^2]`.
    pub second: f64,
    pub variance: f64,
    /// The probability being estimated: `mu_n`, or `nu` when
    /// conditioned.
    pub target: f64,
}

/// Residuals of the full Glauber transition matrix against the exact
/// Gibbs law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GlauberMatrixCheck {
    /// `max_y |sum_x pi(x) P(x,y) - pi(y)|`.
    pub stationary_residual: f64,
    /// `max_{x,y} |pi(x) P(x,y) - pi(y) P(y,x)|`.
    pub detailed_balance_residual: f64,
    pub states: usize,
}

/// Assemble the full single-flip transition matrix from
/// [`acceptance_prob`] and verify stationarity and detailed balance of
/// the exact (restricted, renormalized) Gibbs law. Limited to `n <= 4`,
/// i.e. at most 64 states.
pub fn exact_glauber_matrix(
    n: usize,
    params: &TiltParams,
    constraint: Option<&ConstraintSet>,
) -> Result<GlauberMatrixCheck, OracleError> {
    if !(2..=4).contains(&n) {
        return Err(OracleError::MatrixTooLarge(n));
    }
    let pairs = pair_list(n);
    let m = pairs.len();
    let states = 1usize << m;

    let graph_of = |mask: usize| -> Graph {
        let edges: Vec<(usize, usize)> = (0..m)
            .filter(|&b| mask >> b & 1 == 1)
            .map(|b| (pairs[b].0 as usize, pairs[b].1 as usize))
            .collect();
        Graph::new(n, &edges).expect("valid mask")
    };

    let admitted: Vec<bool> = (0..states)
        .map(|mask| {
            let g = graph_of(mask);
            constraint.map_or(true, |c| c.contains(&g))
        })
        .collect();

    // exact Gibbs law on the admitted states
    let log_w: Vec<f64> = (0..states)
        .map(|mask| {
            let g = graph_of(mask);
            log_gibbs_factor(g.edge_count(), g.triangle_count(), n, params)
        })
        .collect();
    let logz = log_sum_exp(
        (0..states)
            .filter(|&s| admitted[s])
            .map(|s| log_w[s]),
    );
    let pi: Vec<f64> = (0..states)
        .map(|s| if admitted[s] { (log_w[s] - logz).exp() } else { 0.0 })
        .collect();

    // transition matrix over admitted states; rejected proposals fold
    // into the diagonal
    let mut p = vec![0.0f64; states * states];
    let pick = 1.0 / m as f64;
    for x in 0..states {
        if !admitted[x] {
            continue;
        }
        let g = graph_of(x);
        for (b, &(i, j)) in pairs.iter().enumerate() {
            let phi = acceptance_prob(&g, i as usize, j as usize, params);
            let with = x | (1 << b);
            let without = x & !(1 << b);
            for (y, prob) in [(with, phi), (without, 1.0 - phi)] {
                let y_ok = admitted[y];
                let dest = if y_ok { y } else { x };
                p[x * states + dest] += pick * prob;
            }
        }
    }

    let mut stationary_residual = 0.0f64;
    for y in 0..states {
        let flow: f64 = (0..states).map(|x| pi[x] * p[x * states + y]).sum();
        stationary_residual = stationary_residual.max((flow - pi[y]).abs());
    }
    let mut detailed_balance_residual = 0.0f64;
    for x in 0..states {
        for y in 0..states {
            let r = (pi[x] * p[x * states + y] - pi[y] * p[y * states + x]).abs();
            detailed_balance_residual = detailed_balance_residual.max(r);
        }
    }
    Ok(GlauberMatrixCheck {
        stationary_residual,
        detailed_balance_residual,
        states,
    })
}
