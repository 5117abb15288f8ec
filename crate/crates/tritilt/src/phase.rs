//! Replica-symmetry and `S_alpha` phase tests through convex minorants,
//! tilt admissibility intervals, and the asymptotic optimality or
//! non-optimality diagnostics of the analytic layer.
//!
//! The rate function entering the minorant construction is evaluated as
//! `I_p` everywhere. That is exact on the replica symmetric phase; in
//! the breaking phase it is a documented approximation, since the true
//! graphon-space rate has no computable form there.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::rates::{
    self, log_odds, maximize_v, p_tilde, rate_i_p, ProblemSpec, RatesError,
    StationaryKind, TiltParams,
};

/// Grid points for hull construction and scalar minimization.
const HULL_GRID: usize = 10_000;
/// Vertical tolerance for "lies on the convex minorant".
const MEMBER_TOL: f64 = 1e-9;
/// Argmax must sit this close to `t` for membership.
const ARGMAX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhaseError {
    #[error("convex minorant needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("hull abscissae must be strictly increasing and finite (index {0})")]
    UnsortedInput(usize),
    #[error("hull ordinates must be finite (index {0})")]
    NonFiniteValue(usize),
    #[error("query x={0} outside the hull domain")]
    OutOfDomain(f64),
    #[error(transparent)]
    Rates(#[from] RatesError),
    #[error("cap r={r} must satisfy t={t} <= r <= 1")]
    InvalidCap { r: f64, t: f64 },
}

/// Lower convex hull (greatest convex minorant at the sample points) of
/// a finite point set, built by a monotone chain.
#[derive(Debug, Clone)]
pub struct MinorantHull {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Indices of the hull vertices, ascending in x.
    hull: Vec<usize>,
}

/// Greatest convex minorant of the sampled function. Input must be
/// sorted strictly increasing in `x` with finite values.
pub fn convex_minorant(points: &[(f64, f64)]) -> Result<MinorantHull, PhaseError> {
    if points.len() < 2 {
        return Err(PhaseError::TooFewPoints(points.len()));
    }
    for (k, &(x, y)) in points.iter().enumerate() {
        if !x.is_finite() || (k > 0 && x <= points[k - 1].0) {
            return Err(PhaseError::UnsortedInput(k));
        }
        if !y.is_finite() {
            return Err(PhaseError::NonFiniteValue(k));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mut hull: Vec<usize> = Vec::new();
    for k in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // keep b only if it makes a strictly convex (left) turn
            let cross = (xs[b] - xs[a]) * (ys[k] - ys[b]) - (ys[b] - ys[a]) * (xs[k] - xs[b]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    Ok(MinorantHull { xs, ys, hull })
}

impl MinorantHull {
    /// Hull vertices as `(x, y)` pairs.
    pub fn vertices(&self) -> Vec<(f64, f64)> {
        self.hull.iter().map(|&k| (self.xs[k], self.ys[k])).collect()
    }

    /// Hull value at `x` (linear interpolation between vertices).
    pub fn value_at(&self, x: f64) -> Result<f64, PhaseError> {
        let lo = self.xs[self.hull[0]];
        let hi = self.xs[*self.hull.last().unwrap()];
        if x < lo || x > hi {
            return Err(PhaseError::OutOfDomain(x));
        }
        let pos = self.hull.partition_point(|&k| self.xs[k] < x);
        if pos < self.hull.len() && self.xs[self.hull[pos]] == x {
            return Ok(self.ys[self.hull[pos]]);
        }
        let a = self.hull[pos - 1];
        let b = self.hull[pos];
        let w = (x - self.xs[a]) / (self.xs[b] - self.xs[a]);
        Ok(self.ys[a] + w * (self.ys[b] - self.ys[a]))
    }

    /// Whether the sample point at abscissa `x` (with ordinate `y`) lies
    /// on the hull within `tol` vertically.
    pub fn is_member(&self, x: f64, y: f64, tol: f64) -> Result<bool, PhaseError> {
        Ok(y - self.value_at(x)? <= tol)
    }

    /// Subdifferential interval of the hull at `x`: the slopes of the
    /// adjacent hull segments. A point interior to one segment gets a
    /// degenerate interval; the domain endpoints are unbounded on the
    /// outward side.
    pub fn subdifferential(&self, x: f64) -> Result<(f64, f64), PhaseError> {
        let lo = self.xs[self.hull[0]];
        let hi = self.xs[*self.hull.last().unwrap()];
        if x < lo || x > hi {
            return Err(PhaseError::OutOfDomain(x));
        }
        let slope = |a: usize, b: usize| (self.ys[b] - self.ys[a]) / (self.xs[b] - self.xs[a]);
        let pos = self.hull.partition_point(|&k| self.xs[k] < x);
        if pos < self.hull.len() && self.xs[self.hull[pos]] == x {
            let left = if pos == 0 {
                f64::NEG_INFINITY
            } else {
                slope(self.hull[pos - 1], self.hull[pos])
            };
            let right = if pos + 1 == self.hull.len() {
                f64::INFINITY
            } else {
                slope(self.hull[pos], self.hull[pos + 1])
            };
            Ok((left, right))
        } else {
            let s = slope(self.hull[pos - 1], self.hull[pos]);
            Ok((s, s))
        }
    }
}

/// Outcome of the `S_alpha` membership test at one `(p, t, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SAlphaResult {
    pub member: bool,
    /// `6 x` the hull subdifferential at `t^{3 alpha}`: the admissible
    /// triangle-field interval. Present whenever the minorant condition
    /// holds.
    pub beta_interval: Option<(f64, f64)>,
}

/// Build the hull of `x -> I_p(x^{1/(3 alpha)})` on a uniform grid with
/// the query abscissa `t^{3 alpha}` inserted exactly.
fn rate_hull(p: f64, t: f64, alpha: f64) -> (MinorantHull, f64, f64) {
    let xq = t.powf(3.0 * alpha);
    let yq = rate_i_p(t, p);
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(HULL_GRID + 2);
    let mut inserted = false;
    for k in 0..=HULL_GRID {
        let x = k as f64 / HULL_GRID as f64;
        if !inserted && x >= xq {
            if x > xq {
                points.push((xq, yq));
            }
            inserted = true;
        }
        if x == xq {
            points.push((xq, yq));
            continue;
        }
        let u = x.powf(1.0 / (3.0 * alpha));
        points.push((x, rate_i_p(u, p)));
    }
    let hull = convex_minorant(&points).expect("grid is sorted and finite");
    (hull, xq, yq)
}

/// Membership of `(p,t)` in the regime `S_alpha`: the minorant condition
/// holds at `(t^{3 alpha}, I_p(t))` and the variational form
/// `sup_u [(beta/6) u^{3 alpha} - I_p(u)]` is uniquely maximized at `t`.
pub fn in_s_alpha(spec: &ProblemSpec, alpha: f64) -> Result<SAlphaResult, PhaseError> {
    if !(alpha > 0.0) {
        return Err(PhaseError::Rates(RatesError::NonPositiveAlpha(alpha)));
    }
    let (hull, xq, yq) = rate_hull(spec.p, spec.t, alpha);
    if !hull.is_member(xq, yq, MEMBER_TOL)? {
        return Ok(SAlphaResult { member: false, beta_interval: None });
    }
    let (slo, shi) = hull.subdifferential(xq)?;
    let beta_interval = Some((6.0 * slo, 6.0 * shi));

    // the rate function is smooth, so the subdifferential at a touching
    // point is the curve derivative and the closed form gives it exactly
    let beta = (log_odds(spec.t) - log_odds(spec.p)) / (alpha * spec.t.powf(3.0 * alpha - 1.0));
    let params = TiltParams { h: log_odds(spec.p), beta, alpha };
    let res = maximize_v(&params, None);
    let member = res.unique && (res.u_star() - spec.t).abs() <= ARGMAX_TOL;
    Ok(SAlphaResult { member, beta_interval })
}

/// `S_{2/3}` is exactly the replica symmetric phase.
pub fn is_replica_symmetric(spec: &ProblemSpec) -> Result<bool, PhaseError> {
    Ok(in_s_alpha(spec, 2.0 / 3.0)?.member)
}

/// The gap `g(t) = Gamma(1) - Gamma(t)` between the clique and constant
/// candidates in the edge-tilt second-moment bound. A negative gap on
/// `(t_tilde, 1)` certifies that the edge tilt is not asymptotically
/// optimal there.
#[derive(Debug, Clone, Copy)]
pub struct EdgeTiltGap {
    p: f64,
}

impl EdgeTiltGap {
    pub fn new(p: f64) -> Result<Self, RatesError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(RatesError::InvalidProbability(p));
        }
        Ok(EdgeTiltGap { p })
    }

    /// `g(t) = t^2 I_p(1) + (1-t^2) I_p(0) - I_p(t) + ((h_t-h_p)/2)(t^2-t)`,
    /// grouped so `g(1) = 0` holds exactly.
    pub fn g(&self, t: f64) -> f64 {
        assert!((0.0..=1.0).contains(&t), "g needs t in [0,1]");
        let p = self.p;
        let hp = log_odds(p);
        let base = t * t * rate_i_p(1.0, p) + (1.0 - t * t) * rate_i_p(0.0, p) - rate_i_p(t, p);
        // (h_t - h_p)/2 (t^2 - t) without evaluating h_t at t = 1:
        // t(t-1)/2 [log t - log(1-t) - h_p], and -(t-1) log(1-t) is
        // (1-t) log(1-t), which vanishes at t = 1
        let tilt = 0.5 * t * ((t - 1.0) * t.ln() + xlnx_at(1.0 - t) - (t - 1.0) * hp);
        base + tilt
    }

    /// `g'(1) = -log(p/(1-p)) - 1/2`; positive exactly when `p < p_tilde`.
    pub fn g_prime_at_one(&self) -> f64 {
        -log_odds(self.p) - 0.5
    }

    /// Largest root of `g` inside `(p, 1)`. `None` when `p >= p_tilde`:
    /// `g` no longer dips negative as `t -> 1`, so no onset exists.
    pub fn t_tilde(&self) -> Option<f64> {
        if self.g_prime_at_one() <= 0.0 {
            return None;
        }
        // g < 0 just below 1; scan downward for the sign change back to +
        let m = 20_000;
        let top = 1.0 - 1e-9;
        let lo_end = self.p;
        let mut prev_t = top;
        let mut prev_g = self.g(prev_t);
        for k in 1..=m {
            let t = top * (1.0 - k as f64 / m as f64) + lo_end * (k as f64 / m as f64);
            let gt = self.g(t);
            if prev_g < 0.0 && gt >= 0.0 {
                let (mut a, mut b) = (t, prev_t); // g(a) >= 0, g(b) < 0
                for _ in 0..100 {
                    if b - a <= 1e-13 {
                        break;
                    }
                    let mid = 0.5 * (a + b);
                    if self.g(mid) >= 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                return Some(0.5 * (a + b));
            }
            prev_t = t;
            prev_g = gt;
        }
        None
    }
}

/// `x log x` on the factor that vanishes at the right endpoint.
#[inline]
fn xlnx_at(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.ln() * x
    }
}

/// Limiting second moment `(1/n^2) log E_Q[q^2]` of the importance
/// sampling estimator under the (optionally `A_r`-conditioned) Gibbs
/// tilt, evaluated over constant graphons. Valid in the replica
/// symmetric phase, where the constant function attains the infima.
///
/// Equals `-2 I_p(t)` exactly when the tilt is a (possibly conditioned)
/// triangle tilt whose capped argmax is `t`.
pub fn asymptotic_second_moment(
    spec: &ProblemSpec,
    params: &TiltParams,
    cap: Option<f64>,
) -> Result<f64, PhaseError> {
    if !is_replica_symmetric(spec)? {
        return Err(PhaseError::Rates(RatesError::ReplicaBreaking { p: spec.p, t: spec.t }));
    }
    let r = cap.unwrap_or(1.0);
    if !(r >= spec.t && r <= 1.0) {
        return Err(PhaseError::InvalidCap { r, t: spec.t });
    }
    let hp = log_odds(spec.p);
    // centered potential W(u) = ((h-h_p)/2) u + (beta/6) u^{3a} - I_p(u)
    // = V(u) + log(1-p)/2; the free-energy term is sup W over [0,r]
    let res = maximize_v(params, cap);
    let sup_w = res.value + 0.5 * (1.0 - spec.p).ln();
    // the rate-side term: inf over u in [t,r] of I_p(u) + W(u) + I_p(u)
    // rearranged as 2 I_p(u) + W(u) (the Laplace-principle exponent)
    let objective = |u: f64| {
        rate_i_p(u, spec.p)
            + (params.h - hp) / 2.0 * u
            + if params.beta == 0.0 { 0.0 } else { params.beta / 6.0 * u.powf(3.0 * params.alpha) }
    };
    let mut inf = f64::INFINITY;
    let mut argmin = spec.t;
    for k in 0..=HULL_GRID {
        let u = spec.t + (r - spec.t) * k as f64 / HULL_GRID as f64;
        let v = objective(u);
        if v < inf {
            inf = v;
            argmin = u;
        }
    }
    // refine an interior minimum by golden-section; endpoint minima are
    // already exact because the grid includes t and r
    if argmin > spec.t && argmin < r {
        let span = (r - spec.t) / HULL_GRID as f64;
        let (mut a, mut b) = ((argmin - span).max(spec.t), (argmin + span).min(r));
        let phi = 0.5 * (3.0 - 5.0f64.sqrt());
        for _ in 0..80 {
            let x1 = a + phi * (b - a);
            let x2 = b - phi * (b - a);
            if objective(x1) < objective(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        inf = inf.min(objective(0.5 * (a + b)));
    }
    Ok(-inf + sup_w)
}

/// Two-candidate lower bound on the edge tilt's limiting second moment:
/// `-min(Gamma(t), Gamma(1)) + Gamma(t) - 2 I_p(t)`, where `Gamma(t)`
/// evaluates the Laplace exponent at the constant-`t` graphon and
/// `Gamma(1)` at the clique candidate. Strictly above `-2 I_p(t)` iff
/// the clique beats the constant.
pub fn edge_tilt_second_moment_lower_bound(spec: &ProblemSpec) -> f64 {
    let (gt, g1) = edge_tilt_gammas(spec);
    -gt.min(g1) + gt - 2.0 * rate_i_p(spec.t, spec.p)
}

/// `(Gamma(t), Gamma(1))` for the edge tilt `(h_t, 0)`.
pub fn edge_tilt_gammas(spec: &ProblemSpec) -> (f64, f64) {
    let (p, t) = (spec.p, spec.t);
    let dh = (log_odds(t) - log_odds(p)) / 2.0;
    let gt = rate_i_p(t, p) + dh * t;
    let g1 = t * t * rate_i_p(1.0, p) + (1.0 - t * t) * rate_i_p(0.0, p) + dh * t * t;
    (gt, g1)
}

/// One sampled `beta` of the phase curve: all stationary points of
/// `V(.; h_p, beta, alpha)` with classification and global-argmax flag.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseCurvePoint {
    pub beta: f64,
    pub stationaries: Vec<BranchPoint>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BranchPoint {
    pub u: f64,
    pub value: f64,
    pub kind: StationaryKind,
    pub is_global_max: bool,
}

/// First-order transition of the global argmax along a `beta` sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseTransition {
    pub beta: f64,
    /// Global argmax just below the transition.
    pub from: f64,
    /// Global argmax just above.
    pub to: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseCurve {
    pub points: Vec<PhaseCurvePoint>,
    pub transition: Option<PhaseTransition>,
}

/// Stationary branches of `V(.; h_p, beta, alpha)` over a `beta` grid,
/// with the first-order jump of the global argmax located by bisection
/// when the sweep crosses one.
pub fn phase_curve(p: f64, alpha: f64, beta_grid: &[f64]) -> PhaseCurve {
    let hp = log_odds(p);
    let argmax = |beta: f64| -> f64 {
        maximize_v(&TiltParams { h: hp, beta, alpha }, None).u_star()
    };
    let mut points = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        let params = TiltParams { h: hp, beta, alpha };
        let res = maximize_v(&params, None);
        let stationaries = res
            .stationary_points
            .iter()
            .map(|s| BranchPoint {
                u: s.u,
                value: s.value,
                kind: s.kind,
                is_global_max: res.maximizers.iter().any(|&m| (m - s.u).abs() <= ARGMAX_TOL),
            })
            .collect();
        points.push(PhaseCurvePoint { beta, stationaries });
    }
    let mut transition = None;
    for w in beta_grid.windows(2) {
        let (u0, u1) = (argmax(w[0]), argmax(w[1]));
        if (u1 - u0).abs() > 0.2 {
            let split = 0.5 * (u0 + u1);
            let (mut lo, mut hi) = (w[0], w[1]);
            for _ in 0..80 {
                if hi - lo <= 1e-9 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if (argmax(mid) - u0).abs() < (argmax(mid) - u1).abs() || argmax(mid) < split {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let beta_c = 0.5 * (lo + hi);
            transition = Some(PhaseTransition {
                beta: beta_c,
                from: argmax(beta_c - 1e-6),
                to: argmax(beta_c + 1e-6),
            });
            break;
        }
    }
    PhaseCurve { points, transition }
}

/// Per-alpha summary emitted in a [`PhaseReport`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaEntry {
    pub member: bool,
    pub beta_interval: Option<(f64, f64)>,
    /// Closed-form `beta*` when `(p,t)` is replica symmetric.
    pub beta_star: Option<f64>,
}

/// Phase diagnostics for one `(p, t)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseReport {
    pub p: f64,
    pub t: f64,
    pub replica_symmetric: bool,
    /// Keyed by the requested alpha values (formatted to 6 digits).
    pub s_alpha: BTreeMap<String, AlphaEntry>,
    /// Edge-tilt non-optimality onset; present when `p < p_tilde`.
    pub t_tilde: Option<f64>,
    pub p_tilde: f64,
}

/// Assemble the full phase report for `(p, t)` at the requested
/// exponents.
pub fn phase_report(spec: &ProblemSpec, alphas: &[f64]) -> Result<PhaseReport, PhaseError> {
    let replica_symmetric = is_replica_symmetric(spec)?;
    let mut s_alpha = BTreeMap::new();
    for &alpha in alphas {
        let r = in_s_alpha(spec, alpha)?;
        let beta_star = rates::beta_star(spec, alpha).ok();
        s_alpha.insert(
            format!("{alpha:.6}"),
            AlphaEntry { member: r.member, beta_interval: r.beta_interval, beta_star },
        );
    }
    let t_tilde = EdgeTiltGap::new(spec.p)?.t_tilde();
    Ok(PhaseReport {
        p: spec.p,
        t: spec.t,
        replica_symmetric,
        s_alpha,
        t_tilde,
        p_tilde: p_tilde(),
    })
}
