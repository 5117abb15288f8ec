//! Closed-form rate functions, the scalar potential `V(u)` with its
//! stationary-point solver, and the tilt-parameter formulas.
//!
//! Everything here is a pure function of value inputs and is safe for
//! unrestricted parallel use.

use serde::{Deserialize, Serialize};

/// Number of grid intervals used to bracket sign changes of `V'` before
/// bisection refinement.
const GRID: usize = 10_000;
/// Bisection stops once the bracket width drops below this.
const ROOT_TOL: f64 = 1e-13;
/// Two candidate maxima within this value gap count as a tie.
const TIE_VALUE_TOL: f64 = 1e-9;
/// Candidate maxima closer than this in `u` are the same point.
const TIE_SEP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RatesError {
    #[error("probability {0} must lie strictly inside (0,1)")]
    InvalidProbability(f64),
    #[error("need 0 < p < t < 1, got p={p}, t={t}")]
    InvalidTargetRange { p: f64, t: f64 },
    #[error("(p,t)=({p},{t}) is replica breaking; the closed-form tilt parameter does not apply")]
    ReplicaBreaking { p: f64, t: f64 },
    #[error("triangle field beta={0} must be nonnegative")]
    NegativeBeta(f64),
    #[error("triangle exponent alpha={0} must be positive")]
    NonPositiveAlpha(f64),
    #[error("hybrid parameter q={q} must satisfy 0 < q <= t={t}")]
    QOutOfRange { q: f64, t: f64 },
}

/// Which finite-`n` threshold defines the upper-tail event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `T >= C(n,3) t^3` (the default).
    Binomial,
    /// `tau >= t^3`, i.e. `T >= (n^3/6) t^3`.
    Graphon,
}

/// The rare-event problem: source edge probability `p` and target
/// density `t` with `0 < p < t < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub p: f64,
    pub t: f64,
    pub threshold_mode: ThresholdMode,
}

impl ProblemSpec {
    pub fn new(p: f64, t: f64, threshold_mode: ThresholdMode) -> Result<Self, RatesError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(RatesError::InvalidProbability(p));
        }
        if !(t > p && t < 1.0) {
            return Err(RatesError::InvalidTargetRange { p, t });
        }
        Ok(ProblemSpec { p, t, threshold_mode })
    }

    /// Triangle-count threshold reproducing the event at finite `n`,
    /// kept as a real number; the integer count is compared against it
    /// without rounding.
    pub fn triangle_threshold(&self, n: usize) -> f64 {
        triangle_threshold(n, self.t, self.threshold_mode)
    }
}

/// Finite-`n` triangle-count threshold for target density `t`.
pub fn triangle_threshold(n: usize, t: f64, mode: ThresholdMode) -> f64 {
    let nf = n as f64;
    match mode {
        ThresholdMode::Binomial => nf * (nf - 1.0) * (nf - 2.0) / 6.0 * t.powi(3),
        ThresholdMode::Graphon => nf * nf * nf / 6.0 * t.powi(3),
    }
}

/// Gibbs-measure parameters `(h, beta, alpha)`; the Hamiltonian density
/// is `(h/2) eps + (beta/6) tau^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltParams {
    pub h: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl TiltParams {
    pub fn new(h: f64, beta: f64, alpha: f64) -> Result<Self, RatesError> {
        if beta < 0.0 {
            return Err(RatesError::NegativeBeta(beta));
        }
        if !(alpha > 0.0) {
            return Err(RatesError::NonPositiveAlpha(alpha));
        }
        Ok(TiltParams { h, beta, alpha })
    }

    /// The source measure itself: edges independent with probability `p`.
    pub fn source(p: f64) -> Self {
        TiltParams { h: log_odds(p), beta: 0.0, alpha: 1.0 }
    }

    /// Edge tilt: ramp the edge probability up to `t`.
    pub fn edge(t: f64) -> Self {
        TiltParams { h: log_odds(t), beta: 0.0, alpha: 1.0 }
    }

    /// Triangle tilt with exponent `alpha`: `(h_p, beta*, alpha)`.
    /// Only defined where the closed form for `beta*` is valid, i.e. in
    /// the replica symmetric phase.
    pub fn triangle(spec: &ProblemSpec, alpha: f64) -> Result<Self, RatesError> {
        let beta = beta_star(spec, alpha)?;
        Ok(TiltParams { h: log_odds(spec.p), beta, alpha })
    }

    /// Hybrid tilt from the `beta_q` family at `alpha = 1`: interpolates
    /// between the triangle tilt (`q = p`) and the edge tilt (`q = t`).
    pub fn hybrid(q: f64, t: f64) -> Result<Self, RatesError> {
        let beta = beta_q(q, t)?;
        Ok(TiltParams { h: hybrid_h(beta, 1.0, t), beta, alpha: 1.0 })
    }
}

/// `x log x` with the continuous extension `0 log 0 = 0`.
#[inline]
fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Log-odds `h_p = log(p/(1-p))`.
///
/// Panics if `p` is outside `(0,1)`.
pub fn log_odds(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "log_odds needs p in (0,1), got {p}");
    (p / (1.0 - p)).ln()
}

/// Inverse of [`log_odds`].
#[inline]
pub fn logistic(h: f64) -> f64 {
    if h >= 0.0 {
        1.0 / (1.0 + (-h).exp())
    } else {
        let e = h.exp();
        e / (1.0 + e)
    }
}

/// Critical source probability below which the edge tilt eventually
/// loses asymptotic optimality as `t -> 1`; solves `h_p = -1/2`.
pub fn p_tilde() -> f64 {
    let e = (-0.5f64).exp();
    e / (1.0 + e)
}

/// Large-deviation rate `I_p(u) = (u log(u/p) + (1-u) log((1-u)/(1-p)))/2`,
/// extended by continuity to `u` in `{0,1}`.
///
/// Panics if `p` is outside `(0,1)` or `u` outside `[0,1]`.
pub fn rate_i_p(u: f64, p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "rate_i_p needs p in (0,1), got {p}");
    assert!((0.0..=1.0).contains(&u), "rate_i_p needs u in [0,1], got {u}");
    0.5 * (xlnx(u) - u * p.ln() + xlnx(1.0 - u) - (1.0 - u) * (1.0 - p).ln())
}

/// Negative per-pair entropy `I(u) = (u log u + (1-u) log(1-u))/2`,
/// with `I(0) = I(1) = 0`.
pub fn entropy_i(u: f64) -> f64 {
    assert!((0.0..=1.0).contains(&u), "entropy_i needs u in [0,1], got {u}");
    0.5 * (xlnx(u) + xlnx(1.0 - u))
}

/// The scalar potential `V(u) = (h/2) u + (beta/6) u^{3 alpha} - I(u)`,
/// whose supremum over `[0,1]` is the limiting free energy of the Gibbs
/// measure when the maximizer sits in the replica symmetric phase.
pub fn potential(u: f64, params: &TiltParams) -> f64 {
    let tri = if params.beta == 0.0 { 0.0 } else { params.beta / 6.0 * u.powf(3.0 * params.alpha) };
    params.h / 2.0 * u + tri - entropy_i(u)
}

/// `V'(u) = h/2 + (beta alpha / 2) u^{3 alpha - 1} - log(u/(1-u))/2`.
/// Diverges to `+inf` at `0+` and `-inf` at `1-`.
pub fn potential_deriv(u: f64, params: &TiltParams) -> f64 {
    if u == 0.0 {
        return f64::INFINITY;
    }
    if u == 1.0 {
        return f64::NEG_INFINITY;
    }
    let tri = if params.beta == 0.0 {
        0.0
    } else {
        params.beta * params.alpha / 2.0 * u.powf(3.0 * params.alpha - 1.0)
    };
    params.h / 2.0 + tri - 0.5 * (u / (1.0 - u)).ln()
}

/// `V''(u) = (beta alpha (3 alpha - 1)/2) u^{3 alpha - 2} - (1/u + 1/(1-u))/2`.
pub fn potential_second_deriv(u: f64, params: &TiltParams) -> f64 {
    let tri = if params.beta == 0.0 {
        0.0
    } else {
        params.beta * params.alpha * (3.0 * params.alpha - 1.0) / 2.0
            * u.powf(3.0 * params.alpha - 2.0)
    };
    tri - 0.5 * (1.0 / u + 1.0 / (1.0 - u))
}

/// Classification of an interior stationary point by the sign of `V''`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryKind {
    Maximum,
    Minimum,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub u: f64,
    pub value: f64,
    pub kind: StationaryKind,
}

/// Result of maximizing `V` over `[0, r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult {
    /// Global argmax location(s), ascending; more than one entry means a
    /// tie within tolerance.
    pub maximizers: Vec<f64>,
    /// Max of `V` on the domain.
    pub value: f64,
    /// All interior stationary points with classifications.
    pub stationary_points: Vec<StationaryPoint>,
    /// True iff a single global argmax within tolerance.
    pub unique: bool,
}

impl VariationalResult {
    /// The (smallest) global argmax.
    pub fn u_star(&self) -> f64 {
        self.maximizers[0]
    }
}

fn bisect_root(params: &TiltParams, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = potential_deriv(lo, params);
    if flo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        if hi - lo <= ROOT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fmid = potential_deriv(mid, params);
        if fmid == 0.0 {
            return mid;
        }
        if (flo > 0.0) == (fmid > 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximize `V(.; params)` over `[0, cap]` (`cap = 1` by default).
///
/// `V'` blows up to `+inf` at `0+` and `-inf` at `1-`, so the
/// unconstrained maximum is always interior; with a cap the right
/// endpoint is a candidate. Sign changes of `V'` are bracketed on a
/// uniform grid and refined by bisection.
pub fn maximize_v(params: &TiltParams, cap: Option<f64>) -> VariationalResult {
    let r = cap.unwrap_or(1.0);
    assert!(r > 0.0 && r <= 1.0, "cap must lie in (0,1], got {r}");

    // sample V' at the interior grid points; virtual endpoints carry the
    // analytic signs +inf at 0 and -inf at 1
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_u = 0.0f64;
    let mut prev_sign = 1i8;
    for k in 1..=GRID {
        let u = r * k as f64 / GRID as f64;
        let (u, d) = if k == GRID {
            if r < 1.0 {
                (r, potential_deriv(r, params))
            } else {
                (1.0, f64::NEG_INFINITY)
            }
        } else {
            (u, potential_deriv(u, params))
        };
        let sign = if d > 0.0 {
            1i8
        } else if d < 0.0 {
            -1i8
        } else {
            roots.push(u);
            0i8
        };
        if sign != 0 && prev_sign != 0 && sign != prev_sign {
            let lo = prev_u.max(1e-18);
            let hi = u.min(1.0 - 1e-16);
            roots.push(bisect_root(params, lo, hi));
        }
        prev_u = u;
        prev_sign = sign;
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-11);

    let stationary_points: Vec<StationaryPoint> = roots
        .iter()
        .map(|&u| {
            let dd = potential_second_deriv(u, params);
            let kind = if dd < -TIE_VALUE_TOL {
                StationaryKind::Maximum
            } else if dd > TIE_VALUE_TOL {
                StationaryKind::Minimum
            } else {
                StationaryKind::Saddle
            };
            StationaryPoint { u, value: potential(u, params), kind }
        })
        .collect();

    // candidates: interior maxima, plus the capped right endpoint
    let mut candidates: Vec<(f64, f64)> = stationary_points
        .iter()
        .filter(|s| s.kind == StationaryKind::Maximum)
        .map(|s| (s.u, s.value))
        .collect();
    if r < 1.0 {
        candidates.push((r, potential(r, params)));
    }
    if candidates.is_empty() {
        // no interior maximum below the cap: V is increasing up to r
        candidates.push((r, potential(r, params)));
    }

    let best = candidates
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut maximizers: Vec<f64> = candidates
        .iter()
        .filter(|&&(_, v)| v >= best - TIE_VALUE_TOL)
        .map(|&(u, _)| u)
        .collect();
    maximizers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    maximizers.dedup_by(|a, b| (*a - *b).abs() < TIE_SEP_TOL);

    VariationalResult {
        unique: maximizers.len() == 1,
        value: best,
        maximizers,
        stationary_points,
    }
}

/// Closed-form triangle-tilt parameter
/// `beta* = (h_t - h_p) / (alpha t^{3 alpha - 1})`, valid when `(p,t)`
/// is replica symmetric so that the rate function in the general
/// expression `2 phi_p'(t) / (alpha t^{3 alpha - 1})` reduces to `I_p`.
pub fn beta_star(spec: &ProblemSpec, alpha: f64) -> Result<f64, RatesError> {
    if !(alpha > 0.0) {
        return Err(RatesError::NonPositiveAlpha(alpha));
    }
    if !replica_symmetric_by_uniqueness(spec.p, spec.t) {
        return Err(RatesError::ReplicaBreaking { p: spec.p, t: spec.t });
    }
    Ok(beta_star_formula(spec.p, spec.t, alpha))
}

#[inline]
fn beta_star_formula(p: f64, t: f64, alpha: f64) -> f64 {
    (log_odds(t) - log_odds(p)) / (alpha * t.powf(3.0 * alpha - 1.0))
}

/// Replica symmetry via the variational characterization: `(p,t)` is
/// replica symmetric iff `t` is the unique global maximizer of
/// `(beta/6) u^2 - I_p(u)` at the `alpha = 2/3` tilt parameter. The
/// hull-based test in the phase module computes the same set through
/// the minorant condition; the two are cross-checked in tests.
pub(crate) fn replica_symmetric_by_uniqueness(p: f64, t: f64) -> bool {
    let alpha = 2.0 / 3.0;
    let params = TiltParams {
        h: log_odds(p),
        beta: beta_star_formula(p, t, alpha),
        alpha,
    };
    let res = maximize_v(&params, None);
    res.unique && (res.u_star() - t).abs() <= TIE_SEP_TOL
}

/// The field making `u_star` a stationary point of `V`:
/// `h(beta, alpha) = log(u*/(1-u*)) - beta alpha (u*)^{3 alpha - 1}`.
pub fn hybrid_h(beta: f64, alpha: f64, u_star: f64) -> f64 {
    assert!(u_star > 0.0 && u_star < 1.0, "u_star must lie in (0,1)");
    assert!(beta >= 0.0 && alpha > 0.0, "need beta >= 0 and alpha > 0");
    log_odds(u_star) - beta * alpha * u_star.powf(3.0 * alpha - 1.0)
}

/// The `beta_q` family at `alpha = 1`:
/// `beta_q = (h_t - h_q) / t^2`, zero iff `q = t`.
pub fn beta_q(q: f64, t: f64) -> Result<f64, RatesError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(RatesError::InvalidProbability(t));
    }
    if !(q > 0.0 && q <= t) {
        return Err(RatesError::QOutOfRange { q, t });
    }
    Ok((log_odds(t) - log_odds(q)) / (t * t))
}

/// Upper bound `beta_1` on [`beta0_boundary`], solving `V''(u*) = 0`.
/// Requires `alpha > 1/3`.
pub fn beta1_upper(u_star: f64, alpha: f64) -> f64 {
    assert!(alpha > 1.0 / 3.0, "beta_1 needs alpha > 1/3");
    u_star.powf(2.0 - 3.0 * alpha) / (alpha * (3.0 * alpha - 1.0) * u_star * (1.0 - u_star))
}

/// Supremum of `beta` such that `u_star` stays the unique global argmax
/// of `V(.; hybrid_h(beta, alpha, u_star), beta, alpha)`. No closed form
/// is available; computed by bisection on the unique-global-max
/// predicate over `[0, beta_1]`.
pub fn beta0_boundary(u_star: f64, alpha: f64) -> f64 {
    assert!(u_star > 0.0 && u_star < 1.0, "u_star must lie in (0,1)");
    assert!((1.0 / 3.0..=1.0).contains(&alpha) && alpha > 1.0 / 3.0);
    let unique_at = |beta: f64| -> bool {
        let params = TiltParams { h: hybrid_h(beta, alpha, u_star), beta, alpha };
        let res = maximize_v(&params, None);
        res.unique && (res.u_star() - u_star).abs() <= TIE_SEP_TOL
    };
    let mut lo = 0.0f64;
    let mut hi = beta1_upper(u_star, alpha);
    if unique_at(hi) {
        return hi;
    }
    for _ in 0..60 {
        if hi - lo <= 1e-9 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if unique_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
