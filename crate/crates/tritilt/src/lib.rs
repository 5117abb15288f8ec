//! Estimation of the probability that a dense Erdős–Rényi graph holds an
//! atypically large number of triangles, by importance sampling with
//! exponential-random-graph (Gibbs) tilts sampled through Glauber
//! dynamics, together with the analytic layer that selects
//! asymptotically optimal tilt parameters.
//!
//! Module map:
//! * [`graph`] — bit-packed dense graphs with O(n) edge-flip updates of
//!   edge and triangle counts.
//! * [`rates`] — rate functions, the scalar potential `V(u)` and its
//!   maximizer, and all tilt-parameter formulas.
//! * [`phase`] — replica-symmetry and `S_alpha` phase tests via convex
//!   minorants, plus optimality diagnostics.
//! * [`glauber`] — the single-edge heat-bath Markov chain targeting the
//!   Gibbs measure, with optional state-space restriction.
//! * [`estimate`] — importance-sampling weights, estimators and their
//!   variance diagnostics.
//! * [`oracle`] — exhaustive enumeration over all graphs for small `n`,
//!   the validation backbone.

pub mod estimate;
pub mod glauber;
pub mod graph;
pub mod oracle;
pub mod phase;
pub mod rates;

pub use estimate::{EstimateReport, EstimatorMode, WeightAccumulator};
pub use glauber::{ChainState, ConstraintSet, GlauberError};
pub use graph::{Graph, GraphError};
pub use oracle::{JointDistribution, OracleError};
pub use phase::{MinorantHull, PhaseError, PhaseReport};
pub use rates::{ProblemSpec, RatesError, ThresholdMode, TiltParams};
