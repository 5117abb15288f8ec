//! End-to-end validation of the sampler and the estimators against
//! exhaustive enumeration at small `n`.

mod common;

use common::run_with_se;
use tritilt::estimate::{log_unnormalized_weight, psi_er_exact, WeightObserver};
use tritilt::glauber::{self, ConstraintSet};
use tritilt::oracle::enumerate_joint;
use tritilt::rates::{ProblemSpec, ThresholdMode, TiltParams};

fn spec_35_40() -> ProblemSpec {
    ProblemSpec::new(0.35, 0.4, ThresholdMode::Binomial).unwrap()
}

/// The sampled weights, shifted by the exact free-energy difference,
/// must reproduce the exact Radon-Nikodym derivative dP/dQ.
#[test]
fn weights_match_exact_radon_nikodym_ratio() {
    let n = 6;
    let s = spec_35_40();
    let j = enumerate_joint(n, false).unwrap();
    let tilt = TiltParams::triangle(&s, 1.0).unwrap();
    let psi_q = j.exact_psi(&tilt);
    let psi_p = j.exact_psi(&TiltParams::source(s.p));
    assert!((psi_p - psi_er_exact(n, s.p)).abs() < 1e-12);

    let n2 = (n * n) as f64;
    let gibbs = j.gibbs_law(&tilt, None);
    let er = j.gibbs_law(&TiltParams::source(s.p), None);
    for (&(e, t, q_prob), &(e2, t2, p_prob)) in gibbs.iter().zip(&er) {
        assert_eq!((e, t), (e2, t2));
        let exact_ratio = p_prob / q_prob;
        let nf = n as f64;
        let eps = 2.0 * e as f64 / (nf * nf);
        let tau = 6.0 * t as f64 / (nf * nf * nf);
        let lw = log_unnormalized_weight(eps, tau, n, s.p, &tilt);
        let reconstructed = (lw + n2 * (psi_q - psi_p)).exp();
        assert!(
            (reconstructed - exact_ratio).abs() <= 1e-10 * exact_ratio.max(1.0),
            "cell ({e},{t}): {reconstructed} vs {exact_ratio}"
        );
    }
}

/// Plain Monte Carlo through the chain: the observer mean of the hit
/// indicator under the source tilt matches the enumerated probability.
#[test]
fn monte_carlo_mean_matches_enumeration() {
    let n = 6;
    let s = spec_35_40();
    let j = enumerate_joint(n, false).unwrap();
    let mu = j.exact_mu(s.p, s.t, s.threshold_mode);
    let (mu_hat, se, _) = run_with_se(
        n,
        &s,
        &TiltParams::source(s.p),
        None,
        150_000,
        5_000,
        2024,
        100,
    );
    assert!(
        (mu_hat - mu).abs() <= 3.0 * se,
        "mc mean {mu_hat} vs exact {mu} (se {se})"
    );
}

/// Self-normalized estimates under the three tilt families agree with
/// the enumerated probability within three batch-means standard errors.
#[test]
fn self_normalized_estimates_match_enumeration() {
    let n = 6;
    let s = spec_35_40();
    let j = enumerate_joint(n, false).unwrap();
    let mu = j.exact_mu(s.p, s.t, s.threshold_mode);
    let tilts = [
        TiltParams::triangle(&s, 1.0).unwrap(),
        TiltParams::edge(s.t),
        TiltParams::hybrid(0.37, s.t).unwrap(),
    ];
    for (k, tilt) in tilts.iter().enumerate() {
        let (mu_hat, se, acc) = run_with_se(n, &s, tilt, None, 105_000, 5_000, 31 + k as u64, 100);
        assert!(
            (mu_hat - mu).abs() <= 3.0 * se,
            "tilt {k}: {mu_hat} vs exact {mu} (se {se})"
        );
        // the accumulator reports the same ratio
        let rep = acc.report_self_normalized(31 + k as u64, 105_000).unwrap();
        assert!((rep.mu_hat - mu_hat).abs() <= 1e-12 * mu_hat);
    }
}

/// The exact-psi estimator is unbiased; its empirical mean over the
/// chain agrees with the enumerated probability.
#[test]
fn exact_psi_estimate_matches_enumeration() {
    let n = 6;
    let s = spec_35_40();
    let j = enumerate_joint(n, false).unwrap();
    let mu = j.exact_mu(s.p, s.t, s.threshold_mode);
    let tilt = TiltParams::triangle(&s, 1.0).unwrap();
    let psi_q = j.exact_psi(&tilt);
    let psi_p = psi_er_exact(n, s.p);

    let mut obs = WeightObserver::new(n, &s, &tilt, false);
    glauber::run_chain(n, tilt, None, 105_000, 5_000, 777, |e, t| obs.observe(e, t)).unwrap();
    let rep = obs
        .into_accumulator()
        .report_exact_psi(psi_q, psi_p, 777, 105_000)
        .unwrap();
    // crude scale for the error of a correlated mean
    let se = (rep.sample_variance / (rep.k as f64 / 100.0)).sqrt();
    assert!(
        (rep.mu_hat - mu).abs() <= 3.0 * se,
        "exact-psi {} vs exact {mu} (se {se})",
        rep.mu_hat
    );
}

/// Conditioned chain + conditioned estimator against the restricted
/// enumeration, under a cap that genuinely bites at n = 6.
#[test]
fn conditioned_estimate_matches_restricted_enumeration() {
    let n = 6;
    let s = spec_35_40();
    let j = enumerate_joint(n, false).unwrap();
    for r in [0.8, 0.55] {
        let c = ConstraintSet::a_r(r);
        let nu = j.exact_nu(&s, &c);
        let tilt = TiltParams::triangle(&s, 1.0).unwrap();
        let (nu_hat, se, acc) =
            run_with_se(n, &s, &tilt, Some(c), 105_000, 5_000, 909, 100);
        assert!(
            (nu_hat - nu).abs() <= 3.0 * se.max(1e-4),
            "r={r}: {nu_hat} vs exact {nu} (se {se})"
        );
        let rep = acc.report_conditioned(909, 105_000).unwrap();
        assert_eq!(rep.mode, tritilt::EstimatorMode::Conditioned);
    }
}

/// A vacuous constraint must reproduce the unconditioned estimate
/// bit for bit under the same seed.
#[test]
fn vacuous_conditioning_is_bit_identical() {
    let n = 8;
    let s = spec_35_40();
    let tilt = TiltParams::hybrid(0.37, s.t).unwrap();
    let run = |constraint: Option<ConstraintSet>| {
        let mut obs = WeightObserver::new(n, &s, &tilt, false);
        glauber::run_chain(n, tilt, constraint, 50_000, 2_000, 4242, |e, t| obs.observe(e, t))
            .unwrap();
        obs.into_accumulator()
            .report_self_normalized(4242, 50_000)
            .unwrap()
    };
    let plain = run(None);
    let vacuous = run(Some(ConstraintSet::a_r(1.0)));
    assert_eq!(plain.mu_hat.to_bits(), vacuous.mu_hat.to_bits());
    assert_eq!(plain, vacuous);
}

/// Across 20 independent master seeds at n = 6, at least 18 of the
/// self-normalized runs land within three standard errors of the
/// enumerated value.
#[test]
fn self_normalized_consistency_across_seeds() {
    let n = 6;
    let s = spec_35_40();
    let j = enumerate_joint(n, false).unwrap();
    let mu = j.exact_mu(s.p, s.t, s.threshold_mode);
    let tilt = TiltParams::triangle(&s, 1.0).unwrap();
    let mut inside = 0;
    for seed in 0..20u64 {
        let (mu_hat, se, _) =
            run_with_se(n, &s, &tilt, None, 105_000, 5_000, glauber::replica_seed(seed, 0), 100);
        if (mu_hat - mu).abs() <= 3.0 * se {
            inside += 1;
        }
    }
    assert!(inside >= 18, "only {inside}/20 runs within 3 SE");
}

/// Hit-conditional edge histogram under the source tilt equals the
/// exact conditional law of E given the event, in total variation.
#[test]
fn edge_histogram_matches_conditional_law() {
    let n = 6;
    let s = spec_35_40();
    let j = enumerate_joint(n, false).unwrap();
    let thr = s.triangle_threshold(n);

    // exact conditional law of E given T >= thr
    let pairs = (n * (n - 1) / 2) as u64;
    let mut law = vec![0.0f64; pairs as usize + 1];
    let mut mass = 0.0;
    for (e, t, c) in j.cells() {
        if (t as f64) < thr {
            continue;
        }
        let pr = c as f64
            * (e as f64 * s.p.ln() + (pairs - e) as f64 * (1.0 - s.p).ln()).exp();
        law[e as usize] += pr;
        mass += pr;
    }
    for v in &mut law {
        *v /= mass;
    }

    let mut obs = WeightObserver::new(n, &s, &TiltParams::source(s.p), true);
    glauber::run_chain(n, TiltParams::source(s.p), None, 400_000, 5_000, 66, |e, t| {
        obs.observe(e, t)
    })
    .unwrap();
    let acc = obs.into_accumulator();
    let hist = acc.edge_histogram().unwrap();
    let hits: u64 = hist.iter().sum();
    let tv: f64 = hist
        .iter()
        .enumerate()
        .map(|(e, &c)| (c as f64 / hits as f64 - law[e]).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "total variation {tv} too large (hits {hits})");
}

/// The triangle tilt hits the event with more low-edge samples than
/// the edge tilt does.
#[test]
fn triangle_tilt_hits_with_fewer_edges() {
    let n = 16;
    let s = spec_35_40();
    let threshold_edges = ((n * n) as f64 / 2.0 * s.t) as u64; // C(n,2) t scale
    let mass_below = |tilt: &TiltParams, seed: u64| -> f64 {
        let mut obs = WeightObserver::new(n, &s, tilt, true);
        glauber::run_chain(n, *tilt, None, 400_000, 10_000, seed, |e, t| obs.observe(e, t))
            .unwrap();
        let acc = obs.into_accumulator();
        let hist = acc.edge_histogram().unwrap();
        let hits: u64 = hist.iter().sum();
        let below: u64 = hist[..threshold_edges as usize].iter().sum();
        below as f64 / hits as f64
    };
    let tri = mass_below(&TiltParams::triangle(&s, 1.0).unwrap(), 1);
    let edge = mass_below(&TiltParams::edge(s.t), 2);
    assert!(
        tri > edge,
        "triangle tilt should hit with fewer edges: {tri} vs {edge}"
    );
}
