//! Probability that the operational cost process stays non-negative over a
//! finite horizon.
//!
//! The cost is a drifted Brownian motion `C_t = C₀ + kt + σW_t`, so the
//! first time it hits zero has an inverse-Gaussian law. The crossing
//! probability is the integral of that hitting-time density over `[0, T]`;
//! dropping the positive drift bounds it by a Gaussian tail, which yields
//! the `C₀/(σ√T) ≥ 1.96` rule for 95% confidence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::numeric::{adaptive_simpson, normal_sf};
use crate::simulate::PathStats;

/// Beyond this many Gaussian standard deviations every tail integral
/// underflows f64.
const TAIL_CUT: f64 = 40.0;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("domain error: {what}")]
    Domain { what: String },
    #[error("quadrature did not converge; achieved tolerance {achieved:.3e}")]
    QuadratureNonConvergence { achieved: f64 },
}

/// Inputs for the cost-positivity question on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskQuery {
    /// Initial cost, > 0.
    pub c0: f64,
    /// Cost drift, > 0.
    pub k: f64,
    /// Cost volatility, > 0.
    pub sigma: f64,
    /// Horizon T, > 0.
    pub horizon: f64,
    /// Target probability of staying non-negative, in (0, 1).
    pub confidence: f64,
}

impl RiskQuery {
    pub fn validate(&self) -> Result<(), RiskError> {
        let positive = [
            ("c0", self.c0),
            ("k", self.k),
            ("sigma", self.sigma),
            ("horizon", self.horizon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RiskError::Domain {
                    what: format!("{name} = {v} must be positive"),
                });
            }
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RiskError::Domain {
                what: format!("confidence = {} must lie in (0, 1)", self.confidence),
            });
        }
        Ok(())
    }

    /// The normalized distance to the barrier, z = C₀/(σ√T).
    pub fn z_score(&self) -> f64 {
        self.c0 / (self.sigma * self.horizon.sqrt())
    }
}

/// Inverse-Gaussian density `√(λ/(2πt³))·exp(−λ(t−μ)²/(2μ²t))`.
pub fn ig_density(t: f64, mu: f64, lambda: f64) -> Result<f64, RiskError> {
    if t <= 0.0 {
        return Err(RiskError::Domain {
            what: format!("t = {t} must be positive"),
        });
    }
    if lambda <= 0.0 {
        return Err(RiskError::Domain {
            what: format!("lambda = {lambda} must be positive"),
        });
    }
    let spread = t - mu;
    Ok((lambda / (2.0 * std::f64::consts::PI * t * t * t)).sqrt()
        * (-lambda * spread * spread / (2.0 * mu * mu * t)).exp())
}

/// P{inf_{s≤T} C_s ≤ 0}: the hitting-time density integrated over `(0, T]`.
///
/// The substitution `x² = C₀²/(tσ²)` removes the t→0 singularity and turns
/// the integral into `√(2/π)·e^{−α}·∫_z^∞ exp(−x²/2 − α²/(2x²)) dx` with
/// `z = C₀/(σ√T)` and `α = kC₀/σ²`, integrated by adaptive quadrature with
/// a Gaussian-tail truncation.
pub fn hitting_probability(query: &RiskQuery) -> Result<f64, RiskError> {
    query.validate()?;
    let z = query.z_score();
    if z >= TAIL_CUT {
        return Ok(0.0);
    }
    let alpha = query.k * query.c0 / (query.sigma * query.sigma);
    let integrand = |x: f64| (-0.5 * x * x - 0.5 * alpha * alpha / (x * x)).exp();
    let integral = adaptive_simpson(&integrand, z, TAIL_CUT, 1e-8)
        .map_err(|achieved| RiskError::QuadratureNonConvergence { achieved })?;
    let p = (2.0 / std::f64::consts::PI).sqrt() * (-alpha).exp() * integral;
    Ok(p.clamp(0.0, 1.0))
}

/// The drift-free bound on the crossing probability, `2(1 − Φ(z))`.
pub fn positivity_bound_from_z(z: f64) -> f64 {
    2.0 * normal_sf(z)
}

/// Upper bound on P{inf C ≤ 0} obtained by dropping the positive drift:
/// `2(1 − Φ(C₀/(σ√T)))`. At `C₀/(σ√T) = 1.96` this is 5%.
pub fn positivity_bound(query: &RiskQuery) -> f64 {
    positivity_bound_from_z(query.z_score())
}

/// Smallest initial cost keeping the crossing probability below
/// `1 − confidence`: `z·σ√T` where `2(1 − Φ(z)) = 1 − confidence`.
pub fn min_initial_cost(sigma: f64, horizon: f64, confidence: f64) -> f64 {
    assert!(
        confidence > 0.0 && confidence < 1.0,
        "confidence must lie in (0, 1)"
    );
    let target = 1.0 - confidence;
    let mut lo = 0.0f64;
    let mut hi = TAIL_CUT + 5.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if positivity_bound_from_z(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi) * sigma * horizon.sqrt()
}

/// Monte Carlo estimate of the crossing probability: the fraction of
/// simulated cost paths whose running minimum reaches zero, with a
/// Brownian-bridge correction per step (crossing probability
/// `exp(−2·m₁·m₂/(σ²Δt))` between surviving endpoints) that removes the
/// discretization bias.
pub fn mc_hitting_probability(
    query: &RiskQuery,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> PathStats {
    assert!(n_paths >= 1 && n_steps >= 1);
    let dt = query.horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let drift = query.k * dt;
    let sigma = query.sigma;
    let bridge_scale = 2.0 / (sigma * sigma * dt);

    let hits: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let mut c = query.c0;
            for _ in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let next = c + drift + sigma * sqrt_dt * z;
                if next <= 0.0 {
                    return 1.0;
                }
                let p_cross = (-bridge_scale * c * next).exp();
                if rng.gen::<f64>() < p_cross {
                    return 1.0;
                }
                c = next;
            }
            0.0
        })
        .collect();

    PathStats::from_samples(&hits, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_cdf;

    fn base_query() -> RiskQuery {
        RiskQuery {
            c0: 1.0,
            k: 0.5,
            sigma: 0.5,
            horizon: 4.0,
            confidence: 0.95,
        }
    }

    /// Reflection + Girsanov closed form for the crossing probability of a
    /// drifted Brownian motion, used as an independent oracle.
    fn crossing_closed_form(c0: f64, k: f64, sigma: f64, t: f64) -> f64 {
        let s = sigma * t.sqrt();
        normal_cdf(-(c0 + k * t) / s)
            + (-2.0 * k * c0 / (sigma * sigma)).exp() * normal_cdf((k * t - c0) / s)
    }

    #[test]
    fn ig_density_at_mean_and_origin() {
        let at_mean = ig_density(1.0, 1.0, 1.0).unwrap();
        let expect = (1.0 / (2.0 * std::f64::consts::PI)).sqrt();
        assert!((at_mean - expect).abs() < 1e-15);
        assert!(ig_density(1e-12, 1.0, 1.0).unwrap() < 1e-100);
        assert!(ig_density(0.0, 1.0, 1.0).is_err());
        assert!(ig_density(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ig_density_normalizes() {
        // Composite-Simpson refinement independent of the adaptive routine.
        let f = |t: f64| ig_density(t, 1.0, 1.0).unwrap();
        let mut previous = 0.0;
        let mut value = 0.0;
        for level in 0..14 {
            let n = 1 << (level + 8);
            let (lo, hi) = (1e-9, 80.0);
            let h = (hi - lo) / n as f64;
            let mut acc = f(lo) + f(hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * f(lo + i as f64 * h);
            }
            previous = value;
            value = acc * h / 3.0;
            if level > 2 && (value - previous).abs() < 1e-9 {
                break;
            }
        }
        assert!((value - 1.0).abs() < 1e-6, "integral {value}");
    }

    #[test]
    fn far_barrier_probability_vanishes() {
        let mut q = base_query();
        q.c0 = 100.0 * q.sigma * q.horizon.sqrt();
        assert!(hitting_probability(&q).unwrap() < 1e-300);
    }

    #[test]
    fn driftless_limit_matches_reflection_principle() {
        // k → 0 degenerates to 2(1 − Φ(z)); at z = 1.96 that is 5%.
        let q = RiskQuery {
            c0: 1.96,
            k: 1e-12,
            sigma: 1.0,
            horizon: 1.0,
            confidence: 0.95,
        };
        let p = hitting_probability(&q).unwrap();
        assert!((p - 0.05).abs() < 1e-3, "got {p}");
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for (c0, k, sigma, t) in [
            (1.0, 0.5, 0.5, 4.0),
            (2.0, 1.0, 0.8, 10.0),
            (0.5, 0.2, 1.0, 2.0),
            (3.0, 2.0, 1.5, 30.0),
        ] {
            let q = RiskQuery {
                c0,
                k,
                sigma,
                horizon: t,
                confidence: 0.95,
            };
            let quad = hitting_probability(&q).unwrap();
            let exact = crossing_closed_form(c0, k, sigma, t);
            assert!(
                (quad - exact).abs() < 1e-7,
                "quad {quad} exact {exact} at {q:?}"
            );
        }
    }

    #[test]
    fn quadrature_matches_monte_carlo() {
        let q = base_query();
        let quad = hitting_probability(&q).unwrap();
        let mc = mc_hitting_probability(&q, 300_000, 512, 1234);
        let gap = (quad - mc.mean).abs();
        let se3 = 3.0 * mc.std_error.unwrap();
        assert!(gap <= se3, "quad {quad} mc {} (3se {se3})", mc.mean);
    }

    #[test]
    fn bridge_correction_removes_coarse_step_bias() {
        // Driftless case with a known value; few steps would miss most
        // crossings without the bridge term.
        let q = RiskQuery {
            c0: 1.96,
            k: 1e-12,
            sigma: 1.0,
            horizon: 1.0,
            confidence: 0.95,
        };
        let mc = mc_hitting_probability(&q, 200_000, 64, 7);
        assert!(
            (mc.mean - 0.05).abs() <= 3.0 * mc.std_error.unwrap() + 1e-3,
            "mc {}",
            mc.mean
        );
    }

    #[test]
    fn positivity_bound_examples() {
        let q = RiskQuery {
            c0: 1.96,
            k: 1.0,
            sigma: 1.0,
            horizon: 1.0,
            confidence: 0.95,
        };
        assert!((positivity_bound(&q) - 0.05).abs() < 1e-3);
        assert!(positivity_bound_from_z(30.0) < 1e-100);
        assert_eq!(positivity_bound_from_z(0.0), 1.0);
    }

    #[test]
    fn minimal_cost_recovers_the_rule_of_thumb() {
        let c = min_initial_cost(1.0, 1.0, 0.95);
        assert!((c - 1.96).abs() < 5e-3, "got {c}");
        // Scaling in σ√T.
        let scaled = min_initial_cost(2.0, 4.0, 0.95);
        assert!((scaled - 4.0 * c).abs() < 1e-9);
        // Vanishing confidence requirement needs no initial buffer.
        assert!(min_initial_cost(1.0, 1.0, 1e-9) < 1e-3);
    }

    #[test]
    fn drift_can_only_lower_the_crossing_probability() {
        for i in 0..20 {
            let q = RiskQuery {
                c0: 0.5 + 0.2 * i as f64,
                k: 0.1 + 0.05 * i as f64,
                sigma: 0.6,
                horizon: 5.0,
                confidence: 0.95,
            };
            let p = hitting_probability(&q).unwrap();
            assert!(p <= positivity_bound(&q) + 1e-12, "query {i}");
        }
    }

    #[test]
    fn hitting_probability_monotonicities() {
        let base = base_query();
        let p0 = hitting_probability(&base).unwrap();

        let mut q = base;
        q.c0 *= 2.0;
        assert!(hitting_probability(&q).unwrap() <= p0);

        let mut q = base;
        q.k *= 2.0;
        assert!(hitting_probability(&q).unwrap() <= p0);

        let mut q = base;
        q.sigma *= 2.0;
        assert!(hitting_probability(&q).unwrap() >= p0);

        let mut q = base;
        q.horizon *= 2.0;
        assert!(hitting_probability(&q).unwrap() >= p0);
    }

    #[test]
    fn query_validation() {
        let mut q = base_query();
        q.sigma = 0.0;
        assert!(q.validate().is_err());
        let mut q = base_query();
        q.confidence = 1.0;
        assert!(q.validate().is_err());
    }
}
