//! Composite mission reward.
//!
//! Three weighted objectives (altitude band, safety distance, target pass)
//! plus eccentricity/inclination shaping, an objective bonus, a penalty that
//! grows as objectives are missed, and a final clip to [-10, 10].

use serde::{Deserialize, Serialize};

pub const REWARD_CLIP: f64 = 10.0;

/// Preferred eccentricity for the shaping term and its Gaussian width.
pub const ECCENTRICITY_TARGET: f64 = 0.025;
const ECCENTRICITY_WIDTH: f64 = 0.025;
/// Width (rad) of the inclination shortfall Gaussian.
const INCLINATION_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub coverage: f64,
    pub safety: f64,
    pub target: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            coverage: 2.0,
            safety: 2.0,
            target: 2.0,
        }
    }
}

impl RewardWeights {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            coverage: self.coverage * factor,
            safety: self.safety * factor,
            target: self.target * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    /// km
    pub mean_altitude: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Closest catalog orbit (km); `f64::INFINITY` if the catalog is empty.
    pub d_min: f64,
    pub d_safe: f64,
    /// Closest ground-track approach to the target (km).
    pub d_target: f64,
    pub sigma: f64,
    pub e: f64,
    /// Inclination (rad).
    pub i: f64,
    /// Target latitude (rad).
    pub target_lat: f64,
    pub weights: RewardWeights,
}

/// Sub-rewards and penalties before they are combined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub r_c: f64,
    pub p_c: f64,
    pub r_s: f64,
    pub p_s: f64,
    pub r_t: f64,
    pub p_t: f64,
    pub r_ei: f64,
    pub p_ei: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_c: f64,
    pub p_c: f64,
    pub r_s: f64,
    pub p_s: f64,
    pub r_t: f64,
    pub p_t: f64,
    pub r_ei: f64,
    pub p_ei: f64,
    pub base: f64,
    pub bonus: f64,
    pub penalty: f64,
    pub final_reward: f64,
}

/// Distance from `altitude` to the band `[h_min, h_max]`; zero inside.
pub fn coverage_error(altitude: f64, h_min: f64, h_max: f64) -> f64 {
    if altitude < h_min {
        h_min - altitude
    } else if altitude > h_max {
        altitude - h_max
    } else {
        0.0
    }
}

/// `(r_c, p_c)` from the band error normalized by the band width.
pub fn coverage_reward(altitude: f64, h_min: f64, h_max: f64) -> (f64, f64) {
    let err = coverage_error(altitude, h_min, h_max) / (h_max - h_min).max(1e-6);
    ((1.0 - err).max(0.0), err.min(1.0))
}

/// `(r_s, p_s)`: tanh of the clipped relative margin over `d_safe`, mapped to
/// (0, 1).
pub fn safety_reward(d_min: f64, d_safe: f64) -> (f64, f64) {
    let margin = if d_min.is_infinite() {
        1.0
    } else {
        ((d_min - d_safe) / d_safe).clamp(-1.0, 1.0)
    };
    let r_s = 0.5 * (margin.tanh() + 1.0);
    (r_s, 1.0 - r_s)
}

/// `(r_t, p_t)`: exponential decay in `d_target / sigma` with rate 3.
pub fn target_reward(d_target: f64, sigma: f64) -> (f64, f64) {
    let r_t = (-3.0 * d_target / sigma).exp();
    (r_t, 1.0 - r_t)
}

/// `(r_ei, p_ei)`: each element contributes at most 0.5 reward, and its
/// penalty is the shortfall from 0.5.
pub fn element_shaping(e: f64, i: f64, target_lat: f64) -> (f64, f64) {
    let r_e = 0.5 * (-((e - ECCENTRICITY_TARGET) / ECCENTRICITY_WIDTH).powi(2)).exp();
    let reach = target_lat.abs();
    let r_i = if i >= reach {
        0.5
    } else {
        0.5 * (-((reach - i) / INCLINATION_WIDTH).powi(2)).exp()
    };
    (r_e + r_i, (0.5 - r_e) + (0.5 - r_i))
}

/// Weighted sum, bonus, penalty and clip, from already evaluated sub-terms.
pub fn combine(terms: &ObjectiveTerms, weights: &RewardWeights) -> RewardBreakdown {
    let ObjectiveTerms {
        r_c,
        p_c,
        r_s,
        p_s,
        r_t,
        p_t,
        r_ei,
        p_ei,
    } = *terms;
    let base = weights.coverage * r_c + weights.safety * r_s + weights.target * r_t + r_ei;
    let mean_objective = (r_c + r_s + r_t) / 3.0;
    let bonus = 3.0 * mean_objective.powi(3);
    let penalty = (1.0 - mean_objective).powi(2) * (p_s + p_c + p_t + p_ei) / 5.0;
    RewardBreakdown {
        r_c,
        p_c,
        r_s,
        p_s,
        r_t,
        p_t,
        r_ei,
        p_ei,
        base,
        bonus,
        penalty,
        final_reward: (base + bonus - penalty).clamp(-REWARD_CLIP, REWARD_CLIP),
    }
}

pub fn objective_terms(inputs: &RewardInputs) -> ObjectiveTerms {
    let (r_c, p_c) = coverage_reward(inputs.mean_altitude, inputs.h_min, inputs.h_max);
    let (r_s, p_s) = safety_reward(inputs.d_min, inputs.d_safe);
    let (r_t, p_t) = target_reward(inputs.d_target, inputs.sigma);
    let (r_ei, p_ei) = element_shaping(inputs.e, inputs.i, inputs.target_lat);
    ObjectiveTerms {
        r_c,
        p_c,
        r_s,
        p_s,
        r_t,
        p_t,
        r_ei,
        p_ei,
    }
}

pub fn total_reward(inputs: &RewardInputs) -> RewardBreakdown {
    combine(&objective_terms(inputs), &inputs.weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn coverage_examples() {
        assert_eq!(coverage_reward(700.0, 300.0, 1200.0), (1.0, 0.0));
        assert_eq!(coverage_reward(2100.0, 300.0, 1200.0), (0.0, 1.0));
        assert_eq!(coverage_reward(1650.0, 300.0, 1200.0), (0.5, 0.5));
        assert_eq!(coverage_reward(3000.0, 300.0, 1200.0), (0.0, 1.0));
        assert_eq!(coverage_reward(75.0, 300.0, 1200.0), (0.75, 0.25));
    }

    #[test]
    fn safety_examples() {
        close(safety_reward(10.0, 10.0).0, 0.5, 1e-12);
        close(safety_reward(20.0, 10.0).0, 0.880_797_077_977_882_3, 1e-12);
        close(safety_reward(0.0, 10.0).0, 0.119_202_922_022_117_7, 1e-12);
        assert_eq!(safety_reward(f64::INFINITY, 10.0), safety_reward(1e9, 10.0));
        let (r, p) = safety_reward(13.7, 10.0);
        assert_eq!(r + p, 1.0);
    }

    #[test]
    fn target_examples() {
        assert_eq!(target_reward(0.0, 500.0), (1.0, 0.0));
        close(target_reward(500.0, 500.0).0, 0.049_787_068_367_863_94, 1e-15);
        close(target_reward(500.0 / 3.0, 500.0).0, 0.367_879_441_171_442_3, 1e-15);
    }

    #[test]
    fn element_shaping_examples() {
        let lat = 0.5;
        let (r, p) = element_shaping(0.025, lat + 0.1, lat);
        assert_eq!((r, p), (1.0, 0.0));
        assert_eq!(element_shaping(0.025, 0.0, 0.0).0, 1.0);
        let (r, _) = element_shaping(0.05, 1.0, 0.5);
        close(r, 0.5 + 0.183_939_720_585_721_16, 1e-15);
        // Southern targets need the same inclination as northern ones.
        assert_eq!(element_shaping(0.01, 0.3, -0.4), element_shaping(0.01, 0.3, 0.4));
    }

    #[test]
    fn perfect_objectives_hit_the_clip() {
        let terms = ObjectiveTerms {
            r_c: 1.0,
            r_s: 1.0,
            r_t: 1.0,
            r_ei: 1.0,
            ..Default::default()
        };
        let b = combine(&terms, &RewardWeights::default());
        assert_eq!((b.base, b.bonus, b.penalty, b.final_reward), (7.0, 3.0, 0.0, 10.0));
    }

    #[test]
    fn all_objectives_missed() {
        let terms = ObjectiveTerms {
            p_c: 1.0,
            p_s: 0.8808,
            p_t: 1.0,
            p_ei: 1.0,
            ..Default::default()
        };
        let b = combine(&terms, &RewardWeights::default());
        assert_eq!((b.base, b.bonus), (0.0, 0.0));
        close(b.final_reward, -0.77616, 1e-12);
    }

    #[test]
    fn half_objectives() {
        let terms = ObjectiveTerms {
            r_c: 0.5,
            r_s: 0.5,
            r_t: 0.5,
            ..Default::default()
        };
        let b = combine(
            &terms,
            &RewardWeights {
                coverage: 1.0,
                safety: 1.0,
                target: 1.0,
            },
        );
        close(b.base, 1.5, 1e-15);
        close(b.bonus, 0.375, 1e-15);
    }

    #[test]
    fn worst_attainable_inputs() {
        let b = total_reward(&RewardInputs {
            mean_altitude: 5000.0,
            h_min: 300.0,
            h_max: 1200.0,
            d_min: 0.0,
            d_safe: 10.0,
            d_target: 1e6,
            sigma: 500.0,
            e: 0.9,
            i: 0.0,
            target_lat: 1.5,
            weights: RewardWeights::default(),
        });
        // r_s floors at (tanh(-1) + 1) / 2; everything else is ~0.
        let r_s = 0.119_202_922_022_117_7;
        let base = 2.0 * r_s;
        let bonus = 3.0 * (r_s / 3.0f64).powi(3);
        let penalty = (1.0 - r_s / 3.0).powi(2) * (1.0 + (1.0 - r_s) + 1.0 + 1.0) / 5.0;
        close(b.final_reward, base + bonus - penalty, 1e-9);
    }
}
