//! Two-body Keplerian geometry on a spherical, non-precessing Earth.
//!
//! Orbits are static curves: no drag, no J2. Time only enters through the
//! ground track, where Earth rotates beneath the orbit (Greenwich angle 0 at
//! t = 0).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::tle::PhysicalConstants;

/// Classical elements. `true_anomaly` only positions the satellite on the
/// orbit; the optimizer never touches it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerianElements {
    /// Semi-major axis (km).
    pub a: f64,
    pub e: f64,
    /// Inclination (rad).
    pub i: f64,
    /// Right ascension of the ascending node (rad).
    pub raan: f64,
    /// Argument of perigee (rad).
    pub arg_perigee: f64,
    /// True anomaly (rad).
    pub true_anomaly: f64,
}

impl KeplerianElements {
    pub fn perigee_altitude(&self, constants: &PhysicalConstants) -> f64 {
        self.a * (1.0 - self.e) - constants.earth_radius
    }

    /// Orbital period in seconds.
    pub fn period(&self, constants: &PhysicalConstants) -> f64 {
        TAU * (self.a.powi(3) / constants.mu_earth).sqrt()
    }

    /// Mean motion in rad/s.
    pub fn mean_motion(&self, constants: &PhysicalConstants) -> f64 {
        (constants.mu_earth / self.a.powi(3)).sqrt()
    }
}

/// Sub-satellite or target point on the spherical Earth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPoint {
    /// Latitude (rad).
    pub lat: f64,
    /// East longitude (rad), in (-pi, pi].
    pub lon: f64,
}

impl GroundPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self {
            lat: lat.clamp(-PI / 2.0, PI / 2.0),
            lon: wrap_pi(lon),
        }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64) -> Self {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians())
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_pi(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Solves Kepler's equation `E - e sin E = M` for the eccentric anomaly.
///
/// Newton iteration seeded at `M` (or at `±pi` for e >= 0.8), falling back to
/// bisection if Newton has not converged after 50 steps. The result lies on
/// the same revolution as `M`.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&e), "eccentricity {e} outside [0, 1)");
    let turns = (mean_anomaly / TAU).round();
    let m = mean_anomaly - turns * TAU;
    let offset = turns * TAU;
    if m == 0.0 || e == 0.0 {
        return mean_anomaly;
    }

    let residual = |ea: f64| ea - e * ea.sin() - m;
    let mut ea = if e < 0.8 { m } else { PI.copysign(m) };
    for _ in 0..50 {
        let f = residual(ea);
        if f.abs() < 1e-15 {
            return ea + offset;
        }
        let step = f / (1.0 - e * ea.cos());
        ea -= step;
        if step.abs() < 1e-15 {
            return ea + offset;
        }
    }
    if residual(ea).abs() < 1e-13 {
        return ea + offset;
    }

    // f is strictly increasing on [-pi, pi].
    let (mut lo, mut hi) = (-PI, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi) + offset
}

pub fn eccentric_to_true(eccentric_anomaly: f64, e: f64) -> f64 {
    let turns = (eccentric_anomaly / TAU).round();
    let half = 0.5 * (eccentric_anomaly - turns * TAU);
    2.0 * ((1.0 + e).sqrt() * half.sin()).atan2((1.0 - e).sqrt() * half.cos()) + turns * TAU
}

pub fn true_to_eccentric(true_anomaly: f64, e: f64) -> f64 {
    let turns = (true_anomaly / TAU).round();
    let half = 0.5 * (true_anomaly - turns * TAU);
    2.0 * ((1.0 - e).sqrt() * half.sin()).atan2((1.0 + e).sqrt() * half.cos()) + turns * TAU
}

pub fn mean_to_true(mean_anomaly: f64, e: f64) -> f64 {
    eccentric_to_true(solve_kepler(mean_anomaly, e), e)
}

pub fn true_to_mean(true_anomaly: f64, e: f64) -> f64 {
    let ea = true_to_eccentric(true_anomaly, e);
    ea - e * ea.sin()
}

/// Perifocal-to-inertial rotation `R3(-raan) R1(-i) R3(-argp)`, cached so
/// sampling loops pay for the trig once.
#[derive(Debug, Clone, Copy)]
struct OrbitFrame {
    p: f64,
    e: f64,
    /// First two columns of the rotation (the perifocal z axis is unused).
    px: [f64; 3],
    qx: [f64; 3],
}

impl OrbitFrame {
    fn new(el: &KeplerianElements) -> Self {
        let (so, co) = el.raan.sin_cos();
        let (si, ci) = el.i.sin_cos();
        let (sw, cw) = el.arg_perigee.sin_cos();
        Self {
            p: el.a * (1.0 - el.e * el.e),
            e: el.e,
            px: [co * cw - so * sw * ci, so * cw + co * sw * ci, sw * si],
            qx: [-co * sw - so * cw * ci, -so * sw + co * cw * ci, cw * si],
        }
    }

    fn position(&self, nu: f64) -> [f64; 3] {
        let (sn, cn) = nu.sin_cos();
        let r = self.p / (1.0 + self.e * cn);
        let (x, y) = (r * cn, r * sn);
        [
            x * self.px[0] + y * self.qx[0],
            x * self.px[1] + y * self.qx[1],
            x * self.px[2] + y * self.qx[2],
        ]
    }
}

/// Earth-centered inertial position (km) at true anomaly `nu`.
pub fn elements_to_eci(el: &KeplerianElements, nu: f64) -> [f64; 3] {
    OrbitFrame::new(el).position(nu)
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Iterates sub-satellite points at `samples` uniform times over
/// `[0, window]` seconds.
fn track_points<'a>(
    el: &'a KeplerianElements,
    window: f64,
    samples: usize,
    constants: &'a PhysicalConstants,
) -> impl Iterator<Item = GroundPoint> + 'a {
    let frame = OrbitFrame::new(el);
    let n = el.mean_motion(constants);
    let m0 = true_to_mean(el.true_anomaly, el.e);
    let dt = if samples > 1 {
        window / (samples - 1) as f64
    } else {
        0.0
    };
    (0..samples).map(move |k| {
        let t = k as f64 * dt;
        let nu = mean_to_true(m0 + n * t, el.e);
        let r = frame.position(nu);
        let lat = (r[2] / norm(r)).clamp(-1.0, 1.0).asin();
        let lon = wrap_pi(r[1].atan2(r[0]) - constants.earth_rotation_rate * t);
        GroundPoint { lat, lon }
    })
}

/// Sub-satellite points sampled uniformly over `[0, window]` seconds.
pub fn ground_track(
    el: &KeplerianElements,
    window: f64,
    samples: usize,
    constants: &PhysicalConstants,
) -> Vec<GroundPoint> {
    track_points(el, window, samples, constants).collect()
}

/// Haversine distance on a sphere of the given radius, in the atan2 form so
/// it stays accurate near antipodes.
pub fn great_circle_distance(p: GroundPoint, q: GroundPoint, radius: f64) -> f64 {
    let dlat = 0.5 * (q.lat - p.lat);
    let dlon = 0.5 * (q.lon - p.lon);
    let h = dlat.sin().powi(2) + p.lat.cos() * q.lat.cos() * dlon.sin().powi(2);
    let h = h.clamp(0.0, 1.0);
    2.0 * radius * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Closest approach (km along the surface) of the sampled ground track to
/// `target`.
pub fn min_ground_distance(
    el: &KeplerianElements,
    target: GroundPoint,
    window: f64,
    samples: usize,
    constants: &PhysicalConstants,
) -> f64 {
    track_points(el, window, samples, constants)
        .map(|p| great_circle_distance(p, target, constants.earth_radius))
        .fold(f64::INFINITY, f64::min)
}

/// An orbit discretized at uniform true anomalies, for curve-to-curve
/// distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledOrbit {
    points: Vec<[f64; 3]>,
}

impl SampledOrbit {
    pub fn new(el: &KeplerianElements, samples: usize) -> Self {
        let frame = OrbitFrame::new(el);
        let points = (0..samples)
            .map(|k| frame.position(TAU * k as f64 / samples as f64))
            .collect();
        Self { points }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Minimum pairwise Euclidean distance between the two point sets.
    pub fn min_distance(&self, other: &SampledOrbit) -> f64 {
        let mut best = f64::INFINITY;
        for a in &self.points {
            for b in &other.points {
                let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
                if d2 < best {
                    best = d2;
                }
            }
        }
        best.sqrt()
    }
}

/// Minimum geometric distance (km) between `el` and any catalog orbit, both
/// treated as static curves. An empty catalog gives `f64::INFINITY`, meaning
/// no constraint.
pub fn min_orbit_distance(el: &KeplerianElements, catalog: &[KeplerianElements], samples_per_orbit: usize) -> f64 {
    let sampled: Vec<SampledOrbit> = catalog
        .iter()
        .map(|c| SampledOrbit::new(c, samples_per_orbit))
        .collect();
    min_sampled_distance(el, &sampled, samples_per_orbit)
}

/// Same as [`min_orbit_distance`] against a pre-sampled catalog.
pub fn min_sampled_distance(el: &KeplerianElements, catalog: &[SampledOrbit], samples_per_orbit: usize) -> f64 {
    if catalog.is_empty() {
        return f64::INFINITY;
    }
    let own = SampledOrbit::new(el, samples_per_orbit);
    catalog
        .iter()
        .map(|c| own.min_distance(c))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    const C: PhysicalConstants = PhysicalConstants::EARTH;

    fn circular(a: f64, i: f64) -> KeplerianElements {
        KeplerianElements {
            a,
            e: 0.0,
            i,
            raan: 0.0,
            arg_perigee: 0.0,
            true_anomaly: 0.0,
        }
    }

    #[test]
    fn kepler_fixed_points() {
        for e in [0.0, 0.3, 0.85, 0.95] {
            assert_eq!(solve_kepler(0.0, e), 0.0);
            assert!((solve_kepler(PI, e) - PI).abs() < 1e-15);
        }
        let ea = solve_kepler(1.0, 0.0005197);
        assert!((ea - 0.0005197 * ea.sin() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kepler_keeps_revolution() {
        let m = 4.0 * TAU + 0.5;
        let ea = solve_kepler(m, 0.2);
        assert!((ea - 0.2 * ea.sin() - m).abs() < 1e-12);
    }

    #[test]
    fn anomaly_conversions() {
        for ea in [-3.0, -1.0, 0.0, 0.5, 2.0, 3.0] {
            assert!((eccentric_to_true(ea, 0.0) - ea).abs() < 1e-14);
        }
        for e in [0.0, 0.1, 0.7] {
            assert!((eccentric_to_true(PI, e) - PI).abs() < 1e-12);
        }
        let nu = eccentric_to_true(1.0, 0.3);
        assert!((true_to_eccentric(nu, 0.3) - 1.0).abs() < 1e-10);
        assert!(nu > 1.0);
    }

    #[test]
    fn eci_simple_cases() {
        let el = circular(7000.0, 0.0);
        let p = elements_to_eci(&el, 0.0);
        assert!((p[0] - 7000.0).abs() < 1e-9 && p[1].abs() < 1e-9 && p[2].abs() < 1e-9);
        let q = elements_to_eci(&el, PI / 2.0);
        assert!(q[0].abs() < 1e-9 && (q[1] - 7000.0).abs() < 1e-9 && q[2].abs() < 1e-9);
        let ecc = KeplerianElements { e: 0.05, ..el };
        assert!((norm(elements_to_eci(&ecc, 0.0)) - 7000.0 * 0.95).abs() < 1e-9);
    }

    #[test]
    fn eci_inclined_quarter_orbit_reaches_pole_height() {
        let el = circular(7000.0, PI / 2.0);
        let p = elements_to_eci(&el, PI / 2.0);
        assert!((p[2] - 7000.0).abs() < 1e-9);
    }

    #[test]
    fn equatorial_track_stays_on_equator() {
        let track = ground_track(&circular(7000.0, 0.0), 86_400.0, 500, &C);
        assert_eq!(track.len(), 500);
        assert!(track.iter().all(|p| p.lat.abs() < 1e-12));
        assert!(track.iter().all(|p| p.lon > -PI && p.lon <= PI));
    }

    #[test]
    fn polar_track_reaches_pole() {
        let el = circular(7000.0, PI / 2.0);
        let period = el.period(&C);
        let track = ground_track(&el, period, 20_001, &C);
        let max_lat = track.iter().map(|p| p.lat.abs()).fold(0.0, f64::max);
        assert!(max_lat.to_degrees() >= 89.9, "{}", max_lat.to_degrees());
    }

    #[test]
    fn iss_period() {
        // 2*pi*sqrt(a^3/mu) for a = 6792 km, in minutes.
        let period = circular(6792.0, 0.0).period(&C) / 60.0;
        assert!((period - 92.85).abs() < 0.5, "{period}");
    }

    #[test]
    fn ground_distance_examples() {
        let eq = circular(7000.0, 0.0);
        let start = GroundPoint::new(0.0, 0.0);
        assert!(min_ground_distance(&eq, start, 86_400.0, 2000, &C) < 1e-9);

        let north = GroundPoint::from_degrees(45.0, 10.0);
        let d = min_ground_distance(&eq, north, 86_400.0, 2000, &C);
        assert!(d >= 6371.0 * PI / 4.0 - 1e-6, "{d}");

        let polar = circular(7000.0, PI / 2.0);
        let pole = GroundPoint::from_degrees(90.0, 0.0);
        let d = min_ground_distance(&polar, pole, 86_400.0, 2000, &C);
        assert!(d <= 50.0, "{d}");
    }

    #[test]
    fn great_circle_examples() {
        let p = GroundPoint::from_degrees(12.0, 34.0);
        assert_eq!(great_circle_distance(p, p, 6371.0), 0.0);
        let anti = GroundPoint::from_degrees(-12.0, 34.0 - 180.0);
        assert!((great_circle_distance(p, anti, 6371.0) - PI * 6371.0).abs() < 1e-6);
        let d = great_circle_distance(GroundPoint::new(0.0, 0.0), GroundPoint::from_degrees(0.0, 90.0), 6371.0);
        assert!((d - 10_007.543_4).abs() < 1e-3);
    }

    #[test]
    fn orbit_distance_examples() {
        let el = KeplerianElements {
            a: 6900.0,
            e: 0.01,
            i: 0.7,
            raan: 1.0,
            arg_perigee: 2.0,
            true_anomaly: 0.3,
        };
        assert_eq!(min_orbit_distance(&el, &[el], 64), 0.0);
        assert_eq!(min_orbit_distance(&el, &[], 64), f64::INFINITY);
        let d = min_orbit_distance(&circular(7000.0, 0.0), &[circular(7100.0, 0.0)], 256);
        assert!((d - 100.0).abs() < 0.5, "{d}");
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_pi(PI), PI);
        assert_eq!(wrap_pi(-PI), PI);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
