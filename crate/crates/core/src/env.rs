//! The orbit-selection decision process.
//!
//! An action is an absolute choice of the five optimized elements, normalized
//! to [-1, 1] per component. Each step scores the chosen orbit against the
//! mission; the episode terminates once all three objectives hold and is
//! truncated after `max_episode_steps`.

use std::cmp::Ordering;
use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::{self, GroundPoint, KeplerianElements, SampledOrbit};
use crate::reward::{self, RewardBreakdown, RewardInputs, RewardWeights};
use crate::tle::PhysicalConstants;

pub const ELEMENT_COUNT: usize = 5;
pub const OBSERVATION_DIM: usize = ELEMENT_COUNT + 3;

/// Perigee guard: eccentricity is capped so the perigee stays this far
/// above the surface.
pub const MIN_PERIGEE_ALTITUDE_KM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }
}

/// Search box for (a, e, i, raan, argp). Lengths in km, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementBounds(pub [Interval; ELEMENT_COUNT]);

impl Default for ElementBounds {
    fn default() -> Self {
        Self([
            Interval::new(6700.0, 7500.0),
            Interval::new(0.0, 0.05),
            Interval::new(0.0, 100f64.to_radians()),
            Interval::new(0.0, TAU),
            Interval::new(0.0, TAU),
        ])
    }
}

impl ElementBounds {
    pub fn low(&self) -> [f64; ELEMENT_COUNT] {
        self.0.map(|b| b.low)
    }

    pub fn high(&self) -> [f64; ELEMENT_COUNT] {
        self.0.map(|b| b.high)
    }

    pub fn midpoint(&self) -> [f64; ELEMENT_COUNT] {
        self.0.map(|b| 0.5 * (b.low + b.high))
    }

    pub fn contains(&self, values: &[f64; ELEMENT_COUNT]) -> bool {
        self.0.iter().zip(values).all(|(b, v)| b.contains(*v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AltitudeModel {
    /// `a (1 + e^2 / 2) - R`, the time-averaged radius.
    #[default]
    MeanRadius,
    /// `a - R`.
    SemiMajorAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionConfig {
    pub target: GroundPoint,
    /// Coverage radius around the target (km).
    pub sigma: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Minimum separation from catalog orbits (km).
    pub d_safe: f64,
    pub weights: RewardWeights,
    pub element_bounds: ElementBounds,
    pub max_episode_steps: usize,
    /// Ground-track window (s).
    pub track_window: f64,
    pub track_samples: usize,
    /// Anomaly samples per orbit for the catalog distance.
    pub orbit_samples: usize,
    pub altitude_model: AltitudeModel,
    pub constants: PhysicalConstants,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            target: GroundPoint::from_degrees(28.5, -80.6),
            sigma: 500.0,
            h_min: 300.0,
            h_max: 1200.0,
            d_safe: 10.0,
            weights: RewardWeights::default(),
            element_bounds: ElementBounds::default(),
            max_episode_steps: 32,
            track_window: 86_400.0,
            track_samples: 2000,
            orbit_samples: 256,
            altitude_model: AltitudeModel::MeanRadius,
            constants: PhysicalConstants::EARTH,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// On-disk mission description. Every key is optional; angles are degrees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_lat_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_lon_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_min_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_max_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_safe_km: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_episode_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track_window_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub track_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub altitude_model: Option<AltitudeModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsFile>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_km: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_deg: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raan_deg: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arg_perigee_deg: Option<[f64; 2]>,
}

impl MissionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: MissionFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        Self::from_file(&file)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_file(file: &MissionFile) -> Result<Self, ConfigError> {
        let d = MissionConfig::default();
        let lat = file.target_lat_deg.unwrap_or(d.target.lat.to_degrees());
        let lon = file.target_lon_deg.unwrap_or(d.target.lon.to_degrees());
        if !(-90.0..=90.0).contains(&lat) {
            return Err(invalid("target_lat_deg", format!("{lat} is outside [-90, 90]")));
        }
        if !lon.is_finite() {
            return Err(invalid("target_lon_deg", "must be finite"));
        }
        let w = file.weights.clone().unwrap_or_default();
        let b = file.bounds.clone().unwrap_or_default();
        let db = d.element_bounds.0;
        let pick = |v: Option<[f64; 2]>, default: [f64; 2]| v.unwrap_or(default);
        let angle =
            |v: Option<[f64; 2]>, default: Interval| v.map_or([default.low, default.high], |r| r.map(f64::to_radians));
        let bounds = [
            pick(b.a_km, [db[0].low, db[0].high]),
            pick(b.e, [db[1].low, db[1].high]),
            angle(b.i_deg, db[2]),
            angle(b.raan_deg, db[3]),
            angle(b.arg_perigee_deg, db[4]),
        ];
        let config = MissionConfig {
            target: if file.target_lat_deg.is_none() && file.target_lon_deg.is_none() {
                d.target
            } else {
                GroundPoint::from_degrees(lat, lon)
            },
            sigma: file.sigma_km.unwrap_or(d.sigma),
            h_min: file.h_min_km.unwrap_or(d.h_min),
            h_max: file.h_max_km.unwrap_or(d.h_max),
            d_safe: file.d_safe_km.unwrap_or(d.d_safe),
            weights: RewardWeights {
                coverage: w.coverage.unwrap_or(d.weights.coverage),
                safety: w.safety.unwrap_or(d.weights.safety),
                target: w.target.unwrap_or(d.weights.target),
            },
            element_bounds: ElementBounds(bounds.map(|[lo, hi]| Interval::new(lo, hi))),
            max_episode_steps: file.max_episode_steps.unwrap_or(d.max_episode_steps),
            track_window: file.track_window_s.unwrap_or(d.track_window),
            track_samples: file.track_samples.unwrap_or(d.track_samples),
            orbit_samples: file.orbit_samples.unwrap_or(d.orbit_samples),
            altitude_model: file.altitude_model.unwrap_or(d.altitude_model),
            constants: d.constants,
        };
        config.validate()?;
        Ok(config)
    }

    /// Fully populated file form of this configuration.
    pub fn to_file(&self) -> MissionFile {
        let b = &self.element_bounds.0;
        let deg = |r: Interval| [r.low.to_degrees(), r.high.to_degrees()];
        MissionFile {
            target_lat_deg: Some(self.target.lat.to_degrees()),
            target_lon_deg: Some(self.target.lon.to_degrees()),
            sigma_km: Some(self.sigma),
            h_min_km: Some(self.h_min),
            h_max_km: Some(self.h_max),
            d_safe_km: Some(self.d_safe),
            max_episode_steps: Some(self.max_episode_steps),
            track_window_s: Some(self.track_window),
            track_samples: Some(self.track_samples),
            orbit_samples: Some(self.orbit_samples),
            altitude_model: Some(self.altitude_model),
            weights: Some(WeightsFile {
                coverage: Some(self.weights.coverage),
                safety: Some(self.weights.safety),
                target: Some(self.weights.target),
            }),
            bounds: Some(BoundsFile {
                a_km: Some([b[0].low, b[0].high]),
                e: Some([b[1].low, b[1].high]),
                i_deg: Some(deg(b[2])),
                raan_deg: Some(deg(b[3])),
                arg_perigee_deg: Some(deg(b[4])),
            }),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("{v} must be positive")))
            }
        };
        positive("sigma_km", self.sigma)?;
        positive("d_safe_km", self.d_safe)?;
        positive("track_window_s", self.track_window)?;
        if self.h_min.partial_cmp(&self.h_max) != Some(Ordering::Less) {
            return Err(invalid(
                "h_min_km",
                format!("{} must be below h_max_km {}", self.h_min, self.h_max),
            ));
        }
        for (field, w) in [
            ("weights.coverage", self.weights.coverage),
            ("weights.safety", self.weights.safety),
            ("weights.target", self.weights.target),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(field, format!("{w} must be non-negative")));
            }
        }
        const NAMES: [&str; ELEMENT_COUNT] = [
            "bounds.a_km",
            "bounds.e",
            "bounds.i_deg",
            "bounds.raan_deg",
            "bounds.arg_perigee_deg",
        ];
        for (name, b) in NAMES.iter().zip(&self.element_bounds.0) {
            if b.low.partial_cmp(&b.high) != Some(Ordering::Less) || !b.low.is_finite() || !b.high.is_finite() {
                return Err(invalid(name, format!("low {} must be below high {}", b.low, b.high)));
            }
        }
        let [a, e, i, _, _] = self.element_bounds.0;
        if a.low <= self.constants.earth_radius {
            return Err(invalid("bounds.a_km", "lower bound must exceed the Earth radius"));
        }
        if e.low < 0.0 || e.high >= 1.0 {
            return Err(invalid("bounds.e", "must lie within [0, 1)"));
        }
        if i.low < 0.0 || i.high > std::f64::consts::PI {
            return Err(invalid("bounds.i_deg", "must lie within [0, 180]"));
        }
        if self.max_episode_steps == 0 {
            return Err(invalid("max_episode_steps", "must be at least 1"));
        }
        if self.track_samples < 2 {
            return Err(invalid("track_samples", "must be at least 2"));
        }
        if self.orbit_samples < 8 {
            return Err(invalid("orbit_samples", "must be at least 8"));
        }
        Ok(())
    }

    pub fn mean_altitude(&self, el: &KeplerianElements) -> f64 {
        let radius = match self.altitude_model {
            AltitudeModel::MeanRadius => el.a * (1.0 + 0.5 * el.e * el.e),
            AltitudeModel::SemiMajorAxis => el.a,
        };
        radius - self.constants.earth_radius
    }
}

/// Five normalized components, clamped to [-1, 1] on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVector(pub [f64; ELEMENT_COUNT]);

impl ActionVector {
    pub fn new(components: [f64; ELEMENT_COUNT]) -> Self {
        Self(components.map(|c| if c.is_nan() { 0.0 } else { c.clamp(-1.0, 1.0) }))
    }

    pub fn from_slice(components: &[f64]) -> Self {
        let mut out = [0.0; ELEMENT_COUNT];
        out.copy_from_slice(&components[..ELEMENT_COUNT]);
        Self::new(out)
    }
}

/// Affine map of a normalized action onto the element box; the true anomaly
/// is set to zero.
pub fn rescale_action(action: &ActionVector, bounds: &ElementBounds) -> KeplerianElements {
    let act = ActionVector::new(action.0);
    let v: [f64; ELEMENT_COUNT] =
        std::array::from_fn(|k| bounds.0[k].low + 0.5 * (act.0[k] + 1.0) * bounds.0[k].width());
    KeplerianElements {
        a: v[0],
        e: v[1],
        i: v[2],
        raan: v[3],
        arg_perigee: v[4],
        true_anomaly: 0.0,
    }
}

fn element_vector(el: &KeplerianElements) -> [f64; ELEMENT_COUNT] {
    [el.a, el.e, el.i, el.raan, el.arg_perigee]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// (a km, e, i rad, raan rad, argp rad)
    pub elements: [f64; ELEMENT_COUNT],
    pub target_valid: bool,
    pub coverage_ok: bool,
    pub safety_ok: bool,
}

impl Observation {
    pub fn all_objectives_met(&self) -> bool {
        self.target_valid && self.coverage_ok && self.safety_ok
    }
}

/// Network input: elements min-max scaled by `bounds`, then the three flags.
pub fn flatten_observation(obs: &Observation, bounds: &ElementBounds) -> [f64; OBSERVATION_DIM] {
    let mut out = [0.0; OBSERVATION_DIM];
    for (k, b) in bounds.0.iter().enumerate() {
        out[k] = (obs.elements[k] - b.low) / b.width();
    }
    out[5] = obs.target_valid as u8 as f64;
    out[6] = obs.coverage_ok as u8 as f64;
    out[7] = obs.safety_ok as u8 as f64;
    out
}

/// Inverse of the element block of [`flatten_observation`].
pub fn unflatten_elements(flat: &[f64], bounds: &ElementBounds) -> [f64; ELEMENT_COUNT] {
    std::array::from_fn(|k| bounds.0[k].low + flat[k] * bounds.0[k].width())
}

/// Everything computed when scoring one orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitAssessment {
    pub elements: KeplerianElements,
    pub d_target: f64,
    pub d_min: f64,
    pub mean_altitude: f64,
    pub breakdown: RewardBreakdown,
    pub observation: Observation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub breakdown: RewardBreakdown,
    pub d_target: f64,
    pub d_min: f64,
    pub mean_altitude: f64,
    pub all_objectives_met: bool,
    /// The orbit actually flown, after the perigee guard.
    pub elements: KeplerianElements,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("step called before reset (or after the episode ended)")]
    StepBeforeReset,
}

/// Pre-sampled catalog orbits shared between environments.
#[derive(Debug, Clone, Default)]
pub struct SafetyCatalog {
    orbits: Vec<SampledOrbit>,
    samples: usize,
}

impl SafetyCatalog {
    pub fn new(catalog: &[KeplerianElements], samples: usize) -> Self {
        Self {
            orbits: catalog.iter().map(|el| SampledOrbit::new(el, samples)).collect(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.orbits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    pub fn min_distance(&self, el: &KeplerianElements) -> f64 {
        orbit::min_sampled_distance(el, &self.orbits, self.samples)
    }
}

#[derive(Debug, Clone)]
struct Episode {
    observation: Observation,
    steps: usize,
    done: bool,
}

/// One environment instance. Cheap to clone; the mission and catalog are
/// shared read-only.
#[derive(Debug, Clone)]
pub struct OrbitEnv {
    mission: Arc<MissionConfig>,
    catalog: Arc<SafetyCatalog>,
    rng: ChaCha8Rng,
    episode: Option<Episode>,
}

impl OrbitEnv {
    pub fn new(mission: Arc<MissionConfig>, catalog: &[KeplerianElements], seed: u64) -> Self {
        let catalog = Arc::new(SafetyCatalog::new(catalog, mission.orbit_samples));
        Self::with_catalog(mission, catalog, seed)
    }

    pub fn with_catalog(mission: Arc<MissionConfig>, catalog: Arc<SafetyCatalog>, seed: u64) -> Self {
        Self {
            mission,
            catalog,
            rng: ChaCha8Rng::seed_from_u64(seed),
            episode: None,
        }
    }

    pub fn mission(&self) -> &MissionConfig {
        &self.mission
    }

    pub fn catalog(&self) -> &Arc<SafetyCatalog> {
        &self.catalog
    }

    pub fn steps(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    pub fn current_observation(&self) -> Option<Observation> {
        self.episode.as_ref().map(|e| e.observation)
    }

    /// Caps eccentricity so the perigee clears [`MIN_PERIGEE_ALTITUDE_KM`].
    fn guard_perigee(&self, mut el: KeplerianElements) -> KeplerianElements {
        let r_min = self.mission.constants.earth_radius + MIN_PERIGEE_ALTITUDE_KM;
        let e_max = 1.0 - r_min / el.a;
        if el.e > e_max {
            el.e = e_max.max(self.mission.element_bounds.0[1].low);
        }
        el
    }

    /// Scores an orbit against the mission without touching episode state.
    pub fn assess(&self, el: &KeplerianElements) -> OrbitAssessment {
        let m = &*self.mission;
        let d_target = orbit::min_ground_distance(el, m.target, m.track_window, m.track_samples, &m.constants);
        let d_min = self.catalog.min_distance(el);
        let mean_altitude = m.mean_altitude(el);
        let breakdown = reward::total_reward(&RewardInputs {
            mean_altitude,
            h_min: m.h_min,
            h_max: m.h_max,
            d_min,
            d_safe: m.d_safe,
            d_target,
            sigma: m.sigma,
            e: el.e,
            i: el.i,
            target_lat: m.target.lat,
            weights: m.weights,
        });
        let observation = Observation {
            elements: element_vector(el),
            target_valid: d_target <= m.sigma,
            coverage_ok: mean_altitude >= m.h_min && mean_altitude <= m.h_max,
            safety_ok: d_min >= m.d_safe,
        };
        OrbitAssessment {
            elements: *el,
            d_target,
            d_min,
            mean_altitude,
            breakdown,
            observation,
        }
    }

    fn random_orbit(&mut self) -> KeplerianElements {
        let bounds = self.mission.element_bounds;
        let r_min = self.mission.constants.earth_radius + MIN_PERIGEE_ALTITUDE_KM;
        for _ in 0..1000 {
            let v: [f64; ELEMENT_COUNT] = std::array::from_fn(|k| {
                let b = bounds.0[k];
                b.low + self.rng.random::<f64>() * b.width()
            });
            let el = KeplerianElements {
                a: v[0],
                e: v[1],
                i: v[2],
                raan: v[3],
                arg_perigee: v[4],
                true_anomaly: 0.0,
            };
            if el.a * (1.0 - el.e) >= r_min {
                return el;
            }
        }
        // The feasible region is a vanishing sliver of the box; fall back to
        // the guarded orbit rather than loop forever.
        let el = rescale_action(&ActionVector::new([self.rng.random::<f64>() * 2.0 - 1.0; 5]), &bounds);
        self.guard_perigee(el)
    }

    /// Starts an episode at a uniformly random orbit. `Some(seed)` reseeds
    /// the environment stream first.
    pub fn reset(&mut self, seed: Option<u64>) -> Observation {
        if let Some(seed) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(seed);
        }
        let el = self.random_orbit();
        let observation = self.assess(&el).observation;
        self.episode = Some(Episode {
            observation,
            steps: 0,
            done: false,
        });
        observation
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<StepResult, EnvError> {
        let max_steps = self.mission.max_episode_steps;
        let el = self.guard_perigee(rescale_action(action, &self.mission.element_bounds));
        let episode = match &self.episode {
            Some(ep) if !ep.done => ep,
            _ => return Err(EnvError::StepBeforeReset),
        };
        let steps = episode.steps + 1;
        let assessment = self.assess(&el);
        let met = assessment.observation.all_objectives_met();
        let terminated = met;
        let truncated = !terminated && steps >= max_steps;
        self.episode = Some(Episode {
            observation: assessment.observation,
            steps,
            done: terminated || truncated,
        });
        Ok(StepResult {
            observation: assessment.observation,
            reward: assessment.breakdown.final_reward,
            terminated,
            truncated,
            info: StepInfo {
                breakdown: assessment.breakdown,
                d_target: assessment.d_target,
                d_min: assessment.d_min,
                mean_altitude: assessment.mean_altitude,
                all_objectives_met: met,
                elements: el,
            },
        })
    }
}
