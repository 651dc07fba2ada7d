//! Scenario configuration: array geometry, user/target placement, powers,
//! tolerances and randomness.
//!
//! Everything downstream consumes a validated [`Scenario`]. All internal
//! arithmetic is in linear SI units (watts, hertz, meters, radians); decibel
//! and degree forms exist only at the config-file boundary.
//!
//! Reproducibility contract: the pseudo-random generator is ChaCha8
//! (`rand_chacha::ChaCha8Rng`), seeded from a 64-bit root seed. Per-trial
//! streams are spawned from the root seed by setting the ChaCha stream
//! counter, so output is identical across platforms for a fixed seed.

use crate::scalar::{conv, Cx, Scalar, SPEED_OF_LIGHT};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("missing required config key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

/// Which side of the transceiver array an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArraySide {
    Tx,
    Rx,
}

/// Uniform linear array description.
///
/// Element `n` (1-based, `n = 1..N`) sits at coordinate `(0, n·d)`; there is
/// no centering at the array midpoint. Transmit and receive arrays are
/// colocated with identical element coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry<S> {
    pub n_tx: usize,
    pub n_rx: usize,
    pub spacing_m: S,
    pub carrier_hz: S,
    pub wavelength_m: S,
}

impl<S: Scalar> ArrayGeometry<S> {
    pub fn new(n_tx: usize, n_rx: usize, spacing_m: S, carrier_hz: S) -> Result<Self, ScenarioError> {
        if n_tx < 2 {
            return Err(ScenarioError::InvalidValue {
                key: "n_tx".into(),
                reason: format!("need at least 2 transmit elements, got {n_tx}"),
            });
        }
        if n_rx < 1 {
            return Err(ScenarioError::InvalidValue {
                key: "n_rx".into(),
                reason: "need at least 1 receive element".into(),
            });
        }
        if spacing_m <= S::zero() {
            return Err(ScenarioError::InvalidValue {
                key: "spacing_m".into(),
                reason: "spacing must be positive".into(),
            });
        }
        if carrier_hz <= S::zero() {
            return Err(ScenarioError::InvalidValue {
                key: "carrier".into(),
                reason: "carrier frequency must be positive".into(),
            });
        }
        Ok(Self {
            n_tx,
            n_rx,
            spacing_m,
            carrier_hz,
            wavelength_m: conv::<S>(SPEED_OF_LIGHT) / carrier_hz,
        })
    }

    pub fn elements(&self, side: ArraySide) -> usize {
        match side {
            ArraySide::Tx => self.n_tx,
            ArraySide::Rx => self.n_rx,
        }
    }

    /// Aperture `(N − 1)·d` of the chosen side.
    pub fn aperture_m(&self, side: ArraySide) -> S {
        conv::<S>((self.elements(side) - 1) as f64) * self.spacing_m
    }
}

/// Rayleigh distance `2·D²/λ` for the chosen array side.
pub fn rayleigh_distance<S: Scalar>(geometry: &ArrayGeometry<S>, side: ArraySide) -> S {
    let d = geometry.aperture_m(side);
    conv::<S>(2.0) * d * d / geometry.wavelength_m
}

/// Polar placement of a user or the sensing target, relative to the array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPosition<S> {
    pub distance_m: S,
    pub angle_rad: S,
}

impl<S: Scalar> PolarPosition<S> {
    pub fn new(distance_m: S, angle_rad: S) -> Result<Self, ScenarioError> {
        if distance_m <= S::zero() {
            return Err(ScenarioError::InvalidValue {
                key: "distance".into(),
                reason: "distance must be positive".into(),
            });
        }
        let half_pi = S::FRAC_PI_2();
        if angle_rad <= -half_pi || angle_rad > half_pi {
            return Err(ScenarioError::InvalidValue {
                key: "angle".into(),
                reason: "angle must lie in (-pi/2, pi/2]".into(),
            });
        }
        Ok(Self { distance_m, angle_rad })
    }
}

/// Full validated scenario. Immutable after construction; cheap to clone and
/// safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct Scenario<S> {
    pub geometry: ArrayGeometry<S>,
    pub users: Vec<PolarPosition<S>>,
    pub target: PolarPosition<S>,
    /// Complex round-trip target amplitude β_s.
    pub target_gain: Cx<S>,
    /// Coherent block length in symbols (T).
    pub coherence_len: usize,
    /// Per-user receiver noise power in watts (σ_k², identical for all users).
    pub noise_user_w: S,
    /// Radar receiver noise power in watts (σ²).
    pub noise_radar_w: S,
    /// Transmit power budget in watts (P_max).
    pub p_max_w: S,
    /// Per-user rate floor in bits/s/Hz (R_th).
    pub qos_bpshz: S,
    /// Initial annealing temperature (δ).
    pub sa_temp: S,
    /// Temperature decay per step (ρ ∈ (0,1)).
    pub sa_decay: S,
    /// Inner-loop convergence tolerance (δ₁).
    pub tol_inner: S,
    /// Selection-search convergence tolerance (δ₂).
    pub tol_outer: S,
    pub seed: u64,
    /// User sampling ranges (meters, radians).
    pub user_dist_range: (S, S),
    pub user_angle_range: (S, S),
    /// Non-fatal validation findings (e.g. placements beyond the transmit
    /// Rayleigh distance).
    pub warnings: Vec<String>,
}

impl<S: Scalar> Scenario<S> {
    pub fn k_users(&self) -> usize {
        self.users.len()
    }

    /// Replace the user set (used per trial after re-sampling).
    pub fn with_users(&self, users: Vec<PolarPosition<S>>) -> Self {
        let mut s = self.clone();
        s.users = users;
        s.refresh_warnings();
        s
    }

    pub fn with_k_users(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.users = sample_positions(
            k,
            self.user_dist_range,
            self.user_angle_range,
            self.seed,
        );
        s.refresh_warnings();
        s
    }

    pub fn with_qos(&self, qos_bpshz: S) -> Self {
        let mut s = self.clone();
        s.qos_bpshz = qos_bpshz;
        s
    }

    fn refresh_warnings(&mut self) {
        self.warnings = rayleigh_warnings(&self.geometry, &self.users, &self.target);
    }

    /// Default magnitude of the round-trip gain: `√(λ²/((4π)³·d⁴))`, the
    /// monostatic radar-equation amplitude at unit cross-section, with zero
    /// phase.
    pub fn default_target_gain(geometry: &ArrayGeometry<S>, target: &PolarPosition<S>) -> Cx<S> {
        let lambda = geometry.wavelength_m;
        let four_pi = conv::<S>(4.0) * S::PI();
        let d = target.distance_m;
        let mag = (lambda * lambda / (four_pi * four_pi * four_pi * d * d * d * d)).sqrt();
        Cx::new(mag, S::zero())
    }

    /// Desk-scale default profile: 32×16 array at 30 GHz, 4 users, paper
    /// power/noise/QoS levels. Small enough for exhaustive selection audits.
    pub fn desk_default() -> Self {
        Self::preset(32, 16, 4, 7)
    }

    /// Construction helper shared by presets and tests.
    pub fn preset(n_tx: usize, n_rx: usize, k_users: usize, seed: u64) -> Self {
        let carrier = conv::<S>(30.0e9);
        let lambda = conv::<S>(SPEED_OF_LIGHT) / carrier;
        let spacing = lambda * conv::<S>(0.5);
        let geometry = ArrayGeometry::new(n_tx, n_rx, spacing, carrier).expect("valid preset");
        let target = PolarPosition::new(conv::<S>(15.0), conv::<S>(45.0f64.to_radians()))
            .expect("valid preset target");
        let target_gain = Self::default_target_gain(&geometry, &target);
        let dist_range = (conv::<S>(15.0), conv::<S>(25.0));
        let angle_range = (
            -S::PI() / conv::<S>(3.0),
            S::PI() / conv::<S>(3.0),
        );
        let users = sample_positions(k_users, dist_range, angle_range, seed);
        let mut scenario = Self {
            geometry,
            users,
            target,
            target_gain,
            coherence_len: 256,
            noise_user_w: conv::<S>(dbm_to_watts(-80.0)),
            noise_radar_w: conv::<S>(dbm_to_watts(-80.0)),
            p_max_w: conv::<S>(1.0),
            qos_bpshz: conv::<S>(3.0),
            sa_temp: conv::<S>(20.0),
            sa_decay: conv::<S>(0.9),
            tol_inner: conv::<S>(1e-3),
            tol_outer: conv::<S>(1e-3),
            seed,
            user_dist_range: dist_range,
            user_angle_range: angle_range,
            warnings: Vec::new(),
        };
        scenario.refresh_warnings();
        scenario
    }
}

/// `watts = 10^((dBm − 30)/10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Inverse of [`dbm_to_watts`].
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// RNG for trial `counter` derived from one root seed. ChaCha streams keep
/// trials statistically independent and platform-stable.
pub fn trial_rng(root_seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(counter);
    rng
}

/// Uniform draw in `[0,1)` from the top 53 bits of a `u64`.
pub fn unit_uniform<S: Scalar>(rng: &mut ChaCha8Rng) -> S {
    let u = rng.next_u64() >> 11;
    conv::<S>(u as f64 / 9007199254740992.0)
}

fn sample_positions<S: Scalar>(
    k: usize,
    dist_range: (S, S),
    angle_range: (S, S),
    seed: u64,
) -> Vec<PolarPosition<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            // Per user: distance draw, then angle draw.
            let ud: S = unit_uniform(&mut rng);
            let ua: S = unit_uniform(&mut rng);
            PolarPosition {
                distance_m: dist_range.0 + (dist_range.1 - dist_range.0) * ud,
                angle_rad: angle_range.0 + (angle_range.1 - angle_range.0) * ua,
            }
        })
        .collect()
}

/// Draw `K` user positions for one trial: distance uniform on the scenario's
/// distance range, angle uniform on its angle range. Deterministic for a
/// fixed seed.
pub fn sample_users<S: Scalar>(scenario: &Scenario<S>, seed: u64) -> Vec<PolarPosition<S>> {
    sample_positions(
        scenario.k_users(),
        scenario.user_dist_range,
        scenario.user_angle_range,
        seed,
    )
}

fn rayleigh_warnings<S: Scalar>(
    geometry: &ArrayGeometry<S>,
    users: &[PolarPosition<S>],
    target: &PolarPosition<S>,
) -> Vec<String> {
    let z_t = rayleigh_distance(geometry, ArraySide::Tx);
    let mut warnings = Vec::new();
    for (k, u) in users.iter().enumerate() {
        if u.distance_m > z_t {
            warnings.push(format!(
                "user {} at {:.2} m lies beyond the transmit Rayleigh distance {:.2} m",
                k + 1,
                u.distance_m.to_f64().unwrap_or(f64::NAN),
                z_t.to_f64().unwrap_or(f64::NAN)
            ));
        }
    }
    if target.distance_m > z_t {
        warnings.push(format!(
            "target at {:.2} m lies beyond the transmit Rayleigh distance {:.2} m",
            target.distance_m.to_f64().unwrap_or(f64::NAN),
            z_t.to_f64().unwrap_or(f64::NAN)
        ));
    }
    warnings
}

// ---------------------------------------------------------------------------
// Config-file parsing
// ---------------------------------------------------------------------------

/// Parse a scenario from flat `key = value [unit]` text.
///
/// Recognized keys (units in brackets; power accepts `dBm`, `mW`, `W`,
/// frequency accepts `Hz`..`GHz`, length `m`/`cm`/`mm`, angle `deg`/`rad`):
///
/// required — `n_tx`, `n_rx`, `carrier`, `k_users`, `p_max`, `noise_user`,
/// `noise_radar`, `qos_bpshz`, `seed`;
/// optional — `spacing` (default λ/2), `target_dist` (15 m),
/// `target_angle` (45 deg), `target_gain_re`/`target_gain_im` (radar-equation
/// default), `coherence_len` (256), `sa_temp` (20), `sa_decay` (0.9),
/// `tol_inner` (1e-3), `tol_outer` (1e-3), `user_dist_min`/`user_dist_max`
/// (15/25 m), `user_angle_min`/`user_angle_max` (±60 deg).
///
/// Lines starting with `#` and blank lines are ignored. Users are sampled
/// from the scenario seed at load time; trial harnesses re-sample per trial.
pub fn load_scenario<S: Scalar>(document: &str) -> Result<Scenario<S>, ScenarioError> {
    let kv = parse_key_values(document)?;
    let get = |key: &str| -> Result<&RawValue, ScenarioError> {
        kv.get(key).ok_or_else(|| ScenarioError::MissingKey(key.into()))
    };

    let n_tx = get("n_tx")?.as_count("n_tx")?;
    let n_rx = get("n_rx")?.as_count("n_rx")?;
    let carrier = get("carrier")?.as_frequency_hz("carrier")?;
    let k_users = get("k_users")?.as_count("k_users")?;
    if k_users == 0 {
        return Err(ScenarioError::InvalidValue {
            key: "k_users".into(),
            reason: "need at least one user".into(),
        });
    }
    let p_max = get("p_max")?.as_power_watts("p_max")?;
    let noise_user = get("noise_user")?.as_power_watts("noise_user")?;
    let noise_radar = get("noise_radar")?.as_power_watts("noise_radar")?;
    let qos = get("qos_bpshz")?.as_bare("qos_bpshz")?;
    let seed = get("seed")?.as_count("seed")? as u64;

    for (key, v) in [("p_max", p_max), ("noise_user", noise_user), ("noise_radar", noise_radar)] {
        if v <= 0.0 {
            return Err(ScenarioError::InvalidValue {
                key: key.into(),
                reason: format!("power must be positive, got {v} W"),
            });
        }
    }
    if qos < 0.0 {
        return Err(ScenarioError::InvalidValue {
            key: "qos_bpshz".into(),
            reason: "rate floor cannot be negative".into(),
        });
    }

    let wavelength = SPEED_OF_LIGHT / carrier;
    let spacing = match kv.get("spacing") {
        Some(v) => v.as_length_m("spacing")?,
        None => wavelength / 2.0,
    };
    let geometry = ArrayGeometry::new(n_tx, n_rx, conv::<S>(spacing), conv::<S>(carrier))?;

    let target_dist = opt(&kv, "target_dist", RawValue::as_length_m)?.unwrap_or(15.0);
    let target_angle = opt(&kv, "target_angle", RawValue::as_angle_rad)?
        .unwrap_or(45.0f64.to_radians());
    let target = PolarPosition::new(conv::<S>(target_dist), conv::<S>(target_angle))?;

    let target_gain = match (
        opt(&kv, "target_gain_re", RawValue::as_bare)?,
        opt(&kv, "target_gain_im", RawValue::as_bare)?,
    ) {
        (None, None) => Scenario::default_target_gain(&geometry, &target),
        (re, im) => Cx::new(conv::<S>(re.unwrap_or(0.0)), conv::<S>(im.unwrap_or(0.0))),
    };

    let coherence_len = match kv.get("coherence_len") {
        Some(v) => v.as_count("coherence_len")?,
        None => 256,
    };
    if coherence_len == 0 {
        return Err(ScenarioError::InvalidValue {
            key: "coherence_len".into(),
            reason: "coherent block length must be at least 1 symbol".into(),
        });
    }

    let sa_temp = opt(&kv, "sa_temp", RawValue::as_bare)?.unwrap_or(20.0);
    let sa_decay = opt(&kv, "sa_decay", RawValue::as_bare)?.unwrap_or(0.9);
    if sa_temp <= 0.0 {
        return Err(ScenarioError::InvalidValue {
            key: "sa_temp".into(),
            reason: "temperature must be positive".into(),
        });
    }
    if !(sa_decay > 0.0 && sa_decay < 1.0) {
        return Err(ScenarioError::InvalidValue {
            key: "sa_decay".into(),
            reason: format!("decay rate must lie in (0,1), got {sa_decay}"),
        });
    }
    let tol_inner = opt(&kv, "tol_inner", RawValue::as_bare)?.unwrap_or(1e-3);
    let tol_outer = opt(&kv, "tol_outer", RawValue::as_bare)?.unwrap_or(1e-3);
    for (key, v) in [("tol_inner", tol_inner), ("tol_outer", tol_outer)] {
        if v <= 0.0 {
            return Err(ScenarioError::InvalidValue {
                key: key.into(),
                reason: "tolerance must be positive".into(),
            });
        }
    }

    let dist_min = opt(&kv, "user_dist_min", RawValue::as_length_m)?.unwrap_or(15.0);
    let dist_max = opt(&kv, "user_dist_max", RawValue::as_length_m)?.unwrap_or(25.0);
    let angle_min =
        opt(&kv, "user_angle_min", RawValue::as_angle_rad)?.unwrap_or(-std::f64::consts::FRAC_PI_3);
    let angle_max =
        opt(&kv, "user_angle_max", RawValue::as_angle_rad)?.unwrap_or(std::f64::consts::FRAC_PI_3);
    if dist_min <= 0.0 || dist_max < dist_min {
        return Err(ScenarioError::InvalidValue {
            key: "user_dist_min".into(),
            reason: "need 0 < user_dist_min <= user_dist_max".into(),
        });
    }
    if angle_max < angle_min {
        return Err(ScenarioError::InvalidValue {
            key: "user_angle_min".into(),
            reason: "need user_angle_min <= user_angle_max".into(),
        });
    }

    let dist_range = (conv::<S>(dist_min), conv::<S>(dist_max));
    let angle_range = (conv::<S>(angle_min), conv::<S>(angle_max));
    let users = sample_positions(k_users, dist_range, angle_range, seed);

    let mut scenario = Scenario {
        geometry,
        users,
        target,
        target_gain,
        coherence_len,
        noise_user_w: conv::<S>(noise_user),
        noise_radar_w: conv::<S>(noise_radar),
        p_max_w: conv::<S>(p_max),
        qos_bpshz: conv::<S>(qos),
        sa_temp: conv::<S>(sa_temp),
        sa_decay: conv::<S>(sa_decay),
        tol_inner: conv::<S>(tol_inner),
        tol_outer: conv::<S>(tol_outer),
        seed,
        user_dist_range: dist_range,
        user_angle_range: angle_range,
        warnings: Vec::new(),
    };
    scenario.refresh_warnings();
    Ok(scenario)
}

struct RawValue {
    number: f64,
    unit: Option<String>,
}

fn opt<T>(
    kv: &BTreeMap<String, RawValue>,
    key: &str,
    f: impl Fn(&RawValue, &str) -> Result<T, ScenarioError>,
) -> Result<Option<T>, ScenarioError> {
    kv.get(key).map(|v| f(v, key)).transpose()
}

impl RawValue {
    fn invalid(&self, key: &str, reason: impl Into<String>) -> ScenarioError {
        ScenarioError::InvalidValue {
            key: key.into(),
            reason: reason.into(),
        }
    }

    fn as_bare(&self, key: &str) -> Result<f64, ScenarioError> {
        match &self.unit {
            None => Ok(self.number),
            Some(u) => Err(self.invalid(key, format!("unexpected unit `{u}`"))),
        }
    }

    fn as_count(&self, key: &str) -> Result<usize, ScenarioError> {
        let v = self.as_bare(key)?;
        if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(self.invalid(key, format!("expected a non-negative integer, got {v}")));
        }
        Ok(v as usize)
    }

    fn as_power_watts(&self, key: &str) -> Result<f64, ScenarioError> {
        match self.unit.as_deref() {
            Some("dBm") | Some("dbm") => Ok(dbm_to_watts(self.number)),
            Some("mW") | Some("mw") => Ok(self.number * 1e-3),
            Some("W") | Some("w") | None => Ok(self.number),
            Some(u) => Err(self.invalid(key, format!("unknown power unit `{u}`"))),
        }
    }

    fn as_frequency_hz(&self, key: &str) -> Result<f64, ScenarioError> {
        match self.unit.as_deref() {
            Some("GHz") | Some("ghz") => Ok(self.number * 1e9),
            Some("MHz") | Some("mhz") => Ok(self.number * 1e6),
            Some("kHz") | Some("khz") => Ok(self.number * 1e3),
            Some("Hz") | Some("hz") | None => Ok(self.number),
            Some(u) => Err(self.invalid(key, format!("unknown frequency unit `{u}`"))),
        }
    }

    fn as_length_m(&self, key: &str) -> Result<f64, ScenarioError> {
        match self.unit.as_deref() {
            Some("m") | None => Ok(self.number),
            Some("cm") => Ok(self.number * 1e-2),
            Some("mm") => Ok(self.number * 1e-3),
            Some(u) => Err(self.invalid(key, format!("unknown length unit `{u}`"))),
        }
    }

    fn as_angle_rad(&self, key: &str) -> Result<f64, ScenarioError> {
        match self.unit.as_deref() {
            Some("deg") => Ok(self.number.to_radians()),
            Some("rad") | None => Ok(self.number),
            Some(u) => Err(self.invalid(key, format!("unknown angle unit `{u}`"))),
        }
    }
}

fn parse_key_values(document: &str) -> Result<BTreeMap<String, RawValue>, ScenarioError> {
    let mut map = BTreeMap::new();
    for (lineno, raw_line) in document.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ScenarioError::InvalidValue {
                key: format!("line {}", lineno + 1),
                reason: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim().to_string();
        let mut parts = value.split_whitespace();
        let number_txt = parts.next().ok_or_else(|| ScenarioError::InvalidValue {
            key: key.clone(),
            reason: "empty value".into(),
        })?;
        let number: f64 = number_txt.parse().map_err(|_| ScenarioError::InvalidValue {
            key: key.clone(),
            reason: format!("`{number_txt}` is not a number"),
        })?;
        let unit = parts.next().map(str::to_string);
        if let Some(extra) = parts.next() {
            return Err(ScenarioError::InvalidValue {
                key,
                reason: format!("trailing token `{extra}`"),
            });
        }
        map.insert(key, RawValue { number, unit });
    }
    Ok(map)
}
