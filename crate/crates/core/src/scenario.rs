//! Problem instances: geometry, radio and propulsion constants, algorithm
//! tolerances.
//!
//! A [`Scenario`] is built from a flat JSON document. Every key is optional and
//! falls back to the reference simulation setup (5 UEs, 10 subchannels,
//! 10 one-second slots, 1 GHz carriers, -96 dBm noise, ...). Quantities that are
//! commonly quoted in logarithmic units accept either spelling, selected by the
//! key suffix (`noise_var_dbm` or `noise_var_w`, `eta_los_db` or `eta_los`).
//! Unknown keys are rejected. [`Scenario::to_config`] writes the canonical
//! linear spelling, so `load_scenario(&s.to_config())` reproduces `s` exactly.
//!
//! | key | unit | default |
//! |-----|------|---------|
//! | `n_ues` | count | 5 (or length of `ue_positions_m`) |
//! | `n_subchannels` | count | 10 |
//! | `n_slots` | count | 10 |
//! | `slot_len_s` | s | 1 |
//! | `bs_height_m` | m | 30 |
//! | `cell_radius_m` | m | 200 |
//! | `ue_positions_m` | list of `[x, y, z]` | sampled in the cell from `rng_seed` |
//! | `uav_initial_m` | `[x, y, z]` | sampled in the cell, altitude in [100, 200] m |
//! | `subchannel_freq_hz` | Hz, scalar or list | 1e9 |
//! | `p_ue_max_dbm` / `p_ue_max_w` | | 17 dBm |
//! | `p_uav_max_w` / `p_uav_max_dbm` | | 0.3 W |
//! | `noise_var_dbm` / `noise_var_w` | | -96 dBm |
//! | `ici_power_dbm` / `ici_power_w` | | -110 dBm |
//! | `pathloss_exp` | | 4 |
//! | `eta_los_db` / `eta_los` | | 1 dB |
//! | `eta_nlos_db` / `eta_nlos` | | 20 dB |
//! | `a2g_a`, `a2g_b` | | 9.6, 0.28 |
//! | `d_max_m` | m | 15 |
//! | `e_max_j` | J per slot | 500 |
//! | `gamma_th`, `gamma1_th`, `gamma2_th` | linear SINR | 300 |
//! | `epsilon`, `epsilon_to` | | 0.001, 0.01 |
//! | `fading` | `"deterministic"` or `"random"` | deterministic |
//! | `rician_k_factor_db` | dB | 10 |
//! | `rng_seed` | integer | 7 |
//!
//! Propulsion keys: `profile_drag`, `blade_omega_rad_s`, `rotor_radius_m`,
//! `tip_speed_m_s`, `hover_induced_velocity_m_s`, `fuselage_drag_ratio`,
//! `air_density_kg_m3`, `rotor_solidity`, `rotor_disc_area_m2`,
//! `aircraft_weight_n`, `induced_power_factor`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::uav_power;
use crate::units::{db_to_linear, dbm_to_watts};

/// Air-to-ground pathloss mixture parameters (linear attenuations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A2GParams {
    pub eta_los: f64,
    pub eta_nlos: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for A2GParams {
    fn default() -> Self {
        Self {
            eta_los: db_to_linear(1.0),
            eta_nlos: db_to_linear(20.0),
            a: 9.6,
            b: 0.28,
        }
    }
}

/// Rotary-wing propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropulsionParams {
    /// Profile drag coefficient.
    pub delta: f64,
    /// Blade angular velocity, rad/s.
    pub omega: f64,
    pub rotor_radius: f64,
    /// Blade tip speed, m/s.
    pub u_tip: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub v0: f64,
    /// Fuselage drag ratio.
    pub d0: f64,
    /// Air density, kg/m^3.
    pub rho: f64,
    /// Rotor solidity.
    pub s: f64,
    /// Rotor disc area, m^2.
    pub disc_area: f64,
    /// Aircraft weight, N.
    pub weight: f64,
    /// Incremental correction factor to induced power.
    pub k_factor: f64,
}

impl Default for PropulsionParams {
    fn default() -> Self {
        Self {
            delta: 0.012,
            omega: 300.0,
            rotor_radius: 0.4,
            u_tip: 120.0,
            v0: 4.03,
            d0: 0.6,
            rho: 1.225,
            s: 0.05,
            disc_area: 0.503,
            weight: 20.0,
            k_factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FadingModel {
    /// `|g|^2 = 1` on every link.
    #[default]
    Deterministic,
    /// Seeded unit-mean Rayleigh (terrestrial) and Rician (air-to-ground) draws
    /// per link, subchannel and slot.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_ues: usize,
    pub n_subchannels: usize,
    pub n_slots: usize,
    /// Slot length, s.
    pub slot_len: f64,
    pub bs_height: f64,
    /// Radius of the disc UEs and the UAV start are sampled from, m.
    pub cell_radius: f64,
    pub ue_positions: Vec<Point3>,
    pub uav_initial: Point3,
    /// Carrier frequency of each subchannel, Hz.
    pub subchannel_freqs: Vec<f64>,
    pub p_ue_max: f64,
    pub p_uav_max: f64,
    pub noise_var: f64,
    /// Inter-subcarrier interference power at the BS, treated as a constant.
    pub ici_power: f64,
    pub pathloss_exp: f64,
    pub a2g: A2GParams,
    pub propulsion: PropulsionParams,
    /// Maximum displacement per slot, m.
    pub d_max: f64,
    /// Flying energy budget per slot, J.
    pub e_max: f64,
    /// Linear SINR thresholds: direct link, UE-to-UAV hop, UAV-to-BS hop.
    pub gamma_th: f64,
    pub gamma1_th: f64,
    pub gamma2_th: f64,
    /// Stop threshold of the per-slot block loop.
    pub epsilon: f64,
    /// Stop threshold of the trajectory loop (fractional).
    pub epsilon_to: f64,
    pub fading: FadingModel,
    pub rician_k_factor_db: f64,
    pub rng_seed: u64,
}

/// UAV position in the current slot and at the end of the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub pos: Point3,
    pub prev_pos: Point3,
}

impl UavState {
    pub fn at(pos: Point3) -> Self {
        Self { pos, prev_pos: pos }
    }

    /// Start of the next slot: the UAV takes off from where it is.
    pub fn advance(&self) -> Self {
        Self::at(self.pos)
    }
}

pub const DEFAULT_SEED: u64 = 7;
const DEFAULT_N_UES: usize = 5;
const UAV_ALTITUDE_RANGE: (f64, f64) = (100.0, 200.0);

impl Default for Scenario {
    fn default() -> Self {
        let cell_radius = 200.0;
        let rng_seed = DEFAULT_SEED;
        let (ue_positions, uav_initial) =
            sample_topology(rng_seed, cell_radius, DEFAULT_N_UES).expect("default topology");
        let k = 10;
        Self {
            n_ues: DEFAULT_N_UES,
            n_subchannels: k,
            n_slots: 10,
            slot_len: 1.0,
            bs_height: 30.0,
            cell_radius,
            ue_positions,
            uav_initial,
            subchannel_freqs: vec![1e9; k],
            p_ue_max: dbm_to_watts(17.0),
            p_uav_max: 0.3,
            noise_var: dbm_to_watts(-96.0),
            ici_power: dbm_to_watts(-110.0),
            pathloss_exp: 4.0,
            a2g: A2GParams::default(),
            propulsion: PropulsionParams::default(),
            d_max: 15.0,
            e_max: 500.0,
            gamma_th: 300.0,
            gamma1_th: 300.0,
            gamma2_th: 300.0,
            epsilon: 1e-3,
            epsilon_to: 1e-2,
            fading: FadingModel::Deterministic,
            rician_k_factor_db: 10.0,
            rng_seed,
        }
    }
}

impl Scenario {
    pub fn bs_position(&self) -> Point3 {
        Point3::new(0.0, 0.0, self.bs_height)
    }

    /// `|I|^2 / sigma^2`.
    pub fn ici_to_noise(&self) -> f64 {
        self.ici_power / self.noise_var
    }

    /// Largest displacement allowed in one slot: the tighter of `d_max` and
    /// the distance reachable at the energy-limited speed.
    pub fn move_radius(&self) -> Result<f64> {
        let v = uav_power::max_speed_under_energy(self.e_max, self.slot_len, &self.propulsion)?;
        Ok(self.d_max.min(v * self.slot_len))
    }

    /// Same parameters on a freshly sampled topology (UEs and UAV start).
    pub fn resampled(&self, seed: u64) -> Result<Self> {
        let (ue_positions, uav_initial) = sample_topology(seed, self.cell_radius, self.n_ues)?;
        Ok(Self {
            ue_positions,
            uav_initial,
            rng_seed: seed,
            ..self.clone()
        })
    }

    /// Canonical config document (linear units).
    pub fn to_config(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("n_ues", self.n_ues.into());
        put("n_subchannels", self.n_subchannels.into());
        put("n_slots", self.n_slots.into());
        put("slot_len_s", self.slot_len.into());
        put("bs_height_m", self.bs_height.into());
        put("cell_radius_m", self.cell_radius.into());
        put(
            "ue_positions_m",
            Value::Array(self.ue_positions.iter().map(|p| point_value(*p)).collect()),
        );
        put("uav_initial_m", point_value(self.uav_initial));
        put(
            "subchannel_freq_hz",
            Value::Array(self.subchannel_freqs.iter().map(|&f| f.into()).collect()),
        );
        put("p_ue_max_w", self.p_ue_max.into());
        put("p_uav_max_w", self.p_uav_max.into());
        put("noise_var_w", self.noise_var.into());
        put("ici_power_w", self.ici_power.into());
        put("pathloss_exp", self.pathloss_exp.into());
        put("eta_los", self.a2g.eta_los.into());
        put("eta_nlos", self.a2g.eta_nlos.into());
        put("a2g_a", self.a2g.a.into());
        put("a2g_b", self.a2g.b.into());
        let p = &self.propulsion;
        put("profile_drag", p.delta.into());
        put("blade_omega_rad_s", p.omega.into());
        put("rotor_radius_m", p.rotor_radius.into());
        put("tip_speed_m_s", p.u_tip.into());
        put("hover_induced_velocity_m_s", p.v0.into());
        put("fuselage_drag_ratio", p.d0.into());
        put("air_density_kg_m3", p.rho.into());
        put("rotor_solidity", p.s.into());
        put("rotor_disc_area_m2", p.disc_area.into());
        put("aircraft_weight_n", p.weight.into());
        put("induced_power_factor", p.k_factor.into());
        put("d_max_m", self.d_max.into());
        put("e_max_j", self.e_max.into());
        put("gamma_th", self.gamma_th.into());
        put("gamma1_th", self.gamma1_th.into());
        put("gamma2_th", self.gamma2_th.into());
        put("epsilon", self.epsilon.into());
        put("epsilon_to", self.epsilon_to.into());
        put(
            "fading",
            serde_json::to_value(self.fading).expect("fading model serializes"),
        );
        put("rician_k_factor_db", self.rician_k_factor_db.into());
        put("rng_seed", self.rng_seed.into());
        Value::Object(m)
    }
}

fn point_value(p: Point3) -> Value {
    Value::Array(vec![p.x.into(), p.y.into(), p.z.into()])
}

/// Parses and validates a config document. Missing keys take their defaults.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let trimmed = text.trim();
    let doc: Value = if trimmed.is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(trimmed).map_err(|e| Error::Parse(e.to_string()))?
    };
    let s = from_config(&doc)?;
    let violations = validate(&s);
    if violations.is_empty() {
        Ok(s)
    } else {
        Err(Error::Validation(violations))
    }
}

/// Builds a scenario from a config value without validating invariants.
pub fn from_config(doc: &Value) -> Result<Scenario> {
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Parse("config must be a JSON object".into()))?;
    let mut r = Reader {
        map: obj.clone(),
    };
    let d = Scenario::default();

    let rng_seed = r.u64("rng_seed")?.unwrap_or(d.rng_seed);
    let cell_radius = r.f64("cell_radius_m")?.unwrap_or(d.cell_radius);
    let explicit_ues = r.points("ue_positions_m")?;
    let n_ues_key = r.usize("n_ues")?;
    let n_ues = match (&explicit_ues, n_ues_key) {
        (Some(p), Some(n)) if p.len() != n => {
            return Err(Error::Parse(format!(
                "n_ues = {n} but ue_positions_m lists {} points",
                p.len()
            )))
        }
        (Some(p), _) => p.len(),
        (None, Some(n)) => n,
        (None, None) => d.n_ues,
    };
    let explicit_uav = r.point("uav_initial_m")?;
    let (ue_positions, uav_initial) = match (explicit_ues, explicit_uav) {
        (Some(u), Some(q)) => (u, q),
        (ues, uav) => {
            let (su, sq) = sample_topology(rng_seed, cell_radius, n_ues.max(1))
                .map_err(|e| Error::Parse(e.to_string()))?;
            let mut su = su;
            su.truncate(n_ues);
            (ues.unwrap_or(su), uav.unwrap_or(sq))
        }
    };

    let n_subchannels = r.usize("n_subchannels")?.unwrap_or(d.n_subchannels);
    let subchannel_freqs = match r.take("subchannel_freq_hz") {
        None => vec![1e9; n_subchannels],
        Some(Value::Number(n)) => vec![num(&n, "subchannel_freq_hz")?; n_subchannels],
        Some(Value::Array(a)) => {
            let f = a
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| Error::Parse("subchannel_freq_hz entries must be numbers".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            if f.len() != n_subchannels {
                return Err(Error::Parse(format!(
                    "subchannel_freq_hz lists {} frequencies for {n_subchannels} subchannels",
                    f.len()
                )));
            }
            f
        }
        Some(_) => return Err(Error::Parse("subchannel_freq_hz must be a number or a list".into())),
    };

    let dp = d.propulsion;
    let propulsion = PropulsionParams {
        delta: r.f64("profile_drag")?.unwrap_or(dp.delta),
        omega: r.f64("blade_omega_rad_s")?.unwrap_or(dp.omega),
        rotor_radius: r.f64("rotor_radius_m")?.unwrap_or(dp.rotor_radius),
        u_tip: r.f64("tip_speed_m_s")?.unwrap_or(dp.u_tip),
        v0: r.f64("hover_induced_velocity_m_s")?.unwrap_or(dp.v0),
        d0: r.f64("fuselage_drag_ratio")?.unwrap_or(dp.d0),
        rho: r.f64("air_density_kg_m3")?.unwrap_or(dp.rho),
        s: r.f64("rotor_solidity")?.unwrap_or(dp.s),
        disc_area: r.f64("rotor_disc_area_m2")?.unwrap_or(dp.disc_area),
        weight: r.f64("aircraft_weight_n")?.unwrap_or(dp.weight),
        k_factor: r.f64("induced_power_factor")?.unwrap_or(dp.k_factor),
    };
    let a2g = A2GParams {
        eta_los: r.ratio("eta_los")?.unwrap_or(d.a2g.eta_los),
        eta_nlos: r.ratio("eta_nlos")?.unwrap_or(d.a2g.eta_nlos),
        a: r.f64("a2g_a")?.unwrap_or(d.a2g.a),
        b: r.f64("a2g_b")?.unwrap_or(d.a2g.b),
    };
    let gamma_th = r.f64("gamma_th")?.unwrap_or(d.gamma_th);
    let fading = match r.take("fading") {
        None => d.fading,
        Some(v) => serde_json::from_value(v)
            .map_err(|e| Error::Parse(format!("fading: {e}")))?,
    };

    let s = Scenario {
        n_ues,
        n_subchannels,
        n_slots: r.usize("n_slots")?.unwrap_or(d.n_slots),
        slot_len: r.f64("slot_len_s")?.unwrap_or(d.slot_len),
        bs_height: r.f64("bs_height_m")?.unwrap_or(d.bs_height),
        cell_radius,
        ue_positions,
        uav_initial,
        subchannel_freqs,
        p_ue_max: r.power("p_ue_max")?.unwrap_or(d.p_ue_max),
        p_uav_max: r.power("p_uav_max")?.unwrap_or(d.p_uav_max),
        noise_var: r.power("noise_var")?.unwrap_or(d.noise_var),
        ici_power: r.power("ici_power")?.unwrap_or(d.ici_power),
        pathloss_exp: r.f64("pathloss_exp")?.unwrap_or(d.pathloss_exp),
        a2g,
        propulsion,
        d_max: r.f64("d_max_m")?.unwrap_or(d.d_max),
        e_max: r.f64("e_max_j")?.unwrap_or(d.e_max),
        gamma_th,
        gamma1_th: r.f64("gamma1_th")?.unwrap_or(gamma_th),
        gamma2_th: r.f64("gamma2_th")?.unwrap_or(gamma_th),
        epsilon: r.f64("epsilon")?.unwrap_or(d.epsilon),
        epsilon_to: r.f64("epsilon_to")?.unwrap_or(d.epsilon_to),
        fading,
        rician_k_factor_db: r.f64("rician_k_factor_db")?.unwrap_or(d.rician_k_factor_db),
        rng_seed,
    };
    r.finish()?;
    Ok(s)
}

/// Pops keys off the document so leftovers can be reported as unknown.
struct Reader {
    map: Map<String, Value>,
}

fn num(n: &serde_json::Number, key: &str) -> Result<f64> {
    n.as_f64()
        .ok_or_else(|| Error::Parse(format!("{key}: not representable as f64")))
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Number(n)) => num(&n, key).map(Some),
            Some(other) => Err(Error::Parse(format!("{key}: expected a number, got {other}"))),
        }
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| Error::Parse(format!("{key}: expected a nonnegative integer, got {v}"))),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    /// Power given as `<base>_w` or `<base>_dbm`.
    fn power(&mut self, base: &str) -> Result<Option<f64>> {
        let w = self.f64(&format!("{base}_w"))?;
        let dbm = self.f64(&format!("{base}_dbm"))?;
        match (w, dbm) {
            (Some(_), Some(_)) => Err(Error::Parse(format!(
                "{base}: give either {base}_w or {base}_dbm, not both"
            ))),
            (Some(w), None) => Ok(Some(w)),
            (None, Some(dbm)) => Ok(Some(dbm_to_watts(dbm))),
            (None, None) => Ok(None),
        }
    }

    /// Ratio given linear as `<base>` or logarithmic as `<base>_db`.
    fn ratio(&mut self, base: &str) -> Result<Option<f64>> {
        let lin = self.f64(base)?;
        let db = self.f64(&format!("{base}_db"))?;
        match (lin, db) {
            (Some(_), Some(_)) => Err(Error::Parse(format!(
                "{base}: give either {base} or {base}_db, not both"
            ))),
            (Some(v), None) => Ok(Some(v)),
            (None, Some(db)) => Ok(Some(db_to_linear(db))),
            (None, None) => Ok(None),
        }
    }

    fn point(&mut self, key: &str) -> Result<Option<Point3>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => parse_point(&v, key).map(Some),
        }
    }

    fn points(&mut self, key: &str) -> Result<Option<Vec<Point3>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a.iter().map(|v| parse_point(v, key)).collect::<Result<_>>().map(Some),
            Some(other) => Err(Error::Parse(format!("{key}: expected a list of points, got {other}"))),
        }
    }

    fn finish(self) -> Result<()> {
        if self.map.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.map.keys().cloned().collect();
            Err(Error::Parse(format!("unknown keys: {}", keys.join(", "))))
        }
    }
}

fn parse_point(v: &Value, key: &str) -> Result<Point3> {
    let bad = || Error::Parse(format!("{key}: points are [x, y, z] number triples"));
    let a = v.as_array().ok_or_else(bad)?;
    if a.len() != 3 {
        return Err(bad());
    }
    let c: Vec<f64> = a.iter().map(|x| x.as_f64().ok_or_else(bad)).collect::<Result<_>>()?;
    Ok(Point3::new(c[0], c[1], c[2]))
}

/// Lists every violated invariant; empty means the scenario is usable.
pub fn validate(s: &Scenario) -> Vec<String> {
    let mut v = Vec::new();
    let mut positive = |name: &str, x: f64| {
        if !(x > 0.0 && x.is_finite()) {
            v.push(format!("{name} must be strictly positive and finite (got {x})"));
        }
    };
    positive("slot_len", s.slot_len);
    positive("bs_height", s.bs_height);
    positive("cell_radius", s.cell_radius);
    positive("p_ue_max", s.p_ue_max);
    positive("p_uav_max", s.p_uav_max);
    positive("noise_var", s.noise_var);
    positive("ici_power", s.ici_power);
    positive("pathloss_exp", s.pathloss_exp);
    positive("d_max", s.d_max);
    positive("e_max", s.e_max);
    positive("gamma_th", s.gamma_th);
    positive("gamma1_th", s.gamma1_th);
    positive("gamma2_th", s.gamma2_th);
    positive("epsilon", s.epsilon);
    positive("epsilon_to", s.epsilon_to);
    positive("a2g.a", s.a2g.a);
    positive("a2g.b", s.a2g.b);
    let p = &s.propulsion;
    for (name, x) in [
        ("propulsion.delta", p.delta),
        ("propulsion.omega", p.omega),
        ("propulsion.rotor_radius", p.rotor_radius),
        ("propulsion.u_tip", p.u_tip),
        ("propulsion.v0", p.v0),
        ("propulsion.d0", p.d0),
        ("propulsion.rho", p.rho),
        ("propulsion.s", p.s),
        ("propulsion.disc_area", p.disc_area),
        ("propulsion.weight", p.weight),
        ("propulsion.k_factor", p.k_factor),
    ] {
        positive(name, x);
    }
    if s.n_ues == 0 {
        v.push("n_ues must be at least 1".into());
    }
    if s.n_subchannels == 0 {
        v.push("n_subchannels must be at least 1".into());
    }
    if s.n_slots == 0 {
        v.push("n_slots must be at least 1".into());
    }
    if s.ue_positions.len() != s.n_ues {
        v.push(format!(
            "ue_positions has {} entries for n_ues = {}",
            s.ue_positions.len(),
            s.n_ues
        ));
    }
    for (i, u) in s.ue_positions.iter().enumerate() {
        if u.z != 0.0 {
            v.push(format!("ue {i} z-coordinate must be 0 (got {})", u.z));
        }
        if u.horizontal_dist(&s.bs_position()) == 0.0 {
            v.push(format!("ue {i} coincides horizontally with the BS"));
        }
    }
    if !(s.uav_initial.z > s.bs_height) {
        v.push(format!(
            "uav_initial altitude {} must exceed bs_height {}",
            s.uav_initial.z, s.bs_height
        ));
    }
    if s.subchannel_freqs.len() != s.n_subchannels {
        v.push(format!(
            "subchannel_freqs has {} entries for n_subchannels = {}",
            s.subchannel_freqs.len(),
            s.n_subchannels
        ));
    }
    if s.subchannel_freqs.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
        v.push("subchannel_freqs must be strictly positive".into());
    }
    if !(s.a2g.eta_los >= 1.0) {
        v.push(format!("a2g.eta_los must be >= 1 linear (got {})", s.a2g.eta_los));
    }
    if !(s.a2g.eta_nlos >= s.a2g.eta_los) {
        v.push(format!(
            "a2g.eta_nlos ({}) must be >= a2g.eta_los ({})",
            s.a2g.eta_nlos, s.a2g.eta_los
        ));
    }
    if s.e_max > 0.0 && s.slot_len > 0.0 {
        if let Err(e) = uav_power::max_speed_under_energy(s.e_max, s.slot_len, &s.propulsion) {
            v.push(format!("e_max: {e}"));
        }
    }
    v
}

/// `n` points uniform over the disc of radius `radius` around the BS, on the ground.
pub fn sample_positions(seed: u64, radius: f64, n: usize) -> Result<Vec<Point3>> {
    check_sampling(radius, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| uniform_in_disc(&mut rng, radius)).collect())
}

/// UE positions plus a UAV start (uniform horizontal position, altitude uniform in [100, 200] m).
pub fn sample_topology(seed: u64, radius: f64, n: usize) -> Result<(Vec<Point3>, Point3)> {
    check_sampling(radius, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ues = (0..n).map(|_| uniform_in_disc(&mut rng, radius)).collect();
    let (lo, hi) = UAV_ALTITUDE_RANGE;
    let uav = uniform_in_disc(&mut rng, radius).with_z(rng.random_range(lo..=hi));
    Ok((ues, uav))
}

fn check_sampling(radius: f64, n: usize) -> Result<()> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling radius must be positive (got {radius})")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    Ok(())
}

fn uniform_in_disc<R: Rng>(rng: &mut R, radius: f64) -> Point3 {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    Point3::new(r * phi.cos(), r * phi.sin(), 0.0)
}
