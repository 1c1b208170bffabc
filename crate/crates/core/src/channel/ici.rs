//! Doppler-induced inter-subcarrier interference.
//!
//! A UAV moving at speed `v` shifts relayed subcarriers by up to
//! `f_d = v f_c / c`. With normalized offset `e = f_d / spacing`, energy
//! from subcarrier `k'` leaks into subcarrier `k` with the Dirichlet
//! coefficient `sin(pi (e + m)) / (K sin(pi (e + m) / K))`, `m = k' - k`.
//! Data symbols are unit power and independent, so the expected interference
//! is the sum of squared coefficients times each source's received power.
//!
//! The optimizer itself treats interference as a constant per subchannel; this
//! module reproduces the numbers that make that constant small.

use std::f64::consts::PI;

use serde::Serialize;

use super::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::link_rate::Mode;
use crate::units::{db_to_linear, linear_to_db};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IciConfig {
    pub n_subcarriers: usize,
    pub spacing_hz: f64,
    pub center_freq_hz: f64,
    pub speed_m_s: f64,
}

impl IciConfig {
    /// 1000 subcarriers at 15 kHz spacing around 3.5 GHz, UAV at 100 km/h.
    pub fn reference() -> Self {
        Self {
            n_subcarriers: 1000,
            spacing_hz: 15e3,
            center_freq_hz: 3.5e9,
            speed_m_s: 100.0 / 3.6,
        }
    }

    /// Maximum Doppler shift over subcarrier spacing.
    pub fn normalized_doppler(&self) -> f64 {
        self.speed_m_s * self.center_freq_hz / SPEED_OF_LIGHT / self.spacing_hz
    }

    fn check(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return Err(Error::InvalidArgument("ICI needs at least one subcarrier".into()));
        }
        if !(self.spacing_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "subcarrier spacing must be positive (got {})",
                self.spacing_hz
            )));
        }
        if !(self.speed_m_s >= 0.0) {
            return Err(Error::InvalidArgument(format!("speed must be nonnegative (got {})", self.speed_m_s)));
        }
        Ok(())
    }
}

/// Squared Dirichlet coefficient for subcarrier offset `m = k' - k`.
pub fn leakage(m: i64, eps: f64, n_subcarriers: usize) -> f64 {
    let k = n_subcarriers as f64;
    let x = eps + m as f64;
    let den = k * (PI * x / k).sin();
    if den == 0.0 {
        // x is a multiple of K: only m = 0 at zero Doppler reaches this.
        return if m.rem_euclid(n_subcarriers as i64) == 0 { 1.0 } else { 0.0 };
    }
    // sin(pi (eps + m)) = (-1)^m sin(pi eps); avoids evaluating sin at large arguments.
    let num = (PI * eps).sin();
    (num / den).powi(2)
}

/// An interfering relayed subcarrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IciSource {
    pub subcarrier: usize,
    /// Power the BS would receive from this subcarrier with no Doppler, W.
    pub rx_power: f64,
}

impl IciSource {
    /// Source relaying `p_ue` through amplification `gain` over a UE-to-UAV
    /// link `h_ue_uav`, reaching the BS with average pathloss `pathloss_c`.
    pub fn relayed(subcarrier: usize, p_ue: f64, gain: f64, h_ue_uav: f64, pathloss_c: f64) -> Self {
        Self {
            subcarrier,
            rx_power: p_ue * gain * h_ue_uav / pathloss_c,
        }
    }
}

/// Expected interference power at subcarrier `victim`.
///
/// A relay-mode victim ignores a source on its own subcarrier (that is its
/// desired signal); a cellular victim cannot share its subcarrier with a
/// relayed source.
pub fn ici_power(mode: Mode, victim: usize, cfg: &IciConfig, sources: &[IciSource]) -> Result<f64> {
    cfg.check()?;
    if victim >= cfg.n_subcarriers {
        return Err(Error::InvalidArgument(format!(
            "victim subcarrier {victim} out of range 0..{}",
            cfg.n_subcarriers
        )));
    }
    let eps = cfg.normalized_doppler();
    let mut total = 0.0;
    for s in sources {
        if s.subcarrier >= cfg.n_subcarriers {
            return Err(Error::InvalidArgument(format!(
                "source subcarrier {} out of range 0..{}",
                s.subcarrier, cfg.n_subcarriers
            )));
        }
        if s.subcarrier == victim {
            match mode {
                Mode::Relay => continue,
                Mode::Cellular => {
                    return Err(Error::InvalidArgument(format!(
                        "subcarrier {victim} cannot be both cellular victim and relayed source"
                    )))
                }
            }
        }
        let m = s.subcarrier as i64 - victim as i64;
        total += leakage(m, eps, cfg.n_subcarriers) * s.rx_power;
    }
    Ok(total)
}

/// Which subcarriers carry relayed traffic around the victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    /// Every other subcarrier.
    Full,
    /// All subcarriers below the victim.
    LowerBlock,
    /// All subcarriers above the victim.
    UpperBlock,
    /// Subcarriers at even offsets from the victim.
    Alternate,
}

impl Occupancy {
    pub const ALL: [Occupancy; 4] = [Self::Full, Self::LowerBlock, Self::UpperBlock, Self::Alternate];

    fn occupied(self, k: usize, victim: usize) -> bool {
        match self {
            Self::Full => k != victim,
            Self::LowerBlock => k < victim,
            Self::UpperBlock => k > victim,
            Self::Alternate => k != victim && (k as i64 - victim as i64) % 2 == 0,
        }
    }
}

/// Interference-to-signal ratios at the middle subcarrier, in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IciRatios {
    pub occupancy: Occupancy,
    pub cellular_db: f64,
    pub relay_db: f64,
}

/// Ratios with equal received power on every relayed subcarrier. A cellular
/// victim's own signal is weaker than the relayed ones by `eta_db`
/// (pathloss ratio); a relayed victim suffers the same Doppler leakage
/// on its own signal as the sources.
pub fn reference_ratios(cfg: &IciConfig, eta_db: f64, occupancy: Occupancy) -> Result<IciRatios> {
    cfg.check()?;
    let victim = cfg.n_subcarriers / 2;
    let sources: Vec<IciSource> = (0..cfg.n_subcarriers)
        .filter(|&k| occupancy.occupied(k, victim))
        .map(|k| IciSource { subcarrier: k, rx_power: 1.0 })
        .collect();
    let relay_ici = ici_power(Mode::Relay, victim, cfg, &sources)?;
    let cellular_ici = ici_power(Mode::Cellular, victim, cfg, &sources)?;
    let own = leakage(0, cfg.normalized_doppler(), cfg.n_subcarriers);
    Ok(IciRatios {
        occupancy,
        cellular_db: linear_to_db(cellular_ici * db_to_linear(eta_db)),
        relay_db: linear_to_db(relay_ici / own),
    })
}
