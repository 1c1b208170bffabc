//! Rates, SINRs and QoS checks for the two transmission modes, plus the
//! proportional-fairness weights and Jain's index.
//!
//! All rates are spectral efficiencies in bit/s/Hz. A slot has two phases;
//! a cellular UE transmits in both, a relayed UE needs both for one hop each.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelGains;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Relative slack accepted on every SINR threshold, so powers set exactly at
/// a threshold survive rounding.
pub const QOS_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Cellular,
    Relay,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::Cellular, Mode::Relay];
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Cellular => "cellular",
            Mode::Relay => "relay",
        })
    }
}

/// Transmit powers, W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// `p_ue[n][k]`; only meaningful where subchannel `k` is assigned to UE `n`.
    pub p_ue: Vec<Vec<f64>>,
    /// `p_uav[k]`; only meaningful on relayed subchannels.
    pub p_uav: Vec<f64>,
}

impl PowerAllocation {
    pub fn zeros(n_ues: usize, n_subchannels: usize) -> Self {
        Self {
            p_ue: vec![vec![0.0; n_subchannels]; n_ues],
            p_uav: vec![0.0; n_subchannels],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// UE to BS.
    pub direct: f64,
    /// UE to UAV.
    pub ue_uav: f64,
    /// UAV to BS.
    pub uav_bs: f64,
}

/// Noise, interference and QoS thresholds shared by every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radio {
    pub sigma2: f64,
    pub ici: f64,
    pub th: Thresholds,
}

impl Radio {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            sigma2: s.noise_var,
            ici: s.ici_power,
            th: Thresholds {
                direct: s.gamma_th,
                ue_uav: s.gamma1_th,
                uav_bs: s.gamma2_th,
            },
        }
    }

    /// `|I|^2 / sigma^2`.
    pub fn rho(&self) -> f64 {
        self.ici / self.sigma2
    }

    /// Smallest UE power meeting the cellular thresholds over gain `h`.
    pub fn min_power_cellular(&self, h: f64) -> f64 {
        self.th.direct * (self.sigma2 + self.ici) / h
    }

    /// Smallest UE power meeting the UE-to-UAV threshold.
    pub fn min_power_ue_uav(&self, h_ue_uav: f64) -> f64 {
        self.th.ue_uav * self.sigma2 / h_ue_uav
    }

    /// Smallest UAV power meeting the UAV-to-BS threshold.
    pub fn min_power_uav_bs(&self, h_uav_bs: f64) -> f64 {
        self.th.uav_bs * (self.sigma2 + self.ici) / h_uav_bs
    }
}

/// Sum of the two phase rates of a direct UE-to-BS link; interference hits only the second phase.
pub fn rate_cellular(p: f64, h: f64, sigma2: f64, ici: f64) -> f64 {
    let s = p * h;
    0.5 * (s / sigma2).ln_1p() / std::f64::consts::LN_2 + 0.5 * (s / (sigma2 + ici)).ln_1p() / std::f64::consts::LN_2
}

/// SINR at the UAV and end-to-end SINR at the BS of an amplify-and-forward
/// link whose UAV amplification normalizes the forwarded power to `p_uav`.
pub fn relay_sinrs(p_ue: f64, p_uav: f64, h_ue_uav: f64, h_uav_bs: f64, sigma2: f64, ici: f64) -> (f64, f64) {
    let c = ici / sigma2 + 1.0;
    let a = p_ue * h_ue_uav;
    let b = p_uav * h_uav_bs;
    let den = sigma2 * (b + c * a + c * sigma2);
    let end_to_end = if den > 0.0 { a * b / den } else { 0.0 };
    (a / sigma2, end_to_end)
}

/// Half the capacity of the weaker of the two SINRs.
pub fn rate_relay(sinrs: (f64, f64)) -> f64 {
    0.5 * sinrs.0.min(sinrs.1).ln_1p() / std::f64::consts::LN_2
}

/// Power and gain state of one subchannel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkState {
    Vacant,
    Cellular { p: f64, h: f64 },
    Relay { p_ue: f64, p_uav: f64, h_ue_uav: f64, h_uav_bs: f64 },
}

/// Whether an occupied subchannel meets its SINR thresholds (inclusive, with
/// [`QOS_RTOL`] slack). Vacant subchannels carry no constraint.
pub fn qos_feasible(link: &LinkState, radio: &Radio) -> bool {
    qos_margin(link, radio) >= -QOS_RTOL
}

/// Smallest of `sinr / threshold - 1` over the constraints of the link;
/// `+inf` for a vacant subchannel.
pub fn qos_margin(link: &LinkState, radio: &Radio) -> f64 {
    match *link {
        LinkState::Vacant => f64::INFINITY,
        LinkState::Cellular { p, h } => {
            let a = p * h / radio.sigma2 / radio.th.direct - 1.0;
            let b = p * h / (radio.sigma2 + radio.ici) / radio.th.direct - 1.0;
            a.min(b)
        }
        LinkState::Relay { p_ue, p_uav, h_ue_uav, h_uav_bs } => {
            let a = p_ue * h_ue_uav / radio.sigma2 / radio.th.ue_uav - 1.0;
            let b = p_uav * h_uav_bs / (radio.sigma2 + radio.ici) / radio.th.uav_bs - 1.0;
            a.min(b)
        }
    }
}

/// Rate carried by one subchannel.
pub fn link_rate(link: &LinkState, radio: &Radio) -> f64 {
    match *link {
        LinkState::Vacant => 0.0,
        LinkState::Cellular { p, h } => rate_cellular(p, h, radio.sigma2, radio.ici),
        LinkState::Relay { p_ue, p_uav, h_ue_uav, h_uav_bs } => {
            rate_relay(relay_sinrs(p_ue, p_uav, h_ue_uav, h_uav_bs, radio.sigma2, radio.ici))
        }
    }
}

/// Link state of subchannel `k` when used by UE `n` in `mode`.
pub fn link_state(n: usize, k: usize, mode: Mode, p: &PowerAllocation, g: &ChannelGains) -> LinkState {
    match mode {
        Mode::Cellular => LinkState::Cellular {
            p: p.p_ue[n][k],
            h: g.h_ue_bs[n][k],
        },
        Mode::Relay => LinkState::Relay {
            p_ue: p.p_ue[n][k],
            p_uav: p.p_uav[k],
            h_ue_uav: g.h_ue_uav[n][k],
            h_uav_bs: g.h_uav_bs[k],
        },
    }
}

/// Rate of UE `n`: sum over its assigned subchannels in its mode.
pub fn ue_rate(n: usize, mode: Mode, assigned: &[bool], p: &PowerAllocation, g: &ChannelGains, radio: &Radio) -> f64 {
    assigned
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(k, _)| link_rate(&link_state(n, k, mode, p, g), radio))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_ue_rate: Vec<f64>,
    /// Rate carried by each subchannel; 0 when vacant.
    pub per_subchannel_rate: Vec<f64>,
    pub objective: f64,
}

/// Rates of a full assignment. `assign[k]` is the `(ue, mode)` using
/// subchannel `k`, if any.
pub fn rate_report(
    assign: &[Option<(usize, Mode)>],
    p: &PowerAllocation,
    g: &ChannelGains,
    radio: &Radio,
    weights: &[f64],
) -> RateReport {
    let mut per_ue_rate = vec![0.0; weights.len()];
    let per_subchannel_rate: Vec<f64> = assign
        .iter()
        .enumerate()
        .map(|(k, a)| match *a {
            None => 0.0,
            Some((n, mode)) => {
                let r = link_rate(&link_state(n, k, mode, p, g), radio);
                per_ue_rate[n] += r;
                r
            }
        })
        .collect();
    let objective = weighted_sum(weights, &per_ue_rate);
    RateReport {
        per_ue_rate,
        per_subchannel_rate,
        objective,
    }
}

pub fn weighted_sum(weights: &[f64], rates: &[f64]) -> f64 {
    weights.iter().zip(rates).map(|(w, r)| w * r).sum()
}

/// Proportional-fairness weights `1 / (avg + 0.1)`.
pub fn update_weights(prev_avg_rates: &[f64]) -> Vec<f64> {
    prev_avg_rates.iter().map(|r| 1.0 / (r + 0.1)).collect()
}

/// Jain's fairness index `(sum r)^2 / (N sum r^2)`.
pub fn jain_index(rates: &[f64]) -> Result<f64> {
    let sq: f64 = rates.iter().map(|r| r * r).sum();
    if rates.is_empty() || sq == 0.0 {
        return Err(Error::UndefinedFairness);
    }
    let s: f64 = rates.iter().sum();
    Ok(s * s / (rates.len() as f64 * sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::dbm_to_watts;
    use proptest::prelude::*;

    fn radio() -> Radio {
        Radio {
            sigma2: dbm_to_watts(-96.0),
            ici: dbm_to_watts(-110.0),
            th: Thresholds { direct: 300.0, ue_uav: 300.0, uav_bs: 300.0 },
        }
    }

    #[test]
    fn cellular_rate_reference() {
        let r = radio();
        assert_eq!(rate_cellular(0.0, 1e-8, r.sigma2, r.ici), 0.0);
        let no_ici = rate_cellular(0.05, 1e-8, r.sigma2, 0.0);
        assert!((no_ici - (1.0 + 0.05 * 1e-8 / r.sigma2).log2()).abs() < 1e-12);
        // 40-digit evaluation.
        let v = rate_cellular(0.05, 1e-8, r.sigma2, r.ici);
        assert!((v - 10.931_519_691_438_14).abs() < 1e-12, "{v}");
    }

    #[test]
    fn relay_sinr_reference() {
        let r = radio();
        let (g1, g2) = relay_sinrs(0.05, 0.03, 1e-7, 1e-8, r.sigma2, r.ici);
        // 40-digit evaluation.
        assert!((g1 / 19_905.358_527_674_863 - 1.0).abs() < 1e-13, "{g1}");
        assert!((g2 / 1_085.882_115_099_571 - 1.0).abs() < 1e-13, "{g2}");
        assert!((rate_relay((g1, g2)) - 5.042_989_878_298_363).abs() < 1e-12);
        assert!(g2 < g1);
    }

    #[test]
    fn relay_limits() {
        let (g1, g2) = relay_sinrs(0.05, 1e12, 1e-7, 1e-8, 1e-13, 0.0);
        assert!((g2 / g1 - 1.0).abs() < 1e-6);
        assert_eq!(rate_relay((5.0, 0.0)), 0.0);
        assert!((rate_relay((10.0, 3.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn qos_boundaries() {
        let r = radio();
        assert!(qos_feasible(&LinkState::Vacant, &r));
        let exact = Radio { ici: 0.0, ..r };
        let h = 1e-9;
        let p = 300.0 * exact.sigma2 / h;
        assert!(qos_feasible(&LinkState::Cellular { p, h }, &exact));
        assert!(!qos_feasible(&LinkState::Cellular { p: p * 0.99, h }, &exact));
        // Hop 2 short of its threshold.
        let weak = LinkState::Relay {
            p_ue: 0.05,
            p_uav: 0.5 * r.min_power_uav_bs(1e-9),
            h_ue_uav: 1e-7,
            h_uav_bs: 1e-9,
        };
        assert!(!qos_feasible(&weak, &r));
        let ok = LinkState::Relay {
            p_ue: r.min_power_ue_uav(1e-7),
            p_uav: r.min_power_uav_bs(1e-9),
            h_ue_uav: 1e-7,
            h_uav_bs: 1e-9,
        };
        assert!(qos_feasible(&ok, &r));
        assert!(qos_feasible(&LinkState::Cellular { p: r.min_power_cellular(h), h }, &r));
    }

    #[test]
    fn ue_rate_composition() {
        let r = radio();
        let g = ChannelGains {
            h_ue_bs: vec![vec![1e-9, 2e-9, 3e-9]],
            h_ue_uav: vec![vec![1e-7, 2e-7, 4e-7]],
            h_uav_bs: vec![1e-8, 3e-8, 5e-8],
        };
        let p = PowerAllocation { p_ue: vec![vec![0.01, 0.02, 0.03]], p_uav: vec![0.1, 0.1, 0.1] };
        assert_eq!(ue_rate(0, Mode::Cellular, &[false; 3], &p, &g, &r), 0.0);
        let one = ue_rate(0, Mode::Cellular, &[false, true, false], &p, &g, &r);
        assert_eq!(one, rate_cellular(0.02, 2e-9, r.sigma2, r.ici));
        let three = ue_rate(0, Mode::Relay, &[true; 3], &p, &g, &r);
        let expected: f64 = (0..3)
            .map(|k| rate_relay(relay_sinrs(p.p_ue[0][k], p.p_uav[k], g.h_ue_uav[0][k], g.h_uav_bs[k], r.sigma2, r.ici)))
            .sum();
        assert!((three - expected).abs() < 1e-12);
        let rep = rate_report(&[Some((0, Mode::Relay)), None, Some((0, Mode::Relay))], &p, &g, &r, &[2.0]);
        assert_eq!(rep.per_subchannel_rate[1], 0.0);
        assert!((rep.objective - 2.0 * rep.per_ue_rate[0]).abs() < 1e-12);
    }

    #[test]
    fn weights_and_fairness() {
        assert_eq!(update_weights(&[0.0, 0.9]), vec![10.0, 1.0]);
        assert!((jain_index(&[2.0; 4]).unwrap() - 1.0).abs() < 1e-15);
        assert!((jain_index(&[0.0, 0.0, 3.0, 0.0, 0.0]).unwrap() - 0.2).abs() < 1e-15);
        assert!((jain_index(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap() - 225.0 / 275.0).abs() < 1e-15);
        assert!(matches!(jain_index(&[0.0, 0.0]), Err(Error::UndefinedFairness)));
    }

    proptest! {
        #[test]
        fn relay_rate_is_min_form(p in 1e-4f64..1.0, q in 1e-4f64..1.0, h1 in 1e-10f64..1e-6, h2 in 1e-10f64..1e-6) {
            let r = radio();
            let (g1, g2) = relay_sinrs(p, q, h1, h2, r.sigma2, r.ici);
            prop_assert!(g2 < g1);
            let min_form = 0.5 * (1.0 + g1).log2().min((1.0 + g2).log2());
            prop_assert!((rate_relay((g1, g2)) - min_form).abs() <= 1e-12 * min_form.max(1.0));
            prop_assert!(rate_relay((g1, g2)) <= 0.5 * (1.0 + g1).log2() + 1e-12);
        }

        #[test]
        fn rates_monotone_in_own_power(p in 0.0f64..1.0, dp in 0.0f64..1.0, h in 1e-12f64..1e-6, q in 1e-4f64..1.0) {
            let r = radio();
            prop_assert!(rate_cellular(p + dp, h, r.sigma2, r.ici) >= rate_cellular(p, h, r.sigma2, r.ici));
            let a = rate_relay(relay_sinrs(p, q, h, 1e-8, r.sigma2, r.ici));
            let b = rate_relay(relay_sinrs(p + dp, q, h, 1e-8, r.sigma2, r.ici));
            let c = rate_relay(relay_sinrs(p, q + dp, h, 1e-8, r.sigma2, r.ici));
            prop_assert!(b >= a && c >= a && a >= 0.0);
        }

        #[test]
        fn jain_scale_invariant(v in prop::collection::vec(0.0f64..10.0, 1..8), c in 0.01f64..100.0) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let j = jain_index(&v).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!((jain_index(&scaled).unwrap() - j).abs() < 1e-12);
            prop_assert!(j >= 1.0 / v.len() as f64 - 1e-12 && j <= 1.0 + 1e-12);
        }

        #[test]
        fn weights_strictly_decrease(a in 0.0f64..10.0, d in 1e-6f64..10.0) {
            let w = update_weights(&[a, a + d]);
            prop_assert!(w[1] < w[0]);
        }
    }
}
