//! Proportional-fair episodes over `T` slots and their metrics.

use serde::{Deserialize, Serialize};

use crate::channel::Fading;
use crate::error::{Error, Result};
use crate::link_rate::{jain_index, update_weights, Mode};
use crate::scenario::{Scenario, UavState};
use crate::trajectory::TraceRow;

use super::slot::{jmstp_slot, validate_slot, Algorithm, SlotOptions, SlotSolution, WarmStart};

/// Episode-level summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Sum over UEs of the per-UE average rate, bit/s/Hz.
    pub sum_rate: f64,
    /// Jain index of the average rates; `None` when every rate is zero.
    pub jain: Option<f64>,
    /// Mean over slots of displacement / slot length, m/s.
    pub avg_speed: f64,
    /// UEs with positive average rate.
    pub scheduled_ues: usize,
    /// UEs that used the relay mode in at least one slot.
    pub relay_ues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub algorithm: Algorithm,
    pub slots: Vec<SlotSolution>,
    /// Weights used in each slot.
    pub weights_history: Vec<Vec<f64>>,
    /// Running average rates after each slot.
    pub avg_rates_history: Vec<Vec<f64>>,
    pub metrics: Metrics,
    /// Per-iteration trajectory rows, when requested.
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl EpisodeLog {
    pub fn avg_rates(&self) -> &[f64] {
        self.avg_rates_history.last().map_or(&[], |v| v.as_slice())
    }

    /// Slots spent nearest to each centroid (horizontal distance, ties to the lower index).
    pub fn dwell_times(&self, centroids: &[(f64, f64)]) -> Vec<usize> {
        let mut out = vec![0; centroids.len()];
        for s in &self.slots {
            let p = s.position;
            let nearest = centroids
                .iter()
                .enumerate()
                .map(|(i, c)| (i, (p.x - c.0).hypot(p.y - c.1)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i);
            if let Some(i) = nearest {
                out[i] += 1;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeOptions {
    /// Keep per-iteration trajectory rows.
    pub trace: bool,
    /// Run the constraint validator on every slot and fail on violations.
    pub validate: bool,
}

/// Runs `algorithm` over the scenario's slots with proportional-fair weights.
pub fn run_episode(s: &Scenario, algorithm: Algorithm, opts: EpisodeOptions) -> Result<EpisodeLog> {
    let n = s.n_ues;
    let mut uav = UavState::at(s.uav_initial);
    let mut avg = vec![0.0; n];
    let mut slots = Vec::with_capacity(s.n_slots);
    let mut weights_history = Vec::with_capacity(s.n_slots);
    let mut avg_rates_history = Vec::with_capacity(s.n_slots);
    let mut trace = Vec::new();
    let mut warm: Option<WarmStart> = None;
    for t in 0..s.n_slots {
        let w = update_weights(&avg);
        let fading = Fading::for_slot(s, t);
        let run = jmstp_slot(s, t, &fading, uav, &w, warm.as_ref(), SlotOptions { algorithm, trace: opts.trace })?;
        let sol = run.solution;
        if opts.validate {
            let v = validate_slot(s, &fading, &sol)?;
            if !v.is_empty() {
                return Err(Error::Validation(v.into_iter().map(|m| format!("slot {t}: {m}")).collect()));
            }
        }
        trace.extend(run.trace);
        for (a, r) in avg.iter_mut().zip(&sol.per_ue_rate) {
            *a += (r - *a) / (t + 1) as f64;
        }
        uav = UavState::at(sol.position);
        warm = Some(WarmStart { matching: sol.matching.clone(), powers: sol.powers.clone() });
        weights_history.push(w);
        avg_rates_history.push(avg.clone());
        slots.push(sol);
    }
    let metrics = metrics(s, &slots, &avg);
    Ok(EpisodeLog { algorithm, slots, weights_history, avg_rates_history, metrics, trace })
}

fn metrics(s: &Scenario, slots: &[SlotSolution], avg: &[f64]) -> Metrics {
    let relay_ues = (0..s.n_ues)
        .filter(|&n| slots.iter().any(|sl| sl.modes[n] == Some(Mode::Relay)))
        .count();
    let avg_speed = if slots.is_empty() {
        0.0
    } else {
        slots.iter().map(|sl| sl.speed(s.slot_len)).sum::<f64>() / slots.len() as f64
    };
    Metrics {
        sum_rate: avg.iter().sum(),
        jain: jain_index(avg).ok(),
        avg_speed,
        scheduled_ues: avg.iter().filter(|&&r| r > 0.0).count(),
        relay_ues,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn small() -> Scenario {
        let mut s = Scenario::default();
        s.n_slots = 3;
        s
    }

    #[test]
    fn weights_follow_the_running_average() {
        let s = small();
        let log = run_episode(&s, Algorithm::Joint, EpisodeOptions { validate: true, ..Default::default() }).unwrap();
        assert_eq!(log.slots.len(), 3);
        assert!(log.weights_history[0].iter().all(|&w| w == 10.0));
        for t in 1..3 {
            assert_eq!(log.weights_history[t], update_weights(&log.avg_rates_history[t - 1]));
        }
        for t in 0..3 {
            let mean: Vec<f64> = (0..s.n_ues).map(|n| (0..=t).map(|u| log.slots[u].per_ue_rate[n]).sum::<f64>() / (t + 1) as f64).collect();
            for (a, b) in mean.iter().zip(&log.avg_rates_history[t]) {
                assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }
        assert!(log.slots.iter().all(|sl| sl.position.z > s.bs_height));
        assert_eq!(log.metrics.sum_rate, log.avg_rates().iter().sum::<f64>());
    }

    #[test]
    fn unreachable_ues_give_an_empty_slot() {
        let mut s = small();
        s.n_slots = 1;
        s.gamma_th = 1e12;
        s.gamma1_th = 1e12;
        s.gamma2_th = 1e12;
        let log = run_episode(&s, Algorithm::Joint, EpisodeOptions { validate: true, ..Default::default() }).unwrap();
        let sl = &log.slots[0];
        assert!(sl.matching.assign.iter().all(|a| a.is_none()));
        assert_eq!(sl.objective, 0.0);
        assert_eq!(sl.iterations, 1);
        assert_eq!(log.metrics.jain, None);
        assert_eq!(log.metrics.scheduled_ues, 0);
    }

    #[test]
    fn baselines_are_reproducible_and_valid() {
        let s = small();
        for alg in [Algorithm::RandomAllocation, Algorithm::CellularOnly] {
            let opts = EpisodeOptions { validate: true, ..Default::default() };
            let a = run_episode(&s, alg, opts).unwrap();
            let b = run_episode(&s, alg, opts).unwrap();
            assert_eq!(a, b);
            if alg == Algorithm::CellularOnly {
                assert!(a.slots.iter().all(|sl| sl.position == s.uav_initial));
                assert_eq!(a.metrics.relay_ues, 0);
            }
        }
    }

    #[test]
    fn dwell_counts_nearest_centroid() {
        let s = small();
        let mut log = run_episode(&s, Algorithm::CellularOnly, EpisodeOptions::default()).unwrap();
        log.slots[0].position = Point3::new(10.0, 0.0, 100.0);
        log.slots[1].position = Point3::new(-10.0, 0.0, 100.0);
        log.slots[2].position = Point3::new(-30.0, 5.0, 100.0);
        assert_eq!(log.dwell_times(&[(20.0, 0.0), (-20.0, 0.0)]), vec![1, 2]);
    }
}
