//! CSV and JSON output of episodes and sweeps.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;
use crate::scenario::Scenario;
use crate::uav_power::flying_power;

use super::episode::EpisodeLog;
use super::sweep::SweepResult;

/// One row of `episode.csv`: one UE in one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub slot: usize,
    pub ue: usize,
    /// `cellular`, `relay` or `idle`.
    pub mode: String,
    /// Assigned subchannel indices joined by `;`.
    pub subchannels: String,
    pub rate: f64,
    pub weight: f64,
    /// Slot objective, repeated on each of its rows.
    pub objective: f64,
    pub uav_x: f64,
    pub uav_y: f64,
    pub uav_z: f64,
    pub speed: f64,
    pub flying_power: f64,
}

pub fn episode_rows(s: &Scenario, log: &EpisodeLog) -> Result<Vec<EpisodeRow>> {
    let mut rows = Vec::new();
    for sl in &log.slots {
        let speed = sl.speed(s.slot_len);
        let power = flying_power(speed, &s.propulsion)?;
        for n in 0..s.n_ues {
            let subs: Vec<String> = sl.matching.subchannels_of(n).map(|k| k.to_string()).collect();
            rows.push(EpisodeRow {
                slot: sl.slot,
                ue: n,
                mode: sl.modes[n].map_or("idle".to_string(), |m| m.to_string()),
                subchannels: subs.join(";"),
                rate: sl.per_ue_rate[n],
                weight: sl.weights[n],
                objective: sl.objective,
                uav_x: sl.position.x,
                uav_y: sl.position.y,
                uav_z: sl.position.z,
                speed,
                flying_power: power,
            });
        }
    }
    Ok(rows)
}

pub fn write_episode_csv<W: Write>(s: &Scenario, log: &EpisodeLog, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in episode_rows(s, log)? {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Metrics, per-slot objectives and positions, and the resolved config.
pub fn summary_json(s: &Scenario, log: &EpisodeLog) -> Value {
    json!({
        "algorithm": log.algorithm,
        "metrics": log.metrics,
        "avg_rates": log.avg_rates(),
        "slots": log.slots.iter().map(|sl| json!({
            "slot": sl.slot,
            "objective": sl.objective,
            "iterations": sl.iterations,
            "position": sl.position,
            "modes": sl.modes,
            "dropped": sl.dropped,
        })).collect::<Vec<_>>(),
        "scenario": s.to_config(),
    })
}

pub fn write_sweep_csv<W: Write>(res: &SweepResult, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["axis", "value", "algorithm", "seeds", "sum_rate", "jain", "relay_ues", "scheduled_ues", "avg_speed"])?;
    for r in &res.rows {
        wr.write_record([
            r.axis.clone(),
            r.value.to_string(),
            r.algorithm.clone(),
            r.seeds.to_string(),
            r.sum_rate.to_string(),
            r.jain.map_or(String::new(), |j| j.to_string()),
            r.relay_ues.to_string(),
            r.scheduled_ues.to_string(),
            r.avg_speed.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::{run_episode, Algorithm, EpisodeOptions};

    #[test]
    fn episode_csv_header_and_shape() {
        let mut s = Scenario::default();
        s.n_slots = 2;
        let log = run_episode(&s, Algorithm::Joint, EpisodeOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_episode_csv(&s, &log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "slot,ue,mode,subchannels,rate,weight,objective,uav_x,uav_y,uav_z,speed,flying_power");
        assert_eq!(lines.count(), 2 * s.n_ues);
        let js = summary_json(&s, &log);
        assert_eq!(js["slots"].as_array().unwrap().len(), 2);
        assert!(js["metrics"]["sum_rate"].is_number());
    }
}
