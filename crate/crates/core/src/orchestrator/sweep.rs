//! Parameter sweeps: one episode per (value, seed, algorithm), averaged over seeds.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{validate, Scenario};
use crate::units::dbm_to_watts;

use super::episode::{run_episode, EpisodeOptions, Metrics};
use super::slot::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    PUeMaxDbm,
    PUeMaxW,
    DMax,
    PUavMaxW,
    PUavMaxDbm,
    EMax,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "p_ue_max" | "p_ue_max_dbm" => Axis::PUeMaxDbm,
            "p_ue_max_w" => Axis::PUeMaxW,
            "d_max" | "d_max_m" => Axis::DMax,
            "p_uav_max" | "p_uav_max_w" => Axis::PUavMaxW,
            "p_uav_max_dbm" => Axis::PUavMaxDbm,
            "e_max" | "e_max_j" => Axis::EMax,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown sweep axis '{s}' (expected p_ue_max[_dbm|_w], d_max[_m], p_uav_max[_w|_dbm] or e_max[_j])"
                )))
            }
        })
    }
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::PUeMaxDbm => "p_ue_max_dbm",
            Axis::PUeMaxW => "p_ue_max_w",
            Axis::DMax => "d_max_m",
            Axis::PUavMaxW => "p_uav_max_w",
            Axis::PUavMaxDbm => "p_uav_max_dbm",
            Axis::EMax => "e_max_j",
        }
    }

    /// Copy of `s` with the swept parameter set to `value`.
    pub fn apply(&self, s: &Scenario, value: f64) -> Result<Scenario> {
        let mut out = s.clone();
        match self {
            Axis::PUeMaxDbm => out.p_ue_max = dbm_to_watts(value),
            Axis::PUeMaxW => out.p_ue_max = value,
            Axis::DMax => out.d_max = value,
            Axis::PUavMaxW => out.p_uav_max = value,
            Axis::PUavMaxDbm => out.p_uav_max = dbm_to_watts(value),
            Axis::EMax => out.e_max = value,
        }
        let v = validate(&out);
        if v.is_empty() {
            Ok(out)
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// One episode of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub metrics: Metrics,
}

/// Seed-averaged metrics of one (value, algorithm) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub algorithm: String,
    pub seeds: usize,
    pub sum_rate: f64,
    /// Mean over seeds where the index is defined; empty when it never is.
    pub jain: Option<f64>,
    pub relay_ues: f64,
    pub scheduled_ues: f64,
    pub avg_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: Axis,
    pub runs: Vec<SweepRun>,
    pub rows: Vec<SweepRow>,
}

/// Runs every (value, seed, algorithm) episode. Seed `s` resamples the
/// topology from `s`, so all values share topologies seed by seed. Runs go
/// in parallel; results come back ordered by (value, seed, algorithm).
pub fn sweep(template: &Scenario, axis: Axis, values: &[f64], seeds: &[u64], algorithms: &[Algorithm]) -> Result<SweepResult> {
    let mut jobs = Vec::new();
    for &value in values {
        for &seed in seeds {
            let s = axis.apply(&template.resampled(seed)?, value)?;
            for &alg in algorithms {
                jobs.push((value, seed, alg, s.clone()));
            }
        }
    }
    let runs: Vec<SweepRun> = jobs
        .into_par_iter()
        .map(|(value, seed, algorithm, s)| {
            let log = run_episode(&s, algorithm, EpisodeOptions::default())?;
            Ok(SweepRun { value, seed, algorithm, metrics: log.metrics })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &value in values {
        for &alg in algorithms {
            let cell: Vec<&Metrics> = runs.iter().filter(|r| r.value == value && r.algorithm == alg).map(|r| &r.metrics).collect();
            let n = cell.len() as f64;
            let mean = |f: &dyn Fn(&Metrics) -> f64| cell.iter().map(|m| f(m)).sum::<f64>() / n;
            let jains: Vec<f64> = cell.iter().filter_map(|m| m.jain).collect();
            rows.push(SweepRow {
                axis: axis.name().into(),
                value,
                algorithm: alg.name().into(),
                seeds: cell.len(),
                sum_rate: mean(&|m| m.sum_rate),
                jain: (!jains.is_empty()).then(|| jains.iter().sum::<f64>() / jains.len() as f64),
                relay_ues: mean(&|m| m.relay_ues as f64),
                scheduled_ues: mean(&|m| m.scheduled_ues as f64),
                avg_speed: mean(&|m| m.avg_speed),
            });
        }
    }
    Ok(SweepResult { axis, runs, rows })
}
