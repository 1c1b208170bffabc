//! One time slot: block coordinate ascent over matching, UAV position and
//! powers, plus the constraint validator for its output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelGains, Fading};
use crate::error::Result;
use crate::geometry::Point3;
use crate::link_rate::{qos_feasible, link_state, rate_report, Mode, PowerAllocation, Radio, QOS_RTOL};
use crate::matching::{greedy_marginal, init_matching, is_feasible, msma, system_utility, MatchContext, Matching, McPair};
use crate::power_alloc::{scp_power, Dropped};
use crate::scenario::{Scenario, UavState};
use crate::trajectory::{to_algorithm, TraceRow, TrajectoryProblem};
use crate::uav_power::flying_power_upper;

/// Iteration cap of the block loop.
pub const MAX_BCD_ITERS: usize = 100;

/// Absolute slack allowed on caps, movement and energy by the validator.
pub const VALIDATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Matching, trajectory and power blocks.
    Joint,
    /// Random matching; trajectory and power optimized.
    RandomAllocation,
    /// Cellular mode only, UAV unused; matching and power optimized.
    CellularOnly,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Joint, Algorithm::RandomAllocation, Algorithm::CellularOnly];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Joint => "joint",
            Algorithm::RandomAllocation => "random",
            Algorithm::CellularOnly => "cellular",
        }
    }

    fn modes(&self) -> &'static [Mode] {
        match self {
            Algorithm::CellularOnly => &[Mode::Cellular],
            _ => &Mode::BOTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Start,
    Matching,
    Trajectory,
    Power,
}

/// Objective value at one stage boundary of the block loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub iteration: usize,
    pub stage: Stage,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSolution {
    pub slot: usize,
    pub matching: Matching,
    pub modes: Vec<Option<Mode>>,
    pub powers: PowerAllocation,
    /// UAV position at the start of the slot.
    pub prev_position: Point3,
    pub position: Point3,
    pub weights: Vec<f64>,
    pub per_ue_rate: Vec<f64>,
    /// Weighted sum rate.
    pub objective: f64,
    pub iterations: usize,
    pub stages: Vec<StageRecord>,
    /// Subchannels released by power-feasibility restoration.
    pub dropped: Vec<Dropped>,
}

impl SlotSolution {
    /// Displacement over the slot divided by the slot length.
    pub fn speed(&self, slot_len: f64) -> f64 {
        self.position.dist(&self.prev_position) / slot_len
    }
}

/// Options of one slot run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOptions {
    pub algorithm: Algorithm,
    /// Keep per-iteration trajectory rows.
    pub trace: bool,
}

impl Default for SlotOptions {
    fn default() -> Self {
        Self { algorithm: Algorithm::Joint, trace: false }
    }
}

/// Slot result with its optional trajectory trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRun {
    pub solution: SlotSolution,
    pub trace: Vec<TraceRow>,
}

/// Previous slot's assignment, used as a warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub matching: Matching,
    pub powers: PowerAllocation,
}

fn context<'a>(s: &Scenario, g: &'a ChannelGains, w: &'a [f64], modes: &'a [Mode]) -> MatchContext<'a> {
    MatchContext {
        gains: g,
        radio: Radio::from_scenario(s),
        weights: w,
        p_ue_max: s.p_ue_max,
        p_uav_max: s.p_uav_max,
        modes,
    }
}

/// Random matching of the random-allocation baseline: a uniformly drawn
/// screened-feasible mode per UE, then per subchannel a uniformly drawn UE
/// whose mode is QoS-feasible on it at full power.
pub fn random_matching(s: &Scenario, slot: usize, ctx: &MatchContext<'_>) -> Matching {
    let mut rng = ChaCha8Rng::seed_from_u64(s.rng_seed ^ 0x5eed_a110c);
    rng.set_stream(slot as u64 + 1);
    let full = PowerAllocation {
        p_ue: vec![vec![ctx.p_ue_max; ctx.n_subchannels()]; ctx.n_ues()],
        p_uav: vec![ctx.p_uav_max; ctx.n_subchannels()],
    };
    let ok = |n: usize, k: usize, mode: Mode| qos_feasible(&link_state(n, k, mode, &full, ctx.gains), &ctx.radio);
    let modes: Vec<Option<Mode>> = (0..ctx.n_ues())
        .map(|n| {
            let feasible: Vec<Mode> = ctx.modes.iter().copied().filter(|&m| (0..ctx.n_subchannels()).any(|k| ok(n, k, m))).collect();
            (!feasible.is_empty()).then(|| feasible[rng.random_range(0..feasible.len())])
        })
        .collect();
    let assign = (0..ctx.n_subchannels())
        .map(|k| {
            let eligible: Vec<McPair> = modes
                .iter()
                .enumerate()
                .filter_map(|(n, m)| m.filter(|&m| ok(n, k, m)).map(|m| McPair::new(n, m)))
                .collect();
            (!eligible.is_empty()).then(|| eligible[rng.random_range(0..eligible.len())])
        })
        .collect();
    Matching { assign }
}

/// Best of MSMA from several starts: the incumbent, the mode-screened greedy,
/// the marginal-gain greedy and, when relaying is allowed, the marginal-gain
/// greedy restricted to cellular mode. Ties keep the earliest start, so the
/// incumbent's branch wins them.
fn matching_stage(inc: &(Matching, PowerAllocation), ctx: &MatchContext<'_>) -> (Matching, PowerAllocation) {
    let mut starts = vec![inc.clone(), init_matching(ctx), greedy_marginal(ctx)];
    if ctx.modes.len() > 1 {
        let cellular = MatchContext { modes: &[Mode::Cellular], ..*ctx };
        starts.push(greedy_marginal(&cellular));
    }
    let mut best: Option<(Matching, PowerAllocation, f64)> = None;
    for (m0, p0) in starts {
        let out = msma(m0, p0, ctx);
        let u = system_utility(&out.matching, &out.powers, ctx);
        if best.as_ref().is_none_or(|b| u > b.2) {
            best = Some((out.matching, out.powers, u));
        }
    }
    let (m, p, _) = best.expect("at least one start");
    (m, p)
}

/// Runs one slot.
///
/// `uav.prev_pos` anchors the movement ball; optimization starts at
/// `uav.pos`. The objective is recorded at every stage boundary; each stage
/// keeps the incumbent when it cannot improve on it.
pub fn jmstp_slot(
    s: &Scenario,
    slot: usize,
    fading: &Fading,
    uav: UavState,
    weights: &[f64],
    warm: Option<&WarmStart>,
    opts: SlotOptions,
) -> Result<SlotRun> {
    let alg = opts.algorithm;
    let modes = alg.modes();
    let radius = if alg == Algorithm::CellularOnly { 0.0 } else { s.move_radius()? };
    let mut q = uav.pos;
    let mut gains = ChannelGains::compute(s, q, fading)?;
    let mut dropped = Vec::new();
    let mut trace = Vec::new();

    // Incumbent: the warm start when still feasible, else nothing.
    let mut inc = {
        let ctx = context(s, &gains, weights, modes);
        let empty = (Matching::vacant(s.n_subchannels), PowerAllocation::zeros(s.n_ues, s.n_subchannels));
        match (alg, warm) {
            (Algorithm::RandomAllocation, _) => {
                let m = random_matching(s, slot, &ctx);
                let out = scp_power(&m, None, &ctx, s.epsilon / 10.0)?;
                dropped.extend(out.dropped);
                (out.matching, out.powers)
            }
            (_, Some(w)) if is_feasible(&w.matching, &w.powers, &ctx) => (w.matching.clone(), w.powers.clone()),
            _ => empty,
        }
    };
    let objective = |g: &ChannelGains, inc: &(Matching, PowerAllocation)| system_utility(&inc.0, &inc.1, &context(s, g, weights, modes));
    let mut best = objective(&gains, &inc);
    let mut stages = vec![StageRecord { iteration: 0, stage: Stage::Start, objective: best }];
    let mut iterations = 0;
    for it in 1..=MAX_BCD_ITERS {
        iterations = it;
        let start = best;
        if alg != Algorithm::RandomAllocation {
            let ctx = context(s, &gains, weights, modes);
            inc = matching_stage(&inc, &ctx);
            let v = objective(&gains, &inc);
            stages.push(StageRecord { iteration: it, stage: Stage::Matching, objective: v });
        }
        if alg != Algorithm::CellularOnly {
            let problem = TrajectoryProblem {
                scenario: s,
                fading,
                matching: &inc.0,
                powers: &inc.1,
                weights,
                radio: Radio::from_scenario(s),
                anchor: uav.prev_pos,
                radius,
            };
            let out = to_algorithm(&problem, q)?;
            if opts.trace {
                trace.extend(out.rows);
            }
            if out.position != q {
                q = out.position;
                gains = gains.with_uav(s, q, fading)?;
            }
            stages.push(StageRecord { iteration: it, stage: Stage::Trajectory, objective: objective(&gains, &inc) });
        }
        {
            let ctx = context(s, &gains, weights, modes);
            let out = scp_power(&inc.0, Some(&inc.1), &ctx, s.epsilon / 10.0)?;
            dropped.extend(out.dropped);
            inc = (out.matching, out.powers);
            stages.push(StageRecord { iteration: it, stage: Stage::Power, objective: objective(&gains, &inc) });
        }
        best = stages.last().unwrap().objective;
        if best - start < s.epsilon {
            break;
        }
        if it == MAX_BCD_ITERS {
            log::warn!("slot {slot}: block loop hit its iteration cap");
        }
    }
    let rep = rate_report(&inc.0.as_assignment(), &inc.1, &gains, &Radio::from_scenario(s), weights);
    let solution = SlotSolution {
        slot,
        modes: inc.0.modes(s.n_ues),
        matching: inc.0,
        powers: inc.1,
        prev_position: uav.prev_pos,
        position: q,
        weights: weights.to_vec(),
        per_ue_rate: rep.per_ue_rate,
        objective: rep.objective,
        iterations,
        stages,
        dropped,
    };
    Ok(SlotRun { solution, trace })
}

/// Every constraint a slot solution must meet; empty when valid.
pub fn validate_slot(s: &Scenario, fading: &Fading, sol: &SlotSolution) -> Result<Vec<String>> {
    let mut v = Vec::new();
    let m = &sol.matching;
    if m.assign.len() != s.n_subchannels {
        v.push(format!("matching covers {} subchannels, expected {}", m.assign.len(), s.n_subchannels));
        return Ok(v);
    }
    if m.assign.iter().flatten().any(|p| p.ue >= s.n_ues) {
        v.push("matching references an unknown UE".into());
        return Ok(v);
    }
    if !m.is_mode_consistent(s.n_ues) {
        v.push("a UE uses both modes".into());
    }
    let p = &sol.powers;
    if p.p_ue.iter().flatten().chain(&p.p_uav).any(|&x| !(x >= 0.0)) {
        v.push("negative or undefined power".into());
    }
    for n in 0..s.n_ues {
        let used: f64 = m.subchannels_of(n).map(|k| p.p_ue[n][k]).sum();
        if used > s.p_ue_max + VALIDATION_TOL {
            v.push(format!("UE {n} power {used} exceeds its cap {}", s.p_ue_max));
        }
    }
    let uav: f64 = (0..s.n_subchannels).filter(|&k| m.assign[k].is_some_and(|p| p.mode == Mode::Relay)).map(|k| p.p_uav[k]).sum();
    if uav > s.p_uav_max + VALIDATION_TOL {
        v.push(format!("UAV power {uav} exceeds its cap {}", s.p_uav_max));
    }
    let step = sol.position.dist(&sol.prev_position);
    let radius = s.move_radius()?;
    if step > radius + VALIDATION_TOL.max(radius * 1e-12) {
        v.push(format!("UAV moved {step} m, limit {radius} m"));
    }
    if !(sol.position.z > s.bs_height) {
        v.push(format!("UAV altitude {} not above the BS height {}", sol.position.z, s.bs_height));
    }
    let energy = flying_power_upper(step / s.slot_len, &s.propulsion)? * s.slot_len;
    if energy > s.e_max + VALIDATION_TOL {
        v.push(format!("flying energy {energy} J exceeds {} J", s.e_max));
    }
    let gains = ChannelGains::compute(s, sol.position, fading)?;
    let radio = Radio::from_scenario(s);
    for (k, pair) in m.assign.iter().enumerate() {
        if let Some(pair) = pair {
            let link = link_state(pair.ue, k, pair.mode, p, &gains);
            if !qos_feasible(&link, &radio) {
                v.push(format!("subchannel {k} misses its SINR threshold (UE {}, {})", pair.ue, pair.mode));
            }
        }
    }
    let rep = rate_report(&m.as_assignment(), p, &gains, &radio, &sol.weights);
    if (rep.objective - sol.objective).abs() > QOS_RTOL * rep.objective.abs().max(1.0) {
        v.push(format!("objective {} does not match its recomputation {}", sol.objective, rep.objective));
    }
    Ok(v)
}
