//! Transmit power allocation at a fixed matching and UAV position.
//!
//! Every UE rate splits into a difference of two concave functions of the
//! powers, `R = K - M`: direct links go entirely into `K`, and a relayed
//! subchannel contributes `1/2 log2((a + s)(b + c s))` to `K` and
//! `1/2 log2(s (b + c a + c s))` to `M`, where `a` and `b` are the received
//! powers at the UAV and BS, `s` the noise power and `c = 1 + I/s`.
//! Linearizing `M` gives a concave minorant that is tight at the expansion
//! point, so each successive convex step cannot lower the true objective.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelGains;
use crate::convex::{maximize_concave, FeasibleSet, Halfspace, SolverOptions};
use crate::error::Result;
use crate::link_rate::{link_rate, link_state, Mode, PowerAllocation, Radio};
use crate::matching::{equal_split, is_feasible, system_utility, MatchContext, Matching, McPair};

/// Iteration cap of the successive convex loop.
pub const MAX_SCP_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerVar {
    Ue { ue: usize, k: usize },
    Uav { k: usize },
}

/// Maps the active power variables of a matching to a flat vector: one UE
/// power per occupied subchannel and one UAV power per relayed subchannel.
#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    pub vars: Vec<PowerVar>,
    n_ues: usize,
    n_subchannels: usize,
    ue_index: Vec<Option<usize>>,
    uav_index: Vec<Option<usize>>,
}

impl VarLayout {
    pub fn new(m: &Matching, n_ues: usize) -> Self {
        let k_total = m.assign.len();
        let mut vars = Vec::new();
        let mut ue_index = vec![None; k_total];
        let mut uav_index = vec![None; k_total];
        for (k, p) in m.assign.iter().enumerate() {
            if let Some(p) = p {
                ue_index[k] = Some(vars.len());
                vars.push(PowerVar::Ue { ue: p.ue, k });
                if p.mode == Mode::Relay {
                    uav_index[k] = Some(vars.len());
                    vars.push(PowerVar::Uav { k });
                }
            }
        }
        Self { vars, n_ues, n_subchannels: k_total, ue_index, uav_index }
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn pack(&self, p: &PowerAllocation) -> Vec<f64> {
        self.vars
            .iter()
            .map(|v| match *v {
                PowerVar::Ue { ue, k } => p.p_ue[ue][k],
                PowerVar::Uav { k } => p.p_uav[k],
            })
            .collect()
    }

    /// Powers of the active variables; every other entry is zero.
    pub fn unpack(&self, x: &[f64]) -> PowerAllocation {
        let mut p = PowerAllocation::zeros(self.n_ues, self.n_subchannels);
        for (v, &val) in self.vars.iter().zip(x) {
            match *v {
                PowerVar::Ue { ue, k } => p.p_ue[ue][k] = val,
                PowerVar::Uav { k } => p.p_uav[k] = val,
            }
        }
        p
    }
}

/// Value and gradient (over the layout's variables) of both concave parts of
/// one UE's rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DcParts {
    pub k_part: f64,
    pub k_grad: Vec<f64>,
    pub m_part: f64,
    pub m_grad: Vec<f64>,
}

/// Adds the contribution of subchannel `k` used by `pair` to `parts`.
fn add_link_terms(parts: &mut DcParts, k: usize, pair: McPair, x: &[f64], layout: &VarLayout, g: &ChannelGains, radio: &Radio) {
    let s = radio.sigma2;
    let iu = layout.ue_index[k].expect("occupied subchannel has a UE power");
    let p = x[iu];
    match pair.mode {
        Mode::Cellular => {
            let h = g.h_ue_bs[pair.ue][k];
            let si = s + radio.ici;
            parts.k_part += 0.5 * ((p * h / s).ln_1p() + (p * h / si).ln_1p()) / LN_2;
            parts.k_grad[iu] += 0.5 * (h / (s + p * h) + h / (si + p * h)) / LN_2;
        }
        Mode::Relay => {
            let iv = layout.uav_index[k].expect("relayed subchannel has a UAV power");
            let (h1, h2) = (g.h_ue_uav[pair.ue][k], g.h_uav_bs[k]);
            let c = 1.0 + radio.rho();
            let a = p * h1;
            let b = x[iv] * h2;
            parts.k_part += 0.5 * ((a + s).ln() + (b + c * s).ln()) / LN_2;
            parts.k_grad[iu] += 0.5 * h1 / (a + s) / LN_2;
            parts.k_grad[iv] += 0.5 * h2 / (b + c * s) / LN_2;
            let inner = b + c * a + c * s;
            parts.m_part += 0.5 * (s.ln() + inner.ln()) / LN_2;
            parts.m_grad[iu] += 0.5 * c * h1 / inner / LN_2;
            parts.m_grad[iv] += 0.5 * h2 / inner / LN_2;
        }
    }
}

/// Concave parts of UE `n`'s rate at powers `x` (in `layout` order).
pub fn dc_split(n: usize, m: &Matching, layout: &VarLayout, x: &[f64], g: &ChannelGains, radio: &Radio) -> DcParts {
    let mut parts = DcParts {
        k_part: 0.0,
        k_grad: vec![0.0; layout.len()],
        m_part: 0.0,
        m_grad: vec![0.0; layout.len()],
    };
    for (k, p) in m.assign.iter().enumerate() {
        if let Some(p) = p.filter(|p| p.ue == n) {
            add_link_terms(&mut parts, k, p, x, layout, g, radio);
        }
    }
    parts
}

/// Weighted sum of all UEs' parts.
fn weighted_parts(m: &Matching, layout: &VarLayout, x: &[f64], ctx: &MatchContext<'_>) -> DcParts {
    let mut parts = DcParts {
        k_part: 0.0,
        k_grad: vec![0.0; layout.len()],
        m_part: 0.0,
        m_grad: vec![0.0; layout.len()],
    };
    for n in 0..ctx.n_ues() {
        let w = ctx.weights[n];
        if w == 0.0 {
            continue;
        }
        let d = dc_split(n, m, layout, x, ctx.gains, &ctx.radio);
        parts.k_part += w * d.k_part;
        parts.m_part += w * d.m_part;
        for i in 0..layout.len() {
            parts.k_grad[i] += w * d.k_grad[i];
            parts.m_grad[i] += w * d.m_grad[i];
        }
    }
    parts
}

/// Concave minorant of the weighted objective, tight at `x0`.
pub fn surrogate(m: &Matching, layout: &VarLayout, x0: &[f64], ctx: &MatchContext<'_>) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    let at0 = weighted_parts(m, layout, x0, ctx);
    let (m0, dm0) = (at0.m_part, at0.m_grad);
    let x0 = x0.to_vec();
    let m = m.clone();
    let layout = layout.clone();
    let ctx_gains = ctx.gains.clone();
    let radio = ctx.radio;
    let weights = ctx.weights.to_vec();
    move |x: &[f64]| {
        let c = MatchContext {
            gains: &ctx_gains,
            radio,
            weights: &weights,
            p_ue_max: 0.0,
            p_uav_max: 0.0,
            modes: &[],
        };
        let p = weighted_parts(&m, &layout, x, &c);
        let lin: f64 = m0 + dm0.iter().zip(x.iter().zip(&x0)).map(|(d, (a, b))| d * (a - b)).sum::<f64>();
        let grad = p.k_grad.iter().zip(&dm0).map(|(a, b)| a - b).collect();
        (p.k_part - lin, grad)
    }
}

/// QoS minimum of each variable.
fn lower_bounds(m: &Matching, layout: &VarLayout, ctx: &MatchContext<'_>) -> Vec<f64> {
    let g = ctx.gains;
    layout
        .vars
        .iter()
        .map(|v| match *v {
            PowerVar::Ue { ue, k } => match m.assign[k].map(|p| p.mode) {
                Some(Mode::Cellular) => ctx.radio.min_power_cellular(g.h_ue_bs[ue][k]),
                _ => ctx.radio.min_power_ue_uav(g.h_ue_uav[ue][k]),
            },
            PowerVar::Uav { k } => ctx.radio.min_power_uav_bs(g.h_uav_bs[k]),
        })
        .collect()
}

/// Power caps as halfspaces over disjoint variable groups, plus per-variable upper bounds.
fn caps(layout: &VarLayout, ctx: &MatchContext<'_>) -> (Vec<Halfspace>, Vec<f64>) {
    let len = layout.len();
    let mut hs = Vec::new();
    for n in 0..ctx.n_ues() {
        let a: Vec<f64> = layout.vars.iter().map(|v| matches!(v, PowerVar::Ue { ue, .. } if *ue == n) as u8 as f64).collect();
        if a.iter().any(|&c| c > 0.0) {
            hs.push(Halfspace { a, b: ctx.p_ue_max });
        }
    }
    let a: Vec<f64> = layout.vars.iter().map(|v| matches!(v, PowerVar::Uav { .. }) as u8 as f64).collect();
    if a.iter().any(|&c| c > 0.0) {
        hs.push(Halfspace { a, b: ctx.p_uav_max });
    }
    let upper = layout
        .vars
        .iter()
        .map(|v| match v {
            PowerVar::Ue { .. } => ctx.p_ue_max,
            PowerVar::Uav { .. } => ctx.p_uav_max,
        })
        .collect();
    debug_assert_eq!(hs.iter().map(|h| h.a.len()).max().unwrap_or(len), len);
    (hs, upper)
}

/// A subchannel released because its QoS minimum did not fit a power cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub subchannel: usize,
    pub pair: McPair,
}

fn split_utility(k: usize, pair: McPair, split: &PowerAllocation, ctx: &MatchContext<'_>) -> f64 {
    ctx.weights[pair.ue] * link_rate(&link_state(pair.ue, k, pair.mode, split, ctx.gains), &ctx.radio)
}

/// Makes a matching power-feasible.
///
/// Powers start at their QoS minimums. While an entity's minimums exceed its
/// cap, its subchannel with the lowest utility under the equal split is
/// released. The leftover budget of
/// each entity is then spread in proportion to the weighted marginal rate.
pub fn restore_feasibility(m: &Matching, ctx: &MatchContext<'_>) -> (Matching, PowerAllocation, Vec<Dropped>) {
    let mut m = m.clone();
    let mut dropped = Vec::new();
    loop {
        let layout = VarLayout::new(&m, ctx.n_ues());
        let lo_vec = lower_bounds(&m, &layout, ctx);
        let lo = layout.unpack(&lo_vec);
        let over_ue = (0..ctx.n_ues()).find(|&n| m.subchannels_of(n).map(|k| lo.p_ue[n][k]).sum::<f64>() > ctx.p_ue_max);
        let relayed: Vec<usize> = (0..m.assign.len()).filter(|&k| m.assign[k].is_some_and(|p| p.mode == Mode::Relay)).collect();
        let victims: Vec<usize> = match over_ue {
            Some(n) => m.subchannels_of(n).collect(),
            None if relayed.iter().map(|&k| lo.p_uav[k]).sum::<f64>() > ctx.p_uav_max => relayed,
            None => {
                let x = spread_budget(&m, &layout, &lo_vec, ctx);
                return (m, layout.unpack(&x), dropped);
            }
        };
        let split = equal_split(&m, ctx);
        let k = *victims
            .iter()
            .min_by(|&&a, &&b| {
                let ua = split_utility(a, m.assign[a].unwrap(), &split, ctx);
                let ub = split_utility(b, m.assign[b].unwrap(), &split, ctx);
                ua.total_cmp(&ub)
            })
            .expect("an over-budget entity has subchannels");
        dropped.push(Dropped { subchannel: k, pair: m.assign[k].unwrap() });
        m.assign[k] = None;
    }
}

fn spread_budget(m: &Matching, layout: &VarLayout, lo: &[f64], ctx: &MatchContext<'_>) -> Vec<f64> {
    let parts = weighted_parts(m, layout, lo, ctx);
    let marginal: Vec<f64> = parts.k_grad.iter().zip(&parts.m_grad).map(|(a, b)| (a - b).max(0.0)).collect();
    let (hs, _) = caps(layout, ctx);
    let mut x = lo.to_vec();
    for h in &hs {
        let members: Vec<usize> = (0..x.len()).filter(|&i| h.a[i] > 0.0).collect();
        let slack = (h.b - members.iter().map(|&i| lo[i]).sum::<f64>()).max(0.0);
        let total: f64 = members.iter().map(|&i| marginal[i]).sum();
        for &i in &members {
            let share = if total > 0.0 { marginal[i] / total } else { 1.0 / members.len() as f64 };
            x[i] += slack * share;
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerOutcome {
    /// The matching actually served; differs from the input only by released subchannels.
    pub matching: Matching,
    pub powers: PowerAllocation,
    pub objective: f64,
    /// True objective after each accepted iterate, starting point first.
    pub trace: Vec<f64>,
    pub dropped: Vec<Dropped>,
}

/// Successive convex power allocation.
///
/// Starts from `init` when it is feasible for `m`, otherwise from
/// [`restore_feasibility`]. Stops when the fractional increase of the true
/// objective falls below `rel_tol` or after [`MAX_SCP_ITERS`] iterations.
pub fn scp_power(m: &Matching, init: Option<&PowerAllocation>, ctx: &MatchContext<'_>, rel_tol: f64) -> Result<PowerOutcome> {
    let (m, start, dropped) = match init {
        Some(p) if is_feasible(m, p, ctx) => (m.clone(), VarLayout::new(m, ctx.n_ues()).unpack(&VarLayout::new(m, ctx.n_ues()).pack(p)), Vec::new()),
        _ => restore_feasibility(m, ctx),
    };
    let layout = VarLayout::new(&m, ctx.n_ues());
    let mut x = layout.pack(&start);
    let mut best = system_utility(&m, &start, ctx);
    let mut trace = vec![best];
    if layout.is_empty() {
        return Ok(PowerOutcome { matching: m, powers: start, objective: best, trace, dropped });
    }
    let lo = lower_bounds(&m, &layout, ctx);
    let (halfspaces, upper) = caps(&layout, ctx);
    let set = FeasibleSet {
        halfspaces,
        lower: Some(lo),
        upper: Some(upper),
        ..Default::default()
    };
    let opts = SolverOptions::default();
    let true_obj = |x: &[f64]| system_utility(&m, &layout.unpack(x), ctx);
    for it in 0..MAX_SCP_ITERS {
        let f = surrogate(&m, &layout, &x, ctx);
        let sol = maximize_concave(&f, &set, &x, &opts)?;
        // Accept only true improvements, pulling back toward the incumbent if needed.
        let mut cand = sol.x;
        let mut val = true_obj(&cand);
        let mut tries = 0;
        while !(val >= best) && tries < 8 {
            cand = cand.iter().zip(&x).map(|(c, o)| 0.5 * (c + o)).collect();
            val = true_obj(&cand);
            tries += 1;
        }
        if !(val >= best) {
            break;
        }
        let gain = val - best;
        x = cand;
        best = val;
        trace.push(best);
        if gain <= rel_tol * best.abs() {
            break;
        }
        if it + 1 == MAX_SCP_ITERS {
            log::debug!("power allocation hit its iteration cap");
        }
    }
    let powers = layout.unpack(&x);
    Ok(PowerOutcome { matching: m, powers, objective: best, trace, dropped })
}
