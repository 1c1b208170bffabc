//! Per-slot UAV positioning.
//!
//! Only relayed subchannels depend on the UAV position. The horizontal stage
//! replaces each air-to-ground gain by a concave lower bound around the
//! current iterate (elevation, LoS probability and reciprocal pathloss are
//! each bounded by a tangent), so the relay rate becomes a concave minorant.
//! The altitude stage freezes link distances, linearizes the LoS probability
//! in altitude and takes the tangent of the resulting convex gain. Every
//! iterate of both stages is checked against the true objective and true QoS
//! before it is accepted.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::{a2g_gain, free_space_pathloss, los_prob, mixture_pathloss, Fading};
use crate::convex::{maximize_concave, Ball, Barrier, FeasibleSet, Objective, SolverOptions};
use crate::error::Result;
use crate::geometry::Point3;
use crate::link_rate::{qos_feasible, LinkState, Mode, PowerAllocation, Radio};
use crate::matching::Matching;
use crate::scenario::{A2GParams, Scenario};

const DEG: f64 = 180.0 / std::f64::consts::PI;

/// Smallest horizontal expansion distance; closer expansion points are nudged out to it.
pub const MIN_EXPANSION_OFFSET: f64 = 0.1;

/// Clearance kept above the BS antenna height.
pub const ALTITUDE_MARGIN: f64 = 1.0;

/// SCP iteration cap per stage, and cap on horizontal/altitude passes.
pub const MAX_STAGE_ITERS: usize = 50;

/// Relative pull-back attempts before an iterate is abandoned.
const GUARD_HALVINGS: usize = 8;

/// Slack on the smooth SNR constraints of the horizontal stage.
const SNR_TOL: f64 = 1e-10;

/// Which air-to-ground link a gain belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkEnd {
    UavBs,
    UeUav(usize),
}

/// Concave lower bound, in the horizontal plane at fixed altitude, of the
/// frequency- and fading-free gain `1 / (d^2 (eta_nlos - (eta_nlos - eta_los) PR))`
/// toward one ground peer. Everything depends only on the horizontal distance
/// to the peer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBound {
    peer: Point3,
    dh: f64,
    /// `d / dh` at the expansion distance.
    c: f64,
    /// `1 + a exp(-b (theta - a))` at the expansion distance.
    d0: f64,
    /// Unit pathloss at the expansion distance.
    psi0: f64,
    params: A2GParams,
}

impl RadialBound {
    pub fn new(uav: Point3, peer: Point3, params: &A2GParams) -> Self {
        let dh = uav.z - peer.z;
        let r0 = uav.horizontal_dist(&peer).max(MIN_EXPANSION_OFFSET);
        let d0 = (r0 * r0 + dh * dh).sqrt();
        let c = d0 / dh;
        let theta0 = (1.0 / c).asin() * DEG;
        let pr0 = los_prob(theta0, params.a, params.b);
        Self {
            peer,
            dh,
            c,
            d0: 1.0 / pr0,
            psi0: mixture_pathloss(1.0, d0, pr0, params),
            params: *params,
        }
    }

    /// Lower bound on the elevation angle (degrees) at horizontal position `(x, y)`.
    pub fn elevation_bound(&self, x: f64, y: f64) -> f64 {
        let (rx, ry) = (x - self.peer.x, y - self.peer.y);
        let u = (rx * rx + ry * ry + self.dh * self.dh).sqrt() / self.dh;
        let c = self.c;
        DEG * ((1.0 / c).asin() - (u - c) / (c * (c * c - 1.0).sqrt()))
    }

    /// Lower bound on the LoS probability.
    pub fn los_bound(&self, x: f64, y: f64) -> f64 {
        let p = &self.params;
        let e = p.a * (-p.b * (self.elevation_bound(x, y) - p.a)).exp();
        2.0 / self.d0 - 1.0 / (self.d0 * self.d0) - e / (self.d0 * self.d0)
    }

    /// Bound value and gradient with respect to `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let p = &self.params;
        let (rx, ry) = (x - self.peer.x, y - self.peer.y);
        let d2 = rx * rx + ry * ry + self.dh * self.dh;
        let d = d2.sqrt();
        let u = d / self.dh;
        let c = self.c;
        let slope = 1.0 / (c * (c * c - 1.0).sqrt());
        let theta = DEG * ((1.0 / c).asin() - (u - c) * slope);
        let e = p.a * (-p.b * (theta - p.a)).exp();
        let dd = self.d0 * self.d0;
        let pr = 2.0 / self.d0 - 1.0 / dd - e / dd;
        let deta = p.eta_nlos - p.eta_los;
        let mix = p.eta_nlos - deta * pr;
        let psi = d2 * mix;
        let value = 2.0 / self.psi0 - psi / (self.psi0 * self.psi0);
        // d theta / d r_i = -DEG slope r_i / (d dh); d pr / d theta = b e / dd.
        let dpr_dtheta = p.b * e / dd;
        let mut grad = [0.0; 2];
        for (g, r) in grad.iter_mut().zip([rx, ry]) {
            let dtheta = -DEG * slope * r / (d * self.dh);
            let dpsi = 2.0 * r * mix - d2 * deta * dpr_dtheta * dtheta;
            *g = -dpsi / (self.psi0 * self.psi0);
        }
        (value, grad)
    }
}

/// One relayed subchannel as seen by the trajectory stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayLink {
    pub ue: usize,
    pub k: usize,
    pub weight: f64,
    pub p_ue: f64,
    pub p_uav: f64,
    /// Fading over free-space loss on the UE-UAV link, `|g|^2 / L`.
    pub scale_ue: f64,
    /// Same for the UAV-BS link.
    pub scale_bs: f64,
}

/// Everything the trajectory stages read.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryProblem<'a> {
    pub scenario: &'a Scenario,
    pub fading: &'a Fading,
    pub matching: &'a Matching,
    pub powers: &'a PowerAllocation,
    pub weights: &'a [f64],
    pub radio: Radio,
    /// Position at the start of the slot.
    pub anchor: Point3,
    /// Movement radius around the anchor.
    pub radius: f64,
}

impl TrajectoryProblem<'_> {
    pub fn relay_links(&self) -> Result<Vec<RelayLink>> {
        let mut out = Vec::new();
        for (k, p) in self.matching.assign.iter().enumerate() {
            let Some(p) = p.filter(|p| p.mode == Mode::Relay) else { continue };
            let l = free_space_pathloss(self.scenario.subchannel_freqs[k])?;
            out.push(RelayLink {
                ue: p.ue,
                k,
                weight: self.weights[p.ue],
                p_ue: self.powers.p_ue[p.ue][k],
                p_uav: self.powers.p_uav[k],
                scale_ue: self.fading.ue_uav[p.ue][k] / l,
                scale_bs: self.fading.uav_bs[k] / l,
            });
        }
        Ok(out)
    }

    fn link_state(&self, link: &RelayLink, q: Point3) -> Result<LinkState> {
        let s = self.scenario;
        let f = s.subchannel_freqs[link.k];
        Ok(LinkState::Relay {
            p_ue: link.p_ue,
            p_uav: link.p_uav,
            h_ue_uav: a2g_gain(&q, &s.ue_positions[link.ue], f, &s.a2g, self.fading.ue_uav[link.ue][link.k])?,
            h_uav_bs: a2g_gain(&q, &s.bs_position(), f, &s.a2g, self.fading.uav_bs[link.k])?,
        })
    }

    /// Weighted relay rate at `q` with true gains.
    pub fn true_objective(&self, links: &[RelayLink], q: Point3) -> Result<f64> {
        let mut total = 0.0;
        for l in links {
            total += l.weight * crate::link_rate::link_rate(&self.link_state(l, q)?, &self.radio);
        }
        Ok(total)
    }

    /// True QoS of every relayed subchannel at `q`.
    pub fn qos_holds(&self, links: &[RelayLink], q: Point3) -> Result<bool> {
        for l in links {
            if !qos_feasible(&self.link_state(l, q)?, &self.radio) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn min_altitude(&self) -> f64 {
        self.scenario.bs_height + ALTITUDE_MARGIN
    }

    /// Whether `q` lies in the movement ball and above the minimum altitude.
    fn movable(&self, q: Point3) -> bool {
        q.dist(&self.anchor) <= self.radius * (1.0 + 1e-12) + 1e-12 && q.z >= self.min_altitude()
    }
}

/// Gain bounds and the linearized subtracted term of each relay rate,
/// built at one horizontal expansion point.
#[derive(Debug, Clone)]
pub struct SurrogateContext {
    pub expansion: Point3,
    bs: RadialBound,
    ues: Vec<RadialBound>,
    /// Value and gradient of the subtracted concave term at the expansion point, per link.
    taylor: Vec<(f64, [f64; 2])>,
    links: Vec<RelayLink>,
    sigma2: f64,
    c: f64,
}

impl SurrogateContext {
    pub fn new(problem: &TrajectoryProblem<'_>, links: &[RelayLink], expansion: Point3) -> Self {
        let s = problem.scenario;
        let bs = RadialBound::new(expansion, s.bs_position(), &s.a2g);
        let ues = s.ue_positions.iter().map(|ue| RadialBound::new(expansion, *ue, &s.a2g)).collect();
        let mut ctx = Self {
            expansion,
            bs,
            ues,
            taylor: Vec::new(),
            links: links.to_vec(),
            sigma2: problem.radio.sigma2,
            c: 1.0 + problem.radio.rho(),
        };
        ctx.taylor = (0..links.len()).map(|i| ctx.subtracted(i, expansion.x, expansion.y)).collect();
        ctx
    }

    /// Concave lower bound on the gain of one link at horizontal position `(x, y)`.
    pub fn gain_lower_bound(&self, end: LinkEnd, x: f64, y: f64, scale: f64) -> (f64, [f64; 2]) {
        let b = match end {
            LinkEnd::UavBs => &self.bs,
            LinkEnd::UeUav(n) => &self.ues[n],
        };
        let (v, g) = b.eval(x, y);
        (scale * v, [scale * g[0], scale * g[1]])
    }

    fn bounds(&self, i: usize, x: f64, y: f64) -> ((f64, [f64; 2]), (f64, [f64; 2])) {
        let l = &self.links[i];
        (
            self.gain_lower_bound(LinkEnd::UeUav(l.ue), x, y, l.scale_ue),
            self.gain_lower_bound(LinkEnd::UavBs, x, y, l.scale_bs),
        )
    }

    /// `1/2 log2(s (c P_n H1 + P_U H2 + c s))` and its gradient.
    fn subtracted(&self, i: usize, x: f64, y: f64) -> (f64, [f64; 2]) {
        let l = &self.links[i];
        let ((h1, g1), (h2, g2)) = self.bounds(i, x, y);
        let inner = self.c * l.p_ue * h1 + l.p_uav * h2 + self.c * self.sigma2;
        let v = 0.5 * (self.sigma2.ln() + inner.ln()) / LN_2;
        let grad = [0, 1].map(|j| 0.5 * (self.c * l.p_ue * g1[j] + l.p_uav * g2[j]) / inner / LN_2);
        (v, grad)
    }

    /// Concave minorant of the rate of relay link `i` (index into the links
    /// the context was built with).
    pub fn surrogate_relay_rate(&self, i: usize, x: f64, y: f64) -> (f64, [f64; 2]) {
        let l = &self.links[i];
        let ((h1, g1), (h2, g2)) = self.bounds(i, x, y);
        let a = l.p_ue * h1 + self.sigma2;
        let b = l.p_uav * h2 + self.c * self.sigma2;
        let j = 0.5 * (a.ln() + b.ln()) / LN_2;
        let (t0, tg) = self.taylor[i];
        let (dx, dy) = (x - self.expansion.x, y - self.expansion.y);
        let value = j - (t0 + tg[0] * dx + tg[1] * dy);
        let grad = [0, 1].map(|m| 0.5 * (l.p_ue * g1[m] / a + l.p_uav * g2[m] / b) / LN_2 - tg[m]);
        (value, grad)
    }

    /// Weighted sum of the relay-rate minorants.
    pub fn objective(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (i, l) in self.links.iter().enumerate() {
            let (r, dr) = self.surrogate_relay_rate(i, x, y);
            v += l.weight * r;
            g[0] += l.weight * dr[0];
            g[1] += l.weight * dr[1];
        }
        (v, g)
    }
}

/// Linearized LoS probability of a peer link in altitude, with the horizontal
/// position fixed: `E + F (z - z_l) / d_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltitudeLink {
    z_l: f64,
    /// Link distance at the expansion altitude.
    pub d_l: f64,
    /// LoS probability at the expansion altitude.
    pub e: f64,
    /// Slope factor.
    pub f: f64,
    eta_los: f64,
    eta_nlos: f64,
}

impl AltitudeLink {
    pub fn new(uav: Point3, peer: Point3, params: &A2GParams) -> Self {
        let r = uav.horizontal_dist(&peer).max(MIN_EXPANSION_OFFSET);
        let dh = uav.z - peer.z;
        let d_l = (r * r + dh * dh).sqrt();
        let theta = (dh / d_l).asin() * DEG;
        let pr = los_prob(theta, params.a, params.b);
        let cos = r / d_l;
        Self {
            z_l: uav.z,
            d_l,
            e: pr,
            f: pr * (1.0 - pr) * DEG * params.b / cos,
            eta_los: params.eta_los,
            eta_nlos: params.eta_nlos,
        }
    }

    pub fn linearized_los(&self, z: f64) -> f64 {
        self.e + self.f * (z - self.z_l) / self.d_l
    }

    /// Tangent at the expansion altitude of the frozen-distance unit gain
    /// `1 / (d_l^2 (eta_nlos - (eta_nlos - eta_los) PR(z)))`: `(value, slope)`.
    pub fn gain_tangent(&self) -> (f64, f64) {
        let deta = self.eta_nlos - self.eta_los;
        let psi = self.d_l * self.d_l * (self.eta_nlos - deta * self.e);
        let dpsi = -self.d_l * deta * self.f;
        (1.0 / psi, -dpsi / (psi * psi))
    }
}

/// One row of the optional per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub stage: String,
    pub pass: usize,
    pub iteration: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub objective: f64,
    /// Smallest relative QoS margin over relayed subchannels.
    pub min_qos_margin: f64,
}

pub fn write_trace<W: std::io::Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub position: Point3,
    /// True objective after each accepted iterate, start first.
    pub trace: Vec<f64>,
}

/// Pulls `cand` toward `incumbent` until it is movable, improves the true
/// objective and keeps true QoS.
fn guard(problem: &TrajectoryProblem<'_>, links: &[RelayLink], incumbent: Point3, best: f64, mut cand: Point3) -> Result<Option<(Point3, f64)>> {
    for _ in 0..=GUARD_HALVINGS {
        if problem.movable(cand) && problem.qos_holds(links, cand)? {
            let v = problem.true_objective(links, cand)?;
            if v >= best {
                return Ok(Some((cand, v)));
            }
        }
        cand = Point3::new(0.5 * (cand.x + incumbent.x), 0.5 * (cand.y + incumbent.y), 0.5 * (cand.z + incumbent.z));
    }
    Ok(None)
}

fn min_margin(problem: &TrajectoryProblem<'_>, links: &[RelayLink], q: Point3) -> f64 {
    links
        .iter()
        .filter_map(|l| problem.link_state(l, q).ok())
        .map(|s| crate::link_rate::qos_margin(&s, &problem.radio))
        .fold(f64::INFINITY, f64::min)
}

fn converged(gain: f64, value: f64, tol: f64) -> bool {
    gain <= tol * value.abs()
}

/// SCP over the horizontal position at the altitude of `start`.
pub fn solve_horizontal(problem: &TrajectoryProblem<'_>, start: Point3, trace: &mut Vec<TraceRow>, pass: usize) -> Result<StageOutcome> {
    let links = problem.relay_links()?;
    let mut pos = start;
    let mut best = problem.true_objective(&links, pos)?;
    let mut out = vec![best];
    let dz = pos.z - problem.anchor.z;
    let radius = (problem.radius * problem.radius - dz * dz).max(0.0).sqrt();
    if links.is_empty() || radius == 0.0 {
        return Ok(StageOutcome { position: pos, trace: out });
    }
    let th = problem.radio.th;
    let noise_bs = problem.radio.sigma2 + problem.radio.ici;
    for it in 0..MAX_STAGE_ITERS {
        let ctx = SurrogateContext::new(problem, &links, pos);
        let mut barriers: Vec<Barrier<'_>> = Vec::new();
        for i in 0..links.len() {
            let ctx_a = ctx.clone();
            let ue_snr = move |v: &[f64]| {
                let (h, g) = ctx_a.gain_lower_bound(LinkEnd::UeUav(ctx_a.links[i].ue), v[0], v[1], ctx_a.links[i].scale_ue);
                let k = ctx_a.links[i].p_ue / (th.ue_uav * ctx_a.sigma2);
                (k * h - 1.0, vec![k * g[0], k * g[1]])
            };
            let ctx_b = ctx.clone();
            let bs_snr = move |v: &[f64]| {
                let (h, g) = ctx_b.gain_lower_bound(LinkEnd::UavBs, v[0], v[1], ctx_b.links[i].scale_bs);
                let k = ctx_b.links[i].p_uav / (th.uav_bs * noise_bs);
                (k * h - 1.0, vec![k * g[0], k * g[1]])
            };
            for g in [Box::new(ue_snr) as Box<Objective<'_>>, Box::new(bs_snr)] {
                let at = g(&[pos.x, pos.y]).0;
                barriers.push(Barrier { g, tol: SNR_TOL + (-at).max(0.0) });
            }
        }
        let set = FeasibleSet {
            ball: Some(Ball { center: vec![problem.anchor.x, problem.anchor.y], radius }),
            barriers,
            ..Default::default()
        };
        let obj = |v: &[f64]| {
            let (f, g) = ctx.objective(v[0], v[1]);
            (f, g.to_vec())
        };
        let sol = match maximize_concave(&obj, &set, &[pos.x, pos.y], &SolverOptions::default()) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("horizontal stage keeps the incumbent: {e}");
                break;
            }
        };
        let cand = Point3::new(sol.x[0], sol.x[1], pos.z);
        let Some((next, v)) = guard(problem, &links, pos, best, cand)? else { break };
        let gain = v - best;
        pos = next;
        best = v;
        out.push(best);
        trace.push(TraceRow {
            stage: "horizontal".into(),
            pass,
            iteration: it,
            x: pos.x,
            y: pos.y,
            z: pos.z,
            objective: best,
            min_qos_margin: min_margin(problem, &links, pos),
        });
        if converged(gain, best, problem.scenario.epsilon_to) {
            break;
        }
        if it + 1 == MAX_STAGE_ITERS {
            log::debug!("horizontal stage hit its iteration cap");
        }
    }
    Ok(StageOutcome { position: pos, trace: out })
}

/// Concave minorant of the weighted relay rate in the altitude, built at
/// one expansion altitude with the horizontal position held fixed.
#[derive(Debug, Clone)]
pub struct AltitudeSurrogate {
    pub z_l: f64,
    /// Gain tangents per link as ((value, slope) of UE-UAV, (value, slope) of UAV-BS).
    pub tangents: Vec<((f64, f64), (f64, f64))>,
    /// Subtracted term and its derivative at `z_l`, per link.
    sub: Vec<(f64, f64)>,
    links: Vec<RelayLink>,
    sigma2: f64,
    c: f64,
}

impl AltitudeSurrogate {
    pub fn new(problem: &TrajectoryProblem<'_>, links: &[RelayLink], expansion: Point3) -> Self {
        let s = problem.scenario;
        let sigma2 = problem.radio.sigma2;
        let c = 1.0 + problem.radio.rho();
        let bs = AltitudeLink::new(expansion, s.bs_position(), &s.a2g).gain_tangent();
        let ues: Vec<(f64, f64)> = s.ue_positions.iter().map(|ue| AltitudeLink::new(expansion, *ue, &s.a2g).gain_tangent()).collect();
        let tangents: Vec<_> = links
            .iter()
            .map(|l| {
                let u = ues[l.ue];
                ((l.scale_ue * u.0, l.scale_ue * u.1), (l.scale_bs * bs.0, l.scale_bs * bs.1))
            })
            .collect();
        let sub = links
            .iter()
            .zip(&tangents)
            .map(|(l, ((a0, a1), (b0, b1)))| {
                let inner = c * l.p_ue * a0 + l.p_uav * b0 + c * sigma2;
                (0.5 * (sigma2.ln() + inner.ln()) / LN_2, 0.5 * (c * l.p_ue * a1 + l.p_uav * b1) / inner / LN_2)
            })
            .collect();
        Self { z_l: expansion.z, tangents, sub, links: links.to_vec(), sigma2, c }
    }

    /// Value and derivative at altitude `z`.
    pub fn objective(&self, z: f64) -> (f64, f64) {
        let dz = z - self.z_l;
        let mut f = 0.0;
        let mut g = 0.0;
        for ((l, ((a0, a1), (b0, b1))), (t0, t1)) in self.links.iter().zip(&self.tangents).zip(&self.sub) {
            let a = l.p_ue * (a0 + a1 * dz) + self.sigma2;
            let b = l.p_uav * (b0 + b1 * dz) + self.c * self.sigma2;
            f += l.weight * (0.5 * (a.ln() + b.ln()) / LN_2 - (t0 + t1 * dz));
            g += l.weight * (0.5 * (l.p_ue * a1 / a + l.p_uav * b1 / b) / LN_2 - t1);
        }
        (f, g)
    }
}

/// SCP over the altitude at the horizontal position of `start`.
pub fn solve_altitude(problem: &TrajectoryProblem<'_>, start: Point3, trace: &mut Vec<TraceRow>, pass: usize) -> Result<StageOutcome> {
    let links = problem.relay_links()?;
    let mut pos = start;
    let mut best = problem.true_objective(&links, pos)?;
    let mut out = vec![best];
    if links.is_empty() {
        return Ok(StageOutcome { position: pos, trace: out });
    }
    let s = problem.scenario;
    let (hx, hy) = (pos.x - problem.anchor.x, pos.y - problem.anchor.y);
    let vertical = (problem.radius * problem.radius - hx * hx - hy * hy).max(0.0).sqrt();
    let th = problem.radio.th;
    let sigma2 = problem.radio.sigma2;
    let noise_bs = sigma2 + problem.radio.ici;
    for it in 0..MAX_STAGE_ITERS {
        let z_l = pos.z;
        let sur = AltitudeSurrogate::new(problem, &links, pos);
        let mut lo = (problem.anchor.z - vertical).max(problem.min_altitude());
        let mut hi = problem.anchor.z + vertical;
        let mut bound = |power: f64, (h0, h1): (f64, f64), need: f64| {
            // power (h0 + h1 (z - z_l)) >= need
            let rhs = need / power - h0;
            if h1 > 0.0 {
                lo = lo.max(z_l + rhs / h1);
            } else if h1 < 0.0 {
                hi = hi.min(z_l + rhs / h1);
            } else if rhs > 0.0 {
                hi = f64::NEG_INFINITY;
            }
        };
        for (l, (t1, t2)) in links.iter().zip(&sur.tangents) {
            bound(l.p_ue, *t1, th.ue_uav * sigma2);
            bound(l.p_uav, *t2, th.uav_bs * noise_bs);
        }
        if !(lo <= hi) {
            log::debug!("altitude stage: empty approximated set, keeping the incumbent");
            break;
        }
        let obj = |v: &[f64]| {
            let (f, g) = sur.objective(v[0]);
            (f, vec![g])
        };
        let set = FeasibleSet {
            lower: Some(vec![lo]),
            upper: Some(vec![hi]),
            ..Default::default()
        };
        let sol = match maximize_concave(&obj, &set, &[z_l], &SolverOptions::default()) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("altitude stage keeps the incumbent: {e}");
                break;
            }
        };
        let Some((next, v)) = guard(problem, &links, pos, best, pos.with_z(sol.x[0]))? else { break };
        let gain = v - best;
        pos = next;
        best = v;
        out.push(best);
        trace.push(TraceRow {
            stage: "altitude".into(),
            pass,
            iteration: it,
            x: pos.x,
            y: pos.y,
            z: pos.z,
            objective: best,
            min_qos_margin: min_margin(problem, &links, pos),
        });
        if converged(gain, best, s.epsilon_to) {
            break;
        }
        if it + 1 == MAX_STAGE_ITERS {
            log::debug!("altitude stage hit its iteration cap");
        }
    }
    Ok(StageOutcome { position: pos, trace: out })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutcome {
    pub position: Point3,
    /// True weighted relay rate after each full pass, start first.
    pub trace: Vec<f64>,
    pub passes: usize,
    pub rows: Vec<TraceRow>,
}

/// Position taken when no relay link is matched.
///
/// The objective does not depend on the position then, so every movable point
/// is optimal. The UAV heads horizontally toward the weighted centroid of the
/// unscheduled UEs, clamped to the movement ball, so that relaying can become
/// feasible for them in later iterations or slots. Stays put when every UE is
/// scheduled.
pub fn idle_drift(problem: &TrajectoryProblem<'_>, pos: Point3) -> Point3 {
    let s = problem.scenario;
    let (mut wx, mut wy, mut wsum) = (0.0, 0.0, 0.0);
    for (n, ue) in s.ue_positions.iter().enumerate() {
        if problem.matching.subchannels_of(n).next().is_none() {
            let w = problem.weights[n];
            wx += w * ue.x;
            wy += w * ue.y;
            wsum += w;
        }
    }
    let dz = pos.z - problem.anchor.z;
    let r = (problem.radius * problem.radius - dz * dz).max(0.0).sqrt();
    if !(wsum > 0.0) || r == 0.0 {
        return pos;
    }
    let (ax, ay) = (problem.anchor.x, problem.anchor.y);
    let (tx, ty) = (wx / wsum - ax, wy / wsum - ay);
    let d = tx.hypot(ty);
    let f = if d > r { r / d } else { 1.0 };
    let q = Point3::new(ax + f * tx, ay + f * ty, pos.z);
    if problem.movable(q) {
        q
    } else {
        pos
    }
}

/// Alternates the horizontal and altitude stages from `start` until the
/// fractional increase of the true objective falls below the scenario's
/// trajectory tolerance.
pub fn to_algorithm(problem: &TrajectoryProblem<'_>, start: Point3) -> Result<TrajectoryOutcome> {
    static LOOSE_WARNING: std::sync::Once = std::sync::Once::new();
    if problem.scenario.d_max > 0.2 * start.z {
        // Once per process: sweeps would otherwise repeat it every slot.
        LOOSE_WARNING.call_once(|| log::warn!(
            "movement radius {} m is large relative to altitude {:.1} m; the altitude linearization may be loose",
            problem.scenario.d_max,
            start.z
        ));
    }
    let links = problem.relay_links()?;
    let mut pos = start;
    let mut best = problem.true_objective(&links, pos)?;
    let mut trace = vec![best];
    let mut rows = Vec::new();
    let mut passes = 0;
    if links.is_empty() {
        let target = idle_drift(problem, pos);
        if target != pos {
            rows.push(TraceRow {
                stage: "drift".into(),
                pass: 0,
                iteration: 0,
                x: target.x,
                y: target.y,
                z: target.z,
                objective: best,
                min_qos_margin: f64::INFINITY,
            });
        }
        return Ok(TrajectoryOutcome { position: target, trace, passes, rows });
    }
    for pass in 0..MAX_STAGE_ITERS {
        passes += 1;
        let h = solve_horizontal(problem, pos, &mut rows, pass)?;
        let a = solve_altitude(problem, h.position, &mut rows, pass)?;
        let v = problem.true_objective(&links, a.position)?;
        let gain = v - best;
        pos = a.position;
        best = v;
        trace.push(best);
        if converged(gain, best, problem.scenario.epsilon_to) {
            break;
        }
    }
    Ok(TrajectoryOutcome { position: pos, trace, passes, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{elevation_deg, los_probability};
    use crate::convex::grad_check;
    use crate::link_rate::{rate_relay, relay_sinrs};
    use crate::matching::McPair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> A2GParams {
        Scenario::default().a2g
    }

    fn unit_gain(uav: Point3, peer: Point3) -> f64 {
        // Unit-frequency gain: free-space factor divided out.
        let p = params();
        let pr = los_probability(elevation_deg(&uav, &peer), p.a, p.b).unwrap();
        1.0 / mixture_pathloss(1.0, uav.dist(&peer), pr, &p)
    }

    #[test]
    fn radial_bound_tight_dominated_concave() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let uav = Point3::new(rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0), rng.random_range(100.0..200.0));
            let peer = Point3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), [0.0, 30.0][rng.random_range(0..2)]);
            if uav.horizontal_dist(&peer) < 1.0 {
                continue;
            }
            let b = RadialBound::new(uav, peer, &params());
            let exact = unit_gain(uav, peer);
            let (at, g) = b.eval(uav.x, uav.y);
            assert!((at - exact).abs() <= 1e-10 * exact, "{at} vs {exact}");
            let f = |v: &[f64]| {
                let (a, g) = b.eval(v[0], v[1]);
                (a, g.to_vec())
            };
            assert!(grad_check(&f, &[uav.x, uav.y], 1e-3) < 1e-4);
            assert!(g.iter().all(|v| v.is_finite()));
            let sample = |rng: &mut ChaCha8Rng| {
                let r = 15.0 * rng.random::<f64>().sqrt();
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                (uav.x + r * t.cos(), uav.y + r * t.sin())
            };
            for _ in 0..1000 {
                let (x, y) = sample(&mut rng);
                let q = Point3::new(x, y, uav.z);
                assert!(b.eval(x, y).0 <= unit_gain(q, peer) * (1.0 + 1e-12));
                assert!(b.los_bound(x, y) <= los_prob(elevation_deg(&q, &peer), params().a, params().b) + 1e-12);
                let (x2, y2) = sample(&mut rng);
                let mid = b.eval(0.5 * (x + x2), 0.5 * (y + y2)).0;
                let avg = 0.5 * (b.eval(x, y).0 + b.eval(x2, y2).0);
                assert!(mid >= avg - 1e-9 * avg.abs());
            }
        }
    }

    #[test]
    fn nudged_expansion_stays_finite_and_dominated() {
        let peer = Point3::new(0.0, 0.0, 30.0);
        let uav = Point3::new(0.0, 0.0, 130.0);
        let b = RadialBound::new(uav, peer, &params());
        let (v, g) = b.eval(0.0, 0.0);
        assert!(v.is_finite() && g.iter().all(|x| x.is_finite()));
        for r in [0.0, 0.05, 1.0, 10.0] {
            assert!(b.eval(r, 0.0).0 <= unit_gain(Point3::new(r, 0.0, 130.0), peer) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn linearized_los_accuracy() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let (peer_z, lo, hi) = if rng.random::<bool>() { (30.0, 25.0, 150.0) } else { (0.0, 25.0, 200.0) };
            let r = rng.random_range(lo..hi);
            let peer = Point3::new(0.0, 0.0, peer_z);
            let uav = Point3::new(r, 0.0, 130.0);
            let lin = AltitudeLink::new(uav, peer, &p);
            assert_eq!(lin.linearized_los(130.0), los_prob(elevation_deg(&uav, &peer), p.a, p.b));
            assert!(lin.f > 0.0);
            for i in 0..=30 {
                let z = 115.0 + i as f64;
                let exact = los_prob(elevation_deg(&uav.with_z(z), &peer), p.a, p.b);
                let err = (lin.linearized_los(z) - exact).abs() / exact;
                assert!(err <= 0.02, "r={r} peer_z={peer_z} z={z}: {err}");
            }
        }
    }

    fn scenario_one_relay() -> (Scenario, Fading, Matching, PowerAllocation) {
        let mut s = Scenario::default();
        s.n_ues = 1;
        s.n_subchannels = 1;
        s.subchannel_freqs = vec![s.subchannel_freqs[0]];
        s.ue_positions = vec![Point3::new(180.0, 0.0, 0.0)];
        s.uav_initial = Point3::new(60.0, 40.0, 130.0);
        s.d_max = 15.0;
        s.gamma_th = 1.0;
        s.gamma1_th = 1.0;
        s.gamma2_th = 1.0;
        let f = Fading::unit(1, 1);
        let m = Matching { assign: vec![Some(McPair::new(0, Mode::Relay))] };
        let mut p = PowerAllocation::zeros(1, 1);
        p.p_ue[0][0] = 0.05;
        p.p_uav[0] = 0.3;
        (s, f, m, p)
    }

    fn problem<'a>(s: &'a Scenario, f: &'a Fading, m: &'a Matching, p: &'a PowerAllocation, w: &'a [f64]) -> TrajectoryProblem<'a> {
        TrajectoryProblem {
            scenario: s,
            fading: f,
            matching: m,
            powers: p,
            weights: w,
            radio: Radio::from_scenario(s),
            anchor: s.uav_initial,
            radius: s.move_radius().unwrap(),
        }
    }

    #[test]
    fn surrogate_rate_tight_and_minorizing() {
        let (s, f, m, p) = scenario_one_relay();
        let w = [1.0];
        let pr = problem(&s, &f, &m, &p, &w);
        let links = pr.relay_links().unwrap();
        let q0 = s.uav_initial;
        let ctx = SurrogateContext::new(&pr, &links, q0);
        let truth = pr.true_objective(&links, q0).unwrap();
        let at = ctx.surrogate_relay_rate(0, q0.x, q0.y).0;
        assert!((at - truth).abs() <= 1e-10 * truth, "{at} vs {truth}");
        let radio = pr.radio;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (x, y) = (q0.x + rng.random_range(-15.0..15.0), q0.y + rng.random_range(-15.0..15.0));
            let (h1, _) = ctx.gain_lower_bound(LinkEnd::UeUav(0), x, y, links[0].scale_ue);
            let (h2, _) = ctx.gain_lower_bound(LinkEnd::UavBs, x, y, links[0].scale_bs);
            let with_bounds = rate_relay(relay_sinrs(0.05, 0.3, h1, h2, radio.sigma2, radio.ici));
            let sur = ctx.surrogate_relay_rate(0, x, y).0;
            assert!(sur <= with_bounds + 1e-10 * with_bounds.abs());
            assert!(with_bounds <= pr.true_objective(&links, Point3::new(x, y, q0.z)).unwrap() * (1.0 + 1e-12));
        }
        let f = |v: &[f64]| {
            let (a, g) = ctx.surrogate_relay_rate(0, v[0], v[1]);
            (a, g.to_vec())
        };
        assert!(grad_check(&f, &[q0.x + 3.0, q0.y - 2.0], 1e-3) < 1e-4);
        // No UE power: the surrogate rate is zero at the expansion point.
        let mut p0 = p.clone();
        p0.p_ue[0][0] = 0.0;
        let f1 = Fading::unit(1, 1);
        let pr0 = problem(&s, &f1, &m, &p0, &w);
        let l0 = pr0.relay_links().unwrap();
        let c0 = SurrogateContext::new(&pr0, &l0, q0);
        assert!(c0.surrogate_relay_rate(0, q0.x, q0.y).0.abs() < 1e-12);
    }

    #[test]
    fn horizontal_moves_toward_better_relay_geometry() {
        let (s, f, m, p) = scenario_one_relay();
        let w = [1.0];
        let pr = problem(&s, &f, &m, &p, &w);
        let mut rows = Vec::new();
        let out = solve_horizontal(&pr, s.uav_initial, &mut rows, 0).unwrap();
        assert!(out.trace.windows(2).all(|t| t[1] >= t[0] - 1e-9));
        assert!(out.trace.last().unwrap() > &out.trace[0]);
        assert!(out.position.dist(&s.uav_initial) <= pr.radius + 1e-6);
        // Toward the UE-BS axis (y = 0).
        assert!(out.position.y.abs() < s.uav_initial.y.abs());
        let to = to_algorithm(&pr, s.uav_initial).unwrap();
        assert!(to.trace.windows(2).all(|t| t[1] >= t[0] - 1e-9));
        assert!(to.position.dist(&s.uav_initial) <= pr.radius + 1e-6);
        assert!(to.position.z >= s.bs_height + ALTITUDE_MARGIN);
        // Restarting from the result changes nothing material.
        let again = to_algorithm(&problem(&s, &f, &m, &p, &w), to.position).unwrap();
        assert!(again.trace.last().unwrap() - to.trace.last().unwrap() <= s.epsilon_to * to.trace.last().unwrap() * 2.0);
    }

    #[test]
    fn degenerate_inputs_keep_position() {
        let (mut s, f, m, p) = scenario_one_relay();
        let w = [1.0];
        // Cellular-only matching: nothing depends on the position.
        let cm = Matching { assign: vec![Some(McPair::new(0, Mode::Cellular))] };
        let out = to_algorithm(&problem(&s, &f, &cm, &p, &w), s.uav_initial).unwrap();
        assert_eq!(out.position, s.uav_initial);
        // Zero movement radius.
        s.d_max = 0.0;
        let out = to_algorithm(&problem(&s, &f, &m, &p, &w), s.uav_initial).unwrap();
        assert_eq!(out.position, s.uav_initial);
    }

    #[test]
    fn random_positions_respect_the_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for seed in 0..10 {
            let (mut s, f, m, p) = scenario_one_relay();
            s.ue_positions = vec![Point3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), 0.0)];
            s.uav_initial = Point3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(100.0..200.0));
            s.d_max = 25.0;
            let w = [1.0];
            let pr = problem(&s, &f, &m, &p, &w);
            let out = to_algorithm(&pr, s.uav_initial).unwrap();
            assert!(out.position.dist(&s.uav_initial) <= s.d_max.min(pr.radius) + 1e-6, "seed {seed}");
            assert!(out.trace.windows(2).all(|t| t[1] >= t[0] - 1e-9));
            let mut buf = Vec::new();
            write_trace(&out.rows, &mut buf).unwrap();
            assert!(String::from_utf8(buf).unwrap().starts_with("stage,pass,iteration,x,y,z,objective,min_qos_margin"));
        }
    }
}
