//! Mode selection and subchannel allocation as a many-to-one matching between
//! subchannels and (UE, mode) pairs.
//!
//! A subchannel's utility is the weighted rate its pair gets from it; a pair's
//! utility is the sum over its subchannels. A swap exchanges the matches of
//! two subchannels, carrying the transmit powers along with the pairs, so
//! every pair keeps its subchannel count and power budget. A swap is approved
//! when none of the two subchannels and two pairs involved loses, at least one
//! pair strictly gains, and QoS still holds. [`msma`] applies approved swaps
//! until none is left (pairwise stability).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelGains;
use crate::error::{Error, Result};
use crate::link_rate::{link_rate, link_state, qos_feasible, LinkState, Mode, PowerAllocation, Radio, QOS_RTOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct McPair {
    pub ue: usize,
    pub mode: Mode,
}

impl McPair {
    pub fn new(ue: usize, mode: Mode) -> Self {
        Self { ue, mode }
    }
}

/// `assign[k]` is the pair using subchannel `k`; `None` is the vacant match.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matching {
    pub assign: Vec<Option<McPair>>,
}

impl Matching {
    pub fn vacant(n_subchannels: usize) -> Self {
        Self {
            assign: vec![None; n_subchannels],
        }
    }

    /// Mode of each UE, `None` for UEs without subchannels.
    pub fn modes(&self, n_ues: usize) -> Vec<Option<Mode>> {
        let mut out = vec![None; n_ues];
        for p in self.assign.iter().flatten() {
            out[p.ue].get_or_insert(p.mode);
        }
        out
    }

    /// `beta[n] = 1` for relay-mode UEs.
    pub fn beta(&self, n_ues: usize) -> Vec<u8> {
        self.modes(n_ues)
            .into_iter()
            .map(|m| (m == Some(Mode::Relay)) as u8)
            .collect()
    }

    /// `alloc[n][k]`: subchannel `k` assigned to UE `n`.
    pub fn allocation(&self, n_ues: usize) -> Vec<Vec<bool>> {
        let mut a = vec![vec![false; self.assign.len()]; n_ues];
        for (k, p) in self.assign.iter().enumerate() {
            if let Some(p) = p {
                a[p.ue][k] = true;
            }
        }
        a
    }

    /// No UE uses both modes.
    pub fn is_mode_consistent(&self, n_ues: usize) -> bool {
        let mut seen: Vec<Option<Mode>> = vec![None; n_ues];
        self.assign.iter().flatten().all(|p| match seen[p.ue] {
            None => {
                seen[p.ue] = Some(p.mode);
                true
            }
            Some(m) => m == p.mode,
        })
    }

    pub fn subchannels_of(&self, ue: usize) -> impl Iterator<Item = usize> + '_ {
        self.assign
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.is_some_and(|p| p.ue == ue))
            .map(|(k, _)| k)
    }

    pub fn as_assignment(&self) -> Vec<Option<(usize, Mode)>> {
        self.assign.iter().map(|p| p.map(|p| (p.ue, p.mode))).collect()
    }

    pub fn n_assigned(&self) -> usize {
        self.assign.iter().flatten().count()
    }
}

/// Everything the matching game reads: gains, weights, radio constants, caps.
#[derive(Debug, Clone, Copy)]
pub struct MatchContext<'a> {
    pub gains: &'a ChannelGains,
    pub radio: Radio,
    pub weights: &'a [f64],
    pub p_ue_max: f64,
    pub p_uav_max: f64,
    /// Modes pairs may use; the cellular-only baseline passes `[Cellular]`.
    pub modes: &'a [Mode],
}

impl MatchContext<'_> {
    pub fn n_ues(&self) -> usize {
        self.weights.len()
    }

    pub fn n_subchannels(&self) -> usize {
        self.gains.h_uav_bs.len()
    }

    fn pairs(&self) -> Vec<McPair> {
        (0..self.n_ues())
            .flat_map(|n| self.modes.iter().map(move |&m| McPair::new(n, m)))
            .collect()
    }
}

/// Weighted rate subchannel `k` provides to `pair` under `powers`.
pub fn subchannel_utility(k: usize, pair: McPair, powers: &PowerAllocation, ctx: &MatchContext<'_>) -> f64 {
    ctx.weights[pair.ue] * link_rate(&link_state(pair.ue, k, pair.mode, powers, ctx.gains), &ctx.radio)
}

/// Utility of `pair` over a set of subchannels.
pub fn mc_pair_utility(pair: McPair, subchannels: &[usize], powers: &PowerAllocation, ctx: &MatchContext<'_>) -> f64 {
    subchannels.iter().map(|&k| subchannel_utility(k, pair, powers, ctx)).sum()
}

/// Sum of subchannel utilities: the weighted sum rate of the matching.
pub fn system_utility(m: &Matching, powers: &PowerAllocation, ctx: &MatchContext<'_>) -> f64 {
    m.assign
        .iter()
        .enumerate()
        .filter_map(|(k, p)| p.map(|p| subchannel_utility(k, p, powers, ctx)))
        .sum()
}

/// Each UE's cap split evenly over its subchannels; the UAV's cap split
/// evenly over relayed subchannels.
pub fn equal_split(m: &Matching, ctx: &MatchContext<'_>) -> PowerAllocation {
    let n = ctx.n_ues();
    let k = ctx.n_subchannels();
    let mut counts = vec![0usize; n];
    let mut relayed = 0usize;
    for p in m.assign.iter().flatten() {
        counts[p.ue] += 1;
        relayed += (p.mode == Mode::Relay) as usize;
    }
    let mut out = PowerAllocation::zeros(n, k);
    for (kk, p) in m.assign.iter().enumerate() {
        if let Some(p) = p {
            out.p_ue[p.ue][kk] = ctx.p_ue_max / counts[p.ue] as f64;
            if p.mode == Mode::Relay {
                out.p_uav[kk] = ctx.p_uav_max / relayed as f64;
            }
        }
    }
    out
}

fn link_ok(k: usize, pair: McPair, powers: &PowerAllocation, ctx: &MatchContext<'_>) -> bool {
    qos_feasible(&link_state(pair.ue, k, pair.mode, powers, ctx.gains), &ctx.radio)
}

/// Power caps (with relative slack), QoS on every occupied subchannel, mode
/// consistency and allowed modes.
pub fn is_feasible(m: &Matching, powers: &PowerAllocation, ctx: &MatchContext<'_>) -> bool {
    let n = ctx.n_ues();
    if !m.is_mode_consistent(n) || m.assign.iter().flatten().any(|p| !ctx.modes.contains(&p.mode) || p.ue >= n) {
        return false;
    }
    let cap_ok = |used: f64, cap: f64| used <= cap * (1.0 + QOS_RTOL);
    for ue in 0..n {
        let used: f64 = m.subchannels_of(ue).map(|k| powers.p_ue[ue][k]).sum();
        if !cap_ok(used, ctx.p_ue_max) {
            return false;
        }
    }
    let uav: f64 = m
        .assign
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_some_and(|p| p.mode == Mode::Relay))
        .map(|(k, _)| powers.p_uav[k])
        .sum();
    if !cap_ok(uav, ctx.p_uav_max) {
        return false;
    }
    m.assign
        .iter()
        .enumerate()
        .all(|(k, p)| p.is_none_or(|p| link_ok(k, p, powers, ctx)))
}

/// Single-subchannel QoS at full power, used to screen modes.
fn full_power_link(n: usize, k: usize, mode: Mode, ctx: &MatchContext<'_>) -> LinkState {
    let g = ctx.gains;
    match mode {
        Mode::Cellular => LinkState::Cellular {
            p: ctx.p_ue_max,
            h: g.h_ue_bs[n][k],
        },
        Mode::Relay => LinkState::Relay {
            p_ue: ctx.p_ue_max,
            p_uav: ctx.p_uav_max,
            h_ue_uav: g.h_ue_uav[n][k],
            h_uav_bs: g.h_uav_bs[k],
        },
    }
}

/// Mode each UE would prefer: the allowed mode with the larger full-power
/// rate sum among those feasible on at least one subchannel (ties go to
/// cellular); `None` if no mode is ever feasible.
pub fn screen_modes(ctx: &MatchContext<'_>) -> Vec<Option<Mode>> {
    (0..ctx.n_ues())
        .map(|n| {
            let mut best: Option<(Mode, f64)> = None;
            for &mode in Mode::BOTH.iter().filter(|m| ctx.modes.contains(m)) {
                let links: Vec<LinkState> = (0..ctx.n_subchannels()).map(|k| full_power_link(n, k, mode, ctx)).collect();
                if !links.iter().any(|l| qos_feasible(l, &ctx.radio)) {
                    continue;
                }
                let sum: f64 = links.iter().map(|l| link_rate(l, &ctx.radio)).sum();
                if best.is_none_or(|(_, b)| sum > b) {
                    best = Some((mode, sum));
                }
            }
            best.map(|(m, _)| m)
        })
        .collect()
}

/// Greedy feasible starting matching with equal-split powers.
///
/// Subchannels are filled in ascending order; each goes to the screened pair
/// with the highest utility on it under the tentative equal split, provided
/// the whole matching stays QoS-feasible. Ties go to the lowest UE index.
pub fn init_matching(ctx: &MatchContext<'_>) -> (Matching, PowerAllocation) {
    let screened = screen_modes(ctx);
    let mut m = Matching::vacant(ctx.n_subchannels());
    for k in 0..ctx.n_subchannels() {
        let mut best: Option<(McPair, f64)> = None;
        for (n, mode) in screened.iter().enumerate() {
            let Some(mode) = *mode else { continue };
            let pair = McPair::new(n, mode);
            m.assign[k] = Some(pair);
            let p = equal_split(&m, ctx);
            if is_feasible(&m, &p, ctx) {
                let u = subchannel_utility(k, pair, &p, ctx);
                if best.is_none_or(|(_, b)| u > b) {
                    best = Some((pair, u));
                }
            }
            m.assign[k] = None;
        }
        m.assign[k] = best.map(|(p, _)| p);
    }
    let p = equal_split(&m, ctx);
    (m, p)
}

/// Greedy start that scores candidates by their effect on the whole system.
///
/// Subchannels are visited in ascending order. Each one goes to the allowed
/// pair that raises the equal-split system utility the most, or stays vacant
/// when no pair raises it. Unlike [`init_matching`], this accounts for the
/// rate a UE loses on its other subchannels when its power is split further.
pub fn greedy_marginal(ctx: &MatchContext<'_>) -> (Matching, PowerAllocation) {
    let mut m = Matching::vacant(ctx.n_subchannels());
    let mut current = 0.0;
    for k in 0..ctx.n_subchannels() {
        let mut best: Option<(McPair, f64)> = None;
        for n in 0..ctx.n_ues() {
            for &mode in ctx.modes {
                let pair = McPair::new(n, mode);
                m.assign[k] = Some(pair);
                let p = equal_split(&m, ctx);
                if is_feasible(&m, &p, ctx) {
                    let u = system_utility(&m, &p, ctx);
                    if u > current && best.is_none_or(|(_, b)| u > b) {
                        best = Some((pair, u));
                    }
                }
                m.assign[k] = None;
            }
        }
        if let Some((pair, u)) = best {
            m.assign[k] = Some(pair);
            current = u;
        }
    }
    let p = equal_split(&m, ctx);
    (m, p)
}

/// Matching and powers after exchanging the matches of `k1` and `k2`.
fn swapped(m: &Matching, powers: &PowerAllocation, k1: usize, k2: usize) -> (Matching, PowerAllocation) {
    let mut m2 = m.clone();
    m2.assign.swap(k1, k2);
    let mut p2 = powers.clone();
    for p in [m.assign[k1], m.assign[k2]].into_iter().flatten() {
        let row = &mut p2.p_ue[p.ue];
        row.swap(k1, k2);
    }
    p2.p_uav.swap(k1, k2);
    (m2, p2)
}

/// An approved swap and the system-utility gain it brings.
#[derive(Debug, Clone, PartialEq)]
pub struct ApprovedSwap {
    pub matching: Matching,
    pub powers: PowerAllocation,
    pub gain: f64,
}

/// Whether exchanging the matches of `k1` and `k2` is approved. Returns the
/// swapped matching and powers when it is.
pub fn swap_blocking(
    m: &Matching,
    powers: &PowerAllocation,
    k1: usize,
    k2: usize,
    ctx: &MatchContext<'_>,
) -> Option<ApprovedSwap> {
    let (a, b) = (m.assign[k1], m.assign[k2]);
    if k1 == k2 || a == b {
        return None;
    }
    let (m2, p2) = swapped(m, powers, k1, k2);
    let u = |k: usize, pair: Option<McPair>, p: &PowerAllocation| pair.map_or(0.0, |pr| subchannel_utility(k, pr, p, ctx));
    // Subchannel utilities before and after.
    let s1_old = u(k1, a, powers);
    let s2_old = u(k2, b, powers);
    let s1_new = u(k1, b, &p2);
    let s2_new = u(k2, a, &p2);
    if s1_new < s1_old || s2_new < s2_old {
        return None;
    }
    // Pair utilities change only through the swapped subchannels.
    let da = a.map(|_| s2_new - s1_old);
    let db = b.map(|_| s1_new - s2_old);
    if da.is_some_and(|d| d < 0.0) || db.is_some_and(|d| d < 0.0) {
        return None;
    }
    if !(da.is_some_and(|d| d > 0.0) || db.is_some_and(|d| d > 0.0)) {
        return None;
    }
    let qos = [(k1, b), (k2, a)]
        .into_iter()
        .all(|(k, pair)| pair.is_none_or(|p| link_ok(k, p, &p2, ctx)));
    if !qos || !m2.is_mode_consistent(ctx.n_ues()) {
        return None;
    }
    Some(ApprovedSwap {
        matching: m2,
        powers: p2,
        gain: (s1_new + s2_new) - (s1_old + s2_old),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsmaOutcome {
    pub matching: Matching,
    pub powers: PowerAllocation,
    pub swaps: usize,
    /// System-utility increase of every executed swap, in order.
    pub swap_gains: Vec<f64>,
    /// Candidate swaps evaluated in each round.
    pub examined_per_round: Vec<usize>,
}

/// Swap matching until no approved swap remains.
///
/// Subchannels are scanned in ascending order and, for each, partners in
/// ascending order; the first approved swap is executed. A given swap
/// (subchannels and the pairs they hold) runs at most once per round.
pub fn msma(init: Matching, powers: PowerAllocation, ctx: &MatchContext<'_>) -> MsmaOutcome {
    let k_total = ctx.n_subchannels();
    let mut m = init;
    let mut p = powers;
    let mut out = MsmaOutcome {
        matching: Matching::vacant(0),
        powers: PowerAllocation::zeros(0, 0),
        swaps: 0,
        swap_gains: Vec::new(),
        examined_per_round: Vec::new(),
    };
    loop {
        let mut executed: HashSet<(usize, usize, Option<McPair>, Option<McPair>)> = HashSet::new();
        let mut examined = 0usize;
        let mut swaps_this_round = 0usize;
        for k in 0..k_total {
            loop {
                let mut found = None;
                for k2 in (0..k_total).filter(|&k2| k2 != k) {
                    let (a, b) = (m.assign[k], m.assign[k2]);
                    if a == b {
                        continue;
                    }
                    if executed.contains(&(k, k2, a, b)) {
                        continue;
                    }
                    examined += 1;
                    if let Some(sw) = swap_blocking(&m, &p, k, k2, ctx) {
                        found = Some((k2, a, b, sw));
                        break;
                    }
                }
                match found {
                    Some((k2, a, b, sw)) => {
                        executed.insert((k, k2, a, b));
                        executed.insert((k2, k, b, a));
                        out.swap_gains.push(sw.gain);
                        m = sw.matching;
                        p = sw.powers;
                        swaps_this_round += 1;
                    }
                    None => break,
                }
            }
        }
        out.examined_per_round.push(examined);
        out.swaps += swaps_this_round;
        if swaps_this_round == 0 {
            break;
        }
    }
    out.matching = m;
    out.powers = p;
    out
}

/// Whether no pair of subchannels is swap-blocking.
pub fn is_pairwise_stable(m: &Matching, powers: &PowerAllocation, ctx: &MatchContext<'_>) -> bool {
    let k = ctx.n_subchannels();
    (0..k).all(|k1| (k1 + 1..k).all(|k2| swap_blocking(m, powers, k1, k2, ctx).is_none() && swap_blocking(m, powers, k2, k1, ctx).is_none()))
}

/// Every mode-consistent, QoS-feasible matching (equal-split powers) that
/// admits no swap-blocking pair. Limited to `(pairs + 1)^K <= 1e5`.
pub fn brute_force_stable(ctx: &MatchContext<'_>) -> Result<Vec<Matching>> {
    let pairs = ctx.pairs();
    let base = pairs.len() as u64 + 1;
    let k = ctx.n_subchannels();
    let total = (0..k).try_fold(1u64, |acc, _| acc.checked_mul(base)).unwrap_or(u64::MAX);
    if total > 100_000 {
        return Err(Error::InstanceTooLarge(total));
    }
    let mut out = Vec::new();
    for code in 0..total {
        let mut c = code;
        let assign: Vec<Option<McPair>> = (0..k)
            .map(|_| {
                let d = (c % base) as usize;
                c /= base;
                (d > 0).then(|| pairs[d - 1])
            })
            .collect();
        let m = Matching { assign };
        if !m.is_mode_consistent(ctx.n_ues()) {
            continue;
        }
        let p = equal_split(&m, ctx);
        if is_feasible(&m, &p, ctx) && is_pairwise_stable(&m, &p, ctx) {
            out.push(m);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link_rate::Thresholds;
    use crate::units::dbm_to_watts;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const BOTH: &[Mode] = &Mode::BOTH;

    fn radio() -> Radio {
        Radio {
            sigma2: dbm_to_watts(-96.0),
            ici: dbm_to_watts(-110.0),
            th: Thresholds { direct: 300.0, ue_uav: 300.0, uav_bs: 300.0 },
        }
    }

    /// Random gains spanning the threshold region for caps 0.05 W / 0.3 W.
    fn random_gains(seed: u64, n: usize, k: usize) -> ChannelGains {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = |lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
        ChannelGains {
            h_ue_bs: (0..n).map(|_| (0..k).map(|_| g(-9.5, -7.0)).collect()).collect(),
            h_ue_uav: (0..n).map(|_| (0..k).map(|_| g(-9.0, -7.0)).collect()).collect(),
            h_uav_bs: (0..k).map(|_| g(-9.5, -8.0)).collect(),
        }
    }

    fn ctx<'a>(g: &'a ChannelGains, w: &'a [f64], modes: &'a [Mode]) -> MatchContext<'a> {
        MatchContext { gains: g, radio: radio(), weights: w, p_ue_max: 0.05, p_uav_max: 0.3, modes }
    }

    #[test]
    fn projections() {
        let m = Matching {
            assign: vec![Some(McPair::new(1, Mode::Relay)), None, Some(McPair::new(0, Mode::Cellular)), Some(McPair::new(1, Mode::Relay))],
        };
        assert_eq!(m.beta(3), vec![0, 1, 0]);
        assert_eq!(m.modes(3), vec![Some(Mode::Cellular), Some(Mode::Relay), None]);
        assert_eq!(m.allocation(3)[1], vec![true, false, false, true]);
        assert!(m.is_mode_consistent(3));
        assert_eq!(m.subchannels_of(1).collect::<Vec<_>>(), vec![0, 3]);
        let mut bad = m.clone();
        bad.assign[1] = Some(McPair::new(1, Mode::Cellular));
        assert!(!bad.is_mode_consistent(3));
    }

    #[test]
    fn utilities_compose() {
        let g = random_gains(1, 2, 3);
        let w = [0.0, 2.5];
        let c = ctx(&g, &w, BOTH);
        let p = PowerAllocation { p_ue: vec![vec![0.01; 3]; 2], p_uav: vec![0.1; 3] };
        assert_eq!(subchannel_utility(0, McPair::new(0, Mode::Relay), &p, &c), 0.0);
        let cell = subchannel_utility(1, McPair::new(1, Mode::Cellular), &p, &c);
        let r = radio();
        let expected = 2.5 * crate::link_rate::rate_cellular(0.01, g.h_ue_bs[1][1], r.sigma2, r.ici);
        assert_eq!(cell, expected);
        let pair = McPair::new(1, Mode::Relay);
        assert_eq!(mc_pair_utility(pair, &[], &p, &c), 0.0);
        assert_eq!(mc_pair_utility(pair, &[2], &p, &c), subchannel_utility(2, pair, &p, &c));
        let whole = mc_pair_utility(pair, &[0, 1, 2], &p, &c);
        let parts = mc_pair_utility(pair, &[0, 2], &p, &c) + mc_pair_utility(pair, &[1], &p, &c);
        assert!((whole - parts).abs() < 1e-12);
    }

    #[test]
    fn nothing_feasible_gives_vacant() {
        let g = ChannelGains { h_ue_bs: vec![vec![1e-16; 3]; 2], h_ue_uav: vec![vec![1e-16; 3]; 2], h_uav_bs: vec![1e-16; 3] };
        let w = [10.0, 10.0];
        let c = ctx(&g, &w, BOTH);
        let (m, _) = init_matching(&c);
        assert_eq!(m, Matching::vacant(3));
    }

    #[test]
    fn single_link_prefers_better_mode() {
        let r = radio();
        // Both modes feasible; the relay path is much stronger.
        let g = ChannelGains { h_ue_bs: vec![vec![2e-9]], h_ue_uav: vec![vec![1e-4]], h_uav_bs: vec![1e-5] };
        let w = [1.0];
        let c = ctx(&g, &w, BOTH);
        let rel = link_rate(&full_power_link(0, 0, Mode::Relay, &c), &r);
        let cel = link_rate(&full_power_link(0, 0, Mode::Cellular, &c), &r);
        assert!(rel > cel);
        assert!(qos_feasible(&full_power_link(0, 0, Mode::Cellular, &c), &r));
        let (m, _) = init_matching(&c);
        assert_eq!(m.assign, vec![Some(McPair::new(0, Mode::Relay))]);
        // And the other direction.
        let g = ChannelGains { h_ue_bs: vec![vec![1e-7]], h_ue_uav: vec![vec![1e-8]], h_uav_bs: vec![1e-8] };
        let c = ctx(&g, &w, BOTH);
        assert_eq!(init_matching(&c).0.assign, vec![Some(McPair::new(0, Mode::Cellular))]);
    }

    #[test]
    fn greedy_output_is_feasible() {
        for seed in 0..30 {
            let g = random_gains(seed, 2, 2);
            let w = [1.0, 3.0];
            let c = ctx(&g, &w, BOTH);
            let (m, p) = init_matching(&c);
            assert!(is_feasible(&m, &p, &c) && m.is_mode_consistent(2));
        }
    }

    #[test]
    fn same_pair_never_blocks() {
        let g = random_gains(4, 2, 2);
        let w = [1.0, 1.0];
        let c = ctx(&g, &w, BOTH);
        let m = Matching { assign: vec![Some(McPair::new(0, Mode::Cellular)); 2] };
        let p = equal_split(&m, &c);
        assert!(swap_blocking(&m, &p, 0, 1, &c).is_none());
    }

    #[test]
    fn crossing_assignment_blocks() {
        // UE 0 is strong on subchannel 1, UE 1 on subchannel 0; both sit on the wrong one.
        let g = ChannelGains {
            h_ue_bs: vec![vec![2e-8, 8e-8], vec![8e-8, 2e-8]],
            h_ue_uav: vec![vec![1e-12; 2]; 2],
            h_uav_bs: vec![1e-12; 2],
        };
        let w = [1.0, 1.0];
        let c = ctx(&g, &w, BOTH);
        let m = Matching { assign: vec![Some(McPair::new(0, Mode::Cellular)), Some(McPair::new(1, Mode::Cellular))] };
        let p = equal_split(&m, &c);
        let sw = swap_blocking(&m, &p, 0, 1, &c).expect("crossing should block");
        assert!(sw.gain > 0.0);
        // Enumeration oracle: of the two one-to-one matchings the crossed one has both pairs better off.
        let before = [subchannel_utility(0, McPair::new(0, Mode::Cellular), &p, &c), subchannel_utility(1, McPair::new(1, Mode::Cellular), &p, &c)];
        let after = [subchannel_utility(1, McPair::new(0, Mode::Cellular), &sw.powers, &c), subchannel_utility(0, McPair::new(1, Mode::Cellular), &sw.powers, &c)];
        assert!(after[0] > before[0] && after[1] > before[1]);
        let out = msma(m, p, &c);
        assert_eq!(out.swaps, 1);
        assert!(is_pairwise_stable(&out.matching, &out.powers, &c));
        let again = msma(out.matching.clone(), out.powers.clone(), &c);
        assert_eq!(again.swaps, 0);
        assert_eq!(again.matching, out.matching);
    }

    #[test]
    fn brute_force_size_limits() {
        let g = random_gains(2, 1, 1);
        let w = [1.0];
        let c = ctx(&g, &w, BOTH);
        let all = brute_force_stable(&c).unwrap();
        assert!(all.len() <= 3);
        let big = random_gains(2, 5, 10);
        let w5 = [1.0; 5];
        assert!(matches!(brute_force_stable(&ctx(&big, &w5, BOTH)), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn msma_lands_in_brute_force_set() {
        let mut nonempty = 0;
        for seed in 0..40 {
            let g = random_gains(100 + seed, 2, 2);
            let w = [1.0, 2.0];
            let c = ctx(&g, &w, BOTH);
            let (m0, p0) = init_matching(&c);
            let out = msma(m0, p0, &c);
            let stable = brute_force_stable(&c).unwrap();
            nonempty += !stable.is_empty() as usize;
            assert!(stable.contains(&out.matching), "seed {seed}: {:?} not in {:?}", out.matching, stable);
            assert!(out.swap_gains.iter().all(|&d| d > 0.0));
        }
        assert_eq!(nonempty, 40);
    }

    #[test]
    fn cellular_only_context_never_relays() {
        for seed in 0..10 {
            let g = random_gains(seed, 3, 6);
            let w = [1.0; 3];
            let c = ctx(&g, &w, &[Mode::Cellular]);
            let (m, p) = init_matching(&c);
            let out = msma(m, p, &c);
            assert!(out.matching.assign.iter().flatten().all(|p| p.mode == Mode::Cellular));
        }
    }
}
