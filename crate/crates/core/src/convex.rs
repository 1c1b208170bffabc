//! Small concave-maximization engine: projected gradient ascent over a ball,
//! box bounds and linear inequalities, with smooth concave constraints
//! handled by a log barrier.
//!
//! Problems here have between one and a few dozen variables, so the engine
//! favors robustness: every accepted step satisfies a sufficient-ascent test,
//! which makes the (barrier-augmented) objective trace monotone.

use crate::error::{Error, Result};

/// Objective callback: value and gradient at a point.
pub type Objective<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>) + 'a;

/// `a . x <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Smooth concave constraint `g(x) >= -tol`; `g` returns value and gradient.
pub struct Barrier<'a> {
    pub g: Box<Objective<'a>>,
    pub tol: f64,
}

/// Convex feasible region. Box bounds default to unbounded.
#[derive(Default)]
pub struct FeasibleSet<'a> {
    pub ball: Option<Ball>,
    pub halfspaces: Vec<Halfspace>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub barriers: Vec<Barrier<'a>>,
}

impl<'a> FeasibleSet<'a> {
    fn lo(&self, i: usize) -> f64 {
        self.lower.as_ref().map_or(f64::NEG_INFINITY, |l| l[i])
    }

    fn hi(&self, i: usize) -> f64 {
        self.upper.as_ref().map_or(f64::INFINITY, |u| u[i])
    }

    /// Halfspaces with nonnegative coefficients on pairwise disjoint supports
    /// admit an exact projection together with the box.
    fn separable_halfspaces(&self) -> bool {
        let n = self.halfspaces.first().map_or(0, |h| h.a.len());
        let mut used = vec![false; n];
        for h in &self.halfspaces {
            for (i, &c) in h.a.iter().enumerate() {
                if c < 0.0 {
                    return false;
                }
                if c > 0.0 {
                    if used[i] {
                        return false;
                    }
                    used[i] = true;
                }
            }
        }
        true
    }

    /// Euclidean projection onto the ball, box and halfspaces (barriers excluded).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let has_box = self.lower.is_some() || self.upper.is_some();
        match (&self.ball, has_box, self.halfspaces.is_empty()) {
            (None, _, true) => self.clamp(x),
            (Some(b), false, true) => project_ball(x, b),
            (None, _, false) if self.separable_halfspaces() => self.project_box_halfspaces(x),
            _ => self.dykstra(x),
        }
    }

    fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| v.max(self.lo(i)).min(self.hi(i)))
            .collect()
    }

    fn project_box_halfspaces(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.clamp(x);
        for h in &self.halfspaces {
            let support: Vec<usize> = (0..x.len()).filter(|&i| h.a[i] > 0.0).collect();
            let clamp_at = |lambda: f64, i: usize| (x[i] - lambda * h.a[i]).max(self.lo(i)).min(self.hi(i));
            let lhs = |lambda: f64| support.iter().map(|&i| h.a[i] * clamp_at(lambda, i)).sum::<f64>();
            if lhs(0.0) <= h.b {
                continue;
            }
            let mut lo = 0.0;
            let mut hi = 1.0;
            while lhs(hi) > h.b {
                hi *= 2.0;
                if hi > 1e300 {
                    break;
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if lhs(mid) > h.b {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-16 * hi {
                    break;
                }
            }
            for &i in &support {
                out[i] = clamp_at(hi, i);
            }
        }
        out
    }

    /// Dykstra's alternating projections over ball, box and each halfspace.
    fn dykstra(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let has_box = self.lower.is_some() || self.upper.is_some();
        let n_sets = self.ball.is_some() as usize + has_box as usize + self.halfspaces.len();
        let mut incr = vec![vec![0.0; n]; n_sets];
        let mut y = x.to_vec();
        for _ in 0..200_000 {
            let prev = y.clone();
            let prev_incr = incr.clone();
            let mut s = 0;
            let mut step = |y: &mut Vec<f64>, s: usize, proj: &dyn Fn(&[f64]) -> Vec<f64>| {
                let z: Vec<f64> = y.iter().zip(&incr[s]).map(|(a, b)| a + b).collect();
                let p = proj(&z);
                incr[s] = z.iter().zip(&p).map(|(a, b)| a - b).collect();
                *y = p;
            };
            if let Some(b) = &self.ball {
                step(&mut y, s, &|z| project_ball(z, b));
                s += 1;
            }
            if has_box {
                step(&mut y, s, &|z| self.clamp(z));
                s += 1;
            }
            for h in &self.halfspaces {
                step(&mut y, s, &|z| project_halfspace(z, h));
                s += 1;
            }
            let moved = dist(&prev, &y) + incr.iter().zip(&prev_incr).map(|(a, b)| dist(a, b)).sum::<f64>();
            if moved <= 1e-15 * (1.0 + norm(&y)) {
                break;
            }
        }
        y
    }

    /// Largest violation of the ball, box and linear constraints.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut r: f64 = 0.0;
        if let Some(b) = &self.ball {
            r = r.max(dist(x, &b.center) - b.radius);
        }
        for (i, &v) in x.iter().enumerate() {
            r = r.max(self.lo(i) - v).max(v - self.hi(i));
        }
        for h in &self.halfspaces {
            r = r.max(dot(&h.a, x) - h.b);
        }
        r.max(0.0)
    }

    /// Indices of the constraints active at `x` within `tol`, as labels.
    pub fn active(&self, x: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(b) = &self.ball {
            if dist(x, &b.center) >= b.radius - tol {
                out.push("ball".to_string());
            }
        }
        for (i, &v) in x.iter().enumerate() {
            if v <= self.lo(i) + tol {
                out.push(format!("lower[{i}]"));
            }
            if v >= self.hi(i) - tol {
                out.push(format!("upper[{i}]"));
            }
        }
        for (j, h) in self.halfspaces.iter().enumerate() {
            if dot(&h.a, x) >= h.b - tol {
                out.push(format!("halfspace[{j}]"));
            }
        }
        for (j, b) in self.barriers.iter().enumerate() {
            if (b.g)(x).0 <= tol {
                out.push(format!("barrier[{j}]"));
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn project_ball(x: &[f64], b: &Ball) -> Vec<f64> {
    let d = dist(x, &b.center);
    if d <= b.radius {
        return x.to_vec();
    }
    let s = b.radius / d;
    x.iter().zip(&b.center).map(|(v, c)| c + (v - c) * s).collect()
}

fn project_halfspace(x: &[f64], h: &Halfspace) -> Vec<f64> {
    let viol = dot(&h.a, x) - h.b;
    let nn = dot(&h.a, &h.a);
    if viol <= 0.0 || nn == 0.0 {
        return x.to_vec();
    }
    x.iter().zip(&h.a).map(|(v, a)| v - viol / nn * a).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when the gradient-mapping norm drops below this.
    pub grad_tol: f64,
    /// First trial step; later steps follow Barzilai-Borwein estimates.
    pub initial_step: f64,
    /// Barrier weights, applied in order with warm starts.
    pub barrier_schedule: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-8,
            initial_step: 1.0,
            barrier_schedule: vec![1e-2, 1e-4, 1e-6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Final gradient-mapping norm.
    pub grad_norm: f64,
    pub active: Vec<String>,
    /// Barrier-augmented objective after each accepted step, per barrier phase.
    pub trace: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Objective without barrier terms.
    pub value: f64,
    pub diagnostics: Diagnostics,
}

/// Maximizes a concave `objective` over `set`, starting from the projection of `x0`.
pub fn maximize_concave(objective: &Objective<'_>, set: &FeasibleSet<'_>, x0: &[f64], opts: &SolverOptions) -> Result<Solution> {
    let mut x = set.project(x0);
    let barrier_ok = |x: &[f64]| set.barriers.iter().all(|b| (b.g)(x).0 + b.tol > 0.0);
    if !barrier_ok(&x) {
        return Err(Error::Infeasible("start point violates a smooth constraint".into()));
    }
    let schedule: Vec<f64> = if set.barriers.is_empty() {
        vec![0.0]
    } else {
        opts.barrier_schedule.clone()
    };
    let mut diag = Diagnostics::default();
    for &mu in &schedule {
        let eval = |x: &[f64]| -> (f64, Vec<f64>) {
            let (mut v, mut g) = objective(x);
            for b in &set.barriers {
                let (c, dc) = (b.g)(x);
                let s = c + b.tol;
                v += mu * s.ln();
                for (gi, di) in g.iter_mut().zip(&dc) {
                    *gi += mu * di / s;
                }
            }
            (v, g)
        };
        let mut trace = Vec::new();
        let (mut fx, mut gx) = eval(&x);
        trace.push(fx);
        let mut step = opts.initial_step;
        let mut it = 0;
        loop {
            if it >= opts.max_iter {
                log::debug!("projected gradient hit its iteration cap ({})", opts.max_iter);
                break;
            }
            it += 1;
            let mut t = step;
            let mut accepted = None;
            while t > 1e-30 {
                let y = set.project(&x.iter().zip(&gx).map(|(a, g)| a + t * g).collect::<Vec<_>>());
                if !barrier_ok(&y) {
                    t *= 0.5;
                    continue;
                }
                let (fy, gy) = eval(&y);
                let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
                let dd = dot(&d, &d);
                if fy.is_finite() && fy >= fx + dot(&gx, &d) - dd / (2.0 * t) {
                    accepted = Some((y, fy, gy, d, t));
                    break;
                }
                t *= 0.5;
            }
            let Some((y, fy, gy, d, t)) = accepted else {
                diag.grad_norm = 0.0;
                break;
            };
            let gm = norm(&d) / t;
            diag.grad_norm = gm;
            let gain = fy - fx;
            let r: Vec<f64> = gy.iter().zip(&gx).map(|(a, b)| a - b).collect();
            let sr = dot(&d, &r);
            step = if sr < 0.0 { (dot(&d, &d) / -sr).clamp(1e-20, 1e20) } else { (t * 2.0).min(1e20) };
            x = y;
            fx = fy;
            gx = gy;
            trace.push(fx);
            if gm < opts.grad_tol || gain.abs() <= 1e-15 * fx.abs().max(1e-300) {
                break;
            }
        }
        diag.iterations += it;
        diag.trace.push(trace);
    }
    diag.active = set.active(&x, 1e-9);
    let value = objective(&x).0;
    Ok(Solution { x, value, diagnostics: diag })
}

/// Largest coordinate-wise relative gap between the analytic gradient and a
/// central difference with step `step`.
pub fn grad_check(objective: &Objective<'_>, point: &[f64], step: f64) -> f64 {
    let (_, g) = objective(point);
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut p = point.to_vec();
        p[i] = point[i] + step;
        let fp = objective(&p).0;
        p[i] = point[i] - step;
        let fm = objective(&p).0;
        let fd = (fp - fm) / (2.0 * step);
        let den = g[i].abs().max(fd.abs()).max(1e-6 * scale).max(1e-300);
        worst = worst.max((g[i] - fd).abs() / den);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn solve(f: &Objective<'_>, set: &FeasibleSet<'_>, x0: &[f64]) -> Solution {
        maximize_concave(f, set, x0, &SolverOptions::default()).unwrap()
    }

    fn monotone(d: &Diagnostics) -> bool {
        d.trace.iter().all(|t| t.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0)))
    }

    #[test]
    fn interval_quadratic() {
        let f = |x: &[f64]| (-(x[0] - 1.0).powi(2), vec![-2.0 * (x[0] - 1.0)]);
        let set = FeasibleSet { lower: Some(vec![0.0]), upper: Some(vec![3.0]), ..Default::default() };
        let s = solve(&f, &set, &[2.5]);
        assert!((s.x[0] - 1.0).abs() < 1e-8);
        assert!(monotone(&s.diagnostics));
    }

    #[test]
    fn ball_nearest_point() {
        let f = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1]), vec![-2.0 * x[0], -2.0 * x[1]]);
        let set = FeasibleSet { ball: Some(Ball { center: vec![2.0, 0.0], radius: 1.0 }), ..Default::default() };
        let s = solve(&f, &set, &[2.0, 0.5]);
        assert!((s.x[0] - 1.0).abs() < 1e-6 && s.x[1].abs() < 1e-6, "{:?}", s.x);
        // Grid oracle over the ball.
        let mut best = f64::NEG_INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let p = [1.0 + i as f64 / 100.0, -1.0 + j as f64 / 100.0];
                if (p[0] - 2.0).hypot(p[1]) <= 1.0 {
                    best = best.max(f(&p).0);
                }
            }
        }
        assert!(s.value >= best - 1e-9);
    }

    #[test]
    fn linear_objective_hits_support_point() {
        let f = |_: &[f64]| (0.0, vec![3.0, 4.0]);
        let f = |x: &[f64]| (3.0 * x[0] + 4.0 * x[1], f(x).1);
        let set = FeasibleSet { ball: Some(Ball { center: vec![0.0, 0.0], radius: 2.0 }), ..Default::default() };
        let s = solve(&f, &set, &[0.0, 0.0]);
        assert!((s.x[0] - 1.2).abs() < 1e-9 && (s.x[1] - 1.6).abs() < 1e-9);
        assert_eq!(s.diagnostics.active, vec!["ball".to_string()]);
    }

    #[test]
    fn barrier_keeps_smooth_constraint() {
        // max x + y subject to 1 - x^2 - y^2 >= 0, x, y in [-5, 5].
        let f = |x: &[f64]| (x[0] + x[1], vec![1.0, 1.0]);
        let set = FeasibleSet {
            lower: Some(vec![-5.0; 2]),
            upper: Some(vec![5.0; 2]),
            barriers: vec![Barrier {
                g: Box::new(|x: &[f64]| (1.0 - x[0] * x[0] - x[1] * x[1], vec![-2.0 * x[0], -2.0 * x[1]])),
                tol: 0.0,
            }],
            ..Default::default()
        };
        let s = solve(&f, &set, &[0.0, 0.0]);
        let r = 0.5f64.sqrt();
        assert!((s.x[0] - r).abs() < 1e-4 && (s.x[1] - r).abs() < 1e-4, "{:?}", s.x);
        assert!(1.0 - s.x[0].powi(2) - s.x[1].powi(2) > 0.0);
        assert!(monotone(&s.diagnostics));
        assert_eq!(s.diagnostics.trace.len(), 3);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let f = |x: &[f64]| (x[0], vec![1.0]);
        let set = FeasibleSet {
            lower: Some(vec![0.0]),
            upper: Some(vec![1.0]),
            barriers: vec![Barrier { g: Box::new(|x: &[f64]| (x[0] - 5.0, vec![1.0])), tol: 0.0 }],
            ..Default::default()
        };
        assert!(matches!(maximize_concave(&f, &set, &[0.5], &SolverOptions::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn budget_split_matches_water_level() {
        // max sum ln(x_i) s.t. x_0 + x_1 + x_2 <= 3, x_i >= 0.1: optimum x = 1.
        let f = |x: &[f64]| (x.iter().map(|v| v.ln()).sum(), x.iter().map(|v| 1.0 / v).collect());
        let set = FeasibleSet {
            lower: Some(vec![0.1; 3]),
            halfspaces: vec![Halfspace { a: vec![1.0; 3], b: 3.0 }],
            ..Default::default()
        };
        let s = solve(&f, &set, &[0.2, 0.5, 2.0]);
        for v in &s.x {
            assert!((v - 1.0).abs() < 1e-6, "{:?}", s.x);
        }
        assert!(set.residual(&s.x) <= 1e-9);
    }

    #[test]
    fn grad_check_flags_corruption() {
        let f = |x: &[f64]| (x[0] * x[0] + 3.0 * x[0] * x[1], vec![2.0 * x[0] + 3.0 * x[1], 3.0 * x[0]]);
        assert!(grad_check(&f, &[0.7, -1.3], 1e-5) < 1e-8);
        let bad = |x: &[f64]| (f(x).0, vec![2.0 * x[0] + 3.0 * x[1], 3.3 * x[0]]);
        assert!(grad_check(&bad, &[0.7, -1.3], 1e-5) > 1e-2);
    }

    fn mixed_set(lo: Vec<f64>, hi: Vec<f64>, caps: &[(Vec<f64>, f64)]) -> FeasibleSet<'static> {
        FeasibleSet {
            lower: Some(lo),
            upper: Some(hi),
            halfspaces: caps.iter().map(|(a, b)| Halfspace { a: a.clone(), b: *b }).collect(),
            ..Default::default()
        }
    }

    proptest! {
        #[test]
        fn exact_projection_agrees_with_dykstra(
            x in prop::collection::vec(-2.0f64..3.0, 4),
            lo in prop::collection::vec(0.0f64..0.1, 4),
            b0 in 0.5f64..2.0, b1 in 0.5f64..2.0,
        ) {
            let set = mixed_set(lo, vec![1.5; 4], &[(vec![1.0, 1.0, 0.0, 0.0], b0), (vec![0.0, 0.0, 1.0, 2.0], b1)]);
            let p = set.project(&x);
            let q = set.dykstra(&x);
            prop_assert!(dist(&p, &q) < 1e-6, "{:?} vs {:?}", p, q);
            prop_assert!(set.residual(&p) <= 1e-9);
            let pp = set.project(&p);
            prop_assert!(dist(&p, &pp) < 1e-12);
        }

        #[test]
        fn ball_projection_idempotent(x in prop::collection::vec(-10.0f64..10.0, 2), r in 0.1f64..5.0) {
            let set = FeasibleSet { ball: Some(Ball { center: vec![1.0, -1.0], radius: r }), ..Default::default() };
            let p = set.project(&x);
            prop_assert!(set.residual(&p) <= 1e-12);
            prop_assert!(dist(&p, &set.project(&p)) < 1e-12);
        }
    }
}
