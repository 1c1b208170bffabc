//! Rotary-wing propulsion power and the per-slot energy budget.
//!
//! The exact flying power is not convex in speed because of the induced-power
//! term. Optimization uses the upper bound that freezes that term at its hover
//! value; the exact model is kept for reporting.

use crate::error::{Error, Result};
use crate::scenario::PropulsionParams;

/// Hover components of the power model, W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropulsionDerived {
    /// Blade profile power.
    pub p0: f64,
    /// Induced power.
    pub pi: f64,
}

impl PropulsionDerived {
    pub fn new(p: &PropulsionParams) -> Self {
        Self {
            p0: p.delta / 8.0 * p.rho * p.s * p.disc_area * p.omega.powi(3) * p.rotor_radius.powi(3),
            pi: (1.0 + p.k_factor) * p.weight.powf(1.5) / (2.0 * p.rho * p.disc_area).sqrt(),
        }
    }

    pub fn hover(&self) -> f64 {
        self.p0 + self.pi
    }
}

fn check_speed(v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("speed must be nonnegative (got {v})")))
    }
}

fn profile_and_parasite(v: f64, p: &PropulsionParams, d: &PropulsionDerived) -> f64 {
    d.p0 * (1.0 + 3.0 * v * v / (p.u_tip * p.u_tip)) + 0.5 * p.d0 * p.rho * p.s * p.disc_area * v.powi(3)
}

/// Exact flying power at speed `v`, W.
pub fn flying_power(v: f64, p: &PropulsionParams) -> Result<f64> {
    check_speed(v)?;
    let d = PropulsionDerived::new(p);
    let r = v * v / (2.0 * p.v0 * p.v0);
    // sqrt(1 + r^2) - r, written to stay accurate when r is large.
    let bracket = 1.0 / ((1.0 + r * r).sqrt() + r);
    Ok(profile_and_parasite(v, p, &d) + d.pi * bracket.sqrt())
}

/// Convex upper bound on the flying power, tight at hover, W.
pub fn flying_power_upper(v: f64, p: &PropulsionParams) -> Result<f64> {
    check_speed(v)?;
    let d = PropulsionDerived::new(p);
    Ok(profile_and_parasite(v, p, &d) + d.pi)
}

/// Largest speed whose bounded flying energy over one slot fits `e_max`.
pub fn max_speed_under_energy(e_max: f64, slot_len: f64, p: &PropulsionParams) -> Result<f64> {
    let hover = PropulsionDerived::new(p).hover();
    if !(e_max >= hover * slot_len) {
        return Err(Error::HoverInfeasible {
            hover_energy: hover * slot_len,
            e_max,
        });
    }
    let energy = |v: f64| flying_power_upper(v, p).map(|w| w * slot_len);
    let mut lo = 0.0;
    let mut hi = 1.0;
    while energy(hi)? <= e_max {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if energy(mid)? <= e_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
