//! Channel power gains.
//!
//! Terrestrial UE-to-BS links use a power-law pathloss with Rayleigh fading.
//! Links touching the UAV use the air-to-ground mixture: free-space loss scaled
//! by an LoS or NLoS attenuation, weighted by an elevation-dependent LoS
//! probability. UE-to-UAV gains are taken equal to UAV-to-UE gains.

pub mod ici;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scenario::{A2GParams, FadingModel, Scenario};
use crate::units::db_to_linear;

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// `(4 pi f / c)^2`, with `f` in Hz.
pub fn free_space_pathloss(freq: f64) -> Result<f64> {
    if !(freq > 0.0 && freq.is_finite()) {
        return Err(Error::InvalidArgument(format!("frequency must be positive (got {freq})")));
    }
    Ok((4.0 * std::f64::consts::PI * freq / SPEED_OF_LIGHT).powi(2))
}

/// LoS probability at an elevation angle given in degrees.
pub fn los_probability(elevation_deg: f64, a: f64, b: f64) -> Result<f64> {
    if !(elevation_deg > 0.0 && elevation_deg <= 90.0) {
        return Err(Error::InvalidArgument(format!(
            "elevation must lie in (0, 90] degrees (got {elevation_deg})"
        )));
    }
    Ok(los_prob(elevation_deg, a, b))
}

/// Unchecked logistic LoS curve; also evaluated at bound angles that may leave (0, 90].
pub(crate) fn los_prob(theta_deg: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * (-b * (theta_deg - a)).exp())
}

/// Elevation of `uav` as seen from `peer`, degrees.
pub fn elevation_deg(uav: &Point3, peer: &Point3) -> f64 {
    let d = uav.dist(peer);
    ((uav.z - peer.z) / d).asin().to_degrees()
}

/// Average pathloss of an air-to-ground link at distance `d` with LoS probability `pr_los`.
pub(crate) fn mixture_pathloss(l_fs: f64, d: f64, pr_los: f64, p: &A2GParams) -> f64 {
    l_fs * d * d * (pr_los * p.eta_los + (1.0 - pr_los) * p.eta_nlos)
}

/// Air-to-ground gain between the UAV and a lower peer (BS or UE).
pub fn a2g_gain(uav: &Point3, peer: &Point3, freq: f64, params: &A2GParams, fading: f64) -> Result<f64> {
    let d = uav.dist(peer);
    if d == 0.0 {
        return Err(Error::InvalidArgument("air-to-ground endpoints coincide".into()));
    }
    if !(uav.z > peer.z) {
        return Err(Error::InvalidArgument(format!(
            "UAV altitude {} must exceed peer height {}",
            uav.z, peer.z
        )));
    }
    let l_fs = free_space_pathloss(freq)?;
    let pr = los_prob(elevation_deg(uav, peer), params.a, params.b);
    Ok(fading / mixture_pathloss(l_fs, d, pr, params))
}

/// Terrestrial gain `d^-alpha |g|^2`.
pub fn rayleigh_gain(ue: &Point3, bs: &Point3, alpha: f64, fading: f64) -> Result<f64> {
    let d = ue.dist(bs);
    if d == 0.0 {
        return Err(Error::InvalidArgument("UE and BS positions coincide".into()));
    }
    Ok(d.powf(-alpha) * fading)
}

/// Small-scale power draws `|g|^2` for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Fading {
    /// Per (UE, subchannel).
    pub ue_bs: Vec<Vec<f64>>,
    /// Per (UE, subchannel); shared by both directions of the UE-UAV link.
    pub ue_uav: Vec<Vec<f64>>,
    /// Per subchannel.
    pub uav_bs: Vec<f64>,
}

impl Fading {
    pub fn unit(n_ues: usize, n_subchannels: usize) -> Self {
        Self {
            ue_bs: vec![vec![1.0; n_subchannels]; n_ues],
            ue_uav: vec![vec![1.0; n_subchannels]; n_ues],
            uav_bs: vec![1.0; n_subchannels],
        }
    }

    /// Draws for `slot` under the scenario's fading model. Deterministic given
    /// `(rng_seed, slot)`.
    pub fn for_slot(s: &Scenario, slot: usize) -> Self {
        match s.fading {
            FadingModel::Deterministic => Self::unit(s.n_ues, s.n_subchannels),
            FadingModel::Random => Self::draw(s.rng_seed, slot, s.n_ues, s.n_subchannels, s.rician_k_factor_db),
        }
    }

    /// Unit-mean Rayleigh powers on terrestrial links, unit-mean Rician powers
    /// with K-factor `k_db` on air-to-ground links.
    pub fn draw(seed: u64, slot: usize, n_ues: usize, n_subchannels: usize, k_db: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(slot as u64 + 1);
        let k = db_to_linear(k_db);
        let los = (k / (k + 1.0)).sqrt();
        let scatter = (0.5 / (k + 1.0)).sqrt();
        let rician = |rng: &mut ChaCha8Rng| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            (los + scatter * re).powi(2) + (scatter * im).powi(2)
        };
        let ue_bs = (0..n_ues)
            .map(|_| (0..n_subchannels).map(|_| Exp1.sample(&mut rng)).collect())
            .collect();
        let ue_uav = (0..n_ues)
            .map(|_| (0..n_subchannels).map(|_| rician(&mut rng)).collect())
            .collect();
        let uav_bs = (0..n_subchannels).map(|_| rician(&mut rng)).collect();
        Self { ue_bs, ue_uav, uav_bs }
    }
}

/// All link gains for one UAV position.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    /// `h_ue_bs[n][k]`.
    pub h_ue_bs: Vec<Vec<f64>>,
    /// `h_ue_uav[n][k]`.
    pub h_ue_uav: Vec<Vec<f64>>,
    /// `h_uav_bs[k]`.
    pub h_uav_bs: Vec<f64>,
}

impl ChannelGains {
    pub fn compute(s: &Scenario, uav: Point3, fading: &Fading) -> Result<Self> {
        let bs = s.bs_position();
        let h_ue_bs = s
            .ue_positions
            .iter()
            .zip(&fading.ue_bs)
            .map(|(ue, g)| {
                g.iter()
                    .map(|&g| rayleigh_gain(ue, &bs, s.pathloss_exp, g))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let h_ue_uav = s
            .ue_positions
            .iter()
            .zip(&fading.ue_uav)
            .map(|(ue, g)| {
                s.subchannel_freqs
                    .iter()
                    .zip(g)
                    .map(|(&f, &g)| a2g_gain(&uav, ue, f, &s.a2g, g))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let h_uav_bs = s
            .subchannel_freqs
            .iter()
            .zip(&fading.uav_bs)
            .map(|(&f, &g)| a2g_gain(&uav, &bs, f, &s.a2g, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            h_ue_bs,
            h_ue_uav,
            h_uav_bs,
        })
    }

    /// Copy with only the UAV-dependent gains recomputed.
    pub fn with_uav(&self, s: &Scenario, uav: Point3, fading: &Fading) -> Result<Self> {
        let bs = s.bs_position();
        let mut out = self.clone();
        for (n, ue) in s.ue_positions.iter().enumerate() {
            for k in 0..s.n_subchannels {
                out.h_ue_uav[n][k] = a2g_gain(&uav, ue, s.subchannel_freqs[k], &s.a2g, fading.ue_uav[n][k])?;
            }
        }
        for k in 0..s.n_subchannels {
            out.h_uav_bs[k] = a2g_gain(&uav, &bs, s.subchannel_freqs[k], &s.a2g, fading.uav_bs[k])?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn free_space_reference_points() {
        let l = free_space_pathloss(1e9).unwrap();
        let expected = (4.0 * std::f64::consts::PI * 1e9 / 2.998e8).powi(2);
        assert_relative_eq!(l, expected, max_relative = 1e-14);
        assert!((l - 1757.0).abs() < 1.0, "{l}");
        assert!((10.0 * l.log10() - 32.45).abs() < 0.01);
        assert_relative_eq!(free_space_pathloss(2e9).unwrap(), 4.0 * l, max_relative = 1e-14);
        let unit = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI);
        assert_relative_eq!(free_space_pathloss(unit).unwrap(), 1.0, max_relative = 1e-14);
        assert!(free_space_pathloss(0.0).is_err());
    }

    #[test]
    fn los_probability_reference_points() {
        assert_relative_eq!(los_probability(9.6, 9.6, 0.28).unwrap(), 1.0 / 10.6, max_relative = 1e-14);
        let top = los_probability(90.0, 9.6, 0.28).unwrap();
        let gap = 9.6 * (-0.28f64 * 80.4).exp();
        assert_relative_eq!(1.0 - top, gap / (1.0 + gap), max_relative = 1e-6);
        assert!((1.0 - top - 1.6e-9).abs() < 0.1e-9);
        assert!(los_probability(0.0, 9.6, 0.28).is_err());
        assert!(los_probability(91.0, 9.6, 0.28).is_err());
        let mut prev = 0.0;
        for i in 1..=90 {
            let p = los_probability(i as f64, 9.6, 0.28).unwrap();
            assert!(p > prev && p < 1.0);
            prev = p;
        }
    }

    #[test]
    fn a2g_vertical_link_reference() {
        let p = A2GParams::default();
        let g = a2g_gain(&Point3::new(0.0, 0.0, 130.0), &Point3::new(0.0, 0.0, 30.0), 1e9, &p, 1.0).unwrap();
        let l = free_space_pathloss(1e9).unwrap();
        let pr = los_prob(90.0, 9.6, 0.28);
        let expected = 1.0 / (l * 1e4 * (pr * p.eta_los + (1.0 - pr) * p.eta_nlos));
        assert_relative_eq!(g, expected, max_relative = 1e-12);
        assert!((g - 4.52e-8).abs() < 0.01e-8, "{g}");
    }

    #[test]
    fn a2g_equal_attenuations_ignore_los() {
        let p = A2GParams { eta_los: 3.0, eta_nlos: 3.0, a: 9.6, b: 0.28 };
        let uav = Point3::new(40.0, -10.0, 120.0);
        let ue = Point3::new(0.0, 0.0, 0.0);
        let l = free_space_pathloss(1e9).unwrap();
        let d = uav.dist(&ue);
        assert_relative_eq!(a2g_gain(&uav, &ue, 1e9, &p, 1.0).unwrap(), 1.0 / (l * d * d * 3.0), max_relative = 1e-12);
    }

    #[test]
    fn a2g_distance_law_and_bracketing() {
        let p = A2GParams::default();
        let peer = Point3::new(0.0, 0.0, 0.0);
        let near = Point3::new(30.0, 40.0, 100.0);
        let far = Point3::new(60.0, 80.0, 200.0);
        let g1 = a2g_gain(&near, &peer, 1e9, &p, 1.0).unwrap();
        let g2 = a2g_gain(&far, &peer, 1e9, &p, 1.0).unwrap();
        assert_relative_eq!(g1 / g2, 4.0, max_relative = 1e-12);

        let l = free_space_pathloss(1e9).unwrap();
        for &(x, z) in &[(0.1, 50.0), (100.0, 40.0), (300.0, 31.0)] {
            let uav = Point3::new(x, 0.0, z);
            let d2 = uav.dist(&peer).powi(2);
            let g = a2g_gain(&uav, &peer, 1e9, &p, 1.0).unwrap();
            assert!(g <= 1.0 / (l * d2 * p.eta_los) && g >= 1.0 / (l * d2 * p.eta_nlos));
        }
        assert!(a2g_gain(&peer, &peer, 1e9, &p, 1.0).is_err());
        assert!(a2g_gain(&Point3::new(5.0, 0.0, 0.0), &peer, 1e9, &p, 1.0).is_err());
    }

    #[test]
    fn rayleigh_reference_points() {
        let bs = Point3::new(0.0, 0.0, 0.0);
        assert_relative_eq!(rayleigh_gain(&Point3::new(1.0, 0.0, 0.0), &bs, 4.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(
            rayleigh_gain(&Point3::new(0.0, 100.0, 0.0), &bs, 4.0, 1.0).unwrap(),
            1e-8,
            max_relative = 1e-12
        );
        assert!(rayleigh_gain(&bs, &bs, 4.0, 1.0).is_err());
    }

    #[test]
    fn random_fading_is_unit_mean_and_seeded() {
        let f = Fading::draw(3, 0, 1000, 100, 10.0);
        let mean = |v: &Vec<Vec<f64>>| v.iter().flatten().sum::<f64>() / 1e5;
        assert!((mean(&f.ue_bs) - 1.0).abs() < 0.02, "{}", mean(&f.ue_bs));
        assert!((mean(&f.ue_uav) - 1.0).abs() < 0.02, "{}", mean(&f.ue_uav));
        assert_eq!(f, Fading::draw(3, 0, 1000, 100, 10.0));
        assert_ne!(f.uav_bs, Fading::draw(3, 1, 1000, 100, 10.0).uav_bs);
    }

    #[test]
    fn gains_match_link_functions() {
        let s = Scenario::default();
        let fading = Fading::unit(s.n_ues, s.n_subchannels);
        let g = ChannelGains::compute(&s, s.uav_initial, &fading).unwrap();
        let bs = s.bs_position();
        for n in 0..s.n_ues {
            for k in 0..s.n_subchannels {
                assert!(g.h_ue_bs[n][k] > 0.0 && g.h_ue_uav[n][k] > 0.0);
                assert_eq!(g.h_ue_bs[n][k], rayleigh_gain(&s.ue_positions[n], &bs, 4.0, 1.0).unwrap());
            }
        }
        let moved = Point3::new(s.uav_initial.x + 3.0, s.uav_initial.y, s.uav_initial.z - 2.0);
        assert_eq!(
            g.with_uav(&s, moved, &fading).unwrap(),
            ChannelGains::compute(&s, moved, &fading).unwrap()
        );
    }
}
