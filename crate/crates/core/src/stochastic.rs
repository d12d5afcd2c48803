//! Random path generators standing in for ray-traced channels.
//!
//! Angles are drawn uniformly over the front hemisphere of the array:
//! `cos(elevation)` uniform on `[0, 1]` and azimuth uniform on `[-pi, pi)`.
//! Complex gains are scaled by `sqrt(N_t N_r)` so that a unit-power path list
//! yields `E ||H||_F^2 = N_t N_r`, matching the near-field normalization.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::Path;
use crate::error::{invalid, Result};
use crate::linalg::cis;

/// Far-field part of the self-interference channel: one line-of-sight path,
/// one dominant reflection, and weaker exponentially decaying reflections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiPathModel {
    pub num_paths: usize,
    /// Share of the far-field power held by the two strongest paths.
    pub dominant_fraction: f64,
    /// Share of the dominant power held by the line-of-sight path.
    pub los_share: f64,
    /// Power ratio between successive weak paths.
    pub decay: f64,
}

impl Default for SiPathModel {
    fn default() -> Self {
        SiPathModel {
            num_paths: 15,
            dominant_fraction: 0.85,
            los_share: 0.65,
            decay: 0.7,
        }
    }
}

impl SiPathModel {
    pub fn validate(&self) -> Result<()> {
        if self.num_paths < 2 {
            return Err(invalid("si.num_paths", "needs at least the two dominant paths"));
        }
        if !(0.8..=1.0).contains(&self.dominant_fraction) {
            return Err(invalid("si.dominant_fraction", "must lie in [0.8, 1]"));
        }
        if !(0.5..=1.0).contains(&self.los_share) {
            return Err(invalid("si.los_share", "must lie in [0.5, 1]"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(invalid("si.decay", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Mean path powers, summing to one and in non-increasing order.
    pub fn powers(&self) -> Vec<f64> {
        let dom = self.dominant_fraction;
        let mut p = vec![dom * self.los_share, dom * (1.0 - self.los_share)];
        let weak: Vec<f64> = (0..self.num_paths - 2).map(|k| self.decay.powi(k as i32)).collect();
        let total: f64 = weak.iter().sum();
        if total > 0.0 {
            let rest = 1.0 - dom;
            // weak paths never outgrow the second dominant path
            let cap = p[1];
            p.extend(weak.iter().map(|w| (rest * w / total).min(cap)));
        }
        p
    }
}

/// Clustered far-field model of a desired link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterModel {
    pub num_clusters: usize,
    pub rays_per_cluster: usize,
    /// Standard deviation of ray angles around their cluster center.
    pub angular_spread_rad: f64,
}

impl Default for ClusterModel {
    fn default() -> Self {
        ClusterModel {
            num_clusters: 3,
            rays_per_cluster: 5,
            angular_spread_rad: 0.1,
        }
    }
}

impl ClusterModel {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 || self.rays_per_cluster == 0 {
            return Err(invalid("desired", "needs at least one cluster and one ray"));
        }
        if !(self.angular_spread_rad >= 0.0) || !self.angular_spread_rad.is_finite() {
            return Err(invalid("desired.angular_spread_rad", "must be finite and >= 0"));
        }
        Ok(())
    }
}

fn hemisphere_direction(rng: &mut impl Rng) -> (f64, f64) {
    let el = rng.random::<f64>().acos();
    let az = rng.random_range(-PI..PI);
    (el, az)
}

/// Delay uniformly spread over taps `1..=num_taps`.
fn tap_delay(rng: &mut impl Rng, sample_interval_s: f64, num_taps: usize) -> f64 {
    rng.random_range(0.5..num_taps as f64 + 0.5).max(1.0) * sample_interval_s
}

fn clamp_el(el: f64) -> f64 {
    el.clamp(0.0, 0.5 * PI)
}

/// Far-field SI paths with unit total power (before array scaling).
///
/// The line-of-sight path lands on the first tap; the rest spread over all taps.
pub fn gen_si_far_paths(
    rng: &mut impl Rng,
    model: &SiPathModel,
    n_t: usize,
    n_r: usize,
    sample_interval_s: f64,
    num_taps: usize,
) -> Result<Vec<Path>> {
    model.validate()?;
    let scale = ((n_t * n_r) as f64).sqrt();
    let powers = model.powers();
    let total: f64 = powers.iter().sum();
    let mut paths = Vec::with_capacity(powers.len());
    for (k, p) in powers.iter().enumerate() {
        let (aod_el, aod_az) = hemisphere_direction(rng);
        let (aoa_el, aoa_az) = hemisphere_direction(rng);
        let delay_s = if k == 0 {
            sample_interval_s
        } else {
            tap_delay(rng, sample_interval_s, num_taps)
        };
        let phase = rng.random_range(0.0..2.0 * PI);
        paths.push(Path {
            gain: cis(phase) * (scale * (p / total).sqrt()),
            delay_s,
            aoa_el,
            aoa_az,
            aod_el,
            aod_az,
        });
    }
    Ok(paths)
}

/// Clustered desired-link paths with unit total power (before array scaling).
pub fn gen_desired_paths(
    rng: &mut impl Rng,
    model: &ClusterModel,
    n_t: usize,
    n_r: usize,
    sample_interval_s: f64,
    num_taps: usize,
) -> Result<Vec<Path>> {
    model.validate()?;
    let spread = Normal::new(0.0, model.angular_spread_rad).map_err(|e| invalid("desired.angular_spread_rad", e.to_string()))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut paths: Vec<Path> = Vec::with_capacity(model.num_clusters * model.rays_per_cluster);
    for _ in 0..model.num_clusters {
        let cluster_power: f64 = Exp1.sample(rng);
        let (d_el, d_az) = hemisphere_direction(rng);
        let (a_el, a_az) = hemisphere_direction(rng);
        let delay = tap_delay(rng, sample_interval_s, num_taps);
        for _ in 0..model.rays_per_cluster {
            let g = Complex64::new(unit.sample(rng), unit.sample(rng)) * (cluster_power / 2.0).sqrt();
            paths.push(Path {
                gain: g,
                delay_s: delay,
                aoa_el: clamp_el(a_el + spread.sample(rng)),
                aoa_az: a_az + spread.sample(rng),
                aod_el: clamp_el(d_el + spread.sample(rng)),
                aod_az: d_az + spread.sample(rng),
            });
        }
    }
    let total: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
    let scale = ((n_t * n_r) as f64).sqrt() / total.sqrt();
    for p in &mut paths {
        p.gain *= scale;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn si_powers_are_los_dominant() {
        let m = SiPathModel::default();
        let p = m.powers();
        assert_eq!(p.len(), 15);
        let total: f64 = p.iter().sum();
        assert!(total <= 1.0 + 1e-12);
        assert!((p[0] + p[1]) / total >= 0.8);
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn si_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths = gen_si_far_paths(&mut rng, &SiPathModel::default(), 64, 64, 2.5e-9, 16).unwrap();
        assert_eq!(paths.len(), 15);
        let total: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
        assert!((total - 4096.0).abs() < 1e-9);
        assert_eq!(paths[0].delay_s, 2.5e-9);
        for p in &paths {
            assert!((0.0..=0.5 * PI).contains(&p.aod_el));
            let tap = (p.delay_s / 2.5e-9).round();
            assert!((1.0..=16.0).contains(&tap));
        }
        let bad = SiPathModel {
            dominant_fraction: 0.5,
            ..SiPathModel::default()
        };
        assert!(gen_si_far_paths(&mut rng, &bad, 4, 4, 1e-9, 4).is_err());
    }

    #[test]
    fn desired_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let paths = gen_desired_paths(&mut rng, &ClusterModel::default(), 64, 64, 2.5e-9, 16).unwrap();
        assert_eq!(paths.len(), 15);
        let total: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
        assert!((total - 4096.0).abs() < 1e-9);
        // rays share their cluster delay
        assert!(paths[..5].iter().all(|p| p.delay_s == paths[0].delay_s));
    }

    #[test]
    fn reproducible_streams() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            gen_desired_paths(&mut rng, &ClusterModel::default(), 4, 4, 1e-9, 4).unwrap()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }
}
