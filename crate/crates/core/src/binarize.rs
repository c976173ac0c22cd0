//! Gray to binary conversion at a fixed threshold or with the
//! small-particle-count heuristic.
//!
//! The heuristic relies on the observation that a correctly binarized
//! micrograph holds very few particles smaller than about 1 µm; a threshold
//! set too high breaks particles into many tiny fragments.

use serde::{Deserialize, Serialize};

use crate::morphology::{component_stats, equivalent_diameter, label_components, majority_pass};
use crate::raster::{BinaryRaster, GrayRaster};
use crate::{par, Error, Result};

/// Field of view the small-particle count limit refers to, in µm².
pub const REFERENCE_AREA_UM2: f64 = 215.0 * 159.0;

/// Threshold grid, in hundredths, of the automatic sweep.
pub const SWEEP_RANGE: std::ops::RangeInclusive<u32> = 5..=95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoThresholdConfig {
    /// Components with a smaller equivalent diameter count as small, µm.
    pub small_particle_diameter_um: f64,
    /// Allowed small components per [`REFERENCE_AREA_UM2`]; scaled by image area.
    pub small_particle_count_limit: f64,
}

impl Default for AutoThresholdConfig {
    fn default() -> Self {
        AutoThresholdConfig {
            small_particle_diameter_um: 1.0,
            small_particle_count_limit: 20.0,
        }
    }
}

impl AutoThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.small_particle_diameter_um > 0.0) {
            return Err(Error::param("small_particle_diameter_um", "must be positive"));
        }
        if !(self.small_particle_count_limit > 0.0) {
            return Err(Error::param("small_particle_count_limit", "must be positive"));
        }
        Ok(())
    }

    pub fn scaled_limit(&self, image_area_um2: f64) -> f64 {
        self.small_particle_count_limit * image_area_um2 / REFERENCE_AREA_UM2
    }
}

/// Intensity level a normalized threshold maps to.
pub fn threshold_level(t: f64) -> u8 {
    (t * 255.0).round() as u8
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidThreshold(t));
    }
    Ok(())
}

/// Bit is 1 where intensity >= `round(t * 255)`.
pub fn binarize_fixed(img: &GrayRaster, t: f64) -> Result<BinaryRaster> {
    check_threshold(t)?;
    Ok(binarize_level(img, threshold_level(t)))
}

fn binarize_level(img: &GrayRaster, level: u8) -> BinaryRaster {
    let bits = img.pixels().iter().map(|&p| u8::from(p >= level)).collect();
    BinaryRaster::from_parts_unchecked(img.width(), img.height(), bits, img.scale())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t: f64,
    pub small_particle_count: usize,
    pub component_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoThreshold {
    pub raster: BinaryRaster,
    pub threshold: f64,
    /// No grid threshold qualified and Otsu's threshold was used instead.
    pub fallback: bool,
    /// Sweep results, highest threshold first.
    pub curve: Vec<SweepPoint>,
}

fn sweep_point(img: &GrayRaster, t: f64, cutoff_um: f64) -> SweepPoint {
    let (smoothed, _) = majority_pass(&binarize_level(img, threshold_level(t)));
    let labels = label_components(&smoothed, 1);
    let scale2 = img.scale() * img.scale();
    let small = component_stats(&labels)
        .iter()
        .filter(|s| equivalent_diameter(s.pixel_count as f64 * scale2) < cutoff_um)
        .count();
    SweepPoint {
        t,
        small_particle_count: small,
        component_count: labels.count() as usize,
    }
}

/// Small-particle counts for every grid threshold, highest first.
///
/// Thresholds that fall between the same two occupied intensity levels give
/// identical rasters and are evaluated once.
pub fn threshold_sweep(img: &GrayRaster, cfg: &AutoThresholdConfig) -> Vec<SweepPoint> {
    let hist = img.histogram();
    let ts: Vec<f64> = SWEEP_RANGE.rev().map(|i| f64::from(i) / 100.0).collect();
    // Rasters only differ when an occupied level lies between thresholds;
    // key each threshold by the lowest occupied level it keeps.
    let key = |t: f64| (threshold_level(t) as usize..256).find(|&v| hist[v] > 0);
    let mut reps: Vec<f64> = Vec::new();
    let mut keys = Vec::new();
    for &t in &ts {
        let k = key(t);
        if !keys.contains(&k) {
            keys.push(k);
            reps.push(t);
        }
    }
    let evaluated = par::map(&reps, |&t| sweep_point(img, t, cfg.small_particle_diameter_um));
    ts.iter()
        .map(|&t| {
            let k = key(t);
            let i = keys.iter().position(|x| *x == k).expect("every key was evaluated");
            SweepPoint { t, ..evaluated[i] }
        })
        .collect()
}

/// Largest grid threshold that yields at least one particle and no more
/// small particles than the area-scaled limit; Otsu's threshold otherwise.
pub fn binarize_auto(img: &GrayRaster, cfg: &AutoThresholdConfig) -> Result<AutoThreshold> {
    cfg.validate()?;
    let curve = threshold_sweep(img, cfg);
    let limit = cfg.scaled_limit(img.area_um2());
    let chosen = curve
        .iter()
        .find(|p| p.component_count > 0 && p.small_particle_count as f64 <= limit)
        .map(|p| p.t);
    let (threshold, fallback) = match chosen {
        Some(t) => (t, false),
        None => (otsu_threshold(img), true),
    };
    Ok(AutoThreshold {
        raster: binarize_fixed(img, threshold)?,
        threshold,
        fallback,
        curve,
    })
}

/// Normalized threshold maximizing between-class variance. Pixels above the
/// Otsu split level `k` form the bright class, so the threshold is `(k+1)/255`.
pub fn otsu_threshold(img: &GrayRaster) -> f64 {
    let hist = img.histogram();
    let total = img.pixels().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0usize);
    for (k, &c) in hist.iter().enumerate().take(255) {
        w0 += c as f64;
        sum0 += k as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    (best_k + 1) as f64 / 255.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(particle: u8, binder: u8) -> GrayRaster {
        let (w, h) = (120, 90);
        let mut px = vec![binder; w * h];
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - 40.0, y as f64 - 45.0);
                let (ex, ey) = (x as f64 - 90.0, y as f64 - 40.0);
                if dx * dx + dy * dy < 400.0 || ex * ex + ey * ey < 225.0 {
                    px[y * w + x] = particle;
                }
            }
        }
        GrayRaster::new(w, h, px, 0.1).unwrap()
    }

    #[test]
    fn fixed_threshold_levels() {
        let img = GrayRaster::filled(4, 3, 128, 1.0).unwrap();
        assert_eq!(binarize_fixed(&img, 0.20).unwrap().count_ones(), 12);
        let img = GrayRaster::new(3, 1, vec![0, 50, 51], 1.0).unwrap();
        assert_eq!(binarize_fixed(&img, 0.20).unwrap().bits(), &[0, 0, 1]);
        assert_eq!(binarize_fixed(&img, 0.0).unwrap().count_ones(), 3);
        assert!(matches!(binarize_fixed(&img, 1.5), Err(Error::InvalidThreshold(_))));
        assert!(binarize_fixed(&img, -0.1).is_err());
    }

    #[test]
    fn two_level_image_picks_highest_qualifying_grid_value() {
        let img = two_level(200, 30);
        let auto = binarize_auto(&img, &AutoThresholdConfig::default()).unwrap();
        assert!(!auto.fallback);
        assert_eq!(auto.threshold, 0.78);
        assert_eq!(auto.raster, binarize_fixed(&img, 0.78).unwrap());
        assert_eq!(auto.raster, binarize_fixed(&img, 0.20).unwrap());
        assert_eq!(auto.curve.len(), 91);
        assert_eq!(auto.curve[0].t, 0.95);
    }

    #[test]
    fn black_image_falls_back() {
        let img = GrayRaster::filled(30, 20, 0, 0.1).unwrap();
        let auto = binarize_auto(&img, &AutoThresholdConfig::default()).unwrap();
        assert!(auto.fallback);
        assert!((0.0..=1.0).contains(&auto.threshold));
    }

    #[test]
    fn deduplicated_sweep_matches_direct_evaluation() {
        let mut img = two_level(200, 30);
        let w = img.width();
        let mut px = img.pixels().to_vec();
        for (i, p) in px.iter_mut().enumerate() {
            if i % 97 == 0 {
                *p = 160;
            }
            if i % 13 == 0 && *p == 200 {
                *p = 120 + (i % 40) as u8;
            }
        }
        img = GrayRaster::new(w, img.height(), px, 0.1).unwrap();
        let cfg = AutoThresholdConfig::default();
        let curve = threshold_sweep(&img, &cfg);
        for p in &curve {
            assert_eq!(*p, sweep_point(&img, p.t, cfg.small_particle_diameter_um), "t={}", p.t);
        }
    }

    #[test]
    fn otsu_separates_two_levels() {
        let t = otsu_threshold(&two_level(200, 30));
        let level = threshold_level(t);
        assert!(level > 30 && level <= 200, "{level}");
    }
}
