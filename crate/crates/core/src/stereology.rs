//! Line-intercept stereology: interface counts, contiguity, binder fraction,
//! particle size and internal binder statistics.
//!
//! Tungsten-binder interfaces are the phase toggles of the cleaned raster
//! along each test line. Tungsten-tungsten interfaces follow from the extra
//! toggles the separated raster has on the same line: every neck line
//! crossed adds two.

use serde::{Deserialize, Serialize};

use crate::matching::SegmentationResult;
use crate::morphology::{find_holes, label_components};
use crate::raster::BinaryRaster;
use crate::{par, Error, Result};

/// `2 n_ww / (2 n_ww + n_wb)`; works on counts or rates alike.
pub fn contiguity(n_ww: f64, n_wb: f64) -> Result<f64> {
    if !(n_ww >= 0.0) || !(n_wb >= 0.0) {
        return Err(Error::param("interface count", "must be non-negative"));
    }
    let denom = 2.0 * n_ww + n_wb;
    if denom == 0.0 {
        return Err(Error::UndefinedContiguity);
    }
    Ok(2.0 * n_ww / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Horizontal,
    Vertical,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Horizontal, Direction::Vertical];
}

/// Toggle counts of one test line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineCount {
    /// Row (horizontal lines) or column (vertical lines).
    pub position: usize,
    pub t_init: u32,
    pub t_sep: u32,
    pub wb: f64,
    pub ww: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceCounts {
    pub direction: Direction,
    /// µm
    pub mesh_spacing: f64,
    pub step_px: usize,
    pub lines: usize,
    /// µm
    pub line_length: f64,
    pub total_wb: f64,
    pub total_ww: f64,
    pub n_wb_per_line: f64,
    pub n_ww_per_line: f64,
    pub n_wb_per_um: f64,
    pub n_ww_per_um: f64,
    /// Lines whose separated raster had fewer toggles than the initial one.
    pub clamped_lines: usize,
    #[serde(skip)]
    pub per_line: Vec<LineCount>,
}

fn toggles(values: impl Iterator<Item = u8>) -> u32 {
    let mut prev = None;
    let mut n = 0;
    for v in values {
        if prev.is_some_and(|p| p != v) {
            n += 1;
        }
        prev = Some(v);
    }
    n
}

fn line_values<'a>(img: &'a BinaryRaster, dir: Direction, pos: usize) -> Box<dyn Iterator<Item = u8> + 'a> {
    let w = img.width();
    match dir {
        Direction::Horizontal => Box::new(img.bits()[pos * w..(pos + 1) * w].iter().copied()),
        Direction::Vertical => Box::new((0..img.height()).map(move |y| img.bits()[y * w + pos])),
    }
}

/// Pixel step between test lines for a spacing in µm.
pub fn line_step(spacing_um: f64, scale: f64) -> Result<usize> {
    let step = (spacing_um / scale).round();
    if !(spacing_um > 0.0) || !(step >= 1.0) {
        return Err(Error::param(
            "mesh_spacing_um",
            format!("{spacing_um} µm is below one pixel"),
        ));
    }
    Ok(step as usize)
}

/// Test line positions: every `step` pixels, centred in the first interval.
pub fn line_positions(extent: usize, step: usize) -> Vec<usize> {
    (0..).map(|i| i * step + step / 2).take_while(|&p| p < extent).collect()
}

/// Counts interfaces along test lines placed every `spacing_um` across both rasters.
pub fn count_interfaces(
    initial: &BinaryRaster,
    separated: &BinaryRaster,
    spacing_um: f64,
    direction: Direction,
) -> Result<InterfaceCounts> {
    initial.same_shape(separated)?;
    let step = line_step(spacing_um, initial.scale())?;
    let (extent, length_px) = match direction {
        Direction::Horizontal => (initial.height(), initial.width()),
        Direction::Vertical => (initial.width(), initial.height()),
    };
    let positions = line_positions(extent, step);
    let per_line = par::map(&positions, |&pos| {
        let t_init = toggles(line_values(initial, direction, pos));
        let t_sep = toggles(line_values(separated, direction, pos));
        LineCount {
            position: pos,
            t_init,
            t_sep,
            wb: f64::from(t_init),
            ww: ((f64::from(t_sep) - f64::from(t_init)) / 2.0).max(0.0),
        }
    });
    let lines = per_line.len();
    let total_wb: f64 = per_line.iter().map(|l| l.wb).sum();
    let total_ww: f64 = per_line.iter().map(|l| l.ww).sum();
    let clamped_lines = per_line.iter().filter(|l| l.t_sep < l.t_init).count();
    let line_length = length_px as f64 * initial.scale();
    let per = |total: f64| total / lines as f64;
    Ok(InterfaceCounts {
        direction,
        mesh_spacing: spacing_um,
        step_px: step,
        lines,
        line_length,
        total_wb,
        total_ww,
        n_wb_per_line: per(total_wb),
        n_ww_per_line: per(total_ww),
        n_wb_per_um: per(total_wb) / line_length,
        n_ww_per_um: per(total_ww) / line_length,
        clamped_lines,
        per_line,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Unfilled,
    Filled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContiguityReport {
    pub variant: Variant,
    /// µm
    pub mesh_spacing: f64,
    pub horizontal: InterfaceCounts,
    pub vertical: InterfaceCounts,
    pub c_horizontal: Option<f64>,
    pub c_vertical: Option<f64>,
    /// From interface totals over all lines of both directions.
    pub combined: f64,
}

impl ContiguityReport {
    /// Per-line means over both directions, weighted by line count.
    pub fn n_ww_per_line(&self) -> f64 {
        (self.horizontal.total_ww + self.vertical.total_ww) / (self.horizontal.lines + self.vertical.lines) as f64
    }

    pub fn n_wb_per_line(&self) -> f64 {
        (self.horizontal.total_wb + self.vertical.total_wb) / (self.horizontal.lines + self.vertical.lines) as f64
    }

    /// Rates per µm of test line over both directions.
    pub fn n_ww_per_um(&self) -> f64 {
        (self.horizontal.total_ww + self.vertical.total_ww) / self.total_length()
    }

    pub fn n_wb_per_um(&self) -> f64 {
        (self.horizontal.total_wb + self.vertical.total_wb) / self.total_length()
    }

    fn total_length(&self) -> f64 {
        self.horizontal.lines as f64 * self.horizontal.line_length
            + self.vertical.lines as f64 * self.vertical.line_length
    }
}

pub fn contiguity_report(
    initial: &BinaryRaster,
    separated: &BinaryRaster,
    spacing_um: f64,
    variant: Variant,
) -> Result<ContiguityReport> {
    let horizontal = count_interfaces(initial, separated, spacing_um, Direction::Horizontal)?;
    let vertical = count_interfaces(initial, separated, spacing_um, Direction::Vertical)?;
    let combined = contiguity(
        horizontal.total_ww + vertical.total_ww,
        horizontal.total_wb + vertical.total_wb,
    )?;
    Ok(ContiguityReport {
        variant,
        mesh_spacing: spacing_um,
        c_horizontal: contiguity(horizontal.total_ww, horizontal.total_wb).ok(),
        c_vertical: contiguity(vertical.total_ww, vertical.total_wb).ok(),
        horizontal,
        vertical,
        combined,
    })
}

/// One report per spacing.
pub fn contiguity_sweep(
    initial: &BinaryRaster,
    separated: &BinaryRaster,
    spacings: &[f64],
    variant: Variant,
) -> Result<Vec<ContiguityReport>> {
    if spacings.is_empty() {
        return Err(Error::param("mesh_spacings_um", "must not be empty"));
    }
    spacings
        .iter()
        .map(|&s| contiguity_report(initial, separated, s, variant))
        .collect()
}

/// Both rasters with every interior binder region of `initial` filled.
#[derive(Debug, Clone, PartialEq)]
pub struct FilledPair {
    pub initial: BinaryRaster,
    pub separated: BinaryRaster,
    /// Neck-line pixels whose binder region does not reach the border.
    pub enclosed_neck_pixels: usize,
}

/// Removes internal binder from both rasters. Neck lines are drawn on
/// particle pixels of `initial`, so they survive the fill.
pub fn filled_variant(initial: &BinaryRaster, separated: &BinaryRaster) -> Result<FilledPair> {
    initial.same_shape(separated)?;
    let filled_init = crate::morphology::fill_all_holes(initial);
    let mut filled_sep = separated.clone();
    for ((s, &a), &b) in filled_sep
        .bits_mut()
        .iter_mut()
        .zip(initial.bits())
        .zip(filled_init.bits())
    {
        if a == 0 && b == 1 {
            *s = 1;
        }
    }
    let binder = label_components(&filled_sep, 0);
    let (w, h) = (binder.width(), binder.height());
    let mut open = vec![false; binder.count() as usize + 1];
    for y in 0..h {
        let step = if y == 0 || y + 1 == h { 1 } else { w.max(2) - 1 };
        for x in (0..w).step_by(step) {
            open[binder.get(x, y) as usize] = true;
        }
    }
    let enclosed_neck_pixels = filled_sep
        .bits()
        .iter()
        .zip(initial.bits())
        .zip(binder.labels())
        .filter(|((&s, &i), &l)| s == 0 && i == 1 && !open[l as usize])
        .count();
    Ok(FilledPair {
        initial: filled_init,
        separated: filled_sep,
        enclosed_neck_pixels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiameterStats {
    /// µm
    pub mean: f64,
    /// µm, sample standard deviation.
    pub sd: f64,
    pub count: usize,
    /// Border-touching particles left out of the statistics.
    pub excluded_border: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InternalBinder {
    pub count: usize,
    /// µm, mean equivalent diameter.
    pub mean_um: f64,
    pub pct_of_binder: f64,
    pub pct_of_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicrostructureSummary {
    pub particle_count: usize,
    pub particle_diameter: DiameterStats,
    pub binder_pct: f64,
    pub internal_binder: InternalBinder,
    /// `None` when the test lines cross no interface at all.
    pub unfilled: Option<ContiguityReport>,
    pub filled: Option<ContiguityReport>,
    /// µm
    pub neck_lengths: Vec<f64>,
    pub enclosed_neck_pixels: usize,
}

/// Sample mean and standard deviation (n - 1); `sd` is 0 for one value.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// `filled` is [`filled_variant`] of `cleaned` and `seg.separated`.
pub fn summarize(
    seg: &SegmentationResult,
    cleaned: &BinaryRaster,
    filled: &FilledPair,
    spacing_um: f64,
) -> Result<MicrostructureSummary> {
    if seg.per_particle.is_empty() {
        return Err(Error::NoParticles);
    }
    let total = (cleaned.width() * cleaned.height()) as f64;
    let binder_px = (cleaned.width() * cleaned.height() - cleaned.count_ones()) as f64;
    let interior: Vec<f64> = seg
        .per_particle
        .iter()
        .filter(|s| !s.touches_border)
        .map(|s| s.equivalent_diameter)
        .collect();
    let (diameters, excluded) = if interior.is_empty() {
        (seg.per_particle.iter().map(|s| s.equivalent_diameter).collect(), 0)
    } else {
        let n = interior.len();
        (interior, seg.per_particle.len() - n)
    };
    let (mean, sd) = mean_sd(&diameters);
    let holes = find_holes(cleaned);
    let hole_px: usize = holes.iter().map(|h| h.pixel_count).sum();
    let hole_d: Vec<f64> = holes.iter().map(|h| h.equivalent_diameter).collect();
    let internal_binder = InternalBinder {
        count: holes.len(),
        mean_um: if holes.is_empty() { 0.0 } else { mean_sd(&hole_d).0 },
        pct_of_binder: if binder_px > 0.0 {
            100.0 * hole_px as f64 / binder_px
        } else {
            0.0
        },
        pct_of_area: 100.0 * hole_px as f64 / total,
    };
    let unfilled = contiguity_report(cleaned, &seg.separated, spacing_um, Variant::Unfilled).ok();
    let fp = filled;
    let filled = contiguity_report(&fp.initial, &fp.separated, spacing_um, Variant::Filled).ok();
    Ok(MicrostructureSummary {
        particle_count: seg.per_particle.len(),
        particle_diameter: DiameterStats {
            mean,
            sd,
            count: diameters.len(),
            excluded_border: excluded,
        },
        binder_pct: 100.0 * binder_px / total,
        internal_binder,
        unfilled,
        filled,
        neck_lengths: seg.pairs.iter().map(|p| p.neck_length).collect(),
        enclosed_neck_pixels: fp.enclosed_neck_pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contiguity_boundaries() {
        assert_eq!(contiguity(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(contiguity(3.0, 0.0).unwrap(), 1.0);
        assert!(matches!(contiguity(0.0, 0.0), Err(Error::UndefinedContiguity)));
        assert!(contiguity(-1.0, 2.0).is_err());
        assert!((contiguity(1.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn toggle_counting() {
        assert_eq!(toggles([0u8, 1, 1, 0, 1].into_iter()), 3);
        assert_eq!(toggles([1u8; 5].into_iter()), 0);
        assert_eq!(toggles(std::iter::empty()), 0);
    }

    #[test]
    fn line_grid() {
        assert_eq!(line_positions(10, 1), (0..10).collect::<Vec<_>>());
        assert_eq!(line_positions(10, 4), vec![2, 6]);
        assert_eq!(line_positions(10, 10), vec![5]);
        assert_eq!(line_step(1.0, 0.1).unwrap(), 10);
        assert!(line_step(0.01, 0.1).is_err());
        assert!(line_step(-1.0, 0.1).is_err());
    }

    #[test]
    fn one_line_through_a_neck() {
        let init = BinaryRaster::from_ascii(&["..######.."], 1.0).unwrap();
        let sep = BinaryRaster::from_ascii(&["..##..##.."], 1.0).unwrap();
        let c = count_interfaces(&init, &sep, 1.0, Direction::Horizontal).unwrap();
        assert_eq!(c.lines, 1);
        assert_eq!(c.per_line[0].t_sep - c.per_line[0].t_init, 2);
        assert_eq!(c.total_ww, 1.0);
        assert_eq!(c.total_wb, 2.0);
        assert!((c.n_wb_per_um - 0.2).abs() < 1e-12);
    }

    #[test]
    fn negative_difference_clamps() {
        let init = BinaryRaster::from_ascii(&[".#."], 1.0).unwrap();
        let sep = BinaryRaster::from_ascii(&["..."], 1.0).unwrap();
        let c = count_interfaces(&init, &sep, 1.0, Direction::Horizontal).unwrap();
        assert_eq!(c.total_ww, 0.0);
        assert_eq!(c.clamped_lines, 1);
    }

    #[test]
    fn dimension_mismatch() {
        let a = BinaryRaster::filled(3, 3, false, 1.0).unwrap();
        let b = BinaryRaster::filled(3, 4, false, 1.0).unwrap();
        assert!(matches!(
            count_interfaces(&a, &b, 1.0, Direction::Vertical),
            Err(Error::DimensionMismatch(..))
        ));
    }

    #[test]
    fn all_particle_is_undefined() {
        let a = BinaryRaster::filled(8, 8, true, 1.0).unwrap();
        assert!(matches!(
            contiguity_sweep(&a, &a, &[1.0], Variant::Unfilled),
            Err(Error::UndefinedContiguity)
        ));
        assert!(contiguity_sweep(&a, &a, &[], Variant::Unfilled).is_err());
    }

    #[test]
    fn filling_removes_holes_and_keeps_necks() {
        let init = BinaryRaster::from_ascii(
            &[
                "...........",
                ".#########.",
                ".#..######.",
                ".#..######.",
                ".#########.",
                "...........",
            ],
            1.0,
        )
        .unwrap();
        let mut sep = init.clone();
        for y in 1..5 {
            sep.set(6, y, false);
        }
        let f = filled_variant(&init, &sep).unwrap();
        assert!(find_holes(&f.initial).is_empty());
        assert_eq!(f.initial.count_ones(), init.count_ones() + 4);
        assert_eq!(f.separated.count_ones(), sep.count_ones() + 4);
        assert_eq!(f.separated.get(6, 2), 0);
        assert_eq!(f.enclosed_neck_pixels, 0);
        let none = filled_variant(&sep, &sep).unwrap();
        assert_eq!(none.initial, fill_all(&sep));
    }

    fn fill_all(img: &BinaryRaster) -> BinaryRaster {
        crate::morphology::fill_all_holes(img)
    }

    #[test]
    fn sample_sd() {
        let (m, s) = mean_sd(&[16.5, 16.9, 17.33]);
        assert!((m - 16.91).abs() < 0.001);
        assert!((s - 0.415).abs() < 0.001);
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
    }
}
