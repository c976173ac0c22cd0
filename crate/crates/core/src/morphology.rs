//! Binary cleanup, connected-component labeling, shape metrics and hole
//! analysis.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::boundary::trace_outer_moves;
use crate::geometry::Point;
use crate::raster::{BinaryRaster, LabeledRaster};
use crate::{par, Error, Result};

/// Upper bound on passes when filtering until stable.
pub const MAX_MAJORITY_PASSES: u32 = 10;

/// Passes run by default. Enough to clear isolated noise; running to
/// stability also rounds off the cusps at wide necks.
pub const DEFAULT_MAJORITY_PASSES: u32 = 3;

/// How many majority-filter passes to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MajorityPasses {
    Fixed(u32),
    /// Repeat until a pass changes nothing, at most [`MAX_MAJORITY_PASSES`].
    UntilStable,
}

impl Default for MajorityPasses {
    fn default() -> Self {
        MajorityPasses::Fixed(DEFAULT_MAJORITY_PASSES)
    }
}

impl FromStr for MajorityPasses {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "until-stable" | "stable" => Ok(MajorityPasses::UntilStable),
            n => n.parse().map(MajorityPasses::Fixed).map_err(|_| {
                Error::param(
                    "majority_passes",
                    format!("expected a count or `until-stable`, got `{n}`"),
                )
            }),
        }
    }
}

impl fmt::Display for MajorityPasses {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MajorityPasses::Fixed(n) => write!(f, "{n}"),
            MajorityPasses::UntilStable => f.write_str("until-stable"),
        }
    }
}

impl Serialize for MajorityPasses {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MajorityPasses::Fixed(n) => s.serialize_u32(*n),
            MajorityPasses::UntilStable => s.serialize_str("until-stable"),
        }
    }
}

impl<'de> Deserialize<'de> for MajorityPasses {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u32),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(n) => Ok(MajorityPasses::Fixed(n)),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One 3x3 majority pass. Returns the filtered raster and the number of
/// pixels that changed.
///
/// Interior pixels take the value held by at least 5 of their 9 neighbours.
/// Border pixels vote over the neighbourhood clipped to the image and keep
/// their value on a tie.
pub fn majority_pass(img: &BinaryRaster) -> (BinaryRaster, usize) {
    let (w, h) = (img.width(), img.height());
    let src = img.bits();
    let mut out = vec![0u8; src.len()];
    par::for_each_row(&mut out, w, |y, row| {
        let y0 = y.saturating_sub(1);
        let y1 = (y + 1).min(h - 1);
        let rows = y1 - y0 + 1;
        let cols: Vec<u8> = (0..w).map(|x| (y0..=y1).map(|yy| src[yy * w + x]).sum()).collect();
        for (x, px) in row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(1);
            let x1 = (x + 1).min(w - 1);
            let ones: usize = cols[x0..=x1].iter().map(|&c| c as usize).sum();
            let total = rows * (x1 - x0 + 1);
            *px = match (2 * ones).cmp(&total) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => src[y * w + x],
            };
        }
    });
    let changed = out.iter().zip(src).filter(|(a, b)| a != b).count();
    (BinaryRaster::from_parts_unchecked(w, h, out, img.scale()), changed)
}

pub fn majority_filter(img: &BinaryRaster, passes: MajorityPasses) -> BinaryRaster {
    let limit = match passes {
        MajorityPasses::Fixed(n) => n,
        MajorityPasses::UntilStable => MAX_MAJORITY_PASSES,
    };
    let mut cur = img.clone();
    for _ in 0..limit {
        let (next, changed) = majority_pass(&cur);
        cur = next;
        if changed == 0 {
            break;
        }
    }
    cur
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

const N4: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
const N8: [(i32, i32); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Labels the connected components of `phase` (0 or 1). Particles (phase 1)
/// use 8-connectivity and binder (phase 0) uses 4-connectivity. Labels are
/// assigned in raster-scan discovery order starting at 1.
pub fn label_components(img: &BinaryRaster, phase: u8) -> LabeledRaster {
    let conn = if phase == 1 {
        Connectivity::Eight
    } else {
        Connectivity::Four
    };
    label_with(img, phase, conn)
}

pub fn label_with(img: &BinaryRaster, phase: u8, conn: Connectivity) -> LabeledRaster {
    let (w, h) = (img.width(), img.height());
    let bits = img.bits();
    let offsets: &[(i32, i32)] = match conn {
        Connectivity::Four => &N4,
        Connectivity::Eight => &N8,
    };
    let mut labels = vec![0u32; bits.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..bits.len() {
        if bits[start] != phase || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i32, (i / w) as i32);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] == phase && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }
    LabeledRaster::from_parts(w, h, labels, next, img.scale())
}

/// Per-label pixel statistics gathered in one raster pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStats {
    pub label: u32,
    pub pixel_count: usize,
    /// First pixel in raster order; the upper-left-most boundary pixel.
    pub anchor: Point,
    pub min: Point,
    pub max: Point,
    pub centroid: (f64, f64),
    pub touches_border: bool,
}

pub fn component_stats(labels: &LabeledRaster) -> Vec<ComponentStats> {
    let (w, h) = (labels.width(), labels.height());
    let n = labels.count() as usize;
    let mut stats: Vec<ComponentStats> = (1..=n as u32)
        .map(|label| ComponentStats {
            label,
            pixel_count: 0,
            anchor: Point::new(-1, -1),
            min: Point::new(i32::MAX, i32::MAX),
            max: Point::new(i32::MIN, i32::MIN),
            centroid: (0.0, 0.0),
            touches_border: false,
        })
        .collect();
    for (i, &l) in labels.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let s = &mut stats[l as usize - 1];
        let (x, y) = ((i % w) as i32, (i / w) as i32);
        if s.pixel_count == 0 {
            s.anchor = Point::new(x, y);
        }
        s.pixel_count += 1;
        s.min = Point::new(s.min.x.min(x), s.min.y.min(y));
        s.max = Point::new(s.max.x.max(x), s.max.y.max(y));
        s.centroid.0 += f64::from(x);
        s.centroid.1 += f64::from(y);
        if x == 0 || y == 0 || x as usize == w - 1 || y as usize == h - 1 {
            s.touches_border = true;
        }
    }
    for s in &mut stats {
        if s.pixel_count > 0 {
            s.centroid.0 /= s.pixel_count as f64;
            s.centroid.1 /= s.pixel_count as f64;
        }
    }
    stats
}

/// Shape metrics of one component, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentShape {
    pub label: u32,
    pub pixel_count: usize,
    /// µm²
    pub area: f64,
    /// µm, outer boundary walk with unit axial and √2 diagonal steps.
    pub perimeter: f64,
    /// Pixel coordinates.
    pub centroid: (f64, f64),
    /// µm, `sqrt(4 * area / π)`.
    pub equivalent_diameter: f64,
    /// µm, `sqrt(area)`.
    pub edge: f64,
    /// `4π area / perimeter²`, capped at 1.
    pub circularity: f64,
    pub touches_border: bool,
}

impl ComponentShape {
    fn from_stats(s: &ComponentStats, perimeter_px: f64, scale: f64) -> Self {
        let area = s.pixel_count as f64 * scale * scale;
        // Single pixels have an empty walk; report one pixel of perimeter.
        let perimeter_px = perimeter_px.max(1.0);
        let perimeter = perimeter_px * scale;
        ComponentShape {
            label: s.label,
            pixel_count: s.pixel_count,
            area,
            perimeter,
            centroid: s.centroid,
            equivalent_diameter: equivalent_diameter(area),
            edge: area.sqrt(),
            circularity: circularity(area, perimeter),
            touches_border: s.touches_border,
        }
    }
}

pub fn equivalent_diameter(area: f64) -> f64 {
    (4.0 * area / PI).sqrt()
}

/// `4π A / P²`, capped at 1: tiny components have walks shorter than any
/// closed curve around their area.
pub fn circularity(area: f64, perimeter: f64) -> f64 {
    if perimeter <= 0.0 {
        return 1.0;
    }
    (4.0 * PI * area / (perimeter * perimeter)).min(1.0)
}

fn chain_length(moves: &[u8]) -> f64 {
    moves
        .iter()
        .map(|&m| if m % 2 == 0 { 1.0 } else { std::f64::consts::SQRT_2 })
        .sum()
}

fn shape_of(labels: &LabeledRaster, s: &ComponentStats) -> ComponentShape {
    let label = s.label;
    let moves = trace_outer_moves(s.anchor, |p| labels.at(p) == label);
    ComponentShape::from_stats(s, chain_length(&moves), labels.scale())
}

pub fn component_shape(labels: &LabeledRaster, label: u32) -> Result<ComponentShape> {
    if label == 0 || label > labels.count() {
        return Err(Error::UnknownLabel(label));
    }
    let stats = component_stats(labels);
    let s = &stats[label as usize - 1];
    if s.pixel_count == 0 {
        return Err(Error::EmptyComponent(label));
    }
    Ok(shape_of(labels, s))
}

/// Shapes of every component, indexed by `label - 1`.
pub fn component_shapes(labels: &LabeledRaster) -> Vec<ComponentShape> {
    let stats = component_stats(labels);
    par::map(&stats, |s| shape_of(labels, s))
}

/// A binder region enclosed by a single particle component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoleInfo {
    /// Label in the 4-connected binder labeling.
    pub label: u32,
    pub pixel_count: usize,
    /// µm²
    pub area: f64,
    /// µm
    pub equivalent_diameter: f64,
    pub circularity: f64,
    pub enclosing_component: u32,
    /// First hole pixel in raster order.
    pub anchor: Point,
}

/// Binder labeling plus the holes among its components.
pub(crate) struct HoleMap {
    pub binder: LabeledRaster,
    pub holes: Vec<HoleInfo>,
}

pub(crate) fn hole_map(img: &BinaryRaster, particles: &LabeledRaster) -> HoleMap {
    let binder = label_components(img, 0);
    let stats = component_stats(&binder);
    let scale = img.scale();
    let interior: Vec<&ComponentStats> = stats
        .iter()
        .filter(|s| s.pixel_count > 0 && !s.touches_border)
        .collect();
    let holes = par::map(&interior, |s| {
        let shape = shape_of(&binder, s);
        // The pixel above the anchor is not in this binder region and,
        // under 4-connectivity, cannot be any other binder pixel.
        let above = Point::new(s.anchor.x, s.anchor.y - 1);
        HoleInfo {
            label: s.label,
            pixel_count: s.pixel_count,
            area: s.pixel_count as f64 * scale * scale,
            equivalent_diameter: shape.equivalent_diameter,
            circularity: shape.circularity,
            enclosing_component: particles.at(above),
            anchor: s.anchor,
        }
    });
    HoleMap { binder, holes }
}

/// Every binder component that does not reach the image border.
pub fn find_holes(img: &BinaryRaster) -> Vec<HoleInfo> {
    let particles = label_components(img, 1);
    hole_map(img, &particles).holes
}

fn fill_selected(img: &BinaryRaster, map: &HoleMap, fill: impl Fn(&HoleInfo) -> bool) -> BinaryRaster {
    let mut selected = vec![false; map.binder.count() as usize + 1];
    for h in &map.holes {
        selected[h.label as usize] = fill(h);
    }
    let mut out = img.clone();
    for (b, &l) in out.bits_mut().iter_mut().zip(map.binder.labels()) {
        if selected[l as usize] {
            *b = 1;
        }
    }
    out
}

/// Fills holes that are both small (equivalent diameter below
/// `size_threshold_um`) and round (circularity above `circ_threshold`).
/// Returns the filled raster and the holes that were kept.
pub fn classify_and_fill_holes(
    img: &BinaryRaster,
    size_threshold_um: f64,
    circ_threshold: f64,
) -> (BinaryRaster, Vec<HoleInfo>) {
    let particles = label_components(img, 1);
    let map = hole_map(img, &particles);
    let is_fill = |h: &HoleInfo| h.equivalent_diameter < size_threshold_um && h.circularity > circ_threshold;
    let out = fill_selected(img, &map, is_fill);
    let kept = map.holes.into_iter().filter(|h| !is_fill(h)).collect();
    (out, kept)
}

/// Fills every hole regardless of size or shape.
pub fn fill_all_holes(img: &BinaryRaster) -> BinaryRaster {
    let particles = label_components(img, 1);
    let map = hole_map(img, &particles);
    fill_selected(img, &map, |_| true)
}
