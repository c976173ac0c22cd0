//! End-to-end analysis of one gray micrograph: threshold, majority filter,
//! particle separation, stereology.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::binarize::{binarize_auto, binarize_fixed, AutoThresholdConfig, SweepPoint};
use crate::geometry::Point;
use crate::matching::{process_particles, SegmentationConfig, SegmentationResult};
use crate::morphology::{majority_filter, MajorityPasses};
use crate::raster::{
    Annotation, BinaryRaster, GrayRaster, LabeledRaster, Overlay, BOUNDARY_COLOR, MARKER_COLOR, SEGMENT_COLOR,
};
use crate::stereology::{
    contiguity_sweep, filled_variant, summarize, ContiguityReport, FilledPair, MicrostructureSummary, Variant,
};
use crate::{Error, Result};

/// Spacings of the optional mesh sweep, µm; one pixel is always added in front.
pub const SWEEP_SPACINGS_UM: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Threshold {
    #[default]
    Auto,
    Fixed(f64),
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(Threshold::Auto),
            v => v
                .parse()
                .map(Threshold::Fixed)
                .map_err(|_| Error::param("threshold", format!("expected a number in [0, 1] or `auto`, got `{v}`"))),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Auto => f.write_str("auto"),
            Threshold::Fixed(t) => write!(f, "{t}"),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Auto => s.serialize_str("auto"),
            Threshold::Fixed(t) => s.serialize_f64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(Threshold::Fixed(t)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub threshold: Threshold,
    #[serde(flatten)]
    pub auto_threshold: AutoThresholdConfig,
    pub majority_passes: MajorityPasses,
    #[serde(flatten)]
    pub segmentation: SegmentationConfig,
    /// Test-line spacing of the headline contiguity, µm.
    pub mesh_spacing_um: f64,
    /// Also report contiguity at one pixel and [`SWEEP_SPACINGS_UM`].
    pub mesh_sweep: bool,
    /// Report the variant with internal binder filled.
    pub filled_variant: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: Threshold::Auto,
            auto_threshold: AutoThresholdConfig::default(),
            majority_passes: MajorityPasses::default(),
            segmentation: SegmentationConfig::default(),
            mesh_spacing_um: 1.0,
            mesh_sweep: false,
            filled_variant: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Threshold::Fixed(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::param("threshold", format!("must lie in [0, 1], got {t}")));
            }
        }
        self.auto_threshold.validate()?;
        if let MajorityPasses::Fixed(n) = self.majority_passes {
            if n > crate::morphology::MAX_MAJORITY_PASSES {
                return Err(Error::param(
                    "majority_passes",
                    format!("at most {} passes, got {n}", crate::morphology::MAX_MAJORITY_PASSES),
                ));
            }
        }
        self.segmentation.validate()?;
        if !(self.mesh_spacing_um > 0.0) {
            return Err(Error::param("mesh_spacing_um", "must be positive"));
        }
        Ok(())
    }

    /// Spacings of the mesh sweep for a pixel scale, µm.
    pub fn sweep_spacings(&self, scale: f64) -> Vec<f64> {
        std::iter::once(scale).chain(SWEEP_SPACINGS_UM).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub config: PipelineConfig,
    pub threshold: f64,
    pub threshold_fallback: bool,
    /// Present in automatic mode.
    pub threshold_curve: Option<Vec<SweepPoint>>,
    pub binary: BinaryRaster,
    pub cleaned: BinaryRaster,
    pub segmentation: SegmentationResult,
    /// Internal binder filled in both `cleaned` and the separated raster.
    pub filled: FilledPair,
    pub summary: MicrostructureSummary,
    /// Unfilled then filled reports per sweep spacing; empty without a sweep.
    pub mesh_sweep: Vec<ContiguityReport>,
    pub diagnostics: Vec<String>,
}

/// Runs every stage on `img` with the raster's own pixel scale.
pub fn analyze_gray(img: &GrayRaster, cfg: &PipelineConfig) -> Result<Analysis> {
    cfg.validate()?;
    let mut diagnostics = Vec::new();
    let (binary, threshold, fallback, curve) = match cfg.threshold {
        Threshold::Fixed(t) => (binarize_fixed(img, t)?, t, false, None),
        Threshold::Auto => {
            let a = binarize_auto(img, &cfg.auto_threshold)?;
            if a.fallback {
                diagnostics.push(format!(
                    "no sweep threshold met the small-particle limit; used Otsu threshold {:.3}",
                    a.threshold
                ));
            }
            (a.raster, a.threshold, a.fallback, Some(a.curve))
        }
    };
    let cleaned = majority_filter(&binary, cfg.majority_passes);
    let segmentation = process_particles(&cleaned, &cfg.segmentation)?;
    let filled = filled_variant(&cleaned, &segmentation.separated)?;
    let mut summary = summarize(&segmentation, &cleaned, &filled, cfg.mesh_spacing_um)?;
    if !cfg.filled_variant {
        summary.filled = None;
    }
    if summary.unfilled.is_none() {
        diagnostics.push("test lines cross no interface; contiguity is undefined".into());
    }
    for (name, r) in [("unfilled", &summary.unfilled), ("filled", &summary.filled)] {
        if let Some(r) = r {
            let clamped = r.horizontal.clamped_lines + r.vertical.clamped_lines;
            if clamped > 0 {
                diagnostics.push(format!(
                    "{name}: {clamped} test lines lost toggles to neck drawing; WW clamped to 0"
                ));
            }
        }
    }
    if summary.enclosed_neck_pixels > 0 {
        diagnostics.push(format!(
            "{} neck pixels do not reach the border through the binder",
            summary.enclosed_neck_pixels
        ));
    }
    let single = segmentation
        .pieces
        .iter()
        .filter(|p| p.route == crate::matching::Route::SingleBindingPoint)
        .count();
    if single > 0 {
        diagnostics.push(format!(
            "{single} pieces had a single binding point and were left whole"
        ));
    }
    let mut mesh_sweep = Vec::new();
    if cfg.mesh_sweep {
        let spacings = cfg.sweep_spacings(img.scale());
        match contiguity_sweep(&cleaned, &segmentation.separated, &spacings, Variant::Unfilled) {
            Ok(r) => mesh_sweep.extend(r),
            Err(e) => diagnostics.push(format!("mesh sweep: {e}")),
        }
        if cfg.filled_variant {
            match contiguity_sweep(&filled.initial, &filled.separated, &spacings, Variant::Filled) {
                Ok(r) => mesh_sweep.extend(r),
                Err(e) => diagnostics.push(format!("filled mesh sweep: {e}")),
            }
        }
    }
    Ok(Analysis {
        config: cfg.clone(),
        threshold,
        threshold_fallback: fallback,
        threshold_curve: curve,
        binary,
        cleaned,
        segmentation,
        filled,
        summary,
        mesh_sweep,
        diagnostics,
    })
}

/// Particle pixels with a 4-neighbour outside their component.
pub fn boundary_pixels(labels: &LabeledRaster) -> Vec<Point> {
    let mut out = Vec::new();
    for y in 0..labels.height() as i32 {
        for x in 0..labels.width() as i32 {
            let l = labels.at(Point::new(x, y));
            if l == 0 {
                continue;
            }
            let edge = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|&(dx, dy)| labels.at(Point::new(x + dx, y + dy)) != l);
            if edge {
                out.push(Point::new(x, y));
            }
        }
    }
    out
}

/// Binding points and neck segments of `seg`, with particle outlines.
pub fn annotations(seg: &SegmentationResult) -> Overlay {
    let mut items = vec![Annotation::Boundary {
        pixels: boundary_pixels(&seg.particles),
        color: BOUNDARY_COLOR,
    }];
    for p in &seg.pairs {
        items.push(Annotation::Segment {
            from: p.a.position,
            to: p.b.position,
            color: SEGMENT_COLOR,
        });
    }
    for p in seg
        .pairs
        .iter()
        .flat_map(|p| [p.a, p.b])
        .chain(seg.unmatched.iter().copied())
    {
        items.push(Annotation::Marker {
            at: p.position,
            arm: 3,
            color: MARKER_COLOR,
        });
    }
    Overlay { items }
}

impl Analysis {
    /// Named overlay images in pipeline order: binary, cleaned, separated, annotated.
    pub fn overlays(&self, gray: &GrayRaster) -> Vec<(&'static str, GrayRaster, Overlay)> {
        vec![
            ("binary", self.binary.to_gray(255, 0), Overlay::default()),
            ("cleaned", self.cleaned.to_gray(255, 0), Overlay::default()),
            (
                "separated",
                self.segmentation.separated.to_gray(255, 0),
                Overlay::default(),
            ),
            ("annotated", gray.clone(), annotations(&self.segmentation)),
        ]
    }
}
