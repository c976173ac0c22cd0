//! Synthetic two-phase microstructures with analytic ground truth.
//!
//! Particles are discs; a neck is the lens where two discs overlap, and its
//! true separating line is the common chord. Inclusions are binder discs
//! strictly inside a single host. Pixels are particle when their centre lies
//! inside a disc and outside every inclusion.
//!
//! Spec text format, one item per line, `#` starts a comment:
//!
//! ```text
//! seed = 42
//! width = 1200
//! height = 900
//! scale = 0.25            # µm per pixel
//! particle_level = 200
//! binder_level = 30
//! noise = 0.01            # per-pixel flip probability
//! min_gap_px = 6
//! count = 12              # random particles
//! necks = 7               # random necks, at most count - 1
//! diameter_um = 40 60
//! waist_fraction = 0.1 0.4
//! inclusions = 2
//! inclusion_diameter_um = 2 2.5
//! disc 100 120 20         # x_px y_px radius_um
//! neck 0 1 8              # disc indices, optional waist µm
//! inclusion 0 2 3 -4      # host, diameter µm, offset px from host centre
//! ```
//!
//! Explicit discs come first. A `neck i j w` record moves disc `j` along the
//! line of centres so the chord of the pair is `w` µm long.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::morphology::find_holes;
use crate::raster::{BinaryRaster, GrayRaster};
use crate::stereology::{line_positions, line_step, Direction, InterfaceCounts, LineCount};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscSpec {
    /// Centre, pixels.
    pub x: f64,
    pub y: f64,
    pub radius_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeckSpec {
    pub i: usize,
    pub j: usize,
    /// Chord length; `None` keeps the given positions.
    pub waist_um: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionSpec {
    pub host: usize,
    pub diameter_um: f64,
    /// Offset from the host centre, pixels.
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub scale: f64,
    pub particle_level: u8,
    pub binder_level: u8,
    pub noise: f64,
    /// Minimum gap between particles that are not necked, pixels.
    pub min_gap_px: f64,
    pub discs: Vec<DiscSpec>,
    pub necks: Vec<NeckSpec>,
    pub inclusions: Vec<InclusionSpec>,
    pub random_count: usize,
    pub random_necks: usize,
    pub diameter_um: (f64, f64),
    pub waist_fraction: (f64, f64),
    pub random_inclusions: usize,
    pub inclusion_diameter_um: (f64, f64),
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            width: 256,
            height: 256,
            scale: 0.25,
            particle_level: 200,
            binder_level: 30,
            noise: 0.0,
            min_gap_px: 6.0,
            discs: Vec::new(),
            necks: Vec::new(),
            inclusions: Vec::new(),
            random_count: 0,
            random_necks: 0,
            diameter_um: (40.0, 60.0),
            waist_fraction: (0.1, 0.4),
            random_inclusions: 0,
            inclusion_diameter_um: (2.0, 2.5),
        }
    }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::SpecSyntax {
        line,
        reason: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::SpecSyntax {
        line,
        reason: format!("invalid {what} `{tok}`"),
    })
}

impl SynthSpec {
    /// Two discs of `radius_px` with centres `distance_px` apart, necked.
    pub fn dumbbell(radius_px: f64, distance_px: f64, scale: f64) -> SynthSpec {
        let margin = 20.0;
        let width = (2.0 * radius_px + distance_px + 2.0 * margin).ceil() as usize;
        let height = (2.0 * radius_px + 2.0 * margin).ceil() as usize;
        let cy = height as f64 / 2.0;
        let x0 = (width as f64 - distance_px) / 2.0;
        SynthSpec {
            width,
            height,
            scale,
            discs: vec![
                DiscSpec {
                    x: x0,
                    y: cy,
                    radius_um: radius_px * scale,
                },
                DiscSpec {
                    x: x0 + distance_px,
                    y: cy,
                    radius_um: radius_px * scale,
                },
            ],
            necks: vec![NeckSpec {
                i: 0,
                j: 1,
                waist_um: None,
            }],
            ..SynthSpec::default()
        }
    }

    /// Discs in a row, each necked to the next.
    pub fn chain(n: usize, radius_px: f64, distance_px: f64, scale: f64) -> SynthSpec {
        let margin = 20.0;
        let width = (2.0 * radius_px + (n - 1) as f64 * distance_px + 2.0 * margin).ceil() as usize;
        let height = (2.0 * radius_px + 2.0 * margin).ceil() as usize;
        let x0 = margin + radius_px;
        SynthSpec {
            width,
            height,
            scale,
            discs: (0..n)
                .map(|k| DiscSpec {
                    x: x0 + k as f64 * distance_px,
                    y: height as f64 / 2.0,
                    radius_um: radius_px * scale,
                })
                .collect(),
            necks: (1..n)
                .map(|k| NeckSpec {
                    i: k - 1,
                    j: k,
                    waist_um: None,
                })
                .collect(),
            ..SynthSpec::default()
        }
    }

    pub fn parse(text: &str) -> Result<SynthSpec> {
        let mut spec = SynthSpec::default();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some((key, value)) = content.split_once('=') {
                let vals: Vec<&str> = value.split_whitespace().collect();
                if vals.len() > 2 {
                    return Err(Error::SpecSyntax {
                        line,
                        reason: "trailing tokens".into(),
                    });
                }
                let first = vals.first().copied();
                let pair = |what: &str| -> Result<(f64, f64)> {
                    let lo = parse_num(first, line, what)?;
                    let hi = match vals.get(1) {
                        Some(t) => parse_num(Some(t), line, what)?,
                        None => lo,
                    };
                    Ok((lo, hi))
                };
                match key.trim() {
                    "seed" => spec.seed = parse_num(first, line, "seed")?,
                    "width" => spec.width = parse_num(first, line, "width")?,
                    "height" => spec.height = parse_num(first, line, "height")?,
                    "scale" => spec.scale = parse_num(first, line, "scale")?,
                    "particle_level" => spec.particle_level = parse_num(first, line, "level")?,
                    "binder_level" => spec.binder_level = parse_num(first, line, "level")?,
                    "noise" => spec.noise = parse_num(first, line, "noise")?,
                    "min_gap_px" => spec.min_gap_px = parse_num(first, line, "gap")?,
                    "count" => spec.random_count = parse_num(first, line, "count")?,
                    "necks" => spec.random_necks = parse_num(first, line, "count")?,
                    "inclusions" => spec.random_inclusions = parse_num(first, line, "count")?,
                    "diameter_um" => spec.diameter_um = pair("diameter range")?,
                    "waist_fraction" => spec.waist_fraction = pair("fraction range")?,
                    "inclusion_diameter_um" => spec.inclusion_diameter_um = pair("diameter range")?,
                    other => {
                        return Err(Error::SpecSyntax {
                            line,
                            reason: format!("unknown key `{other}`"),
                        })
                    }
                }
                continue;
            }
            let mut toks = content.split_whitespace();
            let record = toks.next().unwrap_or_default();
            match record {
                "disc" => spec.discs.push(DiscSpec {
                    x: parse_num(toks.next(), line, "x")?,
                    y: parse_num(toks.next(), line, "y")?,
                    radius_um: parse_num(toks.next(), line, "radius")?,
                }),
                "neck" => spec.necks.push(NeckSpec {
                    i: parse_num(toks.next(), line, "disc index")?,
                    j: parse_num(toks.next(), line, "disc index")?,
                    waist_um: toks.next().map(|t| parse_num(Some(t), line, "waist")).transpose()?,
                }),
                "inclusion" => spec.inclusions.push(InclusionSpec {
                    host: parse_num(toks.next(), line, "host index")?,
                    diameter_um: parse_num(toks.next(), line, "diameter")?,
                    dx: parse_num(toks.next(), line, "dx")?,
                    dy: parse_num(toks.next(), line, "dy")?,
                }),
                other => {
                    return Err(Error::SpecSyntax {
                        line,
                        reason: format!("unknown record `{other}`"),
                    })
                }
            }
            if toks.next().is_some() {
                return Err(Error::SpecSyntax {
                    line,
                    reason: "trailing tokens".into(),
                });
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SynthSpec> {
        SynthSpec::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "scale = {}", self.scale);
        let _ = writeln!(s, "particle_level = {}", self.particle_level);
        let _ = writeln!(s, "binder_level = {}", self.binder_level);
        let _ = writeln!(s, "noise = {}", self.noise);
        let _ = writeln!(s, "min_gap_px = {}", self.min_gap_px);
        if self.random_count > 0 {
            let _ = writeln!(s, "count = {}", self.random_count);
            let _ = writeln!(s, "necks = {}", self.random_necks);
            let _ = writeln!(s, "diameter_um = {} {}", self.diameter_um.0, self.diameter_um.1);
            let _ = writeln!(
                s,
                "waist_fraction = {} {}",
                self.waist_fraction.0, self.waist_fraction.1
            );
        }
        if self.random_inclusions > 0 {
            let _ = writeln!(s, "inclusions = {}", self.random_inclusions);
            let _ = writeln!(
                s,
                "inclusion_diameter_um = {} {}",
                self.inclusion_diameter_um.0, self.inclusion_diameter_um.1
            );
        }
        for d in &self.discs {
            let _ = writeln!(s, "disc {} {} {}", d.x, d.y, d.radius_um);
        }
        for n in &self.necks {
            match n.waist_um {
                Some(w) => writeln!(s, "neck {} {} {}", n.i, n.j, w),
                None => writeln!(s, "neck {} {}", n.i, n.j),
            }
            .ok();
        }
        for c in &self.inclusions {
            let _ = writeln!(s, "inclusion {} {} {} {}", c.host, c.diameter_um, c.dx, c.dy);
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.width == 0 || self.height == 0 {
            return bad("canvas must be non-empty".into());
        }
        if !(self.scale > 0.0) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        if self.particle_level == self.binder_level {
            return bad("particle and binder levels must differ".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 1), got {}", self.noise));
        }
        if !(self.min_gap_px >= 2.0) {
            return bad("min_gap_px must be at least 2".into());
        }
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi;
        if !range_ok(self.diameter_um) || !range_ok(self.inclusion_diameter_um) {
            return bad("diameter ranges must be positive and ordered".into());
        }
        let (wl, wh) = self.waist_fraction;
        if !(wl > 0.0 && wl <= wh && wh < 1.0) {
            return bad("waist_fraction must lie in (0, 1) and be ordered".into());
        }
        if self.random_count > 0 && self.random_necks >= self.random_count + self.discs.len().min(1) {
            return bad("random necks must be fewer than random particles".into());
        }
        if self.random_count == 0 && self.random_necks > 0 {
            return bad("random necks need random particles".into());
        }
        for d in &self.discs {
            if !(d.radius_um > 0.0) {
                return bad("disc radius must be positive".into());
            }
        }
        for n in &self.necks {
            if n.i >= self.discs.len() || n.j >= self.discs.len() || n.i == n.j {
                return bad(format!("neck {} {} does not name two discs", n.i, n.j));
            }
            if let Some(w) = n.waist_um {
                let r = self.discs[n.i].radius_um.min(self.discs[n.j].radius_um);
                if !(w > 0.0 && w < 2.0 * r) {
                    return bad(format!("neck {} {} waist must lie in (0, {}) µm", n.i, n.j, 2.0 * r));
                }
            }
        }
        for c in &self.inclusions {
            if c.host >= self.discs.len() || !(c.diameter_um > 0.0) {
                return bad(format!("inclusion host {} invalid", c.host));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueParticle {
    /// Pixels.
    pub x: f64,
    pub y: f64,
    pub radius_um: f64,
    /// µm², disc minus the parts beyond its neck chords, minus inclusions.
    pub area_um2: f64,
    /// µm, equivalent diameter of `area_um2`.
    pub diameter_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueNeck {
    pub a: usize,
    pub b: usize,
    /// Chord endpoints, pixels.
    pub p0: (f64, f64),
    pub p1: (f64, f64),
    pub waist_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueInclusion {
    pub host: usize,
    pub x: f64,
    pub y: f64,
    pub diameter_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    pub scale: f64,
    pub particle_count: usize,
    pub neck_count: usize,
    pub particles: Vec<TrueParticle>,
    pub necks: Vec<TrueNeck>,
    pub inclusions: Vec<TrueInclusion>,
    /// Percent, analytic.
    pub binder_pct: f64,
    /// µm, mean of per-particle equivalent diameters.
    pub diameter_mean_um: f64,
    /// Pixel accounting of the noise-free mask.
    pub mask_binder_px: usize,
    pub mask_inclusion_px: usize,
    pub inclusion_pct_of_binder: f64,
    /// Noise-free mask.
    #[serde(skip)]
    pub mask: BinaryRaster,
}

struct Disc {
    x: f64,
    y: f64,
    r: f64,
}

/// Half chord and distance of the chord from the first centre.
fn chord_geometry(a: &Disc, b: &Disc) -> Option<(f64, f64)> {
    let d = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    if d >= a.r + b.r || d <= (a.r - b.r).abs() {
        return None;
    }
    let along = (d * d + a.r * a.r - b.r * b.r) / (2.0 * d);
    Some(((a.r * a.r - along * along).sqrt(), along))
}

/// Chord end points and length.
type Chord = ((f64, f64), (f64, f64), f64);

fn chord_endpoints(a: &Disc, b: &Disc) -> Option<Chord> {
    let (h, along) = chord_geometry(a, b)?;
    let d = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    let (ux, uy) = ((b.x - a.x) / d, (b.y - a.y) / d);
    let (mx, my) = (a.x + along * ux, a.y + along * uy);
    Some(((mx - h * uy, my + h * ux), (mx + h * uy, my - h * ux), 2.0 * h))
}

/// Centre distance giving a chord of `waist` between radii `ra`, `rb`.
fn neck_distance(ra: f64, rb: f64, waist: f64) -> f64 {
    let h = waist / 2.0;
    (ra * ra - h * h).sqrt() + (rb * rb - h * h).sqrt()
}

/// Area of the disc part beyond a chord at signed distance `along` from the centre.
fn segment_area(r: f64, along: f64) -> f64 {
    let a = along.clamp(-r, r);
    r * r * (a / r).acos() - a * (r * r - a * a).sqrt()
}

fn gap(a: &Disc, b: &Disc) -> f64 {
    ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt() - a.r - b.r
}

const PLACEMENT_TRIES: usize = 2000;

struct Layout {
    discs: Vec<Disc>,
    necks: Vec<(usize, usize)>,
    inclusions: Vec<(usize, Disc)>,
}

fn layout(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Layout> {
    let s = spec.scale;
    let mut discs: Vec<Disc> = spec
        .discs
        .iter()
        .map(|d| Disc {
            x: d.x,
            y: d.y,
            r: d.radius_um / s,
        })
        .collect();
    let mut necks = Vec::new();
    for n in &spec.necks {
        if let Some(w) = n.waist_um {
            let (a, b) = (&discs[n.i], &discs[n.j]);
            let d0 = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
            let (ux, uy) = if d0 > 0.0 {
                ((b.x - a.x) / d0, (b.y - a.y) / d0)
            } else {
                (1.0, 0.0)
            };
            let d = neck_distance(a.r, b.r, w / s);
            let (nx, ny) = (a.x + d * ux, a.y + d * uy);
            discs[n.j].x = nx;
            discs[n.j].y = ny;
        }
        if chord_geometry(&discs[n.i], &discs[n.j]).is_none() {
            return Err(Error::InvalidSpec(format!(
                "neck {} {}: discs do not overlap",
                n.i, n.j
            )));
        }
        necks.push((n.i.min(n.j), n.i.max(n.j)));
    }
    for i in 0..discs.len() {
        for j in i + 1..discs.len() {
            if !necks.contains(&(i, j)) && gap(&discs[i], &discs[j]) < 2.0 {
                return Err(Error::InvalidSpec(format!("discs {i} and {j} are closer than 2 px")));
            }
        }
    }

    let (w, h) = (spec.width as f64, spec.height as f64);
    let margin = spec.min_gap_px;
    let inside =
        |d: &Disc| d.x - d.r >= margin && d.y - d.r >= margin && d.x + d.r <= w - margin && d.y + d.r <= h - margin;
    // angular half-width of each neck on each disc
    let mut neck_arcs: Vec<Vec<(f64, f64)>> = vec![Vec::new(); discs.len()];
    let n_random = spec.random_count;
    let mut attach = vec![false; n_random];
    {
        // the first random particle seeds the packing unless explicit discs exist
        let first = usize::from(discs.is_empty());
        let mut idx: Vec<usize> = (first..n_random).collect();
        for k in 0..spec.random_necks.min(idx.len()) {
            let pick = rng.random_range(k..idx.len());
            idx.swap(k, pick);
            attach[idx[k]] = true;
        }
    }
    #[allow(clippy::needless_range_loop)]
    for k in 0..n_random {
        let r = rng.random_range(spec.diameter_um.0..=spec.diameter_um.1) / s / 2.0;
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            if attach[k] {
                let parent = rng.random_range(0..discs.len());
                let p = &discs[parent];
                let frac = rng.random_range(spec.waist_fraction.0..=spec.waist_fraction.1);
                let waist = frac * 2.0 * r.min(p.r);
                let d = neck_distance(p.r, r, waist);
                let theta = rng.random_range(0.0..2.0 * PI);
                let cand = Disc {
                    x: p.x + d * theta.cos(),
                    y: p.y + d * theta.sin(),
                    r,
                };
                if !inside(&cand) {
                    continue;
                }
                if discs
                    .iter()
                    .enumerate()
                    .any(|(o, od)| o != parent && gap(od, &cand) < spec.min_gap_px)
                {
                    continue;
                }
                // keep necks on the parent apart
                let half = (waist / 2.0 / p.r).asin();
                let clear = 0.3;
                if neck_arcs[parent]
                    .iter()
                    .any(|&(t, hw)| angle_between(t, theta) < hw + half + clear)
                {
                    continue;
                }
                placed = Some((cand, Some((parent, theta, half))));
                break;
            } else {
                let cand = Disc {
                    x: rng.random_range(r + margin..=(w - r - margin).max(r + margin)),
                    y: rng.random_range(r + margin..=(h - r - margin).max(r + margin)),
                    r,
                };
                if !inside(&cand) || discs.iter().any(|od| gap(od, &cand) < spec.min_gap_px) {
                    continue;
                }
                placed = Some((cand, None));
                break;
            }
        }
        let (disc, link) = placed.ok_or(Error::Placement(k))?;
        let new = discs.len();
        neck_arcs.push(Vec::new());
        if let Some((parent, theta, half_parent)) = link {
            let p = &discs[parent];
            let (hchord, _) = chord_geometry(p, &disc).expect("placed to overlap");
            neck_arcs[parent].push((theta, half_parent));
            neck_arcs[new].push((theta + PI, (hchord / disc.r).min(1.0).asin()));
            necks.push((parent, new));
        }
        discs.push(disc);
    }

    let mut inclusions: Vec<(usize, Disc)> = spec
        .inclusions
        .iter()
        .map(|c| {
            let host = &discs[c.host];
            (
                c.host,
                Disc {
                    x: host.x + c.dx,
                    y: host.y + c.dy,
                    r: c.diameter_um / s / 2.0,
                },
            )
        })
        .collect();
    for _ in 0..spec.random_inclusions {
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let host = rng.random_range(0..discs.len());
            let hd = &discs[host];
            let r = rng.random_range(spec.inclusion_diameter_um.0..=spec.inclusion_diameter_um.1) / s / 2.0;
            let reach = hd.r - r - 0.25 * hd.r;
            if reach <= 0.0 {
                continue;
            }
            let (rho, phi) = (reach * rng.random::<f64>().sqrt(), rng.random_range(0.0..2.0 * PI));
            let cand = Disc {
                x: hd.x + rho * phi.cos(),
                y: hd.y + rho * phi.sin(),
                r,
            };
            let other_disc = discs
                .iter()
                .enumerate()
                .any(|(o, od)| o != host && gap(od, &cand) < spec.min_gap_px);
            let other_incl = inclusions.iter().any(|(_, oi)| gap(oi, &cand) < spec.min_gap_px);
            if !other_disc && !other_incl {
                placed = Some((host, cand));
                break;
            }
        }
        inclusions.push(placed.ok_or(Error::Placement(discs.len() + inclusions.len()))?);
    }
    for (host, inc) in &inclusions {
        let hd = &discs[*host];
        let strictly_inside = ((inc.x - hd.x).powi(2) + (inc.y - hd.y).powi(2)).sqrt() + inc.r < hd.r - 1.0;
        let clear = discs.iter().enumerate().all(|(o, od)| o == *host || gap(od, inc) > 1.0);
        if !strictly_inside || !clear {
            return Err(Error::InvalidSpec(format!(
                "inclusion in disc {host} is not strictly inside it"
            )));
        }
    }
    Ok(Layout {
        discs,
        necks,
        inclusions,
    })
}

fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn inside_disc(d: &Disc, px: f64, py: f64) -> bool {
    (px - d.x).powi(2) + (py - d.y).powi(2) < d.r * d.r
}

fn paint(bits: &mut [u8], w: usize, h: usize, d: &Disc, v: u8) {
    let y0 = (d.y - d.r).floor().max(0.0) as usize;
    let y1 = ((d.y + d.r).ceil().max(0.0) as usize).min(h);
    let x0 = (d.x - d.r).floor().max(0.0) as usize;
    let x1 = ((d.x + d.r).ceil().max(0.0) as usize).min(w);
    for y in y0..y1 {
        for x in x0..x1 {
            if inside_disc(d, x as f64 + 0.5, y as f64 + 0.5) {
                bits[y * w + x] = v;
            }
        }
    }
}

fn render_mask(l: &Layout, w: usize, h: usize, scale: f64) -> BinaryRaster {
    let mut bits = vec![0u8; w * h];
    for d in &l.discs {
        paint(&mut bits, w, h, d, 1);
    }
    for (_, c) in &l.inclusions {
        paint(&mut bits, w, h, c, 0);
    }
    BinaryRaster::from_parts_unchecked(w, h, bits, scale)
}

/// Renders the spec. The gray raster carries noise; the ground truth does not.
pub fn generate(spec: &SynthSpec) -> Result<(GrayRaster, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let l = layout(spec, &mut rng)?;
    let mask = render_mask(&l, spec.width, spec.height, spec.scale);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);
    let pixels = mask
        .bits()
        .iter()
        .map(|&b| {
            let flip = spec.noise > 0.0 && noise_rng.random::<f64>() < spec.noise;
            if (b == 1) != flip {
                spec.particle_level
            } else {
                spec.binder_level
            }
        })
        .collect();
    let gray = GrayRaster::new(spec.width, spec.height, pixels, spec.scale)?;

    let s = spec.scale;
    let mut area_px: Vec<f64> = l.discs.iter().map(|d| PI * d.r * d.r).collect();
    let mut necks = Vec::new();
    let mut lens_px = 0.0;
    for &(a, b) in &l.necks {
        let (da, db) = (&l.discs[a], &l.discs[b]);
        let (hh, along_a) = chord_geometry(da, db).expect("necked discs overlap");
        let along_b = ((db.x - da.x).powi(2) + (db.y - da.y).powi(2)).sqrt() - along_a;
        let (sa, sb) = (segment_area(da.r, along_a), segment_area(db.r, along_b));
        area_px[a] -= sa;
        area_px[b] -= sb;
        lens_px += sa + sb;
        let (p0, p1, _) = chord_endpoints(da, db).expect("necked discs overlap");
        necks.push(TrueNeck {
            a,
            b,
            p0,
            p1,
            waist_um: 2.0 * hh * s,
        });
    }
    let mut inclusions = Vec::new();
    let mut inclusion_px = 0.0;
    for (host, c) in &l.inclusions {
        area_px[*host] -= PI * c.r * c.r;
        inclusion_px += PI * c.r * c.r;
        inclusions.push(TrueInclusion {
            host: *host,
            x: c.x,
            y: c.y,
            diameter_um: 2.0 * c.r * s,
        });
    }
    let particles: Vec<TrueParticle> = l
        .discs
        .iter()
        .zip(&area_px)
        .map(|(d, &a)| TrueParticle {
            x: d.x,
            y: d.y,
            radius_um: d.r * s,
            area_um2: a * s * s,
            diameter_um: crate::morphology::equivalent_diameter(a * s * s),
        })
        .collect();
    let disc_total: f64 = l.discs.iter().map(|d| PI * d.r * d.r).sum();
    let particle_px = disc_total - lens_px - inclusion_px;
    let canvas = (spec.width * spec.height) as f64;
    let mask_binder_px = mask.bits().len() - mask.count_ones();
    let mask_inclusion_px: usize = find_holes(&mask).iter().map(|h| h.pixel_count).sum();
    let diameter_mean_um = particles.iter().map(|p| p.diameter_um).sum::<f64>() / particles.len().max(1) as f64;
    let truth = GroundTruth {
        width: spec.width,
        height: spec.height,
        scale: s,
        particle_count: particles.len(),
        neck_count: necks.len(),
        particles,
        necks,
        inclusions,
        binder_pct: 100.0 * (1.0 - particle_px / canvas),
        diameter_mean_um,
        mask_binder_px,
        mask_inclusion_px,
        inclusion_pct_of_binder: if mask_binder_px > 0 {
            100.0 * mask_inclusion_px as f64 / mask_binder_px as f64
        } else {
            0.0
        },
        mask,
    };
    Ok((gray, truth))
}

/// Integer pixel range whose centres lie strictly inside `d` on the line
/// at `c` (pixel-centre coordinate across the line).
fn disc_run(d: &TrueDisc, c: f64, dir: Direction) -> Option<(i64, i64)> {
    let (along, across) = match dir {
        Direction::Horizontal => (d.x, d.y),
        Direction::Vertical => (d.y, d.x),
    };
    let dy = c - across;
    let h2 = d.r * d.r - dy * dy;
    if h2 <= 0.0 {
        return None;
    }
    let hw = h2.sqrt();
    // pixel k is inside iff k + 0.5 lies strictly within (along - hw, along + hw)
    let lo = (along - hw - 0.5).floor() as i64 + 1;
    let hi = (along + hw - 0.5).ceil() as i64 - 1;
    (lo <= hi).then_some((lo, hi))
}

struct TrueDisc {
    x: f64,
    y: f64,
    r: f64,
}

/// Line-scan interface counts computed from the geometry alone: particle
/// runs from disc and inclusion chords, neck crossings from the true chords.
pub fn oracle_counts(truth: &GroundTruth, spacing_um: f64, direction: Direction) -> Result<InterfaceCounts> {
    let s = truth.scale;
    let step = line_step(spacing_um, s)?;
    let (extent, length) = match direction {
        Direction::Horizontal => (truth.height, truth.width),
        Direction::Vertical => (truth.width, truth.height),
    };
    let discs: Vec<TrueDisc> = truth
        .particles
        .iter()
        .map(|p| TrueDisc {
            x: p.x,
            y: p.y,
            r: p.radius_um / s,
        })
        .collect();
    let incl: Vec<TrueDisc> = truth
        .inclusions
        .iter()
        .map(|c| TrueDisc {
            x: c.x,
            y: c.y,
            r: c.diameter_um / s / 2.0,
        })
        .collect();
    let mut per_line = Vec::new();
    for pos in line_positions(extent, step) {
        let c = pos as f64 + 0.5;
        // +1 opens a particle run, -1 closes it, inclusions the other way round
        let mut events: Vec<(i64, i32)> = Vec::new();
        for d in &discs {
            if let Some((lo, hi)) = disc_run(d, c, direction) {
                let (lo, hi) = (lo.max(0), hi.min(length as i64 - 1));
                if lo <= hi {
                    events.push((lo, 1));
                    events.push((hi + 1, -1));
                }
            }
        }
        let mut holes: Vec<(i64, i64)> = incl.iter().filter_map(|d| disc_run(d, c, direction)).collect();
        holes.sort();
        events.sort();
        // merge coverage into particle runs
        let mut runs: Vec<(i64, i64)> = Vec::new();
        let mut depth = 0;
        let mut start = 0;
        let mut k = 0;
        while k < events.len() {
            let x = events[k].0;
            let before = depth;
            while k < events.len() && events[k].0 == x {
                depth += events[k].1;
                k += 1;
            }
            if before == 0 && depth > 0 {
                start = x;
            } else if before > 0 && depth == 0 {
                runs.push((start, x - 1));
            }
        }
        // cut inclusions out of the runs
        let mut cut: Vec<(i64, i64)> = Vec::new();
        for (lo, hi) in runs {
            let mut cur = lo;
            for &(hl, hh) in holes.iter().filter(|&&(hl, hh)| hh >= lo && hl <= hi) {
                if hl > cur {
                    cut.push((cur, hl - 1));
                }
                cur = cur.max(hh + 1);
            }
            if cur <= hi {
                cut.push((cur, hi));
            }
        }
        let len = length as i64;
        let wb: u32 = cut
            .iter()
            .map(|&(lo, hi)| u32::from(lo > 0) + u32::from(hi < len - 1))
            .sum();
        let ww = truth
            .necks
            .iter()
            .filter(|n| {
                let (a, b) = match direction {
                    Direction::Horizontal => (n.p0.1, n.p1.1),
                    Direction::Vertical => (n.p0.0, n.p1.0),
                };
                a.min(b) < c && c < a.max(b)
            })
            .count() as u32;
        per_line.push(LineCount {
            position: pos,
            t_init: wb,
            t_sep: wb + 2 * ww,
            wb: f64::from(wb),
            ww: f64::from(ww),
        });
    }
    let lines = per_line.len();
    let total_wb: f64 = per_line.iter().map(|l| l.wb).sum();
    let total_ww: f64 = per_line.iter().map(|l| l.ww).sum();
    let line_length = length as f64 * s;
    Ok(InterfaceCounts {
        direction,
        mesh_spacing: spacing_um,
        step_px: step,
        lines,
        line_length,
        total_wb,
        total_ww,
        n_wb_per_line: total_wb / lines as f64,
        n_ww_per_line: total_ww / lines as f64,
        n_wb_per_um: total_wb / lines as f64 / line_length,
        n_ww_per_um: total_ww / lines as f64 / line_length,
        clamped_lines: 0,
        per_line,
    })
}

/// Combined oracle contiguity over both directions.
pub fn oracle_contiguity(truth: &GroundTruth, spacing_um: f64) -> Result<f64> {
    let h = oracle_counts(truth, spacing_um, Direction::Horizontal)?;
    let v = oracle_counts(truth, spacing_um, Direction::Vertical)?;
    crate::stereology::contiguity(h.total_ww + v.total_ww, h.total_wb + v.total_wb)
}
