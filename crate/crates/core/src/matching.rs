//! Binding-point pairing, neck-line drawing and the particle separation pass.
//!
//! Each connected piece of the particle phase is either accepted as a single
//! particle (high circularity) or split: small round holes are filled, the
//! outer and remaining hole boundaries are chain coded, concave binding
//! points are detected and paired, and every pair is joined by a two-pixel
//! binder line.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::boundary::{detect_all, trace_boundaries, BindingPoint, ChainCode};
use crate::geometry::{angle_diff, bresenham, screen_angle, thick_segment, Point};
use crate::morphology::{
    classify_and_fill_holes, component_shapes, component_stats, label_components, ComponentShape, ComponentStats,
};
use crate::raster::{BinaryRaster, LabeledRaster};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Accept feasible pairs in ascending score order.
    #[default]
    Greedy,
    /// Maximum number of pairs, then minimum total score.
    Optimal,
}

impl std::str::FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Pairing::Greedy),
            "optimal" => Ok(Pairing::Optimal),
            other => Err(Error::param(
                "pairing",
                format!("expected `greedy` or `optimal`, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub a: BindingPoint,
    pub b: BindingPoint,
    /// Indices of `a` and `b` in the matched point list, `a_index < b_index`.
    pub a_index: usize,
    pub b_index: usize,
    /// µm
    pub neck_length: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    i: usize,
    j: usize,
    dist_um: f64,
    score: f64,
}

fn segment_in_particle(img: &BinaryRaster, a: Point, b: Point) -> bool {
    bresenham(a, b).into_iter().all(|p| img.is_particle(p))
}

fn candidates(points: &[BindingPoint], img: &BinaryRaster, max_dist_um: f64, angle_tol: f64) -> Vec<Candidate> {
    let scale = img.scale();
    let mut out = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (a, b) = (&points[i], &points[j]);
            if a.position == b.position {
                continue;
            }
            let dist_um = a.position.distance(b.position) * scale;
            if dist_um > max_dist_um {
                continue;
            }
            let dev_a = angle_diff(a.inward_direction, screen_angle(a.position, b.position));
            let dev_b = angle_diff(b.inward_direction, screen_angle(b.position, a.position));
            if dev_a > angle_tol || dev_b > angle_tol {
                continue;
            }
            if !segment_in_particle(img, a.position, b.position) {
                continue;
            }
            let score = dist_um / max_dist_um + 0.5 * (dev_a + dev_b) / angle_tol;
            out.push(Candidate { i, j, dist_um, score });
        }
    }
    out
}

fn greedy(cands: &[Candidate], used: &mut [bool]) -> Vec<Candidate> {
    let mut order: Vec<&Candidate> = cands.iter().collect();
    order.sort_by(|x, y| x.score.total_cmp(&y.score).then(x.i.cmp(&y.i)).then(x.j.cmp(&y.j)));
    let mut out = Vec::new();
    for c in order {
        if !used[c.i] && !used[c.j] {
            used[c.i] = true;
            used[c.j] = true;
            out.push(*c);
        }
    }
    out
}

/// Largest connected candidate graph solved exactly; larger ones fall back to greedy.
const MAX_EXACT_NODES: usize = 18;

fn optimal(n: usize, cands: &[Candidate], used: &mut [bool]) -> Vec<Candidate> {
    // union-find over candidate edges
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for c in cands {
        let (a, b) = (find(&mut parent, c.i), find(&mut parent, c.j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_group = HashMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        let g = *root_group.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(v);
    }
    let mut out = Vec::new();
    for nodes in groups.into_iter().filter(|g| g.len() > 1) {
        let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let edges: Vec<&Candidate> = cands.iter().filter(|c| local.contains_key(&c.i)).collect();
        if nodes.len() > MAX_EXACT_NODES {
            let owned: Vec<Candidate> = edges.into_iter().copied().collect();
            out.extend(greedy(&owned, used));
            continue;
        }
        let m = nodes.len();
        let mut adj = vec![Vec::new(); m];
        for e in &edges {
            adj[local[&e.i]].push((local[&e.j], **e));
        }
        // best[mask] = (pairs, total score) over the nodes in mask
        let full = (1usize << m) - 1;
        let mut best: Vec<(usize, f64)> = vec![(0, 0.0); full + 1];
        let mut choice: Vec<Option<Candidate>> = vec![None; full + 1];
        for mask in 1..=full {
            let low = mask.trailing_zeros() as usize;
            let rest = mask & !(1 << low);
            let mut b = best[rest];
            let mut ch = None;
            for &(k, e) in &adj[low] {
                if rest & (1 << k) == 0 {
                    continue;
                }
                let sub = best[rest & !(1 << k)];
                let cand = (sub.0 + 1, sub.1 + e.score);
                if cand.0 > b.0 || (cand.0 == b.0 && cand.1 < b.1 - 1e-12) {
                    b = cand;
                    ch = Some(e);
                }
            }
            best[mask] = b;
            choice[mask] = ch;
        }
        let mut mask = full;
        while mask != 0 {
            let low = mask.trailing_zeros() as usize;
            match choice[mask] {
                Some(e) => {
                    used[e.i] = true;
                    used[e.j] = true;
                    mask &= !(1 << local[&e.i]) & !(1 << local[&e.j]);
                    out.push(e);
                }
                None => mask &= !(1 << low),
            }
        }
    }
    out.sort_by(|x, y| x.score.total_cmp(&y.score).then(x.i.cmp(&y.i)));
    out
}

/// Pairs binding points whose connecting segment is short, stays inside the
/// particle phase and agrees with both inward directions.
///
/// Returns the pairs and the points left unmatched.
pub fn match_pairs(
    points: &[BindingPoint],
    img: &BinaryRaster,
    max_dist_um: f64,
    angle_tol_deg: f64,
    pairing: Pairing,
) -> Result<(Vec<MatchedPair>, Vec<BindingPoint>)> {
    if !(max_dist_um > 0.0) {
        return Err(Error::param("max_neck_um", "must be positive"));
    }
    if !(angle_tol_deg > 0.0 && angle_tol_deg <= 90.0) {
        return Err(Error::param("angle_tol_deg", "must lie in (0, 90]"));
    }
    let cands = candidates(points, img, max_dist_um, angle_tol_deg);
    let mut used = vec![false; points.len()];
    let chosen = match pairing {
        Pairing::Greedy => greedy(&cands, &mut used),
        Pairing::Optimal => optimal(points.len(), &cands, &mut used),
    };
    let pairs = chosen
        .into_iter()
        .map(|c| MatchedPair {
            a: points[c.i],
            b: points[c.j],
            a_index: c.i,
            b_index: c.j,
            neck_length: c.dist_um,
            score: c.score,
        })
        .collect();
    let unmatched = points.iter().zip(&used).filter(|(_, &u)| !u).map(|(p, _)| *p).collect();
    Ok((pairs, unmatched))
}

/// Pixels a neck line between `a` and `b` turns into binder.
pub fn neck_pixels(a: Point, b: Point) -> Vec<Point> {
    thick_segment(a, b)
}

/// Draws every pair as a two-pixel binder line. Fails if a pair's segment
/// leaves the particle phase of `img`.
pub fn draw_necks(img: &BinaryRaster, pairs: &[MatchedPair]) -> Result<BinaryRaster> {
    for (index, p) in pairs.iter().enumerate() {
        if let Some(bad) = bresenham(p.a.position, p.b.position)
            .into_iter()
            .find(|&q| !img.is_particle(q))
        {
            return Err(Error::InfeasibleNeck {
                index,
                x: bad.x,
                y: bad.y,
            });
        }
    }
    let mut out = img.clone();
    for p in pairs {
        for q in neck_pixels(p.a.position, p.b.position) {
            if out.contains(q) {
                out.set(q.x as usize, q.y as usize, false);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Pieces rounder than this are single particles.
    pub circularity_threshold: f64,
    /// Holes below this equivalent diameter (µm) and...
    pub hole_size_um: f64,
    /// ...above this circularity are filled before tracing.
    pub hole_circularity: f64,
    /// Direction smoothing and suppression window along chains, pixels.
    pub chain_window: usize,
    /// Absolute neck length limit, µm. `None` derives it per image.
    pub max_neck_um: Option<f64>,
    /// Adaptive neck limit as a fraction of the mean single-particle diameter.
    pub max_neck_factor: f64,
    pub angle_tol_deg: f64,
    pub pairing: Pairing,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            circularity_threshold: 0.85,
            hole_size_um: 3.0,
            hole_circularity: 0.6,
            chain_window: 5,
            max_neck_um: None,
            max_neck_factor: 0.75,
            angle_tol_deg: 45.0,
            pairing: Pairing::Greedy,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.circularity_threshold > 0.0 && self.circularity_threshold <= 1.0) {
            return Err(Error::param("circularity_threshold", "must lie in (0, 1]"));
        }
        if !(self.hole_size_um > 0.0) {
            return Err(Error::param("hole_size_um", "must be positive"));
        }
        if !(self.hole_circularity > 0.0) {
            return Err(Error::param("hole_circularity", "must be positive"));
        }
        if self.chain_window == 0 {
            return Err(Error::param("chain_window", "must be at least 1"));
        }
        if let Some(m) = self.max_neck_um {
            if !(m > 0.0) {
                return Err(Error::param("max_neck_um", "must be positive"));
            }
        }
        if !(self.max_neck_factor > 0.0) {
            return Err(Error::param("max_neck_factor", "must be positive"));
        }
        if !(self.angle_tol_deg > 0.0 && self.angle_tol_deg <= 90.0) {
            return Err(Error::param("angle_tol_deg", "must lie in (0, 90]"));
        }
        Ok(())
    }
}

/// Which branch of the separation pass a piece took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Circularity above the threshold: a single particle.
    Round,
    /// No binding points: a single particle.
    NoBindingPoints,
    /// One binding point, typically a partial particle at the frame edge.
    SingleBindingPoint,
    /// Binding points were paired (possibly zero pairs found).
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieceReport {
    pub label: u32,
    pub circularity: f64,
    pub route: Route,
    pub binding_points: usize,
    pub pairs: usize,
    pub filled_holes: usize,
    pub kept_holes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Input raster with neck lines drawn as binder.
    pub separated: BinaryRaster,
    pub particles: LabeledRaster,
    pub pairs: Vec<MatchedPair>,
    pub unmatched: Vec<BindingPoint>,
    /// Every detected binding point, image coordinates.
    pub binding_points: Vec<BindingPoint>,
    pub per_particle: Vec<ComponentShape>,
    pub pieces: Vec<PieceReport>,
    /// Boundaries traced for pieces that went through splitting.
    pub chains: Vec<ChainCode>,
    /// Neck length limit used, µm.
    pub max_neck_um: f64,
    /// Pieces in the input raster.
    pub input_pieces: usize,
    /// Particle pixels turned into binder by neck lines.
    pub drawn_pixels: usize,
}

struct PieceOutcome {
    report: PieceReport,
    points: Vec<BindingPoint>,
    pairs: Vec<MatchedPair>,
    unmatched: Vec<BindingPoint>,
    chains: Vec<ChainCode>,
}

/// Noise-sized pieces do not inform the adaptive neck limit.
const REFERENCE_MIN_DIAMETER_UM: f64 = 1.0;

/// Adaptive neck limit: `factor` times the mean equivalent diameter of round
/// pieces; all pieces are used when none is round.
pub fn adaptive_max_neck(shapes: &[ComponentShape], circularity_threshold: f64, factor: f64) -> f64 {
    let sized: Vec<&ComponentShape> = shapes
        .iter()
        .filter(|s| s.equivalent_diameter >= REFERENCE_MIN_DIAMETER_UM)
        .collect();
    let round: Vec<&&ComponentShape> = sized.iter().filter(|s| s.circularity > circularity_threshold).collect();
    let mean = |v: &mut dyn Iterator<Item = f64>| {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
        (n > 0).then(|| s / n as f64)
    };
    mean(&mut round.iter().map(|s| s.equivalent_diameter))
        .or_else(|| mean(&mut sized.iter().map(|s| s.equivalent_diameter)))
        .map(|d| factor * d)
        .unwrap_or(f64::INFINITY)
}

fn crop(img: &LabeledRaster, s: &ComponentStats) -> (BinaryRaster, Point) {
    let origin = Point::new(s.min.x - 1, s.min.y - 1);
    let w = (s.max.x - s.min.x + 3) as usize;
    let h = (s.max.y - s.min.y + 3) as usize;
    let mut bits = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = Point::new(origin.x + x as i32, origin.y + y as i32);
            bits[y * w + x] = u8::from(img.at(p) == s.label);
        }
    }
    (BinaryRaster::from_parts_unchecked(w, h, bits, img.scale()), origin)
}

fn shift_point(p: BindingPoint, o: Point) -> BindingPoint {
    BindingPoint {
        position: Point::new(p.position.x + o.x, p.position.y + o.y),
        ..p
    }
}

fn split_piece(
    labels: &LabeledRaster,
    s: &ComponentStats,
    cfg: &SegmentationConfig,
    max_neck_um: f64,
) -> Result<PieceOutcome> {
    let (piece, origin) = crop(labels, s);
    let (filled, kept) = classify_and_fill_holes(&piece, cfg.hole_size_um, cfg.hole_circularity);
    let filled_holes = crate::morphology::find_holes(&piece).len() - kept.len();
    let local = label_components(&filled, 1);
    let chains = trace_boundaries(&local, 1, &kept)?;
    let points = detect_all(&chains, &filled, cfg.chain_window);
    let mut report = PieceReport {
        label: s.label,
        circularity: 0.0,
        route: Route::Matched,
        binding_points: points.len(),
        pairs: 0,
        filled_holes,
        kept_holes: kept.len(),
    };
    let (pairs, unmatched) = match points.len() {
        0 => {
            report.route = Route::NoBindingPoints;
            (Vec::new(), Vec::new())
        }
        1 => {
            report.route = Route::SingleBindingPoint;
            (Vec::new(), points.clone())
        }
        _ => match_pairs(&points, &filled, max_neck_um, cfg.angle_tol_deg, cfg.pairing)?,
    };
    report.pairs = pairs.len();
    let shift_pair = |p: MatchedPair| MatchedPair {
        a: shift_point(p.a, origin),
        b: shift_point(p.b, origin),
        ..p
    };
    let global_chains = chains
        .into_iter()
        .map(|c| ChainCode {
            start: Point::new(c.start.x + origin.x, c.start.y + origin.y),
            component: s.label,
            ..c
        })
        .collect();
    Ok(PieceOutcome {
        report,
        points: points.into_iter().map(|p| shift_point(p, origin)).collect(),
        pairs: pairs.into_iter().map(shift_pair).collect(),
        unmatched: unmatched.into_iter().map(|p| shift_point(p, origin)).collect(),
        chains: global_chains,
    })
}

/// Separates touching particles in a cleaned binary raster.
pub fn process_particles(img: &BinaryRaster, cfg: &SegmentationConfig) -> Result<SegmentationResult> {
    cfg.validate()?;
    let labels = label_components(img, 1);
    let shapes = component_shapes(&labels);
    let stats = component_stats(&labels);
    let max_neck_um = cfg
        .max_neck_um
        .unwrap_or_else(|| adaptive_max_neck(&shapes, cfg.circularity_threshold, cfg.max_neck_factor));
    let work: Vec<(&ComponentStats, &ComponentShape)> = stats.iter().zip(&shapes).collect();
    let outcomes = par::map(&work, |&(s, shape)| -> Result<PieceOutcome> {
        if shape.circularity > cfg.circularity_threshold {
            return Ok(PieceOutcome {
                report: PieceReport {
                    label: s.label,
                    circularity: shape.circularity,
                    route: Route::Round,
                    binding_points: 0,
                    pairs: 0,
                    filled_holes: 0,
                    kept_holes: 0,
                },
                points: Vec::new(),
                pairs: Vec::new(),
                unmatched: Vec::new(),
                chains: Vec::new(),
            });
        }
        let mut out = split_piece(&labels, s, cfg, max_neck_um)?;
        out.report.circularity = shape.circularity;
        Ok(out)
    });
    let mut separated = img.clone();
    let mut result_pairs = Vec::new();
    let mut unmatched = Vec::new();
    let mut binding_points = Vec::new();
    let mut pieces = Vec::new();
    let mut chains = Vec::new();
    let mut drawn = 0usize;
    for o in outcomes {
        let o = o?;
        for p in &o.pairs {
            for q in neck_pixels(p.a.position, p.b.position) {
                // lines only cut their own piece
                if labels.at(q) == o.report.label && separated.is_particle(q) {
                    separated.set(q.x as usize, q.y as usize, false);
                    drawn += 1;
                }
            }
        }
        result_pairs.extend(o.pairs);
        unmatched.extend(o.unmatched);
        binding_points.extend(o.points);
        chains.extend(o.chains);
        pieces.push(o.report);
    }
    let particles = label_components(&separated, 1);
    let per_particle = component_shapes(&particles);
    Ok(SegmentationResult {
        separated,
        particles,
        pairs: result_pairs,
        unmatched,
        binding_points,
        per_particle,
        pieces,
        chains,
        max_neck_um,
        input_pieces: labels.count() as usize,
        drawn_pixels: drawn,
    })
}
