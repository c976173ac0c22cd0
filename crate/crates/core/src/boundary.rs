//! Chain-code boundary tracing and binding-point detection.
//!
//! Boundaries are traced with Moore-neighbour tracing and Jacob's stopping
//! criterion so that the particle phase is always on the left of travel:
//! outer boundaries run counterclockwise on screen, hole boundaries clockwise.
//! A binding point is a boundary pixel where the smoothed direction turns by
//! more than 90 degrees towards the binder, the signature of a neck between
//! two particles.

use serde::Serialize;

use crate::geometry::{angle_to_offset, code_vector, normalize_deg, Point};
use crate::morphology::HoleInfo;
use crate::raster::{BinaryRaster, LabeledRaster};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Outer,
    Hole,
}

/// A closed boundary as a start pixel plus 8-direction moves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainCode {
    pub start: Point,
    pub moves: Vec<u8>,
    pub kind: BoundaryKind,
    pub component: u32,
}

impl ChainCode {
    /// Boundary pixel before each move; `points()[i]` is where move `i` starts.
    pub fn points(&self) -> Vec<Point> {
        let mut p = self.start;
        let mut out = Vec::with_capacity(self.moves.len().max(1));
        out.push(p);
        for &m in self.moves.iter().take(self.moves.len().saturating_sub(1)) {
            p = p.step(m);
            out.push(p);
        }
        out
    }

    /// Sum of all moves is zero.
    pub fn closes(&self) -> bool {
        let end = self.moves.iter().fold(self.start, |p, &m| p.step(m));
        end == self.start
    }

    /// Walk length in pixels, √2 for diagonal moves.
    pub fn length_px(&self) -> f64 {
        self.moves
            .iter()
            .map(|&m| if m % 2 == 0 { 1.0 } else { std::f64::consts::SQRT_2 })
            .sum()
    }
}

const MAX_MOVES: usize = 50_000_000;

fn search(p: Point, from: u8, fg: &impl Fn(Point) -> bool) -> Option<u8> {
    (0..8u8).map(|k| (from + k) % 8).find(|&c| fg(p.step(c)))
}

/// Moore tracing from `start`. `first_search` is the first neighbour code
/// examined; subsequent searches begin just clockwise of the arrival
/// direction, which keeps foreground on the left.
fn trace(start: Point, first_search: u8, fg: impl Fn(Point) -> bool) -> Vec<u8> {
    let Some(first) = search(start, first_search, &fg) else {
        return Vec::new();
    };
    let mut moves = vec![first];
    let mut pos = start.step(first);
    let mut dir = first;
    while moves.len() < MAX_MOVES {
        let from = if dir % 2 == 0 { (dir + 7) % 8 } else { (dir + 6) % 8 };
        let next = search(pos, from, &fg).expect("traced pixel has the neighbour it came from");
        // Jacob's criterion: stop on re-entering the start the same way.
        if pos == start && next == first {
            break;
        }
        moves.push(next);
        pos = pos.step(next);
        dir = next;
    }
    moves
}

/// Counterclockwise outer boundary starting at the component's first pixel
/// in raster order (its west and northern neighbours are background).
pub(crate) fn trace_outer_moves(anchor: Point, fg: impl Fn(Point) -> bool) -> Vec<u8> {
    trace(anchor, 5, fg)
}

/// Clockwise boundary of the foreground around a hole, starting at the pixel
/// directly above the hole's first pixel.
pub(crate) fn trace_hole_moves(hole_anchor: Point, fg: impl Fn(Point) -> bool) -> (Point, Vec<u8>) {
    let start = Point::new(hole_anchor.x, hole_anchor.y - 1);
    (start, trace(start, 7, fg))
}

/// Outer chain code of `component`, plus one chain code per kept hole that
/// the component encloses, in the order given.
pub fn trace_boundaries(labels: &LabeledRaster, component: u32, kept_holes: &[HoleInfo]) -> Result<Vec<ChainCode>> {
    if component == 0 || component > labels.count() {
        return Err(Error::UnknownLabel(component));
    }
    let w = labels.width();
    let anchor = labels
        .labels()
        .iter()
        .position(|&l| l == component)
        .map(|i| Point::new((i % w) as i32, (i / w) as i32))
        .ok_or(Error::EmptyComponent(component))?;
    let fg = |p: Point| labels.at(p) == component;
    let mut out = vec![ChainCode {
        start: anchor,
        moves: trace_outer_moves(anchor, fg),
        kind: BoundaryKind::Outer,
        component,
    }];
    for hole in kept_holes.iter().filter(|h| h.enclosing_component == component) {
        let (start, moves) = trace_hole_moves(hole.anchor, fg);
        out.push(ChainCode {
            start,
            moves,
            kind: BoundaryKind::Hole,
            component,
        });
    }
    Ok(out)
}

/// Candidate neck endpoint on a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BindingPoint {
    pub position: Point,
    /// Degrees in `[0, 360)`, counterclockwise from east on screen; points
    /// into the particle phase.
    pub inward_direction: f64,
    /// Unsigned change of smoothed direction, degrees.
    pub turn_angle: f64,
    /// Index of the source chain code among a component's boundaries.
    pub chain: usize,
    /// Boundary index along the source chain.
    pub index: usize,
}

impl BindingPoint {
    pub fn probe(&self) -> Point {
        let (dx, dy) = angle_to_offset(self.inward_direction);
        Point::new(self.position.x + dx, self.position.y + dy)
    }
}

struct Candidate {
    index: usize,
    turn: f64,
    inward: f64,
}

/// Concave turns sharper than 90 degrees along `cc`.
///
/// Incoming and outgoing directions at boundary index `i` are the circular
/// means of the `window` moves before and from `i`. A turn is concave when
/// it bends to the right of travel, that is towards the binder. Runs of hits
/// closer than `window` along the chain collapse to the sharpest one.
pub fn detect_binding_points(cc: &ChainCode, img: &BinaryRaster, window: usize) -> Vec<BindingPoint> {
    let n = cc.moves.len();
    if window == 0 || n < 2 * window {
        return Vec::new();
    }
    let vecs: Vec<(f64, f64)> = cc.moves.iter().map(|&m| code_vector(m)).collect();
    // prefix[k] = sum of vecs[0..k] over the chain repeated three times
    let mut prefix = Vec::with_capacity(3 * n + 1);
    prefix.push((0.0, 0.0));
    for k in 0..3 * n {
        let (px, py) = prefix[k];
        let (vx, vy) = vecs[k % n];
        prefix.push((px + vx, py + vy));
    }
    let window_sum = |from: usize, to: usize| {
        let (a, b) = (prefix[from], prefix[to]);
        (b.0 - a.0, b.1 - a.1)
    };
    let points = cc.points();
    let mut candidates = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let c = i + n;
        let (ix, iy) = window_sum(c - window, c);
        let (ox, oy) = window_sum(c, c + window);
        let (il, ol) = (ix.hypot(iy), ox.hypot(oy));
        if il < 1e-9 || ol < 1e-9 {
            continue;
        }
        let cross = ix * oy - iy * ox;
        let dot = ix * ox + iy * oy;
        let turn = cross.abs().atan2(dot).to_degrees();
        if turn <= 90.0 || cross >= 0.0 {
            continue;
        }
        let (ux, uy) = (ix / il - ox / ol, iy / il - oy / ol);
        let inward = normalize_deg(uy.atan2(ux).to_degrees());
        let bp = BindingPoint {
            position: points[i],
            inward_direction: inward,
            turn_angle: turn,
            chain: 0,
            index: i,
        };
        if img.is_particle(bp.probe()) {
            candidates.push(Candidate { index: i, turn, inward });
        }
    }
    candidates.sort_by(|a, b| b.turn.total_cmp(&a.turn).then(a.index.cmp(&b.index)));
    let mut kept: Vec<&Candidate> = Vec::new();
    for c in &candidates {
        let near = kept.iter().any(|k| {
            let d = k.index.abs_diff(c.index);
            d.min(n - d) <= window
        });
        if !near {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| c.index);
    kept.into_iter()
        .map(|c| BindingPoint {
            position: points[c.index],
            inward_direction: c.inward,
            turn_angle: c.turn,
            chain: 0,
            index: c.index,
        })
        .collect()
}

/// Binding points of several boundaries with `chain` set to each one's
/// position in `chains`.
pub fn detect_all(chains: &[ChainCode], img: &BinaryRaster, window: usize) -> Vec<BindingPoint> {
    chains
        .iter()
        .enumerate()
        .flat_map(|(ci, cc)| {
            detect_binding_points(cc, img, window)
                .into_iter()
                .map(move |bp| BindingPoint { chain: ci, ..bp })
        })
        .collect()
}
