//! Integer pixel geometry: points, the eight chain-code directions and
//! Bresenham line rasterization.

use serde::{Deserialize, Serialize};

/// Pixel coordinate. `x` grows to the right, `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }

    pub fn step(self, code: u8) -> Point {
        let (dx, dy) = DIRECTIONS[code as usize % 8];
        Point::new(self.x + dx, self.y + dy)
    }

    pub fn distance(self, other: Point) -> f64 {
        let dx = f64::from(other.x - self.x);
        let dy = f64::from(other.y - self.y);
        dx.hypot(dy)
    }
}

/// Chain-code offsets in image coordinates. Code 0 is east and codes advance
/// counterclockwise as seen on screen, so code 2 is north (`dy = -1`).
pub const DIRECTIONS: [(i32, i32); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

/// Unit vector of a chain code in a y-up frame, matching the on-screen angle.
pub fn code_vector(code: u8) -> (f64, f64) {
    let a = f64::from(code) * std::f64::consts::FRAC_PI_4;
    (a.cos(), a.sin())
}

/// Converts an on-screen angle (degrees, counterclockwise from east) to the
/// nearest 8-neighbour offset in image coordinates.
pub fn angle_to_offset(deg: f64) -> (i32, i32) {
    let r = deg.to_radians();
    (r.cos().round() as i32, -(r.sin().round() as i32))
}

/// On-screen angle in `[0, 360)` of the image-space vector from `a` to `b`.
pub fn screen_angle(a: Point, b: Point) -> f64 {
    let dx = f64::from(b.x - a.x);
    let dy = -f64::from(b.y - a.y);
    normalize_deg(dy.atan2(dx).to_degrees())
}

pub fn normalize_deg(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Unsigned difference between two angles, in `[0, 180]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// All pixels of the Bresenham segment from `a` to `b`, endpoints included.
pub fn bresenham(a: Point, b: Point) -> Vec<Point> {
    let dx = (b.x - a.x).abs();
    let dy = -(b.y - a.y).abs();
    let sx = if a.x < b.x { 1 } else { -1 };
    let sy = if a.y < b.y { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (a.x, a.y);
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push(Point::new(x, y));
        if x == b.x && y == b.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// A Bresenham segment thickened to two pixels perpendicular to its major
/// axis and extended by one pixel past each endpoint. The result is a
/// 4-connected barrier, so it splits 8-connected regions it crosses.
pub fn thick_segment(a: Point, b: Point) -> Vec<Point> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let x_major = dx.abs() >= dy.abs();
    let (ea, eb) = if dx == 0 && dy == 0 {
        (a, b)
    } else {
        let len = f64::from(dx).hypot(f64::from(dy));
        let ux = (f64::from(dx) / len).round() as i32;
        let uy = (f64::from(dy) / len).round() as i32;
        (Point::new(a.x - ux, a.y - uy), Point::new(b.x + ux, b.y + uy))
    };
    let mut out = Vec::new();
    for p in bresenham(ea, eb) {
        out.push(p);
        out.push(if x_major {
            Point::new(p.x, p.y + 1)
        } else {
            Point::new(p.x + 1, p.y)
        });
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_segment_has_one_pixel_per_row() {
        let px = bresenham(Point::new(0, 0), Point::new(0, 5));
        assert_eq!(px.len(), 6);
        assert!(px.iter().enumerate().all(|(i, p)| p.x == 0 && p.y == i as i32));
    }

    #[test]
    fn bresenham_is_8_connected_and_hits_endpoints() {
        for &(bx, by) in &[(7, 3), (-4, 9), (-8, -8), (3, -11), (0, 0)] {
            let b = Point::new(bx, by);
            let px = bresenham(Point::new(0, 0), b);
            assert_eq!(px[0], Point::new(0, 0));
            assert_eq!(*px.last().unwrap(), b);
            for w in px.windows(2) {
                assert!((w[1].x - w[0].x).abs() <= 1 && (w[1].y - w[0].y).abs() <= 1);
            }
            assert_eq!(px.len() as i32, bx.abs().max(by.abs()) + 1);
        }
    }

    #[test]
    fn angles() {
        assert_eq!(screen_angle(Point::new(0, 0), Point::new(0, -3)), 90.0);
        assert_eq!(angle_diff(350.0, 10.0), 20.0);
        assert_eq!(angle_to_offset(90.0), (0, -1));
        assert_eq!(angle_to_offset(225.0), (-1, 1));
        for c in 0..8u8 {
            let (vx, vy) = code_vector(c);
            let (dx, dy) = DIRECTIONS[c as usize];
            assert_eq!(vx.round() as i32, dx);
            assert_eq!(-(vy.round() as i32), dy);
        }
    }
}
