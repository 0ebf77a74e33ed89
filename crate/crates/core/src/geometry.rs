//! Convex cells in one and two dimensions and the hyperplanes that cut them.
//!
//! A hyperplane is parameterized by a signed distance `alpha` and a unit
//! normal `u` on the upper half-sphere: `H(alpha, u) = {x : <x, u> = alpha}`.
//! In the plane `u = (cos phi, sin phi)` with `phi` in `[0, pi)`; on the line
//! the only direction is `+1` and hyperplanes are points.

use std::f64::consts::PI;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::tree::{Sign, TreeWord};

pub type Point = [f64; 2];

/// Relative volume below which a cut piece is declared degenerate.
pub const EPS_VOL: f64 = 1e-12;

/// Tolerance (relative to the cell's size) for treating a vertex as lying on
/// a cutting line.
const ON_LINE_TOL: f64 = 1e-13;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("cut produces a piece of volume {volume:e} below the degeneracy threshold")]
    DegenerateCut { volume: f64 },
    #[error("hyperplane does not meet the interior of the cell")]
    NoInteriorHit,
    #[error("invalid cell: {0}")]
    InvalidCell(String),
}

/// A unit normal on the upper half-sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction {
    phi: f64,
    x: f64,
    y: f64,
}

impl Direction {
    /// The planar direction at angle `phi`, reduced into `[0, pi)`.
    pub fn from_angle(phi: f64) -> Self {
        let mut p = phi.rem_euclid(PI);
        if p >= PI {
            p = 0.0;
        }
        // Exact values on the axes keep axis-parallel cuts exact.
        let (x, y) = if p == 0.0 {
            (1.0, 0.0)
        } else if p == PI / 2.0 {
            (0.0, 1.0)
        } else {
            (p.cos(), p.sin())
        };
        Direction { phi: p, x, y }
    }

    /// The direction `+1` of the real line, embedded as `(1, 0)`.
    pub fn line() -> Self {
        Direction {
            phi: 0.0,
            x: 1.0,
            y: 0.0,
        }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn components(&self) -> Point {
        [self.x, self.y]
    }

    #[inline]
    pub fn dot(&self, p: &Point) -> f64 {
        self.x * p[0] + self.y * p[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperplane {
    pub alpha: f64,
    pub direction: Direction,
}

impl Hyperplane {
    pub fn new(alpha: f64, direction: Direction) -> Self {
        Hyperplane { alpha, direction }
    }

    /// Signed offset of `p`: negative on `H-`, positive on `H+`.
    #[inline]
    pub fn offset(&self, p: &Point) -> f64 {
        self.direction.dot(p) - self.alpha
    }
}

/// Anything that can be projected onto a line: cells and cut facets.
pub trait ConvexSet {
    /// Ambient dimension (1 or 2).
    fn dimension(&self) -> usize;
    /// Points whose convex hull is the set.
    fn extreme_points(&self) -> &[Point];

    fn projection_interval(&self, u: &Direction) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in self.extreme_points() {
            let s = u.dot(p);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }

    fn width(&self, u: &Direction) -> f64 {
        let (lo, hi) = self.projection_interval(u);
        hi - lo
    }
}

/// A convex polytope with nonempty interior and a genealogy label.
///
/// One-dimensional cells store their endpoints as `[[lo, 0], [hi, 0]]`;
/// polygons are counterclockwise and start at the lexicographically
/// smallest vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    label: TreeWord,
    dim: usize,
    points: Vec<Point>,
}

/// The lower-dimensional intersection of a cell with a cutting hyperplane.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    dim: usize,
    points: Vec<Point>,
}

impl Facet {
    /// Length of the chord in the plane; zero for a cut point on the line.
    pub fn measure(&self) -> f64 {
        if self.dim == 1 {
            0.0
        } else {
            dist(&self.points[0], &self.points[1])
        }
    }
}

impl ConvexSet for Facet {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn extreme_points(&self) -> &[Point] {
        &self.points
    }
}

impl ConvexSet for Cell {
    fn dimension(&self) -> usize {
        self.dim
    }
    fn extreme_points(&self) -> &[Point] {
        &self.points
    }
}

impl Cell {
    pub fn interval(label: TreeWord, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(GeometryError::InvalidCell(format!(
                "interval [{lo}, {hi}] has no interior"
            )));
        }
        Ok(Cell {
            label,
            dim: 1,
            points: vec![[lo, 0.0], [hi, 0.0]],
        })
    }

    /// A convex polygon from its vertices in any order. Rejects point sets
    /// that are not in convex position.
    pub fn polygon(label: TreeWord, vertices: &[Point]) -> Result<Self, GeometryError> {
        if vertices.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(GeometryError::InvalidCell("non-finite vertex".into()));
        }
        let hull = convex_hull(vertices);
        if hull.len() < 3 {
            return Err(GeometryError::InvalidCell("polygon has no interior".into()));
        }
        let scale = bbox_diameter(&hull);
        for p in vertices {
            let on_hull = (0..hull.len()).any(|i| {
                let a = &hull[i];
                let b = &hull[(i + 1) % hull.len()];
                cross(a, b, p).abs() <= 1e-12 * scale * scale
            });
            if !on_hull {
                return Err(GeometryError::InvalidCell(format!(
                    "vertex {p:?} lies strictly inside the hull"
                )));
            }
        }
        let cell = Cell {
            label,
            dim: 2,
            points: canonicalize(hull),
        };
        if cell.points.len() < 3 || cell.volume() <= 0.0 {
            return Err(GeometryError::InvalidCell("polygon has no interior".into()));
        }
        Ok(cell)
    }

    /// Axis-parallel rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(label: TreeWord, lo: Point, hi: Point) -> Result<Self, GeometryError> {
        Cell::polygon(label, &[lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
    }

    pub fn label(&self) -> &TreeWord {
        &self.label
    }

    pub fn with_label(mut self, label: TreeWord) -> Self {
        self.label = label;
        self
    }

    /// Polygon vertices (2D) or the two endpoints (1D).
    pub fn vertices(&self) -> &[Point] {
        &self.points
    }

    /// Length in 1D, shoelace area in 2D.
    pub fn volume(&self) -> f64 {
        if self.dim == 1 {
            return self.points[1][0] - self.points[0][0];
        }
        let n = self.points.len();
        let mut twice = 0.0;
        for i in 0..n {
            let a = &self.points[i];
            let b = &self.points[(i + 1) % n];
            twice += a[0] * b[1] - a[1] * b[0];
        }
        0.5 * twice
    }

    /// Boundary length of a polygon; for an interval, the number of endpoints.
    pub fn perimeter(&self) -> f64 {
        if self.dim == 1 {
            return 2.0;
        }
        let n = self.points.len();
        (0..n)
            .map(|i| dist(&self.points[i], &self.points[(i + 1) % n]))
            .sum()
    }

    pub fn centroid(&self) -> Point {
        if self.dim == 1 {
            return [0.5 * (self.points[0][0] + self.points[1][0]), 0.0];
        }
        let n = self.points.len();
        let o = self.points[0];
        let (mut cx, mut cy, mut a) = (0.0, 0.0, 0.0);
        for i in 1..n - 1 {
            let p = &self.points[i];
            let q = &self.points[i + 1];
            let t = cross(&o, p, q);
            a += t;
            cx += t * (o[0] + p[0] + q[0]);
            cy += t * (o[1] + p[1] + q[1]);
        }
        [cx / (3.0 * a), cy / (3.0 * a)]
    }

    /// Point-in-cell test with an absolute tolerance.
    pub fn contains_point(&self, p: &Point, tol: f64) -> bool {
        if self.dim == 1 {
            return p[0] >= self.points[0][0] - tol && p[0] <= self.points[1][0] + tol;
        }
        let n = self.points.len();
        (0..n).all(|i| {
            let a = &self.points[i];
            let b = &self.points[(i + 1) % n];
            let len = dist(a, b);
            cross(a, b, p) >= -tol * len
        })
    }

    /// Whether `other` lies inside this cell up to `tol`.
    pub fn contains_cell(&self, other: &Cell, tol: f64) -> bool {
        other.points.iter().all(|p| self.contains_point(p, tol))
    }

    /// Closed hit test: the hyperplane meets the cell, boundary included.
    pub fn hits(&self, h: &Hyperplane) -> bool {
        let (lo, hi) = self.projection_interval(&h.direction);
        lo <= h.alpha && h.alpha <= hi
    }

    /// Strict hit test: the hyperplane meets the interior.
    pub fn hits_interior(&self, h: &Hyperplane) -> bool {
        let (lo, hi) = self.projection_interval(&h.direction);
        lo < h.alpha && h.alpha < hi
    }

    /// Splits the cell into `cell ∩ H-` and `cell ∩ H+`, labelled `e-` and
    /// `e+`. Pieces smaller than `EPS_VOL * volume(cell)` are rejected.
    pub fn clip(&self, h: &Hyperplane) -> Result<(Cell, Cell), GeometryError> {
        self.clip_with_min_volume(h, EPS_VOL * self.volume())
    }

    /// As [`Cell::clip`] with an explicit absolute volume threshold.
    pub fn clip_with_min_volume(
        &self,
        h: &Hyperplane,
        min_volume: f64,
    ) -> Result<(Cell, Cell), GeometryError> {
        if !self.hits_interior(h) {
            return Err(GeometryError::NoInteriorHit);
        }
        let (minus, plus) = if self.dim == 1 {
            let a = h.alpha;
            (
                vec![self.points[0], [a, 0.0]],
                vec![[a, 0.0], self.points[1]],
            )
        } else {
            let tol = ON_LINE_TOL * self.width(&h.direction).max(bbox_diameter(&self.points));
            let minus = canonicalize(clip_polygon(&self.points, h, tol, Sign::Minus));
            let plus = canonicalize(clip_polygon(&self.points, h, tol, Sign::Plus));
            (minus, plus)
        };
        let make = |points: Vec<Point>, s: Sign| -> Result<Cell, GeometryError> {
            let c = Cell {
                label: self.label.child(s),
                dim: self.dim,
                points,
            };
            if (c.dim == 2 && c.points.len() < 3) || c.volume() < min_volume {
                let volume = if c.dim == 2 && c.points.len() < 3 {
                    0.0
                } else {
                    c.volume()
                };
                return Err(GeometryError::DegenerateCut { volume });
            }
            Ok(c)
        };
        Ok((make(minus, Sign::Minus)?, make(plus, Sign::Plus)?))
    }

    /// The intersection `cell ∩ h`: a point in 1D, a chord in 2D.
    pub fn facet_of_cut(&self, h: &Hyperplane) -> Result<Facet, GeometryError> {
        if !self.hits_interior(h) {
            return Err(GeometryError::NoInteriorHit);
        }
        if self.dim == 1 {
            return Ok(Facet {
                dim: 1,
                points: vec![[h.alpha, 0.0]],
            });
        }
        let n = self.points.len();
        let tol = ON_LINE_TOL * bbox_diameter(&self.points);
        let mut pts: Vec<Point> = Vec::with_capacity(2);
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            let sa = h.offset(&a);
            let sb = h.offset(&b);
            if sa.abs() <= tol {
                pts.push(a);
            } else if sb.abs() > tol && (sa < 0.0) != (sb < 0.0) {
                pts.push(lerp(&a, &b, sa / (sa - sb)));
            }
        }
        // Keep the two extreme points along the line.
        let t = [-h.direction.components()[1], h.direction.components()[0]];
        let key = |p: &Point| p[0] * t[0] + p[1] * t[1];
        let lo = pts
            .iter()
            .copied()
            .min_by(|p, q| key(p).total_cmp(&key(q)))
            .ok_or(GeometryError::NoInteriorHit)?;
        let hi = pts
            .iter()
            .copied()
            .max_by(|p, q| key(p).total_cmp(&key(q)))
            .ok_or(GeometryError::NoInteriorHit)?;
        let facet = Facet {
            dim: 2,
            points: vec![lo, hi],
        };
        if facet.measure() <= EPS_VOL * bbox_diameter(&self.points) {
            return Err(GeometryError::DegenerateCut {
                volume: facet.measure(),
            });
        }
        Ok(facet)
    }

    /// Intersection with another cell of the same dimension, labelled like
    /// `self`; `None` when the intersection has no interior.
    pub fn intersect(&self, other: &Cell, min_volume: f64) -> Option<Cell> {
        if self.dim == 1 {
            let lo = self.points[0][0].max(other.points[0][0]);
            let hi = self.points[1][0].min(other.points[1][0]);
            if hi - lo <= min_volume {
                return None;
            }
            return Cell::interval(self.label.clone(), lo, hi).ok();
        }
        let mut pts = self.points.clone();
        let n = other.points.len();
        let tol = ON_LINE_TOL * bbox_diameter(&self.points).max(bbox_diameter(&other.points));
        for i in 0..n {
            let a = other.points[i];
            let b = other.points[(i + 1) % n];
            // Inward side of edge a->b is the left; keep offsets <= 0 of the
            // outward-normal line.
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let nx = d[1] / len;
            let ny = -d[0] / len;
            let alpha = nx * a[0] + ny * a[1];
            pts = clip_polygon_raw(&pts, [nx, ny], alpha, tol, Sign::Minus);
            if pts.len() < 3 {
                return None;
            }
        }
        let c = Cell {
            label: self.label.clone(),
            dim: 2,
            points: canonicalize(pts),
        };
        if c.points.len() < 3 || c.volume() <= min_volume {
            return None;
        }
        Some(c)
    }
}

fn clip_polygon(points: &[Point], h: &Hyperplane, tol: f64, keep: Sign) -> Vec<Point> {
    clip_polygon_raw(points, h.direction.components(), h.alpha, tol, keep)
}

/// Sutherland–Hodgman against one halfspace `<x, n> <= alpha` (Minus) or
/// `>= alpha` (Plus). Vertices within `tol` of the line belong to both sides.
fn clip_polygon_raw(points: &[Point], normal: Point, alpha: f64, tol: f64, keep: Sign) -> Vec<Point> {
    let sign = if keep == Sign::Minus { 1.0 } else { -1.0 };
    let offset = |p: &Point| sign * (normal[0] * p[0] + normal[1] * p[1] - alpha);
    let n = points.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let sa = offset(&a);
        let sb = offset(&b);
        if sa <= tol {
            out.push(a);
        }
        if (sa < -tol && sb > tol) || (sa > tol && sb < -tol) {
            out.push(lerp(&a, &b, sa / (sa - sb)));
        }
    }
    out
}

#[inline]
fn lerp(a: &Point, b: &Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

#[inline]
fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Twice the signed area of the triangle `(o, a, b)`.
#[inline]
fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn bbox_diameter(points: &[Point]) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
}

/// Andrew's monotone chain, collinear points dropped, counterclockwise.
fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Removes repeated and collinear vertices, then rotates so the
/// lexicographically smallest vertex comes first.
fn canonicalize(mut pts: Vec<Point>) -> Vec<Point> {
    if pts.len() < 3 {
        return pts;
    }
    let scale = bbox_diameter(&pts);
    let dup_tol = 1e-14 * scale;
    let mut changed = true;
    while changed && pts.len() >= 3 {
        changed = false;
        let n = pts.len();
        for i in 0..n {
            let prev = pts[(i + n - 1) % n];
            let cur = pts[i];
            let next = pts[(i + 1) % n];
            let l1 = dist(&prev, &cur);
            let l2 = dist(&cur, &next);
            if l1 <= dup_tol || cross(&prev, &cur, &next).abs() <= 1e-13 * l1 * l2 + 1e-28 * scale * scale
            {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    if let Some((start, _)) = pts
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])))
    {
        pts.rotate_left(start);
    }
    pts
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CellRepr {
    Polygon {
        label: TreeWord,
        vertices: Vec<Point>,
    },
    Interval {
        label: TreeWord,
        lo: f64,
        hi: f64,
    },
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = if self.dim == 1 {
            CellRepr::Interval {
                label: self.label.clone(),
                lo: self.points[0][0],
                hi: self.points[1][0],
            }
        } else {
            CellRepr::Polygon {
                label: self.label.clone(),
                vertices: self.points.clone(),
            }
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match CellRepr::deserialize(deserializer)? {
            CellRepr::Polygon { label, vertices } => Cell::polygon(label, &vertices),
            CellRepr::Interval { label, lo, hi } => Cell::interval(label, lo, hi),
        }
        .map_err(D::Error::custom)
    }
}
