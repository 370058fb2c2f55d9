//! Planar geometry in a projected, metric CRS.
//!
//! Rings are stored open (the closing vertex is dropped on construction) and
//! normalized so that exteriors run counter-clockwise and holes clockwise.
//! The interior of a polygon is therefore always on the left of every ring
//! edge, which the clipping code in [`clip`] relies on.

mod clip;
mod grid;
mod index;

pub use clip::{intersection_area, intersection_area_many, SLIVER_AREA};
pub use grid::{tessellate_grid, CellId, Grid};
pub use index::PolygonIndex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("ring {ring} has fewer than 3 distinct vertices")]
    TooFewVertices { ring: usize },
    #[error("ring {ring} contains a non-finite coordinate")]
    NonFinite { ring: usize },
    #[error("ring {ring} is self-intersecting (edges {a} and {b})")]
    SelfIntersecting { ring: usize, a: usize, b: usize },
    #[error("rings {a} and {b} cross each other")]
    RingsCross { a: usize, b: usize },
    #[error("hole {hole} is not inside the exterior ring")]
    HoleOutsideExterior { hole: usize },
    #[error("ring {ring} has zero area")]
    ZeroArea { ring: usize },
    #[error("cell size must be positive, got {0}")]
    InvalidCellSize(f64),
    #[error("extent is inverted or degenerate: ({min_x}, {min_y}) - ({max_x}, {max_y})")]
    InvalidExtent {
        min_x: f64,
        min_y: f64,
        max_x: f64,
        max_y: f64,
    },
    #[error("grid dimensions must be positive, got {nx}x{ny}")]
    EmptyGrid { nx: u32, ny: u32 },
    #[error("cell ({col}, {row}) outside {nx}x{ny} grid")]
    CellOutOfRange { col: i64, row: i64, nx: u32, ny: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn empty() -> Self {
        Self::new(
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        )
    }

    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.expand(*p);
        }
        b
    }

    pub fn expand(&mut self, p: Point) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.min_x.min(other.min_x),
            self.min_y.min(other.min_y),
            self.max_x.max(other.max_x),
            self.max_y.max(other.max_y),
        )
    }

    /// Closed-box overlap test; touching boxes intersect.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.min_x.max(other.min_x),
            self.min_y.max(other.min_y),
            self.max_x.min(other.max_x),
            self.max_y.min(other.max_y),
        );
        (b.min_x <= b.max_x && b.min_y <= b.max_y).then_some(b)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn is_empty(&self) -> bool {
        !(self.min_x <= self.max_x && self.min_y <= self.max_y)
    }
}

/// Twice the signed area of an open ring (positive when counter-clockwise).
fn ring_signed_area2(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    acc
}

pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// True when the closed segments `ab` and `cd` share at least one point.
fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// True when `ab` and `cd` cross at a single interior point of both.
fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
}

fn normalize_ring(mut ring: Vec<Point>, idx: usize) -> Result<Vec<Point>, GeometryError> {
    if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::NonFinite { ring: idx });
    }
    ring.dedup();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(GeometryError::TooFewVertices { ring: idx });
    }
    Ok(ring)
}

fn check_simple(ring: &[Point], idx: usize) -> Result<(), GeometryError> {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_touch(a, b, c, d) {
                return Err(GeometryError::SelfIntersecting { ring: idx, a: i, b: j });
            }
        }
    }
    // a ring that doubles back on an adjacent edge is also degenerate
    for i in 0..n {
        let a = ring[(i + n - 1) % n];
        let b = ring[i];
        let c = ring[(i + 1) % n];
        if orient(a, b, c) == 0.0 && (c.x - b.x) * (a.x - b.x) + (c.y - b.y) * (a.y - b.y) > 0.0 {
            return Err(GeometryError::SelfIntersecting {
                ring: idx,
                a: (i + n - 1) % n,
                b: i,
            });
        }
    }
    Ok(())
}

/// Even-odd point-in-ring test.
fn ring_contains(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// A simple polygon with optional holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
    bbox: BBox,
    area: f64,
}

impl Polygon {
    /// Builds and validates a polygon. Rings may be given open or closed and
    /// in either winding order.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self, GeometryError> {
        let mut ext = normalize_ring(exterior, 0)?;
        check_simple(&ext, 0)?;
        let ext_area2 = ring_signed_area2(&ext);
        if ext_area2 == 0.0 {
            return Err(GeometryError::ZeroArea { ring: 0 });
        }
        if ext_area2 < 0.0 {
            ext.reverse();
        }
        let mut area = ext_area2.abs() / 2.0;
        let mut normalized_holes = Vec::with_capacity(holes.len());
        for (h, hole) in holes.into_iter().enumerate() {
            let idx = h + 1;
            let mut ring = normalize_ring(hole, idx)?;
            check_simple(&ring, idx)?;
            let a2 = ring_signed_area2(&ring);
            if a2 == 0.0 {
                return Err(GeometryError::ZeroArea { ring: idx });
            }
            if a2 > 0.0 {
                ring.reverse();
            }
            let probe = interior_probe(&ring);
            if !ring_contains(&ext, probe) {
                return Err(GeometryError::HoleOutsideExterior { hole: h });
            }
            area -= a2.abs() / 2.0;
            normalized_holes.push(ring);
        }
        let rings: Vec<&[Point]> = std::iter::once(ext.as_slice())
            .chain(normalized_holes.iter().map(Vec::as_slice))
            .collect();
        for a in 0..rings.len() {
            for b in (a + 1)..rings.len() {
                if rings_cross(rings[a], rings[b]) {
                    return Err(GeometryError::RingsCross { a, b });
                }
            }
        }
        let bbox = BBox::of_points(&ext);
        Ok(Self {
            exterior: ext,
            holes: normalized_holes,
            bbox,
            area: area.max(0.0),
        })
    }

    /// Axis-aligned rectangle.
    pub fn rect(b: BBox) -> Result<Self, GeometryError> {
        Self::new(
            vec![
                Point::new(b.min_x, b.min_y),
                Point::new(b.max_x, b.min_y),
                Point::new(b.max_x, b.max_y),
                Point::new(b.min_x, b.max_y),
            ],
            vec![],
        )
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    /// Exterior followed by holes.
    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn contains_point(&self, p: Point) -> bool {
        ring_contains(&self.exterior, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }

    /// Area-weighted centroid.
    pub fn centroid(&self) -> Point {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a2 = 0.0;
        for ring in self.rings() {
            // subtract the bbox corner to keep products small
            let o = Point::new(self.bbox.min_x, self.bbox.min_y);
            let n = ring.len();
            for i in 0..n {
                let p = Point::new(ring[i].x - o.x, ring[i].y - o.y);
                let q = Point::new(ring[(i + 1) % n].x - o.x, ring[(i + 1) % n].y - o.y);
                let cross = p.x * q.y - q.x * p.y;
                a2 += cross;
                cx += (p.x + q.x) * cross;
                cy += (p.y + q.y) * cross;
            }
        }
        Point::new(
            self.bbox.min_x + cx / (3.0 * a2),
            self.bbox.min_y + cy / (3.0 * a2),
        )
    }
}

fn rings_cross(a: &[Point], b: &[Point]) -> bool {
    let (na, nb) = (a.len(), b.len());
    for i in 0..na {
        let (p, q) = (a[i], a[(i + 1) % na]);
        for j in 0..nb {
            if segments_cross(p, q, b[j], b[(j + 1) % nb]) {
                return true;
            }
        }
    }
    false
}

/// A point strictly inside a simple ring, near its first convex corner.
fn interior_probe(ring: &[Point]) -> Point {
    let n = ring.len();
    let ccw = ring_signed_area2(ring) > 0.0;
    for i in 0..n {
        let a = ring[(i + n - 1) % n];
        let b = ring[i];
        let c = ring[(i + 1) % n];
        let turn = orient(a, b, c);
        if (turn > 0.0) == ccw && turn != 0.0 {
            let centroid = Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
            if ring_contains(ring, centroid) {
                return centroid;
            }
        }
    }
    ring[0]
}

/// One or more disjoint polygons sharing an identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiPolygon {
    pub parts: Vec<Polygon>,
}

impl MultiPolygon {
    pub fn new(parts: Vec<Polygon>) -> Self {
        Self { parts }
    }

    pub fn area(&self) -> f64 {
        self.parts.iter().map(Polygon::area).sum()
    }

    pub fn bbox(&self) -> BBox {
        self.parts
            .iter()
            .fold(BBox::empty(), |acc, p| acc.union(&p.bbox()))
    }

    pub fn centroid(&self) -> Point {
        let total = self.area();
        if total <= 0.0 {
            return self.parts.first().map(Polygon::centroid).unwrap_or_default();
        }
        let (mut x, mut y) = (0.0, 0.0);
        for p in &self.parts {
            let c = p.centroid();
            x += c.x * p.area();
            y += c.y * p.area();
        }
        Point::new(x / total, y / total)
    }
}

impl From<Polygon> for MultiPolygon {
    fn from(p: Polygon) -> Self {
        Self { parts: vec![p] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(c: &[(f64, f64)]) -> Vec<Point> {
        c.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn clockwise_input_is_normalized() {
        let p = Polygon::new(pts(&[(0., 0.), (0., 2.), (2., 2.), (2., 0.), (0., 0.)]), vec![])
            .unwrap();
        assert_eq!(p.area(), 4.0);
        assert!(ring_signed_area2(p.exterior()) > 0.0);
        assert_eq!(p.exterior().len(), 4);
    }

    #[test]
    fn bowtie_is_rejected() {
        let err = Polygon::new(pts(&[(0., 0.), (1., 1.), (1., 0.), (0., 1.)]), vec![]).unwrap_err();
        assert!(matches!(err, GeometryError::SelfIntersecting { .. }));
    }

    #[test]
    fn hole_reduces_area_and_point_test() {
        let p = Polygon::new(
            pts(&[(0., 0.), (4., 0.), (4., 4.), (0., 4.)]),
            vec![pts(&[(1., 1.), (1., 3.), (3., 3.), (3., 1.)])],
        )
        .unwrap();
        assert_eq!(p.area(), 12.0);
        assert!(!p.contains_point(Point::new(2., 2.)));
        assert!(p.contains_point(Point::new(0.5, 2.)));
        assert!(ring_signed_area2(&p.holes()[0]) < 0.0);
    }

    #[test]
    fn hole_outside_rejected() {
        let err = Polygon::new(
            pts(&[(0., 0.), (4., 0.), (4., 4.), (0., 4.)]),
            vec![pts(&[(5., 5.), (6., 5.), (6., 6.)])],
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::HoleOutsideExterior { hole: 0 });
    }

    #[test]
    fn too_few_vertices() {
        let err = Polygon::new(pts(&[(0., 0.), (1., 0.), (0., 0.)]), vec![]).unwrap_err();
        assert_eq!(err, GeometryError::TooFewVertices { ring: 0 });
    }

    #[test]
    fn centroid_of_l_shape() {
        // 2x1 bar plus 1x1 block on top of its left end
        let p = Polygon::new(
            pts(&[(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)]),
            vec![],
        )
        .unwrap();
        let c = p.centroid();
        // (2*(1,0.5) + 1*(0.5,1.5)) / 3
        assert!((c.x - 2.5 / 3.0).abs() < 1e-12);
        assert!((c.y - 2.5 / 3.0).abs() < 1e-12);
    }
}
