//! Area of polygon intersections by boundary integration.
//!
//! The boundary of `P1 ∩ … ∩ Pk` is made of the pieces of each `∂Pi` that lie
//! inside every other polygon. Splitting every ring edge at its crossings with
//! the other boundaries and integrating `(x dy - y dx) / 2` over the kept
//! pieces yields the area without building the clipped geometry. Pieces that
//! run along another polygon's boundary are kept once when both interiors lie
//! on the same side and dropped when they lie on opposite sides.

use super::{BBox, Point, Polygon};

/// Clip results below this area (m²) are treated as numerical slivers.
pub const SLIVER_AREA: f64 = 1e-9;

/// Area of `a ∩ b`. Polygons are validated at construction, so this cannot fail.
pub fn intersection_area(a: &Polygon, b: &Polygon) -> f64 {
    intersection_area_many(&[a, b])
}

/// Area of the intersection of all given polygons.
pub fn intersection_area_many(polys: &[&Polygon]) -> f64 {
    match polys {
        [] => return 0.0,
        [only] => return only.area(),
        _ => {}
    }
    let mut common = polys[0].bbox();
    let mut span_box = polys[0].bbox();
    for p in &polys[1..] {
        match common.intersection(&p.bbox()) {
            Some(b) => common = b,
            None => return 0.0,
        }
        span_box = span_box.union(&p.bbox());
    }
    if common.width() <= 0.0 || common.height() <= 0.0 {
        return 0.0;
    }
    let origin = Point::new(common.min_x, common.min_y);
    let span = span_box.width().max(span_box.height()).max(1.0);
    let eps = 1e-9 * span;

    let local: Vec<LocalPolygon> = polys
        .iter()
        .map(|p| LocalPolygon::new(p, origin))
        .collect();
    let window = BBox::new(
        -eps,
        -eps,
        common.width() + eps,
        common.height() + eps,
    );

    let mut area2 = 0.0;
    let mut params: Vec<f64> = Vec::new();
    for (i, poly) in local.iter().enumerate() {
        for ring in &poly.rings {
            let n = ring.len();
            for e in 0..n {
                let a = ring[e];
                let b = ring[(e + 1) % n];
                let ebox = seg_box(a, b, 0.0);
                if !ebox.intersects(&window) {
                    continue;
                }
                params.clear();
                params.push(0.0);
                params.push(1.0);
                for (j, other) in local.iter().enumerate() {
                    if j == i || !other.bbox.intersects(&seg_box(a, b, eps)) {
                        continue;
                    }
                    other.split_params(a, b, eps, &mut params);
                }
                params.sort_by(f64::total_cmp);
                let len = a.distance(b);
                let dir = Point::new((b.x - a.x) / len, (b.y - a.y) / len);
                let mut t0 = params[0];
                for &t1 in &params[1..] {
                    if (t1 - t0) * len <= eps {
                        continue;
                    }
                    let p = lerp(a, b, t0);
                    let q = lerp(a, b, t1);
                    t0 = t1;
                    let mid = Point::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0);
                    let keep = local.iter().enumerate().all(|(j, other)| {
                        if j == i {
                            return true;
                        }
                        match other.classify(mid, dir, eps) {
                            Side::Inside => true,
                            Side::Outside | Side::OnOpposite => false,
                            Side::OnSame => j > i,
                        }
                    });
                    if keep {
                        area2 += p.x * q.y - q.x * p.y;
                    }
                }
            }
        }
    }
    let area = area2 / 2.0;
    if area < SLIVER_AREA {
        0.0
    } else {
        area
    }
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

fn seg_box(a: Point, b: Point, pad: f64) -> BBox {
    BBox::new(
        a.x.min(b.x) - pad,
        a.y.min(b.y) - pad,
        a.x.max(b.x) + pad,
        a.y.max(b.y) + pad,
    )
}

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

fn sub(a: Point, b: Point) -> Point {
    Point::new(a.x - b.x, a.y - b.y)
}

fn dot(a: Point, b: Point) -> f64 {
    a.x * b.x + a.y * b.y
}

enum Side {
    Inside,
    Outside,
    OnSame,
    OnOpposite,
}

/// Polygon rings translated to a local origin.
struct LocalPolygon {
    rings: Vec<Vec<Point>>,
    bbox: BBox,
}

impl LocalPolygon {
    fn new(p: &Polygon, origin: Point) -> Self {
        let rings: Vec<Vec<Point>> = p
            .rings()
            .map(|r| r.iter().map(|q| sub(*q, origin)).collect())
            .collect();
        let bbox = BBox::of_points(&rings[0]);
        Self { rings, bbox }
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings.iter().flat_map(|r| {
            let n = r.len();
            (0..n).map(move |k| (r[k], r[(k + 1) % n]))
        })
    }

    /// Parameters along `a→b` where this polygon's boundary meets the segment.
    fn split_params(&self, a: Point, b: Point, eps: f64, out: &mut Vec<f64>) {
        let r = sub(b, a);
        let rlen2 = dot(r, r);
        let rlen = rlen2.sqrt();
        let abox = seg_box(a, b, eps);
        for (c, d) in self.edges() {
            if !abox.intersects(&seg_box(c, d, 0.0)) {
                continue;
            }
            let s = sub(d, c);
            let slen = dot(s, s).sqrt();
            let denom = cross(r, s);
            let ca = sub(c, a);
            if denom.abs() > 1e-12 * rlen * slen {
                let t = cross(ca, s) / denom;
                let u = cross(ca, r) / denom;
                let utol = eps / slen;
                if t > 0.0 && t < 1.0 && u >= -utol && u <= 1.0 + utol {
                    out.push(t);
                }
            } else if (cross(r, ca) / rlen).abs() <= eps {
                for q in [c, d] {
                    let t = dot(sub(q, a), r) / rlen2;
                    if t > 0.0 && t < 1.0 {
                        out.push(t);
                    }
                }
            }
        }
    }

    fn classify(&self, m: Point, dir: Point, eps: f64) -> Side {
        if m.x < self.bbox.min_x - eps
            || m.x > self.bbox.max_x + eps
            || m.y < self.bbox.min_y - eps
            || m.y > self.bbox.max_y + eps
        {
            return Side::Outside;
        }
        let mut best: Option<(f64, Point)> = None;
        for (c, d) in self.edges() {
            if !seg_box(c, d, eps).intersects(&BBox::new(m.x, m.y, m.x, m.y)) {
                continue;
            }
            let s = sub(d, c);
            let slen2 = dot(s, s);
            let t = (dot(sub(m, c), s) / slen2).clamp(0.0, 1.0);
            let dist = m.distance(lerp(c, d, t));
            if dist <= eps && best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, s));
            }
        }
        if let Some((_, s)) = best {
            return if dot(dir, s) > 0.0 {
                Side::OnSame
            } else {
                Side::OnOpposite
            };
        }
        let mut inside = false;
        for ring in &self.rings {
            if super::ring_contains(ring, m) {
                inside = !inside;
            }
        }
        if inside {
            Side::Inside
        } else {
            Side::Outside
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, s: f64) -> Polygon {
        Polygon::rect(BBox::new(x, y, x + s, y + s)).unwrap()
    }

    fn poly(c: &[(f64, f64)]) -> Polygon {
        Polygon::new(c.iter().map(|&(x, y)| Point::new(x, y)).collect(), vec![]).unwrap()
    }

    #[test]
    fn identity_overlap() {
        let a = square(0.0, 0.0, 1.0);
        assert_eq!(intersection_area(&a, &a), 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(
            intersection_area(&square(0.0, 0.0, 1.0), &square(5.0, 5.0, 1.0)),
            0.0
        );
    }

    #[test]
    fn half_shift_overlap() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(0.5, 0.0, 1.0);
        assert!((intersection_area(&a, &b) - 0.5).abs() < 1e-12);
        assert!((intersection_area(&b, &a) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn edge_touching_squares_have_zero_overlap() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(1.0, 0.0, 1.0);
        assert_eq!(intersection_area(&a, &b), 0.0);
    }

    #[test]
    fn triangle_against_square() {
        // right triangle covering half of the unit square
        let t = poly(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]);
        let s = square(0.0, 0.0, 1.0);
        assert!((intersection_area(&t, &s) - 1.0).abs() < 1e-12);
        let s2 = square(1.0, 0.0, 1.0);
        assert!((intersection_area(&t, &s2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn square_with_hole() {
        let ring = |x0: f64, y0: f64, x1: f64, y1: f64| {
            vec![
                Point::new(x0, y0),
                Point::new(x1, y0),
                Point::new(x1, y1),
                Point::new(x0, y1),
            ]
        };
        let holed = Polygon::new(ring(0.0, 0.0, 4.0, 4.0), vec![ring(1.0, 1.0, 3.0, 3.0)]).unwrap();
        let probe = square(0.0, 0.0, 2.0);
        // 4 minus the hole's 1x1 overlap
        assert!((intersection_area(&holed, &probe) - 3.0).abs() < 1e-12);
        let inner = square(1.5, 1.5, 1.0);
        assert_eq!(intersection_area(&holed, &inner), 0.0);
    }

    #[test]
    fn three_way_with_shared_edges() {
        let a = square(0.0, 0.0, 2.0);
        let b = square(0.0, 0.0, 2.0);
        let c = square(1.0, 0.0, 2.0);
        assert!((intersection_area_many(&[&a, &b, &c]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn concave_against_grid_lines() {
        // U shape with the notch aligned to a cell edge
        let u = poly(&[
            (0.0, 0.0),
            (3.0, 0.0),
            (3.0, 3.0),
            (2.0, 3.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 3.0),
            (0.0, 3.0),
        ]);
        assert_eq!(u.area(), 7.0);
        let mut total = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                total += intersection_area(&u, &square(i as f64, j as f64, 1.0));
            }
        }
        assert!((total - 7.0).abs() < 1e-12);
        assert_eq!(intersection_area(&u, &square(1.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn large_coordinates_keep_precision() {
        let a = square(350_000.0, 3_100_000.0, 500.0);
        let b = square(350_250.0, 3_100_100.0, 500.0);
        assert!((intersection_area(&a, &b) - 250.0 * 400.0).abs() < 1e-6);
    }
}
