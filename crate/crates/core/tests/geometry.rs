use proptest::prelude::*;

use stacc::geometry::{intersection_area, tessellate_grid, BBox, Point, Polygon};

/// Star-shaped polygon around `(cx, cy)`: vertices at increasing angles with
/// radii in `[r/4, r]`, which keeps it simple.
fn star(cx: f64, cy: f64, r: f64, radii: &[f64], phase: f64) -> Polygon {
    let k = radii.len();
    let pts = radii
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let a = phase + std::f64::consts::TAU * i as f64 / k as f64;
            let rr = r * (0.25 + 0.75 * f);
            Point::new(cx + rr * a.cos(), cy + rr * a.sin())
        })
        .collect();
    Polygon::new(pts, vec![]).unwrap()
}

fn star_strategy() -> impl Strategy<Value = Polygon> {
    (
        -50.0f64..50.0,
        -50.0f64..50.0,
        5.0f64..60.0,
        prop::collection::vec(0.0f64..1.0, 3..14),
        0.0f64..6.3,
    )
        .prop_map(|(cx, cy, r, radii, phase)| star(cx, cy, r, &radii, phase))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn intersection_is_symmetric(a in star_strategy(), b in star_strategy()) {
        let ab = intersection_area(&a, &b);
        let ba = intersection_area(&b, &a);
        prop_assert!(rel_close(ab, ba, 1e-9), "{ab} vs {ba}");
    }

    #[test]
    fn intersection_is_bounded_by_smaller_area(a in star_strategy(), b in star_strategy()) {
        let ab = intersection_area(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= a.area().min(b.area()) * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn self_intersection_is_own_area(a in star_strategy()) {
        prop_assert!(rel_close(intersection_area(&a, &a), a.area(), 1e-9));
    }

    #[test]
    fn grid_cells_partition_polygon_area(a in star_strategy(), cell in 3.0f64..40.0) {
        let grid = tessellate_grid(a.bbox(), cell).unwrap();
        let total: f64 = (0..grid.ny)
            .flat_map(|r| (0..grid.nx).map(move |c| (c, r)))
            .map(|(c, r)| intersection_area(&a, &grid.cell_polygon(c, r)))
            .sum();
        prop_assert!(rel_close(total, a.area(), 1e-9), "{total} vs {}", a.area());
    }

    #[test]
    fn halves_partition_polygon_area(a in star_strategy(), split in 0.05f64..0.95) {
        let b = a.bbox();
        let x = b.min_x + split * (b.max_x - b.min_x);
        let left = Polygon::rect(BBox::new(b.min_x - 1.0, b.min_y - 1.0, x, b.max_y + 1.0)).unwrap();
        let right = Polygon::rect(BBox::new(x, b.min_y - 1.0, b.max_x + 1.0, b.max_y + 1.0)).unwrap();
        let sum = intersection_area(&a, &left) + intersection_area(&a, &right);
        prop_assert!(rel_close(sum, a.area(), 1e-9));
    }

    #[test]
    fn translation_preserves_intersection(a in star_strategy(), b in star_strategy(), dx in -1e5f64..1e5, dy in -1e5f64..1e5) {
        let shift = |p: &Polygon| {
            Polygon::new(p.exterior().iter().map(|q| Point::new(q.x + dx, q.y + dy)).collect(), vec![]).unwrap()
        };
        let before = intersection_area(&a, &b);
        let after = intersection_area(&shift(&a), &shift(&b));
        prop_assert!((before - after).abs() <= 1e-6 * before.max(1.0));
    }
}

#[test]
fn rectangle_overlaps_are_exact() {
    let a = Polygon::rect(BBox::new(0.0, 0.0, 4.0, 3.0)).unwrap();
    let b = Polygon::rect(BBox::new(1.0, 1.0, 6.0, 2.5)).unwrap();
    assert_eq!(intersection_area(&a, &b), 3.0 * 1.5);
    let touching = Polygon::rect(BBox::new(4.0, 0.0, 5.0, 3.0)).unwrap();
    assert_eq!(intersection_area(&a, &touching), 0.0);
}

#[test]
fn holes_are_excluded() {
    let square = |x0: f64, x1: f64| {
        vec![
            Point::new(x0, x0),
            Point::new(x1, x0),
            Point::new(x1, x1),
            Point::new(x0, x1),
        ]
    };
    let donut = Polygon::new(square(0.0, 10.0), vec![square(4.0, 6.0)]).unwrap();
    assert_eq!(donut.area(), 96.0);
    let centre = Polygon::rect(BBox::new(3.0, 3.0, 7.0, 7.0)).unwrap();
    assert!((intersection_area(&donut, &centre) - 12.0).abs() < 1e-12);
}
