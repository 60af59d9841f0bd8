//! Planar convex hulls and polygon membership.

use crate::diagram::Point;

/// `(b - a) x (c - a)`; positive when `a, b, c` turn counter-clockwise.
pub fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Counter-clockwise convex hull without collinear vertices (monotone chain).
/// Degenerate inputs give one or two vertices.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Closed membership test for a counter-clockwise convex polygon; points on an
/// edge count as inside. Polygons with fewer than three vertices are treated as
/// a point or a segment.
pub fn in_convex_polygon(poly: &[Point], p: Point) -> bool {
    match poly.len() {
        0 => false,
        1 => poly[0] == p,
        2 => {
            cross(poly[0], poly[1], p) == 0.0
                && p[0] >= poly[0][0].min(poly[1][0])
                && p[0] <= poly[0][0].max(poly[1][0])
                && p[1] >= poly[0][1].min(poly[1][1])
                && p[1] <= poly[0][1].max(poly[1][1])
        }
        n => (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= 0.0),
    }
}

/// Signed area (positive for counter-clockwise order).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]).sum::<f64>() / 2.0
}

pub fn all_collinear(points: &[Point]) -> bool {
    convex_hull(points).len() < 3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_hull_drops_interior_and_edge_points() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert_eq!(polygon_area(&h), 1.0);
    }

    #[test]
    fn membership_is_closed() {
        let sq = convex_hull(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        assert!(in_convex_polygon(&sq, [1.0, 1.0]));
        assert!(in_convex_polygon(&sq, [2.0, 1.0]));
        assert!(in_convex_polygon(&sq, [0.0, 0.0]));
        assert!(!in_convex_polygon(&sq, [2.0 + 1e-12, 1.0]));
        let seg = vec![[0.0, 0.0], [2.0, 2.0]];
        assert!(in_convex_polygon(&seg, [1.0, 1.0]));
        assert!(!in_convex_polygon(&seg, [3.0, 3.0]));
    }

    #[test]
    fn collinear_detection() {
        assert!(all_collinear(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]));
        assert!(!all_collinear(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.1]]));
    }
}
