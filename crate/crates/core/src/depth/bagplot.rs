//! Bagplots: bag, fence and loop around the Tukey median.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tukey::depths;
use crate::diagram::Point;
use crate::error::{Error, Result};
use crate::geometry::{all_collinear, convex_hull, cross};

/// Depth ranking, bag and median; fences for any inflation factor follow from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagCore {
    pub depths: Vec<usize>,
    /// Point indices from deepest to shallowest, ties in random order.
    pub ranking: Vec<usize>,
    pub median: Point,
    /// Counter-clockwise hull of the `ceil(n/2)` top-ranked points, extended
    /// down the ranking when those are collinear.
    pub bag: Vec<Point>,
    /// Inflation center: the median when strictly inside the bag, else the
    /// bag's center of gravity.
    pub center: Point,
}

impl BagCore {
    pub fn new<R: Rng + ?Sized>(points: &[Point], rng: &mut R) -> Result<Self> {
        let n = points.len();
        if n < 4 {
            return Err(Error::TooFewPoints { needed: 4, got: n });
        }
        if all_collinear(points) {
            return Err(Error::CollinearPoints);
        }
        let depths = depths(points);
        let mut ranking: Vec<usize> = (0..n).collect();
        ranking.shuffle(rng);
        ranking.sort_by(|a, b| depths[*b].cmp(&depths[*a]));
        let mut h = n.div_ceil(2);
        let mut bag = convex_hull(&ranking[..h].iter().map(|&i| points[i]).collect::<Vec<_>>());
        while bag.len() < 3 {
            h += 1;
            bag = convex_hull(&ranking[..h].iter().map(|&i| points[i]).collect::<Vec<_>>());
        }
        let max_depth = depths[ranking[0]];
        let deepest: Vec<Point> = ranking[..h].iter().filter(|&&i| depths[i] == max_depth).map(|&i| points[i]).collect();
        let k = deepest.len() as f64;
        let median = [deepest.iter().map(|p| p[0]).sum::<f64>() / k, deepest.iter().map(|p| p[1]).sum::<f64>() / k];
        let center = if strictly_inside(&bag, median) { median } else { polygon_centroid(&bag) };
        Ok(Self { depths, ranking, median, bag, center })
    }

    /// Smallest `c` with `p` inside the fence `center + c (bag - center)`;
    /// `p` is an outlier at `c` exactly when this exceeds `c`.
    pub fn gauge(&self, p: Point) -> f64 {
        let m = self.center;
        let v = [p[0] - m[0], p[1] - m[1]];
        if v == [0.0, 0.0] {
            return 0.0;
        }
        let rel: Vec<Point> = self.bag.iter().map(|b| [b[0] - m[0], b[1] - m[1]]).collect();
        match rel.len() {
            0 => f64::INFINITY,
            1 => {
                if rel[0] == [0.0, 0.0] {
                    f64::INFINITY
                } else {
                    segment_gauge([0.0, 0.0], rel[0], v)
                }
            }
            2 => segment_gauge(rel[0], rel[1], v),
            k => {
                let mut g: f64 = 0.0;
                for i in 0..k {
                    let (a, b) = (rel[i], rel[(i + 1) % k]);
                    // Outward normal (e_y, -e_x) for a counter-clockwise edge e = b - a.
                    let nrm = [b[1] - a[1], a[0] - b[0]];
                    let h = nrm[0] * a[0] + nrm[1] * a[1];
                    let s = nrm[0] * v[0] + nrm[1] * v[1];
                    if h > 0.0 {
                        g = g.max(s / h);
                    } else if s > 0.0 {
                        return f64::INFINITY;
                    }
                }
                g
            }
        }
    }

    /// Fence polygon for inflation `c`.
    pub fn fence(&self, c: f64) -> Vec<Point> {
        let m = self.center;
        self.bag.iter().map(|b| [m[0] + c * (b[0] - m[0]), m[1] + c * (b[1] - m[1])]).collect()
    }

    /// Indices of the points strictly outside the fence at `c`.
    pub fn outliers(&self, points: &[Point], c: f64) -> Vec<usize> {
        (0..points.len()).filter(|&i| self.gauge(points[i]) > c).collect()
    }
}

/// Inside with a margin relative to the polygon's size, so gauges stay well conditioned.
fn strictly_inside(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    let span = poly.iter().flat_map(|a| poly.iter().map(move |b| (a[0] - b[0]).hypot(a[1] - b[1]))).fold(0.0, f64::max);
    n >= 3
        && (0..n).all(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            cross(a, b, p) / (b[0] - a[0]).hypot(b[1] - a[1]) > 1e-9 * span
        })
}

fn polygon_centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let w = p[0] * q[1] - q[0] * p[1];
        a += w;
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
    }
    [cx / (3.0 * a), cy / (3.0 * a)]
}

/// Gauge of `v` for the segment `[a, b]` (both relative to the median).
fn segment_gauge(a: Point, b: Point, v: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    if cross([0.0, 0.0], d, v) != 0.0 || cross(a, b, [0.0, 0.0]) != 0.0 {
        return f64::INFINITY;
    }
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = (v[0] * d[0] + v[1] * d[1]) / len2;
    let ta = (a[0] * d[0] + a[1] * d[1]) / len2;
    let tb = (b[0] * d[0] + b[1] * d[1]) / len2;
    let (lo, hi) = (ta.min(tb), ta.max(tb));
    let g = if t > 0.0 { t / hi } else { t / lo };
    if g.is_nan() || g < 0.0 {
        f64::INFINITY
    } else {
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bagplot {
    pub depths: Vec<usize>,
    pub median: Point,
    pub center: Point,
    pub bag: Vec<Point>,
    pub fence: Vec<Point>,
    #[serde(rename = "loop")]
    pub loop_hull: Vec<Point>,
    pub outliers: Vec<usize>,
    pub inflation: f64,
}

/// Bagplot of `points` with inflation factor `c`; `rng` breaks depth ties.
pub fn bagplot<R: Rng + ?Sized>(points: &[Point], c: f64, rng: &mut R) -> Result<Bagplot> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("inflation must be positive, got {c}")));
    }
    let core = BagCore::new(points, rng)?;
    let outliers = core.outliers(points, c);
    let inside: Vec<Point> = (0..points.len()).filter(|i| !outliers.contains(i)).map(|i| points[i]).collect();
    Ok(Bagplot {
        fence: core.fence(c),
        loop_hull: convex_hull(&inside),
        outliers,
        inflation: c,
        median: core.median,
        center: core.center,
        bag: core.bag,
        depths: core.depths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::in_convex_polygon;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn cloud() -> Vec<Point> {
        // Two rings around the origin plus the origin itself.
        let mut pts = vec![[0.0, 0.0]];
        for k in 0..8 {
            let t = k as f64 * std::f64::consts::FRAC_PI_4 + 0.1;
            pts.push([t.cos(), t.sin()]);
            pts.push([2.0 * (t + 0.2).cos(), 2.0 * (t + 0.2).sin()]);
        }
        pts
    }

    #[test]
    fn interior_median_gives_no_outliers_at_three() {
        let b = bagplot(&cloud(), 3.0, &mut rng()).unwrap();
        assert!(b.outliers.is_empty());
        assert_eq!(b.median, [0.0, 0.0]);
    }

    #[test]
    fn far_point_is_the_unique_outlier() {
        let mut pts = cloud();
        pts.push([200.0, 200.0]);
        let b = bagplot(&pts, 3.0, &mut rng()).unwrap();
        assert_eq!(b.outliers, vec![pts.len() - 1]);
    }

    #[test]
    fn square_with_center_median_is_center() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let b = bagplot(&pts, 3.0, &mut rng()).unwrap();
        assert_eq!(b.median, [0.5, 0.5]);
        assert_eq!(b.depths[4], 3);
        // The median is a bag vertex here, so inflation is about the bag centroid.
        assert_ne!(b.center, b.median);
        let huge = bagplot(&pts, 1e6, &mut rng()).unwrap();
        assert!(huge.outliers.is_empty());
    }

    #[test]
    fn collinear_and_tiny_inputs_rejected() {
        let line = vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert!(matches!(bagplot(&line, 3.0, &mut rng()), Err(Error::CollinearPoints)));
        assert!(matches!(bagplot(&line[..3], 3.0, &mut rng()), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn gauge_agrees_with_fence_membership() {
        let pts = cloud();
        let core = BagCore::new(&pts, &mut rng()).unwrap();
        for c in [1.0, 1.5, 2.0, 3.0] {
            let fence = core.fence(c);
            for x in -30..=30 {
                for y in -30..=30 {
                    let p = [x as f64 * 0.1, y as f64 * 0.1];
                    let g = core.gauge(p);
                    if (g - c).abs() > 1e-9 {
                        assert_eq!(g <= c, in_convex_polygon(&fence, p), "{p:?} c={c} g={g}");
                    }
                }
            }
        }
    }

    #[test]
    fn on_fence_edge_counts_inside() {
        let pts = vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [0.0, 0.0], [-0.5, 0.0], [0.5, 0.0], [0.0, 0.5]];
        let core = BagCore::new(&pts, &mut rng()).unwrap();
        let c = 2.0;
        let fence = core.fence(c);
        let mid = [(fence[0][0] + fence[1][0]) / 2.0, (fence[0][1] + fence[1][1]) / 2.0];
        assert!(core.gauge(mid) <= c + 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let pts = cloud();
        let a = bagplot(&pts, 2.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = bagplot(&pts, 2.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn structural_invariants(pts in prop::collection::vec(prop::array::uniform2(-1.0f64..1.0), 6..30), seed in 0u64..100) {
            prop_assume!(!all_collinear(&pts));
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let core = BagCore::new(&pts, &mut r).unwrap();
            let mut prev = usize::MAX;
            for c in [1.0, 1.5, 2.0, 3.0, 5.0] {
                let out = core.outliers(&pts, c);
                prop_assert!(out.len() <= prev);
                prev = out.len();
                let fence = core.fence(c);
                for v in &core.bag {
                    prop_assert!(core.gauge(*v) <= 1.0 + 1e-9);
                }
                for (i, p) in pts.iter().enumerate() {
                    let g = core.gauge(*p);
                    if (g - c).abs() > 1e-9 {
                        prop_assert_eq!(out.contains(&i), !in_convex_polygon(&fence, *p));
                    }
                }
            }
            let h = pts.len().div_ceil(2);
            for &i in &core.ranking[..h] {
                prop_assert!(core.gauge(pts[i]) <= 1.0 + 1e-9);
            }
            prop_assert!(core.gauge(core.center) == 0.0);
            prop_assert!(core.gauge(core.median) <= 1.0 + 1e-9);
        }
    }
}
