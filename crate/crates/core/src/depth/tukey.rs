//! Exact planar Tukey (halfspace) depth by angular sweep.

use std::cmp::Ordering;

use crate::diagram::Point;

fn upper(v: Point) -> bool {
    v[1] > 0.0 || (v[1] == 0.0 && v[0] > 0.0)
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Counter-clockwise angular order starting at the positive x-axis.
fn angle_cmp(a: Point, b: Point) -> Ordering {
    match (upper(a), upper(b)) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        _ => 0.0.partial_cmp(&cross(a, b)).unwrap_or(Ordering::Equal),
    }
}

/// `b` lies at angle in `[0, pi)` counter-clockwise from `a`.
fn in_half_turn(a: Point, b: Point) -> bool {
    let c = cross(a, b);
    c > 0.0 || (c == 0.0 && dot(a, b) > 0.0)
}

/// Smallest number of `points` in a closed halfplane whose boundary passes
/// through `x`. Points equal to `x` lie in every such halfplane.
pub fn tukey_depth(x: Point, points: &[Point]) -> usize {
    let mut coincident = 0;
    let mut dirs: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        let v = [p[0] - x[0], p[1] - x[1]];
        if v == [0.0, 0.0] {
            coincident += 1;
        } else {
            dirs.push(v);
        }
    }
    let m = dirs.len();
    if m == 0 {
        return coincident;
    }
    dirs.sort_by(|a, b| angle_cmp(*a, *b));
    // Largest count in a half-open half-turn [theta_s, theta_s + pi), which is the
    // most points an open halfplane avoiding x can hold.
    let mut best = 0;
    let mut end = 0;
    for s in 0..m {
        if s > 0 && angle_cmp(dirs[s - 1], dirs[s]) == Ordering::Equal && in_half_turn(dirs[s - 1], dirs[s]) {
            continue;
        }
        end = end.max(s);
        while end < s + m && in_half_turn(dirs[s], dirs[end % m]) {
            end += 1;
        }
        best = best.max(end - s);
    }
    coincident + m - best
}

/// Depth of every point within its own set.
pub fn depths(points: &[Point]) -> Vec<usize> {
    points.iter().map(|p| tukey_depth(*p, points)).collect()
}

/// Reference implementation: closed halfplanes whose boundary is a line through
/// `x` and a data point, each rotated infinitesimally both ways. O(n^2).
pub fn tukey_depth_brute_force(x: Point, points: &[Point]) -> usize {
    let dirs: Vec<Point> = points.iter().map(|p| [p[0] - x[0], p[1] - x[1]]).collect();
    let coincident = dirs.iter().filter(|v| **v == [0.0, 0.0]).count();
    let mut best = usize::MAX;
    for vj in dirs.iter().filter(|v| **v != [0.0, 0.0]) {
        for side in [1.0, -1.0] {
            for turn in [1.0, -1.0] {
                let count = dirs
                    .iter()
                    .filter(|vk| **vk != [0.0, 0.0])
                    .filter(|vk| {
                        let a = side * cross(*vj, **vk);
                        let b = -side * dot(*vj, **vk);
                        a > 0.0 || (a == 0.0 && turn * b > 0.0)
                    })
                    .count();
                best = best.min(count);
            }
        }
    }
    coincident + if best == usize::MAX { 0 } else { best }
}
