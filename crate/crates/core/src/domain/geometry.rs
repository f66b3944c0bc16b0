//! Planar geometry on raw house coordinates (meters).

/// Offset added to every hull distance, in meters.
pub const PERIMETER_OFFSET_M: f64 = 50.0;
/// Default neighbourhood radius for the density covariate, in meters.
pub const DENSITY_RADIUS_M: f64 = 100.0;

pub type Point = [f64; 2];

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull vertices in counter-clockwise order (Andrew's monotone chain).
///
/// Collinear boundary points are dropped. Degenerate inputs return one vertex
/// (all points identical) or two (all points collinear).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        // every point collinear: keep the two extreme endpoints
        let first = pts[0];
        let last = pts[pts.len() - 1];
        return vec![first, last];
    }
    lower
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Distance of every house to the village boundary, plus the fixed offset.
#[derive(Debug, Clone, PartialEq)]
pub struct PerimeterDistances {
    pub values: Vec<f64>,
    /// The layout has no two-dimensional hull (all houses collinear or coincident);
    /// distances were taken to the spanning segment instead.
    pub degenerate: bool,
}

/// Shortest distance from each house to the convex-hull boundary, plus 50 m.
pub fn distance_to_perimeter(points: &[Point]) -> PerimeterDistances {
    let hull = convex_hull(points);
    let degenerate = hull.len() < 3;
    let values = points
        .iter()
        .map(|&p| {
            let d = match hull.len() {
                0 => 0.0,
                1 => dist(p, hull[0]),
                2 => point_segment_distance(p, hull[0], hull[1]),
                h => (0..h)
                    .map(|i| point_segment_distance(p, hull[i], hull[(i + 1) % h]))
                    .fold(f64::INFINITY, f64::min),
            };
            d + PERIMETER_OFFSET_M
        })
        .collect();
    PerimeterDistances { values, degenerate }
}

/// Number of *other* houses within `radius` (closed ball) of each house.
///
/// Uses a sweep over x-sorted coordinates; the count relation is symmetric.
pub fn density(points: &[Point], radius: f64) -> Vec<usize> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    let mut counts = vec![0usize; n];
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j][0] - points[i][0] > radius {
                break;
            }
            if dist(points[i], points[j]) <= radius {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    counts
}

/// Maximum pairwise distance, computed over hull vertices.
pub fn diameter(points: &[Point]) -> f64 {
    let hull = convex_hull(points);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            best = best.max(dist(hull[i], hull[j]));
        }
    }
    best
}
