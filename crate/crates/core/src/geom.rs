//! Planar geometry: points, convex regions, and Voronoi cells.
//!
//! Regions are intersections of disks and half-planes, which covers every
//! shape the estimators need (disk networks, square networks, and K-means
//! cells clipped to the network boundary). A convex region supports exact
//! ray-exit queries, which the kernel integrator uses to reduce 2-D
//! integrals to one angular dimension.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn origin() -> Self {
        Point { x: 0.0, y: 0.0 }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A single convex constraint.
#[derive(Debug, Clone)]
enum Constraint {
    /// `|p - center| <= radius`
    Disk { center: Point, radius: f64 },
    /// `(p - origin) . normal <= 0`
    HalfPlane { origin: Point, normal: Point },
}

/// A convex region given as the intersection of constraints.
#[derive(Debug, Clone)]
pub struct Region {
    constraints: Vec<Constraint>,
}

impl Region {
    pub fn disk(center: Point, radius: f64) -> Self {
        Region {
            constraints: vec![Constraint::Disk { center, radius }],
        }
    }

    /// Axis-aligned square `[cx - h, cx + h] x [cy - h, cy + h]`.
    pub fn square(center: Point, half_side: f64) -> Self {
        let h = half_side;
        let hp = |ox, oy, nx, ny| Constraint::HalfPlane {
            origin: Point::new(ox, oy),
            normal: Point::new(nx, ny),
        };
        Region {
            constraints: vec![
                hp(center.x + h, center.y, 1.0, 0.0),
                hp(center.x - h, center.y, -1.0, 0.0),
                hp(center.x, center.y + h, 0.0, 1.0),
                hp(center.x, center.y - h, 0.0, -1.0),
            ],
        }
    }

    /// Intersect two regions.
    pub fn intersect(mut self, other: &Region) -> Self {
        self.constraints.extend(other.constraints.iter().cloned());
        self
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.constraints.iter().all(|c| match c {
            Constraint::Disk { center, radius } => p.distance(center) <= *radius,
            Constraint::HalfPlane { origin, normal } => {
                (p.x - origin.x) * normal.x + (p.y - origin.y) * normal.y <= 0.0
            }
        })
    }

    /// Distance from `from` (inside the region) to the boundary along the
    /// unit direction `(dx, dy)`. Convexity makes the exit unique.
    pub fn ray_exit(&self, from: &Point, dx: f64, dy: f64) -> f64 {
        let mut exit = f64::INFINITY;
        for c in &self.constraints {
            let t = match c {
                Constraint::Disk { center, radius } => {
                    let rx = from.x - center.x;
                    let ry = from.y - center.y;
                    let b = dx * rx + dy * ry;
                    let disc = b * b - (rx * rx + ry * ry - radius * radius);
                    if disc < 0.0 {
                        // Ray from an interior point always meets the circle;
                        // a negative discriminant only arises from rounding.
                        continue;
                    }
                    -b + disc.sqrt()
                }
                Constraint::HalfPlane { origin, normal } => {
                    let heading_out = dx * normal.x + dy * normal.y;
                    if heading_out <= 0.0 {
                        continue;
                    }
                    let slack = (from.x - origin.x) * normal.x + (from.y - origin.y) * normal.y;
                    -slack / heading_out
                }
            };
            if t >= 0.0 && t < exit {
                exit = t;
            }
        }
        exit
    }
}

/// The Voronoi cell of `centroids[m]` with respect to all other centroids:
/// the set of points at least as close to centroid `m` as to any other.
///
/// K-means assignment regions are exactly these cells, so the continuous
/// cluster-region picture matches the discrete clustering.
pub fn voronoi_cell(centroids: &[Point], m: usize) -> Region {
    let own = centroids[m];
    let constraints = centroids
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != m)
        .map(|(_, other)| {
            // Half-plane through the midpoint, outward normal toward `other`.
            let mid = Point::new((own.x + other.x) / 2.0, (own.y + other.y) / 2.0);
            let normal = Point::new(other.x - own.x, other.y - own.y);
            Constraint::HalfPlane {
                origin: mid,
                normal,
            }
        })
        .collect();
    Region { constraints }
}
