//! Network layout generation and clustering.
//!
//! Two scenario families are supported: a circular network whose node counts
//! follow a homogeneous Poisson point process, and a square network with a
//! fixed node count and truncated-normal coordinates (dense center, sparse
//! edge). Generated layouts are partitioned into clusters with Lloyd's
//! K-means over the pooled BS and user coordinates, and target clusters are
//! picked by their centroid's distance rank from the network center.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Region};
use crate::rng::{poisson_with, truncated_normal_with, RngStream};

/// Scenario-specific layout parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Circular network of radius `scale_m`; BS count is Poisson with the
    /// given intensity (per square meter) over the disk area.
    Disk { bs_intensity_per_m2: f64 },
    /// Square network `[-scale_m, scale_m]^2` with exactly `bs_count` BSs;
    /// every coordinate is an independent truncated normal draw.
    Square {
        bs_count: usize,
        mean_m: f64,
        std_dev_m: f64,
    },
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Disk { .. } => "disk",
            ScenarioKind::Square { .. } => "square",
        }
    }
}

/// Full description of a network scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Network scale `D` in meters: disk radius, or half the square side.
    pub scale_m: f64,
    /// Ratio of users to BSs over the whole network.
    pub user_bs_ratio: f64,
    /// Number of K-means clusters.
    pub clusters: usize,
    #[serde(flatten)]
    pub kind: ScenarioKind,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_m > 0.0) {
            return Err(Error::invalid_config(
                "scenario.scale_m",
                format!("must be positive, got {}", self.scale_m),
            ));
        }
        if !(self.user_bs_ratio > 0.0) {
            return Err(Error::invalid_config(
                "scenario.user_bs_ratio",
                format!("must be positive, got {}", self.user_bs_ratio),
            ));
        }
        if self.clusters == 0 {
            return Err(Error::invalid_config("scenario.clusters", "must be >= 1"));
        }
        match &self.kind {
            ScenarioKind::Disk {
                bs_intensity_per_m2,
            } => {
                if !(*bs_intensity_per_m2 > 0.0) {
                    return Err(Error::invalid_config(
                        "scenario.bs_intensity_per_m2",
                        format!("must be positive, got {bs_intensity_per_m2}"),
                    ));
                }
            }
            ScenarioKind::Square {
                bs_count,
                std_dev_m,
                ..
            } => {
                if *bs_count == 0 {
                    return Err(Error::invalid_config("scenario.bs_count", "must be >= 1"));
                }
                if !(*std_dev_m > 0.0) {
                    return Err(Error::invalid_config(
                        "scenario.std_dev_m",
                        format!("must be positive, got {std_dev_m}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Same scenario with a different user/BS ratio (used by beta grids).
    pub fn with_user_bs_ratio(&self, ratio: f64) -> Self {
        ScenarioConfig {
            user_bs_ratio: ratio,
            ..self.clone()
        }
    }

    /// The region covered by the network.
    pub fn region(&self) -> Region {
        match self.kind {
            ScenarioKind::Disk { .. } => Region::disk(Point::origin(), self.scale_m),
            ScenarioKind::Square { .. } => Region::square(Point::origin(), self.scale_m),
        }
    }

    pub fn center(&self) -> Point {
        Point::origin()
    }
}

/// BS and user coordinates for one realization of a scenario.
#[derive(Debug, Clone)]
pub struct NodeSet {
    pub bs: Vec<Point>,
    pub users: Vec<Point>,
}

/// Node-to-cluster assignment plus centroids from Lloyd's K-means.
///
/// `assignment` indexes the pooled node list (all BSs first, then all
/// users); `bs_members[m]` / `user_members[m]` hold the indices into
/// `NodeSet::bs` / `NodeSet::users` belonging to cluster `m`.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Point>,
    pub bs_members: Vec<Vec<usize>>,
    pub user_members: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn cluster_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn bs_count(&self, m: usize) -> usize {
        self.bs_members[m].len()
    }

    pub fn user_count(&self, m: usize) -> usize {
        self.user_members[m].len()
    }
}

/// Which cluster the experiment targets, ranked by centroid distance from
/// the network center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSelector {
    Closest,
    Median,
    Furthest,
}

impl ClusterSelector {
    pub fn name(&self) -> &'static str {
        match self {
            ClusterSelector::Closest => "closest",
            ClusterSelector::Median => "median",
            ClusterSelector::Furthest => "furthest",
        }
    }
}

impl std::fmt::Display for ClusterSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Generate one layout realization for the scenario.
pub fn generate(cfg: &ScenarioConfig, stream: RngStream) -> Result<NodeSet> {
    cfg.validate()?;
    let mut rng = stream.rng();
    match cfg.kind {
        ScenarioKind::Disk {
            bs_intensity_per_m2,
        } => {
            let area = std::f64::consts::PI * cfg.scale_m * cfg.scale_m;
            let bs_mean = bs_intensity_per_m2 * area;
            let user_mean = bs_mean * cfg.user_bs_ratio;
            let bs_count = poisson_with(&mut rng, bs_mean) as usize;
            let user_count = poisson_with(&mut rng, user_mean) as usize;
            let mut sample_disk = |n: usize| -> Vec<Point> {
                (0..n)
                    .map(|_| {
                        // Radius density 2t/D^2 on [0, D] => r = D sqrt(u).
                        let r = cfg.scale_m * rng.gen::<f64>().sqrt();
                        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                        Point::new(r * theta.cos(), r * theta.sin())
                    })
                    .collect()
            };
            let bs = sample_disk(bs_count);
            let users = sample_disk(user_count);
            Ok(NodeSet { bs, users })
        }
        ScenarioKind::Square {
            bs_count,
            mean_m,
            std_dev_m,
        } => {
            let user_count = (bs_count as f64 * cfg.user_bs_ratio).round() as usize;
            let d = cfg.scale_m;
            let mut sample_square = |n: usize| -> Vec<Point> {
                (0..n)
                    .map(|_| {
                        let x = truncated_normal_with(&mut rng, mean_m, std_dev_m, -d, d);
                        let y = truncated_normal_with(&mut rng, mean_m, std_dev_m, -d, d);
                        Point::new(x, y)
                    })
                    .collect()
            };
            let bs = sample_square(bs_count);
            let users = sample_square(user_count);
            Ok(NodeSet { bs, users })
        }
    }
}

const KMEANS_MAX_ITERATIONS: usize = 100;

/// Lloyd's K-means over pooled BS and user coordinates.
///
/// Initialization is greedy farthest-point seeding from the stream; the
/// loop runs until assignments stop changing or the iteration cap is hit.
/// Clusters that empty out during an update are repaired by taking the
/// point farthest from its centroid in the largest cluster.
pub fn kmeans_partition(nodes: &NodeSet, m: usize, stream: RngStream) -> Result<Clustering> {
    let pooled: Vec<Point> = nodes.bs.iter().chain(nodes.users.iter()).copied().collect();
    let n = pooled.len();
    if m == 0 {
        return Err(Error::invalid_argument("m", "cluster count must be >= 1"));
    }
    if n < m {
        return Err(Error::invalid_argument(
            "nodes",
            format!("{n} nodes cannot form {m} clusters"),
        ));
    }

    let mut centroids = farthest_point_seeds(&pooled, m, stream);
    let mut assignment = vec![0usize; n];
    let mut converged = false;

    for _ in 0..KMEANS_MAX_ITERATIONS {
        let next: Vec<usize> = pooled
            .iter()
            .map(|p| nearest_centroid(p, &centroids))
            .collect();
        let mut counts = vec![0usize; m];
        for &c in &next {
            counts[c] += 1;
        }
        let mut assignment_next = next;
        repair_empty_clusters(&pooled, &centroids, &mut assignment_next, &mut counts);

        let unchanged = assignment_next == assignment;
        assignment = assignment_next;
        centroids = centroid_means(&pooled, &assignment, &counts);
        if unchanged {
            converged = true;
            break;
        }
    }
    let _ = converged;

    let bs_len = nodes.bs.len();
    let mut bs_members = vec![Vec::new(); m];
    let mut user_members = vec![Vec::new(); m];
    for (i, &c) in assignment.iter().enumerate() {
        if i < bs_len {
            bs_members[c].push(i);
        } else {
            user_members[c].push(i - bs_len);
        }
    }

    Ok(Clustering {
        assignment,
        centroids,
        bs_members,
        user_members,
    })
}

fn nearest_centroid(p: &Point, centroids: &[Point]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = (p.x - c.x).powi(2) + (p.y - c.y).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn farthest_point_seeds(points: &[Point], m: usize, stream: RngStream) -> Vec<Point> {
    let mut rng = stream.rng();
    let first = rng.gen_range(0..points.len());
    let mut seeds = vec![points[first]];
    let mut min_dist: Vec<f64> = points.iter().map(|p| p.distance(&points[first])).collect();
    while seeds.len() < m {
        let (next, _) =
            min_dist
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |acc, (i, &d)| {
                    if d > acc.1 {
                        (i, d)
                    } else {
                        acc
                    }
                });
        seeds.push(points[next]);
        for (i, p) in points.iter().enumerate() {
            let d = p.distance(&points[next]);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }
    seeds
}

fn repair_empty_clusters(
    points: &[Point],
    centroids: &[Point],
    assignment: &mut [usize],
    counts: &mut [usize],
) {
    loop {
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = counts
            .iter()
            .enumerate()
            .max_by_key(|&(_, &c)| c)
            .map(|(i, _)| i)
            .expect("at least one cluster");
        // Move the largest cluster's farthest member into the empty cluster.
        let (victim, _) = assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == largest)
            .map(|(i, _)| (i, points[i].distance(&centroids[largest])))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, d)| {
                if d > acc.1 {
                    (i, d)
                } else {
                    acc
                }
            });
        assignment[victim] = empty;
        counts[largest] -= 1;
        counts[empty] += 1;
    }
}

fn centroid_means(points: &[Point], assignment: &[usize], counts: &[usize]) -> Vec<Point> {
    let m = counts.len();
    let mut sums = vec![(0.0f64, 0.0f64); m];
    for (p, &c) in points.iter().zip(assignment) {
        sums[c].0 += p.x;
        sums[c].1 += p.y;
    }
    sums.iter()
        .zip(counts)
        .map(|(&(sx, sy), &count)| Point::new(sx / count as f64, sy / count as f64))
        .collect()
}

/// Pick a cluster by its centroid's distance rank from `center`.
///
/// Distances are sorted in descending order; `Furthest` is the first entry,
/// `Closest` the last, and `Median` the entry at index `ceil(M/2) - 1` of
/// the descending order (lower median for even cluster counts).
pub fn select_cluster(clustering: &Clustering, which: ClusterSelector, center: Point) -> usize {
    let mut by_distance: Vec<(usize, f64)> = clustering
        .centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.distance(&center)))
        .collect();
    by_distance.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let m = by_distance.len();
    match which {
        ClusterSelector::Furthest => by_distance[0].0,
        ClusterSelector::Closest => by_distance[m - 1].0,
        ClusterSelector::Median => by_distance[m.div_ceil(2) - 1].0,
    }
}
