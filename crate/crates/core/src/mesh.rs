//! Separated and covering point sets with respect to the refined metric.
//!
//! [`build_mesh`] selects points from a seeded candidate pool of the
//! normalized body. In maximal mode it runs farthest-point insertion: every
//! step adds the pool point farthest (in `ρ̂`) from the points chosen so far,
//! until every pool point is within `ε = c_mesh / n`. The result is
//! `ε`-separated and covers the pool at radius `ε`. Covering-only mode makes a
//! single first-fit pass over the pool instead.
//!
//! Both passes lean on the chord bound `ρ̂(x, y) >= k·|x - y|`: a new mesh point
//! can only lower the distance of pool points inside a Euclidean window, and
//! the pool is sorted by first coordinate so the window is a binary search.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::dubiner::MetricContext;
use crate::error::{Error, Result};
use crate::geometry::{sample_candidates, AffineMap};
use crate::linalg;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshMode {
    MaximalSeparated,
    CoveringOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    /// Polynomial degree.
    pub n: usize,
    /// `ε = c_mesh / n`.
    pub c_mesh: f64,
    pub pool_size: usize,
    pub boundary_fraction: f64,
    pub seed: u64,
    pub mode: MeshMode,
    /// Separation floor `η / n` for covering-only meshes; `η <= c_mesh`.
    pub eta: f64,
}

/// Tuned mesh constant: 0.5 in the plane, 0.25 in space, `1/d` above.
pub fn default_c_mesh(dim: usize) -> f64 {
    match dim {
        1 | 2 => 0.5,
        3 => 0.25,
        d => 1.0 / d as f64,
    }
}

pub const DEFAULT_BOUNDARY_FRACTION: f64 = 0.7;

impl MeshSpec {
    pub fn new(dim: usize, n: usize) -> Self {
        let c_mesh = default_c_mesh(dim);
        MeshSpec {
            n,
            c_mesh,
            pool_size: default_pool_size(dim, n, c_mesh),
            boundary_fraction: DEFAULT_BOUNDARY_FRACTION,
            seed: 0,
            mode: MeshMode::MaximalSeparated,
            eta: 0.5 * c_mesh,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.c_mesh / self.n as f64
    }

    /// The separation the mesh is guaranteed to have.
    pub fn separation_target(&self) -> f64 {
        match self.mode {
            MeshMode::MaximalSeparated => self.epsilon(),
            MeshMode::CoveringOnly => self.eta / self.n as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("mesh degree n must be at least 1".into()));
        }
        if !(self.c_mesh > 0.0 && self.c_mesh.is_finite()) {
            return Err(Error::InvalidInput("c_mesh must be positive".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::EmptyPool);
        }
        if !(0.0..=1.0).contains(&self.boundary_fraction) {
            return Err(Error::InvalidInput("boundary_fraction must lie in [0, 1]".into()));
        }
        if self.mode == MeshMode::CoveringOnly && !(self.eta > 0.0 && self.eta <= self.c_mesh) {
            return Err(Error::InvalidInput("covering-only mode needs 0 < eta <= c_mesh".into()));
        }
        Ok(())
    }
}

/// Pool size giving roughly 16 candidates per `ρ`-ball of radius `ε/2` for
/// a body whose mesh has about `3 (n / c_mesh)^d` points.
pub fn default_pool_size(dim: usize, n: usize, c_mesh: f64) -> usize {
    let expected = expected_cardinality(dim, n, c_mesh);
    let per_ball = 16.0 * 2f64.powi(dim as i32);
    ((per_ball * expected).ceil() as usize).clamp(2000, 4_000_000)
}

fn expected_cardinality(dim: usize, n: usize, c_mesh: f64) -> f64 {
    3.0 * (n as f64 / c_mesh).powi(dim as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    /// Minimum pairwise refined distance between mesh points.
    pub separation: f64,
    /// Largest refined distance from a construction or validation pool point
    /// to its nearest mesh point.
    pub covering: f64,
    /// Measured relative shortfall of refined distances against a dense direction set.
    pub tau_dir: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub body_fingerprint: String,
    pub spec: MeshSpec,
    /// Mesh points in the coordinates of the original body.
    pub points: Vec<Vec<f64>>,
    /// The same points in normalized coordinates.
    pub normalized_points: Vec<Vec<f64>>,
    pub to_normalized: AffineMap,
    pub certificates: Certificates,
    /// Distance of each point to the earlier ones when it was inserted; the
    /// first point records the diameter bound `sqrt(2·outer_radius)`.
    pub insertion_radii: Vec<f64>,
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Points sorted by their first coordinate for Euclidean window queries.
pub(crate) struct Sweep<'a> {
    points: &'a [Vec<f64>],
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl<'a> Sweep<'a> {
    pub(crate) fn new(points: &'a [Vec<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| points[i][0]).collect();
        Sweep { points, order, keys }
    }

    /// Indices (ascending) of points within Euclidean distance `r` of `z`.
    pub(crate) fn within(&self, z: &[f64], r: f64) -> Vec<usize> {
        let lo = self.keys.partition_point(|&k| k < z[0] - r);
        let hi = self.keys.partition_point(|&k| k <= z[0] + r);
        let r2 = r * r;
        let mut out: Vec<usize> = self.order[lo..hi]
            .iter()
            .copied()
            .filter(|&i| {
                let p = &self.points[i];
                p.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Refined distance from `z` to the nearest point, or `None` if empty.
    pub(crate) fn nearest(&self, ctx: &MetricContext, z: &[f64], rounds: usize) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        // Seed with the Euclidean-nearest point in a growing window.
        let k = ctx.chord_constant();
        let mut radius = 1e-3;
        let seed = loop {
            let near = self.within(z, radius);
            if let Some(&i) = near
                .iter()
                .min_by(|&&a, &&b| linalg::dist(&self.points[a], z).total_cmp(&linalg::dist(&self.points[b], z)))
            {
                break i;
            }
            radius *= 4.0;
        };
        let mut best = (seed, ctx.refined_witness(&self.points[seed], z, rounds).value);
        let reach = best.1 / k * (1.0 + 1e-9);
        for i in self.within(z, reach) {
            if i == seed {
                continue;
            }
            if linalg::dist(&self.points[i], z) * k > best.1 * (1.0 + 1e-9) {
                continue;
            }
            if let Some(w) = ctx.refined_at_most(&self.points[i], z, best.1, rounds) {
                if w.value < best.1 || (w.value == best.1 && i < best.0) {
                    best = (i, w.value);
                }
            }
        }
        Some(best)
    }
}

#[inline]
fn key(v: f64) -> u64 {
    // Distances are nonnegative, where the bit pattern order is the numeric order.
    v.max(0.0).to_bits()
}

/// Greedy farthest-point (or first-fit) selection from the candidate pool described by `spec`.
pub fn build_mesh(ctx: &MetricContext, spec: &MeshSpec) -> Result<Mesh> {
    spec.validate()?;
    let body = ctx.body();
    let pool = sample_candidates(body, spec.pool_size, spec.boundary_fraction, spec.seed)?;
    let (selected, radii, pool_covering) = match spec.mode {
        MeshMode::MaximalSeparated => farthest_point(ctx, &pool, spec.epsilon()),
        MeshMode::CoveringOnly => first_fit(ctx, &pool, spec.epsilon()),
    };
    let normalized_points: Vec<Vec<f64>> = selected.iter().map(|&i| pool[i].clone()).collect();
    let separation = if normalized_points.len() < 2 {
        ctx.diameter_bound()
    } else {
        radii[1..].iter().copied().fold(f64::INFINITY, f64::min)
    };

    // Covering is certified on the construction pool and re-checked on a fresh pool.
    let rounds = ctx.default_rounds();
    let validation_size = (spec.pool_size / 4).max(256);
    let validation = sample_candidates(body, validation_size, spec.boundary_fraction, spec.seed.wrapping_add(1))?;
    let sweep = Sweep::new(&normalized_points);
    let validation_covering = par::map_slice(&validation, |z| sweep.nearest(ctx, z, rounds).map_or(0.0, |b| b.1))
        .into_iter()
        .fold(0.0, f64::max);
    let covering = pool_covering.max(validation_covering);
    let epsilon = spec.epsilon();
    if covering > 2.0 * epsilon {
        return Err(Error::MeshQuality { covering, epsilon });
    }
    let tau_dir = ctx.estimate_tau_dir(32, spec.seed.wrapping_add(2))?;
    Ok(Mesh {
        body_fingerprint: body.source_fingerprint.clone(),
        spec: spec.clone(),
        points: normalized_points.iter().map(|p| body.from_normalized.apply(p)).collect(),
        normalized_points,
        to_normalized: body.to_normalized.clone(),
        certificates: Certificates { separation, covering, tau_dir },
        insertion_radii: radii,
    })
}

/// Index of the pool point closest to the pool mean.
fn central_index(pool: &[Vec<f64>]) -> usize {
    let d = pool[0].len();
    let mean: Vec<f64> = (0..d).map(|k| pool.iter().map(|p| p[k]).sum::<f64>() / pool.len() as f64).collect();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in pool.iter().enumerate() {
        let dd = linalg::dist(p, &mean);
        if dd < best_d {
            best_d = dd;
            best = i;
        }
    }
    best
}

/// Returns (selected pool indices, insertion radii, final pool covering radius).
fn farthest_point(ctx: &MetricContext, pool: &[Vec<f64>], epsilon: f64) -> (Vec<usize>, Vec<f64>, f64) {
    let rounds = ctx.default_rounds();
    let k = ctx.chord_constant();
    let sweep = Sweep::new(pool);
    let first = central_index(pool);
    let mut dist: Vec<f64> = par::map_slice(pool, |z| ctx.refined_witness(&pool[first], z, rounds).value);
    dist[first] = 0.0;
    let mut heap: BinaryHeap<(u64, Reverse<usize>)> =
        dist.iter().enumerate().map(|(i, &v)| (key(v), Reverse(i))).collect();
    let mut selected = vec![first];
    let mut radii = vec![ctx.diameter_bound()];
    let mut last = f64::INFINITY;
    let covering = loop {
        let Some((kv, Reverse(q))) = heap.pop() else { break 0.0 };
        if kv != key(dist[q]) {
            continue; // stale entry
        }
        let r = dist[q];
        if r <= epsilon {
            break r;
        }
        assert!(r <= last, "insertion radii must be nonincreasing");
        last = r;
        selected.push(q);
        radii.push(r);
        let x = &pool[q];
        let window = sweep.within(x, r / k * (1.0 + 1e-9));
        let updates = par::map_slice(&window, |&p| {
            let current = dist[p];
            if current == 0.0 || linalg::dist(x, &pool[p]) * k > current * (1.0 + 1e-9) {
                return None;
            }
            ctx.refined_at_most(x, &pool[p], current, rounds)
                .filter(|w| w.value < current)
                .map(|w| w.value)
        });
        for (&p, u) in window.iter().zip(updates) {
            if let Some(v) = u {
                dist[p] = v;
                heap.push((key(v), Reverse(p)));
            }
        }
        dist[q] = 0.0;
    };
    (selected, radii, covering)
}

/// One pass in pool order: a point joins the mesh when it is farther than
/// `ε` from every point chosen so far.
fn first_fit(ctx: &MetricContext, pool: &[Vec<f64>], epsilon: f64) -> (Vec<usize>, Vec<f64>, f64) {
    let rounds = ctx.default_rounds();
    let k = ctx.chord_constant();
    let reach = epsilon / k * (1.0 + 1e-9);
    let mut selected: Vec<usize> = Vec::new();
    let mut radii: Vec<f64> = Vec::new();
    // Mesh points bucketed by their first coordinate for window queries.
    let mut buckets: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
    let bucket = |v: f64| (v / reach).floor() as i64;
    let mut covering: f64 = 0.0;
    for (i, z) in pool.iter().enumerate() {
        let b = bucket(z[0]);
        let mut nearest = f64::INFINITY;
        for (_, members) in buckets.range(b - 1..=b + 1) {
            for &j in members {
                let m = &pool[j];
                if linalg::dist(m, z) * k > epsilon * (1.0 + 1e-9) {
                    continue;
                }
                if let Some(w) = ctx.refined_at_most(m, z, nearest.min(epsilon), rounds) {
                    nearest = nearest.min(w.value);
                }
            }
        }
        if nearest <= epsilon {
            covering = covering.max(nearest);
            continue;
        }
        // Exact distance to the set for the insertion record.
        let radius = if selected.is_empty() {
            ctx.diameter_bound()
        } else {
            selected
                .iter()
                .map(|&j| ctx.refined_witness(&pool[j], z, rounds).value)
                .fold(f64::INFINITY, f64::min)
        };
        selected.push(i);
        radii.push(radius);
        buckets.entry(b).or_default().push(i);
    }
    (selected, radii, covering)
}

/// Minimum pairwise refined distance of the mesh, recomputed from scratch.
/// A single point reports the diameter bound `sqrt(2·outer_radius)`.
pub fn separation_audit(ctx: &MetricContext, mesh: &Mesh) -> f64 {
    let pts = &mesh.normalized_points;
    if pts.len() < 2 {
        return ctx.diameter_bound();
    }
    let rounds = ctx.default_rounds();
    let k = ctx.chord_constant();
    // Upper bound from consecutive pairs, then a pruned all-pairs pass.
    let mut best = f64::INFINITY;
    for w in pts.windows(2) {
        best = best.min(ctx.refined_witness(&w[0], &w[1], rounds).value);
    }
    let sweep = Sweep::new(pts);
    let per_point = par::map_range(pts.len(), |i| {
        let mut local = best;
        for j in sweep.within(&pts[i], best / k * (1.0 + 1e-9)) {
            if j <= i {
                continue;
            }
            if let Some(w) = ctx.refined_at_most(&pts[i], &pts[j], local, rounds) {
                local = local.min(w.value);
            }
        }
        local
    });
    per_point.into_iter().fold(best, f64::min)
}

/// Refined distance from each mesh point to its nearest other mesh point
/// (the diameter bound for a single point).
pub fn nearest_neighbor_distances(ctx: &MetricContext, mesh: &Mesh) -> Vec<f64> {
    let pts = &mesh.normalized_points;
    if pts.len() < 2 {
        return vec![ctx.diameter_bound(); pts.len()];
    }
    let rounds = ctx.default_rounds();
    let k = ctx.chord_constant();
    let sweep = Sweep::new(pts);
    par::map_range(pts.len(), |i| {
        let mut radius = 1e-3;
        let seed = loop {
            let near = sweep.within(&pts[i], radius);
            if let Some(&j) = near
                .iter()
                .filter(|&&j| j != i)
                .min_by(|&&a, &&b| linalg::dist(&pts[a], &pts[i]).total_cmp(&linalg::dist(&pts[b], &pts[i])))
            {
                break j;
            }
            radius *= 4.0;
        };
        let mut best = ctx.refined_witness(&pts[i], &pts[seed], rounds).value;
        for j in sweep.within(&pts[i], best / k * (1.0 + 1e-9)) {
            if j == i || j == seed {
                continue;
            }
            if let Some(w) = ctx.refined_at_most(&pts[i], &pts[j], best, rounds) {
                best = best.min(w.value);
            }
        }
        best
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: usize,
    pub cardinality: usize,
    /// `N / n^d`.
    pub normalized: f64,
    pub pool_size: usize,
}

/// One mesh per degree, with pool sizes chosen so that every mesh has at
/// least `16·2^d` pool points per mesh point.
pub fn mesh_cardinality_scan(ctx: &MetricContext, degrees: &[usize], c_mesh: f64, seed: u64) -> Result<Vec<ScanRow>> {
    if degrees.is_empty() {
        return Err(Error::InvalidInput("need at least one degree".into()));
    }
    if degrees.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("degrees must be strictly increasing".into()));
    }
    let dim = ctx.dim();
    let mut rows = Vec::with_capacity(degrees.len());
    for &n in degrees {
        let mut spec = MeshSpec::new(dim, n);
        spec.c_mesh = c_mesh;
        spec.eta = 0.5 * c_mesh;
        spec.seed = seed;
        spec.pool_size = default_pool_size(dim, n, c_mesh);
        let mesh = build_dense_enough(ctx, &mut spec)?;
        rows.push(ScanRow {
            n,
            cardinality: mesh.len(),
            normalized: mesh.len() as f64 / (n as f64).powi(dim as i32),
            pool_size: spec.pool_size,
        });
    }
    Ok(rows)
}

/// Build, and rebuild with a larger pool while the pool has fewer than
/// `16·2^d` candidates per mesh point.
pub fn build_dense_enough(ctx: &MetricContext, spec: &mut MeshSpec) -> Result<Mesh> {
    let per_point = 16 * (1usize << ctx.dim());
    loop {
        let mesh = build_mesh(ctx, spec)?;
        let needed = per_point * mesh.len();
        if spec.pool_size >= needed || spec.pool_size >= 4_000_000 {
            return Ok(mesh);
        }
        spec.pool_size = (needed * 5 / 4).min(4_000_000);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dubiner::DirectionSet;
    use crate::geometry::{ConvexBody, NormalizedBody};

    fn disk() -> MetricContext {
        let body = NormalizedBody::identity(ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()).unwrap();
        MetricContext::new(body, DirectionSet::with_count(2, 256, 4).unwrap()).unwrap()
    }

    fn spec(n: usize, pool: usize) -> MeshSpec {
        MeshSpec { pool_size: pool, ..MeshSpec::new(2, n) }
    }

    #[test]
    fn huge_epsilon_gives_one_point() {
        let ctx = disk();
        let mut s = spec(1, 500);
        s.c_mesh = 2.0;
        let mesh = build_mesh(&ctx, &s).unwrap();
        assert_eq!(mesh.len(), 1);
        assert_eq!(separation_audit(&ctx, &mesh), ctx.diameter_bound());
    }

    #[test]
    fn maximal_mesh_certificates() {
        let ctx = disk();
        let s = spec(3, 4000);
        let mesh = build_mesh(&ctx, &s).unwrap();
        assert!(mesh.len() > 3);
        assert!(mesh.certificates.separation > s.epsilon());
        assert!(mesh.certificates.covering <= 2.0 * s.epsilon());
        assert!(mesh.insertion_radii[1..].windows(2).all(|w| w[0] >= w[1]));
        let audit = separation_audit(&ctx, &mesh);
        assert!((audit - mesh.certificates.separation).abs() <= 1e-12);
        // Independent pass: every pool point is within the pool covering radius.
        let pool = sample_candidates(ctx.body(), s.pool_size, s.boundary_fraction, s.seed).unwrap();
        let worst = pool
            .iter()
            .map(|z| {
                mesh.normalized_points
                    .iter()
                    .map(|m| ctx.refined_witness(m, z, 4).value)
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        assert!(worst <= s.epsilon());
        assert_eq!(build_mesh(&ctx, &s).unwrap(), mesh);
        let nn = nearest_neighbor_distances(&ctx, &mesh);
        let brute: Vec<f64> = (0..mesh.len())
            .map(|i| {
                (0..mesh.len())
                    .filter(|&j| j != i)
                    .map(|j| ctx.refined_witness(&mesh.normalized_points[i], &mesh.normalized_points[j], ctx.default_rounds()).value)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        for (a, b) in nn.iter().zip(&brute) {
            assert!((a - b).abs() <= 1e-12, "{a} {b}");
        }
        assert!((nn.iter().copied().fold(f64::INFINITY, f64::min) - audit).abs() <= 1e-12);
    }

    #[test]
    fn duplicate_points_fail_the_audit() {
        let ctx = disk();
        let mut mesh = build_mesh(&ctx, &spec(2, 2000)).unwrap();
        let p = mesh.normalized_points[0].clone();
        mesh.normalized_points.push(p);
        assert_eq!(separation_audit(&ctx, &mesh), 0.0);
    }

    #[test]
    fn covering_mode_respects_floor() {
        let ctx = disk();
        let mut s = spec(3, 3000);
        s.mode = MeshMode::CoveringOnly;
        let mesh = build_mesh(&ctx, &s).unwrap();
        assert!(separation_audit(&ctx, &mesh) >= s.separation_target());
        let maximal = build_mesh(&ctx, &spec(3, 3000)).unwrap();
        assert!(mesh.len() <= 64 * maximal.len());
        s.eta = 2.0 * s.c_mesh;
        assert!(build_mesh(&ctx, &s).is_err());
    }

    #[test]
    fn sparse_pool_is_reported() {
        let ctx = disk();
        let s = spec(12, 20);
        assert!(matches!(build_mesh(&ctx, &s), Err(Error::MeshQuality { .. })));
    }
}
