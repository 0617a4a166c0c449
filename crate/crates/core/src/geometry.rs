//! Convex bodies given by support-function friendly representations.
//!
//! A [`ConvexBody`] is one of four base shapes (H-polytope, V-polytope, ball,
//! ellipsoid) optionally pushed through a nonsingular affine map. On
//! construction the body is resolved into world coordinates once, so every
//! query (support value, membership, ray extent) runs against a single
//! representation:
//!
//! - H-polytopes keep unit outward normals `a·z <= b`,
//! - V-polytopes keep their transformed vertex list,
//! - balls and ellipsoids become `{z : (z-c)ᵀ A⁻¹ (z-c) <= 1}`.
//!
//! Bodies are validated at construction: unbounded or lower-dimensional
//! inputs are rejected rather than inflated.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};

/// Tolerance used when checking that direction arguments have unit length.
pub const UNIT_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Affine maps

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AffineMapFile {
    matrix: Vec<Vec<f64>>,
    shift: Vec<f64>,
}

/// `z ↦ matrix·z + shift` with a cached inverse of the linear part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineMapFile", into = "AffineMapFile")]
pub struct AffineMap {
    matrix: DMatrix<f64>,
    shift: Vec<f64>,
    inverse: DMatrix<f64>,
}

impl TryFrom<AffineMapFile> for AffineMap {
    type Error = Error;

    fn try_from(file: AffineMapFile) -> Result<Self> {
        let d = file.shift.len();
        if file.matrix.len() != d || file.matrix.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidInput(format!(
                "affine map must be {d}x{d} to match its shift"
            )));
        }
        let matrix = DMatrix::from_fn(d, d, |i, j| file.matrix[i][j]);
        AffineMap::new(matrix, file.shift)
    }
}

impl From<AffineMap> for AffineMapFile {
    fn from(map: AffineMap) -> Self {
        let d = map.dim();
        AffineMapFile {
            matrix: (0..d).map(|i| (0..d).map(|j| map.matrix[(i, j)]).collect()).collect(),
            shift: map.shift,
        }
    }
}

impl AffineMap {
    pub fn new(matrix: DMatrix<f64>, shift: Vec<f64>) -> Result<Self> {
        let d = shift.len();
        if matrix.nrows() != d || matrix.ncols() != d || d == 0 {
            return Err(Error::InvalidInput("affine map dimensions disagree".into()));
        }
        if matrix.iter().chain(shift.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("affine map has non-finite entries".into()));
        }
        let sv = matrix.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smax > 0.0) || smin <= 1e-12 * smax {
            return Err(Error::InvalidInput("affine map is singular".into()));
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("affine map is singular".into()))?;
        let residual = (&matrix * &inverse - DMatrix::<f64>::identity(d, d)).amax();
        if residual > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "affine map is too ill-conditioned to invert (residual {residual:.2e})"
            )));
        }
        Ok(AffineMap { matrix, shift, inverse })
    }

    pub fn identity(dim: usize) -> Self {
        AffineMap {
            matrix: DMatrix::identity(dim, dim),
            shift: vec![0.0; dim],
            inverse: DMatrix::identity(dim, dim),
        }
    }

    pub fn scaling(dim: usize, factor: f64) -> Result<Self> {
        AffineMap::new(DMatrix::identity(dim, dim) * factor, vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut out = linalg::mat_vec(&self.matrix, z);
        for (o, t) in out.iter_mut().zip(&self.shift) {
            *o += t;
        }
        out
    }

    pub fn apply_inverse(&self, z: &[f64]) -> Vec<f64> {
        let centered = linalg::sub(z, &self.shift);
        linalg::mat_vec(&self.inverse, &centered)
    }

    pub fn inverse(&self) -> AffineMap {
        let shift = linalg::mat_vec(&self.inverse, &self.shift)
            .into_iter()
            .map(|x| -x)
            .collect();
        AffineMap {
            matrix: self.inverse.clone(),
            shift,
            inverse: self.matrix.clone(),
        }
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        let matrix = &self.matrix * &inner.matrix;
        let inverse = &inner.inverse * &self.inverse;
        let shift = self.apply(&inner.shift);
        AffineMap { matrix, shift, inverse }
    }

    /// Spectral norm of the linear part, equal to the norm of its transpose.
    pub fn linear_norm(&self) -> f64 {
        linalg::operator_norm(&self.matrix, 1e-10)
    }
}

// ---------------------------------------------------------------------------
// Shapes

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    /// `{z : normal·z <= offset}` for every halfspace.
    #[serde(rename = "hpolytope")]
    HPolytope { halfspaces: Vec<Halfspace> },
    /// Convex hull of the vertices.
    #[serde(rename = "vpolytope")]
    VPolytope { vertices: Vec<Vec<f64>> },
    Ball { center: Vec<f64>, radius: f64 },
    /// `{center + A^{1/2} u : |u| <= 1}` for the symmetric positive definite `axes = A`.
    Ellipsoid { center: Vec<f64>, axes: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq)]
enum Resolved {
    Halfspaces { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
    Vertices { points: Vec<Vec<f64>> },
    Ellipsoid {
        center: Vec<f64>,
        shape: DMatrix<f64>,
        inverse: DMatrix<f64>,
        lambda_max: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BodyFile {
    dim: usize,
    shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<AffineMap>,
}

/// A compact convex set with nonempty interior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BodyFile", into = "BodyFile")]
pub struct ConvexBody {
    dim: usize,
    shape: Shape,
    transform: Option<AffineMap>,
    resolved: Resolved,
}

impl TryFrom<BodyFile> for ConvexBody {
    type Error = Error;

    fn try_from(file: BodyFile) -> Result<Self> {
        ConvexBody::new(file.dim, file.shape, file.transform)
    }
}

impl From<ConvexBody> for BodyFile {
    fn from(body: ConvexBody) -> Self {
        BodyFile { dim: body.dim, shape: body.shape, transform: body.transform }
    }
}

fn check_dim(what: &str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::InvalidInput(format!(
            "{what} has dimension {} but the body has dimension {dim}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn check_unit(xi: &[f64]) -> Result<()> {
    let n = norm(xi);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidInput(format!("direction has norm {n}, expected 1")));
    }
    Ok(())
}

impl ConvexBody {
    pub fn new(dim: usize, shape: Shape, transform: Option<AffineMap>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if let Some(t) = &transform {
            if t.dim() != dim {
                return Err(Error::InvalidInput("transform dimension disagrees with body".into()));
            }
        }
        let shape = normalize_shape(dim, shape)?;
        let base = resolve_base(dim, &shape)?;
        let resolved = match &transform {
            None => base,
            Some(t) => push_forward(base, t),
        };
        let body = ConvexBody { dim, shape, transform, resolved };
        body.validate()?;
        Ok(body)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        ConvexBody::new(center.len(), Shape::Ball { center, radius }, None)
    }

    /// The cube `[-half, half]^d` as an H-polytope.
    pub fn cube(dim: usize, half: f64) -> Result<Self> {
        let mut halfspaces = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut normal = vec![0.0; dim];
                normal[i] = s;
                halfspaces.push(Halfspace { normal, offset: half });
            }
        }
        ConvexBody::new(dim, Shape::HPolytope { halfspaces }, None)
    }

    pub fn vpolytope(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vertices.first().map(Vec::len).unwrap_or(0);
        ConvexBody::new(dim, Shape::VPolytope { vertices }, None)
    }

    pub fn hpolytope(halfspaces: Vec<Halfspace>) -> Result<Self> {
        let dim = halfspaces.first().map(|h| h.normal.len()).unwrap_or(0);
        ConvexBody::new(dim, Shape::HPolytope { halfspaces }, None)
    }

    pub fn ellipsoid(center: Vec<f64>, axes: Vec<Vec<f64>>) -> Result<Self> {
        ConvexBody::new(center.len(), Shape::Ellipsoid { center, axes }, None)
    }

    /// The image of this body under `map` (composed with any existing transform).
    pub fn transformed(&self, map: &AffineMap) -> Result<Self> {
        let transform = match &self.transform {
            None => map.clone(),
            Some(t) => map.compose(t),
        };
        ConvexBody::new(self.dim, self.shape.clone(), Some(transform))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn transform(&self) -> Option<&AffineMap> {
        self.transform.as_ref()
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("body serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<()> {
        match &self.resolved {
            Resolved::Halfspaces { normals, offsets } => {
                for i in 0..self.dim {
                    for s in [1.0, -1.0] {
                        let mut e = vec![0.0; self.dim];
                        e[i] = s;
                        lp_support(normals, offsets, &e)?;
                    }
                }
                let (_, radius) = chebyshev_center(normals, offsets)?;
                if radius <= 1e-9 {
                    return Err(Error::Flat(format!(
                        "largest inscribed ball has radius {radius:.3e}"
                    )));
                }
            }
            Resolved::Vertices { points } => {
                let n = points.len();
                if n < self.dim + 1 {
                    return Err(Error::Flat(format!(
                        "{n} vertices cannot span {} dimensions",
                        self.dim
                    )));
                }
                let mean: Vec<f64> = (0..self.dim)
                    .map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n as f64)
                    .collect();
                let m = DMatrix::from_fn(n, self.dim, |i, k| points[i][k] - mean[k]);
                let sv = m.singular_values();
                let smax = sv.max();
                if !(smax > 0.0) || sv.min() <= 1e-10 * smax {
                    return Err(Error::Flat("vertices lie in a proper affine subspace".into()));
                }
            }
            Resolved::Ellipsoid { .. } => {}
        }
        Ok(())
    }

    /// `h(v) = max_{z∈Ω} z·v` and a maximizer, for any nonzero `v`.
    fn support_raw(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        match &self.resolved {
            Resolved::Halfspaces { normals, offsets } => lp_support(normals, offsets, v),
            Resolved::Vertices { points } => {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for (i, p) in points.iter().enumerate() {
                    let val = dot(p, v);
                    if val > best_val {
                        best_val = val;
                        best = i;
                    }
                }
                Ok((best_val, points[best].clone()))
            }
            Resolved::Ellipsoid { center, shape, .. } => {
                let av = linalg::mat_vec(shape, v);
                let q = dot(v, &av).max(0.0).sqrt();
                let point: Vec<f64> = if q > 0.0 {
                    center.iter().zip(&av).map(|(c, a)| c + a / q).collect()
                } else {
                    center.clone()
                };
                Ok((dot(center, v) + q, point))
            }
        }
    }

    /// `max_{z∈Ω} z·xi` for a unit direction `xi`.
    pub fn support_value(&self, xi: &[f64]) -> Result<f64> {
        check_dim("direction", xi, self.dim)?;
        check_unit(xi)?;
        Ok(self.support_raw(xi)?.0)
    }

    /// A point of `Ω` attaining the support value in direction `xi`.
    pub fn support_point(&self, xi: &[f64]) -> Result<Vec<f64>> {
        check_dim("direction", xi, self.dim)?;
        check_unit(xi)?;
        Ok(self.support_raw(xi)?.1)
    }

    /// Membership in `Ω` dilated by `tol`.
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        if z.len() != self.dim || z.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match &self.resolved {
            Resolved::Halfspaces { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .all(|(a, b)| dot(a, z) <= b + tol),
            Resolved::Vertices { points } => in_hull(points, z, tol + 1e-12),
            Resolved::Ellipsoid { center, inverse, lambda_max, .. } => {
                let c = linalg::sub(z, center);
                let q = dot(&c, &linalg::mat_vec(inverse, &c)).max(0.0);
                q.sqrt() <= 1.0 + tol / lambda_max.sqrt()
            }
        }
    }

    /// Distance `t*` along the unit direction `u` from the interior point
    /// `origin` to the boundary.
    pub fn ray_extent(&self, origin: &[f64], u: &[f64]) -> Result<f64> {
        check_dim("origin", origin, self.dim)?;
        check_dim("direction", u, self.dim)?;
        check_unit(u)?;
        if !self.contains(origin, 1e-9) {
            return Err(Error::OutsideBody { point: origin.to_vec() });
        }
        match &self.resolved {
            Resolved::Halfspaces { normals, offsets } => {
                let mut t = f64::INFINITY;
                for (a, b) in normals.iter().zip(offsets) {
                    let rate = dot(a, u);
                    if rate > 1e-15 {
                        t = t.min(((b - dot(a, origin)) / rate).max(0.0));
                    }
                }
                if t.is_finite() {
                    Ok(t)
                } else {
                    Err(Error::Unbounded { direction: u.to_vec() })
                }
            }
            Resolved::Ellipsoid { center, inverse, .. } => {
                let w = linalg::sub(origin, center);
                let au = linalg::mat_vec(inverse, u);
                let qa = dot(u, &au);
                let qb = 2.0 * dot(&w, &au);
                let qc = (dot(&w, &linalg::mat_vec(inverse, &w)) - 1.0).min(0.0);
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
                // Positive root, written to avoid cancellation.
                let t = if qb >= 0.0 {
                    -2.0 * qc / (qb + disc)
                } else {
                    (disc - qb) / (2.0 * qa)
                };
                Ok(if t.is_finite() { t.max(0.0) } else { 0.0 })
            }
            Resolved::Vertices { points } => Ok(hull_ray_extent(points, origin, u)),
        }
    }

    /// Vertex list for polytopes (enumerated from the halfspaces for
    /// H-polytopes); `None` for curved bodies or when enumeration would
    /// require more than `2·10^6` linear solves.
    pub fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        match &self.resolved {
            Resolved::Vertices { points } => Some(points.clone()),
            Resolved::Halfspaces { normals, offsets } => enumerate_vertices(normals, offsets),
            Resolved::Ellipsoid { .. } => None,
        }
    }

    /// Outward unit facet normals: the halfspace normals of H-polytopes and
    /// the hull edge normals of planar V-polytopes. `None` otherwise.
    pub fn facet_normals(&self) -> Option<Vec<Vec<f64>>> {
        match &self.resolved {
            Resolved::Halfspaces { normals, .. } => Some(normals.clone()),
            Resolved::Vertices { points } if self.dim == 2 => {
                let hull = planar_hull(points);
                let k = hull.len();
                Some(
                    (0..k)
                        .filter_map(|i| {
                            let (p, q) = (&hull[i], &hull[(i + 1) % k]);
                            // Counter-clockwise hull: outward normal is the edge turned clockwise.
                            linalg::normalized(&[q[1] - p[1], p[0] - q[0]])
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// `(center, A)` with `Ω = {z : (z-c)ᵀA⁻¹(z-c) <= 1}` for balls and ellipsoids.
    pub fn ellipsoid_form(&self) -> Option<(Vec<f64>, DMatrix<f64>)> {
        match &self.resolved {
            Resolved::Ellipsoid { center, shape, .. } => Some((center.clone(), shape.clone())),
            _ => None,
        }
    }

    /// An upper bound for `max_{z∈Ω} |z|`, exact for polytopes and centered ellipsoids.
    pub fn max_norm(&self) -> f64 {
        match &self.resolved {
            Resolved::Ellipsoid { center, lambda_max, .. } => norm(center) + lambda_max.sqrt(),
            _ => match self.vertices() {
                Some(v) => v.iter().map(|p| norm(p)).fold(0.0, f64::max),
                None => {
                    // Fall back to support values along coordinate axes.
                    let mut r: f64 = 0.0;
                    for i in 0..self.dim {
                        for s in [1.0, -1.0] {
                            let mut e = vec![0.0; self.dim];
                            e[i] = s;
                            r += self.support_raw(&e).map(|x| x.0.powi(2)).unwrap_or(f64::INFINITY);
                        }
                    }
                    r.sqrt()
                }
            },
        }
    }
}

fn normalize_shape(dim: usize, shape: Shape) -> Result<Shape> {
    Ok(match shape {
        Shape::HPolytope { halfspaces } => {
            if halfspaces.len() < dim + 1 {
                return Err(Error::InvalidInput(format!(
                    "a bounded polytope in dimension {dim} needs at least {} halfspaces, got {}",
                    dim + 1,
                    halfspaces.len()
                )));
            }
            let mut out = Vec::with_capacity(halfspaces.len());
            for h in halfspaces {
                check_dim("halfspace normal", &h.normal, dim)?;
                if !h.offset.is_finite() {
                    return Err(Error::InvalidInput("halfspace offset is not finite".into()));
                }
                let n = norm(&h.normal);
                if n <= 1e-300 {
                    return Err(Error::InvalidInput("halfspace normal is zero".into()));
                }
                if (n - 1.0).abs() <= 1e-15 {
                    out.push(h);
                } else {
                    out.push(Halfspace {
                        normal: h.normal.iter().map(|x| x / n).collect(),
                        offset: h.offset / n,
                    });
                }
            }
            Shape::HPolytope { halfspaces: out }
        }
        Shape::VPolytope { vertices } => {
            for v in &vertices {
                check_dim("vertex", v, dim)?;
            }
            Shape::VPolytope { vertices }
        }
        Shape::Ball { center, radius } => {
            check_dim("center", &center, dim)?;
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::Flat(format!("ball radius {radius} must be positive")));
            }
            Shape::Ball { center, radius }
        }
        Shape::Ellipsoid { center, axes } => {
            check_dim("center", &center, dim)?;
            if axes.len() != dim {
                return Err(Error::InvalidInput("ellipsoid axes matrix has wrong size".into()));
            }
            for row in &axes {
                check_dim("ellipsoid axes row", row, dim)?;
            }
            for i in 0..dim {
                for j in 0..i {
                    let (a, b) = (axes[i][j], axes[j][i]);
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                        return Err(Error::InvalidInput("ellipsoid axes matrix is not symmetric".into()));
                    }
                }
            }
            Shape::Ellipsoid { center, axes }
        }
    })
}

fn ellipsoid_resolved(center: Vec<f64>, shape: DMatrix<f64>) -> Result<Resolved> {
    let shape = (&shape + shape.transpose()) * 0.5;
    let eig = shape.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmax > 0.0) || lmin <= 1e-12 * lmax {
        return Err(Error::Flat(format!(
            "ellipsoid matrix is not positive definite (eigenvalues in [{lmin:.3e}, {lmax:.3e}])"
        )));
    }
    let inverse = shape
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Flat("ellipsoid matrix is singular".into()))?;
    Ok(Resolved::Ellipsoid { center, shape, inverse, lambda_max: lmax })
}

fn resolve_base(dim: usize, shape: &Shape) -> Result<Resolved> {
    match shape {
        Shape::HPolytope { halfspaces } => Ok(Resolved::Halfspaces {
            normals: halfspaces.iter().map(|h| h.normal.clone()).collect(),
            offsets: halfspaces.iter().map(|h| h.offset).collect(),
        }),
        Shape::VPolytope { vertices } => Ok(Resolved::Vertices { points: vertices.clone() }),
        Shape::Ball { center, radius } => ellipsoid_resolved(
            center.clone(),
            DMatrix::identity(dim, dim) * (radius * radius),
        ),
        Shape::Ellipsoid { center, axes } => {
            ellipsoid_resolved(center.clone(), DMatrix::from_fn(dim, dim, |i, j| axes[i][j]))
        }
    }
}

fn push_forward(base: Resolved, map: &AffineMap) -> Resolved {
    match base {
        Resolved::Halfspaces { normals, offsets } => {
            let mut out_n = Vec::with_capacity(normals.len());
            let mut out_b = Vec::with_capacity(offsets.len());
            for (a, b) in normals.iter().zip(&offsets) {
                // a·x <= b with x = M⁻¹(z - t)  <=>  (M⁻ᵀa)·z <= b + (M⁻ᵀa)·t
                let na = linalg::mat_t_vec(&map.inverse, a);
                let nb = b + dot(&na, &map.shift);
                let len = norm(&na);
                out_n.push(na.iter().map(|x| x / len).collect());
                out_b.push(nb / len);
            }
            Resolved::Halfspaces { normals: out_n, offsets: out_b }
        }
        Resolved::Vertices { points } => Resolved::Vertices {
            points: points.iter().map(|p| map.apply(p)).collect(),
        },
        Resolved::Ellipsoid { center, shape, .. } => {
            let c = map.apply(&center);
            let a = &map.matrix * shape * map.matrix.transpose();
            ellipsoid_resolved(c, a).expect("nonsingular image of an ellipsoid is an ellipsoid")
        }
    }
}

/// Box bound on LP variables; solutions touching it mean an unbounded body.
const LP_BOX: f64 = 1e9;

fn solve_box_lp(
    normals: &[Vec<f64>],
    offsets: &[f64],
    objective: &[f64],
    with_radius: bool,
) -> Result<Vec<f64>> {
    let d = objective.len();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..d)
        .map(|i| problem.add_var(objective[i], (-LP_BOX, LP_BOX)))
        .collect();
    let r = with_radius.then(|| problem.add_var(1.0, (0.0, LP_BOX)));
    for (a, b) in normals.iter().zip(offsets) {
        let mut terms: Vec<_> = vars.iter().zip(a).map(|(&x, &c)| (x, c)).collect();
        if let Some(r) = r {
            terms.push((r, 1.0));
        }
        problem.add_constraint(terms.as_slice(), ComparisonOp::Le, *b);
    }
    match problem.solve() {
        Ok(sol) => {
            let mut out: Vec<f64> = vars.iter().map(|&x| sol[x]).collect();
            if let Some(r) = r {
                out.push(sol[r]);
            }
            if out.iter().any(|x| !x.is_finite() || x.abs() >= 0.5 * LP_BOX) {
                return Err(Error::Unbounded { direction: objective.to_vec() });
            }
            Ok(out)
        }
        Err(minilp::Error::Unbounded) => Err(Error::Unbounded { direction: objective.to_vec() }),
        Err(minilp::Error::Infeasible) => Err(Error::Flat("halfspaces have empty intersection".into())),
    }
}

fn lp_support(normals: &[Vec<f64>], offsets: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>)> {
    let point = polish_vertex(normals, offsets, solve_box_lp(normals, offsets, v, false)?);
    // Report the objective at the returned vertex so value and witness agree.
    Ok((dot(&point, v), point))
}

/// Snap an approximate LP optimum onto the vertex cut out by its active
/// constraints, when they determine one.
fn polish_vertex(normals: &[Vec<f64>], offsets: &[f64], x: Vec<f64>) -> Vec<f64> {
    let d = x.len();
    let active: Vec<usize> = (0..normals.len())
        .filter(|&i| offsets[i] - dot(&normals[i], &x) <= 1e-6 * (1.0 + offsets[i].abs()))
        .collect();
    if active.len() < d {
        return x;
    }
    let a = DMatrix::from_fn(active.len(), d, |r, c| normals[active[r]][c]);
    let b = nalgebra::DVector::from_fn(active.len(), |r, _| offsets[active[r]]);
    let svd = a.svd(true, true);
    if svd.rank(1e-9) < d {
        return x;
    }
    let y: Vec<f64> = match svd.solve(&b, 1e-12) {
        Ok(y) => y.iter().copied().collect(),
        Err(_) => return x,
    };
    let feasible = normals
        .iter()
        .zip(offsets)
        .all(|(n, o)| dot(n, &y) <= o + 1e-10 * (1.0 + o.abs()));
    if feasible && linalg::dist(&x, &y) <= 1e-5 * (1.0 + norm(&x)) {
        y
    } else {
        x
    }
}

/// Center and radius of the largest ball inside the halfspaces.
fn chebyshev_center(normals: &[Vec<f64>], offsets: &[f64]) -> Result<(Vec<f64>, f64)> {
    let d = normals[0].len();
    let mut sol = solve_box_lp(normals, offsets, &vec![0.0; d], true)?;
    let r = sol.pop().unwrap_or(0.0);
    Ok((sol, r))
}

/// LP feasibility: is `z` within `slack` (per coordinate) of the hull?
fn in_hull(points: &[Vec<f64>], z: &[f64], slack: f64) -> bool {
    let d = z.len();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let lambdas: Vec<_> = points.iter().map(|_| problem.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let ones: Vec<_> = lambdas.iter().map(|&l| (l, 1.0)).collect();
    problem.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    for k in 0..d {
        let row: Vec<_> = lambdas.iter().zip(points).map(|(&l, p)| (l, p[k])).collect();
        problem.add_constraint(row.as_slice(), ComparisonOp::Le, z[k] + slack);
        problem.add_constraint(row.as_slice(), ComparisonOp::Ge, z[k] - slack);
    }
    problem.solve().is_ok()
}

/// Largest `t` with `origin + t·u` in the hull: one LP, then an exact
/// solve on the affine hull of the vertices the LP used.
fn hull_ray_extent(points: &[Vec<f64>], origin: &[f64], u: &[f64]) -> f64 {
    let d = origin.len();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let t = problem.add_var(1.0, (0.0, f64::INFINITY));
    let lambdas: Vec<_> = points.iter().map(|_| problem.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let ones: Vec<_> = lambdas.iter().map(|&l| (l, 1.0)).collect();
    problem.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    for k in 0..d {
        // Σ λ_i p_ik − t u_k = origin_k
        let mut row: Vec<_> = lambdas.iter().zip(points).map(|(&l, p)| (l, p[k])).collect();
        row.push((t, -u[k]));
        problem.add_constraint(row.as_slice(), ComparisonOp::Eq, origin[k]);
    }
    let sol = match problem.solve() {
        Ok(sol) => sol,
        Err(_) => return 0.0,
    };
    let t_lp = sol[t];
    let active: Vec<usize> = (0..points.len()).filter(|&i| sol[lambdas[i]] > 1e-9).collect();
    // Unknowns (t, μ_active): origin + t u = Σ μ_i p_i, Σ μ_i = 1.
    let k = active.len();
    let a = DMatrix::from_fn(d + 1, k + 1, |row, col| match (row, col) {
        (r, 0) if r < d => -u[r],
        (_, 0) => 0.0,
        (r, c) if r < d => points[active[c - 1]][r],
        _ => 1.0,
    });
    let b = nalgebra::DVector::from_fn(d + 1, |r, _| if r < d { origin[r] } else { 1.0 });
    let polished = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .ok()
        .map(|x| x[0])
        .filter(|x| x.is_finite() && (x - t_lp).abs() <= 1e-6 * (1.0 + t_lp.abs()));
    polished.unwrap_or(t_lp).max(0.0)
}

/// Counter-clockwise convex hull of planar points (monotone chain).
fn planar_hull(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<&Vec<f64>> = points.iter().collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| a[0] == b[0] && a[1] == b[1]);
    if pts.len() < 3 {
        return pts.into_iter().cloned().collect();
    }
    let cross = |o: &[f64], a: &[f64], b: &[f64]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<&Vec<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &&Vec<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull.into_iter().cloned().collect()
}

fn enumerate_vertices(normals: &[Vec<f64>], offsets: &[f64]) -> Option<Vec<Vec<f64>>> {
    let m = normals.len();
    let d = normals[0].len();
    if linalg::binomial(m, d) > 2_000_000 {
        return None;
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let a = DMatrix::from_fn(d, d, |i, j| normals[idx[i]][j]);
        let b = nalgebra::DVector::from_fn(d, |i, _| offsets[idx[i]]);
        if let Some(x) = a.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            let feasible = normals
                .iter()
                .zip(offsets)
                .all(|(n, o)| dot(n, &x) <= o + 1e-9 * (1.0 + o.abs()));
            if feasible && x.iter().all(|v| v.is_finite()) && !out.iter().any(|p| linalg::dist(p, &x) < 1e-9) {
                out.push(x);
            }
        }
        // Next combination in lexicographic order.
        let mut i = d;
        loop {
            if i == 0 {
                return Some(out);
            }
            i -= 1;
            if idx[i] < m - d + i {
                idx[i] += 1;
                for j in i + 1..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Normalization

/// `Ω` mapped so that `B(0, inner) ⊂ TΩ ⊂ B(0, outer)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBody {
    /// The normalized body `TΩ`.
    pub body: ConvexBody,
    pub to_normalized: AffineMap,
    pub from_normalized: AffineMap,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Fingerprint of the body before normalization.
    pub source_fingerprint: String,
}

/// Default relative slack for the two normalization inclusions.
pub const DEFAULT_NORMALIZATION_TOL: f64 = 0.02;

impl NormalizedBody {
    /// Use `body` as-is (identity map), recording its measured radii about the origin.
    pub fn identity(body: ConvexBody) -> Result<Self> {
        let d = body.dim();
        let (inner, outer) = measured_radii(&body, 4096, 0x5eed)?;
        let outer = outer.max(body.max_norm().min(outer * (1.0 + 1e-6)));
        Ok(NormalizedBody {
            source_fingerprint: body.fingerprint(),
            body,
            to_normalized: AffineMap::identity(d),
            from_normalized: AffineMap::identity(d),
            inner_radius: inner,
            outer_radius: outer,
        })
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }
}

/// Min and max support values over a direction sample. For bodies containing
/// the origin these are the radii of the largest centered inscribed ball and
/// the smallest centered enclosing ball.
pub fn measured_radii(body: &ConvexBody, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let dirs = sample_sphere(body.dim(), samples, seed);
    let fast = SupportShortcut::new(body);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for xi in &dirs {
        let h = fast.support(body, xi)?;
        lo = lo.min(h);
        hi = hi.max(h);
    }
    Ok((lo, hi))
}

/// Support queries that skip the LP when a vertex list is available.
struct SupportShortcut {
    vertices: Option<Vec<Vec<f64>>>,
}

impl SupportShortcut {
    fn new(body: &ConvexBody) -> Self {
        SupportShortcut { vertices: body.vertices() }
    }

    fn support(&self, body: &ConvexBody, xi: &[f64]) -> Result<f64> {
        match &self.vertices {
            Some(v) => Ok(v.iter().map(|p| dot(p, xi)).fold(f64::NEG_INFINITY, f64::max)),
            None => body.support_value(xi),
        }
    }
}

/// Deterministic direction sample on `S^{d-1}`: an angular grid in the
/// plane, seeded Gaussian directions otherwise.
pub(crate) fn sample_sphere(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    if dim == 2 {
        return (0..count)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_unit(&mut rng, dim)).collect()
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = linalg::normalized(&v) {
            return u;
        }
    }
}

/// Minimum-volume enclosing ellipsoid `{x : (x-c)ᵀQ(x-c) <= 1}` of a point
/// cloud, by Khachiyan's barycentric coordinate ascent with Todd-Yildirim
/// away steps. `tol` bounds the relative violation of the optimality
/// conditions. The result is rescaled so every input point lies inside.
pub fn min_volume_enclosing_ellipsoid(points: &[Vec<f64>], tol: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = points.len();
    let d = points.first().map(Vec::len).unwrap_or(0);
    if n < d + 1 || d == 0 {
        return Err(Error::Flat(format!("{n} points cannot enclose a {d}-dimensional ellipsoid")));
    }
    let lifted = d + 1;
    let nbar = lifted as f64;
    // Lifted points q_i = (p_i, 1).
    let q: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().copied().chain(std::iter::once(1.0)).collect())
        .collect();
    let mut u = vec![1.0 / n as f64; n];
    let mut kappa = vec![0.0; n];
    let max_iter = 200_000;
    for _ in 0..max_iter {
        let mut x = DMatrix::<f64>::zeros(lifted, lifted);
        for (qi, &ui) in q.iter().zip(&u) {
            if ui == 0.0 {
                continue;
            }
            for a in 0..lifted {
                for b in 0..lifted {
                    x[(a, b)] += ui * qi[a] * qi[b];
                }
            }
        }
        let xinv = x
            .try_inverse()
            .ok_or_else(|| Error::Flat("support sample spans a lower-dimensional set".into()))?;
        let mut jp = 0;
        let mut jm = usize::MAX;
        for i in 0..n {
            kappa[i] = dot(&q[i], &linalg::mat_vec(&xinv, &q[i]));
            if kappa[i] > kappa[jp] {
                jp = i;
            }
            if u[i] > 0.0 && (jm == usize::MAX || kappa[i] < kappa[jm]) {
                jm = i;
            }
        }
        let eps_plus = kappa[jp] / nbar - 1.0;
        let eps_minus = 1.0 - kappa[jm] / nbar;
        if eps_plus <= tol && eps_minus <= tol {
            break;
        }
        if eps_plus > eps_minus {
            let k = kappa[jp];
            let step = (k - nbar) / (nbar * (k - 1.0));
            for ui in u.iter_mut() {
                *ui *= 1.0 - step;
            }
            u[jp] += step;
        } else {
            let k = kappa[jm];
            let step = ((nbar - k) / (nbar * (k - 1.0))).min(u[jm] / (1.0 - u[jm]));
            for ui in u.iter_mut() {
                *ui *= 1.0 + step;
            }
            u[jm] -= step;
            if u[jm] < 1e-300 {
                u[jm] = 0.0;
            }
        }
    }
    let center: Vec<f64> = (0..d)
        .map(|k| points.iter().zip(&u).map(|(p, w)| w * p[k]).sum())
        .collect();
    let mut s = DMatrix::<f64>::zeros(d, d);
    for (p, &w) in points.iter().zip(&u) {
        for a in 0..d {
            for b in 0..d {
                s[(a, b)] += w * (p[a] - center[a]) * (p[b] - center[b]);
            }
        }
    }
    let mut qmat = s
        .try_inverse()
        .ok_or_else(|| Error::Flat("enclosing ellipsoid has zero volume".into()))?
        / d as f64;
    qmat = (&qmat + qmat.transpose()) * 0.5;
    let worst = points
        .iter()
        .map(|p| {
            let c = linalg::sub(p, &center);
            dot(&c, &linalg::mat_vec(&qmat, &c))
        })
        .fold(0.0, f64::max);
    if worst > 0.0 {
        qmat /= worst;
    }
    Ok((center, qmat))
}

/// Affine normalization `B(0,1) ⊂ TΩ ⊂ B(0,d)` (up to `tol` relative slack)
/// through the minimum-volume enclosing ellipsoid of a support-point sample.
pub fn john_normalize(body: &ConvexBody, num_support_samples: usize, tol: f64) -> Result<NormalizedBody> {
    let d = body.dim();
    let needed = 2 * d * (d + 1);
    if num_support_samples < needed {
        return Err(Error::InvalidInput(format!(
            "need at least {needed} support samples, got {num_support_samples}"
        )));
    }
    let mut cloud: Vec<Vec<f64>> = Vec::new();
    match body.vertices() {
        Some(v) => cloud = v,
        None => {
            for xi in sample_sphere(d, num_support_samples, 0x10e5) {
                let p = body.support_point(&xi)?;
                if !cloud.iter().any(|q| linalg::dist(q, &p) <= 1e-12) {
                    cloud.push(p);
                }
            }
        }
    }
    let (center, q) = min_volume_enclosing_ellipsoid(&cloud, 1e-9)?;
    // T(z) = d·Q^{1/2}(z - c) sends the ellipsoid onto B(0, d).
    let root = linalg::symmetric_sqrt(&q) * d as f64;
    let shift: Vec<f64> = linalg::mat_vec(&root, &center).into_iter().map(|x| -x).collect();
    let to_normalized = AffineMap::new(root, shift)?;
    let from_normalized = to_normalized.inverse();
    let normalized = body.transformed(&to_normalized)?;
    let (inner, outer) = measured_radii(&normalized, 10_000, 0xfeed)?;
    let outer = outer.max(normalized.max_norm().min(d as f64 * (1.0 + tol)));
    if inner < 1.0 - tol || outer > d as f64 * (1.0 + tol) {
        return Err(Error::NormalizationFailed { inner, outer, tolerance: tol });
    }
    Ok(NormalizedBody {
        source_fingerprint: body.fingerprint(),
        body: normalized,
        to_normalized,
        from_normalized,
        inner_radius: inner,
        outer_radius: outer,
    })
}

// ---------------------------------------------------------------------------
// Candidate pools

/// Seeded candidate points of the normalized body: `(1 - boundary_fraction)`
/// uniform by rejection from `B(0, outer_radius)`, the rest along random rays
/// from the origin at relative radius `cos(θ/2)`, `θ ~ U[0, π]`, which
/// clusters them toward the boundary with depth density `∝ 1/sqrt(depth)`.
pub fn sample_candidates(
    body: &NormalizedBody,
    pool_size: usize,
    boundary_fraction: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if pool_size == 0 {
        return Err(Error::InvalidInput("pool_size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&boundary_fraction) {
        return Err(Error::InvalidInput("boundary_fraction must lie in [0, 1]".into()));
    }
    let d = body.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_boundary = ((pool_size as f64) * boundary_fraction).round() as usize;
    let n_interior = pool_size - n_boundary;
    let origin = vec![0.0; d];
    let mut out = Vec::with_capacity(pool_size);
    let r_out = body.outer_radius;
    let mut attempts = 0usize;
    while out.len() < n_interior {
        attempts += 1;
        if attempts > 1000 * (n_interior + 10) {
            return Err(Error::Flat("rejection sampling found no interior points".into()));
        }
        let u = random_unit(&mut rng, d);
        let r = r_out * rng.gen::<f64>().powf(1.0 / d as f64);
        let z: Vec<f64> = u.iter().map(|x| x * r).collect();
        if body.body.contains(&z, 0.0) {
            out.push(z);
        }
    }
    for _ in 0..n_boundary {
        let u = random_unit(&mut rng, d);
        let t = body.body.ray_extent(&origin, &u)?;
        let theta = std::f64::consts::PI * rng.gen::<f64>();
        let r = (0.5 * theta).cos();
        out.push(u.iter().map(|x| x * r * t).collect());
    }
    Ok(out)
}
