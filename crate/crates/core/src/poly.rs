//! Polynomials as expression trees, random dense polynomials, sup-norm
//! estimation, and the resolving and fast-decreasing constructions.
//!
//! Expression trees keep the products of Chebyshev compositions produced by
//! [`fast_decreasing_poly`] cheap to store and stable to evaluate, where an
//! expanded coefficient form would be enormous at the degrees involved.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dubiner::MetricContext;
use crate::error::{Error, Result};
use crate::geometry::{sample_candidates, AffineMap, NormalizedBody};
use crate::linalg::{self, dot};
use crate::par;

/// Overshoot beyond `[-1, 1]` tolerated (and clamped) at Chebyshev nodes.
pub const RANGE_TOL: f64 = 1e-9;

/// `T_m(t)`, with `t` clamped to `[-1, 1]`. Small degrees use the three-term
/// recurrence; larger ones `cos(m·acos t)`, whose rounding error grows like
/// `m` instead of `m²`.
pub fn cheb_eval(m: usize, t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    match m {
        0 => 1.0,
        1 => t,
        _ if m <= 16 => {
            let (mut prev, mut cur) = (1.0, t);
            for _ in 1..m {
                let next = 2.0 * t * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
        _ => (m as f64 * t.acos()).cos(),
    }
}

/// `T_0(t), …, T_n(t)` by the recurrence.
pub fn cheb_all(n: usize, t: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if n >= 1 {
        out.push(t);
    }
    for k in 2..=n {
        let next = 2.0 * t * out[k - 1] - out[k - 2];
        out.push(next);
    }
}

// ---------------------------------------------------------------------------
// Expression trees

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    /// `coeffs·z + constant`.
    Affine { coeffs: Vec<f64>, constant: f64 },
    /// `T_m(child)`; the child must map the body into `[-1, 1]`.
    Cheb { m: usize, child: Box<PolyExpr> },
    Sum { children: Vec<PolyExpr>, weights: Vec<f64> },
    Product { children: Vec<PolyExpr> },
    Power { child: Box<PolyExpr>, k: u64 },
    Scale { child: Box<PolyExpr>, factor: f64 },
    Shift { child: Box<PolyExpr>, constant: f64 },
}

/// A polynomial expression with its structural total degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Node", into = "Node")]
pub struct PolyExpr {
    node: Node,
    degree: u64,
    dim: usize,
}

impl TryFrom<Node> for PolyExpr {
    type Error = Error;

    fn try_from(node: Node) -> Result<Self> {
        PolyExpr::from_node(node)
    }
}

impl From<PolyExpr> for Node {
    fn from(p: PolyExpr) -> Node {
        p.node
    }
}

fn same_dim(children: &[&PolyExpr]) -> Result<usize> {
    // Constants built without an affine leaf report dimension 0 and fit anywhere.
    let dims: Vec<usize> = children.iter().map(|c| c.dim).filter(|&d| d > 0).collect();
    match dims.first() {
        None => Ok(0),
        Some(&d) if dims.iter().all(|&e| e == d) => Ok(d),
        _ => Err(Error::InvalidInput("polynomial children disagree on dimension".into())),
    }
}

impl PolyExpr {
    pub fn from_node(node: Node) -> Result<Self> {
        let (degree, dim) = match &node {
            Node::Affine { coeffs, constant } => {
                if coeffs.iter().chain(std::iter::once(constant)).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("affine coefficients must be finite".into()));
                }
                (u64::from(coeffs.iter().any(|&c| c != 0.0)), coeffs.len())
            }
            Node::Cheb { m, child } => (*m as u64 * child.degree, child.dim),
            Node::Sum { children, weights } => {
                if children.len() != weights.len() {
                    return Err(Error::InvalidInput("sum needs one weight per child".into()));
                }
                let refs: Vec<&PolyExpr> = children.iter().collect();
                let deg = children
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(c, _)| c.degree)
                    .max()
                    .unwrap_or(0);
                (deg, same_dim(&refs)?)
            }
            Node::Product { children } => {
                let refs: Vec<&PolyExpr> = children.iter().collect();
                (children.iter().map(|c| c.degree).sum(), same_dim(&refs)?)
            }
            Node::Power { child, k } => {
                if *k == 0 {
                    return Err(Error::InvalidInput("power exponent must be at least 1".into()));
                }
                (k.saturating_mul(child.degree), child.dim)
            }
            Node::Scale { child, factor } => (if *factor == 0.0 { 0 } else { child.degree }, child.dim),
            Node::Shift { child, .. } => (child.degree, child.dim),
        };
        Ok(PolyExpr { node, degree, dim })
    }

    pub fn constant(value: f64) -> Self {
        PolyExpr { node: Node::Affine { coeffs: vec![], constant: value }, degree: 0, dim: 0 }
    }

    pub fn affine(coeffs: Vec<f64>, constant: f64) -> Self {
        PolyExpr::from_node(Node::Affine { coeffs, constant }).expect("finite affine map")
    }

    pub fn cheb(m: usize, child: PolyExpr) -> Self {
        PolyExpr::from_node(Node::Cheb { m, child: Box::new(child) }).expect("valid node")
    }

    pub fn product(children: Vec<PolyExpr>) -> Result<Self> {
        PolyExpr::from_node(Node::Product { children })
    }

    pub fn sum(children: Vec<PolyExpr>, weights: Vec<f64>) -> Result<Self> {
        PolyExpr::from_node(Node::Sum { children, weights })
    }

    pub fn power(child: PolyExpr, k: u64) -> Result<Self> {
        PolyExpr::from_node(Node::Power { child: Box::new(child), k })
    }

    pub fn scale(child: PolyExpr, factor: f64) -> Self {
        PolyExpr::from_node(Node::Scale { child: Box::new(child), factor }).expect("valid node")
    }

    pub fn shift(child: PolyExpr, constant: f64) -> Self {
        PolyExpr::from_node(Node::Shift { child: Box::new(child), constant }).expect("valid node")
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// Structural total degree.
    pub fn degree(&self) -> u64 {
        self.degree
    }

    /// Number of variables, or 0 for a bare constant.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `p ∘ T`: every affine leaf `c·w + k` becomes `(Aᵀc)·z + c·s + k` for
    /// `T(z) = Az + s`. Degrees are unchanged for invertible `T`.
    pub fn pull_back(&self, map: &AffineMap) -> PolyExpr {
        let node = match &self.node {
            Node::Affine { coeffs, constant } => {
                if coeffs.is_empty() {
                    return self.clone();
                }
                let c = nalgebra::DVector::from_column_slice(coeffs);
                let pulled = map.matrix().transpose() * &c;
                Node::Affine {
                    coeffs: pulled.iter().copied().collect(),
                    constant: constant + dot(coeffs, map.shift()),
                }
            }
            Node::Cheb { m, child } => Node::Cheb { m: *m, child: Box::new(child.pull_back(map)) },
            Node::Sum { children, weights } => Node::Sum {
                children: children.iter().map(|c| c.pull_back(map)).collect(),
                weights: weights.clone(),
            },
            Node::Product { children } => Node::Product { children: children.iter().map(|c| c.pull_back(map)).collect() },
            Node::Power { child, k } => Node::Power { child: Box::new(child.pull_back(map)), k: *k },
            Node::Scale { child, factor } => Node::Scale { child: Box::new(child.pull_back(map)), factor: *factor },
            Node::Shift { child, constant } => Node::Shift { child: Box::new(child.pull_back(map)), constant: *constant },
        };
        PolyExpr::from_node(node).expect("pull-back preserves validity")
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if self.dim != 0 && z.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "point has dimension {} but the polynomial has {}",
                z.len(),
                self.dim
            )));
        }
        self.eval_node(z)
    }

    fn eval_node(&self, z: &[f64]) -> Result<f64> {
        Ok(match &self.node {
            Node::Affine { coeffs, constant } => {
                if coeffs.is_empty() {
                    *constant
                } else {
                    dot(coeffs, z) + constant
                }
            }
            Node::Cheb { m, child } => {
                let t = child.eval_node(z)?;
                if !(t.abs() <= 1.0 + RANGE_TOL) {
                    return Err(Error::RangeViolation { value: t });
                }
                cheb_eval(*m, t)
            }
            Node::Sum { children, weights } => {
                let mut acc = 0.0;
                for (c, w) in children.iter().zip(weights) {
                    acc += w * c.eval_node(z)?;
                }
                acc
            }
            Node::Product { children } => {
                let mut acc = 1.0;
                for c in children {
                    acc *= c.eval_node(z)?;
                    if acc == 0.0 {
                        break;
                    }
                }
                acc
            }
            Node::Power { child, k } => {
                let v = child.eval_node(z)?;
                pow_u64(v, *k)
            }
            Node::Scale { child, factor } => factor * child.eval_node(z)?,
            Node::Shift { child, constant } => child.eval_node(z)? + constant,
        })
    }
}

fn pow_u64(mut base: f64, mut k: u64) -> f64 {
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}

/// Anything that can be evaluated pointwise on the body.
pub trait Evaluate: Sync {
    fn value(&self, z: &[f64]) -> Result<f64>;
    fn total_degree(&self) -> u64;
}

impl Evaluate for PolyExpr {
    fn value(&self, z: &[f64]) -> Result<f64> {
        self.eval(z)
    }

    fn total_degree(&self) -> u64 {
        self.degree
    }
}

// ---------------------------------------------------------------------------
// Dense tensor-Chebyshev polynomials

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub alpha: Vec<usize>,
    pub coeff: f64,
}

/// `Σ_α c_α Π_i T_{α_i}(z_i / scale)` over `|α| <= degree`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensePoly {
    pub dim: usize,
    pub degree: usize,
    pub scale: f64,
    pub terms: Vec<Term>,
}

/// All multi-indices of total degree at most `n`, graded then lexicographic.
pub fn multi_indices(dim: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(dim, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(linalg::binomial(n + dim, dim));
    if dim == 0 {
        return vec![vec![]];
    }
    for total in 0..=n {
        rec(dim, total, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

/// Standard normal coefficients on the total-degree tensor-Chebyshev basis.
pub fn random_poly(dim: usize, degree: usize, seed: u64) -> DensePoly {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = multi_indices(dim, degree)
        .into_iter()
        .map(|alpha| Term { alpha, coeff: StandardNormal.sample(&mut rng) })
        .collect();
    DensePoly { dim, degree, scale: 1.0, terms }
}

impl DensePoly {
    /// Rescale the basis to `T_k(z_i / scale)`, e.g. the outer radius of a
    /// normalized body so that every factor stays in `[-1, 1]`.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn coefficient_count(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let tables: Vec<Vec<f64>> = z
            .iter()
            .map(|&zi| {
                let mut t = Vec::new();
                cheb_all(self.degree, zi / self.scale, &mut t);
                t
            })
            .collect();
        self.terms
            .iter()
            .map(|t| t.coeff * t.alpha.iter().enumerate().map(|(i, &a)| tables[i][a]).product::<f64>())
            .sum()
    }

    /// The same polynomial as an expression tree.
    pub fn to_expr(&self) -> PolyExpr {
        let children = self
            .terms
            .iter()
            .map(|t| {
                let factors = t
                    .alpha
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| {
                        let mut coeffs = vec![0.0; self.dim];
                        coeffs[i] = 1.0 / self.scale;
                        PolyExpr::cheb(a, PolyExpr::affine(coeffs, 0.0))
                    })
                    .collect();
                PolyExpr::product(factors).expect("factors share a dimension")
            })
            .collect();
        let weights = self.terms.iter().map(|t| t.coeff).collect();
        PolyExpr::sum(children, weights).expect("terms share a dimension")
    }
}

impl Evaluate for DensePoly {
    fn value(&self, z: &[f64]) -> Result<f64> {
        Ok(self.eval(z))
    }

    fn total_degree(&self) -> u64 {
        self.terms
            .iter()
            .filter(|t| t.coeff != 0.0)
            .map(|t| t.alpha.iter().sum::<usize>() as u64)
            .max()
            .unwrap_or(0)
    }
}

/// Basis values `Π_i T_{α_i}(z_i / scale)` of all points, one row per point,
/// so a batch of dense polynomials is evaluated by one matrix product.
pub struct BasisTable {
    pub rows: usize,
    pub cols: usize,
    pub data: nalgebra::DMatrix<f64>,
}

impl BasisTable {
    pub fn new(points: &[Vec<f64>], dim: usize, degree: usize, scale: f64) -> Self {
        let indices = multi_indices(dim, degree);
        let cols = indices.len();
        let rows_data = par::map_slice(points, |z| {
            let tables: Vec<Vec<f64>> = z
                .iter()
                .map(|&zi| {
                    let mut t = Vec::new();
                    cheb_all(degree, zi / scale, &mut t);
                    t
                })
                .collect();
            indices
                .iter()
                .map(|alpha| alpha.iter().enumerate().map(|(i, &a)| tables[i][a]).product::<f64>())
                .collect::<Vec<f64>>()
        });
        let data = nalgebra::DMatrix::from_fn(points.len(), cols, |r, c| rows_data[r][c]);
        BasisTable { rows: points.len(), cols, data }
    }

    /// Values of each polynomial (columns of the result) at every point.
    pub fn evaluate(&self, polys: &[DensePoly]) -> nalgebra::DMatrix<f64> {
        let coeffs = nalgebra::DMatrix::from_fn(self.cols, polys.len(), |r, c| polys[c].terms[r].coeff);
        &self.data * coeffs
    }
}

// ---------------------------------------------------------------------------
// Sup-norm estimation

/// Largest `|p|` over a boundary-heavy evaluation pool (plus `extra`
/// points), polished by golden-section searches along the coordinate axes
/// from the 16 best points. A lower bound for the sup-norm over the body.
pub fn sup_norm_estimate<P: Evaluate>(
    p: &P,
    body: &NormalizedBody,
    eval_pool_size: usize,
    seed: u64,
    extra: &[Vec<f64>],
) -> Result<f64> {
    let mut pool = sample_candidates(body, eval_pool_size.max(1), 0.8, seed)?;
    pool.extend_from_slice(extra);
    sup_norm_on(p, body, &pool)
}

/// As [`sup_norm_estimate`] with an explicit evaluation pool.
pub fn sup_norm_on<P: Evaluate>(p: &P, body: &NormalizedBody, pool: &[Vec<f64>]) -> Result<f64> {
    let values: Vec<f64> = par::map_slice(pool, |z| p.value(z).map(f64::abs))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut best = values.iter().copied().fold(0.0, f64::max);
    for &i in order.iter().take(16) {
        best = best.max(polish(p, body, &pool[i])?);
    }
    Ok(best)
}

/// One sweep of golden-section maximization of `|p|` along each axis.
fn polish<P: Evaluate>(p: &P, body: &NormalizedBody, start: &[f64]) -> Result<f64> {
    let d = start.len();
    let mut z = start.to_vec();
    let mut best = p.value(&z)?.abs();
    for axis in 0..d {
        let mut e = vec![0.0; d];
        e[axis] = 1.0;
        let up = body.body.ray_extent(&z, &e).unwrap_or(0.0);
        e[axis] = -1.0;
        let down = body.body.ray_extent(&z, &e).unwrap_or(0.0);
        let (lo, hi) = (z[axis] - down, z[axis] + up);
        if hi - lo <= 0.0 {
            continue;
        }
        let at = |t: f64, z: &[f64]| -> Result<f64> {
            let mut w = z.to_vec();
            w[axis] = t;
            Ok(p.value(&w)?.abs())
        };
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - g * (b - a);
        let mut dd = a + g * (b - a);
        let (mut fc, mut fd) = (at(c, &z)?, at(dd, &z)?);
        for _ in 0..40 {
            if fc > fd {
                b = dd;
                dd = c;
                fd = fc;
                c = b - g * (b - a);
                fc = at(c, &z)?;
            } else {
                a = c;
                c = dd;
                fc = fd;
                dd = a + g * (b - a);
                fd = at(dd, &z)?;
            }
        }
        for t in [c, dd, lo, hi] {
            let v = at(t, &z)?;
            if v > best {
                best = v;
                z[axis] = t;
            }
        }
    }
    Ok(best)
}

/// Bernstein bound on `|d/dt p(a + t(b-a))|` at `t ∈ (0, 1)`:
/// `deg(p)·‖p‖_{[a,b]} / sqrt(t(1-t))`, with the segment norm sampled at
/// `samples` Chebyshev points plus both ends.
pub fn bernstein_bound_at<P: Evaluate>(
    p: &P,
    body: &NormalizedBody,
    a: &[f64],
    b: &[f64],
    t: f64,
    samples: usize,
) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidInput("t must lie strictly inside (0, 1)".into()));
    }
    if !body.body.contains(a, 1e-9) {
        return Err(Error::OutsideBody { point: a.to_vec() });
    }
    if !body.body.contains(b, 1e-9) {
        return Err(Error::OutsideBody { point: b.to_vec() });
    }
    let point = |s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect() };
    let mut norm = p.value(a)?.abs().max(p.value(b)?.abs());
    for k in 0..samples {
        let s = 0.5 * (1.0 - (PI * (k as f64 + 0.5) / samples as f64).cos());
        norm = norm.max(p.value(&point(s))?.abs());
    }
    Ok(p.total_degree() as f64 * norm / (t * (1.0 - t)).sqrt())
}

/// [`bernstein_bound_at`] at the midpoint: `2·deg(p)·‖p‖_{[a,b]}`.
pub fn bernstein_segment_bound<P: Evaluate>(
    p: &P,
    body: &NormalizedBody,
    a: &[f64],
    b: &[f64],
    samples: usize,
) -> Result<f64> {
    bernstein_bound_at(p, body, a, b, 0.5, samples)
}

// ---------------------------------------------------------------------------
// Resolving and fast-decreasing polynomials

/// Smallest `n` for which `resolving_poly` accepts points at refined distance `rho`.
pub fn min_resolving_degree(dim: usize, rho: f64) -> usize {
    (2.0 * PI * (2.0 * dim as f64).sqrt() / rho + 1.0).ceil() as usize
}

/// A polynomial of degree at most `n` with `P(y) = 1`, `P(x) = 0` and
/// `0 <= P <= 1` on the body: `(1 + (-1)^ℓ T_m(u))/2` for an affine `u`
/// built from the refined maximizing direction of `ρ̂(x, y)`.
pub fn resolving_poly(ctx: &MetricContext, x: &[f64], y: &[f64], n: usize) -> Result<PolyExpr> {
    let w = ctx.witness(x, y, ctx.default_rounds())?;
    resolving_from_witness(ctx.dim(), x, y, n, &w)
}

fn resolving_from_witness(dim: usize, x: &[f64], y: &[f64], n: usize, w: &crate::dubiner::Witness) -> Result<PolyExpr> {
    let rho = w.value;
    let min_degree = if rho > 0.0 { min_resolving_degree(dim, rho) } else { usize::MAX };
    if n < 2 || rho < 2.0 * PI * (2.0 * dim as f64).sqrt() / (n as f64 - 1.0) {
        return Err(Error::Separation { rho, degree: n, min_degree });
    }
    let (a, b) = (w.a, w.b);
    // p(z) = s·(2/(b-a))(z·ξ - (a+b)/2), with the sign s making p(x) <= p(y).
    let sign = if dot(x, &w.direction) > dot(y, &w.direction) { -1.0 } else { 1.0 };
    let c1 = sign * 2.0 / (b - a);
    let c0 = -sign * (a + b) / (b - a);
    let p = |z: &[f64]| (c1 * dot(z, &w.direction) + c0).clamp(-1.0, 1.0);
    let (px, py) = (p(x), p(y));
    let theta1 = px.acos();
    let theta2 = py.acos();
    let gap = theta1 - theta2;
    if !(gap > 0.0) {
        return Err(Error::Separation { rho, degree: n, min_degree });
    }
    let m = ((2.0 * PI / gap).floor() as usize + 1).max(3);
    if m > n {
        return Err(Error::Separation { rho, degree: n, min_degree });
    }
    let ell = ((theta2 * m as f64 / PI).floor() as usize + 1).clamp(1, m - 1);
    let lo = ((ell + 1) as f64 * PI / m as f64).cos();
    let hi = (ell as f64 * PI / m as f64).cos();
    // u = φ(p): p(x) ↦ lo, p(y) ↦ hi.
    let slope = (hi - lo) / (py - px);
    let offset = lo - slope * px;
    let coeffs: Vec<f64> = w.direction.iter().map(|v| slope * c1 * v).collect();
    let constant = offset + slope * c0;
    let parity = if ell % 2 == 0 { 0.5 } else { -0.5 };
    let inner = PolyExpr::affine(coeffs, constant);
    Ok(PolyExpr::shift(PolyExpr::scale(PolyExpr::cheb(m, inner), parity), 0.5))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastDecreasingOptions {
    pub alpha: f64,
    pub l: f64,
    pub pool_size: usize,
    pub boundary_fraction: f64,
    pub seed: u64,
    /// Fail with `BudgetExceeded` when the structural degree exceeds `n`.
    pub enforce_budget: bool,
}

impl Default for FastDecreasingOptions {
    fn default() -> Self {
        FastDecreasingOptions {
            alpha: 0.5,
            l: 4.0,
            pool_size: 20_000,
            boundary_fraction: 0.7,
            seed: 0,
            enforce_budget: true,
        }
    }
}

/// A fast-decreasing polynomial and what went into it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastDecreasing {
    pub poly: PolyExpr,
    pub center: Vec<f64>,
    pub n: usize,
    /// Number of annuli `m`.
    pub annuli: usize,
    /// `|Λ_j|` for `j = 1..=m`.
    pub centers_per_annulus: Vec<usize>,
}

/// `P(z) = Π_j (Π_{ω∈Λ_j} p_ω(z))^{2^j}` with `P(x) = 1`, `0 <= P <= 1`:
/// the annuli are `4^{j-1}/n₁ < ρ̂(x, ·) <= 4^j/n₁` with `n₁ = n/L`, `Λ_j` is a
/// greedy `α4^{j-1}/n₁`-separated subset of the pool inside annulus `j`, and
/// `p_ω` resolves `ω` from `x`. For `n <= L` the result is `P ≡ 1`.
pub fn fast_decreasing_poly(ctx: &MetricContext, x: &[f64], n: usize, opts: &FastDecreasingOptions) -> Result<FastDecreasing> {
    if n < 2 {
        return Err(Error::InvalidInput("fast-decreasing polynomials need n >= 2".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
    }
    if !(opts.l >= 1.0) {
        return Err(Error::InvalidInput("L must be at least 1".into()));
    }
    let d = ctx.dim();
    let rho_x = |z: &[f64]| ctx.refined_witness(x, z, ctx.default_rounds());
    ctx.rho_lower(x, x)?; // membership check
    let one = || PolyExpr::shift(PolyExpr::scale(PolyExpr::affine(vec![0.0; d], 0.0), 0.0), 1.0);
    if n as f64 <= opts.l {
        return Ok(FastDecreasing { poly: one(), center: x.to_vec(), n, annuli: 0, centers_per_annulus: vec![] });
    }
    let n1 = n as f64 / opts.l;
    let reach = (2.0 * d as f64).sqrt() * n1;
    let mut annuli = 1usize;
    while 4f64.powi(annuli as i32) <= reach {
        annuli += 1;
    }
    let pool = sample_candidates(ctx.body(), opts.pool_size, opts.boundary_fraction, opts.seed)?;
    let rounds = ctx.default_rounds();
    let dists: Vec<f64> = par::map_slice(&pool, |z| rho_x(z).value);
    let mut factors_by_annulus: Vec<Vec<PolyExpr>> = Vec::with_capacity(annuli);
    let mut counts = Vec::with_capacity(annuli);
    for j in 1..=annuli {
        let inner = 4f64.powi(j as i32 - 1) / n1;
        let outer = 4f64.powi(j as i32) / n1;
        let sep = opts.alpha * inner;
        let mut lambda: Vec<usize> = Vec::new();
        for (i, z) in pool.iter().enumerate() {
            if !(dists[i] > inner && dists[i] <= outer) {
                continue;
            }
            let close = lambda.iter().any(|&k| {
                linalg::dist(&pool[k], z) * ctx.chord_constant() <= sep * (1.0 + 1e-9)
                    && ctx.refined_at_most(&pool[k], z, sep, rounds).map_or(false, |w| w.value < sep)
            });
            if !close {
                lambda.push(i);
            }
        }
        let factors = par::map_slice(&lambda, |&k| {
            let omega = &pool[k];
            // p_ω(x) = 1, p_ω(ω) = 0: x takes the role of the point sent to 1.
            let w = ctx.refined_witness(omega, x, rounds);
            let budget = min_resolving_degree(d, w.value);
            resolving_from_witness(d, omega, x, budget, &w)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        counts.push(factors.len());
        factors_by_annulus.push(factors);
    }
    let mut blocks = Vec::new();
    for (j, factors) in factors_by_annulus.into_iter().enumerate() {
        if factors.is_empty() {
            continue;
        }
        blocks.push(PolyExpr::power(PolyExpr::product(factors)?, 1u64 << (j + 1))?);
    }
    let poly = if blocks.is_empty() { one() } else { PolyExpr::product(blocks)? };
    if opts.enforce_budget && poly.degree() > n as u64 {
        return Err(Error::BudgetExceeded { achieved: poly.degree(), budget: n as u64 });
    }
    Ok(FastDecreasing { poly, center: x.to_vec(), n, annuli, centers_per_annulus: counts })
}

/// Decay statistics of a fast-decreasing polynomial on sample points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope `ĉ` in `log P ≈ log C - ĉ sqrt(n ρ̂)`.
    pub c_hat: f64,
    pub log_c: f64,
    /// Largest sampled value of `P`.
    pub max_value: f64,
    /// Smallest sampled value of `P`.
    pub min_value: f64,
    pub value_at_center: f64,
    pub samples_used: usize,
}

/// Fit the decay of `P` over `samples` with `ρ̂(x, z) >= 4/n`.
pub fn fit_decay(ctx: &MetricContext, fd: &FastDecreasing, samples: &[Vec<f64>]) -> Result<DecayFit> {
    let n = fd.n as f64;
    let x = &fd.center;
    let rounds = ctx.default_rounds();
    let evals: Vec<(f64, f64)> = par::map_slice(samples, |z| {
        let v = fd.poly.eval(z)?;
        Ok((ctx.refined_witness(x, z, rounds).value, v))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut count = 0usize;
    for &(rho, v) in &evals {
        if rho < 4.0 / n {
            continue;
        }
        let s = (n * rho).sqrt();
        let l = v.max(1e-300).ln();
        sx += s;
        sy += l;
        sxx += s * s;
        sxy += s * l;
        count += 1;
    }
    let cnt = count as f64;
    let denom = cnt * sxx - sx * sx;
    let slope = if count >= 2 && denom > 0.0 { (cnt * sxy - sx * sy) / denom } else { 0.0 };
    let intercept = if count > 0 { (sy - slope * sx) / cnt } else { 0.0 };
    Ok(DecayFit {
        c_hat: -slope,
        log_c: intercept,
        max_value: evals.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max),
        min_value: evals.iter().map(|e| e.1).fold(f64::INFINITY, f64::min),
        value_at_center: fd.poly.eval(x)?,
        samples_used: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dubiner::DirectionSet;
    use crate::geometry::ConvexBody;
    use approx::assert_relative_eq;

    fn disk_ctx() -> MetricContext {
        let body = crate::geometry::john_normalize(&ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap(), 64, 0.02).unwrap();
        MetricContext::new(body, DirectionSet::with_count(2, 1024, 6).unwrap()).unwrap()
    }

    #[test]
    fn chebyshev_values() {
        assert_eq!(cheb_eval(0, 0.3), 1.0);
        assert_relative_eq!(cheb_eval(3, 0.5), -1.0, epsilon = 1e-15);
        assert_relative_eq!(cheb_eval(5, 0.3f64.cos()), 1.5f64.cos(), epsilon = 1e-14);
        assert_relative_eq!(cheb_eval(40, 0.3f64.cos()), 12f64.cos(), epsilon = 1e-12);
        assert_eq!(cheb_eval(7, 1.0 + 1e-13), 1.0);
    }

    #[test]
    fn expression_evaluation() {
        let x = PolyExpr::affine(vec![1.0, 0.0], 0.0);
        let y = PolyExpr::affine(vec![0.0, 1.0], 0.0);
        assert_eq!(x.eval(&[0.3, -1.0]).unwrap(), 0.3);
        let xy = PolyExpr::product(vec![x.clone(), y]).unwrap();
        assert_eq!(xy.eval(&[2.0, 3.0]).unwrap(), 6.0);
        assert_eq!(xy.degree(), 2);
        let t2 = PolyExpr::cheb(2, x.clone());
        assert_relative_eq!(t2.eval(&[0.5, 0.0]).unwrap(), -0.5);
        assert!(matches!(t2.eval(&[1.5, 0.0]), Err(Error::RangeViolation { .. })));
        let p = PolyExpr::power(PolyExpr::cheb(3, x), 4).unwrap();
        assert_eq!(p.degree(), 12);
        let json = serde_json::to_string(&p).unwrap();
        let back: PolyExpr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn pull_back_composes() {
        let map = AffineMap::new(nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.5]), vec![0.1, -0.2]).unwrap();
        let p = PolyExpr::product(vec![
            PolyExpr::cheb(3, PolyExpr::affine(vec![0.2, 0.1], 0.0)),
            PolyExpr::affine(vec![1.0, -1.0], 0.5),
        ])
        .unwrap();
        let q = p.pull_back(&map);
        assert_eq!(q.degree(), p.degree());
        for z in [[0.1, 0.3], [-0.4, 0.2]] {
            assert_relative_eq!(q.eval(&z).unwrap(), p.eval(&map.apply(&z)).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn random_poly_shapes() {
        let p = random_poly(2, 3, 9);
        assert_eq!(p.coefficient_count(), 10);
        assert_eq!(p, random_poly(2, 3, 9));
        let c = random_poly(2, 0, 4);
        assert_eq!(c.eval(&[0.3, 0.4]), c.terms[0].coeff);
        let q = random_poly(3, 4, 1).with_scale(2.0);
        let e = q.to_expr();
        for z in [[0.1, 0.2, -0.3], [1.0, -1.5, 0.2]] {
            assert_relative_eq!(q.eval(&z), e.eval(&z).unwrap(), epsilon = 1e-12);
        }
        let table = BasisTable::new(&[vec![0.1, 0.2, -0.3]], 3, 4, 2.0);
        let vals = table.evaluate(&[q.clone()]);
        assert_relative_eq!(vals[(0, 0)], q.eval(&[0.1, 0.2, -0.3]), epsilon = 1e-12);
    }

    #[test]
    fn sup_norm_examples() {
        let body = crate::geometry::NormalizedBody::identity(ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()).unwrap();
        assert_eq!(sup_norm_estimate(&PolyExpr::constant(-3.0), &body, 1000, 1, &[]).unwrap(), 3.0);
        let x = PolyExpr::affine(vec![1.0, 0.0], 0.0);
        let s = sup_norm_estimate(&x, &body, 1000, 1, &[]).unwrap();
        assert!(s <= 1.0 + 1e-12 && s >= 1.0 - 1e-3, "{s}");
        let square = crate::geometry::NormalizedBody::identity(ConvexBody::cube(2, 1.0).unwrap()).unwrap();
        let t8 = PolyExpr::cheb(8, x);
        let s = sup_norm_estimate(&t8, &square, 1000, 1, &[]).unwrap();
        assert!(s >= 1.0 - 1e-6 && s <= 1.0 + 1e-12);
    }

    #[test]
    fn bernstein_examples() {
        let body = crate::geometry::NormalizedBody::identity(ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()).unwrap();
        let (a, b) = ([-1.0, 0.0], [1.0, 0.0]);
        assert_eq!(bernstein_segment_bound(&PolyExpr::constant(2.0), &body, &a, &b, 64).unwrap(), 0.0);
        let lin = PolyExpr::affine(vec![1.0, 0.0], 0.0);
        // d/dt (2t - 1) = 2 = 2·1·‖p‖.
        assert_relative_eq!(bernstein_segment_bound(&lin, &body, &a, &b, 64).unwrap(), 2.0);
        // T_7 along the diameter: derivative at the midpoint is 2·7 = the bound.
        let t7 = PolyExpr::cheb(7, lin);
        let bound = bernstein_segment_bound(&t7, &body, &a, &b, 256).unwrap();
        let h = 1e-6;
        let deriv = (t7.eval(&[2.0 * (0.5 + h) - 1.0, 0.0]).unwrap() - t7.eval(&[2.0 * (0.5 - h) - 1.0, 0.0]).unwrap()) / (2.0 * h);
        assert_relative_eq!(deriv.abs(), bound, max_relative = 1e-6);
        assert!(bernstein_segment_bound(&t7, &body, &a, &[2.0, 0.0], 8).is_err());
    }

    #[test]
    fn resolving_antipodal() {
        let ctx = disk_ctx();
        let r = ctx.body().outer_radius;
        let x = [-r, 0.0];
        let y = [r, 0.0];
        let p = resolving_poly(&ctx, &x, &y, 20).unwrap();
        assert_relative_eq!(p.eval(&y).unwrap(), 1.0, epsilon = 1e-9);
        assert!(p.eval(&x).unwrap().abs() <= 1e-9);
        assert!(p.degree() <= 20);
        let pool = sample_candidates(ctx.body(), 2000, 0.7, 5).unwrap();
        for z in &pool {
            let v = p.eval(z).unwrap();
            assert!((-1e-9..=1.0 + 1e-9).contains(&v));
        }
        // Too close for the degree.
        assert!(matches!(
            resolving_poly(&ctx, &[0.0, 0.0], &[0.01, 0.0], 5),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn trivial_fast_decreasing() {
        let ctx = disk_ctx();
        let fd = fast_decreasing_poly(&ctx, &[0.0, 0.0], 4, &FastDecreasingOptions::default()).unwrap();
        assert_eq!(fd.poly.degree(), 0);
        assert_eq!(fd.poly.eval(&[0.3, 0.3]).unwrap(), 1.0);
        let opts = FastDecreasingOptions { enforce_budget: true, pool_size: 2000, ..Default::default() };
        assert!(matches!(
            fast_decreasing_poly(&ctx, &[0.0, 0.0], 64, &opts),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
