//! The Dubiner-type metric
//!
//! ```text
//! ρ(x, y) = max_{ξ ∈ S^{d-1}} | sqrt(x·ξ - a_ξ) - sqrt(y·ξ - a_ξ) |,   a_ξ = min_{z∈Ω} z·ξ
//! ```
//!
//! evaluated over a finite direction set. Every value returned here is a
//! maximum over finitely many directions, hence a lower bound for the true
//! metric. Besides the fixed base set the scan includes the chord directions
//! `±(x-y)/|x-y|`, which make distinct points strictly separated and give the
//! Euclidean lower bound `ρ >= |x-y| / (2 sqrt(width))`, and for polytopes the
//! facet normals, where the direction profile has kinks that local search
//! cannot resolve. `rho_refined` then polishes the best direction with a
//! shrinking pattern search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{random_unit, AffineMap, ConvexBody, NormalizedBody};
use crate::linalg::{self, dot, norm};
use crate::par;

/// Membership tolerance for points handed to the checked metric API.
pub const POINT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DirectionGenerator {
    /// `{+1, -1}`, the only sphere in one dimension.
    Axis,
    /// `(cos(2πk/M), sin(2πk/M))`, `k = 0..M`.
    AngularGrid { count: usize },
    /// Golden-angle spiral on `S^2`.
    FibonacciSphere { count: usize },
    /// Seeded normalized Gaussian vectors.
    RandomUniform { count: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DirectionSetFile {
    dim: usize,
    generator: DirectionGenerator,
    refinement_rounds: usize,
    refinement_factor: f64,
}

/// A finite subset of `S^{d-1}` plus the local refinement policy. Serialized
/// as metadata only; the directions are regenerated on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DirectionSetFile", into = "DirectionSetFile")]
pub struct DirectionSet {
    dim: usize,
    generator: DirectionGenerator,
    refinement_rounds: usize,
    refinement_factor: f64,
    directions: Vec<Vec<f64>>,
}

impl TryFrom<DirectionSetFile> for DirectionSet {
    type Error = Error;

    fn try_from(f: DirectionSetFile) -> Result<Self> {
        DirectionSet::new(f.dim, f.generator, f.refinement_rounds, f.refinement_factor)
    }
}

impl From<DirectionSet> for DirectionSetFile {
    fn from(s: DirectionSet) -> Self {
        DirectionSetFile {
            dim: s.dim,
            generator: s.generator,
            refinement_rounds: s.refinement_rounds,
            refinement_factor: s.refinement_factor,
        }
    }
}

pub const DEFAULT_REFINEMENT_ROUNDS: usize = 6;
pub const DEFAULT_REFINEMENT_FACTOR: f64 = 0.5;

impl DirectionSet {
    pub fn new(
        dim: usize,
        generator: DirectionGenerator,
        refinement_rounds: usize,
        refinement_factor: f64,
    ) -> Result<Self> {
        if !(refinement_factor > 0.0 && refinement_factor < 1.0) {
            return Err(Error::InvalidInput("refinement factor must lie in (0, 1)".into()));
        }
        let directions = generate(dim, &generator)?;
        Ok(DirectionSet { dim, generator, refinement_rounds, refinement_factor, directions })
    }

    /// 4096-point grid in the plane, 8192 Fibonacci points on `S^2`,
    /// `4096·d` seeded random directions above.
    pub fn default_for(dim: usize) -> Self {
        let generator = match dim {
            1 => DirectionGenerator::Axis,
            2 => DirectionGenerator::AngularGrid { count: 4096 },
            3 => DirectionGenerator::FibonacciSphere { count: 8192 },
            _ => DirectionGenerator::RandomUniform { count: 4096 * dim, seed: 0 },
        };
        DirectionSet::new(dim, generator, DEFAULT_REFINEMENT_ROUNDS, DEFAULT_REFINEMENT_FACTOR)
            .expect("default direction set is valid")
    }

    /// The default generator for `dim` with `count` directions.
    pub fn with_count(dim: usize, count: usize, rounds: usize) -> Result<Self> {
        let generator = match dim {
            1 => DirectionGenerator::Axis,
            2 => DirectionGenerator::AngularGrid { count },
            3 => DirectionGenerator::FibonacciSphere { count },
            _ => DirectionGenerator::RandomUniform { count, seed: 0 },
        };
        DirectionSet::new(dim, generator, rounds, DEFAULT_REFINEMENT_FACTOR)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn generator(&self) -> &DirectionGenerator {
        &self.generator
    }

    pub fn refinement_rounds(&self) -> usize {
        self.refinement_rounds
    }

    pub fn refinement_factor(&self) -> f64 {
        self.refinement_factor
    }

    /// Typical angular gap between neighbouring directions; the first
    /// refinement step.
    pub fn spacing(&self) -> f64 {
        let m = self.directions.len().max(1) as f64;
        match self.dim {
            1 => std::f64::consts::PI,
            2 => 2.0 * std::f64::consts::PI / m,
            d => {
                let area = d as f64 * linalg::ball_volume(d, 1.0);
                (area / m).powf(1.0 / (d as f64 - 1.0))
            }
        }
    }
}

fn generate(dim: usize, generator: &DirectionGenerator) -> Result<Vec<Vec<f64>>> {
    let bad = |what: &str| Err(Error::InvalidInput(format!("{what} needs a different dimension than {dim}")));
    let dirs = match *generator {
        DirectionGenerator::Axis => {
            if dim != 1 {
                return bad("axis generator");
            }
            vec![vec![1.0], vec![-1.0]]
        }
        DirectionGenerator::AngularGrid { count } => {
            if dim != 2 {
                return bad("angular grid");
            }
            (0..count)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        DirectionGenerator::FibonacciSphere { count } => {
            if dim != 3 {
                return bad("Fibonacci sphere");
            }
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    linalg::normalized(&[r * phi.cos(), r * phi.sin(), z]).expect("nonzero")
                })
                .collect()
        }
        DirectionGenerator::RandomUniform { count, seed } => {
            if dim < 2 {
                return bad("random direction set");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| random_unit(&mut rng, dim)).collect()
        }
    };
    if dirs.is_empty() {
        return Err(Error::InvalidInput("direction set is empty".into()));
    }
    Ok(dirs)
}

/// Support function evaluation without going through the LP where possible.
#[derive(Clone, Debug)]
enum SupportKernel {
    Vertices { flat: Vec<f64>, dim: usize },
    Ellipsoid { center: Vec<f64>, shape: Vec<f64>, dim: usize },
    Body(Box<ConvexBody>),
}

impl SupportKernel {
    fn new(body: &ConvexBody) -> Self {
        let dim = body.dim();
        if let Some((center, shape)) = body.ellipsoid_form() {
            return SupportKernel::Ellipsoid { center, shape: shape.iter().copied().collect(), dim };
        }
        match body.vertices() {
            Some(v) if !v.is_empty() => SupportKernel::Vertices { flat: v.concat(), dim },
            _ => SupportKernel::Body(Box::new(body.clone())),
        }
    }

    /// `max_{z∈Ω} z·v` for unit `v`.
    fn support(&self, v: &[f64]) -> f64 {
        match self {
            SupportKernel::Vertices { flat, dim } => flat
                .chunks_exact(*dim)
                .map(|p| dot(p, v))
                .fold(f64::NEG_INFINITY, f64::max),
            SupportKernel::Ellipsoid { center, shape, dim } => {
                // shape is column-major; it is symmetric so the layout does not matter.
                let mut q = 0.0;
                for i in 0..*dim {
                    for j in 0..*dim {
                        q += v[i] * shape[i * dim + j] * v[j];
                    }
                }
                dot(center, v) + q.max(0.0).sqrt()
            }
            SupportKernel::Body(body) => body.support_value(v).unwrap_or(f64::NAN),
        }
    }
}

/// A direction together with its value and the width data `a_ξ <= b_ξ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub value: f64,
    pub direction: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

#[inline]
fn term(px: f64, py: f64, a: f64) -> f64 {
    ((px - a).max(0.0).sqrt() - (py - a).max(0.0).sqrt()).abs()
}

/// Where the best direction of a scan came from.
#[derive(Clone, Copy, Debug)]
enum Source {
    Base(usize),
    Special(usize),
    Chord(f64),
}

/// The metric on one normalized body with a fixed base direction set and
/// its cached support data.
#[derive(Clone, Debug)]
pub struct MetricContext {
    body: NormalizedBody,
    directions: DirectionSet,
    include_chord: bool,
    dim: usize,
    base_flat: Vec<f64>,
    base_a: Vec<f64>,
    base_b: Vec<f64>,
    special_flat: Vec<f64>,
    special_a: Vec<f64>,
    special_b: Vec<f64>,
    kernel: SupportKernel,
    spacing: f64,
}

impl MetricContext {
    pub fn new(body: NormalizedBody, directions: DirectionSet) -> Result<Self> {
        let dim = body.dim();
        if directions.dim() != dim {
            return Err(Error::InvalidInput(format!(
                "direction set has dimension {} but the body has dimension {dim}",
                directions.dim()
            )));
        }
        let kernel = SupportKernel::new(&body.body);
        let base = directions.directions();
        let pairs = par::map_slice(base, |xi| {
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            (-kernel.support(&neg), kernel.support(xi))
        });
        let base_a = pairs.iter().map(|p| p.0).collect();
        let base_b = pairs.iter().map(|p| p.1).collect();
        let mut special: Vec<Vec<f64>> = Vec::new();
        if let Some(normals) = body.body.facet_normals() {
            for n in normals {
                let neg: Vec<f64> = n.iter().map(|v| -v).collect();
                for cand in [n, neg] {
                    if !special.iter().any(|s| linalg::dist(s, &cand) < 1e-12) {
                        special.push(cand);
                    }
                }
            }
        }
        let special_a = special
            .iter()
            .map(|xi| -kernel.support(&xi.iter().map(|v| -v).collect::<Vec<_>>()))
            .collect();
        let special_b = special.iter().map(|xi| kernel.support(xi)).collect();
        let spacing = directions.spacing();
        Ok(MetricContext {
            base_flat: base.concat(),
            special_flat: special.concat(),
            body,
            directions,
            include_chord: true,
            dim,
            base_a,
            base_b,
            special_a,
            special_b,
            kernel,
            spacing,
        })
    }

    pub fn with_defaults(body: NormalizedBody) -> Result<Self> {
        let dirs = DirectionSet::default_for(body.dim());
        MetricContext::new(body, dirs)
    }

    /// Toggle the chord directions (on by default). Without them the scan
    /// uses a point-independent direction set and `rho_lower` is a metric.
    pub fn with_chord(mut self, include: bool) -> Self {
        self.include_chord = include;
        self
    }

    /// Drop the facet-normal directions, leaving only the base set (and chords).
    pub fn without_facet_normals(mut self) -> Self {
        self.special_flat.clear();
        self.special_a.clear();
        self.special_b.clear();
        self
    }

    pub fn body(&self) -> &NormalizedBody {
        &self.body
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn include_chord(&self) -> bool {
        self.include_chord
    }

    pub fn default_rounds(&self) -> usize {
        self.directions.refinement_rounds()
    }

    /// `sqrt(2·outer_radius)`: no two points of the body are farther apart.
    pub fn diameter_bound(&self) -> f64 {
        (2.0 * self.body.outer_radius).sqrt()
    }

    /// Constant `k` with `ρ̂(x, y) >= k·|x - y|` (needs the chord directions).
    pub fn chord_constant(&self) -> f64 {
        1.0 / (2.0 * (2.0 * self.body.outer_radius).sqrt())
    }

    /// `(a_ξ, b_ξ)` for a unit direction.
    pub fn width_pair(&self, xi: &[f64]) -> (f64, f64) {
        let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
        (-self.kernel.support(&neg), self.kernel.support(xi))
    }

    /// Largest deviation of the cached base-direction data from the body's
    /// own support function over every `stride`-th direction.
    pub fn audit_cache(&self, stride: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (k, xi) in self.directions.directions().iter().enumerate().step_by(stride.max(1)) {
            let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
            let a = -self.body.body.support_value(&neg)?;
            let b = self.body.body.support_value(xi)?;
            worst = worst.max((a - self.base_a[k]).abs()).max((b - self.base_b[k]).abs());
        }
        Ok(worst)
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "point has dimension {} but the body has dimension {}",
                z.len(),
                self.dim
            )));
        }
        if !self.body.body.contains(z, POINT_TOL) {
            return Err(Error::OutsideBody { point: z.to_vec() });
        }
        Ok(())
    }

    fn eval_direction(&self, x: &[f64], y: &[f64], xi: Vec<f64>) -> Witness {
        let (a, b) = self.width_pair(&xi);
        let value = term(dot(x, &xi), dot(y, &xi), a);
        Witness { value: if value.is_nan() { 0.0 } else { value }, direction: xi, a, b }
    }

    /// Canonical chord direction: `(x-y)/|x-y|` with its first nonzero
    /// coordinate positive, so that swapping `x` and `y` gives the same vector.
    fn chord(&self, x: &[f64], y: &[f64]) -> Option<Vec<f64>> {
        if !self.include_chord {
            return None;
        }
        let mut u = linalg::normalized(&linalg::sub(x, y))?;
        if let Some(first) = u.iter().find(|v| **v != 0.0) {
            if *first < 0.0 {
                u.iter_mut().for_each(|v| *v = -*v);
            }
        }
        Some(u)
    }

    /// Scan chord, facet and base directions. Returns `None` as soon as a
    /// term exceeds `limit`; otherwise the best value and its source.
    fn scan(&self, x: &[f64], y: &[f64], limit: f64) -> Option<(f64, Source)> {
        let d = self.dim;
        let mut best = (0.0, Source::Base(0));
        if let Some(u) = self.chord(x, y) {
            for s in [1.0, -1.0] {
                let xi: Vec<f64> = u.iter().map(|v| s * v).collect();
                let (a, _) = self.width_pair(&xi);
                let v = term(dot(x, &xi), dot(y, &xi), a);
                if v > limit {
                    return None;
                }
                if v > best.0 {
                    best = (v, Source::Chord(s));
                }
            }
        }
        for (k, xi) in self.special_flat.chunks_exact(d).enumerate() {
            let v = term(dot(x, xi), dot(y, xi), self.special_a[k]);
            if v > limit {
                return None;
            }
            if v > best.0 {
                best = (v, Source::Special(k));
            }
        }
        if d == 2 {
            // Unrolled plane case: this is the innermost loop of mesh construction.
            let (x0, x1, y0, y1) = (x[0], x[1], y[0], y[1]);
            for (k, (xi, &a)) in self.base_flat.chunks_exact(2).zip(&self.base_a).enumerate() {
                let v = term(x0 * xi[0] + x1 * xi[1], y0 * xi[0] + y1 * xi[1], a);
                if v > best.0 {
                    if v > limit {
                        return None;
                    }
                    best = (v, Source::Base(k));
                }
            }
        } else {
            for (k, (xi, &a)) in self.base_flat.chunks_exact(d).zip(&self.base_a).enumerate() {
                let v = term(dot(x, xi), dot(y, xi), a);
                if v > best.0 {
                    if v > limit {
                        return None;
                    }
                    best = (v, Source::Base(k));
                }
            }
        }
        Some(best)
    }

    fn witness_of(&self, x: &[f64], y: &[f64], value: f64, source: Source) -> Witness {
        let d = self.dim;
        match source {
            Source::Base(k) => Witness {
                value,
                direction: self.base_flat[k * d..(k + 1) * d].to_vec(),
                a: self.base_a[k],
                b: self.base_b[k],
            },
            Source::Special(k) => Witness {
                value,
                direction: self.special_flat[k * d..(k + 1) * d].to_vec(),
                a: self.special_a[k],
                b: self.special_b[k],
            },
            Source::Chord(s) => {
                let u = self.chord(x, y).expect("chord source implies distinct points");
                let xi: Vec<f64> = u.iter().map(|v| s * v).collect();
                let (a, b) = self.width_pair(&xi);
                Witness { value, direction: xi, a, b }
            }
        }
    }

    /// Pattern search on the sphere around `seed`: each round probes `±δ`
    /// along every tangent axis and `±δ/2` along the first, moves to the best
    /// probe if it improves, then shrinks `δ`.
    fn refine(&self, x: &[f64], y: &[f64], seed: Witness, rounds: usize) -> Witness {
        let mut best = seed;
        let mut delta = self.spacing;
        for _ in 0..rounds {
            let basis = linalg::tangent_basis(&best.direction);
            if basis.is_empty() {
                break;
            }
            let mut steps: Vec<(usize, f64)> = Vec::with_capacity(2 * self.dim);
            for i in 0..basis.len() {
                steps.push((i, delta));
                steps.push((i, -delta));
            }
            steps.push((0, 0.5 * delta));
            steps.push((0, -0.5 * delta));
            let mut round_best: Option<Witness> = None;
            for (i, s) in steps {
                let moved: Vec<f64> = best.direction.iter().zip(&basis[i]).map(|(c, t)| c + s * t).collect();
                let Some(xi) = linalg::normalized(&moved) else { continue };
                let w = self.eval_direction(x, y, xi);
                if round_best.as_ref().map_or(true, |r| w.value > r.value) {
                    round_best = Some(w);
                }
            }
            if let Some(r) = round_best {
                if r.value > best.value {
                    best = r;
                }
            }
            delta *= self.directions.refinement_factor();
        }
        best
    }

    /// Finite maximum without membership checks (points assumed in Ω).
    pub fn lower_value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.scan(x, y, f64::INFINITY).map_or(0.0, |b| b.0)
    }

    /// Refined value and direction without membership checks.
    pub fn refined_witness(&self, x: &[f64], y: &[f64], rounds: usize) -> Witness {
        self.refined_at_most(x, y, f64::INFINITY, rounds)
            .expect("an infinite limit is never exceeded")
    }

    /// `Some(witness)` iff the refined value is at most `limit`. Stops early
    /// once any direction exceeds `limit`.
    pub fn refined_at_most(&self, x: &[f64], y: &[f64], limit: f64, rounds: usize) -> Option<Witness> {
        let (value, source) = self.scan(x, y, limit)?;
        if value == 0.0 {
            return Some(self.witness_of(x, y, 0.0, source));
        }
        let seed = self.witness_of(x, y, value, source);
        let w = if rounds == 0 {
            seed
        } else {
            let mut w = self.refine(x, y, seed.clone(), rounds);
            if !matches!(source, Source::Base(_)) {
                // Also polish the best base direction: it may sit in a
                // different basin than the chord or facet seed.
                if let Some((bv, bs)) = self.best_base(x, y) {
                    let alt = self.refine(x, y, self.witness_of(x, y, bv, bs), rounds);
                    if alt.value > w.value {
                        w = alt;
                    }
                }
            }
            w
        };
        (w.value <= limit).then_some(w)
    }

    fn best_base(&self, x: &[f64], y: &[f64]) -> Option<(f64, Source)> {
        let d = self.dim;
        let mut best: Option<(f64, Source)> = None;
        for (k, (xi, &a)) in self.base_flat.chunks_exact(d).zip(&self.base_a).enumerate() {
            let v = term(dot(x, xi), dot(y, xi), a);
            if best.map_or(true, |b| v > b.0) {
                best = Some((v, Source::Base(k)));
            }
        }
        best.filter(|b| b.0 > 0.0)
    }

    /// One directional term `|sqrt(x·ξ - a_ξ) - sqrt(y·ξ - a_ξ)|`.
    pub fn rho_directional(&self, x: &[f64], y: &[f64], xi: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        if xi.len() != self.dim || (norm(xi) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("direction must be a unit vector of the body's dimension".into()));
        }
        let (a, _) = self.width_pair(xi);
        Ok(term(dot(x, xi), dot(y, xi), a))
    }

    /// Maximum over the base directions (plus chords and facet normals).
    pub fn rho_lower(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.lower_value(x, y))
    }

    /// `rho_lower` followed by `rounds` rounds of local direction search.
    pub fn rho_refined(&self, x: &[f64], y: &[f64], rounds: usize) -> Result<f64> {
        Ok(self.witness(x, y, rounds)?.value)
    }

    /// `rho_refined` together with the maximizing direction.
    pub fn witness(&self, x: &[f64], y: &[f64], rounds: usize) -> Result<Witness> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.refined_witness(x, y, rounds))
    }

    /// Estimated relative shortfall of `rho_refined` against a much denser
    /// direction set (`2^20` grid directions in the plane, `2^18` above),
    /// as the maximum of `(dense - refined) / dense` over sampled pairs.
    pub fn estimate_tau_dir(&self, pairs: usize, seed: u64) -> Result<f64> {
        let dense = match self.dim {
            1 => return Ok(0.0),
            2 => DirectionSet::new(2, DirectionGenerator::AngularGrid { count: 1 << 20 }, 0, 0.5)?,
            3 => DirectionSet::new(3, DirectionGenerator::FibonacciSphere { count: 1 << 18 }, 0, 0.5)?,
            d => DirectionSet::new(d, DirectionGenerator::RandomUniform { count: 1 << 18, seed: 1 }, 0, 0.5)?,
        };
        let widths: Vec<f64> = par::map_slice(dense.directions(), |xi| self.width_pair(xi).0);
        let pool = crate::geometry::sample_candidates(&self.body, 2 * pairs.max(1), 0.5, seed)?;
        let rounds = self.default_rounds();
        let shortfalls = par::map_range(pairs, |i| {
            let (x, y) = (&pool[2 * i], &pool[2 * i + 1]);
            let brute = dense
                .directions()
                .iter()
                .zip(&widths)
                .map(|(xi, &a)| term(dot(x, xi), dot(y, xi), a))
                .fold(0.0, f64::max);
            let refined = self.refined_witness(x, y, rounds).value;
            if brute > 0.0 {
                ((brute - refined) / brute).max(0.0)
            } else {
                0.0
            }
        });
        Ok(shortfalls.into_iter().fold(0.0, f64::max))
    }
}

// ---------------------------------------------------------------------------
// Metric balls and doubling

/// Pool points found in `B_ρ(center, h)` and the implied volume estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoBallSample {
    pub center: Vec<f64>,
    pub radius_h: f64,
    pub hits: Vec<Vec<f64>>,
    pub volume_estimate: f64,
    pub stderr: f64,
}

/// Is `z` in the refined-metric ball of radius `h` about `center`? Uses the
/// chord bound to skip the scan for far points.
fn in_ball(ctx: &MetricContext, center: &[f64], z: &[f64], h: f64, rounds: usize) -> bool {
    if ctx.include_chord && linalg::dist(center, z) * ctx.chord_constant() > h * (1.0 + 1e-12) {
        return false;
    }
    ctx.refined_at_most(center, z, h, rounds).is_some()
}

/// Classify `pool` against `B_ρ(center, h)`. The volume estimate treats the
/// pool as a uniform sample of `B(0, outer_radius)`.
pub fn rho_ball_membership(ctx: &MetricContext, center: &[f64], h: f64, pool: &[Vec<f64>]) -> Result<RhoBallSample> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput("ball radius must be positive".into()));
    }
    ctx.check_point(center)?;
    let rounds = ctx.default_rounds();
    let flags = par::map_slice(pool, |z| in_ball(ctx, center, z, h, rounds));
    let hits: Vec<Vec<f64>> = pool.iter().zip(&flags).filter(|(_, f)| **f).map(|(z, _)| z.clone()).collect();
    let n = pool.len().max(1) as f64;
    let p = hits.len() as f64 / n;
    let reference = linalg::ball_volume(ctx.dim(), ctx.body().outer_radius);
    Ok(RhoBallSample {
        center: center.to_vec(),
        radius_h: h,
        volume_estimate: p * reference,
        stderr: reference * (p * (1.0 - p) / n).sqrt(),
        hits,
    })
}

/// Uniform sample of `B(0, radius)` in `dim` dimensions.
pub fn uniform_ball_sample(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u = random_unit(&mut rng, dim);
            let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
            u.into_iter().map(|v| v * r).collect()
        })
        .collect()
}

/// `λ(B_ρ(c, 2h)) / λ(B_ρ(c, h))` estimated from one shared uniform sample,
/// with a delta-method standard error.
pub fn doubling_ratio(ctx: &MetricContext, center: &[f64], h: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    Ok(doubling_ratios(ctx, center, &[h], samples, seed)?[0])
}

/// [`doubling_ratio`] for several radii over the same sample.
pub fn doubling_ratios(
    ctx: &MetricContext,
    center: &[f64],
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if radii.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidInput("ball radius must be positive".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    ctx.check_point(center)?;
    let sample = uniform_ball_sample(ctx.dim(), ctx.body().outer_radius, samples, seed);
    let rounds = ctx.default_rounds();
    let h_max = radii.iter().copied().fold(0.0, f64::max);
    // One refined distance per sample point, or infinity when it exceeds 2·h_max.
    let dists = par::map_slice(&sample, |z| {
        if !ctx.body().body.contains(z, 0.0) {
            return f64::INFINITY;
        }
        let limit = 2.0 * h_max;
        if ctx.include_chord && linalg::dist(center, z) * ctx.chord_constant() > limit * (1.0 + 1e-12) {
            return f64::INFINITY;
        }
        ctx.refined_at_most(center, z, limit, rounds).map_or(f64::INFINITY, |w| w.value)
    });
    let n = samples as f64;
    radii
        .iter()
        .map(|&h| {
            let k1 = dists.iter().filter(|&&r| r <= h).count();
            let k2 = dists.iter().filter(|&&r| r <= 2.0 * h).count();
            if k1 == 0 {
                return Err(Error::EmptyBall { h });
            }
            let ratio = k2 as f64 / k1 as f64;
            let p1 = k1 as f64 / n;
            let q = (k2 - k1) as f64 / n;
            // R = 1 + q/p1 with multinomial counts.
            let var = (q * q * (1.0 - p1) / p1.powi(3) + q * (1.0 - q) / (p1 * p1) + 2.0 * q * q / (p1 * p1)) / n;
            Ok((ratio, var.max(0.0).sqrt()))
        })
        .collect()
}

/// Strip check: for `s, t >= 0` with `|√s - √t| <= 2h`, moving
/// `s` a quarter of the way toward `t` changes `√s` by at most `h`.
pub fn strip_shrink_check(s: f64, t: f64, h: f64) -> Result<bool> {
    if !(s >= 0.0 && t >= 0.0 && h > 0.0) || !s.is_finite() || !t.is_finite() || !h.is_finite() {
        return Err(Error::InvalidInput("need s, t >= 0 and h > 0".into()));
    }
    if (s.sqrt() - t.sqrt()).abs() > 2.0 * h * (1.0 + 1e-12) {
        return Err(Error::InvalidInput("|√s - √t| exceeds 2h".into()));
    }
    let shrunk = s + 0.25 * (t - s);
    Ok((s.sqrt() - shrunk.sqrt()).abs() <= h + 1e-12)
}

/// `(ρ̂_{TΩ}(Tx, Ty), |T|^{1/2} ρ̂_Ω(x, y))` for the affine map `T`, both refined
/// with the context's direction set and default rounds.
pub fn affine_transfer_bound(ctx: &MetricContext, map: &AffineMap, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if map.dim() != ctx.dim() {
        return Err(Error::InvalidInput("map dimension disagrees with the body".into()));
    }
    let rounds = ctx.default_rounds();
    let rho = ctx.rho_refined(x, y, rounds)?;
    let image = NormalizedBody::identity(ctx.body().body.transformed(map)?)?;
    let image_ctx = MetricContext::new(image, ctx.directions().clone())?.with_chord(ctx.include_chord);
    let lhs = image_ctx.rho_refined(&map.apply(x), &map.apply(y), rounds)?;
    Ok((lhs, map.linear_norm().sqrt() * rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexBody;
    use approx::assert_relative_eq;

    fn disk_ctx(count: usize) -> MetricContext {
        let body = NormalizedBody::identity(ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()).unwrap();
        MetricContext::new(body, DirectionSet::with_count(2, count, 6).unwrap()).unwrap()
    }

    fn square_ctx(count: usize) -> MetricContext {
        let body = NormalizedBody::identity(ConvexBody::cube(2, 1.0).unwrap()).unwrap();
        MetricContext::new(body, DirectionSet::with_count(2, count, 6).unwrap()).unwrap()
    }

    #[test]
    fn angular_grid_is_exact() {
        let set = DirectionSet::with_count(2, 8, 0).unwrap();
        assert_eq!(set.directions()[2], vec![(std::f64::consts::FRAC_PI_2).cos(), 1.0]);
        assert!(DirectionSet::with_count(2, 8, 0).unwrap().directions().iter().all(|d| (norm(d) - 1.0).abs() < 1e-12));
        let fib = DirectionSet::with_count(3, 100, 0).unwrap();
        assert!(fib.directions().iter().all(|d| (norm(d) - 1.0).abs() < 1e-12));
        let json = serde_json::to_string(&fib).unwrap();
        let back: DirectionSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fib);
    }

    #[test]
    fn directional_terms() {
        let ctx = disk_ctx(64);
        let v = ctx.rho_directional(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(v, 2f64.sqrt() - 1.0, epsilon = 1e-15);
        let v = ctx.rho_directional(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(ctx.rho_directional(&[0.3, 0.1], &[0.3, 0.1], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            ctx.rho_directional(&[2.0, 0.0], &[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::OutsideBody { .. })
        ));
    }

    #[test]
    fn lower_on_disk_and_square() {
        // For x = 0, y = e1 the direction -e1 gives |sqrt(1) - sqrt(0)| = 1,
        // which meets the upper bound sqrt(|x - y|) = 1.
        for ctx in [disk_ctx(4096), square_ctx(4096)] {
            assert_eq!(ctx.rho_lower(&[0.2, 0.2], &[0.2, 0.2]).unwrap(), 0.0);
            assert_relative_eq!(ctx.rho_lower(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0, epsilon = 1e-12);
            let w = ctx.witness(&[0.0, 0.0], &[1.0, 0.0], 6).unwrap();
            assert_relative_eq!(w.direction[0], -1.0, epsilon = 1e-12);
            assert_relative_eq!(w.a, -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn refined_matches_dense_grid() {
        let ctx = disk_ctx(64);
        let x = [0.9, 0.0];
        let y = [0.9, 0.1];
        assert_eq!(ctx.rho_refined(&x, &y, 0).unwrap(), ctx.rho_lower(&x, &y).unwrap());
        let refined = ctx.rho_refined(&x, &y, 8).unwrap();
        // Closed-form a_ξ = -1 on the unit disk; scan 2^16 grid directions.
        let m = 1 << 16;
        let brute = (0..m)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                let (c, s) = (t.cos(), t.sin());
                ((x[0] * c + x[1] * s + 1.0).sqrt() - (y[0] * c + y[1] * s + 1.0).sqrt()).abs()
            })
            .fold(0.0, f64::max);
        assert!((refined - brute).abs() <= 1e-4 * brute, "{refined} vs {brute}");
        assert!(refined >= ctx.rho_lower(&x, &y).unwrap());
        assert_eq!(ctx.rho_refined(&x, &x, 8).unwrap(), 0.0);
    }

    #[test]
    fn cache_agrees_with_support_function() {
        assert!(square_ctx(256).audit_cache(1).unwrap() <= 1e-10);
        assert!(disk_ctx(256).audit_cache(1).unwrap() <= 1e-10);
    }

    #[test]
    fn ball_membership_extremes() {
        let ctx = disk_ctx(256);
        let pool = uniform_ball_sample(2, 1.0, 400, 3)
            .into_iter()
            .filter(|z| ctx.body().body.contains(z, 0.0))
            .collect::<Vec<_>>();
        let all = rho_ball_membership(&ctx, &[0.0, 0.0], ctx.diameter_bound(), &pool).unwrap();
        assert_eq!(all.hits.len(), pool.len());
        let none = rho_ball_membership(&ctx, &[0.0, 0.0], 1e-12, &pool).unwrap();
        assert!(none.hits.is_empty());
    }

    #[test]
    fn doubling_at_full_radius_is_one() {
        let ctx = disk_ctx(256);
        let (ratio, _) = doubling_ratio(&ctx, &[0.0, 0.0], ctx.diameter_bound(), 2000, 1).unwrap();
        assert_eq!(ratio, 1.0);
        assert!(matches!(
            doubling_ratio(&ctx, &[0.0, 0.0], 1e-9, 100, 1),
            Err(Error::EmptyBall { .. })
        ));
    }

    #[test]
    fn strip_examples() {
        assert!(strip_shrink_check(1.0, 9.0, 1.0).unwrap());
        assert!(strip_shrink_check(2.5, 2.5, 0.1).unwrap());
        let h = 0.37;
        assert!(strip_shrink_check(0.0, 4.0 * h * h, h).unwrap());
        assert!(strip_shrink_check(0.0, 100.0, 1.0).is_err());
        assert!(strip_shrink_check(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn affine_transfer_examples() {
        let ctx = disk_ctx(512);
        let x = [0.1, -0.3];
        let y = [-0.5, 0.6];
        let (lhs, rhs) = affine_transfer_bound(&ctx, &AffineMap::identity(2), &x, &y).unwrap();
        assert_eq!(lhs, rhs);
        let (lhs, rhs) = affine_transfer_bound(&ctx, &AffineMap::scaling(2, 4.0).unwrap(), &x, &y).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        assert_relative_eq!(lhs, 2.0 * ctx.rho_refined(&x, &y, 6).unwrap(), max_relative = 1e-12);
    }
}
