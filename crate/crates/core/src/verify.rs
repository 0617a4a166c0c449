//! Empirical certification of meshes: norming-constant estimates against
//! random and adversarial polynomials, and the Bernstein-type ratio
//! `|Q(x) - Q(y)| / (n ρ̂(x, y) ‖Q‖)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dubiner::MetricContext;
use crate::error::{Error, Result};
use crate::geometry::{random_unit, sample_candidates};
use crate::linalg::dot;
use crate::mesh::{Mesh, Sweep};
use crate::par;
use crate::poly::{fast_decreasing_poly, random_poly, sup_norm_on, BasisTable, FastDecreasingOptions, PolyExpr};

/// Number of adversarial centers in the norming check.
pub const ADVERSARIAL_CENTERS: usize = 32;
/// Evaluation pool size as a multiple of the mesh cardinality.
pub const POOL_FACTOR: usize = 20;
/// Random polynomials per batch in the norming check.
const BATCH: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| -> f64 {
            if v.is_empty() {
                return f64::NAN;
            }
            v[((v.len() - 1) as f64 * q).round() as usize]
        };
        Quantiles { min: at(0.0), median: at(0.5), p90: at(0.9), p99: at(0.99), max: at(1.0) }
    }
}

/// One adversarial witness: the worse of a fast-decreasing polynomial and a
/// Chebyshev ridge, both centered at a pool point far from the mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialWitness {
    pub center: Vec<f64>,
    /// Refined distance from the center to the mesh.
    pub gap: f64,
    pub fast_decreasing_ratio: f64,
    pub fast_decreasing_degree: u64,
    /// The `L` at which the fast-decreasing polynomial fit the degree budget.
    pub l: f64,
    pub ridge_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormingReport {
    pub body_fingerprint: String,
    pub mesh_cardinality: usize,
    pub mesh_epsilon: f64,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Seed of the evaluation pool; trial `i` uses `seed + 1 + i`.
    pub pool_seed: u64,
    pub eval_pool_size: usize,
    pub ensemble_max_ratio: f64,
    pub ensemble_quantiles: Quantiles,
    /// Ratio of each random trial, in trial order.
    pub trial_ratios: Vec<f64>,
    pub adversarial_max_ratio: f64,
    pub adversarial: Vec<AdversarialWitness>,
}

impl NormingReport {
    pub fn max_ratio(&self) -> f64 {
        self.ensemble_max_ratio.max(self.adversarial_max_ratio)
    }
}

fn trial_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(1 + i as u64)
}

fn check_binding(ctx: &MetricContext, mesh: &Mesh) -> Result<()> {
    let body = &ctx.body().source_fingerprint;
    if &mesh.body_fingerprint != body {
        return Err(Error::FingerprintMismatch { mesh: mesh.body_fingerprint.clone(), body: body.clone() });
    }
    Ok(())
}

/// The evaluation pool: the mesh points followed by at least
/// `20·#mesh - #mesh` fresh boundary-heavy samples.
fn evaluation_pool(ctx: &MetricContext, mesh: &Mesh, seed: u64) -> Result<Vec<Vec<f64>>> {
    let fresh = (POOL_FACTOR * mesh.len()).max(1000);
    let mut pool = mesh.normalized_points.clone();
    pool.extend(sample_candidates(ctx.body(), fresh, 0.8, seed)?);
    Ok(pool)
}

/// Norming ratios `‖Q‖_pool / max_mesh |Q|` over `trials` random polynomials
/// of degree `n` plus the adversarial suite.
pub fn norming_constant(ctx: &MetricContext, mesh: &Mesh, n: usize, trials: usize, seed: u64) -> Result<NormingReport> {
    check_binding(ctx, mesh)?;
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    if mesh.is_empty() {
        return Err(Error::EmptyPool);
    }
    let d = ctx.dim();
    let pool_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let pool = evaluation_pool(ctx, mesh, pool_seed)?;
    let m = mesh.len();
    let scale = ctx.body().outer_radius;
    let table = BasisTable::new(&pool, d, n, scale);

    let mut ratios = Vec::with_capacity(trials);
    for start in (0..trials).step_by(BATCH) {
        let end = (start + BATCH).min(trials);
        let polys: Vec<_> = (start..end).map(|i| random_poly(d, n, trial_seed(seed, i)).with_scale(scale)).collect();
        let values = table.evaluate(&polys);
        let batch = par::map_range(polys.len(), |k| -> Result<f64> {
            let col = values.column(k);
            let on_mesh = col.rows(0, m).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let on_pool = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            // Polish only from the top pool points, as in sup_norm_on.
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()).then(a.cmp(&b)));
            let top: Vec<Vec<f64>> = order.iter().take(16).map(|&i| pool[i].clone()).collect();
            let polished = sup_norm_on(&polys[k], ctx.body(), &top)?;
            Ok(ratio(on_pool.max(polished), on_mesh))
        });
        for r in batch {
            ratios.push(r?);
        }
    }
    let quantiles = Quantiles::of(&ratios);
    let adversarial = adversarial_suite(ctx, mesh, &pool, n, seed)?;
    let adversarial_max_ratio = adversarial
        .iter()
        .map(|w| w.fast_decreasing_ratio.max(w.ridge_ratio))
        .fold(1.0, f64::max);
    Ok(NormingReport {
        body_fingerprint: mesh.body_fingerprint.clone(),
        mesh_cardinality: m,
        mesh_epsilon: mesh.spec.epsilon(),
        n,
        trials,
        seed,
        pool_seed,
        eval_pool_size: pool.len(),
        ensemble_max_ratio: quantiles.max,
        ensemble_quantiles: quantiles,
        trial_ratios: ratios,
        adversarial_max_ratio,
        adversarial,
    })
}

fn ratio(sup: f64, on_mesh: f64) -> f64 {
    if sup == 0.0 {
        1.0
    } else if on_mesh == 0.0 {
        f64::INFINITY
    } else {
        (sup / on_mesh).max(1.0)
    }
}

fn norming_ratio_of(ctx: &MetricContext, p: &PolyExpr, mesh: &Mesh, pool: &[Vec<f64>]) -> Result<f64> {
    let on_mesh = mesh
        .normalized_points
        .iter()
        .map(|z| p.eval(z).map(f64::abs))
        .try_fold(0.0f64, |a, v| v.map(|v| a.max(v)))?;
    Ok(ratio(sup_norm_on(p, ctx.body(), pool)?, on_mesh))
}

fn adversarial_suite(
    ctx: &MetricContext,
    mesh: &Mesh,
    pool: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<Vec<AdversarialWitness>> {
    let rounds = ctx.default_rounds();
    let sweep = Sweep::new(&mesh.normalized_points);
    let fresh = &pool[mesh.len()..];
    let gaps: Vec<(usize, f64)> = par::map_slice(fresh, |z| sweep.nearest(ctx, z, rounds).expect("mesh is not empty"));
    let mut order: Vec<usize> = (0..fresh.len()).collect();
    order.sort_by(|&a, &b| gaps[b].1.total_cmp(&gaps[a].1).then(a.cmp(&b)));
    order.truncate(ADVERSARIAL_CENTERS);
    let witnesses = par::map_slice(&order, |&i| -> Result<AdversarialWitness> {
        let center = &fresh[i];
        let (near, gap) = gaps[i];
        let (fd, l) = budgeted_fast_decreasing(ctx, center, n, seed.wrapping_add(i as u64))?;
        let fast_decreasing_ratio = norming_ratio_of(ctx, &fd, mesh, pool)?;
        let ridge = ridge_witness(ctx, &mesh.normalized_points[near], center, n);
        let ridge_ratio = match ridge {
            Some(p) => norming_ratio_of(ctx, &p, mesh, pool)?,
            None => 1.0,
        };
        Ok(AdversarialWitness {
            center: center.clone(),
            gap,
            fast_decreasing_ratio,
            fast_decreasing_degree: fd.degree(),
            l,
            ridge_ratio,
        })
    });
    witnesses.into_iter().collect()
}

/// A fast-decreasing polynomial at `x` of degree at most `n`, doubling `L`
/// from 4 until the construction fits (at `L >= n` it is the constant 1).
fn budgeted_fast_decreasing(ctx: &MetricContext, x: &[f64], n: usize, seed: u64) -> Result<(PolyExpr, f64)> {
    let mut l = 4.0;
    loop {
        let opts = FastDecreasingOptions { l, pool_size: 4000, seed, enforce_budget: true, ..Default::default() };
        match fast_decreasing_poly(ctx, x, n.max(2), &opts) {
            Ok(fd) => return Ok((fd.poly, l)),
            Err(Error::BudgetExceeded { .. }) => l *= 2.0,
            Err(e) => return Err(e),
        }
    }
}

/// `T_n(φ(p_ξ))` with `ξ` the direction separating `center` from its nearest
/// mesh point, `p_ξ` the width-normalized projection and `φ` the steepest
/// affine map keeping `[-1, 1]` inside `[-1, 1]` that puts an extremum of
/// `T_n` exactly at `center`.
pub fn ridge_witness(ctx: &MetricContext, near: &[f64], center: &[f64], n: usize) -> Option<PolyExpr> {
    if n == 0 {
        return None;
    }
    let w = ctx.refined_witness(near, center, ctx.default_rounds());
    if w.value == 0.0 || !(w.b > w.a) {
        return None;
    }
    let c1 = 2.0 / (w.b - w.a);
    let c0 = -(w.a + w.b) / (w.b - w.a);
    let pc = (c1 * dot(center, &w.direction) + c0).clamp(-1.0, 1.0);
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=n {
        let node = (k as f64 * PI / n as f64).cos();
        let up = if pc < 1.0 { (1.0 - node) / (1.0 - pc) } else { f64::INFINITY };
        let down = if pc > -1.0 { (node + 1.0) / (1.0 + pc) } else { f64::INFINITY };
        let slope = up.min(down).min(1.0);
        if slope > 0.0 && best.map_or(true, |b| slope > b.0) {
            best = Some((slope, node));
        }
    }
    let (slope, node) = best?;
    // u(z) = node + slope·(p(z) - pc)
    let coeffs = w.direction.iter().map(|v| slope * c1 * v).collect();
    let constant = node + slope * (c0 - pc);
    Some(PolyExpr::cheb(n, PolyExpr::affine(coeffs, constant)))
}

/// `certify` outcome: both maxima at most `target`.
pub fn certify(ctx: &MetricContext, mesh: &Mesh, target: f64, n: usize, trials: usize, seed: u64) -> Result<(bool, NormingReport)> {
    if !(target >= 1.0) {
        return Err(Error::InvalidInput("target must be at least 1".into()));
    }
    let report = norming_constant(ctx, mesh, n, trials, seed)?;
    let ok = report.ensemble_max_ratio <= target && report.adversarial_max_ratio <= target;
    Ok((ok, report))
}

// ---------------------------------------------------------------------------
// Bernstein ratio

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinWitness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub trial_seed: u64,
    pub q_x: f64,
    pub q_y: f64,
    pub rho: f64,
    pub sup_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub body_fingerprint: String,
    pub n: usize,
    pub trials: usize,
    pub pairs_tested: usize,
    pub seed: u64,
    pub pool_seed: u64,
    pub eval_pool_size: usize,
    pub max_ratio: f64,
    pub witness: Option<BernsteinWitness>,
}

/// Pool used for `‖Q‖` in the Bernstein ratio.
const BERNSTEIN_POOL: usize = 4000;

/// Random point pairs: a pool point and a second point at Euclidean distance
/// log-uniform in `[1e-4, diam]` along a random direction, clipped to the body.
fn bernstein_pairs(ctx: &MetricContext, pairs: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let d = ctx.dim();
    let starts = sample_candidates(ctx.body(), pairs, 0.7, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb3a5);
    let mut out = Vec::with_capacity(pairs);
    for x in starts {
        let u = random_unit(&mut rng, d);
        let reach = ctx.body().body.ray_extent(&x, &u)?;
        let t: f64 = rng.gen_range((1e-4f64).ln()..(2.0 * ctx.body().outer_radius).ln());
        let step = t.exp().min(reach);
        if step <= 0.0 {
            continue;
        }
        let y: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + step * b).collect();
        out.push((x, y));
    }
    Ok(out)
}

/// Largest `|Q(x) - Q(y)| / (n ρ̂(x, y) ‖Q‖_pool)` over random polynomials
/// and random pairs, including pairs down to Euclidean distance `1e-4`.
pub fn bernstein_ratio(ctx: &MetricContext, n: usize, trials: usize, pairs: usize, seed: u64) -> Result<BernsteinReport> {
    if trials == 0 || pairs == 0 {
        return Err(Error::InvalidInput("trials and pairs must be positive".into()));
    }
    let d = ctx.dim();
    let scale = ctx.body().outer_radius;
    let pool_seed = seed ^ 0x5bd1_e995;
    let pool = sample_candidates(ctx.body(), BERNSTEIN_POOL, 0.8, pool_seed)?;
    let pair_list = bernstein_pairs(ctx, pairs, seed)?;
    let rounds = ctx.default_rounds();
    let rhos: Vec<f64> = par::map_slice(&pair_list, |(x, y)| ctx.refined_witness(x, y, rounds).value);
    let mut report = BernsteinReport {
        body_fingerprint: ctx.body().source_fingerprint.clone(),
        n,
        trials,
        pairs_tested: pair_list.len(),
        seed,
        pool_seed,
        eval_pool_size: pool.len(),
        max_ratio: 0.0,
        witness: None,
    };
    if n == 0 {
        return Ok(report);
    }
    let xs: Vec<Vec<f64>> = pair_list.iter().map(|p| p.0.clone()).collect();
    let ys: Vec<Vec<f64>> = pair_list.iter().map(|p| p.1.clone()).collect();
    let pool_table = BasisTable::new(&pool, d, n, scale);
    let x_table = BasisTable::new(&xs, d, n, scale);
    let y_table = BasisTable::new(&ys, d, n, scale);
    for start in (0..trials).step_by(BATCH) {
        let end = (start + BATCH).min(trials);
        let seeds: Vec<u64> = (start..end).map(|i| trial_seed(seed, i)).collect();
        let polys: Vec<_> = seeds.iter().map(|&s| random_poly(d, n, s).with_scale(scale)).collect();
        let on_pool = pool_table.evaluate(&polys);
        let at_x = x_table.evaluate(&polys);
        let at_y = y_table.evaluate(&polys);
        for k in 0..polys.len() {
            let sup = on_pool.column(k).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if sup == 0.0 {
                continue;
            }
            for (j, &rho) in rhos.iter().enumerate() {
                if rho <= 0.0 {
                    continue;
                }
                let r = (at_x[(j, k)] - at_y[(j, k)]).abs() / (n as f64 * rho * sup);
                if r > report.max_ratio {
                    report.max_ratio = r;
                    report.witness = Some(BernsteinWitness {
                        x: xs[j].clone(),
                        y: ys[j].clone(),
                        trial_seed: seeds[k],
                        q_x: at_x[(j, k)],
                        q_y: at_y[(j, k)],
                        rho,
                        sup_norm: sup,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Recompute the ratio recorded in a Bernstein witness from its seeds.
pub fn replay_bernstein(ctx: &MetricContext, report: &BernsteinReport) -> Result<f64> {
    let Some(w) = &report.witness else {
        return Ok(0.0);
    };
    let d = ctx.dim();
    let scale = ctx.body().outer_radius;
    let q = random_poly(d, report.n, w.trial_seed).with_scale(scale);
    let pool = sample_candidates(ctx.body(), BERNSTEIN_POOL, 0.8, report.pool_seed)?;
    let sup = pool.iter().map(|z| q.eval(z).abs()).fold(0.0, f64::max);
    let rho = ctx.witness(&w.x, &w.y, ctx.default_rounds())?.value;
    Ok((q.eval(&w.x) - q.eval(&w.y)).abs() / (report.n as f64 * rho * sup))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dubiner::DirectionSet;
    use crate::geometry::{ConvexBody, NormalizedBody};
    use crate::mesh::{build_mesh, MeshSpec};

    fn disk() -> MetricContext {
        let body = NormalizedBody::identity(ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()).unwrap();
        MetricContext::new(body, DirectionSet::with_count(2, 512, 6).unwrap()).unwrap()
    }

    #[test]
    fn constants_have_ratio_one() {
        let ctx = disk();
        let spec = MeshSpec { pool_size: 2000, ..MeshSpec::new(2, 4) };
        let mesh = build_mesh(&ctx, &spec).unwrap();
        let r = norming_constant(&ctx, &mesh, 0, 10, 3).unwrap();
        assert_eq!(r.ensemble_max_ratio, 1.0);
        assert!(r.eval_pool_size >= 20 * mesh.len());
        let b = bernstein_ratio(&ctx, 0, 5, 100, 1).unwrap();
        assert_eq!(b.max_ratio, 0.0);
    }

    #[test]
    fn mismatched_body_is_refused() {
        let ctx = disk();
        let mut mesh = build_mesh(&ctx, &MeshSpec { pool_size: 1000, ..MeshSpec::new(2, 2) }).unwrap();
        mesh.body_fingerprint = "other".into();
        assert!(matches!(norming_constant(&ctx, &mesh, 2, 10, 0), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn certify_disk_small() {
        let ctx = disk();
        let mesh = build_mesh(&ctx, &MeshSpec { pool_size: 4000, ..MeshSpec::new(2, 4) }).unwrap();
        let (ok, report) = certify(&ctx, &mesh, 2.0, 4, 100, 7).unwrap();
        assert!(ok, "{report:?}");
        assert!(report.ensemble_quantiles.min >= 1.0);
        assert_eq!(report.adversarial.len(), ADVERSARIAL_CENTERS);
        let (strict, _) = certify(&ctx, &mesh, 1.0, 4, 100, 7).unwrap();
        assert!(!strict);
    }

    #[test]
    fn bernstein_replay() {
        let ctx = disk();
        let report = bernstein_ratio(&ctx, 4, 20, 300, 5).unwrap();
        assert!(report.max_ratio > 0.0);
        let replay = replay_bernstein(&ctx, &report).unwrap();
        assert!((replay - report.max_ratio).abs() <= 1e-9 * report.max_ratio.max(1.0));
    }

    #[test]
    fn ridge_peaks_at_center() {
        let ctx = disk();
        let center = [0.3, 0.2];
        let p = ridge_witness(&ctx, &[0.25, 0.2], &center, 6).unwrap();
        assert!((p.eval(&center).unwrap().abs() - 1.0).abs() < 1e-12);
        let pool = sample_candidates(ctx.body(), 2000, 0.7, 1).unwrap();
        assert!(pool.iter().all(|z| p.eval(z).is_ok()));
    }
}
