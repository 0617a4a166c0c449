//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use polymesh::dubiner::{doubling_ratios, strip_shrink_check, DirectionSet, MetricContext};
use polymesh::geometry::{john_normalize, sample_candidates, AffineMap, ConvexBody, NormalizedBody};
use polymesh::mesh::{build_mesh, MeshSpec};
use polymesh::poly::{
    fast_decreasing_poly, fit_decay, min_resolving_degree, random_poly, resolving_poly, FastDecreasingOptions, Node,
    PolyExpr,
};
use polymesh::verify::{bernstein_ratio, norming_constant, replay_bernstein};
use polymesh::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn disk() -> ConvexBody {
    ConvexBody::ball(vec![0.0, 0.0], 1.0).unwrap()
}

fn square() -> ConvexBody {
    ConvexBody::cube(2, 1.0).unwrap()
}

fn triangle() -> ConvexBody {
    ConvexBody::vpolytope(vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap()
}

fn ellipse() -> ConvexBody {
    ConvexBody::ellipsoid(vec![0.5, -1.0], vec![vec![2.0, 0.5], vec![0.5, 0.4]]).unwrap()
}

/// Seven points on the unit circle with every angular gap below π.
fn random_heptagon(seed: u64) -> ConvexBody {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut t: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        t.sort_by(f64::total_cmp);
        let widest = t.windows(2).map(|w| w[1] - w[0]).fold(2.0 * PI - t[6] + t[0], f64::max);
        if widest < 0.9 * PI {
            return ConvexBody::vpolytope(t.iter().map(|a| vec![a.cos(), a.sin()]).collect()).unwrap();
        }
    }
}

fn normalized(body: &ConvexBody) -> NormalizedBody {
    john_normalize(body, 256, 0.02).unwrap()
}

fn context(body: &ConvexBody) -> MetricContext {
    MetricContext::with_defaults(normalized(body)).unwrap()
}

fn pool(ctx: &MetricContext, size: usize, seed: u64) -> Vec<Vec<f64>> {
    sample_candidates(ctx.body(), size, 0.5, seed).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// ---------------------------------------------------------------------------
// 1 and 2: norming and cardinality

struct NormingRun {
    body: &'static str,
    n: usize,
    cardinality: usize,
    ensemble: f64,
    adversarial: f64,
}

fn norming_runs() -> (Vec<NormingRun>, f64) {
    let start = Instant::now();
    let mut runs = Vec::new();
    for (name, body) in [("disk", disk()), ("square", square())] {
        let ctx = context(&body);
        for n in [4, 8, 16] {
            let mesh = build_mesh(&ctx, &MeshSpec::new(2, n)).unwrap();
            let report = norming_constant(&ctx, &mesh, n, 200, 11).unwrap();
            assert_eq!(report.adversarial.len(), 32);
            runs.push(NormingRun {
                body: name,
                n,
                cardinality: mesh.len(),
                ensemble: report.ensemble_max_ratio,
                adversarial: report.adversarial_max_ratio,
            });
        }
    }
    (runs, start.elapsed().as_secs_f64())
}

fn criterion_1(runs: &[NormingRun], seconds: f64) -> Outcome {
    let worst = runs.iter().map(|r| r.ensemble.max(r.adversarial)).fold(0.0, f64::max);
    let detail: Vec<String> =
        runs.iter().map(|r| format!("{} n={} {:.3}/{:.3}", r.body, r.n, r.ensemble, r.adversarial)).collect();
    check(
        worst <= 2.0 && seconds <= 600.0,
        format!("max ratio {worst:.4} (tol 2.0), {seconds:.0} s (limit 600 s); {}", detail.join(", ")),
    )
}

fn criterion_2(runs: &[NormingRun]) -> Outcome {
    let mut lines = Vec::new();
    let mut worst: f64 = 0.0;
    for body in ["disk", "square"] {
        let per: Vec<f64> =
            runs.iter().filter(|r| r.body == body).map(|r| r.cardinality as f64 / (r.n * r.n) as f64).collect();
        let spread = per.iter().copied().fold(0.0, f64::max) / per.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max(spread);
        lines.push(format!("{body} N/n^2 = {:.2?} spread {spread:.3}", per));
    }
    check(worst <= 2.0, format!("max spread {worst:.3} (tol 2.0); {}", lines.join("; ")))
}

// ---------------------------------------------------------------------------
// 3: Bernstein

fn criterion_3() -> Outcome {
    let ctx = context(&disk());
    let mut ratios = Vec::new();
    let mut replay_err: f64 = 0.0;
    for n in [4, 8, 16] {
        let report = bernstein_ratio(&ctx, n, 50, 1000, 3).unwrap();
        let replayed = replay_bernstein(&ctx, &report).unwrap();
        replay_err = replay_err.max((replayed - report.max_ratio).abs());
        ratios.push(report.max_ratio);
    }
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        spread <= 2.0 && replay_err <= 1e-9,
        format!("max ratios {ratios:.4?}, spread {spread:.3} (tol 2.0), replay error {replay_err:.1e} (tol 1e-9)"),
    )
}

// ---------------------------------------------------------------------------
// 4: doubling

fn criterion_4() -> Outcome {
    let radii = [0.05, 0.1, 0.2];
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_ratio: f64 = 0.0;
    let mut failures = 0;
    for (k, body) in [disk(), square(), random_heptagon(7)].iter().enumerate() {
        let ctx = context(body);
        let centers = pool(&ctx, 20, 100 + k as u64);
        for (i, c) in centers.iter().enumerate() {
            let ratios = doubling_ratios(&ctx, c, &radii, 100_000, 1000 * k as u64 + i as u64).unwrap();
            for (ratio, stderr) in ratios {
                let margin = ratio - (16.0 + 3.0 * stderr);
                worst_margin = worst_margin.max(margin);
                worst_ratio = worst_ratio.max(ratio);
                if margin > 0.0 {
                    failures += 1;
                }
            }
        }
    }
    check(
        failures == 0,
        format!("180 balls, max ratio {worst_ratio:.3}, worst ratio - (16 + 3 stderr) = {worst_margin:.3}, {failures} over"),
    )
}

// ---------------------------------------------------------------------------
// 5: resolving polynomials

fn criterion_5() -> Outcome {
    let bodies = [disk(), square(), triangle(), ellipse(), random_heptagon(7)];
    let contexts: Vec<MetricContext> = bodies.iter().map(context).collect();
    let samples: Vec<Vec<Vec<f64>>> = contexts.iter().enumerate().map(|(k, c)| pool(c, 10_000, 50 + k as u64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut at_y, mut at_x, mut lo, mut hi, mut max_n) = (0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY, 0);
    let mut bad = Vec::new();
    let mut case = 0;
    while case < 200 {
        let k = rng.gen_range(0..bodies.len());
        let ctx = &contexts[k];
        let pts = pool(ctx, 2, rng.gen());
        let (x, y) = (&pts[0], &pts[1]);
        let rho = ctx.rho_refined(x, y, ctx.default_rounds()).unwrap();
        if rho < 1e-3 {
            continue;
        }
        let n = min_resolving_degree(2, rho) + rng.gen_range(0..=10);
        max_n = max_n.max(n);
        case += 1;
        let p = match resolving_poly(ctx, x, y, n) {
            Ok(p) => p,
            Err(e) => {
                bad.push(format!("case {case}: {e}"));
                continue;
            }
        };
        if p.degree() > n as u64 {
            bad.push(format!("case {case}: degree {} > {n}", p.degree()));
        }
        at_y = at_y.max((p.eval(y).unwrap() - 1.0).abs());
        at_x = at_x.max(p.eval(x).unwrap().abs());
        for z in &samples[k] {
            match p.eval(z) {
                Ok(v) => {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                Err(e) => {
                    bad.push(format!("case {case}: {e}"));
                    break;
                }
            }
        }
    }
    let ok = bad.is_empty() && at_y <= 1e-9 && at_x <= 1e-9 && lo >= -1e-9 && hi <= 1.0 + 1e-9;
    check(
        ok,
        format!(
            "|P(y)-1| {at_y:.1e}, |P(x)| {at_x:.1e} (tol 1e-9), range [{lo:.2e}, {hi:.12}] (tol [-1e-9, 1+1e-9]), n up to {max_n}{}",
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 6: fast-decreasing polynomials

fn criterion_6() -> Outcome {
    let n = 20_000;
    let mut rows = Vec::new();
    let mut ok = true;
    for (k, body) in [disk(), square()].iter().enumerate() {
        let ctx = context(body);
        let centers = pool(&ctx, 10, 600 + k as u64);
        let samples = pool(&ctx, 4000, 700 + k as u64);
        for (i, x) in centers.iter().enumerate() {
            let mut l = 1000.0;
            let fd = loop {
                let opts = FastDecreasingOptions { l, seed: i as u64, ..Default::default() };
                match fast_decreasing_poly(&ctx, x, n, &opts) {
                    Err(Error::BudgetExceeded { .. }) => l *= 2.0,
                    other => break other.unwrap(),
                }
            };
            let fit = fit_decay(&ctx, &fd, &samples).unwrap();
            let good = fit.c_hat > 0.0 && fit.max_value <= 1.0 && (fit.value_at_center - 1.0).abs() <= 1e-6;
            ok &= good;
            rows.push((fit.c_hat, fit.max_value.max(fit.value_at_center), (fit.value_at_center - 1.0).abs(), l));
        }
    }
    let min_c = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max_p = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let center_err = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let max_l = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    check(
        ok,
        format!(
            "20 polys at n={n}, min c_hat {min_c:.3} (> 0), max P {max_p:.12} (<= 1), |P(x)-1| {center_err:.1e} (tol 1e-6), L up to {max_l}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 7: metric properties

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut notes = Vec::new();
    let mut ok = true;

    let bodies = [disk(), square(), random_heptagon(7)];
    let (mut asym, mut sqrt_excess, mut chord_short) = (0usize, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut triangle_excess = f64::NEG_INFINITY;
    for (k, body) in bodies.iter().enumerate() {
        let ctx = context(body);
        let rounds = ctx.default_rounds();
        let pts = pool(&ctx, 3000, 70 + k as u64);
        let chord = ctx.chord_constant();
        for i in 0..1000 {
            let (x, y) = (&pts[2 * i], &pts[2 * i + 1]);
            let a = ctx.rho_refined(x, y, rounds).unwrap();
            let b = ctx.rho_refined(y, x, rounds).unwrap();
            asym += usize::from(a.to_bits() != b.to_bits());
            sqrt_excess = sqrt_excess.max(a - dist(x, y).sqrt());
            chord_short = chord_short.max(dist(x, y) * chord - a);
        }
        let fixed = MetricContext::new(ctx.body().clone(), DirectionSet::with_count(2, 256, 0).unwrap())
            .unwrap()
            .with_chord(false)
            .without_facet_normals();
        let per_body = if k == 0 { 3334 } else { 3333 };
        for _ in 0..per_body {
            let pick = |rng: &mut ChaCha8Rng| &pts[rng.gen_range(0..pts.len())];
            let (x, y, z) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
            let excess = fixed.lower_value(x, z) - fixed.lower_value(x, y) - fixed.lower_value(y, z);
            triangle_excess = triangle_excess.max(excess);
        }
    }
    ok &= asym == 0 && triangle_excess <= 1e-12 && sqrt_excess <= 1e-12 && chord_short <= 1e-12;
    notes.push(format!("asymmetric pairs {asym}"));
    notes.push(format!("triangle excess {triangle_excess:.1e} (tol 1e-12)"));
    notes.push(format!("max rho - sqrt|x-y| {sqrt_excess:.1e}"));
    notes.push(format!("max chord bound - rho {chord_short:.1e}"));

    // Inclusion: square ⊂ disk of radius √2, triangle ⊂ square (same frame).
    let tri = ConvexBody::vpolytope(vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    let big_disk = ConvexBody::ball(vec![0.0, 0.0], 2f64.sqrt()).unwrap();
    let mut incl_excess = f64::NEG_INFINITY;
    for (inner, outer) in [(square(), big_disk), (tri, square())] {
        let small = MetricContext::with_defaults(NormalizedBody::identity(inner).unwrap()).unwrap();
        let large = MetricContext::with_defaults(NormalizedBody::identity(outer).unwrap()).unwrap();
        let tau = small.estimate_tau_dir(64, 1).unwrap();
        let rounds = small.default_rounds();
        let pts = pool(&small, 1000, 71);
        for i in 0..500 {
            let (x, y) = (&pts[2 * i], &pts[2 * i + 1]);
            let lhs = large.rho_refined(x, y, rounds).unwrap();
            let rhs = small.rho_refined(x, y, rounds).unwrap();
            incl_excess = incl_excess.max(lhs - rhs * (1.0 + tau) - 1e-12);
        }
    }
    ok &= incl_excess <= 0.0;
    notes.push(format!("inclusion excess {incl_excess:.1e}"));

    // Affine transfer for dilations and rotations.
    let ctx = MetricContext::with_defaults(NormalizedBody::identity(random_heptagon(7)).unwrap()).unwrap();
    let tau = ctx.estimate_tau_dir(64, 2).unwrap();
    let rounds = ctx.default_rounds();
    let pts = pool(&ctx, 400, 72);
    let rotation = |t: f64, s: f64| {
        AffineMap::new(nalgebra::DMatrix::from_row_slice(2, 2, &[s * t.cos(), -s * t.sin(), s * t.sin(), s * t.cos()]), vec![0.3, -0.7])
            .unwrap()
    };
    let mut transfer_excess = f64::NEG_INFINITY;
    for map in [rotation(0.0, 0.5), rotation(0.0, 3.0), rotation(0.4, 1.0), rotation(2.2, 1.7)] {
        let image = MetricContext::with_defaults(NormalizedBody::identity(ctx.body().body.transformed(&map).unwrap()).unwrap())
            .unwrap();
        for i in 0..200 {
            let (x, y) = (&pts[2 * i], &pts[2 * i + 1]);
            let lhs = image.rho_refined(&map.apply(x), &map.apply(y), rounds).unwrap();
            let rhs = map.linear_norm().sqrt() * ctx.rho_refined(x, y, rounds).unwrap();
            transfer_excess = transfer_excess.max(lhs - rhs * (1.0 + tau) - 1e-12);
        }
    }
    ok &= transfer_excess <= 0.0;
    notes.push(format!("affine transfer excess {transfer_excess:.1e} (tau_dir {tau:.1e})"));

    let mut strip_fail = 0;
    for _ in 0..100_000 {
        let s: f64 = rng.gen_range(0.0..4.0);
        let t: f64 = rng.gen_range(0.0..4.0);
        let h = 0.5 * (s.sqrt() - t.sqrt()).abs() * rng.gen_range(1.0..3.0) + 1e-9;
        strip_fail += usize::from(!strip_shrink_check(s, t, h).unwrap());
    }
    ok &= strip_fail == 0;
    notes.push(format!("strip failures {strip_fail}/100000"));
    check(ok, notes.join(", "))
}

// ---------------------------------------------------------------------------
// 8: oracles

/// Direct maximum over `count` equally spaced directions of
/// `|sqrt(x·ξ - a_ξ) - sqrt(y·ξ - a_ξ)|`, `a_ξ = min_Ω z·ξ`.
struct GridOracle {
    dirs: Vec<[f64; 2]>,
    low: Vec<f64>,
}

impl GridOracle {
    fn new(body: &ConvexBody, count: usize) -> Self {
        let dirs: Vec<[f64; 2]> = (0..count)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / count as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let low = dirs.iter().map(|d| -body.support_value(&[-d[0], -d[1]]).unwrap()).collect();
        GridOracle { dirs, low }
    }

    fn rho(&self, x: &[f64], y: &[f64]) -> f64 {
        self.dirs
            .iter()
            .zip(&self.low)
            .map(|(d, a)| {
                let px = (x[0] * d[0] + x[1] * d[1] - a).max(0.0);
                let py = (y[0] * d[0] + y[1] * d[1] - a).max(0.0);
                (px.sqrt() - py.sqrt()).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Bivariate monomial expansion `(i, j) -> coefficient of z1^i z2^j`.
type Expansion = BTreeMap<(usize, usize), f64>;

fn add(a: &Expansion, b: &Expansion, wa: f64, wb: f64) -> Expansion {
    let mut out = Expansion::new();
    for (k, v) in a {
        *out.entry(*k).or_default() += wa * v;
    }
    for (k, v) in b {
        *out.entry(*k).or_default() += wb * v;
    }
    out
}

fn mul(a: &Expansion, b: &Expansion) -> Expansion {
    let mut out = Expansion::new();
    for ((i, j), u) in a {
        for ((k, l), v) in b {
            *out.entry((i + k, j + l)).or_default() += u * v;
        }
    }
    out
}

fn constant(c: f64) -> Expansion {
    Expansion::from([((0, 0), c)])
}

fn expand(p: &PolyExpr) -> Expansion {
    match p.node() {
        Node::Affine { coeffs, constant: c } => Expansion::from([((0, 0), *c), ((1, 0), coeffs[0]), ((0, 1), coeffs[1])]),
        Node::Cheb { m, child } => {
            let u = expand(child);
            let (mut prev, mut cur) = (constant(1.0), u.clone());
            if *m == 0 {
                return prev;
            }
            for _ in 1..*m {
                let next = add(&mul(&u, &cur), &prev, 2.0, -1.0);
                prev = cur;
                cur = next;
            }
            cur
        }
        Node::Sum { children, weights } => {
            children.iter().zip(weights).fold(Expansion::new(), |acc, (c, w)| add(&acc, &expand(c), 1.0, *w))
        }
        Node::Product { children } => children.iter().fold(constant(1.0), |acc, c| mul(&acc, &expand(c))),
        Node::Power { child, k } => {
            let e = expand(child);
            (0..*k).fold(constant(1.0), |acc, _| mul(&acc, &e))
        }
        Node::Scale { child, factor } => add(&expand(child), &Expansion::new(), *factor, 0.0),
        Node::Shift { child, constant: c } => add(&expand(child), &constant(*c), 1.0, 1.0),
    }
}

fn expanded_degree(e: &Expansion) -> u64 {
    let scale = e.values().map(|v| v.abs()).fold(0.0, f64::max);
    e.iter().filter(|(_, v)| v.abs() > 1e-9 * scale).map(|((i, j), _)| (i + j) as u64).max().unwrap_or(0)
}

fn random_expr(rng: &mut ChaCha8Rng, budget: usize) -> PolyExpr {
    let leaf = |rng: &mut ChaCha8Rng| {
        PolyExpr::affine(vec![rng.gen_range(0.2..1.0), rng.gen_range(-1.0..-0.2)], rng.gen_range(-0.5..0.5))
    };
    if budget <= 1 {
        return leaf(rng);
    }
    match rng.gen_range(0..6) {
        0 => {
            let m = rng.gen_range(2..=budget);
            PolyExpr::cheb(m, leaf(rng))
        }
        1 => {
            let k = rng.gen_range(1..=budget);
            PolyExpr::product(vec![random_expr(rng, k), random_expr(rng, budget - k)]).unwrap()
        }
        2 => {
            let k = rng.gen_range(2..=budget.min(4));
            PolyExpr::power(random_expr(rng, budget / k), k as u64).unwrap()
        }
        3 => PolyExpr::sum(
            vec![random_expr(rng, budget), random_expr(rng, budget / 2)],
            vec![rng.gen_range(0.5..2.0), rng.gen_range(-2.0..2.0)],
        )
        .unwrap(),
        4 => PolyExpr::scale(random_expr(rng, budget), rng.gen_range(-3.0..3.0)),
        _ => PolyExpr::shift(random_expr(rng, budget), rng.gen_range(-1.0..1.0)),
    }
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();

    let mut worst_rel: f64 = 0.0;
    for (k, body) in [disk(), square(), triangle(), ellipse(), random_heptagon(7)].iter().enumerate() {
        let nb = normalized(body);
        let oracle = GridOracle::new(&nb.body, 1 << 20);
        let coarse = MetricContext::new(nb, DirectionSet::with_count(2, 64, 8).unwrap()).unwrap();
        let pts = pool(&coarse, 200, 80 + k as u64);
        for i in 0..100 {
            let (x, y) = (&pts[2 * i], &pts[2 * i + 1]);
            let refined = coarse.rho_refined(x, y, 8).unwrap();
            let brute = oracle.rho(x, y);
            worst_rel = worst_rel.max((refined - brute).abs() / brute);
        }
    }
    ok &= worst_rel <= 1e-4;
    notes.push(format!("refined vs 2^20 grid rel err {worst_rel:.1e} (tol 1e-4)"));

    let ctx = context(&disk());
    let pts = pool(&ctx, 500, 81);
    let mut dense_err: f64 = 0.0;
    for n in 1..=12 {
        let q = random_poly(2, n, 900 + n as u64).with_scale(ctx.body().outer_radius);
        let e = q.to_expr();
        for z in &pts {
            let a = q.eval(z);
            dense_err = dense_err.max((a - e.eval(z).unwrap()).abs() / a.abs().max(1.0));
        }
    }
    ok &= dense_err <= 1e-10;
    notes.push(format!("dense vs expression {dense_err:.1e} (tol 1e-10)"));

    let mut mismatches = 0;
    let mut checked = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut exprs: Vec<PolyExpr> = (1..=12).map(|n| random_poly(2, n, 40 + n as u64).to_expr()).collect();
    exprs.extend((0..200).map(|_| {
        let budget = rng.gen_range(1..=12);
        random_expr(&mut rng, budget)
    }));
    let far = pool(&ctx, 400, 82);
    for i in 0..200 {
        let (x, y) = (&far[2 * i], &far[2 * i + 1]);
        let rho = ctx.rho_refined(x, y, ctx.default_rounds()).unwrap();
        if min_resolving_degree(2, rho) <= 12 {
            exprs.push(resolving_poly(&ctx, x, y, 12).unwrap());
        }
    }
    for e in exprs.iter().filter(|e| e.degree() <= 12) {
        checked += 1;
        mismatches += usize::from(expanded_degree(&expand(e)) != e.degree());
    }
    ok &= mismatches == 0 && checked >= 100;
    notes.push(format!("structural degree mismatches {mismatches}/{checked}"));
    check(ok, notes.join(", "))
}

// ---------------------------------------------------------------------------
// 9: determinism

fn pipeline(seed: u64) -> Vec<String> {
    let nb = normalized(&disk());
    let ctx = MetricContext::with_defaults(nb.clone()).unwrap();
    let mut spec = MeshSpec::new(2, 8);
    spec.seed = seed;
    let mesh = build_mesh(&ctx, &spec).unwrap();
    let report = norming_constant(&ctx, &mesh, 8, 200, seed).unwrap();
    vec![
        serde_json::to_string_pretty(&nb).unwrap(),
        serde_json::to_string_pretty(&mesh).unwrap(),
        serde_json::to_string_pretty(&report).unwrap(),
    ]
}

fn criterion_9() -> Outcome {
    let a = pipeline(2024);
    let b = pipeline(2024);
    let bytes: usize = a.iter().map(String::len).sum();
    check(a == b, format!("normalized body, mesh and report: {bytes} bytes, identical = {}", a == b))
}

// ---------------------------------------------------------------------------

fn run(k: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(msg) => println!("criterion {k} ({name}): PASS [{secs:.1} s] {msg}"),
        Err(msg) => println!("criterion {k} ({name}): FAIL [{secs:.1} s] {msg}"),
    }
    outcome.is_ok()
}

fn main() {
    // `cargo test -- --list` and filters from the default harness protocol.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let runs = catch_unwind(norming_runs).ok();
    let mut passed = 0;
    let mut results = vec![
        run(1, "norming", || runs.as_ref().map_or(Err("norming runs panicked".into()), |(r, s)| criterion_1(r, *s))),
        run(2, "cardinality", || runs.as_ref().map_or(Err("norming runs panicked".into()), |(r, _)| criterion_2(r))),
    ];
    results.push(run(3, "bernstein", criterion_3));
    results.push(run(4, "doubling", criterion_4));
    results.push(run(5, "resolving polynomial", criterion_5));
    results.push(run(6, "fast decreasing", criterion_6));
    results.push(run(7, "metric suite", criterion_7));
    results.push(run(8, "oracle equivalence", criterion_8));
    results.push(run(9, "determinism", criterion_9));
    passed += results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/9 criteria passed");
    if passed != 9 {
        std::process::exit(1);
    }
}
