//! Small dense vector helpers shared by the hot loops. Points are plain
//! `&[f64]` slices; matrices go through nalgebra.

use nalgebra::DMatrix;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n > 0.0 && n.is_finite() {
        Some(a.iter().map(|x| x / n).collect())
    } else {
        None
    }
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

pub fn mat_t_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)] * v[i]).sum())
        .collect()
}

/// Largest singular value by power iteration on `MᵀM`.
pub fn operator_norm(m: &DMatrix<f64>, tol: f64) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    let mtm = m.transpose() * m;
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = mat_vec(&mtm, &v);
        let wn = norm(&w);
        if wn == 0.0 {
            return 0.0;
        }
        let next: Vec<f64> = w.iter().map(|x| x / wn).collect();
        // Rayleigh quotient of MᵀM at the normalized iterate.
        let mv = mat_vec(m, &next);
        let new_lambda = dot(&mv, &mv) / dot(&next, &next);
        v = next;
        if (new_lambda - lambda).abs() <= tol * new_lambda.max(1.0) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    lambda.sqrt()
}

/// Orthonormal basis of the complement of the unit vector `xi`, built by
/// Gram-Schmidt against the coordinate axes (deterministic).
pub fn tangent_basis(xi: &[f64]) -> Vec<Vec<f64>> {
    let d = xi.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d.saturating_sub(1));
    let mut axes: Vec<usize> = (0..d).collect();
    // Start from the axes least aligned with xi for numerical stability.
    axes.sort_by(|&a, &b| xi[a].abs().total_cmp(&xi[b].abs()));
    for &k in &axes {
        if basis.len() + 1 == d {
            break;
        }
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        let p = dot(&v, xi);
        for i in 0..d {
            v[i] -= p * xi[i];
        }
        for b in &basis {
            let p = dot(&v, b);
            for i in 0..d {
                v[i] -= p * b[i];
            }
        }
        if let Some(u) = normalized(&v) {
            if norm(&v) > 1e-8 {
                basis.push(u);
            }
        }
    }
    basis
}

pub fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Volume of the Euclidean ball of radius `r` in `d` dimensions.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    // V_k = V_{k-2} * 2π / k with V_0 = 1, V_1 = 2.
    let (mut v0, mut v1) = (1.0, 2.0);
    let unit = match d {
        0 => 1.0,
        1 => 2.0,
        _ => {
            for k in 2..=d {
                let next = v0 * 2.0 * std::f64::consts::PI / k as f64;
                v0 = v1;
                v1 = next;
            }
            v1
        }
    };
    unit * r.powi(d as i32)
}
