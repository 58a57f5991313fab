//! Independent reference computations used by the property tests. Nothing
//! here calls into the code under test except for plain data types.
#![allow(dead_code)]

use bankwatch_core::{Dataset, FeatureSchema, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dataset(rows: Vec<Vec<f64>>, labels: &[u8]) -> Dataset {
    let m = rows.first().map_or(0, |r| r.len());
    Dataset::from_rows(
        FeatureSchema::generic(m),
        rows,
        labels.iter().map(|&l| Label::from_u8(l).unwrap()).collect(),
    )
    .unwrap()
}

pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller, kept local so the oracle does not share sampling code
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Two labelled Gaussian blobs in `m` dimensions, means `±shift/2` on every axis.
pub fn blobs(seed: u64, n: usize, m: usize, shift: f64) -> Dataset {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let centre = if label == 1 { shift / 2.0 } else { -shift / 2.0 };
        rows.push((0..m).map(|_| centre + gaussian(&mut r)).collect());
        labels.push(label);
    }
    dataset(rows, &labels)
}

// ---------------------------------------------------------------- logistic

fn plain_sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `ln Π πᵢ^yᵢ (1−πᵢ)^(1−yᵢ)` evaluated as a product first, then logged.
/// Only meaningful for small `n` where the product does not underflow.
pub fn likelihood_by_product(beta0: f64, beta: &[f64], d: &Dataset) -> f64 {
    let mut product = 1.0;
    for r in d.records() {
        let z = beta0 + beta.iter().zip(&r.values).map(|(b, x)| b * x).sum::<f64>();
        let pi = plain_sigmoid(z);
        product *= match r.label {
            Label::Bankrupt => pi,
            Label::Active => 1.0 - pi,
        };
    }
    product.ln()
}

/// Central differences of `f` at `theta` with step `h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[j] += h;
            dn[j] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Inverse of a small dense symmetric positive-definite matrix by
/// Gauss–Jordan elimination with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        aug[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let factor = aug[r][col];
                if factor != 0.0 {
                    let pivot_row = aug[col].clone();
                    for (v, pv) in aug[r].iter_mut().zip(&pivot_row) {
                        *v -= factor * pv;
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Asymptotic standard errors `sqrt(diag(I⁻¹))` of `(β₀, β)` on raw
/// features, with `I = Σ πᵢ(1−πᵢ) x̃ᵢx̃ᵢᵀ`, `x̃ = (1, x)`.
pub fn fisher_standard_errors(beta0: f64, beta: &[f64], d: &Dataset) -> Vec<f64> {
    let p = beta.len() + 1;
    let mut info = vec![vec![0.0; p]; p];
    for r in d.records() {
        let mut xt = vec![1.0];
        xt.extend_from_slice(&r.values);
        let z = beta0 + beta.iter().zip(&r.values).map(|(b, x)| b * x).sum::<f64>();
        let pi = plain_sigmoid(z);
        let w = pi * (1.0 - pi);
        for a in 0..p {
            for b in 0..p {
                info[a][b] += w * xt[a] * xt[b];
            }
        }
    }
    let inv = invert(&info);
    (0..p).map(|j| inv[j][j].sqrt()).collect()
}

// ------------------------------------------------------------------- trees

fn gini_f64(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

/// Exhaustive `(feature, midpoint)` enumeration scored by child-size
/// weighted Gini. Ties (within 1e-12) keep the earlier candidate in
/// (feature, threshold) order.
pub fn brute_force_split(x: &[Vec<f64>], y: &[Label], rows: &[usize], features: &[usize]) -> Option<(usize, f64, f64)> {
    let mut counts = [0usize; 2];
    for &r in rows {
        counts[y[r].index()] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return None;
    }
    let mut feats = features.to_vec();
    feats.sort_unstable();
    let n = rows.len() as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for &f in &feats {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let mut left = [0usize; 2];
            let mut right = [0usize; 2];
            for &r in rows {
                if x[r][f] <= t {
                    left[y[r].index()] += 1;
                } else {
                    right[y[r].index()] += 1;
                }
            }
            let nl = (left[0] + left[1]) as f64;
            let nr = (right[0] + right[1]) as f64;
            let score = nl / n * gini_f64(left) + nr / n * gini_f64(right);
            if best.is_none_or(|(_, _, b)| score < b - 1e-12) {
                best = Some((f, t, score));
            }
        }
    }
    best
}

// --------------------------------------------------------------------- svm

/// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the
/// multiplier of the equality constraint.
pub fn project_box_hyperplane(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c))
            .collect()
    };
    let balance = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let spread = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-spread, spread);
    // balance is non-increasing in lambda
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximizes `Σα − ½αᵀQα` over the dual feasible set by accelerated
/// projected gradient ascent; returns the final objective value.
pub fn projected_gradient_dual(k: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> f64 {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect())
        .collect();
    // Frobenius norm bounds the largest eigenvalue
    let lipschitz = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let objective = |a: &[f64]| {
        let quad: f64 = (0..n)
            .map(|i| a[i] * (0..n).map(|j| q[i][j] * a[j]).sum::<f64>())
            .sum();
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let mut alpha = vec![0.0; n];
    let mut momentum = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[i][j] * momentum[j]).sum::<f64>())
            .collect();
        let stepped: Vec<f64> = momentum.iter().zip(&grad).map(|(a, g)| a + g / lipschitz).collect();
        let next = project_box_hyperplane(&stepped, y, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        momentum = next
            .iter()
            .zip(&alpha)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        // restart when momentum stops helping
        if objective(&next) < objective(&alpha) {
            momentum = next.clone();
            t = 1.0;
        } else {
            t = t_next;
        }
        alpha = next;
    }
    objective(&alpha)
}

// ------------------------------------------------------------------- smote

/// Whether `s = a + g·(b − a)` for some `g ∈ [0, 1]`, to within `tol`.
pub fn on_segment(s: &[f64], a: &[f64], b: &[f64], tol: f64) -> bool {
    let d: Vec<f64> = b.iter().zip(a).map(|(bi, ai)| bi - ai).collect();
    let dd: f64 = d.iter().map(|v| v * v).sum();
    if dd == 0.0 {
        return s.iter().zip(a).all(|(si, ai)| (si - ai).abs() <= tol);
    }
    let g = s.iter().zip(a).zip(&d).map(|((si, ai), di)| (si - ai) * di).sum::<f64>() / dd;
    if !(-tol..=1.0 + tol).contains(&g) {
        return false;
    }
    s.iter()
        .zip(a)
        .zip(&d)
        .all(|((si, ai), di)| (si - (ai + g * di)).abs() <= tol * (1.0 + ai.abs() + di.abs()))
}

/// The `k` same-class records nearest to `i` by brute force over all
/// pairwise distances (ties to the lower index).
pub fn brute_knn(d: &Dataset, i: usize, k: usize) -> Vec<usize> {
    let recs = d.records();
    let mut all: Vec<(f64, usize)> = (0..recs.len())
        .filter(|&j| j != i && recs[j].label == recs[i].label)
        .map(|j| {
            let dist = recs[i]
                .values
                .iter()
                .zip(&recs[j].values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (dist, j)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, j)| j).collect()
}

// ---------------------------------------------------------------- geometry

/// Best number of the 4 XOR centroids `(±s, ±s)` (bankrupt when the signs
/// agree) that any half-plane classifier `w·x + b ≥ 0 → bankrupt` gets
/// right, scanning a fine grid of directions and offsets.
pub fn best_linear_on_xor_centroids(s: f64) -> usize {
    let pts = [(s, s, true), (-s, -s, true), (s, -s, false), (-s, s, false)];
    let mut best = 0;
    for a in 0..720 {
        let theta = a as f64 * std::f64::consts::PI / 360.0;
        let (wx, wy) = (theta.cos(), theta.sin());
        for o in -400..=400 {
            let b = o as f64 * s / 100.0;
            let correct = pts
                .iter()
                .filter(|(x, y, bankrupt)| (wx * x + wy * y + b >= 0.0) == *bankrupt)
                .count();
            best = best.max(correct);
        }
    }
    best
}
