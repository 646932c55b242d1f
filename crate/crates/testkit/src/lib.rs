//! Brute-force reference implementations and seeded data generators for the
//! test suites. Nothing here calls the algorithms it is meant to check.

use ndarray::{Array1, Array2, Array3, ArrayView2};
use ndna_core::prng::SplitMix64;
use ndna_core::{GradientBundle, Trajectory};

/// Worked example rows: (layer, κ, ℒ, ‖v‖).
pub const LAYER_TABLE: [(usize, f64, f64, f64); 11] = [
    (20, 0.0412, 0.9123, 0.6521),
    (21, 0.0458, 0.8123, 0.7523),
    (22, 0.0523, 1.0120, 0.5823),
    (23, 0.0581, 0.9021, 0.6912),
    (24, 0.0639, 1.1023, 0.5520),
    (25, 0.0505, 0.9420, 0.8124),
    (26, 0.0398, 0.8520, 0.6120),
    (27, 0.0512, 1.0520, 0.7222),
    (28, 0.0590, 0.9320, 0.5721),
    (29, 0.0672, 1.0123, 0.6322),
    (30, 0.0555, 0.8221, 0.7720),
];

/// Row-by-row products and their plain left-to-right sum.
pub fn layer_table_oracle() -> (Vec<f64>, f64) {
    let products: Vec<f64> = LAYER_TABLE.iter().map(|&(_, k, l, v)| k * l * v).collect();
    let mut total = 0.0;
    for p in &products {
        total += p;
    }
    (products, total)
}

pub fn normal_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.next_normal())
}

/// Haar-ish random orthogonal matrix from Gram–Schmidt on Gaussian columns.
pub fn random_orthogonal(rng: &mut SplitMix64, d: usize) -> Array2<f64> {
    loop {
        let g = normal_matrix(rng, d, d);
        let mut q = Array2::<f64>::zeros((d, d));
        let mut ok = true;
        for j in 0..d {
            let mut v = g.column(j).to_owned();
            for k in 0..j {
                let qk = q.column(k);
                let c = qk.dot(&v);
                v.scaled_add(-c, &qk);
            }
            let n = v.dot(&v).sqrt();
            if n < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).assign(&(v / n));
        }
        if ok {
            return q;
        }
    }
}

/// Applies `h ↦ a·R h + t` to every row.
pub fn transform_rows(rows: ArrayView2<f64>, r: &Array2<f64>, a: f64, t: &Array1<f64>) -> Array2<f64> {
    let mut out = rows.dot(&r.t()) * a;
    for mut row in out.rows_mut() {
        row += t;
    }
    out
}

pub fn random_trajectory(rng: &mut SplitMix64, layers: usize, dim: usize) -> Trajectory {
    Trajectory::new("random", normal_matrix(rng, layers, dim)).expect("finite normals")
}

pub fn random_bundle(rng: &mut SplitMix64, samples: usize, layers: usize, dim: usize) -> GradientBundle {
    let h = Array3::from_shape_fn((samples, layers, dim), |_| rng.next_normal());
    let th = Array2::from_shape_fn((samples, layers), |_| rng.next_f64() * 2.0);
    GradientBundle::new(Some(h), Some(th), vec![]).expect("valid shapes")
}

/// Random symmetric matrix with entries in `[-1, 1]`.
pub fn random_symmetric(rng: &mut SplitMix64, n: usize) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = 2.0 * rng.next_f64() - 1.0;
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

/// Eigenvalues (ascending) by Householder tridiagonalization and Sturm
/// sequence bisection.
pub fn bisection_eigenvalues(a: ArrayView2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.to_owned();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| m[[i, k]]).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x.clone();
        v[0] -= alpha;
        let vn = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vn == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|t| *t /= vn);
        let mut p = Array2::<f64>::eye(n);
        for (i, vi) in v.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                p[[k + 1 + i, k + 1 + j]] -= 2.0 * vi * vj;
            }
        }
        m = p.dot(&m).dot(&p);
    }
    let d: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    let e: Vec<f64> = (1..n).map(|i| m[[i, i - 1]]).collect();

    let bound = (0..n)
        .map(|i| {
            let off = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
            d[i].abs() + off
        })
        .fold(0.0, f64::max)
        + 1.0;
    // number of eigenvalues strictly below x
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..n {
            let sub = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] / q };
            q = d[i] - x - sub;
            if q == 0.0 {
                q = -1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-15 * bound {
                    break;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

fn euclid(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Edge weights of a minimum spanning tree (Prim, dense), ascending.
pub fn mst_weights(points: ArrayView2<f64>) -> Vec<f64> {
    let n = points.nrows();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut weights = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n {
        let u = (0..n)
            .filter(|&i| !in_tree[i])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .expect("vertices remain");
        in_tree[u] = true;
        if step > 0 {
            weights.push(best[u]);
        }
        for v in 0..n {
            if !in_tree[v] {
                best[v] = best[v].min(euclid(points.row(u), points.row(v)));
            }
        }
    }
    weights.sort_by(f64::total_cmp);
    weights
}

/// Bottleneck distance by enumerating every matching between `a ∪ Δ` and
/// `b ∪ Δ`.
pub fn exhaustive_bottleneck(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let size = n + m;
    // cost[i][j]: left i (a point or a diagonal slot) to right j
    let mut cost = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in 0..size {
            cost[i][j] = match (i < n, j < m) {
                (true, true) => (a[i].0 - b[j].0).abs().max((a[i].1 - b[j].1).abs()),
                (true, false) => (a[i].1 - a[i].0) / 2.0,
                (false, true) => (b[j].1 - b[j].0) / 2.0,
                (false, false) => 0.0,
            };
        }
    }
    let mut perm: Vec<usize> = (0..size).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &cost, &mut best);
    if size == 0 {
        0.0
    } else {
        best
    }
}

fn permute(perm: &mut Vec<usize>, k: usize, cost: &[Vec<f64>], best: &mut f64) {
    if k == perm.len() {
        let worst = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).fold(0.0, f64::max);
        *best = best.min(worst);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, cost, best);
        perm.swap(k, i);
    }
}

/// Random finite diagram with up to `max_points` points in `[0, 1]`.
pub fn random_diagram(rng: &mut SplitMix64, max_points: usize) -> Vec<(f64, f64)> {
    let n = rng.next_index(max_points + 1);
    (0..n)
        .map(|_| {
            let b = rng.next_f64();
            (b, b + rng.next_f64())
        })
        .collect()
}

/// Directed Hausdorff distance from `full` to its subset `sub`.
pub fn covering_radius(full: ArrayView2<f64>, sub: ArrayView2<f64>) -> f64 {
    full.rows()
        .into_iter()
        .map(|p| {
            sub.rows()
                .into_iter()
                .map(|q| euclid(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bisection_on_known_spectrum() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]];
        let ev = bisection_eigenvalues(a.view());
        let s = 2f64.sqrt();
        for (x, y) in ev.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mst_of_line() {
        let p = array![[0.0], [0.1], [5.0], [5.1]];
        let w = mst_weights(p.view());
        assert_eq!(w.len(), 3);
        assert!((w[2] - 4.9).abs() < 1e-15);
    }

    #[test]
    fn exhaustive_reference_values() {
        assert_eq!(exhaustive_bottleneck(&[(0.0, 2.0)], &[]), 1.0);
        assert_eq!(exhaustive_bottleneck(&[(0.0, 1.0)], &[(0.0, 1.5)]), 0.5);
        assert_eq!(exhaustive_bottleneck(&[], &[]), 0.0);
    }

    #[test]
    fn table_total() {
        let (_, total) = layer_table_oracle();
        assert!((total - 0.366414032622).abs() < 1e-11);
    }
}
