use serde::Serialize;

use super::rips::PersistenceDiagram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bottleneck {
    /// `f64::INFINITY` when the infinite bars cannot be matched.
    pub distance: f64,
    pub infinite_mismatch: bool,
}

fn linf(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

fn diagonal_cost(p: (f64, f64)) -> f64 {
    (p.1 - p.0) / 2.0
}

/// Bottleneck distance between the bars of dimension `dim`.
pub fn bottleneck_distance(a: &PersistenceDiagram, b: &PersistenceDiagram, dim: usize) -> Bottleneck {
    let split = |d: &PersistenceDiagram| {
        let mut finite = Vec::new();
        let mut infinite = Vec::new();
        for bar in d.in_dim(dim) {
            if bar.is_infinite() {
                infinite.push(bar.birth);
            } else {
                finite.push((bar.birth, bar.death));
            }
        }
        infinite.sort_by(f64::total_cmp);
        (finite, infinite)
    };
    let (fa, ia) = split(a);
    let (fb, ib) = split(b);
    if ia.len() != ib.len() {
        return Bottleneck {
            distance: f64::INFINITY,
            infinite_mismatch: true,
        };
    }
    let essential = ia.iter().zip(&ib).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Bottleneck {
        distance: finite_bottleneck(&fa, &fb).max(essential),
        infinite_mismatch: false,
    }
}

/// Bottleneck distance between two finite point sets `(birth, death)`.
pub fn finite_bottleneck(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut candidates = vec![0.0];
    candidates.extend(a.iter().map(|&p| diagonal_cost(p)));
    candidates.extend(b.iter().map(|&p| diagonal_cost(p)));
    for &p in a {
        candidates.extend(b.iter().map(|&q| linf(p, q)));
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // the largest candidate is always feasible: every point can go to the
    // diagonal at a cost that is itself a candidate
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(a, b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Whether a perfect matching of cost ≤ `delta` exists. Left side: points
/// of `a`, then diagonal copies of `b`. Right side: points of `b`, then
/// diagonal copies of `a`.
fn feasible(a: &[(f64, f64)], b: &[(f64, f64)], delta: f64) -> bool {
    let (n, m) = (a.len(), b.len());
    let mut adj: Vec<Vec<usize>> = Vec::with_capacity(n + m);
    for (i, &p) in a.iter().enumerate() {
        let mut row: Vec<usize> = (0..m).filter(|&j| linf(p, b[j]) <= delta).collect();
        if diagonal_cost(p) <= delta {
            row.push(m + i);
        }
        adj.push(row);
    }
    for (j, &q) in b.iter().enumerate() {
        let mut row = Vec::with_capacity(n + 1);
        if diagonal_cost(q) <= delta {
            row.push(j);
        }
        row.extend(m..m + n);
        adj.push(row);
    }
    let mut matched_right: Vec<Option<usize>> = vec![None; n + m];
    for left in 0..n + m {
        let mut seen = vec![false; n + m];
        if !augment(left, &adj, &mut seen, &mut matched_right) {
            return false;
        }
    }
    true
}

fn augment(left: usize, adj: &[Vec<usize>], seen: &mut [bool], matched_right: &mut [Option<usize>]) -> bool {
    for &r in &adj[left] {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        let free = match matched_right[r] {
            None => true,
            Some(other) => augment(other, adj, seen, matched_right),
        };
        if free {
            matched_right[r] = Some(left);
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityGate {
    pub delta: f64,
    pub epsilon: f64,
    pub verdict: StabilityVerdict,
    pub infinite_mismatch: bool,
}

/// `δ = max_dim d_B(A, B)`; stable iff `δ ≤ ε`.
pub fn ph_stability_gate(a: &PersistenceDiagram, b: &PersistenceDiagram, epsilon: f64) -> Result<StabilityGate> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::precondition(format!(
            "stability threshold must be > 0, got {epsilon}"
        )));
    }
    let top = a.max_dim().max(b.max_dim());
    let mut delta = 0.0f64;
    let mut mismatch = false;
    for dim in 0..=top {
        let d = bottleneck_distance(a, b, dim);
        delta = delta.max(d.distance);
        mismatch |= d.infinite_mismatch;
    }
    let verdict = if delta <= epsilon {
        StabilityVerdict::Stable
    } else {
        StabilityVerdict::Unstable
    };
    Ok(StabilityGate {
        delta,
        epsilon,
        verdict,
        infinite_mismatch: mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Bar;

    fn diagram(points: &[(f64, f64)]) -> PersistenceDiagram {
        let bars = points
            .iter()
            .map(|&(birth, death)| Bar { birth, death, dim: 0 })
            .collect();
        PersistenceDiagram::from_bars(bars, 10.0).unwrap()
    }

    #[test]
    fn reference_values() {
        let a = diagram(&[(0.0, 2.0)]);
        let empty = diagram(&[]);
        assert_eq!(bottleneck_distance(&a, &a, 0).distance, 0.0);
        assert_eq!(bottleneck_distance(&a, &empty, 0).distance, 1.0);
        let b = diagram(&[(0.0, 1.0)]);
        let c = diagram(&[(0.0, 1.5)]);
        assert_eq!(bottleneck_distance(&b, &c, 0).distance, 0.5);
    }

    #[test]
    fn infinite_bar_counts_must_match() {
        let a = diagram(&[(0.0, f64::INFINITY)]);
        let b = diagram(&[(0.0, f64::INFINITY), (0.0, f64::INFINITY)]);
        let d = bottleneck_distance(&a, &b, 0);
        assert!(d.infinite_mismatch);
        assert!(d.distance.is_infinite());
        let c = diagram(&[(0.25, f64::INFINITY)]);
        assert_eq!(bottleneck_distance(&a, &c, 0).distance, 0.25);
    }

    #[test]
    fn gate_is_closed() {
        let b = diagram(&[(0.0, 1.0)]);
        let c = diagram(&[(0.0, 1.5)]);
        assert_eq!(
            ph_stability_gate(&b, &c, 0.4).unwrap().verdict,
            StabilityVerdict::Unstable
        );
        assert_eq!(
            ph_stability_gate(&b, &c, 0.5).unwrap().verdict,
            StabilityVerdict::Stable
        );
        assert!(ph_stability_gate(&b, &c, 0.0).is_err());
    }
}
