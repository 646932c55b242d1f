use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};
use serde::ser::{SerializeSeq, SerializeTuple};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::distance;

pub const MAX_POINTS_DIM0: usize = 256;
pub const MAX_POINTS_DIM1: usize = 128;

/// One persistence pair. `death` is `f64::INFINITY` for bars alive at the cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub birth: f64,
    pub death: f64,
    pub dim: usize,
}

impl Bar {
    pub fn is_infinite(&self) -> bool {
        self.death.is_infinite()
    }

    pub fn lifetime(&self) -> f64 {
        self.death - self.birth
    }
}

impl Serialize for Bar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(3)?;
        t.serialize_element(&self.birth)?;
        if self.is_infinite() {
            t.serialize_element("inf")?;
        } else {
            t.serialize_element(&self.death)?;
        }
        t.serialize_element(&self.dim)?;
        t.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    bars: Vec<Bar>,
    max_filtration: f64,
}

impl Serialize for PersistenceDiagram {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.bars.len()))?;
        for b in &self.bars {
            seq.serialize_element(b)?;
        }
        seq.end()
    }
}

fn bar_order(a: &Bar, b: &Bar) -> Ordering {
    a.dim
        .cmp(&b.dim)
        .then(a.birth.total_cmp(&b.birth))
        .then(a.death.total_cmp(&b.death))
}

impl PersistenceDiagram {
    /// Builds a diagram from explicit bars, e.g. for comparisons against
    /// reference data.
    pub fn from_bars(mut bars: Vec<Bar>, max_filtration: f64) -> Result<Self> {
        for b in &bars {
            if !(b.birth.is_finite() && b.birth >= 0.0) || b.death.is_nan() || b.death < b.birth {
                return Err(Error::precondition(format!(
                    "invalid bar ({}, {}) in dimension {}",
                    b.birth, b.death, b.dim
                )));
            }
        }
        bars.sort_by(bar_order);
        Ok(Self { bars, max_filtration })
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn max_filtration(&self) -> f64 {
        self.max_filtration
    }

    pub fn in_dim(&self, dim: usize) -> impl Iterator<Item = &Bar> {
        self.bars.iter().filter(move |b| b.dim == dim)
    }

    pub fn max_dim(&self) -> usize {
        self.bars.iter().map(|b| b.dim).max().unwrap_or(0)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn pairwise_distances(points: ArrayView2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = distance(points.row(i), points.row(j));
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Symmetric difference of two columns kept in descending order.
fn add_columns(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Greater => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Less => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Vietoris–Rips persistence in dimensions `0..=max_dim` (`max_dim ≤ 1`).
///
/// `max_filtration` defaults to the cloud diameter and `max_points` to
/// [`MAX_POINTS_DIM0`] / [`MAX_POINTS_DIM1`]. Bars of zero length are not
/// reported.
pub fn rips_persistence(
    points: ArrayView2<f64>,
    max_dim: usize,
    max_filtration: Option<f64>,
    max_points: Option<usize>,
) -> Result<PersistenceDiagram> {
    if max_dim > 1 {
        return Err(Error::Config(format!(
            "homology is computed up to dimension 1, got {max_dim}"
        )));
    }
    let n = points.nrows();
    let cap = max_points.unwrap_or(if max_dim == 0 { MAX_POINTS_DIM0 } else { MAX_POINTS_DIM1 });
    if n > cap {
        return Err(Error::TooManyPoints { got: n, cap });
    }
    if n < 2 {
        return Err(Error::precondition(format!(
            "persistence needs at least 2 points, got {n}"
        )));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::precondition("point cloud contains non-finite values"));
    }
    let dist = pairwise_distances(points);
    let diameter = dist.iter().copied().fold(0.0, f64::max);
    let max_filtration = match max_filtration {
        None => diameter,
        Some(c) if c.is_finite() && c >= 0.0 => c,
        Some(c) => return Err(Error::Config(format!("max_filtration must be finite and ≥ 0, got {c}"))),
    };

    let mut edges: Vec<(f64, u32, u32)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if dist[[i, j]] <= max_filtration {
                edges.push((dist[[i, j]], i as u32, j as u32));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut bars = Vec::new();
    let mut uf = UnionFind::new(n);
    let mut positive = vec![false; edges.len()];
    for (e, &(f, i, j)) in edges.iter().enumerate() {
        if uf.union(i as usize, j as usize) {
            if f > 0.0 {
                bars.push(Bar {
                    birth: 0.0,
                    death: f,
                    dim: 0,
                });
            }
        } else {
            positive[e] = true;
        }
    }
    let components = (0..n).filter(|&i| uf.find(i) == i).count();
    bars.extend((0..components).map(|_| Bar {
        birth: 0.0,
        death: f64::INFINITY,
        dim: 0,
    }));

    if max_dim == 1 {
        bars.extend(one_dimensional_bars(n, &dist, &edges, &positive, max_filtration));
    }
    PersistenceDiagram::from_bars(bars, max_filtration)
}

fn one_dimensional_bars(
    n: usize,
    dist: &Array2<f64>,
    edges: &[(f64, u32, u32)],
    positive: &[bool],
    max_filtration: f64,
) -> Vec<Bar> {
    let mut edge_index = Array2::from_elem((n, n), u32::MAX);
    for (e, &(_, i, j)) in edges.iter().enumerate() {
        edge_index[[i as usize, j as usize]] = e as u32;
        edge_index[[j as usize, i as usize]] = e as u32;
    }
    let mut triangles: Vec<(f64, u32, u32, u32)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if edge_index[[i, j]] == u32::MAX {
                continue;
            }
            for k in (j + 1)..n {
                if edge_index[[i, k]] == u32::MAX || edge_index[[j, k]] == u32::MAX {
                    continue;
                }
                let f = dist[[i, j]].max(dist[[i, k]]).max(dist[[j, k]]);
                if f <= max_filtration {
                    triangles.push((f, i as u32, j as u32, k as u32));
                }
            }
        }
    }
    triangles.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });

    let cycles = positive.iter().filter(|&&p| p).count();
    let mut reduced: Vec<Option<Vec<u32>>> = vec![None; edges.len()];
    let mut killed = vec![false; edges.len()];
    let mut paired = 0;
    let mut bars = Vec::new();
    for &(f, i, j, k) in &triangles {
        if paired == cycles {
            break;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        let mut col = vec![edge_index[[i, j]], edge_index[[i, k]], edge_index[[j, k]]];
        col.sort_unstable_by(|a, b| b.cmp(a));
        while let Some(&low) = col.first() {
            match &reduced[low as usize] {
                Some(other) => col = add_columns(&col, other),
                None => break,
            }
        }
        if let Some(&low) = col.first() {
            let birth = edges[low as usize].0;
            if f > birth {
                bars.push(Bar {
                    birth,
                    death: f,
                    dim: 1,
                });
            }
            killed[low as usize] = true;
            reduced[low as usize] = Some(col);
            paired += 1;
        }
    }
    for (e, &(f, _, _)) in edges.iter().enumerate() {
        if positive[e] && !killed[e] {
            bars.push(Bar {
                birth: f,
                death: f64::INFINITY,
                dim: 1,
            });
        }
    }
    bars
}

/// Finite lifetimes `d − b` of all bars, descending.
pub fn lifetimes(diagram: &PersistenceDiagram) -> Vec<f64> {
    let mut l: Vec<f64> = diagram
        .bars()
        .iter()
        .filter(|b| !b.is_infinite())
        .map(Bar::lifetime)
        .collect();
    l.sort_by(|a, b| b.total_cmp(a));
    l
}

/// Largest finite lifetime, 0 when there is none.
pub fn max_lifetime(diagram: &PersistenceDiagram) -> f64 {
    lifetimes(diagram).first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_clusters_on_a_line() {
        let p = array![[0.0], [0.1], [5.0], [5.1]];
        let d = rips_persistence(p.view(), 0, None, None).unwrap();
        let finite: Vec<f64> = d.in_dim(0).filter(|b| !b.is_infinite()).map(|b| b.death).collect();
        assert_eq!(finite.len(), 3);
        assert!((finite[0] - 0.1).abs() < 1e-15);
        assert!((finite[2] - 4.9).abs() < 1e-15);
        assert_eq!(d.in_dim(0).filter(|b| b.is_infinite()).count(), 1);
        let l = lifetimes(&d);
        assert_eq!(l.len(), 3);
        assert!(l[0] > l[1]);
    }

    #[test]
    fn unit_square_has_one_loop() {
        let p = array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let d = rips_persistence(p.view(), 1, None, None).unwrap();
        let h1: Vec<&Bar> = d.in_dim(1).collect();
        assert_eq!(h1.len(), 1);
        assert!((h1[0].birth - 1.0).abs() < 1e-12);
        assert!((h1[0].death - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_points_single_bar() {
        let p = Array2::from_elem((5, 3), 0.7);
        let d = rips_persistence(p.view(), 1, None, None).unwrap();
        assert_eq!(d.bars().len(), 1);
        assert!(d.bars()[0].is_infinite());
    }

    #[test]
    fn cap_truncates_and_sizes_are_checked() {
        let p = array![[0.0], [1.0], [10.0]];
        let d = rips_persistence(p.view(), 0, Some(2.0), None).unwrap();
        assert_eq!(d.in_dim(0).filter(|b| b.is_infinite()).count(), 2);
        let big = Array2::<f64>::zeros((129, 2));
        assert!(matches!(
            rips_persistence(big.view(), 1, None, None),
            Err(Error::TooManyPoints { got: 129, cap: 128 })
        ));
        assert!(rips_persistence(big.view(), 0, None, None).is_ok());
        let one = Array2::<f64>::zeros((1, 2));
        assert!(matches!(
            rips_persistence(one.view(), 0, None, None),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn serializes_as_triples() {
        let d = PersistenceDiagram::from_bars(
            vec![
                Bar {
                    birth: 0.0,
                    death: f64::INFINITY,
                    dim: 0,
                },
                Bar {
                    birth: 0.0,
                    death: 0.5,
                    dim: 0,
                },
            ],
            1.0,
        )
        .unwrap();
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"[[0.0,0.5,0],[0.0,"inf",0]]"#);
    }
}
