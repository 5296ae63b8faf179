//! Harmonic grids, symmetry orbits and principal domains.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry acting on integer harmonic vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryGroup {
    /// Polyspectra: permutations of `(n_1, .., n_k, -sum n_j)` and global
    /// negation.
    Polyspectrum,
    /// Functions of `|n_1|, .., |n_k|` symmetric under exchange (the
    /// spin-boson trispectrum): coordinate permutations and sign flips.
    Dihedral,
}

/// Shape of the scanned integer grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// `|n_j| <= K` for every coordinate.
    Box,
    /// Additionally `|sum n_j| <= K`; invariant under the polyspectrum group.
    Hexagonal,
}

impl Truncation {
    pub fn contains(&self, indices: &[i64], radius: i64) -> bool {
        indices.iter().all(|n| n.abs() <= radius)
            && match self {
                Truncation::Box => true,
                Truncation::Hexagonal => indices.iter().sum::<i64>().abs() <= radius,
            }
    }
}

/// Harmonic vector `n`, frequencies `2 pi n_j / T`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HarmonicPoint {
    pub indices: Vec<i64>,
}

impl HarmonicPoint {
    pub fn new(indices: Vec<i64>) -> Self {
        HarmonicPoint { indices }
    }

    pub fn order(&self) -> usize {
        self.indices.len()
    }

    pub fn frequencies(&self, period: f64) -> Vec<f64> {
        self.indices.iter().map(|&n| 2.0 * PI * n as f64 / period).collect()
    }

    /// `n_1;n_2;..` for tables.
    pub fn key(&self) -> String {
        self.indices.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";")
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == items.len() {
            out.push(items.clone());
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            rec(items, k + 1, out);
            items.swap(k, i);
        }
    }
    let mut out = Vec::new();
    rec(&mut (0..n).collect(), 0, &mut out);
    out
}

/// All images of `indices` under `group`, one per group element (with
/// repeats).
pub fn group_images(indices: &[i64], group: SymmetryGroup) -> Vec<Vec<i64>> {
    let n = indices.len();
    let mut out = Vec::new();
    match group {
        SymmetryGroup::Polyspectrum => {
            let mut ext = indices.to_vec();
            ext.push(-indices.iter().sum::<i64>());
            for p in permutations(n + 1) {
                let img: Vec<i64> = p[..n].iter().map(|&i| ext[i]).collect();
                out.push(img.iter().map(|v| -v).collect());
                out.push(img);
            }
        }
        SymmetryGroup::Dihedral => {
            for p in permutations(n) {
                for mask in 0..1u32 << n {
                    out.push(
                        p.iter()
                            .enumerate()
                            .map(|(j, &i)| if mask >> j & 1 == 1 { -indices[i] } else { indices[i] })
                            .collect(),
                    );
                }
            }
        }
    }
    out
}

/// Number of elements of the group acting on order-`n` vectors.
pub fn group_order(order: usize, group: SymmetryGroup) -> usize {
    let fact = |k: usize| (1..=k).product::<usize>();
    match group {
        SymmetryGroup::Polyspectrum => 2 * fact(order + 1),
        SymmetryGroup::Dihedral => fact(order) << order,
    }
}

/// Distinct images of `indices`, sorted.
pub fn symmetry_orbit(indices: &[i64], group: SymmetryGroup) -> Vec<Vec<i64>> {
    let set: BTreeSet<Vec<i64>> = group_images(indices, group).into_iter().collect();
    set.into_iter().collect()
}

/// Orbit representative: least `sum |n_j|`, then lexicographically greatest.
/// For order 2 this lands in the octant `0 <= n_2 <= n_1`.
pub fn canonical_point(indices: &[i64], group: SymmetryGroup) -> Vec<i64> {
    group_images(indices, group)
        .into_iter()
        .min_by(|a, b| {
            let sa: i64 = a.iter().map(|v| v.abs()).sum();
            let sb: i64 = b.iter().map(|v| v.abs()).sum();
            sa.cmp(&sb).then_with(|| b.cmp(a))
        })
        .expect("group is non-empty")
}

/// Canonical points of one order with their multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalDomainSet {
    pub order: usize,
    pub radius: i64,
    pub group: SymmetryGroup,
    pub truncation: Truncation,
    pub points: Vec<HarmonicPoint>,
    /// Full orbit cardinality: the number of comb terms sharing the value.
    pub multiplicity: Vec<usize>,
    /// Orbit points inside the scanned grid.
    pub grid_count: Vec<usize>,
}

impl PrincipalDomainSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of scanned grid points.
    pub fn grid_size(&self) -> usize {
        self.grid_count.iter().sum()
    }

    /// Sum of full orbit sizes.
    pub fn expanded_size(&self) -> usize {
        self.multiplicity.iter().sum()
    }

    /// Every grid point, regenerated from the canonical points.
    pub fn expand(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        for p in &self.points {
            for v in symmetry_orbit(&p.indices, self.group) {
                if self.truncation.contains(&v, self.radius) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Drops canonical points for which `keep` is false.
    pub fn filter(mut self, keep: impl Fn(&HarmonicPoint) -> bool) -> Self {
        let mut i = 0;
        while i < self.points.len() {
            if keep(&self.points[i]) {
                i += 1;
            } else {
                self.points.remove(i);
                self.multiplicity.remove(i);
                self.grid_count.remove(i);
            }
        }
        self
    }
}

fn scan(order: usize, radius: i64, visit: &mut impl FnMut(&[i64])) {
    let mut v = vec![-radius; order];
    loop {
        visit(&v);
        let mut j = 0;
        loop {
            if j == order {
                return;
            }
            if v[j] < radius {
                v[j] += 1;
                break;
            }
            v[j] = -radius;
            j += 1;
        }
    }
}

/// Scans the truncated grid and groups its points into orbits.
pub fn enumerate_principal(
    order: usize,
    radius: i64,
    group: SymmetryGroup,
    truncation: Truncation,
) -> Result<PrincipalDomainSet> {
    if !(1..=4).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    if radius < 0 {
        return Err(Error::InvalidParameter(format!(
            "truncation radius must be >= 0, got {radius}"
        )));
    }
    let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    scan(order, radius, &mut |v| {
        if truncation.contains(v, radius) {
            *counts.entry(canonical_point(v, group)).or_default() += 1;
        }
    });
    let mut points = Vec::with_capacity(counts.len());
    let mut multiplicity = Vec::with_capacity(counts.len());
    let mut grid_count = Vec::with_capacity(counts.len());
    for (k, c) in counts {
        multiplicity.push(symmetry_orbit(&k, group).len());
        points.push(HarmonicPoint::new(k));
        grid_count.push(c);
    }
    Ok(PrincipalDomainSet {
        order,
        radius,
        group,
        truncation,
        points,
        multiplicity,
        grid_count,
    })
}
