//! Geometry of ℤ^κ: orthotope neighbourhoods, their dilations and shells,
//! and the union cardinalities that enter every deviation bound.
//!
//! The lattice is infinite; only finite windows are ever materialised.
//! Every enumeration is in lexicographic order (first axis most
//! significant), which is also the row-major order of [`GridBox`].

use std::collections::HashSet;

use crate::error::{Error, Result};

/// A lattice coordinate.
pub type Coord = Vec<i64>;

/// Axis-aligned box `⊗ᵢ[−δᵢ, δᵢ]` given by its non-negative half-widths.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Orthotope {
    delta: Vec<u32>,
}

impl Orthotope {
    pub fn new(delta: Vec<u32>) -> Result<Self> {
        if delta.is_empty() {
            return Err(Error::Geometry("orthotope needs kappa >= 1".into()));
        }
        Ok(Self { delta })
    }

    /// Same half-width on every axis.
    pub fn cube(kappa: usize, half_width: u32) -> Result<Self> {
        Self::new(vec![half_width; kappa])
    }

    pub fn kappa(&self) -> usize {
        self.delta.len()
    }

    pub fn delta(&self) -> &[u32] {
        &self.delta
    }

    /// Half-widths of the dilation by `d`.
    pub fn dilated(&self, d: u64) -> Vec<i64> {
        self.delta.iter().map(|&w| w as i64 * d as i64).collect()
    }

    /// The box `V(d·δ, center)`.
    pub fn region(&self, d: u64, center: &[i64]) -> GridBox {
        debug_assert_eq!(center.len(), self.kappa());
        let widths = self.dilated(d);
        GridBox {
            lo: center.iter().zip(&widths).map(|(c, w)| c - w).collect(),
            hi: center.iter().zip(&widths).map(|(c, w)| c + w).collect(),
        }
    }

    /// Whether `t ∈ V(d·δ, center)`.
    pub fn contains(&self, d: u64, center: &[i64], t: &[i64]) -> bool {
        self.delta
            .iter()
            .zip(center.iter().zip(t))
            .all(|(&w, (c, x))| (x - c).unsigned_abs() <= w as u64 * d)
    }

    /// All points of `V(dilation·δ, center)` in lexicographic order.
    pub fn points(&self, dilation: u64, center: &[i64]) -> Vec<Coord> {
        self.region(dilation, center).iter().collect()
    }

    /// `∏ᵢ (2·d·δᵢ + 1)`, with overflow reported instead of wrapped.
    pub fn cardinality(&self, dilation: u64) -> Result<u64> {
        let overflow = || Error::CardinalityOverflow { dilation };
        self.delta.iter().try_fold(1u64, |acc, &w| {
            let side = (w as u64)
                .checked_mul(dilation)
                .and_then(|x| x.checked_mul(2))
                .and_then(|x| x.checked_add(1))
                .ok_or_else(overflow)?;
            acc.checked_mul(side).ok_or_else(overflow)
        })
    }

    /// `V(c·δ, center) \ V((c−1)·δ, center)` for `c ≥ 1`, lexicographic.
    pub fn shell_points(&self, c: u64, center: &[i64]) -> Vec<Coord> {
        assert!(c >= 1, "shells are indexed from 1");
        self.region(c, center)
            .iter()
            .filter(|t| !self.contains(c - 1, center, t))
            .collect()
    }

    /// Smallest `c` with `t ∈ V(c·δ, center)`, or `None` if no dilation
    /// reaches `t` (possible only along axes with `δᵢ = 0`).
    pub fn shell_index(&self, center: &[i64], t: &[i64]) -> Option<u64> {
        let mut c = 0u64;
        for (&w, (x, y)) in self.delta.iter().zip(center.iter().zip(t)) {
            let gap = (y - x).unsigned_abs();
            if w == 0 {
                if gap != 0 {
                    return None;
                }
            } else {
                c = c.max(gap.div_ceil(w as u64));
            }
        }
        Some(c)
    }
}

/// Inclusive integer box `[lo, hi]` with row-major linear indexing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl GridBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Geometry("box corners must share a positive dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::Geometry("box has lo > hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// Bounding box of a non-empty set of points.
    pub fn hull<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Coord>,
    {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut lo, mut hi) = (first.clone(), first.clone());
        for p in it {
            for a in 0..lo.len() {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some(Self { lo, hi })
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn kappa(&self) -> usize {
        self.lo.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a + 1) as usize)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major strides (last axis contiguous).
    pub fn strides(&self) -> Vec<usize> {
        let shape = self.shape();
        let mut strides = vec![1usize; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        strides
    }

    pub fn contains(&self, t: &[i64]) -> bool {
        t.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| a <= x && x <= b)
    }

    pub fn index_of(&self, t: &[i64]) -> Option<usize> {
        if !self.contains(t) {
            return None;
        }
        let strides = self.strides();
        Some(
            t.iter()
                .zip(&self.lo)
                .zip(&strides)
                .map(|((x, a), s)| (x - a) as usize * s)
                .sum(),
        )
    }

    /// Grow by `widths[a]` on both sides of every axis.
    pub fn dilate(&self, widths: &[i64]) -> Self {
        Self {
            lo: self.lo.iter().zip(widths).map(|(a, w)| a - w).collect(),
            hi: self.hi.iter().zip(widths).map(|(b, w)| b + w).collect(),
        }
    }

    /// Points in lexicographic (row-major) order.
    /// Smallest box containing both.
    pub fn hull_with(&self, other: &GridBox) -> Self {
        Self {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| *a.min(b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| *a.max(b)).collect(),
        }
    }

    pub fn iter(&self) -> GridIter<'_> {
        GridIter {
            grid: self,
            next: Some(self.lo.clone()),
        }
    }
}

pub struct GridIter<'a> {
    grid: &'a GridBox,
    next: Option<Coord>,
}

impl Iterator for GridIter<'_> {
    type Item = Coord;

    fn next(&mut self) -> Option<Coord> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut axis = succ.len();
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            if succ[axis] < self.grid.hi[axis] {
                succ[axis] += 1;
                self.next = Some(succ);
                break;
            }
            succ[axis] = self.grid.lo[axis];
        }
        Some(current)
    }
}

/// The measurement set 𝓘: distinct points, kept in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    points: Vec<Coord>,
}

impl IndexSet {
    pub fn new(mut points: Vec<Coord>) -> Result<Self> {
        let kappa = match points.first() {
            Some(p) if !p.is_empty() => p.len(),
            Some(_) => return Err(Error::Geometry("zero-dimensional point".into())),
            None => return Err(Error::Geometry("index set must be non-empty".into())),
        };
        if points.iter().any(|p| p.len() != kappa) {
            return Err(Error::Geometry("index set mixes dimensions".into()));
        }
        points.sort();
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Geometry("index set contains duplicate points".into()));
        }
        Ok(Self { points })
    }

    /// `{start, …, start + len − 1}` on ℤ.
    pub fn interval(start: i64, len: usize) -> Result<Self> {
        Self::new((0..len as i64).map(|i| vec![start + i]).collect())
    }

    /// Every point of the inclusive box `[lo, hi]`.
    pub fn boxed(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        Self::new(GridBox::new(lo, hi)?.iter().collect())
    }

    pub fn points(&self) -> &[Coord] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kappa(&self) -> usize {
        self.points[0].len()
    }
}

/// `⋃_{t∈sites} V(d·δ, t)` in lexicographic order.
pub fn union_points(sites: &[Coord], o: &Orthotope, d: u64) -> Vec<Coord> {
    let mut seen: HashSet<Coord> = HashSet::new();
    for s in sites {
        for p in o.region(d, s).iter() {
            seen.insert(p);
        }
    }
    let mut out: Vec<Coord> = seen.into_iter().collect();
    out.sort();
    out
}

/// `card(⋃_{t∈𝓘} V(d·δ, t))`: N₁ for `d = 1` over δ̄, N₂ for depth `d`.
pub fn union_count(index: &IndexSet, o: &Orthotope, d: u64) -> u64 {
    let mut seen: HashSet<Coord> = HashSet::new();
    for s in index.points() {
        seen.extend(o.region(d, s).iter());
    }
    seen.len() as u64
}
