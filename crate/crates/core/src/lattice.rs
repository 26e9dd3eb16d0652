//! Lattice-compatible boxes made of half-open unit cells `[j, j+1)^d`.

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Union of the unit cells `Λ_j = [j, j+1)^d` with `lo ≤ j < hi` componentwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return invalid("box corners must be nonempty and of equal dimension");
        }
        if lo.iter().zip(&hi).any(|(l, h)| h <= l) {
            return invalid(format!("box needs hi > lo on every axis, got lo={lo:?} hi={hi:?}"));
        }
        Ok(Self { lo, hi })
    }

    /// `[0, side)^dim`.
    pub fn cube(dim: usize, side: i64) -> Result<Self> {
        Self::new(vec![0; dim], vec![side; dim])
    }

    /// The single cell `Λ_0`.
    pub fn unit(dim: usize) -> Self {
        Self { lo: vec![0; dim], hi: vec![1; dim] }
    }

    /// Cells with `|j| < l` in max norm, i.e. `[-(l-1), l)^dim`.
    pub fn centered_cube(dim: usize, l: i64) -> Result<Self> {
        Self::new(vec![1 - l; dim], vec![l; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
    pub fn lo(&self) -> &[i64] {
        &self.lo
    }
    pub fn hi(&self) -> &[i64] {
        &self.hi
    }
    pub fn sides(&self) -> Vec<i64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }
    pub fn cell_count(&self) -> usize {
        self.sides().iter().map(|&s| s as usize).product()
    }
    /// Lebesgue volume, equal to the cell count.
    pub fn volume(&self) -> f64 {
        self.cell_count() as f64
    }
    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (*l as f64 + *h as f64)).collect()
    }

    pub fn contains_cell(&self, j: &[i64]) -> bool {
        j.len() == self.dim() && j.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| x >= l && x < h)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *x >= *l as f64 && *x < *h as f64)
    }

    /// Max-norm distance from `x` to the closed box (0 inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut d = 0.0f64;
        for ((xi, l), h) in x.iter().zip(&self.lo).zip(&self.hi) {
            let (l, h) = (*l as f64, *h as f64);
            let di = if *xi < l { l - xi } else if *xi > h { xi - h } else { 0.0 };
            d = d.max(di);
        }
        d
    }

    /// Cell containing `x` under the half-open convention.
    pub fn cell_of(x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| v.floor() as i64).collect()
    }

    /// Linear index of a cell, axis 0 fastest.
    pub fn cell_index(&self, j: &[i64]) -> Option<usize> {
        if !self.contains_cell(j) {
            return None;
        }
        let mut idx = 0usize;
        let mut stride = 1usize;
        for i in 0..self.dim() {
            idx += (j[i] - self.lo[i]) as usize * stride;
            stride *= (self.hi[i] - self.lo[i]) as usize;
        }
        Some(idx)
    }

    pub fn cell_at(&self, mut idx: usize) -> Vec<i64> {
        let mut j = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let s = (self.hi[i] - self.lo[i]) as usize;
            j.push(self.lo[i] + (idx % s) as i64);
            idx /= s;
        }
        j
    }

    /// Cells in linear-index order.
    pub fn cells(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.cell_count()).map(move |i| self.cell_at(i))
    }

    /// Box grown by `r` cells on every side.
    pub fn padded(&self, r: i64) -> LatticeBox {
        LatticeBox {
            lo: self.lo.iter().map(|l| l - r).collect(),
            hi: self.hi.iter().map(|h| h + r).collect(),
        }
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }
}

impl std::fmt::Display for LatticeBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}..{:?}", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let b = LatticeBox::new(vec![-2, 1], vec![3, 4]).unwrap();
        assert_eq!(b.cell_count(), 15);
        for (i, j) in b.cells().enumerate() {
            assert_eq!(b.cell_index(&j), Some(i));
        }
    }

    #[test]
    fn rejects_empty_axis() {
        assert!(LatticeBox::new(vec![0, 0], vec![1, 0]).is_err());
    }

    #[test]
    fn half_open_membership() {
        let b = LatticeBox::cube(2, 2).unwrap();
        assert!(b.contains_point(&[1.0, 0.0]));
        assert!(!b.contains_point(&[2.0, 0.0]));
        assert_eq!(LatticeBox::cell_of(&[1.0, 0.0]), vec![1, 0]);
    }

    #[test]
    fn distance_to_box() {
        let b = LatticeBox::cube(2, 2).unwrap();
        assert_eq!(b.distance(&[1.0, 1.0]), 0.0);
        assert_eq!(b.distance(&[-1.5, 3.0]), 1.5);
    }
}
