//! Cell-centred finite-difference grids on lattice boxes.

use crate::error::{invalid, Result};
use crate::lattice::LatticeBox;
use serde::{Deserialize, Serialize};

/// Nodes at `lo + (k + 1/2)·a` with `a = 1/n_per_cell`, axis 0 fastest.
///
/// Every unit cell holds `n_per_cell^d` nodes in the same relative positions, so
/// periodic fields sampled on one cell extend exactly to any box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    bbox: LatticeBox,
    n_per_cell: usize,
}

impl Grid {
    pub fn new(bbox: LatticeBox, n_per_cell: usize) -> Result<Self> {
        if n_per_cell < 2 {
            return invalid(format!("n_per_cell must be ≥ 2, got {n_per_cell}"));
        }
        Ok(Self { bbox, n_per_cell })
    }

    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }
    pub fn n_per_cell(&self) -> usize {
        self.n_per_cell
    }
    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }
    pub fn spacing(&self) -> f64 {
        1.0 / self.n_per_cell as f64
    }
    /// Volume element `a^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }
    pub fn shape(&self) -> Vec<usize> {
        self.bbox.sides().iter().map(|&s| s as usize * self.n_per_cell).collect()
    }
    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn strides(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.dim());
        let mut acc = 1;
        for n in self.shape() {
            s.push(acc);
            acc *= n;
        }
        s
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for (o, n) in out.iter_mut().zip(self.shape()) {
            *o = idx % n;
            idx /= n;
        }
    }

    pub fn linear_index(&self, k: &[usize]) -> usize {
        k.iter().zip(self.strides()).map(|(a, b)| a * b).sum()
    }

    /// Coordinate of node `k_i` on axis `i`.
    pub fn axis_coord(&self, axis: usize, k: i64) -> f64 {
        self.bbox.lo()[axis] as f64 + (k as f64 + 0.5) * self.spacing()
    }

    pub fn node_coord(&self, idx: usize, out: &mut [f64]) {
        let shape = self.shape();
        let mut r = idx;
        for i in 0..self.dim() {
            let k = r % shape[i];
            r /= shape[i];
            out[i] = self.axis_coord(i, k as i64);
        }
    }

    pub fn coords(&self) -> Vec<Vec<f64>> {
        let mut x = vec![0.0; self.dim()];
        (0..self.len())
            .map(|i| {
                self.node_coord(i, &mut x);
                x.clone()
            })
            .collect()
    }

    /// Index on the unit-cell grid of the node with box-local index `k_i + offset_i`
    /// (offsets may leave the box; the periodic extension decides).
    pub fn unit_cell_index(&self, k: &[usize], axis: Option<(usize, i64)>) -> usize {
        let n = self.n_per_cell as i64;
        let mut idx = 0usize;
        let mut stride = 1usize;
        for i in 0..self.dim() {
            let mut g = self.bbox.lo()[i] * n + k[i] as i64;
            if let Some((ax, off)) = axis {
                if ax == i {
                    g += off;
                }
            }
            idx += g.rem_euclid(n) as usize * stride;
            stride *= self.n_per_cell;
        }
        idx
    }

    /// Node count of the unit-cell grid, `n_per_cell^d`.
    pub fn unit_cell_len(&self) -> usize {
        self.n_per_cell.pow(self.dim() as u32)
    }

    /// The grid on the single cell `Λ_0` with the same spacing.
    pub fn unit_cell(&self) -> Grid {
        Grid { bbox: LatticeBox::unit(self.dim()), n_per_cell: self.n_per_cell }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_layout() {
        let g = Grid::new(LatticeBox::new(vec![-1, 0], vec![1, 1]).unwrap(), 2).unwrap();
        assert_eq!(g.shape(), vec![4, 2]);
        let mut x = [0.0; 2];
        g.node_coord(0, &mut x);
        assert_eq!(x, [-0.75, 0.25]);
        g.node_coord(7, &mut x);
        assert_eq!(x, [0.75, 0.75]);
    }

    #[test]
    fn periodic_index_wraps() {
        let g = Grid::new(LatticeBox::new(vec![-1], vec![1]).unwrap(), 4).unwrap();
        assert_eq!(g.unit_cell_index(&[0], None), 0);
        assert_eq!(g.unit_cell_index(&[5], None), 1);
        assert_eq!(g.unit_cell_index(&[0], Some((0, -1))), 3);
        assert_eq!(g.unit_cell_index(&[7], Some((0, 1))), 0);
    }

    #[test]
    fn rejects_coarse_grid() {
        assert!(Grid::new(LatticeBox::unit(1), 1).is_err());
    }
}
