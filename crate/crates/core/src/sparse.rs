//! Compressed-row symmetric matrices and bandwidth-reducing orderings.

use crate::error::{invalid, Error, Result};
use nalgebra::DMatrix;
use std::collections::VecDeque;
use std::io::Write;

/// Symmetric matrix in CSR form with both triangles stored, columns sorted per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SparseSym {
    /// Builds from `(i, j, v)` entries; an off-diagonal entry is mirrored to `(j, i)`.
    /// Repeated positions are summed.
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut all: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * entries.len());
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return invalid(format!("entry ({i}, {j}) outside a {n}×{n} matrix"));
            }
            if !v.is_finite() {
                return invalid(format!("non-finite entry at ({i}, {j})"));
            }
            all.push((i, j, v));
            if i != j {
                all.push((j, i, v));
            }
        }
        all.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(all.len());
        let mut val: Vec<f64> = Vec::with_capacity(all.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in all {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col, val })
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        let e: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_entries(d.len(), &e)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n]).expect("identity is valid")
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return invalid("matrix is not square");
        }
        let mut e = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..=i {
                if a[(i, j)] != a[(j, i)] {
                    return invalid("matrix is not symmetric");
                }
                if a[(i, j)] != 0.0 || i == j {
                    e.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_entries(a.nrows(), &e)
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col[r.clone()].binary_search(&j) {
            Ok(p) => self.val[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[p] * x[self.col[p]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `⟨x, A x⟩`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        crate::stats::kahan_sum(self.apply(x).iter().zip(x).map(|(a, b)| a * b))
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let mut d = 0.0;
            let mut r = 0.0;
            for (j, v) in self.row(i) {
                if j == i {
                    d = v;
                } else {
                    r += v.abs();
                }
            }
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    /// Infinity norm, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_offdiagonal(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j != i {
                    m = m.max(v);
                }
            }
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// `A + c·I`.
    pub fn shifted(&self, c: f64) -> SparseSym {
        let mut e: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() / 2 + self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j <= i {
                    e.push((i, j, v));
                }
            }
            e.push((i, i, c));
        }
        Self::from_entries(self.n, &e).expect("shift of a valid matrix")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// Half-bandwidth under `perm` (`perm[new] = old`).
    pub fn bandwidth(&self, perm: Option<&[usize]>) -> usize {
        let inv = perm.map(inverse_permutation);
        let mut bw = 0;
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                let (a, b) = match &inv {
                    Some(p) => (p[i], p[j]),
                    None => (i, j),
                };
                bw = bw.max(a.abs_diff(b));
            }
        }
        bw
    }

    /// Reverse Cuthill–McKee ordering, started from a pseudo-peripheral node of each component.
    pub fn rcm(&self) -> Vec<usize> {
        let n = self.n;
        let degree: Vec<usize> = (0..n).map(|i| self.row(i).filter(|&(j, _)| j != i).count()).collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut level = vec![usize::MAX; n];
        for s in 0..n {
            if visited[s] {
                continue;
            }
            let root = self.pseudo_peripheral(s, &degree, &mut level);
            let mut queue = VecDeque::from([root]);
            visited[root] = true;
            let mut nbrs = Vec::new();
            while let Some(v) = queue.pop_front() {
                order.push(v);
                nbrs.clear();
                nbrs.extend(self.row(v).map(|(j, _)| j).filter(|&j| j != v && !visited[j]));
                nbrs.sort_by_key(|&j| (degree[j], j));
                for &j in &nbrs {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        order
    }

    fn bfs_levels(&self, root: usize, level: &mut [usize]) -> (usize, Vec<usize>) {
        let mut touched = vec![root];
        level[root] = 0;
        let mut queue = VecDeque::from([root]);
        let mut depth = 0;
        while let Some(v) = queue.pop_front() {
            depth = depth.max(level[v]);
            for (j, _) in self.row(v) {
                if level[j] == usize::MAX {
                    level[j] = level[v] + 1;
                    touched.push(j);
                    queue.push_back(j);
                }
            }
        }
        let last: Vec<usize> = touched.iter().copied().filter(|&v| level[v] == depth).collect();
        for &v in &touched {
            level[v] = usize::MAX;
        }
        (depth, last)
    }

    fn pseudo_peripheral(&self, start: usize, degree: &[usize], level: &mut [usize]) -> usize {
        let mut root = start;
        let (mut depth, mut last) = self.bfs_levels(root, level);
        for _ in 0..8 {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (d2, l2) = self.bfs_levels(cand, level);
            if d2 <= depth {
                break;
            }
            root = cand;
            depth = d2;
            last = l2;
        }
        root
    }

    /// Coordinate text export, one `row col value` line per stored entry (0-based).
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "% {} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.val.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Solver("matrix has non-finite entries".into()))
        }
    }
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}
