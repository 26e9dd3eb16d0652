//! Eigenvalue counting by Sylvester inertia and low-lying eigenpairs by shift-invert Lanczos.

use crate::error::{Error, Result};
use crate::rng::{indexed_rng, stream};
use crate::sparse::{inverse_permutation, SparseSym};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest dimension handled by the dense oracle.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    Inertia,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    pub energy: f64,
    pub count: usize,
    pub method: CountMethod,
    /// Energy actually factorized when a pivot breakdown forced a perturbation.
    pub jittered: Option<f64>,
}

/// `LDLᵀ` of a symmetric band matrix, rows stored left to right as `[i-bw, i]`.
#[derive(Debug, Clone)]
pub struct BandedLdl {
    n: usize,
    bw: usize,
    lower: Vec<f64>,
    d: Vec<f64>,
    perm: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Breakdown {
    row: usize,
}

impl BandedLdl {
    fn factor(a: &SparseSym, shift: f64, perm: &[usize], inv: &[usize], bw: usize) -> std::result::Result<Self, Breakdown> {
        let n = a.dim();
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (inew, &iold) in perm.iter().enumerate() {
            for (jold, v) in a.row(iold) {
                let jnew = inv[jold];
                if jnew <= inew {
                    band[inew * w + (jnew + bw - inew)] = v;
                }
            }
            band[inew * w + bw] -= shift;
        }
        let scale = a.norm_inf().max(shift.abs()).max(f64::MIN_POSITIVE);
        let tiny = scale * 1e-14;
        let mut d = vec![0.0; n];
        let mut u = vec![0.0; w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let (done, rest) = band.split_at_mut(i * w);
            let row_i = &mut rest[..w];
            for j in lo..i {
                let row_j = &done[j * w..(j + 1) * w];
                let p0 = lo.max(j.saturating_sub(bw));
                let mut s = row_i[j + bw - i];
                for p in p0..j {
                    s -= u[p - lo] * row_j[p + bw - j];
                }
                u[j - lo] = s;
                row_i[j + bw - i] = s / d[j];
            }
            let mut di = row_i[bw];
            for j in lo..i {
                di -= u[j - lo] * row_i[j + bw - i];
            }
            if di.abs() <= tiny || !di.is_finite() {
                return Err(Breakdown { row: i });
            }
            d[i] = di;
            row_i[bw] = 1.0;
        }
        Ok(Self { n, bw, lower: band, d, perm: perm.to_vec() })
    }

    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    /// Solves `(A - shift) x = b`.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.lower[i * w..(i + 1) * w];
            let mut s = y[i];
            for j in lo..i {
                s -= row[j + bw - i] * y[j];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let yi = y[i];
            let lo = i.saturating_sub(bw);
            let row = &self.lower[i * w..(i + 1) * w];
            for j in lo..i {
                y[j] -= row[j + bw - i] * yi;
            }
        }
        for (inew, &iold) in self.perm.iter().enumerate() {
            x[iold] = y[inew];
        }
    }
}

/// Reusable inertia counter: picks the smaller bandwidth of natural and RCM order once.
#[derive(Debug, Clone)]
pub struct InertiaCounter<'a> {
    a: &'a SparseSym,
    perm: Vec<usize>,
    inv: Vec<usize>,
    bw: usize,
}

impl<'a> InertiaCounter<'a> {
    pub fn new(a: &'a SparseSym) -> Self {
        let natural: Vec<usize> = (0..a.dim()).collect();
        let bw_nat = a.bandwidth(None);
        let (perm, bw) = if bw_nat <= 2 {
            (natural, bw_nat)
        } else {
            let r = a.rcm();
            let bw_r = a.bandwidth(Some(&r));
            if bw_r < bw_nat {
                (r, bw_r)
            } else {
                (natural, bw_nat)
            }
        };
        let inv = inverse_permutation(&perm);
        Self { a, perm, inv, bw }
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn factor_jittered(&self, e: f64) -> Result<(BandedLdl, Option<f64>)> {
        let scale = self.a.norm_inf().max(1.0);
        let mut shift = e;
        for t in 0..12 {
            match BandedLdl::factor(self.a, shift, &self.perm, &self.inv, self.bw) {
                Ok(f) => return Ok((f, if t == 0 { None } else { Some(shift) })),
                Err(_) => shift = e + 1e-12 * scale * 4f64.powi(t),
            }
        }
        Err(Error::Solver(format!("LDLᵀ pivot breakdown persists near E = {e}")))
    }

    /// Factorization of `A - shift·I`, with the shift actually used.
    pub fn factorize(&self, shift: f64) -> Result<(BandedLdl, f64)> {
        let (f, j) = self.factor_jittered(shift)?;
        Ok((f, j.unwrap_or(shift)))
    }

    pub fn count_below(&self, e: f64) -> Result<CountResult> {
        let (f, jittered) = self.factor_jittered(e)?;
        if jittered.is_some() {
            log::debug!("count_below: pivot breakdown at E = {e}, jittered");
        }
        Ok(CountResult { energy: e, count: f.negative_pivots(), method: CountMethod::Inertia, jittered })
    }
}

/// Number of eigenvalues of `a` strictly below `e`.
pub fn count_below(a: &SparseSym, e: f64) -> Result<CountResult> {
    InertiaCounter::new(a).count_below(e)
}

/// Counting from the full spectrum.
pub fn count_below_dense(a: &SparseSym, e: f64) -> Result<CountResult> {
    let ev = dense_oracle(a)?;
    Ok(CountResult { energy: e, count: ev.iter().filter(|&&x| x < e).count(), method: CountMethod::Dense, jittered: None })
}

fn dense_guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::SizeGuard { dim: n, limit: DENSE_LIMIT });
    }
    Ok(())
}

/// Full ascending spectrum.
pub fn dense_oracle(a: &SparseSym) -> Result<Vec<f64>> {
    dense_guard(a.dim())?;
    let mut ev: Vec<f64> = a.to_dense().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Ascending eigenpairs from the dense decomposition.
pub fn dense_eigenpairs(a: &SparseSym) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    dense_guard(a.dim())?;
    let eig = SymmetricEigen::new(a.to_dense());
    let mut idx: Vec<usize> = (0..a.dim()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = idx.iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    Ok((vals, vecs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
    /// `‖A v − λ v‖ / ‖v‖` per pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Relative to `max(1, ‖A‖_∞)`.
    pub tol: f64,
    pub max_krylov: usize,
    pub seed: u64,
    /// Matrices up to this dimension go straight to the dense path.
    pub dense_below: usize,
    /// Known lower bound on the spectrum, used to place the shift.
    pub lower_hint: Option<f64>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_krylov: 300, seed: 0x5eed, dense_below: 200, lower_hint: None }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn residual(a: &SparseSym, lambda: f64, v: &[f64]) -> f64 {
    let av = a.apply(v);
    let r: f64 = av.iter().zip(v).map(|(x, y)| (x - lambda * y).powi(2)).sum();
    r.sqrt() / norm(v)
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(w, q);
            axpy(-c, q, w);
        }
    }
}

struct LanczosOutcome {
    pairs: Vec<(f64, Vec<f64>, f64)>,
    steps: usize,
}

/// One shift-invert Lanczos run in the orthogonal complement of `locked`, returning
/// converged pairs (smallest first).
fn lanczos_pass(
    a: &SparseSym,
    fact: &BandedLdl,
    want: usize,
    start: Vec<f64>,
    locked: &[Vec<f64>],
    opts: &EigenOptions,
    abs_tol: f64,
) -> LanczosOutcome {
    let n = a.dim();
    let mut v = start;
    orthogonalize(&mut v, locked);
    let nv = norm(&v);
    if nv == 0.0 {
        return LanczosOutcome { pairs: Vec::new(), steps: 0 };
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let max_m = opts.max_krylov.min(n - locked.len());
    let mut w = vec![0.0; n];
    let mut best: Vec<(f64, Vec<f64>, f64)>;
    let mut j = 0;
    loop {
        fact.solve(&basis[j], &mut w);
        let aj = dot(&w, &basis[j]);
        alpha.push(aj);
        axpy(-aj, &basis[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        let bj = norm(&w);
        let m = j + 1;
        let exhausted = bj <= 1e-13 * alpha.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let check = exhausted || m == max_m || (m >= want + 4 && (m % 8 == 0));
        if check {
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
            let mut pairs = Vec::new();
            for &p in idx.iter().take(want.min(m)) {
                let theta = eig.eigenvalues[p];
                if theta <= 0.0 {
                    continue;
                }
                let mut y = vec![0.0; n];
                for (i, q) in basis.iter().enumerate() {
                    axpy(eig.eigenvectors[(i, p)], q, &mut y);
                }
                let ny = norm(&y);
                y.iter_mut().for_each(|x| *x /= ny);
                let lam = a.quadratic_form(&y);
                let r = residual(a, lam, &y);
                pairs.push((lam, y, r));
            }
            let done = pairs.len() >= want.min(m) && pairs.iter().all(|p| p.2 <= abs_tol);
            best = pairs;
            if done || exhausted || m == max_m {
                break;
            }
        }
        beta.push(bj);
        w.iter_mut().for_each(|x| *x /= bj);
        basis.push(std::mem::replace(&mut w, vec![0.0; n]));
        j += 1;
    }
    best.retain(|p| p.2 <= abs_tol);
    best.sort_by(|p, q| p.0.total_cmp(&q.0));
    LanczosOutcome { pairs: best, steps: j + 1 }
}

/// The `k` smallest eigenpairs, ascending.
///
/// Missing multiplicities are detected by an inertia count just below the largest
/// returned eigenvalue and recovered by deflated passes from fresh seeded vectors.
pub fn smallest_eigs(a: &SparseSym, k: usize, opts: &EigenOptions) -> Result<EigenResult> {
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in 1..={n}")));
    }
    a.check_finite()?;
    if n <= opts.dense_below.min(DENSE_LIMIT) {
        let (vals, vecs) = dense_eigenpairs(a)?;
        let vals: Vec<f64> = vals[..k].to_vec();
        let vecs: Vec<Vec<f64>> = vecs[..k].to_vec();
        let residuals = vals.iter().zip(&vecs).map(|(l, v)| residual(a, *l, v)).collect();
        return Ok(EigenResult { eigenvalues: vals, eigenvectors: Some(vecs), residuals, iterations: 0, shift: f64::NAN });
    }
    let scale = a.norm_inf().max(1.0);
    let abs_tol = opts.tol * scale;
    let counter = InertiaCounter::new(a);
    let (glo, _) = a.gershgorin();
    let lower = opts.lower_hint.map_or(glo, |h| h.max(glo));
    let margin = 1e-3 * scale.sqrt().max(1.0) * 1e-1;
    let mut sigma = lower - margin;
    let (mut fact, mut sig_used) = counter.factorize(sigma)?;
    if fact.negative_pivots() > 0 {
        sigma = glo - margin;
        let r = counter.factorize(sigma)?;
        fact = r.0;
        sig_used = r.1;
    }
    let mut rng = indexed_rng(opts.seed, stream::EIGEN_START, 0);
    let fresh = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() + 0.5).collect() };

    let mut locked: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    let mut iterations = 0;
    // first pass: a better shift from a short run when the hint is loose
    let probe = lanczos_pass(a, &fact, 1, fresh(&mut rng), &[], &EigenOptions { max_krylov: 40, ..*opts }, f64::INFINITY);
    iterations += probe.steps;
    if let Some((l0, _, r0)) = probe.pairs.first() {
        let cand = l0 - (r0 * 2.0).max(margin);
        if cand > sig_used {
            let (f2, s2) = counter.factorize(cand)?;
            if f2.negative_pivots() == 0 {
                fact = f2;
                sig_used = s2;
            }
        }
    }
    for pass in 0..(k + 6) {
        let need = k.saturating_sub(locked.len()).max(1);
        let lv: Vec<Vec<f64>> = locked.iter().map(|p| p.1.clone()).collect();
        let out = lanczos_pass(a, &fact, need + 1, fresh(&mut rng), &lv, opts, abs_tol);
        iterations += out.steps;
        locked.extend(out.pairs);
        locked.sort_by(|p, q| p.0.total_cmp(&q.0));
        if locked.len() >= k {
            let top = locked[k - 1].0;
            let thresh = top - abs_tol.max(1e-12 * scale) * 10.0;
            let c = counter.count_below(thresh)?.count;
            let found = locked.iter().filter(|p| p.0 < thresh).count();
            if c <= found {
                locked.truncate(k);
                let eigenvalues = locked.iter().map(|p| p.0).collect();
                let residuals = locked.iter().map(|p| p.2).collect();
                let eigenvectors = Some(locked.into_iter().map(|p| p.1).collect());
                return Ok(EigenResult { eigenvalues, eigenvectors, residuals, iterations, shift: sig_used });
            }
            log::debug!("smallest_eigs pass {pass}: inertia {c} > found {found}, deflating");
        }
    }
    let worst = locked.iter().map(|p| p.2).fold(0.0, f64::max);
    Err(Error::NonConvergence { iterations, residual: if locked.is_empty() { f64::INFINITY } else { worst } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dirichlet_1d(n: usize) -> SparseSym {
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0));
            if i + 1 < n {
                e.push((i + 1, i, -1.0));
            }
        }
        SparseSym::from_entries(n, &e).unwrap()
    }

    #[test]
    fn count_small_dirichlet() {
        let a = dirichlet_1d(4);
        assert_eq!(count_below(&a, 2.0).unwrap().count, 2);
        assert_eq!(count_below(&a, 0.1).unwrap().count, 0);
        assert_eq!(count_below(&a, 10.0).unwrap().count, 4);
    }

    #[test]
    fn count_on_eigenvalue_jitters() {
        let a = dirichlet_1d(3);
        // 2 is an exact eigenvalue of the 3-node chain
        let c = count_below(&a, 2.0).unwrap();
        assert!(c.count == 1 || c.count == 2);
    }

    #[test]
    fn lanczos_dirichlet_closed_form() {
        let a = dirichlet_1d(100);
        let r = smallest_eigs(&a, 2, &EigenOptions { dense_below: 0, ..Default::default() }).unwrap();
        for (k, l) in r.eigenvalues.iter().enumerate() {
            let exact = 2.0 - 2.0 * (((k + 1) as f64) * PI / 101.0).cos();
            assert!((l - exact).abs() < 1e-10, "{l} vs {exact}");
        }
    }

    #[test]
    fn diagonal_smallest() {
        let a = SparseSym::from_diagonal(&[3.0, 1.0, 2.0]).unwrap();
        let r = smallest_eigs(&a, 1, &EigenOptions::default()).unwrap();
        assert_eq!(r.eigenvalues, vec![1.0]);
        assert_eq!(dense_oracle(&SparseSym::identity(4)).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn degenerate_pairs_are_recovered() {
        // 2D Neumann-like grid 12x12: λ1 is doubly degenerate
        let s = 12;
        let mut e = Vec::new();
        for y in 0..s {
            for x in 0..s {
                let i = x + s * y;
                let mut deg = 0.0;
                if x + 1 < s {
                    e.push((i + 1, i, -1.0));
                    deg += 1.0;
                }
                if x > 0 {
                    deg += 1.0;
                }
                if y + 1 < s {
                    e.push((i + s, i, -1.0));
                    deg += 1.0;
                }
                if y > 0 {
                    deg += 1.0;
                }
                e.push((i, i, deg));
            }
        }
        let a = SparseSym::from_entries(s * s, &e).unwrap();
        let r = smallest_eigs(&a, 3, &EigenOptions { dense_below: 0, ..Default::default() }).unwrap();
        let d = dense_oracle(&a).unwrap();
        for (x, y) in r.eigenvalues.iter().zip(&d) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}
