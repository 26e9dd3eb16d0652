//! Adaptive Gauss–Kronrod (7/15) quadrature on finite and semi-infinite intervals.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-8, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

impl QuadSpec {
    /// Purely relative tolerance, for integrands spanning many orders of magnitude.
    pub fn relative(rel_tol: f64) -> Self {
        Self { abs_tol: 0.0, rel_tol, max_intervals: 4000 }
    }
}

/// Integral value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
}

impl std::ops::Add for QuadResult {
    type Output = QuadResult;
    fn add(self, o: QuadResult) -> QuadResult {
        QuadResult { value: self.value + o.value, abs_err: self.abs_err + o.abs_err }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Adaptive integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: QuadSpec) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, abs_err: 0.0 };
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e });
    let mut total = v;
    let mut err = e;
    let mut count = 1;
    while err > spec.abs_tol.max(spec.rel_tol * total.abs()) && count < spec.max_intervals {
        let p = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, err: e2 });
        count += 1;
    }
    // Recompute from the pieces to shed accumulated update round-off.
    let mut value = 0.0;
    let mut abs_err = 0.0;
    let mut pieces: Vec<Piece> = heap.into_vec();
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    for p in &pieces {
        value += p.value;
        abs_err += p.err;
    }
    QuadResult { value, abs_err }
}

/// Integral of `f` over `[a, ∞)` via the map x = a + s·t/(1−t), t ∈ [0, 1).
///
/// `scale` should be of the order of the length over which the integrand starts to decay.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, spec: QuadSpec) -> QuadResult {
    let s = scale.max(f64::MIN_POSITIVE);
    let g = |t: f64| {
        let one_minus = 1.0 - t;
        if one_minus <= 0.0 {
            return 0.0;
        }
        let x = a + s * t / one_minus;
        let jac = s / (one_minus * one_minus);
        let v = f(x);
        if v == 0.0 {
            0.0
        } else {
            v * jac
        }
    };
    integrate(g, 0.0, 1.0, spec)
}
