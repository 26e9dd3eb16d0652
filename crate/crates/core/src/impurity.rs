//! Anisotropic impurity potentials `f`, their block marginals, tail masses and the
//! Birman–Solomyak summability diagnostic.

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, integrate_to_infinity, QuadResult, QuadSpec};
use crate::stats::ols;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

/// Decay exponents may be infinite; they serialize as the string `"inf"`.
mod alpha_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let r: Vec<Repr> = v
            .iter()
            .map(|a| if a.is_infinite() { Repr::Text("inf".into()) } else { Repr::Num(*a) })
            .collect();
        r.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let r: Vec<Repr> = Vec::deserialize(d)?;
        r.into_iter()
            .map(|x| match x {
                Repr::Num(v) => Ok(v),
                Repr::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                    "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
                    other => Err(serde::de::Error::custom(format!("bad exponent {other:?}"))),
                },
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRepr {
    dims: Vec<usize>,
    #[serde(with = "alpha_serde")]
    alphas: Vec<f64>,
}

/// Block dimensions `d_k` and decay exponents `α_k` (possibly `∞`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct AnisotropyProfile {
    dims: Vec<usize>,
    alphas: Vec<f64>,
}

impl TryFrom<ProfileRepr> for AnisotropyProfile {
    type Error = Error;
    fn try_from(r: ProfileRepr) -> Result<Self> {
        AnisotropyProfile::new(r.dims, r.alphas)
    }
}

impl From<AnisotropyProfile> for ProfileRepr {
    fn from(p: AnisotropyProfile) -> Self {
        ProfileRepr { dims: p.dims, alphas: p.alphas }
    }
}

impl AnisotropyProfile {
    /// Validated profile: requires `γ = Σ d_k/α_k < 1`.
    pub fn new(dims: Vec<usize>, alphas: Vec<f64>) -> Result<Self> {
        let p = Self::unchecked(dims, alphas)?;
        if p.gamma() >= 1.0 {
            return invalid(format!("profile needs γ < 1, got γ = {}", p.gamma()));
        }
        Ok(p)
    }

    /// Profile without the `γ < 1` requirement, for divergence diagnostics.
    pub fn unchecked(dims: Vec<usize>, alphas: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() != alphas.len() {
            return invalid("profile needs one exponent per block and at least one block");
        }
        if dims.iter().any(|&d| d == 0) {
            return invalid("block dimensions must be positive");
        }
        if alphas.iter().any(|a| a.is_nan() || *a <= 0.0) {
            return invalid("decay exponents must be positive (∞ allowed)");
        }
        Ok(Self { dims, alphas })
    }

    pub fn isotropic(d: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![d], vec![alpha])
    }

    pub fn blocks(&self) -> usize {
        self.dims.len()
    }
    pub fn dim(&self) -> usize {
        self.dims.iter().sum()
    }
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
    /// `γ_k = d_k/α_k` with `d/∞ = 0`.
    pub fn gamma_k(&self, k: usize) -> f64 {
        if self.alphas[k].is_infinite() {
            0.0
        } else {
            self.dims[k] as f64 / self.alphas[k]
        }
    }
    pub fn gamma(&self) -> f64 {
        (0..self.blocks()).map(|k| self.gamma_k(k)).sum()
    }
    pub fn is_admissible(&self) -> bool {
        self.gamma() < 1.0
    }
    /// Coordinates belonging to block `k`.
    pub fn block_range(&self, k: usize) -> Range<usize> {
        let start: usize = self.dims[..k].iter().sum();
        start..start + self.dims[k]
    }
    /// Max norm of block `k` of `x`.
    pub fn block_norm(&self, x: &[f64], k: usize) -> f64 {
        x[self.block_range(k)].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    /// The same profile with blocks reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::unchecked(perm.iter().map(|&i| self.dims[i]).collect(), perm.iter().map(|&i| self.alphas[i]).collect())
    }
}

/// `t^α` for `t ≥ 0`, with fast paths for integer and half-integer exponents.
#[inline]
pub fn pow_abs(t: f64, alpha: f64) -> f64 {
    let two_a = 2.0 * alpha;
    if two_a == two_a.trunc() && two_a <= 64.0 {
        let n = two_a as i32;
        if n % 2 == 0 {
            t.powi(n / 2)
        } else {
            t.powi(n / 2) * t.sqrt()
        }
    } else {
        t.powf(alpha)
    }
}

/// Envelope constants: `f ≤ f0/Σ|x_k|^{α_k}` and the cell-averaged lower bound with
/// `f_u`, both for `|x| ≥ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMeta {
    pub f0: f64,
    pub f_u: f64,
    pub radius: f64,
}

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    /// `f0 / (1 + Σ_k |x_k|^{α_k})`; an infinite exponent cuts off at `|x_k| = 1`.
    Algebraic { f0: f64 },
    /// `f0 · 1{|x| ≤ r}` (all exponents infinite).
    BoxIndicator { f0: f64, r: f64 },
    Custom(CustomFn),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Algebraic { f0 } => write!(f, "Algebraic {{ f0: {f0} }}"),
            PotentialKind::BoxIndicator { f0, r } => write!(f, "BoxIndicator {{ f0: {f0}, r: {r} }}"),
            PotentialKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Serializable description of the built-in families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Algebraic {
        f0: f64,
        dims: Vec<usize>,
        #[serde(with = "alpha_serde")]
        alpha: Vec<f64>,
    },
    BoxIndicator {
        f0: f64,
        r: f64,
        dims: Vec<usize>,
    },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<ImpurityPotential> {
        match self {
            PotentialSpec::Algebraic { f0, dims, alpha } => {
                ImpurityPotential::algebraic(AnisotropyProfile::new(dims.clone(), alpha.clone())?, *f0)
            }
            PotentialSpec::BoxIndicator { f0, r, dims } => {
                let p = AnisotropyProfile::new(dims.clone(), vec![f64::INFINITY; dims.len()])?;
                ImpurityPotential::box_indicator(p, *f0, *r)
            }
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            PotentialSpec::Algebraic { dims, .. } | PotentialSpec::BoxIndicator { dims, .. } => dims,
        }
    }
}

/// Impurity potential with its decay profile and envelope metadata.
#[derive(Debug, Clone)]
pub struct ImpurityPotential {
    profile: AnisotropyProfile,
    kind: PotentialKind,
    meta: EnvelopeMeta,
}

const CALIBRATION_RADIUS: f64 = 2.0;

impl ImpurityPotential {
    pub fn algebraic(profile: AnisotropyProfile, f0: f64) -> Result<Self> {
        Self::algebraic_any(profile, f0)
    }

    /// Algebraic family on a profile that need not satisfy `γ < 1`.
    pub fn algebraic_any(profile: AnisotropyProfile, f0: f64) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return invalid("f0 must be positive and finite");
        }
        let mut p = Self {
            profile,
            kind: PotentialKind::Algebraic { f0 },
            meta: EnvelopeMeta { f0, f_u: f0, radius: CALIBRATION_RADIUS },
        };
        p.meta.f_u = 0.5 * p.calibrate_lower_envelope(CALIBRATION_RADIUS);
        Ok(p)
    }

    pub fn box_indicator(profile: AnisotropyProfile, f0: f64, r: f64) -> Result<Self> {
        if profile.alphas().iter().any(|a| a.is_finite()) {
            return invalid("box indicator needs an all-infinite profile");
        }
        if !(f0 > 0.0 && f0.is_finite() && r > 0.0 && r.is_finite()) {
            return invalid("box indicator needs f0 > 0 and r > 0");
        }
        Ok(Self { profile, kind: PotentialKind::BoxIndicator { f0, r }, meta: EnvelopeMeta { f0, f_u: f0, radius: r } })
    }

    pub fn custom(profile: AnisotropyProfile, f: CustomFn, meta: EnvelopeMeta) -> Result<Self> {
        if !(meta.f0 > 0.0 && meta.f_u > 0.0 && meta.radius >= 0.0) {
            return invalid("custom potential metadata needs f0 > 0, f_u > 0, radius ≥ 0");
        }
        Ok(Self { profile, kind: PotentialKind::Custom(f), meta })
    }

    pub fn profile(&self) -> &AnisotropyProfile {
        &self.profile
    }
    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }
    pub fn meta(&self) -> EnvelopeMeta {
        self.meta
    }
    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    pub fn family_name(&self) -> &'static str {
        match self.kind {
            PotentialKind::Algebraic { .. } => "algebraic",
            PotentialKind::BoxIndicator { .. } => "box_indicator",
            PotentialKind::Custom(_) => "custom",
        }
    }

    /// Max-norm radius outside of which `f` vanishes, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::BoxIndicator { r, .. } => Some(r),
            PotentialKind::Algebraic { .. } if self.profile.alphas().iter().all(|a| a.is_infinite()) => Some(1.0),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Algebraic { f0 } => {
                let mut denom = 1.0;
                let mut start = 0;
                for (&d, &a) in self.profile.dims.iter().zip(&self.profile.alphas) {
                    let n = x[start..start + d].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    start += d;
                    if a.is_infinite() {
                        if n > 1.0 {
                            return 0.0;
                        }
                    } else {
                        denom += pow_abs(n, a);
                    }
                }
                f0 / denom
            }
            PotentialKind::BoxIndicator { f0, r } => {
                if x.iter().all(|v| v.abs() <= *r) {
                    *f0
                } else {
                    0.0
                }
            }
            PotentialKind::Custom(f) => f(x),
        }
    }

    /// `f0 / Σ|x_k|^{α_k}` with `|x_k|^∞ = 0` for `|x_k| ≤ 1` and `∞` beyond.
    pub fn upper_envelope(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.profile.blocks() {
            let n = self.profile.block_norm(x, k);
            let a = self.profile.alphas[k];
            if a.is_infinite() {
                if n > 1.0 {
                    return 0.0;
                }
            } else {
                s += pow_abs(n, a);
            }
        }
        if s == 0.0 {
            f64::INFINITY
        } else {
            self.meta.f0 / s
        }
    }

    /// `f_u / Σ|x_k|^{α_k}` with `|x_k|^∞ = ∞` for `|x_k| > 0`.
    pub fn lower_envelope(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.profile.blocks() {
            let n = self.profile.block_norm(x, k);
            let a = self.profile.alphas[k];
            if a.is_infinite() {
                if n > 0.0 {
                    return 0.0;
                }
            } else {
                s += pow_abs(n, a);
            }
        }
        if s == 0.0 {
            f64::INFINITY
        } else {
            self.meta.f_u / s
        }
    }

    /// `∫_{Λ_0} f(y − x) dy` by tensor Gauss–Legendre (5 nodes on 4 panels per axis).
    pub fn cell_average(&self, x: &[f64]) -> f64 {
        let nodes = gl_panels();
        let d = self.dim();
        let m = nodes.len();
        let mut idx = vec![0usize; d];
        let mut z = vec![0.0; d];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for i in 0..d {
                let (t, wt) = nodes[idx[i]];
                z[i] = t - x[i];
                w *= wt;
            }
            total += w * self.eval(&z);
            let mut i = 0;
            while i < d {
                idx[i] += 1;
                if idx[i] < m {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == d {
                break;
            }
        }
        total
    }

    /// Deterministic far points (`|x| ≥ radius`) on rays through block-structured directions.
    pub fn far_points(&self, radius: f64, per_ray: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let m = self.profile.blocks();
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for mask in 1u32..(1 << m) {
            for weight in [1.0, 0.5] {
                let mut v = vec![0.0; d];
                let mut first = true;
                for k in 0..m {
                    if mask & (1 << k) != 0 {
                        for i in self.profile.block_range(k) {
                            v[i] = if first { 1.0 } else { weight };
                        }
                        first = false;
                    }
                }
                dirs.push(v.clone());
                dirs.push(v.iter().map(|c| -c).collect());
            }
        }
        for i in 0..d {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            dirs.push(v);
        }
        let mut out = Vec::new();
        for dir in &dirs {
            for s in 0..per_ray {
                let r = radius * 1000f64.powf(s as f64 / (per_ray.max(2) - 1) as f64);
                out.push(dir.iter().map(|c| c * r).collect());
            }
        }
        out
    }

    fn calibrate_lower_envelope(&self, radius: f64) -> f64 {
        let mut best = f64::INFINITY;
        for x in self.far_points(radius, 12) {
            let env = self.lower_envelope(&x);
            if env == 0.0 || env.is_infinite() {
                continue;
            }
            let ratio = self.cell_average(&x) / env * self.meta.f_u;
            best = best.min(ratio);
        }
        if best.is_finite() {
            best
        } else {
            self.meta.f0
        }
    }

    /// Infimum of `f` over `[0, s)^d`: the constant of `f ≥ f_u·1_F` with `F = [0, s)^d`.
    pub fn plateau(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s <= 1.0) {
            return invalid("plateau side must lie in (0, 1]");
        }
        match self.kind {
            PotentialKind::Algebraic { f0 } => {
                let denom: f64 = 1.0
                    + self.profile.alphas.iter().filter(|a| a.is_finite()).map(|&a| pow_abs(s, a)).sum::<f64>();
                Ok(f0 / denom)
            }
            PotentialKind::BoxIndicator { f0, r } => Ok(if s <= r { f0 } else { 0.0 }),
            PotentialKind::Custom(_) => Err(Error::Unsupported("plateau of a custom potential".into())),
        }
    }

    /// `sup_{y ∈ [lo, lo+1]^d} f(x − y)`; exact for the coordinatewise monotone built-ins.
    pub fn sup_over_cell(&self, x: &[f64], cell: &[i64], buf: &mut [f64]) -> f64 {
        for i in 0..x.len() {
            let lo = cell[i] as f64;
            buf[i] = x[i] - x[i].clamp(lo, lo + 1.0);
        }
        self.eval(buf)
    }

    fn other_block(&self, k: usize) -> Result<usize> {
        if self.profile.blocks() != 2 {
            return Err(Error::Unsupported("marginals are implemented for two blocks".into()));
        }
        if k > 1 {
            return invalid("block index out of range");
        }
        Ok(1 - k)
    }

    /// `f^{(k)}(x_k) = ∫ f(x_k, y) dy` over the complementary block.
    pub fn marginal(&self, k: usize, xk: &[f64], spec: QuadSpec) -> Result<QuadResult> {
        if self.profile.blocks() == 1 {
            return Ok(QuadResult { value: self.eval(xk), abs_err: 0.0 });
        }
        let o = self.other_block(k)?;
        if xk.len() != self.profile.dims[k] {
            return invalid("marginal point has the wrong block dimension");
        }
        let nk = xk.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.marginal_at_norm(k, o, nk, Some(xk), spec)
    }

    fn marginal_at_norm(&self, k: usize, o: usize, nk: f64, xk: Option<&[f64]>, spec: QuadSpec) -> Result<QuadResult> {
        let ak = self.profile.alphas[k];
        let ao = self.profile.alphas[o];
        let dout = self.profile.dims[o];
        let exact = |v: f64| Ok(QuadResult { value: v, abs_err: 0.0 });
        if ao.is_finite() && ao <= dout as f64 {
            return Err(Error::Divergent(format!(
                "∫ over block {o} diverges: α = {ao} ≤ d = {dout}"
            )));
        }
        match &self.kind {
            PotentialKind::Algebraic { f0 } => {
                let a_const = if ak.is_infinite() {
                    if nk > 1.0 {
                        return exact(0.0);
                    }
                    1.0
                } else {
                    1.0 + pow_abs(nk, ak)
                };
                let shell = |r: f64| dout as f64 * 2f64.powi(dout as i32) * r.powi(dout as i32 - 1);
                if ao.is_infinite() {
                    return exact(f0 / a_const * 2f64.powi(dout as i32));
                }
                let g = |r: f64| f0 / (a_const + pow_abs(r, ao)) * shell(r);
                let c = a_const.powf(1.0 / ao);
                Ok(integrate(g, 0.0, c, spec) + integrate_to_infinity(g, c, c, spec))
            }
            PotentialKind::BoxIndicator { f0, r } => {
                if nk <= *r {
                    exact(f0 * (2.0 * r).powi(dout as i32))
                } else {
                    exact(0.0)
                }
            }
            PotentialKind::Custom(f) => {
                if dout != 1 {
                    return Err(Error::Unsupported("custom marginals need a one-dimensional complement".into()));
                }
                let rk = self.profile.block_range(k);
                let ro = self.profile.block_range(o);
                let mut base = vec![0.0; self.dim()];
                match xk {
                    Some(xk) => base[rk].copy_from_slice(xk),
                    None => base[rk.start] = nk,
                }
                let at = |y: f64| {
                    let mut z = base.clone();
                    z[ro.start] = y;
                    f(&z)
                };
                Ok(integrate_to_infinity(&at, 0.0, 1.0, spec) + integrate_to_infinity(|y| at(-y), 0.0, 1.0, spec))
            }
        }
    }

    /// `∫_{|x_k| > L} f^{(k)}(x_k) dx_k` (nested adaptive quadrature).
    pub fn tail_mass(&self, k: usize, l: f64, spec: QuadSpec) -> Result<QuadResult> {
        if !(l > 0.0) {
            return invalid("tail radius must be positive");
        }
        let o = self.other_block(k)?;
        let dk = self.profile.dims[k];
        if matches!(self.kind, PotentialKind::Custom(_)) && dk != 1 {
            return Err(Error::Unsupported("custom tail masses need a one-dimensional block".into()));
        }
        let ak = self.profile.alphas[k];
        if ak.is_finite() && ak * (1.0 - self.profile.gamma_k(o)) <= dk as f64 {
            return Err(Error::Divergent(format!("marginal of block {k} is not integrable")));
        }
        let shell = move |t: f64| dk as f64 * 2f64.powi(dk as i32) * t.powi(dk as i32 - 1);
        let inner = QuadSpec { abs_tol: spec.abs_tol * 1e-3, rel_tol: spec.rel_tol * 1e-2, ..spec };
        let mut failure: Option<Error> = None;
        let cell = std::cell::RefCell::new(&mut failure);
        let integrand = |t: f64| match self.marginal_at_norm(k, o, t, None, inner) {
            Ok(v) => v.value * shell(t),
            Err(e) => {
                **cell.borrow_mut() = Some(e);
                0.0
            }
        };
        let upper = match self.kind {
            PotentialKind::BoxIndicator { r, .. } => Some(r),
            PotentialKind::Algebraic { .. } if ak.is_infinite() => Some(1.0),
            _ => None,
        };
        let res = match upper {
            Some(u) if l >= u => QuadResult { value: 0.0, abs_err: 0.0 },
            Some(u) => integrate(integrand, l, u, spec),
            None => integrate_to_infinity(integrand, l, l, spec),
        };
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(res)
    }

    /// `∫_s^∞ f^{(k)}(t) dt` for a one-dimensional block and any real `s`.
    pub fn half_line_tail(&self, k: usize, s: f64, spec: QuadSpec) -> Result<QuadResult> {
        let o = self.other_block(k)?;
        if self.profile.dims[k] != 1 {
            return Err(Error::Unsupported("half-line tails need a one-dimensional block".into()));
        }
        let inner = QuadSpec { abs_tol: spec.abs_tol * 1e-3, rel_tol: spec.rel_tol * 1e-2, ..spec };
        let mut failure: Option<Error> = None;
        let cell = std::cell::RefCell::new(&mut failure);
        let g = |t: f64| match self.marginal_at_norm(k, o, t.abs(), None, inner) {
            Ok(v) => v.value,
            Err(e) => {
                **cell.borrow_mut() = Some(e);
                0.0
            }
        };
        let scale = s.abs().max(1.0);
        let res = if s >= 0.0 {
            integrate_to_infinity(g, s, scale, spec)
        } else {
            integrate(g, s, 0.0, spec) + integrate_to_infinity(g, 0.0, 1.0, spec)
        };
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(res)
    }

    /// `∫_{|x| > ρ} f^{(k)}(x − y) dx` for a one-dimensional block.
    pub fn shifted_tail_mass(&self, k: usize, y: f64, rho: f64, spec: QuadSpec) -> Result<QuadResult> {
        Ok(self.half_line_tail(k, rho - y, spec)? + self.half_line_tail(k, rho + y, spec)?)
    }

    /// Bound on `∫_{|z| > T} f(z) dz`, when one is available.
    pub fn outer_mass(&self, t: f64, spec: QuadSpec) -> Option<f64> {
        let d = self.dim() as i32;
        match self.kind {
            PotentialKind::BoxIndicator { f0, r } => {
                Some(if t >= r { 0.0 } else { f0 * ((2.0 * r).powi(d) - (2.0 * t).powi(d)) })
            }
            PotentialKind::Algebraic { f0 } => match self.profile.blocks() {
                1 => {
                    let a = self.profile.alphas[0];
                    let shell = |r: f64| d as f64 * 2f64.powi(d) * r.powi(d - 1);
                    if a.is_infinite() {
                        return Some(if t >= 1.0 {
                            0.0
                        } else {
                            f0 * (2f64.powi(d) - (2.0 * t).powi(d))
                        });
                    }
                    if a <= d as f64 {
                        return None;
                    }
                    Some(integrate_to_infinity(|r| f0 / (1.0 + pow_abs(r, a)) * shell(r), t, t.max(1.0), spec).value)
                }
                2 => {
                    let a = self.tail_mass(0, t, spec).ok()?;
                    let b = self.tail_mass(1, t, spec).ok()?;
                    Some(a.value + b.value)
                }
                _ => None,
            },
            PotentialKind::Custom(_) => None,
        }
    }
}

/// Gauss–Legendre nodes/weights on [0,1]: 5 nodes on each of 4 panels.
fn gl_panels() -> Vec<(f64, f64)> {
    const X: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
    let panels = 4;
    let h = 1.0 / panels as f64;
    let mut out = Vec::with_capacity(panels * 5);
    for p in 0..panels {
        let c = (p as f64 + 0.5) * h;
        for i in 0..5 {
            out.push((c + 0.5 * h * X[i], 0.5 * h * W[i]));
        }
    }
    out
}

/// `α_k(1 − γ_other)`, the decay exponent of `f^{(k)}` for two-block profiles.
pub fn marginal_decay_exponent(profile: &AnisotropyProfile, k: usize) -> Result<f64> {
    if profile.blocks() != 2 {
        return Err(Error::Unsupported("the marginal decay exponent is defined for two blocks".into()));
    }
    if k > 1 {
        return invalid("block index out of range");
    }
    let a = profile.alphas()[k];
    Ok(if a.is_infinite() { f64::INFINITY } else { a * (1.0 - profile.gamma_k(1 - k)) })
}

/// `α_k(1 − γ)`, the decay exponent of the tail mass of `f^{(k)}`.
pub fn tail_decay_exponent(profile: &AnisotropyProfile, k: usize) -> f64 {
    let a = profile.alphas()[k];
    if a.is_infinite() {
        f64::INFINITY
    } else {
        a * (1.0 - profile.gamma())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesDiagnostic {
    Convergent,
    Divergent,
    Inconclusive,
}

/// Partial sums `S_R = Σ_{|j| ≤ R} (∫_{Λ_0} |f(x − j)|^p dx)^{1/p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirmanSolomyak {
    pub p: f64,
    pub radii: Vec<usize>,
    pub sums: Vec<f64>,
    /// Increment per unit radius between consecutive radii.
    pub increments: Vec<f64>,
    /// Log-log slope of the increments over the upper half of the radii.
    pub increment_slope: Option<f64>,
    pub diagnostic: SeriesDiagnostic,
}

pub fn birman_solomyak_partial_sums(pot: &ImpurityPotential, p: f64, radii: &[usize]) -> Result<BirmanSolomyak> {
    let d = pot.dim();
    if d <= 3 {
        if p != 2.0 {
            return invalid("the summability exponent is 2 in dimensions ≤ 3");
        }
    } else if !(p > d as f64 / 2.0) {
        return invalid("the summability exponent must exceed d/2");
    }
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("radii must be strictly increasing with at least two entries");
    }
    let rmax = *radii.last().unwrap() as i64;
    let nodes = gl_panels();
    // per-shell totals, shell s = cells with |j|_∞ = s
    let mut shells = vec![0.0f64; rmax as usize + 1];
    let side = 2 * rmax + 1;
    let count = (side as usize).pow(d as u32);
    let mut j = vec![0i64; d];
    let mut z = vec![0.0; d];
    let mut idx = vec![0usize; d];
    for c in 0..count {
        let mut r = c;
        for i in 0..d {
            j[i] = (r % side as usize) as i64 - rmax;
            r /= side as usize;
        }
        let shell = j.iter().map(|v| v.abs()).max().unwrap() as usize;
        let mut total = 0.0;
        idx.iter_mut().for_each(|v| *v = 0);
        loop {
            let mut w = 1.0;
            for i in 0..d {
                let (t, wt) = nodes[idx[i]];
                z[i] = t - j[i] as f64;
                w *= wt;
            }
            total += w * pot.eval(&z).abs().powf(p);
            let mut i = 0;
            while i < d {
                idx[i] += 1;
                if idx[i] < nodes.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == d {
                break;
            }
        }
        shells[shell] += total.powf(1.0 / p);
    }
    let mut sums = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    let mut next = 0;
    for (s, v) in shells.iter().enumerate() {
        acc += v;
        while next < radii.len() && radii[next] == s {
            sums.push(acc);
            next += 1;
        }
    }
    let increments: Vec<f64> = (1..radii.len())
        .map(|i| (sums[i] - sums[i - 1]) / (radii[i] - radii[i - 1]) as f64)
        .collect();
    let half = increments.len() / 2;
    let tail: Vec<(f64, f64)> = (half..increments.len())
        .filter(|&i| increments[i] > 0.0)
        .map(|i| ((radii[i + 1] as f64).ln(), increments[i].ln()))
        .collect();
    let all_zero_tail = increments[half..].iter().all(|&v| v == 0.0);
    let slope = if tail.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
        ols(&x, &y).map(|f| f.slope)
    } else {
        None
    };
    let diagnostic = if all_zero_tail {
        SeriesDiagnostic::Convergent
    } else {
        match slope {
            Some(s) if s < -1.1 => SeriesDiagnostic::Convergent,
            Some(s) if s > -0.9 => SeriesDiagnostic::Divergent,
            _ => SeriesDiagnostic::Inconclusive,
        }
    };
    Ok(BirmanSolomyak { p, radii: radii.to_vec(), sums, increments, increment_slope: slope, diagnostic })
}
