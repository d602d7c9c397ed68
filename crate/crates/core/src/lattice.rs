//! Lattices in `R^{d1} x R^{d2}`, their duals, box enumeration and the
//! concrete lattice families used throughout the crate.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QcsError, Result};
use crate::rational::{pow10, ExactRational};

pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// Enumeration budget, overridable through the `QCS_BUDGET` environment variable.
pub fn default_budget() -> u64 {
    std::env::var("QCS_BUDGET")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_BUDGET)
}

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_k, hi_k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds of different dimension");
        Self { lo, hi }
    }

    /// `[-r, r]^d`.
    pub fn symmetric(d: usize, r: f64) -> Self {
        Self::new(vec![-r; d], vec![r; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l > h || l.is_nan() || h.is_nan())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn translate(&self, s: &[f64]) -> Self {
        Self::new(
            self.lo.iter().zip(s).map(|(l, v)| l + v).collect(),
            self.hi.iter().zip(s).map(|(h, v)| h + v).collect(),
        )
    }

    fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub coeffs: Vec<i64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

/// Full-rank lattice with generators as basis columns. The first `d1`
/// coordinates are physical, the last `d2` internal.
#[derive(Clone, Debug)]
pub struct LatticeBasis {
    d1: usize,
    d2: usize,
    basis: DMatrix<f64>,
    inverse: DMatrix<f64>,
    det_abs: f64,
    exact: Option<Vec<ExactRational>>,
}

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    d1: usize,
    d2: usize,
    basis: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exact: Option<Vec<ExactRational>>,
}

impl LatticeBasis {
    /// Builds a lattice from a row-major `(d1+d2) x (d1+d2)` matrix whose columns are generators.
    pub fn new(d1: usize, d2: usize, row_major: Vec<f64>) -> Result<Self> {
        let n = d1 + d2;
        if d1 == 0 || d2 == 0 {
            return Err(QcsError::InvalidArgument("d1 and d2 must be positive".into()));
        }
        if row_major.len() != n * n {
            return Err(QcsError::InvalidArgument(format!(
                "basis needs {} entries, got {}",
                n * n,
                row_major.len()
            )));
        }
        if row_major.iter().any(|v| !v.is_finite()) {
            return Err(QcsError::DegenerateLattice("non-finite basis entry".into()));
        }
        let basis = DMatrix::from_row_slice(n, n, &row_major);
        let norm = basis.clone().singular_values().max();
        if norm == 0.0 {
            return Err(QcsError::DegenerateLattice("zero basis".into()));
        }
        let scaled_det = (basis.clone() / norm).determinant();
        if scaled_det.abs() <= 1e-12 {
            return Err(QcsError::DegenerateLattice(format!(
                "scaled determinant {scaled_det:e}"
            )));
        }
        let inverse = basis
            .clone()
            .try_inverse()
            .ok_or_else(|| QcsError::DegenerateLattice("singular basis".into()))?;
        let det_abs = basis.determinant().abs();
        Ok(Self { d1, d2, basis, inverse, det_abs, exact: None })
    }

    /// Builds from exact entries; the floating basis is their nearest doubles.
    pub fn from_exact(d1: usize, d2: usize, row_major: Vec<ExactRational>) -> Result<Self> {
        let f: Vec<f64> = row_major.iter().map(ExactRational::to_f64).collect();
        let mut l = Self::new(d1, d2, f)?;
        l.exact = Some(row_major);
        Ok(l)
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn exact(&self) -> Option<&[ExactRational]> {
        self.exact.as_deref()
    }

    pub fn covol(&self) -> f64 {
        self.det_abs
    }

    pub fn row_major(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.basis[(i, j)]).collect()
    }

    /// Image of an integer coefficient vector.
    pub fn point(&self, coeffs: &[i64]) -> LatticePoint {
        let n = self.dim();
        let mut x = vec![0.0; n];
        for (i, xi) in x.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, c) in coeffs.iter().enumerate() {
                s += self.basis[(i, j)] * (*c as f64);
            }
            *xi = s;
        }
        let x2 = x.split_off(self.d1);
        LatticePoint { coeffs: coeffs.to_vec(), x1: x, x2 }
    }

    pub fn to_json(&self) -> String {
        let j = LatticeJson {
            d1: self.d1,
            d2: self.d2,
            basis: self.row_major(),
            exact: self.exact.clone(),
        };
        serde_json::to_string(&j).expect("lattice serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: LatticeJson = serde_json::from_str(s).map_err(|e| QcsError::Parse(e.to_string()))?;
        match j.exact {
            Some(ex) => Self::from_exact(j.d1, j.d2, ex),
            None => Self::new(j.d1, j.d2, j.basis),
        }
    }

    /// Inverse transpose. The result has covolume `1/covol`.
    pub fn dual_basis(&self) -> Result<Self> {
        let n = self.dim();
        let it = self.inverse.transpose();
        let rm: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| it[(i, j)]).collect();
        let mut dual = Self::new(self.d1, self.d2, rm)?;
        if let Some(ex) = &self.exact {
            if let Some(inv) = exact_inverse(ex, n) {
                let mut t = vec![ExactRational::zero(); n * n];
                for i in 0..n {
                    for j in 0..n {
                        t[i * n + j] = inv[j * n + i].clone();
                    }
                }
                dual.basis = DMatrix::from_row_slice(n, n, &t.iter().map(ExactRational::to_f64).collect::<Vec<_>>());
                dual.inverse = dual.basis.clone().try_inverse().ok_or_else(|| QcsError::DegenerateLattice("singular dual".into()))?;
                dual.det_abs = dual.basis.determinant().abs();
                dual.exact = Some(t);
            }
        }
        Ok(dual)
    }

    /// All lattice points with `x1` in `box1` and `x2` in `box2`, sorted by coefficients.
    pub fn enumerate_in_box(&self, box1: &BoxRegion, box2: &BoxRegion, budget: u64) -> Result<Vec<LatticePoint>> {
        let raw = self.enumerate_raw(box1, box2, budget)?;
        let n = self.dim();
        Ok(raw
            .coeffs
            .chunks(n)
            .zip(raw.coords.chunks(n))
            .map(|(c, x)| LatticePoint {
                coeffs: c.to_vec(),
                x1: x[..self.d1].to_vec(),
                x2: x[self.d1..].to_vec(),
            })
            .collect())
    }

    /// Number of outer coefficient tuples [`enumerate_in_box`](Self::enumerate_in_box) would visit.
    pub fn enumeration_cost(&self, box1: &BoxRegion, box2: &BoxRegion) -> Result<u128> {
        let plan = self.plan(box1, box2)?;
        Ok(plan.map(|p| p.outer_count()).unwrap_or(0))
    }

    pub(crate) fn enumerate_raw(&self, box1: &BoxRegion, box2: &BoxRegion, budget: u64) -> Result<RawPoints> {
        let n = self.dim();
        let chunks = self.fold_in_box(box1, box2, budget, RawPoints::default, |out, c, x| {
            out.coeffs.extend_from_slice(c);
            out.coords.extend_from_slice(x);
        })?;
        let mut all = RawPoints::default();
        for mut c in chunks {
            all.coeffs.append(&mut c.coeffs);
            all.coords.append(&mut c.coords);
        }
        all.sort(n);
        Ok(all)
    }

    /// Visits every lattice point in the box without storing it.
    ///
    /// Coefficients are scanned in a basis reduced against the box shape, and the
    /// work is split into fixed contiguous blocks of one outer coefficient. The
    /// split does not depend on the thread count, so folding the returned
    /// accumulators left to right gives the same result on every run.
    pub fn fold_in_box<T, M, V>(&self, box1: &BoxRegion, box2: &BoxRegion, budget: u64, make: M, visit: V) -> Result<Vec<T>>
    where
        T: Send,
        M: Fn() -> T + Sync,
        V: Fn(&mut T, &[i64], &[f64]) + Sync,
    {
        let n = self.dim();
        let plan = match self.plan(box1, box2)? {
            Some(p) => p,
            None => return Ok(Vec::new()),
        };
        let needed = plan.outer_count();
        if needed > budget as u128 {
            return Err(QcsError::Budget { needed, budget });
        }
        let solved = plan.solved;
        let outer: Vec<usize> = (0..n).filter(|&k| k != solved).collect();
        let first = outer[0];
        let rest = &outer[1..];
        let (a, b) = plan.range[first];
        let width = (b - a) as u64 + 1;
        let step = width.div_ceil(FOLD_CHUNKS).max(1) as i64;
        let starts: Vec<i64> = (0..width.div_ceil(step as u64)).map(|i| a + i as i64 * step).collect();
        Ok(starts
            .into_par_iter()
            .map(|s0| {
                let mut acc = make();
                let mut coeffs = vec![0i64; n];
                let mut f = |c: &[i64], x: &[f64]| visit(&mut acc, c, x);
                for c0 in s0..=(s0 + step - 1).min(b) {
                    coeffs[first] = c0;
                    self.scan_rest(&plan, rest, 0, &mut coeffs, &mut f);
                }
                acc
            })
            .collect())
    }

    fn scan_rest(&self, plan: &Plan, rest: &[usize], depth: usize, coeffs: &mut Vec<i64>, f: &mut dyn FnMut(&[i64], &[f64])) {
        let (lo, hi) = (&plan.lo, &plan.hi);
        if depth < rest.len() {
            let k = rest[depth];
            for c in plan.range[k].0..=plan.range[k].1 {
                coeffs[k] = c;
                self.scan_rest(plan, rest, depth + 1, coeffs, f);
            }
            return;
        }
        let n = self.dim();
        let s = plan.solved;
        let e = &plan.basis;
        // partial image without the solved column
        let mut partial = vec![0.0; n];
        for (i, p) in partial.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                if j != s {
                    acc += e[(i, j)] * coeffs[j] as f64;
                }
            }
            *p = acc;
        }
        let (mut cmin, mut cmax) = (plan.range[s].0 as f64, plan.range[s].1 as f64);
        for i in 0..n {
            let col = e[(i, s)];
            let (l, h) = (lo[i] - partial[i], hi[i] - partial[i]);
            if col.abs() < 1e-300 {
                if plan.unimodular.is_none() && (l > 0.0 || h < 0.0) {
                    return;
                }
                continue;
            }
            let (a, b) = if col > 0.0 { (l / col, h / col) } else { (h / col, l / col) };
            cmin = cmin.max(a);
            cmax = cmax.min(b);
        }
        let slack = |v: f64| plan.pad + 1e-9 * (1.0 + v.abs());
        let start = (cmin - slack(cmin)).ceil() as i64;
        let stop = (cmax + slack(cmax)).floor() as i64;
        let mut x = vec![0.0; n];
        let mut orig = vec![0i64; n];
        for c in start.max(plan.range[s].0)..=stop.min(plan.range[s].1) {
            coeffs[s] = c;
            let cs: &[i64] = match &plan.unimodular {
                Some(u) => {
                    for (i, o) in orig.iter_mut().enumerate() {
                        *o = (0..n).map(|j| u[i * n + j] * coeffs[j]).sum();
                    }
                    &orig
                }
                None => coeffs,
            };
            let mut inside = true;
            for (i, xi) in x.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, cj) in cs.iter().enumerate() {
                    acc += self.basis[(i, j)] * (*cj as f64);
                }
                *xi = acc;
                if acc < lo[i] || acc > hi[i] {
                    inside = false;
                    break;
                }
            }
            if inside {
                f(cs, &x);
            }
        }
    }

    fn plan(&self, box1: &BoxRegion, box2: &BoxRegion) -> Result<Option<Plan>> {
        if box1.dim() != self.d1 || box2.dim() != self.d2 {
            return Err(QcsError::InvalidArgument("box dimension mismatch".into()));
        }
        if !box1.is_bounded() || !box2.is_bounded() {
            return Err(QcsError::InvalidArgument("boxes must be bounded".into()));
        }
        if box1.is_empty() || box2.is_empty() {
            return Ok(None);
        }
        let n = self.dim();
        let lo: Vec<f64> = box1.lo.iter().chain(&box2.lo).copied().collect();
        let hi: Vec<f64> = box1.hi.iter().chain(&box2.hi).copied().collect();
        // interval hull of B^{-1} over the box, per coefficient
        let mut range = Vec::with_capacity(n);
        for i in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            for j in 0..n {
                let m = self.inverse[(i, j)];
                let (p, q) = (m * lo[j], m * hi[j]);
                a += p.min(q);
                b += p.max(q);
            }
            let pad = 1e-9 * (1.0 + a.abs().max(b.abs()));
            let (ca, cb) = ((a - pad).ceil(), (b + pad).floor());
            if ca > cb {
                return Ok(None);
            }
            if ca.abs() > 9.0e15 || cb.abs() > 9.0e15 {
                return Err(QcsError::Budget { needed: u128::MAX, budget: 0 });
            }
            range.push((ca as i64, cb as i64));
        }
        let solved = (0..n)
            .max_by_key(|&k| (range[k].1 - range[k].0) as u128)
            .unwrap_or(0);
        let plain = Plan { lo, hi, range, solved, basis: self.basis.clone(), unimodular: None, pad: 0.0 };
        Ok(Some(match self.reduced_plan(&plain) {
            Some(r) if r.outer_count() < plain.outer_count() => r,
            _ => plain,
        }))
    }

    /// Plan in a basis that is LLL-reduced after scaling the box to a cube.
    ///
    /// The reduced basis is only used to choose candidates; membership is still
    /// decided from the original coefficients, and candidate ranges carry one
    /// unit of padding to absorb rounding in the reduced basis.
    fn reduced_plan(&self, plain: &Plan) -> Option<Plan> {
        let n = self.dim();
        let widths: Vec<f64> = plain.lo.iter().zip(&plain.hi).map(|(l, h)| h - l).collect();
        let wmax = widths.iter().cloned().fold(0.0, f64::max);
        if !(wmax > 0.0) {
            return None;
        }
        let scaled = DMatrix::from_fn(n, n, |i, j| self.basis[(i, j)] / widths[i].max(1e-12 * wmax));
        let u = lll_unimodular(&scaled)?;
        let umat = DMatrix::from_fn(n, n, |i, j| u[i * n + j] as f64);
        let basis = &self.basis * &umat;
        let inverse = basis.clone().try_inverse()?;
        let pad = 1.0;
        let mut range = Vec::with_capacity(n);
        for i in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            for j in 0..n {
                let m = inverse[(i, j)];
                let (p, q) = (m * plain.lo[j], m * plain.hi[j]);
                a += p.min(q);
                b += p.max(q);
            }
            let (ca, cb) = ((a - pad).ceil(), (b + pad).floor());
            if !(ca.abs() < 1e15 && cb.abs() < 1e15) {
                return None;
            }
            range.push((ca as i64, cb.max(ca) as i64));
        }
        // every candidate maps back to original coefficients without overflow
        for i in 0..n {
            let reach: f64 = (0..n)
                .map(|j| (u[i * n + j] as f64).abs() * (range[j].0.abs().max(range[j].1.abs()) as f64))
                .sum();
            if reach > 4.0e18 {
                return None;
            }
        }
        let solved = (0..n)
            .max_by_key(|&k| (range[k].1 - range[k].0) as u128)
            .unwrap_or(0);
        Some(Plan { lo: plain.lo.clone(), hi: plain.hi.clone(), range, solved, basis, unimodular: Some(u), pad })
    }
}

const FOLD_CHUNKS: u64 = 1024;

/// Unimodular `U` (row-major) such that the columns of `m * U` are LLL-reduced.
fn lll_unimodular(m: &DMatrix<f64>) -> Option<Vec<i64>> {
    let n = m.ncols();
    let mut b = m.clone();
    let mut u = vec![0i64; n * n];
    for i in 0..n {
        u[i * n + i] = 1;
    }
    let gram_schmidt = |b: &DMatrix<f64>| {
        let mut bs = b.clone();
        let mut mu = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let d = bs.column(j).norm_squared();
                mu[(i, j)] = b.column(i).dot(&bs.column(j)) / d;
                let sub = bs.column(j) * mu[(i, j)];
                let mut ci = bs.column_mut(i);
                ci -= sub;
            }
        }
        (bs, mu)
    };
    let mut k = 1;
    let mut iters = 0;
    while k < n {
        iters += 1;
        if iters > 10_000 {
            return None;
        }
        let (_, mu) = gram_schmidt(&b);
        for j in (0..k).rev() {
            let r = mu[(k, j)].round();
            if r != 0.0 {
                if !(r.abs() < 1e15) {
                    return None;
                }
                let bj = b.column(j).into_owned();
                let mut bk = b.column_mut(k);
                bk -= bj * r;
                let ri = r as i64;
                for i in 0..n {
                    let v = u[i * n + k].checked_sub(ri.checked_mul(u[i * n + j])?)?;
                    u[i * n + k] = v;
                }
            }
        }
        let (bs, mu) = gram_schmidt(&b);
        let lhs = bs.column(k).norm_squared();
        let rhs = (0.75 - mu[(k, k - 1)].powi(2)) * bs.column(k - 1).norm_squared();
        if lhs >= rhs {
            k += 1;
        } else {
            b.swap_columns(k, k - 1);
            for i in 0..n {
                u.swap(i * n + k, i * n + k - 1);
            }
            k = (k - 1).max(1);
        }
    }
    if b.iter().all(|v| v.is_finite()) {
        Some(u)
    } else {
        None
    }
}

struct Plan {
    lo: Vec<f64>,
    hi: Vec<f64>,
    range: Vec<(i64, i64)>,
    solved: usize,
    /// enumeration basis; equals the lattice basis unless `unimodular` is set
    basis: DMatrix<f64>,
    unimodular: Option<Vec<i64>>,
    pad: f64,
}

impl Plan {
    fn outer_count(&self) -> u128 {
        self.range
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != self.solved)
            .map(|(_, (a, b))| (b - a + 1) as u128)
            .product::<u128>()
            .max(1)
    }
}

/// Flat storage: `coeffs` and `coords` hold `dim` entries per point.
#[derive(Default, Debug, Clone)]
pub(crate) struct RawPoints {
    pub coeffs: Vec<i64>,
    pub coords: Vec<f64>,
}

impl RawPoints {
    pub fn len(&self, n: usize) -> usize {
        self.coeffs.len() / n
    }

    fn sort(&mut self, n: usize) {
        let count = self.len(n);
        let mut idx: Vec<usize> = (0..count).collect();
        idx.sort_by(|&a, &b| self.coeffs[a * n..a * n + n].cmp(&self.coeffs[b * n..b * n + n]));
        let mut c = Vec::with_capacity(self.coeffs.len());
        let mut x = Vec::with_capacity(self.coords.len());
        for i in idx {
            c.extend_from_slice(&self.coeffs[i * n..i * n + n]);
            x.extend_from_slice(&self.coords[i * n..i * n + n]);
        }
        self.coeffs = c;
        self.coords = x;
    }
}

fn exact_inverse(m: &[ExactRational], n: usize) -> Option<Vec<ExactRational>> {
    let mut a: Vec<BigRational> = m.iter().map(|x| x.inner().clone()).collect();
    let mut inv: Vec<BigRational> = (0..n * n)
        .map(|k| if k / n == k % n { BigRational::one() } else { BigRational::zero() })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r * n + col].is_zero())?;
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
                inv.swap(piv * n + j, col * n + j);
            }
        }
        let p = a[col * n + col].clone();
        for j in 0..n {
            a[col * n + j] = &a[col * n + j] / &p;
            inv[col * n + j] = &inv[col * n + j] / &p;
        }
        for r in 0..n {
            if r == col || a[r * n + col].is_zero() {
                continue;
            }
            let f = a[r * n + col].clone();
            for j in 0..n {
                let t = &f * &a[col * n + j];
                a[r * n + j] = &a[r * n + j] - t;
                let t = &f * &inv[col * n + j];
                inv[r * n + j] = &inv[r * n + j] - t;
            }
        }
    }
    Some(inv.into_iter().map(ExactRational::from).collect())
}

/// `Z^2` with the first coordinate physical.
pub fn z2_lattice() -> LatticeBasis {
    LatticeBasis::from_exact(
        1,
        1,
        vec![ExactRational::one(), ExactRational::zero(), ExactRational::zero(), ExactRational::one()],
    )
    .expect("identity is a lattice")
}

/// `g_a Z^2` with `g_a = (1/2a) [[1, -a], [1, a]]`; covolume `1/(2a)`.
pub fn gamma_a_lattice(a: f64) -> Result<LatticeBasis> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(QcsError::InvalidArgument(format!("a must be positive, got {a}")));
    }
    let s = 1.0 / (2.0 * a);
    LatticeBasis::new(1, 1, vec![s, -0.5, s, 0.5])
}

/// Exact-entry version of [`gamma_a_lattice`].
pub fn gamma_a_lattice_exact(a: &ExactRational) -> Result<LatticeBasis> {
    if !a.is_positive() {
        return Err(QcsError::InvalidArgument(format!("a must be positive, got {a}")));
    }
    let two = ExactRational::from_integer(2);
    let s = ExactRational::one() / (&two * a);
    let half = ExactRational::one() / two;
    LatticeBasis::from_exact(1, 1, vec![s.clone(), -half.clone(), s, half])
}

/// Which order of a real quadratic field embeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadraticRing {
    /// `Z[sqrt D]`
    SqrtD,
    /// The full ring of integers; differs from `Z[sqrt D]` only when `D = 1 mod 4`.
    Maximal,
}

pub fn is_square_free(d: u64) -> bool {
    if d < 2 {
        return d == 1;
    }
    let mut k = 2u64;
    while k * k <= d {
        if d.is_multiple_of(k * k) {
            return false;
        }
        k += 1;
    }
    true
}

/// Diagonal embedding `{(x + y w, x + y w') : x, y in Z}` of a quadratic order, with
/// `w = sqrt D` or `w = (1 + sqrt D)/2`.
///
/// This is the dual of the scheme lattice; use [`LatticeBasis::dual_basis`] to get the scheme lattice.
pub fn arithmetic_quadratic_lattice(d: u64, ring: QuadraticRing) -> Result<LatticeBasis> {
    if d < 2 || !is_square_free(d) {
        return Err(QcsError::InvalidArgument(format!("D = {d} is not a square-free integer >= 2")));
    }
    let r = (d as f64).sqrt();
    let (w, wc) = if ring == QuadraticRing::Maximal && d % 4 == 1 {
        ((1.0 + r) / 2.0, (1.0 - r) / 2.0)
    } else {
        (r, -r)
    };
    LatticeBasis::new(1, 1, vec![1.0, w, 1.0, wc])
}

/// Per-radius result of [`beta_repellence_scan`].
#[derive(Clone, Debug, Serialize)]
pub struct RepellenceRow {
    pub eps: f64,
    /// Smallest internal sup-norm among nonzero points with `|x1|_inf < eps`; equals the cap when none was found.
    pub min_xi2: f64,
    pub capped: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaScan {
    pub rows: Vec<RepellenceRow>,
    /// Least-squares slope of `log min_xi2` against `log(1/eps)` over uncapped positive rows.
    pub beta_hat: Option<f64>,
}

pub fn beta_repellence_scan(l: &LatticeBasis, eps_list: &[f64], xi2_cap: f64, budget: u64) -> Result<BetaScan> {
    if eps_list.iter().any(|e| !(*e > 0.0)) || !(xi2_cap > 0.0) {
        return Err(QcsError::InvalidArgument("radii and cap must be positive".into()));
    }
    let mut rows = Vec::new();
    for &eps in eps_list {
        let b1 = BoxRegion::symmetric(l.d1(), eps);
        let b2 = BoxRegion::symmetric(l.d2(), xi2_cap);
        let pts = l.enumerate_raw(&b1, &b2, budget)?;
        let n = l.dim();
        let mut best = f64::INFINITY;
        for (c, x) in pts.coeffs.chunks(n).zip(pts.coords.chunks(n)) {
            if c.iter().all(|v| *v == 0) {
                continue;
            }
            if x[..l.d1()].iter().any(|v| v.abs() >= eps) {
                continue;
            }
            let m = x[l.d1()..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            best = best.min(m);
        }
        let capped = !best.is_finite();
        rows.push(RepellenceRow { eps, min_xi2: if capped { xi2_cap } else { best }, capped });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| !r.capped && r.min_xi2 > 0.0)
        .map(|r| ((1.0 / r.eps).ln(), r.min_xi2.ln()))
        .collect();
    let beta_hat = least_squares_slope(&pts);
    Ok(BetaScan { rows, beta_hat })
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    least_squares(pts).map(|(s, _)| s)
}

pub(crate) fn least_squares(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Natural log of `|r|` for rationals far outside the double range.
pub fn ln_abs(r: &ExactRational) -> f64 {
    fn ln_big(n: &BigInt) -> f64 {
        let bits = n.bits();
        if bits < 1000 {
            return n.to_f64().map(|v| v.abs().ln()).unwrap_or(f64::INFINITY);
        }
        let shift = bits - 64;
        let top = (n.abs() >> shift).to_f64().unwrap_or(1.0);
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_big(r.numer()) - ln_big(r.denom())
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproximationRecord {
    pub q: Vec<i64>,
    #[serde(serialize_with = "crate::rational::bigint_str::vec")]
    pub p: Vec<BigInt>,
    pub m: ExactRational,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaScan {
    /// Smallest `alpha` with `m(q) >= m_1 |q|_inf^{-alpha}` over the scanned `q` with
    /// `|q|_inf >= 2`, where `m_1` is the minimum over `|q|_inf = 1`. Infinite when some `m(q) = 0`.
    pub alpha_hat: f64,
    pub infinite: bool,
    /// `(p, q)` attaining `alpha_hat` (or the exact hit when infinite).
    #[serde(serialize_with = "crate::rational::bigint_str::pair_opt")]
    pub worst_pair: Option<(Vec<BigInt>, Vec<i64>)>,
    /// `max_q -ln m(q) / ln |q|_inf` over `|q|_inf >= 2`.
    pub alpha_pointwise: f64,
    pub records: Vec<ApproximationRecord>,
}

/// Scan `m(q) = min_p |p + E q|_inf` over integer `q` with `1 <= |q|_inf <= q_max`.
///
/// `e` is `d1 x d2`, row-major.
pub fn alpha_repellence_scan(e: &[ExactRational], d1: usize, d2: usize, q_max: u64, budget: u64) -> Result<AlphaScan> {
    if q_max < 1 {
        return Err(QcsError::InvalidArgument("q_max must be >= 1".into()));
    }
    if e.len() != d1 * d2 || d1 == 0 || d2 == 0 {
        return Err(QcsError::InvalidArgument("matrix shape mismatch".into()));
    }
    let side = 2 * q_max as u128 + 1;
    let total = side.pow(d2 as u32);
    if total > budget as u128 {
        return Err(QcsError::Budget { needed: total, budget });
    }
    let scaled = ScaledMatrix::new(e);
    let den = ExactRational::from_integer(scaled.den.clone());
    let ln_den = ln_abs(&den);
    // Walk shells of increasing sup norm so records are found in order.
    let mut records: Vec<ApproximationRecord> = Vec::new();
    let mut best: Option<BigInt> = None;
    let mut alpha_pointwise = f64::NEG_INFINITY;
    let mut alpha_hat = f64::NEG_INFINITY;
    let mut worst = None;
    let mut ln_m1: Option<f64> = None;
    let mut hit_zero: Option<(Vec<BigInt>, Vec<i64>)> = None;
    let mut r0: i64 = 1;
    while r0 <= q_max as i64 {
        let r1 = (r0 + 4095).min(q_max as i64);
        let batch: Vec<(i64, Vec<i64>)> = (r0..=r1)
            .flat_map(|r| shell_vectors(d2, r).into_iter().map(move |v| (r, v)))
            .collect();
        let evaluated: Vec<(i64, Vec<i64>, Vec<BigInt>, BigInt)> = batch
            .into_par_iter()
            .map(|(r, q)| {
                let (p, m) = scaled.best_shift(d1, d2, &q);
                (r, q, p, m)
            })
            .collect();
        for (r, q, p, m) in evaluated {
            if m.is_zero() && hit_zero.is_none() {
                hit_zero = Some((p.clone(), q.clone()));
            }
            if r >= 2 && !m.is_zero() {
                let lm = ln_abs(&ExactRational::from_integer(m.clone())) - ln_den;
                let ln_r = (r as f64).ln();
                alpha_pointwise = alpha_pointwise.max(-lm / ln_r);
                let base = *ln_m1.get_or_insert_with(|| {
                    best.as_ref().map_or(0.0, |b| ln_abs(&ExactRational::from_integer(b.clone())) - ln_den)
                });
                let local = (base - lm) / ln_r;
                if local > alpha_hat {
                    alpha_hat = local;
                    worst = Some((p.clone(), q.clone()));
                }
            }
            if best.as_ref().is_none_or(|b| m < *b) {
                best = Some(m.clone());
                let m = ExactRational::from_integer(m) / den.clone();
                records.push(ApproximationRecord { q, p, m });
            }
        }
        r0 = r1 + 1;
    }
    if let Some(pair) = hit_zero {
        return Ok(AlphaScan {
            alpha_hat: f64::INFINITY,
            infinite: true,
            worst_pair: Some(pair),
            alpha_pointwise: f64::INFINITY,
            records,
        });
    }
    Ok(AlphaScan { alpha_hat, infinite: false, worst_pair: worst, alpha_pointwise, records })
}

/// Integer vectors with sup norm exactly `r`, one representative of each `±q` pair.
fn shell_vectors(d: usize, r: i64) -> Vec<Vec<i64>> {
    // the first coordinate reaching |v_i| = r is i; earlier ones are strictly inside
    fn fill(d: usize, r: i64, pos: usize, pivot: usize, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if pos == d {
            if cur.iter().find(|v| **v != 0).is_some_and(|v| *v > 0) {
                out.push(cur.clone());
            }
            return;
        }
        let range: Vec<i64> = if pos < pivot {
            (-r + 1..r).collect()
        } else if pos == pivot {
            vec![-r, r]
        } else {
            (-r..=r).collect()
        };
        for v in range {
            cur[pos] = v;
            fill(d, r, pos + 1, pivot, cur, out);
        }
    }
    let mut out = Vec::new();
    let mut cur = vec![0; d];
    for pivot in 0..d {
        fill(d, r, 0, pivot, &mut cur, &mut out);
    }
    out.sort();
    out
}

/// `E` over a common denominator, so each `q` costs integer products and one reduction.
struct ScaledMatrix {
    num: Vec<BigInt>,
    den: BigInt,
}

impl ScaledMatrix {
    fn new(e: &[ExactRational]) -> Self {
        let den = e.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
        let num = e.iter().map(|x| x.numer() * (&den / x.denom())).collect();
        Self { num, den }
    }

    /// `(p, numerator of m(q))` with `m(q) = numerator / den`.
    fn best_shift(&self, d1: usize, d2: usize, q: &[i64]) -> (Vec<BigInt>, BigInt) {
        let mut worst = BigInt::zero();
        let mut p = Vec::with_capacity(d1);
        for i in 0..d1 {
            let mut acc = BigInt::zero();
            for (j, qj) in q.iter().enumerate().take(d2) {
                if *qj != 0 {
                    acc += &self.num[i * d2 + j] * *qj;
                }
            }
            let (fl, r) = acc.div_mod_floor(&self.den);
            let up = &self.den - &r;
            // nearest integer with ties rounded down
            let (near, dist) = if r <= up { (fl, r) } else { (fl + 1, up) };
            p.push(-near);
            if dist > worst {
                worst = dist;
            }
        }
        (p, worst)
    }
}

/// Liouville-type number `a = sum_{j<=K} 10^{-n_j}` with its resonant denominators `m_k = 10^{n_k}`.
#[derive(Clone, Debug, Serialize)]
pub struct LiouvilleParam {
    pub gamma: f64,
    pub levels: Vec<u32>,
    pub a_truncated: ExactRational,
    #[serde(serialize_with = "crate::rational::bigint_str::vec")]
    pub m_list: Vec<BigInt>,
}

pub const DEFAULT_DIGIT_CAP: u32 = 1_000_000;

/// Levels follow `n_1 = 1`, `n_{j+1} = floor((gamma + 1) n_j) + 1`, the least integer
/// strictly above `(gamma + 1) n_j`. The strict step leaves room for the later digits
/// so `{m_k a} <= m_k^{-gamma}` holds for the truncation.
pub fn liouville_param(gamma: f64, k: usize, digit_cap: u32) -> Result<LiouvilleParam> {
    if !(gamma > 2.0) || !gamma.is_finite() {
        return Err(QcsError::InvalidArgument(format!("gamma must exceed 2, got {gamma}")));
    }
    if k < 2 {
        return Err(QcsError::InvalidArgument("at least two levels are needed".into()));
    }
    let mut levels: Vec<u32> = vec![1];
    while levels.len() < k {
        let last = *levels.last().unwrap() as f64;
        let next = ((gamma + 1.0) * last).floor() + 1.0;
        if next > digit_cap as f64 {
            return Err(QcsError::Infeasible(format!(
                "level {} needs {} digits above the cap {}; largest feasible K is {}",
                levels.len() + 1,
                next,
                digit_cap,
                levels.len()
            )));
        }
        levels.push(next as u32);
    }
    let mut a = ExactRational::zero();
    for &n in &levels {
        a = a + ExactRational::pow10_inv(n);
    }
    let m_list: Vec<BigInt> = levels.iter().map(|&n| pow10(n)).collect();
    let p = LiouvilleParam { gamma, levels, a_truncated: a, m_list };
    p.verify()?;
    Ok(p)
}

impl LiouvilleParam {
    /// Exact check of the level spacing and of `{m_k a} <= m_k^{-gamma}` for `k < K`.
    pub fn verify(&self) -> Result<()> {
        for w in self.levels.windows(2) {
            let need = ((self.gamma + 1.0) * w[0] as f64).ceil();
            if (w[1] as f64) < need {
                return Err(QcsError::Precision(format!("level spacing {} -> {} below {}", w[0], w[1], need)));
            }
        }
        for (idx, m) in self.m_list.iter().enumerate().take(self.levels.len() - 1) {
            let d = (&self.a_truncated * m).frac_dist();
            match power_of_ten_le(&d, self.gamma * self.levels[idx] as f64) {
                Some(true) => {}
                Some(false) => {
                    return Err(QcsError::Precision(format!(
                        "level {}: {{m_k a}} exceeds m_k^-gamma",
                        idx + 1
                    )))
                }
                None => {
                    return Err(QcsError::Precision(format!("level {}: comparison undecided", idx + 1)))
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }
}

/// Decides `d <= 10^{-s}` exactly when `s` is an integer, otherwise with
/// rational brackets of `10^{frac}` tight to 1e-12; `None` if undecided.
fn power_of_ten_le(d: &ExactRational, s: f64) -> Option<bool> {
    let s_exact = ExactRational::from_f64(s).ok()?;
    let c = s_exact.ceil();
    let c_u: u32 = c.to_u32()?;
    let f = (ExactRational::from_integer(c.clone()) - s_exact).to_f64();
    let lhs = d * &pow10(c_u);
    if f == 0.0 {
        return Some(lhs <= ExactRational::one());
    }
    let t = 10f64.powf(f);
    let lo = ExactRational::from_f64(t * (1.0 - 1e-12)).ok()?;
    let hi = ExactRational::from_f64(t * (1.0 + 1e-12)).ok()?;
    if lhs <= lo {
        Some(true)
    } else if lhs > hi {
        Some(false)
    } else {
        None
    }
}

/// Integer pairs `(m, n) != (0, 0)` with `|m| <= m_max` and `|a m - n| <= u`, sorted.
///
/// Uses a Lagrange-Gauss reduced basis of `Z^2` for the form
/// `(m/m_max)^2 + ((a m - n)/u)^2`, so the work is proportional to the output
/// size plus a logarithmic reduction cost, independent of `m_max`.
pub fn diophantine_strip(a: &ExactRational, u: &ExactRational, m_max: &BigInt) -> Result<Vec<(BigInt, BigInt)>> {
    if !u.is_positive() {
        return Err(QcsError::InvalidArgument("strip half-width must be positive".into()));
    }
    if m_max.is_negative() {
        return Err(QcsError::InvalidArgument("m_max must be nonnegative".into()));
    }
    let a = a.inner();
    let u = u.inner();
    if m_max.is_zero() {
        // only m = 0: n with |n| <= u
        let top = u.floor().to_integer();
        let mut out = Vec::new();
        let mut n = -top.clone();
        while n <= top {
            if !n.is_zero() {
                out.push((BigInt::zero(), n.clone()));
            }
            n += 1;
        }
        return Ok(out);
    }
    let mm = BigRational::from_integer(m_max.clone());
    // image of (m, n) in the normalized plane
    let image = |m: &BigInt, n: &BigInt| -> (BigRational, BigRational) {
        let x = BigRational::from_integer(m.clone()) / &mm;
        let y = (a * BigRational::from_integer(m.clone()) - BigRational::from_integer(n.clone())) / u;
        (x, y)
    };
    let norm2 = |v: &(BigInt, BigInt)| -> BigRational {
        let (x, y) = image(&v.0, &v.1);
        &x * &x + &y * &y
    };
    let dot = |v: &(BigInt, BigInt), w: &(BigInt, BigInt)| -> BigRational {
        let (x1, y1) = image(&v.0, &v.1);
        let (x2, y2) = image(&w.0, &w.1);
        x1 * x2 + y1 * y2
    };
    let mut b1 = (BigInt::one(), BigInt::zero());
    let mut b2 = (BigInt::zero(), BigInt::one());
    let mut n1 = norm2(&b1);
    let mut n2 = norm2(&b2);
    if n2 < n1 {
        std::mem::swap(&mut b1, &mut b2);
        std::mem::swap(&mut n1, &mut n2);
    }
    loop {
        let mu = round_rational(&(dot(&b1, &b2) / &n1));
        if !mu.is_zero() {
            b2 = (&b2.0 - &mu * &b1.0, &b2.1 - &mu * &b1.1);
            n2 = norm2(&b2);
        }
        if n2 < n1 {
            std::mem::swap(&mut b1, &mut b2);
            std::mem::swap(&mut n1, &mut n2);
        } else {
            break;
        }
    }
    let (f11, f21) = image(&b1.0, &b1.1);
    let (f12, f22) = image(&b2.0, &b2.1);
    let det = &f11 * &f22 - &f12 * &f21;
    // |c1| <= (|f22| + |f12|)/|det|, |c2| <= (|f21| + |f11|)/|det|
    let c1max = ((f22.abs() + f12.abs()) / det.abs()).floor().to_integer();
    let c2max = ((f21.abs() + f11.abs()) / det.abs()).floor().to_integer();
    // loop over the shorter coefficient range, solve the other exactly
    let (outer_max, o_basis, i_basis, fo, fi) = if c1max <= c2max {
        (c1max, b1.clone(), b2.clone(), (f11, f21), (f12, f22))
    } else {
        (c2max, b2.clone(), b1.clone(), (f12, f22), (f11, f21))
    };
    let one = BigRational::one();
    let mut out = Vec::new();
    let mut co = -outer_max.clone();
    while co <= outer_max {
        let cr = BigRational::from_integer(co.clone());
        let mut lo: Option<BigRational> = None;
        let mut hi: Option<BigRational> = None;
        let mut feasible = true;
        for (fo_r, fi_r) in [(&fo.0, &fi.0), (&fo.1, &fi.1)] {
            let base = &cr * fo_r;
            if fi_r.is_zero() {
                if base.abs() > one {
                    feasible = false;
                }
                continue;
            }
            let e1 = (-&one - &base) / fi_r;
            let e2 = (&one - &base) / fi_r;
            let (l, h) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            lo = Some(match lo {
                Some(v) if v > l => v,
                _ => l,
            });
            hi = Some(match hi {
                Some(v) if v < h => v,
                _ => h,
            });
        }
        if feasible {
            if let (Some(l), Some(h)) = (lo, hi) {
                let mut ci = l.ceil().to_integer();
                let stop = h.floor().to_integer();
                while ci <= stop {
                    let m = &co * &o_basis.0 + &ci * &i_basis.0;
                    let n = &co * &o_basis.1 + &ci * &i_basis.1;
                    if !(m.is_zero() && n.is_zero()) {
                        out.push((m, n));
                    }
                    ci += 1;
                }
            }
        }
        co += 1;
    }
    out.sort();
    Ok(out)
}

fn round_rational(r: &BigRational) -> BigInt {
    let two = BigInt::from(2);
    let (n, d) = (r.numer(), r.denom());
    // floor((2n + d) / 2d)
    (n * &two + d).div_floor(&(d * &two))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> ExactRational {
        s.parse().unwrap()
    }

    #[test]
    fn identity_is_self_dual() {
        let z = z2_lattice();
        let d = z.dual_basis().unwrap();
        assert_eq!(d.row_major(), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.covol(), 1.0);
    }

    #[test]
    fn gamma_one_dual_matches_closed_form() {
        let g = gamma_a_lattice(1.0).unwrap();
        assert_eq!(g.row_major(), vec![0.5, -0.5, 0.5, 0.5]);
        assert!((g.covol() - 0.5).abs() < 1e-15);
        let d = g.dual_basis().unwrap();
        let rm = d.row_major();
        for (x, y) in rm.iter().zip([1.0, -1.0, 1.0, 1.0]) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((gamma_a_lattice(0.5).unwrap().covol() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_a_dual_points_are_am_minus_n() {
        let a = std::f64::consts::SQRT_2;
        let d = gamma_a_lattice(a).unwrap().dual_basis().unwrap();
        let p = d.point(&[1, 0]);
        assert!((p.x1[0] - a).abs() < 1e-12 && (p.x2[0] - a).abs() < 1e-12);
        let p = d.point(&[3, -4]);
        assert!((p.x1[0] - (3.0 * a + 4.0)).abs() < 1e-12);
        assert!((p.x2[0] - (3.0 * a - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_dual_of_exact_gamma() {
        let g = gamma_a_lattice_exact(&q("3/2")).unwrap();
        let d = g.dual_basis().unwrap();
        let ex = d.exact().unwrap();
        assert_eq!(ex, &[q("3/2"), q("-1"), q("3/2"), q("1")]);
    }

    #[test]
    fn bad_inputs() {
        assert!(gamma_a_lattice(0.0).is_err());
        assert!(gamma_a_lattice(-1.0).is_err());
        assert!(LatticeBasis::new(1, 1, vec![1.0, 2.0, 2.0, 4.0]).is_err());
        assert!(arithmetic_quadratic_lattice(8, QuadraticRing::SqrtD).is_err());
        assert!(arithmetic_quadratic_lattice(1, QuadraticRing::SqrtD).is_err());
    }

    #[test]
    fn quadratic_points() {
        let l = arithmetic_quadratic_lattice(2, QuadraticRing::SqrtD).unwrap();
        let p = l.point(&[1, 1]);
        let r = 2f64.sqrt();
        assert!((p.x1[0] - (1.0 + r)).abs() < 1e-14 && (p.x2[0] - (1.0 - r)).abs() < 1e-14);
        assert!((l.covol() - 2.0 * r).abs() < 1e-12);
        // golden ring contains (phi, 1 - phi) as the point (0, 1)
        let g = arithmetic_quadratic_lattice(5, QuadraticRing::Maximal).unwrap();
        let p = g.point(&[0, 1]);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p.x1[0] - phi).abs() < 1e-14 && (p.x2[0] - (1.0 - phi)).abs() < 1e-14);
        // norm x^2 + xy - y^2 of x + y phi is an integer
        for (x, y) in [(2i64, 3i64), (-1, 4), (5, -7)] {
            let p = g.point(&[x, y]);
            let norm = p.x1[0] * p.x2[0];
            assert!((norm - (x * x + x * y - y * y) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn z2_box_count() {
        let z = z2_lattice();
        let b = BoxRegion::symmetric(1, 1.5);
        assert_eq!(z.enumerate_in_box(&b, &b, 1000).unwrap().len(), 9);
        let empty = BoxRegion::new(vec![1.0], vec![0.0]);
        assert!(z.enumerate_in_box(&empty, &b, 1000).unwrap().is_empty());
    }

    #[test]
    fn gamma_one_small_box() {
        let g = gamma_a_lattice(1.0).unwrap();
        let b = BoxRegion::symmetric(1, 0.6);
        let pts = g.enumerate_in_box(&b, &b, 1000).unwrap();
        let mut xs: Vec<(f64, f64)> = pts.iter().map(|p| (p.x1[0], p.x2[0])).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // brute force over coefficients in [-3, 3]^2
        let mut brute = Vec::new();
        for m in -3..=3i64 {
            for n in -3..=3i64 {
                let (x1, x2) = (0.5 * m as f64 - 0.5 * n as f64, 0.5 * m as f64 + 0.5 * n as f64);
                if x1.abs() <= 0.6 && x2.abs() <= 0.6 {
                    brute.push((x1, x2));
                }
            }
        }
        brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(xs, brute);
        assert!(xs.contains(&(0.0, 0.0)) && xs.contains(&(0.5, 0.5)) && xs.contains(&(-0.5, -0.5)));
    }

    #[test]
    fn budget_is_enforced() {
        let g = gamma_a_lattice(1.0).unwrap();
        let b = BoxRegion::symmetric(1, 1e6);
        match g.enumerate_in_box(&b, &b, 10) {
            Err(QcsError::Budget { budget, .. }) => assert_eq!(budget, 10),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn beta_scan_examples() {
        let l = arithmetic_quadratic_lattice(2, QuadraticRing::SqrtD).unwrap();
        let s = beta_repellence_scan(&l, &[0.1], 1e3, 10_000_000).unwrap();
        assert!(s.rows[0].min_xi2 >= 10.0);
        let s = beta_repellence_scan(&l, &[1e-1, 1e-2, 1e-3, 1e-4], 1e6, 100_000_000).unwrap();
        assert!(s.beta_hat.unwrap() >= 0.95, "{:?}", s);
        let z = z2_lattice();
        let s = beta_repellence_scan(&z, &[0.5], 10.0, 1000).unwrap();
        assert_eq!(s.rows[0].min_xi2, 1.0);
    }

    #[test]
    fn alpha_scan_zero_matrix_is_infinite() {
        let s = alpha_repellence_scan(&[ExactRational::zero()], 1, 1, 5, 1000).unwrap();
        assert!(s.infinite && s.alpha_hat.is_infinite());
    }

    #[test]
    fn alpha_scan_sqrt2_is_bounded() {
        let e = ExactRational::from_f64(std::f64::consts::SQRT_2).unwrap();
        let s = alpha_repellence_scan(&[e], 1, 1, 50, 1000).unwrap();
        assert!(s.alpha_hat <= 1.3, "{}", s.alpha_hat);
        // records are the convergent denominators of sqrt 2
        let qs: Vec<i64> = s.records.iter().map(|r| r.q[0]).collect();
        assert_eq!(qs, vec![1, 2, 5, 12, 29]);
    }

    #[test]
    fn liouville_levels() {
        let p = liouville_param(3.0, 3, DEFAULT_DIGIT_CAP).unwrap();
        assert_eq!(p.levels, vec![1, 5, 21]);
        assert_eq!(p.m_list[0], BigInt::from(10));
        let d = (&p.a_truncated * &p.m_list[0]).frac_dist();
        assert!(d <= q("1/1000"));
        assert_eq!(liouville_param(8.0, 2, DEFAULT_DIGIT_CAP).unwrap().levels, vec![1, 10]);
        assert_eq!(liouville_param(4.0, 3, DEFAULT_DIGIT_CAP).unwrap().levels, vec![1, 6, 31]);
    }

    #[test]
    fn liouville_errors() {
        assert!(liouville_param(2.0, 3, DEFAULT_DIGIT_CAP).is_err());
        assert!(liouville_param(3.0, 1, DEFAULT_DIGIT_CAP).is_err());
        match liouville_param(3.0, 6, 1000) {
            Err(QcsError::Infeasible(msg)) => assert!(msg.contains("largest feasible K is 5"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn liouville_non_integer_gamma() {
        let p = liouville_param(2.5, 3, DEFAULT_DIGIT_CAP).unwrap();
        assert_eq!(p.levels, vec![1, 4, 15]);
        p.verify().unwrap();
    }

    #[test]
    fn alpha_scan_liouville() {
        let p = liouville_param(4.0, 3, DEFAULT_DIGIT_CAP).unwrap();
        let s = alpha_repellence_scan(std::slice::from_ref(&p.a_truncated), 1, 1, 1_000_000, 10_000_000).unwrap();
        assert!(s.alpha_hat >= 3.5, "{}", s.alpha_hat);
    }

    #[test]
    fn strip_matches_brute_force() {
        let cases = [("141421356/100000000", "1/20", 200i64), ("1/3", "1/10", 30), ("22/7", "3/5", 15), ("7/10", "1/100", 1000)];
        for (a, u, mm) in cases {
            let (a, u) = (q(a), q(u));
            let got = diophantine_strip(&a, &u, &BigInt::from(mm)).unwrap();
            let mut brute = Vec::new();
            for m in -mm..=mm {
                let am = &a * &BigInt::from(m);
                let lo = (am.clone() - u.clone()).ceil();
                let hi = (am + u.clone()).floor();
                let mut n = lo;
                while n <= hi {
                    if !(m == 0 && n.is_zero()) {
                        brute.push((BigInt::from(m), n.clone()));
                    }
                    n += 1;
                }
            }
            brute.sort();
            assert_eq!(got, brute);
        }
    }

    #[test]
    fn strip_huge_range_is_cheap() {
        let p = liouville_param(4.0, 3, DEFAULT_DIGIT_CAP).unwrap();
        let u = ExactRational::from_integer(2) * ExactRational::pow10_inv(24);
        let m_max = pow10(12);
        let got = diophantine_strip(&p.a_truncated, &u, &m_max).unwrap();
        // multiples k 10^6 with k 10^-25 <= 2e-24, i.e. |k| <= 20
        assert_eq!(got.len(), 40);
        assert!(got.iter().all(|(m, _)| (m % pow10(6)).is_zero()));
    }

    #[test]
    fn lattice_json_roundtrip() {
        let g = gamma_a_lattice_exact(&q("7/5")).unwrap();
        let back = LatticeBasis::from_json(&g.to_json()).unwrap();
        assert_eq!(back.row_major(), g.row_major());
        assert_eq!(back.exact(), g.exact());
        let f = gamma_a_lattice(1.3).unwrap();
        let back = LatticeBasis::from_json(&f.to_json()).unwrap();
        assert_eq!(back.row_major(), f.row_major());
    }
}
