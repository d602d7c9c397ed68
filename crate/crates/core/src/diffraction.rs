//! Centered diffraction of cut-and-project schemes as truncated atomic measures
//! with certified tail bounds, and the variance and decay diagnostics built on them.
//!
//! For a scheme `(Gamma, W)` the centered diffraction is
//! `sum_{xi in Gamma^perp \ 0} |chi_W(xi2)|^2 / covol^2 * delta_{xi1}`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{QcsError, Result};
use crate::lattice::{
    arithmetic_quadratic_lattice, diophantine_strip, gamma_a_lattice, least_squares, z2_lattice, BoxRegion,
    LatticeBasis, QuadraticRing,
};
use crate::rational::ExactRational;
use crate::window::Window;

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-14;
pub const DEFAULT_EPS_MAX: f64 = 1.0;

/// Cut-and-project scheme: a lattice in `R^{d1} x R^{d2}` and a window in `R^{d2}`.
#[derive(Clone, Debug)]
pub struct Scheme {
    pub lattice: LatticeBasis,
    pub window: Window,
    pub label: String,
}

impl Scheme {
    pub fn new(lattice: LatticeBasis, window: Window, label: impl Into<String>) -> Result<Self> {
        if lattice.d2() != window.d2() {
            return Err(QcsError::InvalidArgument(format!(
                "lattice internal dimension {} differs from window dimension {}",
                lattice.d2(),
                window.d2()
            )));
        }
        Ok(Self { lattice, window, label: label.into() })
    }

    pub fn d1(&self) -> usize {
        self.lattice.d1()
    }

    /// Points per unit physical volume, `vol(W) / covol`.
    pub fn intensity(&self) -> f64 {
        self.window.volume() / self.lattice.covol()
    }

    /// Weight of the uncentered diffraction at the origin, `|chi_W(0)|^2 / covol^2`.
    pub fn uncentered_atom_at_zero(&self) -> f64 {
        let zero = vec![0.0; self.window.d2()];
        self.window.ft_abs2(&zero) / self.lattice.covol().powi(2)
    }

    /// Lower bound for the distance between two points of any realization:
    /// `min |gamma1|` over `gamma != 0` with `gamma2` in the interior of `W - W`.
    ///
    /// `None` when no such `gamma` exists within physical radius `2^40`.
    pub fn point_gap(&self, budget: u64) -> Result<Option<f64>> {
        let d1 = self.d1();
        let diff = self.window.bounding_box();
        let half: Vec<f64> = diff.lo.iter().zip(&diff.hi).map(|(l, h)| h - l).collect();
        let box2 = BoxRegion::new(half.iter().map(|h| -h).collect(), half.clone());
        let search = |x: f64| -> Result<Option<f64>> {
            let chunks = self.lattice.fold_in_box(&BoxRegion::symmetric(d1, x), &box2, budget, || None, |best: &mut Option<f64>, c, p| {
                if c.iter().all(|v| *v == 0) || !in_difference_interior(&self.window, &p[d1..]) {
                    return;
                }
                let n = p[..d1].iter().map(|v| v * v).sum::<f64>().sqrt();
                if best.is_none_or(|b| n < b) {
                    *best = Some(n);
                }
            })?;
            Ok(chunks.into_iter().flatten().fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.min(b)))))
        };
        let mut x = 1.0;
        while x <= 2f64.powi(40) {
            if let Some(rho) = search(x)? {
                if rho <= x {
                    return Ok(Some(rho));
                }
                return search(rho);
            }
            x *= 2.0;
        }
        Ok(None)
    }

    pub fn to_json(&self) -> String {
        let v = serde_json::json!({
            "label": self.label,
            "lattice": serde_json::from_str::<serde_json::Value>(&self.lattice.to_json()).expect("lattice json"),
            "window": serde_json::from_str::<serde_json::Value>(&self.window.to_json()).expect("window json"),
        });
        v.to_string()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| QcsError::Parse(e.to_string()))?;
        let lattice = v.get("lattice").ok_or_else(|| QcsError::Parse("scheme json needs a lattice".into()))?;
        let window = v.get("window").ok_or_else(|| QcsError::Parse("scheme json needs a window".into()))?;
        let label = v.get("label").and_then(|l| l.as_str()).unwrap_or("custom");
        Self::new(
            LatticeBasis::from_json(&lattice.to_string())?,
            Window::from_json(&window.to_string())?,
            label,
        )
    }
}

fn in_difference_interior(w: &Window, y: &[f64]) -> bool {
    use crate::window::WindowKind;
    let bb = w.bounding_box();
    match w.kind() {
        WindowKind::EuclideanBall => {
            let r = bb.hi[0] - w.center()[0];
            y.iter().map(|v| v * v).sum::<f64>() < 4.0 * r * r
        }
        _ => y.iter().zip(bb.lo.iter().zip(&bb.hi)).all(|(v, (l, h))| v.abs() < h - l),
    }
}

pub fn intensity(s: &Scheme) -> f64 {
    s.intensity()
}

/// `Gamma = {(x + y phi, x + y phi*)}` with `W = [-1, phi - 1]`.
pub fn fibonacci_scheme() -> Scheme {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let phis = (1.0 - 5f64.sqrt()) / 2.0;
    let l = LatticeBasis::new(1, 1, vec![1.0, phi, 1.0, phis]).expect("fibonacci lattice");
    let w = Window::interval_between(-1.0, phi - 1.0).expect("fibonacci window");
    Scheme::new(l, w, "fibonacci").expect("dimensions agree")
}

/// `Gamma_a` with window `[-b, b]`.
pub fn gamma_a_scheme(a: f64, b: f64) -> Result<Scheme> {
    Scheme::new(gamma_a_lattice(a)?, Window::interval(b)?, format!("gamma_a(a={a},b={b})"))
}

/// Scheme lattice dual to the quadratic embedding, window `[-b, b]`.
pub fn quadratic_scheme(d: u64, ring: QuadraticRing, b: f64) -> Result<Scheme> {
    let l = arithmetic_quadratic_lattice(d, ring)?.dual_basis()?;
    Scheme::new(l, Window::interval(b)?, format!("quadratic(D={d},b={b})"))
}

/// `Z^2` with `W = [-1/2, 1/2]`: the realized set is a shifted copy of `Z`.
pub fn z2_scheme() -> Scheme {
    Scheme::new(z2_lattice(), Window::interval(0.5).expect("window"), "z2").expect("dimensions agree")
}

/// Atoms within this relative distance of a sphere `|xi1| = eps` count as on it.
/// Dual modules often place atoms exactly on the radii of interest, where the
/// rounding of `|xi1|` would otherwise decide membership.
pub const SPHERE_REL: f64 = 1e-9;

fn closed(eps: f64) -> f64 {
    eps * (1.0 + SPHERE_REL)
}

/// Requested truncation for one layer of an [`AtomicMeasure`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub eps_max: f64,
    pub weight_floor: f64,
}

/// One truncation layer. Every atom with `|xi1| <= eps_max` and weight at least
/// `weight_floor` is present, and the omitted mass inside `|xi1| <= eps_max`
/// is at most `tail_bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub eps_max: f64,
    pub weight_floor: f64,
    /// Internal radius beyond which every atom is below the floor.
    pub xi2_cap: f64,
    /// Lower bound for the internal sup-norm spacing of dual points in the slab.
    pub slab_separation: f64,
    pub tail_bound: f64,
    /// Expected omitted mass per unit `xi1`-volume, assuming equidistributed internal parts.
    pub omitted_density: f64,
}

/// Growth data for bounding the measure beyond its largest layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub intensity: f64,
    pub point_gap: f64,
}

impl Growth {
    /// Certified `eta(B_E) <= i (pi^2 E' / 2)^{d}` with `E' = max(E, sqrt(d) / (2 gap))`.
    ///
    /// A cube of side `2T` with `2 T sqrt(d) < gap` holds at most one point, so its
    /// count variance is at most `i (2T)^d`, while `|chi_cube|^2 >= (4T/pi)^{2d}`
    /// on the ball of radius `1/(4T)`.
    pub fn ball_bound(&self, d: usize, e: f64) -> f64 {
        if self.point_gap <= 0.0 {
            return f64::INFINITY;
        }
        let df = d as f64;
        let e = e.max(df.sqrt() / (2.0 * self.point_gap));
        self.intensity * (PI * PI * e / 2.0).powi(d as i32)
    }
}

/// Finite truncation of a centered diffraction measure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub d1: usize,
    pub label: String,
    /// Sorted by decreasing `eps_max`.
    pub layers: Vec<Layer>,
    pub growth: Option<Growth>,
    /// Atoms sorted by `|xi1|`, `d1` coordinates per atom.
    xi1: Vec<f64>,
    weight: Vec<f64>,
    norm: Vec<f64>,
    #[serde(skip)]
    prefix: Vec<f64>,
}

/// Centered diffraction with a single truncation layer.
pub fn centered_diffraction(s: &Scheme, eps_max: f64, weight_floor: f64, budget: u64) -> Result<AtomicMeasure> {
    centered_diffraction_layered(s, &[LayerSpec { eps_max, weight_floor }], budget)
}

/// Centered diffraction as a union of truncation layers, typically a wide shallow
/// layer and narrow deep ones.
pub fn centered_diffraction_layered(s: &Scheme, specs: &[LayerSpec], budget: u64) -> Result<AtomicMeasure> {
    if specs.is_empty() {
        return Err(QcsError::InvalidArgument("at least one layer is required".into()));
    }
    for sp in specs {
        if !(sp.eps_max > 0.0 && sp.eps_max.is_finite()) || !(sp.weight_floor > 0.0) {
            return Err(QcsError::InvalidArgument("eps_max and weight_floor must be positive".into()));
        }
    }
    let mut specs = specs.to_vec();
    specs.sort_by(|a, b| b.eps_max.total_cmp(&a.eps_max).then(b.weight_floor.total_cmp(&a.weight_floor)));
    let dual = s.lattice.dual_basis()?;
    let covol = s.lattice.covol();
    let d1 = s.d1();
    let d2 = s.window.d2();
    let mut xi1 = Vec::new();
    let mut weight = Vec::new();
    let mut layers = Vec::with_capacity(specs.len());
    for (k, sp) in specs.iter().enumerate() {
        let cap = s.window.envelope_cutoff(sp.weight_floor.sqrt() * covol);
        if !cap.is_finite() {
            return Err(QcsError::Precision("weight floor too small for the window envelope".into()));
        }
        let earlier = &specs[..k];
        let reach = closed(sp.eps_max);
        let box1 = BoxRegion::symmetric(d1, reach);
        let box2 = BoxRegion::symmetric(d2, cap);
        let eps2 = reach * reach;
        let chunks = dual.fold_in_box(&box1, &box2, budget, Vec::<f64>::new, |acc, c, x| {
            if c.iter().all(|v| *v == 0) {
                return;
            }
            let n2: f64 = x[..d1].iter().map(|v| v * v).sum();
            if n2 > eps2 {
                return;
            }
            let w = s.window.ft_abs2(&x[d1..]) / (covol * covol);
            if !(w >= sp.weight_floor) {
                return;
            }
            let n = n2.sqrt();
            if earlier.iter().any(|e| n <= closed(e.eps_max) && w >= e.weight_floor) {
                return;
            }
            acc.extend_from_slice(&x[..d1]);
            acc.push(w);
        })?;
        for ch in chunks {
            for a in ch.chunks(d1 + 1) {
                xi1.extend_from_slice(&a[..d1]);
                weight.push(a[d1]);
            }
        }
        let sep = slab_separation(&dual, d1, d2, sp.eps_max, cap, budget)?;
        let count = |c: f64| slab_count(&sep, d1, d2, sp.eps_max, c);
        let mut tail = sp.weight_floor * count(cap);
        tail += shell_sum(|j| {
            let r = cap * 2f64.powi(j);
            count(2.0 * r) * (s.window.radial_envelope(r) / covol).powi(2)
        });
        layers.push(Layer {
            eps_max: sp.eps_max,
            weight_floor: sp.weight_floor,
            xi2_cap: cap,
            slab_separation: sep.internal,
            tail_bound: tail,
            omitted_density: s.window.abs2_integral_outside(cap) / covol,
        });
    }
    let growth = s
        .point_gap(budget)?
        .map(|g| Growth { intensity: s.intensity(), point_gap: g });
    Ok(AtomicMeasure::assemble(d1, s.label.clone(), layers, growth, xi1, weight))
}

struct Separation {
    internal: f64,
    /// Sup-norm minimum of the whole dual lattice, used when `internal` is zero.
    full: f64,
}

// min |eta2|_inf over nonzero dual points with |eta1|_inf <= 2 eps
fn slab_separation(dual: &LatticeBasis, d1: usize, d2: usize, eps: f64, cap: f64, budget: u64) -> Result<Separation> {
    let min_in = |b1: &BoxRegion, b2: &BoxRegion, full: bool| -> Result<Option<f64>> {
        let chunks = dual.fold_in_box(b1, b2, budget, || f64::INFINITY, |m: &mut f64, c, x| {
            if c.iter().all(|v| *v == 0) {
                return;
            }
            let v = if full {
                x.iter().map(|t| t.abs()).fold(0.0, f64::max)
            } else {
                x[d1..].iter().map(|t| t.abs()).fold(0.0, f64::max)
            };
            *m = m.min(v);
        })?;
        let m = chunks.into_iter().fold(f64::INFINITY, f64::min);
        Ok(if m.is_finite() { Some(m) } else { None })
    };
    let b1 = BoxRegion::symmetric(d1, 2.0 * eps);
    let limit = 2.0 * cap + 1.0;
    let mut x = 1.0f64.min(limit);
    let internal = loop {
        if let Some(m) = min_in(&b1, &BoxRegion::symmetric(d2, x), false)? {
            break m;
        }
        if x >= limit {
            break limit;
        }
        x = (2.0 * x).min(limit);
    };
    let full = if internal > 0.0 {
        0.0
    } else {
        let mut r = 1.0;
        loop {
            if let Some(m) = min_in(&BoxRegion::symmetric(d1, r), &BoxRegion::symmetric(d2, r), true)? {
                if m <= r {
                    break m;
                }
            }
            r *= 2.0;
        }
    };
    Ok(Separation { internal, full })
}

// points of the dual in the slab |xi1|_inf <= eps, |xi2|_inf <= c
fn slab_count(sep: &Separation, d1: usize, d2: usize, eps: f64, c: f64) -> f64 {
    if sep.internal > 0.0 {
        (2.0 * c / sep.internal + 1.0).powi(d2 as i32)
    } else {
        (2.0 * eps / sep.full + 1.0).powi(d1 as i32) * (2.0 * c / sep.full + 1.0).powi(d2 as i32)
    }
}

/// `sum_{j >= 0} term(j)` for terms that eventually decay geometrically; infinite
/// when they do not.
fn shell_sum(term: impl Fn(i32) -> f64) -> f64 {
    let mut total = 0.0;
    let mut prev = f64::INFINITY;
    for j in 0..400 {
        let t = term(j);
        if !t.is_finite() {
            return f64::INFINITY;
        }
        total += t;
        if t == 0.0 {
            return total;
        }
        if j >= 40 {
            let ratio = t / prev;
            if ratio < 0.9 {
                // remaining terms shrink at least as fast as this ratio
                return total + t * ratio / (1.0 - ratio);
            }
        }
        prev = t;
    }
    f64::INFINITY
}

impl AtomicMeasure {
    fn assemble(d1: usize, label: String, layers: Vec<Layer>, growth: Option<Growth>, xi1: Vec<f64>, weight: Vec<f64>) -> Self {
        let count = weight.len();
        let norm_of = |i: usize| xi1[i * d1..i * d1 + d1].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut idx: Vec<usize> = (0..count).collect();
        let norms: Vec<f64> = (0..count).map(norm_of).collect();
        idx.sort_by(|&a, &b| {
            norms[a]
                .total_cmp(&norms[b])
                .then_with(|| {
                    let (xa, xb) = (&xi1[a * d1..a * d1 + d1], &xi1[b * d1..b * d1 + d1]);
                    xa.iter().zip(xb).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
                })
                .then(weight[a].total_cmp(&weight[b]))
        });
        let mut m = Self {
            d1,
            label,
            layers,
            growth,
            xi1: idx.iter().flat_map(|&i| xi1[i * d1..i * d1 + d1].to_vec()).collect(),
            weight: idx.iter().map(|&i| weight[i]).collect(),
            norm: idx.iter().map(|&i| norms[i]).collect(),
            prefix: Vec::new(),
        };
        m.rebuild_prefix();
        m
    }

    fn rebuild_prefix(&mut self) {
        let mut acc = 0.0;
        self.prefix = std::iter::once(0.0)
            .chain(self.weight.iter().map(|w| {
                acc += w;
                acc
            }))
            .collect();
    }

    /// An exactly known finite measure: nothing is omitted anywhere.
    pub fn finite(d1: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let mut xi1 = Vec::with_capacity(atoms.len() * d1);
        let mut weight = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if x.len() != d1 || !(w > 0.0 && w.is_finite()) || x.iter().any(|v| !v.is_finite()) {
                return Err(QcsError::InvalidArgument("atoms need d1 finite coordinates and a positive weight".into()));
            }
            xi1.extend(x);
            weight.push(w);
        }
        let layer = Layer {
            eps_max: f64::INFINITY,
            weight_floor: 0.0,
            xi2_cap: f64::INFINITY,
            slab_separation: 0.0,
            tail_bound: 0.0,
            omitted_density: 0.0,
        };
        Ok(Self::assemble(d1, "finite".into(), vec![layer], None, xi1, weight))
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    pub fn eps_max(&self) -> f64 {
        self.layers.iter().map(|l| l.eps_max).fold(0.0, f64::max)
    }

    /// Smallest floor over all layers.
    pub fn weight_floor(&self) -> f64 {
        self.layers.iter().map(|l| l.weight_floor).fold(f64::INFINITY, f64::min)
    }

    /// Tail bound of the widest layer.
    pub fn tail_bound(&self) -> f64 {
        self.layers.first().map_or(0.0, |l| l.tail_bound)
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.xi1.chunks(self.d1.max(1)).zip(self.weight.iter().copied())
    }

    pub fn norms(&self) -> &[f64] {
        &self.norm
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Every atom has a mirror atom at `-xi1` with weight equal to relative `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d1 = self.d1;
        let mut i = 0;
        while i < self.len() {
            let mut j = i;
            while j < self.len() && self.norm[j] == self.norm[i] {
                j += 1;
            }
            for a in i..j {
                let xa = &self.xi1[a * d1..a * d1 + d1];
                let found = (i..j).any(|b| {
                    let xb = &self.xi1[b * d1..b * d1 + d1];
                    xa.iter().zip(xb).all(|(p, q)| *p == -*q)
                        && (self.weight[a] - self.weight[b]).abs() <= tol * self.weight[a]
                });
                if !found {
                    return false;
                }
            }
            i = j;
        }
        true
    }

    /// Layers covering radius `r`, finest first.
    fn covering(&self, r: f64) -> impl Iterator<Item = &Layer> {
        self.layers.iter().filter(move |l| l.eps_max >= r)
    }

    /// Smallest certified omitted-mass bound among layers covering radius `r`.
    fn tail_at(&self, r: f64) -> f64 {
        self.covering(r).map(|l| l.tail_bound).fold(f64::INFINITY, f64::min)
    }

    fn density_at(&self, r: f64) -> f64 {
        self.covering(r).map(|l| l.omitted_density).fold(f64::INFINITY, f64::min)
    }

    /// Captured mass of the closed ball `|xi1| <= eps` and the certified bound on what is missing.
    pub fn ball_mass(&self, eps: f64) -> Result<BallMass> {
        if eps > self.eps_max() {
            return Err(QcsError::OutsideCertifiedRegion(format!(
                "eps = {eps} exceeds eps_max = {}",
                self.eps_max()
            )));
        }
        let r = closed(eps);
        let k = self.norm.partition_point(|n| *n <= r);
        Ok(BallMass { mass: self.prefix[k], tail_bound: self.tail_at(eps) })
    }

    /// Layer radii in increasing order, starting at zero.
    fn radii(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.layers.iter().map(|l| l.eps_max).collect();
        r.push(0.0);
        r.sort_by(f64::total_cmp);
        r.dedup();
        r
    }

    /// Bound on the omitted part of `sum w k(|xi1|)` for a radial kernel whose
    /// sup over `|xi1| >= r` is `sup_beyond(r)`.
    fn omitted_bound(&self, d: usize, sup_beyond: impl Fn(f64) -> f64) -> f64 {
        let radii = self.radii();
        let mut total = 0.0;
        for w in radii.windows(2) {
            let t = self.tail_at(w[1]);
            if t > 0.0 {
                total += t * sup_beyond(w[0]);
            }
        }
        let outer = *radii.last().unwrap_or(&0.0);
        if outer.is_finite() {
            let far = match self.growth {
                Some(g) => shell_sum(|j| {
                    let r = outer * 2f64.powi(j);
                    g.ball_bound(d, 2.0 * r) * sup_beyond(r)
                }),
                None => f64::INFINITY,
            };
            total += far;
        }
        total
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# label={}", self.label);
        let _ = writeln!(s, "# eps_max={}", self.eps_max());
        let _ = writeln!(s, "# weight_floor={}", self.weight_floor());
        let _ = writeln!(s, "# tail_bound={}", self.tail_bound());
        for (k, l) in self.layers.iter().enumerate() {
            let _ = writeln!(
                s,
                "# layer {k}: eps_max={} weight_floor={} xi2_cap={} tail_bound={}",
                l.eps_max, l.weight_floor, l.xi2_cap, l.tail_bound
            );
        }
        let cols: Vec<String> = (0..self.d1).map(|i| format!("xi1_{i}")).collect();
        let _ = writeln!(s, "{},weight", cols.join(","));
        for (x, w) in self.atoms() {
            for v in x {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{w}");
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(s).map_err(|e| QcsError::Parse(e.to_string()))?;
        m.rebuild_prefix();
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallMass {
    pub mass: f64,
    pub tail_bound: f64,
}

pub fn ball_mass(m: &AtomicMeasure, eps: f64) -> Result<BallMass> {
    m.ball_mass(eps)
}

/// `Var(N(V + x))` split into its parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceBreakdown {
    /// `atom_sum + tail_estimate`.
    pub value: f64,
    pub atom_sum: f64,
    /// Omitted mass assuming internal parts equidistribute beyond each cap.
    pub tail_estimate: f64,
    /// Certified bound on `|true variance - atom_sum|`.
    pub tail_bound: f64,
}

fn shape_sup_beyond(shape: &Window, r: f64) -> f64 {
    use crate::window::WindowKind;
    if r == 0.0 {
        return shape.volume().powi(2);
    }
    let d = shape.d2() as f64;
    let k = if shape.kind() == WindowKind::CenteredBox && shape.d2() > 1 { r / d.sqrt() } else { r };
    shape.radial_envelope(k).powi(2)
}

fn shape_outside(shape: &Window, r: f64) -> f64 {
    use crate::window::WindowKind;
    let d = shape.d2() as f64;
    if shape.kind() == WindowKind::CenteredBox && shape.d2() > 1 {
        shape.abs2_integral_outside(r / d.sqrt())
    } else {
        shape.abs2_integral_outside(r)
    }
}

/// Number variance of the shape `V` (a window object living in physical space)
/// via `Var(V) = eta(|chi_V|^2)`.
pub fn spectral_variance(m: &AtomicMeasure, shape: &Window, intensity: f64) -> Result<VarianceBreakdown> {
    if shape.d2() != m.d1 {
        return Err(QcsError::InvalidArgument("shape dimension differs from the physical dimension".into()));
    }
    let atom_sum: f64 = m.atoms().map(|(x, w)| w * shape.ft_abs2(x)).sum();
    let radii = m.radii();
    let mut estimate = 0.0;
    for w in radii.windows(2) {
        if !w[1].is_finite() {
            continue;
        }
        let dens = m.density_at(w[1]);
        if dens > 0.0 {
            estimate += dens * (shape_outside(shape, w[0]) - shape_outside(shape, w[1])).max(0.0);
        }
    }
    let outer = *radii.last().unwrap_or(&0.0);
    if outer.is_finite() {
        estimate += intensity * shape_outside(shape, outer);
    }
    let mut bound_measure = m.clone();
    if let Some(g) = bound_measure.growth.as_mut() {
        g.intensity = intensity;
    }
    let tail_bound = bound_measure.omitted_bound(m.d1, |r| shape_sup_beyond(shape, r));
    Ok(VarianceBreakdown { value: atom_sum + estimate, atom_sum, tail_estimate: estimate, tail_bound })
}

/// Number variance of `V` from the covariogram sum
/// `(1/covol) sum_gamma rho_V(gamma1) rho_W(gamma2) - i^2 vol(V)^2`.
pub fn geometric_variance(s: &Scheme, shape: &Window, budget: u64) -> Result<f64> {
    let d1 = s.d1();
    if shape.d2() != d1 {
        return Err(QcsError::InvalidArgument("shape dimension differs from the physical dimension".into()));
    }
    let reach = |w: &Window| {
        let bb = w.bounding_box();
        let h: Vec<f64> = bb.lo.iter().zip(&bb.hi).map(|(l, h)| h - l).collect();
        BoxRegion::new(h.iter().map(|v| -v).collect(), h)
    };
    let chunks = s.lattice.fold_in_box(&reach(shape), &reach(&s.window), budget, || 0.0, |acc: &mut f64, _, x| {
        *acc += shape.covariogram(&x[..d1]) * s.window.covariogram(&x[d1..]);
    })?;
    let total: f64 = chunks.into_iter().sum();
    let i = s.intensity();
    Ok(total / s.lattice.covol() - (i * shape.volume()).powi(2))
}

/// `intensity * Vol_d(B_R)`.
pub fn poisson_variance(d: usize, intensity: f64, r: f64) -> f64 {
    intensity * unit_ball_volume(d) * r.powi(d as i32)
}

pub fn unit_ball_volume(d: usize) -> f64 {
    // V_d = 2 pi / d * V_{d-2}
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(ln eps, ln mass)` on the dyadic upper envelope.
    pub pairs: Vec<(f64, f64)>,
    pub method: String,
    pub dropped_zero: usize,
}

/// Least squares on the dyadic upper envelope of `(eps, mass)`.
///
/// Pairs must have strictly decreasing `eps`. Within each band
/// `eps_0 2^{-k-1} < eps <= eps_0 2^{-k}` only the largest mass is kept.
pub fn fit_scaling(pairs: &[(f64, f64)]) -> Result<ScalingFit> {
    if pairs.len() < 4 {
        return Err(QcsError::InvalidArgument("at least 4 (eps, mass) pairs are required".into()));
    }
    if pairs.windows(2).any(|w| !(w[1].0 < w[0].0)) || pairs.iter().any(|p| !(p.0 > 0.0) || p.1 < 0.0) {
        return Err(QcsError::InvalidArgument("eps must be positive and strictly decreasing, masses nonnegative".into()));
    }
    let eps0 = pairs[0].0;
    let mut bands: Vec<(i64, f64, f64)> = Vec::new();
    let mut dropped = 0;
    for &(e, m) in pairs {
        if m == 0.0 {
            dropped += 1;
            continue;
        }
        let band = (eps0 / e).log2().floor() as i64;
        match bands.last_mut() {
            Some(b) if b.0 == band => {
                if m > b.2 {
                    *b = (band, e, m);
                }
            }
            _ => bands.push((band, e, m)),
        }
    }
    if bands.len() < 2 {
        return Err(QcsError::InsufficientData("fewer than 2 nonzero masses".into()));
    }
    let pts: Vec<(f64, f64)> = bands.iter().map(|b| (b.1.ln(), b.2.ln())).collect();
    let (slope, intercept) =
        least_squares(&pts).ok_or_else(|| QcsError::InsufficientData("degenerate eps values".into()))?;
    Ok(ScalingFit { slope, intercept, pairs: pts, method: "upper-envelope least squares".into(), dropped_zero: dropped })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperuniformVerdict {
    SubPoissonian,
    NotDetermined,
    SuperPoissonian,
}

/// Empirical verdict over the fitted range: compares the decay exponent with `d1`.
pub fn classify_hyperuniform(fit: &ScalingFit, d1: usize, margin: f64) -> HyperuniformVerdict {
    let d = d1 as f64;
    if fit.slope >= d + margin {
        HyperuniformVerdict::SubPoissonian
    } else if fit.slope <= d - margin {
        HyperuniformVerdict::SuperPoissonian
    } else {
        HyperuniformVerdict::NotDetermined
    }
}

/// Predicted envelope `eps^{beta (d2 + theta)}` with constant one.
pub fn sufficient_condition_bound(beta: f64, d2: usize, theta: f64, eps: f64) -> f64 {
    eps.powf(beta * (d2 as f64 + theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianStatistic {
    pub value: f64,
    pub tail_bound: f64,
}

/// `eta(|phi_t^|^2)` for the Gaussian statistic, `sum w t^{-2d} exp(-2 pi |xi1|^2 / t^2)`.
pub fn gaussian_statistic_variance(m: &AtomicMeasure, t: f64, d: usize) -> Result<GaussianStatistic> {
    if !(t > 0.0) {
        return Err(QcsError::InvalidArgument("t must be positive".into()));
    }
    let scale = t.powi(-2 * d as i32);
    let kernel = |r: f64| scale * (-2.0 * PI * r * r / (t * t)).exp();
    let value: f64 = m.norms().iter().zip(m.weights()).map(|(n, w)| w * kernel(*n)).sum();
    let tail_bound = m.omitted_bound(d, kernel);
    if tail_bound > 0.1 * value {
        return Err(QcsError::CertifiedRegionTooSmall { value, tail_bound });
    }
    Ok(GaussianStatistic { value, tail_bound })
}

/// Gaussian statistic with the layers that certified it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptiveGaussian {
    pub t: f64,
    pub value: f64,
    pub tail_bound: f64,
    pub layers: Vec<LayerSpec>,
    pub rounds: usize,
}

const GAUSS_RADII: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.5];

/// `eta(|phi_t^|^2)` on annuli `|xi1| <= c t`, lowering each annulus floor until
/// the certified tail is at most `rel_tol` of the value.
///
/// The omitted mass of a layer scales like the square root of its floor, so each
/// round rescales the offending floors by the squared shortfall.
pub fn gaussian_statistic_adaptive(s: &Scheme, t: f64, rel_tol: f64, budget: u64) -> Result<AdaptiveGaussian> {
    if !(t > 0.0) || !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(QcsError::InvalidArgument("need t > 0 and 0 < rel_tol < 1".into()));
    }
    let d = s.d1();
    let kernel = |r: f64| t.powi(-2 * d as i32) * (-2.0 * PI * r * r / (t * t)).exp();
    let radii: Vec<f64> = GAUSS_RADII.iter().map(|c| c * t).collect();
    let mut floors: Vec<f64> = GAUSS_RADII
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let inner = if j == 0 { 0.0 } else { GAUSS_RADII[j - 1] };
            (1e-6 * t.powi(2 * d as i32 + 2) * (4.0 * PI * inner * inner).exp()).min(1e-2)
        })
        .collect();
    for round in 1..=8 {
        let specs: Vec<LayerSpec> =
            radii.iter().zip(&floors).map(|(&r, &f)| LayerSpec { eps_max: r, weight_floor: f }).collect();
        let m = centered_diffraction_layered(s, &specs, budget)?;
        let value: f64 = m.norms().iter().zip(m.weights()).map(|(n, w)| w * kernel(*n)).sum();
        let tail_bound = m.omitted_bound(d, kernel);
        if tail_bound <= rel_tol * value {
            return Ok(AdaptiveGaussian { t, value, tail_bound, layers: specs, rounds: round });
        }
        if value == 0.0 {
            return Err(QcsError::CertifiedRegionTooSmall { value, tail_bound });
        }
        let share = 0.8 * rel_tol * value / radii.len() as f64;
        for j in 0..radii.len() {
            let inner = if j == 0 { 0.0 } else { radii[j - 1] };
            let contrib = m.tail_at(radii[j]) * kernel(inner);
            if contrib > share {
                floors[j] *= ((share / contrib).powi(2)).max(1e-6);
            }
        }
    }
    Err(QcsError::Precision("floor refinement did not converge in 8 rounds".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RigidityCheck {
    pub pass: bool,
    pub c_hat: f64,
    pub ratios: Vec<f64>,
    pub tail_bounds: Vec<f64>,
}

/// Ratios `eta(B_{eps_n}) / eps_n^{2d + delta}`; passes when they do not increase
/// over the second half of the sequence.
pub fn rigidity_check(m: &AtomicMeasure, eps_seq: &[f64], d: usize, delta: f64) -> Result<RigidityCheck> {
    if eps_seq.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(QcsError::InvalidArgument("eps sequence must be strictly decreasing".into()));
    }
    let mut ratios = Vec::with_capacity(eps_seq.len());
    let mut tails = Vec::with_capacity(eps_seq.len());
    for &e in eps_seq {
        let b = m.ball_mass(e)?;
        ratios.push(b.mass / e.powf(2.0 * d as f64 + delta));
        tails.push(b.tail_bound);
    }
    let c_hat = ratios.iter().cloned().fold(0.0, f64::max);
    let start = ratios.len() / 2;
    let pass = ratios[start..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    Ok(RigidityCheck { pass, c_hat, ratios, tail_bounds: tails })
}

/// An atom of the `Gamma_a` diffraction with its dual coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaAtom {
    pub m: i64,
    pub n: i64,
    pub xi1: f64,
    pub xi2: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaMass {
    pub mass: f64,
    pub tail_bound: f64,
    pub atoms: usize,
}

/// Atoms `(am - n, 4a^2 |chi_{[-b,b]}(am + n)|^2)` with `|am - n| <= u`, `|m| <= m_max`.
/// The sine argument is reduced exactly, so resonant zeros are exact.
pub fn gamma_ab_atoms(a: &ExactRational, b: &ExactRational, u: &ExactRational, m_max: u64) -> Result<Vec<GammaAtom>> {
    let to_i = |v: &BigInt| v.to_i64().ok_or_else(|| QcsError::Precision("coefficient exceeds 64 bits".into()));
    gamma_ab_raw(a, b, u, &BigInt::from(m_max))?
        .into_iter()
        .map(|(m, n, xi1, xi2, weight)| Ok(GammaAtom { m: to_i(&m)?, n: to_i(&n)?, xi1, xi2, weight }))
        .collect()
}

type RawGammaAtom = (BigInt, BigInt, f64, f64, f64);

fn gamma_ab_raw(a: &ExactRational, b: &ExactRational, u: &ExactRational, m_max: &BigInt) -> Result<Vec<RawGammaAtom>> {
    check_gamma_ab(a, b, u)?;
    let pairs = diophantine_strip(a, u, m_max)?;
    let four_a2 = 4.0 * a.to_f64().powi(2);
    let mut out = Vec::with_capacity(pairs.len());
    for (m, n) in pairs {
        let am = a * &m;
        let nn = ExactRational::from_integer(n.clone());
        let xi2 = &am + &nn;
        let xi1 = &am - &nn;
        let s = (b * &xi2).sin_two_pi();
        let x2 = xi2.to_f64();
        let w = if s == 0.0 { 0.0 } else { four_a2 * (s / (PI * x2)).powi(2) };
        out.push((m, n, xi1.to_f64(), x2, w));
    }
    Ok(out)
}

fn check_gamma_ab(a: &ExactRational, b: &ExactRational, u: &ExactRational) -> Result<()> {
    if !a.is_positive() || !b.is_positive() {
        return Err(QcsError::InvalidArgument("a and b must be positive".into()));
    }
    if !u.is_positive() || *u >= ExactRational::one() {
        return Err(QcsError::InvalidArgument("u must lie in (0, 1)".into()));
    }
    Ok(())
}

/// `eta_{a,b}([-u, u])` summed over `|m| <= m_max`, with a bound on the rest.
pub fn diffraction_mass_gamma_ab(a: &ExactRational, b: &ExactRational, u: &ExactRational, m_max: u64) -> Result<GammaMass> {
    diffraction_mass_gamma_ab_big(a, b, u, &BigInt::from(m_max))
}

/// As [`diffraction_mass_gamma_ab`] for cutoffs beyond 64 bits.
pub fn diffraction_mass_gamma_ab_big(a: &ExactRational, b: &ExactRational, u: &ExactRational, m_max: &BigInt) -> Result<GammaMass> {
    let atoms = gamma_ab_raw(a, b, u, m_max)?;
    let mass = atoms.iter().map(|t| t.4).sum();
    Ok(GammaMass { mass, tail_bound: gamma_ab_tail(a, u, m_max)?, atoms: atoms.len() })
}

// For |m| > M the internal part obeys |am + n| >= 2a|m| - u, and strip points
// are spaced at least s apart in m, where s is the least m > 0 with {am} <= 2u.
fn gamma_ab_tail(a: &ExactRational, u: &ExactRational, m_max: &BigInt) -> Result<f64> {
    let af = a.to_f64();
    let uf = u.to_f64();
    let big_m = m_max.to_f64().unwrap_or(f64::INFINITY);
    if 2.0 * af * big_m <= uf {
        return Ok(f64::INFINITY);
    }
    let two_u = u * &ExactRational::from_integer(2);
    let near = diophantine_strip(a, &two_u, &(m_max + 1u32))?;
    let s = near
        .iter()
        .filter(|(m, _)| m.is_positive())
        .map(|(m, _)| m.to_f64().unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min);
    let s = if s.is_finite() { s } else { big_m + 1.0 };
    let per_m = if uf < 0.5 { 1.0 } else { 2.0 };
    let first = 1.0 / (2.0 * af * (big_m + 1.0) - uf).powi(2);
    let rest = 1.0 / (2.0 * af * s * (2.0 * af * big_m - uf));
    Ok(per_m * 8.0 * af * af / (PI * PI) * (first + rest))
}
