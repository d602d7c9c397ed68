//! Acceptance windows in internal space and the Fourier transforms of their
//! indicators, `chi_W(xi) = int_W exp(-2 pi i <x, xi>) dx`.
//!
//! Windows may be translated off the origin. Translation only multiplies the
//! transform by a unit phase, so diffraction weights `|chi_W|^2` ignore it.
//! Boundaries are treated as closed; open and closed windows differ by a null set.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QcsError, Result};
use crate::lattice::BoxRegion;
use crate::rational::ExactRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Interval,
    EuclideanBall,
    CenteredBox,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Interval { b: f64 },
    Ball { r: f64 },
    Box { half_widths: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    shape: Shape,
    d2: usize,
    center: Vec<f64>,
}

impl Window {
    /// `[c - b, c + b]` with `c = 0`.
    pub fn interval(b: f64) -> Result<Self> {
        positive("half-width", b)?;
        Ok(Self { shape: Shape::Interval { b }, d2: 1, center: vec![0.0] })
    }

    /// `[lo, hi]`.
    pub fn interval_between(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(QcsError::InvalidArgument(format!("bad interval [{lo}, {hi}]")));
        }
        Self::interval((hi - lo) / 2.0)?.with_center(vec![(lo + hi) / 2.0])
    }

    pub fn ball(d2: usize, r: f64) -> Result<Self> {
        if !(1..=3).contains(&d2) {
            return Err(QcsError::InvalidArgument(format!("balls are supported for d2 in 1..=3, got {d2}")));
        }
        positive("radius", r)?;
        Ok(Self { shape: Shape::Ball { r }, d2, center: vec![0.0; d2] })
    }

    pub fn centered_box(half_widths: Vec<f64>) -> Result<Self> {
        if half_widths.is_empty() {
            return Err(QcsError::InvalidArgument("box needs at least one axis".into()));
        }
        for &b in &half_widths {
            positive("half-width", b)?;
        }
        let d2 = half_widths.len();
        Ok(Self { shape: Shape::Box { half_widths }, d2, center: vec![0.0; d2] })
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        if center.len() != self.d2 || center.iter().any(|c| !c.is_finite()) {
            return Err(QcsError::InvalidArgument("center has wrong dimension or is not finite".into()));
        }
        self.center = center;
        Ok(self)
    }

    pub fn kind(&self) -> WindowKind {
        match self.shape {
            Shape::Interval { .. } => WindowKind::Interval,
            Shape::Ball { .. } => WindowKind::EuclideanBall,
            Shape::Box { .. } => WindowKind::CenteredBox,
        }
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Fourier-smoothness exponent; `None` for boxes in dimension two and up.
    pub fn theta(&self) -> Option<f64> {
        match &self.shape {
            Shape::Interval { .. } | Shape::Ball { .. } => Some(1.0),
            Shape::Box { half_widths } if half_widths.len() == 1 => Some(1.0),
            Shape::Box { .. } => None,
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Interval { b } => 2.0 * b,
            Shape::Ball { r } => match self.d2 {
                1 => 2.0 * r,
                2 => PI * r * r,
                _ => 4.0 * PI * r * r * r / 3.0,
            },
            Shape::Box { half_widths } => half_widths.iter().map(|b| 2.0 * b).product(),
        }
    }

    /// Largest distance from the center to a point of the window, in the sup norm.
    pub fn sup_radius(&self) -> f64 {
        match &self.shape {
            Shape::Interval { b } => *b,
            Shape::Ball { r } => *r,
            Shape::Box { half_widths } => half_widths.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn bounding_box(&self) -> BoxRegion {
        let hw: Vec<f64> = match &self.shape {
            Shape::Interval { b } => vec![*b],
            Shape::Ball { r } => vec![*r; self.d2],
            Shape::Box { half_widths } => half_widths.clone(),
        };
        BoxRegion::new(
            self.center.iter().zip(&hw).map(|(c, h)| c - h).collect(),
            self.center.iter().zip(&hw).map(|(c, h)| c + h).collect(),
        )
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(v, c)| v - c).collect();
        match &self.shape {
            Shape::Interval { b } => d[0].abs() <= *b,
            Shape::Ball { r } => d.iter().map(|v| v * v).sum::<f64>() <= r * r,
            Shape::Box { half_widths } => d.iter().zip(half_widths).all(|(v, b)| v.abs() <= *b),
        }
    }

    /// The transform of the window translated back to the origin. Real-valued.
    pub fn ft_centered(&self, xi: &[f64]) -> f64 {
        assert_eq!(xi.len(), self.d2, "frequency dimension mismatch");
        match &self.shape {
            Shape::Interval { b } => interval_ft(*b, xi[0]),
            Shape::Box { half_widths } => half_widths.iter().zip(xi).map(|(b, x)| interval_ft(*b, *x)).product(),
            Shape::Ball { r } => {
                let k = norm2(xi);
                match self.d2 {
                    1 => interval_ft(*r, xi[0]),
                    2 => disk_ft(*r, k),
                    _ => ball3_ft(*r, k),
                }
            }
        }
    }

    pub fn ft_indicator(&self, xi: &[f64]) -> Complex64 {
        let re = self.ft_centered(xi);
        let phase: f64 = self.center.iter().zip(xi).map(|(c, x)| c * x).sum();
        if phase == 0.0 || re == 0.0 {
            return Complex64::new(re, 0.0);
        }
        let (s, c) = (2.0 * PI * phase).sin_cos();
        Complex64::new(re * c, -re * s)
    }

    /// `|chi_W(xi)|^2`.
    pub fn ft_abs2(&self, xi: &[f64]) -> f64 {
        let v = self.ft_centered(xi);
        v * v
    }

    /// Pointwise upper bound for `|chi_W(xi)|`.
    pub fn envelope(&self, xi: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { b } => interval_env(*b, xi[0].abs()),
            Shape::Box { half_widths } => half_widths.iter().zip(xi).map(|(b, x)| interval_env(*b, x.abs())).product(),
            Shape::Ball { .. } => self.radial_envelope(norm2(xi)),
        }
    }

    /// Upper bound for `|chi_W(xi)|` over all `xi` with `|xi| >= k`, where the
    /// norm is Euclidean for balls and the sup norm otherwise.
    pub fn radial_envelope(&self, k: f64) -> f64 {
        let k = k.abs();
        let vol = self.volume();
        match &self.shape {
            Shape::Interval { b } => interval_env(*b, k),
            Shape::Box { half_widths } => {
                let full: f64 = half_widths.iter().map(|b| 2.0 * b).product();
                half_widths
                    .iter()
                    .map(|b| full / (2.0 * b) * interval_env(*b, k))
                    .fold(0.0, f64::max)
            }
            Shape::Ball { r } => {
                if k == 0.0 {
                    return vol;
                }
                let bound = match self.d2 {
                    1 => 1.0 / (PI * k),
                    // Landau: |J_1(x)| <= 0.7858 x^{-1/3}
                    2 => r * 0.785_746_870_5 * (2.0 * PI * r * k).powf(-1.0 / 3.0) / k,
                    _ => (1.0 + 2.0 * PI * r * k) / (2.0 * PI * PI * k.powi(3)),
                };
                bound.min(vol)
            }
        }
    }

    /// Smallest `k` (to within a relative `1e-9`) beyond which the radial envelope
    /// stays below `level`.
    pub fn envelope_cutoff(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return f64::INFINITY;
        }
        if self.radial_envelope(0.0) < level {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.radial_envelope(hi) >= level {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            if self.radial_envelope(mid) >= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// `vol(W cap (W + t))`.
    pub fn covariogram(&self, t: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { b } => (2.0 * b - t[0].abs()).max(0.0),
            Shape::Box { half_widths } => half_widths.iter().zip(t).map(|(b, v)| (2.0 * b - v.abs()).max(0.0)).product(),
            Shape::Ball { r } => {
                let d = norm2(t);
                if d >= 2.0 * r {
                    return 0.0;
                }
                match self.d2 {
                    1 => 2.0 * r - d,
                    2 => 2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt(),
                    _ => PI / 12.0 * (4.0 * r + d) * (2.0 * r - d).powi(2),
                }
            }
        }
    }

    /// `int |chi_W|^2` over the frequencies outside radius `k`, where the region is
    /// the Euclidean ball for balls and the sup-norm cube otherwise.
    ///
    /// Exact up to quadrature error for intervals and boxes. For balls beyond
    /// `50/r` the oscillating part is replaced by its mean, which leaves a relative
    /// error of order `1/(r k)`.
    pub fn abs2_integral_outside(&self, k: f64) -> f64 {
        let k = k.max(0.0);
        match &self.shape {
            Shape::Interval { b } => 2.0 * interval_abs2_tail(*b, k),
            Shape::Box { half_widths } => {
                let inside: f64 = half_widths.iter().map(|b| 2.0 * b - 2.0 * interval_abs2_tail(*b, k)).product();
                (self.volume() - inside).max(0.0)
            }
            Shape::Ball { r } => match self.d2 {
                1 => 2.0 * interval_abs2_tail(*r, k),
                _ => ball_abs2_tail(self, *r, k),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&WindowJson::from(self)).expect("window serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: WindowJson = serde_json::from_str(s).map_err(|e| QcsError::Parse(e.to_string()))?;
        Self::try_from(j)
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(QcsError::InvalidArgument(format!("{what} must be positive and finite, got {v}")))
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn interval_env(b: f64, k: f64) -> f64 {
    if k == 0.0 {
        2.0 * b
    } else {
        (2.0 * b).min(1.0 / (PI * k))
    }
}

/// `sin(pi x)`, exactly zero when `x` is an integer.
pub fn sin_pi(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    // |x| mod 2 is exact in floating point; odd symmetry keeps sin_pi(-x) = -sin_pi(x)
    let a = x.abs();
    let mut r = a - 2.0 * (0.5 * a).floor();
    if r == r.trunc() {
        return 0.0;
    }
    if r > 1.0 {
        r -= 2.0;
    }
    // fold into [-1/2, 1/2] using sin(pi(1 - r)) = sin(pi r)
    if r > 0.5 {
        r = 1.0 - r;
    } else if r < -0.5 {
        r = -1.0 - r;
    }
    if x < 0.0 {
        r = -r;
    }
    (PI * r).sin()
}

/// `sin(2 pi b xi) / (pi xi)`, the transform of `[-b, b]`.
pub fn interval_ft(b: f64, xi: f64) -> f64 {
    if xi == 0.0 {
        return 2.0 * b;
    }
    sin_pi(2.0 * b * xi) / (PI * xi)
}

/// Interval transform on exact inputs: zero exactly when `2 b xi` is an integer.
pub fn interval_ft_exact(b: &ExactRational, xi: &ExactRational) -> f64 {
    if xi.is_zero() {
        return 2.0 * b.to_f64();
    }
    (b * xi).sin_two_pi() / (PI * xi.to_f64())
}

fn disk_ft(r: f64, k: f64) -> f64 {
    if k == 0.0 {
        return PI * r * r;
    }
    r * bessel_j1(2.0 * PI * r * k) / k
}

fn ball3_ft(r: f64, k: f64) -> f64 {
    let vol = 4.0 * PI * r * r * r / 3.0;
    let x = 2.0 * PI * r * k;
    if x < 0.05 {
        let x2 = x * x;
        // 3 (sin x - x cos x) / x^3
        return vol * (1.0 - x2 / 10.0 + x2 * x2 / 280.0 - x2 * x2 * x2 / 15120.0);
    }
    (x.sin() - x * x.cos()) / (2.0 * PI * PI * k.powi(3))
}

// int_k^inf sin^2(2 pi b x) / (pi x)^2 dx
fn interval_abs2_tail(b: f64, k: f64) -> f64 {
    if k == 0.0 {
        return b;
    }
    let x0 = 20.0 / b;
    if k >= x0 {
        return interval_abs2_tail_asymptotic(b, k);
    }
    let width = 1.0 / (8.0 * b);
    let panels = ((x0 - k) / width).ceil().max(1.0) as usize;
    let f = |x: f64| {
        let v = interval_ft(b, x);
        v * v
    };
    gauss_legendre(f, k, x0, panels) + interval_abs2_tail_asymptotic(b, x0)
}

// sin^2 = (1 - cos(c x)) / 2 with c = 4 pi b, and
// int_k^inf e^{icx} x^{-2} dx ~ -(e^{ick} / (i c k^2)) sum_j (j+1)! / (i c k)^j.
fn interval_abs2_tail_asymptotic(b: f64, k: f64) -> f64 {
    let c = 4.0 * PI * b;
    let ick = Complex64::new(0.0, c * k);
    let mut term = Complex64::new(1.0, 0.0);
    let mut series = term;
    for j in 1..30 {
        term = term * (j as f64 + 1.0) / ick;
        series += term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    let phase = Complex64::from_polar(1.0, (c * k) % (2.0 * PI));
    let osc = -(phase / (Complex64::new(0.0, c) * k * k)) * series;
    (0.5 / k - 0.5 * osc.re) / (PI * PI)
}

fn ball_abs2_tail(w: &Window, r: f64, k: f64) -> f64 {
    let d = w.d2 as f64;
    let shell = if w.d2 == 2 { 2.0 * PI } else { 4.0 * PI };
    let x0 = 50.0 / r;
    // mean of the oscillating radial integrand beyond x0
    let mean_tail = |k: f64| {
        if w.d2 == 2 {
            r / (PI * k)
        } else {
            2.0 * r * r / (PI * k) + 1.0 / (6.0 * PI.powi(3) * k.powi(3))
        }
    };
    if k >= x0 {
        return mean_tail(k);
    }
    let width = 1.0 / (8.0 * r);
    let panels = ((x0 - k) / width).ceil().max(1.0) as usize;
    let f = |q: f64| {
        let v = if w.d2 == 2 { disk_ft(r, q) } else { ball3_ft(r, q) };
        shell * q.powf(d - 1.0) * v * v
    };
    gauss_legendre(f, k, x0, panels) + mean_tail(x0)
}

const GL_NODES: usize = 16;

fn gl_rule() -> &'static ([f64; GL_NODES], [f64; GL_NODES]) {
    static RULE: std::sync::OnceLock<([f64; GL_NODES], [f64; GL_NODES])> = std::sync::OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_NODES;
        let mut x = [0.0; GL_NODES];
        let mut w = [0.0; GL_NODES];
        for i in 0..n {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    })
}

/// Composite Gauss-Legendre quadrature with `panels` equal panels.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gl_rule();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let s: f64 = x.iter().zip(w).map(|(xi, wi)| wi * f(mid + 0.5 * h * xi)).sum();
        total += 0.5 * h * s;
    }
    total
}

/// Bessel function `J_1`, absolute error below `1e-12` on the real line.
pub fn bessel_j1(z: f64) -> f64 {
    if z < 0.0 {
        return -bessel_j1(-z);
    }
    if z <= 8.0 {
        j1_series(z)
    } else if z <= 40.0 {
        j1_trapezoid(z)
    } else {
        j1_hankel(z)
    }
}

fn j1_series(z: f64) -> f64 {
    let h = z / 2.0;
    let h2 = h * h;
    let mut term = h;
    let mut sum = term;
    for k in 1..60 {
        term *= -h2 / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

// J_1(z) = (1/2pi) int_0^{2pi} cos(t - z sin t) dt; the integrand is periodic and
// entire, so the trapezoid rule converges geometrically once n exceeds z.
fn j1_trapezoid(z: f64) -> f64 {
    let n = 2 * (z.ceil() as usize + 40);
    let h = 2.0 * PI / n as f64;
    let s: f64 = (0..n)
        .map(|i| {
            let t = i as f64 * h;
            (t - z * t.sin()).cos()
        })
        .sum();
    s / n as f64
}

fn j1_hankel(z: f64) -> f64 {
    let mu = 4.0;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * z);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = z - 0.75 * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothCheck {
    pub sup_constant: f64,
    /// Sup of the normalized transform over the last decade of the grid.
    pub last_decade: f64,
    /// Sup over the decade before it.
    pub previous_decade: f64,
    pub pass: bool,
}

/// Checks `|chi_W(xi)| (1 + |xi|)^{(d2 + theta)/2}` stays bounded on `xi_grid`.
///
/// The check passes when the sup is finite and the last decade of `|xi|` does
/// not exceed the decade before it by more than half.
pub fn verify_fourier_smooth(w: &Window, xi_grid: &[Vec<f64>]) -> Result<SmoothCheck> {
    let theta = w
        .theta()
        .ok_or_else(|| QcsError::InvalidArgument("window is not Fourier smooth".into()))?;
    let expo = (w.d2() as f64 + theta) / 2.0;
    let vals: Vec<(f64, f64)> = xi_grid
        .iter()
        .map(|xi| {
            let k = norm2(xi);
            (k, w.ft_centered(xi).abs() * (1.0 + k).powf(expo))
        })
        .collect();
    let sup = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    let kmax = vals.iter().map(|v| v.0).fold(0.0, f64::max);
    let band = |lo: f64, hi: f64| {
        vals.iter()
            .filter(|(k, _)| *k > lo && *k <= hi)
            .map(|v| v.1)
            .fold(0.0, f64::max)
    };
    let last = band(kmax / 10.0, kmax);
    let prev = band(kmax / 100.0, kmax / 10.0);
    let stable = prev == 0.0 || last <= 1.5 * prev;
    Ok(SmoothCheck { sup_constant: sup, last_decade: last, previous_decade: prev, pass: sup.is_finite() && stable })
}

/// `n` frequencies with norms log-spaced in `[lo, hi]`, alternating between the
/// first axis and the diagonal direction.
pub fn log_radial_grid(d2: usize, lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    let diag = 1.0 / (d2 as f64).sqrt();
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            let k = lo * (hi / lo).powf(t);
            if i % 2 == 0 {
                let mut v = vec![0.0; d2];
                v[0] = k;
                v
            } else {
                vec![k * diag; d2]
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct WindowJson {
    kind: WindowKind,
    d2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_widths: Option<Vec<f64>>,
    #[serde(default)]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<Vec<f64>>,
}

impl From<&Window> for WindowJson {
    fn from(w: &Window) -> Self {
        let (radius, half_widths) = match &w.shape {
            Shape::Interval { b } => (Some(*b), None),
            Shape::Ball { r } => (Some(*r), None),
            Shape::Box { half_widths } => (None, Some(half_widths.clone())),
        };
        let center = if w.center.iter().all(|c| *c == 0.0) { None } else { Some(w.center.clone()) };
        Self { kind: w.kind(), d2: w.d2, radius, half_widths, theta: w.theta(), center }
    }
}

impl TryFrom<WindowJson> for Window {
    type Error = QcsError;

    fn try_from(j: WindowJson) -> Result<Self> {
        let missing = |f: &str| QcsError::Parse(format!("window json is missing {f}"));
        let w = match j.kind {
            WindowKind::Interval => {
                if j.d2 != 1 {
                    return Err(QcsError::Parse("interval windows have d2 = 1".into()));
                }
                Window::interval(j.radius.ok_or_else(|| missing("radius"))?)?
            }
            WindowKind::EuclideanBall => Window::ball(j.d2, j.radius.ok_or_else(|| missing("radius"))?)?,
            WindowKind::CenteredBox => {
                let hw = j.half_widths.ok_or_else(|| missing("half_widths"))?;
                if hw.len() != j.d2 {
                    return Err(QcsError::Parse("half_widths length differs from d2".into()));
                }
                Window::centered_box(hw)?
            }
        };
        match j.center {
            Some(c) => w.with_center(c),
            None => Ok(w),
        }
    }
}
