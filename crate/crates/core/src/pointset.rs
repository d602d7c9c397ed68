//! Random realizations of cut-and-project sets, Monte Carlo number variances,
//! the Poisson baseline and Meyer-property checks.
//!
//! Convention: the torus point `(g, h)` realizes
//! `{gamma1 + g : gamma in Gamma, gamma2 + h in W}`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::diffraction::{unit_ball_volume, Scheme};
use crate::error::{QcsError, Result};
use crate::lattice::BoxRegion;

/// Generator for sample `index` of a run keyed by `seed`. Each index gets its
/// own ChaCha stream, so results do not depend on scheduling.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derived seed for the `k`-th member of a family of runs (SplitMix64 finalizer).
pub fn split_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A point of `Gamma \ (R^{d1} x R^{d2})` in fundamental-domain coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TorusPoint {
    pub coeffs: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl TorusPoint {
    pub fn from_coeffs(s: &Scheme, coeffs: Vec<f64>) -> Result<Self> {
        let n = s.lattice.dim();
        if coeffs.len() != n || coeffs.iter().any(|c| !(0.0..1.0).contains(c)) {
            return Err(QcsError::InvalidArgument("coefficients must lie in [0, 1)".into()));
        }
        let b = s.lattice.basis();
        let x: Vec<f64> = (0..n).map(|i| (0..n).map(|j| b[(i, j)] * coeffs[j]).sum()).collect();
        let d1 = s.d1();
        Ok(Self { coeffs, g: x[..d1].to_vec(), h: x[d1..].to_vec() })
    }

    /// The class of `(g, h)`, reduced to the fundamental domain.
    pub fn from_gh(s: &Scheme, g: &[f64], h: &[f64]) -> Result<Self> {
        let n = s.lattice.dim();
        let x: Vec<f64> = g.iter().chain(h).copied().collect();
        if x.len() != n {
            return Err(QcsError::InvalidArgument("g and h have the wrong dimensions".into()));
        }
        let inv = s.lattice.inverse();
        let coeffs = (0..n)
            .map(|i| {
                let c: f64 = (0..n).map(|j| inv[(i, j)] * x[j]).sum();
                let f = c - c.floor();
                if f >= 1.0 { 0.0 } else { f }
            })
            .collect();
        Self::from_coeffs(s, coeffs)
    }

    /// The point moved by `s` along the physical directions.
    pub fn shifted(&self, scheme: &Scheme, s: &[f64]) -> Result<Self> {
        let g: Vec<f64> = self.g.iter().zip(s).map(|(a, b)| a + b).collect();
        Self::from_gh(scheme, &g, &self.h)
    }
}

/// Uniform point of the torus; coefficients iid uniform on `[0, 1)`.
pub fn sample_torus(s: &Scheme, seed: u64) -> TorusPoint {
    torus_from_rng(s, &mut sample_rng(seed, 0))
}

fn torus_from_rng(s: &Scheme, rng: &mut impl Rng) -> TorusPoint {
    let coeffs = (0..s.lattice.dim()).map(|_| rng.random::<f64>()).collect();
    TorusPoint::from_coeffs(s, coeffs).expect("uniform draws lie in [0, 1)")
}

#[derive(Clone, Debug, Serialize)]
pub struct PointSample {
    pub points: Vec<Vec<f64>>,
    pub region: BoxRegion,
    pub origin: Option<TorusPoint>,
    pub scheme_label: String,
}

impl PointSample {
    pub fn d1(&self) -> usize {
        self.region.dim()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# scheme={}", self.scheme_label);
        let _ = writeln!(s, "# region_lo={:?} region_hi={:?}", self.region.lo, self.region.hi);
        let cols: Vec<String> = (0..self.d1()).map(|i| format!("x{i}")).collect();
        let _ = writeln!(s, "{}", cols.join(","));
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

fn window_search_box(s: &Scheme, h: &[f64]) -> BoxRegion {
    let neg: Vec<f64> = h.iter().map(|v| -v).collect();
    s.window.bounding_box().translate(&neg)
}

/// The realized point set inside `region`, sorted lexicographically.
pub fn realize_pointset(s: &Scheme, omega: &TorusPoint, region: &BoxRegion, budget: u64) -> Result<PointSample> {
    let d1 = s.d1();
    if region.dim() != d1 {
        return Err(QcsError::InvalidArgument("region dimension differs from d1".into()));
    }
    let neg_g: Vec<f64> = omega.g.iter().map(|v| -v).collect();
    let box1 = region.translate(&neg_g);
    let box2 = window_search_box(s, &omega.h);
    let chunks = s.lattice.fold_in_box(&box1, &box2, budget, Vec::new, |acc: &mut Vec<Vec<f64>>, _, x| {
        let internal: Vec<f64> = x[d1..].iter().zip(&omega.h).map(|(a, b)| a + b).collect();
        if !s.window.contains(&internal) {
            return;
        }
        let p: Vec<f64> = x[..d1].iter().zip(&omega.g).map(|(a, b)| a + b).collect();
        if region.contains(&p) {
            acc.push(p);
        }
    })?;
    let mut points: Vec<Vec<f64>> = chunks.into_iter().flatten().collect();
    points.sort_by(|a, b| a.iter().zip(b).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(PointSample { points, region: region.clone(), origin: Some(omega.clone()), scheme_label: s.label.clone() })
}

/// Number of realized points in the closed Euclidean ball of radius `r` about 0.
pub fn count_in_ball(s: &Scheme, omega: &TorusPoint, r: f64, budget: u64) -> Result<u64> {
    let d1 = s.d1();
    let box1 = BoxRegion::new(
        omega.g.iter().map(|g| -r - g).collect(),
        omega.g.iter().map(|g| r - g).collect(),
    );
    let box2 = window_search_box(s, &omega.h);
    let r2 = r * r;
    let chunks = s.lattice.fold_in_box(&box1, &box2, budget, || 0u64, |acc: &mut u64, _, x| {
        let mut internal = [0.0f64; 8];
        let d2 = x.len() - d1;
        for k in 0..d2 {
            internal[k] = x[d1 + k] + omega.h[k];
        }
        if !s.window.contains(&internal[..d2]) {
            return;
        }
        let n2: f64 = x[..d1].iter().zip(&omega.g).map(|(a, b)| (a + b) * (a + b)).sum();
        if n2 <= r2 {
            *acc += 1;
        }
    })?;
    Ok(chunks.into_iter().sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceEstimate {
    #[serde(rename = "R")]
    pub r: f64,
    pub n_samples: usize,
    pub mean_count: f64,
    pub variance: f64,
    pub stderr_variance: f64,
    pub seed: u64,
}

/// Sample variance (Bessel corrected) with the fourth-moment standard error
/// `sqrt((m4 - var^2) / n)`.
pub fn variance_from_counts(counts: &[f64], r: f64, seed: u64) -> Result<VarianceEstimate> {
    let n = counts.len();
    if n < 2 {
        return Err(QcsError::InvalidArgument("at least 2 samples are required".into()));
    }
    let nf = n as f64;
    let mean = counts.iter().sum::<f64>() / nf;
    let m2: f64 = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>();
    let m4: f64 = counts.iter().map(|c| (c - mean).powi(4)).sum::<f64>() / nf;
    let variance = m2 / (nf - 1.0);
    let stderr = ((m4 - (m2 / nf).powi(2)).max(0.0) / nf).sqrt();
    Ok(VarianceEstimate { r, n_samples: n, mean_count: mean, variance, stderr_variance: stderr, seed })
}

/// Variance of `#(Lambda_omega cap B_R)` over iid uniform torus points.
pub fn mc_number_variance(s: &Scheme, r: f64, n_samples: usize, seed: u64, budget: u64) -> Result<VarianceEstimate> {
    if n_samples < 2 {
        return Err(QcsError::InvalidArgument("at least 2 samples are required".into()));
    }
    let counts: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let omega = torus_from_rng(s, &mut sample_rng(seed, i));
            count_in_ball(s, &omega, r, budget).map(|c| c as f64)
        })
        .collect::<Result<_>>()?;
    variance_from_counts(&counts, r, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnvPoint {
    #[serde(rename = "R")]
    pub r: f64,
    pub variance: f64,
    pub var_over_vol: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

/// `Var / Vol(B_R)` along `r_grid`; the `k`-th radius uses `split_seed(seed, k)`.
pub fn mc_anv_curve(s: &Scheme, r_grid: &[f64], n_samples: usize, seed: u64, budget: u64) -> Result<Vec<AnvPoint>> {
    let vol = |r: f64| unit_ball_volume(s.d1()) * r.powi(s.d1() as i32);
    r_grid
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let sub = split_seed(seed, k as u64);
            let v = mc_number_variance(s, r, n_samples, sub, budget)?;
            Ok(AnvPoint {
                r,
                variance: v.variance,
                var_over_vol: v.variance / vol(r),
                stderr: v.stderr_variance / vol(r),
                n: n_samples,
                seed: sub,
            })
        })
        .collect()
}

pub fn anv_csv(curve: &[AnvPoint]) -> String {
    let mut s = String::from("R,var,var_over_vol,stderr,n,seed\n");
    for p in curve {
        let _ = writeln!(s, "{},{},{},{},{},{}", p.r, p.variance, p.var_over_vol, p.stderr, p.n, p.seed);
    }
    s
}

/// Homogeneous Poisson process restricted to `region`.
pub fn poisson_sampler(intensity: f64, region: &BoxRegion, seed: u64) -> Result<PointSample> {
    poisson_from_rng(intensity, region, &mut sample_rng(seed, 0))
}

fn poisson_from_rng(intensity: f64, region: &BoxRegion, rng: &mut impl Rng) -> Result<PointSample> {
    if !(intensity >= 0.0) || region.lo.iter().chain(&region.hi).any(|v| !v.is_finite()) {
        return Err(QcsError::InvalidArgument("need a finite intensity >= 0 and a bounded region".into()));
    }
    let mean = intensity * region.volume();
    let count = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| QcsError::InvalidArgument(e.to_string()))?.sample(rng) as usize
    } else {
        0
    };
    let points = (0..count)
        .map(|_| region.lo.iter().zip(&region.hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect())
        .collect();
    Ok(PointSample { points, region: region.clone(), origin: None, scheme_label: "poisson".into() })
}

/// Monte Carlo count variance of a Poisson process in the Euclidean ball `B_R` of `R^d`.
pub fn mc_poisson_variance(d: usize, intensity: f64, r: f64, n_samples: usize, seed: u64) -> Result<VarianceEstimate> {
    let region = BoxRegion::symmetric(d, r);
    let counts: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let p = poisson_from_rng(intensity, &region, &mut sample_rng(seed, i))?;
            Ok(p.points.iter().filter(|x| x.iter().map(|v| v * v).sum::<f64>() <= r * r).count() as f64)
        })
        .collect::<Result<_>>()?;
    variance_from_counts(&counts, r, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeyerReport {
    pub min_gap: f64,
    pub covering_radius: f64,
    pub margin: f64,
    pub two_syndetic_in_z: Option<bool>,
}

/// Minimum gap, covering radius on the region shrunk by `margin`, and for sets
/// inside a translate of `Z` whether `Lambda cup (Lambda + 1)` covers the integers.
///
/// Without a margin, the covering radius computed with no margin is used as the margin.
pub fn meyer_checks(p: &PointSample, margin: Option<f64>) -> Result<MeyerReport> {
    if p.points.len() < 2 {
        return Err(QcsError::InvalidArgument("at least 2 points are required".into()));
    }
    let margin = match margin {
        Some(m) => m,
        None => covering_radius(p, 0.0),
    };
    let cov = covering_radius(p, margin);
    let two = if p.d1() == 1 { two_syndetic(p, margin) } else { None };
    Ok(MeyerReport { min_gap: min_gap(p), covering_radius: cov, margin, two_syndetic_in_z: two })
}

fn min_gap(p: &PointSample) -> f64 {
    let mut pts = p.points.clone();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if pts[j][0] - pts[i][0] >= best {
                break;
            }
            let d = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    best
}

fn covering_radius(p: &PointSample, margin: f64) -> f64 {
    let lo: Vec<f64> = p.region.lo.iter().map(|v| v + margin).collect();
    let hi: Vec<f64> = p.region.hi.iter().map(|v| v - margin).collect();
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        return f64::NAN;
    }
    if p.d1() == 1 {
        let mut xs: Vec<f64> = p.points.iter().map(|v| v[0]).collect();
        xs.sort_by(f64::total_cmp);
        let (a, b) = (lo[0], hi[0]);
        let dist = |x: f64| {
            let k = xs.partition_point(|v| *v < x);
            let mut d = f64::INFINITY;
            if k < xs.len() {
                d = d.min(xs[k] - x);
            }
            if k > 0 {
                d = d.min(x - xs[k - 1]);
            }
            d
        };
        let mut best = dist(a).max(dist(b));
        for w in xs.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            if mid >= a && mid <= b {
                best = best.max(0.5 * (w[1] - w[0]));
            }
        }
        return best;
    }
    // grid probe
    let d = p.d1();
    let per_axis = ((20_000f64).powf(1.0 / d as f64)).floor().max(2.0) as usize;
    let mut best: f64 = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = (0..d)
            .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (per_axis - 1) as f64)
            .collect();
        let near = p
            .points
            .iter()
            .map(|q| q.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        best = best.max(near);
        let mut k = 0;
        loop {
            if k == d {
                return best;
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn two_syndetic(p: &PointSample, margin: f64) -> Option<bool> {
    let t = p.points[0][0] - p.points[0][0].round();
    let mut ints = std::collections::BTreeSet::new();
    for q in &p.points {
        let k = (q[0] - t).round();
        if (q[0] - t - k).abs() > 1e-9 {
            return None;
        }
        ints.insert(k as i64);
    }
    let lo = (p.region.lo[0] + margin - t).ceil() as i64;
    let hi = (p.region.hi[0] - margin - t).floor() as i64;
    Some((lo..=hi).all(|k| ints.contains(&k) || ints.contains(&(k - 1))))
}
