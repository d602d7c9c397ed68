//! Suspension of the doubling solenoid over `B = [0, 1/2] ∪ (q, 1)` on the circle
//! factor: correlations, asymptotic variance, the Conze-Le Borgne window, the
//! coboundary obstruction and simulated orbits.
//!
//! Every double `q` in `[1/2, 1)` is `M / 2^53` for an integer `M`; all
//! reductions mod 1 below are done on that integer.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QcsError, Result};
use crate::pointset::{sample_rng, variance_from_counts, VarianceEstimate};
use crate::rational::ExactRational;

const Q_BITS: u32 = 53;
const Q_MOD: u128 = 1 << Q_BITS;

/// Extra bits drawn past the binary expansion of `q` before giving up on a
/// membership decision.
pub const EXTRA_BITS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SuspensionParams {
    pub q: f64,
}

impl SuspensionParams {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.5 && q <= 0.75) {
            return Err(QcsError::InvalidArgument(format!("q must lie in (1/2, 3/4], got {q}")));
        }
        Ok(Self { q })
    }

    /// `m(B) = 3/2 - q`.
    pub fn theta(&self) -> f64 {
        1.5 - self.q
    }

    /// `c_0 = m(B)(1 - m(B))`.
    pub fn c0(&self) -> f64 {
        (1.5 - self.q) * (self.q - 0.5)
    }

    fn numerator(&self) -> u128 {
        numerator_of(self.q)
    }
}

fn numerator_of(q: f64) -> u128 {
    let m = q * Q_MOD as f64;
    debug_assert!(m.fract() == 0.0);
    m as u128
}

/// Fractional part of `k q` as a multiple of `2^-53`.
fn frac_kq(num: u128, k: i128) -> u128 {
    (k.rem_euclid(Q_MOD as i128) as u128 * num) % Q_MOD
}

/// `exp(-2 pi i f / 2^53)` with quarter turns exact.
fn cis_neg(f: u128) -> Complex64 {
    let quarter = Q_MOD / 4;
    if f.is_multiple_of(quarter) {
        return match f / quarter {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
    }
    // center into (-1/2, 1/2] turns
    let t = if f > Q_MOD / 2 { -((Q_MOD - f) as f64) } else { f as f64 } / Q_MOD as f64;
    let a = -2.0 * PI * t;
    Complex64::new(a.cos(), a.sin())
}

/// Fourier coefficient of `psi = 1_B - m(B)` at `k != 0`:
/// `(1 - e^{-pi i k}) / (2 pi i k) + (e^{-2 pi i k q} - 1) / (2 pi i k)`.
pub fn fourier_coeff_psi(p: &SuspensionParams, k: i64) -> Result<Complex64> {
    if k == 0 {
        return Err(QcsError::InvalidArgument("the centered coefficient at k = 0 is zero by definition".into()));
    }
    Ok(psi_hat(p.numerator(), k as i128))
}

fn psi_hat(num: u128, k: i128) -> Complex64 {
    let first = if k % 2 == 0 { 0.0 } else { 2.0 };
    let e = cis_neg(frac_kq(num, k));
    let top = Complex64::new(first - 1.0, 0.0) + e;
    top / Complex64::new(0.0, 2.0 * PI * k as f64)
}

/// `c_n = <psi o T^n, psi>` exactly.
///
/// `T^{-n} B` is `2^{-n}`-periodic, so `m(T^{-n}B ∩ [0, x]) = x m + e({2^n x}) / 2^n`
/// with `e(y) = m(B ∩ [0, y]) - y m`. For `n >= 1` this leaves `c_n = -e({2^n q}) / 2^n`.
pub fn correlation_exact(p: &SuspensionParams, n: u32) -> ExactRational {
    let q = ExactRational::from_f64(p.q).expect("finite q");
    let m = ExactRational::new(3, 2).unwrap() - q.clone();
    if n == 0 {
        return &m * &(ExactRational::one() - m.clone());
    }
    let y = (&q * &num_bigint::BigInt::from(2).pow(n)).fract();
    let half = ExactRational::new(1, 2).unwrap();
    let g = {
        let low = if y < half { y.clone() } else { half.clone() };
        let high = if y > q { &y - &q } else { ExactRational::zero() };
        low + high
    };
    let e = g - &y * &m;
    -(e / ExactRational::from_integer(num_bigint::BigInt::from(2).pow(n)))
}

/// Truncated Fourier sum `sum_{0 < |k| <= K} psi^(2^n k) conj(psi^(k))` with the bound
/// `(8 / pi^2) 2^{-n} / K` on the omitted terms, from `|psi^(k)| <= 2 / (pi |k|)`.
pub fn correlation(p: &SuspensionParams, n: u32, k_cutoff: u64) -> Result<(f64, f64)> {
    if k_cutoff == 0 {
        return Err(QcsError::InvalidArgument("k_cutoff must be positive".into()));
    }
    if n > 40 {
        return Err(QcsError::InvalidArgument("n above 40 overflows the frequency range".into()));
    }
    let num = p.numerator();
    let scale = 1i128 << n;
    let total: f64 = (1..=k_cutoff as i128)
        .into_par_iter()
        .map(|k| {
            // k and -k terms are conjugate
            2.0 * (psi_hat(num, scale * k) * psi_hat(num, k).conj()).re
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let tail = 8.0 / (PI * PI) / (scale as f64) / k_cutoff as f64;
    Ok((total, tail))
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationSeries {
    pub q: f64,
    pub c: Vec<f64>,
    /// Fourier truncation used for the cross-check columns; 0 if skipped.
    pub k_cutoff: u64,
    pub fourier_c: Vec<f64>,
    pub tail_bound_per_n: Vec<f64>,
    /// `|c_n| <= decay_constant 2^{-n}`; equals `c_0` by the exact formula.
    pub decay_constant: f64,
}

pub fn correlation_series(p: &SuspensionParams, n_max: u32, k_cutoff: u64) -> Result<CorrelationSeries> {
    let c: Vec<f64> = (0..=n_max).map(|n| correlation_exact(p, n).to_f64()).collect();
    let (fourier_c, tails) = if k_cutoff > 0 {
        let pairs: Vec<(f64, f64)> = (0..=n_max).map(|n| correlation(p, n, k_cutoff)).collect::<Result<_>>()?;
        pairs.into_iter().unzip()
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(CorrelationSeries { q: p.q, c, k_cutoff, fourier_c, tail_bound_per_n: tails, decay_constant: p.c0() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certified {
    pub value: f64,
    pub tail_bound: f64,
}

/// `sigma^2 = c_0 + 2 sum_{n=1}^N c_n`, tail `2 c_0 2^{-N}`.
pub fn sigma2(p: &SuspensionParams, n_terms: u32) -> Result<Certified> {
    check_terms(n_terms)?;
    let mut s = correlation_exact(p, 0);
    for n in 1..=n_terms {
        s = s + &correlation_exact(p, n) * &num_bigint::BigInt::from(2);
    }
    Ok(Certified { value: s.to_f64(), tail_bound: 2.0 * p.c0() * 0.5f64.powi(n_terms as i32) })
}

/// `C_f = sum_{n>=1} n |c_n|`, tail `c_0 (N + 2) 2^{-N}`.
pub fn cf_constant(p: &SuspensionParams, n_terms: u32) -> Result<Certified> {
    check_terms(n_terms)?;
    let mut s = ExactRational::zero();
    for n in 1..=n_terms {
        s = s + &correlation_exact(p, n).abs() * &num_bigint::BigInt::from(n);
    }
    let tail = p.c0() * (n_terms as f64 + 2.0) * 0.5f64.powi(n_terms as i32);
    Ok(Certified { value: s.to_f64(), tail_bound: tail })
}

fn check_terms(n: u32) -> Result<()> {
    if !(10..=1000).contains(&n) {
        return Err(QcsError::InvalidArgument("the number of terms must lie in [10, 1000]".into()));
    }
    Ok(())
}

/// `Var #((Lambda - t) ∩ [-R, R]) = sum_n rho_R(n) c_n` with `rho_R(t) = (2R - |t|)_+`.
pub fn count_variance_from_series(c: &[f64], r: f64) -> Result<f64> {
    let reach = (2.0 * r).ceil() as usize;
    if c.len() <= reach {
        return Err(QcsError::InsufficientData(format!("need c_n up to n = {reach}")));
    }
    let mut v = 2.0 * r * c[0];
    for (n, cn) in c.iter().enumerate().take(reach + 1).skip(1) {
        v += 2.0 * (2.0 * r - n as f64).max(0.0) * cn;
    }
    Ok(v)
}

pub fn exact_count_variance(p: &SuspensionParams, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(QcsError::InvalidArgument("R must be positive".into()));
    }
    let n = (2.0 * r).ceil() as u32 + 1;
    let c: Vec<f64> = (0..=n).map(|k| correlation_exact(p, k).to_f64()).collect();
    count_variance_from_series(&c, r)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClbRow {
    #[serde(rename = "R")]
    pub r: f64,
    pub variance: f64,
    pub deviation: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClbCheck {
    pub q: f64,
    pub sigma2: Certified,
    pub cf: Certified,
    pub c0: f64,
    pub rows: Vec<ClbRow>,
    pub pass: bool,
}

/// `|Var_R - 2R sigma^2| <= 12 C_f + c_0` on `r_list`, with the certified tails as slack.
pub fn clb_bound_check(p: &SuspensionParams, r_list: &[f64], n_terms: u32) -> Result<ClbCheck> {
    let s2 = sigma2(p, n_terms)?;
    let cf = cf_constant(p, n_terms)?;
    let rmax = r_list.iter().cloned().fold(0.0, f64::max);
    let n = ((2.0 * rmax).ceil() as u32 + 1).max(n_terms);
    let c: Vec<f64> = (0..=n).map(|k| correlation_exact(p, k).to_f64()).collect();
    let rows = clb_rows(&c, s2, cf, r_list)?;
    let pass = rows.iter().all(|r| r.margin >= 0.0);
    Ok(ClbCheck { q: p.q, sigma2: s2, cf, c0: c[0], rows, pass })
}

/// The same window for an arbitrary correlation sequence `c`.
pub fn clb_rows(c: &[f64], s2: Certified, cf: Certified, r_list: &[f64]) -> Result<Vec<ClbRow>> {
    r_list
        .iter()
        .map(|&r| {
            if !(r > 0.0) {
                return Err(QcsError::InvalidArgument("R must be positive".into()));
            }
            let v = count_variance_from_series(c, r)?;
            let deviation = (v - 2.0 * r * s2.value).abs();
            let bound = 12.0 * cf.value + c[0];
            let slack = 2.0 * r * s2.tail_bound + 12.0 * cf.tail_bound + 1e-12;
            Ok(ClbRow { r, variance: v, deviation, bound, margin: bound + slack - deviation })
        })
        .collect()
}

/// `theta(q) = sum_{n=0}^N e^{-2 pi i 2^n q} / 2^n`; tail at most `2^{-N}`.
pub fn theta_function(q: f64, n_terms: u32) -> Result<(Complex64, f64)> {
    if !(0.0..1.0).contains(&q) || (q > 0.0 && q < 0.5) {
        return Err(QcsError::InvalidArgument("q must be 0 or lie in [1/2, 1)".into()));
    }
    let num = numerator_of(q);
    let mut s = Complex64::new(0.0, 0.0);
    let mut w = 1.0;
    for n in 0..=n_terms {
        let f = if n >= Q_BITS { 0 } else { (num << n) % Q_MOD };
        s += cis_neg(f) * w;
        w *= 0.5;
    }
    Ok((s, 0.5f64.powi(n_terms as i32)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Obstruction {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub tail_bound: f64,
    /// `|theta(q)| / (2 pi)`, the closed form of the same sum.
    pub theta_modulus: f64,
    pub nonzero: bool,
}

/// `sum_{n=0}^N [chi_{[0,1/2]}^(2^n) + (e^{-2 pi i 2^n q} - 1) / (2 pi i 2^n)]`.
/// Only `n = 0` contributes to the first part, `1 / (pi i)`.
pub fn coboundary_obstruction(p: &SuspensionParams, n_terms: u32) -> Result<Obstruction> {
    check_terms(n_terms)?;
    let num = p.numerator();
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let mut s = Complex64::new(0.0, 0.0);
    for n in 0..=n_terms {
        let scale = 2f64.powi(n as i32);
        let chi = if n == 0 { Complex64::new(2.0, 0.0) / two_pi_i } else { Complex64::new(0.0, 0.0) };
        let f = if n >= Q_BITS { 0 } else { (num << n) % Q_MOD };
        s += chi + (cis_neg(f) - 1.0) / (two_pi_i * scale);
    }
    let tail = 0.5f64.powi(n_terms as i32) / PI;
    let (th, _) = theta_function(p.q, n_terms)?;
    let modulus = s.norm();
    Ok(Obstruction {
        re: s.re,
        im: s.im,
        modulus,
        tail_bound: tail,
        theta_modulus: th.norm() / (2.0 * PI),
        nonzero: modulus > 1e-9 + tail,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitSample {
    pub q: f64,
    pub t_shift: f64,
    pub n_min: i64,
    pub n_max: i64,
    /// Bits `b_{n_min+1}, b_{n_min+2}, ...` as far as they were drawn.
    pub bits: Vec<u8>,
    /// `n` in `[n_min, n_max]` with `x_n = 0.b_{n+1} b_{n+2} ... ∈ B`.
    pub hits: Vec<i64>,
}

impl OrbitSample {
    /// No two consecutive misses, as `B ∪ T^{-1} B` is the whole circle.
    pub fn two_syndetic(&self) -> bool {
        self.hits.first().is_some_and(|h| *h <= self.n_min + 1)
            && self.hits.last().is_some_and(|h| *h >= self.n_max - 1)
            && self.hits.windows(2).all(|w| w[1] - w[0] <= 2)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# q={} t={} range=[{}, {}]", self.q, self.t_shift, self.n_min, self.n_max);
        for h in &self.hits {
            let _ = writeln!(s, "{h}");
        }
        s
    }
}

/// Decides `0.b_1 b_2 ... ∈ B` by exact comparison with the expansion of `q`.
fn member(num: u128, mut bit: impl FnMut(usize) -> Option<u8>) -> Result<bool> {
    let short = || QcsError::Precision("bit source exhausted before the membership was decided".into());
    if bit(0).ok_or_else(short)? == 0 {
        return Ok(true);
    }
    // x in [1/2, 1): in B iff x > q
    for j in 1..Q_BITS as usize {
        let qb = ((num >> (Q_BITS as usize - 1 - j)) & 1) as u8;
        let xb = bit(j).ok_or_else(short)?;
        if xb != qb {
            return Ok(xb > qb);
        }
    }
    for j in Q_BITS as usize..Q_BITS as usize + EXTRA_BITS {
        if bit(j).ok_or_else(short)? == 1 {
            return Ok(true);
        }
    }
    Err(QcsError::Precision(format!("membership undecided after {EXTRA_BITS} extra bits")))
}

/// Orbit segment with the given bits `b_{n_min+1}, ...`.
pub fn orbit_from_bits(p: &SuspensionParams, n_min: i64, n_max: i64, t_shift: f64, bits: &[u8]) -> Result<OrbitSample> {
    check_range(n_min, n_max, t_shift)?;
    let num = p.numerator();
    let mut hits = Vec::new();
    for n in n_min..=n_max {
        let off = (n - n_min) as usize;
        if member(num, |j| bits.get(off + j).copied())? {
            hits.push(n);
        }
    }
    Ok(OrbitSample { q: p.q, t_shift, n_min, n_max, bits: bits.to_vec(), hits })
}

fn check_range(n_min: i64, n_max: i64, t: f64) -> Result<()> {
    if n_min > n_max || !(0.0..1.0).contains(&t) {
        return Err(QcsError::InvalidArgument("need n_min <= n_max and t in [0, 1)".into()));
    }
    if (n_max - n_min) > 100_000_000 {
        return Err(QcsError::InvalidArgument("orbit range too long".into()));
    }
    Ok(())
}

fn orbit_with_rng(p: &SuspensionParams, n_min: i64, n_max: i64, t_shift: f64, rng: &mut impl RngCore) -> Result<OrbitSample> {
    check_range(n_min, n_max, t_shift)?;
    let num = p.numerator();
    let len = (n_max - n_min + 1) as usize;
    let mut bits: Vec<u8> = Vec::with_capacity(len + 64);
    let mut hits = Vec::new();
    for n in n_min..=n_max {
        let off = (n - n_min) as usize;
        let ok = member(num, |j| {
            while bits.len() <= off + j {
                let w = rng.next_u64();
                bits.extend((0..64).map(|b| ((w >> b) & 1) as u8));
            }
            Some(bits[off + j])
        })?;
        if ok {
            hits.push(n);
        }
    }
    Ok(OrbitSample { q: p.q, t_shift, n_min, n_max, bits, hits })
}

/// Orbit segment with fair random bits; the same seed gives the same orbit.
pub fn simulate_orbit(p: &SuspensionParams, seed: u64, n_min: i64, n_max: i64, t_shift: f64) -> Result<OrbitSample> {
    orbit_with_rng(p, n_min, n_max, t_shift, &mut sample_rng(seed, 0))
}

/// Count variance of `(Lambda_z - t) ∩ [-R, R]` over fresh orbits and uniform `t`.
pub fn mc_suspension_variance(p: &SuspensionParams, r: f64, n_samples: usize, seed: u64) -> Result<VarianceEstimate> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(QcsError::InvalidArgument("R must be at least 1".into()));
    }
    mc_counts(p, r, n_samples, seed)
}

fn mc_counts(p: &SuspensionParams, r: f64, n_samples: usize, seed: u64) -> Result<VarianceEstimate> {
    let counts: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let t: f64 = rng.random();
            let lo = (t - r).ceil() as i64;
            let hi = (t + r).floor() as i64;
            let o = orbit_with_rng(p, lo, hi, t, &mut rng)?;
            Ok(o.hits.len() as f64)
        })
        .collect::<Result<_>>()?;
    variance_from_counts(&counts, r, seed)
}

#[derive(Clone, Debug, Serialize)]
pub struct SuspensionReport {
    pub q: f64,
    pub sigma2: Certified,
    pub cf: Certified,
    pub c0: f64,
    pub obstruction: Obstruction,
}

pub fn suspension_report(p: &SuspensionParams, n_terms: u32) -> Result<SuspensionReport> {
    Ok(SuspensionReport {
        q: p.q,
        sigma2: sigma2(p, n_terms)?,
        cf: cf_constant(p, n_terms)?,
        c0: p.c0(),
        obstruction: coboundary_obstruction(p, n_terms)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::window::gauss_legendre;

    fn q34() -> SuspensionParams {
        SuspensionParams::new(0.75).unwrap()
    }

    #[test]
    fn params_range() {
        assert!(SuspensionParams::new(0.5).is_err());
        assert!(SuspensionParams::new(0.76).is_err());
        assert!(SuspensionParams::new(0.75).is_ok());
    }

    #[test]
    fn fourier_coefficients_match_quadrature() {
        for q in [0.75, 0.6, 0.5 + 1.0 / 3.0 * 0.25] {
            let p = SuspensionParams::new(q).unwrap();
            for k in [1i64, 2, 3, -5, 8, 17] {
                let kf = k as f64;
                let re = |a: f64, b: f64| gauss_legendre(|t| (2.0 * PI * kf * t).cos(), a, b, 64);
                let im = |a: f64, b: f64| gauss_legendre(|t| -(2.0 * PI * kf * t).sin(), a, b, 64);
                let expect = Complex64::new(re(0.0, 0.5) + re(q, 1.0), im(0.0, 0.5) + im(q, 1.0));
                let got = fourier_coeff_psi(&p, k).unwrap();
                assert!((got - expect).norm() < 1e-12, "q={q} k={k}: {got} vs {expect}");
            }
        }
        assert!(fourier_coeff_psi(&q34(), 0).is_err());
        // k = 2, q = 3/4: (e^{-3 pi i} - 1) / (4 pi i) = -2 / (4 pi i)
        let c = fourier_coeff_psi(&q34(), 2).unwrap();
        assert!((c - Complex64::new(-2.0, 0.0) / Complex64::new(0.0, 4.0 * PI)).norm() < 1e-16);
    }

    #[test]
    fn parseval() {
        let p = q34();
        let s: f64 = (1..=100_000i64).map(|k| 2.0 * fourier_coeff_psi(&p, k).unwrap().norm_sqr()).sum();
        assert!((s - 3.0 / 16.0).abs() < 1e-4);
    }

    #[test]
    fn exact_correlations_q34() {
        let p = q34();
        assert_eq!(correlation_exact(&p, 0), ExactRational::new(3, 16).unwrap());
        assert_eq!(correlation_exact(&p, 1), ExactRational::new(-1, 16).unwrap());
        for n in 2..30 {
            assert!(correlation_exact(&p, n).is_zero());
        }
        let s = sigma2(&p, 40).unwrap();
        assert_eq!(s.value, 1.0 / 16.0);
        assert!(s.tail_bound < 1e-8);
        assert_eq!(cf_constant(&p, 30).unwrap().value, 1.0 / 16.0);
    }

    #[test]
    fn exact_matches_fourier_route() {
        for q in [0.75, 0.6, 0.55, std::f64::consts::FRAC_1_SQRT_2] {
            let p = SuspensionParams::new(q).unwrap();
            for n in 0..12 {
                let exact = correlation_exact(&p, n).to_f64();
                let (f, tail) = correlation(&p, n, 20_000).unwrap();
                assert!((exact - f).abs() <= tail, "q={q} n={n}: {exact} vs {f} (tail {tail})");
            }
        }
    }

    #[test]
    fn correlation_invariants() {
        for i in 0..20 {
            let q = 0.5 + 0.25 * (i as f64 + 1.0) / 20.0;
            let p = SuspensionParams::new(q).unwrap();
            let c0 = correlation_exact(&p, 0).to_f64();
            assert!((c0 - (1.5 - q) * (q - 0.5)).abs() < 1e-10);
            let series = correlation_series(&p, 25, 0).unwrap();
            for (n, c) in series.c.iter().enumerate() {
                assert!(c.abs() <= c0 + 1e-15);
                assert!(c.abs() * 2f64.powi(n as i32) <= series.decay_constant * (1.0 + 1e-12));
            }
            let s = sigma2(&p, 40).unwrap();
            assert!(s.value >= 0.0);
            let a = cf_constant(&p, 30).unwrap().value;
            let b = cf_constant(&p, 60).unwrap().value;
            assert!((a - b).abs() < 1e-8);
            assert!(a >= series.c[1].abs());
        }
        let p = SuspensionParams::new(std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!(correlation_exact(&p, 20).to_f64().abs() < 1e-5);
    }

    #[test]
    fn clb_window() {
        let p = q34();
        let c = clb_bound_check(&p, &[5.0, 10.0, 20.0, 50.0], 40).unwrap();
        assert!(c.pass);
        let grid: Vec<f64> = (5..=200).step_by(5).map(|r| r as f64).collect();
        for q in [0.6, 0.66, std::f64::consts::FRAC_1_SQRT_2] {
            let c = clb_bound_check(&SuspensionParams::new(q).unwrap(), &grid, 40).unwrap();
            assert!(c.pass, "q={q}");
        }
        // uncorrelated sequence has no deviation
        let mut cs = vec![0.0; 500];
        cs[0] = 0.2;
        let rows = clb_rows(&cs, Certified { value: 0.2, tail_bound: 0.0 }, Certified { value: 0.0, tail_bound: 0.0 }, &[7.0, 33.5]).unwrap();
        assert!(rows.iter().all(|r| r.deviation == 0.0));
    }

    #[test]
    fn exact_variance_q34() {
        assert_eq!(exact_count_variance(&q34(), 25.0).unwrap(), 3.25);
    }

    #[test]
    fn theta_values() {
        let (t, tail) = theta_function(0.0, 40).unwrap();
        assert!((t.re - 2.0).abs() <= tail + 1e-15 && t.im == 0.0);
        let (t, tail) = theta_function(0.5, 40).unwrap();
        assert!(t.norm() <= tail);
        let (t, tail) = theta_function(0.75, 40).unwrap();
        assert!((t - Complex64::new(0.0, 1.0)).norm() <= tail);
        for (lo, hi) in [(0.5, 0.55), (0.6, 0.61), (0.7, 0.75)] {
            let vals: Vec<Complex64> = (0..100).map(|i| theta_function(lo + (hi - lo) * i as f64 / 100.0, 40).unwrap().0).collect();
            let mean = vals.iter().sum::<Complex64>() / 100.0;
            let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / 100.0;
            assert!(var > 0.0);
        }
    }

    #[test]
    fn obstruction() {
        let p = q34();
        let o = coboundary_obstruction(&p, 40).unwrap();
        assert!(o.modulus > 1e-3 && o.nonzero);
        assert!((o.modulus - 1.0 / (2.0 * PI)).abs() < 1e-12);
        assert!((o.modulus - o.theta_modulus).abs() < 1e-12);
        assert!(o.tail_bound < 2f64.powi(-40) / PI * 1.0001);
        for q in [0.55, 0.6, 0.7] {
            let o = coboundary_obstruction(&SuspensionParams::new(q).unwrap(), 40).unwrap();
            assert!((o.modulus - o.theta_modulus).abs() < 1e-12);
        }
        // partial sums: the n = 0 term 1/(pi i) + (e^{-2 pi i q} - 1)/(2 pi i) plus the rest
        let q = 0.6;
        let o = coboundary_obstruction(&SuspensionParams::new(q).unwrap(), 12).unwrap();
        let (th, _) = theta_function(q, 12).unwrap();
        let expect = (th + 2f64.powi(-12)) / Complex64::new(0.0, 2.0 * PI);
        assert!((Complex64::new(o.re, o.im) - expect).norm() < 1e-15);
    }

    #[test]
    fn forced_zero_bits() {
        let o = orbit_from_bits(&q34(), -10, 10, 0.0, &[0u8; 100]).unwrap();
        assert_eq!(o.hits, (-10..=10).collect::<Vec<_>>());
        assert!(orbit_from_bits(&q34(), 0, 10, 0.0, &[1u8; 5]).is_err());
    }

    #[test]
    fn orbit_density_and_syndeticity() {
        for q in [0.75, 0.6, 0.52] {
            let p = SuspensionParams::new(q).unwrap();
            let o = simulate_orbit(&p, 3, 0, 99_999, 0.0).unwrap();
            assert!(o.two_syndetic());
            let s = sigma2(&p, 40).unwrap().value;
            let dens = o.hits.len() as f64 / 1e5;
            assert!((dens - p.theta()).abs() <= 3.0 * (s / 1e5).sqrt() + 1e-3, "q={q}: {dens}");
        }
        let a = simulate_orbit(&q34(), 9, -100, 100, 0.25).unwrap();
        let b = simulate_orbit(&q34(), 9, -100, 100, 0.25).unwrap();
        assert_eq!(a.hits, b.hits);
    }

    #[test]
    fn mc_matches_exact_variance() {
        let p = q34();
        let v = mc_suspension_variance(&p, 10.0, 40_000, 17).unwrap();
        let exact = exact_count_variance(&p, 10.0).unwrap();
        assert!((v.variance - exact).abs() <= 3.0 * v.stderr_variance, "{v:?} vs {exact}");
        let p = SuspensionParams::new(0.6).unwrap();
        let v = mc_suspension_variance(&p, 7.5, 40_000, 18).unwrap();
        let exact = exact_count_variance(&p, 7.5).unwrap();
        assert!((v.variance - exact).abs() <= 3.0 * v.stderr_variance, "{v:?} vs {exact}");
    }

    #[test]
    fn variance_positive_on_grid() {
        for i in 0..8 {
            let q = 0.5 + 0.25 * (i as f64 + 1.0) / 8.0;
            let v = mc_suspension_variance(&SuspensionParams::new(q).unwrap(), 10.0, 20_000, 40 + i).unwrap();
            assert!(v.variance > 5.0 * v.stderr_variance, "q={q}: {v:?}");
        }
    }

    #[test]
    fn full_window_has_no_variance() {
        // q = 1/2 makes B the whole circle
        let p = SuspensionParams { q: 0.5 };
        let v = mc_counts(&p, 6.0, 2000, 1).unwrap();
        assert_eq!(v.variance, 0.0);
        assert_eq!(v.mean_count, 12.0);
    }
}
