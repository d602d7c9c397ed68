//! Non-hyperuniform `Gamma_{a,b}` windows: the resonance sets `Q_u`, the
//! resonant-window search and finite-level growth certificates for Liouville `a`.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::diffraction::diffraction_mass_gamma_ab_big;
use crate::error::{QcsError, Result};
use crate::lattice::{diophantine_strip, liouville_param, LiouvilleParam, DEFAULT_DIGIT_CAP};
use crate::rational::ExactRational;

/// `{m : 1 <= |m| <= m_max, {am} <= u/2}`, sorted.
pub fn q_u_set(a: &ExactRational, u: &ExactRational, m_max: &BigInt) -> Result<Vec<BigInt>> {
    check_u(u)?;
    let half = u * &ExactRational::new(1, 2)?;
    let mut ms: Vec<BigInt> = diophantine_strip(a, &half, m_max)?
        .into_iter()
        .map(|(m, _)| m)
        .filter(|m| !m.is_zero())
        .collect();
    ms.sort();
    ms.dedup();
    Ok(ms)
}

fn check_u(u: &ExactRational) -> Result<()> {
    if !u.is_positive() || *u >= ExactRational::one() {
        return Err(QcsError::InvalidArgument("u must lie in (0, 1)".into()));
    }
    Ok(())
}

/// `sin(4 pi a b m)` with the period removed exactly.
pub fn resonance_sine(a: &ExactRational, b: &ExactRational, m: &BigInt) -> f64 {
    let two_ab = &(a * b) * &BigInt::from(2);
    (&two_ab * m).sin_two_pi()
}

/// Grid point `b_i = i / ((grid_n + 1) 2a)`, `1 <= i <= grid_n`, strictly inside `(0, 1/(2a))`.
fn grid_b(a: &ExactRational, i: u64, grid_n: u64) -> ExactRational {
    let den = a * &BigInt::from(2 * (grid_n + 1));
    ExactRational::from_integer(i) / den
}

/// Best grid `b` by `score`; ties go to the smaller denominator, then the smaller `b`.
fn grid_search<F>(a: &ExactRational, grid_n: u64, score: F) -> Result<(ExactRational, f64)>
where
    F: Fn(&ExactRational) -> f64 + Sync,
{
    if grid_n == 0 {
        return Err(QcsError::Infeasible("empty b grid".into()));
    }
    let scored: Vec<(u64, f64)> = (1..=grid_n).into_par_iter().map(|i| (i, score(&grid_b(a, i, grid_n)))).collect();
    let mut best: Option<(ExactRational, f64)> = None;
    for (i, s) in scored {
        let b = grid_b(a, i, grid_n);
        best = match best {
            None => Some((b, s)),
            Some((bb, bs)) => {
                let better = s > bs || (s == bs && b.denom() < bb.denom());
                if better { Some((b, s)) } else { Some((bb, bs)) }
            }
        };
    }
    best.ok_or_else(|| QcsError::Infeasible("empty b grid".into()))
}

/// The grid `b` in `(0, 1/(2a))` maximizing `sin(2 pi {2 a b m_k})`.
pub fn resonant_b_search(a: &ExactRational, m_k: &BigInt, grid_n: u64) -> Result<ExactRational> {
    if !a.is_positive() || !m_k.is_positive() {
        return Err(QcsError::InvalidArgument("need a > 0 and m_k >= 1".into()));
    }
    Ok(grid_search(a, grid_n, |b| resonance_sine(a, b, m_k))?.0)
}

/// The grid `b` maximizing `min_k sin^2(4 pi a b m_k)` over all given levels.
pub fn joint_resonant_b(a: &ExactRational, ms: &[BigInt], grid_n: u64) -> Result<(ExactRational, f64)> {
    if !a.is_positive() || ms.is_empty() {
        return Err(QcsError::InvalidArgument("need a > 0 and at least one level".into()));
    }
    grid_search(a, grid_n, |b| ms.iter().map(|m| resonance_sine(a, b, m).powi(2)).fold(f64::INFINITY, f64::min))
}

/// `(1/2) sum_{m in Q_u} (sin(4 pi a b m) / (pi m))^2` over `|m| <= m_max`.
/// The `O(u)` correction is not included.
pub fn lower_bound_eu(a: &ExactRational, b: &ExactRational, u: &ExactRational, m_max: &BigInt) -> Result<f64> {
    let q = q_u_set(a, u, m_max)?;
    Ok(0.5
        * q.iter()
            .map(|m| {
                let s = resonance_sine(a, b, m);
                if s == 0.0 {
                    0.0
                } else {
                    (s / (PI * m.to_f64().unwrap_or(f64::INFINITY))).powi(2)
                }
            })
            .sum::<f64>())
}

/// Smallest `C >= 0` with `lower_bound_eu(u) <= mass(u) + C u` on `u_grid`.
pub fn calibrate_slack(a: &ExactRational, b: &ExactRational, u_grid: &[ExactRational], m_max: &BigInt) -> Result<f64> {
    let mut c: f64 = 0.0;
    for u in u_grid {
        let lb = lower_bound_eu(a, b, u, m_max)?;
        let mass = diffraction_mass_gamma_ab_big(a, b, u, m_max)?.mass;
        c = c.max((lb - mass) / u.to_f64());
    }
    Ok(c)
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateRow {
    pub k: usize,
    pub u_k: ExactRational,
    #[serde(serialize_with = "big_str")]
    pub m_k: BigInt,
    #[serde(serialize_with = "big_str")]
    pub m_max: BigInt,
    pub mass: f64,
    pub tail_bound: f64,
    pub mass_lower_bound: f64,
    pub sin2: f64,
    pub ratio: f64,
}

fn big_str<S: serde::Serializer>(v: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct NonHyperCertificate {
    pub gamma: f64,
    pub delta: f64,
    pub a: LiouvilleParam,
    pub b: ExactRational,
    pub grid_n: u64,
    pub slack_c: f64,
    pub slack_u_grid: Vec<ExactRational>,
    pub rows: Vec<CertificateRow>,
    pub growth_exponent: f64,
    pub growth_exponent_observed: f64,
    pub growth_law_ok: bool,
    pub lower_bound_ok: bool,
    pub pass: bool,
}

impl NonHyperCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Atoms are summed out to this multiple of `m_k`; the remaining mass is
/// then about `m_k^{-2} / MASS_REACH`, far below the resonant atom.
const MASS_REACH: u64 = 1000;

/// Finite-level analogue of growth of `eta_{a,b}([-u_k, u_k]) / u_k^delta` for
/// `u_k = 2 m_k^{-gamma}`, with one `b` resonant for all certified levels.
///
/// Passes when the ratio is strictly increasing in `k` and the last ratio is at
/// least ten times the first.
pub fn nonhyper_certificate(gamma: f64, levels: usize, delta: f64, grid_n: u64) -> Result<NonHyperCertificate> {
    if !(gamma > 2.0) || !delta.is_finite() {
        return Err(QcsError::InvalidArgument(format!("gamma must exceed 2, got {gamma}")));
    }
    if !(delta > 2.0 / gamma) {
        return Err(QcsError::OutsideRegime(format!(
            "delta = {delta} must exceed 2/gamma = {}",
            2.0 / gamma
        )));
    }
    if !(delta < 1.0) {
        return Err(QcsError::InvalidArgument("delta must be below 1".into()));
    }
    let lp = liouville_param(gamma, levels, DEFAULT_DIGIT_CAP)?;
    let a = lp.a_truncated.clone();
    let ms: Vec<BigInt> = lp.m_list[..levels - 1].to_vec();
    let (b, _) = joint_resonant_b(&a, &ms, grid_n)?;

    let slack_u_grid: Vec<ExactRational> = (1..=6).map(|j| ExactRational::new(1, 3 * 4i64.pow(j)).unwrap()).collect();
    let calib_max = BigInt::from(100_000u64);
    let slack_c = calibrate_slack(&a, &b, &slack_u_grid, &calib_max)?;

    let two = ExactRational::from_integer(2);
    let mut rows = Vec::with_capacity(ms.len());
    for (idx, m) in ms.iter().enumerate() {
        let mk = ExactRational::from_integer(m.clone());
        let u = &two / &pow_exact(&mk, gamma)?;
        let m_max = m * BigInt::from(MASS_REACH);
        let gm = diffraction_mass_gamma_ab_big(&a, &b, &u, &m_max)?;
        let lb = lower_bound_eu(&a, &b, &u, &m_max)?;
        let uf = u.to_f64();
        rows.push(CertificateRow {
            k: idx + 1,
            m_k: m.clone(),
            m_max,
            mass: gm.mass,
            tail_bound: gm.tail_bound,
            mass_lower_bound: lb,
            sin2: resonance_sine(&a, &b, m).powi(2),
            ratio: gm.mass / uf.powf(delta),
            u_k: u,
        });
    }

    let expo = delta * gamma - 2.0;
    let logs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.m_k.to_f64().unwrap_or(f64::INFINITY).ln(), r.ratio.ln()))
        .collect();
    let observed = if logs.len() >= 2 {
        let n = logs.len() as f64;
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let growth_law_ok = (observed - expo).abs() <= 0.25 * expo;
    let lower_bound_ok = rows
        .iter()
        .all(|r| r.mass_lower_bound <= r.mass + slack_c * r.u_k.to_f64() + 1e-12);
    let increasing = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let pass = rows.len() >= 2 && increasing && rows[rows.len() - 1].ratio >= 10.0 * rows[0].ratio;
    Ok(NonHyperCertificate {
        gamma,
        delta,
        a: lp,
        b,
        grid_n,
        slack_c,
        slack_u_grid,
        rows,
        growth_exponent: expo,
        growth_exponent_observed: observed,
        growth_law_ok,
        lower_bound_ok,
        pass,
    })
}

/// `m^gamma` exactly for integral `gamma`, otherwise the nearest rational to the float power.
fn pow_exact(m: &ExactRational, gamma: f64) -> Result<ExactRational> {
    if gamma.fract() == 0.0 && gamma.abs() < i32::MAX as f64 {
        return Ok(m.pow(gamma as i32));
    }
    let v = m.to_f64().powf(gamma);
    if !v.is_finite() {
        return Err(QcsError::Precision("u_k underflows for non-integral gamma".into()));
    }
    ExactRational::from_f64(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffraction::diffraction_mass_gamma_ab;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(p: i64, q: i64) -> ExactRational {
        ExactRational::new(p, q).unwrap()
    }

    #[test]
    fn q_u_for_rational_a() {
        let q = q_u_set(&r(1, 3), &r(1, 10), &BigInt::from(30)).unwrap();
        let expect: Vec<BigInt> = (-10..=10).filter(|k| *k != 0).map(|k| BigInt::from(3 * k)).collect();
        assert_eq!(q, expect);
    }

    #[test]
    fn q_u_liouville() {
        let lp = liouville_param(3.0, 3, DEFAULT_DIGIT_CAP).unwrap();
        let q = q_u_set(&lp.a_truncated, &r(2, 1000), &BigInt::from(10)).unwrap();
        assert_eq!(q, vec![BigInt::from(-10), BigInt::from(10)]);
        let q = q_u_set(&lp.a_truncated, &r(1, 10_000_000), &BigInt::from(9)).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn quarter_period_resonance() {
        let a = r(1, 3);
        let m = BigInt::from(3);
        let b = resonant_b_search(&a, &m, 3).unwrap();
        assert_eq!(resonance_sine(&a, &b, &m), 1.0);
        assert!(b.is_positive() && b < ExactRational::one() / (&a * &BigInt::from(2)));
    }

    #[test]
    fn liouville_resonant_b() {
        let lp = liouville_param(3.0, 3, DEFAULT_DIGIT_CAP).unwrap();
        let a = &lp.a_truncated;
        let b = resonant_b_search(a, &lp.m_list[1], 10_000).unwrap();
        assert!(resonance_sine(a, &b, &lp.m_list[1]).powi(2) >= 0.99);
        assert!(b.is_positive() && b < ExactRational::one() / (a * &BigInt::from(2)));
    }

    #[test]
    fn lower_bound_examples() {
        let lp = liouville_param(3.0, 3, DEFAULT_DIGIT_CAP).unwrap();
        let a = &lp.a_truncated;
        assert_eq!(lower_bound_eu(a, &r(1, 7), &r(1, 10_000_000), &BigInt::from(9)).unwrap(), 0.0);
        // b tuned so that sin(4 pi a b m_1) = 1 up to the tiny {10 a}
        let b = resonant_b_search(a, &lp.m_list[0], 10_000).unwrap();
        let lb = lower_bound_eu(a, &b, &r(2, 1000), &BigInt::from(10)).unwrap();
        let s2 = resonance_sine(a, &b, &lp.m_list[0]).powi(2);
        assert!(s2 > 0.999);
        // two terms m = +-10 each (1/2)(sin/(10 pi))^2
        assert!((lb - s2 / (10.0 * PI).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_below_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = r(rng.random_range(1..2000), 997);
            let b = &ExactRational::new(rng.random_range(1..1000), 1000).unwrap() / &(&a * &BigInt::from(2));
            let u = r(rng.random_range(1..500), 1000);
            let m_max = BigInt::from(2000);
            let lb = lower_bound_eu(&a, &b, &u, &m_max).unwrap();
            let mass = diffraction_mass_gamma_ab(&a, &b, &u, 2000).unwrap().mass;
            assert!(lb <= mass + 1e-12, "a={a} b={b} u={u}: {lb} > {mass}");
        }
    }

    #[test]
    fn certificate_gamma4() {
        let c = nonhyper_certificate(4.0, 3, 0.6, 10_000).unwrap();
        assert!(c.pass, "{}", c.to_json());
        assert!(c.lower_bound_ok);
        assert!(c.growth_law_ok, "{}", c.growth_exponent_observed);
        for row in &c.rows {
            let m = ExactRational::from_integer(row.m_k.clone());
            assert_eq!(row.u_k, &ExactRational::from_integer(2) / &m.pow(4));
            assert!(row.mass >= row.mass_lower_bound - 1e-12);
            assert!(row.tail_bound < 1e-3 * row.mass);
        }
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        assert!(v["b"].as_str().unwrap().contains('/'));
        assert_eq!(v["rows"][1]["m_k"], "1000000");
    }

    #[test]
    fn certificate_gamma8() {
        let c4 = nonhyper_certificate(4.0, 3, 0.6, 10_000).unwrap();
        let c8 = nonhyper_certificate(8.0, 3, 0.3, 10_000).unwrap();
        assert!(c8.pass, "{}", c8.to_json());
        let growth = |c: &NonHyperCertificate| c.rows[1].ratio / c.rows[0].ratio;
        assert!(growth(&c8) > growth(&c4));
    }

    #[test]
    fn regime_is_enforced() {
        let e = nonhyper_certificate(4.0, 3, 0.4, 100).unwrap_err();
        assert!(e.to_string().contains("outside theorem regime"));
    }
}
