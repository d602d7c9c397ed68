//! Diffraction of the diagonal lattice `{(g, g) : g in Z[1/p]}` in `R x Q_p` with
//! window `[-1/2, 1/2]`, and the vanishing of its mass on `Z_p`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{QcsError, Result};
use crate::rational::ExactRational;
use crate::window::sin_pi;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PAdicAtom {
    pub k: i64,
    pub j: u32,
    pub gamma: ExactRational,
    pub valuation: i64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PAdicBounds {
    pub max_height: u64,
    pub max_denom_exp: u32,
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn check(p: u64, b: &PAdicBounds) -> Result<u64> {
    if !is_prime(p) {
        return Err(QcsError::InvalidArgument(format!("{p} is not prime")));
    }
    if b.max_height < 1 || b.max_height > i64::MAX as u64 / 4 {
        return Err(QcsError::InvalidArgument("max_height must lie in [1, 2^61)".into()));
    }
    let pj = (p as u128).checked_pow(b.max_denom_exp).filter(|v| *v < (1u128 << 62));
    pj.map(|v| v as u64)
        .ok_or_else(|| QcsError::InvalidArgument("p^max_denom_exp must stay below 2^62".into()))
}

fn valuation(mut k: i64, p: i64) -> i64 {
    let mut v = 0;
    while k % p == 0 {
        k /= p;
        v += 1;
    }
    v
}

/// `(sin(pi k / q) / (pi k / q))^2` with `|k| mod 2q` reduced exactly; zero when `q | k`.
fn weight(k: i64, q: u64) -> f64 {
    let qq = q as i64;
    let k = k.abs();
    let r = k % (2 * qq);
    if r % qq == 0 {
        return 0.0;
    }
    let g = k as f64 / q as f64;
    let s = sin_pi(r as f64 / q as f64);
    (s / (std::f64::consts::PI * g)).powi(2)
}

/// Atoms `k / p^j` with `0 < |k| <= max_height`, `0 <= j <= max_denom_exp`, and `p ∤ k` when `j > 0`.
pub fn padic_diffraction_atoms(p: u64, bounds: &PAdicBounds) -> Result<Vec<PAdicAtom>> {
    check(p, bounds)?;
    let h = bounds.max_height as i64;
    let pi = p as i64;
    let mut out = Vec::new();
    let mut q = 1u64;
    for j in 0..=bounds.max_denom_exp {
        for k in (-h..=h).filter(|k| *k != 0) {
            if j > 0 && k % pi == 0 {
                continue;
            }
            let v = if j == 0 { valuation(k, pi) } else { -(j as i64) };
            out.push(PAdicAtom {
                k,
                j,
                gamma: ExactRational::new(k, q as i64)?,
                valuation: v,
                weight: weight(k, q),
            });
        }
        q = q.saturating_mul(p);
    }
    Ok(out)
}

/// Total weight of atoms with `v_p(gamma) >= valuation_floor`.
pub fn padic_ball_mass(p: u64, valuation_floor: i64, bounds: &PAdicBounds) -> Result<f64> {
    Ok(padic_diffraction_atoms(p, bounds)?
        .iter()
        .filter(|a| a.valuation >= valuation_floor)
        .map(|a| a.weight)
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StealthCheck {
    pub p: u64,
    pub mass_on_zp: f64,
    pub control_mass: f64,
    pub pass: bool,
}

/// Mass on `Z_p` (must be exactly zero) and on the valuation `-1` shell (positive control).
pub fn stealth_check(p: u64, bounds: &PAdicBounds) -> Result<StealthCheck> {
    let atoms = padic_diffraction_atoms(p, bounds)?;
    let mass: f64 = atoms.iter().filter(|a| a.valuation >= 0).map(|a| a.weight).sum();
    let control: f64 = atoms.iter().filter(|a| a.valuation == -1).map(|a| a.weight).sum();
    Ok(StealthCheck { p, mass_on_zp: mass, control_mass: control, pass: mass == 0.0 })
}

pub fn atoms_csv(atoms: &[PAdicAtom]) -> String {
    let mut s = String::from("k,j,valuation,weight\n");
    for a in atoms {
        let _ = writeln!(s, "{},{},{},{}", a.k, a.j, a.valuation, a.weight);
    }
    s
}
