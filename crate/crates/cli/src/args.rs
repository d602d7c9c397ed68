use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qcs_core::diffraction::{fibonacci_scheme, gamma_a_scheme, quadratic_scheme, z2_scheme, Scheme};
use qcs_core::lattice::QuadraticRing;
use qcs_core::{QcsError, Result};

#[derive(Parser, Debug)]
#[command(name = "qcs", version, about = "Diffraction, number variance and hyperuniformity diagnostics for cut-and-project and suspension point processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Centered diffraction ball masses, scaling fit and verdict
    Diffraction(DiffractionArgs),
    /// Monte Carlo number variance next to the spectral and geometric values
    Variance(VarianceArgs),
    /// Asymptotic number variance curve Var / Vol(B_R)
    Anv(AnvArgs),
    /// Repellence scans of the diffraction support
    Repellence(RepellenceArgs),
    /// Non-hyperuniformity certificate for a Liouville parameter
    Nonhyper(NonhyperArgs),
    /// Correlations, CLB window, coboundary obstruction and Monte Carlo for the suspension process
    Suspension(SuspensionArgs),
    /// p-adic diffraction atoms and the stealth check
    Padic(PadicArgs),
    /// Ball-mass ratios and the Gaussian statistic along a decreasing radius sequence
    Rigidity(RigidityArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
pub struct Common {
    /// fibonacci, z2, quadratic:D[,b][,maximal], gamma_a:a,b, padic:p or suspension:q
    #[arg(long)]
    pub preset: Option<String>,
    /// Path to a scheme serialized as JSON
    #[arg(long = "scheme-json", conflicts_with = "preset")]
    pub scheme_json: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Enumeration budget; defaults to QCS_BUDGET or 1e8
    #[arg(long)]
    pub budget: Option<u64>,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Caps worker threads; results do not depend on it
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct DiffractionArgs {
    #[command(flatten)]
    pub common: Common,
    /// lo:hi:logN, golden:a:b or a comma list
    #[arg(long = "eps-grid", default_value = "1e-1:1e-4:log8")]
    pub eps_grid: String,
    /// Weight floor at radius eps is this times eps^(2 d1 + 2)
    #[arg(long = "floor-scale", default_value_t = 1e-3)]
    pub floor_scale: f64,
    /// Slope margin around d1 for the verdict
    #[arg(long, default_value_t = 0.2)]
    pub margin: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct VarianceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "R-grid", default_value = "5,10,20")]
    pub r_grid: String,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct AnvArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "R-grid", default_value = "1,2,5,10,20,50")]
    pub r_grid: String,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Primal,
    Dual,
}

#[derive(Args, Debug, Serialize)]
pub struct RepellenceArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "eps-grid", default_value = "1e-1:1e-4:log4")]
    pub eps_grid: String,
    #[arg(long = "xi2-cap", default_value_t = 1e6)]
    pub xi2_cap: f64,
    /// Scan the scheme lattice or its dual (the diffraction support)
    #[arg(long, value_enum, default_value_t = Which::Dual)]
    pub lattice: Which,
    /// Also run the approximation-exponent scan up to this height (gamma_a presets)
    #[arg(long = "q-max")]
    pub q_max: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
pub struct NonhyperArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long = "grid-n", default_value_t = 10_000)]
    pub grid_n: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct SuspensionArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides a suspension:q preset
    #[arg(long)]
    pub q: Option<f64>,
    /// Correlation terms kept in sigma^2, C_f and the obstruction
    #[arg(long, default_value_t = 60)]
    pub terms: u32,
    #[arg(long = "R-grid", default_value = "5,10,20,50")]
    pub r_grid: String,
    /// Monte Carlo samples per radius; 0 skips the simulation
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct PadicArgs {
    #[command(flatten)]
    pub common: Common,
    /// Overrides a padic:p preset
    #[arg(long)]
    pub p: Option<u64>,
    #[arg(long = "max-height", default_value_t = 1000)]
    pub max_height: u64,
    #[arg(long = "max-denom-exp", default_value_t = 4)]
    pub max_denom_exp: u32,
}

#[derive(Args, Debug, Serialize)]
pub struct RigidityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "eps-grid", default_value = "golden:2:8")]
    pub eps_grid: String,
    #[arg(long, default_value_t = 2.0)]
    pub delta: f64,
    /// Gaussian width t = eps^(1 + gamma_t)
    #[arg(long = "gamma-t", default_value_t = 0.1)]
    pub gamma_t: f64,
    /// Weight floor at radius eps is this times eps^(2 d1 + 4)
    #[arg(long = "floor-scale", default_value_t = 1e-6)]
    pub floor_scale: f64,
    /// Relative tail allowed on each Gaussian statistic
    #[arg(long = "rel-tol", default_value_t = 0.1)]
    pub rel_tol: f64,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Diffraction(_) => "diffraction",
            Command::Variance(_) => "variance",
            Command::Anv(_) => "anv",
            Command::Repellence(_) => "repellence",
            Command::Nonhyper(_) => "nonhyper",
            Command::Suspension(_) => "suspension",
            Command::Padic(_) => "padic",
            Command::Rigidity(_) => "rigidity",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Diffraction(a) => &a.common,
            Command::Variance(a) => &a.common,
            Command::Anv(a) => &a.common,
            Command::Repellence(a) => &a.common,
            Command::Nonhyper(a) => &a.common,
            Command::Suspension(a) => &a.common,
            Command::Padic(a) => &a.common,
            Command::Rigidity(a) => &a.common,
        }
    }
}

pub enum Preset {
    Scheme(Box<Scheme>, Option<f64>),
    Padic(u64),
    Suspension(f64),
}

fn bad(msg: impl Into<String>) -> QcsError {
    QcsError::InvalidArgument(msg.into())
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| bad(format!("cannot parse {what} from '{s}'")))
}

/// The second field is the `a` of a `gamma_a` preset.
pub fn parse_preset(spec: &str) -> Result<Preset> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let parts: Vec<&str> = if rest.is_empty() { Vec::new() } else { rest.split(',').collect() };
    match name {
        "fibonacci" if parts.is_empty() => Ok(Preset::Scheme(Box::new(fibonacci_scheme()), None)),
        "z2" if parts.is_empty() => Ok(Preset::Scheme(Box::new(z2_scheme()), None)),
        "quadratic" if !parts.is_empty() && parts.len() <= 3 => {
            let d: u64 = num(parts[0], "D")?;
            let mut b = 0.3;
            let mut ring = QuadraticRing::SqrtD;
            for p in &parts[1..] {
                if *p == "maximal" {
                    ring = QuadraticRing::Maximal;
                } else {
                    b = num(p, "b")?;
                }
            }
            Ok(Preset::Scheme(Box::new(quadratic_scheme(d, ring, b)?), None))
        }
        "gamma_a" if parts.len() == 2 => {
            let a: f64 = num(parts[0], "a")?;
            let b: f64 = num(parts[1], "b")?;
            Ok(Preset::Scheme(Box::new(gamma_a_scheme(a, b)?), Some(a)))
        }
        "padic" if parts.len() == 1 => Ok(Preset::Padic(num(parts[0], "p")?)),
        "suspension" if parts.len() == 1 => Ok(Preset::Suspension(num(parts[0], "q")?)),
        _ => Err(bad(format!("unknown preset '{spec}'"))),
    }
}

/// `lo:hi:logN` (N log-spaced values from lo to hi), `golden:a:b` (phi^-n for
/// n = a..b) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let fields: Vec<&str> = spec.split(':').collect();
    let grid: Vec<f64> = match fields.as_slice() {
        ["golden", a, b] => {
            let (a, b): (i32, i32) = (num(a, "golden start")?, num(b, "golden end")?);
            if a > b {
                return Err(bad("golden range must be increasing"));
            }
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            (a..=b).map(|n| phi.powi(-n)).collect()
        }
        [lo, hi, n] => {
            let lo: f64 = num(lo, "grid start")?;
            let hi: f64 = num(hi, "grid end")?;
            let n: usize = num(n.strip_prefix("log").ok_or_else(|| bad("grid spacing must be logN"))?, "grid size")?;
            if n < 2 || !(lo > 0.0) || !(hi > 0.0) {
                return Err(bad("log grid needs N >= 2 and positive ends"));
            }
            let (l0, l1) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    _ if i == n - 1 => hi,
                    _ => (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
        [list] => list.split(',').map(|v| num(v, "grid value")).collect::<Result<_>>()?,
        _ => return Err(bad(format!("cannot parse grid '{spec}'"))),
    };
    if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(bad("grid values must be positive and finite"));
    }
    Ok(grid)
}

/// Strictly decreasing copy without duplicates.
pub fn decreasing(mut g: Vec<f64>) -> Vec<f64> {
    g.sort_by(|a, b| b.total_cmp(a));
    g.dedup();
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_grid("1e-1:1e-4:log4").unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!((g[0], g[3]), (0.1, 1e-4));
        assert!((g[1] - 1e-2).abs() < 1e-16);
        assert_eq!(parse_grid("5,10,20").unwrap(), vec![5.0, 10.0, 20.0]);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let g = parse_grid("golden:2:3").unwrap();
        assert!((g[0] - phi.powi(-2)).abs() < 1e-15 && (g[1] - phi.powi(-3)).abs() < 1e-15);
        assert!(parse_grid("1:2:lin3").is_err());
        assert!(parse_grid("0,1").is_err());
        assert_eq!(decreasing(vec![1.0, 3.0, 2.0, 3.0]), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn presets() {
        assert!(matches!(parse_preset("fibonacci").unwrap(), Preset::Scheme(..)));
        assert!(matches!(parse_preset("quadratic:5,0.2,maximal").unwrap(), Preset::Scheme(..)));
        assert!(matches!(parse_preset("gamma_a:1.4,0.3").unwrap(), Preset::Scheme(_, Some(a)) if a == 1.4));
        assert!(matches!(parse_preset("padic:3").unwrap(), Preset::Padic(3)));
        assert!(matches!(parse_preset("suspension:0.75").unwrap(), Preset::Suspension(q) if q == 0.75));
        assert!(parse_preset("quadratic:4").is_err());
        assert!(parse_preset("penrose").is_err());
    }
}
