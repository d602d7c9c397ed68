use serde_json::{json, Value};

use qcs_core::diffraction::*;
use qcs_core::lattice::{alpha_repellence_scan, beta_repellence_scan, default_budget};
use qcs_core::nonhyper::nonhyper_certificate;
use qcs_core::padic::{padic_diffraction_atoms, stealth_check, PAdicBounds};
use qcs_core::pointset::{mc_anv_curve, mc_number_variance, split_seed};
use qcs_core::suspension::{clb_bound_check, coboundary_obstruction, exact_count_variance, mc_suspension_variance, SuspensionParams};
use qcs_core::window::Window;
use qcs_core::{ExactRational, QcsError, Result};

use crate::args::*;
use crate::output::Artifact;

/// The artifact and whether its mathematical check passed.
pub struct Run {
    pub artifact: Artifact,
    pub check: bool,
}

fn budget(c: &Common) -> u64 {
    c.budget.unwrap_or_else(default_budget)
}

fn scheme(c: &Common) -> Result<(Scheme, Option<f64>)> {
    if let Some(path) = &c.scheme_json {
        let text = std::fs::read_to_string(path).map_err(|e| QcsError::InvalidArgument(format!("cannot read {path}: {e}")))?;
        return Ok((Scheme::from_json(&text)?, None));
    }
    match parse_preset(c.preset.as_deref().unwrap_or("fibonacci"))? {
        Preset::Scheme(s, a) => Ok((*s, a)),
        _ => Err(QcsError::InvalidArgument("this command needs a cut-and-project scheme preset".into())),
    }
}

fn artifact(cmd: &Command) -> Artifact {
    let config = serde_json::to_value(cmd).expect("arguments serialize");
    Artifact::new(cmd.name(), config, cmd.common().seed)
}

pub fn run(cmd: &Command) -> Result<Run> {
    let mut art = artifact(cmd);
    let check = match cmd {
        Command::Diffraction(a) => diffraction(a, &mut art)?,
        Command::Variance(a) => variance(a, &mut art)?,
        Command::Anv(a) => anv(a, &mut art)?,
        Command::Repellence(a) => repellence(a, &mut art)?,
        Command::Nonhyper(a) => nonhyper(a, &mut art)?,
        Command::Suspension(a) => suspension(a, &mut art)?,
        Command::Padic(a) => padic(a, &mut art)?,
        Command::Rigidity(a) => rigidity(a, &mut art)?,
    };
    Ok(Run { artifact: art, check })
}

fn diffraction(a: &DiffractionArgs, art: &mut Artifact) -> Result<bool> {
    let (s, _) = scheme(&a.common)?;
    let eps = decreasing(parse_grid(&a.eps_grid)?);
    let p = 2 * s.d1() as i32 + 2;
    let specs: Vec<LayerSpec> = eps.iter().map(|&e| LayerSpec { eps_max: e, weight_floor: a.floor_scale * e.powi(p) }).collect();
    let m = centered_diffraction_layered(&s, &specs, budget(&a.common))?;
    art.columns = vec!["eps", "mass", "tail_bound"];
    let mut pairs = Vec::new();
    for &e in &eps {
        let b = m.ball_mass(e)?;
        art.rows.push(vec![json!(e), json!(b.mass), json!(b.tail_bound)]);
        art.tail(&format!("mass(eps={e})"), b.tail_bound);
        pairs.push((e, b.mass));
    }
    art.note("scheme", s.label.clone());
    art.note("atoms", m.len());
    if pairs.len() >= 4 {
        let fit = fit_scaling(&pairs)?;
        art.note("fit_slope", fit.slope);
        art.note("fit_intercept", fit.intercept);
        art.note("fit_method", fit.method.clone());
        art.note("verdict", serde_json::to_value(classify_hyperuniform(&fit, s.d1(), a.margin)).expect("verdict"));
    }
    Ok(true)
}

fn variance(a: &VarianceArgs, art: &mut Artifact) -> Result<bool> {
    let (s, _) = scheme(&a.common)?;
    let b = budget(&a.common);
    let radii = parse_grid(&a.r_grid)?;
    let specs = [
        LayerSpec { eps_max: 200.0, weight_floor: 1e-8 },
        LayerSpec { eps_max: 20.0, weight_floor: 1e-11 },
        LayerSpec { eps_max: 2.0, weight_floor: 1e-13 },
    ];
    let m = centered_diffraction_layered(&s, &specs, b)?;
    art.columns = vec!["R", "mc_variance", "mc_stderr", "spectral", "spectral_tail_bound", "geometric", "z"];
    for (k, &r) in radii.iter().enumerate() {
        let shape = Window::ball(s.d1(), r)?;
        let sv = spectral_variance(&m, &shape, s.intensity())?;
        let geo = geometric_variance(&s, &shape, b)?;
        let mc = mc_number_variance(&s, r, a.samples, split_seed(a.common.seed, k as u64), b)?;
        let z = (mc.variance - sv.value) / mc.stderr_variance;
        art.tail(&format!("spectral(R={r})"), sv.tail_bound);
        art.rows.push(vec![json!(r), json!(mc.variance), json!(mc.stderr_variance), json!(sv.value), json!(sv.tail_bound), json!(geo), json!(z)]);
    }
    art.note("scheme", s.label.clone());
    Ok(true)
}

fn anv(a: &AnvArgs, art: &mut Artifact) -> Result<bool> {
    let (s, _) = scheme(&a.common)?;
    let radii = parse_grid(&a.r_grid)?;
    let curve = mc_anv_curve(&s, &radii, a.samples, a.common.seed, budget(&a.common))?;
    art.columns = vec!["R", "var", "var_over_vol", "stderr", "n", "seed"];
    for p in curve {
        art.rows.push(vec![json!(p.r), json!(p.variance), json!(p.var_over_vol), json!(p.stderr), json!(p.n), json!(p.seed)]);
    }
    art.note("scheme", s.label.clone());
    Ok(true)
}

fn repellence(a: &RepellenceArgs, art: &mut Artifact) -> Result<bool> {
    let (s, gamma_a) = scheme(&a.common)?;
    let b = budget(&a.common);
    let eps = decreasing(parse_grid(&a.eps_grid)?);
    let l = match a.lattice {
        Which::Primal => s.lattice.clone(),
        Which::Dual => s.lattice.dual_basis()?,
    };
    let scan = beta_repellence_scan(&l, &eps, a.xi2_cap, b)?;
    art.columns = vec!["eps", "min_xi2", "capped"];
    for r in &scan.rows {
        art.rows.push(vec![json!(r.eps), json!(r.min_xi2), json!(r.capped)]);
    }
    art.note("scheme", s.label.clone());
    art.note("beta_hat", scan.beta_hat.map_or(Value::Null, |v| json!(v)));
    if let Some(q_max) = a.q_max {
        let av = gamma_a.ok_or_else(|| QcsError::InvalidArgument("--q-max needs a gamma_a preset".into()))?;
        let scan = alpha_repellence_scan(&[ExactRational::from_f64(av)?], 1, 1, q_max, b)?;
        art.note("alpha_hat", if scan.infinite { json!("inf") } else { json!(scan.alpha_hat) });
        art.note("alpha_pointwise", scan.alpha_pointwise);
    }
    Ok(true)
}

fn nonhyper(a: &NonhyperArgs, art: &mut Artifact) -> Result<bool> {
    let c = nonhyper_certificate(a.gamma, a.levels, a.delta, a.grid_n)?;
    art.columns = vec!["k", "u_k", "m_k", "mass", "tail_bound", "mass_lower_bound", "sin2", "ratio"];
    for r in &c.rows {
        art.tail(&format!("mass(k={})", r.k), r.tail_bound);
        art.rows.push(vec![
            json!(r.k),
            json!(r.u_k.to_f64()),
            json!(r.m_k.to_string()),
            json!(r.mass),
            json!(r.tail_bound),
            json!(r.mass_lower_bound),
            json!(r.sin2),
            json!(r.ratio),
        ]);
    }
    art.note("certificate", serde_json::to_value(&c).expect("certificate serializes"));
    art.note("pass", c.pass);
    Ok(c.pass)
}

fn suspension(a: &SuspensionArgs, art: &mut Artifact) -> Result<bool> {
    let q = match (a.q, a.common.preset.as_deref()) {
        (Some(q), _) => q,
        (None, Some(p)) => match parse_preset(p)? {
            Preset::Suspension(q) => q,
            _ => return Err(QcsError::InvalidArgument("suspension needs --q or a suspension:q preset".into())),
        },
        (None, None) => 0.75,
    };
    let p = SuspensionParams::new(q)?;
    let radii = parse_grid(&a.r_grid)?;
    let clb = clb_bound_check(&p, &radii, a.terms)?;
    let ob = coboundary_obstruction(&p, a.terms)?;
    art.tail("sigma2", clb.sigma2.tail_bound);
    art.tail("cf", clb.cf.tail_bound);
    art.tail("obstruction", ob.tail_bound);
    art.note("q", q);
    art.note("c0", clb.c0);
    art.note("sigma2", clb.sigma2.value);
    art.note("cf", clb.cf.value);
    art.note("obstruction_modulus", ob.modulus);
    art.note("obstruction_nonzero", ob.nonzero);
    art.note("clb_pass", clb.pass);
    art.columns = vec!["R", "variance", "deviation", "bound", "margin", "mc_variance", "mc_stderr"];
    for (k, row) in clb.rows.iter().enumerate() {
        let exact = exact_count_variance(&p, row.r)?;
        let (mv, ms) = if a.samples >= 2 && row.r >= 1.0 {
            let e = mc_suspension_variance(&p, row.r, a.samples, split_seed(a.common.seed, k as u64))?;
            (json!(e.variance), json!(e.stderr_variance))
        } else {
            (Value::Null, Value::Null)
        };
        art.rows.push(vec![json!(row.r), json!(exact), json!(row.deviation), json!(row.bound), json!(row.margin), mv, ms]);
    }
    Ok(clb.pass && ob.nonzero)
}

fn padic(a: &PadicArgs, art: &mut Artifact) -> Result<bool> {
    let p = match (a.p, a.common.preset.as_deref()) {
        (Some(p), _) => p,
        (None, Some(s)) => match parse_preset(s)? {
            Preset::Padic(p) => p,
            _ => return Err(QcsError::InvalidArgument("padic needs --p or a padic:p preset".into())),
        },
        (None, None) => return Err(QcsError::InvalidArgument("padic needs --p or a padic:p preset".into())),
    };
    let bounds = PAdicBounds { max_height: a.max_height, max_denom_exp: a.max_denom_exp };
    let st = stealth_check(p, &bounds)?;
    art.note("p", p);
    art.note("mass_on_zp", st.mass_on_zp);
    art.note("control_mass", st.control_mass);
    art.note("stealth", st.pass);
    art.columns = vec!["k", "j", "valuation", "weight"];
    for at in padic_diffraction_atoms(p, &bounds)? {
        art.rows.push(vec![json!(at.k), json!(at.j), json!(at.valuation), json!(at.weight)]);
    }
    Ok(st.pass)
}

fn rigidity(a: &RigidityArgs, art: &mut Artifact) -> Result<bool> {
    let (s, _) = scheme(&a.common)?;
    let b = budget(&a.common);
    let d = s.d1();
    let eps = decreasing(parse_grid(&a.eps_grid)?);
    let p = 2 * d as i32 + 4;
    let specs: Vec<LayerSpec> = eps.iter().map(|&e| LayerSpec { eps_max: e, weight_floor: a.floor_scale * e.powi(p) }).collect();
    let m = centered_diffraction_layered(&s, &specs, b)?;
    let rc = rigidity_check(&m, &eps, d, a.delta)?;
    art.columns = vec!["eps", "mass", "tail_bound", "ratio", "t", "gaussian", "gaussian_tail_bound"];
    let mut gs = Vec::with_capacity(eps.len());
    for (i, &e) in eps.iter().enumerate() {
        let t = e.powf(1.0 + a.gamma_t);
        let g = gaussian_statistic_adaptive(&s, t, a.rel_tol, b)?;
        let mass = m.ball_mass(e)?.mass;
        art.tail(&format!("mass(eps={e})"), rc.tail_bounds[i]);
        art.tail(&format!("gaussian(t={t})"), g.tail_bound);
        art.rows.push(vec![json!(e), json!(mass), json!(rc.tail_bounds[i]), json!(rc.ratios[i]), json!(t), json!(g.value), json!(g.tail_bound)]);
        gs.push(g);
    }
    let decreasing_gs = gs.windows(2).all(|w| w[1].value + w[1].tail_bound < w[0].value);
    art.note("scheme", s.label.clone());
    art.note("c_hat", rc.c_hat);
    art.note("ratios_non_increasing", rc.pass);
    art.note("gaussian_decreasing", decreasing_gs);
    Ok(rc.pass && decreasing_gs)
}
