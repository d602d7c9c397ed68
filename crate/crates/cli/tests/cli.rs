use std::path::PathBuf;
use std::process::{Command, Output};

fn qcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcs")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn header(text: &str, key: &str) -> Option<String> {
    let prefix = format!("# {key}: ");
    text.lines().find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qcs-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn padic_two_is_stealthy() {
    let o = qcs(&["padic", "--p", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(header(&text, "stealth").as_deref(), Some("true"));
    assert_eq!(header(&text, "mass_on_zp").as_deref(), Some("0.0"));
    assert!(text.contains("\nk,j,valuation,weight\n"));
    let o = qcs(&["padic", "--preset", "padic:7", "--max-height", "50", "--max-denom-exp", "2"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn nonhyper_certificate_json() {
    let o = qcs(&["nonhyper", "--gamma", "4", "--delta", "0.6", "--levels", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["command"], "nonhyper");
    assert_eq!(v["summary"]["pass"], true);
    assert_eq!(v["summary"]["certificate"]["rows"].as_array().unwrap().len(), 2);
    assert!(v["tail_bounds"]["mass(k=1)"].as_f64().unwrap() > 0.0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(qcs(&["bogus"]).status.code(), Some(1));
    assert_eq!(qcs(&["nonhyper", "--gamma", "4"]).status.code(), Some(1));
    let o = qcs(&["nonhyper", "--gamma", "4", "--delta", "0.4", "--levels", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside theorem regime"));
    assert_eq!(qcs(&["diffraction", "--preset", "padic:2"]).status.code(), Some(1));
    assert_eq!(qcs(&["diffraction", "--preset", "quadratic:4"]).status.code(), Some(1));
    assert_eq!(qcs(&["--help"]).status.code(), Some(0));
}

#[test]
fn budget_failure_exits_two() {
    let o = qcs(&["diffraction", "--preset", "fibonacci", "--budget", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_check_exits_three() {
    // the ball-mass ratios of the Fibonacci scheme increase along golden radii
    let o = qcs(&["rigidity", "--eps-grid", "golden:2:5"]);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert_eq!(header(&text, "ratios_non_increasing").as_deref(), Some("false"));
    assert_eq!(header(&text, "gaussian_decreasing").as_deref(), Some("true"));
    assert!(text.contains("eps,mass,tail_bound,ratio,t,gaussian,gaussian_tail_bound"));
}

#[test]
fn quadratic_diffraction_slope_near_two() {
    let o = qcs(&["diffraction", "--preset", "quadratic:2", "--eps-grid", "1e-1:1e-4:log8"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let slope: f64 = header(&text, "fit_slope").unwrap().parse().unwrap();
    assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    assert_eq!(header(&text, "verdict").as_deref(), Some("sub_poissonian"));
    assert!(text.starts_with("# qcs "));
    assert!(text.contains("# tail_bound mass(eps=0.1): "));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 9);
}

#[test]
fn reruns_are_bit_identical() {
    let cases: [&[&str]; 4] = [
        &["variance", "--preset", "fibonacci", "--samples", "400", "--seed", "11"],
        &["anv", "--preset", "gamma_a:1.3,0.3", "--samples", "300", "--R-grid", "2,8"],
        &["suspension", "--samples", "300", "--format", "json"],
        &["repellence", "--preset", "quadratic:3"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let a = scratch(&format!("run{i}-a"));
        let b = scratch(&format!("run{i}-b"));
        let mut first: Vec<&str> = args.to_vec();
        let pa = a.to_str().unwrap().to_string();
        first.extend(["--out", &pa]);
        assert_eq!(qcs(&first).status.code(), Some(0), "{args:?}");
        let mut second: Vec<&str> = args.to_vec();
        let pb = b.to_str().unwrap().to_string();
        second.extend(["--out", &pb, "--threads", "1"]);
        assert_eq!(qcs(&second).status.code(), Some(0), "{args:?}");
        let (ta, tb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
        // configs differ only in the echoed output path and thread count
        let body = |t: &str| t.lines().filter(|l| !l.contains("\"out\"") && !l.contains("\"threads\"")).map(str::to_string).collect::<Vec<_>>();
        assert_eq!(body(&ta), body(&tb), "{args:?}");
        let mut third: Vec<&str> = args.to_vec();
        third.extend(["--out", &pa]);
        qcs(&third);
        assert_eq!(std::fs::read(&a).unwrap(), ta.as_bytes(), "{args:?}");
    }
}

#[test]
fn suspension_json_and_preset() {
    let o = qcs(&["suspension", "--preset", "suspension:0.75", "--samples", "0", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["summary"]["c0"], 0.1875);
    assert_eq!(v["summary"]["sigma2"], 0.0625);
    assert_eq!(v["summary"]["clb_pass"], true);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[0]["mc_variance"].is_null());
    assert!(v["tail_bounds"]["sigma2"].as_f64().unwrap() < 1e-15);
}

#[test]
fn scheme_json_input() {
    let path = scratch("scheme.json");
    std::fs::write(&path, qcs_core::diffraction::fibonacci_scheme().to_json()).unwrap();
    let p = path.to_str().unwrap();
    let a = qcs(&["diffraction", "--scheme-json", p, "--eps-grid", "0.3,0.2,0.1,0.05"]);
    let b = qcs(&["diffraction", "--preset", "fibonacci", "--eps-grid", "0.3,0.2,0.1,0.05"]);
    assert_eq!(a.status.code(), Some(0));
    let rows = |o: &Output| stdout(o).lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(rows(&a), rows(&b));
}
