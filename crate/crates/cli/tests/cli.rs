use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jdexpand_cli::commands::{
    cmd_mc, cmd_moment, cmd_price, price_csv, summarize_price, CAUTION, MC_HEADER, MOMENT_HEADER, PRICE_HEADER,
};
use jdexpand_cli::config::{ExperimentConfig, Overrides};
use jdexpand_cli::error::CliError;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs().join(name)).unwrap()
}

fn inline(json: &str) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::from_json(json, Path::new("."))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jdexpand")).args(args).output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn bs_call(s: f64, k: f64, r: f64, sigma: f64, t: f64) -> f64 {
    let sd = sigma * t.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * t) / sd;
    let phi = |z: f64| 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    // Undiscounted forward price.
    s * (r * t).exp() * phi(d1) - k * phi(d1 - sd)
}

#[test]
fn price_csv_header_is_stable() {
    let golden = "model,delta,M,quad_n,S,approx,mc,mc_se,abs_err,pct_err,divergence_onset";
    assert_eq!(PRICE_HEADER, golden);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gbm.csv");
    let o = run(&[
        "price",
        "--config",
        configs().join("gbm.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--paths",
        "2000",
        "--max-M",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next().unwrap(), golden);
    // 3 maturities x 1 order x 41 prices.
    assert_eq!(csv.lines().count(), 1 + 3 * 41);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gbm.csv.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summaries"].as_array().unwrap().len(), 3);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn other_headers() {
    assert_eq!(MOMENT_HEADER, "model,delta,M,quad_n,value,exact,abs_err,divergence_onset");
    assert_eq!(MC_HEADER, "model,delta,S,mc,mc_se,paths,steps,seed");
}

#[test]
fn summaries_are_recomputable_from_rows() {
    let mut cfg = load("gbm.json");
    cfg.mc.paths = 4000;
    let r = cmd_price(&cfg).unwrap();
    assert_eq!(r.summaries.len(), 3 * 5);
    for s in &r.summaries {
        let group: Vec<_> = r
            .rows
            .iter()
            .filter(|x| x.delta == s.delta && x.order == s.order && x.quad_n == s.quad_n)
            .cloned()
            .collect();
        assert_eq!(group.len(), 41);
        let max_abs = group.iter().map(|x| x.abs_err).fold(0.0, f64::max);
        assert_eq!(s.max_abs_err, max_abs);
        assert_eq!(*s, summarize_price(&group));
        for x in &group {
            assert_eq!(x.abs_err, (x.approx - x.mc).abs());
            if x.mc > 0.0 {
                assert_eq!(x.pct_err, Some(x.abs_err / x.mc));
            } else {
                assert_eq!(x.pct_err, None);
            }
        }
    }
}

#[test]
fn gbm_fixed_point_rows() {
    let mut cfg = load("gbm.json");
    cfg.mc.paths = 100_000;
    let r = cmd_price(&cfg).unwrap();
    for row in &r.rows {
        let bs = bs_call(row.s, 100.0, 0.03, 0.2, row.delta);
        assert!((row.approx - bs).abs() < 1e-9, "{row:?} vs {bs}");
    }
    for s in &r.summaries {
        assert!(s.max_abs_err <= 4.0 * s.max_mc_se, "{s:?}");
    }
}

#[test]
fn rows_in_fixed_order() {
    let mut cfg = load("gbm.json");
    cfg.mc.paths = 1000;
    cfg.orders = vec![2, 1];
    let r = cmd_price(&cfg).unwrap();
    let keys: Vec<(f64, usize)> = r.rows.iter().step_by(41).map(|x| (x.delta, x.order)).collect();
    let d = &cfg.maturities;
    assert_eq!(keys, vec![(d[0], 2), (d[0], 1), (d[1], 2), (d[1], 1), (d[2], 2), (d[2], 1)]);
    assert!(r.rows[..41].windows(2).all(|w| w[0].s < w[1].s));
}

#[test]
fn constant_moment_is_one() {
    for name in ["cir_mean.json", "logvol.json", "garch.json"] {
        let mut cfg = load(name);
        cfg.moment = Some(jdexpand_cli::config::MomentSpec { f: "1".into() });
        cfg.orders = vec![1, 3];
        let r = cmd_moment(&cfg).unwrap();
        assert!(r.rows.iter().all(|x| x.value == 1.0), "{name}");
    }
}

#[test]
fn deterministic_model_has_zero_se() {
    let cfg = inline(
        r#"{"model": {"name": "det", "dim": 1, "drift": ["0.1"], "diffusion_sq": [["0"]]},
            "x0": [1.0], "maturities": [0.5, 1.0], "moment": {"f": "x0"},
            "mc": {"paths": 1000, "steps_per_year": 50, "seed": 1}}"#,
    )
    .unwrap();
    let r = cmd_mc(&cfg).unwrap();
    assert_eq!(r.rows.len(), 2);
    for row in &r.rows {
        assert_eq!(row.mc_se, 0.0);
        assert!((row.mc - (1.0 + 0.1 * row.delta)).abs() < 1e-12);
    }
}

#[test]
fn mc_gbm_call_and_se_scaling() {
    let mut cfg = load("gbm.json");
    cfg.maturities = vec![0.25];
    cfg.price_grid.lo = 100.0;
    cfg.price_grid.hi = 100.0;
    cfg.mc.paths = 100_000;
    let a = cmd_mc(&cfg).unwrap().rows[0].clone();
    let bs = bs_call(100.0, 100.0, 0.03, 0.2, 0.25);
    assert!((a.mc - bs).abs() < 4.0 * a.mc_se, "{} vs {bs}", a.mc);
    cfg.mc.paths = 200_000;
    let b = cmd_mc(&cfg).unwrap().rows[0].clone();
    let ratio = b.mc_se / a.mc_se;
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.2 * std::f64::consts::FRAC_1_SQRT_2, "{ratio}");
}

#[test]
fn overrides_apply() {
    let mut cfg = load("logvol.json");
    Overrides {
        seed: Some(99),
        paths: Some(10),
        steps_per_year: Some(20),
        max_order: Some(2),
        quad_n: Some(5),
        cache_dir: None,
    }
    .apply(&mut cfg)
    .unwrap();
    assert_eq!((cfg.mc.seed, cfg.mc.paths, cfg.mc.steps_per_year), (99, 10, 20));
    assert_eq!(cfg.orders, vec![1, 2]);
    assert_eq!(cfg.quad_sizes, vec![5]);
    let bad = Overrides {
        max_order: Some(40),
        ..Default::default()
    };
    assert!(matches!(bad.apply(&mut cfg), Err(CliError::Config(_))));
}

#[test]
fn config_errors() {
    let cases = [
        r#"{"model": {"catalog": "ou", "params": {"kappa": 1, "alpha": 0, "sigma": 1}}, "x0": [0], "maturities": []}"#,
        r#"{"model": {"catalog": "ou", "params": {"kappa": 1, "alpha": 0, "sigma": 1}}, "x0": [0, 1]}"#,
        r#"{"model": {"catalog": "ou", "params": {"kappa": -1, "alpha": 0, "sigma": 1}}, "x0": [0]}"#,
        r#"{"model": {"catalog": "ou", "params": {"kappa": 1, "alpha": 0, "sigma": 1}}, "x0": [0], "bogus": 1}"#,
        r#"{"model": {"catalog": "ou", "params": {"kappa": 1, "alpha": 0, "sigma": 1}}, "x0": [0], "strike": 0}"#,
        r#"{"model": {"catalog": "ou", "params": {"kappa": 1, "alpha": 0, "sigma": 1}}, "x0": [0], "orders": [13]}"#,
        r#"{"model": {"catalog": "ou", "params": {"kappa": 1, "alpha": 0, "sigma": 1}}, "x0": [0], "quad_sizes": [0]}"#,
    ];
    for c in cases {
        assert!(matches!(inline(c), Err(CliError::Config(_))), "{c}");
    }
}

#[test]
fn shortcut_on_ineligible_model_is_rejected() {
    let mut cfg = load("logvol.json");
    cfg.method = jdexpand_cli::config::Method::Shortcut;
    assert!(matches!(cmd_price(&cfg), Err(CliError::Config(_))));
}

#[test]
fn model_file_reference() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("ou.json"),
        r#"{"catalog": "ou", "params": {"kappa": 1, "alpha": 0, "sigma": 1}}"#,
    )
    .unwrap();
    let p = dir.path().join("cfg.json");
    fs::write(&p, r#"{"model": {"file": "ou.json"}, "x0": [1.0], "moment": {"f": "x0"}}"#).unwrap();
    let cfg = ExperimentConfig::load(&p).unwrap();
    assert_eq!(cfg.build_model().unwrap().name, "ou");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = write_config(dir.path(), "{ not json");
    assert_eq!(run(&["price", "--config", &bad_json]).status.code(), Some(2));
    assert_eq!(run(&["price", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));

    let budget = write_config(
        dir.path(),
        &fs::read_to_string(configs().join("logvol.json")).unwrap().replacen('{', r#"{"node_budget": 50,"#, 1),
    );
    let o = run(&["price", "--config", &budget, "--paths", "10"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let bad_start = write_config(
        dir.path(),
        r#"{"model": {"catalog": "cir", "params": {"kappa": 2, "alpha": 0.04, "sigma": 0.3}},
            "x0": [-0.1], "moment": {"f": "x0"}, "mc": {"paths": 10, "steps_per_year": 10}}"#,
    );
    assert_eq!(run(&["mc", "--config", &bad_start]).status.code(), Some(4));

    let ok = write_config(
        dir.path(),
        r#"{"model": {"catalog": "cir", "params": {"kappa": 2, "alpha": 0.04, "sigma": 0.3}},
            "x0": [0.05], "orders": [2], "moment": {"f": "x0"}}"#,
    );
    let o = run(&["moment", "--config", &ok]);
    assert_eq!(o.status.code(), Some(0));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().next().unwrap(), MOMENT_HEADER);
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn caution_goes_to_stderr() {
    let o = run(&[
        "price",
        "--config",
        configs().join("garch.json").to_str().unwrap(),
        "--paths",
        "1000",
        "--steps-per-year",
        "100",
        "--max-M",
        "4",
    ]);
    assert!(o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains(CAUTION), "{err}");
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(!out.contains(CAUTION));
    assert!(out.lines().skip(1).any(|l| !l.ends_with(',')));
}

#[test]
fn no_caution_without_onset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"catalog": "ou", "params": {"kappa": 1, "alpha": 0, "sigma": 1}},
            "x0": [1.0], "maturities": [0.5], "orders": [8], "moment": {"f": "x0"}}"#,
    );
    let o = run(&["moment", "--config", &cfg]);
    assert!(o.status.success());
    assert!(!String::from_utf8(o.stderr).unwrap().contains(CAUTION));
}

#[test]
fn cache_reuses_expansions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("logvol.json");
    cfg.mc.paths = 500;
    cfg.orders = vec![1, 2];
    cfg.cache_dir = Some(dir.path().to_path_buf());
    let a = cmd_price(&cfg).unwrap();
    assert!(fs::read_dir(dir.path()).unwrap().count() > 0);
    let b = cmd_price(&cfg).unwrap();
    assert_eq!(price_csv(&a.rows), price_csv(&b.rows));
    cfg.cache_dir = None;
    assert_eq!(a.config_hash, cmd_price(&cfg).unwrap().config_hash);
}
