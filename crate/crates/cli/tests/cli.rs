//! End-to-end runs of the `multilink` binary on the bundled configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use multilink::datasets::gennings1994;
use multilink::link::probabilities;
use multilink::model::{Dataset, ModelSpec, Observation};
use multilink::special::chi2_sf;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn multilink(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multilink"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn kv(path: &Path) -> Vec<(String, String)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn get<'a>(doc: &'a [(String, String)], key: &str) -> &'a str {
    &doc.iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("no key {key}"))
        .1
}

fn config(name: &str) -> String {
    configs().join(format!("{name}.toml")).display().to_string()
}

#[test]
fn logit_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = multilink(&["fit", "--config", &config("logit")], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let txt = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(txt.contains("deviance        29.6048"), "{txt}");
    let doc = kv(&dir.path().join("report.kv"));
    let deviance: f64 = get(&doc, "fit.deviance").parse().unwrap();
    assert!((deviance - 29.6048).abs() < 1e-4);
    let cov = std::fs::read_to_string(dir.path().join("covariance.csv")).unwrap();
    assert_eq!(cov.lines().count(), 7);
    assert!(cov.starts_with("parameter,beta10,beta11"));
}

#[test]
fn intercept_fit_reports_both_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = multilink(&["fit", "--config", &config("intercepts")], dir.path());
    assert!(out.status.success());
    let doc = kv(&dir.path().join("report.kv"));
    let deviance: f64 = get(&doc, "fit.deviance").parse().unwrap();
    assert!((deviance - 22.9148).abs() < 0.05);
    for name in ["beta10", "beta11", "beta12", "beta20", "beta21", "beta22"] {
        let se: f64 = get(&doc, &format!("param.{name}.se")).parse().unwrap();
        let fixed: f64 = get(&doc, &format!("param.{name}.se_alpha_fixed")).parse().unwrap();
        let inflation: f64 = get(&doc, &format!("param.{name}.inflation")).parse().unwrap();
        assert!(se > fixed && (se / fixed - inflation).abs() < 1e-12);
    }
    assert_eq!(get(&doc, "link.active"), "alpha11,alpha12");
    let txt = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(txt.contains("se (alpha fixed)"));
}

#[test]
fn test_link_p_values_match_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = multilink(&["test-link", "--config", &config("intercepts")], dir.path());
    assert!(out.status.success());
    let doc = kv(&dir.path().join("report.kv"));
    for label in [
        "alpha11",
        "alpha12",
        "alpha21",
        "alpha22",
        "category1",
        "category2",
        "all",
    ] {
        let stat: f64 = get(&doc, &format!("test.{label}.statistic")).parse().unwrap();
        let df: usize = get(&doc, &format!("test.{label}.df")).parse().unwrap();
        let p: f64 = get(&doc, &format!("test.{label}.p_value")).parse().unwrap();
        assert_eq!(p, chi2_sf(stat, df), "{label}");
    }
    assert_eq!(get(&doc, "test.category1.df"), "2");
    assert_eq!(get(&doc, "test.all.df"), "4");
}

/// Counts at the bundled design points drawn from the logit model fitted to
/// the bundled data.
fn simulated_logit_data(seed: u64, n: u32) -> Dataset {
    let design = gennings1994();
    let spec = ModelSpec::first_order(2, 2);
    let fit = multilink::fitting::fit(
        &design,
        &spec,
        &multilink::link::MultinomialLink::logit(2),
        &Default::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = design
        .observations()
        .iter()
        .map(|obs| {
            let pi = probabilities(&spec.linear_predictor(&fit.delta.beta, &obs.x));
            let mut y = vec![0u32; 2];
            for _ in 0..n {
                let u: f64 = rng.gen();
                if u < pi[0] {
                    y[0] += 1;
                } else if u < pi[0] + pi[1] {
                    y[1] += 1;
                }
            }
            Observation { x: obs.x.clone(), y, n }
        })
        .collect();
    Dataset::new(rows).unwrap()
}

#[test]
fn stepwise_keeps_logit_on_simulated_logit_data() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = dir.path().join("simulated.csv");
    let data = simulated_logit_data(2024, 500);
    multilink::csv::write_dataset(&data, std::fs::File::create(&data_path).unwrap()).unwrap();
    let set = format!("data={}", toml_string(&data_path));
    let out = multilink(
        &["test-link", "--config", &config("intercepts"), "--set", &set],
        &dir.path().join("out"),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = kv(&dir.path().join("out/report.kv"));
    assert_eq!(get(&doc, "stepwise.selected"), "");
    assert_eq!(get(&doc, "stepwise.mask"), "0,0;0,0");
}

fn toml_string(p: &Path) -> String {
    format!("\"{}\"", p.display().to_string().replace('\\', "\\\\"))
}

#[test]
fn region_outputs_at_reduced_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let out = multilink(
        &[
            "region",
            "--config",
            &config("intercepts"),
            "--set",
            "percentile.trace.n2=100",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read_csv = |m: &str| -> Vec<Vec<String>> {
        std::fs::read_to_string(dir.path().join(format!("region_{m}.csv")))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(String::from).collect())
            .collect()
    };
    let (cons, lr, score) = (read_csv("conservative"), read_csv("lr"), read_csv("score"));
    for rows in [&cons, &lr, &score] {
        assert_eq!(rows.len(), 21);
    }
    for (l, s) in lr.iter().zip(&score) {
        assert_eq!(l[1], s[1]);
        if l[4] == "0" {
            assert_eq!(s[4], "0");
            let num = |v: &String| v.parse::<f64>().unwrap();
            assert!(num(&l[2]) >= num(&s[2]) && num(&l[3]) <= num(&s[3]));
        } else {
            assert!(l[2].is_empty() && l[3].is_empty());
        }
    }
    let meta = kv(&dir.path().join("region_meta.kv"));
    let x0: Vec<f64> = get(&meta, "x0").split(',').map(|v| v.parse().unwrap()).collect();
    assert!((x0[0] + 0.6715).abs() < 5e-3 && (x0[1] - 0.1365).abs() < 5e-3);
    let chi2: f64 = get(&meta, "conservative.chi2")
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let threshold: f64 = get(&meta, "lr.threshold").parse().unwrap();
    assert!((chi2 - 9.35).abs() < 0.01 && (threshold - 5.99).abs() < 0.01);
    let svg = std::fs::read_to_string(dir.path().join("regions.svg")).unwrap();
    assert!(svg.contains(r#"viewBox="0 0 800 600""#));
    assert!(svg.contains(r#"class="lr""#) && svg.contains(r#"class="score""#));
}

#[test]
fn percentile_prints_estimate_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = multilink(&["percentile", "--config", &config("intercepts")], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.trim(), "x0 = (-0.671410, 0.136626)");
    assert!(!dir.path().exists() || std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn failed_region_method_does_not_stop_others() {
    // Without x2 in the model the two percentile equations in x1 have no
    // common solution, so there is no estimate for the conservative region.
    // The test-based regions are still traced.
    let dir = tempfile::tempdir().unwrap();
    let out = multilink(
        &[
            "region",
            "--config",
            &config("intercepts"),
            "--set",
            "model.terms=[[\"1\", \"x1\"], [\"1\", \"x1\"]]",
            "--set",
            "percentile.trace.n1=3",
            "--set",
            "percentile.trace.n2=20",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = kv(&dir.path().join("region_meta.kv"));
    assert!(get(&meta, "conservative.status").starts_with("failed"));
    assert_eq!(get(&meta, "lr.status"), "ok");
    assert!(dir.path().join("region_lr.csv").exists());
    assert!(!dir.path().join("region_conservative.csv").exists());
}

#[test]
fn exit_status_two_for_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = multilink(
        &[
            "fit",
            "--config",
            &config("logit"),
            "--set",
            "data=\"/no/such/file.csv\"",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.csv"));

    let out = multilink(&["fit", "--config", "/no/such/config.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = multilink(
        &["fit", "--config", &config("logit"), "--set", "fit.tolerance=1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerance"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,y1,y2,n\n0,0,4,3,6\n").unwrap();
    let set = format!("data={}", toml_string(&bad));
    let out = multilink(&["fit", "--config", &config("logit"), "--set", &set], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn exit_status_one_for_numeric_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = multilink(
        &[
            "fit",
            "--config",
            &config("zero_grid"),
            "--set",
            "fit.method=\"fisher_scoring\"",
            "--set",
            "fit.max_iter=3",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
