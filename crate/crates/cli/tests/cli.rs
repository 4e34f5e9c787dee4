use std::fs;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pattern-entropy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn records(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s:?}"))
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// `(bound, value, exact)` per row.
fn bound_values(text: &str) -> Vec<(String, f64, Option<f64>)> {
    let (h, rows) = records(text);
    let (v, e) = (column(&h, "value"), column(&h, "exact"));
    rows.iter()
        .map(|r| {
            (
                r[0].clone(),
                num(&r[v]),
                (!r[e].is_empty()).then(|| num(&r[e])),
            )
        })
        .collect()
}

#[test]
fn fair_coin_two_draws() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "run.toml",
        "theta = [0.5, 0.5]\nn = 2\nbounds = [\"simple\"]\noracle = true\n",
    );
    let rows = bound_values(&stdout(&run(&["bounds", "--config", &cfg])));
    assert_eq!(rows.len(), 2);
    let (lower, upper) = (&rows[0], &rows[1]);
    assert_eq!(lower.0, "simple_lower");
    assert_eq!(upper.0, "simple_upper");
    assert!((lower.1 - 1.0).abs() < 1e-12);
    assert!((upper.1 - 2.0).abs() < 1e-12);
    assert!((lower.2.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn single_letter_is_all_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "run.toml",
        "theta = [1.0]\nn = 5\nbounds = [\"simple\"]\noracle = true\n",
    );
    for (name, value, exact) in bound_values(&stdout(&run(&["bounds", "--config", &cfg]))) {
        assert_eq!(value, 0.0, "{name}");
        assert_eq!(exact, Some(0.0), "{name}");
    }
}

#[test]
fn packed_low_letters_are_loosest_for_light_tails() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "run.json",
        r#"{"source": {"family": "two-level", "phi0": 0.5, "mu": 0.5, "nu": 0.4},
            "n": 1000000, "epsilon": 0.45, "bounds": ["ub3", "c1", "c21", "c2_loosened"]}"#,
    );
    let rows = bound_values(&stdout(&run(&["bounds", "--config", &cfg])));
    let value = |name: &str| rows.iter().find(|r| r.0 == name).unwrap().1;
    for other in ["ub3", "c21", "c2_loosened"] {
        assert!(
            value("c1") > value(other),
            "c1 {} vs {other} {}",
            value("c1"),
            value(other)
        );
    }
}

#[test]
fn output_is_reproducible_and_terms_add_up() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "run.toml",
        r#"
n = 10000
epsilon = 0.3
bounds = ["simple", "ub1", "ub1_tight", "lb2", "ub3", "c1", "c21", "c2_exact", "c2_loosened", "lb4", "contribution", "range"]
monte_carlo = false

[source]
family = "zipf"
k = 400
exponent = 1.1
"#,
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        stdout(&run(&[
            "bounds",
            "--config",
            &cfg,
            "--out",
            &out.display().to_string(),
        ]));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let (h, rows) = records(&text);
    assert!(rows.len() >= 12);
    let v = column(&h, "value");
    let err = column(&h, "error");
    for r in &rows {
        assert!(r[err].is_empty(), "{}: {}", r[0], r[err]);
        let mut sum = 0.0;
        let mut i = 1;
        while let Some(c) = h.iter().position(|x| *x == format!("term{i}")) {
            if !r[c].is_empty() {
                sum += num(&r[c]);
            }
            i += 1;
        }
        let value = num(&r[v]);
        assert!(
            (sum - value).abs() <= 1e-9 * value.abs().max(1.0),
            "{}: {sum} vs {value}",
            r[0]
        );
    }
}

#[test]
fn unnormalized_source_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.toml", "theta = [0.3, 0.6]\nn = 4\n");
    let o = run(&["bounds", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sum"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "run.toml",
        "theta = [0.5, 0.5]\nn = 4\nepsilion = 0.2\n",
    );
    assert_eq!(run(&["bounds", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn oracle_cap_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "run.toml",
        "theta = [0.25, 0.25, 0.25, 0.25]\nn = 40\noracle = true\n",
    );
    assert_eq!(run(&["bounds", "--config", &cfg]).status.code(), Some(3));
    assert_eq!(run(&["oracle", "--config", &cfg]).status.code(), Some(3));
}

#[test]
fn oracle_reports_exact_and_sampled_entropy() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "run.toml",
        "theta = [0.2, 0.3, 0.5]\nn = 6\nmonte_carlo = true\n\n[mc]\nsamples = 20000\nseed = 3\n",
    );
    let text = stdout(&run(&["oracle", "--config", &cfg]));
    let (h, rows) = records(&text);
    let exact = num(&rows[0][column(&h, "h_pattern")]);
    let mean = num(&rows[0][column(&h, "mc_mean")]);
    let se = num(&rows[0][column(&h, "mc_std_error")]);
    assert!(
        (exact - mean).abs() <= 5.0 * se,
        "{exact} vs {mean} +- {se}"
    );
}

#[test]
fn verify_single_suite() {
    let o = run(&["verify", "--suite", "sandwich", "--seed", "0"]);
    stdout(&o);
    assert_eq!(
        run(&["verify", "--suite", "nonsense"]).status.code(),
        Some(1)
    );
}

#[test]
fn region_sweep_switches_on_at_threshold() {
    let text = stdout(&run(&[
        "region",
        "--n",
        "1e6",
        "--epsilon",
        "0.2",
        "--n-eps1",
        "20",
        "--k-min",
        "100",
        "--k-max",
        "100000",
        "--points",
        "60",
    ]));
    let (h, rows) = records(&text);
    let (k, t, up, above) = (
        column(&h, "k"),
        column(&h, "threshold"),
        column(&h, "upper_decrease"),
        column(&h, "above_threshold"),
    );
    assert_eq!(rows.len(), 60);
    let threshold = num(&rows[0][t]);
    assert!((threshold - 1e6f64.powf(1.0 / 3.0 + 0.2)).abs() < 1e-6 * threshold);
    for r in &rows {
        let below = num(&r[k]) < threshold;
        assert_eq!(r[above] == "true", !below);
        if below {
            assert_eq!(num(&r[up]), 0.0);
        }
    }
    let last: Vec<f64> = rows.iter().rev().take(10).map(|r| num(&r[up])).collect();
    assert!(last.windows(2).all(|w| w[0] > w[1]) && last[9] > 0.0);
}

#[test]
fn code_round_trips_given_and_sampled_sequences() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.toml", "theta = [0.1, 0.2, 0.3, 0.4]\nn = 20\n");
    let input = write(&dir, "seq.txt", "# letters are 1-based\n1 2 2 3\n4,4,1\n");
    for args in [
        vec!["code", "--config", &cfg, "--input", &input],
        vec!["code", "--config", &cfg, "--count", "5", "--seed", "7"],
    ] {
        let (h, rows) = records(&stdout(&run(&args)));
        let (rt, bits, len) = (
            column(&h, "roundtrip"),
            column(&h, "bits"),
            column(&h, "codelength"),
        );
        for r in &rows {
            assert_eq!(r[rt], "true");
            let (b, l) = (num(&r[bits]), num(&r[len]));
            assert!(b >= l - 1e-9 && b <= l + 2.0 + 1e-9);
        }
    }
    let (_, rows) = records(&stdout(&run(&[
        "code", "--config", &cfg, "--input", &input,
    ])));
    assert_eq!(rows[0][2], "1223");
}

#[test]
fn json_output_parses() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "run.toml",
        "theta = [0.5, 0.25, 0.25]\nn = 4\nbounds = [\"simple\", \"ub1\"]\n",
    );
    let text = stdout(&run(&["bounds", "--config", &cfg, "--format", "json"]));
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
    assert_eq!(doc["source"]["k"], 3);
}
