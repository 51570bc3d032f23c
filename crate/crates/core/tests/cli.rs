use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_correntropy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Plain 2x2 least squares from the CSV text, no library code involved.
fn ols_2d(csv: &str) -> [f64; 2] {
    let (mut a, mut b, mut c, mut u, mut v) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|s| s.trim().parse().unwrap()).collect();
        let (y, x1, x2) = (f[0], f[1], f[2]);
        a += x1 * x1;
        b += x1 * x2;
        c += x2 * x2;
        u += x1 * y;
        v += x2 * y;
    }
    let det = a * c - b * b;
    [(c * u - b * v) / det, (a * v - b * u) / det]
}

#[test]
fn gen_then_fit_matches_direct_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let out = run(&[
        "gen",
        "--theta",
        "0.5,-1",
        "--n-samples",
        "80",
        "--epsilon",
        "0.1",
        "--design",
        "unit",
        "--seed",
        "3",
        "--out",
        path_str(&data),
    ]);
    assert!(out.status.success());
    assert!(dir.path().join("d.json").exists());

    let fit = json(&run(&[
        "fit",
        "--input",
        path_str(&data),
        "--method",
        "ols",
    ]));
    let theta: Vec<f64> = fit["theta"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let want = ols_2d(&std::fs::read_to_string(&data).unwrap());
    for (g, w) in theta.iter().zip(want) {
        assert!((g - w).abs() < 1e-10, "{g} vs {w}");
    }
    let err = fit["err"].as_f64().unwrap();
    let direct = ((theta[0] - 0.5).powi(2) + (theta[1] + 1.0).powi(2)).sqrt();
    assert!((err - direct).abs() < 1e-14);
}

#[test]
fn mce_fit_through_cli_is_close_to_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let side = dir.path().join("truth.json");
    assert!(run(&[
        "gen",
        "--theta",
        "0.5,-1,0.2",
        "--epsilon",
        "0.05",
        "--outlier-frac",
        "0.1",
        "--seed",
        "1",
        "--out",
        path_str(&data),
        "--sidecar",
        path_str(&side),
    ])
    .status
    .success());
    let fit = json(&run(&[
        "fit",
        "--input",
        path_str(&data),
        "--sidecar",
        path_str(&side),
        "--p",
        "1",
        "--gamma",
        "0.5",
    ]));
    assert!(fit["err"].as_f64().unwrap() < 0.05);
    assert_eq!(fit["converged"], Value::Bool(true));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        run(&["fit", "--input", "/nonexistent/d.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["--config", "/nonexistent/c.cfg", "mc", "--figure", "fig3"])
            .status
            .code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "y,x1\n1,abc\n").unwrap();
    let out = run(&["fit", "--input", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    // alpha outside (0, 1) is a data-stage rejection
    let m = dir.path().join("m.csv");
    std::fs::write(&m, "x1,x2\n1,0\n0,1\n").unwrap();
    assert_eq!(
        run(&["richness", "--matrix", path_str(&m), "--alpha", "1.5"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn explicit_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bound.cfg");
    std::fs::write(
        &cfg,
        "# shared settings\np = 1\ngamma = 0.5\nepsilon = 0.05\ninlier_frac = 0.8\nrho = 0.8\nalpha = 0.3\nrx = 1\n",
    )
    .unwrap();
    let from_cfg = json(&run(&["--config", path_str(&cfg), "bound"]));
    assert_eq!(from_cfg["alpha"].as_f64(), Some(0.3));
    let overridden = json(&run(&[
        "bound",
        "--config",
        path_str(&cfg),
        "--alpha",
        "0.6",
    ]));
    assert_eq!(overridden["alpha"].as_f64(), Some(0.6));
    let flags_only = json(&run(&[
        "bound",
        "--p",
        "1",
        "--gamma",
        "0.5",
        "--epsilon",
        "0.05",
        "--inlier-frac",
        "0.8",
        "--rho",
        "0.8",
        "--alpha",
        "0.6",
        "--rx",
        "1",
    ]));
    assert_eq!(overridden, flags_only);
}

#[test]
fn richness_json_and_csv_agree() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    std::fs::write(&m, "x1,x2\n1,0\n0,1\n-1,0\n0,-1\n").unwrap();
    let base = [
        "richness",
        "--matrix",
        path_str(&m),
        "--alpha",
        "0.5",
        "--n-samples",
        "200",
    ];
    let j = json(&run(&base));
    // four axis directions: widest gap is pi/2
    let sigma = j["sigma_lower"].as_f64().unwrap();
    assert!((sigma - std::f64::consts::FRAC_PI_4.cos()).abs() < 1e-12);

    let mut csv_args = base.to_vec();
    csv_args.extend(["--format", "csv"]);
    let out = run(&csv_args);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == "rho_exact").unwrap();
    let rho: f64 = row[k].parse().unwrap();
    assert_eq!(rho, j["rho_exact"].as_f64().unwrap());
}

#[test]
fn mc_fig3_writes_expected_columns() {
    let out = run(&["mc", "--figure", "fig3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("epsilon,bound_mce_l,bound_mce_g"));
    assert!(text.lines().count() > 2);
}

#[test]
fn fuzz_corpus_seeds_are_handled() {
    use correntropy::io;
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut seen = 0;
    for (target, parse) in [
        (
            "dataset_csv",
            (|s: &str| io::parse_dataset_csv(s).is_ok()) as fn(&str) -> bool,
        ),
        ("matrix_csv", |s| io::parse_matrix_csv(s).is_ok()),
        ("sidecar_json", |s| io::parse_sidecar_json(s).is_ok()),
        ("config", |s| io::parse_config(s).is_ok()),
    ] {
        let mut accepted = 0;
        for entry in std::fs::read_dir(root.join(target)).unwrap() {
            let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
            accepted += usize::from(parse(&text));
            seen += 1;
        }
        assert!(accepted > 0, "no seed for {target} parses");
    }
    assert!(seen >= 8);
}
