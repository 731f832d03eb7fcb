use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use quadest::{AugmentedStatistics, EstimatorDesign, EstimatorKind, ExperimentConfig, Filter, FixedPointSmoother, Vector};

fn quadest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadest")).args(args).output().expect("spawn quadest")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV with `# ` header lines stripped.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn fixture_measurements() -> Vec<Vector> {
    let text = std::fs::read_to_string(fixture("sec5_seed1.csv")).unwrap();
    rows(&text).iter().map(|r| Vector::from_element(1, r[1].parse().unwrap())).collect()
}

#[test]
fn filter_output_matches_library_bit_exactly() {
    let out = quadest(&[
        "filter",
        "--model",
        s(&fixture("sec5.conf")),
        "--measurements",
        s(&fixture("sec5_seed1.csv")),
        "--estimator",
        "both",
        "--smooth-at",
        "20",
        "--smooth-N",
        "10",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = rows(&String::from_utf8(out.stdout).unwrap());

    let config = ExperimentConfig::parse(&std::fs::read_to_string(fixture("sec5.conf")).unwrap()).unwrap();
    let ys = fixture_measurements();
    assert_eq!(ys.len(), 100);
    let model = config.model.build(ys.len()).unwrap();
    let stats = AugmentedStatistics::new(&model).unwrap();
    let mut expected = Vec::new();
    for kind in EstimatorKind::ALL {
        let design = EstimatorDesign::new(&stats, kind).unwrap();
        let sd = design.smoother_design(20, 10).unwrap();
        let mut f = Filter::new(&design);
        let mut smoother = None;
        let mut smoothed = Vec::new();
        for y in &ys {
            f.step(y).unwrap();
            let k = f.state().k;
            let (x, p) = f.estimate().unwrap();
            expected.push((k, kind.label().to_string(), "filter".to_string(), x[0], p[(0, 0)]));
            if k == 20 {
                smoother = Some(FixedPointSmoother::new(&sd, x));
            } else if let Some(o) = smoother.as_mut() {
                if o.update(f.state().innovation.as_ref().unwrap()) {
                    smoothed.push((20, kind.label().to_string(), format!("smooth{}", o.n()), o.estimate()[0], sd.cov(o.n()).unwrap()[(0, 0)]));
                }
            }
        }
        assert_eq!(smoothed.len(), 10);
        expected.extend(smoothed);
    }
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!(g[0].parse::<usize>().unwrap(), e.0);
        assert_eq!((&g[1], &g[2]), (&e.1, &e.2));
        assert_eq!(g[3].parse::<f64>().unwrap().to_bits(), e.3.to_bits(), "estimate row {g:?}");
        assert_eq!(g[4].parse::<f64>().unwrap().to_bits(), e.4.to_bits(), "variance row {g:?}");
    }
}

#[test]
fn empty_measurement_file_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = quadest(&["filter", "--model", s(&fixture("sec5.conf")), "--measurements", s(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let body: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body, vec!["k,estimator,kind,x_hat_0,var_0"]);
}

#[test]
fn quadratic_variance_never_exceeds_linear() {
    let out = quadest(&[
        "filter",
        "--model",
        s(&fixture("sec5.conf")),
        "--measurements",
        s(&fixture("sec5_seed1.csv")),
        "--estimator",
        "both",
    ]);
    assert!(out.status.success());
    let rs = rows(&String::from_utf8(out.stdout).unwrap());
    let var = |est: &str| -> Vec<f64> { rs.iter().filter(|r| r[1] == est).map(|r| r[4].parse().unwrap()).collect() };
    let (lin, quad) = (var("lin"), var("quad"));
    assert_eq!((lin.len(), quad.len()), (100, 100));
    for (k, (l, q)) in lin.iter().zip(&quad).enumerate() {
        assert!(q <= l, "k={}: quad {q} > lin {l}", k + 1);
    }
}

#[test]
fn malformed_inputs_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad_k = dir.path().join("bad_k.csv");
    std::fs::write(&bad_k, "k,y_1\n1,0.1\n3,0.2\n").unwrap();
    let wide = dir.path().join("wide.csv");
    std::fs::write(&wide, "k,y_1,y_2\n1,0.1,0.2\n").unwrap();
    let bad_conf = dir.path().join("bad.conf");
    std::fs::write(&bad_conf, "model.signal.phi = 0.95\nmodel.attack.lambda_bar = 1.5\n").unwrap();
    let model = fixture("sec5.conf");
    for (m, y) in [(&model, &bad_k), (&model, &wide), (&bad_conf, &fixture("sec5_seed1.csv"))] {
        let out = quadest(&["filter", "--model", s(m), "--measurements", s(y)]);
        assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(quadest(&["experiment", "fig9"]).status.code(), Some(2));
}

#[test]
fn quick_validation_passes_fast() {
    let start = Instant::now();
    let out = quadest(&["validate", "--quick"]);
    let elapsed = start.elapsed();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.contains("L<=3")));
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn perturbed_psi_fails_validation() {
    let out = quadest(&["validate", "--quick", "--perturb-psi", "1e-3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stdout).unwrap().lines().any(|l| l.starts_with("FAIL")));
}

#[test]
fn experiments_are_reproducible_and_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    std::fs::write(
        &conf,
        std::fs::read_to_string(fixture("sec5.conf")).unwrap().replace("experiment.horizon = 100", "experiment.horizon = 30")
            + "experiment.kind = curves\nexperiment.n_max = 4\nexperiment.runs = 300\n",
    )
    .unwrap();
    let read = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = quadest(&["experiment", s(&conf), "--out-dir", s(&out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(out_dir.join("small.csv")).unwrap(), std::fs::read_to_string(out_dir.join("small.svg")).unwrap())
    };
    let (a, svg) = read("a");
    let (b, _) = read("b");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let hash_line = text.lines().find(|l| l.starts_with("# config_sha256=")).unwrap();
    assert!(text.lines().any(|l| l == "# seed=1"));
    assert!(svg.contains(hash_line.trim_start_matches("# ")));
    // lag N is available for k <= 30 - N
    let per_estimator: usize = (0..=4).map(|n| 30 - n).sum();
    assert_eq!(rows(&text).len(), 2 * per_estimator);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("t.conf");
    std::fs::write(
        &conf,
        std::fs::read_to_string(fixture("sec5.conf")).unwrap().replace("experiment.horizon = 100", "experiment.horizon = 12")
            + "experiment.kind = curves\nexperiment.n_max = 2\nexperiment.runs = 600\n",
    )
    .unwrap();
    let run = |threads: &str| {
        let out_dir = dir.path().join(threads);
        let st = Command::new(env!("CARGO_BIN_EXE_quadest"))
            .env("QUADEST_THREADS", threads)
            .args(["experiment", s(&conf), "--out-dir", s(&out_dir)])
            .status()
            .unwrap();
        assert!(st.success());
        std::fs::read(out_dir.join("t.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
    let bad = Command::new(env!("CARGO_BIN_EXE_quadest")).env("QUADEST_THREADS", "zero").args(["validate", "--quick"]).status().unwrap();
    assert_eq!(bad.code(), Some(2));
}

#[test]
fn simulate_reproduces_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("meas.csv");
    let truth = dir.path().join("truth.csv");
    let st = quadest(&["simulate", "--model", s(&fixture("sec5.conf")), "--seed", "1", "-o", s(&out), "--truth", s(&truth)]);
    assert!(st.status.success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixture("sec5_seed1.csv")).unwrap());
    let t = std::fs::read_to_string(&truth).unwrap();
    assert_eq!(rows(&t).len(), 100);
}

#[test]
fn stats_dump_writes_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = quadest(&["stats", "--model", s(&fixture("sec5.conf")), "--horizon", "5", "--out-dir", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let prov = std::fs::read_to_string(dir.path().join("provenance.txt")).unwrap();
    assert!(prov.contains("config_sha256="));
    assert!(String::from_utf8(out.stdout).unwrap().lines().count() > 1);
}
