use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rankone::correlation::{autocorrelation_sequence, CorrelationSequence};
use rankone::pair::ConstructionCertificate;
use rankone::rank1::RankOneSpec;
use rankone::schedule::Interval;
use rankone::Rational;

fn rankone(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankone"))
        .args(args)
        .env("RANKONE_OUT_DIR", dir)
        .env("RANKONE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn planned(dir: &Path, horizon: u64) {
    let h = horizon.to_string();
    let o = rankone(dir, &["schedule", "--growth", "10", "--horizon", &h]);
    assert!(o.status.success(), "{}", text(&o));
    let o = rankone(dir, &["plan", "--schedule", dir.join("schedule.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
}

fn pair_args(dir: &Path) -> Vec<String> {
    ["spec_s", "cert_s", "spec_t", "cert_t"]
        .iter()
        .flat_map(|n| {
            let flag = if n.starts_with("spec") { "--spec" } else { "--cert" };
            [flag.to_string(), dir.join(format!("{n}.toml")).display().to_string()]
        })
        .collect()
}

#[test]
fn plan_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    planned(dir.path(), 100);
    let mut args = vec!["verify".to_string()];
    args.extend(pair_args(dir.path()));
    args.extend(["--table".into(), "product.csv".into()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = rankone(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));

    let cert = ConstructionCertificate::from_toml(&fs::read_to_string(dir.path().join("cert_s.toml")).unwrap()).unwrap();
    let product = CorrelationSequence::<Rational>::from_csv(&fs::read_to_string(dir.path().join("product.csv")).unwrap(), true, "p").unwrap();
    for n in cert.n0..=100 {
        assert!(product.get(n as i64).unwrap().is_exact_zero(), "product nonzero at {n}");
    }
    assert!(dir.path().join("verify.manifest.toml").exists());
}

#[test]
fn tampered_certificate_fails_with_the_first_violation() {
    let dir = tempfile::tempdir().unwrap();
    planned(dir.path(), 100);
    let cert_path = dir.path().join("cert_s.toml");
    let spec_path = dir.path().join("spec_s.toml");
    let mut cert = ConstructionCertificate::from_toml(&fs::read_to_string(&cert_path).unwrap()).unwrap();
    let start = cert.zero_intervals[0].interval.start;
    cert.zero_intervals[0].interval = Interval::new(start, 100).unwrap();
    fs::write(&cert_path, cert.to_toml()).unwrap();

    let spec = RankOneSpec::from_toml(&fs::read_to_string(&spec_path).unwrap()).unwrap();
    let f = cert.tracked.to_level_function().unwrap();
    let seq = autocorrelation_sequence(&spec, &f, 100, None).unwrap();
    let first = (start..=100)
        .find(|&n| !seq.get(n as i64).unwrap().is_exact_zero())
        .expect("S correlates somewhere below the horizon");

    let o = rankone(dir.path(), &["verify", "--spec", spec_path.to_str().unwrap(), "--cert", cert_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains(&format!("first violated n = {first}")), "{}", text(&o));
}

#[test]
fn correlate_starts_at_the_squared_norm() {
    let dir = tempfile::tempdir().unwrap();
    planned(dir.path(), 100);
    fs::write(
        dir.path().join("f.toml"),
        "stage = 1\n[[terms]]\nlevel = 0\ncoefficient = \"-3/2\"\n",
    )
    .unwrap();
    let spec_path = dir.path().join("spec_t.toml");
    let o = rankone(
        dir.path(),
        &["correlate", "--spec", spec_path.to_str().unwrap(), "--function", dir.path().join("f.toml").to_str().unwrap(), "--max-n", "20"],
    );
    assert!(o.status.success(), "{}", text(&o));
    let csv = fs::read_to_string(dir.path().join("correlation.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    // ‖f‖² = (3/2)² · w_1 with w_1 = 1.
    assert_eq!(first, "0,9/4,9/4");
}

#[test]
fn simulations_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    planned(dir.path(), 100);
    let spec = dir.path().join("spec_s.toml");
    let run = |name: &str, threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_rankone"))
            .args(["simulate", "--kind", "poisson", "--spec", spec.to_str().unwrap(), "--n", "0,22", "--samples", "3000", "--seed", "9", "-o", name])
            .env("RANKONE_OUT_DIR", dir.path())
            .env("RANKONE_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", text(&o));
        fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("a.toml", "1"), run("b.toml", "4"));
}

#[test]
fn truncation_reports_its_lag() {
    let dir = tempfile::tempdir().unwrap();
    let o = rankone(dir.path(), &["lemma3", "--geometric", "1,1/2", "--delta", "1/10"]);
    assert!(o.status.success(), "{}", text(&o));
    let doc: toml::Table = toml::from_str(&fs::read_to_string(dir.path().join("truncation.toml")).unwrap()).unwrap();
    assert_eq!(doc["m"].as_integer(), Some(4));
    assert_eq!(doc["corr_tail"].as_str(), Some("0/1"));
}

#[test]
fn malformed_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "base_height = 1\n[[stages]]\nspacers = \"x\"\n").unwrap();
    let o = rankone(dir.path(), &["correlate", "--spec", dir.path().join("bad.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("line"), "{}", text(&o));
    let o = rankone(dir.path(), &["schedule", "--growth", "abc"]);
    assert_eq!(o.status.code(), Some(1));
    let o = rankone(dir.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
}
