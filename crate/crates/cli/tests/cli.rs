use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shearlab(config: &str, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shearlab"))
        .arg("--config")
        .arg(configs().join(config))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in ["p0.json", "p0_k3_4.json", "aligned.json", "dominant.json"] {
        let o = shearlab(cfg, dir.path(), &["validate"]);
        assert_eq!(code(&o), 0, "{cfg}: {}", stderr(&o));
    }
    let bad = shearlab("bad_alpha4.json", dir.path(), &["validate"]);
    assert_eq!(code(&bad), 1);
    let text = format!("{}{}", String::from_utf8_lossy(&bad.stdout), stderr(&bad));
    assert!(text.contains("failing check"), "{text}");

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_shearlab")).arg("--config").arg(&broken).arg("validate").output().unwrap();
    assert_eq!(code(&o), 2);

    let o = Command::new(env!("CARGO_BIN_EXE_shearlab")).arg("--no-such-flag").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_material_is_refused_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let o = shearlab("bad_alpha4.json", dir.path(), &["stationary", "--beta", "0.1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bifurcation_is_byte_stable_and_shows_the_fold() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = shearlab("p0.json", d.path(), &["bifurcation", "--samples", "60"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["bifurcation.json", "bifurcation.csv", "d_curve.csv", "bifurcation.svg"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    let v = json(a.path().join("bifurcation.json"));
    let ubar1 = v["minima"][0]["ubar"].as_f64().unwrap();
    assert!((ubar1 - 37.4196279).abs() < 1e-4, "{ubar1}");

    // the folded interval has no sample below the critical speed and both sides above it
    let csv = fs::read_to_string(a.path().join("bifurcation.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("{name} in {header:?}"));
    let (iu, is, ii) = (col("ubar"), col("side"), col("interval"));
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let folded: Vec<&Vec<&str>> = rows.iter().filter(|r| r[ii] == "1").collect();
    assert!(folded.iter().all(|r| r[iu].parse::<f64>().unwrap() >= ubar1 * (1.0 - 1e-9)));
    let sides: Vec<&str> = folded.iter().map(|r| r[is]).collect();
    assert!(sides.contains(&"lower") && sides.contains(&"upper"), "{sides:?}");
}

#[test]
fn evans_empty_window_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["evans", "--beta", "0.1", "--lambda-min", "200", "--lambda-max", "210", "--points", "21"];
    let o = shearlab("p0.json", dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let roots = json(dir.path().join("evans_roots.json"));
    assert!(roots["roots"].as_array().unwrap().is_empty());
}

#[test]
fn evolve_decays_at_small_speed_and_is_seed_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["evolve", "--ubar", "0.05", "--t-end", "2", "--seed", "7"];
    for d in [&a, &b] {
        let o = shearlab("p0.json", d.path(), &args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let r = json(a.path().join("evolve_seed7.json"));
    assert_eq!(r["passed"], true);
    assert!(r["L_fit"].as_f64().unwrap() > 0.0);
    for f in ["evolve_seed7.json", "evolve_seed7_trace.csv", "evolve_seed7_fields.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn evolve_on_the_unstable_branch_does_not_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = shearlab("p0.json", dir.path(), &["evolve", "--ubar", "40", "--interval", "1", "--branch", "lower", "--t-end", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(dir.path().join("evolve_lower_seed0.json"));
    assert_eq!(r["passed"], false);
    assert!(r["L_fit"].as_f64().unwrap() < 0.0);
}

#[test]
fn stationary_outputs_reparse_and_plot_renders() {
    let dir = tempfile::tempdir().unwrap();
    let o = shearlab("p0.json", dir.path(), &["stationary", "--beta", "0.1", "--points", "65"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(dir.path().join("stationary.json"));
    let text = serde_json::to_string(&summary).unwrap();
    assert_eq!(serde_json::from_str::<serde_json::Value>(&text).unwrap(), summary);

    let csv = dir.path().join("profile.csv");
    fs::remove_file(dir.path().join("profile.svg")).unwrap();
    let o = shearlab("p0.json", dir.path(), &["plot", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(dir.path().join("profile.svg")).unwrap().contains("<svg"));
}

#[test]
fn out_of_range_level_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = shearlab("p0.json", dir.path(), &["stationary", "--beta", "-1"]);
    assert_ne!(code(&o), 0);
}
