use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bohmlab_cli::{read_manifest, MANIFEST_NAME};
use serde_json::{json, Value};

fn bohmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bohmlab"))
        .args(args)
        .output()
        .expect("spawn bohmlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(format!("{name}.json"));
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run_ok(scenario: &Path, out: &Path) {
    let o = bohmlab(&["run", "--quiet", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
}

fn minimal() -> Value {
    json!({
        "name": "minimal",
        "grid": { "x_min": -8, "x_max": 8, "n": 512 },
        "potential": { "kind": "harmonic", "omega": 1.0 },
        "initial": { "family": "coherent_state", "center": 1, "momentum": 0 },
        "eps": 0.0625,
        "propagation": { "dt": 0.01, "t_final": 0.5, "stride": 10 },
        "artifacts": ["densities", "conservation"]
    })
}

fn with_ensemble() -> Value {
    let mut v = minimal();
    v["name"] = json!("ensemble");
    v["ensemble"] = json!({ "count": 400, "seed": 3 });
    v["artifacts"] = json!(["densities", "trajectories", "bohmian_measure"]);
    v
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn minimal_run_writes_densities_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "minimal", &minimal());
    let out = tmp.path().join("run");
    run_ok(&sc, &out);
    let m = read_manifest(&out).unwrap();
    let names: BTreeSet<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for want in ["densities.csv", "conservation.csv", "scenario.json"] {
        assert!(names.contains(want), "{names:?}");
    }
    for f in &m.files {
        let bytes = std::fs::read(out.join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        assert_eq!(bohmlab_cli::run::sha256_hex(&bytes), f.sha256, "{}", f.path);
    }
    let dens = std::fs::read_to_string(out.join("densities.csv")).unwrap();
    assert_eq!(dens.lines().next().unwrap(), "t,x,rho,J,u,mask");
    // t = 0 and six strided snapshots.
    let times: BTreeSet<String> = dens.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(times.len(), 6);
    assert_eq!(dens.lines().count(), 1 + 6 * 512);
}

#[test]
fn sweep_table_has_one_row_per_epsilon() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "name": "sweep",
        "grid": { "x_min": -4, "x_max": 4, "n": 4096 },
        "initial": { "family": "coherent_state", "center": 0, "momentum": 1 },
        "epsilons": [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625],
        "artifacts": ["sweep"],
        "sweep": { "husimi": false },
        "compare": { "thresholds": { "d_beta_lb": { "max": 0.5 } } }
    });
    let sc = write_scenario(tmp.path(), "sweep", &v);
    let out = tmp.path().join("run");
    run_ok(&sc, &out);
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..4], &["eps", "n", "dx", "time"]);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    let eps: Vec<f64> = rows.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(eps, vec![0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625]);
    let m = read_manifest(&out).unwrap();
    assert_eq!(m.verdicts.len(), 5);
    assert!(m.verdicts.iter().all(|v| v.pass && v.column == "d_beta_lb"));
}

#[test]
fn non_power_of_two_grid_is_rejected_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["grid"]["n"] = json!(100);
    let sc = write_scenario(tmp.path(), "bad", &v);
    let out = tmp.path().join("run");
    let o = bohmlab(&["run", "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("power of two"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn validate_accepts_and_reports_derived_quantities() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "minimal", &minimal());
    let o = bohmlab(&["validate", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.starts_with("ok minimal"), "{s}");
    assert!(s.contains("dx = ") && s.contains("resolution margin"), "{s}");
}

#[test]
fn validate_rejects_underresolved_epsilon() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["eps"] = json!(1e-4);
    let sc = write_scenario(tmp.path(), "fine", &v);
    let o = bohmlab(&["validate", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("8 points"), "{}", stderr(&o));
}

#[test]
fn validate_rejects_unknown_potential_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["potential"] = json!({ "kind": "morse", "depth": 1.0 });
    let sc = write_scenario(tmp.path(), "morse", &v);
    let o = bohmlab(&["validate", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("potential"), "{}", stderr(&o));
}

#[test]
fn validate_rejects_both_eps_and_epsilons() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["epsilons"] = json!([0.0625]);
    let sc = write_scenario(tmp.path(), "both", &v);
    let o = bohmlab(&["validate", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn runtime_failure_exits_one_and_leaves_no_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let v = json!({
        "name": "escape",
        "grid": { "x_min": -4, "x_max": 4, "n": 512 },
        "initial": { "family": "coherent_state", "center": 0, "momentum": 2 },
        "eps": 0.0625,
        "propagation": { "dt": 0.01, "t_final": 3.0, "stride": 10 },
        "artifacts": ["densities"]
    });
    let sc = write_scenario(tmp.path(), "escape", &v);
    let out = tmp.path().join("run");
    let o = bohmlab(&["run", "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(out.join("scenario.json").exists());
    assert!(!out.join(MANIFEST_NAME).exists());
    let c = bohmlab(&["compare", out.to_str().unwrap(), "limit_bohmian"]);
    assert_ne!(code(&c), 0);
    assert!(stderr(&c).contains("incomplete"), "{}", stderr(&c));
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "ensemble", &with_ensemble());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&sc, &a);
    run_ok(&sc, &b);
    let (ma, mb) = (read_manifest(&a).unwrap(), read_manifest(&b).unwrap());
    let digests = |m: &bohmlab_cli::Manifest| m.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect::<Vec<_>>();
    assert_eq!(digests(&ma), digests(&mb));
    assert!(ma.files.iter().any(|f| f.path == "trajectories.csv"));
}

#[test]
fn seed_override_changes_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "ensemble", &with_ensemble());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&sc, &a);
    let o = bohmlab(&["run", "--quiet", "--scenario", sc.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(code(&o), 0);
    let ta = std::fs::read(a.join("trajectories.csv")).unwrap();
    let tb = std::fs::read(b.join("trajectories.csv")).unwrap();
    assert_ne!(ta, tb);
}

#[test]
fn compare_identical_runs_gives_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "ensemble", &with_ensemble());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&sc, &a);
    run_ok(&sc, &b);
    let report = bohmlab_cli::compare(&a, b.to_str().unwrap()).unwrap();
    assert!(!report.rows.is_empty());
    assert!(report.rows.iter().all(|r| r.distance == 0.0 && !r.rescaled));
    let o = bohmlab(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("file,kind,eps,time,target,distance,rescaled,verdict"));
}

#[test]
fn compare_against_limit_is_small() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = with_ensemble();
    v["ensemble"]["count"] = json!(4000);
    let sc = write_scenario(tmp.path(), "ensemble", &v);
    let a = tmp.path().join("a");
    run_ok(&sc, &a);
    let csv = tmp.path().join("report.csv");
    let o = bohmlab(&["compare", a.to_str().unwrap(), "limit_bohmian", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = bohmlab_cli::compare(&a, "limit_bohmian").unwrap();
    assert_eq!(report.rows.len(), 2);
    for r in &report.rows {
        // Coherent state: the limit is a point mass, β^ε sits at distance O(√ε).
        assert!(r.distance < 0.5, "{r:?}");
    }
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), report.to_csv());
}

#[test]
fn compare_warns_on_mass_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "ensemble", &with_ensemble());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&sc, &a);
    run_ok(&sc, &b);
    let path = b.join("beta_final.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let f: Vec<&str> = line.split(',').collect();
            let w: f64 = f[2].parse().unwrap();
            out.push_str(&format!("{},{},{:.16e}", f[0], f[1], 0.5 * w));
        }
        out.push('\n');
    }
    std::fs::write(&path, out).unwrap();
    let report = bohmlab_cli::compare(&a, b.to_str().unwrap()).unwrap();
    let row = report.rows.iter().find(|r| r.file == "beta_final.csv").unwrap();
    assert!(row.rescaled);
    assert!(row.distance < 1e-12);
    assert!(report.warnings.iter().any(|w| w.contains("normalized")));
}

#[test]
fn compare_rejects_unknown_target() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write_scenario(tmp.path(), "minimal", &minimal());
    let a = tmp.path().join("a");
    run_ok(&sc, &a);
    let o = bohmlab(&["compare", a.to_str().unwrap(), "limit_husimi"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn list_families_names_every_family() {
    let o = bohmlab(&["list-families"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    for name in [
        "modulated_plane_wave",
        "periodic_oscillatory",
        "concentrating",
        "coherent_state",
        "harmonic_eigenstate",
        "two_phase_wkb",
        "wkb_single",
    ] {
        assert!(s.contains(name), "{name} missing from\n{s}");
    }
}

#[test]
fn example_scenarios_validate() {
    let mut seen = 0;
    for entry in std::fs::read_dir(scenarios_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            let o = bohmlab(&["validate", "--scenario", p.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{}: {}", p.display(), stderr(&o));
            seen += 1;
        }
    }
    assert!(seen >= 8);
}

fn schema() -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/scenario.schema.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn schema_properties_match_scenario_fields() {
    let s = schema();
    let props: BTreeSet<String> = s["properties"].as_object().unwrap().keys().cloned().collect();
    let mut v = with_ensemble();
    v["output"] = json!("runs/x");
    let full: bohmlab_cli::Scenario = serde_json::from_value(v).unwrap();
    let mut echoed = serde_json::to_value(&full).unwrap();
    // `eps` and `epsilons` are exclusive; only one survives serialization.
    echoed["epsilons"] = json!([0.0625]);
    let fields: BTreeSet<String> = echoed.as_object().unwrap().keys().cloned().collect();
    assert_eq!(props, fields);
    let required: BTreeSet<&str> = s["required"].as_array().unwrap().iter().map(|r| r.as_str().unwrap()).collect();
    assert_eq!(required, BTreeSet::from(["name", "grid", "initial"]));
}

#[test]
fn schema_lists_every_family_and_artifact() {
    let s = schema();
    let families: BTreeSet<&str> = s["$defs"]["family"]["oneOf"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["properties"]["family"]["const"].as_str().unwrap())
        .collect();
    let listed: BTreeSet<&str> = bohmlab_core::semiclassics::FAMILY_SUMMARIES.iter().map(|(n, _)| *n).collect();
    assert_eq!(families, listed);
    for a in s["properties"]["artifacts"]["items"]["enum"].as_array().unwrap() {
        let parsed: Result<bohmlab_cli::Artifact, _> = serde_json::from_value(a.clone());
        assert!(parsed.is_ok(), "{a}");
    }
}
