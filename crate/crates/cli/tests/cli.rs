use std::fs;
use std::path::Path;
use std::process::Command;

use ybqc::atomic;
use ybqc::constants::{GAUSS, TWO_PI};
use ybqc::{addressing, AtomParams, GradientConfig, LatticeGeometry};
use ybqc_cli::{detunings_csv, run_scenario, spectrum_csv, Manifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ybqc"))
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn minimal_feasibility_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let s = write(tmp.path(), "s.toml", "output_dir = \"results\"\n[feasibility]\n");
    let (dir, manifest) = run_scenario(&s, None, None).unwrap();
    assert_eq!(dir, tmp.path().join("results"));
    let text = fs::read_to_string(dir.join("feasibility.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let items = v["items"].as_array().unwrap();
    assert_eq!(items.len(), 7);
    assert!(items.iter().all(|i| i["pass"].as_bool() == Some(true)));
    assert!(items.iter().all(|i| i.get("paper_target").is_some() && i.get("tolerance").is_some()));
    let on_disk: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);
    assert_eq!(manifest.files["feasibility.json"], ybqc_cli::sha256_hex(text.as_bytes()));
}

#[test]
fn missing_circuit_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let s = write(tmp.path(), "s.toml", "[feasibility]\n[circuit]\npath = \"nope.circ\"\nseed = 1\n");
    let err = run_scenario(&s, None, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!tmp.path().join("out").exists());

    let missing = run_scenario(&tmp.path().join("absent.toml"), None, None).unwrap_err();
    assert_eq!(missing.exit_code(), 2);
}

const FULL: &str = r#"
[lattice]
n_x = 1
n_y = 1
n_z = 2

[noise]
scattering_rate_hz = 0.2

[circuit]
path = "bell.circ"
seed = 11

[[sweep]]
quantity = "detunings"
b_min_gauss = 0.0
b_max_gauss = 1000.0
steps = 50

[[sweep]]
quantity = "levels"
b_min_gauss = 0.0
b_max_gauss = 100.0
steps = 5

[address]
layer = 1

[feasibility]
hold_time_s = 5.0
"#;

#[test]
fn reruns_are_byte_identical_and_scenario_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "bell.circ", "X 0 0 0 pi/2\nCNOT 0 0 0 0 0 1\nMEAS 0 0 0\nMEAS 0 0 1\n");
    let s = write(tmp.path(), "s.toml", FULL);
    let before = fs::read(&s).unwrap();
    let (_, a) = run_scenario(&s, Some(&tmp.path().join("a")), None).unwrap();
    let (_, b) = run_scenario(&s, Some(&tmp.path().join("b")), None).unwrap();
    assert_eq!(a, b);
    assert_eq!(fs::read(&s).unwrap(), before);
    for name in ["circuit.json", "schedule.json", "detunings.csv", "levels.csv", "spectrum.csv", "feasibility.json"] {
        assert!(a.files.contains_key(name), "{name}");
        assert_eq!(fs::read(tmp.path().join("a").join(name)).unwrap(), fs::read(tmp.path().join("b").join(name)).unwrap());
    }
    let (_, c) = run_scenario(&s, Some(&tmp.path().join("c")), Some(12)).unwrap();
    assert_eq!(c.files["schedule.json"], a.files["schedule.json"]);
}

#[test]
fn detuning_curves() {
    let p = AtomParams::default();
    let csv = detunings_csv(&p, 0.0, 20000.0, 2000).unwrap();
    assert!(csv.starts_with("B_gauss,delta1_hz,delta2_hz\n"));
    let r = rows(&csv);
    assert_eq!(r.len(), 2000);
    assert!(r.windows(2).all(|w| w[1][0] > w[0][0]));
    let near = r.iter().min_by(|a, b| (a[0] - 650.0).abs().total_cmp(&(b[0] - 650.0).abs())).unwrap();
    assert!((near[1].abs() / 20e6 - 1.0).abs() < 0.25 && (near[2].abs() / 20e6 - 1.0).abs() < 0.25, "{near:?}");
    for row in r.iter().step_by(97) {
        let d = atomic::three_photon_detunings(&p, row[0] * GAUSS).unwrap();
        assert!((row[1] - d.delta1 / TWO_PI).abs() <= 1e-12 * row[1].abs());
        assert!((row[2] - d.delta2 / TWO_PI).abs() <= 1e-12 * row[2].abs());
    }
    assert!(detunings_csv(&p, 10.0, 5.0, 3).is_err());
}

#[test]
fn addressing_spectrum() {
    let p = AtomParams::default();
    let geom = LatticeGeometry::new(10, 10, 1, p.lattice_constant()).unwrap();
    let config = addressing::plan_gradients(&geom, 1e3, &p, &addressing::PlannerSettings::default()).unwrap();
    let r = rows(&spectrum_csv(&geom, &config, &p, 0).unwrap());
    assert_eq!(r.len(), 100);
    assert!(r.windows(2).all(|w| w[1][4] - w[0][4] >= 1e3 - 1e-6));

    // Same rows as a direct enumeration of every site.
    let transition = addressing::AddressedTransition::stretched(&p);
    let mut brute: Vec<Vec<f64>> = geom
        .sites()
        .map(|s| {
            let b = addressing::site_field(&geom, &config, s).unwrap();
            vec![s.i as f64, s.j as f64, s.k as f64, b / GAUSS, transition.frequency(&p, b).unwrap()]
        })
        .collect();
    brute.sort_by(|a, b| a[4].total_cmp(&b[4]));
    assert_eq!(brute, r);

    let single = LatticeGeometry::new(1, 1, 1, p.lattice_constant()).unwrap();
    let g = GradientConfig::from_gauss(100.0, 10.0, 100.0, 0.0);
    let r = rows(&spectrum_csv(&single, &g, &p, 0).unwrap());
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][3], 100.0);
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", "[feasibility]\nt_pi = 1e-4\n");
    let out = bin().args(["run", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_pi"));

    let circ = write(tmp.path(), "m.circ", "MEAS 0 0\n");
    let out = bin().args(["simulate", "--circuit", circ.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "seed is mandatory");

    let out = bin().args(["plan", "--target-gap-hz", "1e12"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = bin().args(["ddi"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["cnot_shift_hz"].as_f64().unwrap().abs() - 40.0).abs() < 20.0);
    assert_eq!(v["convention"], "single pair");
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let circ = write(tmp.path(), "x.circ", "X 0 0 pi/2\nMEAS 0 0\n");
    let run = || {
        bin()
            .args(["simulate", "--circuit", circ.to_str().unwrap(), "--seed", "5", "--n-x", "1", "--n-y", "1"])
            .output()
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}
