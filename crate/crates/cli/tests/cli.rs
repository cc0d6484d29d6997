use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use decoq::decoupling::pauli_set;
use decoq::dilation::{total_hamiltonian, Beta, CouplingTerm, DilationSpec};
use decoq::fidelity::{drift_fidelity, FidelityAnalytics, VarMethod};
use decoq::lindblad::{compile, LindbladSpec};
use decoq::limit::build;
use decoq::operator_space::{pauli, sup_norm, NormKind, C64};
use decoq::serde_matrix::CMatrix;
use serde_json::{json, Value};
use tempfile::TempDir;

fn decoq(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_decoq"));
    cmd.args(args).env_remove("DECOQ_SEED");
    if let Some(s) = env_seed {
        cmd.env("DECOQ_SEED", s);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn zero_config(out: &Path) -> Value {
    json!({
        "system": {"dim": 2, "lindblad": {"form": {"kind": "hamiltonian", "h": [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]}}},
        "decoupling": {"type": "pauli", "qubits": 1},
        "walk": {"tau": 0.01, "t_grid": [0.0, 0.05, 0.1], "n": 100, "paths": 5},
        "analysis": ["mc_physical", "analytic", "drift", "variance", "bounds"],
        "output": {"directory": s(out), "formats": ["json", "csv"]},
        "seed": 1
    })
}

fn amplitude_config(out: &Path, tau: f64, grid: &[f64], paths: usize) -> Value {
    json!({
        "system": {"dim": 2, "lindblad": {"form": {"kind": "builtin", "name": "amplitude_damping", "gamma": 1.0}}},
        "decoupling": {"type": "pauli", "qubits": 1},
        "walk": {"tau": tau, "t_grid": grid, "n": 100, "paths": paths},
        "analysis": ["mc_physical", "analytic", "drift", "variance", "bounds"],
        "output": {"directory": s(out), "formats": ["json", "csv"]},
        "seed": 5
    })
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|c| if c.is_empty() { None } else { Some(c.parse().unwrap()) }).collect())
        .collect();
    (header, rows)
}

#[test]
fn zero_generator_paths_are_identity() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "c.json", &zero_config(&out));
    let o = decoq(&["simulate", s(&cfg)], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let names: Vec<String> = files(&out).into_iter().map(|f| f.0).collect();
    assert_eq!(names, ["manifest_tau1e-2.json", "physical_tau1e-2.curve.json", "physical_tau1e-2.paths.jsonl"]);
    let lines = fs::read_to_string(out.join("physical_tau1e-2.paths.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 5);
    for (i, line) in lines.lines().enumerate() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["path_id"], i);
        for f in v["fidelities"].as_array().unwrap() {
            assert!((f.as_f64().unwrap() - 1.0).abs() <= 1e-14);
        }
        assert_eq!(v["pulse_indices"].as_array().unwrap().len(), 10);
    }
    let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest_tau1e-2.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let cfg = amplitude_config(tmp.path(), 1e-2, &[0.0, 0.1, 0.25], 40);
    let mut cfg = cfg;
    cfg["analysis"] = json!(["mc_physical", "mc_diffusion"]);
    let path = write_config(tmp.path(), "c.json", &cfg);
    let dirs: Vec<PathBuf> = (0..3).map(|i| tmp.path().join(format!("run{i}"))).collect();
    let runs = [
        decoq(&["simulate", s(&path), "--out", s(&dirs[0])], None),
        decoq(&["simulate", s(&path), "--out", s(&dirs[1])], None),
        decoq(&["--threads", "1", "simulate", s(&path), "--out", s(&dirs[2])], None),
    ];
    for o in &runs {
        assert_eq!(code(o), 0, "{}", stderr(o));
    }
    let a = files(&dirs[0]);
    assert_eq!(a.len(), 5);
    assert_eq!(a, files(&dirs[1]));
    assert_eq!(a, files(&dirs[2]));
}

#[test]
fn seed_precedence() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = zero_config(tmp.path());
    cfg.as_object_mut().unwrap().remove("seed");
    let path = write_config(tmp.path(), "c.json", &cfg);
    let seed_of = |dir: &Path| -> Value {
        let m: Value = serde_json::from_slice(&fs::read(dir.join("manifest_tau1e-2.json")).unwrap()).unwrap();
        m["seed"].clone()
    };
    let o = decoq(&["simulate", s(&path)], None);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed"));

    let env_dir = tmp.path().join("env");
    assert_eq!(code(&decoq(&["simulate", s(&path), "--out", s(&env_dir)], Some("17"))), 0);
    assert_eq!(seed_of(&env_dir), 17);

    let flag_dir = tmp.path().join("flag");
    assert_eq!(code(&decoq(&["simulate", s(&path), "--seed", "23", "--out", s(&flag_dir)], Some("17"))), 0);
    assert_eq!(seed_of(&flag_dir), 23);

    cfg["seed"] = json!(99);
    let with = write_config(tmp.path(), "d.json", &cfg);
    let cfg_dir = tmp.path().join("cfg");
    assert_eq!(code(&decoq(&["simulate", s(&with), "--out", s(&cfg_dir)], Some("17"))), 0);
    assert_eq!(seed_of(&cfg_dir), 17);
    let plain = tmp.path().join("plain");
    assert_eq!(code(&decoq(&["simulate", s(&with), "--out", s(&plain)], None)), 0);
    assert_eq!(seed_of(&plain), 99);

    assert_eq!(code(&decoq(&["simulate", s(&path), "--out", s(&plain)], Some("x"))), 2);
}

#[test]
fn invalid_configs_exit_2_with_paths() {
    let tmp = TempDir::new().unwrap();
    let cases: Vec<(Value, &str)> = vec![
        ({ let mut c = zero_config(tmp.path()); c["walk"]["extra"] = json!(1); c }, "walk"),
        ({ let mut c = zero_config(tmp.path()); c["bogus"] = json!(1); c }, "bogus"),
        ({ let mut c = zero_config(tmp.path()); c["walk"]["tau"] = json!(-1.0); c }, "walk"),
        ({ let mut c = zero_config(tmp.path()); c["system"]["dim"] = json!(3); c }, "system.lindblad"),
        ({ let mut c = zero_config(tmp.path()); c["decoupling"]["qubits"] = json!(2); c }, "decoupling"),
        ({ let mut c = zero_config(tmp.path()); c["analysis"] = json!(["mc_diffusion", "plot"]); c }, "analysis"),
        ({ let mut c = zero_config(tmp.path()); c["analysis"] = json!(["mc_diffusion"]); c["walk"].as_object_mut().unwrap().remove("n"); c }, "walk.n"),
        ({ let mut c = zero_config(tmp.path()); c["system"].as_object_mut().unwrap().remove("lindblad"); c }, "system.lindblad"),
    ];
    for (i, (cfg, path)) in cases.iter().enumerate() {
        let p = write_config(tmp.path(), &format!("bad{i}.json"), cfg);
        let o = decoq(&["validate-config", s(&p)], None);
        assert_eq!(code(&o), 2, "case {i}: {}", stderr(&o));
        assert!(stderr(&o).contains(path), "case {i}: {}", stderr(&o));
    }
    fs::write(tmp.path().join("broken.json"), b"{ not json").unwrap();
    assert_eq!(code(&decoq(&["validate-config", s(&tmp.path().join("broken.json"))], None)), 2);
    assert_eq!(code(&decoq(&["validate-config", s(&tmp.path().join("missing.json"))], None)), 2);
    let good = write_config(tmp.path(), "good.json", &zero_config(tmp.path()));
    assert_eq!(code(&decoq(&["validate-config", s(&good)], None)), 0);
}

#[test]
fn oversized_ensemble_exits_3() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = zero_config(tmp.path());
    cfg["walk"]["paths"] = json!(2_000_000);
    let p = write_config(tmp.path(), "c.json", &cfg);
    let o = decoq(&["simulate", s(&p)], None);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!tmp.path().join("manifest_tau1e-2.json").exists());
}

#[test]
fn zero_generator_analytic_columns() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let p = write_config(tmp.path(), "c.json", &zero_config(&out));
    assert_eq!(code(&decoq(&["analytic", s(&p)], None)), 0);
    let (header, rows) = read_csv(&out.join("curves.csv"));
    assert_eq!(header, ["t", "F_mean_analytic", "F_var_analytic", "F_mean_drift", "bound_extrinsic", "bound_intrinsic", "bound_dephasing"]);
    for r in &rows {
        assert_eq!(r[1], Some(1.0));
        assert_eq!(r[2], Some(0.0));
        assert_eq!(r[3], Some(1.0));
        assert_eq!(r[4], None);
        assert_eq!(r[5], Some(1.0));
    }
    let text = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,1.0000000000000000e0,"));
}

#[test]
fn unitary_drift_column_is_one() {
    let tmp = TempDir::new().unwrap();
    let h = json!([[[0.3, 0.0], [0.2, -0.7]], [[0.2, 0.7], [-1.1, 0.0]]]);
    let mut cfg = zero_config(tmp.path());
    cfg["system"]["lindblad"] = json!({"form": {"kind": "hamiltonian", "h": h}});
    cfg["analysis"] = json!(["drift"]);
    cfg["walk"]["t_grid"] = json!([0.0, 0.5, 1.0, 4.0]);
    let p = write_config(tmp.path(), "c.json", &cfg);
    assert_eq!(code(&decoq(&["analytic", s(&p), "--out", s(tmp.path())], None)), 0);
    let (_, rows) = read_csv(&tmp.path().join("curves.csv"));
    for r in rows {
        assert!((r[3].unwrap() - 1.0).abs() <= 1e-12);
        assert_eq!(r[1], None);
    }
}

#[test]
fn amplitude_damping_csv_matches_library() {
    let tmp = TempDir::new().unwrap();
    let grid = [0.0, 0.01, 0.1, 0.3];
    let p = write_config(tmp.path(), "c.json", &amplitude_config(tmp.path(), 1e-3, &grid, 10));
    assert_eq!(code(&decoq(&["analytic", s(&p)], None)), 0);
    let (_, rows) = read_csv(&tmp.path().join("curves.csv"));
    let gens = build(&compile(&LindbladSpec::amplitude_damping(1.0)).unwrap(), &pauli_set(1).unwrap(), 1e-3).unwrap();
    let fa = FidelityAnalytics::new(&gens).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-15 * b.abs().max(f64::MIN_POSITIVE);
    for (r, &t) in rows.iter().zip(&grid) {
        assert_eq!(r[0], Some(t));
        assert!(rel(r[1].unwrap(), fa.mean(t).unwrap().clamped));
        assert!(rel(r[2].unwrap(), fa.variance(t, VarMethod::Auto).unwrap().clamped));
        assert!(rel(r[3].unwrap(), drift_fidelity(&gens, t).unwrap().mean));
        let intrinsic = 1.0 - t * t * 16.0 / 4.0
            - 2.0 / 16.0 * 1e-3 * t * sup_norm(&gens.l.sub(&gens.l_bar), NormKind::Spectral).powi(2);
        assert!((r[5].unwrap() - intrinsic).abs() <= 1e-14);
        assert_eq!(r[6], None);
    }
    let summary: Value = serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["f_mean_analytic"].as_array().unwrap().len(), grid.len());
    assert!(summary["f_mean_analytic"][0]["raw"].is_number());
    let bounds: Value = serde_json::from_slice(&fs::read(tmp.path().join("bounds.json")).unwrap()).unwrap();
    assert_eq!(bounds["dim"], 4);
}

#[test]
fn curve_json_round_trips() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(tmp.path(), "c.json", &amplitude_config(tmp.path(), 1e-2, &[0.0, 0.1, 0.2], 20));
    assert_eq!(code(&decoq(&["simulate", s(&p)], None)), 0);
    let bytes = fs::read(tmp.path().join("physical_tau1e-2.curve.json")).unwrap();
    let curve: decoq::fidelity::FidelityCurve = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(curve.metadata.tau, Some(1e-2));
    assert_eq!(curve.metadata.seed, Some(5));
    let again = serde_json::to_vec_pretty(&curve).unwrap();
    let back: decoq::fidelity::FidelityCurve = serde_json::from_slice(&again).unwrap();
    assert_eq!(back, curve);
}

fn extrinsic_dilation(gamma: f64) -> DilationSpec {
    let th = std::f64::consts::FRAC_PI_3;
    let h1 = (pauli(3) * C64::new(th.cos(), 0.0) + pauli(1) * C64::new(th.sin(), 0.0)) * C64::new(0.5, 0.0);
    let spec = DilationSpec {
        d_h: 2,
        d_h1: 2,
        coupling: vec![
            CouplingTerm { system: CMatrix(pauli(1)), bath: CMatrix(pauli(1)) },
            CouplingTerm { system: CMatrix(pauli(2)), bath: CMatrix(pauli(2)) },
        ],
        bath_hamiltonian: CMatrix(h1),
        beta: Beta::Infinite,
    };
    let ev = total_hamiltonian(&spec).unwrap().symmetric_eigen().eigenvalues;
    spec.scaled(gamma / (ev.max() - ev.min()))
}

fn pipeline(tmp: &Path, seed: u64) -> (Output, Output, Output) {
    fs::create_dir_all(tmp).unwrap();
    let gamma = sup_norm(&compile(&LindbladSpec::amplitude_damping(1.0)).unwrap(), NormKind::Spectral);
    let curves = tmp.join(format!("curves{seed}"));
    let grid = [0.011, 0.0135, 0.016];
    let mut first = None;
    for tau in [1e-3, 3e-4, 1e-4] {
        let mut cfg = amplitude_config(&curves, tau, &grid, 200);
        cfg["dilation"] = serde_json::to_value(extrinsic_dilation(gamma)).unwrap();
        cfg["analysis"] = json!(["mc_physical", "bounds"]);
        cfg["seed"] = json!(seed);
        let p = write_config(tmp, &format!("c{seed}_{tau}.json"), &cfg);
        let o = decoq(&["simulate", s(&p)], None);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        first.get_or_insert(p);
    }
    let bounds_dir = tmp.join(format!("bounds{seed}"));
    assert_eq!(code(&decoq(&["analytic", s(first.as_ref().unwrap()), "--out", s(&bounds_dir)], None)), 0);
    let b = bounds_dir.join("bounds.json");
    (
        decoq(&["classify", s(&curves), s(&b), "--run", "physical"], None),
        decoq(&["classify", s(&curves), s(&b), "--run", "extrinsic_physical"], None),
        decoq(&["classify", s(&curves), s(&b)], None),
    )
}

#[test]
fn classify_pipeline_fixtures() {
    let tmp = TempDir::new().unwrap();
    for seed in [1, 2] {
        let (int, ext, mixed) = pipeline(tmp.path(), seed);
        assert_eq!(code(&int), 0, "{}", stderr(&int));
        let v: Value = serde_json::from_slice(&int.stdout).unwrap();
        assert_eq!(v["classification"], "intrinsic_or_mixed", "{v}");
        assert_eq!(v["taus"].as_array().unwrap().len(), 3);
        let v: Value = serde_json::from_slice(&ext.stdout).unwrap();
        assert_eq!(v["classification"], "extrinsic", "{v}");
        assert_eq!(code(&mixed), 2);
        let again = pipeline(&tmp.path().join("again"), seed);
        assert_eq!(again.0.stdout, int.stdout);
        assert_eq!(again.1.stdout, ext.stdout);
    }
}

#[test]
fn classify_with_two_taus_exits_4() {
    let tmp = TempDir::new().unwrap();
    let curves = tmp.path().join("curves");
    let grid = [0.011, 0.015];
    let mut first = None;
    for tau in [1e-3, 1e-4] {
        let mut cfg = amplitude_config(&curves, tau, &grid, 20);
        cfg["analysis"] = json!(["mc_physical", "bounds"]);
        let p = write_config(tmp.path(), &format!("c{tau}.json"), &cfg);
        assert_eq!(code(&decoq(&["simulate", s(&p)], None)), 0);
        first.get_or_insert(p);
    }
    let bounds_dir = tmp.path().join("b");
    assert_eq!(code(&decoq(&["analytic", s(first.as_ref().unwrap()), "--out", s(&bounds_dir)], None)), 0);
    let o = decoq(&["classify", s(&curves), s(&bounds_dir.join("bounds.json"))], None);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}
