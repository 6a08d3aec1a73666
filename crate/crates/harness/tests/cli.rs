use std::fs;
use std::path::Path;
use std::process::Command;

use nubs_harness::config::RawConfig;
use nubs_harness::output::{read_table, Manifest, MANIFEST_NAME};

fn nubs(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nubs")).args(args).env_remove("NUBS_WORKERS").output().expect("run nubs")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn check_manifest(dir: &Path) -> Manifest {
    let m = Manifest::read(&dir.join(MANIFEST_NAME)).unwrap();
    assert!(!m.outputs.is_empty());
    for o in &m.outputs {
        let (header, rows) = read_table(&dir.join(&o.path)).unwrap();
        assert_eq!(header, o.columns, "{}", o.path.display());
        assert_eq!(rows.len(), o.rows, "{}", o.path.display());
        assert!(rows.iter().all(|r| r.len() == header.len()));
    }
    assert_eq!(csv_files(dir).len(), m.outputs.len(), "no stray CSVs");
    m
}

const RUNS: &[&[&str]] = &[
    &["l1-curve", "--sites", "24", "--exp-gamma", "1,1.5", "--photons", "L/2:h,L:v", "--t-max", "200"],
    &["distributions", "--sites", "12", "--photons", "L/2:h,L:v,3:h", "--t-grid", "list:3,40"],
    &["thresholds", "--sites", "36", "--photons", "L/2:h,L:v"],
    &["spectrum", "--exp-gamma", "1,1.5", "--sites", "40"],
    &["rank-experiment", "--sites", "40", "--photons", "L/2:h,L:v", "--t-grid", "list:100,400"],
];

#[test]
fn outputs_are_byte_identical_across_runs_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    for (k, args) in RUNS.iter().enumerate() {
        let mut seen = Vec::new();
        for workers in ["1", "4", "4"] {
            let out = tmp.path().join(format!("run{k}_{workers}_{}", seen.len()));
            let mut a = args.to_vec();
            a.extend(["--workers", workers, "--out", out.to_str().unwrap()]);
            let r = nubs(&a);
            assert!(r.status.success(), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
            check_manifest(&out);
            seen.push(csv_files(&out));
        }
        assert!(seen.windows(2).all(|w| w[0] == w[1]), "{args:?} not reproducible");
    }
}

#[test]
fn manifest_records_config_and_scalars() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = nubs(&["spectrum", "--exp-gamma", "1.5", "--sites", "300", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let m = check_manifest(&out);
    assert_eq!(m.experiment, "spectrum");
    assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(m.points.len(), 1);
    let get = |k: &str| m.scalars[k].as_float().unwrap();
    assert!((get("exp_gamma_pt") - 1.2163190263086185).abs() < 1e-12);
    assert!((get("p000.diffusion_constant") - 2.115370681298757).abs() < 1e-12);
    assert!((get("p000.gap_analytic") - 4.6395e-4).abs() < 1e-7);
    assert_eq!(m.scalars["p000.pt_phase"].as_str(), Some("broken"));
    let (_, rows) = read_table(&out.join("spectrum_p000.csv")).unwrap();
    assert_eq!(rows.len(), 600);
}

#[test]
fn invalid_configs_exit_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["spectrum", "--sites", "61"],
        &["l1-curve", "--sites", "20", "--photons", "21:h"],
        &["l1-curve", "--sites", "20", "--photons", "L:h", "--delta", "0"],
        &["l1-curve", "--sites", "20", "--photons", "L:h", "--delta", "-1e-6"],
        &["l1-curve", "--sites", "20"],
        &["single-photon", "--t-grid", "list:5,3"],
        &["spectrum", "--theta1", "0.65pie"],
        &["spectrum", "--gamma", "0.1", "--exp-gamma", "1.2"],
    ];
    for (k, args) in cases.iter().enumerate() {
        let out = tmp.path().join(format!("bad{k}"));
        let mut a = args.to_vec();
        a.extend(["--out", out.to_str().unwrap()]);
        let r = nubs(&a);
        assert_eq!(r.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(!out.exists(), "{args:?} left output behind");
    }
}

#[test]
fn numeric_guards_exit_3_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    // the rank cutoff is only defined in the broken phase
    let r =
        nubs(&["rank-experiment", "--exp-gamma", "1.0", "--sites", "20", "--t-grid", "list:10", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stderr).contains("sweep point 0"));
    assert!(!out.exists());
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, format!("experiment = \"spectrum\"\noutput_dir = {:?}\n[params]\nsites = 20\n", out.to_str().unwrap()))
        .unwrap();
    let r = nubs(&["spectrum", "--config", cfg.to_str().unwrap(), "--sites", "40", "--exp-gamma", "1.2"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let m = check_manifest(&out);
    assert_eq!(m.points[0].sites, 20);
    assert_eq!(m.points[0].exp_gamma, 1.2);

    let r = nubs(&["l1-curve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn recipes_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            let raw = RawConfig::from_toml(&fs::read_to_string(&path).unwrap(), &path).unwrap();
            let cfg = raw.resolve().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.points.is_empty());
            n += 1;
        }
    }
    assert!(n >= 12, "expected desk and full recipes for six figures, found {n}");
}
