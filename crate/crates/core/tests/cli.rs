use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hemiparam::harmonics::HarmonicCoeffs;
use hemiparam::mesh::{load_mesh, save_mesh};
use hemiparam::metrics::a_rmse;
use hemiparam::shapes::face_like;

fn hemiparam(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hemiparam"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    save_mesh(&face_like(16), dir.path().join("face.obj"), None).unwrap();
    dir
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn run_writes_six_artifacts() {
    let dir = setup();
    let out = hemiparam(&["run", "--input", "face.obj", "--method", "area", "--n-max", "12"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names = listing(&dir.path().join("out"));
    let expected = ["coeffs.json", "manifest.json", "metrics.json", "param.obj", "recon.obj", "registered.obj"];
    assert_eq!(names, expected.map(|s| format!("face_area_n12.{s}")));

    let coeffs = HarmonicCoeffs::load(dir.path().join("out/face_area_n12.coeffs.json")).unwrap();
    assert_eq!(coeffs.n_max, 12);
    let input = load_mesh(dir.path().join("face.obj")).unwrap();
    let recon = load_mesh(dir.path().join("out/face_area_n12.recon.obj")).unwrap();
    assert!(a_rmse(&input, &recon) < 0.01);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/face_area_n12.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n_max"], 12);
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 6);
    // the stored config reproduces the run
    let cfg = hemiparam::cli::config::RunConfig::from_toml(manifest["config_toml"].as_str().unwrap()).unwrap();
    assert_eq!(cfg.n_max, 12);
    assert_eq!(cfg.input.as_deref(), Some(Path::new("face.obj")));
}

#[test]
fn config_file_with_flag_override() {
    let dir = setup();
    fs::write(
        dir.path().join("run.toml"),
        "input = \"face.obj\"\nmethod = \"tutte\"\nn_max = 50\noutput = \"res\"\nmetrics_csv = true\n",
    )
    .unwrap();
    let out = hemiparam(&["run", "--config", "run.toml", "--n-max", "8"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/face_tutte_n8.metrics.csv")).unwrap();
    assert!(csv.starts_with("metric,bin_lo,bin_hi,count\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * hemiparam::metrics::HISTOGRAM_BINS);
}

#[test]
fn exit_codes_and_messages() {
    let dir = setup();
    let out = hemiparam(&["run", "--input", "face.obj", "--method", "fast"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tutte, conformal, area, balanced"), "{err}");

    let out = hemiparam(&["run", "--method", "area"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input"));

    let out = hemiparam(&["run", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("bad.toml"), "input = \"face.obj\"\ncolour = 3\n").unwrap();
    let out = hemiparam(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn failed_stage_keeps_partial_artifacts() {
    let dir = setup();
    // more basis functions than vertices
    let out = hemiparam(&["run", "--input", "face.obj", "--n-max", "40"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("decompose:"), "{err}");
    let names = listing(&dir.path().join("out"));
    assert!(names.contains(&"face_area_n40.registered.obj.partial".to_string()), "{names:?}");
    assert!(names.contains(&"face_area_n40.param.obj.partial".to_string()), "{names:?}");
    assert!(names.iter().all(|n| n.ends_with(".partial")), "{names:?}");
    let manifest = fs::read_to_string(dir.path().join("out/face_area_n40.manifest.json.partial")).unwrap();
    assert!(manifest.contains("rank deficient"));
}

#[test]
fn stage_subcommands_chain() {
    let dir = setup();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let out = hemiparam(&["param", "--input", "face.obj", "--method", "conformal", "--c", "0.5"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let param = p("out/face_conformal_n30.param.obj");
    let out = hemiparam(
        &["decompose", "--input", "face.obj", "--param", &param, "--c", "0.5", "--n-max", "10", "--output", "c.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = hemiparam(&["reconstruct", "--coeffs", "c.json", "--param", &param, "--output", "r.ply"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = hemiparam(
        &["metrics", "--input", "face.obj", "--recon", "r.ply", "--param", &param, "--c", "0.5"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["a_rmse"].as_f64().unwrap() < 0.05);
    assert_eq!(report["flipped_faces"], 0);

    let out = hemiparam(&["reconstruct", "--coeffs", "c.json", "--samples", "500", "--n-upto", "4", "--output", "u.off"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_mesh(dir.path().join("u.off")).unwrap().vertex_count(), 500);
}

#[test]
fn optimize_subcommands() {
    let dir = setup();
    let out = hemiparam(
        &["optimize-c", "--input", "face.obj", "--c-samples", "4", "--n-max-probe", "4", "--c-min", "0.3", "--c-max", "1.2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/face.radius.csv")).unwrap();
    assert!(csv.starts_with("c,mean_orthogonality\n"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("c* = "));

    let out = hemiparam(
        &["optimize-weights", "--input", "face.obj", "--method", "balanced", "--optimize-weights", "--n-max-probe", "4", "--weight-budget", "12"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let w: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let sum = ["alpha", "beta", "gamma"].iter().map(|k| w[k].as_f64().unwrap()).sum::<f64>();
    assert!((sum - 1.0).abs() < 1e-12);
}
