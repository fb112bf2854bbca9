//! Acceptance suite: one PASS, FAIL or SKIP line per criterion.
//!
//! Criterion 8 reads `face`, `bunny` and `matterhorn` meshes (OBJ, PLY or OFF)
//! from `$HEMIPARAM_PUBLIC_MESHES`, or from `data/public/` at the workspace
//! root, and is skipped when none are present.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hemiparam::area::hemispheroidal_area_preserving;
use hemiparam::balanced::{BalanceWeights, BalancedComponents};
use hemiparam::conformal::hemispheroidal_conformal;
use hemiparam::harmonics::{
    basis_len, decompose, fit_points, quadrature_gram_deviation, reconstruct, sample_uniform_hemispheroid, HarmonicCoeffs,
};
use hemiparam::mesh::{load_mesh_with, save_mesh, LoadOptions, TriMesh, Vec2};
use hemiparam::metrics::{a_rmse, angle_distortion, area_distortion};
use hemiparam::optimize::{optimize_radius_c, RadiusSearch};
use hemiparam::projection::{inverse_spheroidal_projection, spheroidal_projection, SurfaceMap, DEFAULT_EPS_ETA};
use hemiparam::qc::count_flipped;
use hemiparam::registration::{register, size_hemispheroid, RigidTransform, Spheroid};
use hemiparam::shapes::{benchmark_suite, face_like, harmonic_cap, mountain, spherical_cap, tall_blob};
use hemiparam::tutte::{hemispheroidal_tutte, solve_tutte_disk};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.2} s of {limit_s} s"))
}

fn projection_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let s = Spheroid::new(rng.random_range(0.3..3.0), rng.random_range(0.2..3.0)).unwrap();
        for _ in 0..100_000 {
            let r = rng.random::<f64>().sqrt();
            let t = rng.random_range(0.0..2.0 * PI);
            let p = Vec2::new(r * t.cos(), r * t.sin());
            let back = spheroidal_projection(&inverse_spheroidal_projection(&p, &s), &s).unwrap();
            worst = worst.max((back - p).norm());
        }
    }
    let (fast, time) = within(start.elapsed(), 1.0);
    verdict(worst < 1e-12 && fast, format!("max error {worst:.2e}, {time}"))
}

fn tutte_bijectivity() -> Outcome {
    let mut meshes = benchmark_suite(24);
    meshes.push(("face 50k", face_like(128)));
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, m) in &meshes {
        let disk = solve_tutte_disk(m).unwrap();
        let flipped = count_flipped(&disk, m.faces());
        ok &= flipped == 0 && disk.in_unit_disk();
        notes.push(format!("{name} ({} v): {flipped}", m.vertex_count()));
    }
    let (fast, time) = within(start.elapsed(), 30.0);
    verdict(ok && fast, format!("flipped faces {}; {time}", notes.join(", ")))
}

fn basis_stability() -> Outcome {
    let start = Instant::now();
    let d50 = quadrature_gram_deviation(50);
    let d100 = quadrature_gram_deviation(100);
    let (fast, time) = within(start.elapsed(), 60.0);
    verdict(
        d50 < 1e-10 && d100 < 1e-8 && fast,
        format!("Gram deviation {d50:.2e} (n_max 50), {d100:.2e} (n_max 100); {time}"),
    )
}

fn spectral_round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for c in [0.6, 1.5] {
        let s = Spheroid::new(1.0, c).unwrap();
        let (coords, _) = sample_uniform_hemispheroid(&s, 5000).unwrap();
        let truth = HarmonicCoeffs {
            n_max: 5,
            coeffs: (0..basis_len(5)).map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0))).collect(),
            spheroid: s,
            eps_eta: DEFAULT_EPS_ETA,
            registration: RigidTransform::identity(),
        };
        let values = reconstruct(&truth, &coords, 5).unwrap();
        let fit = fit_points(&coords, &values, &s, 5, DEFAULT_EPS_ETA, None).unwrap();
        for (a, b) in fit.coeffs.iter().zip(&truth.coeffs) {
            for k in 0..3 {
                worst = worst.max((a[k] - b[k]).abs());
            }
        }
    }
    let (fast, time) = within(start.elapsed(), 10.0);
    verdict(worst < 1e-8 && fast, format!("max coefficient error {worst:.2e}; {time}"))
}

fn conformal_hemisphere() -> Outcome {
    let start = Instant::now();
    let s = Spheroid::new(1.0, 1.0).unwrap();
    let mean_angle = |rings| {
        let m = spherical_cap(1.0, 1.0, rings);
        let r = hemispheroidal_conformal(&m, &s).unwrap();
        (m.vertex_count(), angle_distortion(&m, &r.hemi.points).unwrap().mean)
    };
    let (v0, coarse) = mean_angle(57);
    let (v1, fine) = mean_angle(114);
    let ratio = fine / coarse;
    let (fast, time) = within(start.elapsed(), 60.0);
    verdict(
        coarse < 1.0 && (0.375..=0.625).contains(&ratio) && fast,
        format!("mean |d_angle| {coarse:.4} deg ({v0} v) -> {fine:.4} deg ({v1} v), ratio {ratio:.3}; {time}"),
    )
}

struct Distortions {
    name: &'static str,
    angle: [f64; 3],
    area: [f64; 3],
}

fn table_distortions(rings: usize) -> (Vec<Distortions>, Duration) {
    let start = Instant::now();
    let rows = benchmark_suite(rings)
        .into_iter()
        .map(|(name, m)| {
            let (reg, _) = register(&m).unwrap();
            let s = size_hemispheroid(&reg).unwrap();
            let maps = [
                hemispheroidal_tutte(&reg, &s).unwrap().hemi,
                hemispheroidal_conformal(&reg, &s).unwrap().hemi,
                hemispheroidal_area_preserving(&reg, &s).unwrap(),
            ];
            Distortions {
                name,
                angle: maps.each_ref().map(|h| angle_distortion(&reg, &h.points).unwrap().mean),
                area: maps.each_ref().map(|h| area_distortion(&reg, &h.points).unwrap().mean),
            }
        })
        .collect();
    (rows, start.elapsed())
}

fn area_ordering(rows: &[Distortions], elapsed: Duration) -> Outcome {
    let ok = rows.iter().all(|r| r.area[2] < r.area[0] && r.area[2] < r.area[1]);
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("{} T/C/A {:.3}/{:.3}/{:.3}", r.name, r.area[0], r.area[1], r.area[2]))
        .collect();
    let (fast, time) = within(elapsed, 300.0);
    verdict(ok && fast, format!("mean |d_area| {}; {time}", detail.join(", ")))
}

fn angle_ordering(rows: &[Distortions]) -> Outcome {
    let ok = rows.iter().all(|r| r.angle[1] < r.angle[0] && r.angle[1] < r.angle[2]);
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("{} T/C/A {:.2}/{:.2}/{:.2}", r.name, r.angle[0], r.angle[1], r.angle[2]))
        .collect();
    verdict(ok, format!("mean |d_angle| {}", detail.join(", ")))
}

fn public_mesh_dir() -> PathBuf {
    std::env::var_os("HEMIPARAM_PUBLIC_MESHES")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/public"))
}

fn find_mesh(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["obj", "ply", "off"].iter().map(|e| dir.join(format!("{stem}.{e}"))).find(|p| p.is_file())
}

fn paper_meshes() -> Outcome {
    let dir = public_mesh_dir();
    // conformal mean |d_angle| and area-preserving mean |d_area| from the comparison table
    let table = [("face", 0.49, 0.04), ("bunny", 1.22, 0.15), ("matterhorn", 0.38, 0.05)];
    let found: Vec<_> = table.iter().filter_map(|t| find_mesh(&dir, t.0).map(|p| (t, p))).collect();
    if found.is_empty() {
        return Outcome::Skip(format!("no face/bunny/matterhorn meshes in {}", dir.display()));
    }
    let mut ok = true;
    let mut notes = Vec::new();
    for ((name, angle_ref, area_ref), path) in found {
        let m = load_mesh_with(&path, LoadOptions { format: None, weld: true }).unwrap();
        let (reg, _) = register(&m).unwrap();
        let s = size_hemispheroid(&reg).unwrap();
        let angle = angle_distortion(&reg, &hemispheroidal_conformal(&reg, &s).unwrap().hemi.points).unwrap().mean;
        let ap = hemispheroidal_area_preserving(&reg, &s).unwrap();
        let area = area_distortion(&reg, &ap.points).unwrap().mean;
        let angle_ok = (angle / angle_ref - 1.0).abs() <= 0.3;
        let area_ok = (area / area_ref - 1.0).abs() <= 0.5;
        ok &= angle_ok && area_ok;
        notes.push(format!("{name}: angle {angle:.3} (ref {angle_ref}), area {area:.3} (ref {area_ref})"));
        if *name == "bunny" {
            let s = Spheroid::new(1.0, 1.0925).unwrap();
            let ap = hemispheroidal_area_preserving(&reg, &s).unwrap();
            let err = reconstruction_error(&reg, &ap, &s, 70, PI / 100.0);
            let err_ok = err <= 2.0 * 0.000731 && err >= 0.000731 / 2.0;
            ok &= err_ok;
            notes.push(format!("bunny A-RMSE {err:.3e} (ref 7.31e-4)"));
        }
    }
    verdict(ok, notes.join("; "))
}

fn reconstruction_error(reg: &TriMesh, hemi: &SurfaceMap, s: &Spheroid, n_max: usize, eps_eta: f64) -> f64 {
    let dec = decompose(hemi, reg, s, n_max, eps_eta).unwrap();
    let recon = reconstruct(&dec.coeffs, &dec.coords, n_max).unwrap();
    a_rmse(reg, &reg.with_vertices(recon).unwrap())
}

fn truncation_monotonicity() -> Outcome {
    let start = Instant::now();
    let n_max = 20;
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, m) in [("face", face_like(24)), ("mountain", mountain(24))] {
        let (reg, _) = register(&m).unwrap();
        let s = size_hemispheroid(&reg).unwrap();
        let hemi = hemispheroidal_area_preserving(&reg, &s).unwrap();
        let dec = decompose(&hemi, &reg, &s, n_max, DEFAULT_EPS_ETA).unwrap();
        let residual: Vec<f64> = (0..=n_max)
            .map(|n| {
                let fit = reconstruct(&dec.coeffs, &dec.coords, n).unwrap();
                let sq: f64 = fit.iter().zip(reg.vertices()).map(|(a, b)| (a - b).norm_squared()).sum();
                (sq / fit.len() as f64).sqrt()
            })
            .collect();
        let rises: Vec<usize> = (1..residual.len()).filter(|&n| residual[n] > residual[n - 1] * (1.0 + 1e-12)).collect();
        ok &= rises.is_empty();
        notes.push(format!(
            "{name}: {:.3e} -> {:.3e}, increases at n_upto {rises:?}",
            residual[0], residual[n_max]
        ));
    }
    let (fast, time) = within(start.elapsed(), 60.0);
    verdict(ok && fast, format!("{}; {time}", notes.join("; ")))
}

fn balanced_limits() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, m) in [("face", face_like(20)), ("blob", tall_blob(20))] {
        let (reg, _) = register(&m).unwrap();
        let s = size_hemispheroid(&reg).unwrap();
        let comp = BalancedComponents::compute(&reg, &s).unwrap();
        let dev = |w: &BalanceWeights, target: &[Vec2]| {
            let r = comp.solve(&reg, &s, w).unwrap();
            r.disk.points.iter().zip(target).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
        };
        let t = dev(&BalanceWeights::tutte(), &comp.g.points);
        let c = dev(&BalanceWeights::conformal(), &comp.conformal_disk.points) / 2.0;
        ok &= t < 1e-6 && c < 1e-3;
        notes.push(format!("{name}: Tutte {t:.2e}, conformal {c:.2e} of diameter"));
    }
    let (fast, time) = within(start.elapsed(), 60.0);
    verdict(ok && fast, format!("{}; {time}", notes.join("; ")))
}

fn radius_curve() -> Outcome {
    let start = Instant::now();
    let m = harmonic_cap(1.0, 0.6, 24);
    let (reg, _) = register(&m).unwrap();
    let curve = optimize_radius_c(&reg, &RadiusSearch::default()).unwrap();
    let min = curve
        .curve
        .iter()
        .min_by(|a, b| a.mean_orthogonality.total_cmp(&b.mean_orthogonality))
        .unwrap();
    let (fast, time) = within(start.elapsed(), 300.0);
    verdict(
        (0.45..=0.8).contains(&curve.c_star) && min.c == curve.c_star && fast,
        format!(
            "c* = {:.4} from {} samples, curve minimum at {:.4}; {time}",
            curve.c_star,
            curve.curve.len(),
            min.c
        ),
    )
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("face.obj");
    save_mesh(&face_like(20), &input, None).unwrap();
    let runs: [&[&str]; 2] = [&["--method", "area"], &["--method", "balanced", "--alpha", "0.344", "--beta", "0", "--gamma", "0.656"]];
    let mut ok = true;
    let mut notes = Vec::new();
    for extra in runs {
        let mut files = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("run{k}"));
            let status = Command::new(env!("CARGO_BIN_EXE_hemiparam"))
                .args(["run", "--n-max", "15", "--input"])
                .arg(&input)
                .arg("--output")
                .arg(&out)
                .args(extra)
                .output()
                .unwrap();
            if !status.status.success() {
                return Outcome::Fail(String::from_utf8_lossy(&status.stderr).into_owned());
            }
            let method = extra[1];
            let read = |suffix: &str| std::fs::read(out.join(format!("face_{method}_n15.{suffix}"))).unwrap();
            files.push((read("coeffs.json"), read("metrics.json")));
        }
        let same = files[0] == files[1];
        ok &= same;
        notes.push(format!("{}: {}", extra[1], if same { "identical" } else { "differ" }));
    }
    let (fast, time) = within(start.elapsed(), 60.0);
    verdict(ok && fast, format!("coefficients and metrics {}; {time}", notes.join(", ")))
}

fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).try_init();
    let mut table: Option<(Vec<Distortions>, Duration)> = None;
    let mut failed = 0;
    for k in 1..=12u32 {
        let (title, outcome) = {
            let mut run = || -> (&'static str, Outcome) {
                match k {
                    1 => ("projection identity", projection_identity()),
                    2 => ("Tutte bijectivity", tutte_bijectivity()),
                    3 => ("basis stability and orthonormality", basis_stability()),
                    4 => ("spectral round trip", spectral_round_trip()),
                    5 => ("conformal quality on the hemisphere", conformal_hemisphere()),
                    6 => {
                        let (rows, t) = table.get_or_insert_with(|| table_distortions(24));
                        ("area-preserving ordering", area_ordering(rows, *t))
                    }
                    7 => {
                        let (rows, _) = table.get_or_insert_with(|| table_distortions(24));
                        ("conformal ordering", angle_ordering(rows))
                    }
                    8 => ("published mesh values", paper_meshes()),
                    9 => ("truncation monotonicity", truncation_monotonicity()),
                    10 => ("balanced-map limits", balanced_limits()),
                    11 => ("radius-curve consistency", radius_curve()),
                    _ => ("determinism", determinism()),
                }
            };
            match catch_unwind(AssertUnwindSafe(&mut run)) {
                Ok(r) => r,
                Err(e) => {
                    let msg = e
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default();
                    ("criterion", Outcome::Fail(format!("panicked: {msg}")))
                }
            }
        };
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {k:>2} {tag}: {title}: {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
