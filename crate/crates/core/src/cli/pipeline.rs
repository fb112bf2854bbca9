//! End-to-end run: load, register, parameterize, decompose, reconstruct,
//! measure, and write artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;

use super::config::{CSetting, Method, RunConfig, WeightChoice};
use crate::area::area_preserving_with;
use crate::balanced::{BalanceWeights, BalancedComponents};
use crate::conformal::hemispheroidal_conformal;
use crate::error::{Error, Result, ResultExt};
use crate::harmonics::{decompose, reconstruct_original_pose, sample_uniform_hemispheroid, Decomposition, HarmonicCoeffs};
use crate::mesh::{load_mesh, write_mesh, MeshFormat};
use crate::mesh::TriMesh;
use crate::metrics::{a_rmse, angle_distortion, area_distortion, mean_orthogonality, symmetric_rms_distance, DistortionReport};
use crate::optimize::{optimize_radius_c, optimize_weights, RadiusCurve, RadiusSample};
use crate::projection::{flatten, surface_coords, SurfaceMap};
use crate::qc::count_flipped;
use crate::registration::{register, size_hemispheroid, RigidTransform, Spheroid, SpheroidKind};
use crate::tutte::hemispheroidal_tutte;

/// Cap faer's worker count; one worker keeps every run bit-reproducible.
pub fn set_jobs(jobs: usize) {
    faer::set_global_parallelism(if jobs <= 1 { faer::Par::Seq } else { faer::Par::rayon(jobs) });
}

/// Files staged under a `.partial` suffix and renamed once the run succeeds.
pub struct ArtifactWriter {
    dir: PathBuf,
    base: String,
    staged: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>, base: impl Into<String>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ArtifactWriter {
            dir,
            base: base.into(),
            staged: Vec::new(),
        })
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}.{suffix}", self.base))
    }

    pub fn write(&mut self, suffix: &str, contents: &[u8]) -> Result<()> {
        let path = self.path(suffix);
        let partial = partial_path(&path);
        fs::write(&partial, contents).map_err(|e| Error::io(&partial, e))?;
        self.staged.push(path);
        Ok(())
    }

    pub fn write_mesh(&mut self, suffix: &str, mesh: &TriMesh, format: MeshFormat) -> Result<()> {
        self.write(&format!("{suffix}.{}", format.extension()), write_mesh(mesh, format).as_bytes())
    }

    pub fn names(&self) -> Vec<String> {
        self.staged
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect()
    }

    /// Rename every staged file to its final name.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        for path in &self.staged {
            let partial = partial_path(path);
            fs::rename(&partial, path).map_err(|e| Error::io(path, e))?;
        }
        Ok(self.staged)
    }
}

fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// `{stem}_{method}_n{n_max}`.
pub fn artifact_base(input: &Path, method: Method, n_max: usize) -> String {
    let stem = input.file_stem().unwrap_or_default().to_string_lossy();
    format!("{stem}_{method}_n{n_max}")
}

/// Spheroid used for the run, with the radius curve when it was searched.
pub fn choose_spheroid(registered: &TriMesh, cfg: &RunConfig) -> Result<(Spheroid, Option<RadiusCurve>)> {
    match cfg.c {
        CSetting::Auto => Ok((size_hemispheroid(registered)?, None)),
        CSetting::Fixed(c) => Ok((Spheroid::new(1.0, c)?, None)),
        CSetting::Optimize => {
            let curve = optimize_radius_c(registered, &cfg.radius_search())?;
            Ok((Spheroid::new(1.0, curve.c_star)?, Some(curve)))
        }
    }
}

pub struct Parameterization {
    pub hemi: SurfaceMap,
    pub weights: Option<BalanceWeights>,
    /// Probe A-RMSE at the searched weights.
    pub weight_search_error: Option<f64>,
}

pub fn parameterize(mesh: &TriMesh, s: &Spheroid, cfg: &RunConfig) -> Result<Parameterization> {
    let plain = |hemi| Parameterization {
        hemi,
        weights: None,
        weight_search_error: None,
    };
    match cfg.method {
        Method::Tutte => Ok(plain(hemispheroidal_tutte(mesh, s)?.hemi)),
        Method::Conformal => Ok(plain(hemispheroidal_conformal(mesh, s)?.hemi)),
        Method::Area => {
            let r = area_preserving_with(mesh, s, &cfg.radius_search().dem)?;
            if !r.converged {
                log::warn!("density-equalizing flow stopped before reaching its tolerance");
            }
            Ok(plain(r.hemi))
        }
        Method::Balanced => {
            let components = BalancedComponents::compute(mesh, s)?;
            let (w, err) = match cfg.weight_choice()? {
                Some(WeightChoice::Fixed(w)) => (w, None),
                Some(WeightChoice::Optimize) => {
                    let found = optimize_weights(&components, mesh, s, cfg.n_max_probe, cfg.eps_eta, cfg.weight_budget)?;
                    info!("balance weights {:?}, probe A-RMSE {:.3e}", found.weights, found.a_rmse);
                    (found.weights, Some(found.a_rmse))
                }
                None => return Err(Error::Config("balanced method without weights".into())),
            };
            Ok(Parameterization {
                hemi: components.solve(mesh, s, &w)?.hemi,
                weights: Some(w),
                weight_search_error: err,
            })
        }
    }
}

/// Reconstruction in the input pose: at the mapped vertices with the input
/// faces when `samples == 0`, otherwise on a uniform sample of the spheroid.
pub fn reconstruct_mesh(coeffs: &HarmonicCoeffs, dec: &Decomposition, input: &TriMesh, samples: usize) -> Result<TriMesh> {
    if samples == 0 {
        input.with_vertices(reconstruct_original_pose(coeffs, &dec.coords, coeffs.n_max)?)
    } else {
        let (coords, grid) = sample_uniform_hemispheroid(&coeffs.spheroid, samples)?;
        grid.with_vertices(reconstruct_original_pose(coeffs, &coords, coeffs.n_max)?)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpheroidInfo {
    pub a: f64,
    pub c: f64,
    pub kind: SpheroidKind,
}

impl From<&Spheroid> for SpheroidInfo {
    fn from(s: &Spheroid) -> Self {
        SpheroidInfo { a: s.a, c: s.c, kind: s.kind }
    }
}

/// Contents of `*.metrics.json`.
#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub method: Method,
    pub n_max: usize,
    pub spheroid: SpheroidInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<BalanceWeights>,
    /// Corner angle change in degrees, registered surface to hemispheroid.
    pub angle_distortion: DistortionReport,
    /// Log area-share ratio per face, registered surface to hemispheroid.
    pub area_distortion: DistortionReport,
    pub flipped_faces: usize,
    /// Vertex RMS residual of the least-squares fit.
    pub residual_rms: f64,
    /// Symmetric RMS surface distance between input and reconstruction.
    pub a_rmse: f64,
    /// `"bbox_diagonal"` or `"none"`.
    pub a_rmse_normalization: &'static str,
    pub mean_orthogonality: f64,
    pub orthogonality_n_max: usize,
}

impl MetricsReport {
    /// `metric,bin_lo,bin_hi,count` rows for both distortion histograms.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("metric,bin_lo,bin_hi,count\n");
        for (name, r) in [("angle", &self.angle_distortion), ("area", &self.area_distortion)] {
            for line in r.histogram_csv().lines().skip(1) {
                out.push_str(name);
                out.push(',');
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }
}

pub fn map_distortion(registered: &TriMesh, hemi: &SurfaceMap, s: &Spheroid) -> Result<(DistortionReport, DistortionReport, usize)> {
    let flipped = count_flipped(&flatten(hemi, s)?, registered.faces());
    Ok((angle_distortion(registered, &hemi.points)?, area_distortion(registered, &hemi.points)?, flipped))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    config_toml: String,
    input: InputInfo,
    resolved: Resolved,
    timings_s: BTreeMap<&'static str, f64>,
    artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct InputInfo {
    path: String,
    vertices: usize,
    faces: usize,
}

#[derive(Default, Serialize)]
struct Resolved {
    #[serde(skip_serializing_if = "Option::is_none")]
    spheroid: Option<SpheroidInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    radius_curve: Option<Vec<RadiusSample>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<BalanceWeights>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight_search_a_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    registration: Option<RigidTransform>,
}

/// Paths of the committed artifacts and the metrics.
#[derive(Debug)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub metrics: MetricsReport,
    pub spheroid: Spheroid,
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

struct Timer {
    timings: BTreeMap<&'static str, f64>,
}

impl Timer {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        info!("stage {stage}");
        let out = f().stage(stage);
        self.timings.insert(stage, start.elapsed().as_secs_f64());
        out
    }
}

/// Run every stage. On failure the staged files keep their `.partial`
/// suffix and a partial manifest records the error.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate().stage("config")?;
    let input_path = cfg.input_path()?.to_path_buf();
    let format = cfg.mesh_format()?;
    let mut out = ArtifactWriter::new(&cfg.output, artifact_base(&input_path, cfg.method, cfg.n_max)).stage("output")?;
    let mut timer = Timer { timings: BTreeMap::new() };
    let mut resolved = Resolved::default();
    let mut info = InputInfo {
        path: input_path.display().to_string(),
        vertices: 0,
        faces: 0,
    };
    let result = stages(cfg, format, &input_path, &mut out, &mut timer, &mut resolved, &mut info);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        config_toml: cfg.to_toml(),
        input: info,
        resolved,
        timings_s: timer.timings,
        artifacts: {
            let mut names = out.names();
            names.push(format!("{}", out.path("manifest.json").file_name().unwrap_or_default().to_string_lossy()));
            names
        },
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    out.write("manifest.json", to_json_pretty(&manifest).as_bytes()).stage("manifest")?;
    let (metrics, spheroid) = result?;
    let artifacts = out.commit().stage("manifest")?;
    Ok(RunOutcome {
        artifacts,
        metrics,
        spheroid,
    })
}

fn stages(
    cfg: &RunConfig,
    format: MeshFormat,
    input_path: &Path,
    out: &mut ArtifactWriter,
    timer: &mut Timer,
    resolved: &mut Resolved,
    info: &mut InputInfo,
) -> Result<(MetricsReport, Spheroid)> {
    let input = timer.time("load", || load_mesh(input_path))?;
    (info.vertices, info.faces) = (input.vertex_count(), input.face_count());
    let (registered, transform) = timer.time("register", || {
        let r = register(&input)?;
        out.write_mesh("registered", &r.0, format)?;
        Ok(r)
    })?;
    resolved.registration = Some(transform);
    let (s, curve) = timer.time("spheroid", || choose_spheroid(&registered, cfg))?;
    resolved.spheroid = Some((&s).into());
    resolved.radius_curve = curve.map(|c| c.curve);
    info!("spheroid a = {}, c = {} ({:?})", s.a, s.c, s.kind);
    let param = timer.time("parameterize", || {
        let p = parameterize(&registered, &s, cfg)?;
        out.write_mesh("param", &registered.with_vertices(p.hemi.points.clone())?, format)?;
        Ok(p)
    })?;
    resolved.weights = param.weights;
    resolved.weight_search_a_rmse = param.weight_search_error;
    let dec = timer.time("decompose", || {
        let mut d = decompose(&param.hemi, &registered, &s, cfg.n_max, cfg.eps_eta)?;
        d.coeffs = d.coeffs.clone().with_registration(transform);
        out.write("coeffs.json", d.coeffs.to_json().as_bytes())?;
        Ok(d)
    })?;
    let recon = timer.time("reconstruct", || {
        let m = reconstruct_mesh(&dec.coeffs, &dec, &input, cfg.samples)?;
        out.write_mesh("recon", &m, format)?;
        Ok(m)
    })?;
    let metrics = timer.time("metrics", || {
        let (angle, area, flipped) = map_distortion(&registered, &param.hemi, &s)?;
        let coords = surface_coords(&param.hemi, &s, cfg.eps_eta)?;
        let report = MetricsReport {
            method: cfg.method,
            n_max: cfg.n_max,
            spheroid: (&s).into(),
            weights: param.weights,
            angle_distortion: angle,
            area_distortion: area,
            flipped_faces: flipped,
            residual_rms: dec.residual_rms,
            a_rmse: if cfg.absolute_distance {
                symmetric_rms_distance(&input, &recon)
            } else {
                a_rmse(&input, &recon)
            },
            a_rmse_normalization: if cfg.absolute_distance { "none" } else { "bbox_diagonal" },
            mean_orthogonality: mean_orthogonality(&coords, cfg.n_max_probe, s.kind)?,
            orthogonality_n_max: cfg.n_max_probe,
        };
        out.write("metrics.json", to_json_pretty(&report).as_bytes())?;
        if cfg.metrics_csv {
            out.write("metrics.csv", report.histogram_csv().as_bytes())?;
        }
        Ok(report)
    })?;
    Ok((metrics, s))
}
