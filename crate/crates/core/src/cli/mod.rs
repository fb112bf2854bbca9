//! Command-line front end.

pub mod config;
pub mod pipeline;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::balanced::BalancedComponents;
use crate::error::{Error, Result, ResultExt};
use crate::harmonics::{decompose, reconstruct, reconstruct_original_pose, sample_uniform_hemispheroid, HarmonicCoeffs};
use crate::mesh::{load_mesh, save_mesh};
use crate::metrics::{a_rmse, symmetric_rms_distance};
use crate::optimize::{optimize_radius_c, optimize_weights};
use crate::projection::SurfaceMap;
use crate::registration::{register, Spheroid};
use config::RunConfig;
use pipeline::{artifact_base, choose_spheroid, map_distortion, parameterize, set_jobs, to_json_pretty, ArtifactWriter};

#[derive(Debug, Parser)]
#[command(name = "hemiparam", version, about = "Hemispheroidal parameterization and harmonic decomposition of open surfaces")]
pub struct Cli {
    /// Worker threads for the linear algebra; 1 keeps runs bit-reproducible.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline: register, parameterize, decompose, reconstruct, measure.
    Run(RunArgs),
    /// Registered mesh and its hemispheroidal parameterization.
    Param(RunArgs),
    /// Coefficient file from a mesh and its parameterization.
    Decompose(DecomposeArgs),
    /// Surface from a coefficient file.
    Reconstruct(ReconstructArgs),
    /// Reconstruction error between two meshes, and map distortion.
    Metrics(MetricsArgs),
    /// Search the hemispheroid radius c and write the error curve.
    OptimizeC(RunArgs),
    /// Search the balance weights for a mesh.
    OptimizeWeights(RunArgs),
}

/// Config file plus per-field overrides.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// tutte, conformal, area or balanced.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub optimize_weights: bool,
    /// auto, optimize or a positive number.
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long)]
    pub eps_eta: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// obj, ply or off.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report the reconstruction distance without dividing by the bounding-box diagonal.
    #[arg(long)]
    pub absolute_distance: bool,
    #[arg(long)]
    pub metrics_csv: bool,
    #[arg(long)]
    pub n_max_probe: Option<usize>,
    #[arg(long)]
    pub weight_budget: Option<usize>,
    #[arg(long)]
    pub c_min: Option<f64>,
    #[arg(long)]
    pub c_max: Option<f64>,
    #[arg(long)]
    pub c_samples: Option<usize>,
}

impl RunArgs {
    /// Config file values overlaid with the flags that were given.
    pub fn resolve(&self, jobs: Option<usize>) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { c.$f = v.clone().into(); })* };
        }
        set!(input, eps_eta, n_max, samples, output, format, seed, n_max_probe, weight_budget, c_min, c_max, c_samples);
        for (dst, src) in [(&mut c.alpha, self.alpha), (&mut c.beta, self.beta), (&mut c.gamma, self.gamma)] {
            if src.is_some() {
                *dst = src;
            }
        }
        if let Some(m) = &self.method {
            c.method = m.parse()?;
        }
        if let Some(v) = &self.c {
            c.c = v.parse()?;
        }
        if let Some(j) = jobs {
            c.jobs = j;
        }
        c.optimize_weights |= self.optimize_weights;
        c.absolute_distance |= self.absolute_distance;
        c.metrics_csv |= self.metrics_csv;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Input mesh in its original pose.
    #[arg(long)]
    pub input: PathBuf,
    /// Parameterized mesh with the same vertex order.
    #[arg(long)]
    pub param: PathBuf,
    /// Polar semiaxis of the hemispheroid the parameterization lies on.
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = config::DEFAULT_N_MAX)]
    pub n_max: usize,
    #[arg(long, default_value_t = crate::projection::DEFAULT_EPS_ETA)]
    pub eps_eta: f64,
    /// Coefficient JSON to write.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub coeffs: PathBuf,
    /// Truncation degree; defaults to the file's n_max.
    #[arg(long)]
    pub n_upto: Option<usize>,
    /// Evaluate on a uniform sample of this many points.
    #[arg(long, default_value_t = 5000, conflicts_with = "param")]
    pub samples: usize,
    /// Evaluate at the vertices of this parameterized mesh instead.
    #[arg(long)]
    pub param: Option<PathBuf>,
    /// Stay in the registered pose.
    #[arg(long)]
    pub registered_pose: bool,
    /// Mesh file to write; the extension picks the format.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Reconstructed mesh compared against the input.
    #[arg(long)]
    pub recon: Option<PathBuf>,
    /// Parameterized mesh whose distortion against the registered input is reported.
    #[arg(long, requires = "c")]
    pub param: Option<PathBuf>,
    /// Polar semiaxis of the parameterization.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub absolute_distance: bool,
    /// JSON report to write; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parse `args` and run; the return value is the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let jobs = cli.jobs.unwrap_or(1);
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    set_jobs(jobs);
    match &cli.command {
        Command::Run(a) => {
            let cfg = a.resolve(cli.jobs)?;
            set_jobs(cfg.jobs);
            let outcome = pipeline::run_pipeline(&cfg)?;
            for p in &outcome.artifacts {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Param(a) => param_only(&a.resolve(cli.jobs)?),
        Command::Decompose(a) => decompose_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::OptimizeC(a) => {
            let cfg = a.resolve(cli.jobs)?;
            cfg.validate().stage("config")?;
            let registered = load_registered(cfg.input_path()?)?;
            let curve = optimize_radius_c(&registered, &cfg.radius_search()).stage("optimize-c")?;
            let stem = cfg.input_path()?.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let mut out = ArtifactWriter::new(&cfg.output, stem)?;
            out.write("radius.csv", curve.to_csv().as_bytes())?;
            for p in out.commit()? {
                println!("{}", p.display());
            }
            println!("c* = {}", curve.c_star);
            Ok(())
        }
        Command::OptimizeWeights(a) => {
            let cfg = a.resolve(cli.jobs)?;
            cfg.validate().stage("config")?;
            let registered = load_registered(cfg.input_path()?)?;
            let (s, _) = choose_spheroid(&registered, &cfg).stage("spheroid")?;
            let components = BalancedComponents::compute(&registered, &s).stage("parameterize")?;
            let found = optimize_weights(&components, &registered, &s, cfg.n_max_probe, cfg.eps_eta, cfg.weight_budget)
                .stage("optimize-weights")?;
            print!(
                "{}",
                to_json_pretty(&serde_json::json!({
                    "alpha": found.weights.alpha,
                    "beta": found.weights.beta,
                    "gamma": found.weights.gamma,
                    "a_rmse": found.a_rmse,
                    "evaluations": found.evals,
                }))
            );
            Ok(())
        }
    }
}

fn load_registered(path: &Path) -> Result<crate::mesh::TriMesh> {
    let input = load_mesh(path).stage("load")?;
    Ok(register(&input).stage("register")?.0)
}

fn param_only(cfg: &RunConfig) -> Result<()> {
    cfg.validate().stage("config")?;
    let format = cfg.mesh_format()?;
    let input = cfg.input_path()?;
    let registered = load_registered(input)?;
    let (s, _) = choose_spheroid(&registered, cfg).stage("spheroid")?;
    let p = parameterize(&registered, &s, cfg).stage("parameterize")?;
    let mut out = ArtifactWriter::new(&cfg.output, artifact_base(input, cfg.method, cfg.n_max))?;
    out.write_mesh("registered", &registered, format)?;
    out.write_mesh("param", &registered.with_vertices(p.hemi.points)?, format)?;
    for path in out.commit()? {
        println!("{}", path.display());
    }
    println!("c = {}", s.c);
    Ok(())
}

fn decompose_cmd(a: &DecomposeArgs) -> Result<()> {
    let input = load_mesh(&a.input).stage("load")?;
    let (registered, transform) = register(&input).stage("register")?;
    let param = load_mesh(&a.param).stage("load")?;
    if param.vertex_count() != registered.vertex_count() {
        return Err(Error::SizeMismatch("parameterization and input differ in vertex count".into()).in_stage("load"));
    }
    let s = Spheroid::new(1.0, a.c).stage("spheroid")?;
    let hemi = SurfaceMap::new(param.vertices().to_vec());
    let d = decompose(&hemi, &registered, &s, a.n_max, a.eps_eta).stage("decompose")?;
    d.coeffs.with_registration(transform).save(&a.output).stage("decompose")?;
    println!("residual_rms = {}", d.residual_rms);
    Ok(())
}

fn reconstruct_cmd(a: &ReconstructArgs) -> Result<()> {
    let coeffs = HarmonicCoeffs::load(&a.coeffs).stage("load")?;
    let n_upto = a.n_upto.unwrap_or(coeffs.n_max);
    let (coords, mesh) = match &a.param {
        Some(p) => {
            let m = load_mesh(p).stage("load")?;
            let hemi = SurfaceMap::new(m.vertices().to_vec());
            (crate::projection::surface_coords(&hemi, &coeffs.spheroid, coeffs.eps_eta).stage("reconstruct")?, m)
        }
        None => sample_uniform_hemispheroid(&coeffs.spheroid, a.samples).stage("reconstruct")?,
    };
    let points = if a.registered_pose {
        reconstruct(&coeffs, &coords, n_upto)
    } else {
        reconstruct_original_pose(&coeffs, &coords, n_upto)
    }
    .stage("reconstruct")?;
    save_mesh(&mesh.with_vertices(points)?, &a.output, None).stage("write")?;
    Ok(())
}

fn metrics_cmd(a: &MetricsArgs) -> Result<()> {
    let input = load_mesh(&a.input).stage("load")?;
    let mut report = serde_json::Map::new();
    if let Some(r) = &a.recon {
        let recon = load_mesh(r).stage("load")?;
        let d = if a.absolute_distance {
            symmetric_rms_distance(&input, &recon)
        } else {
            a_rmse(&input, &recon)
        };
        report.insert("a_rmse".into(), d.into());
        report.insert("a_rmse_normalization".into(), (if a.absolute_distance { "none" } else { "bbox_diagonal" }).into());
    }
    if let Some(p) = &a.param {
        let (registered, _) = register(&input).stage("register")?;
        let param = load_mesh(p).stage("load")?;
        let s = Spheroid::new(1.0, a.c.unwrap_or_default()).stage("spheroid")?;
        let (angle, area, flipped) =
            map_distortion(&registered, &SurfaceMap::new(param.vertices().to_vec()), &s).stage("metrics")?;
        report.insert("angle_distortion".into(), serde_json::to_value(angle).expect("serializable"));
        report.insert("area_distortion".into(), serde_json::to_value(area).expect("serializable"));
        report.insert("flipped_faces".into(), flipped.into());
    }
    let text = to_json_pretty(&report);
    match &a.output {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
