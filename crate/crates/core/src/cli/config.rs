//! Run configuration: a TOML file overlaid with command-line flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::area::{DemOptions, DEFAULT_STEP};
use crate::balanced::BalanceWeights;
use crate::error::{Error, Result};
use crate::mesh::MeshFormat;
use crate::metrics::HISTOGRAM_BINS;
use crate::optimize::{RadiusSearch, SearchSpec};
use crate::projection::DEFAULT_EPS_ETA;
use crate::qc::MU_CAP;
use crate::registration::C_MIN;

pub const DEFAULT_N_MAX: usize = 30;
pub const DEFAULT_OUTPUT: &str = "out";
pub const DEFAULT_N_MAX_PROBE: usize = 10;
pub const DEFAULT_WEIGHT_BUDGET: usize = 200;
/// Highest accepted expansion degree.
pub const N_MAX_LIMIT: usize = 150;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tutte,
    Conformal,
    #[default]
    Area,
    Balanced,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Tutte, Method::Conformal, Method::Area, Method::Balanced];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tutte => "tutte",
            Method::Conformal => "conformal",
            Method::Area => "area",
            Method::Balanced => "balanced",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::Config(format!("unknown method `{s}`; valid methods are {}", names.join(", ")))
        })
    }
}

/// Polar semiaxis of the target hemispheroid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CRepr", into = "CRepr")]
pub enum CSetting {
    /// Sized from the registered bounding box.
    #[default]
    Auto,
    /// Minimizer of the basis orthogonality error over `[c_min, c_max]`.
    Optimize,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<CRepr> for CSetting {
    type Error = Error;

    fn try_from(r: CRepr) -> Result<Self> {
        match r {
            CRepr::Number(v) => Ok(CSetting::Fixed(v)),
            CRepr::Word(w) => w.parse(),
        }
    }
}

impl From<CSetting> for CRepr {
    fn from(c: CSetting) -> Self {
        match c {
            CSetting::Auto => CRepr::Word("auto".into()),
            CSetting::Optimize => CRepr::Word("optimize".into()),
            CSetting::Fixed(v) => CRepr::Number(v),
        }
    }
}

impl FromStr for CSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(CSetting::Auto),
            "optimize" => Ok(CSetting::Optimize),
            _ => s
                .parse::<f64>()
                .map(CSetting::Fixed)
                .map_err(|_| Error::Config(format!("c must be `auto`, `optimize` or a number, got `{s}`"))),
        }
    }
}

impl fmt::Display for CSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CSetting::Auto => f.write_str("auto"),
            CSetting::Optimize => f.write_str("optimize"),
            CSetting::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Search the balance weights instead of taking them from the config.
    pub optimize_weights: bool,
    pub c: CSetting,
    pub eps_eta: f64,
    pub n_max: usize,
    /// Points of the uniform reconstruction mesh; `0` reconstructs at the
    /// input vertices with the input connectivity.
    pub samples: usize,
    pub output: PathBuf,
    pub format: String,
    /// Recorded in the manifest; every stage is deterministic.
    pub seed: u64,
    pub jobs: usize,
    pub absolute_distance: bool,
    pub metrics_csv: bool,
    pub n_max_probe: usize,
    pub weight_budget: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub c_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let radius = RadiusSearch::default();
        RunConfig {
            input: None,
            method: Method::default(),
            alpha: None,
            beta: None,
            gamma: None,
            optimize_weights: false,
            c: CSetting::Auto,
            eps_eta: DEFAULT_EPS_ETA,
            n_max: DEFAULT_N_MAX,
            samples: 0,
            output: PathBuf::from(DEFAULT_OUTPUT),
            format: "obj".into(),
            seed: 0,
            jobs: 1,
            absolute_distance: false,
            metrics_csv: false,
            n_max_probe: DEFAULT_N_MAX_PROBE,
            weight_budget: DEFAULT_WEIGHT_BUDGET,
            c_min: radius.c_lower,
            c_max: radius.c_upper,
            c_samples: radius.samples,
        }
    }
}

/// Weights chosen for a balanced run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightChoice {
    Fixed(BalanceWeights),
    Optimize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Config("missing required field `input`".into()))
    }

    pub fn mesh_format(&self) -> Result<MeshFormat> {
        self.format.parse().map_err(|_| Error::Config(format!("unknown mesh format `{}`", self.format)))
    }

    pub fn weight_choice(&self) -> Result<Option<WeightChoice>> {
        let given = [self.alpha, self.beta, self.gamma];
        let any = given.iter().any(Option::is_some);
        if self.method != Method::Balanced {
            if any || self.optimize_weights {
                return Err(Error::Config(format!(
                    "balance weights only apply to method = balanced, not {}",
                    self.method
                )));
            }
            return Ok(None);
        }
        if self.optimize_weights {
            if any {
                return Err(Error::Config("give either alpha/beta/gamma or optimize_weights, not both".into()));
            }
            return Ok(Some(WeightChoice::Optimize));
        }
        match given {
            [Some(a), Some(b), Some(g)] => BalanceWeights::new(a, b, g)
                .map(|w| Some(WeightChoice::Fixed(w)))
                .map_err(|e| Error::Config(e.to_string())),
            _ => Err(Error::Config(
                "method = balanced needs alpha, beta and gamma, or optimize_weights = true".into(),
            )),
        }
    }

    /// Check every field before any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.input_path()?;
        self.mesh_format()?;
        self.weight_choice()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.eps_eta >= 0.0 && self.eps_eta < std::f64::consts::FRAC_PI_4) {
            return bad(format!("eps_eta must lie in [0, π/4), got {}", self.eps_eta));
        }
        if self.n_max > N_MAX_LIMIT {
            return bad(format!("n_max must be at most {N_MAX_LIMIT}, got {}", self.n_max));
        }
        if self.samples != 0 && self.samples < 4 {
            return bad(format!("samples must be 0 or at least 4, got {}", self.samples));
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if let CSetting::Fixed(c) = self.c {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("c must be positive, got {c}"));
            }
        }
        if !(self.c_min > 0.0 && self.c_min < self.c_max && self.c_max.is_finite()) || self.c_samples < 2 {
            return bad("need 0 < c_min < c_max and c_samples >= 2".into());
        }
        if self.weight_budget == 0 {
            return bad("weight_budget must be positive".into());
        }
        Ok(())
    }

    pub fn radius_search(&self) -> RadiusSearch {
        RadiusSearch {
            c_lower: self.c_min,
            c_upper: self.c_max,
            samples: self.c_samples,
            n_max_probe: self.n_max_probe,
            eps_eta: self.eps_eta,
            ..RadiusSearch::default()
        }
    }
}

/// Every numeric default, keyed as in the README table.
pub fn defaults_table() -> Vec<(&'static str, String)> {
    let c = RunConfig::default();
    let dem = DemOptions::default();
    let radius = RadiusSearch::default();
    let search = SearchSpec::new(vec![0.0], vec![1.0]);
    vec![
        ("method", c.method.to_string()),
        ("c", c.c.to_string()),
        ("eps_eta", format!("{}", c.eps_eta)),
        ("n_max", c.n_max.to_string()),
        ("samples", c.samples.to_string()),
        ("output", c.output.display().to_string()),
        ("format", c.format.clone()),
        ("seed", c.seed.to_string()),
        ("jobs", c.jobs.to_string()),
        ("absolute_distance", c.absolute_distance.to_string()),
        ("metrics_csv", c.metrics_csv.to_string()),
        ("n_max_probe", c.n_max_probe.to_string()),
        ("weight_budget", c.weight_budget.to_string()),
        ("c_min", c.c_min.to_string()),
        ("c_max", c.c_max.to_string()),
        ("c_samples", c.c_samples.to_string()),
        ("c_refine_evals", radius.refine_evals.to_string()),
        ("c_floor", C_MIN.to_string()),
        ("dem_max_iter", dem.max_iter.to_string()),
        ("dem_cv_tol", dem.cv_tol.to_string()),
        ("dem_stall_tol", dem.stall_tol.to_string()),
        ("dem_step", DEFAULT_STEP.to_string()),
        ("dem_max_halvings", dem.max_halvings.to_string()),
        ("optimizer_max_evals", search.max_evals.to_string()),
        ("optimizer_tol", search.tol.to_string()),
        ("mu_cap", MU_CAP.to_string()),
        ("histogram_bins", HISTOGRAM_BINS.to_string()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = RunConfig::default();
        assert_eq!(c.eps_eta, std::f64::consts::PI / 160.0);
        assert_eq!(c.method, Method::Area);
        let mut full = c.clone();
        full.input = Some("face.obj".into());
        full.method = Method::Balanced;
        full.alpha = Some(0.344);
        full.beta = Some(0.0);
        full.gamma = Some(0.656);
        full.c = CSetting::Fixed(0.625);
        full.eps_eta = 0.1 / 3.0;
        for cfg in [c, full] {
            assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        }
    }

    #[test]
    fn file_values_and_rejections() {
        let cfg = RunConfig::from_toml("input = \"a.obj\"\nn_max = 50\nc = \"optimize\"\n").unwrap();
        assert_eq!((cfg.n_max, cfg.c), (50, CSetting::Optimize));
        assert!(cfg.validate().is_ok());
        let err = RunConfig::from_toml("n_maxx = 3\n").unwrap_err().to_string();
        assert!(err.contains("n_maxx"), "{err}");
        let err = RunConfig::from_toml("method = \"fast\"\n").unwrap_err().to_string();
        assert!(err.contains("tutte") && err.contains("balanced"), "{err}");
        assert!(RunConfig::from_toml("c = \"big\"\n").is_err());
        let err = RunConfig::default().validate().unwrap_err().to_string();
        assert!(err.contains("input"), "{err}");
    }

    #[test]
    fn weight_rules() {
        let base = RunConfig {
            input: Some("a.obj".into()),
            ..Default::default()
        };
        let with = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c.validate()
        };
        assert!(with(&|c| c.alpha = Some(1.0)).is_err());
        assert!(with(&|c| c.method = Method::Balanced).is_err());
        assert!(with(&|c| {
            c.method = Method::Balanced;
            c.optimize_weights = true;
        })
        .is_ok());
        assert!(with(&|c| {
            c.method = Method::Balanced;
            (c.alpha, c.beta, c.gamma) = (Some(0.5), Some(0.5), Some(0.5));
        })
        .is_err());
        assert!(with(&|c| {
            c.method = Method::Balanced;
            (c.alpha, c.beta, c.gamma) = (Some(0.0), Some(0.35), Some(0.65));
        })
        .is_ok());
        assert!(with(&|c| c.samples = 2).is_err());
        assert!(with(&|c| c.c = CSetting::Fixed(-1.0)).is_err());
        assert!(with(&|c| c.format = "stl".into()).is_err());
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        let err = "fast".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("tutte, conformal, area, balanced"));
    }
}
