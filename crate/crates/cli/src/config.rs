//! Experiment configuration: strict JSON schema plus cross-field checks.

use std::path::{Path, PathBuf};

use decoq::decoupling::{DecouplingSet, DecouplingSpec};
use decoq::dilation::DilationSpec;
use decoq::lindblad::{compile_schedule, GeneratorSchedule, LindbladSpec};
use decoq::walk::{Scheme, WalkConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub decoupling: DecouplingSpec,
    pub walk: WalkTable,
    #[serde(default)]
    pub dilation: Option<DilationSpec>,
    pub analysis: Vec<Analysis>,
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dim: usize,
    /// May be omitted when only the dilated (extrinsic) model is studied.
    #[serde(default)]
    pub lindblad: Option<LindbladSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkTable {
    pub tau: f64,
    pub t_grid: Vec<f64>,
    /// Micro-steps per pulse period, needed by `mc_diffusion`.
    #[serde(default)]
    pub n: Option<u64>,
    pub paths: usize,
    #[serde(default)]
    pub record_pulses: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    McPhysical,
    McDiffusion,
    Analytic,
    Drift,
    Variance,
    Bounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

/// A parsed config with its compiled objects and the exact bytes it was read from.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub bytes: Vec<u8>,
    pub schedule: Option<GeneratorSchedule>,
    pub set: DecouplingSet,
}

impl Loaded {
    pub fn wants(&self, a: Analysis) -> bool {
        self.config.analysis.contains(&a)
    }

    pub fn walk_config(&self, scheme: Scheme, seed: u64) -> WalkConfig {
        let w = &self.config.walk;
        WalkConfig {
            tau: w.tau,
            t_grid: w.t_grid.clone(),
            scheme,
            paths: w.paths,
            master_seed: seed,
            record_pulses: w.record_pulses,
        }
    }
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

pub fn parse(bytes: &[u8]) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "(root)".to_string() } else { path };
        invalid(&path, e.into_inner())
    })
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = parse(&bytes)?;
    let (schedule, set) = check(&config)?;
    Ok(Loaded { config, bytes, schedule, set })
}

/// Cross-field validation; returns the compiled generator schedule and decoupling set.
pub fn check(c: &ExperimentConfig) -> Result<(Option<GeneratorSchedule>, DecouplingSet), CliError> {
    let dim = c.system.dim;
    if dim == 0 {
        return Err(invalid("system.dim", "must be >= 1"));
    }
    let schedule = match &c.system.lindblad {
        Some(spec) => {
            let s = compile_schedule(spec).map_err(|e| invalid("system.lindblad", e))?;
            if s.dim_h() != dim {
                return Err(invalid("system.lindblad", format!("generator acts on dimension {}, system.dim is {dim}", s.dim_h())));
            }
            Some(s)
        }
        None => None,
    };
    if schedule.is_none() && c.dilation.is_none() {
        return Err(invalid("system.lindblad", "required unless a dilation is given"));
    }
    let set = DecouplingSet::from_spec(&c.decoupling).map_err(|e| invalid("decoupling", e))?;
    if set.dim_h() != dim {
        return Err(invalid("decoupling", format!("set acts on dimension {}, system.dim is {dim}", set.dim_h())));
    }
    if let Some(d) = &c.dilation {
        d.validate().map_err(|e| invalid("dilation", e))?;
        if d.d_h != dim {
            return Err(invalid("dilation.d_h", format!("is {}, system.dim is {dim}", d.d_h)));
        }
    }
    let w = &c.walk;
    let probe = WalkConfig {
        tau: w.tau,
        t_grid: w.t_grid.clone(),
        scheme: Scheme::Physical,
        paths: w.paths,
        master_seed: 0,
        record_pulses: w.record_pulses,
    };
    probe.validate().map_err(|e| invalid("walk", e))?;
    if c.analysis.is_empty() {
        return Err(invalid("analysis", "must name at least one analysis"));
    }
    let has = |a| c.analysis.contains(&a);
    if has(Analysis::McDiffusion) {
        match w.n {
            None => return Err(invalid("walk.n", "required by mc_diffusion")),
            Some(n) if n < 100 => return Err(invalid("walk.n", format!("must be >= 100, got {n}"))),
            _ => {}
        }
        if schedule.is_none() {
            return Err(invalid("system.lindblad", "required by mc_diffusion"));
        }
    }
    let analytic = [Analysis::Analytic, Analysis::Drift, Analysis::Variance].into_iter().any(has);
    if analytic {
        match &schedule {
            None => return Err(invalid("system.lindblad", "required by analytic, drift and variance")),
            Some(s) if !s.is_constant() => {
                return Err(invalid("system.lindblad.time_dependence", "analytic curves need a constant generator"))
            }
            _ => {}
        }
    }
    if c.output.formats.is_empty() {
        return Err(invalid("output.formats", "must name at least one format"));
    }
    Ok((schedule, set))
}
