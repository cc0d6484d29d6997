use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use decoq::diagnose::{bounds, classify, BoundInputs, BoundReport, Verdict};
use decoq::dilation::{dilated_generators, simulate_extrinsic_ensemble};
use decoq::fidelity::{drift_fidelity, mc_fidelity, Clamped, FidelityAnalytics, FidelityCurve, VarMethod};
use decoq::lindblad::GeneratorSchedule;
use decoq::limit::build;
use decoq::operator_space::NormKind;
use decoq::walk::{simulate_ensemble, Ensemble, Scheme};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Analysis, Format, Loaded};
use crate::error::CliError;

pub const CSV_COLUMNS: [&str; 7] =
    ["t", "F_mean_analytic", "F_var_analytic", "F_mean_drift", "bound_extrinsic", "bound_intrinsic", "bound_dephasing"];

/// Seed precedence: flag, then environment, then config.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(v) = env {
        return v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("DECOQ_SEED: expected an unsigned integer, got {v:?}")));
    }
    config.ok_or_else(|| CliError::Config("seed: none given (use --seed, DECOQ_SEED or the config field)".into()))
}

fn out_dir(loaded: &Loaded, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| loaded.config.output.directory.clone());
    fs::create_dir_all(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(CliError::io(format!("writing {}", path.display())))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

/// File stem shared by everything one `(run, τ)` writes, e.g. `physical_tau1e-3`.
pub fn stem(tag: &str, tau: f64) -> String {
    format!("{tag}_tau{tau:e}")
}

#[derive(Serialize)]
struct PathLine<'a> {
    path_id: u64,
    pulse_indices: &'a Option<Vec<u32>>,
    fidelities: &'a [f64],
    max_hs_norm: f64,
}

#[derive(Serialize)]
struct Manifest {
    config_sha256: String,
    seed: u64,
    tau: f64,
    versions: BTreeMap<&'static str, &'static str>,
    runs: Vec<RunEntry>,
}

#[derive(Serialize)]
struct RunEntry {
    name: String,
    scheme: String,
    paths_file: String,
    curve_file: String,
    max_validity_ratio: f64,
    validity_warning: bool,
}

fn write_run(dir: &Path, name: &str, ens: &Ensemble, seed: u64, params: BTreeMap<String, f64>) -> Result<RunEntry, CliError> {
    let s = stem(name, ens.tau);
    let mut lines = Vec::new();
    for p in &ens.paths {
        let line = PathLine {
            path_id: p.path_id,
            pulse_indices: &p.pulse_indices,
            fidelities: &p.fidelities,
            max_hs_norm: p.max_hs_norm,
        };
        serde_json::to_writer(&mut lines, &line).expect("serializable");
        lines.push(b'\n');
    }
    let paths_file = format!("{s}.paths.jsonl");
    write(&dir.join(&paths_file), &lines)?;
    let mut curve = mc_fidelity(&ens.paths, &ens.t_grid, name)?;
    curve.metadata.seed = Some(seed);
    curve.metadata.tau = Some(ens.tau);
    curve.metadata.params = params;
    let curve_file = format!("{s}.curve.json");
    write(&dir.join(&curve_file), &json(&curve))?;
    Ok(RunEntry {
        name: name.to_string(),
        scheme: ens.scheme.tag().to_string(),
        paths_file,
        curve_file,
        max_validity_ratio: ens.max_validity_ratio,
        validity_warning: ens.validity_warning(),
    })
}

pub fn simulate(loaded: &Loaded, seed: u64, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let c = &loaded.config;
    let mut jobs: Vec<(&str, Scheme, bool)> = Vec::new();
    if loaded.wants(Analysis::McPhysical) {
        if loaded.schedule.is_some() {
            jobs.push(("physical", Scheme::Physical, false));
        }
        if c.dilation.is_some() {
            jobs.push(("extrinsic_physical", Scheme::Physical, true));
        }
    }
    if loaded.wants(Analysis::McDiffusion) {
        jobs.push(("diffusion", Scheme::Diffusion { n: c.walk.n.unwrap_or(0) }, false));
    }
    if jobs.is_empty() {
        return Err(CliError::Config("analysis: simulate needs mc_physical or mc_diffusion".into()));
    }
    // run everything before touching the output directory
    let mut ensembles = Vec::new();
    for (name, scheme, extrinsic) in jobs {
        let cfg = loaded.walk_config(scheme, seed);
        let ens = if extrinsic {
            simulate_extrinsic_ensemble(c.dilation.as_ref().unwrap(), &loaded.set, &cfg)?
        } else {
            simulate_ensemble(loaded.schedule.as_ref().unwrap(), &loaded.set, &cfg)?
        };
        let mut params = BTreeMap::new();
        params.insert("paths".to_string(), c.walk.paths as f64);
        if let Scheme::Diffusion { n } = scheme {
            params.insert("n".to_string(), n as f64);
        }
        ensembles.push((name, ens, params));
    }
    let dir = out_dir(loaded, out)?;
    let mut runs = Vec::new();
    for (name, ens, params) in ensembles {
        runs.push(write_run(&dir, name, &ens, seed, params)?);
    }
    let manifest = Manifest {
        config_sha256: hex(&Sha256::digest(&loaded.bytes)),
        seed,
        tau: c.walk.tau,
        versions: BTreeMap::from([("decoq", env!("CARGO_PKG_VERSION"))]),
        runs,
    };
    write(&dir.join(format!("{}.json", stem("manifest", c.walk.tau))), &json(&manifest))?;
    Ok(dir)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default, Serialize)]
pub struct AnalyticColumns {
    pub t: Vec<f64>,
    pub mean: Option<Vec<Clamped>>,
    pub var: Option<Vec<Clamped>>,
    pub drift_mean: Option<Vec<f64>>,
    pub bounds: Option<BoundReport>,
}

pub fn analytic_columns(loaded: &Loaded) -> Result<AnalyticColumns, CliError> {
    let c = &loaded.config;
    let grid = &c.walk.t_grid;
    let tau = c.walk.tau;
    let gens = match &loaded.schedule {
        Some(GeneratorSchedule::Constant(l)) => Some(build(l, &loaded.set, tau)?),
        _ => None,
    };
    let mut cols = AnalyticColumns { t: grid.clone(), ..Default::default() };
    if let Some(g) = &gens {
        let needs_lifts = loaded.wants(Analysis::Analytic) || loaded.wants(Analysis::Variance);
        if needs_lifts {
            let fa = FidelityAnalytics::new(g)?;
            if loaded.wants(Analysis::Analytic) {
                cols.mean = Some(grid.iter().map(|&t| fa.mean(t)).collect::<Result<_, _>>()?);
            }
            if loaded.wants(Analysis::Variance) {
                cols.var = Some(grid.iter().map(|&t| fa.variance(t, VarMethod::Auto)).collect::<Result<_, _>>()?);
            }
        }
        if loaded.wants(Analysis::Drift) {
            cols.drift_mean = Some(grid.iter().map(|&t| drift_fidelity(g, t).map(|d| d.mean)).collect::<Result<_, _>>()?);
        }
    }
    if loaded.wants(Analysis::Bounds) {
        let dg = c.dilation.as_ref().map(|d| dilated_generators(d, &loaded.set, tau)).transpose()?;
        let inputs = BoundInputs {
            gens: gens.as_ref(),
            dilated: dg.as_ref(),
            l0_profile: None,
            dim: c.system.dim * c.system.dim,
            set_size: loaded.set.len(),
        };
        cols.bounds = Some(bounds(&inputs, tau, grid, NormKind::Spectral)?);
    }
    Ok(cols)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

pub fn csv_bytes(cols: &AnalyticColumns) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let other = |e: csv::Error| CliError::Other(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(other)?;
    let b = cols.bounds.as_ref().map(|r| &r.bounds);
    let pick = |s: Option<&Vec<f64>>, g: usize| s.map(|v| v[g]);
    for (g, &t) in cols.t.iter().enumerate() {
        let row = [
            cell(Some(t)),
            cell(cols.mean.as_ref().map(|m| m[g].clamped)),
            cell(cols.var.as_ref().map(|v| v[g].clamped)),
            cell(pick(cols.drift_mean.as_ref(), g)),
            cell(b.and_then(|b| pick(b.bound_extrinsic.as_ref(), g))),
            cell(b.and_then(|b| pick(b.bound_intrinsic.as_ref(), g))),
            cell(b.and_then(|b| pick(b.bound_dephasing.as_ref(), g))),
        ];
        w.write_record(&row).map_err(other)?;
    }
    w.into_inner().map_err(|e| CliError::Other(format!("csv: {e}")))
}

pub fn analytic(loaded: &Loaded, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let cols = analytic_columns(loaded)?;
    let csv = csv_bytes(&cols)?;
    let dir = out_dir(loaded, out)?;
    let formats = &loaded.config.output.formats;
    if formats.contains(&Format::Csv) {
        write(&dir.join("curves.csv"), &csv)?;
    }
    if formats.contains(&Format::Json) {
        #[derive(Serialize)]
        struct Summary<'a> {
            t_grid: &'a [f64],
            f_mean_analytic: &'a Option<Vec<Clamped>>,
            f_var_analytic: &'a Option<Vec<Clamped>>,
            f_mean_drift: &'a Option<Vec<f64>>,
        }
        let summary = Summary {
            t_grid: &cols.t,
            f_mean_analytic: &cols.mean,
            f_var_analytic: &cols.var,
            f_mean_drift: &cols.drift_mean,
        };
        write(&dir.join("summary.json"), &json(&summary))?;
        if let Some(b) = &cols.bounds {
            write(&dir.join("bounds.json"), &json(b))?;
        }
    }
    Ok(dir)
}

/// Loads every `*.curve.json` under `dir`, keeping only the runs named `run` when given.
pub fn load_curves(dir: &Path, run: Option<&str>) -> Result<Vec<FidelityCurve>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(format!("reading {}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".curve.json"))
        .collect();
    files.sort();
    let mut curves = Vec::new();
    for f in files {
        let bytes = fs::read(&f).map_err(CliError::io(format!("reading {}", f.display())))?;
        let curve: FidelityCurve = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
        curves.push(curve);
    }
    let names: std::collections::BTreeSet<&str> = curves.iter().map(|c| c.scheme.as_str()).collect();
    let chosen = match run {
        Some(r) => r.to_string(),
        None if names.len() <= 1 => return Ok(curves),
        None => {
            return Err(CliError::Config(format!(
                "{}: curves from several runs ({}); pick one with --run",
                dir.display(),
                names.into_iter().collect::<Vec<_>>().join(", ")
            )))
        }
    };
    Ok(curves.into_iter().filter(|c| c.scheme == chosen).collect())
}

pub fn classify_dir(dir: &Path, bounds_file: &Path, run: Option<&str>) -> Result<Verdict, CliError> {
    let curves = load_curves(dir, run)?;
    let bytes = fs::read(bounds_file).map_err(CliError::io(format!("reading {}", bounds_file.display())))?;
    let report: BoundReport =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", bounds_file.display())))?;
    Ok(classify(&curves, &report)?)
}

pub fn print_json<T: Serialize>(v: &T) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(&json(v)).map_err(CliError::io("writing stdout"))
}
