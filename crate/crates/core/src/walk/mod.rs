//! Random pulse walks: the physical walk and the diffusion and drift schemes.

pub mod kernel;
pub mod rng;

use serde::{Deserialize, Serialize};

use crate::decoupling::{averaged_generator, fluctuation_generators, DecouplingSet};
use crate::error::{DecoqError, Result};
use crate::fidelity::path_fidelity;
use crate::lindblad::GeneratorSchedule;
use crate::operator_space::{expm, is_density, sup_norm, NormKind, OperatorMatrix, SuperOp};
use crate::parallel::{map_indices, Execution};
use kernel::StepKernel;
use rng::{path_rng, IndexSource};

/// Largest `paths · |t_grid| · d²` stored by one ensemble.
pub const MAP_BUDGET: usize = 1 << 26;

/// Validity ratio above which time-dependent results are flagged.
pub const VALIDITY_WARNING: f64 = 0.1;

/// Largest `‖G‖·Δt` of one product-integral factor.
pub const SUBSTEP_NORM: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    Physical,
    Diffusion { n: u64 },
    Drift { n: u64 },
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::Physical => "physical",
            Scheme::Diffusion { .. } => "diffusion",
            Scheme::Drift { .. } => "drift",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub tau: f64,
    pub t_grid: Vec<f64>,
    pub scheme: Scheme,
    pub paths: usize,
    pub master_seed: u64,
    /// Defaults to true for the physical walk only.
    #[serde(default)]
    pub record_pulses: Option<bool>,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DecoqError::InvalidSpec(m));
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau: must be finite and > 0, got {}", self.tau));
        }
        if self.t_grid.is_empty() {
            return bad("t_grid: must be nonempty".into());
        }
        if self.t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad("t_grid: entries must be finite and >= 0".into());
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("t_grid: must be strictly increasing".into());
        }
        if self.paths == 0 {
            return bad("paths: must be >= 1".into());
        }
        if let Scheme::Diffusion { n } | Scheme::Drift { n } = self.scheme {
            if n < 100 {
                return bad(format!("scheme.n: must be >= 100, got {n}"));
            }
        }
        Ok(())
    }

    pub fn records_pulses(&self) -> bool {
        self.record_pulses.unwrap_or(matches!(self.scheme, Scheme::Physical))
    }

    /// Steps taken before each grid time: pulses (physical) or micro-steps of length `τ/n`.
    pub fn step_counts(&self) -> Vec<u64> {
        match self.scheme {
            Scheme::Physical => self.t_grid.iter().map(|&t| pulses_before(t, self.tau)).collect(),
            Scheme::Diffusion { n } | Scheme::Drift { n } => {
                self.t_grid.iter().map(|&t| (t * n as f64 / self.tau).round() as u64).collect()
            }
        }
    }
}

fn pulses_before(t: f64, tau: f64) -> u64 {
    (t / tau * (1.0 + 1e-12)).floor() as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub path_id: u64,
    pub pulse_indices: Option<Vec<u32>>,
    /// The evolution map at each grid time.
    pub maps: Vec<SuperOp>,
    /// `F_t` of each map.
    pub fidelities: Vec<f64>,
    /// Largest Hilbert–Schmidt operator norm among the stored maps.
    pub max_hs_norm: f64,
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub t_grid: Vec<f64>,
    pub tau: f64,
    pub scheme: Scheme,
    pub master_seed: u64,
    pub paths: Vec<WalkPath>,
    /// Largest `τ·‖dL/dt‖/‖L‖` met along the schedule, 0 for constant generators.
    pub max_validity_ratio: f64,
}

impl Ensemble {
    pub fn validity_warning(&self) -> bool {
        self.max_validity_ratio > VALIDITY_WARNING
    }
}

/// Left-endpoint product integral of `gen(L(s))` over `[a, b]`, split at table knots.
pub fn product_integral<F>(schedule: &GeneratorSchedule, a: f64, b: f64, gen: F) -> Result<SuperOp>
where
    F: Fn(&SuperOp) -> Result<SuperOp>,
{
    let dim_h = schedule.dim_h();
    let mut acc = SuperOp::identity(dim_h);
    if b <= a {
        return Ok(acc);
    }
    let mut cuts = vec![a];
    cuts.extend(schedule.knots_between(a, b));
    cuts.push(b);
    for w in cuts.windows(2) {
        let (mut s, end) = (w[0], w[1]);
        while s < end {
            let g = gen(&schedule.at(s)?)?;
            let norm = sup_norm(&g, NormKind::Spectral);
            let remaining = end - s;
            let dt = if norm > 0.0 { remaining.min(SUBSTEP_NORM / norm) } else { remaining };
            let substeps = (remaining / dt).ceil().max(1.0);
            let dt = remaining / substeps;
            let step = expm(&g, dt);
            if schedule.is_constant() {
                for _ in 0..substeps as u64 {
                    acc = step.compose(&acc);
                }
                break;
            }
            acc = step.compose(&acc);
            s = if substeps <= 1.0 { end } else { s + dt };
        }
    }
    Ok(acc)
}

/// `exp(τ·Ad(v_j)∘L∘Ad(v_j*))`, or its product integral over `[t_start, t_start + τ]`.
pub fn physical_step(schedule: &GeneratorSchedule, set: &DecouplingSet, j: usize, tau: f64, t_start: f64) -> Result<SuperOp> {
    let ad = set
        .ads()
        .get(j)
        .ok_or_else(|| DecoqError::InvalidSpec(format!("pulse index {j} outside the set of size {}", set.len())))?;
    match schedule {
        GeneratorSchedule::Constant(l) => Ok(expm(&ad.compose(l).compose(&ad.dagger()), tau)),
        GeneratorSchedule::Table { .. } => {
            let u = product_integral(schedule, t_start, t_start + tau, |l| Ok(l.clone()))?;
            Ok(ad.compose(&u).compose(&ad.dagger()))
        }
    }
}

/// One micro-step of the diffusion or drift scheme for fluctuation `L_j`.
pub fn scheme_step(l_bar: &SuperOp, l_j: &SuperOp, tau: f64, n: u64, scheme: Scheme) -> Result<SuperOp> {
    if n == 0 {
        return Err(DecoqError::InvalidSpec("n: must be >= 1".into()));
    }
    let nf = n as f64;
    let gen = match scheme {
        Scheme::Diffusion { .. } => {
            let sq = l_j.compose(l_j);
            l_j.scale(tau / nf.sqrt()).add(&l_bar.sub(&sq.scale(tau / 2.0)).scale(tau / nf))
        }
        Scheme::Drift { .. } => l_bar.add(l_j).scale(tau / nf),
        Scheme::Physical => return Err(DecoqError::InvalidSpec("scheme_step needs diffusion or drift".into())),
    };
    Ok(expm(&gen, 1.0))
}

fn scheme_steps(l: &SuperOp, set: &DecouplingSet, cfg: &WalkConfig) -> Result<Vec<SuperOp>> {
    match cfg.scheme {
        Scheme::Physical => (0..set.len())
            .map(|j| physical_step(&GeneratorSchedule::Constant(l.clone()), set, j, cfg.tau, 0.0))
            .collect(),
        Scheme::Diffusion { n } | Scheme::Drift { n } => {
            let lbar = averaged_generator(l, set)?;
            fluctuation_generators(l, set)?
                .iter()
                .map(|lj| scheme_step(&lbar, lj, cfg.tau, n, cfg.scheme))
                .collect()
        }
    }
}

pub fn simulate_ensemble(schedule: &GeneratorSchedule, set: &DecouplingSet, cfg: &WalkConfig) -> Result<Ensemble> {
    simulate_ensemble_with(schedule, set, cfg, Execution::default())
}

pub fn check_budget(cfg: &WalkConfig, dim_h: usize) -> Result<()> {
    let d = dim_h * dim_h;
    let size = cfg.paths.saturating_mul(cfg.t_grid.len()).saturating_mul(d * d);
    if size > MAP_BUDGET {
        return Err(DecoqError::Budget { what: "stored ensemble maps (paths·|t_grid|·d²)".into(), size, limit: MAP_BUDGET });
    }
    Ok(())
}

pub fn simulate_ensemble_with(
    schedule: &GeneratorSchedule,
    set: &DecouplingSet,
    cfg: &WalkConfig,
    exec: Execution,
) -> Result<Ensemble> {
    cfg.validate()?;
    let dim_h = schedule.dim_h();
    if dim_h != set.dim_h() {
        return Err(DecoqError::Dimension(format!("generator d_H = {dim_h}, decoupling set d_H = {}", set.dim_h())));
    }
    check_budget(cfg, dim_h)?;
    let (paths, ratio) = match schedule {
        GeneratorSchedule::Constant(l) => (constant_paths(l, set, cfg, exec)?, 0.0),
        GeneratorSchedule::Table { .. } => time_dependent_paths(schedule, set, cfg, exec)?,
    };
    Ok(Ensemble {
        t_grid: cfg.t_grid.clone(),
        tau: cfg.tau,
        scheme: cfg.scheme,
        master_seed: cfg.master_seed,
        paths,
        max_validity_ratio: ratio,
    })
}

fn finish_path(path_id: u64, maps: Vec<SuperOp>, pulse_indices: Option<Vec<u32>>) -> WalkPath {
    let fidelities = maps.iter().map(path_fidelity).collect();
    let max_hs_norm = maps.iter().map(|m| sup_norm(m, NormKind::Spectral)).fold(0.0, f64::max);
    WalkPath { path_id, pulse_indices, maps, fidelities, max_hs_norm }
}

/// Unconjugated evolution over the part of each grid interval after the last pulse.
fn tails(schedule: &GeneratorSchedule, cfg: &WalkConfig, counts: &[u64]) -> Result<Vec<SuperOp>> {
    cfg.t_grid
        .iter()
        .zip(counts)
        .map(|(&t, &n)| {
            let start = n as f64 * cfg.tau;
            let r = (t - start).max(0.0);
            if r <= 1e-12 * cfg.tau {
                return Ok(SuperOp::identity(schedule.dim_h()));
            }
            match schedule {
                GeneratorSchedule::Constant(l) => Ok(expm(l, r)),
                GeneratorSchedule::Table { .. } => product_integral(schedule, start, t, |l| Ok(l.clone())),
            }
        })
        .collect()
}

fn constant_paths(l: &SuperOp, set: &DecouplingSet, cfg: &WalkConfig, exec: Execution) -> Result<Vec<WalkPath>> {
    let steps = scheme_steps(l, set, cfg)?;
    let kernel = StepKernel::new(&steps);
    let counts = cfg.step_counts();
    let tails = match cfg.scheme {
        Scheme::Physical => Some(tails(&GeneratorSchedule::Constant(l.clone()), cfg, &counts)?),
        _ => None,
    };
    let dim_h = l.dim_h();
    let record = cfg.records_pulses();
    Ok(map_indices(cfg.paths, exec, |p| {
        let mut src = IndexSource::new(path_rng(cfg.master_seed, p as u64), set.len());
        let mut rec = record.then(Vec::new);
        let mut maps = kernel.run(dim_h, &mut src, &counts, rec.as_mut());
        if let Some(tails) = &tails {
            for (m, tail) in maps.iter_mut().zip(tails) {
                *m = tail.compose(m);
            }
        }
        finish_path(p as u64, maps, rec)
    }))
}

fn time_dependent_paths(
    schedule: &GeneratorSchedule,
    set: &DecouplingSet,
    cfg: &WalkConfig,
    exec: Execution,
) -> Result<(Vec<WalkPath>, f64)> {
    let t_max = *cfg.t_grid.last().unwrap();
    let counts = cfg.step_counts();
    let per_interval = match cfg.scheme {
        Scheme::Physical => 1,
        Scheme::Diffusion { n } | Scheme::Drift { n } => n,
    };
    let total = *counts.last().unwrap();
    let intervals = total.div_ceil(per_interval) as usize;
    let mut ratio: f64 = 0.0;
    let mut sets: Vec<Vec<SuperOp>> = Vec::with_capacity(intervals);
    for i in 0..intervals {
        let start = (i as f64 * cfg.tau).min(t_max);
        let sampled = schedule.sample(start)?;
        ratio = ratio.max(cfg.tau * sampled.derivative_ratio);
        let steps = match cfg.scheme {
            Scheme::Physical => {
                let end = ((i + 1) as f64 * cfg.tau).min(schedule_end(schedule));
                let u = product_integral(schedule, start, end.max(start), |l| Ok(l.clone()))?;
                set.ads().iter().map(|a| a.compose(&u).compose(&a.dagger())).collect()
            }
            _ => scheme_steps(&sampled.op, set, cfg)?,
        };
        sets.push(steps);
    }
    let tails = match cfg.scheme {
        Scheme::Physical => Some(tails(schedule, cfg, &counts)?),
        _ => None,
    };
    let dim_h = schedule.dim_h();
    let record = cfg.records_pulses();
    let paths = map_indices(cfg.paths, exec, |p| {
        let mut src = IndexSource::new(path_rng(cfg.master_seed, p as u64), set.len());
        let mut rec = record.then(Vec::new);
        let mut state = SuperOp::identity(dim_h);
        let mut done = 0u64;
        let mut maps = Vec::with_capacity(counts.len());
        for (g, &target) in counts.iter().enumerate() {
            while done < target {
                let j = src.next_index();
                if let Some(r) = rec.as_mut() {
                    r.push(j as u32);
                }
                state = sets[(done / per_interval) as usize][j].compose(&state);
                done += 1;
            }
            maps.push(match &tails {
                Some(t) => t[g].compose(&state),
                None => state.clone(),
            });
        }
        finish_path(p as u64, maps, rec)
    });
    Ok((paths, ratio))
}

fn schedule_end(schedule: &GeneratorSchedule) -> f64 {
    match schedule {
        GeneratorSchedule::Constant(_) => f64::INFINITY,
        GeneratorSchedule::Table { times, .. } => *times.last().unwrap(),
    }
}

/// `ρ_t = map_t(ρ₀)` at every grid time.
pub fn apply_to_state(path: &WalkPath, rho0: &OperatorMatrix) -> Result<Vec<OperatorMatrix>> {
    if !is_density(rho0, 1e-9) {
        return Err(DecoqError::InvalidSpec("rho0: not a density matrix".into()));
    }
    Ok(path.maps.iter().map(|m| m.apply(rho0)).collect())
}
