//! Gate fidelity of walk maps: per-path values, analytic moments, Monte-Carlo curves.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DecoqError, Result};
use crate::limit::{lift_mixed_generators, LimitGenerators, MixedKind};
use crate::operator_space::{expm, expm_action, hs_inner, CVector, LiftedOp, OperatorMatrix, SuperOp, C64, ONE, ZERO};
use crate::walk::WalkPath;

/// Slack allowed on analytic fidelities outside `[0, 1]` and on negative variances.
pub const FIDELITY_EPS: f64 = 1e-6;
pub const VARIANCE_EPS: f64 = 1e-9;

/// Lifted generators at or below this dimension are exponentiated densely.
const DENSE_EXP_LIMIT: usize = 1024;

/// `F = 1 − ‖id − α‖²_F / d`.
pub fn path_fidelity(map: &SuperOp) -> f64 {
    let d = map.dim();
    let mut dist = 0.0;
    for (c, col) in map.matrix().column_iter().enumerate() {
        for (r, z) in col.iter().enumerate() {
            let delta = if r == c { ONE } else { ZERO };
            dist += (delta - z).norm_sqr();
        }
    }
    1.0 - dist / d as f64
}

/// `1 − (1/d) Σ_{k,l} |⟨e_l, (id − α)(e_k)⟩|²` in the given orthonormal basis of `B(H)`.
pub fn path_fidelity_in_basis(map: &SuperOp, basis: &[OperatorMatrix]) -> Result<f64> {
    if basis.len() != map.dim() {
        return Err(DecoqError::Dimension(format!("basis has {} elements, need {}", basis.len(), map.dim())));
    }
    let mut sum = 0.0;
    for ek in basis {
        let diff = ek - map.apply(ek);
        for el in basis {
            sum += hs_inner(el, &diff).norm_sqr();
        }
    }
    Ok(1.0 - sum / map.dim() as f64)
}

/// An analytic value together with its clamp to the admissible range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clamped {
    pub raw: f64,
    pub clamped: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarMethod {
    /// Dense exponentials when small enough, exponential actions otherwise.
    #[default]
    Auto,
    Dense,
    MatrixFree,
}

/// The lifted generators needed by the analytic mean and variance, built once per `L̂`.
pub struct FidelityAnalytics {
    dim: usize,
    l_hat: SuperOp,
    check2: LiftedOp,
    c11: LiftedOp,
    c12: LiftedOp,
    c31: LiftedOp,
    c32: LiftedOp,
    check4: LiftedOp,
}

impl FidelityAnalytics {
    pub fn new(gens: &LimitGenerators) -> Result<Self> {
        Ok(FidelityAnalytics {
            dim: gens.dim(),
            l_hat: gens.l_hat.clone(),
            check2: lift_mixed_generators(gens, MixedKind::Check2)?,
            c11: lift_mixed_generators(gens, MixedKind::C11)?,
            c12: lift_mixed_generators(gens, MixedKind::C12)?,
            c31: lift_mixed_generators(gens, MixedKind::C31)?,
            c32: lift_mixed_generators(gens, MixedKind::C32)?,
            check4: lift_mixed_generators(gens, MixedKind::Check4)?,
        })
    }

    /// `X̄ = d·(1 − E[F_t]) = d − 2 Re tr e^{tL̂} + tr(Φ e^{tĽ⁽²⁾})`.
    fn mean_defect(&self, t: f64, method: VarMethod) -> Result<f64> {
        let d = self.dim as f64;
        let tr1 = expm(&self.l_hat, t).trace();
        let tr2 = perm_trace(&self.check2, t, method, |i| swap_slots(i, self.dim, 2, 0, 1))?;
        Ok(d - 2.0 * tr1.re + tr2.re)
    }

    pub fn mean(&self, t: f64) -> Result<Clamped> {
        check_time(t)?;
        let raw = 1.0 - self.mean_defect(t, VarMethod::Auto)? / self.dim as f64;
        Ok(Clamped { raw, clamped: raw.clamp(0.0, 1.0) })
    }

    pub fn variance(&self, t: f64, method: VarMethod) -> Result<Clamped> {
        check_time(t)?;
        let d = self.dim;
        let df = d as f64;
        let tr1 = expm(&self.l_hat, t).trace();
        let phi = |i| swap_slots(i, d, 2, 0, 1);
        let tr2 = perm_trace(&self.check2, t, method, phi)?;
        let ident = |i| i;
        let re_pairs = perm_trace(&self.c11, t, method, ident)?
            + perm_trace(&self.c12, t, method, ident)?
            + perm_trace(&self.c12.dagger(), t, method, ident)?
            + perm_trace(&self.c11.dagger(), t, method, ident)?;
        let one_phi = |i| swap_slots(i, d, 3, 1, 2);
        let cross = perm_trace(&self.c31, t, method, one_phi)? + perm_trace(&self.c32, t, method, one_phi)?;
        let pi = |i| pair_swap(i, d);
        let quartic = perm_trace(&self.check4, t, method, pi)?;
        let second = df * df - 4.0 * df * tr1.re + 2.0 * df * tr2.re + re_pairs.re - 2.0 * cross.re + quartic.re;
        let first = df - 2.0 * tr1.re + tr2.re;
        let raw = second / (df * df) - (first / df).powi(2);
        if !raw.is_finite() {
            return Err(DecoqError::NonFinite(format!("fidelity variance at t = {t}")));
        }
        Ok(Clamped { raw, clamped: raw.max(0.0) })
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(DecoqError::InvalidSpec(format!("t: must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Index of the tensor basis vector with slots `a` and `b` exchanged; slot 0 is most significant.
fn swap_slots(i: usize, d: usize, arity: usize, a: usize, b: usize) -> usize {
    let digit = |s: usize| (i / d.pow((arity - 1 - s) as u32)) % d;
    let (da, db) = (digit(a), digit(b));
    let wa = d.pow((arity - 1 - a) as u32);
    let wb = d.pow((arity - 1 - b) as u32);
    i - da * wa - db * wb + db * wa + da * wb
}

/// `a⊗b⊗c⊗e ↦ c⊗e⊗a⊗b`.
fn pair_swap(i: usize, d: usize) -> usize {
    let dd = d * d;
    (i % dd) * dd + i / dd
}

/// `tr(P·e^{tM})` for the involutive basis permutation `P e_b = e_{π(b)}`.
fn perm_trace(m: &LiftedOp, t: f64, method: VarMethod, pi: impl Fn(usize) -> usize) -> Result<C64> {
    let n = m.dim();
    let dense = match method {
        VarMethod::Dense => true,
        VarMethod::MatrixFree => false,
        VarMethod::Auto => m.is_dense() && n <= DENSE_EXP_LIMIT,
    };
    let mut acc = ZERO;
    if dense {
        let e: DMatrix<C64> = m.dense_exp(t)?;
        for b in 0..n {
            acc += e[(pi(b), b)];
        }
    } else {
        let mut basis = CVector::zeros(n);
        for b in 0..n {
            basis[b] = ONE;
            acc += expm_action(m, t, &basis)[pi(b)];
            basis[b] = ZERO;
        }
    }
    Ok(acc)
}

pub fn analytic_mean_fidelity(gens: &LimitGenerators, t: f64) -> Result<Clamped> {
    FidelityAnalytics::new(gens)?.mean(t)
}

pub fn analytic_var_fidelity(gens: &LimitGenerators, t: f64) -> Result<Clamped> {
    FidelityAnalytics::new(gens)?.variance(t, VarMethod::Auto)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftFidelity {
    pub mean: f64,
    pub var: f64,
}

pub fn drift_fidelity(gens: &LimitGenerators, t: f64) -> Result<DriftFidelity> {
    check_time(t)?;
    Ok(DriftFidelity { mean: path_fidelity(&expm(&gens.l_bar, t)), var: 0.0 })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveMetadata {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityCurve {
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub mc_mean: Vec<f64>,
    #[serde(default)]
    pub mc_stderr: Vec<f64>,
    #[serde(default)]
    pub mc_var: Vec<f64>,
    /// Standard error of `mc_var`, from the fourth central moment.
    #[serde(default)]
    pub mc_var_stderr: Vec<f64>,
    #[serde(default)]
    pub mc_paths: usize,
    #[serde(default)]
    pub analytic_mean: Option<Vec<f64>>,
    #[serde(default)]
    pub analytic_var: Option<Vec<f64>>,
    #[serde(default)]
    pub bound_extrinsic: Option<Vec<f64>>,
    #[serde(default)]
    pub bound_intrinsic: Option<Vec<f64>>,
    pub scheme: String,
    #[serde(default)]
    pub metadata: CurveMetadata,
}

impl FidelityCurve {
    pub fn validate(&self) -> Result<()> {
        let n = self.t_grid.len();
        let bad = |m: String| Err(DecoqError::InvalidSpec(m));
        if n == 0 {
            return bad("fidelity curve: empty t_grid".into());
        }
        for (name, v) in [("mc_mean", &self.mc_mean), ("mc_stderr", &self.mc_stderr)] {
            if !v.is_empty() && v.len() != n {
                return bad(format!("fidelity curve: {name} has {} entries, t_grid has {n}", v.len()));
            }
        }
        for (name, v) in [("analytic_mean", &self.analytic_mean), ("analytic_var", &self.analytic_var)] {
            if let Some(v) = v {
                if v.len() != n {
                    return bad(format!("fidelity curve: {name} has {} entries, t_grid has {n}", v.len()));
                }
            }
        }
        if let Some(m) = &self.analytic_mean {
            if m.iter().any(|f| !(-FIDELITY_EPS..=1.0 + FIDELITY_EPS).contains(f)) {
                return bad("fidelity curve: analytic_mean outside [0, 1]".into());
            }
        }
        if let Some(v) = &self.analytic_var {
            if v.iter().any(|x| !(*x >= -VARIANCE_EPS)) {
                return bad("fidelity curve: analytic_var negative".into());
            }
        }
        Ok(())
    }
}

/// Per-time sample statistics of the path fidelities.
pub fn mc_fidelity(paths: &[WalkPath], t_grid: &[f64], scheme: &str) -> Result<FidelityCurve> {
    if paths.is_empty() {
        return Err(DecoqError::InvalidSpec("ensemble: no paths".into()));
    }
    let nt = t_grid.len();
    if let Some(p) = paths.iter().find(|p| p.fidelities.len() != nt) {
        return Err(DecoqError::Dimension(format!(
            "path {} has {} fidelities, t_grid has {nt}",
            p.path_id,
            p.fidelities.len()
        )));
    }
    let n = paths.len() as f64;
    let mut curve = FidelityCurve {
        t_grid: t_grid.to_vec(),
        mc_paths: paths.len(),
        scheme: scheme.to_string(),
        ..Default::default()
    };
    for g in 0..nt {
        let mean = paths.iter().map(|p| p.fidelities[g]).sum::<f64>() / n;
        let (mut m2, mut m4) = (0.0, 0.0);
        for p in paths {
            let dev = p.fidelities[g] - mean;
            m2 += dev * dev;
            m4 += dev.powi(4);
        }
        let var = if paths.len() > 1 { m2 / (n - 1.0) } else { 0.0 };
        let m4 = m4 / n;
        let var_var = if paths.len() > 3 { (m4 - var * var * (n - 3.0) / (n - 1.0)) / n } else { 0.0 };
        curve.mc_mean.push(mean);
        curve.mc_stderr.push((var / n).sqrt());
        curve.mc_var.push(var);
        curve.mc_var_stderr.push(var_var.max(0.0).sqrt());
    }
    Ok(curve)
}

/// Chebyshev interval `mean ± sqrt(var / (1 − confidence))`, clipped to `[0, 1]`.
pub fn chebyshev_envelope(mean: f64, var: f64, confidence: f64) -> Result<(f64, f64)> {
    if !(var >= 0.0) {
        return Err(DecoqError::InvalidSpec(format!("var: must be >= 0, got {var}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(DecoqError::InvalidSpec(format!("confidence: must lie in (0, 1), got {confidence}")));
    }
    let half = (var / (1.0 - confidence)).sqrt();
    Ok(((mean - half).clamp(0.0, 1.0), (mean + half).clamp(0.0, 1.0)))
}
