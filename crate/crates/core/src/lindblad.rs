//! Lindblad generators: input forms, compilation, CPT checks, classification.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DecoqError, Result};
use crate::operator_space::{
    ad_unchecked, expm, identity, is_hermitian, matrix_unit, pauli, sandwich, sup_norm, NormKind, OperatorMatrix,
    SuperOp, C64, I, STRUCTURE_TOL,
};
use crate::serde_matrix::CMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jump {
    pub operator: CMatrix,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// GKLS with jump `|0⟩⟨1|` at rate `4γ`.
    AmplitudeDamping,
    /// `γ(σ₃xσ₃ − x)`.
    Dephasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LindbladForm {
    Hamiltonian {
        h: CMatrix,
    },
    Gkls {
        #[serde(default)]
        h: Option<CMatrix>,
        jumps: Vec<Jump>,
    },
    KrausCe {
        kraus: Vec<CMatrix>,
        drift: CMatrix,
    },
    Builtin {
        name: Builtin,
        gamma: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeTable {
    pub times: Vec<f64>,
    pub forms: Vec<LindbladForm>,
}

/// Either a constant `form` or a sampled `time_dependence` table, never both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<LindbladForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_dependence: Option<TimeTable>,
}

impl LindbladSpec {
    pub fn constant(form: LindbladForm) -> Self {
        LindbladSpec { form: Some(form), time_dependence: None }
    }

    pub fn table(times: Vec<f64>, forms: Vec<LindbladForm>) -> Self {
        LindbladSpec { form: None, time_dependence: Some(TimeTable { times, forms }) }
    }

    pub fn amplitude_damping(gamma: f64) -> Self {
        LindbladSpec::constant(LindbladForm::Builtin { name: Builtin::AmplitudeDamping, gamma })
    }
}

/// A compiled generator: constant, or piecewise linear in `t` between table knots.
#[derive(Clone, Debug)]
pub enum GeneratorSchedule {
    Constant(SuperOp),
    Table { times: Vec<f64>, ops: Vec<SuperOp> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unitarity {
    PurelyUnitary,
    PurelyDephasing,
    General,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CptViolation {
    TraceAnnihilation(f64),
    NotHermiticityPreserving(f64),
    ChoiNegative(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CptCheck {
    pub ok: bool,
    pub witness: Option<CptViolation>,
}

/// A sampled generator with the smoothness ratio `‖dL/dt‖ / ‖L(t)‖`.
#[derive(Clone, Debug)]
pub struct Sampled {
    pub op: SuperOp,
    pub derivative_ratio: f64,
}

impl GeneratorSchedule {
    pub fn dim_h(&self) -> usize {
        match self {
            GeneratorSchedule::Constant(l) => l.dim_h(),
            GeneratorSchedule::Table { ops, .. } => ops[0].dim_h(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, GeneratorSchedule::Constant(_))
    }

    pub fn at(&self, t: f64) -> Result<SuperOp> {
        Ok(self.sample(t)?.op)
    }

    pub fn sample(&self, t: f64) -> Result<Sampled> {
        match self {
            GeneratorSchedule::Constant(l) => Ok(Sampled { op: l.clone(), derivative_ratio: 0.0 }),
            GeneratorSchedule::Table { times, ops } => {
                let (t0, t1) = (times[0], *times.last().unwrap());
                if !(t >= t0 && t <= t1) {
                    return Err(DecoqError::InvalidSpec(format!("t = {t} outside table domain [{t0}, {t1}]")));
                }
                if times.len() == 1 {
                    return Ok(Sampled { op: ops[0].clone(), derivative_ratio: 0.0 });
                }
                // last knot with times[i] <= t, so duplicated knots switch to the right value
                let mut i = times.partition_point(|&s| s <= t).saturating_sub(1);
                if i + 1 >= times.len() {
                    i = times.len() - 2;
                }
                let (a, b) = (times[i], times[i + 1]);
                let w = if b > a { ((t - a) / (b - a)).clamp(0.0, 1.0) } else { 1.0 };
                let op = ops[i].scale(1.0 - w).add(&ops[i + 1].scale(w));
                let slope = if b > a { sup_norm(&ops[i + 1].sub(&ops[i]), NormKind::Spectral) / (b - a) } else { 0.0 };
                let n = sup_norm(&op, NormKind::Spectral);
                let derivative_ratio = if slope == 0.0 {
                    0.0
                } else if n > 0.0 {
                    slope / n
                } else {
                    f64::INFINITY
                };
                Ok(Sampled { op, derivative_ratio })
            }
        }
    }

    /// Knot times (for a table) that fall strictly inside `(a, b)`.
    pub fn knots_between(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            GeneratorSchedule::Constant(_) => Vec::new(),
            GeneratorSchedule::Table { times, .. } => {
                let mut k: Vec<f64> = times.iter().copied().filter(|&s| s > a && s < b).collect();
                k.dedup();
                k
            }
        }
    }
}

/// `τ · ‖dL/dt‖ / ‖L(t)‖` for a schedule.
pub fn sample_time_dependent(schedule: &GeneratorSchedule, t: f64, tau: f64) -> Result<(SuperOp, f64)> {
    let s = schedule.sample(t)?;
    Ok((s.op, tau * s.derivative_ratio))
}

fn form_dim(form: &LindbladForm) -> usize {
    match form {
        LindbladForm::Hamiltonian { h } => h.0.nrows(),
        LindbladForm::Gkls { h, jumps } => h
            .as_ref()
            .map(|m| m.0.nrows())
            .or_else(|| jumps.first().map(|j| j.operator.0.nrows()))
            .unwrap_or(1),
        LindbladForm::KrausCe { drift, .. } => drift.0.nrows(),
        LindbladForm::Builtin { .. } => 2,
    }
}

fn check_hamiltonian(h: &OperatorMatrix, field: &str) -> Result<()> {
    if !is_hermitian(h, STRUCTURE_TOL) {
        return Err(DecoqError::NotHermitian(format!("{field}: hamiltonian is not hermitian")));
    }
    Ok(())
}

fn check_dim(m: &OperatorMatrix, d: usize, field: &str) -> Result<()> {
    if m.nrows() != d {
        return Err(DecoqError::Dimension(format!("{field}: expected {d}x{d}, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// `c x c* − ½{c*c, x}`.
pub fn dissipator(c: &OperatorMatrix) -> SuperOp {
    let d = c.nrows();
    let id = identity(d);
    let cc = c.adjoint() * c;
    sandwich(c, &c.adjoint()).sub(&sandwich(&cc, &id).add(&sandwich(&id, &cc)).scale(0.5))
}

pub fn compile_form(form: &LindbladForm) -> Result<SuperOp> {
    let d = form_dim(form);
    match form {
        LindbladForm::Hamiltonian { h } => {
            check_hamiltonian(&h.0, "h")?;
            Ok(ad_unchecked(&h.0).scale_c(I))
        }
        LindbladForm::Gkls { h, jumps } => {
            let mut l = SuperOp::zero(d);
            if let Some(h) = h {
                check_hamiltonian(&h.0, "h")?;
                l = ad_unchecked(&h.0).scale_c(I);
            }
            for (i, j) in jumps.iter().enumerate() {
                check_dim(&j.operator.0, d, &format!("jumps[{i}].operator"))?;
                if !(j.rate >= 0.0) || !j.rate.is_finite() {
                    return Err(DecoqError::InvalidSpec(format!("jumps[{i}].rate: must be finite and >= 0, got {}", j.rate)));
                }
                l = l.add(&dissipator(&j.operator.0).scale(j.rate));
            }
            Ok(l)
        }
        LindbladForm::KrausCe { kraus, drift } => {
            let id = identity(d);
            let mut l = sandwich(&drift.0, &id).add(&sandwich(&id, &drift.0.adjoint()));
            for (i, b) in kraus.iter().enumerate() {
                check_dim(&b.0, d, &format!("kraus[{i}]"))?;
                l = l.add(&sandwich(&b.0, &b.0.adjoint()));
            }
            let resid = trace_annihilation_residual(&l);
            if resid > 1e-9 * sup_norm(&l, NormKind::Spectral).max(1.0) {
                return Err(DecoqError::InvalidSpec(format!(
                    "drift: a + a* must equal -Σ b*b for trace preservation (residual {resid:.3e})"
                )));
            }
            Ok(l)
        }
        LindbladForm::Builtin { name, gamma } => {
            if !(*gamma >= 0.0) || !gamma.is_finite() {
                return Err(DecoqError::InvalidSpec(format!("gamma: must be finite and >= 0, got {gamma}")));
            }
            Ok(match name {
                Builtin::AmplitudeDamping => dissipator(&lowering()).scale(4.0 * gamma),
                Builtin::Dephasing => sandwich(&pauli(3), &pauli(3)).sub(&SuperOp::identity(2)).scale(*gamma),
            })
        }
    }
}

/// The amplitude-damping jump `|0⟩⟨1|`.
pub fn lowering() -> OperatorMatrix {
    matrix_unit(2, 0, 1)
}

pub fn compile(spec: &LindbladSpec) -> Result<SuperOp> {
    match (&spec.form, &spec.time_dependence) {
        (Some(f), None) => compile_form(f),
        (None, Some(_)) => Err(DecoqError::InvalidSpec(
            "time_dependence: time-dependent generator has no single compiled form; use compile_schedule".into(),
        )),
        _ => Err(DecoqError::InvalidSpec("exactly one of form / time_dependence must be given".into())),
    }
}

pub fn compile_schedule(spec: &LindbladSpec) -> Result<GeneratorSchedule> {
    match (&spec.form, &spec.time_dependence) {
        (Some(f), None) => Ok(GeneratorSchedule::Constant(compile_form(f)?)),
        (None, Some(table)) => {
            if table.times.is_empty() || table.times.len() != table.forms.len() {
                return Err(DecoqError::InvalidSpec(format!(
                    "time_dependence: {} times for {} forms",
                    table.times.len(),
                    table.forms.len()
                )));
            }
            if table.times.iter().any(|t| !t.is_finite()) || table.times.windows(2).any(|w| w[1] < w[0]) {
                return Err(DecoqError::InvalidSpec("time_dependence.times: must be finite and nondecreasing".into()));
            }
            if table.times.windows(3).any(|w| w[0] == w[2]) {
                return Err(DecoqError::InvalidSpec("time_dependence.times: a knot may appear at most twice".into()));
            }
            let ops = table
                .forms
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    compile_form(f).map_err(|e| DecoqError::InvalidSpec(format!("time_dependence.forms[{i}]: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if ops.iter().any(|o| o.dim_h() != ops[0].dim_h()) {
                return Err(DecoqError::Dimension("time_dependence.forms: mixed dimensions".into()));
            }
            Ok(GeneratorSchedule::Table { times: table.times.clone(), ops })
        }
        _ => Err(DecoqError::InvalidSpec("exactly one of form / time_dependence must be given".into())),
    }
}

/// `max |tr(L(E_kl))|` over matrix units.
pub fn trace_annihilation_residual(l: &SuperOp) -> f64 {
    let d = l.dim_h();
    let m = l.matrix();
    (0..d * d)
        .map(|c| (0..d).map(|k| m[(k * d + k, c)]).sum::<C64>().norm())
        .fold(0.0, f64::max)
}

/// Choi matrix `Σ_kl E_kl ⊗ Φ(E_kl)`.
pub fn choi(map: &SuperOp) -> DMatrix<C64> {
    let d = map.dim_h();
    let mut c = DMatrix::zeros(d * d, d * d);
    for k in 0..d {
        for l in 0..d {
            let img = map.apply(&matrix_unit(d, k, l));
            c.view_mut((k * d, l * d), (d, d)).copy_from(&img);
        }
    }
    c
}

pub fn is_cpt_generator(l: &SuperOp) -> CptCheck {
    let norm = sup_norm(l, NormKind::Spectral);
    let ta = trace_annihilation_residual(l);
    if ta > 1e-10 * norm.max(1.0) {
        return CptCheck { ok: false, witness: Some(CptViolation::TraceAnnihilation(ta)) };
    }
    let t = 1.0 / norm.max(1.0);
    let c = choi(&expm(l, t));
    let asym = (&c - c.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if asym > 1e-9 {
        return CptCheck { ok: false, witness: Some(CptViolation::NotHermiticityPreserving(asym)) };
    }
    let min = crate::operator_space::hermitian_part(&c).symmetric_eigenvalues().min();
    if min < -1e-9 {
        return CptCheck { ok: false, witness: Some(CptViolation::ChoiNegative(min)) };
    }
    CptCheck { ok: true, witness: None }
}

pub fn classify_unitarity(l: &SuperOp) -> Unitarity {
    let thr = 1e-9 * sup_norm(l, NormKind::Spectral).max(1.0);
    let ld = l.dagger();
    if sup_norm(&l.add(&ld), NormKind::Spectral) <= thr {
        Unitarity::PurelyUnitary
    } else if sup_norm(&l.sub(&ld), NormKind::Spectral) <= thr {
        Unitarity::PurelyDephasing
    } else {
        Unitarity::General
    }
}
