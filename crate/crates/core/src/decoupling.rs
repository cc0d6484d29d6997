//! Decoupling sets, the averaged generator `L̄` and the fluctuations `L_j`.

use serde::{Deserialize, Serialize};

use crate::error::{DecoqError, Result};
use crate::operator_space::{
    conj_unchecked, identity, is_unitary, kron, matrix_unit, max_abs_diff, pauli, sup_norm, NormKind, OperatorMatrix,
    SuperOp, C64, STRUCTURE_TOL,
};
use crate::serde_matrix::CMatrix;

const SET_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecouplingSpec {
    Pauli { qubits: usize },
    Explicit { unitaries: Vec<CMatrix> },
}

#[derive(Clone, Debug)]
pub struct DecouplingSet {
    dim_h: usize,
    unitaries: Vec<OperatorMatrix>,
    ads: Vec<SuperOp>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SetViolation {
    Empty,
    FirstNotIdentity(f64),
    NotUnitary { index: usize, residual: f64 },
    NotClosed { j: usize, k: usize, residual: f64 },
    Averaging { k: usize, l: usize, residual: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetReport {
    pub ok: bool,
    pub violation: Option<SetViolation>,
}

impl DecouplingSet {
    pub fn from_spec(spec: &DecouplingSpec) -> Result<Self> {
        match spec {
            DecouplingSpec::Pauli { qubits } => pauli_set(*qubits),
            DecouplingSpec::Explicit { unitaries } => {
                DecouplingSet::new(unitaries.iter().map(|m| m.0.clone()).collect())
            }
        }
    }

    /// Validates the candidate and caches the conjugation superoperators.
    pub fn new(unitaries: Vec<OperatorMatrix>) -> Result<Self> {
        let report = validate(&unitaries);
        if let Some(v) = report.violation {
            return Err(DecoqError::NotDecoupling(format!("{v:?}")));
        }
        let ads = unitaries.iter().map(conj_unchecked).collect();
        Ok(DecouplingSet { dim_h: unitaries[0].nrows(), unitaries, ads })
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn len(&self) -> usize {
        self.unitaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unitaries.is_empty()
    }

    pub fn unitaries(&self) -> &[OperatorMatrix] {
        &self.unitaries
    }

    /// `Ad(v_j)` for every member.
    pub fn ads(&self) -> &[SuperOp] {
        &self.ads
    }

    /// `v_j ⊗ 1` on `H ⊗ H₁`, still a decoupling set for the system factor only.
    pub fn lifted_unitaries(&self, d_h1: usize) -> Vec<OperatorMatrix> {
        let id = identity(d_h1);
        self.unitaries.iter().map(|v| kron(v, &id)).collect()
    }
}

/// The `4ⁿ` tensor products of `{1, σ₁, σ₂, σ₃}`, identity first.
pub fn pauli_set(n_qubits: usize) -> Result<DecouplingSet> {
    if n_qubits == 0 {
        return Err(DecoqError::InvalidSpec("qubits: must be >= 1".into()));
    }
    let mut ops = vec![identity(1)];
    for _ in 0..n_qubits {
        ops = ops.iter().flat_map(|a| (0..4).map(move |i| kron(a, &pauli(i)))).collect();
    }
    DecouplingSet::new(ops)
}

pub fn validate(unitaries: &[OperatorMatrix]) -> SetReport {
    let fail = |v| SetReport { ok: false, violation: Some(v) };
    let Some(first) = unitaries.first() else {
        return fail(SetViolation::Empty);
    };
    let d = first.nrows();
    for (i, v) in unitaries.iter().enumerate() {
        if !v.is_square() || v.nrows() != d || !is_unitary(v, STRUCTURE_TOL) {
            let residual = if v.shape() == (d, d) { max_abs_diff(&(v * v.adjoint()), &identity(d)) } else { f64::INFINITY };
            return fail(SetViolation::NotUnitary { index: i, residual });
        }
    }
    let r0 = max_abs_diff(first, &identity(d));
    if r0 > 0.0 {
        return fail(SetViolation::FirstNotIdentity(r0));
    }
    let n = unitaries.len() as f64;
    for k in 0..d {
        for l in 0..d {
            let e = matrix_unit(d, k, l);
            let mut avg = OperatorMatrix::zeros(d, d);
            for v in unitaries {
                avg += v * &e * v.adjoint();
            }
            avg /= C64::new(n, 0.0);
            let target = identity(d) * (e.trace() / C64::new(d as f64, 0.0));
            let residual = max_abs_diff(&avg, &target);
            if residual > SET_TOL {
                return fail(SetViolation::Averaging { k, l, residual });
            }
        }
    }
    let ads: Vec<SuperOp> = unitaries.iter().map(conj_unchecked).collect();
    for j in 0..ads.len() {
        for k in 0..ads.len() {
            let prod = ads[j].compose(&ads[k]);
            let residual = ads.iter().map(|a| a.max_abs_diff(&prod)).fold(f64::INFINITY, f64::min);
            if residual > SET_TOL {
                return fail(SetViolation::NotClosed { j, k, residual });
            }
        }
    }
    SetReport { ok: true, violation: None }
}

fn check_dims(l: &SuperOp, set: &DecouplingSet) -> Result<()> {
    if l.dim_h() != set.dim_h() {
        return Err(DecoqError::Dimension(format!(
            "generator on d_H = {} with decoupling set on d_H = {}",
            l.dim_h(),
            set.dim_h()
        )));
    }
    Ok(())
}

/// `L̄ = (1/|J|) Σ_j Ad(v_j) L Ad(v_j*)`.
pub fn averaged_generator(l: &SuperOp, set: &DecouplingSet) -> Result<SuperOp> {
    check_dims(l, set)?;
    let mut acc = SuperOp::zero(l.dim_h());
    for a in set.ads() {
        acc = acc.add(&a.compose(l).compose(&a.dagger()));
    }
    Ok(acc.scale(1.0 / set.len() as f64))
}

/// `L_j = Ad(v_j)(L − L̄)Ad(v_j*)`, indexed like the set.
pub fn fluctuation_generators(l: &SuperOp, set: &DecouplingSet) -> Result<Vec<SuperOp>> {
    let diff = l.sub(&averaged_generator(l, set)?);
    Ok(set.ads().iter().map(|a| a.compose(&diff).compose(&a.dagger())).collect())
}

pub fn decoupling_condition_holds(l: &SuperOp, set: &DecouplingSet) -> Result<bool> {
    let lbar = averaged_generator(l, set)?;
    let scale = sup_norm(l, NormKind::Spectral).max(1.0);
    Ok(sup_norm(&lbar, NormKind::Spectral) <= 1e-9 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{classify_unitarity, compile, compile_form, Jump, LindbladForm, LindbladSpec, Unitarity};
    use crate::operator_space::{ad_of, I};
    use crate::random::{random_hermitian, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pauli_sizes_and_self_adjoint() {
        assert_eq!(pauli_set(1).unwrap().len(), 4);
        let two = pauli_set(2).unwrap();
        assert_eq!(two.len(), 16);
        for v in two.unitaries() {
            assert!(max_abs_diff(v, &v.adjoint()) == 0.0);
        }
        let one = pauli_set(1).unwrap();
        let mut avg = OperatorMatrix::zeros(2, 2);
        for v in one.unitaries() {
            avg += v * pauli(3) * v;
        }
        assert!(avg.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn validation_examples() {
        assert!(validate(pauli_set(1).unwrap().unitaries()).ok);
        let bad = validate(&[identity(2), pauli(1)]);
        assert!(!bad.ok);
        assert!(matches!(bad.violation, Some(SetViolation::Averaging { .. })));
        assert!(validate(&[identity(1)]).ok);
        let swapped = validate(&[pauli(1), identity(2), pauli(2), pauli(3)]);
        assert!(matches!(swapped.violation, Some(SetViolation::FirstNotIdentity(_))));
    }

    #[test]
    fn phases_are_admitted() {
        let set = vec![identity(2), pauli(1) * I, pauli(2), pauli(3) * C64::new(-1.0, 0.0)];
        assert!(validate(&set).ok);
    }

    #[test]
    fn averaged_generator_properties() {
        let set = pauli_set(1).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(21);
        let h = random_hermitian(&mut r, 2);
        let lu = ad_of(&h).unwrap().scale_c(I);
        assert!(averaged_generator(&lu, &set).unwrap().is_zero(1e-14));
        let l = compile(&LindbladSpec::amplitude_damping(1.0)).unwrap();
        let lbar = averaged_generator(&l, &set).unwrap();
        assert!(averaged_generator(&lbar, &set).unwrap().max_abs_diff(&lbar) < 1e-13);
        for a in set.ads() {
            assert!(a.compose(&lbar).compose(&a.dagger()).max_abs_diff(&lbar) < 1e-13);
        }
        let lj = fluctuation_generators(&l, &set).unwrap();
        let sum = lj.iter().fold(SuperOp::zero(2), |acc, m| acc.add(m));
        assert!(sum.is_zero(1e-10));
        for kind in [NormKind::Spectral, NormKind::Frobenius] {
            let n0 = sup_norm(&lj[0], kind);
            assert!(lj.iter().all(|m| (sup_norm(m, kind) - n0).abs() < 1e-10));
        }
    }

    #[test]
    fn unitary_fluctuations_are_conjugated_commutators() {
        let set = pauli_set(1).unwrap();
        let h = random_hermitian(&mut ChaCha8Rng::seed_from_u64(22), 2);
        let lu = ad_of(&h).unwrap().scale_c(I);
        for (v, lj) in set.unitaries().iter().zip(fluctuation_generators(&lu, &set).unwrap()) {
            let oracle = ad_of(&(v * &h * v.adjoint())).unwrap().scale_c(I);
            assert!(lj.max_abs_diff(&oracle) < 1e-13);
        }
    }

    #[test]
    fn decoupled_exactly_when_unitary() {
        let set = pauli_set(1).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let h = random_hermitian(&mut r, 2);
            let lu = compile_form(&LindbladForm::Hamiltonian { h: CMatrix(h.clone()) }).unwrap();
            assert!(decoupling_condition_holds(&lu, &set).unwrap());
            assert_eq!(classify_unitarity(&lu), Unitarity::PurelyUnitary);
            let g = compile_form(&LindbladForm::Gkls {
                h: Some(CMatrix(h)),
                jumps: vec![Jump { operator: CMatrix(random_matrix(&mut r, 2)), rate: 0.8 }],
            })
            .unwrap();
            assert!(!decoupling_condition_holds(&g, &set).unwrap());
            assert_ne!(classify_unitarity(&g), Unitarity::PurelyUnitary);
        }
        let ad = compile(&LindbladSpec::amplitude_damping(1.0)).unwrap();
        assert!(!decoupling_condition_holds(&ad, &set).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let set = pauli_set(2).unwrap();
        let l = compile(&LindbladSpec::amplitude_damping(1.0)).unwrap();
        assert!(matches!(averaged_generator(&l, &set), Err(DecoqError::Dimension(_))));
    }

    #[test]
    fn json_round_trip() {
        let s: DecouplingSpec = serde_json::from_str(r#"{"type":"pauli","qubits":2}"#).unwrap();
        assert_eq!(DecouplingSet::from_spec(&s).unwrap().len(), 16);
        assert!(serde_json::from_str::<DecouplingSpec>(r#"{"type":"pauli","qubits":2,"x":0}"#).is_err());
    }
}
