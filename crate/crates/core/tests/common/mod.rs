#![allow(dead_code)]

use decoq::dilation::{Beta, CouplingTerm, DilationSpec};
use decoq::lindblad::{compile, compile_form, Jump, LindbladForm, LindbladSpec};
use decoq::operator_space::{ad_of, identity, pauli, sandwich, sup_norm, NormKind, SuperOp, C64, I};
use decoq::random::{random_hermitian, random_matrix};
use decoq::serde_matrix::CMatrix;
use rand::Rng;

pub fn amplitude_damping(gamma: f64) -> SuperOp {
    compile(&LindbladSpec::amplitude_damping(gamma)).unwrap()
}

pub fn unitary_generator<R: Rng>(rng: &mut R, d: usize) -> SuperOp {
    ad_of(&random_hermitian(rng, d)).unwrap().scale_c(I)
}

/// A random GKLS generator with a Hamiltonian and one or two nonzero jumps.
pub fn random_gkls<R: Rng>(rng: &mut R, d: usize) -> SuperOp {
    let jumps = (0..rng.gen_range(1..=2))
        .map(|_| Jump { operator: CMatrix(random_matrix(rng, d)), rate: rng.gen_range(0.1..2.0) })
        .collect();
    compile_form(&LindbladForm::Gkls { h: Some(CMatrix(random_hermitian(rng, d))), jumps }).unwrap()
}

/// Qubit coupled to a qubit bath by `σ₁⊗σ₁ + σ₂⊗σ₂`, bath field tilted by π/3 off `σ₃`, zero temperature,
/// scaled so that `‖L′‖ = λ_max(H′) − λ_min(H′)` equals `gamma`.
pub fn extrinsic_fixture(gamma: f64) -> DilationSpec {
    let th = std::f64::consts::FRAC_PI_3;
    let h1 = (pauli(3) * C64::new(th.cos(), 0.0) + pauli(1) * C64::new(th.sin(), 0.0)) * C64::new(0.5, 0.0);
    let spec = DilationSpec {
        d_h: 2,
        d_h1: 2,
        coupling: vec![
            CouplingTerm { system: CMatrix(pauli(1)), bath: CMatrix(pauli(1)) },
            CouplingTerm { system: CMatrix(pauli(2)), bath: CMatrix(pauli(2)) },
        ],
        bath_hamiltonian: CMatrix(h1),
        beta: Beta::Infinite,
    };
    let h = decoq::dilation::total_hamiltonian(&spec).unwrap();
    let ev = h.symmetric_eigen().eigenvalues;
    spec.scaled(gamma / (ev.max() - ev.min()))
}

pub fn spectral(m: &SuperOp) -> f64 {
    sup_norm(m, NormKind::Spectral)
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `−γ(2x − iσ₃x − ixσ₃ − σ₁xσ₁ − σ₂xσ₂ − iσ₁xσ₂ − iσ₂xσ₁)`.
pub fn displayed_amplitude_damping(gamma: f64) -> SuperOp {
    let id = identity(2);
    let (s1, s2, s3) = (pauli(1), pauli(2), pauli(3));
    let terms = sandwich(&id, &id)
        .scale(2.0)
        .sub(&sandwich(&s3, &id).scale_c(I))
        .sub(&sandwich(&id, &s3).scale_c(I))
        .sub(&sandwich(&s1, &s1))
        .sub(&sandwich(&s2, &s2))
        .sub(&sandwich(&s1, &s2).scale_c(I))
        .sub(&sandwich(&s2, &s1).scale_c(I));
    terms.scale(-gamma)
}

/// `−γ(2x − σ₁xσ₁ − σ₂xσ₂)`.
pub fn displayed_averaged(gamma: f64) -> SuperOp {
    let id = identity(2);
    sandwich(&id, &id).scale(2.0).sub(&sandwich(&pauli(1), &pauli(1))).sub(&sandwich(&pauli(2), &pauli(2))).scale(-gamma)
}

/// `−iγ(σ₃x + xσ₃ + σ₁xσ₂ − σ₂xσ₁)`.
pub fn displayed_fluctuation(gamma: f64) -> SuperOp {
    let id = identity(2);
    sandwich(&pauli(3), &id)
        .add(&sandwich(&id, &pauli(3)))
        .add(&sandwich(&pauli(1), &pauli(2)))
        .sub(&sandwich(&pauli(2), &pauli(1)))
        .scale_c(c(0.0, -gamma))
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

