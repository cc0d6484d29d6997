//! Random test objects: Ginibre matrices, Haar unitaries, densities, generators.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::operator_space::{hermitian_part, CVector, OperatorMatrix, C64};

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize) -> OperatorMatrix {
    DMatrix::from_fn(d, d, |_, _| gaussian(rng))
}

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| gaussian(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> OperatorMatrix {
    hermitian_part(&random_matrix(rng, d))
}

/// Haar unitary from the QR decomposition of a Ginibre matrix with phase fix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> OperatorMatrix {
    let qr = random_matrix(rng, d).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let p = r[(j, j)];
        let phase = if p.norm() > 0.0 { p / p.norm() } else { C64::new(1.0, 0.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> OperatorMatrix {
    let g = random_matrix(rng, d);
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    rho / tr
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
