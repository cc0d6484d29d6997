//! Continuum-limit generators `L̂`, `L̂^(drift)`, their lifts, and analytic `E[ρ_t]`.

use serde::{Deserialize, Serialize};

use crate::decoupling::{averaged_generator, fluctuation_generators, DecouplingSet};
use crate::error::{DecoqError, Result};
use crate::lindblad::GeneratorSchedule;
use crate::operator_space::{expm, is_density, LiftedOp, OperatorMatrix, SlotKind, SuperOp};
use crate::walk::{product_integral, VALIDITY_WARNING};

#[derive(Clone, Debug)]
pub struct LimitGenerators {
    pub l: SuperOp,
    pub l_bar: SuperOp,
    pub l_list: Vec<SuperOp>,
    pub l_hat: SuperOp,
    pub l_hat_drift: SuperOp,
    pub tau: f64,
    pub set_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitScheme {
    Diffusion,
    Drift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedKind {
    Check2,
    Check4,
    C11,
    C12,
    C31,
    C32,
}

impl MixedKind {
    pub fn slots(self) -> &'static [SlotKind] {
        use SlotKind::{Adjoint as A, Plain as P};
        match self {
            MixedKind::Check2 => &[P, A],
            MixedKind::Check4 => &[P, P, A, A],
            MixedKind::C11 => &[P, P],
            MixedKind::C12 => &[A, P],
            MixedKind::C31 => &[P, P, A],
            MixedKind::C32 => &[A, P, A],
        }
    }
}

impl std::str::FromStr for MixedKind {
    type Err = DecoqError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "check2" => MixedKind::Check2,
            "check4" => MixedKind::Check4,
            "c11" => MixedKind::C11,
            "c12" => MixedKind::C12,
            "c31" => MixedKind::C31,
            "c32" => MixedKind::C32,
            other => return Err(DecoqError::InvalidSpec(format!("unknown lifted generator kind {other:?}"))),
        })
    }
}

/// `L̂ = L̄ + (τ/|J|)Σ_j L_j²` and `L̂^(drift) = L̄`.
pub fn build(l: &SuperOp, set: &DecouplingSet, tau: f64) -> Result<LimitGenerators> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(DecoqError::InvalidSpec(format!("tau: must be finite and > 0, got {tau}")));
    }
    let l_bar = averaged_generator(l, set)?;
    let l_list = fluctuation_generators(l, set)?;
    let l_hat = hat_from(&l_bar, &l_list, tau);
    Ok(LimitGenerators {
        l: l.clone(),
        l_hat_drift: l_bar.clone(),
        l_bar,
        l_list,
        l_hat,
        tau,
        set_size: set.len(),
    })
}

fn hat_from(l_bar: &SuperOp, l_list: &[SuperOp], tau: f64) -> SuperOp {
    let sq = l_list.iter().fold(SuperOp::zero(l_bar.dim_h()), |acc, lj| acc.add(&lj.compose(lj)));
    l_bar.add(&sq.scale(tau / l_list.len() as f64))
}

impl LimitGenerators {
    pub fn dim_h(&self) -> usize {
        self.l.dim_h()
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    pub fn generator(&self, scheme: LimitScheme) -> &SuperOp {
        match scheme {
            LimitScheme::Diffusion => &self.l_hat,
            LimitScheme::Drift => &self.l_hat_drift,
        }
    }
}

pub fn expected_state(gens: &LimitGenerators, rho0: &OperatorMatrix, t: f64, scheme: LimitScheme) -> Result<OperatorMatrix> {
    check_state(rho0, t)?;
    Ok(expm(gens.generator(scheme), t).apply(rho0))
}

fn check_state(rho0: &OperatorMatrix, t: f64) -> Result<()> {
    if !is_density(rho0, 1e-9) {
        return Err(DecoqError::InvalidSpec("rho0: not a density matrix".into()));
    }
    if !(t >= 0.0) {
        return Err(DecoqError::InvalidSpec(format!("t: must be >= 0, got {t}")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TimeOrderedResult {
    pub state: OperatorMatrix,
    /// Largest `τ·‖dL/dt‖/‖L‖` on `[0, t]`.
    pub max_validity_ratio: f64,
    pub flagged: bool,
    pub sampling: &'static str,
}

/// `T exp(∫₀ᵗ L̂(s) ds)(ρ₀)` with `L̂(s)` built from `L(s)` at each factor's left endpoint.
pub fn expected_state_time_dependent(
    schedule: &GeneratorSchedule,
    set: &DecouplingSet,
    tau: f64,
    rho0: &OperatorMatrix,
    t: f64,
) -> Result<TimeOrderedResult> {
    check_state(rho0, t)?;
    let prop = product_integral(schedule, 0.0, t, |l| Ok(build(l, set, tau)?.l_hat))?;
    let mut ratio: f64 = 0.0;
    let mut knots = vec![0.0, t];
    knots.extend(schedule.knots_between(0.0, t));
    let samples = 64;
    knots.extend((1..samples).map(|i| t * i as f64 / samples as f64));
    for s in knots {
        ratio = ratio.max(tau * schedule.sample(s)?.derivative_ratio);
    }
    Ok(TimeOrderedResult {
        state: prop.apply(rho0),
        max_validity_ratio: ratio,
        flagged: ratio > VALIDITY_WARNING,
        sampling: "left-endpoint",
    })
}

/// `L̂⁽ⁿ⁾` on `A^{⊗n}`.
pub fn lift_moment_generator(gens: &LimitGenerators, n: usize) -> Result<LiftedOp> {
    if n == 0 {
        return Err(DecoqError::InvalidSpec("arity: must be >= 1".into()));
    }
    LiftedOp::diffusion_lift(&gens.l_bar, &gens.l_list, gens.tau, &vec![SlotKind::Plain; n])
}

pub fn lift_mixed_generators(gens: &LimitGenerators, kind: MixedKind) -> Result<LiftedOp> {
    LiftedOp::diffusion_lift(&gens.l_bar, &gens.l_list, gens.tau, kind.slots())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoupling::pauli_set;
    use crate::lindblad::{compile, compile_form, Builtin, LindbladForm, LindbladSpec};
    use crate::operator_space::{
        ad_of, commutator, kron, matrix_unit, max_abs_diff, vec, CVector, NormKind, C64, I,
    };
    use crate::random::{random_density, random_hermitian, random_vector};
    use crate::serde_matrix::CMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn amp(g: f64, tau: f64) -> LimitGenerators {
        build(&compile(&LindbladSpec::amplitude_damping(g)).unwrap(), &pauli_set(1).unwrap(), tau).unwrap()
    }

    #[test]
    fn zero_generator() {
        let g = build(&SuperOp::zero(2), &pauli_set(1).unwrap(), 1e-3).unwrap();
        assert!(g.l_hat.is_zero(0.0) && g.l_bar.is_zero(0.0));
        for kind in [MixedKind::Check2, MixedKind::Check4, MixedKind::C11, MixedKind::C12, MixedKind::C31, MixedKind::C32] {
            assert!(lift_mixed_generators(&g, kind).unwrap().to_dense().iter().all(|z| z.norm() == 0.0));
        }
        let l2 = lift_moment_generator(&g, 2).unwrap();
        let x = random_vector(&mut ChaCha8Rng::seed_from_u64(1), 4);
        assert!(l2.apply(&x.kronecker(&x)).norm() == 0.0);
    }

    #[test]
    fn invariants_hold() {
        let g = amp(1.0, 1e-3);
        let sq = g.l_list.iter().fold(SuperOp::zero(2), |a, lj| a.add(&lj.compose(lj)));
        assert!(g.l_hat.max_abs_diff(&g.l_bar.add(&sq.scale(1e-3 / 4.0))) <= 1e-12);
        assert_eq!(g.l_hat_drift, g.l_bar);
        assert!(crate::lindblad::trace_annihilation_residual(&g.l_hat) < 1e-12);
        let l1 = lift_moment_generator(&g, 1).unwrap();
        assert_eq!(l1.to_dense(), *g.l_hat.matrix());
        assert!(lift_moment_generator(&g, 0).is_err());
        assert!("c99".parse::<MixedKind>().is_err());
    }

    #[test]
    fn unitary_hat_is_double_commutator() {
        let set = pauli_set(1).unwrap();
        let h = random_hermitian(&mut ChaCha8Rng::seed_from_u64(2), 2);
        let tau = 0.01;
        let g = build(&ad_of(&h).unwrap().scale_c(I), &set, tau).unwrap();
        let oracle = SuperOp::from_fn(2, |x| {
            let mut acc = OperatorMatrix::zeros(2, 2);
            for v in set.unitaries() {
                let k = v * &h * v.adjoint();
                acc -= commutator(&k, &commutator(&k, x));
            }
            acc * C64::new(tau / 4.0, 0.0)
        });
        assert!(g.l_hat.max_abs_diff(&oracle) < 1e-13);
        let check2 = lift_mixed_generators(&g, MixedKind::Check2).unwrap().to_dense();
        assert!(max_abs_diff(&check2, &check2.adjoint()) < 1e-13);
    }

    #[test]
    fn expected_state_examples() {
        let g = amp(1.0, 1e-3);
        let rho = matrix_unit(2, 0, 0);
        assert!(max_abs_diff(&expected_state(&g, &rho, 0.0, LimitScheme::Diffusion).unwrap(), &rho) < 1e-15);
        let out = expected_state(&g, &rho, 0.3, LimitScheme::Diffusion).unwrap();
        assert!((out.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
        let h = random_hermitian(&mut ChaCha8Rng::seed_from_u64(3), 2);
        let gu = build(&ad_of(&h).unwrap().scale_c(I), &pauli_set(1).unwrap(), 1e-2).unwrap();
        let r0 = random_density(&mut ChaCha8Rng::seed_from_u64(4), 2);
        for &t in &[0.1, 1.0, 5.0] {
            let drift = expected_state(&gu, &r0, t, LimitScheme::Drift).unwrap();
            assert!(max_abs_diff(&drift, &r0) < 1e-12);
        }
        assert!(expected_state(&g, &OperatorMatrix::zeros(2, 2), 0.1, LimitScheme::Drift).is_err());
    }

    #[test]
    fn time_ordered_examples() {
        let set = pauli_set(1).unwrap();
        let tau = 1e-3;
        let a = LindbladForm::Builtin { name: Builtin::AmplitudeDamping, gamma: 1.0 };
        let b = LindbladForm::Builtin { name: Builtin::Dephasing, gamma: 2.0 };
        let rho = random_density(&mut ChaCha8Rng::seed_from_u64(5), 2);

        let constant =
            crate::lindblad::compile_schedule(&LindbladSpec::table(vec![0.0, 1.0], vec![a.clone(), a.clone()])).unwrap();
        let ga = build(&compile_form(&a).unwrap(), &set, tau).unwrap();
        let r = expected_state_time_dependent(&constant, &set, tau, &rho, 0.4).unwrap();
        assert!(max_abs_diff(&r.state, &expected_state(&ga, &rho, 0.4, LimitScheme::Diffusion).unwrap()) <= 1e-9);
        assert!(!r.flagged);
        assert_eq!(r.sampling, "left-endpoint");
        let r0 = expected_state_time_dependent(&constant, &set, tau, &rho, 0.0).unwrap();
        assert!(max_abs_diff(&r0.state, &rho) < 1e-15);

        let two = crate::lindblad::compile_schedule(&LindbladSpec::table(
            vec![0.0, 0.5, 0.5, 1.0],
            vec![a.clone(), a, b.clone(), b.clone()],
        ))
        .unwrap();
        let gb = build(&compile_form(&b).unwrap(), &set, tau).unwrap();
        let oracle = expm(&gb.l_hat, 0.3).compose(&expm(&ga.l_hat, 0.5)).apply(&rho);
        let r = expected_state_time_dependent(&two, &set, tau, &rho, 0.8).unwrap();
        assert!(max_abs_diff(&r.state, &oracle) <= 1e-9);
    }

    #[test]
    fn second_moment_dominates_first() {
        let g = amp(1.0, 1e-2);
        let l2 = lift_mixed_generators(&g, MixedKind::Check2).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let t_max = 1.0 / crate::operator_space::sup_norm(&g.l_hat, NormKind::Spectral);
        for i in 1..=5 {
            let t = t_max * i as f64 / 5.0;
            let e1 = expm(&g.l_hat, t);
            let e2 = l2.dense_exp(t).unwrap();
            for _ in 0..10 {
                let x = random_vector(&mut r, 4);
                let y = random_vector(&mut r, 4);
                let first = y.dotc(&e1.apply_vec(&x));
                // E[⟨y,αx⟩⟨x,α†y⟩] = ⟨y⊗x, E[α⊗α†](x⊗y)⟩
                let second = y.kronecker(&x).dotc(&(&e2 * x.kronecker(&y)));
                assert!(second.re - first.norm_sqr() >= -1e-9);
            }
        }
    }

    #[test]
    fn mixed_lifts_match_displays() {
        let g = amp(1.3, 0.05);
        let w = g.tau / 4.0;
        let id = OperatorMatrix::identity(4, 4);
        let lb = g.l_bar.matrix().clone();
        let lbd = lb.adjoint();
        let mut c12 = kron(&lbd, &id) + kron(&id, &lb);
        for lj in &g.l_list {
            let m = lj.matrix();
            let md = m.adjoint();
            c12 += (kron(&(&md * &md), &id) + kron(&md, m) * C64::new(2.0, 0.0) + kron(&id, &(m * m))) * C64::new(w, 0.0);
        }
        assert!(max_abs_diff(&lift_mixed_generators(&g, MixedKind::C12).unwrap().to_dense(), &c12) < 1e-12);
        let c32 = lift_mixed_generators(&g, MixedKind::C32).unwrap();
        let xs: Vec<CVector> = (0..3).map(|i| vec(&matrix_unit(2, i % 2, (i + 1) % 2))).collect();
        let k3 = |a: &CVector, b: &CVector, c: &CVector| a.kronecker(b).kronecker(c);
        let (x0, x1, x2) = (&xs[0], &xs[1], &xs[2]);
        let mut oracle = k3(&(&lbd * x0), x1, x2) + k3(x0, &(&lb * x1), x2) + k3(x0, x1, &(&lbd * x2));
        for lj in &g.l_list {
            let m = lj.matrix();
            let md = m.adjoint();
            let two = C64::new(2.0, 0.0);
            let s = k3(&(&md * &md * x0), x1, x2)
                + k3(&(&md * x0), &(m * x1), x2) * two
                + k3(&(&md * x0), x1, &(&md * x2)) * two
                + k3(x0, &(m * x1), &(&md * x2)) * two
                + k3(x0, &(m * m * x1), x2)
                + k3(x0, x1, &(&md * &md * x2));
            oracle += s * C64::new(w, 0.0);
        }
        let got = c32.apply_product(&xs);
        assert!((got - oracle).norm() < 1e-12);
    }

    #[test]
    fn hermitian_input_through_serde_form() {
        let h = CMatrix(random_hermitian(&mut ChaCha8Rng::seed_from_u64(7), 2));
        let l = compile_form(&LindbladForm::Hamiltonian { h }).unwrap();
        let g = build(&l, &pauli_set(1).unwrap(), 1e-3).unwrap();
        assert!(g.l_bar.is_zero(1e-12));
    }
}
