//! Extrinsic decoherence: a system coupled to a finite bath, decoupled by pulses on the system only.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decoupling::DecouplingSet;
use crate::error::{DecoqError, Result};
use crate::operator_space::{
    ad_of, exp_i_hermitian, expm, identity, is_hermitian, kron, matrix_unit, partial_trace, unvec, vec, Ad_of,
    OperatorMatrix, SuperOp, C64, I, STRUCTURE_TOL,
};
use crate::parallel::{map_indices, Execution};
use crate::serde_matrix::CMatrix;
use crate::walk::kernel::Kernel;
use crate::walk::rng::{path_rng, IndexSource};
use crate::walk::{check_budget, Ensemble, Scheme, WalkConfig, WalkPath};

pub const MAX_DILATED_DIM: usize = 64;
pub const MAX_BATH_DIM: usize = 32;

/// Inverse temperature; `"inf"` in JSON selects the ground state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => s.serialize_f64(*b),
            Beta::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(b) => Ok(Beta::Finite(b)),
            Repr::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(Beta::Infinite),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("beta: expected a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingTerm {
    pub system: CMatrix,
    pub bath: CMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilationSpec {
    pub d_h: usize,
    pub d_h1: usize,
    #[serde(default)]
    pub coupling: Vec<CouplingTerm>,
    pub bath_hamiltonian: CMatrix,
    pub beta: Beta,
}

impl DilationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 || self.d_h1 == 0 {
            return Err(DecoqError::Dimension("dilation: d_h and d_h1 must be >= 1".into()));
        }
        if self.d_h1 > MAX_BATH_DIM || self.d_h * self.d_h1 > MAX_DILATED_DIM {
            return Err(DecoqError::Dimension(format!(
                "dilation: d_h·d_h1 = {} exceeds {MAX_DILATED_DIM} or d_h1 = {} exceeds {MAX_BATH_DIM}",
                self.d_h * self.d_h1,
                self.d_h1
            )));
        }
        let check = |m: &OperatorMatrix, d: usize, field: String| -> Result<()> {
            if m.nrows() != d || m.ncols() != d {
                return Err(DecoqError::Dimension(format!("{field}: expected {d}x{d}, got {}x{}", m.nrows(), m.ncols())));
            }
            if !is_hermitian(m, STRUCTURE_TOL) {
                return Err(DecoqError::NotHermitian(field));
            }
            Ok(())
        };
        for (k, c) in self.coupling.iter().enumerate() {
            check(&c.system.0, self.d_h, format!("dilation.coupling[{k}].system"))?;
            check(&c.bath.0, self.d_h1, format!("dilation.coupling[{k}].bath"))?;
        }
        check(&self.bath_hamiltonian.0, self.d_h1, "dilation.bath_hamiltonian".into())?;
        if let Beta::Finite(b) = self.beta {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(DecoqError::InvalidSpec(format!("dilation.beta: must be >= 0, got {b}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d_h * self.d_h1
    }

    /// The same model with every Hamiltonian term multiplied by `s`.
    pub fn scaled(&self, s: f64) -> DilationSpec {
        let f = C64::new(s, 0.0);
        DilationSpec {
            coupling: self
                .coupling
                .iter()
                .map(|c| CouplingTerm { system: c.system.clone(), bath: CMatrix(&c.bath.0 * f) })
                .collect(),
            bath_hamiltonian: CMatrix(&self.bath_hamiltonian.0 * f),
            ..self.clone()
        }
    }
}

/// `e^{−βH₁}/Z`, or the normalized ground-space projector for `β = ∞`.
pub fn thermal_state(h1: &OperatorMatrix, beta: Beta) -> Result<OperatorMatrix> {
    if !is_hermitian(h1, STRUCTURE_TOL) {
        return Err(DecoqError::NotHermitian("bath hamiltonian".into()));
    }
    if let Beta::Finite(b) = beta {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(DecoqError::InvalidSpec(format!("beta: must be >= 0, got {b}")));
        }
    }
    let eig = h1.clone().symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    let weights: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| match beta {
            Beta::Finite(b) => (-b * (l - lmin)).exp(),
            Beta::Infinite if l - lmin <= 1e-9 => 1.0,
            Beta::Infinite => 0.0,
        })
        .collect();
    let z: f64 = weights.iter().sum();
    let diag = OperatorMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        weights.len(),
        weights.iter().map(|w| C64::new(w / z, 0.0)),
    ));
    Ok(&eig.eigenvectors * diag * eig.eigenvectors.adjoint())
}

/// `H′ = Σ_k H₀ₖ⊗H₁ₖ + 1⊗H₁`.
pub fn total_hamiltonian(spec: &DilationSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    let mut h = kron(&identity(spec.d_h), &spec.bath_hamiltonian.0);
    for c in &spec.coupling {
        h += kron(&c.system.0, &c.bath.0);
    }
    Ok(h)
}

/// `L′ = i·ad(H′)`.
pub fn build_dilated_generator(spec: &DilationSpec) -> Result<SuperOp> {
    Ok(ad_of(&total_hamiltonian(spec)?)?.scale_c(I))
}

fn check_set(spec: &DilationSpec, set: &DecouplingSet) -> Result<()> {
    if set.dim_h() != spec.d_h {
        return Err(DecoqError::Dimension(format!(
            "decoupling set on d_H = {} with dilation d_H = {}",
            set.dim_h(),
            spec.d_h
        )));
    }
    Ok(())
}

/// `Ad(v_j⊗1)` on `B(H⊗H₁)`.
pub fn dilated_ads(set: &DecouplingSet, d_h1: usize) -> Result<Vec<SuperOp>> {
    set.lifted_unitaries(d_h1).iter().map(Ad_of).collect()
}

/// `L̄′`, `L′_j` and `L̂′ = L̄′ + (τ/|J|)Σ_j L′_j²` for the pulses `v_j⊗1`.
#[derive(Clone, Debug)]
pub struct DilatedGenerators {
    pub l: SuperOp,
    pub l_bar: SuperOp,
    pub l_list: Vec<SuperOp>,
    pub l_hat: SuperOp,
}

pub fn dilated_generators(spec: &DilationSpec, set: &DecouplingSet, tau: f64) -> Result<DilatedGenerators> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(DecoqError::InvalidSpec(format!("tau: must be finite and > 0, got {tau}")));
    }
    check_set(spec, set)?;
    let l = build_dilated_generator(spec)?;
    let ads = dilated_ads(set, spec.d_h1)?;
    let n = ads.len() as f64;
    let conj = |a: &SuperOp, x: &SuperOp| a.compose(x).compose(&a.dagger());
    let l_bar = ads.iter().fold(SuperOp::zero(spec.dim()), |acc, a| acc.add(&conj(a, &l))).scale(1.0 / n);
    let diff = l.sub(&l_bar);
    let l_list: Vec<SuperOp> = ads.iter().map(|a| conj(a, &diff)).collect();
    let sq = l_list.iter().fold(SuperOp::zero(spec.dim()), |acc, lj| acc.add(&lj.compose(lj)));
    let l_hat = l_bar.add(&sq.scale(tau / n));
    Ok(DilatedGenerators { l, l_bar, l_list, l_hat })
}

pub fn dilated_limit_generator(spec: &DilationSpec, set: &DecouplingSet, tau: f64) -> Result<SuperOp> {
    Ok(dilated_generators(spec, set, tau)?.l_hat)
}

/// `tr₁ e^{tL̂′}(ρ₀⊗ρ^θ)`.
pub fn reduced_expected_state(
    spec: &DilationSpec,
    set: &DecouplingSet,
    tau: f64,
    rho0: &OperatorMatrix,
    t: f64,
) -> Result<OperatorMatrix> {
    if !crate::operator_space::is_density(rho0, 1e-9) || rho0.nrows() != spec.d_h {
        return Err(DecoqError::InvalidSpec("rho0: not a density matrix on H".into()));
    }
    if !(t >= 0.0) {
        return Err(DecoqError::InvalidSpec(format!("t: must be >= 0, got {t}")));
    }
    let l_hat = dilated_limit_generator(spec, set, tau)?;
    let theta = thermal_state(&spec.bath_hamiltonian.0, spec.beta)?;
    partial_trace(&expm(&l_hat, t).apply(&kron(rho0, &theta)), spec.d_h, spec.d_h1, true)
}

/// `x ↦ tr₁(W (x⊗ρ^θ) W*)` as a superoperator on `B(H)`.
pub fn reduced_map(w: &OperatorMatrix, theta: &OperatorMatrix, d_h: usize, d_h1: usize) -> SuperOp {
    let d = d_h * d_h;
    let wd = w.adjoint();
    let mut m = nalgebra::DMatrix::zeros(d, d);
    for l in 0..d_h {
        for k in 0..d_h {
            let y = w * kron(&matrix_unit(d_h, k, l), theta) * &wd;
            let r = partial_trace(&y, d_h, d_h1, true).expect("dimensions fixed by construction");
            m.set_column(l * d_h + k, &vec(&r));
        }
    }
    SuperOp::new_unchecked(d_h, m)
}

/// The physical walk on `H⊗H₁`, propagated as unitaries and stored as reduced maps on `B(H)`.
pub fn simulate_extrinsic_ensemble(spec: &DilationSpec, set: &DecouplingSet, cfg: &WalkConfig) -> Result<Ensemble> {
    simulate_extrinsic_ensemble_with(spec, set, cfg, Execution::default())
}

pub fn simulate_extrinsic_ensemble_with(
    spec: &DilationSpec,
    set: &DecouplingSet,
    cfg: &WalkConfig,
    exec: Execution,
) -> Result<Ensemble> {
    cfg.validate()?;
    if cfg.scheme != Scheme::Physical {
        return Err(DecoqError::InvalidSpec("dilated walks support the physical scheme only".into()));
    }
    check_set(spec, set)?;
    check_budget(cfg, spec.d_h)?;
    let h = total_hamiltonian(spec)?;
    let theta = thermal_state(&spec.bath_hamiltonian.0, spec.beta)?;
    let big = spec.dim();
    let u_tau = exp_i_hermitian(&h, cfg.tau);
    let steps: Vec<Vec<C64>> = set
        .lifted_unitaries(spec.d_h1)
        .iter()
        .map(|v| (v * &u_tau * v.adjoint()).as_slice().to_vec())
        .collect();
    let kernel = Kernel::new(big, steps);
    let counts = cfg.step_counts();
    let tails: Vec<OperatorMatrix> = cfg
        .t_grid
        .iter()
        .zip(&counts)
        .map(|(&t, &n)| exp_i_hermitian(&h, (t - n as f64 * cfg.tau).max(0.0)))
        .collect();
    let record = cfg.records_pulses();
    let paths = map_indices(cfg.paths, exec, |p| {
        let mut src = IndexSource::new(path_rng(cfg.master_seed, p as u64), set.len());
        let mut rec = record.then(Vec::new);
        let products = kernel.run(&mut src, &counts, rec.as_mut());
        let maps: Vec<SuperOp> = products
            .into_iter()
            .zip(&tails)
            .map(|(flat, tail)| {
                let w = tail * OperatorMatrix::from_vec(big, big, flat);
                reduced_map(&w, &theta, spec.d_h, spec.d_h1)
            })
            .collect();
        let fidelities = maps.iter().map(crate::fidelity::path_fidelity).collect();
        let max_hs_norm = maps
            .iter()
            .map(|m| crate::operator_space::sup_norm(m, crate::operator_space::NormKind::Spectral))
            .fold(0.0, f64::max);
        WalkPath { path_id: p as u64, pulse_indices: rec, maps, fidelities, max_hs_norm }
    });
    Ok(Ensemble {
        t_grid: cfg.t_grid.clone(),
        tau: cfg.tau,
        scheme: cfg.scheme,
        master_seed: cfg.master_seed,
        paths,
        max_validity_ratio: 0.0,
    })
}

/// `x ↦ unvec(m·vec(x))` applied to `x⊗y`, for tests and diagnostics.
pub fn apply_to_product(m: &SuperOp, x: &OperatorMatrix, y: &OperatorMatrix) -> OperatorMatrix {
    unvec(&m.apply_vec(&vec(&kron(x, y))))
}
