//! Operators on `A^{⊗n}` given as sums of tensor-product terms.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{kron, CVector, SuperOp, C64, ONE, ZERO};
use crate::error::{DecoqError, Result};

/// Largest `dⁿ` realized as a dense matrix.
pub const DENSE_LIMIT: usize = 4096;

/// Whether a tensor slot carries the generator or its Hilbert–Schmidt adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotKind {
    Plain,
    Adjoint,
}

/// `coeff · ⊗_s F_s`, with identity on slots not listed.
#[derive(Clone, Debug)]
pub struct LiftedTerm {
    pub coeff: C64,
    pub factors: Vec<(usize, Arc<DMatrix<C64>>)>,
}

#[derive(Clone, Debug)]
pub struct LiftedOp {
    slot_dim: usize,
    arity: usize,
    terms: Vec<LiftedTerm>,
    dense: Option<DMatrix<C64>>,
}

impl LiftedOp {
    pub fn new(slot_dim: usize, arity: usize, terms: Vec<LiftedTerm>) -> Result<Self> {
        if arity == 0 {
            return Err(DecoqError::Dimension("lifted operator needs arity >= 1".into()));
        }
        for term in &terms {
            for (slot, f) in &term.factors {
                if *slot >= arity || f.nrows() != slot_dim || f.ncols() != slot_dim {
                    return Err(DecoqError::Dimension(format!(
                        "factor on slot {slot} of shape {:?} does not fit {arity} slots of dim {slot_dim}",
                        f.shape()
                    )));
                }
            }
        }
        let mut op = LiftedOp { slot_dim, arity, terms, dense: None };
        if op.dim_checked().is_some_and(|n| n <= DENSE_LIMIT) {
            op.dense = Some(op.assemble_dense());
        }
        Ok(op)
    }

    /// `L̄ + (τ/|J|)ΣL_j²` on every slot plus `2(τ/|J|)Σ_j L_j⊗L_j` on every slot pair,
    /// with `†` taken on the adjoint slots.
    pub fn diffusion_lift(l_bar: &SuperOp, l_list: &[SuperOp], tau: f64, slots: &[SlotKind]) -> Result<Self> {
        let d = l_bar.dim();
        let w = tau / l_list.len() as f64;
        let pick = |m: &DMatrix<C64>, kind: SlotKind| match kind {
            SlotKind::Plain => m.clone(),
            SlotKind::Adjoint => m.adjoint(),
        };
        let mut sq = DMatrix::zeros(d, d);
        for lj in l_list {
            sq += lj.matrix() * lj.matrix();
        }
        let single = l_bar.matrix() + sq * C64::new(w, 0.0);
        let single_plain = Arc::new(single.clone());
        let single_adj = Arc::new(single.adjoint());
        let ljs: Vec<[Arc<DMatrix<C64>>; 2]> = l_list
            .iter()
            .map(|lj| [Arc::new(pick(lj.matrix(), SlotKind::Plain)), Arc::new(pick(lj.matrix(), SlotKind::Adjoint))])
            .collect();
        let side = |kind: SlotKind| match kind {
            SlotKind::Plain => 0,
            SlotKind::Adjoint => 1,
        };
        let mut terms = Vec::new();
        for (s, &kind) in slots.iter().enumerate() {
            let f = if kind == SlotKind::Plain { single_plain.clone() } else { single_adj.clone() };
            terms.push(LiftedTerm { coeff: ONE, factors: vec![(s, f)] });
        }
        for s in 0..slots.len() {
            for r in s + 1..slots.len() {
                for lj in &ljs {
                    terms.push(LiftedTerm {
                        coeff: C64::new(2.0 * w, 0.0),
                        factors: vec![(s, lj[side(slots[s])].clone()), (r, lj[side(slots[r])].clone())],
                    });
                }
            }
        }
        LiftedOp::new(d, slots.len(), terms)
    }

    fn dim_checked(&self) -> Option<usize> {
        self.slot_dim.checked_pow(self.arity as u32)
    }

    pub fn dim(&self) -> usize {
        self.dim_checked().expect("lifted dimension overflows usize")
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn slot_dim(&self) -> usize {
        self.slot_dim
    }

    pub fn terms(&self) -> &[LiftedTerm] {
        &self.terms
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn dense(&self) -> Option<&DMatrix<C64>> {
        self.dense.as_ref()
    }

    fn assemble_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let id = DMatrix::<C64>::identity(self.slot_dim, self.slot_dim);
        for term in &self.terms {
            let mut acc = DMatrix::from_element(1, 1, term.coeff);
            for s in 0..self.arity {
                let f = term.factors.iter().find(|(slot, _)| *slot == s).map(|(_, f)| f.as_ref()).unwrap_or(&id);
                acc = kron(&acc, f);
            }
            out += acc;
        }
        out
    }

    /// The dense matrix, assembled on demand when above the dense threshold.
    pub fn to_dense(&self) -> DMatrix<C64> {
        self.dense.clone().unwrap_or_else(|| self.assemble_dense())
    }

    /// Term-wise adjoint: conjugated coefficients, every factor daggered.
    pub fn dagger(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| LiftedTerm {
                coeff: t.coeff.conj(),
                factors: t.factors.iter().map(|(s, f)| (*s, Arc::new(f.adjoint()))).collect(),
            })
            .collect();
        LiftedOp {
            slot_dim: self.slot_dim,
            arity: self.arity,
            terms,
            dense: self.dense.as_ref().map(|m| m.adjoint()),
        }
    }

    pub fn apply(&self, w: &CVector) -> CVector {
        match &self.dense {
            Some(m) => m * w,
            None => self.apply_matrix_free(w),
        }
    }

    pub fn apply_matrix_free(&self, w: &CVector) -> CVector {
        assert_eq!(w.len(), self.dim());
        let mut out = CVector::zeros(w.len());
        let mut buf = w.clone();
        for term in &self.terms {
            buf.copy_from(w);
            for (slot, f) in &term.factors {
                apply_on_slot(f, *slot, self.slot_dim, self.arity, buf.as_mut_slice());
            }
            out.axpy(term.coeff, &buf, ONE);
        }
        out
    }

    /// Evaluates the defining sum on a product vector `x₁⊗…⊗x_n` factor by factor.
    pub fn apply_product(&self, xs: &[CVector]) -> CVector {
        assert_eq!(xs.len(), self.arity);
        let mut out = CVector::zeros(self.dim());
        for term in &self.terms {
            let mut acc = CVector::from_element(1, term.coeff);
            for (s, x) in xs.iter().enumerate() {
                let y = match term.factors.iter().find(|(slot, _)| *slot == s) {
                    Some((_, f)) => f.as_ref() * x,
                    None => x.clone(),
                };
                acc = acc.kronecker(&y);
            }
            out += acc;
        }
        out
    }

    /// Upper bound on the induced 1-norm.
    pub fn norm_bound(&self) -> f64 {
        let one_norm = |m: &DMatrix<C64>| {
            m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
        };
        match &self.dense {
            Some(m) => one_norm(m),
            None => self
                .terms
                .iter()
                .map(|t| t.coeff.norm() * t.factors.iter().map(|(_, f)| one_norm(f)).product::<f64>())
                .sum(),
        }
    }

    pub fn dense_exp(&self, t: f64) -> Result<DMatrix<C64>> {
        let m = self.dense.as_ref().ok_or_else(|| DecoqError::Budget {
            what: "dense lifted exponential".into(),
            size: self.dim(),
            limit: DENSE_LIMIT,
        })?;
        Ok(super::expm_dense(&m.scale(t)))
    }
}

fn apply_on_slot(f: &DMatrix<C64>, slot: usize, d: usize, arity: usize, data: &mut [C64]) {
    let stride = d.pow((arity - 1 - slot) as u32);
    let block = d * stride;
    let mut col = vec![ZERO; d];
    for outer in (0..data.len()).step_by(block) {
        for inner in 0..stride {
            for (k, c) in col.iter_mut().enumerate() {
                *c = data[outer + k * stride + inner];
            }
            for r in 0..d {
                let mut acc = ZERO;
                for (k, c) in col.iter().enumerate() {
                    acc += f[(r, k)] * c;
                }
                data[outer + r * stride + inner] = acc;
            }
        }
    }
}

/// `e^{tM} w` by a truncated Taylor series on `s` substeps with `‖tM‖/s ≤ 1`.
pub fn expm_action(m: &LiftedOp, t: f64, w: &CVector) -> CVector {
    assert_eq!(w.len(), m.dim(), "vector length must match the lifted dimension");
    if t == 0.0 || w.iter().all(|z| *z == ZERO) {
        return w.clone();
    }
    let mut steps = (m.norm_bound() * t.abs()).ceil().max(1.0) as usize;
    loop {
        if let Some(v) = taylor_steps(m, t, w, steps) {
            return v;
        }
        steps *= 2;
    }
}

fn taylor_steps(m: &LiftedOp, t: f64, w: &CVector, steps: usize) -> Option<CVector> {
    const MAX_TERMS: usize = 60;
    let h = t / steps as f64;
    let mut v = w.clone();
    for _ in 0..steps {
        let mut term = v.clone();
        let mut acc = v.clone();
        let mut converged = false;
        for k in 1..=MAX_TERMS {
            term = m.apply(&term) * C64::new(h / k as f64, 0.0);
            acc += &term;
            let tn = term.norm();
            if tn <= 1e-16 * acc.norm() || tn == 0.0 {
                converged = true;
                break;
            }
        }
        if !converged || !acc.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return None;
        }
        v = acc;
    }
    Some(v)
}
