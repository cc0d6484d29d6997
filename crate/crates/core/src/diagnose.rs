//! Fidelity bounds for intrinsic and extrinsic decoherence, and the τ → 0 classification.

use serde::{Deserialize, Serialize};

use crate::dilation::DilatedGenerators;
use crate::error::{DecoqError, Result};
use crate::fidelity::FidelityCurve;
use crate::limit::LimitGenerators;
use crate::lindblad::{classify_unitarity, Unitarity};
use crate::operator_space::{sup_norm, NormKind, SuperOp};

/// `≪` is read as a factor of this size.
pub const REGIME_FACTOR: f64 = 10.0;

/// Sources for the bound evaluation. Either generator family may be absent.
#[derive(Clone, Copy, Debug)]
pub struct BoundInputs<'a> {
    pub gens: Option<&'a LimitGenerators>,
    pub dilated: Option<&'a DilatedGenerators>,
    /// `(t, L′₀(t))` samples; replaces the constant `L′₀` of `dilated` when present.
    pub l0_profile: Option<&'a [(f64, SuperOp)]>,
    /// `d = dim B(H)` of the system.
    pub dim: usize,
    pub set_size: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    /// `1 − (2d/|J|)·τ·∫‖L′₀‖²`.
    pub bound_extrinsic: Option<Vec<f64>>,
    /// `1 − 2d·τ·∫‖L′₀‖²`.
    pub bound_extrinsic_2d: Option<Vec<f64>>,
    pub bound_intrinsic: Option<Vec<f64>>,
    pub bound_dephasing: Option<Vec<f64>>,
    pub bound_drift_intrinsic: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub tau: f64,
    pub t_grid: Vec<f64>,
    pub dim: usize,
    pub set_size: usize,
    pub norm_kind: NormKind,
    /// `‖L̄‖` in `norm_kind`, the scale of the intrinsic intercept.
    pub l_bar_norm: f64,
    #[serde(flatten)]
    pub bounds: BoundSeries,
    /// The same bounds with Frobenius norms throughout.
    pub frobenius: BoundSeries,
    pub regime_flags: Vec<bool>,
    #[serde(default)]
    pub notes: Vec<String>,
}

fn norm_sq(m: &SuperOp, kind: NormKind) -> f64 {
    sup_norm(m, kind).powi(2)
}

/// `∫₀ᵗ f` for samples `(s_i, f_i)` by the trapezoid rule, holding the end values outside the samples.
pub fn trapezoid_integral(samples: &[(f64, f64)], t: f64) -> f64 {
    if samples.is_empty() || t <= 0.0 {
        return 0.0;
    }
    let at = |s: f64| -> f64 {
        let i = samples.partition_point(|p| p.0 <= s);
        if i == 0 {
            return samples[0].1;
        }
        if i == samples.len() {
            return samples[i - 1].1;
        }
        let (a, b) = (samples[i - 1], samples[i]);
        if b.0 > a.0 {
            a.1 + (b.1 - a.1) * (s - a.0) / (b.0 - a.0)
        } else {
            b.1
        }
    };
    let mut knots = vec![0.0];
    knots.extend(samples.iter().map(|p| p.0).filter(|&s| s > 0.0 && s < t));
    knots.push(t);
    knots.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (at(w[0]) + at(w[1]))).sum()
}

fn series(inputs: &BoundInputs, tau: f64, t_grid: &[f64], kind: NormKind) -> BoundSeries {
    let d = inputs.dim as f64;
    let nj = inputs.set_size as f64;
    let mut out = BoundSeries::default();
    let integral: Option<Box<dyn Fn(f64) -> f64>> = match (inputs.l0_profile, inputs.dilated) {
        (Some(profile), _) => {
            let samples: Vec<(f64, f64)> = profile.iter().map(|(s, l0)| (*s, norm_sq(l0, kind))).collect();
            Some(Box::new(move |t| trapezoid_integral(&samples, t)))
        }
        (None, Some(dg)) => {
            let n0 = norm_sq(&dg.l_list[0], kind);
            Some(Box::new(move |t| t * n0))
        }
        (None, None) => None,
    };
    if let Some(int) = integral {
        out.bound_extrinsic = Some(t_grid.iter().map(|&t| 1.0 - 2.0 * d / nj * tau * int(t)).collect());
        out.bound_extrinsic_2d = Some(t_grid.iter().map(|&t| 1.0 - 2.0 * d * tau * int(t)).collect());
    }
    if let Some(g) = inputs.gens {
        let fl = norm_sq(&g.l.sub(&g.l_bar), kind);
        let lb = norm_sq(&g.l_bar, kind);
        let lbd = norm_sq(&g.l_hat_drift, kind);
        out.bound_intrinsic =
            Some(t_grid.iter().map(|&t| 1.0 - 2.0 / (d * nj) * tau * t * fl - t * t * lb / d).collect());
        out.bound_drift_intrinsic = Some(t_grid.iter().map(|&t| 1.0 - t * t * lbd / d).collect());
        if classify_unitarity(&g.l) == Unitarity::PurelyDephasing {
            let ln = sup_norm(&g.l, kind);
            out.bound_dephasing = Some(t_grid.iter().map(|&t| 1.0 - (1.0 - (-t * ln / nj).exp()).powi(2) / d).collect());
        }
    }
    out
}

/// `Γ = max{‖L‖, ‖L′‖, ‖L̄‖}` over whichever generators are present.
pub fn gamma(inputs: &BoundInputs, kind: NormKind) -> f64 {
    let mut g: f64 = 0.0;
    if let Some(gens) = inputs.gens {
        g = g.max(sup_norm(&gens.l, kind)).max(sup_norm(&gens.l_bar, kind));
    }
    if let Some(dg) = inputs.dilated {
        g = g.max(sup_norm(&dg.l, kind));
    }
    g
}

pub fn regime_flag(t: f64, tau: f64, gamma: f64) -> bool {
    REGIME_FACTOR * tau <= t && (gamma == 0.0 || REGIME_FACTOR * t * gamma <= 1.0)
}

pub fn bounds(inputs: &BoundInputs, tau: f64, t_grid: &[f64], norm_kind: NormKind) -> Result<BoundReport> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(DecoqError::InvalidSpec(format!("tau: must be finite and > 0, got {tau}")));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(DecoqError::InvalidSpec("t_grid: entries must be >= 0".into()));
    }
    if inputs.dim == 0 || inputs.set_size == 0 {
        return Err(DecoqError::InvalidSpec("bounds: dim and set_size must be >= 1".into()));
    }
    let gamma = gamma(inputs, norm_kind);
    let mut notes = Vec::new();
    if inputs.dilated.is_none() && inputs.l0_profile.is_none() {
        notes.push("bound_extrinsic absent: no dilation given".to_string());
    }
    if inputs.gens.is_none() {
        notes.push("intrinsic bounds absent: no system generator given".to_string());
    }
    Ok(BoundReport {
        gamma,
        tau,
        t_grid: t_grid.to_vec(),
        dim: inputs.dim,
        set_size: inputs.set_size,
        norm_kind,
        l_bar_norm: inputs.gens.map(|g| sup_norm(&g.l_bar, norm_kind)).unwrap_or(0.0),
        bounds: series(inputs, tau, t_grid, norm_kind),
        frobenius: series(inputs, tau, t_grid, NormKind::Frobenius),
        regime_flags: t_grid.iter().map(|&t| regime_flag(t, tau, gamma)).collect(),
        notes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Extrinsic,
    IntrinsicOrMixed,
    Inconclusive,
}

/// Fit of `1 − F̄_t = a + b·τ` at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitEvidence {
    pub t: f64,
    pub intercept: f64,
    pub intercept_stderr: f64,
    pub slope: f64,
    pub residual_rms: f64,
    /// `(1/d)t²‖L̄‖²`.
    pub intrinsic_reference: f64,
    pub classification: Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub classification: Classification,
    pub taus: Vec<f64>,
    pub evidence: Vec<FitEvidence>,
    pub notes: Vec<String>,
}

const GRID_TOL: f64 = 1e-12;

fn curve_tau(c: &FidelityCurve) -> Result<f64> {
    c.metadata
        .tau
        .filter(|t| *t > 0.0 && t.is_finite())
        .ok_or_else(|| DecoqError::InvalidSpec("fidelity curve: metadata.tau missing or not positive".into()))
}

/// Weighted least squares for `y = a + b·x`; returns `(a, σ_a, b, rms residual)`.
fn fit_line(x: &[f64], y: &[f64], sigma: &[f64]) -> (f64, f64, f64, f64) {
    let known = sigma.iter().all(|s| *s > 0.0);
    let w: Vec<f64> = if known { sigma.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; x.len()] };
    let s0: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = s0 * sxx - sx * sx;
    let a = (sxx * sy - sx * sxy) / det;
    let b = (s0 * sxy - sx * sy) / det;
    let resid: Vec<f64> = x.iter().zip(y).map(|(x, y)| y - a - b * x).collect();
    let rms = (resid.iter().map(|r| r * r).sum::<f64>() / x.len() as f64).sqrt();
    let var_a = if known {
        sxx / det
    } else {
        let dof = (x.len() as f64 - 2.0).max(1.0);
        let s2 = resid.iter().zip(&w).map(|(r, w)| w * r * r).sum::<f64>() / dof;
        s2 * sxx / det
    };
    (a, var_a.max(0.0).sqrt(), b, rms)
}

/// Extrapolates `1 − F̄_t` to `τ → 0` at every regime time and takes the majority reading.
pub fn classify(curves: &[FidelityCurve], report: &BoundReport) -> Result<Verdict> {
    if curves.is_empty() {
        return Err(DecoqError::InsufficientTau("no fidelity curves".into()));
    }
    let mut ordered: Vec<(f64, &FidelityCurve)> = curves.iter().map(|c| Ok((curve_tau(c)?, c))).collect::<Result<_>>()?;
    ordered.sort_by(|a, b| b.0.total_cmp(&a.0));
    let grid = &ordered[0].1.t_grid;
    for (_, c) in &ordered {
        c.validate()?;
        if c.mc_mean.len() != c.t_grid.len() {
            return Err(DecoqError::InvalidSpec("fidelity curve: mc_mean missing".into()));
        }
        let same = c.t_grid.len() == grid.len()
            && c.t_grid.iter().zip(grid).all(|(a, b)| (a - b).abs() <= GRID_TOL * a.abs().max(b.abs()).max(1.0));
        if !same {
            return Err(DecoqError::InvalidSpec("fidelity curves: mismatched t_grid".into()));
        }
    }
    let mut taus: Vec<f64> = ordered.iter().map(|p| p.0).collect();
    taus.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let (tmax, tmin) = (taus[0], *taus.last().unwrap());
    if taus.len() < 3 || tmax < 10.0 * tmin * (1.0 - 1e-9) {
        return Err(DecoqError::InsufficientTau(format!(
            "need >= 3 distinct tau spanning a decade, got {} in [{tmin:e}, {tmax:e}]",
            taus.len()
        )));
    }
    let d = report.dim as f64;
    let mut evidence = Vec::new();
    let mut notes = Vec::new();
    for (g, &t) in grid.iter().enumerate() {
        if !regime_flag(t, tmax, report.gamma) {
            continue;
        }
        let x: Vec<f64> = ordered.iter().map(|p| p.0).collect();
        let y: Vec<f64> = ordered.iter().map(|p| 1.0 - p.1.mc_mean[g]).collect();
        let s: Vec<f64> = ordered.iter().map(|p| p.1.mc_stderr.get(g).copied().unwrap_or(0.0)).collect();
        let (a, sa, b, rms) = fit_line(&x, &y, &s);
        let reference = t * t * report.l_bar_norm.powi(2) / d;
        let classification = if a <= 3.0 * sa + 1e-12 {
            Classification::Extrinsic
        } else if reference > 0.0 && a >= reference / 3.0 && a <= 3.0 * reference {
            Classification::IntrinsicOrMixed
        } else {
            Classification::Inconclusive
        };
        evidence.push(FitEvidence {
            t,
            intercept: a,
            intercept_stderr: sa,
            slope: b,
            residual_rms: rms,
            intrinsic_reference: reference,
            classification,
        });
    }
    let classification = if evidence.is_empty() {
        notes.push(format!(
            "no grid time satisfies {REGIME_FACTOR}·tau <= t and {REGIME_FACTOR}·t <= 1/Gamma (tau = {tmax:e}, Gamma = {:e})",
            report.gamma
        ));
        Classification::Inconclusive
    } else {
        let count = |c| evidence.iter().filter(|e| e.classification == c).count();
        let n = evidence.len();
        [Classification::Extrinsic, Classification::IntrinsicOrMixed]
            .into_iter()
            .find(|&c| 2 * count(c) > n)
            .unwrap_or(Classification::Inconclusive)
    };
    Ok(Verdict { classification, taus, evidence, notes })
}
