//! Structure-condition quantities and the minimal martingale measure.
//!
//! The price semimartingale `S = S_0 + M + ∫ α d⟨M⟩` has
//!
//! ```text
//! α^F(t,x,s) = (s μ1 + ∫ z ν(dz)) / (s² σ1² + ∫ z² ν(dz))
//! d⟨M⟩/dt   =  s² σ1² + ∫ z² ν(dz)
//! ```
//!
//! with ν the price-jump kernel at `(t, x, s)` and all integrals finite atom
//! sums. Projecting the kernel and the drift through a filter state gives the
//! observable-filtration analogue `α^H`. The minimal martingale measure has
//! density `L = E(-∫ α^F dM)`, a Doléans-Dade exponential propagated here in
//! log space for the continuous part, and it tilts the mark rates to
//! `η*_k = (1 - α^F s K1(ζ_k)) η_k`.
//!
//! Admissibility (`α^F ΔM < 1` at every kernel atom, so `L > 0` and
//! `η* ≥ 0`) is checked by the same grid sweep as model validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{levy_kernel, ModelSpec};
use crate::simulate::Path;

/// α^F, α^H and the two sharp-bracket densities at one evaluation point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StructureQuantities {
    pub alpha_f: f64,
    pub alpha_h: f64,
    /// d⟨M⟩/dt at (t, x, s).
    pub m_bracket_density: f64,
    /// d⟨N⟩/dt at (t, s, π).
    pub n_bracket_density: f64,
}

/// Drift-to-variance ratio α^F(t, x, s) of the structure condition under
/// full information.
pub fn alpha_f(spec: &ModelSpec, t: f64, regime: usize, s: f64) -> f64 {
    let sigma = spec.sigma1(t, s);
    let mut num = s * spec.mu1(t, regime, s);
    let mut den = s * s * sigma * sigma;
    for k in 0..spec.n_atoms() {
        let z = s * spec.k1(k, regime, t, s);
        if z != 0.0 {
            let rate = spec.marks.rate(k);
            num += z * rate;
            den += z * z * rate;
        }
    }
    num / den
}

/// d⟨M⟩/dt at (t, x, s); strictly positive since σ1 ≥ c2 > 0.
pub fn m_bracket_density(spec: &ModelSpec, t: f64, regime: usize, s: f64) -> f64 {
    let sigma = spec.sigma1(t, s);
    let kern = levy_kernel(spec, t, regime, s);
    s * s * sigma * sigma + kern.entries.iter().map(|e| e.size * e.size * e.rate).sum::<f64>()
}

/// α^H(t, s, π): the observable-filtration drift-to-variance ratio, with the
/// drift and jump kernel averaged through the filter state.
pub fn alpha_h(spec: &ModelSpec, t: f64, s: f64, p: &[f64]) -> f64 {
    let sigma = spec.sigma1(t, s);
    let mut num = s * spec.mu1_mixture(t, s, p);
    let mut den = s * s * sigma * sigma;
    for (j, pj) in p.iter().enumerate() {
        if *pj == 0.0 {
            continue;
        }
        let kern = levy_kernel(spec, t, j, s);
        for e in &kern.entries {
            num += pj * e.size * e.rate;
            den += pj * e.size * e.size * e.rate;
        }
    }
    num / den
}

/// d⟨N⟩/dt at (t, s, π).
pub fn n_bracket_density(spec: &ModelSpec, t: f64, s: f64, p: &[f64]) -> f64 {
    let sigma = spec.sigma1(t, s);
    let mut den = s * s * sigma * sigma;
    for (j, pj) in p.iter().enumerate() {
        if *pj == 0.0 {
            continue;
        }
        let kern = levy_kernel(spec, t, j, s);
        for e in &kern.entries {
            den += pj * e.size * e.size * e.rate;
        }
    }
    den
}

pub fn structure_quantities(
    spec: &ModelSpec,
    t: f64,
    regime: usize,
    s: f64,
    p: &[f64],
) -> StructureQuantities {
    StructureQuantities {
        alpha_f: alpha_f(spec, t, regime, s),
        alpha_h: alpha_h(spec, t, s, p),
        m_bracket_density: m_bracket_density(spec, t, regime, s),
        n_bracket_density: n_bracket_density(spec, t, s, p),
    }
}

/// Tilted mark rate η*_k(t, x, s) = (1 - α^F s K1(ζ_k; t, x, s)) η_k.
///
/// Errors when the factor is negative (admissibility violated at the point).
pub fn eta_star(spec: &ModelSpec, t: f64, regime: usize, s: f64, atom: usize) -> Result<f64> {
    let k1 = spec.k1(atom, regime, t, s);
    if k1 == 0.0 {
        return Ok(spec.marks.rate(atom));
    }
    let factor = 1.0 - alpha_f(spec, t, regime, s) * s * k1;
    if factor < 0.0 {
        return Err(Error::Admissibility(format!(
            "eta* negative at (t={t}, x={regime}, s={s}), atom {atom}: factor {factor}"
        )));
    }
    Ok(factor * spec.marks.rate(atom))
}

/// All starred rates at a point, evaluating α^F once.
pub fn eta_star_all(spec: &ModelSpec, t: f64, regime: usize, s: f64) -> Result<Vec<f64>> {
    let af = alpha_f(spec, t, regime, s);
    (0..spec.n_atoms())
        .map(|k| {
            let k1 = spec.k1(k, regime, t, s);
            let factor = 1.0 - af * s * k1;
            if factor < 0.0 {
                return Err(Error::Admissibility(format!(
                    "eta* negative at (t={t}, x={regime}, s={s}), atom {k}: factor {factor}"
                )));
            }
            Ok(factor * spec.marks.rate(k))
        })
        .collect()
}

/// Price-jump kernel with the starred rates.
pub fn levy_kernel_star(spec: &ModelSpec, t: f64, regime: usize, s: f64) -> Result<crate::model::LevyKernel> {
    // Evaluate rates first so errors surface before building the kernel.
    let mut rates = Vec::with_capacity(spec.n_atoms());
    for k in 0..spec.n_atoms() {
        rates.push(eta_star(spec, t, regime, s, k)?);
    }
    Ok(crate::model::levy_kernel_with_rates(spec, t, regime, s, |k| rates[k]))
}

/// Compensator drift of the price jumps under the minimal measure:
/// `b(t,x,s) = Σ_k K1(ζ_k;t,x,s) η*_k(t,x,s)`.
pub fn price_jump_drift_star(spec: &ModelSpec, t: f64, regime: usize, s: f64) -> Result<f64> {
    if spec.is_continuous() {
        return Ok(0.0);
    }
    let rates = eta_star_all(spec, t, regime, s)?;
    let mut out = 0.0;
    for (k, rate) in rates.iter().enumerate() {
        let k1 = spec.k1(k, regime, t, s);
        if k1 != 0.0 {
            out += k1 * rate;
        }
    }
    Ok(out)
}

/// Outcome of the admissibility sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub passed: bool,
    /// max over grid points and kernel atoms of α^F(t,x,s) · z.
    pub worst_value: f64,
    pub worst_point: Option<(f64, usize, f64)>,
    /// min over grid points and atoms of η*_k.
    pub min_eta_star: f64,
    /// max over grid points of the total starred jump rate (sets the
    /// step-size rule under the minimal measure).
    pub max_total_rate_star: f64,
}

/// Check `α^F · ΔM < 1` at every (grid point, kernel atom); the exponential
/// moment side condition is implied by the finite total mark mass.
pub fn admissibility_check(spec: &ModelSpec, grid_density: usize) -> Result<AdmissibilityReport> {
    let n = grid_density.max(2);
    let b = &spec.coeffs.bounds;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_point = None;
    let mut min_star = f64::INFINITY;
    let mut max_total_star = 0.0f64;
    for i in 0..n {
        let t = spec.horizon * i as f64 / (n - 1) as f64;
        for x in 0..spec.dim() {
            for jprice in 0..n {
                let s = b.price_lo + (b.price_hi - b.price_lo) * jprice as f64 / (n - 1) as f64;
                let af = alpha_f(spec, t, x, s);
                if !af.is_finite() {
                    return Err(Error::ValidationFailed(format!(
                        "alpha^F not finite at (t={t}, x={x}, s={s})"
                    )));
                }
                let kern = levy_kernel(spec, t, x, s);
                let mut total_star = 0.0;
                for e in &kern.entries {
                    let v = af * e.size;
                    if v > worst {
                        worst = v;
                        worst_point = Some((t, x, s));
                    }
                    let star = (1.0 - v) * e.rate;
                    if star < min_star {
                        min_star = star;
                    }
                    total_star += star.max(0.0);
                }
                // Atoms invisible at this point keep their raw rate.
                for k in 0..spec.n_atoms() {
                    if spec.k1(k, x, t, s) == 0.0 {
                        total_star += spec.marks.rate(k);
                    }
                }
                if total_star > max_total_star {
                    max_total_star = total_star;
                }
            }
        }
    }
    if worst == f64::NEG_INFINITY {
        // No visible atoms anywhere: vacuously admissible.
        worst = 0.0;
        min_star = spec.marks.total_mass();
        max_total_star = spec.marks.total_mass();
    }
    Ok(AdmissibilityReport {
        passed: worst < 1.0,
        worst_value: worst,
        worst_point,
        min_eta_star: min_star,
        max_total_rate_star: max_total_star,
    })
}

/// Doléans-Dade density values of the minimal measure along a path grid.
#[derive(Debug, Clone)]
pub struct DensityPath {
    /// One value per grid point; `values[0] = 1`.
    pub values: Vec<f64>,
}

impl DensityPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("nonempty density path")
    }
}

/// Propagate `L = E(-∫ α^F dM)` along a physically simulated path.
///
/// Per continuous step the log-density gains
/// `-α^F s σ1 ΔW - ½ (α^F s σ1)² h + α^F (∫ z ν(dz)) h`
/// (Brownian part, its compensator, and the finite-variation part carried by
/// the compensated jump integral of M); at each jump the density multiplies
/// by `1 - α^F z`.
pub fn doleans_density(spec: &ModelSpec, path: &Path) -> Result<DensityPath> {
    if path.measure != crate::model::Measure::Physical {
        return Err(Error::InvalidModel(
            "doleans_density expects a path simulated under the physical measure".into(),
        ));
    }
    let n = path.n_steps();
    let mut values = Vec::with_capacity(n + 1);
    let mut log_l = 0.0;
    let mut jump_factor_log = 0.0;
    values.push(1.0);
    for step in 0..n {
        let t = path.times[step];
        let h = path.times[step + 1] - path.times[step];
        let s = path.prices[step];
        let x = path.regimes[step];
        let af = alpha_f(spec, t, x, s);
        let sigma = spec.sigma1(t, s);
        let kern = levy_kernel(spec, t, x, s);
        let jump_mean: f64 = kern.entries.iter().map(|e| e.size * e.rate).sum();
        let vol = af * s * sigma;
        log_l += -vol * path.brownian[step] - 0.5 * vol * vol * h + af * jump_mean * h;
        for ev in path.events_at(step) {
            if ev.size != 0.0 {
                // α^F at the left limit of the jump.
                let af_jump = alpha_f(spec, t, ev.regime_before, ev.pre_price);
                let factor = 1.0 - af_jump * ev.size;
                if factor <= 0.0 {
                    return Err(Error::Admissibility(format!(
                        "nonpositive density factor {factor} at step {step}"
                    )));
                }
                jump_factor_log += factor.ln();
            }
        }
        values.push((log_l + jump_factor_log).exp());
    }
    Ok(DensityPath { values })
}
