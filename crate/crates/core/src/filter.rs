//! Finite-dimensional Kushner-Stratonovich filtering of the hidden regime
//! from the observed price path, under the physical measure P and under the
//! minimal martingale measure P*.
//!
//! With d regimes the conditional law of `X_t` given the price history is the
//! probability vector `π_t = (π_t(f_1), .., π_t(f_d))`, `f_i = 1{x = x_i}`.
//! Between price jumps the vector follows the Euler step of
//!
//! ```text
//! dπ_i = b_i(t, S, π) dt + γ_i(t, S, π) dI_t - [∫ w_i(t, z) ν^H_t(dz)] dt
//! ```
//!
//! where `I` is the innovation process reconstructed from observables,
//! `b_i` is the regime-transition drift, `γ_i` the diffusion gain and the
//! last term compensates the jump correction. At an observed price jump of
//! size `z` the update is the exact Bayes posterior over (regime, atom)
//! pairs that can produce `z`; the same posterior equals `π_i + w_i(t, z)`
//! with `w_i` the Radon-Nikodym jump-correction function, and both forms are
//! implemented (the Bayes form is the one used in-path, the w-form is kept
//! as a cross-check).
//!
//! Under P* the indicator functions have no diffusion gain (they do not
//! depend on the price), so the continuous part is pure drift with the
//! starred rates; jumps use the same Bayes form with rates η*.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmm;
use crate::model::{group_jump_sizes, levy_kernel_with_rates, same_jump_size, Measure, ModelSpec};
use crate::simulate::Observables;

/// Tolerance on |Σ p_i - 1| maintained after every filter update.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let v = SimplexVector(p);
        if !v.is_on_simplex(SIMPLEX_TOL) {
            return Err(Error::Numerical(format!(
                "not a probability vector: {:?}",
                v.0
            )));
        }
        Ok(v)
    }

    /// Point mass at regime `i`.
    pub fn delta(i: usize, d: usize) -> Self {
        let mut p = vec![0.0; d];
        p[i] = 1.0;
        SimplexVector(p)
    }

    pub fn uniform(d: usize) -> Self {
        SimplexVector(vec![1.0 / d as f64; d])
    }

    /// Accept a vector that is on the simplex up to floating-point noise:
    /// components above -1e-12 are clamped to zero, then the vector is
    /// normalized. Larger negatives are an error.
    pub fn from_nearly(raw: Vec<f64>) -> Result<Self> {
        for x in &raw {
            if *x < -1e-12 || !x.is_finite() {
                return Err(Error::Numerical(format!("not a probability vector: {raw:?}")));
            }
        }
        Self::project(raw)
    }

    /// Clip negatives and renormalize. A component pushed negative by an
    /// explicit step is clipped to a subnormal floor rather than exact zero:
    /// it was alive before the step, and keeping an infinitesimal mass
    /// preserves the support so later jump observations from that regime
    /// stay explainable. Exact zeros (unreachable regimes) stay exact.
    /// Errors when the total mass is not positive.
    pub fn project(raw: Vec<f64>) -> Result<Self> {
        let clipped: Vec<f64> = raw.iter().map(|x| if *x < 0.0 { 1e-300 } else { *x }).collect();
        let total: f64 = clipped.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical(format!(
                "filter state degenerated: mass {total}"
            )));
        }
        Ok(SimplexVector(clipped.into_iter().map(|x| x / total).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_on_simplex(&self, tol: f64) -> bool {
        self.0.iter().all(|x| *x >= 0.0 && x.is_finite())
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// Mixture Σ p_i f(i).
    pub fn mix(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.0.iter().enumerate().map(|(i, p)| p * f(i)).sum()
    }
}

/// Filter states along a path grid plus the innovation increments of the
/// continuous observation component.
#[derive(Debug, Clone)]
pub struct FilterTrajectory {
    pub measure: Measure,
    /// One state per grid point; `states[0]` is the prior.
    pub states: Vec<SimplexVector>,
    /// One innovation increment per step.
    pub innovations: Vec<f64>,
}

impl FilterTrajectory {
    pub fn terminal(&self) -> &SimplexVector {
        self.states.last().expect("nonempty trajectory")
    }

    /// CSV export with columns t, p_1..p_d, dI.
    pub fn to_csv(&self, times: &[f64]) -> Result<String> {
        let d = self.states[0].dim();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("p_{i}")));
        header.push("dI".into());
        w.write_record(&header)?;
        for (k, state) in self.states.iter().enumerate() {
            let mut row = vec![format!("{}", times[k])];
            row.extend(state.as_slice().iter().map(|p| format!("{p}")));
            row.push(if k < self.innovations.len() {
                format!("{}", self.innovations[k])
            } else {
                String::new()
            });
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf8"))
    }
}

/// Per-atom rates at (t, regime, s) under a measure; the starred variant
/// evaluates α^F once.
pub fn regime_rates(spec: &ModelSpec, measure: Measure, t: f64, regime: usize, s: f64) -> Result<Vec<f64>> {
    match measure {
        Measure::Physical => Ok((0..spec.n_atoms()).map(|k| spec.marks.rate(k)).collect()),
        Measure::Minimal => mmm::eta_star_all(spec, t, regime, s),
    }
}

/// Regime-transition drift of the filter: `b_i = Σ_j p_j Σ_k rate_k(j) (1{dest(j,k)=i} - 1{i=j})`.
///
/// Under P the rates are the raw mark rates; under P* the starred rates,
/// which depend on the candidate regime. Components sum to zero.
pub fn drift_b(spec: &ModelSpec, measure: Measure, t: f64, s: f64, p: &[f64]) -> Vec<f64> {
    let d = spec.dim();
    let mut b = vec![0.0; d];
    for j in 0..d {
        if p[j] == 0.0 {
            continue;
        }
        let rates = regime_rates(spec, measure, t, j, s).unwrap_or_else(|_| vec![0.0; spec.n_atoms()]);
        for (k, rate) in rates.iter().enumerate() {
            let dest = spec.k0_dest(k, j);
            b[dest] += p[j] * rate;
            b[j] -= p[j] * rate;
        }
    }
    b
}

/// Diffusion gain of the physical-measure filter:
/// `γ_i = p_i (μ1(t, x_i, s) - Σ_j p_j μ1(t, x_j, s)) / σ1(t, s)`.
/// Components sum to zero. Under P* the indicator gain vanishes.
pub fn gain_gamma(spec: &ModelSpec, t: f64, s: f64, p: &[f64]) -> Vec<f64> {
    let sigma = spec.sigma1(t, s);
    let mean: f64 = spec.mu1_mixture(t, s, p);
    p.iter()
        .enumerate()
        .map(|(i, pi)| pi * (spec.mu1(t, i, s) - mean) / sigma)
        .collect()
}

/// Jump-size measure of the observed price under the requested measure and
/// filter state: atoms (z, ν^H({z})) with ν^H = Σ_j p_j ν(t, x_j, s, ·).
pub fn nu_h_grouped(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    s: f64,
    p: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut items: Vec<(f64, f64)> = Vec::new();
    for j in 0..spec.dim() {
        if p[j] == 0.0 {
            continue;
        }
        let rates = regime_rates(spec, measure, t, j, s)?;
        let kern = levy_kernel_with_rates(spec, t, j, s, |k| rates[k]);
        for e in kern.entries {
            items.push((e.size, p[j] * e.rate));
        }
    }
    Ok(group_jump_sizes(items.into_iter()))
}

/// Unnormalized Bayes weights over destination regimes for an observed jump
/// of size `z`: numer_i = Σ_j p_j Σ_{atoms k matching z from j, dest = i} rate_k,
/// denominator = ν^H({z}).
fn jump_posterior_parts(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    s_minus: f64,
    z: f64,
    p: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let d = spec.dim();
    let mut numer = vec![0.0; d];
    let mut denom = 0.0;
    for j in 0..d {
        if p[j] == 0.0 {
            continue;
        }
        let mut rates: Option<Vec<f64>> = None;
        for k in 0..spec.n_atoms() {
            let k1 = spec.k1(k, j, t, s_minus);
            if k1 == 0.0 {
                continue;
            }
            let zk = s_minus * k1;
            if same_jump_size(zk, z) {
                if rates.is_none() {
                    rates = Some(regime_rates(spec, measure, t, j, s_minus)?);
                }
                let rate = rates.as_ref().unwrap()[k];
                numer[spec.k0_dest(k, j)] += p[j] * rate;
                denom += p[j] * rate;
            }
        }
    }
    Ok((numer, denom))
}

/// Exact Bayes update of the filter at an observed price jump of size `z`
/// with pre-jump price `s_minus`.
///
/// posterior_i ∝ Σ_j p_j Σ_{k : s K1(ζ_k;t,x_j,s) = z, dest(j,k) = i} rate_k.
pub fn jump_update(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    s_minus: f64,
    z: f64,
    p: &SimplexVector,
) -> Result<SimplexVector> {
    if z == 0.0 {
        return Err(Error::InconsistentObservation("jump of size zero".into()));
    }
    let (numer, denom) = jump_posterior_parts(spec, measure, t, s_minus, z, p.as_slice())?;
    if !(denom > 0.0) {
        return Err(Error::InconsistentObservation(format!(
            "no (regime, atom) pair explains jump z = {z} at (t = {t}, s = {s_minus})"
        )));
    }
    SimplexVector::new(numer.into_iter().map(|n| n / denom).collect())
}

/// The jump-correction vector `w_i(t, z)` of the filtering equation, written
/// in its Radon-Nikodym form
///
/// ```text
/// w_i(t,z) = d π(f_i ν) / d ν^H (z) - π(f_i) + d π(L̄ f_i) / d ν^H (z)
/// ```
///
/// with all three terms evaluated as finite atom ratios. For the finite mark
/// space the posterior `π + w(z)` coincides with [`jump_update`]; equality of
/// the two routes is a standing cross-check.
pub fn w_vector(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    s_minus: f64,
    z: f64,
    p: &[f64],
) -> Result<Vec<f64>> {
    let d = spec.dim();
    // ν^H({z}) and, per i, the two numerators.
    let mut nu_h = 0.0;
    let mut first = vec![0.0; d]; // π(f_i ν)({z}) = p_i ν(t, x_i, s, {z})
    let mut third = vec![0.0; d]; // π(L̄ f_i)({z})
    for j in 0..d {
        if p[j] == 0.0 {
            continue;
        }
        let mut rates: Option<Vec<f64>> = None;
        for k in 0..spec.n_atoms() {
            let k1 = spec.k1(k, j, t, s_minus);
            if k1 == 0.0 {
                continue;
            }
            let zk = s_minus * k1;
            if !same_jump_size(zk, z) {
                continue;
            }
            if rates.is_none() {
                rates = Some(regime_rates(spec, measure, t, j, s_minus)?);
            }
            let rate = rates.as_ref().unwrap()[k];
            let dest = spec.k0_dest(k, j);
            nu_h += p[j] * rate;
            first[j] += p[j] * rate;
            // Δf_i at this atom: 1{dest = i} - 1{j = i}
            third[dest] += p[j] * rate;
            third[j] -= p[j] * rate;
        }
    }
    if !(nu_h > 0.0) {
        return Err(Error::InconsistentObservation(format!(
            "jump size z = {z} carries no mass under the filter state"
        )));
    }
    Ok((0..d)
        .map(|i| first[i] / nu_h - p[i] + third[i] / nu_h)
        .collect())
}

/// Jump update through the w-form; used as the cross-check route.
pub fn jump_update_w_form(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    s_minus: f64,
    z: f64,
    p: &SimplexVector,
) -> Result<SimplexVector> {
    let w = w_vector(spec, measure, t, s_minus, z, p.as_slice())?;
    SimplexVector::from_nearly(
        p.as_slice()
            .iter()
            .zip(&w)
            .map(|(pi, wi)| pi + wi)
            .collect(),
    )
}

/// Drift contributed by the jump compensator, `(∫ w_i(t,z) ν^H_t(dz))_i`,
/// summed over the finite size atoms of ν^H.
pub fn jump_compensator_drift(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    s: f64,
    p: &[f64],
) -> Result<Vec<f64>> {
    let d = spec.dim();
    let mut out = vec![0.0; d];
    for (z, mass) in nu_h_grouped(spec, measure, t, s, p)? {
        let w = w_vector(spec, measure, t, s, z, p)?;
        for i in 0..d {
            out[i] += w[i] * mass;
        }
    }
    Ok(out)
}

/// Price-jump drift seen by the observer under P*:
/// `Σ_i p_i b(t, x_i, s)` with `b(t,x,s) = Σ_k K1(ζ_k;t,x,s) η*_k(t,x,s)`.
fn star_drift_mixture(spec: &ModelSpec, t: f64, s: f64, p: &[f64]) -> Result<f64> {
    let mut out = 0.0;
    for j in 0..spec.dim() {
        if p[j] == 0.0 {
            continue;
        }
        out += p[j] * mmm::price_jump_drift_star(spec, t, j, s)?;
    }
    Ok(out)
}

/// Precomputed one-step continuous update: everything that does not depend
/// on the realized return is evaluated once, so a tree node can apply the
/// plan to each of its branches cheaply.
#[derive(Debug, Clone)]
pub struct ContinuousPlan {
    /// π + (b - jump compensator) h, before the innovation gain.
    base: Vec<f64>,
    gain: Vec<f64>,
    /// Second-order gain correction ½ (∂γ γ): multiplies (ΔI² - h). Keeps
    /// the scheme at pathwise order one against the exact discrete Bayes
    /// filter; the plain Euler gain alone is order one-half.
    gain2: Vec<f64>,
    /// Predicted log-return of the diffusion part over the step.
    predicted: f64,
    sigma: f64,
    h: f64,
}

impl ContinuousPlan {
    /// Apply the plan to an observed diffusion log-return; returns the
    /// updated state and the innovation increment.
    pub fn apply(&self, diffusion_log_return: f64) -> Result<(SimplexVector, f64)> {
        let di = (diffusion_log_return - self.predicted) / self.sigma;
        let di2 = di * di - self.h;
        let raw: Vec<f64> = (0..self.base.len())
            .map(|i| self.base[i] + self.gain[i] * di + self.gain2[i] * di2)
            .collect();
        Ok((SimplexVector::project(raw)?, di))
    }
}

/// Build the continuous-step plan at `(t, t+h)` from the step-start state.
///
/// The innovation is reconstructed from observables only:
///
/// ```text
/// P :  dI  = (d log S - (π(μ1) - σ1²/2) dt) / σ1
/// P*:  dI* = (d log S + (π*(b) + σ1²/2) dt) / σ1
/// ```
pub fn continuous_plan(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    h: f64,
    s_start: f64,
    state: &SimplexVector,
) -> Result<ContinuousPlan> {
    let p = state.as_slice();
    let sigma = spec.sigma1(t, s_start);
    let b = drift_b(spec, measure, t, s_start, p);
    let comp = jump_compensator_drift(spec, measure, t, s_start, p)?;
    let (predicted, gain, gain2) = match measure {
        Measure::Physical => {
            let mean: f64 = spec.mu1_mixture(t, s_start, p);
            let variance: f64 = p
                .iter()
                .enumerate()
                .map(|(i, pi)| {
                    let dev = spec.mu1(t, i, s_start) - mean;
                    pi * dev * dev
                })
                .sum();
            // ½ Σ_j (∂γ_i/∂π_j) γ_j = ½ π_i ((μ_i - π(μ))² - Var_π(μ)) / σ²
            let gain2: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(i, pi)| {
                    let dev = spec.mu1(t, i, s_start) - mean;
                    0.5 * pi * (dev * dev - variance) / (sigma * sigma)
                })
                .collect();
            (
                (mean - 0.5 * sigma * sigma) * h,
                gain_gamma(spec, t, s_start, p),
                gain2,
            )
        }
        Measure::Minimal => (
            // Indicator functions carry no price derivative: zero gain.
            -(star_drift_mixture(spec, t, s_start, p)? + 0.5 * sigma * sigma) * h,
            vec![0.0; p.len()],
            vec![0.0; p.len()],
        ),
    };
    let base: Vec<f64> = (0..p.len()).map(|i| p[i] + (b[i] - comp[i]) * h).collect();
    Ok(ContinuousPlan { base, gain, gain2, predicted, sigma, h })
}

/// One continuous filter step over `[t, t+h)` driven by the observed
/// diffusion log-return (jump contributions removed by the caller).
pub fn continuous_step(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    h: f64,
    s_start: f64,
    diffusion_log_return: f64,
    state: &SimplexVector,
) -> Result<(SimplexVector, f64)> {
    continuous_plan(spec, measure, t, h, s_start, state)?.apply(diffusion_log_return)
}

/// Run the filter along an observed path.
///
/// The path enters only through its observable part: grid prices and visible
/// jump events (time index, size, pre-jump price). Within a step the
/// continuous update runs first, then the exact Bayes update for each
/// observed jump in order.
pub fn filter_path(
    spec: &ModelSpec,
    obs: &Observables<'_>,
    measure: Measure,
    prior: &SimplexVector,
) -> Result<FilterTrajectory> {
    if prior.dim() != spec.dim() {
        return Err(Error::GridMismatch(format!(
            "prior dimension {} vs d = {}",
            prior.dim(),
            spec.dim()
        )));
    }
    let n = obs.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut innovations = Vec::with_capacity(n);
    states.push(prior.clone());
    let mut current = prior.clone();
    for step in 0..n {
        let t = obs.times[step];
        let h = obs.times[step + 1] - obs.times[step];
        let s_start = obs.prices[step];
        let r = obs.diffusion_log_return(step);
        let (next, di) = continuous_step(spec, measure, t, h, s_start, r, &current)?;
        current = next;
        innovations.push(di);
        for ev in obs.events_at(step) {
            current = jump_update(spec, measure, t, ev.pre_price, ev.size, &current)?;
        }
        states.push(current.clone());
    }
    Ok(FilterTrajectory { measure, states, innovations })
}

/// Innovation increments of a filtered path; recomputed from observables so
/// a trajectory produced elsewhere can be audited.
pub fn innovation_increments(
    spec: &ModelSpec,
    obs: &Observables<'_>,
    traj: &FilterTrajectory,
) -> Result<Vec<f64>> {
    let n = obs.n_steps();
    if traj.states.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "trajectory has {} states for {} steps",
            traj.states.len(),
            n
        )));
    }
    let mut out = Vec::with_capacity(n);
    for step in 0..n {
        let t = obs.times[step];
        let h = obs.times[step + 1] - obs.times[step];
        let s_start = obs.prices[step];
        let sigma = spec.sigma1(t, s_start);
        let r = obs.diffusion_log_return(step);
        let p = traj.states[step].as_slice();
        let predicted = match traj.measure {
            Measure::Physical => (spec.mu1_mixture(t, s_start, p) - 0.5 * sigma * sigma) * h,
            Measure::Minimal => {
                -(star_drift_mixture(spec, t, s_start, p)? + 0.5 * sigma * sigma) * h
            }
        };
        out.push((r - predicted) / sigma);
    }
    Ok(out)
}
