//! The locally risk-minimizing hedge integrand under partial information and
//! its residual processes.
//!
//! For the claim ξ = H(T, X_T, S_T) the price-observer decomposition
//!
//! ```text
//! ξ = U_0 + ∫ β dS + A_T
//! ```
//!
//! has integrand β = H + φ, where `H` is the Galtchouk-Kunita-Watanabe
//! integrand of the projected claim under the minimal measure and `φ` is the
//! jump correction from the sharp-bracket ratio between the residual and the
//! observable martingale part of S. Both are closed-form in this model:
//! finite sums over regimes and mark atoms built from the value function g,
//! its partials, the filter gain γ, the jump-update vectors w and w*, and
//! the two jump-size mixtures ν^H, ν^{H,*}:
//!
//! ```text
//! H = [ Σ_i s σ π*_i ( ∂g^i/∂s · s σ + Σ_j ∂g^i/∂p_j γ_j )
//!     + Σ_z ΔV(z) z ν*{z} ] / ( s²σ² + Σ_z z² ν*{z} )
//! ΔV(z) = Σ_i { Δg^i(z) (π*_i + w*_i(z)) + g^i w*_i(z) }
//! φ = α^H Σ_z ( ΔV(z) z - H z² ) z ν{z} / ( s²σ² + Σ_z z² ν{z} )
//! ```
//!
//! with `Δg^i(z) = g(t, x_i, s+z, π + w(z)) - g(t, x_i, s, π)` (the filter
//! argument of g jumps by its physical-measure Bayes increment). The variant
//! that jumps the filter argument with the starred Bayes rule instead is
//! also computed and its gap reported, since the two conventions coincide
//! only in degenerate cases.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{self, FilterTrajectory, SimplexVector};
use crate::mmm;
use crate::model::{Measure, ModelSpec};
use crate::oracle::{self, OrthoEstimate};
use crate::simulate::{exact_step_mean, Observables, Path};
use crate::valuefn::{value_process, GApprox};

/// The hedge triple at one evaluation point; `beta_h = h_h + phi_h` exactly.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HedgeTriple {
    pub h_h: f64,
    pub phi_h: f64,
    pub beta_h: f64,
}

/// Hedge triple plus diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct HedgeDetails {
    pub triple: HedgeTriple,
    /// β computed with the starred Bayes rule inside Δg.
    pub variant_beta: f64,
    pub alpha_h: f64,
}

/// Evaluate the hedge integrand at the left limit of a grid point.
pub fn hedge_integrand(
    spec: &ModelSpec,
    g: &GApprox,
    step: usize,
    s_minus: f64,
    pi: &SimplexVector,
    pi_star: &SimplexVector,
) -> Result<HedgeTriple> {
    Ok(hedge_core(spec, g, step, s_minus, pi, pi_star, false)?.triple)
}

/// As [`hedge_integrand`], additionally evaluating the starred-Bayes-jump
/// variant of the value-function filter argument and its gap.
pub fn hedge_integrand_detailed(
    spec: &ModelSpec,
    g: &GApprox,
    step: usize,
    s_minus: f64,
    pi: &SimplexVector,
    pi_star: &SimplexVector,
) -> Result<HedgeDetails> {
    hedge_core(spec, g, step, s_minus, pi, pi_star, true)
}

fn hedge_core(
    spec: &ModelSpec,
    g: &GApprox,
    step: usize,
    s_minus: f64,
    pi: &SimplexVector,
    pi_star: &SimplexVector,
    with_variant: bool,
) -> Result<HedgeDetails> {
    let d = spec.dim();
    let n = g.n_steps();
    if step >= n {
        return Err(Error::GridMismatch(format!(
            "hedge integrand needs an interior step, got {step} of {n}"
        )));
    }
    let t = spec.horizon * step as f64 / n as f64;
    let s = s_minus;
    let sigma = spec.sigma1(t, s);
    let p = pi.as_slice();
    let ps = pi_star.as_slice();

    // base values and continuous-block partials
    let gamma = filter::gain_gamma(spec, t, s, p);
    let mut g_base = vec![0.0; d];
    let mut diffusion_block = 0.0;
    for i in 0..d {
        g_base[i] = g.value(spec, step, i, s, p)?;
        if ps[i] == 0.0 {
            continue;
        }
        let ds = g.ds(spec, step, i, s, p)?;
        let dgamma = g.dp_dir(spec, step, i, s, p, &gamma)?;
        diffusion_block += s * sigma * ps[i] * (ds * s * sigma + dgamma);
    }

    // jump-size mixtures under both measures
    let nu_h = filter::nu_h_grouped(spec, Measure::Physical, t, s, p)?;
    let nu_h_star = filter::nu_h_grouped(spec, Measure::Minimal, t, s, ps)?;
    // union grid of sizes
    let mut sizes: Vec<f64> = Vec::new();
    for (z, _) in nu_h.iter().chain(nu_h_star.iter()) {
        if !sizes.iter().any(|z0| crate::model::same_jump_size(*z0, *z)) {
            sizes.push(*z);
        }
    }
    sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mass_at = |grid: &[(f64, f64)], z: f64| -> f64 {
        grid.iter()
            .find(|(z0, _)| crate::model::same_jump_size(*z0, z))
            .map(|(_, m)| *m)
            .unwrap_or(0.0)
    };

    let mut den_star = s * s * sigma * sigma;
    let mut den_p = s * s * sigma * sigma;
    for &z in &sizes {
        den_star += z * z * mass_at(&nu_h_star, z);
        den_p += z * z * mass_at(&nu_h, z);
    }

    let mut jump_block_star = 0.0; // Σ_z ΔV(z) z ν*{z}
    let mut jump_block_star_variant = 0.0;
    let mut phi_sum_parts: Vec<(f64, f64, f64)> = Vec::new(); // (z, ΔV(z), ν{z})
    for &z in &sizes {
        let m_star = mass_at(&nu_h_star, z);
        let m_p = mass_at(&nu_h, z);
        if m_star == 0.0 && m_p == 0.0 {
            continue;
        }
        // filter jumps: physical rule for the g argument, starred rule for
        // the weights
        let w_p = filter::w_vector(spec, Measure::Physical, t, s, z, p)?;
        let w_star = filter::w_vector(spec, Measure::Minimal, t, s, z, ps)?;
        let post_p = SimplexVector::from_nearly(p.iter().zip(&w_p).map(|(a, b)| a + b).collect())?;
        // variant: the g argument jumps by the starred Bayes rule applied to π
        let post_variant = if with_variant {
            let w_p_star_rule = filter::w_vector(spec, Measure::Minimal, t, s, z, p)?;
            Some(SimplexVector::from_nearly(
                p.iter().zip(&w_p_star_rule).map(|(a, b)| a + b).collect(),
            )?)
        } else {
            None
        };
        let mut dv = 0.0;
        let mut dv_variant = 0.0;
        for i in 0..d {
            let weight = ps[i] + w_star[i];
            // a regime ruled out by the observed size carries no weight and
            // its post-jump state is singular; skip the evaluation
            if weight != 0.0 {
                let g_jumped = g.value(spec, step, i, s + z, post_p.as_slice())?;
                dv += (g_jumped - g_base[i]) * weight;
                if let Some(pv) = &post_variant {
                    let g_jumped_var = g.value(spec, step, i, s + z, pv.as_slice())?;
                    dv_variant += (g_jumped_var - g_base[i]) * weight;
                }
            }
            dv += g_base[i] * w_star[i];
            dv_variant += g_base[i] * w_star[i];
        }
        jump_block_star += dv * z * m_star;
        jump_block_star_variant += dv_variant * z * m_star;
        phi_sum_parts.push((z, dv, m_p));
    }

    let h_h = (diffusion_block + jump_block_star) / den_star;
    let h_h_variant = (diffusion_block + jump_block_star_variant) / den_star;
    let alpha_h = mmm::alpha_h(spec, t, s, p);
    let mut phi_num = 0.0;
    let mut phi_num_variant = 0.0;
    for (z, dv, m_p) in &phi_sum_parts {
        phi_num += (dv * z - h_h * z * z) * z * m_p;
        phi_num_variant += (dv * z - h_h_variant * z * z) * z * m_p;
    }
    let phi_h = alpha_h * phi_num / den_p;
    let beta = h_h + phi_h;
    let variant_beta = h_h_variant + alpha_h * phi_num_variant / den_p;
    Ok(HedgeDetails {
        triple: HedgeTriple { h_h, phi_h, beta_h: beta },
        variant_beta,
        alpha_h,
    })
}

/// Continuous-trajectory specialization: with no price jumps and a claim
/// that does not read the hidden regime, the integrand collapses to the
/// filter-weighted price delta `Σ_i π*_i ∂g^i/∂s`.
pub fn continuous_case_integrand(
    spec: &ModelSpec,
    g: &GApprox,
    step: usize,
    s: f64,
    pi: &SimplexVector,
    pi_star: &SimplexVector,
) -> Result<f64> {
    if !spec.is_continuous() {
        return Err(Error::InvalidModel(
            "continuous_case_integrand requires K1 identically zero".into(),
        ));
    }
    if spec.payoff.depends_on_regime() {
        return Err(Error::InvalidModel(
            "continuous_case_integrand requires a claim on the price alone".into(),
        ));
    }
    let mut out = 0.0;
    for i in 0..spec.dim() {
        if pi_star.get(i) == 0.0 {
            continue;
        }
        out += pi_star.get(i) * g.ds(spec, step, i, s, pi.as_slice())?;
    }
    Ok(out)
}

/// Hedge triples at every interior grid point of an observed path.
pub fn hedge_series(
    spec: &ModelSpec,
    g: &GApprox,
    obs: &Observables<'_>,
    filter_p: &FilterTrajectory,
    filter_star: &FilterTrajectory,
) -> Result<Vec<HedgeTriple>> {
    let n = obs.n_steps();
    if g.n_steps() != n {
        return Err(Error::GridMismatch(format!(
            "hedge series needs matching grids: g has {}, path has {n}",
            g.n_steps()
        )));
    }
    (0..n)
        .map(|k| {
            hedge_integrand(
                spec,
                g,
                k,
                obs.prices[k],
                &filter_p.states[k],
                &filter_star.states[k],
            )
        })
        .collect()
}

/// Residual processes of one hedged path.
#[derive(Debug, Clone)]
pub struct PathHedge {
    pub series: Vec<HedgeTriple>,
    /// Observation-filtration value process V along the grid.
    pub value: Vec<f64>,
    /// Galtchouk-Kunita-Watanabe residual G along the grid (discrete).
    pub g_residual: Vec<f64>,
    /// Terminal residual A_T = ξ - U_0 - Σ β ΔS of the decomposition.
    pub a_terminal: f64,
    pub u0: f64,
    /// Terminal claim value along this path.
    pub claim: f64,
}

/// Hedge a single path: integrand series, value process, the discrete
/// residuals G_t = V_t - V_0 - Σ H ΔS and A_T = ξ - U_0 - Σ β ΔS.
pub fn residual_paths(
    spec: &ModelSpec,
    g: &GApprox,
    path: &Path,
    filter_p: &FilterTrajectory,
    filter_star: &FilterTrajectory,
) -> Result<PathHedge> {
    let obs = path.observables();
    let series = hedge_series(spec, g, &obs, filter_p, filter_star)?;
    let value = value_process(spec, g, &path.prices, filter_p, filter_star)?.values;
    let u0 = value[0];
    let n = path.n_steps();
    let mut g_residual = Vec::with_capacity(n + 1);
    g_residual.push(0.0);
    let mut hedge_h = 0.0;
    let mut hedge_beta = 0.0;
    for k in 0..n {
        let ds = path.prices[k + 1] - path.prices[k];
        hedge_h += series[k].h_h * ds;
        hedge_beta += series[k].beta_h * ds;
        g_residual.push(value[k + 1] - u0 - hedge_h);
    }
    let claim = spec.payoff_at(path.terminal_regime(), path.terminal_price());
    let a_terminal = claim - u0 - hedge_beta;
    Ok(PathHedge { series, value, g_residual, a_terminal, u0, claim })
}

/// Terminal residual only: A_T = ξ - V_0 - Σ β ΔS without materializing the
/// per-step report. This is the ensemble-scale path for the orthogonality
/// estimators.
pub fn residual_terminal(
    spec: &ModelSpec,
    g: &GApprox,
    path: &Path,
    filter_p: &FilterTrajectory,
    filter_star: &FilterTrajectory,
) -> Result<(f64, f64)> {
    let n = path.n_steps();
    if g.n_steps() != n {
        return Err(Error::GridMismatch("residual_terminal needs matching grids".into()));
    }
    let d = spec.dim();
    let mut u0 = 0.0;
    for i in 0..d {
        let w = filter_star.states[0].get(i);
        if w != 0.0 {
            u0 += w * g.value(spec, 0, i, path.prices[0], filter_p.states[0].as_slice())?;
        }
    }
    let mut hedge_beta = 0.0;
    for k in 0..n {
        let beta = hedge_integrand(
            spec,
            g,
            k,
            path.prices[k],
            &filter_p.states[k],
            &filter_star.states[k],
        )?
        .beta_h;
        hedge_beta += beta * (path.prices[k + 1] - path.prices[k]);
    }
    let claim = spec.payoff_at(path.terminal_regime(), path.terminal_price());
    Ok((claim - u0 - hedge_beta, u0))
}

/// The standard set of observable predictable test processes for the weak
/// orthogonality estimator: per step, functions of the step-start price and
/// filter.
pub fn test_processes(
    spec: &ModelSpec,
    obs: &Observables<'_>,
    filter_p: &FilterTrajectory,
) -> Vec<Vec<f64>> {
    let n = obs.n_steps();
    let mut phis = vec![Vec::with_capacity(n); 5];
    for k in 0..n {
        let u = obs.prices[k] / spec.s0;
        let p0 = filter_p.states[k].get(0);
        phis[0].push(1.0);
        phis[1].push(u);
        phis[2].push(p0);
        phis[3].push((u * u).min(4.0));
        phis[4].push(if u > 1.0 { 1.0 } else { 0.0 });
    }
    phis
}

/// Per-path discrete martingale integrals Σ φ_k ΔM_k for each test process,
/// with ΔM the price increment centered by its exact one-step conditional
/// mean (full-information side; uses the latent regime).
pub fn martingale_integrals(
    spec: &ModelSpec,
    path: &Path,
    phis: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let n = path.n_steps();
    let mut out = vec![0.0; phis.len()];
    for k in 0..n {
        let t = path.times[k];
        let h = path.times[k + 1] - t;
        let mean = exact_step_mean(spec, path.measure, t, h, path.regimes[k], path.prices[k])?;
        let dm = path.prices[k + 1] - mean;
        for (j, phi) in phis.iter().enumerate() {
            out[j] += phi[k] * dm;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Hedge report
// ---------------------------------------------------------------------------

/// Exportable hedge report: one representative path's series plus ensemble
/// statistics.
#[derive(Debug)]
pub struct HedgeReport {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub pi_star: Vec<Vec<f64>>,
    pub path: PathHedge,
    pub orthogonality: Vec<OrthoEstimate>,
    pub mean_a_terminal: f64,
    pub oracle_discrepancy: Option<f64>,
}

impl HedgeReport {
    /// CSV with columns t, S, p_1.., p*_1.., H_H, phi_H, beta_H, V_H, G.
    pub fn to_csv(&self) -> Result<String> {
        let d = self.pi[0].len();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let mut header = vec!["t".to_string(), "S".to_string()];
        header.extend((1..=d).map(|i| format!("p_{i}")));
        header.extend((1..=d).map(|i| format!("pstar_{i}")));
        header.extend(["H_H", "phi_H", "beta_H", "V_H", "G"].map(String::from));
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![format!("{}", self.times[k]), format!("{}", self.prices[k])];
            row.extend(self.pi[k].iter().map(|p| format!("{p}")));
            row.extend(self.pi_star[k].iter().map(|p| format!("{p}")));
            if k < self.path.series.len() {
                row.push(format!("{}", self.path.series[k].h_h));
                row.push(format!("{}", self.path.series[k].phi_h));
                row.push(format!("{}", self.path.series[k].beta_h));
            } else {
                row.extend([String::new(), String::new(), String::new()]);
            }
            row.push(format!("{}", self.path.value[k]));
            row.push(format!("{}", self.path.g_residual[k]));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf8"))
    }

    /// JSON summary (stable schema).
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            schema: &'a str,
            u0: f64,
            claim: f64,
            a_terminal: f64,
            mean_a_terminal: f64,
            orthogonality: &'a [OrthoEstimate],
            oracle_discrepancy: Option<f64>,
        }
        Ok(serde_json::to_string_pretty(&Summary {
            schema: "hedge-report/1",
            u0: self.path.u0,
            claim: self.path.claim,
            a_terminal: self.path.a_terminal,
            mean_a_terminal: self.mean_a_terminal,
            orthogonality: &self.orthogonality,
            oracle_discrepancy: self.oracle_discrepancy,
        })?)
    }
}

/// Build a hedge report for one path (ensemble statistics left to callers
/// that have an ensemble).
pub fn build_hedge_report(
    spec: &ModelSpec,
    g: &GApprox,
    path: &Path,
    filter_p: &FilterTrajectory,
    filter_star: &FilterTrajectory,
) -> Result<HedgeReport> {
    let hedged = residual_paths(spec, g, path, filter_p, filter_star)?;
    Ok(HedgeReport {
        times: path.times.clone(),
        prices: path.prices.clone(),
        pi: filter_p.states.iter().map(|s| s.as_slice().to_vec()).collect(),
        pi_star: filter_star.states.iter().map(|s| s.as_slice().to_vec()).collect(),
        mean_a_terminal: hedged.a_terminal,
        path: hedged,
        orthogonality: Vec::new(),
        oracle_discrepancy: None,
    })
}

// ---------------------------------------------------------------------------
// Projection equivalence
// ---------------------------------------------------------------------------

/// One refinement level of the projection-equivalence check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProjectionLevel {
    pub n_steps: usize,
    /// Analytic integrand at time zero (identical for the claim and its
    /// projection by construction: both route through the same value
    /// function).
    pub beta0: f64,
    /// Tree-recursion integrand for the hidden claim (exact-posterior leaf
    /// values).
    pub theta0_claim: f64,
    /// Tree-recursion integrand for the projected claim (filter leaf
    /// values).
    pub theta0_projected: f64,
    /// Relative gap between the two tree decompositions.
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionReport {
    pub levels: Vec<ProjectionLevel>,
}

/// Compare the decomposition of the hidden claim against the decomposition
/// of its filter projection on observation trees of increasing depth. The
/// two differ exactly by the gap between the Euler filter and the exact
/// discrete posterior, so the discrepancy decays first order.
pub fn projection_equivalence_check(
    spec: &ModelSpec,
    n_levels: &[usize],
    max_nodes: u64,
) -> Result<ProjectionReport> {
    let prior = SimplexVector::delta(spec.x0, spec.dim());
    let mut levels = Vec::with_capacity(n_levels.len());
    for &n in n_levels {
        let beta0 = beta0_from_lattice(spec, n, max_nodes)?;
        let (claim, projected) = oracle::discrete_fs_roots(spec, n, &prior, max_nodes)?;
        let scale = claim.theta0.abs().max(1e-12);
        levels.push(ProjectionLevel {
            n_steps: n,
            beta0,
            theta0_claim: claim.theta0,
            theta0_projected: projected.theta0,
            discrepancy: (claim.theta0 - projected.theta0).abs() / scale,
        });
    }
    Ok(ProjectionReport { levels })
}

/// Analytic hedge integrand at time zero evaluated with the lattice value
/// function of the same depth.
pub fn beta0_from_lattice(spec: &ModelSpec, n_steps: usize, max_nodes: u64) -> Result<f64> {
    let g = crate::valuefn::solve_g_lattice_with_budget(spec, n_steps, 2, max_nodes)?;
    let prior = SimplexVector::delta(spec.x0, spec.dim());
    Ok(hedge_integrand(spec, &g, 0, spec.s0, &prior, &prior)?.beta_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Payoff;
    use crate::scenarios;
    use crate::valuefn::solve_g_lattice;

    #[test]
    fn additivity_is_exact() {
        let spec = scenarios::two_regime_small();
        let g = solve_g_lattice(&spec, 4, 2).unwrap();
        let pi = SimplexVector::new(vec![0.55, 0.45]).unwrap();
        let pistar = SimplexVector::new(vec![0.48, 0.52]).unwrap();
        for step in 0..4 {
            let t = hedge_integrand(&spec, &g, step, 1.02, &pi, &pistar).unwrap();
            assert_eq!(t.beta_h, t.h_h + t.phi_h);
        }
    }

    #[test]
    fn self_replication_of_the_price() {
        // H = s with continuous dynamics: g = s, ∂g/∂s = 1, filter partials
        // vanish, so β = 1.
        let mut spec = scenarios::continuous_two_regime();
        spec.payoff = Payoff::Spot;
        let g = solve_g_lattice(&spec, 4, 2).unwrap();
        let pi = SimplexVector::new(vec![0.3, 0.7]).unwrap();
        let t = hedge_integrand(&spec, &g, 1, 1.08, &pi, &pi).unwrap();
        assert!((t.beta_h - 1.0).abs() < 1e-8, "beta = {}", t.beta_h);
        assert_eq!(t.phi_h, 0.0);
    }

    #[test]
    fn continuous_reduction_phi_vanishes_exactly() {
        let spec = scenarios::continuous_two_regime();
        let g = solve_g_lattice(&spec, 5, 2).unwrap();
        let pi = SimplexVector::new(vec![0.6, 0.4]).unwrap();
        let pistar = SimplexVector::new(vec![0.5, 0.5]).unwrap();
        let det = hedge_integrand_detailed(&spec, &g, 2, 0.97, &pi, &pistar).unwrap();
        assert_eq!(det.triple.phi_h, 0.0);
        let reduced = continuous_case_integrand(&spec, &g, 2, 0.97, &pi, &pistar).unwrap();
        // identical evaluations up to the assembly arithmetic
        assert!((det.triple.beta_h - reduced).abs() < 1e-10);
    }

    #[test]
    fn continuous_case_rejects_jump_models() {
        let spec = scenarios::two_regime_small();
        let g = solve_g_lattice(&spec, 3, 2).unwrap();
        let pi = SimplexVector::uniform(2);
        let err = continuous_case_integrand(&spec, &g, 0, 1.0, &pi, &pi).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));
    }

    #[test]
    fn complete_market_residuals_vanish() {
        // d = 1, no jumps, claim on the price alone: the market is complete,
        // G ≡ 0 and A_T = O(h) discretization noise.
        let mut spec = scenarios::single_regime_complete();
        spec.payoff = Payoff::Spot;
        let n = 10;
        let g = solve_g_lattice(&spec, n, 2).unwrap();
        let path = crate::simulate::simulate_path(&spec, n, Measure::Physical, 5).unwrap();
        let prior = SimplexVector::delta(0, 1);
        let obs = path.observables();
        let fp = filter::filter_path(&spec, &obs, Measure::Physical, &prior).unwrap();
        let fs = filter::filter_path(&spec, &obs, Measure::Minimal, &prior).unwrap();
        let hedged = residual_paths(&spec, &g, &path, &fp, &fs).unwrap();
        // claim = S_T is replicated exactly by β = 1 from V_0 = s0
        for gk in &hedged.g_residual {
            assert!(gk.abs() < 1e-8, "G residual {gk}");
        }
        assert!(hedged.a_terminal.abs() < 1e-8, "A_T = {}", hedged.a_terminal);
    }

    #[test]
    fn degenerate_projection_has_zero_discrepancy() {
        let spec = scenarios::single_regime_complete();
        let report = projection_equivalence_check(&spec, &[3], 1 << 22).unwrap();
        assert!(report.levels[0].discrepancy < 1e-12);
    }
}
