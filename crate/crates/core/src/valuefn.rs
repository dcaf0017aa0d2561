//! The value function `g(t, x, s, π)` of the projected claim and the value
//! process it induces.
//!
//! `g(t, x, s, p)` is the minimal-measure conditional expectation of the
//! projected terminal claim `π_T(H)` given full information at `(t, x, s)`
//! with the physical-measure filter sitting at `p`. Two representations:
//!
//! * **Lattice** — exact backward expectation of the discretized dynamics on
//!   the observation tree (see [`crate::oracle`]), evaluated on demand from
//!   any state by depth-first recursion. This is oracle-grade: no
//!   interpolation, no sampling noise, exact for the discrete model.
//! * **Regression** — least-squares Monte-Carlo projection of the simulated
//!   terminal value on a polynomial basis in (price, filter), fitted per
//!   time slice and per regime. Scales past tree budgets; carries analytic
//!   basis partials.
//!
//! The value process under the observation filtration is the filter-weighted
//! mixture `V_t = Σ_i g(t, x_i, S_t, π_t) π*_t(f_i)`.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterTrajectory, SimplexVector};
use crate::model::ModelSpec;
use crate::oracle::{branch_bound, lean_children, lstsq_ordered, uniform_times};
use crate::simulate::PathSet;

/// Default node budget for lattice evaluation.
pub const DEFAULT_LATTICE_MAX_NODES: u64 = 4_000_000;

/// Relative finite-difference step for lattice partials.
pub const FD_RELATIVE_STEP: f64 = 1e-4;

// ---------------------------------------------------------------------------
// Lattice representation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeParams {
    pub n_steps: usize,
    /// Diffusion branch points per step; the engine implements the two-point
    /// scheme.
    pub price_branching: usize,
    pub max_nodes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LatticeG {
    pub params: LatticeParams,
    #[serde(skip, default)]
    cache: Mutex<HashMap<(usize, usize, u64, Vec<u64>), f64>>,
}

impl LatticeG {
    fn value(&self, spec: &ModelSpec, step: usize, regime: usize, s: f64, p: &[f64]) -> Result<f64> {
        let key = (
            step,
            regime,
            s.to_bits(),
            p.iter().map(|x| x.to_bits()).collect::<Vec<u64>>(),
        );
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let times = uniform_times(spec, self.params.n_steps);
        let pi = SimplexVector::new(p.to_vec())?;
        let weights: Vec<f64> = (0..spec.dim()).map(|i| if i == regime { 1.0 } else { 0.0 }).collect();
        let v = lattice_expectation(spec, &times, self.params.n_steps, step, s, &pi, &weights, 0)?;
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }
}

/// E*[π_T(H) | X = regime-law, S = s, π = p] by exhaustive recursion over
/// the remaining subtree, weighting branches with the minimal-measure
/// probabilities of the conditional regime law.
#[allow(clippy::too_many_arguments)]
fn lattice_expectation(
    spec: &ModelSpec,
    times: &[f64],
    n_steps: usize,
    step: usize,
    s: f64,
    pi: &SimplexVector,
    weights: &[f64],
    depth: usize,
) -> Result<f64> {
    if step == n_steps {
        return Ok((0..spec.dim())
            .map(|i| pi.get(i) * spec.payoff_at(i, s))
            .sum());
    }
    let kids = lean_children(spec, times, step, s, pi, weights, crate::model::Measure::Minimal)?;
    let values: Vec<f64> = if depth < 2 && n_steps - step >= 5 {
        use rayon::prelude::*;
        kids.par_iter()
            .map(|c| lattice_expectation(spec, times, n_steps, step + 1, c.s, &c.pi, &c.weights, depth + 1))
            .collect::<Result<_>>()?
    } else {
        kids.iter()
            .map(|c| lattice_expectation(spec, times, n_steps, step + 1, c.s, &c.pi, &c.weights, depth + 1))
            .collect::<Result<_>>()?
    };
    Ok(kids.iter().zip(&values).map(|(c, v)| c.prob * v).sum())
}

// ---------------------------------------------------------------------------
// Regression representation
// ---------------------------------------------------------------------------

/// Least-squares representation: per time slice and regime, a coefficient
/// vector over the polynomial basis in `(s / price_scale, p_1..p_{d-1})`.
/// The terminal slice is not fitted: the final condition
/// `g(T, x, s, p) = Σ_i p_i H(T, x_i, s)` is evaluated exactly.
#[derive(Debug, Serialize, Deserialize)]
pub struct RegressionG {
    pub n_steps: usize,
    pub basis_degree: usize,
    pub price_scale: f64,
    /// `[slice][regime] -> coefficients`, slices `0..n_steps`.
    pub coeffs: Vec<Vec<Vec<f64>>>,
    /// In-sample R² per slice and regime.
    pub r_squared: Vec<Vec<f64>>,
    /// Retained design rank per slice and regime (pivoting drops the rest).
    pub ranks: Vec<Vec<usize>>,
    #[serde(skip, default)]
    exponents_cache: std::sync::OnceLock<Vec<Vec<usize>>>,
}

impl Clone for RegressionG {
    fn clone(&self) -> Self {
        RegressionG {
            n_steps: self.n_steps,
            basis_degree: self.basis_degree,
            price_scale: self.price_scale,
            coeffs: self.coeffs.clone(),
            r_squared: self.r_squared.clone(),
            ranks: self.ranks.clone(),
            exponents_cache: std::sync::OnceLock::new(),
        }
    }
}

/// Exponent tuples (price exponent, filter exponents) with total degree at
/// most `degree`, in a fixed deterministic order.
pub fn basis_exponents(d: usize, degree: usize) -> Vec<Vec<usize>> {
    let nvars = 1 + d.saturating_sub(1);
    let mut out = Vec::new();
    let mut current = vec![0usize; nvars];
    fn walk(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, var: usize, left: usize) {
        if var == current.len() {
            out.push(current.clone());
            return;
        }
        for e in 0..=left {
            current[var] = e;
            walk(out, current, var + 1, left - e);
        }
        current[var] = 0;
    }
    walk(&mut out, &mut current, 0, degree);
    out.sort_by_key(|e| (e.iter().sum::<usize>(), e.clone()));
    out
}

fn eval_basis(exponents: &[Vec<usize>], u: f64, p: &[f64]) -> Vec<f64> {
    exponents
        .iter()
        .map(|e| {
            let mut v = u.powi(e[0] as i32);
            for (j, &ej) in e.iter().skip(1).enumerate() {
                v *= p[j].powi(ej as i32);
            }
            v
        })
        .collect()
}

fn eval_basis_du(exponents: &[Vec<usize>], u: f64, p: &[f64]) -> Vec<f64> {
    exponents
        .iter()
        .map(|e| {
            if e[0] == 0 {
                return 0.0;
            }
            let mut v = e[0] as f64 * u.powi(e[0] as i32 - 1);
            for (j, &ej) in e.iter().skip(1).enumerate() {
                v *= p[j].powi(ej as i32);
            }
            v
        })
        .collect()
}

fn eval_basis_dpj(exponents: &[Vec<usize>], u: f64, p: &[f64], j: usize) -> Vec<f64> {
    exponents
        .iter()
        .map(|e| {
            let ej = e[1 + j];
            if ej == 0 {
                return 0.0;
            }
            let mut v = ej as f64 * u.powi(e[0] as i32);
            for (l, &el) in e.iter().skip(1).enumerate() {
                if l == j {
                    v *= p[l].powi(el as i32 - 1);
                } else {
                    v *= p[l].powi(el as i32);
                }
            }
            v
        })
        .collect()
}

impl RegressionG {
    pub fn new(
        n_steps: usize,
        basis_degree: usize,
        price_scale: f64,
        coeffs: Vec<Vec<Vec<f64>>>,
        r_squared: Vec<Vec<f64>>,
        ranks: Vec<Vec<usize>>,
    ) -> Self {
        RegressionG {
            n_steps,
            basis_degree,
            price_scale,
            coeffs,
            r_squared,
            ranks,
            exponents_cache: std::sync::OnceLock::new(),
        }
    }

    fn chart(p: &[f64]) -> &[f64] {
        &p[..p.len() - 1]
    }

    fn exponents(&self, d: usize) -> &[Vec<usize>] {
        self.exponents_cache
            .get_or_init(|| basis_exponents(d, self.basis_degree))
    }

    fn value(&self, spec: &ModelSpec, step: usize, regime: usize, s: f64, p: &[f64]) -> f64 {
        if step >= self.n_steps {
            return (0..spec.dim()).map(|i| p[i] * spec.payoff_at(i, s)).sum();
        }
        let exps = self.exponents(spec.dim());
        let b = eval_basis(exps, s / self.price_scale, Self::chart(p));
        self.coeffs[step][regime].iter().zip(&b).map(|(c, x)| c * x).sum()
    }

    fn ds(&self, spec: &ModelSpec, step: usize, regime: usize, s: f64, p: &[f64]) -> f64 {
        if step >= self.n_steps {
            // exact final condition, differentiated by central difference
            let eps = FD_RELATIVE_STEP * s;
            let hi: f64 = (0..spec.dim()).map(|i| p[i] * spec.payoff_at(i, s + eps)).sum();
            let lo: f64 = (0..spec.dim()).map(|i| p[i] * spec.payoff_at(i, s - eps)).sum();
            return (hi - lo) / (2.0 * eps);
        }
        let exps = self.exponents(spec.dim());
        let b = eval_basis_du(exps, s / self.price_scale, Self::chart(p));
        let du: f64 = self.coeffs[step][regime].iter().zip(&b).map(|(c, x)| c * x).sum();
        du / self.price_scale
    }

    fn dp_dir(&self, spec: &ModelSpec, step: usize, regime: usize, s: f64, p: &[f64], v: &[f64]) -> f64 {
        if step >= self.n_steps {
            return (0..spec.dim()).map(|i| v[i] * spec.payoff_at(i, s)).sum();
        }
        let exps = self.exponents(spec.dim());
        let u = s / self.price_scale;
        let chart = Self::chart(p);
        let mut out = 0.0;
        for j in 0..p.len() - 1 {
            if v[j] == 0.0 {
                continue;
            }
            let b = eval_basis_dpj(exps, u, chart, j);
            let dj: f64 = self.coeffs[step][regime].iter().zip(&b).map(|(c, x)| c * x).sum();
            out += v[j] * dj;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// GApprox
// ---------------------------------------------------------------------------

/// A representation of the value function with partial-derivative
/// evaluators.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GApprox {
    Lattice(LatticeG),
    Regression(RegressionG),
}

#[derive(Serialize, Deserialize)]
struct GApproxFile {
    schema: String,
    g: GApprox,
}

impl GApprox {
    pub fn n_steps(&self) -> usize {
        match self {
            GApprox::Lattice(l) => l.params.n_steps,
            GApprox::Regression(r) => r.n_steps,
        }
    }

    /// g(t_step, x_regime, s, p).
    pub fn value(&self, spec: &ModelSpec, step: usize, regime: usize, s: f64, p: &[f64]) -> Result<f64> {
        match self {
            GApprox::Lattice(l) => l.value(spec, step, regime, s, p),
            GApprox::Regression(r) => Ok(r.value(spec, step, regime, s, p)),
        }
    }

    /// ∂g/∂s: analytic for the regression basis, central finite difference
    /// with relative step 1e-4 for the lattice.
    pub fn ds(&self, spec: &ModelSpec, step: usize, regime: usize, s: f64, p: &[f64]) -> Result<f64> {
        match self {
            GApprox::Lattice(l) => {
                let eps = FD_RELATIVE_STEP * s;
                let hi = l.value(spec, step, regime, s + eps, p)?;
                let lo = l.value(spec, step, regime, s - eps, p)?;
                Ok((hi - lo) / (2.0 * eps))
            }
            GApprox::Regression(r) => Ok(r.ds(spec, step, regime, s, p)),
        }
    }

    /// Directional filter derivative Σ_j v_j ∂g/∂p_j for a tangent direction
    /// (Σ_j v_j = 0), so the probe stays on the simplex plane.
    pub fn dp_dir(
        &self,
        spec: &ModelSpec,
        step: usize,
        regime: usize,
        s: f64,
        p: &[f64],
        v: &[f64],
    ) -> Result<f64> {
        let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if scale == 0.0 {
            return Ok(0.0);
        }
        match self {
            GApprox::Lattice(l) => {
                let eps = FD_RELATIVE_STEP / scale;
                let hi: Vec<f64> = p.iter().zip(v).map(|(pi, vi)| pi + eps * vi).collect();
                let lo: Vec<f64> = p.iter().zip(v).map(|(pi, vi)| pi - eps * vi).collect();
                let vh = l.value(spec, step, regime, s, &hi)?;
                let vl = l.value(spec, step, regime, s, &lo)?;
                Ok((vh - vl) / (2.0 * eps))
            }
            GApprox::Regression(r) => Ok(r.dp_dir(spec, step, regime, s, p, v)),
        }
    }

    /// Chart partial ∂g/∂p_j with p_d dependent (direction e_j - e_d).
    pub fn dp_chart(&self, spec: &ModelSpec, step: usize, regime: usize, s: f64, p: &[f64], j: usize) -> Result<f64> {
        let d = p.len();
        let mut v = vec![0.0; d];
        v[j] = 1.0;
        v[d - 1] -= 1.0;
        self.dp_dir(spec, step, regime, s, p, &v)
    }

    /// Largest relative disagreement between analytic and finite-difference
    /// partials at the given probe points (regression only; the lattice has
    /// no analytic partials to compare).
    pub fn partials_disagreement(
        &self,
        spec: &ModelSpec,
        probes: &[(usize, usize, f64, Vec<f64>)],
    ) -> Result<f64> {
        let GApprox::Regression(r) = self else {
            return Ok(0.0);
        };
        let mut worst = 0.0f64;
        for (step, regime, s, p) in probes {
            if *step >= r.n_steps {
                continue;
            }
            let analytic = r.ds(spec, *step, *regime, *s, p);
            let eps = FD_RELATIVE_STEP * s;
            let fd = (r.value(spec, *step, *regime, s + eps, p)
                - r.value(spec, *step, *regime, s - eps, p))
                / (2.0 * eps);
            let denom = analytic.abs().max(fd.abs()).max(1e-9);
            worst = worst.max((analytic - fd).abs() / denom);
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GApproxFile { schema: "gapprox/1".into(), g: match self {
            GApprox::Lattice(l) => GApprox::Lattice(LatticeG { params: l.params.clone(), cache: Mutex::new(HashMap::new()) }),
            GApprox::Regression(r) => GApprox::Regression(r.clone()),
        }};
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GApproxFile = serde_json::from_str(text)?;
        if file.schema != "gapprox/1" {
            return Err(Error::Numerical(format!("unsupported gapprox schema {}", file.schema)));
        }
        Ok(file.g)
    }
}

/// Exact lattice solver. `price_branching` selects the diffusion branching;
/// only the two-point scheme is implemented. Refuses trees beyond the node
/// budget with a size estimate.
pub fn solve_g_lattice(spec: &ModelSpec, n_steps: usize, price_branching: usize) -> Result<GApprox> {
    solve_g_lattice_with_budget(spec, n_steps, price_branching, DEFAULT_LATTICE_MAX_NODES)
}

pub fn solve_g_lattice_with_budget(
    spec: &ModelSpec,
    n_steps: usize,
    price_branching: usize,
    max_nodes: u64,
) -> Result<GApprox> {
    if price_branching != 2 {
        return Err(Error::InvalidModel(format!(
            "only two-point diffusion branching is implemented, got {price_branching}"
        )));
    }
    let estimate = branch_bound(spec).checked_pow(n_steps as u32).unwrap_or(u64::MAX);
    if estimate > max_nodes {
        return Err(Error::TreeTooLarge { estimate, limit: max_nodes });
    }
    Ok(GApprox::Lattice(LatticeG {
        params: LatticeParams { n_steps, price_branching, max_nodes },
        cache: Mutex::new(HashMap::new()),
    }))
}

/// Least-squares Monte-Carlo fit of g on a minimal-measure ensemble with
/// retained latent regimes and physical-measure filter trajectories.
///
/// Per time slice and regime, the terminal value `π_T(H)` of each path is
/// regressed on the polynomial basis in `(S_t / s0, π_t)`; rank-deficient
/// designs are resolved by singular-value pivoting (dropped directions are
/// visible through `ranks`).
pub fn fit_g_regression(
    spec: &ModelSpec,
    ensemble: &PathSet,
    filters_p: &[FilterTrajectory],
    basis_degree: usize,
) -> Result<GApprox> {
    if ensemble.is_empty() {
        return Err(Error::InvalidModel("empty ensemble".into()));
    }
    if ensemble.paths.len() != filters_p.len() {
        return Err(Error::GridMismatch("one filter trajectory per path required".into()));
    }
    let n = ensemble.paths[0].n_steps();
    for p in &ensemble.paths {
        if p.n_steps() != n {
            return Err(Error::GridMismatch("paths of unequal length".into()));
        }
    }
    let d = spec.dim();
    let exps = basis_exponents(d, basis_degree);
    let nb = exps.len();

    // terminal values
    let ys: Vec<f64> = ensemble
        .paths
        .iter()
        .zip(filters_p)
        .map(|(path, traj)| {
            let pit = traj.terminal();
            (0..d).map(|i| pit.get(i) * spec.payoff_at(i, path.terminal_price())).sum()
        })
        .collect();

    let mut coeffs = Vec::with_capacity(n);
    let mut r2 = Vec::with_capacity(n);
    let mut ranks = Vec::with_capacity(n);
    for step in 0..n {
        let mut slice_coeffs = Vec::with_capacity(d);
        let mut slice_r2 = Vec::with_capacity(d);
        let mut slice_rank = Vec::with_capacity(d);
        for regime in 0..d {
            let rows: Vec<usize> = (0..ensemble.paths.len())
                .filter(|&i| ensemble.paths[i].regimes[step] == regime)
                .collect();
            // A regime never visited at this slice falls back to the pooled
            // fit so the representation stays total.
            let rows = if rows.is_empty() {
                (0..ensemble.paths.len()).collect()
            } else {
                rows
            };
            let mut design = DMatrix::<f64>::zeros(rows.len(), nb);
            let mut target = DVector::<f64>::zeros(rows.len());
            for (r, &i) in rows.iter().enumerate() {
                let path = &ensemble.paths[i];
                let pi = filters_p[i].states[step].as_slice();
                let b = eval_basis(&exps, path.prices[step] / spec.s0, &pi[..d - 1]);
                for (c, v) in b.iter().enumerate() {
                    design[(r, c)] = *v;
                }
                target[r] = ys[i];
            }
            let (beta, rank) = lstsq_ordered(&design, &target, 1e-8);
            let fitted = &design * &beta;
            let mean_y = target.iter().sum::<f64>() / rows.len() as f64;
            let ss_tot: f64 = target.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
            let ss_res: f64 = target
                .iter()
                .zip(fitted.iter())
                .map(|(y, f)| (y - f) * (y - f))
                .sum();
            slice_r2.push(if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 });
            slice_rank.push(rank);
            slice_coeffs.push(beta.iter().cloned().collect());
        }
        coeffs.push(slice_coeffs);
        r2.push(slice_r2);
        ranks.push(slice_rank);
    }
    Ok(GApprox::Regression(RegressionG::new(n, basis_degree, spec.s0, coeffs, r2, ranks)))
}

// ---------------------------------------------------------------------------
// Value process
// ---------------------------------------------------------------------------

/// The observation-filtration value process along a path grid.
#[derive(Debug, Clone)]
pub struct ValuePath {
    pub values: Vec<f64>,
}

/// `V_t = Σ_i g(t, x_i, S_t, π_t) π*_t(f_i)` on the path grid; the terminal
/// value is the filter-weighted payoff.
pub fn value_process(
    spec: &ModelSpec,
    g: &GApprox,
    prices: &[f64],
    filter_p: &FilterTrajectory,
    filter_star: &FilterTrajectory,
) -> Result<ValuePath> {
    let n = prices.len() - 1;
    if g.n_steps() != n || filter_p.states.len() != n + 1 || filter_star.states.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "value_process needs matching grids: g has {}, path has {n}",
            g.n_steps()
        )));
    }
    let d = spec.dim();
    let mut values = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let pi = filter_p.states[k].as_slice();
        let pis = filter_star.states[k].as_slice();
        let mut v = 0.0;
        for i in 0..d {
            if pis[i] == 0.0 {
                continue;
            }
            v += pis[i] * g.value(spec, k, i, prices[k], pi)?;
        }
        values.push(v);
    }
    Ok(ValuePath { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Payoff;
    use crate::scenarios;

    #[test]
    fn basis_enumeration_is_complete_and_ordered() {
        let exps = basis_exponents(2, 2); // vars: u, p1
        assert_eq!(exps.len(), 6); // 1, u, p, u², up, p²
        assert_eq!(exps[0], vec![0, 0]);
        let total: usize = exps.iter().map(|e| e.iter().sum::<usize>()).max().unwrap();
        assert_eq!(total, 2);
    }

    #[test]
    fn lattice_constant_payoff_is_one() {
        let mut spec = scenarios::two_regime_small();
        spec.payoff = Payoff::Constant { value: 1.0 };
        let g = solve_g_lattice(&spec, 3, 2).unwrap();
        for step in 0..=3 {
            let v = g.value(&spec, step, 0, 1.1, &[0.4, 0.6]).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "step {step}: {v}");
        }
    }

    #[test]
    fn lattice_martingale_payoff_is_price() {
        // H = s: the price is a minimal-measure martingale, so g = s at
        // every state, for any regime and filter argument.
        let mut spec = scenarios::two_regime_small();
        spec.payoff = Payoff::Spot;
        let g = solve_g_lattice(&spec, 4, 2).unwrap();
        for (step, s, p0) in [(0usize, 1.0, 0.5), (1, 0.9, 0.2), (2, 1.2, 0.8)] {
            for regime in 0..2 {
                let v = g.value(&spec, step, regime, s, &[p0, 1.0 - p0]).unwrap();
                assert!(
                    (v - s).abs() < 1e-10 * s,
                    "martingale identity failed at step {step}: {v} vs {s}"
                );
            }
        }
    }

    #[test]
    fn lattice_root_matches_forward_enumeration() {
        // independently coded forward enumeration over all branch sequences
        let spec = scenarios::two_regime_small();
        let n = 4;
        let g = solve_g_lattice(&spec, n, 2).unwrap();
        let prior = SimplexVector::delta(spec.x0, 2);
        let times = uniform_times(&spec, n);
        // forward enumeration: stack of (step, s, pi, weights, prob)
        let mut total = 0.0;
        let mut stack = vec![(0usize, spec.s0, prior.clone(), prior.as_slice().to_vec(), 1.0f64)];
        while let Some((step, s, pi, weights, prob)) = stack.pop() {
            if step == n {
                let v: f64 = (0..spec.dim())
                    .map(|i| pi.get(i) * spec.payoff_at(i, s))
                    .sum();
                total += prob * v;
                continue;
            }
            for child in
                lean_children(&spec, &times, step, s, &pi, &weights, crate::model::Measure::Minimal)
                    .unwrap()
            {
                stack.push((step + 1, child.s, child.pi, child.weights, prob * child.prob));
            }
        }
        let root = g
            .value(&spec, 0, spec.x0, spec.s0, prior.as_slice())
            .unwrap();
        assert!(
            (root - total).abs() < 1e-10,
            "backward {root} vs forward {total}"
        );
    }

    #[test]
    fn lattice_refuses_oversized_trees() {
        let spec = scenarios::two_regime_small();
        let err = solve_g_lattice_with_budget(&spec, 9, 2, 1_000_000).unwrap_err();
        assert!(matches!(err, Error::TreeTooLarge { .. }));
    }

    #[test]
    fn gapprox_json_roundtrip() {
        let spec = scenarios::two_regime_small();
        let g = solve_g_lattice(&spec, 3, 2).unwrap();
        let text = g.to_json().unwrap();
        let back = GApprox::from_json(&text).unwrap();
        assert_eq!(back.n_steps(), 3);
        let a = g.value(&spec, 1, 0, 1.05, &[0.5, 0.5]).unwrap();
        let b = back.value(&spec, 1, 0, 1.05, &[0.5, 0.5]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
