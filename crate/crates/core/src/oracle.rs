//! Independent brute-force validators for the analytical machinery.
//!
//! Everything here is deliberately redundant with the closed-form engine:
//!
//! * [`exact_hmm_filter`] — the exact Bayes posterior for the discretized
//!   model (Gaussian return likelihoods times atom-firing likelihoods and
//!   regime transitions), the refinement target for the Euler
//!   Kushner-Stratonovich filter;
//! * [`ObservationTree`] / [`discrete_fs`] — a finite observation tree of the
//!   discretized dynamics and the discrete-time locally-risk-minimizing
//!   backward recursion on it, the ground truth for the hedge integrand at
//!   desk scale;
//! * [`orthogonality_estimate`] — Monte-Carlo estimators for the weak
//!   orthogonality property of the residual;
//! * [`one_step_expectation`] — Gauss-Hermite one-step expectations of the
//!   simulation scheme, the finite-difference side of the generator (Dynkin)
//!   checks.
//!
//! Tree discretization: per step the log price moves by `-σ²h/2 ± σ√h`
//! (price moves do not depend on the hidden regime) and the regime modulates
//! the branch probabilities, `½(1 ± μ1 √h / σ)` under the physical measure
//! and `½(1 ∓ b √h / σ)` under the minimal one; independently one atom fires
//! with probability rate·h (or none). Observable branches are keyed by the
//! move direction and the visible jump size; tree nodes therefore carry the
//! exact conditional regime law given the observable path, under both
//! measures, next to the two Kushner-Stratonovich filter states.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{self, SimplexVector};
use crate::mmm;
use crate::model::{same_jump_size, GenPoint, GeneratorKind, Measure, ModelSpec};
use crate::simulate::Observables;

// ---------------------------------------------------------------------------
// Exact discrete Bayes filter
// ---------------------------------------------------------------------------

/// Exact Bayes posterior sequence for the discretized model along an
/// observed path.
///
/// Per step the posterior is propagated by (a) the Gaussian likelihood of
/// the diffusion log-return given each start regime, (b) the likelihood of
/// the jump observation: either a visible firing of matching size or the
/// silence of all atoms visible from that regime, and (c) the regime
/// transition carried by the firing (visible or invisible).
pub fn exact_hmm_filter(
    spec: &ModelSpec,
    obs: &Observables<'_>,
    measure: Measure,
    prior: &SimplexVector,
) -> Result<Vec<SimplexVector>> {
    let d = spec.dim();
    let n = obs.n_steps();
    let mut out = Vec::with_capacity(n + 1);
    out.push(prior.clone());
    let mut weights: Vec<f64> = prior.as_slice().to_vec();
    for step in 0..n {
        let t = obs.times[step];
        let h = obs.times[step + 1] - obs.times[step];
        let s = obs.prices[step];
        let sigma = spec.sigma1(t, s);
        let r = obs.diffusion_log_return(step);
        let events: Vec<_> = obs.events_at(step).collect();
        if events.len() > 1 {
            return Err(Error::InconsistentObservation(
                "exact filter expects at most one visible jump per step".into(),
            ));
        }
        // log Gaussian likelihood of the return per start regime, with the
        // common normalization dropped.
        let loglik: Vec<f64> = (0..d)
            .map(|j| {
                let mean = match measure {
                    Measure::Physical => (spec.mu1(t, j, s) - 0.5 * sigma * sigma) * h,
                    Measure::Minimal => {
                        -(mmm::price_jump_drift_star(spec, t, j, s).unwrap_or(f64::NAN)
                            + 0.5 * sigma * sigma)
                            * h
                    }
                };
                let dev = r - mean;
                -dev * dev / (2.0 * sigma * sigma * h)
            })
            .collect();
        if loglik.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numerical("non-finite likelihood in exact filter".into()));
        }
        let max_l = loglik.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut next = vec![0.0; d];
        for j in 0..d {
            if weights[j] == 0.0 {
                continue;
            }
            let base = weights[j] * (loglik[j] - max_l).exp();
            let rate = |k: usize| -> Result<f64> {
                match measure {
                    Measure::Physical => Ok(spec.marks.rate(k)),
                    Measure::Minimal => mmm::eta_star(spec, t, j, s, k),
                }
            };
            match events.first() {
                Some(ev) => {
                    for k in 0..spec.n_atoms() {
                        let k1 = spec.k1(k, j, t, ev.pre_price);
                        if k1 == 0.0 {
                            continue;
                        }
                        if same_jump_size(ev.pre_price * k1, ev.size) {
                            next[spec.k0_dest(k, j)] += base * rate(k)? * h;
                        }
                    }
                }
                None => {
                    let mut total = 0.0;
                    for k in 0..spec.n_atoms() {
                        let rk = rate(k)?;
                        total += rk;
                        // invisible firing moves the regime without a trace
                        if spec.k1(k, j, t, s) == 0.0 {
                            next[spec.k0_dest(k, j)] += base * rk * h;
                        }
                    }
                    next[j] += base * (1.0 - total * h);
                }
            }
        }
        let total: f64 = next.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InconsistentObservation(format!(
                "zero total likelihood at step {step}"
            )));
        }
        weights = next.into_iter().map(|w| w / total).collect();
        out.push(SimplexVector::new(weights.clone())?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Observation-tree stepping
// ---------------------------------------------------------------------------

/// Full state of an observation-tree node.
#[derive(Debug, Clone)]
pub struct TreeState {
    pub step: usize,
    pub s: f64,
    /// Kushner-Stratonovich filter under the physical measure.
    pub pi: SimplexVector,
    /// Kushner-Stratonovich filter under the minimal measure.
    pub pi_star: SimplexVector,
    /// Exact conditional regime law given the observable path, under P.
    pub bayes_p: Vec<f64>,
    /// Same under P*.
    pub bayes_star: Vec<f64>,
}

impl TreeState {
    /// Root state from a prior: both filters and both exact posteriors start
    /// at the prior.
    pub fn root(spec: &ModelSpec, prior: &SimplexVector) -> Self {
        TreeState {
            step: 0,
            s: spec.s0,
            pi: prior.clone(),
            pi_star: prior.clone(),
            bayes_p: prior.as_slice().to_vec(),
            bayes_star: prior.as_slice().to_vec(),
        }
    }
}

/// One observable branch out of a tree node.
#[derive(Debug, Clone)]
pub struct TreeChild {
    pub state: TreeState,
    /// Conditional branch probability given the parent, under P.
    pub prob_p: f64,
    /// Same under P*.
    pub prob_star: f64,
    pub dir_up: bool,
    /// Visible jump size, when the branch carries one.
    pub jump: Option<f64>,
    /// Diffusion log-return of the branch.
    pub diffusion_return: f64,
}

/// Branching factor of one step: 2 directions x (1 + distinct visible
/// sizes). For the price-level-free jump coefficients the distinct sizes are
/// the distinct nonzero K1 values.
pub fn branch_bound(spec: &ModelSpec) -> u64 {
    let mut distinct: Vec<f64> = Vec::new();
    for row in &spec.coeffs.price_jump {
        for &k1 in row {
            if k1 != 0.0 && !distinct.iter().any(|v| *v == k1) {
                distinct.push(k1);
            }
        }
    }
    2 * (1 + distinct.len() as u64)
}

/// Up/down one-step price factors of the tree (regime-independent moves).
fn move_factors(sigma: f64, h: f64) -> (f64, f64) {
    let sqrt_h = h.sqrt();
    (
        (-0.5 * sigma * sigma * h + sigma * sqrt_h).exp(),
        (-0.5 * sigma * sigma * h - sigma * sqrt_h).exp(),
    )
}

/// Up-branch probability for one regime: matches the one-step conditional
/// price mean exactly. Under the physical measure the diffusion-factor mean
/// is e^{μ1 h}; under the minimal one the reciprocal of the jump-mean
/// factor, so that the full price update is an exact tree martingale.
fn up_probability(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    regime: usize,
    s: f64,
    h: f64,
    rates_h: &[f64],
    up: f64,
    down: f64,
) -> Result<f64> {
    let target = match measure {
        Measure::Physical => (spec.mu1(t, regime, s) * h).exp(),
        Measure::Minimal => {
            let mut jump_mean = 0.0;
            for (k, rh) in rates_h.iter().enumerate() {
                jump_mean += rh * spec.k1(k, regime, t, s);
            }
            1.0 / (1.0 + jump_mean)
        }
    };
    let q = (target - down) / (up - down);
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Numerical(format!(
            "tree step too coarse: branch probability {q} at (t={t}, x={regime})"
        )));
    }
    Ok(q)
}

/// One observable branch in the lean representation used by the streaming
/// recursions: the physical-measure filter plus one conditional regime law.
#[derive(Debug, Clone)]
pub struct LeanChild {
    pub s: f64,
    /// Physical-measure Kushner-Stratonovich filter after the branch.
    pub pi: SimplexVector,
    /// Conditional regime law given the branch, under the stepping measure.
    pub weights: Vec<f64>,
    /// Branch probability under the stepping measure.
    pub prob: f64,
}

/// Enumerate the observable branches out of `(step, s, π, weights)` with
/// probabilities under `measure`. Only branches reachable from the support
/// of `weights` are produced.
pub fn lean_children(
    spec: &ModelSpec,
    times: &[f64],
    step: usize,
    s: f64,
    pi: &SimplexVector,
    weights: &[f64],
    measure: Measure,
) -> Result<Vec<LeanChild>> {
    let d = spec.dim();
    let m = spec.n_atoms();
    let t = times[step];
    let h = times[step + 1] - times[step];
    let sigma = spec.sigma1(t, s);
    let (up, down) = move_factors(sigma, h);
    let plan = filter::continuous_plan(spec, Measure::Physical, t, h, s, pi)?;

    // per-regime rates (x h) and up-probabilities on the weight support
    let mut rates_h = vec![Vec::new(); d];
    let mut q_up = vec![0.0; d];
    for j in 0..d {
        if weights[j] == 0.0 {
            continue;
        }
        let rates = filter::regime_rates(spec, measure, t, j, s)?;
        rates_h[j] = rates.iter().map(|r| r * h).collect();
        let total: f64 = rates_h[j].iter().sum();
        if total >= 1.0 {
            return Err(Error::Numerical(format!(
                "tree step too coarse: total jump probability {total} per step"
            )));
        }
        q_up[j] = up_probability(spec, measure, t, j, s, h, &rates_h[j], up, down)?;
    }

    let mut out = Vec::new();
    for dir_up in [true, false] {
        let factor = if dir_up { up } else { down };
        let r = factor.ln();
        let s_cont = s * factor;
        // distinct visible sizes reachable from the weight support
        let mut sizes: Vec<f64> = Vec::new();
        for j in 0..d {
            if weights[j] == 0.0 {
                continue;
            }
            for k in 0..m {
                let k1 = spec.k1(k, j, t, s_cont);
                if k1 != 0.0 {
                    let z = s_cont * k1;
                    if !sizes.iter().any(|z0| same_jump_size(*z0, z)) {
                        sizes.push(z);
                    }
                }
            }
        }
        sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // silent branch: no firing or an invisible firing
        let mut trans = vec![0.0; d];
        for j in 0..d {
            if weights[j] == 0.0 {
                continue;
            }
            let q = if dir_up { q_up[j] } else { 1.0 - q_up[j] };
            let none: f64 = 1.0 - rates_h[j].iter().sum::<f64>();
            trans[j] += weights[j] * q * none;
            for k in 0..m {
                if spec.k1(k, j, t, s_cont) == 0.0 {
                    trans[spec.k0_dest(k, j)] += weights[j] * q * rates_h[j][k];
                }
            }
        }
        push_lean(&plan, &mut out, spec, t, r, s_cont, None, trans)?;

        for &z in &sizes {
            let mut trans = vec![0.0; d];
            for j in 0..d {
                if weights[j] == 0.0 {
                    continue;
                }
                let q = if dir_up { q_up[j] } else { 1.0 - q_up[j] };
                for k in 0..m {
                    let k1 = spec.k1(k, j, t, s_cont);
                    if k1 != 0.0 && same_jump_size(s_cont * k1, z) {
                        trans[spec.k0_dest(k, j)] += weights[j] * q * rates_h[j][k];
                    }
                }
            }
            push_lean(&plan, &mut out, spec, t, r, s_cont, Some(z), trans)?;
        }
    }
    Ok(out)
}

fn push_lean(
    plan: &filter::ContinuousPlan,
    out: &mut Vec<LeanChild>,
    spec: &ModelSpec,
    t: f64,
    r: f64,
    s_cont: f64,
    jump: Option<f64>,
    trans: Vec<f64>,
) -> Result<()> {
    let prob: f64 = trans.iter().sum();
    if prob <= 0.0 {
        return Ok(());
    }
    let (mut pi, _) = plan.apply(r)?;
    let s_new = match jump {
        Some(z) => {
            pi = filter::jump_update(spec, Measure::Physical, t, s_cont, z, &pi)?;
            s_cont + z
        }
        None => s_cont,
    };
    out.push(LeanChild {
        s: s_new,
        pi,
        weights: trans.into_iter().map(|x| x / prob).collect(),
        prob,
    });
    Ok(())
}

/// Enumerate the observable children of a full node state, with
/// probabilities and exact posteriors under both measures. Used by the
/// materialized tree; the streaming recursions use [`lean_children`].
pub fn tree_children(spec: &ModelSpec, times: &[f64], node: &TreeState) -> Result<Vec<TreeChild>> {
    let d = spec.dim();
    let m = spec.n_atoms();
    let t = times[node.step];
    let h = times[node.step + 1] - times[node.step];
    let s = node.s;
    let sigma = spec.sigma1(t, s);
    let (up, down) = move_factors(sigma, h);
    let plan_p = filter::continuous_plan(spec, Measure::Physical, t, h, s, &node.pi)?;
    let plan_star = filter::continuous_plan(spec, Measure::Minimal, t, h, s, &node.pi_star)?;

    let mut q_up_p = vec![0.0; d];
    let mut q_up_star = vec![0.0; d];
    let mut rates_p_h = vec![Vec::new(); d];
    let mut rates_star_h = vec![Vec::new(); d];
    for j in 0..d {
        let rp: Vec<f64> = (0..m).map(|k| spec.marks.rate(k) * h).collect();
        let rs: Vec<f64> = mmm::eta_star_all(spec, t, j, s)?.iter().map(|r| r * h).collect();
        if rp.iter().sum::<f64>() >= 1.0 || rs.iter().sum::<f64>() >= 1.0 {
            return Err(Error::Numerical(
                "tree step too coarse: total jump probability per step >= 1".into(),
            ));
        }
        q_up_p[j] = up_probability(spec, Measure::Physical, t, j, s, h, &rp, up, down)?;
        q_up_star[j] = up_probability(spec, Measure::Minimal, t, j, s, h, &rs, up, down)?;
        rates_p_h[j] = rp;
        rates_star_h[j] = rs;
    }

    let mut out = Vec::new();
    for dir_up in [true, false] {
        let factor = if dir_up { up } else { down };
        let r = factor.ln();
        let s_cont = s * factor;

        // visible jump sizes from this post-move price, grouped across
        // (regime, atom) pairs
        let mut sizes: Vec<f64> = Vec::new();
        for j in 0..d {
            for k in 0..m {
                let k1 = spec.k1(k, j, t, s_cont);
                if k1 != 0.0 {
                    let z = s_cont * k1;
                    if !sizes.iter().any(|z0| same_jump_size(*z0, z)) {
                        sizes.push(z);
                    }
                }
            }
        }
        sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // the silent branch: no firing, or an invisible firing
        let mut trans_p = vec![0.0; d];
        let mut trans_star = vec![0.0; d];
        for j in 0..d {
            let (wp, ws) = (node.bayes_p[j], node.bayes_star[j]);
            if wp == 0.0 && ws == 0.0 {
                continue;
            }
            let qp = if dir_up { q_up_p[j] } else { 1.0 - q_up_p[j] };
            let qs = if dir_up { q_up_star[j] } else { 1.0 - q_up_star[j] };
            let none_p: f64 = 1.0 - rates_p_h[j].iter().sum::<f64>();
            let none_star: f64 = 1.0 - rates_star_h[j].iter().sum::<f64>();
            trans_p[j] += wp * qp * none_p;
            trans_star[j] += ws * qs * none_star;
            for k in 0..m {
                if spec.k1(k, j, t, s_cont) == 0.0 {
                    let dest = spec.k0_dest(k, j);
                    trans_p[dest] += wp * qp * rates_p_h[j][k];
                    trans_star[dest] += ws * qs * rates_star_h[j][k];
                }
            }
        }
        push_child(spec, t, &plan_p, &plan_star, node, &mut out, dir_up, r, s_cont, None, trans_p, trans_star)?;

        for &z in &sizes {
            let mut trans_p = vec![0.0; d];
            let mut trans_star = vec![0.0; d];
            for j in 0..d {
                let (wp, ws) = (node.bayes_p[j], node.bayes_star[j]);
                if wp == 0.0 && ws == 0.0 {
                    continue;
                }
                let qp = if dir_up { q_up_p[j] } else { 1.0 - q_up_p[j] };
                let qs = if dir_up { q_up_star[j] } else { 1.0 - q_up_star[j] };
                for k in 0..m {
                    let k1 = spec.k1(k, j, t, s_cont);
                    if k1 != 0.0 && same_jump_size(s_cont * k1, z) {
                        let dest = spec.k0_dest(k, j);
                        trans_p[dest] += wp * qp * rates_p_h[j][k];
                        trans_star[dest] += ws * qs * rates_star_h[j][k];
                    }
                }
            }
            push_child(spec, t, &plan_p, &plan_star, node, &mut out, dir_up, r, s_cont, Some(z), trans_p, trans_star)?;
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn push_child(
    spec: &ModelSpec,
    t: f64,
    plan_p: &filter::ContinuousPlan,
    plan_star: &filter::ContinuousPlan,
    node: &TreeState,
    out: &mut Vec<TreeChild>,
    dir_up: bool,
    r: f64,
    s_cont: f64,
    jump: Option<f64>,
    trans_p: Vec<f64>,
    trans_star: Vec<f64>,
) -> Result<()> {
    let prob_p: f64 = trans_p.iter().sum();
    let prob_star: f64 = trans_star.iter().sum();
    if prob_p <= 0.0 && prob_star <= 0.0 {
        return Ok(());
    }

    let norm = |v: Vec<f64>, total: f64| -> Vec<f64> {
        if total > 0.0 {
            v.into_iter().map(|x| x / total).collect()
        } else {
            v
        }
    };

    let (mut pi, _) = plan_p.apply(r)?;
    let (mut pi_star, _) = plan_star.apply(r)?;
    let s_new = match jump {
        Some(z) => {
            pi = filter::jump_update(spec, Measure::Physical, t, s_cont, z, &pi)?;
            pi_star = filter::jump_update(spec, Measure::Minimal, t, s_cont, z, &pi_star)?;
            s_cont + z
        }
        None => s_cont,
    };
    out.push(TreeChild {
        state: TreeState {
            step: node.step + 1,
            s: s_new,
            pi,
            pi_star,
            bayes_p: norm(trans_p, prob_p),
            bayes_star: norm(trans_star, prob_star),
        },
        prob_p,
        prob_star,
        dir_up,
        jump,
        diffusion_return: r,
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// Materialized observation tree
// ---------------------------------------------------------------------------

/// One node of a materialized observation tree.
#[derive(Debug, Clone)]
pub struct ObsNode {
    pub state: TreeState,
    pub parent: Option<usize>,
    /// Conditional probability given the parent (1 for the root).
    pub cond_prob_p: f64,
    pub cond_prob_star: f64,
    pub dir_up: bool,
    pub jump: Option<f64>,
}

/// Observation tree of the discretized dynamics, fully materialized.
/// Intended for desk-scale instances; larger recursions stream depth-first
/// instead (see [`discrete_fs_roots`]).
#[derive(Debug, Clone)]
pub struct ObservationTree {
    pub n_steps: usize,
    pub times: Vec<f64>,
    pub nodes: Vec<ObsNode>,
    pub children: Vec<Vec<usize>>,
}

impl ObservationTree {
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|i| self.children[*i].is_empty())
    }

    /// Debug dump with deterministic node ordering.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct NodeOut<'a> {
            step: usize,
            s: f64,
            pi: &'a [f64],
            pi_star: &'a [f64],
            bayes_p: &'a [f64],
            bayes_star: &'a [f64],
            parent: Option<usize>,
            cond_prob_p: f64,
            cond_prob_star: f64,
            jump: Option<f64>,
        }
        let out: Vec<NodeOut> = self
            .nodes
            .iter()
            .map(|n| NodeOut {
                step: n.state.step,
                s: n.state.s,
                pi: n.state.pi.as_slice(),
                pi_star: n.state.pi_star.as_slice(),
                bayes_p: &n.state.bayes_p,
                bayes_star: &n.state.bayes_star,
                parent: n.parent,
                cond_prob_p: n.cond_prob_p,
                cond_prob_star: n.cond_prob_star,
                jump: n.jump,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&out)?)
    }
}

/// Uniform grid over the horizon.
pub fn uniform_times(spec: &ModelSpec, n_steps: usize) -> Vec<f64> {
    (0..=n_steps)
        .map(|k| spec.horizon * k as f64 / n_steps as f64)
        .collect()
}

/// Build the full observation tree with `n_steps` steps.
pub fn build_observation_tree(
    spec: &ModelSpec,
    n_steps: usize,
    prior: &SimplexVector,
    max_nodes: u64,
) -> Result<ObservationTree> {
    let estimate = branch_bound(spec)
        .checked_pow(n_steps as u32)
        .unwrap_or(u64::MAX);
    if estimate > max_nodes {
        return Err(Error::TreeTooLarge { estimate, limit: max_nodes });
    }
    let times = uniform_times(spec, n_steps);
    let root = ObsNode {
        state: TreeState::root(spec, prior),
        parent: None,
        cond_prob_p: 1.0,
        cond_prob_star: 1.0,
        dir_up: false,
        jump: None,
    };
    let mut nodes = vec![root];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = vec![0usize];
    for _ in 0..n_steps {
        let mut next_frontier = Vec::new();
        for &idx in &frontier {
            let state = nodes[idx].state.clone();
            for child in tree_children(spec, &times, &state)? {
                let cidx = nodes.len();
                nodes.push(ObsNode {
                    state: child.state,
                    parent: Some(idx),
                    cond_prob_p: child.prob_p,
                    cond_prob_star: child.prob_star,
                    dir_up: child.dir_up,
                    jump: child.jump,
                });
                children.push(Vec::new());
                children[idx].push(cidx);
                next_frontier.push(cidx);
                if nodes.len() as u64 > max_nodes {
                    return Err(Error::TreeTooLarge {
                        estimate,
                        limit: max_nodes,
                    });
                }
            }
        }
        frontier = next_frontier;
    }
    Ok(ObservationTree { n_steps, times, nodes, children })
}

// ---------------------------------------------------------------------------
// Discrete-time quadratic-hedging recursion
// ---------------------------------------------------------------------------

/// Per-node output of the discrete recursion.
#[derive(Debug, Clone, Copy)]
pub struct FsNode {
    /// One-step least-squares integrand at the node (0 at leaves).
    pub theta: f64,
    /// Mean-self-financing value at the node.
    pub value: f64,
    /// Conditional variance of the one-step price increment.
    pub ds_variance: f64,
    /// Set when the node had no hedgeable risk (zero variance).
    pub flagged_zero_variance: bool,
}

/// Result of [`discrete_fs`] on a materialized tree.
#[derive(Debug, Clone)]
pub struct DiscreteFsResult {
    pub per_node: Vec<FsNode>,
}

impl DiscreteFsResult {
    pub fn root(&self) -> FsNode {
        self.per_node[0]
    }
}

fn fs_combine(values: &[(f64, f64, f64)]) -> FsNode {
    // values: (prob, child value, ΔS)
    let total: f64 = values.iter().map(|v| v.0).sum();
    let mean_v: f64 = values.iter().map(|v| v.0 * v.1).sum::<f64>() / total;
    let mean_ds: f64 = values.iter().map(|v| v.0 * v.2).sum::<f64>() / total;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (p, v, ds) in values {
        cov += p * (v - mean_v) * (ds - mean_ds);
        var += p * (ds - mean_ds) * (ds - mean_ds);
    }
    cov /= total;
    var /= total;
    let flagged = var <= 1e-300;
    let theta = if flagged { 0.0 } else { cov / var };
    FsNode {
        theta,
        value: mean_v - theta * mean_ds,
        ds_variance: var,
        flagged_zero_variance: flagged,
    }
}

/// Backward one-step least-squares hedging recursion on a materialized
/// observation tree, under the physical branch probabilities.
///
/// `leaf_payoff` maps a leaf state to its terminal value: the unobservable
/// claim enters through the node's exact regime posterior, the projected
/// claim through the filter state.
pub fn discrete_fs(
    tree: &ObservationTree,
    leaf_payoff: impl Fn(&TreeState) -> f64,
) -> DiscreteFsResult {
    let n = tree.nodes.len();
    let mut per_node = vec![
        FsNode { theta: 0.0, value: 0.0, ds_variance: 0.0, flagged_zero_variance: false };
        n
    ];
    for idx in (0..n).rev() {
        if tree.children[idx].is_empty() {
            per_node[idx].value = leaf_payoff(&tree.nodes[idx].state);
        } else {
            let s = tree.nodes[idx].state.s;
            let stats: Vec<(f64, f64, f64)> = tree.children[idx]
                .iter()
                .map(|&c| {
                    (
                        tree.nodes[c].cond_prob_p,
                        per_node[c].value,
                        tree.nodes[c].state.s - s,
                    )
                })
                .collect();
            per_node[idx] = fs_combine(&stats);
        }
    }
    DiscreteFsResult { per_node }
}

/// Root outcome of a streaming discrete recursion.
#[derive(Debug, Clone, Copy)]
pub struct FsRoot {
    pub theta0: f64,
    pub value0: f64,
}

/// Both-payoff streaming recursion: the hidden claim H(T, X_T, S_T) (exact
/// posterior weighted at the leaves) and its filter projection π_T(H), in a
/// single depth-first pass. Returns ((claim θ0, V0), (projected θ0, V0)).
pub fn discrete_fs_roots(
    spec: &ModelSpec,
    n_steps: usize,
    prior: &SimplexVector,
    max_nodes: u64,
) -> Result<(FsRoot, FsRoot)> {
    let estimate = branch_bound(spec)
        .checked_pow(n_steps as u32)
        .unwrap_or(u64::MAX);
    if estimate > max_nodes {
        return Err(Error::TreeTooLarge { estimate, limit: max_nodes });
    }
    let times = uniform_times(spec, n_steps);
    fn recurse(
        spec: &ModelSpec,
        times: &[f64],
        n_steps: usize,
        step: usize,
        s: f64,
        pi: &SimplexVector,
        weights: &[f64],
        depth: usize,
    ) -> Result<(FsRoot, FsRoot)> {
        if step == n_steps {
            let claim: f64 = weights
                .iter()
                .enumerate()
                .map(|(i, q)| q * spec.payoff_at(i, s))
                .sum();
            let proj: f64 = (0..spec.dim())
                .map(|i| pi.get(i) * spec.payoff_at(i, s))
                .sum();
            return Ok((
                FsRoot { theta0: 0.0, value0: claim },
                FsRoot { theta0: 0.0, value0: proj },
            ));
        }
        let kids = lean_children(spec, times, step, s, pi, weights, Measure::Physical)?;
        let subs: Vec<(FsRoot, FsRoot)> = if depth < 2 && n_steps - step >= 5 {
            kids.par_iter()
                .map(|c| recurse(spec, times, n_steps, step + 1, c.s, &c.pi, &c.weights, depth + 1))
                .collect::<Result<_>>()?
        } else {
            kids.iter()
                .map(|c| recurse(spec, times, n_steps, step + 1, c.s, &c.pi, &c.weights, depth + 1))
                .collect::<Result<_>>()?
        };
        let mut stats_claim = Vec::with_capacity(kids.len());
        let mut stats_proj = Vec::with_capacity(kids.len());
        for (child, sub) in kids.iter().zip(&subs) {
            let ds = child.s - s;
            stats_claim.push((child.prob, sub.0.value0, ds));
            stats_proj.push((child.prob, sub.1.value0, ds));
        }
        let c = fs_combine(&stats_claim);
        let p = fs_combine(&stats_proj);
        Ok((
            FsRoot { theta0: c.theta, value0: c.value },
            FsRoot { theta0: p.theta, value0: p.value },
        ))
    }
    recurse(
        spec,
        &times,
        n_steps,
        0,
        spec.s0,
        prior,
        prior.as_slice(),
        0,
    )
}

// ---------------------------------------------------------------------------
// Weak-orthogonality estimator
// ---------------------------------------------------------------------------

/// One orthogonality estimate: Ê[A_T Σ φ ΔM] with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrthoEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub passed: bool,
}

/// Estimate E[A_T ∫ φ dM] for each test process from per-path samples of
/// A_T and of the discrete integral Σ φ ΔM. The pass flag is |est| ≤ 3 SE.
pub fn orthogonality_estimate(a_terminal: &[f64], phi_integrals: &[Vec<f64>]) -> Vec<OrthoEstimate> {
    phi_integrals
        .iter()
        .map(|phi| {
            let products: Vec<f64> = a_terminal
                .iter()
                .zip(phi)
                .map(|(a, b)| a * b)
                .collect();
            let (mean, se) = mean_and_se(&products);
            OrthoEstimate { estimate: mean, std_error: se, passed: mean.abs() <= 3.0 * se }
        })
        .collect()
}

/// Ljung-Box portmanteau outcome.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub critical: f64,
    pub passed: bool,
}

/// Ljung-Box test for serial correlation up to `lags` (1% level). The
/// critical values cover the lag counts the diagnostics use.
pub fn ljung_box(xs: &[f64], lags: usize) -> LjungBox {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let denom: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let mut q = 0.0;
    for k in 1..=lags {
        let mut num = 0.0;
        for i in k..n {
            num += (xs[i] - mean) * (xs[i - k] - mean);
        }
        let rho = num / denom;
        q += rho * rho / (n - k) as f64;
    }
    q *= n as f64 * (n as f64 + 2.0);
    // chi-square 99th percentiles
    let critical = match lags {
        5 => 15.086,
        10 => 23.209,
        20 => 37.566,
        _ => 2.0 * lags as f64 + 10.0, // coarse guard for unusual lag counts
    };
    LjungBox { statistic: q, critical, passed: q <= critical }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// One-step scheme expectations (Dynkin oracle)
// ---------------------------------------------------------------------------

/// Gauss-Hermite nodes as a probabilist quadrature: E[g(Z)] ≈ Σ w_i g(z_i)
/// for standard normal Z. Nodes via Golub-Welsch on the Hermite Jacobi
/// matrix.
pub fn gauss_hermite_normal(order: usize) -> Vec<(f64, f64)> {
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for i in 1..order {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i - 1, i)] = b;
        jacobi[(i, i - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut out: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let node = eig.eigenvalues[i] * std::f64::consts::SQRT_2;
            let v0 = eig.eigenvectors[(0, i)];
            (node, v0 * v0)
        })
        .collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Exact one-step expectation of `f(t+h, X_{t+h}, S_{t+h}[, π_{t+h}])` under
/// the simulation scheme, by Gauss-Hermite quadrature over the Brownian
/// increment and exact enumeration of the atom outcomes.
///
/// The measure and, for [`GeneratorKind::MinimalFull`], the filter update
/// follow the same conventions as the path simulator, so
/// `(E[f] - f)/h - Lf` decays first order in h when `L` is the matching
/// generator from [`crate::model::apply_generator`].
pub fn one_step_expectation(
    spec: &ModelSpec,
    kind: GeneratorKind,
    point: &GenPoint<'_>,
    f: &dyn Fn(f64, usize, f64, &[f64]) -> f64,
    h: f64,
    quad_order: usize,
) -> Result<f64> {
    let (t, x, s) = (point.t, point.regime, point.s);
    let empty: [f64; 0] = [];
    let p0: &[f64] = point.p.unwrap_or(&empty);
    let measure = match kind {
        GeneratorKind::PhysicalPair => Measure::Physical,
        GeneratorKind::MinimalPair | GeneratorKind::MinimalFull => Measure::Minimal,
    };
    let sigma = spec.sigma1(t, s);
    let drift = match measure {
        Measure::Physical => spec.mu1(t, x, s) - 0.5 * sigma * sigma,
        Measure::Minimal => -mmm::price_jump_drift_star(spec, t, x, s)? - 0.5 * sigma * sigma,
    };
    let mut rates = Vec::with_capacity(spec.n_atoms());
    for k in 0..spec.n_atoms() {
        rates.push(match measure {
            Measure::Physical => spec.marks.rate(k),
            Measure::Minimal => mmm::eta_star(spec, t, x, s, k)?,
        });
    }
    let none_prob = 1.0 - rates.iter().sum::<f64>() * h;
    if none_prob < 0.0 {
        return Err(Error::StepSize { prob: 1.0 - none_prob, required_steps: 0 });
    }
    let nodes = gauss_hermite_normal(quad_order);
    let mut total = 0.0;
    for (z_std, w) in nodes {
        let r = drift * h + sigma * h.sqrt() * z_std;
        let s_cont = s * r.exp();
        // filter state after the continuous update (MinimalFull only)
        let pi_cont: Option<SimplexVector> = if kind == GeneratorKind::MinimalFull {
            let prior = SimplexVector::new(p0.to_vec())?;
            let (next, _) =
                filter::continuous_step(spec, Measure::Physical, t, h, s, r, &prior)?;
            Some(next)
        } else {
            None
        };
        // no-jump outcome
        let mut inner = none_prob
            * match &pi_cont {
                Some(pi) => f(t + h, x, s_cont, pi.as_slice()),
                None => f(t + h, x, s_cont, p0),
            };
        // one atom fires
        for (k, rate) in rates.iter().enumerate() {
            if *rate == 0.0 {
                continue;
            }
            let k1 = spec.k1(k, x, t, s_cont);
            let z = s_cont * k1;
            let dest = spec.k0_dest(k, x);
            let s_new = s_cont + z;
            let value = match &pi_cont {
                Some(pi) => {
                    let pi_new = if k1 != 0.0 {
                        filter::jump_update(spec, Measure::Physical, t, s_cont, z, pi)?
                    } else {
                        pi.clone()
                    };
                    f(t + h, dest, s_new, pi_new.as_slice())
                }
                None => f(t + h, dest, s_new, p0),
            };
            inner += rate * h * value;
        }
        total += w * inner;
    }
    Ok(total)
}

/// Dynkin finite-difference residual `|(E[f(t+h)] - f)/h - Lf|` for the
/// scheme expectation against the closed-form generator.
pub fn dynkin_residual(
    spec: &ModelSpec,
    kind: GeneratorKind,
    point: &GenPoint<'_>,
    f: &crate::model::TestFn<'_>,
    h: f64,
    quad_order: usize,
) -> Result<f64> {
    let expect = one_step_expectation(spec, kind, point, f.value, h, quad_order)?;
    let empty: [f64; 0] = [];
    let p: &[f64] = point.p.unwrap_or(&empty);
    let value = (f.value)(point.t, point.regime, point.s, p);
    let lf = crate::model::apply_generator(spec, kind, f, point)?;
    Ok(((expect - value) / h - lf).abs())
}

// ---------------------------------------------------------------------------
// Regression solve (shared by valuefn)
// ---------------------------------------------------------------------------

/// Least squares with order-respecting column pivoting: columns are
/// orthogonalized left to right (low basis degree first) and a column whose
/// orthogonal residual falls below `rel_tol` times its norm is dropped, its
/// coefficient pinned to zero. A degenerate design therefore falls back to
/// the lowest-degree terms it can support instead of smearing weight over
/// collinear monomials. Returns the coefficients and the retained rank.
pub fn lstsq_ordered(design: &DMatrix<f64>, ys: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, usize) {
    let (n, ncols) = (design.nrows(), design.ncols());
    let mut q_cols: Vec<DVector<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    // R entries for the kept columns: r[k] holds the projections of kept
    // column k on q_cols[0..k]
    let mut r_rows: Vec<Vec<f64>> = Vec::new();
    for j in 0..ncols {
        let col = design.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        let mut proj = Vec::with_capacity(q_cols.len());
        for q in &q_cols {
            let r = q.dot(&v);
            v -= q * r;
            proj.push(r);
        }
        // re-orthogonalize once for numerical safety
        for (qi, q) in q_cols.iter().enumerate() {
            let r = q.dot(&v);
            v -= q * r;
            proj[qi] += r;
        }
        let norm = v.norm();
        if norm > rel_tol * norm0.max(1e-300) && norm > 0.0 {
            proj.push(norm);
            q_cols.push(v / norm);
            r_rows.push(proj);
            kept.push(j);
        }
    }
    // back-substitute R c_kept = Q^T y
    let m = kept.len();
    let qy: Vec<f64> = q_cols.iter().map(|q| q.dot(ys)).collect();
    let mut c_kept = vec![0.0; m];
    for k in (0..m).rev() {
        let mut acc = qy[k];
        for l in k + 1..m {
            acc -= r_rows[l][k] * c_kept[l];
        }
        c_kept[k] = acc / r_rows[k][k];
    }
    let mut coeffs = DVector::zeros(ncols);
    for (k, &j) in kept.iter().enumerate() {
        coeffs[j] = c_kept[k];
    }
    let _ = n;
    (coeffs, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use crate::simulate;

    #[test]
    fn gauss_hermite_integrates_moments() {
        let nodes = gauss_hermite_normal(24);
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let m2: f64 = nodes.iter().map(|(z, w)| w * z * z).sum();
        let m4: f64 = nodes.iter().map(|(z, w)| w * z * z * z * z).sum();
        let mexp: f64 = nodes.iter().map(|(z, w)| w * (0.3 * z).exp()).sum();
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-11);
        assert!((mexp - (0.045f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn uninformative_model_keeps_prior() {
        // coefficients independent of the regime: the exact posterior stays
        // at the prior.
        let mut spec = scenarios::two_regime_small();
        spec.coeffs.mu1 = crate::model::Coefficient::Constant { value: 0.04 };
        spec.coeffs.price_jump = vec![vec![0.02, 0.02], vec![-0.01, -0.01]];
        spec.coeffs.regime_jump_dest = vec![vec![0, 1], vec![0, 1]];
        let path = simulate::simulate_path(&spec, 64, Measure::Physical, 3).unwrap();
        let prior = SimplexVector::new(vec![0.3, 0.7]).unwrap();
        let states = exact_hmm_filter(&spec, &path.observables(), Measure::Physical, &prior).unwrap();
        for st in &states {
            assert!((st.get(0) - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn revealing_jump_collapses_exact_filter() {
        let mut spec = scenarios::two_regime_small();
        // only regime 1 produces a visible jump
        spec.coeffs.price_jump = vec![vec![0.0, 0.05], vec![0.0, 0.0]];
        spec.coeffs.mu1 = crate::model::Coefficient::Constant { value: 0.04 };
        spec.x0 = 1;
        // find a path with a visible jump
        let mut found = false;
        for seed in 0..200 {
            let path = simulate::simulate_path(&spec, 64, Measure::Physical, seed).unwrap();
            let obs = path.observables();
            if obs.visible.is_empty() {
                continue;
            }
            found = true;
            let prior = SimplexVector::uniform(2);
            let states = exact_hmm_filter(&spec, &obs, Measure::Physical, &prior).unwrap();
            let step = obs.visible[0].step;
            let dest = spec.k0_dest(0, 1);
            assert!((states[step + 1].get(dest) - 1.0).abs() < 1e-12);
            break;
        }
        assert!(found, "no jump observed in 200 seeds");
    }

    #[test]
    fn two_step_hand_enumerated_bayes() {
        // d = 2, two silent steps: the posterior must equal the hand-computed
        // sum over the four regime paths of Gaussian likelihoods, silence
        // factors and invisible-switch transitions.
        let mut spec = scenarios::two_regime_small();
        for a in &mut spec.marks.atoms {
            a.weight *= 0.5; // two coarse steps must satisfy the step rule
        }
        let path = simulate::simulate_path(&spec, 2, Measure::Physical, 11).unwrap();
        let obs = path.observables();
        assert!(obs.visible.is_empty(), "seed 11 gives a silent two-step path");
        let prior = SimplexVector::uniform(2);
        let states = exact_hmm_filter(&spec, &obs, Measure::Physical, &prior).unwrap();
        let h = spec.horizon / 2.0;
        let eta_switch = spec.marks.rate(0);
        let eta_kick = spec.marks.rate(1);
        // silent one-step transition: stay without any firing, or flip by an
        // invisible switch; a kick would have been visible
        let trans = |j: usize, i: usize| -> f64 {
            if i == j {
                1.0 - (eta_switch + eta_kick) * h
            } else {
                eta_switch * h
            }
        };
        let mut weights = vec![0.0; 2];
        for j0 in 0..2usize {
            for j1 in 0..2usize {
                for j2 in 0..2usize {
                    let mut w = 0.5;
                    for (step, jstart, jend) in [(0usize, j0, j1), (1usize, j1, j2)] {
                        let t = obs.times[step];
                        let s = obs.prices[step];
                        let sigma = spec.sigma1(t, s);
                        let r = obs.diffusion_log_return(step);
                        let mean = (spec.mu1(t, jstart, s) - 0.5 * sigma * sigma) * h;
                        let dev = r - mean;
                        w *= (-dev * dev / (2.0 * sigma * sigma * h)).exp();
                        w *= trans(jstart, jend);
                    }
                    weights[j2] += w;
                }
            }
        }
        let total: f64 = weights.iter().sum();
        for i in 0..2 {
            assert!(
                (states[2].get(i) - weights[i] / total).abs() < 1e-10,
                "exact filter disagrees with hand enumeration: {} vs {}",
                states[2].get(i),
                weights[i] / total
            );
        }
    }

    #[test]
    fn tree_probabilities_sum_to_one() {
        let spec = scenarios::two_regime_small();
        let prior = SimplexVector::delta(spec.x0, 2);
        let tree = build_observation_tree(&spec, 3, &prior, 1 << 20).unwrap();
        for idx in 0..tree.nodes.len() {
            if tree.children[idx].is_empty() {
                continue;
            }
            let sum_p: f64 = tree.children[idx].iter().map(|&c| tree.nodes[c].cond_prob_p).sum();
            let sum_star: f64 =
                tree.children[idx].iter().map(|&c| tree.nodes[c].cond_prob_star).sum();
            assert!((sum_p - 1.0).abs() < 1e-12, "P-probabilities sum to {sum_p}");
            assert!((sum_star - 1.0).abs() < 1e-12, "P*-probabilities sum to {sum_star}");
        }
    }

    #[test]
    fn one_step_binomial_complete_market() {
        // no jumps, claim = S_T, one step: theta = 1 and residual value 0.
        let spec = {
            let mut s = scenarios::single_regime_complete();
            s.payoff = crate::model::Payoff::Spot;
            s
        };
        let prior = SimplexVector::delta(0, 1);
        let tree = build_observation_tree(&spec, 1, &prior, 1 << 10).unwrap();
        let res = discrete_fs(&tree, |st| st.s);
        let root = res.root();
        assert!((root.theta - 1.0).abs() < 1e-12);
        assert!((root.value - spec.s0).abs() < 1e-12);
    }

    #[test]
    fn constant_payoff_zero_theta() {
        let spec = scenarios::two_regime_small();
        let prior = SimplexVector::delta(spec.x0, 2);
        let tree = build_observation_tree(&spec, 3, &prior, 1 << 20).unwrap();
        let res = discrete_fs(&tree, |_| 1.0);
        for node in &res.per_node {
            assert!(node.theta.abs() < 1e-12);
            assert!((node.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_three_point_regression_closed_form() {
        // one step, one visible atom from a known regime: theta equals the
        // explicit least-squares slope over the three outcomes.
        let mut spec = scenarios::two_regime_small();
        spec.marks.atoms.truncate(1);
        spec.coeffs.regime_jump_dest = vec![vec![1, 0]];
        spec.coeffs.price_jump = vec![vec![-0.04, 0.05]];
        let prior = SimplexVector::delta(0, 2);
        let tree = build_observation_tree(&spec, 1, &prior, 1 << 10).unwrap();
        let res = discrete_fs(&tree, |st| {
            (0..2).map(|i| st.bayes_p[i] * spec.payoff_at(i, st.s)).sum()
        });
        // direct 3-outcome least squares from the root's children
        let root_children = &tree.children[0];
        let stats: Vec<(f64, f64, f64)> = root_children
            .iter()
            .map(|&c| {
                let n = &tree.nodes[c];
                let v: f64 = (0..2)
                    .map(|i| n.state.bayes_p[i] * spec.payoff_at(i, n.state.s))
                    .sum();
                (n.cond_prob_p, v, n.state.s - spec.s0)
            })
            .collect();
        let direct = fs_combine(&stats);
        assert!((res.root().theta - direct.theta).abs() < 1e-13);
        assert!((res.root().value - direct.value).abs() < 1e-13);
    }

    #[test]
    fn fs_replay_reproduces_leaf_payoffs() {
        // replaying theta and value forward: V_leaf = V_root + Σ θ ΔS + Σ residuals,
        // where per step residual = V_child - (V_node + θ (S_child - S_node)).
        let spec = scenarios::two_regime_small();
        let prior = SimplexVector::delta(spec.x0, 2);
        let tree = build_observation_tree(&spec, 3, &prior, 1 << 20).unwrap();
        let payoff =
            |st: &TreeState| (0..2).map(|i| st.bayes_p[i] * spec.payoff_at(i, st.s)).sum::<f64>();
        let res = discrete_fs(&tree, &payoff);
        for leaf in tree.leaves() {
            // walk up to the root accumulating the hedge and residuals
            let mut idx = leaf;
            let mut acc = res.per_node[leaf].value;
            while let Some(parent) = tree.nodes[idx].parent {
                let ds = tree.nodes[idx].state.s - tree.nodes[parent].state.s;
                let residual =
                    res.per_node[idx].value - res.per_node[parent].value - res.per_node[parent].theta * ds;
                acc -= res.per_node[parent].theta * ds + residual;
                idx = parent;
            }
            assert!((acc - res.per_node[0].value).abs() < 1e-10);
            assert!((res.per_node[leaf].value - payoff(&tree.nodes[leaf].state)).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonality_trivial_cases() {
        let a = vec![0.0; 100];
        let phi = vec![vec![1.0; 100], vec![0.0; 100]];
        let est = orthogonality_estimate(&a, &phi);
        assert!(est.iter().all(|e| e.passed && e.estimate == 0.0));
    }
}
