//! Monte-Carlo oracle tests: closed-form moments, measure consistency,
//! martingale properties of the density, innovation diagnostics and the
//! filter projection property.
//!
//! Everything is seeded; tolerances are 3 standard errors unless a criterion
//! states otherwise.

use rayon::prelude::*;

use fshedge::filter::{self, SimplexVector};
use fshedge::mmm;
use fshedge::model::{Coefficient, Measure};
use fshedge::oracle::{self, mean_and_se};
use fshedge::scenarios;
use fshedge::simulate::{self, path_rng};

fn stream<T: Send>(
    spec: &fshedge::model::ModelSpec,
    n_steps: usize,
    measure: Measure,
    n_paths: usize,
    master_seed: u64,
    f: impl Fn(simulate::Path) -> T + Sync,
) -> Vec<T> {
    simulate::check_step_rule(spec, n_steps, measure).unwrap();
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(master_seed, i as u64);
            let p = simulate::simulate_path_with_rng_pub(spec, n_steps, measure, 0, &mut rng)
                .unwrap();
            f(p)
        })
        .collect()
}

#[test]
fn gbm_log_moments_match_closed_form() {
    // K0 = K1 = 0, constant coefficients: S is geometric Brownian motion and
    // log-space Euler is exact, so the sample mean of log S_T must sit within
    // 3 SE of log s0 + (mu - sigma^2/2) T.
    let mut spec = scenarios::continuous_two_regime();
    spec.coeffs.mu1 = Coefficient::Constant { value: 0.07 };
    let n_paths = 100_000;
    let vals = stream(&spec, 64, Measure::Physical, n_paths, 71, |p| {
        p.terminal_price().ln()
    });
    let (mean, se) = mean_and_se(&vals);
    let expected = spec.s0.ln() + (0.07 - 0.5 * 0.2 * 0.2) * spec.horizon;
    assert!(
        (mean - expected).abs() <= 3.0 * se,
        "mean {mean} vs {expected} (se {se})"
    );
}

#[test]
fn starred_simulation_price_is_martingale() {
    let spec = scenarios::two_regime_small();
    let vals = stream(&spec, 64, Measure::Minimal, 100_000, 72, |p| p.terminal_price());
    let (mean, se) = mean_and_se(&vals);
    assert!(
        (mean - spec.s0).abs() <= 3.0 * se,
        "E*[S_T] = {mean} vs {} (se {se})",
        spec.s0
    );
}

#[test]
fn physical_jump_counts_match_rates() {
    // per-atom firing counts over [0, T] within 3 SE of eta_k T
    let spec = scenarios::two_regime_small();
    let n_paths = 50_000;
    let counts = stream(&spec, 128, Measure::Physical, n_paths, 73, |p| {
        let mut c = vec![0.0; spec.n_atoms()];
        for e in &p.events {
            c[e.atom] += 1.0;
        }
        c
    });
    for k in 0..spec.n_atoms() {
        let per_atom: Vec<f64> = counts.iter().map(|c| c[k]).collect();
        let (mean, se) = mean_and_se(&per_atom);
        let expected = spec.marks.rate(k) * spec.horizon;
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "atom {k}: count {mean} vs {expected} (se {se})"
        );
    }
}

#[test]
fn starred_jump_counts_match_rate_integrals() {
    // under the minimal measure the per-atom count compensator is the time
    // integral of eta*_k along the path
    let spec = scenarios::two_regime_small();
    let n_paths = 50_000;
    let diffs = stream(&spec, 128, Measure::Minimal, n_paths, 74, |p| {
        let h = spec.horizon / p.n_steps() as f64;
        let mut out = vec![0.0; spec.n_atoms()];
        for k in 0..spec.n_atoms() {
            let count = p.events.iter().filter(|e| e.atom == k).count() as f64;
            let mut integral = 0.0;
            for step in 0..p.n_steps() {
                integral += h
                    * mmm::eta_star(&spec, p.times[step], p.regimes[step], p.prices[step], k)
                        .unwrap();
            }
            out[k] = count - integral;
        }
        out
    });
    for k in 0..spec.n_atoms() {
        let per_atom: Vec<f64> = diffs.iter().map(|c| c[k]).collect();
        let (mean, se) = mean_and_se(&per_atom);
        assert!(
            mean.abs() <= 3.0 * se,
            "atom {k}: count-compensator gap {mean} (se {se})"
        );
    }
}

#[test]
fn monte_carlo_error_scales_as_inverse_sqrt_n() {
    // doubling the path count shrinks the standard error of S_T's mean by
    // about 1/sqrt(2)
    let spec = scenarios::two_regime_small();
    let vals = stream(&spec, 32, Measure::Physical, 40_000, 75, |p| p.terminal_price());
    let (_, se_half) = mean_and_se(&vals[..20_000]);
    let (_, se_full) = mean_and_se(&vals);
    let ratio = se_full / se_half;
    assert!(
        (0.62..=0.80).contains(&ratio),
        "SE ratio {ratio} not compatible with 1/sqrt(2)"
    );
}

#[test]
fn density_is_martingale_and_reprices() {
    let spec = scenarios::two_regime_small();
    let n_paths = 100_000;
    let vals = stream(&spec, 64, Measure::Physical, n_paths, 76, |p| {
        let l = mmm::doleans_density(&spec, &p).unwrap().terminal();
        (l, l * p.terminal_price())
    });
    let l: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let ls: Vec<f64> = vals.iter().map(|v| v.1).collect();
    let (lm, lse) = mean_and_se(&l);
    let (lsm, lsse) = mean_and_se(&ls);
    assert!((lm - 1.0).abs() <= 3.0 * lse, "E[L_T] = {lm} (se {lse})");
    assert!(
        (lsm - spec.s0).abs() <= 3.0 * lsse,
        "E[L_T S_T] = {lsm} (se {lsse})"
    );
    // trivial measure change: alpha^F = 0 when mu1 = 0 and K1 = 0
    let mut trivial = scenarios::continuous_two_regime();
    trivial.coeffs.mu1 = Coefficient::Constant { value: 0.0 };
    let path = simulate::simulate_path(&trivial, 64, Measure::Physical, 5).unwrap();
    let dens = mmm::doleans_density(&trivial, &path).unwrap();
    for v in dens.values {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn reweighting_matches_direct_starred_simulation() {
    // five bounded path functionals under L-reweighted physical sampling vs
    // direct starred sampling, within a joint 3-sigma band
    let spec = scenarios::two_regime_small();
    let n_paths = 100_000;
    let functionals = |p: &simulate::Path| -> [f64; 5] {
        let s_t = p.terminal_price();
        let s_max = p.prices.iter().cloned().fold(0.0f64, f64::max);
        let s_mean = p.prices.iter().sum::<f64>() / p.prices.len() as f64;
        let jumps = p.events.iter().filter(|e| e.size != 0.0).count();
        [
            s_t.min(2.0),
            if s_t > 1.0 { 1.0 } else { 0.0 },
            s_max.min(3.0),
            s_mean.min(2.0),
            if jumps >= 1 { 1.0 } else { 0.0 },
        ]
    };
    let weighted = stream(&spec, 64, Measure::Physical, n_paths, 77, |p| {
        let l = mmm::doleans_density(&spec, &p).unwrap().terminal();
        functionals(&p).map(|v| l * v)
    });
    let direct = stream(&spec, 64, Measure::Minimal, n_paths, 78, |p| functionals(&p));
    for j in 0..5 {
        let a: Vec<f64> = weighted.iter().map(|v| v[j]).collect();
        let b: Vec<f64> = direct.iter().map(|v| v[j]).collect();
        let (ma, sa) = mean_and_se(&a);
        let (mb, sb) = mean_and_se(&b);
        let joint = (sa * sa + sb * sb).sqrt();
        assert!(
            (ma - mb).abs() <= 3.0 * joint,
            "functional {j}: reweighted {ma} vs direct {mb} (joint se {joint})"
        );
    }
}

#[test]
fn innovation_is_standard_brownian() {
    // unit variance of dI/sqrt(h) over 10^4+ steps, Ljung-Box at 1%
    let spec = scenarios::two_regime_small();
    let prior = SimplexVector::delta(spec.x0, spec.dim());
    let n_steps = 256;
    let n_paths = 60; // > 10^4 steps total
    let h = spec.horizon / n_steps as f64;
    let normalized: Vec<Vec<f64>> =
        stream(&spec, n_steps, Measure::Physical, n_paths, 79, |p| {
            let traj =
                filter::filter_path(&spec, &p.observables(), Measure::Physical, &prior).unwrap();
            traj.innovations.iter().map(|di| di / h.sqrt()).collect()
        });
    let all: Vec<f64> = normalized.into_iter().flatten().collect();
    assert!(all.len() >= 10_000);
    let (mean, se) = mean_and_se(&all);
    assert!(mean.abs() <= 3.0 * se, "innovation mean {mean} (se {se})");
    let var = all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (all.len() - 1) as f64;
    assert!(
        (0.95..=1.05).contains(&var),
        "innovation variance {var} outside [0.95, 1.05]"
    );
    let lb = oracle::ljung_box(&all, 20);
    assert!(
        lb.passed,
        "Ljung-Box Q = {} above the 1% critical value {}",
        lb.statistic, lb.critical
    );
}

#[test]
fn known_regime_innovation_equals_brownian_increments() {
    // prior = truth and no regime transitions: the filter knows the drift,
    // so dI reconstructed from observables equals the latent dW exactly
    let mut spec = scenarios::two_regime_small();
    spec.coeffs.regime_jump_dest = vec![vec![0, 1], vec![0, 1]]; // switch does nothing
    spec.coeffs.price_jump = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    let prior = SimplexVector::delta(spec.x0, spec.dim());
    let path = simulate::simulate_path(&spec, 128, Measure::Physical, 91).unwrap();
    let traj = filter::filter_path(&spec, &path.observables(), Measure::Physical, &prior).unwrap();
    for (di, dw) in traj.innovations.iter().zip(&path.brownian) {
        assert!((di - dw).abs() < 1e-10, "dI {di} vs dW {dw}");
    }
    // and innovation_increments reproduces the stored increments
    let again =
        filter::innovation_increments(&spec, &path.observables(), &traj).unwrap();
    for (a, b) in again.iter().zip(&traj.innovations) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn filter_projection_property() {
    // E[f_i(X_T) phi(S-path)] = E[pi_T(f_i) phi(S-path)] for bounded
    // observable functionals phi; paired estimator within 3 SE
    let spec = scenarios::two_regime_small();
    let prior = SimplexVector::delta(spec.x0, spec.dim());
    let n_paths = 20_000;
    let n_steps = 256;
    let diffs = stream(&spec, n_steps, Measure::Physical, n_paths, 80, |p| {
        let obs = p.observables();
        let traj = filter::filter_path(&spec, &obs, Measure::Physical, &prior).unwrap();
        let pi_t = traj.terminal();
        let truth = if p.terminal_regime() == 0 { 1.0 } else { 0.0 };
        let gap = truth - pi_t.get(0);
        let s_t = p.terminal_price();
        let s_mean = p.prices.iter().sum::<f64>() / p.prices.len() as f64;
        [
            gap,
            gap * s_t.min(2.0),
            gap * if s_t > 1.0 { 1.0 } else { 0.0 },
            gap * s_mean.min(2.0),
            gap * (s_t - 1.0).abs().min(1.0),
        ]
    });
    for j in 0..5 {
        let col: Vec<f64> = diffs.iter().map(|v| v[j]).collect();
        let (mean, se) = mean_and_se(&col);
        assert!(
            mean.abs() <= 3.0 * se.max(1e-12),
            "functional {j}: projection gap {mean} (se {se})"
        );
    }
}

#[test]
fn filter_refinement_against_exact_bayes() {
    // first-order decay of the sup-norm filter error vs the exact filter
    let spec = scenarios::two_regime_small();
    let prior = SimplexVector::delta(spec.x0, spec.dim());
    let mut errs = Vec::new();
    for (lvl, n_steps) in [(0u64, 32usize), (1, 64)] {
        let per = stream(&spec, n_steps, Measure::Physical, 100, 811 + lvl, |p| {
            let obs = p.observables();
            let ks = filter::filter_path(&spec, &obs, Measure::Physical, &prior).unwrap();
            let exact =
                oracle::exact_hmm_filter(&spec, &obs, Measure::Physical, &prior).unwrap();
            ks.states
                .iter()
                .zip(&exact)
                .map(|(a, b)| {
                    (0..spec.dim())
                        .map(|i| (a.get(i) - b.get(i)).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        });
        errs.push(per.iter().sum::<f64>() / per.len() as f64);
    }
    let ratio = errs[0] / errs[1];
    assert!(
        (1.5..=3.0).contains(&ratio),
        "refinement ratio {ratio} (errors {errs:?})"
    );
}
