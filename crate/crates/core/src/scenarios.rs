//! Named desk-scale scenarios used by the verification suites and shipped as
//! JSON scenario files.

use crate::model::{
    Bounds, Coefficient, CoefficientSet, MarkAtom, MarkSpace, ModelSpec, Payoff, RegimeSet,
};

/// Two hidden regimes, two mark atoms, horizon 1.
///
/// Atom "switch" flips the regime with no price effect: regime changes are
/// invisible, so the observer genuinely filters, learning the regime from
/// the drift of returns. Atom "kick" leaves the regime alone but moves the
/// price by a regime-dependent amount, so an observed kick reveals the
/// current regime until the next invisible switch blurs it again. The claim
/// is a call whose payout is scaled by the terminal regime, hence not
/// measurable for the price observer.
pub fn two_regime_small() -> ModelSpec {
    ModelSpec {
        regimes: RegimeSet { values: vec![0.0, 1.0] },
        marks: MarkSpace {
            atoms: vec![
                MarkAtom { id: "switch".into(), weight: 0.28 },
                MarkAtom { id: "kick".into(), weight: 0.10 },
            ],
        },
        coeffs: CoefficientSet {
            mu1: Coefficient::RegimeTable { values: vec![0.10, -0.06] },
            sigma1: Coefficient::Constant { value: 0.2 },
            regime_jump_dest: vec![vec![1, 0], vec![0, 1]],
            price_jump: vec![vec![0.0, 0.0], vec![-0.04, 0.05]],
            bounds: Bounds { c1: 0.5, c2: 0.05, c3: 0.5, c4: 0.5, price_lo: 0.3, price_hi: 3.0 },
        },
        x0: 0,
        s0: 1.0,
        horizon: 1.0,
        payoff: Payoff::RegimeScaledCall { strike: 0.8, scale: vec![1.0, 1.25] },
    }
}

/// The same two-regime market with the regime-neutral call claim
/// H(T, x, s) = max(s - K, 0); the claim itself is price-observable at T,
/// while its value still depends on the filter.
pub fn two_regime_plain_call() -> ModelSpec {
    let mut spec = two_regime_small();
    spec.payoff = Payoff::Call { strike: 0.8 };
    spec
}

/// Continuous-price variant: no atom moves the price (K1 identically zero),
/// regime switches stay latent, drift is regime-dependent. Used for the
/// continuous-trajectory reduction of the hedge formula.
pub fn continuous_two_regime() -> ModelSpec {
    let mut spec = two_regime_small();
    spec.coeffs.price_jump = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    spec.payoff = Payoff::Call { strike: 0.9 };
    spec
}

/// Quadratic claim H(T, x, s) = (s/s0)² on the two-regime jump market with
/// price-level-free coefficients. The value function is exactly
/// s² · m(t, x) with m solving a linear ODE system, which the orthogonality
/// suite exploits. Jumps are larger than in the base scenario so the claim
/// carries substantial genuinely unhedgeable risk.
pub fn two_regime_quadratic() -> ModelSpec {
    let mut spec = two_regime_small();
    spec.coeffs.price_jump = vec![vec![0.0, 0.0], vec![-0.08, 0.09]];
    spec.payoff = Payoff::QuadraticSpot { scale: 1.0 };
    spec
}

/// Blind-observation market: the drift and both jump effects are regime
/// free, so the price path carries no regime information and the filter is
/// the deterministic prediction of the switch chain; the claim scales a
/// quadratic payout by the hidden terminal regime. The residual of the
/// hedge is dominated by genuinely unhedgeable regime risk, which is what
/// the weak-orthogonality estimators are pointed at.
pub fn two_regime_blind_quadratic() -> ModelSpec {
    let mut spec = two_regime_small();
    spec.coeffs.mu1 = Coefficient::Constant { value: 0.05 };
    // kick: visible, same size and rate from both regimes, leaves the regime
    spec.coeffs.regime_jump_dest = vec![vec![1, 0], vec![0, 1]];
    spec.coeffs.price_jump = vec![vec![0.0, 0.0], vec![0.04, 0.04]];
    spec.payoff = Payoff::RegimeScaledQuadratic { scale: vec![0.8, 1.3] };
    spec
}

/// Single-regime complete-information degenerate market (d = 1, no jumps):
/// the filter is trivial and every claim on S alone is attainable.
pub fn single_regime_complete() -> ModelSpec {
    ModelSpec {
        regimes: RegimeSet { values: vec![0.0] },
        marks: MarkSpace { atoms: vec![MarkAtom { id: "noop".into(), weight: 0.5 }] },
        coeffs: CoefficientSet {
            mu1: Coefficient::Constant { value: 0.05 },
            sigma1: Coefficient::Constant { value: 0.2 },
            regime_jump_dest: vec![vec![0]],
            price_jump: vec![vec![0.0]],
            bounds: Bounds { c1: 0.5, c2: 0.05, c3: 0.5, c4: 0.5, price_lo: 0.3, price_hi: 3.0 },
        },
        x0: 0,
        s0: 1.0,
        horizon: 1.0,
        payoff: Payoff::Call { strike: 1.0 },
    }
}

/// All named scenarios, for the CLI and for scenario-file generation.
pub fn by_name(name: &str) -> Option<ModelSpec> {
    match name {
        "two_regime_small" => Some(two_regime_small()),
        "two_regime_plain_call" => Some(two_regime_plain_call()),
        "continuous_two_regime" => Some(continuous_two_regime()),
        "two_regime_quadratic" => Some(two_regime_quadratic()),
        "two_regime_blind_quadratic" => Some(two_regime_blind_quadratic()),
        "single_regime_complete" => Some(single_regime_complete()),
        _ => None,
    }
}

pub const ALL: &[&str] = &[
    "two_regime_small",
    "two_regime_plain_call",
    "continuous_two_regime",
    "two_regime_quadratic",
    "two_regime_blind_quadratic",
    "single_regime_complete",
];
