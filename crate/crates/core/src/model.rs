//! Hidden-regime jump-diffusion market model.
//!
//! The model couples an unobservable pure-jump regime process `X` (taking
//! values in a finite set of real regime levels) with an observable price `S`:
//!
//! ```text
//! dX_t = ∫ K0(ζ; t, X_{t-}) N(dt, dζ)                      X_0 = x0
//! dS_t = S_{t-} ( μ1(t, X_t, S_t) dt + σ1(t, S_t) dW_t
//!               + ∫ K1(ζ; t, X_{t-}, S_{t-}) N(dt, dζ) )   S_0 = s0
//! ```
//!
//! `N` is a Poisson random measure over a finite mark space with intensity
//! `η(dζ) dt`: a fixed list of atoms ζ_1..ζ_m with positive rates η_1..η_m.
//! Each atom firing moves the regime (`K0`, constrained so that `X` stays in
//! the regime set) and kicks the price (`K1`) simultaneously. Finiteness of
//! the mark space makes every jump-measure integral a finite sum and every
//! Bayes ratio in the filters an exact finite ratio.
//!
//! This module holds the model description, assumption validation by dense
//! grid sampling, the price-jump kernel (the dual-projection measure ν of the
//! price jumps realized atom by atom), and the Markov generators of
//! `(X, S)` under the physical and minimal martingale measures and of
//! `(X, S, π)` under the minimal martingale measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter;
use crate::mmm;

/// Relative tolerance used to decide whether two price-jump sizes are the
/// same atom of the jump-size measure.
pub const JUMP_SIZE_TOL: f64 = 1e-9;

/// Probability measure under which a quantity is computed or simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Physical measure P.
    Physical,
    /// Minimal martingale measure P*.
    Minimal,
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::Physical => write!(f, "P"),
            Measure::Minimal => write!(f, "Pstar"),
        }
    }
}

// ---------------------------------------------------------------------------
// Mark space and regimes
// ---------------------------------------------------------------------------

/// One atom of the mark space: an opaque identifier plus a positive rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkAtom {
    pub id: String,
    /// Rate η_k, in units of 1/time.
    pub weight: f64,
}

/// Finite mark space (Z, η): atoms ζ_1..ζ_m with rates η_1..η_m.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkSpace {
    pub atoms: Vec<MarkAtom>,
}

impl MarkSpace {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Total mass η(Z) = Σ η_k.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn rate(&self, atom: usize) -> f64 {
        self.atoms[atom].weight
    }

    fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::InvalidModel("mark space must have m >= 1 atoms".into()));
        }
        for (k, a) in self.atoms.iter().enumerate() {
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "mark atom {k} ({}) has non-positive or non-finite rate {}",
                    a.id, a.weight
                )));
            }
        }
        if !self.total_mass().is_finite() {
            return Err(Error::InvalidModel("total mark mass is not finite".into()));
        }
        Ok(())
    }
}

/// Finite regime set D = {x_1, .., x_d} of distinct real levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeSet {
    pub values: Vec<f64>,
}

impl RegimeSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidModel("regime set must be nonempty".into()));
        }
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!("regime value {i} is not finite")));
            }
            for (j, w) in self.values.iter().enumerate().skip(i + 1) {
                if v == w {
                    return Err(Error::InvalidModel(format!(
                        "regime values {i} and {j} coincide ({v})"
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Coefficients
// ---------------------------------------------------------------------------

/// A coefficient function built from a small library of evaluation rules.
///
/// All rules are time-homogeneous; the evaluation signature still carries `t`
/// so the rest of the engine treats coefficients as functions of
/// `(t, regime, price)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant { value: f64 },
    /// `intercept + slope * s`
    AffineInPrice { intercept: f64, slope: f64 },
    /// One value per regime index.
    RegimeTable { values: Vec<f64> },
    /// `intercepts[x] + slopes[x] * s`
    RegimeAffineInPrice { intercepts: Vec<f64>, slopes: Vec<f64> },
}

impl Coefficient {
    pub fn eval(&self, regime: usize, _t: f64, s: f64) -> f64 {
        match self {
            Coefficient::Constant { value } => *value,
            Coefficient::AffineInPrice { intercept, slope } => intercept + slope * s,
            Coefficient::RegimeTable { values } => values[regime],
            Coefficient::RegimeAffineInPrice { intercepts, slopes } => {
                intercepts[regime] + slopes[regime] * s
            }
        }
    }

    fn depends_on_regime(&self) -> bool {
        matches!(
            self,
            Coefficient::RegimeTable { .. } | Coefficient::RegimeAffineInPrice { .. }
        )
    }

    fn regime_len(&self) -> Option<usize> {
        match self {
            Coefficient::RegimeTable { values } => Some(values.len()),
            Coefficient::RegimeAffineInPrice { intercepts, slopes } => {
                Some(intercepts.len().min(slopes.len()))
            }
            _ => None,
        }
    }
}

/// Bounds c_1..c_4 for the standing coefficient assumptions plus the price
/// window over which they are checked by grid sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bounds {
    /// Upper bound for the drift: μ1 < c1.
    pub c1: f64,
    /// Lower bound for the volatility: σ1 > c2 > 0.
    pub c2: f64,
    /// Upper bound for the volatility: σ1 < c3.
    pub c3: f64,
    /// Upper bound for the relative price jump: K1 < c4.
    pub c4: f64,
    /// Price window [price_lo, price_hi] for grid validation.
    pub price_lo: f64,
    pub price_hi: f64,
}

/// Drift, volatility and jump coefficients of the coupled system.
///
/// The regime jump `K0` is stored as a destination table: firing atom `k`
/// while in regime `j` moves the regime to `regime_jump_dest[k][j]`, so
/// `K0(ζ_k; t, x_j) = x_dest - x_j` and the regime set is closed under jumps
/// by construction. `dest == j` means the atom leaves the regime unchanged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub mu1: Coefficient,
    /// Volatility σ1(t, s); must not depend on the regime.
    pub sigma1: Coefficient,
    /// `[atom][regime] -> destination regime index`.
    pub regime_jump_dest: Vec<Vec<usize>>,
    /// `[atom][regime] -> K1`, the relative price jump.
    pub price_jump: Vec<Vec<f64>>,
    pub bounds: Bounds,
}

// ---------------------------------------------------------------------------
// Payoff
// ---------------------------------------------------------------------------

/// Terminal claim H(T, x, s), evaluated at the terminal regime level and price.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    Constant { value: f64 },
    Spot,
    Call { strike: f64 },
    Put { strike: f64 },
    /// `scale * s^2`
    QuadraticSpot { scale: f64 },
    /// `scale[x] * s^2`: quadratic claim scaled by the hidden terminal
    /// regime.
    RegimeScaledQuadratic { scale: Vec<f64> },
    /// Call scaled by a per-regime factor; genuinely depends on the hidden
    /// terminal regime.
    RegimeScaledCall { strike: f64, scale: Vec<f64> },
}

impl Payoff {
    pub fn eval(&self, regime: usize, s: f64) -> f64 {
        match self {
            Payoff::Constant { value } => *value,
            Payoff::Spot => s,
            Payoff::Call { strike } => (s - strike).max(0.0),
            Payoff::Put { strike } => (strike - s).max(0.0),
            Payoff::QuadraticSpot { scale } => scale * s * s,
            Payoff::RegimeScaledQuadratic { scale } => scale[regime] * s * s,
            Payoff::RegimeScaledCall { strike, scale } => scale[regime] * (s - strike).max(0.0),
        }
    }

    pub fn depends_on_regime(&self) -> bool {
        matches!(
            self,
            Payoff::RegimeScaledCall { .. } | Payoff::RegimeScaledQuadratic { .. }
        )
    }
}

// ---------------------------------------------------------------------------
// Model spec
// ---------------------------------------------------------------------------

/// Full parameterization of the hidden-regime jump-diffusion model.
///
/// Immutable after validation; all engine operations are pure functions of a
/// shared `&ModelSpec`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub regimes: RegimeSet,
    pub marks: MarkSpace,
    pub coeffs: CoefficientSet,
    /// Initial regime index.
    pub x0: usize,
    /// Initial price.
    pub s0: f64,
    /// Time horizon T.
    pub horizon: f64,
    pub payoff: Payoff,
}

impl ModelSpec {
    /// Number of regimes d.
    pub fn dim(&self) -> usize {
        self.regimes.len()
    }

    /// Number of mark atoms m.
    pub fn n_atoms(&self) -> usize {
        self.marks.len()
    }

    pub fn mu1(&self, t: f64, regime: usize, s: f64) -> f64 {
        self.coeffs.mu1.eval(regime, t, s)
    }

    pub fn sigma1(&self, t: f64, s: f64) -> f64 {
        self.coeffs.sigma1.eval(0, t, s)
    }

    /// Relative price jump K1(ζ_atom; t, x_regime, s).
    pub fn k1(&self, atom: usize, regime: usize, _t: f64, _s: f64) -> f64 {
        self.coeffs.price_jump[atom][regime]
    }

    /// Destination regime index after atom `atom` fires in regime `regime`.
    pub fn k0_dest(&self, atom: usize, regime: usize) -> usize {
        self.coeffs.regime_jump_dest[atom][regime]
    }

    /// K0(ζ_atom; t, x_regime) as a real regime displacement.
    pub fn k0_value(&self, atom: usize, regime: usize) -> f64 {
        self.regimes.value(self.k0_dest(atom, regime)) - self.regimes.value(regime)
    }

    pub fn payoff_at(&self, regime: usize, s: f64) -> f64 {
        self.payoff.eval(regime, s)
    }

    /// Filter mean Σ_i p_i μ1(t, x_i, s).
    pub fn mu1_mixture(&self, t: f64, s: f64, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(i, pi)| pi * self.mu1(t, i, s))
            .sum()
    }

    /// True when no atom ever moves the price (K1 identically zero): the
    /// price path is continuous.
    pub fn is_continuous(&self) -> bool {
        self.coeffs.price_jump.iter().all(|row| row.iter().all(|k| *k == 0.0))
    }

    /// Structural validation: shapes, positivity, index ranges. Grid-based
    /// assumption checks live in [`validate_model`].
    pub fn basic_validate(&self) -> Result<()> {
        self.regimes.validate()?;
        self.marks.validate()?;
        let d = self.dim();
        let m = self.n_atoms();
        if self.coeffs.sigma1.depends_on_regime() {
            return Err(Error::InvalidModel("sigma1 must not depend on the regime".into()));
        }
        for c in [&self.coeffs.mu1, &self.coeffs.sigma1] {
            if let Some(n) = c.regime_len() {
                if n != d {
                    return Err(Error::InvalidModel(format!(
                        "regime-indexed coefficient has {n} entries, expected {d}"
                    )));
                }
            }
        }
        if self.coeffs.regime_jump_dest.len() != m || self.coeffs.price_jump.len() != m {
            return Err(Error::InvalidModel(format!(
                "jump tables must have one row per atom ({m})"
            )));
        }
        for (k, row) in self.coeffs.regime_jump_dest.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidModel(format!(
                    "regime_jump_dest row {k} has {} entries, expected {d}",
                    row.len()
                )));
            }
            for (j, dest) in row.iter().enumerate() {
                if *dest >= d {
                    return Err(Error::InvalidModel(format!(
                        "regime_jump_dest[{k}][{j}] = {dest} out of range (d = {d})"
                    )));
                }
            }
        }
        for (k, row) in self.coeffs.price_jump.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidModel(format!(
                    "price_jump row {k} has {} entries, expected {d}",
                    row.len()
                )));
            }
        }
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidModel(format!("s0 must be positive, got {}", self.s0)));
        }
        if self.x0 >= d {
            return Err(Error::InvalidModel(format!("x0 = {} out of range (d = {d})", self.x0)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidModel("horizon must be positive".into()));
        }
        match &self.payoff {
            Payoff::RegimeScaledCall { scale, .. } | Payoff::RegimeScaledQuadratic { scale } => {
                if scale.len() != d {
                    return Err(Error::InvalidModel(
                        "payoff regime scale must have d entries".into(),
                    ));
                }
            }
            _ => {}
        }
        let b = &self.coeffs.bounds;
        if !(b.c2 > 0.0) {
            return Err(Error::InvalidModel("volatility lower bound c2 must be positive".into()));
        }
        if !(b.price_lo > 0.0 && b.price_hi > b.price_lo) {
            return Err(Error::InvalidModel("price window must satisfy 0 < lo < hi".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.basic_validate()?;
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// Price-jump kernel
// ---------------------------------------------------------------------------

/// One visible entry of the price-jump kernel at a point `(t, x, s)`.
#[derive(Debug, Clone, Copy)]
pub struct LevyKernelEntry {
    pub atom: usize,
    /// Absolute price jump z = s * K1(ζ_atom; t, x, s). Nonzero by construction.
    pub size: f64,
    /// Destination regime index.
    pub dest: usize,
    /// Atom rate under the requested measure.
    pub rate: f64,
}

/// The price-jump measure ν_t at a point, realized as a finite list of atoms.
///
/// Only atoms with nonzero price effect (the active set D_t) appear;
/// `total_rate` is ν_t(R) = η(D_t).
#[derive(Debug, Clone)]
pub struct LevyKernel {
    pub entries: Vec<LevyKernelEntry>,
    pub total_rate: f64,
}

impl LevyKernel {
    /// Group entries by jump size, summing rates of coinciding sizes.
    /// Returns (size, total rate) sorted by size.
    pub fn grouped_by_size(&self) -> Vec<(f64, f64)> {
        group_jump_sizes(self.entries.iter().map(|e| (e.size, e.rate)))
    }

    /// ν_t(A) for an interval A = (lo, hi].
    pub fn rate_in_interval(&self, lo: f64, hi: f64) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.size > lo && e.size <= hi)
            .map(|e| e.rate)
            .sum()
    }
}

/// Whether two observed jump sizes refer to the same atom of the size measure.
pub fn same_jump_size(a: f64, b: f64) -> bool {
    (a - b).abs() <= JUMP_SIZE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Group (size, rate) pairs by size within [`JUMP_SIZE_TOL`].
pub fn group_jump_sizes(items: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = items.collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (z, r) in v {
        match out.last_mut() {
            Some((z0, r0)) if same_jump_size(*z0, z) => *r0 += r,
            _ => out.push((z, r)),
        }
    }
    out
}

/// Price-jump kernel at `(t, x, s)` under the physical measure: entries
/// `(z_k, destination, η_k)` over atoms with `z_k = s K1(ζ_k; t, x, s) != 0`.
pub fn levy_kernel(spec: &ModelSpec, t: f64, regime: usize, s: f64) -> LevyKernel {
    levy_kernel_with_rates(spec, t, regime, s, |k| spec.marks.rate(k))
}

/// As [`levy_kernel`] but with caller-supplied per-atom rates (used for the
/// minimal-measure kernel with rates η*_k).
pub fn levy_kernel_with_rates(
    spec: &ModelSpec,
    t: f64,
    regime: usize,
    s: f64,
    rate: impl Fn(usize) -> f64,
) -> LevyKernel {
    let mut entries = Vec::new();
    let mut total = 0.0;
    for k in 0..spec.n_atoms() {
        let k1 = spec.k1(k, regime, t, s);
        if k1 != 0.0 {
            let r = rate(k);
            entries.push(LevyKernelEntry {
                atom: k,
                size: s * k1,
                dest: spec.k0_dest(k, regime),
                rate: r,
            });
            total += r;
        }
    }
    LevyKernel { entries, total_rate: total }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Outcome of a single named assumption check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Worst value encountered for the checked quantity.
    pub worst_value: f64,
    /// Worst grid point (t, regime index, s), when applicable.
    pub worst_point: Option<(f64, usize, f64)>,
}

/// Assumption validation report; `passed` is the conjunction of all checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct GridSweep {
    times: Vec<f64>,
    prices: Vec<f64>,
}

impl GridSweep {
    fn new(spec: &ModelSpec, grid_density: usize) -> Self {
        let n = grid_density.max(2);
        let b = &spec.coeffs.bounds;
        let times = (0..n)
            .map(|i| spec.horizon * i as f64 / (n - 1) as f64)
            .collect();
        let prices = (0..n)
            .map(|i| b.price_lo + (b.price_hi - b.price_lo) * i as f64 / (n - 1) as f64)
            .collect();
        GridSweep { times, prices }
    }

    /// Sweep f over the grid; track the maximum of f and its location.
    /// Returns Err on a non-finite value.
    fn max_over_grid(
        &self,
        spec: &ModelSpec,
        mut f: impl FnMut(f64, usize, f64) -> f64,
    ) -> Result<(f64, (f64, usize, f64))> {
        let mut worst = f64::NEG_INFINITY;
        let mut at = (0.0, 0usize, 0.0);
        for &t in &self.times {
            for x in 0..spec.dim() {
                for &s in &self.prices {
                    let v = f(t, x, s);
                    if !v.is_finite() {
                        return Err(Error::ValidationFailed(format!(
                            "non-finite coefficient value at (t={t}, x={x}, s={s})"
                        )));
                    }
                    if v > worst {
                        worst = v;
                        at = (t, x, s);
                    }
                }
            }
        }
        Ok((worst, at))
    }
}

/// Validate every standing assumption of the model by dense grid sampling
/// over `[0, T] x [price_lo, price_hi] x regimes`.
///
/// A non-finite coefficient anywhere on the grid is a hard error; all other
/// violations are reported check by check with the worst grid point.
/// Downstream operations refuse specs whose report has `passed == false`.
pub fn validate_model(spec: &ModelSpec, grid_density: usize) -> Result<ValidationReport> {
    spec.basic_validate()?;
    let grid = GridSweep::new(spec, grid_density);
    let b = spec.coeffs.bounds.clone();
    let mut checks = Vec::new();

    // Drift bound mu1 < c1.
    let (worst, at) = grid.max_over_grid(spec, |t, x, s| spec.mu1(t, x, s))?;
    checks.push(CheckResult {
        name: "mu1_upper_bound".into(),
        passed: worst < b.c1,
        detail: format!("max mu1 = {worst} vs c1 = {}", b.c1),
        worst_value: worst,
        worst_point: Some(at),
    });

    // Volatility window c2 < sigma1 < c3 with c2 > 0.
    let (worst_hi, at_hi) = grid.max_over_grid(spec, |t, _x, s| spec.sigma1(t, s))?;
    let (neg_lo, at_lo) = grid.max_over_grid(spec, |t, _x, s| -spec.sigma1(t, s))?;
    let worst_lo = -neg_lo;
    checks.push(CheckResult {
        name: "sigma1_upper_bound".into(),
        passed: worst_hi < b.c3,
        detail: format!("max sigma1 = {worst_hi} vs c3 = {}", b.c3),
        worst_value: worst_hi,
        worst_point: Some(at_hi),
    });
    checks.push(CheckResult {
        name: "sigma1_lower_bound".into(),
        passed: worst_lo > b.c2 && b.c2 > 0.0,
        detail: format!("min sigma1 = {worst_lo} vs c2 = {}", b.c2),
        worst_value: worst_lo,
        worst_point: Some(at_lo),
    });

    // Jump bound K1 < c4 and price positivity 1 + K1 > 0.
    let mut worst_k1 = f64::NEG_INFINITY;
    let mut worst_k1_at = None;
    let mut min_one_plus = f64::INFINITY;
    let mut min_one_plus_at = None;
    for &t in &grid.times {
        for x in 0..spec.dim() {
            for &s in &grid.prices {
                for k in 0..spec.n_atoms() {
                    let k1 = spec.k1(k, x, t, s);
                    if !k1.is_finite() {
                        return Err(Error::ValidationFailed(format!(
                            "non-finite K1 at atom {k}, (t={t}, x={x}, s={s})"
                        )));
                    }
                    if k1 > worst_k1 {
                        worst_k1 = k1;
                        worst_k1_at = Some((t, x, s));
                    }
                    if 1.0 + k1 < min_one_plus {
                        min_one_plus = 1.0 + k1;
                        min_one_plus_at = Some((t, x, s));
                    }
                }
            }
        }
    }
    if spec.n_atoms() > 0 {
        checks.push(CheckResult {
            name: "k1_upper_bound".into(),
            passed: worst_k1 < b.c4,
            detail: format!("max K1 = {worst_k1} vs c4 = {}", b.c4),
            worst_value: worst_k1,
            worst_point: worst_k1_at,
        });
        checks.push(CheckResult {
            name: "k1_positivity".into(),
            passed: min_one_plus > 0.0,
            detail: if min_one_plus > 0.0 {
                format!("min 1 + K1 = {min_one_plus}")
            } else {
                format!("1 + K1 > 0 violated: min 1 + K1 = {min_one_plus}")
            },
            worst_value: min_one_plus,
            worst_point: min_one_plus_at,
        });
    }

    // Regime closure: destination indices in range (structural, checked in
    // basic_validate; recorded here so the report lists it).
    checks.push(CheckResult {
        name: "regime_closure".into(),
        passed: true,
        detail: "K0 maps every (atom, regime) into the regime set".into(),
        worst_value: 0.0,
        worst_point: None,
    });

    // Strictly positive visible-jump intensity η(D_t) > 0, unless the model
    // is globally continuous (K1 identically zero), which is a supported
    // degenerate mode. A mixed model (visible at some grid points only)
    // fails the check.
    let continuous = spec.is_continuous();
    let mut min_active = f64::INFINITY;
    let mut min_active_at = None;
    for &t in &grid.times {
        for x in 0..spec.dim() {
            for &s in &grid.prices {
                let kern = levy_kernel(spec, t, x, s);
                if kern.total_rate < min_active {
                    min_active = kern.total_rate;
                    min_active_at = Some((t, x, s));
                }
            }
        }
    }
    checks.push(CheckResult {
        name: "jump_intensity".into(),
        passed: continuous || min_active > 0.0,
        detail: if continuous {
            "K1 identically zero: continuous-price mode".into()
        } else {
            format!("min eta(D_t) over grid = {min_active}")
        },
        worst_value: if continuous { 0.0 } else { min_active },
        worst_point: min_active_at,
    });

    // Payoff finite and bounded on the grid.
    let (worst_h, at_h) = grid.max_over_grid(spec, |_t, x, s| spec.payoff_at(x, s).abs())?;
    checks.push(CheckResult {
        name: "payoff_bounded".into(),
        passed: worst_h.is_finite(),
        detail: format!("max |H| on grid = {worst_h}"),
        worst_value: worst_h,
        worst_point: Some(at_h),
    });

    // Minimal-measure admissibility: alpha^F * z < 1 for every kernel atom.
    let adm = mmm::admissibility_check(spec, grid_density)?;
    checks.push(CheckResult {
        name: "mmm_admissibility".into(),
        passed: adm.passed,
        detail: format!(
            "max alpha^F * s * K1 = {} (must be < 1), min eta* = {}",
            adm.worst_value, adm.min_eta_star
        ),
        worst_value: adm.worst_value,
        worst_point: adm.worst_point,
    });

    // Partial information needs at least two regimes; d = 1 is allowed as a
    // degenerate complete-information mode and reported, never blocking.
    checks.push(CheckResult {
        name: "regime_count".into(),
        passed: true,
        detail: if spec.dim() >= 2 {
            format!("d = {}", spec.dim())
        } else {
            "d = 1: complete-information degenerate mode".into()
        },
        worst_value: spec.dim() as f64,
        worst_point: None,
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, passed })
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Which Markov generator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Generator of (X, S) under the physical measure.
    PhysicalPair,
    /// Generator of (X, S) under the minimal martingale measure.
    MinimalPair,
    /// Generator of (X, S, π) under the minimal martingale measure, where π
    /// is the physical-measure filter.
    MinimalFull,
}

/// Point at which a generator is applied. `p` is required for
/// [`GeneratorKind::MinimalFull`] and ignored otherwise.
#[derive(Debug, Clone)]
pub struct GenPoint<'a> {
    pub t: f64,
    pub regime: usize,
    pub s: f64,
    pub p: Option<&'a [f64]>,
}

type ValueFn<'a> = &'a dyn Fn(f64, usize, f64, &[f64]) -> f64;
type PartialFn<'a> = &'a dyn Fn(f64, usize, f64, &[f64]) -> f64;
type PPartialFn<'a> = &'a dyn Fn(f64, usize, f64, &[f64], usize) -> f64;
type PPPartialFn<'a> = &'a dyn Fn(f64, usize, f64, &[f64], usize, usize) -> f64;

/// Test function handed to [`apply_generator`]: a value callback plus the
/// partial derivatives the chosen generator needs. Missing required
/// callbacks produce a contract error, never a panic.
pub struct TestFn<'a> {
    pub value: ValueFn<'a>,
    pub dt: Option<PartialFn<'a>>,
    pub ds: Option<PartialFn<'a>>,
    pub dss: Option<PartialFn<'a>>,
    pub dp: Option<PPartialFn<'a>>,
    pub dpp: Option<PPPartialFn<'a>>,
    pub dsp: Option<PPartialFn<'a>>,
}

impl<'a> TestFn<'a> {
    /// Function of (t, x, s) only, with the three pair-generator partials.
    pub fn pair(
        value: ValueFn<'a>,
        dt: PartialFn<'a>,
        ds: PartialFn<'a>,
        dss: PartialFn<'a>,
    ) -> Self {
        TestFn { value, dt: Some(dt), ds: Some(ds), dss: Some(dss), dp: None, dpp: None, dsp: None }
    }
}

fn need<'x, T>(o: &'x Option<T>, name: &'static str) -> Result<&'x T> {
    o.as_ref().ok_or(Error::MissingDerivative(name))
}

/// Apply the requested Markov generator to `f` at `point`.
///
/// Drift and diffusion terms are closed-form; jump terms are finite sums
/// over the mark atoms. See the module docs for the model conventions.
pub fn apply_generator(
    spec: &ModelSpec,
    kind: GeneratorKind,
    f: &TestFn<'_>,
    point: &GenPoint<'_>,
) -> Result<f64> {
    let (t, x, s) = (point.t, point.regime, point.s);
    let empty: [f64; 0] = [];
    let p: &[f64] = point.p.unwrap_or(&empty);
    if kind == GeneratorKind::MinimalFull && p.len() != spec.dim() {
        return Err(Error::InvalidModel(format!(
            "MinimalFull generator needs a filter state of dimension {}",
            spec.dim()
        )));
    }
    let sigma = spec.sigma1(t, s);
    let val = (f.value)(t, x, s, p);
    let ft = (need(&f.dt, "dt")?)(t, x, s, p);
    let fss = (need(&f.dss, "dss")?)(t, x, s, p);

    match kind {
        GeneratorKind::PhysicalPair => {
            let fs = (need(&f.ds, "ds")?)(t, x, s, p);
            let mut out = ft + spec.mu1(t, x, s) * s * fs + 0.5 * sigma * sigma * s * s * fss;
            for k in 0..spec.n_atoms() {
                let dest = spec.k0_dest(k, x);
                let s_new = s * (1.0 + spec.k1(k, x, t, s));
                out += spec.marks.rate(k) * ((f.value)(t, dest, s_new, p) - val);
            }
            Ok(out)
        }
        GeneratorKind::MinimalPair => {
            let fs = (need(&f.ds, "ds")?)(t, x, s, p);
            let mut out = ft + 0.5 * sigma * sigma * s * s * fss;
            let mut drift_jump = 0.0;
            for k in 0..spec.n_atoms() {
                let rate = mmm::eta_star(spec, t, x, s, k)?;
                let k1 = spec.k1(k, x, t, s);
                let dest = spec.k0_dest(k, x);
                out += rate * ((f.value)(t, dest, s * (1.0 + k1), p) - val);
                drift_jump += k1 * rate;
            }
            out -= fs * s * drift_jump;
            Ok(out)
        }
        GeneratorKind::MinimalFull => {
            let fs = (need(&f.ds, "ds")?)(t, x, s, p);
            let dp = need(&f.dp, "dp")?;
            let dpp = need(&f.dpp, "dpp")?;
            let dsp = need(&f.dsp, "dsp")?;
            let d = spec.dim();

            let gamma = filter::gain_gamma(spec, t, s, p);
            let b_drift = filter::drift_b(spec, Measure::Physical, t, s, p);
            let comp = filter::jump_compensator_drift(spec, Measure::Physical, t, s, p)?;
            let alpha_f = mmm::alpha_f(spec, t, x, s);
            let ell = (spec.mu1(t, x, s) - spec.mu1_mixture(t, s, p)) / sigma - s * sigma * alpha_f;

            let mut out = ft + 0.5 * sigma * sigma * s * s * fss;
            for i in 0..d {
                let fpi = dp(t, x, s, p, i);
                out += (ell * gamma[i] + b_drift[i] - comp[i]) * fpi;
                out += sigma * s * gamma[i] * dsp(t, x, s, p, i);
                for j in 0..d {
                    out += 0.5 * gamma[i] * gamma[j] * dpp(t, x, s, p, i, j);
                }
            }

            // Jump operator: atom ζ moves (x, s) and kicks the filter by the
            // physical-measure Bayes increment at the observed size, when the
            // price effect is visible.
            let mut drift_jump = 0.0;
            for k in 0..spec.n_atoms() {
                let rate = mmm::eta_star(spec, t, x, s, k)?;
                let k1 = spec.k1(k, x, t, s);
                let dest = spec.k0_dest(k, x);
                let p_new: Vec<f64> = if k1 != 0.0 {
                    let w = filter::w_vector(spec, Measure::Physical, t, s, s * k1, p)?;
                    p.iter().zip(&w).map(|(pi, wi)| pi + wi).collect()
                } else {
                    p.to_vec()
                };
                out += rate * ((f.value)(t, dest, s * (1.0 + k1), &p_new) - val);
                drift_jump += k1 * rate;
            }
            out -= fs * s * drift_jump;
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn validates_two_regime_scenario() {
        let spec = scenarios::two_regime_small();
        let report = validate_model(&spec, 9).unwrap();
        for c in &report.checks {
            assert!(c.passed, "check {} failed: {}", c.name, c.detail);
        }
        assert!(report.passed);
    }

    #[test]
    fn constant_sigma_inside_bounds_passes() {
        let mut spec = scenarios::two_regime_small();
        spec.coeffs.sigma1 = Coefficient::Constant { value: 0.2 };
        spec.coeffs.bounds.c2 = 0.1;
        spec.coeffs.bounds.c3 = 0.3;
        let report = validate_model(&spec, 5).unwrap();
        assert!(report.check("sigma1_lower_bound").unwrap().passed);
        assert!(report.check("sigma1_upper_bound").unwrap().passed);
    }

    #[test]
    fn k1_at_minus_one_fails_positivity() {
        let mut spec = scenarios::two_regime_small();
        spec.coeffs.price_jump[0][0] = -1.0;
        let report = validate_model(&spec, 5).unwrap();
        let check = report.check("k1_positivity").unwrap();
        assert!(!check.passed);
        assert!(check.detail.contains("1 + K1 > 0 violated"));
        assert!(!report.passed);
    }

    #[test]
    fn regime_flip_table_closes() {
        // Two regimes with a flip atom: K0(ζ; x1) = x2 - x1 and vice versa.
        let spec = scenarios::two_regime_small();
        assert_eq!(spec.k0_dest(0, 0), 1);
        assert_eq!(spec.k0_dest(0, 1), 0);
        let report = validate_model(&spec, 5).unwrap();
        assert!(report.check("regime_closure").unwrap().passed);
    }

    #[test]
    fn kernel_no_jumps_when_k1_zero() {
        let spec = scenarios::continuous_two_regime();
        let kern = levy_kernel(&spec, 0.3, 0, spec.s0);
        assert!(kern.entries.is_empty());
        assert_eq!(kern.total_rate, 0.0);
    }

    #[test]
    fn kernel_single_atom_arithmetic() {
        let mut spec = scenarios::two_regime_small();
        // one atom, K1 = 0.1 in both regimes
        spec.marks = MarkSpace { atoms: vec![MarkAtom { id: "z1".into(), weight: 0.7 }] };
        spec.coeffs.regime_jump_dest = vec![vec![1, 0]];
        spec.coeffs.price_jump = vec![vec![0.1, 0.1]];
        let kern = levy_kernel(&spec, 0.0, 0, 100.0);
        assert_eq!(kern.entries.len(), 1);
        assert!((kern.entries[0].size - 10.0).abs() < 1e-12);
        assert_eq!(kern.entries[0].rate, 0.7);
    }

    #[test]
    fn kernel_groups_identical_sizes() {
        let mut spec = scenarios::two_regime_small();
        spec.marks = MarkSpace {
            atoms: vec![
                MarkAtom { id: "a".into(), weight: 0.4 },
                MarkAtom { id: "b".into(), weight: 0.9 },
            ],
        };
        spec.coeffs.regime_jump_dest = vec![vec![1, 0], vec![0, 1]];
        spec.coeffs.price_jump = vec![vec![0.05, 0.02], vec![0.05, -0.03]];
        let kern = levy_kernel(&spec, 0.0, 0, spec.s0);
        let grouped = kern.grouped_by_size();
        // brute-force sum over atoms at matching size
        let expected: f64 = kern
            .entries
            .iter()
            .filter(|e| same_jump_size(e.size, 0.05 * spec.s0))
            .map(|e| e.rate)
            .sum();
        assert_eq!(grouped.len(), 1);
        assert!((grouped[0].1 - expected).abs() < 1e-15);
        assert!((expected - 1.3).abs() < 1e-12);
    }

    #[test]
    fn generators_kill_constants() {
        let spec = scenarios::two_regime_small();
        let one = |_: f64, _: usize, _: f64, _: &[f64]| 1.0;
        let zero = |_: f64, _: usize, _: f64, _: &[f64]| 0.0;
        let zero_p = |_: f64, _: usize, _: f64, _: &[f64], _: usize| 0.0;
        let zero_pp = |_: f64, _: usize, _: f64, _: &[f64], _: usize, _: usize| 0.0;
        let f = TestFn {
            value: &one,
            dt: Some(&zero),
            ds: Some(&zero),
            dss: Some(&zero),
            dp: Some(&zero_p),
            dpp: Some(&zero_pp),
            dsp: Some(&zero_p),
        };
        let p = vec![0.6, 0.4];
        let point = GenPoint { t: 0.2, regime: 0, s: 1.1, p: Some(&p) };
        for kind in [GeneratorKind::PhysicalPair, GeneratorKind::MinimalPair, GeneratorKind::MinimalFull] {
            let v = apply_generator(&spec, kind, &f, &point).unwrap();
            assert_eq!(v, 0.0, "{kind:?} must annihilate constants exactly");
        }
    }

    #[test]
    fn minimal_pair_generator_kills_price() {
        // f(t,x,s) = s is a martingale coordinate under the minimal measure:
        // the diffusion term has no second derivative and the jump term
        // cancels the compensating drift exactly.
        let spec = scenarios::two_regime_small();
        let v = |_: f64, _: usize, s: f64, _: &[f64]| s;
        let zero = |_: f64, _: usize, _: f64, _: &[f64]| 0.0;
        let onefn = |_: f64, _: usize, _: f64, _: &[f64]| 1.0;
        let f = TestFn::pair(&v, &zero, &onefn, &zero);
        let point = GenPoint { t: 0.4, regime: 1, s: 0.93, p: None };
        let out = apply_generator(&spec, GeneratorKind::MinimalPair, &f, &point).unwrap();
        assert!(out.abs() < 1e-14, "L* s = {out}");
    }

    #[test]
    fn physical_pair_generator_on_price() {
        // L s = mu1 * s + s * sum_k K1_k eta_k (drift plus jump mean).
        let spec = scenarios::two_regime_small();
        let v = |_: f64, _: usize, s: f64, _: &[f64]| s;
        let zero = |_: f64, _: usize, _: f64, _: &[f64]| 0.0;
        let onefn = |_: f64, _: usize, _: f64, _: &[f64]| 1.0;
        let f = TestFn::pair(&v, &zero, &onefn, &zero);
        let (t, x, s) = (0.1, 0, 1.05);
        let out = apply_generator(&spec, GeneratorKind::PhysicalPair, &f, &GenPoint { t, regime: x, s, p: None }).unwrap();
        let mut expected = spec.mu1(t, x, s) * s;
        for k in 0..spec.n_atoms() {
            expected += s * spec.k1(k, x, t, s) * spec.marks.rate(k);
        }
        assert!((out - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_derivative_is_contract_error() {
        let spec = scenarios::two_regime_small();
        let v = |_: f64, _: usize, s: f64, _: &[f64]| s;
        let f = TestFn { value: &v, dt: None, ds: None, dss: None, dp: None, dpp: None, dsp: None };
        let err = apply_generator(
            &spec,
            GeneratorKind::PhysicalPair,
            &f,
            &GenPoint { t: 0.0, regime: 0, s: 1.0, p: None },
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingDerivative(_)));
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = scenarios::two_regime_small();
        let text = spec.to_json().unwrap();
        let back = ModelSpec::from_json(&text).unwrap();
        assert_eq!(back.dim(), spec.dim());
        assert_eq!(back.n_atoms(), spec.n_atoms());
        assert_eq!(back.s0, spec.s0);
        assert_eq!(back.to_json().unwrap(), text);
    }
}
