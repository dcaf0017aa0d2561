//! Path simulation of the coupled system (X, S) under the physical and
//! minimal martingale measures.
//!
//! Euler-Maruyama on log S between jumps keeps the price positive; jumps use
//! per-step firing on a fixed grid: each step draws one categorical outcome
//! over {atom 1, .., atom m, none} with P(atom k) = rate_k · h, where the
//! rate is η_k under P and η*_k(t, X, S) under P*. The step-size rule
//! Σ_k rate_k · h ≤ 0.1 bounds the discretization bias, which is first order
//! in h. A firing applies the regime and price jumps simultaneously.
//!
//! Reproducibility: every path is fully determined by (master seed, path
//! index); replaying a stored path's Brownian increments and jump events
//! through the same update rule reproduces its arrays bit for bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::mmm;
use crate::model::{Measure, ModelSpec};

/// Maximum admissible total jump probability per step.
pub const MAX_JUMP_PROB_PER_STEP: f64 = 0.1;

/// One atom firing: both latent bookkeeping (atom, regimes) and the
/// observable part (time index, size, pre-jump price).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JumpEvent {
    /// Index of the step (t_step, t_step+1] in which the jump occurred.
    pub step: usize,
    pub atom: usize,
    /// Absolute price jump z = S_pre * K1; zero for invisible firings.
    pub size: f64,
    /// Price immediately before the jump.
    pub pre_price: f64,
    pub regime_before: usize,
    pub regime_after: usize,
}

/// One simulated trajectory on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Path {
    pub measure: Measure,
    pub seed: u64,
    pub times: Vec<f64>,
    /// Regime index per grid point.
    pub regimes: Vec<usize>,
    /// Price per grid point; positive throughout.
    pub prices: Vec<f64>,
    pub events: Vec<JumpEvent>,
    /// Brownian increment per step.
    pub brownian: Vec<f64>,
}

impl Path {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn terminal_price(&self) -> f64 {
        *self.prices.last().unwrap()
    }

    pub fn terminal_regime(&self) -> usize {
        *self.regimes.last().unwrap()
    }

    pub fn events_at(&self, step: usize) -> impl Iterator<Item = &JumpEvent> {
        self.events.iter().filter(move |e| e.step == step)
    }

    /// Observable projection: grid prices plus visible jump events only.
    pub fn observables(&self) -> Observables<'_> {
        Observables {
            times: &self.times,
            prices: &self.prices,
            visible: self.events.iter().filter(|e| e.size != 0.0).collect(),
        }
    }

    /// CSV export: one row per grid point with the step's jump event, if any.
    /// An optional density column appends the minimal-measure density path.
    pub fn to_csv(&self, spec: &ModelSpec, density: Option<&[f64]>) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        let mut header = vec!["t", "X", "S", "jump", "atom", "z"];
        if density.is_some() {
            header.push("L");
        }
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let ev = if k > 0 { self.events_at(k - 1).next() } else { None };
            let mut row = vec![
                format!("{}", self.times[k]),
                format!("{}", spec.regimes.value(self.regimes[k])),
                format!("{}", self.prices[k]),
                (if ev.is_some() { "1" } else { "0" }).to_string(),
                ev.map(|e| e.atom.to_string()).unwrap_or_default(),
                ev.map(|e| format!("{}", e.size)).unwrap_or_default(),
            ];
            if let Some(dvals) = density {
                row.push(format!("{}", dvals[k]));
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf8"))
    }
}

/// Observable view of a path: what the hedger's filtration contains.
/// Invisible firings (zero price effect) are excluded.
#[derive(Debug, Clone)]
pub struct Observables<'a> {
    pub times: &'a [f64],
    pub prices: &'a [f64],
    pub visible: Vec<&'a JumpEvent>,
}

impl<'a> Observables<'a> {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn events_at(&self, step: usize) -> impl Iterator<Item = &&'a JumpEvent> {
        self.visible.iter().filter(move |e| e.step == step)
    }

    /// Log-return of the diffusion part over a step: jump displacements are
    /// removed from the end-of-step price (S_post = S_pre + z per event).
    pub fn diffusion_log_return(&self, step: usize) -> f64 {
        let jump_total: f64 = self.events_at(step).map(|e| e.size).sum();
        ((self.prices[step + 1] - jump_total) / self.prices[step]).ln()
    }
}

/// Seed-addressed ensemble of paths under one measure.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub measure: Measure,
    pub master_seed: u64,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Derived per-path seed: one ChaCha stream per path index under the master
/// seed.
pub fn path_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Upper bound for the total per-step jump probability, by grid sweep under
/// the minimal measure and exactly under the physical one.
fn max_total_rate(spec: &ModelSpec, measure: Measure) -> Result<f64> {
    match measure {
        Measure::Physical => Ok(spec.marks.total_mass()),
        Measure::Minimal => Ok(mmm::admissibility_check(spec, 9)?
            .max_total_rate_star
            .max(spec.marks.total_mass())),
    }
}

/// Enforce the step-size rule Σ_k rate_k · h ≤ 0.1; the error names the
/// number of steps that would satisfy it.
pub fn check_step_rule(spec: &ModelSpec, n_steps: usize, measure: Measure) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::InvalidModel("n_steps must be positive".into()));
    }
    let bound = max_total_rate(spec, measure)?;
    let h = spec.horizon / n_steps as f64;
    let prob = bound * h;
    if prob > MAX_JUMP_PROB_PER_STEP {
        let required = (bound * spec.horizon / MAX_JUMP_PROB_PER_STEP).ceil() as usize;
        return Err(Error::StepSize { prob, required_steps: required });
    }
    Ok(())
}

/// Log-drift of the continuous part over a step starting at (t, x, s).
fn continuous_log_drift(spec: &ModelSpec, measure: Measure, t: f64, x: usize, s: f64) -> Result<f64> {
    let sigma = spec.sigma1(t, s);
    Ok(match measure {
        Measure::Physical => spec.mu1(t, x, s) - 0.5 * sigma * sigma,
        Measure::Minimal => -mmm::price_jump_drift_star(spec, t, x, s)? - 0.5 * sigma * sigma,
    })
}

/// Simulate one path with `n_steps` uniform steps under the given measure.
///
/// Preconditions: a validated spec, and for the minimal measure a passed
/// admissibility check (starred rates must exist along the path).
pub fn simulate_path(
    spec: &ModelSpec,
    n_steps: usize,
    measure: Measure,
    seed: u64,
) -> Result<Path> {
    check_step_rule(spec, n_steps, measure)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    simulate_path_with_rng(spec, n_steps, measure, seed, &mut rng)
}

/// Simulate one path drawing from a caller-owned generator (ensemble
/// streaming without materializing a `PathSet`). Callers are expected to
/// have run [`check_step_rule`] once for the (spec, n_steps, measure)
/// combination; the per-step probability guard still applies.
pub fn simulate_path_with_rng_pub(
    spec: &ModelSpec,
    n_steps: usize,
    measure: Measure,
    seed: u64,
    rng: &mut ChaCha12Rng,
) -> Result<Path> {
    simulate_path_with_rng(spec, n_steps, measure, seed, rng)
}

fn simulate_path_with_rng(
    spec: &ModelSpec,
    n_steps: usize,
    measure: Measure,
    seed: u64,
    rng: &mut ChaCha12Rng,
) -> Result<Path> {
    let h = spec.horizon / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * h).collect();
    let mut regimes = Vec::with_capacity(n_steps + 1);
    let mut prices = Vec::with_capacity(n_steps + 1);
    let mut brownian = Vec::with_capacity(n_steps);
    let mut events = Vec::new();
    let mut x = spec.x0;
    let mut s = spec.s0;
    regimes.push(x);
    prices.push(s);
    for step in 0..n_steps {
        let t = times[step];
        let gauss: f64 = rng.sample(StandardNormal);
        let dw = gauss * h.sqrt();
        brownian.push(dw);
        // firing rates are predictable: evaluated at the step-start state
        let mut rates = Vec::with_capacity(spec.n_atoms());
        for k in 0..spec.n_atoms() {
            rates.push(match measure {
                Measure::Physical => spec.marks.rate(k),
                Measure::Minimal => mmm::eta_star(spec, t, x, s, k)?,
            });
        }
        let total_prob: f64 = rates.iter().sum::<f64>() * h;
        if total_prob >= 1.0 {
            return Err(Error::StepSize {
                prob: total_prob,
                required_steps: (total_prob * n_steps as f64 / MAX_JUMP_PROB_PER_STEP).ceil() as usize,
            });
        }
        let drift = continuous_log_drift(spec, measure, t, x, s)?;
        let sigma = spec.sigma1(t, s);
        let mut s_new = s * (drift * h + sigma * dw).exp();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, rate) in rates.iter().enumerate() {
            acc += rate * h;
            if u < acc {
                let k1 = spec.k1(k, x, t, s_new);
                let z = s_new * k1;
                let dest = spec.k0_dest(k, x);
                events.push(JumpEvent {
                    step,
                    atom: k,
                    size: z,
                    pre_price: s_new,
                    regime_before: x,
                    regime_after: dest,
                });
                s_new += z;
                x = dest;
                break;
            }
        }
        s = s_new;
        regimes.push(x);
        prices.push(s);
        if !(s > 0.0) {
            return Err(Error::Numerical(format!("price became nonpositive at step {step}")));
        }
    }
    Ok(Path { measure, seed, times, regimes, prices, events, brownian })
}

/// Exact one-step conditional mean of the scheme's price increment end state:
/// `E[S_{k+1} | t, x, s] = s e^{drift_log h + σ²h/2} (1 + h Σ_k rate_k K1_k)`
/// for price-level-free jump coefficients. Used to center discrete
/// martingale increments in the orthogonality estimators.
pub fn exact_step_mean(
    spec: &ModelSpec,
    measure: Measure,
    t: f64,
    h: f64,
    regime: usize,
    s: f64,
) -> Result<f64> {
    let sigma = spec.sigma1(t, s);
    let drift = continuous_log_drift(spec, measure, t, regime, s)?;
    let mut jump_factor = 1.0;
    for k in 0..spec.n_atoms() {
        let rate = match measure {
            Measure::Physical => spec.marks.rate(k),
            Measure::Minimal => mmm::eta_star(spec, t, regime, s, k)?,
        };
        jump_factor += rate * h * spec.k1(k, regime, t, s);
    }
    Ok(s * (drift * h + 0.5 * sigma * sigma * h).exp() * jump_factor)
}

/// Replay a path's stored increments and events through the update rule;
/// returns the reconstructed (regimes, prices) arrays. Bit-exact agreement
/// with the stored arrays is an invariant.
pub fn replay(spec: &ModelSpec, path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = path.n_steps();
    let h = spec.horizon / n as f64;
    let mut regimes = Vec::with_capacity(n + 1);
    let mut prices = Vec::with_capacity(n + 1);
    let mut x = spec.x0;
    let mut s = spec.s0;
    regimes.push(x);
    prices.push(s);
    for step in 0..n {
        let t = path.times[step];
        let drift = continuous_log_drift(spec, path.measure, t, x, s)?;
        let sigma = spec.sigma1(t, s);
        let mut s_new = s * (drift * h + sigma * path.brownian[step]).exp();
        for ev in path.events_at(step) {
            s_new = ev.pre_price + ev.size;
            x = ev.regime_after;
        }
        s = s_new;
        regimes.push(x);
        prices.push(s);
    }
    Ok((regimes, prices))
}

/// Simulate an ensemble with per-path seeds derived from the master seed.
/// Paths are computed in parallel and assembled in path-index order.
pub fn simulate_ensemble(
    spec: &ModelSpec,
    n_steps: usize,
    measure: Measure,
    n_paths: usize,
    master_seed: u64,
) -> Result<PathSet> {
    check_step_rule(spec, n_steps, measure)?;
    let paths: Result<Vec<Path>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(master_seed, i as u64);
            simulate_path_with_rng(spec, n_steps, measure, master_seed ^ i as u64, &mut rng)
        })
        .collect();
    Ok(PathSet { measure, master_seed, paths: paths? })
}

// ---------------------------------------------------------------------------
// Compact binary ensemble format
// ---------------------------------------------------------------------------

const ENSEMBLE_MAGIC: &[u8; 4] = b"FSEN";
const ENSEMBLE_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Write an ensemble in the versioned little-endian binary layout.
pub fn write_ensemble(set: &PathSet, w: &mut impl Write) -> Result<()> {
    w.write_all(ENSEMBLE_MAGIC)?;
    put_u32(w, ENSEMBLE_VERSION)?;
    put_u32(w, match set.measure {
        Measure::Physical => 0,
        Measure::Minimal => 1,
    })?;
    put_u64(w, set.master_seed)?;
    put_u64(w, set.paths.len() as u64)?;
    for p in &set.paths {
        put_u64(w, p.seed)?;
        put_u64(w, p.times.len() as u64)?;
        for &t in &p.times {
            put_f64(w, t)?;
        }
        for &x in &p.regimes {
            put_u64(w, x as u64)?;
        }
        for &s in &p.prices {
            put_f64(w, s)?;
        }
        for &dw in &p.brownian {
            put_f64(w, dw)?;
        }
        put_u64(w, p.events.len() as u64)?;
        for e in &p.events {
            put_u64(w, e.step as u64)?;
            put_u64(w, e.atom as u64)?;
            put_f64(w, e.size)?;
            put_f64(w, e.pre_price)?;
            put_u64(w, e.regime_before as u64)?;
            put_u64(w, e.regime_after as u64)?;
        }
    }
    Ok(())
}

/// Read an ensemble written by [`write_ensemble`].
pub fn read_ensemble(r: &mut impl Read) -> Result<PathSet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != ENSEMBLE_MAGIC {
        return Err(Error::Numerical("bad ensemble magic".into()));
    }
    let version = get_u32(r)?;
    if version != ENSEMBLE_VERSION {
        return Err(Error::Numerical(format!("unsupported ensemble version {version}")));
    }
    let measure = match get_u32(r)? {
        0 => Measure::Physical,
        1 => Measure::Minimal,
        other => return Err(Error::Numerical(format!("bad measure tag {other}"))),
    };
    let master_seed = get_u64(r)?;
    let n_paths = get_u64(r)? as usize;
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let seed = get_u64(r)?;
        let n_grid = get_u64(r)? as usize;
        let mut times = Vec::with_capacity(n_grid);
        for _ in 0..n_grid {
            times.push(get_f64(r)?);
        }
        let mut regimes = Vec::with_capacity(n_grid);
        for _ in 0..n_grid {
            regimes.push(get_u64(r)? as usize);
        }
        let mut prices = Vec::with_capacity(n_grid);
        for _ in 0..n_grid {
            prices.push(get_f64(r)?);
        }
        let mut brownian = Vec::with_capacity(n_grid - 1);
        for _ in 0..n_grid - 1 {
            brownian.push(get_f64(r)?);
        }
        let n_events = get_u64(r)? as usize;
        let mut events = Vec::with_capacity(n_events);
        for _ in 0..n_events {
            events.push(JumpEvent {
                step: get_u64(r)? as usize,
                atom: get_u64(r)? as usize,
                size: get_f64(r)?,
                pre_price: get_f64(r)?,
                regime_before: get_u64(r)? as usize,
                regime_after: get_u64(r)? as usize,
            });
        }
        paths.push(Path { measure, seed, times, regimes, prices, events, brownian });
    }
    Ok(PathSet { measure, master_seed, paths })
}
