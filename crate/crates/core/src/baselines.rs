//! Baseline policies: CombUCB, Thompson sampling, and FTRL over the capped
//! simplex with Shannon-entropy, log-barrier, or hybrid regularizers.
//!
//! The FTRL policies compute a marginal vector by solving
//! `argmin <w, lhat> + R(w)/eta` over `{w in [w_min,1]^d : sum w = m}`
//! with bisection on the sum-constraint multiplier (each coordinate
//! minimizer is a monotone scalar solve), then realize an m-set with
//! Madow's systematic sampling and update estimates by importance
//! weighting.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::ftpl::ActionSet;
use crate::phi::MarginalVector;

// ---------------------------------------------------------------------------
// Capped-simplex FTRL solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// `sum w ln w`
    Shannon,
    /// `-sum ln w`
    LogBarrier,
    /// `-sum sqrt(w) + sum (1-w) ln(1-w)`
    Hybrid,
}

impl Regularizer {
    /// Coordinate floor: keeps importance weights bounded.
    pub fn w_min(self) -> f64 {
        match self {
            Regularizer::LogBarrier => 1e-9,
            _ => 1e-12,
        }
    }

    /// Gradient of the per-coordinate regularizer.
    pub fn grad(self, w: f64) -> f64 {
        match self {
            Regularizer::Shannon => w.ln() + 1.0,
            Regularizer::LogBarrier => -1.0 / w,
            Regularizer::Hybrid => -0.5 / w.sqrt() - (-w).ln_1p() - 1.0,
        }
    }

    /// Value of the per-coordinate regularizer.
    pub fn value(self, w: f64) -> f64 {
        match self {
            Regularizer::Shannon => {
                if w <= 0.0 {
                    0.0
                } else {
                    w * w.ln()
                }
            }
            Regularizer::LogBarrier => -w.ln(),
            Regularizer::Hybrid => {
                let lin = if w >= 1.0 { 0.0 } else { (1.0 - w) * (-w).ln_1p() };
                -w.sqrt() + lin
            }
        }
    }

    /// Minimizer over [w_min, 1] of `w * c + R(w)/eta` for the stationarity
    /// target `c = lhat_i + nu`, i.e. the clipped root of
    /// `R'(w) = -eta * c`.
    fn coordinate_min(self, c: f64, eta: f64) -> f64 {
        let lo = self.w_min();
        match self {
            Regularizer::Shannon => (-eta * c - 1.0).exp().clamp(lo, 1.0),
            Regularizer::LogBarrier => {
                let t = eta * c;
                if t <= 1.0 {
                    1.0
                } else {
                    (1.0 / t).clamp(lo, 1.0)
                }
            }
            Regularizer::Hybrid => self.hybrid_root(c, eta, 0.25),
        }
    }

    /// Hybrid coordinate minimizer with a warm start: safeguarded Newton on
    /// the increasing function `g(w) = -1/(2 sqrt w) - ln(1-w) - 1 + eta*c`.
    fn hybrid_root(self, c: f64, eta: f64, warm: f64) -> f64 {
        let lo = self.w_min();
        let hi = 1.0 - 1e-14;
        let target = -eta * c;
        if self.grad(lo) >= target {
            return lo;
        }
        if self.grad(hi) <= target {
            return 1.0;
        }
        let (mut a, mut b) = (lo, hi);
        let mut w = warm.clamp(2.0 * lo, hi);
        for _ in 0..40 {
            let sq = w.sqrt();
            let g = -0.5 / sq - (-w).ln_1p() - 1.0 - target;
            if g > 0.0 {
                b = w;
            } else {
                a = w;
            }
            let dg = 0.25 / (w * sq) + 1.0 / (1.0 - w);
            let mut next = w - g / dg;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - w).abs() <= 1e-14 * w {
                return next.clamp(lo, 1.0);
            }
            w = next;
        }
        w.clamp(lo, 1.0)
    }
}

impl std::str::FromStr for Regularizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shannon" => Ok(Regularizer::Shannon),
            "log_barrier" | "logbarrier" => Ok(Regularizer::LogBarrier),
            "hybrid" => Ok(Regularizer::Hybrid),
            other => Err(Error::config(format!("unknown regularizer '{other}'"))),
        }
    }
}

/// Solves `argmin_{w in [w_min,1]^d, sum w = m} <w, lhat> + R(w)/eta` by
/// bisection on the equality multiplier.
pub fn capped_simplex_solve(
    lhat: &[f64],
    eta: f64,
    m: usize,
    reg: Regularizer,
    tol: f64,
) -> Result<MarginalVector> {
    let mut warm = vec![0.25f64; lhat.len()];
    capped_simplex_solve_hinted(lhat, eta, m, reg, tol, None, &mut warm).map(|(w, _)| w)
}

/// Solver core; `hint` warm-starts the multiplier bracket and `warm` the
/// per-coordinate roots (both drift slowly between consecutive FTRL
/// rounds).
pub(crate) fn capped_simplex_solve_hinted(
    lhat: &[f64],
    eta: f64,
    m: usize,
    reg: Regularizer,
    tol: f64,
    hint: Option<f64>,
    warm: &mut Vec<f64>,
) -> Result<(MarginalVector, f64)> {
    let d = lhat.len();
    if d < 2 || m < 1 || m > d {
        return Err(Error::domain(format!(
            "need d >= 2 and 1 <= m <= d, got d={d}, m={m}"
        )));
    }
    if !(eta > 0.0) || !(tol > 0.0) {
        return Err(Error::domain(format!(
            "eta and tol must be positive, got eta={eta}, tol={tol}"
        )));
    }
    let target = m as f64;
    if warm.len() != d {
        warm.clear();
        warm.resize(d, 0.25);
    }
    // Per-coordinate roots are reused as warm starts between multiplier
    // probes (they move monotonically with nu).
    let wbuf = warm;
    // Probe: the constraint sum and its derivative in nu. Coordinates
    // pinned at a box bound contribute zero slope.
    let mut probe = |nu: f64, wbuf: &mut Vec<f64>| -> (f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        for (i, &l) in lhat.iter().enumerate() {
            let w = match reg {
                Regularizer::Hybrid => reg.hybrid_root(l + nu, eta, wbuf[i]),
                _ => reg.coordinate_min(l + nu, eta),
            };
            wbuf[i] = w;
            s += w;
            if w > reg.w_min() && w < 1.0 {
                // dw/dnu = -eta / R''(w)
                let curv = match reg {
                    Regularizer::Shannon => 1.0 / w,
                    Regularizer::LogBarrier => 1.0 / (w * w),
                    Regularizer::Hybrid => 0.25 / (w * w.sqrt()) + 1.0 / (1.0 - w),
                };
                ds -= eta / curv;
            }
        }
        (s, ds)
    };

    // Newton on the multiplier with a sign-tracked bisection safeguard;
    // the sum is nonincreasing in nu, so probes bracket the root lazily.
    let mut nu = hint.unwrap_or_else(|| {
        let min_l = lhat.iter().cloned().fold(f64::INFINITY, f64::min);
        -min_l + (d as f64 / m as f64).ln() / eta
    });
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut step = 1.0 + 1.0 / eta;
    let mut converged = false;
    for _ in 0..300 {
        let (s, ds) = probe(nu, wbuf);
        if (s - target).abs() <= tol {
            converged = true;
            break;
        }
        if s > target {
            lo = lo.max(nu);
        } else {
            hi = hi.min(nu);
        }
        if hi - lo <= f64::EPSILON * nu.abs().max(1.0) {
            break;
        }
        let newton = if ds < 0.0 { nu - (s - target) / ds } else { f64::NAN };
        nu = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if hi.is_infinite() {
            // Sum still too large: push the multiplier up.
            step *= 2.0;
            lo + step
        } else {
            step *= 2.0;
            hi - step
        };
    }
    if !converged {
        let (s, _) = probe(nu, wbuf);
        if (s - target).abs() > tol.max(1e-7) {
            return Err(Error::internal(format!(
                "capped simplex solver stalled: sum {s} vs m={m}"
            )));
        }
    }
    Ok((MarginalVector::new(wbuf.clone())?, nu))
}

// ---------------------------------------------------------------------------
// Madow systematic sampling
// ---------------------------------------------------------------------------

/// Draws an exact-size-m arm set whose inclusion probabilities equal the
/// given marginals: with U uniform on [0,1), arm i is selected when some
/// U + k lands in its cumulative-sum interval.
pub fn madow_sample<R: Rng + ?Sized>(w: &MarginalVector, rng: &mut R) -> Result<ActionSet> {
    let d = w.as_slice().len();
    let sum = w.sum();
    let m = sum.round() as usize;
    if m < 1 || m > d || (sum - m as f64).abs() > 1e-6 {
        return Err(Error::domain(format!(
            "marginals must sum to an integer m in [1, d], got sum {sum}"
        )));
    }
    // Rescale so the intervals tile [0, m] exactly.
    let scale = m as f64 / sum;
    let u: f64 = rng.random();
    let mut arms = Vec::with_capacity(m);
    let mut cum = 0.0f64;
    for (i, &wi) in w.as_slice().iter().enumerate() {
        let lo = cum;
        cum += wi * scale;
        let k = arms.len();
        if k < m {
            let t = u + k as f64;
            if t >= lo && t < cum {
                arms.push(i);
            }
        }
    }
    // Floating-point shortfall at the very end of the sweep is possible in
    // principle; pad from the heaviest unselected arms.
    while arms.len() < m {
        let mut best: Option<(f64, usize)> = None;
        for (i, &wi) in w.as_slice().iter().enumerate() {
            if !arms.contains(&i) && best.map(|(bw, _)| wi > bw).unwrap_or(true) {
                best = Some((wi, i));
            }
        }
        arms.push(best.expect("fewer than m arms available").1);
    }
    ActionSet::new(arms, d)
}

// ---------------------------------------------------------------------------
// CombUCB and Thompson sampling
// ---------------------------------------------------------------------------

/// Per-arm observation counts and loss sums for the stochastic baselines.
#[derive(Debug, Clone)]
pub struct StochasticStats {
    pub pulls: Vec<u64>,
    pub loss_sum: Vec<f64>,
}

impl StochasticStats {
    pub fn new(d: usize) -> Self {
        StochasticStats {
            pulls: vec![0; d],
            loss_sum: vec![0.0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.pulls.len()
    }

    pub fn update(&mut self, action: &ActionSet, losses: &[f64]) {
        for &i in action.arms() {
            self.pulls[i] += 1;
            self.loss_sum[i] += losses[i];
        }
    }

    pub fn mean_estimate(&self, i: usize) -> f64 {
        if self.pulls[i] == 0 {
            0.0
        } else {
            self.loss_sum[i] / self.pulls[i] as f64
        }
    }

    /// Observed loss mass (the "failure" count of the Beta posterior on
    /// the mean loss).
    pub fn failures(&self, i: usize) -> f64 {
        self.loss_sum[i]
    }

    /// Observed zero-loss mass.
    pub fn successes(&self, i: usize) -> f64 {
        self.pulls[i] as f64 - self.loss_sum[i]
    }
}

fn smallest_m_by_key(d: usize, m: usize, key: impl Fn(usize) -> f64) -> Result<ActionSet> {
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b)));
    ActionSet::new(order[..m].to_vec(), d)
}

/// CombUCB arm choice: during initialization a deterministic round-robin
/// covers every arm once; afterwards the m arms with the smallest lower
/// confidence bound `mean - sqrt(1.5 ln t / T_i)` are played.
pub fn combucb_choose(stats: &StochasticStats, t: u64, m: usize) -> Result<ActionSet> {
    let d = stats.d();
    if m < 1 || m > d {
        return Err(Error::domain(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    if stats.pulls.iter().any(|&p| p == 0) {
        let k = (t - 1) as usize;
        let arms: Vec<usize> = (0..m).map(|j| (k * m + j) % d).collect();
        return ActionSet::new(arms, d);
    }
    let log_t = (t as f64).ln();
    smallest_m_by_key(d, m, |i| {
        stats.mean_estimate(i) - (1.5 * log_t / stats.pulls[i] as f64).sqrt()
    })
}

/// Thompson sampling arm choice: sample each arm's mean-loss posterior
/// Beta(1 + failures, 1 + successes) and play the m smallest samples.
pub fn thompson_choose<R: Rng + ?Sized>(
    stats: &StochasticStats,
    m: usize,
    rng: &mut R,
) -> Result<ActionSet> {
    let d = stats.d();
    if m < 1 || m > d {
        return Err(Error::domain(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    let mut theta = vec![0.0f64; d];
    for i in 0..d {
        let beta = Beta::new(1.0 + stats.failures(i), 1.0 + stats.successes(i))
            .map_err(|e| Error::internal(format!("beta posterior: {e}")))?;
        theta[i] = beta.sample(rng);
    }
    smallest_m_by_key(d, m, |i| theta[i])
}

// ---------------------------------------------------------------------------
// FTRL round
// ---------------------------------------------------------------------------

/// FTRL policy state: cumulative importance-weighted loss estimates.
#[derive(Debug, Clone)]
pub struct FtrlState {
    pub d: usize,
    pub m: usize,
    pub t: u64,
    pub lhat: Vec<f64>,
    pub regularizer: Regularizer,
    pub rate_scale: f64,
    /// How often a marginal sat on the w_min floor while selected.
    pub floor_clips: u64,
    /// Multiplier from the previous round, used to warm-start the solver.
    nu_hint: Option<f64>,
    /// Previous round's marginals, warm-starting the coordinate solves.
    solver_warm: Vec<f64>,
}

impl FtrlState {
    pub fn new(d: usize, m: usize, regularizer: Regularizer, rate_scale: f64) -> Result<Self> {
        if d < 2 || m < 1 || m > d {
            return Err(Error::domain(format!(
                "need d >= 2 and 1 <= m <= d, got d={d}, m={m}"
            )));
        }
        if !(rate_scale > 0.0) {
            return Err(Error::domain(format!(
                "rate_scale must be positive, got {rate_scale}"
            )));
        }
        Ok(FtrlState {
            d,
            m,
            t: 1,
            lhat: vec![0.0; d],
            regularizer,
            rate_scale,
            floor_clips: 0,
            nu_hint: None,
            solver_warm: vec![0.25; d],
        })
    }
}

/// One FTRL round: solve for the marginals at `eta_t = c/sqrt(t)`, draw an
/// m-set by Madow sampling, and apply the importance-weighted update
/// `lhat_i += loss_i / w_i` on the selected arms.
pub fn ftrl_round<R: Rng + ?Sized>(
    state: &mut FtrlState,
    losses: &[f64],
    tol: f64,
    rng: &mut R,
) -> Result<(ActionSet, MarginalVector)> {
    if losses.len() != state.d {
        return Err(Error::domain(format!(
            "loss vector length {} does not match d={}",
            losses.len(),
            state.d
        )));
    }
    if losses.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
        return Err(Error::domain("losses must lie in [0,1]".to_string()));
    }
    let eta = state.rate_scale / (state.t as f64).sqrt();
    let (w, nu) = capped_simplex_solve_hinted(
        &state.lhat,
        eta,
        state.m,
        state.regularizer,
        tol,
        state.nu_hint,
        &mut state.solver_warm,
    )?;
    state.nu_hint = Some(nu);
    let action = madow_sample(&w, rng)?;
    let floor = state.regularizer.w_min();
    for &i in action.arms() {
        let wi = w.as_slice()[i];
        if wi <= floor {
            state.floor_clips += 1;
        }
        state.lhat[i] += losses[i] / wi.max(floor);
    }
    state.t += 1;
    Ok((action, w))
}
