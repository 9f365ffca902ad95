//! Arm-selection probabilities and related order-statistic integrals.
//!
//! `phi_i(lambda)` is the probability that arm i ranks among the top m of
//! the perturbed scores `r_q - lambda_q` with i.i.d. Frechet(2) draws. It
//! equals twice the N=3 member of the integral family
//!
//! ```text
//! V_{i,N}(lambda) = int y^{-N} e^{-1/y^2}
//!                   P{at most m-1 of the other perturbed scores exceed
//!                     y - lambda_i} dy,       y = x + lambda_i > 0,
//! ```
//!
//! which this module evaluates deterministically: the inner probability is
//! a Poisson-binomial tail computed by dynamic programming (the naive sum
//! over subsets is exponential in m), and the outer integral runs over
//! u = F(y) in (0,1) under adaptive Gauss-Legendre quadrature. A seeded
//! Monte-Carlo oracle cross-checks the quadrature, and the remaining
//! functions witness the bounds used in the regret analysis (w_star
//! regimes, the phi lower bound, top-m Frechet sums, and the U/R ratio
//! lower-bound shapes).

mod quad;

pub use quad::{integrate_adaptive, QuadratureResult};

use rand::Rng;

use crate::error::{Error, Result};
use crate::ftpl::{frechet_cdf, frechet_draw, frechet_sf, select_top_m};

/// Default node budget per quadrature call.
const MAX_NODES: usize = 1 << 22;

/// A point in the capped simplex `{w in [0,1]^d : sum w = m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalVector {
    w: Vec<f64>,
}

impl MarginalVector {
    /// Validates entries into [0,1], tolerating numerical slop up to 1e-9.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        for (i, &x) in w.iter().enumerate() {
            if !x.is_finite() || x < -1e-9 || x > 1.0 + 1e-9 {
                return Err(Error::domain(format!(
                    "marginal entry {i} = {x} outside [0,1]"
                )));
            }
        }
        let w = w.into_iter().map(|x| x.clamp(0.0, 1.0)).collect();
        Ok(MarginalVector { w })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// P(X <= threshold) for X a sum of independent Bernoulli(p_q) variables,
/// by a DP over arms that keeps only the counts 0..=threshold.
pub fn poisson_binomial_tail(p: &[f64], threshold: usize) -> Result<f64> {
    if threshold > p.len() {
        return Err(Error::domain(format!(
            "threshold {threshold} exceeds number of trials {}",
            p.len()
        )));
    }
    for (i, &x) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::domain(format!(
                "success probability {i} = {x} outside [0,1]"
            )));
        }
    }
    let mut dp = vec![0.0f64; threshold + 1];
    dp[0] = 1.0;
    poisson_binomial_tail_into(p, &mut dp);
    Ok(dp.iter().sum())
}

/// DP kernel: `dp` enters as the point mass at count 0 and leaves holding
/// the count distribution truncated at `dp.len() - 1`.
#[inline]
fn poisson_binomial_tail_into(p: &[f64], dp: &mut [f64]) {
    let thr = dp.len() - 1;
    for &pq in p {
        let q = 1.0 - pq;
        for c in (1..=thr).rev() {
            dp[c] = dp[c] * q + dp[c - 1] * pq;
        }
        dp[0] *= q;
    }
}

/// The m-th smallest entry (the reference level in the gap definition).
fn mth_smallest(lambda: &[f64], m: usize) -> f64 {
    let mut sorted = lambda.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[m - 1]
}

/// Clipped gaps to the m-th smallest entry.
pub fn lambda_underline(lambda: &[f64], m: usize) -> Vec<f64> {
    let level = mth_smallest(lambda, m);
    lambda.iter().map(|&x| (x - level).max(0.0)).collect()
}

fn validate_lambda(lambda: &[f64], m: usize) -> Result<()> {
    let d = lambda.len();
    if d < 2 || m < 1 || m > d {
        return Err(Error::domain(format!(
            "need d >= 2 and 1 <= m <= d, got d={d}, m={m}"
        )));
    }
    if lambda.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("lambda entries must be finite".to_string()));
    }
    Ok(())
}

/// Builds the integrand shared by `phi_quadrature` and `v_integral`:
/// at u in (0,1), with y = (-ln u)^{-1/2},
/// `weight(y) * P{PoissonBinomial(1 - F(y - lambda_i + lambda_q)) <= m-1}`.
fn tail_integrand<'a>(
    lambda: &'a [f64],
    i: usize,
    m: usize,
    weight: impl Fn(f64) -> f64 + 'a,
) -> impl FnMut(f64) -> f64 + 'a {
    let d = lambda.len();
    let mut p = Vec::with_capacity(d - 1);
    let mut dp = vec![0.0f64; m];
    move |u: f64| {
        let neg_ln = -u.ln();
        if !(neg_ln > 0.0) {
            // u rounded to 1: measure-zero endpoint.
            return 0.0;
        }
        let y = neg_ln.powf(-0.5);
        p.clear();
        for q in 0..d {
            if q != i {
                p.push(frechet_sf(y - lambda[i] + lambda[q]));
            }
        }
        dp.fill(0.0);
        dp[0] = 1.0;
        poisson_binomial_tail_into(&p, &mut dp);
        let tail: f64 = dp.iter().sum();
        weight(y) * tail
    }
}

/// Support kinks of the integrand in u-space: points where some survival
/// factor enters its support.
fn support_breakpoints(lambda: &[f64], i: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = lambda
        .iter()
        .enumerate()
        .filter(|&(q, &lq)| q != i && lq < lambda[i])
        .map(|(_, &lq)| frechet_cdf(lambda[i] - lq))
        .collect();
    pts.push(0.5);
    pts
}

/// Selection probability of arm i by deterministic quadrature.
pub fn phi_quadrature(lambda: &[f64], i: usize, m: usize, tol: f64) -> Result<QuadratureResult> {
    validate_lambda(lambda, m)?;
    if i >= lambda.len() {
        return Err(Error::domain(format!("arm index {i} out of range")));
    }
    if m == lambda.len() {
        // Every arm is always selected.
        return Ok(QuadratureResult {
            value: 1.0,
            abs_error_estimate: 0.0,
            nodes_used: 0,
        });
    }
    let f = tail_integrand(lambda, i, m, |_| 1.0);
    integrate_adaptive(f, 0.0, 1.0, &support_breakpoints(lambda, i), tol, MAX_NODES)
}

/// All selection probabilities; checks the exact identity `sum = m` holds
/// within the accumulated quadrature tolerance.
pub fn phi_all(lambda: &[f64], m: usize, tol: f64) -> Result<MarginalVector> {
    validate_lambda(lambda, m)?;
    let d = lambda.len();
    let mut w = Vec::with_capacity(d);
    for i in 0..d {
        w.push(phi_quadrature(lambda, i, m, tol)?.value);
    }
    let sum: f64 = w.iter().sum();
    if (sum - m as f64).abs() > d as f64 * tol {
        return Err(Error::internal(format!(
            "phi_all sum {sum} deviates from m={m} beyond {} (quadrature error underestimated)",
            d as f64 * tol
        )));
    }
    MarginalVector::new(w)
}

/// Monte-Carlo estimate of the selection probabilities: frequency of each
/// arm ranking in the top m of `r_q - lambda_q`, plus binomial standard
/// errors. Frequencies sum to m exactly by construction.
pub fn phi_monte_carlo<R: Rng + ?Sized>(
    lambda: &[f64],
    m: usize,
    samples: u64,
    rng: &mut R,
) -> Result<(MarginalVector, Vec<f64>)> {
    validate_lambda(lambda, m)?;
    if samples < 1 {
        return Err(Error::domain("need at least one sample".to_string()));
    }
    let d = lambda.len();
    let mut counts = vec![0u64; d];
    let mut r = vec![0.0f64; d];
    let mut selected = Vec::with_capacity(m);
    for _ in 0..samples {
        for v in r.iter_mut() {
            *v = frechet_draw(rng);
        }
        // Top-m largest r_q - lambda_q == m smallest lambda_q - r_q.
        select_top_m(lambda, 1.0, &r, m, &mut selected);
        for &i in &selected {
            counts[i] += 1;
        }
    }
    let n = samples as f64;
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let se: Vec<f64> = freq.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok((MarginalVector::new(freq)?, se))
}

/// The order-statistic integral `V_{i,N}`; `2 * v_integral(..., 3, ...)`
/// recovers `phi_quadrature`.
pub fn v_integral(lambda: &[f64], i: usize, n_exp: u32, m: usize, tol: f64) -> Result<QuadratureResult> {
    validate_lambda(lambda, m)?;
    if i >= lambda.len() {
        return Err(Error::domain(format!("arm index {i} out of range")));
    }
    if n_exp < 2 {
        return Err(Error::domain(format!("need N >= 2, got {n_exp}")));
    }
    // u = F(y) turns y^{-N} e^{-1/y^2} dy into y^{3-N}/2 du.
    let expo = (3.0 - n_exp as f64) / 2.0;
    let f = tail_integrand(lambda, i, m, move |y: f64| 0.5 * (y * y).powf(expo));
    integrate_adaptive(f, 0.0, 1.0, &support_breakpoints(lambda, i), tol, MAX_NODES)
}

/// `int_0^inf x^{-N} e^{-K/x^2} sf(x + mu)^M dx`, evaluated in log space
/// with a rational map onto (0,1) and rescaled by `exp(-log_scale)` so that
/// astronomically small common factors (large M) cancel in ratios.
fn weighted_tail_integral(
    n_exp: u32,
    mu: f64,
    k: f64,
    m_pow: f64,
    log_scale: f64,
    tol: f64,
) -> Result<QuadratureResult> {
    let scale = k.sqrt().max(1.0).max(mu.abs());
    let log_g = move |x: f64| -> f64 {
        let sf = frechet_sf(x + mu);
        let log_sf = if sf >= 1.0 { 0.0 } else { sf.ln() };
        -(n_exp as f64) * x.ln() - k / (x * x) + m_pow * log_sf
    };
    let f = move |s: f64| {
        let x = scale * s / (1.0 - s);
        if !(x > 0.0) || !x.is_finite() {
            return 0.0;
        }
        let jac = scale / ((1.0 - s) * (1.0 - s));
        let lg = log_g(x) - log_scale;
        if !(lg > -745.0) {
            0.0
        } else {
            lg.exp() * jac
        }
    };
    // Breakpoints around the sf support edge and the e^{-K/x^2} scale.
    let mut breaks = Vec::new();
    for x in [0.25 * scale, 0.5 * scale, 2.0 * scale, 8.0 * scale, -mu] {
        if x > 0.0 {
            breaks.push(x / (x + scale));
        }
    }
    integrate_adaptive(f, 0.0, 1.0, &breaks, tol, MAX_NODES)
}

/// Shared peak normalization for a U/R ratio: max over an s-grid of the
/// N=3 log-integrand.
fn ratio_log_scale(mu: f64, k: f64, m_pow: f64) -> f64 {
    let scale = k.sqrt().max(1.0).max(mu.abs());
    let mut best = f64::NEG_INFINITY;
    for j in 1..4096 {
        let s = j as f64 / 4096.0;
        let x = scale * s / (1.0 - s);
        let sf = frechet_sf(x + mu);
        let log_sf = if sf >= 1.0 { 0.0 } else { sf.ln() };
        let lg = -3.0 * x.ln() - k / (x * x) + m_pow * log_sf;
        if lg > best {
            best = lg;
        }
    }
    best
}

/// Evaluates `U_4(mu)/U_3(mu)` at the witness point `mu = -sqrt(2K/ln K)`,
/// where `U_N(mu) = int_0^inf x^{-N} e^{-K/x^2} (1 - F(x+mu)) dx`. The
/// scaled ratio `ratio * sqrt(K / ln K)` stays above a fixed floor, which
/// witnesses the sqrt(log(K)/K) lower bound on the ratio supremum.
pub fn u_ratio_witness(k: f64, tol: f64) -> Result<f64> {
    if !(k >= 2.0) {
        return Err(Error::domain(format!("need K >= 2, got {k}")));
    }
    let mu = -(2.0 * k / k.ln()).sqrt();
    let c = ratio_log_scale(mu, k, 1.0);
    let num = weighted_tail_integral(4, mu, k, 1.0, c, tol)?;
    let den = weighted_tail_integral(3, mu, k, 1.0, c, tol)?;
    Ok(num.value / den.value)
}

/// Evaluates `R_4(1)/R_3(1)` where
/// `R_N(mu) = int_0^inf x^{-N} e^{-K/x^2} (1 - F(x+mu))^M dx`; the proof's
/// witness point is mu = 1. The scaled ratio `ratio / (M/K)^{1/3}` stays
/// above a fixed floor, witnessing the (M/K)^{1/3} lower-bound shape.
pub fn r_ratio_witness(m_pow: u64, k: f64, tol: f64) -> Result<f64> {
    if m_pow < 2 {
        return Err(Error::domain(format!("need M >= 2, got {m_pow}")));
    }
    if !(k >= 1.0) {
        return Err(Error::domain(format!("need K >= 1, got {k}")));
    }
    if (m_pow as f64) < 2.0 * k {
        return Err(Error::domain(format!(
            "witness requires M >= 2K, got M={m_pow}, K={k}"
        )));
    }
    let mu = 1.0;
    let c = ratio_log_scale(mu, k, m_pow as f64);
    let num = weighted_tail_integral(4, mu, k, m_pow as f64, c, tol)?;
    let den = weighted_tail_integral(3, mu, k, m_pow as f64, c, tol)?;
    Ok(num.value / den.value)
}

/// Monte-Carlo estimate of the expected sum of the m largest of d i.i.d.
/// Frechet(2) draws (bounded by 5*sqrt(md)).
pub fn top_m_sum_estimate<R: Rng + ?Sized>(d: usize, m: usize, samples: u64, rng: &mut R) -> Result<f64> {
    if d < 1 || m < 1 || m > d {
        return Err(Error::domain(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    if samples < 1 {
        return Err(Error::domain("need at least one sample".to_string()));
    }
    let mut draws = vec![0.0f64; d];
    let mut total = 0.0f64;
    for _ in 0..samples {
        for v in draws.iter_mut() {
            *v = frechet_draw(rng);
        }
        let top: f64 = if m == d {
            draws.iter().sum()
        } else {
            draws.select_nth_unstable_by(d - m, |a, b| a.partial_cmp(b).unwrap());
            draws[d - m..].iter().sum()
        };
        total += top;
    }
    Ok(total / samples as f64)
}

/// Probability that the m arms with the smallest lambda are exactly the
/// selected set, by quadrature over the maximum of the other group's
/// perturbed scores. Sorts lambda ascending first.
pub fn w_star(lambda: &[f64], m: usize, tol: f64) -> Result<f64> {
    validate_lambda(lambda, m)?;
    let d = lambda.len();
    if d < m + 1 {
        return Err(Error::domain(format!("need d >= m+1, got d={d}, m={m}")));
    }
    let mut lam = lambda.to_vec();
    lam.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pivot = lam[m]; // smallest entry of the complement group
    let f = move |t: f64| {
        let neg_ln = -t.ln();
        if !(neg_ln > 0.0) {
            return 0.0;
        }
        let y = neg_ln.powf(-0.5); // y = x + pivot > 0
        let x = y - pivot;
        let mut ratio_sum = 0.0;
        let mut exp_arg = 0.0;
        for &lj in &lam[m..] {
            let yj = x + lj;
            ratio_sum += (y / yj).powi(3);
            if lj > pivot {
                exp_arg -= 1.0 / (yj * yj);
            }
        }
        let mut lower_prod = 1.0;
        for &lk in &lam[..m] {
            lower_prod *= frechet_sf(x + lk);
        }
        ratio_sum * exp_arg.exp() * lower_prod
    };
    let lam_ref = {
        let mut lam2 = lambda.to_vec();
        lam2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lam2
    };
    let mut breaks: Vec<f64> = lam_ref[..m]
        .iter()
        .filter(|&&lk| pivot - lk > 0.0)
        .map(|&lk| frechet_cdf(pivot - lk))
        .collect();
    breaks.push(0.5);
    let r = integrate_adaptive(f, 0.0, 1.0, &breaks, tol, MAX_NODES)?;
    Ok(r.value.clamp(0.0, 1.0))
}

/// Checks the lower bound `phi_i >= lambda_underline_i^{-2} / (4e)` on its
/// hypothesis regime: arm i strictly above the m-th order position and
/// `sum_{j>m} lambda_underline_j^{-2} < 1/(2m)`.
pub fn phi_lower_check(lambda: &[f64], m: usize, i: usize, tol: f64) -> Result<bool> {
    validate_lambda(lambda, m)?;
    let d = lambda.len();
    if i >= d {
        return Err(Error::domain(format!("arm index {i} out of range")));
    }
    let under = lambda_underline(lambda, m);
    if under[i] <= 0.0 {
        return Err(Error::domain(format!(
            "arm {i} is not above the m-th order position (gap zero)"
        )));
    }
    let mut sorted = lambda.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let level = sorted[m - 1];
    let mut hyp_sum = 0.0f64;
    for &lj in &sorted[m..] {
        let g = lj - level;
        if g <= 0.0 {
            hyp_sum = f64::INFINITY;
            break;
        }
        hyp_sum += g.powi(-2);
    }
    if !(hyp_sum < 1.0 / (2.0 * m as f64)) {
        return Err(Error::domain(format!(
            "hypothesis sum {hyp_sum} not below 1/(2m) = {}",
            1.0 / (2.0 * m as f64)
        )));
    }
    let phi = phi_quadrature(lambda, i, m, tol)?.value;
    let bound = under[i].powi(-2) / (4.0 * std::f64::consts::E);
    Ok(phi >= bound - tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    const TOL: f64 = 1e-8;

    /// Exhaustive-enumeration oracle for the Poisson-binomial tail.
    fn brute_force_tail(p: &[f64], threshold: usize) -> f64 {
        let n = p.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            if (mask.count_ones() as usize) <= threshold {
                let mut prob = 1.0;
                for (q, &pq) in p.iter().enumerate() {
                    prob *= if mask >> q & 1 == 1 { pq } else { 1.0 - pq };
                }
                total += prob;
            }
        }
        total
    }

    #[test]
    fn poisson_binomial_tail_examples() {
        assert!((poisson_binomial_tail(&[0.5, 0.5], 1).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(poisson_binomial_tail(&[1.0, 1.0], 1).unwrap(), 0.0);
        assert!((poisson_binomial_tail(&[0.2, 0.3, 0.5], 0).unwrap() - 0.28).abs() < 1e-15);
        assert!(poisson_binomial_tail(&[1.2], 1).is_err());
        assert!(poisson_binomial_tail(&[0.5], 2).is_err());
    }

    #[test]
    fn poisson_binomial_tail_matches_enumeration() {
        let mut rng = seeded_rng(31);
        for _ in 0..200 {
            let n = 1 + (rng.random::<u32>() as usize) % 10;
            let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let thr = (rng.random::<u32>() as usize) % (n + 1);
            let dp = poisson_binomial_tail(&p, thr).unwrap();
            let bf = brute_force_tail(&p, thr);
            assert!((dp - bf).abs() < 1e-12, "dp {dp} vs brute force {bf}");
        }
    }

    #[test]
    fn phi_symmetric_case_is_m_over_d() {
        let r = phi_quadrature(&[0.0, 0.0, 0.0], 0, 2, TOL).unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-7, "value {}", r.value);
    }

    #[test]
    fn phi_dominant_arm_tends_to_one() {
        let r = phi_quadrature(&[0.0, 1e6], 0, 1, TOL).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "value {}", r.value);
    }

    #[test]
    fn phi_matches_independent_reference_values() {
        // Reference values from an independent high-precision evaluation of
        // the defining integral (d=4, m=2, lambda=(0,0,1,3)).
        let lambda = [0.0, 0.0, 1.0, 3.0];
        let expect = [0.855149745, 0.855149745, 0.2311393434, 0.05856116661];
        for i in 0..4 {
            let r = phi_quadrature(&lambda, i, 2, TOL).unwrap();
            assert!(
                (r.value - expect[i]).abs() < 1e-7,
                "arm {i}: {} vs {}",
                r.value,
                expect[i]
            );
        }
    }

    #[test]
    fn phi_all_uniform_and_dominated() {
        let w = phi_all(&[0.0; 5], 2, TOL).unwrap();
        for &x in w.as_slice() {
            assert!((x - 0.4).abs() < 1e-7);
        }
        let w = phi_all(&[0.0, 0.0, 0.0, 1e6], 1, TOL).unwrap();
        assert!(w.as_slice()[3] < 1e-9);
    }

    #[test]
    fn phi_all_sums_to_m_on_random_instances() {
        let mut rng = seeded_rng(8);
        for _ in 0..20 {
            let lambda: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 5.0).collect();
            let w = phi_all(&lambda, 3, TOL).unwrap();
            assert!((w.sum() - 3.0).abs() < 1e-6, "sum {}", w.sum());
        }
    }

    #[test]
    fn phi_all_is_shift_invariant() {
        let lambda = [0.4, 1.7, 0.0, 3.2, 2.5];
        let shifted: Vec<f64> = lambda.iter().map(|x| x - 11.25).collect();
        let a = phi_all(&lambda, 2, TOL).unwrap();
        let b = phi_all(&shifted, 2, TOL).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 2.0 * 1e-6);
        }
    }

    #[test]
    fn phi_m_equals_d_is_all_ones() {
        let w = phi_all(&[0.3, 5.0, 2.0], 3, TOL).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn monte_carlo_symmetric_two_arms() {
        let mut rng = seeded_rng(99);
        let (w, se) = phi_monte_carlo(&[0.0, 0.0], 1, 1_000_000, &mut rng).unwrap();
        assert!((w.as_slice()[0] - 0.5).abs() < 3.0 * se[0]);
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_frequencies_sum_to_m_exactly() {
        let mut rng = seeded_rng(100);
        let (w, _) = phi_monte_carlo(&[0.7, 0.0, 2.0, 1.1, 0.4], 3, 10_000, &mut rng).unwrap();
        assert!((w.sum() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let lambda = [0.0, 0.0, 1.0, 3.0];
        let mut rng = seeded_rng(4242);
        let (w, se) = phi_monte_carlo(&lambda, 2, 1_000_000, &mut rng).unwrap();
        for i in 0..4 {
            let q = phi_quadrature(&lambda, i, 2, TOL).unwrap().value;
            assert!(
                (q - w.as_slice()[i]).abs() <= 3.0 * se[i] + TOL,
                "arm {i}: quad {q} vs mc {} (se {})",
                w.as_slice()[i],
                se[i]
            );
        }
    }

    #[test]
    fn v_integral_identity_with_phi() {
        let lambda = [0.2, 1.4, 0.0, 2.2];
        for i in 0..4 {
            let v3 = v_integral(&lambda, i, 3, 2, TOL).unwrap().value;
            let phi = phi_quadrature(&lambda, i, 2, TOL).unwrap().value;
            assert!((2.0 * v3 - phi).abs() < 1e-7);
        }
    }

    #[test]
    fn v_integral_upper_bound_above_mth_position() {
        // sigma_i(lambda) > m, so V_{i,N} <= underline^{1-N} / (N-1).
        let lambda = [0.0, 0.0, 2.0, 5.0];
        let under = lambda_underline(&lambda, 2);
        for i in 2..4 {
            for n_exp in [2u32, 3, 4] {
                let v = v_integral(&lambda, i, n_exp, 2, TOL).unwrap().value;
                let bound = under[i].powi(1 - n_exp as i32) / (n_exp as f64 - 1.0);
                assert!(v <= bound + 1e-7, "i={i} N={n_exp}: {v} > {bound}");
            }
        }
    }

    #[test]
    fn v_integral_monotone_in_other_coordinates() {
        // V_{i,3} is nondecreasing in lambda_j (j != i) and nonincreasing
        // in lambda_i; probe with 0.1 steps.
        let base = [0.5, 1.0, 1.5, 2.5];
        let v0 = v_integral(&base, 0, 3, 2, TOL).unwrap().value;
        for j in 1..4 {
            let mut bumped = base;
            bumped[j] += 0.1;
            let v1 = v_integral(&bumped, 0, 3, 2, TOL).unwrap().value;
            assert!(v1 >= v0 - 1e-7, "bump {j}: {v1} < {v0}");
        }
        let mut bumped = base;
        bumped[0] += 0.1;
        let v1 = v_integral(&bumped, 0, 3, 2, TOL).unwrap().value;
        assert!(v1 <= v0 + 1e-7);
    }

    #[test]
    fn u_ratio_witness_values() {
        // Independent high-precision evaluation gives 0.1510141 at K=100
        // and 0.02240048 at K=1e4.
        let r100 = u_ratio_witness(100.0, TOL).unwrap();
        assert!((r100 - 0.1510141).abs() < 1e-5, "K=100: {r100}");
        let r1e4 = u_ratio_witness(1e4, TOL).unwrap();
        assert!((r1e4 - 0.02240048).abs() < 1e-5, "K=1e4: {r1e4}");
        assert!(u_ratio_witness(1.5, TOL).is_err());
    }

    #[test]
    fn r_ratio_witness_values() {
        // Independent high-precision evaluation gives 2.66457157 for
        // (M=64, K=2) and 4.20463497 for (M=512, K=4).
        let a = r_ratio_witness(64, 2.0, TOL).unwrap();
        assert!((a - 2.66457).abs() < 1e-3, "(64,2): {a}");
        let b = r_ratio_witness(512, 4.0, TOL).unwrap();
        assert!((b - 4.204634967).abs() < 1e-3, "(512,4): {b}");
        assert!(r_ratio_witness(3, 2.0, TOL).is_err()); // M < 2K
    }

    #[test]
    fn top_m_sum_single_draw_mean_is_sqrt_pi() {
        let mut rng = seeded_rng(5150);
        let est = top_m_sum_estimate(1, 1, 400_000, &mut rng).unwrap();
        let exact = std::f64::consts::PI.sqrt();
        // Frechet(2) has infinite variance, so allow a loose MC margin.
        assert!((est - exact).abs() < 0.15, "estimate {est} vs {exact}");
        assert!(est <= 5.0);
    }

    #[test]
    fn w_star_symmetric_pair_is_half() {
        let w = w_star(&[0.0, 0.0], 1, TOL).unwrap();
        assert!((w - 0.5).abs() < 1e-7, "w_star {w}");
    }

    #[test]
    fn w_star_matches_reference_values() {
        // Reference values from an independent high-precision evaluation.
        let w = w_star(&[0.0, 0.0, 20.0, 30.0], 2, TOL).unwrap();
        assert!((w - 0.996703016345).abs() < 1e-7, "w_star {w}");
        let w2 = w_star(&[0.0, 0.0, 1.0, 2.0], 2, TOL).unwrap();
        assert!((w2 - 0.68221695).abs() < 1e-6, "w_star {w2}");
    }

    #[test]
    fn w_star_regime_bounds() {
        // Case 1: hypothesis sum below 1/(2m) forces w_star >= 1/2.
        let w = w_star(&[0.0, 0.0, 20.0, 30.0], 2, TOL).unwrap();
        assert!(w >= 0.5);
        // Case 2: hypothesis sum >= 1/(2m) forces w_star <= 1 - 1/(16m).
        let w2 = w_star(&[0.0, 0.0, 1.0, 2.0], 2, TOL).unwrap();
        assert!(w2 <= 1.0 - 1.0 / 32.0);
    }

    #[test]
    fn phi_lower_check_examples() {
        assert!(phi_lower_check(&[0.0, 0.0, 20.0, 30.0, 40.0, 50.0], 2, 3, TOL).unwrap());
        assert!(phi_lower_check(&[0.0, 10.0, 10.0, 10.0], 1, 2, TOL).unwrap());
        // Symmetric lambda: gap zero, hypothesis unsatisfiable.
        assert!(phi_lower_check(&[0.0; 4], 2, 3, TOL).is_err());
        // Arm below the m-th position.
        assert!(phi_lower_check(&[0.0, 0.0, 20.0, 30.0], 2, 0, TOL).is_err());
    }

    #[test]
    fn marginal_vector_validates() {
        assert!(MarginalVector::new(vec![0.5, 1.5]).is_err());
        assert!(MarginalVector::new(vec![0.5, f64::NAN]).is_err());
        let w = MarginalVector::new(vec![0.25, 1.0 + 1e-12]).unwrap();
        assert!(w.as_slice()[1] <= 1.0);
    }
}
