//! Adaptive composite Gauss-Legendre quadrature.
//!
//! Globally adaptive: every interval carries a two-level error estimate
//! (one panel versus its dyadic split), and the interval with the largest
//! estimate is refined until the summed estimates drop below the requested
//! tolerance. This grades the mesh automatically toward endpoint
//! singularities and boundary layers. All evaluation points are interior,
//! so integrands may blow up (integrably) at the interval endpoints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const GL_ORDER: usize = 16;

/// Result of a quadrature evaluation.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub nodes_used: usize,
}

/// Nodes and weights of an order-n Gauss-Legendre rule on [-1, 1], found by
/// Newton iteration on the Legendre polynomial.
fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Tricomi initial guess for the k-th root.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

thread_local! {
    static RULE: (Vec<f64>, Vec<f64>) = gauss_legendre_rule(GL_ORDER);
}

fn panel<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    RULE.with(|(nodes, weights)| {
        let mut acc = 0.0;
        for (&x, &w) in nodes.iter().zip(weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    })
}

struct Interval {
    a: f64,
    b: f64,
    /// Split estimate GL(a,mid) + GL(mid,b); the value contribution.
    fine: f64,
    /// |fine - GL(a,b)|; the local error estimate.
    diff: f64,
    /// Left and right halves of `fine`, reused as the children's coarse
    /// estimates on refinement.
    left: f64,
    right: f64,
}

impl Interval {
    fn new<F: FnMut(f64) -> f64>(a: f64, b: f64, coarse: f64, f: &mut F) -> Self {
        let mid = 0.5 * (a + b);
        let left = panel(a, mid, f);
        let right = panel(mid, b, f);
        let fine = left + right;
        let diff = (fine - coarse).abs();
        Interval {
            a,
            b,
            fine,
            diff,
            left,
            right,
        }
    }

    /// No refinable structure left once the midpoint stops being
    /// representable between the endpoints.
    fn splittable(&self) -> bool {
        let mid = 0.5 * (self.a + self.b);
        mid > self.a && mid < self.b
    }
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.diff == other.diff
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.diff.partial_cmp(&other.diff).unwrap_or(Ordering::Equal)
    }
}

/// Integrates `f` over (a, b) to absolute tolerance `tol`, subdividing at
/// the given interior breakpoints first. Fails with the best estimate if
/// the node budget runs out before convergence.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: f64,
    max_nodes: usize,
) -> Result<QuadratureResult> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    if !(b > a) {
        return Err(Error::domain(format!("need a < b, got [{a}, {b}]")));
    }
    let mut edges: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup();

    let mut nodes_used = 0usize;
    let mut heap: BinaryHeap<Interval> = BinaryHeap::new();
    // Contributions from intervals too narrow to split further.
    let mut frozen_value = 0.0;
    let mut frozen_err = 0.0;
    let mut err_sum = 0.0;

    let mut push = |iv: Interval,
                    heap: &mut BinaryHeap<Interval>,
                    frozen_value: &mut f64,
                    frozen_err: &mut f64,
                    err_sum: &mut f64| {
        *err_sum += iv.diff;
        if iv.splittable() && iv.diff > 0.0 {
            heap.push(iv);
        } else {
            *frozen_value += iv.fine;
            *frozen_err += iv.diff;
        }
    };

    for w in edges.windows(2) {
        let coarse = panel(w[0], w[1], &mut f);
        nodes_used += 3 * GL_ORDER;
        let iv = Interval::new(w[0], w[1], coarse, &mut f);
        push(iv, &mut heap, &mut frozen_value, &mut frozen_err, &mut err_sum);
    }

    while err_sum > tol {
        let Some(worst) = heap.pop() else {
            break; // only frozen intervals remain
        };
        err_sum -= worst.diff;
        if nodes_used + 4 * GL_ORDER > max_nodes {
            let value: f64 = frozen_value + worst.fine + heap.iter().map(|iv| iv.fine).sum::<f64>();
            return Err(Error::QuadratureNoConverge {
                best: value,
                error_estimate: frozen_err + err_sum + worst.diff,
                nodes_used,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        nodes_used += 4 * GL_ORDER;
        let l = Interval::new(worst.a, mid, worst.left, &mut f);
        let r = Interval::new(mid, worst.b, worst.right, &mut f);
        push(l, &mut heap, &mut frozen_value, &mut frozen_err, &mut err_sum);
        push(r, &mut heap, &mut frozen_value, &mut frozen_err, &mut err_sum);
    }

    let value: f64 = frozen_value + heap.iter().map(|iv| iv.fine).sum::<f64>();
    Ok(QuadratureResult {
        value,
        abs_error_estimate: err_sum,
        nodes_used,
    })
}
