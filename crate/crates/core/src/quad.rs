//! Adaptive Gauss–Kronrod quadrature with the few extras this crate needs:
//! exact breakpoints, algebraic endpoint substitution and geometric tail
//! panels with power-decay monitoring.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077926143396271,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

// 10-point Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Absolute/relative targets and a subdivision cap.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_intervals: 4000,
        }
    }

    pub fn abs(abs: f64) -> Self {
        Self::new(abs, 0.0)
    }

    pub fn rel(rel: f64) -> Self {
        Self::new(0.0, rel)
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            abs: self.abs * factor,
            rel: self.rel * factor,
            max_intervals: self.max_intervals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

impl Quad {
    fn zero() -> Self {
        Self {
            value: 0.0,
            error: 0.0,
            evals: 0,
        }
    }

    fn add(self, other: Quad) -> Quad {
        Quad {
            value: self.value + other.value,
            error: self.error + other.error,
            evals: self.evals + other.evals,
        }
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive 21-point Gauss–Kronrod integration on a finite interval.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Quad> {
    if a == b {
        return Ok(Quad::zero());
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "finite interval required, got [{a}, {b}]"
        )));
    }
    let (v, e) = kronrod(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece {
        a,
        b,
        value: v,
        error: e,
    });
    let mut total = v;
    let mut err = e;
    let mut evals = 21;
    while err > tol.target(total) {
        if heap.len() >= tol.max_intervals {
            if !total.is_finite() {
                break;
            }
            return Err(Error::Quadrature {
                value: total,
                error: err,
                context: format!("subdivision limit on [{a:.4e}, {b:.4e}]"),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            heap.push(Piece {
                error: 0.0,
                ..worst
            });
            err -= worst.error;
            continue;
        }
        let (v1, e1) = kronrod(&f, worst.a, mid);
        let (v2, e2) = kronrod(&f, mid, worst.b);
        evals += 42;
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    if !total.is_finite() {
        return Err(Error::Quadrature {
            value: total,
            error: err,
            context: "non-finite integrand".into(),
        });
    }
    // Re-sum to shed accumulated drift from the running updates.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Ok(Quad {
        value,
        error,
        evals,
    })
}

/// Integrates over consecutive breakpoints, splitting the tolerance evenly.
pub fn with_breakpoints<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Result<Quad> {
    if points.len() < 2 {
        return Ok(Quad::zero());
    }
    let share = 1.0 / (points.len() - 1) as f64;
    let mut acc = Quad::zero();
    for w in points.windows(2) {
        acc = acc.add(adaptive(&f, w[0], w[1], tol.scaled(share))?);
    }
    Ok(acc)
}

/// Integrates `f` on `[a, b]` where `f(x) ~ (x - a)^gamma` near `a` (`gamma > -1`),
/// via `x = a + (b - a) v^m` with `m = 1 / (1 + gamma)`.
pub fn left_singular<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, gamma: f64, tol: Tolerance) -> Result<Quad> {
    if gamma <= -1.0 {
        return Err(Error::Divergent(format!(
            "endpoint exponent {gamma} is not integrable"
        )));
    }
    let m = 1.0 / (1.0 + gamma);
    let len = b - a;
    adaptive(
        |v: f64| {
            let vm = v.powf(m);
            f(a + len * vm) * len * m * vm / v
        },
        0.0,
        1.0,
        tol,
    )
}

/// Mirror image of [`left_singular`]: `f(x) ~ (b - x)^gamma` near `b`.
pub fn right_singular<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, gamma: f64, tol: Tolerance) -> Result<Quad> {
    left_singular(|y: f64| f(a + b - y), a, b, gamma, tol)
}

/// Outcome of a semi-infinite integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailQuad {
    pub value: f64,
    pub error: f64,
    /// Extrapolated contribution beyond the last panel (already included in `value`).
    pub remainder: f64,
    /// End of the last explicitly integrated panel.
    pub cutoff: f64,
    pub panels: usize,
}

/// Integrates `f` over `[a, ∞)` using geometrically doubling panels
/// `[a + w(2^j - 1), a + w(2^{j+1} - 1)]`.
///
/// Panel contributions are monitored for power-law decay. When the ratio of
/// successive panels `r < 1` stabilises, the remainder is bounded by the
/// geometric series `|P_j| r / (1 - r)`; integration stops once this bound is
/// below a tenth of the requested tolerance. A ratio that does not fall below
/// one signals a divergent integral.
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, width: f64, tol: Tolerance) -> Result<TailQuad> {
    const MAX_PANELS: usize = 400;
    let panel_tol = tol.scaled(0.25);
    let mut total = 0.0;
    let mut err = 0.0;
    let mut history: Vec<f64> = Vec::new();
    let mut lo = a;
    let mut w = width;
    for j in 0..MAX_PANELS {
        let hi = lo + w;
        let q = adaptive(&f, lo, hi, panel_tol)?;
        total += q.value;
        err += q.error;
        history.push(q.value);
        lo = hi;
        w *= 2.0;
        let nh = history.len();
        if nh < 4 {
            continue;
        }
        let last = history[nh - 1];
        let prev = history[nh - 2];
        let prev2 = history[nh - 3];
        if last == 0.0 && prev == 0.0 {
            return Ok(TailQuad {
                value: total,
                error: err,
                remainder: 0.0,
                cutoff: lo,
                panels: j + 1,
            });
        }
        let r1 = (last / prev).abs();
        let r2 = (prev / prev2).abs();
        let ratio = r1.max(r2);
        if !ratio.is_finite() {
            continue;
        }
        if ratio < 1.0 {
            let same_sign = last.signum() == prev.signum() && prev.signum() == prev2.signum();
            let bound = last.abs() * ratio / (1.0 - ratio);
            // a settled ratio makes the geometric extrapolation itself accurate
            let drift = last.abs() * (r1 - r2).abs() / ((1.0 - ratio) * (1.0 - ratio));
            let settled = same_sign && (r1 - r2).abs() < 1e-3 && drift <= 0.1 * tol.target(total);
            if bound <= 0.1 * tol.target(total) || settled {
                let remainder = if same_sign {
                    last * r1 / (1.0 - r1)
                } else {
                    0.0
                };
                return Ok(TailQuad {
                    value: total + remainder,
                    error: err + if settled { bound.min(drift) } else { bound },
                    remainder,
                    cutoff: lo,
                    panels: j + 1,
                });
            }
        } else if nh >= 16 {
            let tail = &history[nh - 6..];
            let growing = tail
                .windows(2)
                .all(|p| p[1].abs() >= p[0].abs() * (1.0 - 1e-3) && p[1] != 0.0);
            if growing {
                return Err(Error::Divergent(format!(
                    "tail panels do not decay beyond x = {lo:.3e}"
                )));
            }
        }
    }
    Err(Error::Quadrature {
        value: total,
        error: err,
        context: format!("tail not resolved after {MAX_PANELS} panels"),
    })
}

/// Fixed-order Gauss–Legendre nodes and weights on `[-1, 1]` (Golub–Welsch free,
/// Newton iteration on the Legendre recurrence).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = adaptive(|x| 3.0 * x * x - x, 0.0, 2.0, Tolerance::abs(1e-13)).unwrap();
        assert!((q.value - 6.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_via_substitution() {
        // ∫_0^1 x^{-0.7} dx = 1/0.3
        let q = left_singular(|x| x.powf(-0.7), 0.0, 1.0, -0.7, Tolerance::rel(1e-12)).unwrap();
        assert!((q.value - 1.0 / 0.3).abs() < 1e-10);
        let q = right_singular(|x| (1.0 - x).powf(-0.5), 0.0, 1.0, -0.5, Tolerance::rel(1e-12)).unwrap();
        assert!((q.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn slow_power_tail() {
        // ∫_1^∞ x^{-1.26} dx = 1/0.26
        let q = semi_infinite(|x| x.powf(-1.26), 1.0, 1.0, Tolerance::rel(1e-8)).unwrap();
        assert!(((q.value - 1.0 / 0.26) / (1.0 / 0.26)).abs() < 1e-7, "{q:?}");
    }

    #[test]
    fn divergence_is_detected() {
        let r = semi_infinite(|x| 1.0 / x, 1.0, 1.0, Tolerance::rel(1e-8));
        assert!(matches!(r, Err(Error::Divergent(_))), "{r:?}");
    }

    #[test]
    fn compact_support_tail_terminates() {
        let q = semi_infinite(|x| if x < 3.0 { 1.0 } else { 0.0 }, 0.0, 1.0, Tolerance::abs(1e-10)).unwrap();
        assert!((q.value - 3.0).abs() < 1e-8);
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }
}
