//! Moving-average kernels `g(t) = t₊^α ζ(t)`, their finite differences and the
//! associated constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::stable::{integral_scale, Domain};

/// Falling factorial `a (a - 1) ... (a - m + 1)`.
pub fn falling(a: f64, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, j| acc * (a - j as f64))
}

/// `k_α = α(α-1)...(α-k+1)`.
pub fn k_alpha(alpha: f64, k: usize) -> f64 {
    falling(alpha, k)
}

fn binomial(k: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// Signed binomial weights `(-1)^j C(k, j)`, `j = 0..=k`.
pub fn difference_weights(k: usize) -> Vec<f64> {
    (0..=k)
        .map(|j| if j % 2 == 0 { binomial(k, j) } else { -binomial(k, j) })
        .collect()
}

/// Smooth perturbation factor with `ζ(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Zeta {
    /// `exp(-λ t)`
    Exp { lambda: f64 },
    /// `(1 + t)^(-λ)`
    Rational { lambda: f64 },
}

impl Zeta {
    fn deriv(&self, i: usize, t: f64) -> f64 {
        match *self {
            Zeta::Exp { lambda } => (-lambda).powi(i as i32) * (-lambda * t).exp(),
            Zeta::Rational { lambda } => falling(-lambda, i) * (1.0 + t).powf(-lambda - i as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Pure,
    Perturbed { zeta: Zeta },
}

/// Kernel `g(t) = t₊^α ζ(t)`; `g ≡ 0` on `(-∞, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub alpha: f64,
    #[serde(flatten)]
    pub family: Family,
    /// Integrability exponent of `g - g₀`; metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl KernelSpec {
    pub fn pure(alpha: f64) -> Result<Self> {
        Self::new(alpha, Family::Pure)
    }

    pub fn perturbed(alpha: f64, zeta: Zeta) -> Result<Self> {
        Self::new(alpha, Family::Perturbed { zeta })
    }

    pub fn new(alpha: f64, family: Family) -> Result<Self> {
        let spec = Self {
            alpha,
            family,
            theta: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel alpha must be positive, got {}", self.alpha)));
        }
        if let Family::Perturbed { zeta } = self.family {
            let lambda = match zeta {
                Zeta::Exp { lambda } | Zeta::Rational { lambda } => lambda,
            };
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidParameter(format!("zeta rate must be positive, got {lambda}")));
            }
        }
        Ok(())
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.family, Family::Pure)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.deriv(0, t)
    }

    /// `g^(j)(t)` by the Leibniz rule; zero for `t <= 0`.
    pub fn deriv(&self, j: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let a = self.alpha;
        match self.family {
            Family::Pure => falling(a, j) * t.powf(a - j as f64),
            Family::Perturbed { zeta } => {
                let mut s = 0.0;
                for m in 0..=j {
                    let p = falling(a, m);
                    if p == 0.0 {
                        continue;
                    }
                    s += binomial(j, m) * p * t.powf(a - m as f64) * zeta.deriv(j - m, t);
                }
                s
            }
        }
    }

    /// Derivatives of `g_n(s) = n^α g(s / n)`; `n = None` is the pure power limit.
    pub fn deriv_scaled(&self, j: usize, s: f64, n: Option<f64>) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match (n, self.family) {
            (None, _) | (_, Family::Pure) => falling(self.alpha, j) * s.powf(self.alpha - j as f64),
            (Some(n), _) => n.powf(self.alpha - j as f64) * self.deriv(j, s / n),
        }
    }

    /// `∫_t^{t+1} g^(k)(u) du` by Gauss–Legendre, used where the direct
    /// difference `g^(k-1)(t+1) - g^(k-1)(t)` cancels.
    fn unit_difference(&self, k: usize, t: f64) -> f64 {
        if t < 8.0 {
            return self.deriv(k - 1, t + 1.0) - self.deriv(k - 1, t);
        }
        if let Family::Pure = self.family {
            let a = self.alpha - (k - 1) as f64;
            return falling(self.alpha, k - 1) * t.powf(a) * (a * (1.0 / t).ln_1p()).exp_m1();
        }
        let (x, w) = quad::gauss_legendre(16);
        x.iter()
            .zip(&w)
            .map(|(xi, wi)| 0.5 * wi * self.deriv(k, t + 0.5 * (xi + 1.0)))
            .sum()
    }

    /// Numerical shadows of the small-`t` assumptions.
    pub fn diagnostics(&self, k: usize) -> KernelDiagnostics {
        let a = self.alpha;
        let small: Vec<f64> = (4..=30).map(|e| 2f64.powi(-e)).collect();
        let ratio_error = small
            .iter()
            .map(|&t| (self.eval(t) / t.powf(a) - 1.0).abs())
            .last()
            .unwrap_or(f64::NAN);
        let envelope = small
            .iter()
            .chain((0..=40).map(|e| 2f64.powf(e as f64 * 0.5)).collect::<Vec<_>>().iter())
            .map(|&t| self.deriv(k, t).abs() / t.powf(a - k as f64))
            .fold(0.0, f64::max);
        KernelDiagnostics {
            small_t_ratio_error: ratio_error,
            envelope_constant: envelope,
            small_t_ok: ratio_error < 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    /// `|g(t)/t^α - 1|` at `t = 2^-30`.
    pub small_t_ratio_error: f64,
    /// Fitted `C` in `|g^(k)(t)| <= C t^(α-k)` over a log grid.
    pub envelope_constant: f64,
    pub small_t_ok: bool,
}

/// Cached weights for `h_k(x) = Σ (-1)^j C(k,j) (x - j)₊^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernelTable {
    pub k: usize,
    pub alpha: f64,
    pub weights: Vec<f64>,
}

impl DiscreteKernelTable {
    pub fn new(alpha: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            k,
            alpha,
            weights: difference_weights(k),
        })
    }

    pub fn hk(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x > 4.0 * (self.k + 1) as f64 {
            return self.series(x);
        }
        self.weights
            .iter()
            .enumerate()
            .filter(|(j, _)| x > *j as f64)
            .map(|(j, w)| w * (x - j as f64).powf(self.alpha))
            .sum()
    }

    pub fn grid(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.hk(x)).collect()
    }

    /// Expansion in `1/x`:
    /// `h_k(x) = x^α (-1)^k k! Σ_{m>=k} C(α,m) (-1)^m S(m,k) x^-m`
    /// with Stirling numbers of the second kind, carried as `S(m,i)/x^m`.
    fn series(&self, x: f64) -> f64 {
        let k = self.k;
        let mut u = vec![0.0; k + 1];
        u[0] = 1.0;
        let mut coef = 1.0;
        let mut sum = 0.0;
        for m in 1..400 {
            for i in (1..=k).rev() {
                u[i] = (i as f64 * u[i] + u[i - 1]) / x;
            }
            u[0] = 0.0;
            coef *= -(self.alpha - (m - 1) as f64) / m as f64;
            if m >= k {
                let term = coef * u[k];
                sum += term;
                if term.abs() <= 1e-17 * sum.abs() || term == 0.0 && m > k {
                    break;
                }
            }
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        x.powf(self.alpha) * sign * falling(k as f64, k) * sum
    }
}

pub fn hk_eval(alpha: f64, k: usize, x: f64) -> f64 {
    match DiscreteKernelTable::new(alpha, k) {
        Ok(t) => t.hk(x),
        Err(_) => f64::NAN,
    }
}

/// `D^k ψ(s) = Σ (-1)^j C(k,j) ψ(s - j)`.
pub fn dk_apply<F: Fn(f64) -> f64>(psi: F, k: usize, s: f64) -> f64 {
    difference_weights(k)
        .iter()
        .enumerate()
        .map(|(j, w)| w * psi(s - j as f64))
        .sum()
}

/// `g_{i,n}(s) = Σ (-1)^j C(k,j) g((i-j)/n - s)`.
pub fn gin_eval(spec: &KernelSpec, k: usize, i: usize, n: usize, s: f64) -> f64 {
    let nf = n as f64;
    difference_weights(k)
        .iter()
        .enumerate()
        .map(|(j, w)| w * spec.eval((i as f64 - j as f64) / nf - s))
        .sum()
}

pub fn gin_grid(spec: &KernelSpec, k: usize, i: usize, n: usize, s: &[f64]) -> Vec<f64> {
    s.iter().map(|&x| gin_eval(spec, k, i, n, x)).collect()
}

/// `φ_j^n(s) = D^k g_n(j - s)`; `n = None` gives `h_k(j - s)`.
pub fn phi_jn_eval(spec: &KernelSpec, k: usize, j: f64, n: Option<f64>, s: f64) -> f64 {
    match KernelEvaluator::new(spec, k, n) {
        Ok(ev) => ev.psi(j - s),
        Err(_) => f64::NAN,
    }
}

/// Evaluates `ψ(x) = D^k g_n(x)` and `g_n^(k)(x)` for one `(kernel, k, n)`.
///
/// Far from the breakpoints the difference is computed as the B-spline
/// average `∫_0^k B_k(u) g_n^(k)(x - u) du`, which avoids cancellation.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    pub spec: KernelSpec,
    pub k: usize,
    pub n: Option<f64>,
    table: DiscreteKernelTable,
    spline_nodes: Vec<(f64, f64)>,
}

impl KernelEvaluator {
    pub fn new(spec: &KernelSpec, k: usize, n: Option<f64>) -> Result<Self> {
        spec.validate()?;
        let table = DiscreteKernelTable::new(spec.alpha, k)?;
        let (gx, gw) = quad::gauss_legendre(10);
        let w = difference_weights(k);
        let fact: f64 = (1..k).map(|j| j as f64).product();
        let mut spline_nodes = Vec::with_capacity(k * gx.len());
        for c in 0..k {
            for (x, wt) in gx.iter().zip(&gw) {
                let u = c as f64 + 0.5 * (x + 1.0);
                let b: f64 = if k == 1 {
                    1.0
                } else {
                    w.iter()
                        .enumerate()
                        .map(|(j, wj)| wj * (u - j as f64).max(0.0).powi(k as i32 - 1))
                        .sum::<f64>()
                        / fact
                };
                spline_nodes.push((u, 0.5 * wt * b));
            }
        }
        Ok(Self {
            spec: *spec,
            k,
            n,
            table,
            spline_nodes,
        })
    }

    fn scale_free(&self) -> bool {
        self.n.is_none() || self.spec.is_pure()
    }

    pub fn psi(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if self.scale_free() {
            return self.table.hk(x);
        }
        if x > 4.0 * (self.k + 1) as f64 {
            return self
                .spline_nodes
                .iter()
                .map(|&(u, w)| w * self.spec.deriv_scaled(self.k, x - u, self.n))
                .sum();
        }
        self.table
            .weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.spec.deriv_scaled(0, x - j as f64, self.n))
            .sum()
    }

    /// `g_n^(k)(x)`.
    pub fn deriv_k(&self, x: f64) -> f64 {
        self.spec.deriv_scaled(self.k, x, self.n)
    }

    /// `C` with `|ψ(x)| <= C (x - k)^(α-k)` for `x > k`.
    pub fn envelope(&self) -> f64 {
        let a = self.spec.alpha - self.k as f64;
        let c = if self.scale_free() {
            k_alpha(self.spec.alpha, self.k).abs()
        } else {
            self.spec.diagnostics(self.k).envelope_constant
        };
        let probe = (1..=40)
            .map(|e| self.k as f64 + 2f64.powf(e as f64 * 0.5))
            .map(|x| self.psi(x).abs() / (x - self.k as f64).powf(a))
            .fold(0.0, f64::max);
        c.max(probe)
    }
}

/// `ρ₀ = ρ_L ‖h_k‖_{L^β}`.
pub fn rho0_compute(alpha: f64, k: usize, beta: f64, rho_l: f64, tol: f64) -> Result<f64> {
    let table = DiscreteKernelTable::new(alpha, k)?;
    if (k as f64 - alpha) * beta <= 1.0 + 1e-6 && !is_integer(alpha) {
        return Err(Error::Integrability(format!(
            "(k - alpha) * beta = {:.6} must exceed 1 for h_k to lie in L^beta",
            (k as f64 - alpha) * beta
        )));
    }
    let pts: Vec<f64> = (1..=k).map(|j| j as f64).collect();
    integral_scale(|x| table.hk(x), beta, rho_l, Domain::From(0.0), &pts, tol)
}

fn is_integer(a: f64) -> bool {
    (a - a.round()).abs() < 1e-12
}

/// `c₀ = ∫ |g^(k-1)(1-s) - g^(k-1)(-s)|^β ds`.
pub fn c0_compute(spec: &KernelSpec, k: usize, beta: f64, tol: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let a = spec.alpha;
    let kf = k as f64;
    if !(beta > 1.0 && beta < 2.0 && a > kf - 1.0 && a < kf - 1.0 / beta) {
        return Err(Error::Window(format!(
            "c0 needs beta in (1,2) and alpha in (k-1, k-1/beta); got beta={beta}, alpha={a}, k={k}"
        )));
    }
    // t = 1 - s
    let psi = |t: f64| {
        if t <= 1.0 {
            spec.deriv(k - 1, t)
        } else {
            spec.unit_difference(k, t - 1.0)
        }
    };
    let norm = integral_scale(psi, beta, 1.0, Domain::From(0.0), &[1.0], tol)?;
    Ok(norm.powf(beta))
}

/// `‖φ_j^n - φ_j^∞‖_{L^β([0,1])}`.
pub fn phi_gap_norm(spec: &KernelSpec, k: usize, j: usize, n: f64, beta: f64, tol: f64) -> Result<f64> {
    let jf = j as f64;
    let pts: Vec<f64> = (0..=k).map(|l| jf - l as f64).filter(|&p| p > 0.0 && p < 1.0).collect();
    integral_scale(
        |s| phi_jn_eval(spec, k, jf, Some(n), s) - phi_jn_eval(spec, k, jf, None, s),
        beta,
        1.0,
        Domain::Interval(0.0, 1.0),
        &pts,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_hk(a: f64, k: usize, x: f64) -> f64 {
        let w = difference_weights(k);
        (0..=k).map(|j| w[j] * (x - j as f64).max(0.0).powf(a)).sum()
    }

    #[test]
    fn hk_examples() {
        assert_eq!(hk_eval(0.4, 3, -1.0), 0.0);
        assert_eq!(hk_eval(0.7, 1, 0.5), 0.5f64.powf(0.7));
        assert!((hk_eval(1.0, 2, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn series_matches_extended_precision() {
        // reference values from 40-digit arithmetic
        let cases = [
            (0.3, 1, 8.01, 0.073207534664711269082),
            (0.7, 2, 30.0, -0.0026377317146321986301),
            (1.4, 2, 77.7, 0.041430169946340644743),
            (2.5, 3, 30.0, 0.35126024084084704226),
            (0.5, 4, 30.0, -8.0979450105967148871e-6),
            (0.5, 4, 77.7, -2.4850474495041216643e-7),
            (0.25, 2, 1000.0, -1.0562381319503101545e-6),
            (0.7, 2, 100000.0, -6.6408694176919988253e-8),
        ];
        for (a, k, x, want) in cases {
            let got = hk_eval(a, k, x);
            assert!((got - want).abs() <= 1e-13 * want.abs(), "a={a} k={k} x={x}: {got} vs {want}");
        }
        for &(a, k) in &[(0.3, 1), (0.7, 2), (1.4, 2)] {
            let t = DiscreteKernelTable::new(a, k).unwrap();
            let x = 4.0 * (k as f64 + 1.0) + 0.5;
            assert!((t.series(x) - direct_hk(a, k, x)).abs() < 1e-12);
        }
    }

    #[test]
    fn hk_tail_slope() {
        // the first-order correction vanishes about the centre x - k/2
        for &(a, k) in &[(0.3, 1), (0.7, 2), (1.6, 2), (0.5, 3)] {
            let c = k as f64 / 2.0;
            let (x0, x1) = (10.0f64, 1000.0f64);
            let slope = (hk_eval(a, k, x1).abs().ln() - hk_eval(a, k, x0).abs().ln()) / ((x1 - c) / (x0 - c)).ln();
            assert!((slope - (a - k as f64)).abs() < 0.02, "a={a} k={k} slope {slope}");
        }
    }

    #[test]
    fn dk_examples() {
        assert_eq!(dk_apply(|_| 1.0, 1, 0.3), 0.0);
        for &s in &[-2.0, 0.5, 7.0] {
            assert!(dk_apply(|x| x * x, 3, s).abs() < 1e-12);
        }
        let a = 0.8;
        for &s in &[0.2, 1.5, 2.7, 9.0] {
            let d = dk_apply(|x: f64| x.max(0.0).powf(a), 2, s);
            assert!((d - hk_eval(a, 2, s)).abs() < 1e-13);
        }
    }

    #[test]
    fn gin_examples() {
        let g = KernelSpec::pure(0.5).unwrap();
        assert_eq!(gin_eval(&g, 2, 5, 4, 1.3), 0.0);
        for &s in &[-3.0, 0.2, 2.5] {
            assert!((gin_eval(&g, 2, 3, 1, s) - hk_eval(0.5, 2, 3.0 - s)).abs() < 1e-13);
        }
        let direct: f64 = [(1.0, 5.0), (-2.0, 4.0), (1.0, 3.0)]
            .iter()
            .map(|(w, ij): &(f64, f64)| w * (ij / 4.0 - 1.0).max(0.0).sqrt())
            .sum();
        assert!((gin_eval(&g, 2, 5, 4, 1.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn phi_pure_is_scale_free() {
        let g = KernelSpec::pure(0.6).unwrap();
        for &n in &[1.0, 10.0, 1e4] {
            for &s in &[0.0, 0.4, 0.99] {
                let v = phi_jn_eval(&g, 2, 5.0, Some(n), s);
                assert!((v - hk_eval(0.6, 2, 5.0 - s)).abs() < 1e-12);
            }
        }
        assert_eq!(phi_jn_eval(&g, 2, 4.0, None, 0.3), hk_eval(0.6, 2, 3.7));
    }

    #[test]
    fn phi_gap_decays_like_inverse_n() {
        let g = KernelSpec::perturbed(0.4, Zeta::Exp { lambda: 1.0 }).unwrap();
        let ns = [50.0, 100.0, 200.0, 400.0];
        let norms: Vec<f64> = ns.iter().map(|&n| phi_gap_norm(&g, 1, 3, n, 1.5, 1e-8).unwrap()).collect();
        let slope = (norms[3].ln() - norms[0].ln()) / (ns[3] / ns[0]).ln();
        assert!((slope + 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn evaluator_far_field_matches_direct_difference() {
        let g = KernelSpec::perturbed(0.6, Zeta::Exp { lambda: 1.0 }).unwrap();
        for k in 1..=3 {
            let ev = KernelEvaluator::new(&g, k, Some(100.0)).unwrap();
            for &x in &[17.0, 40.5, 250.0] {
                let direct = dk_apply(|u| g.deriv_scaled(0, u, Some(100.0)), k, x);
                let got = ev.psi(x);
                assert!((got - direct).abs() < 1e-8 * direct.abs().max(1e-12), "k={k} x={x}: {got} vs {direct}");
            }
            let env = ev.envelope();
            for &x in &[5.0, 50.0, 500.0, 5000.0] {
                assert!(ev.psi(x).abs() <= env * (x - k as f64).powf(0.6 - k as f64) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn perturbed_derivatives_match_finite_differences() {
        for zeta in [Zeta::Exp { lambda: 1.3 }, Zeta::Rational { lambda: 0.7 }] {
            let g = KernelSpec::perturbed(1.3, zeta).unwrap();
            for j in 0..3 {
                for &t in &[0.3, 1.0, 2.5] {
                    let h = 1e-5;
                    let fd = (g.deriv(j, t + h) - g.deriv(j, t - h)) / (2.0 * h);
                    let d = g.deriv(j + 1, t);
                    assert!((fd - d).abs() < 1e-6 * (1.0 + d.abs()), "{zeta:?} j={j} t={t}");
                }
            }
        }
    }

    #[test]
    fn diagnostics_small_t() {
        let g = KernelSpec::perturbed(0.4, Zeta::Exp { lambda: 1.0 }).unwrap();
        let d = g.diagnostics(1);
        assert!(d.small_t_ok);
        assert!(d.envelope_constant.is_finite() && d.envelope_constant > 0.0);
        let p = KernelSpec::pure(0.4).unwrap().diagnostics(2);
        assert!((p.envelope_constant - k_alpha(0.4, 2).abs()).abs() < 1e-12);
    }

    /// Midpoint sum over `[lo, hi]`.
    fn midpoint<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).round() as usize;
        let h = (hi - lo) / n as f64;
        (0..n).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    /// Riemann sum of |h_k|^β with an analytic power-law tail beyond the cutoff.
    fn brute_rho0(a: f64, k: usize, beta: f64, step: f64, cutoff: f64) -> f64 {
        let t = DiscreteKernelTable::new(a, k).unwrap();
        let f = |x: f64| t.hk(x).abs().powf(beta);
        let mut s = midpoint(f, 0.0, 20.0, step) + midpoint(f, 20.0, cutoff, 100.0 * step);
        let p = (k as f64 - a) * beta;
        let c = t.hk(cutoff).abs().powf(beta) * cutoff.powf(p);
        s += c * cutoff.powf(1.0 - p) / (p - 1.0);
        s.powf(1.0 / beta)
    }

    #[test]
    fn rho0_matches_brute_force() {
        let got = rho0_compute(0.3, 1, 1.5, 1.0, 1e-8).unwrap();
        let want = brute_rho0(0.3, 1, 1.5, 1e-4, 1e4);
        assert!((got - want).abs() < 1e-4 * want, "{got} vs {want}");
        let two = rho0_compute(0.3, 1, 1.5, 2.0, 1e-8).unwrap();
        assert!((two - 2.0 * got).abs() < 1e-12 * two);
    }

    #[test]
    fn rho0_guard() {
        let a = 1.0 - 1.0 / 1.5;
        assert!(matches!(rho0_compute(a, 1, 1.5, 1.0, 1e-8), Err(Error::Integrability(_))));
        assert!(rho0_compute(a - 0.05, 1, 1.5, 1.0, 1e-8).is_ok());
    }

    #[test]
    fn c0_matches_brute_force() {
        let (a, beta) = (0.2, 1.6);
        let g = KernelSpec::pure(a).unwrap();
        let got = c0_compute(&g, 1, beta, 1e-8).unwrap();
        let cutoff = 1e4;
        let f = |u: f64| ((1.0 - u).max(0.0).powf(a) - (-u).max(0.0).powf(a)).abs().powf(beta);
        let mut s = midpoint(f, -20.0, 1.0, 1e-5) + midpoint(f, -cutoff, -20.0, 1e-2);
        let p = (1.0 - a) * beta;
        s += a.powf(beta) * cutoff.powf(1.0 - p) / (p - 1.0);
        assert!((got - s).abs() < 2e-4 * s, "{got} vs {s}");
    }

    #[test]
    fn c0_grows_towards_window_edge_and_checks_window() {
        let beta = 1.5;
        let edge = 1.0 - 1.0 / beta;
        let vals: Vec<f64> = [0.1, 0.2, 0.3]
            .iter()
            .map(|&a| c0_compute(&KernelSpec::pure(a).unwrap(), 1, beta, 1e-7).unwrap())
            .collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2]);
        assert!(c0_compute(&KernelSpec::pure(edge + 0.01).unwrap(), 1, beta, 1e-7).is_err());
        assert!(c0_compute(&KernelSpec::pure(0.2).unwrap(), 1, 1.8, 1e-7).is_ok());
        assert!(c0_compute(&KernelSpec::pure(1.2).unwrap(), 2, 1.5, 1e-7).is_ok());
    }

    #[test]
    fn k_alpha_examples() {
        assert_eq!(k_alpha(0.3, 1), 0.3);
        assert_eq!(k_alpha(0.5, 2), -0.25);
        assert_eq!(k_alpha(2.0, 3), 0.0);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let g = KernelSpec::perturbed(0.4, Zeta::Rational { lambda: 2.0 }).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"family\":\"perturbed\""));
        let back: KernelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let p: KernelSpec = serde_json::from_str(r#"{"alpha":0.3,"family":"pure"}"#).unwrap();
        assert!(p.is_pure());
    }
}
