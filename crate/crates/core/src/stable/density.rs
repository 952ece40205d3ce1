//! Density and distribution function of the standard symmetric stable law
//! (characteristic function `exp(-|θ|^β)`), the tail constant `τ_γ`, and the
//! scale of a stable stochastic integral.
//!
//! Three evaluation routes are combined:
//! * numerical Fourier inversion near the origin,
//! * Zolotarev's integral representation in the tails (relative accuracy),
//! * the convergent/asymptotic tail series when the index is close to one
//!   and the argument is large.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};

use statrs::function::gamma::{gamma, gamma_ur};

use super::law::{StableLaw, UNIT_INDEX_EPS};
use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Default absolute tolerance for density/CDF evaluation.
pub const DEFAULT_TOL: f64 = 1e-8;

fn check_index(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("stable index {beta} not in (0,2)")))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("tolerance {tol} must be > 0")))
    }
}

/// ∫_Θ^∞ exp(-θ^β) dθ
fn exp_tail(beta: f64, cut: f64) -> f64 {
    let s = 1.0 / beta;
    gamma_ur(s, cut.powf(beta)) * gamma(s) / beta
}

/// Smallest cutoff (on a doubling grid) with `exp_tail(beta, cut) < bound`.
fn fourier_cutoff(beta: f64, bound: f64) -> f64 {
    let mut cut: f64 = 1.0;
    while exp_tail(beta, cut) >= bound {
        cut *= 1.25;
        if cut > 1e8 {
            break;
        }
    }
    cut
}

/// `∫_0^cut integrand(θ) dθ` for an integrand oscillating at angular frequency
/// `freq`, split at half periods.
pub(crate) fn oscillatory<F: Fn(f64) -> f64>(
    integrand: F,
    freq: f64,
    cut: f64,
    tol: f64,
    origin_exponent: Option<f64>,
) -> Result<f64> {
    let half = if freq > 0.0 { PI / freq } else { cut };
    let count = ((cut / half).ceil() as usize).clamp(1, 20_000);
    let step = cut / count as f64;
    let per = Tolerance::new(tol / count as f64, 1e-13);
    let mut total = 0.0;
    for i in 0..count {
        let a = i as f64 * step;
        let b = a + step;
        let q = if let (0, Some(g)) = (i, origin_exponent) {
            quad::left_singular(&integrand, a, b, g, per)?
        } else {
            quad::adaptive(&integrand, a, b, per)?
        };
        total += q.value;
    }
    Ok(total)
}

fn cauchy_density(x: f64) -> f64 {
    1.0 / (PI * (1.0 + x * x))
}

fn cauchy_cdf(x: f64) -> f64 {
    0.5 + x.atan() / PI
}

fn series_terms<F: Fn(usize) -> f64>(term: F) -> f64 {
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..=60 {
        let t = term(k);
        if !t.is_finite() || t.abs() > prev {
            break;
        }
        sum += t;
        if t.abs() < 1e-17 * sum.abs() {
            break;
        }
        prev = t.abs();
    }
    sum
}

/// Tail series of the density, `x > 0`.
fn density_series(beta: f64, x: f64) -> f64 {
    series_terms(|k| {
        let kf = k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sign * gamma(kf * beta + 1.0) / gamma(kf + 1.0) * (kf * PI * beta / 2.0).sin() * x.powf(-kf * beta - 1.0)
            / PI
    })
}

/// Tail series of the survival function, `x > 0`.
fn survival_series(beta: f64, x: f64) -> f64 {
    series_terms(|k| {
        let kf = k as f64;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sign * gamma(kf * beta) / gamma(kf + 1.0) * (kf * PI * beta / 2.0).sin() * x.powf(-kf * beta) / PI
    })
}

/// `ln h(θ)` with `h(θ) = x^e V(θ)` in Zolotarev's representation (symmetric case).
fn zolotarev_log_h(beta: f64, x: f64, theta: f64) -> f64 {
    let e = beta / (beta - 1.0);
    e * x.ln() + e * (theta.cos().ln() - (beta * theta).sin().ln()) + ((beta - 1.0) * theta).cos().ln()
        - theta.cos().ln()
}

/// Splits `(0, π/2)` where `h = 1` (the peak of `h e^{-h}`), then integrates
/// `weight(h)` over both parts.
fn zolotarev_integral<W: Fn(f64) -> f64>(beta: f64, x: f64, weight: W, tol: Tolerance) -> Result<f64> {
    let lh = |t: f64| zolotarev_log_h(beta, x, t);
    // h is monotone in θ: decreasing for β > 1, increasing for β < 1.
    let decreasing = beta > 1.0;
    let (mut lo, mut hi) = (1e-12, FRAC_PI_2 - 1e-12);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let v = lh(mid);
        if (v > 0.0) == decreasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let split = 0.5 * (lo + hi);
    let g = |t: f64| {
        let l = lh(t);
        if l.is_nan() {
            0.0
        } else if l > 700.0 {
            weight(f64::INFINITY)
        } else {
            weight(l.exp())
        }
    };
    // the peak narrows as |x| grows; panels widen geometrically away from it
    let eps = 1e-6 * split.min(FRAC_PI_2 - split);
    let slope = ((lh(split + eps) - lh(split - eps)) / (2.0 * eps)).abs();
    let width = if slope.is_finite() && slope > 0.0 { (1.0 / slope).min(0.1) } else { 0.1 };
    let mut points = vec![0.0];
    let mut left: Vec<f64> = Vec::new();
    let mut w = width;
    while split - w > 0.0 {
        left.push(split - w);
        w *= 2.0;
    }
    points.extend(left.iter().rev());
    points.push(split);
    let mut w = width;
    while split + w < FRAC_PI_2 {
        points.push(split + w);
        w *= 2.0;
    }
    points.push(FRAC_PI_2);
    let mut total = 0.0;
    let share = Tolerance::new(tol.abs / points.len() as f64, tol.rel);
    for p in points.windows(2) {
        total += quad::adaptive(&g, p[0], p[1], share)?.value;
    }
    Ok(total)
}

fn use_zolotarev(beta: f64, ax: f64) -> bool {
    ax >= 1.0 && (beta - 1.0).abs() >= 0.05
}

fn use_series(beta: f64, ax: f64) -> bool {
    ((beta - 1.0).abs() < 0.05 && ax >= 20.0) || ax.powf(beta) >= 200.0
}

/// Density `g_β(x)` of the standard SβS law, absolute error ≤ `tol`.
pub fn density(beta: f64, x: f64, tol: f64) -> Result<f64> {
    check_index(beta)?;
    check_tol(tol)?;
    if (beta - 1.0).abs() < UNIT_INDEX_EPS {
        return Ok(cauchy_density(x));
    }
    let ax = x.abs();
    if ax == 0.0 {
        return Ok(gamma(1.0 + 1.0 / beta) / PI);
    }
    if use_series(beta, ax) {
        return Ok(density_series(beta, ax));
    }
    if use_zolotarev(beta, ax) {
        let scale = beta / (PI * (beta - 1.0).abs() * ax);
        let t = Tolerance::new(0.1 * tol / scale, 1e-11);
        let v = zolotarev_integral(beta, ax, |h| if h.is_infinite() { 0.0 } else { h * (-h).exp() }, t)?;
        return Ok(scale * v);
    }
    let cut = fourier_cutoff(beta, 0.1 * tol * PI);
    let v = oscillatory(|t: f64| (t * ax).cos() * (-t.powf(beta)).exp(), ax, cut, 0.5 * tol * PI, None)?;
    Ok(v / PI)
}

/// Derivative `g_β'(x)` by Fourier inversion, absolute error ≈ `tol`.
pub fn density_derivative(beta: f64, x: f64, tol: f64) -> Result<f64> {
    check_index(beta)?;
    check_tol(tol)?;
    if (beta - 1.0).abs() < UNIT_INDEX_EPS {
        return Ok(-2.0 * x / (PI * (1.0 + x * x).powi(2)));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let ax = x.abs();
    if ax >= 20.0 {
        // Central difference of the relatively accurate tail evaluation.
        let h = 1e-4 * ax;
        let d = (density(beta, ax + h, tol * 1e-3)? - density(beta, ax - h, tol * 1e-3)?) / (2.0 * h);
        return Ok(-x.signum() * d.abs());
    }
    // ∫ θ e^{-θ^β} dθ tail is bounded by the same incomplete gamma with a larger cutoff.
    let mut cut = fourier_cutoff(beta, 0.01 * tol * PI);
    while {
        let s = 2.0 / beta;
        gamma_ur(s, cut.powf(beta)) * gamma(s) / beta
    } > 0.1 * tol * PI
    {
        cut *= 1.25;
    }
    let v = oscillatory(
        |t: f64| t * (t * ax).sin() * (-t.powf(beta)).exp(),
        ax,
        cut,
        0.5 * tol * PI,
        None,
    )?;
    Ok(-x.signum() * v / PI)
}

/// Distribution function of the standard SβS law, absolute error ≤ `tol`.
pub fn cdf(beta: f64, x: f64, tol: f64) -> Result<f64> {
    check_index(beta)?;
    check_tol(tol)?;
    if (beta - 1.0).abs() < UNIT_INDEX_EPS {
        return Ok(cauchy_cdf(x));
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    let ax = x.abs();
    let upper = if use_series(beta, ax) {
        1.0 - survival_series(beta, ax)
    } else if use_zolotarev(beta, ax) {
        let t = Tolerance::new(0.1 * tol * PI, 1e-11);
        let v = zolotarev_integral(beta, ax, |h| (-h).exp(), t)?;
        if beta > 1.0 {
            1.0 - v / PI
        } else {
            0.5 + v / PI
        }
    } else {
        let cut = fourier_cutoff(beta, 0.1 * tol * PI);
        let v = oscillatory(
            |t: f64| {
                if t == 0.0 {
                    ax
                } else {
                    (t * ax).sin() / t * (-t.powf(beta)).exp()
                }
            },
            ax,
            cut,
            0.5 * tol * PI,
            None,
        )?;
        0.5 + v / PI
    };
    Ok(if x > 0.0 { upper } else { 1.0 - upper })
}

/// Tail constant `τ_γ`: `(1-γ)/(Γ(2-γ) cos(πγ/2))`, and its limit `2/π` at `γ = 1`.
pub fn tau_gamma(g: f64) -> Result<f64> {
    if !(g > 0.0 && g < 2.0) {
        return Err(Error::InvalidParameter(format!("tau_gamma requires gamma in (0,2), got {g}")));
    }
    if (g - 1.0).abs() < UNIT_INDEX_EPS {
        return Ok(FRAC_2_PI);
    }
    Ok((1.0 - g) / (gamma(2.0 - g) * (PI * g / 2.0).cos()))
}

impl StableLaw {
    /// Distribution function. Symmetric laws use [`cdf`]; skewed laws use
    /// Gil-Pelaez inversion of the characteristic function.
    pub fn cdf(&self, x: f64, tol: f64) -> Result<f64> {
        check_tol(tol)?;
        let a = self.index;
        let unit = (a - 1.0).abs() < UNIT_INDEX_EPS;
        let shift = if unit {
            self.location + 2.0 / PI * self.skew * self.scale * self.scale.ln()
        } else {
            self.location
        };
        let z = (x - shift) / self.scale;
        if self.skew == 0.0 {
            return cdf(a, z, tol);
        }
        let b = self.skew;
        let tan = (PI * a / 2.0).tan();
        let integrand = |t: f64| {
            if t == 0.0 {
                return 0.0;
            }
            let ta = t.powf(a);
            let phase = if unit {
                -ta * b * (2.0 / PI) * t.ln() - t * z
            } else {
                ta * b * tan - t * z
            };
            (-ta).exp() * phase.sin() / t
        };
        let cut = fourier_cutoff(a, 0.1 * tol * PI);
        let freq = z.abs().max(1.0);
        let origin = (a < 1.0).then_some(a - 1.0);
        let v = oscillatory(integrand, freq, cut, 0.5 * tol * PI, origin)?;
        Ok((0.5 - v / PI).clamp(0.0, 1.0))
    }

    /// Density of the law (symmetric laws only).
    pub fn density(&self, x: f64, tol: f64) -> Result<f64> {
        if self.skew != 0.0 {
            return Err(Error::InvalidParameter("density is implemented for symmetric laws".into()));
        }
        Ok(density(self.index, (x - self.location) / self.scale, tol * self.scale)? / self.scale)
    }
}

/// Integration domain for [`integral_scale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval(f64, f64),
    /// `[a, ∞)`
    From(f64),
    Real,
}

/// Scale `ρ_L (∫ |ψ|^β ds)^{1/β}` of the stable integral `∫ ψ dL` over `domain`,
/// with relative error ≤ `tol`. `breakpoints` are interior points where `ψ`
/// is not smooth.
pub fn integral_scale<F: Fn(f64) -> f64>(
    psi: F,
    beta: f64,
    rho_l: f64,
    domain: Domain,
    breakpoints: &[f64],
    tol: f64,
) -> Result<f64> {
    check_index(beta)?;
    check_tol(tol)?;
    let integrand = |s: f64| psi(s).abs().powf(beta);
    let t = Tolerance::new(1e-300, 0.25 * tol * beta);
    let mut pts: Vec<f64> = breakpoints.to_vec();
    let total = match domain {
        Domain::Interval(a, b) => {
            pts.retain(|&p| p > a && p < b);
            pts.push(a);
            pts.push(b);
            pts.sort_by(f64::total_cmp);
            quad::with_breakpoints(integrand, &pts, t)?.value
        }
        Domain::From(a) => {
            pts.retain(|&p| p > a);
            pts.push(a);
            pts.sort_by(f64::total_cmp);
            let last = *pts.last().unwrap();
            let body = quad::with_breakpoints(&integrand, &pts, t)?.value;
            body + quad::semi_infinite(&integrand, last, 1.0, t)?.value
        }
        Domain::Real => {
            if pts.is_empty() {
                pts.push(0.0);
            }
            pts.sort_by(f64::total_cmp);
            let first = pts[0];
            let last = *pts.last().unwrap();
            let body = quad::with_breakpoints(&integrand, &pts, t)?.value;
            let right = quad::semi_infinite(&integrand, last, 1.0, t)?.value;
            let left = quad::semi_infinite(|u: f64| integrand(2.0 * first - u), first, 1.0, t)?.value;
            body + left + right
        }
    };
    Ok(rho_l * total.powf(1.0 / beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force trapezoid inversion, independent of the adaptive routes.
    fn brute_density(beta: f64, x: f64) -> f64 {
        let h = 1e-4;
        let n = (40.0f64.powf(1.0 / beta) / h) as usize;
        let mut s = 0.5;
        for i in 1..n {
            let t = i as f64 * h;
            s += (t * x).cos() * (-t.powf(beta)).exp();
        }
        s * h / PI
    }

    #[test]
    fn cauchy_values() {
        assert!((density(1.0, 0.0, 1e-12).unwrap() - 1.0 / PI).abs() < 1e-10);
        assert!((density(1.0, 2.0, 1e-12).unwrap() - 1.0 / (5.0 * PI)).abs() < 1e-10);
        assert!((cdf(1.0, 1.0, 1e-12).unwrap() - 0.75).abs() < 1e-10);
    }

    #[test]
    fn symmetric_cdf_at_zero() {
        assert_eq!(cdf(1.2, 0.0, 1e-8).unwrap(), 0.5);
    }

    #[test]
    fn density_at_origin_matches_brute_inversion() {
        let d = density(1.5, 0.0, 1e-10).unwrap();
        let b = brute_density(1.5, 0.0);
        assert!((d - b).abs() < 1e-8, "{d} vs {b}");
    }

    #[test]
    fn routes_agree_across_switch_points() {
        for &beta in &[0.6, 0.9, 1.3, 1.5, 1.8, 1.97] {
            for &x in &[0.3, 0.999, 1.0, 1.5, 3.0, 7.0] {
                let d = density(beta, x, 1e-11).unwrap();
                let b = brute_density(beta, x);
                assert!((d - b).abs() < 2e-7, "beta={beta} x={x}: {d} vs {b}");
            }
        }
    }

    #[test]
    fn cdf_matches_integrated_density() {
        let beta = 1.7;
        let x = 5.0;
        let q = quad::adaptive(|t| density(beta, t, 1e-12).unwrap(), 0.0, x, Tolerance::abs(1e-11)).unwrap();
        let c = cdf(beta, x, 1e-9).unwrap();
        assert!((c - (0.5 + q.value)).abs() < 2e-9, "{c} vs {}", 0.5 + q.value);
    }

    #[test]
    fn cdf_near_one_index_tail_series() {
        let beta = 1.02;
        let near = cdf(beta, 19.999, 1e-10).unwrap();
        let far = cdf(beta, 20.001, 1e-10).unwrap();
        let d = density(beta, 20.0, 1e-10).unwrap();
        assert!(((far - near) / 0.002 - d).abs() < 1e-6);
    }

    #[test]
    fn density_derivative_matches_difference() {
        for &x in &[0.4, 1.3, 4.0, 30.0] {
            let h = 1e-5;
            let fd = (density(1.4, x + h, 1e-13).unwrap() - density(1.4, x - h, 1e-13).unwrap()) / (2.0 * h);
            let d = density_derivative(1.4, x, 1e-11).unwrap();
            assert!((fd - d).abs() < 1e-7, "x={x}: {fd} vs {d}");
        }
    }

    #[test]
    fn tau_values() {
        assert_eq!(tau_gamma(1.0).unwrap(), FRAC_2_PI);
        let direct = 0.5 / (gamma(1.5) * (PI / 4.0).cos());
        assert!((tau_gamma(0.5).unwrap() - direct).abs() < 1e-14);
        for g in [1.0 - 1e-6, 1.0 + 1e-6] {
            assert!((tau_gamma(g).unwrap() - FRAC_2_PI).abs() < 1e-5);
        }
        assert!(tau_gamma(0.0).is_err());
        assert!(tau_gamma(2.0).is_err());
    }

    #[test]
    fn integral_scale_examples() {
        let s = integral_scale(|_| 1.0, 1.5, 2.0, Domain::Interval(0.0, 1.0), &[], 1e-10).unwrap();
        assert!((s - 2.0).abs() < 1e-9);
        let s = integral_scale(|t: f64| t.powf(0.3), 1.5, 1.0, Domain::Interval(0.0, 1.0), &[], 1e-10).unwrap();
        let exact = (1.0f64 / 1.45).powf(1.0 / 1.5);
        assert!(((s - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn integral_scale_flags_divergence() {
        let r = integral_scale(|t: f64| t.powf(-0.5), 1.5, 1.0, Domain::From(1.0), &[], 1e-8);
        assert!(matches!(r, Err(Error::Divergent(_))), "{r:?}");
    }

    #[test]
    fn skewed_cdf_against_sampler() {
        let law = StableLaw::new(1.5, 0.8, -1.0, 0.0).unwrap();
        let xs = law.sample(50_000, crate::stable::RngStream::new(4, 4));
        for &x in &[-3.0, -1.0, 0.0, 0.5, 2.0] {
            let emp = xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64;
            let c = law.cdf(x, 1e-9).unwrap();
            assert!((emp - c).abs() < 0.01, "x={x}: {emp} vs {c}");
        }
    }
}
