//! `Φ_ρ(x) = E f(x + ρS) - E f(ρS)` for `S ~ SβS(1)`, its derivatives, the
//! Appell rank and `G(ρ) = E f(ρS)`.

use std::f64::consts::{FRAC_2_PI, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::quad::{self, Tolerance};
use crate::stable::{cdf, density, density_derivative, oscillatory};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Beyond `|x| > FAR_SHIFT·ρ` the spectral integral is replaced by direct quadrature.
const FAR_SHIFT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PhiMethod {
    /// Closed forms, and Fourier (spectral) representations for the
    /// power and logarithmic families.
    ClosedForm,
    /// Direct integration against the stable density.
    Quadrature { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RankVerdict {
    Rank1,
    RankGe2,
    Undetermined,
}

/// `coef ∫_0^∞ (1 - cos θx) e^{-(ρθ)^β} θ^w dθ` representation of `Φ_ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Spectral {
    coef: f64,
    w: f64,
}

#[derive(Debug, Clone)]
pub struct PhiEvaluator {
    pub f: FunctionalSpec,
    pub beta: f64,
    pub method: PhiMethod,
    pub tol: f64,
    spectral: Option<Spectral>,
}

/// A derivative estimate with its error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derivative {
    pub value: f64,
    pub error: f64,
    /// `false` when the error estimate exceeds `1e-4`.
    pub determined: bool,
}

impl Derivative {
    fn exact(value: f64) -> Self {
        Self {
            value,
            error: 0.0,
            determined: true,
        }
    }
}

fn power_constant(p: f64) -> f64 {
    if (p - 1.0).abs() < 1e-12 {
        FRAC_2_PI
    } else {
        p / (gamma(1.0 - p) * (PI * p / 2.0).cos())
    }
}

impl PhiEvaluator {
    pub fn new(f: FunctionalSpec, beta: f64, method: PhiMethod) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0,2), got {beta}")));
        }
        f.validate()?;
        if !f.attributes().moment(1.0, beta) {
            return Err(Error::InvalidParameter(format!(
                "E|f(S)| is infinite for {} with beta={beta}",
                f.name()
            )));
        }
        let spectral = match f {
            FunctionalSpec::Power { p } if p < 2.0 => Some(Spectral {
                coef: power_constant(p),
                w: -1.0 - p,
            }),
            FunctionalSpec::NegPower { p } => Some(Spectral {
                coef: -1.0 / (gamma(p) * (PI * p / 2.0).cos()),
                w: p - 1.0,
            }),
            FunctionalSpec::Log => Some(Spectral { coef: 1.0, w: -1.0 }),
            _ => None,
        };
        Ok(Self {
            f,
            beta,
            method,
            tol: match method {
                PhiMethod::Quadrature { tol } => tol,
                PhiMethod::ClosedForm => 1e-10,
            },
            spectral,
        })
    }

    pub fn closed_form(f: FunctionalSpec, beta: f64) -> Result<Self> {
        Self::new(f, beta, PhiMethod::ClosedForm)
    }

    fn has_closed_form(&self) -> bool {
        self.method == PhiMethod::ClosedForm
            && matches!(
                self.f,
                FunctionalSpec::Sin { .. } | FunctionalSpec::Cos { .. } | FunctionalSpec::Indicator { .. }
            )
    }

    fn use_spectral(&self) -> bool {
        self.method == PhiMethod::ClosedForm && self.spectral.is_some()
    }

    /// `Φ_ρ(x)`.
    pub fn phi(&self, rho: f64, x: f64) -> Result<f64> {
        check_rho(rho)?;
        if x == 0.0 {
            return Ok(0.0);
        }
        if self.use_spectral() && x.abs() > FAR_SHIFT * rho {
            return Ok(self.expect_shift(rho, x)? - self.expected(rho)?);
        }
        if self.has_closed_form() || self.use_spectral() {
            return Ok(self.analytic(rho, x, 0, 0)?.value);
        }
        Ok(self.expect_shift(rho, x)? - self.expect_shift(rho, 0.0)?)
    }

    /// Mixed partial `∂^{jx+jr} Φ / ∂x^jx ∂ρ^jr` at `(ρ, x)`.
    pub fn deriv(&self, rho: f64, x: f64, order_x: usize, order_rho: usize) -> Result<Derivative> {
        check_rho(rho)?;
        if order_x > 2 || order_rho > 1 {
            return Err(Error::InvalidParameter("derivative orders limited to x<=2, rho<=1".into()));
        }
        if order_x == 0 && order_rho == 0 {
            return Ok(Derivative::exact(self.phi(rho, x)?));
        }
        if self.has_closed_form() || self.use_spectral() {
            if let Some(d) = self.analytic_deriv(rho, x, order_x, order_rho)? {
                return Ok(d);
            }
        }
        self.richardson(rho, x, order_x, order_rho)
    }

    /// Finite differences at steps `10^-2, 10^-3, 10^-4` with Richardson extrapolation.
    pub fn richardson(&self, rho: f64, x: f64, order_x: usize, order_rho: usize) -> Result<Derivative> {
        let est = |h: f64| -> Result<f64> {
            let hr = h * rho.min(1.0);
            let fx = |r: f64, y: f64| -> Result<f64> {
                match order_x {
                    0 => self.phi(r, y),
                    1 => Ok((self.phi(r, y + h)? - self.phi(r, y - h)?) / (2.0 * h)),
                    _ => Ok((self.phi(r, y + h)? - 2.0 * self.phi(r, y)? + self.phi(r, y - h)?) / (h * h)),
                }
            };
            if order_rho == 0 {
                fx(rho, x)
            } else {
                Ok((fx(rho + hr, x)? - fx(rho - hr, x)?) / (2.0 * hr))
            }
        };
        let d1 = est(1e-2)?;
        let d2 = est(1e-3)?;
        let d3 = est(1e-4)?;
        let r1 = (100.0 * d2 - d1) / 99.0;
        let r2 = (100.0 * d3 - d2) / 99.0;
        let error = (r1 - r2).abs();
        Ok(Derivative {
            value: r1,
            error,
            determined: error <= 1e-4,
        })
    }

    fn analytic(&self, rho: f64, x: f64, jx: usize, jr: usize) -> Result<Derivative> {
        match self.analytic_deriv(rho, x, jx, jr)? {
            Some(d) => Ok(d),
            None => self.richardson(rho, x, jx, jr),
        }
    }

    fn analytic_deriv(&self, rho: f64, x: f64, jx: usize, jr: usize) -> Result<Option<Derivative>> {
        let beta = self.beta;
        match self.f {
            FunctionalSpec::Sin { u } | FunctionalSpec::Cos { u } => {
                let e = (-(rho * u.abs()).powf(beta)).exp();
                let de = if u == 0.0 {
                    0.0
                } else {
                    -beta * rho.powf(beta - 1.0) * u.abs().powf(beta) * e
                };
                let damp = if jr == 0 { e } else { de };
                let (s, c) = (u * x).sin_cos();
                let shape = match (&self.f, jx) {
                    (FunctionalSpec::Sin { .. }, 0) => s,
                    (FunctionalSpec::Sin { .. }, 1) => u * c,
                    (FunctionalSpec::Sin { .. }, _) => -u * u * s,
                    (_, 0) => c - 1.0,
                    (_, 1) => -u * s,
                    (_, _) => -u * u * c,
                };
                Ok(Some(Derivative::exact(shape * damp)))
            }
            FunctionalSpec::Indicator { u } => {
                let tol = 1e-12;
                let z = (u - x) / rho;
                let z0 = u / rho;
                let v = match (jx, jr) {
                    (0, 0) => cdf(beta, z, tol)? - cdf(beta, z0, tol)?,
                    (1, 0) => -density(beta, z, tol)? / rho,
                    (2, 0) => density_derivative(beta, z, tol)? / (rho * rho),
                    (0, 1) => (-density(beta, z, tol)? * z + density(beta, z0, tol)? * z0) / rho,
                    (1, 1) => (density_derivative(beta, z, tol)? * z + density(beta, z, tol)?) / (rho * rho),
                    _ => return Ok(None),
                };
                Ok(Some(Derivative::exact(v)))
            }
            _ => match self.spectral {
                Some(sp) => Ok(Some(Derivative::exact(self.spectral_integral(sp, rho, x, jx, jr)?))),
                None => Ok(None),
            },
        }
    }

    fn spectral_integral(&self, sp: Spectral, rho: f64, x: f64, jx: usize, jr: usize) -> Result<f64> {
        let beta = self.beta;
        let cut = 40f64.powf(1.0 / beta) / rho;
        let w = sp.w;
        let integrand = |t: f64| {
            if t <= 0.0 {
                return 0.0;
            }
            let shape = match jx {
                0 => 2.0 * (0.5 * t * x).sin().powi(2),
                1 => t * (t * x).sin(),
                _ => t * t * (t * x).cos(),
            };
            let damp = (-(rho * t).powf(beta)).exp();
            let r = if jr == 0 {
                1.0
            } else {
                -beta * rho.powf(beta - 1.0) * t.powf(beta)
            };
            shape * r * damp * t.powf(w)
        };
        // small-θ exponent of the integrand
        let lead = match jx {
            0 => 2.0,
            1 => 2.0,
            _ => 2.0,
        } + w
            + if jr == 1 { beta } else { 0.0 };
        let lead = if x == 0.0 && jx == 2 { 2.0 + w + if jr == 1 { beta } else { 0.0 } } else { lead };
        let v = oscillatory(integrand, x.abs(), cut, self.tol * 1e-2, Some(lead.min(0.0)))?;
        Ok(sp.coef * v)
    }

    /// `∫ f(x + ρy) g_β(y) dy` with breakpoints at the singular points of `f`.
    fn expect_shift(&self, rho: f64, x: f64) -> Result<f64> {
        let beta = self.beta;
        let dtol = (self.tol * 1e-2).max(1e-13);
        let f = &self.f;
        let integrand = |y: f64| -> f64 {
            match density(beta, y, dtol) {
                Ok(g) => f.eval(x + rho * y) * g,
                Err(_) => f64::NAN,
            }
        };
        let attrs = f.attributes();
        let mut singular = vec![(-x / rho, -attrs.singularity)];
        if let FunctionalSpec::Indicator { u } = f {
            singular = vec![((u - x) / rho, 0.0)];
        }
        if let FunctionalSpec::Log = f {
            singular[0].1 = -0.5;
        }
        let (c, gam) = singular[0];
        let tol = Tolerance::new(self.tol, self.tol);
        let mut total = quad::right_singular(&integrand, c - 1.0, c, gam, tol)?.value;
        total += quad::left_singular(&integrand, c, c + 1.0, gam, tol)?.value;
        let (lo, hi) = ((c - 1.0).min(-1.0), (c + 1.0).max(1.0));
        let mut points = vec![lo, hi, -1.0, 0.0, 1.0];
        let (gap_lo, gap_hi) = if c < 0.0 { (c + 1.0, -1.0) } else { (1.0, c - 1.0) };
        let mut w = 1.0;
        while gap_lo + w < gap_hi - w {
            points.push(gap_lo + w);
            points.push(gap_hi - w);
            w *= 2.0;
        }
        points.retain(|p| *p <= c - 1.0 || *p >= c + 1.0);
        points.extend([c - 1.0, c + 1.0]);
        points.retain(|p| (lo..=hi).contains(p));
        points.sort_by(f64::total_cmp);
        points.dedup();
        for seg in points.windows(2) {
            if seg[0] >= c - 1.0 && seg[1] <= c + 1.0 {
                continue;
            }
            total += quad::adaptive(&integrand, seg[0], seg[1], tol)?.value;
        }
        total += quad::semi_infinite(&integrand, hi, hi.abs().max(1.0), tol)?.value;
        total += quad::semi_infinite(|y: f64| integrand(2.0 * lo - y), lo, lo.abs().max(1.0), tol)?.value;
        if total.is_nan() {
            return Err(Error::Quadrature {
                value: total,
                error: f64::NAN,
                context: "density evaluation failed".into(),
            });
        }
        Ok(total)
    }

    /// `G(ρ) = E f(ρS)`.
    pub fn expected(&self, rho: f64) -> Result<f64> {
        check_rho(rho)?;
        if let PhiMethod::Quadrature { .. } = self.method {
            return self.expect_shift(rho, 0.0);
        }
        let beta = self.beta;
        let abs_moment = |p: f64| {
            2f64.powf(p) * gamma((1.0 + p) / 2.0) * gamma(1.0 - p / beta) / (PI.sqrt() * gamma(1.0 - p / 2.0))
        };
        match self.f {
            FunctionalSpec::Power { p } => Ok(rho.powf(p) * abs_moment(p)),
            FunctionalSpec::NegPower { p } => Ok(rho.powf(-p) * abs_moment(-p)),
            FunctionalSpec::Log => Ok(rho.ln() + EULER_GAMMA * (1.0 / beta - 1.0)),
            FunctionalSpec::Cos { u } => Ok((-(rho * u.abs()).powf(beta)).exp()),
            FunctionalSpec::Sin { .. } => Ok(0.0),
            FunctionalSpec::Indicator { u } => cdf(beta, u / rho, 1e-12),
            FunctionalSpec::Custom(_) => self.expect_shift(rho, 0.0),
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")))
    }
}

pub fn phi_eval(ev: &PhiEvaluator, rho: f64, x: f64) -> Result<f64> {
    ev.phi(rho, x)
}

pub fn phi_deriv(ev: &PhiEvaluator, rho: f64, x: f64, order_x: usize, order_rho: usize) -> Result<Derivative> {
    ev.deriv(rho, x, order_x, order_rho)
}

pub fn expected_f_rho(ev: &PhiEvaluator, rho: f64) -> Result<f64> {
    ev.expected(rho)
}

/// Twelve log-spaced probes in `[0.1, 10]`.
pub fn default_rho_probes() -> Vec<f64> {
    (0..12).map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / 11.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankProbe {
    pub rho: f64,
    /// `Φ^(r)_ρ(0)` for `r = 1..=r_max`.
    pub derivatives: Vec<Derivative>,
    /// `None` when every probed derivative vanishes.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppellReport {
    pub function: String,
    pub beta: f64,
    pub probes: Vec<RankProbe>,
    pub verdict: RankVerdict,
    /// Set when the verdict follows from evenness or a closed form.
    pub structural: bool,
}

impl AppellReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn appell_rank(ev: &PhiEvaluator, rho_set: &[f64], r_max: usize, zero_tol: f64) -> Result<AppellReport> {
    if !(1..=2).contains(&r_max) {
        return Err(Error::InvalidParameter("r_max must be 1 or 2".into()));
    }
    let mut probes = Vec::with_capacity(rho_set.len());
    let mut undetermined = false;
    for &rho in rho_set {
        let mut derivatives = Vec::new();
        for r in 1..=r_max {
            let d = ev.deriv(rho, 0.0, r, 0)?;
            undetermined |= !d.determined;
            derivatives.push(d);
        }
        let scale = derivatives.iter().map(|d| d.value.abs()).fold(1.0, f64::max);
        let thr = zero_tol * scale;
        let rank = derivatives.iter().position(|d| d.value.abs() > thr + d.error).map(|i| i + 1);
        probes.push(RankProbe { rho, derivatives, rank });
    }
    let structural = crate::functionals::structural_rank(&ev.f);
    let verdict = if structural != RankVerdict::Undetermined {
        structural
    } else if undetermined || probes.is_empty() {
        RankVerdict::Undetermined
    } else if probes.iter().all(|p| p.rank == Some(1)) {
        RankVerdict::Rank1
    } else if probes.iter().all(|p| p.rank != Some(1)) {
        RankVerdict::RankGe2
    } else {
        RankVerdict::Undetermined
    };
    Ok(AppellReport {
        function: ev.f.name(),
        beta: ev.beta,
        probes,
        verdict,
        structural: structural != RankVerdict::Undetermined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BDiagnostic {
    pub p_candidate: f64,
    /// Hölder constants `sup |Φ(x) - Φ(y)| / |x - y|^p` on nested grids
    /// `|x| <= 10^2` and `|x| <= 10^3`.
    pub holder_constants: [f64; 2],
    /// Large-`|x|` growth exponent of `|Φ_ρ(x)|`.
    pub fitted_exponent: f64,
    /// `max |∂^{j+r} Φ / ∂x^j ∂ρ^r|` over the probe set, keyed `(j, r)`.
    pub max_derivatives: Vec<((usize, usize), f64)>,
    pub pass: bool,
}

/// Numerical shadow of the Hölder/derivative bounds, for `ρ ∈ [ε, 1/ε]`.
pub fn check_assumption_b(ev: &PhiEvaluator, eps: f64, grid_size: usize, p_candidate: f64) -> Result<BDiagnostic> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0,1), got {eps}")));
    }
    let rhos = [eps, 1.0, 1.0 / eps];
    let half = grid_size.max(4);
    let mut xs: Vec<f64> = (0..half).map(|i| 10f64.powf(-2.0 + 5.0 * i as f64 / (half - 1) as f64)).collect();
    let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
    xs.extend(neg);
    xs.push(0.0);
    xs.sort_by(f64::total_cmp);
    let mut consts = [0.0f64; 2];
    let mut fitted: f64 = 0.0;
    for &rho in &rhos {
        let vals: Vec<f64> = xs.iter().map(|&x| ev.phi(rho, x)).collect::<Result<_>>()?;
        for (slot, bound) in [(0usize, 1e2), (1, 1e3)] {
            for i in 0..xs.len() {
                for j in 0..i {
                    if xs[i].abs() > bound || xs[j].abs() > bound {
                        continue;
                    }
                    let r = (vals[i] - vals[j]).abs() / (xs[i] - xs[j]).abs().powf(p_candidate);
                    consts[slot] = consts[slot].max(r);
                }
            }
        }
        let big: Vec<(f64, f64)> = xs
            .iter()
            .zip(&vals)
            .filter(|(x, v)| **x >= 10.0 && v.abs() > 0.0)
            .map(|(x, v)| (x.ln(), v.abs().ln()))
            .collect();
        if big.len() >= 2 {
            let (a, b) = (big[0], big[big.len() - 1]);
            fitted = fitted.max((b.1 - a.1) / (b.0 - a.0));
        }
    }
    let mut max_derivatives = Vec::new();
    let probe_x = [-1.0, -0.1, 0.0, 0.1, 1.0];
    for (j, r) in [(1usize, 0usize), (2, 0), (0, 1), (1, 1)] {
        let mut m: f64 = 0.0;
        for &rho in &rhos {
            for &x in &probe_x {
                m = m.max(ev.deriv(rho, x, j, r)?.value.abs());
            }
        }
        max_derivatives.push(((j, r), m));
    }
    let bounded_derivs = max_derivatives.iter().all(|(_, m)| m.is_finite());
    let pass = (0.0..=1.0).contains(&p_candidate)
        && bounded_derivs
        && consts[1].is_finite()
        && consts[1] <= 1.5 * consts[0] + 1e-12
        && fitted.max(0.0) <= p_candidate + 0.05;
    Ok(BDiagnostic {
        p_candidate,
        holder_constants: consts,
        fitted_exponent: fitted.max(0.0),
        max_derivatives,
        pass,
    })
}
