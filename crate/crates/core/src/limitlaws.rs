//! Limit-law parameters: `η²` through `η_m²`, the rank-one scale `σ`, the
//! rank-two constants `κ±`, `c±`, `ρ₁`, `η₁`, and their assembly.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::appell::{PhiEvaluator, PhiMethod, RankVerdict};
use crate::error::{Error, Result};
use crate::functionals::{compensated_sum, FunctionalSpec, RegimeReport, WeakTag};
use crate::kernel::{c0_compute, k_alpha, rho0_compute, KernelSpec};
use crate::pathsim::{simulate_ym_sequence, DriverSpec, PathConfig};
use crate::quad::{self, Tolerance};
use crate::stable::{self, tau_gamma, RngStream, StableLaw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LimitLaw {
    Normal { variance: f64 },
    /// Symmetric `β`-stable with the given scale.
    Sbs { index: f64, scale: f64 },
    StableSkewed { index: f64, scale: f64, skew: f64 },
    Constant { value: f64 },
    /// Draws come from [`crate::pathsim::sample_jump_series_limit`].
    JumpSeries { alpha: f64, k: usize, driver: DriverSpec, function: String },
    /// `∫_0^1 f(F_u) du`, evaluated pathwise.
    PathIntegral { alpha: f64, k: usize, driver: DriverSpec, function: String },
}

impl LimitLaw {
    fn stable_law(&self) -> Option<StableLaw> {
        match *self {
            LimitLaw::Sbs { index, scale } => StableLaw::symmetric(index, scale).ok(),
            LimitLaw::StableSkewed { index, scale, skew } => StableLaw::new(index, scale, skew, 0.0).ok(),
            _ => None,
        }
    }

    pub fn char_fn(&self, theta: f64) -> Option<Complex64> {
        match *self {
            LimitLaw::Normal { variance } => Some(Complex64::new((-0.5 * variance * theta * theta).exp(), 0.0)),
            LimitLaw::Constant { value } => Some(Complex64::new(0.0, value * theta).exp()),
            _ => self.stable_law().map(|l| l.char_fn(theta)),
        }
    }

    /// Distribution function where one is available in closed or numerical form.
    pub fn cdf(&self, x: f64) -> Option<f64> {
        match *self {
            LimitLaw::Normal { variance } => {
                let sd = variance.sqrt();
                Some(0.5 * statrs::function::erf::erfc(-x / (sd * std::f64::consts::SQRT_2)))
            }
            LimitLaw::Sbs { index, scale } => stable::cdf(index, x / scale, 1e-10).ok(),
            LimitLaw::Constant { value } => Some(if x >= value { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    /// Exact draws for the stable laws.
    pub fn sample(&self, count: usize, stream: RngStream) -> Option<Vec<f64>> {
        self.stable_law().map(|l| l.sample(count, stream))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPoint {
    pub m: usize,
    pub eta2: f64,
    /// Batch-means standard error.
    pub se: f64,
    /// `θ_0`, the lag-zero variance.
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub schedule: Vec<usize>,
    pub points: Vec<EtaPoint>,
    pub eta2: f64,
    pub se: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaConfig {
    /// Total simulated length per `m`.
    pub length: usize,
    pub batches: usize,
    pub substeps: usize,
    pub eps_abs: f64,
    pub stream: RngStream,
}

impl Default for EtaConfig {
    fn default() -> Self {
        Self {
            length: 200_000,
            batches: 20,
            substeps: 16,
            eps_abs: 1e-3,
            stream: RngStream::new(0, 0),
        }
    }
}

pub const ETA_SCHEDULE: [usize; 5] = [2, 4, 8, 16, 32];

fn check_clt_window(f: &FunctionalSpec, alpha: f64, beta: f64, k: usize) -> Result<()> {
    let crit = k as f64 - 2.0 / beta;
    if !(alpha > 0.0 && alpha < crit) {
        return Err(Error::Window(format!("CLT needs alpha in (0, k - 2/beta) = (0, {crit}), got {alpha}")));
    }
    if !f.attributes().moment(2.0, beta) {
        return Err(Error::InvalidParameter(format!("E f(L_1)^2 is infinite for {}", f.name())));
    }
    Ok(())
}

/// `θ_0 + 2 Σ_{j=1}^m θ_j` from one sample of `f(Y)`.
fn long_run_m(values: &[f64], m: usize) -> (f64, f64) {
    let n = values.len();
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let cov = |j: usize| compensated_sum(centred.iter().zip(&centred[j..]).map(|(a, b)| a * b)) / (n - j) as f64;
    let theta0 = cov(0);
    let total = theta0 + 2.0 * (1..=m).map(cov).sum::<f64>();
    (total, theta0)
}

/// `η_m²` with a batch-means standard error from independent sequences.
pub fn eta_m_estimate(
    f: &FunctionalSpec,
    alpha: f64,
    beta: f64,
    rho_l: f64,
    k: usize,
    m: usize,
    cfg: &EtaConfig,
) -> Result<EtaPoint> {
    check_clt_window(f, alpha, beta, k)?;
    if cfg.batches < 2 || cfg.length < cfg.batches * (4 * m + 8) {
        return Err(Error::InvalidParameter("eta estimate needs at least 2 batches of length > 4m".into()));
    }
    let per = cfg.length / cfg.batches;
    let stream = cfg.stream.child(m as u64);
    let results: Vec<Result<(f64, f64)>> = (0..cfg.batches)
        .into_par_iter()
        .map(|b| {
            let pc = PathConfig {
                substeps: cfg.substeps,
                stream: stream.child(b as u64),
                ..PathConfig::default()
            };
            let ys = simulate_ym_sequence(beta, rho_l, alpha, k, m, per, &pc)?;
            let fv: Vec<f64> = ys.iter().map(|&y| f.eval(y)).collect();
            Ok(long_run_m(&fv, m))
        })
        .collect();
    let results: Vec<(f64, f64)> = results.into_iter().collect::<Result<_>>()?;
    let bf = results.len() as f64;
    let eta2 = results.iter().map(|r| r.0).sum::<f64>() / bf;
    let theta0 = results.iter().map(|r| r.1).sum::<f64>() / bf;
    let var = results.iter().map(|r| (r.0 - eta2).powi(2)).sum::<f64>() / (bf - 1.0);
    Ok(EtaPoint {
        m,
        eta2,
        se: (var / bf).sqrt(),
        theta0,
    })
}

/// Runs the `m` schedule; `converged` when the last two points agree within
/// `max(eps_abs, 2·sqrt(SE² + SE'²))`.
pub fn eta_estimate(
    f: &FunctionalSpec,
    alpha: f64,
    beta: f64,
    rho_l: f64,
    k: usize,
    schedule: &[usize],
    cfg: &EtaConfig,
) -> Result<EtaEstimate> {
    if schedule.is_empty() {
        return Err(Error::InvalidParameter("empty m schedule".into()));
    }
    let points: Vec<EtaPoint> = schedule
        .iter()
        .map(|&m| eta_m_estimate(f, alpha, beta, rho_l, k, m, cfg))
        .collect::<Result<_>>()?;
    let stable_pair = |a: &EtaPoint, b: &EtaPoint| {
        (a.eta2 - b.eta2).abs() < cfg.eps_abs.max(2.0 * (a.se * a.se + b.se * b.se).sqrt())
    };
    let converged = points.len() >= 2 && points.windows(2).last().map(|w| stable_pair(&w[0], &w[1])).unwrap_or(false);
    let last = *points.last().expect("non-empty schedule");
    Ok(EtaEstimate {
        schedule: schedule.to_vec(),
        eta2: last.eta2.max(0.0),
        se: last.se,
        converged,
        points,
    })
}

impl EtaEstimate {
    /// Every consecutive pair agrees within the stabilization rule.
    pub fn all_pairs_stable(&self, eps_abs: f64) -> bool {
        self.points.windows(2).all(|w| {
            (w[0].eta2 - w[1].eta2).abs() < eps_abs.max(2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaResult {
    pub sigma: f64,
    pub rho_inf: f64,
    pub phi_prime: f64,
    pub c0: f64,
    pub degenerate: bool,
    pub warning: Option<String>,
}

/// `σ = ρ_L Φ'_{ρ^∞}(0) c₀^{1/β}` with `ρ^∞ = ρ_L ‖h_k‖_{L^β}`.
pub fn sigma_compute(f: &FunctionalSpec, kernel: &KernelSpec, k: usize, beta: f64, rho_l: f64, tol: f64) -> Result<SigmaResult> {
    let alpha = kernel.alpha;
    let kf = k as f64;
    if !(beta > 1.0 && beta < 2.0 && alpha > kf - 1.0 && alpha < kf - 1.0 / beta) {
        return Err(Error::Window(format!(
            "rank-one limit needs beta in (1,2) and alpha in (k-1, k-1/beta); got beta={beta}, alpha={alpha}, k={k}"
        )));
    }
    let rho_inf = rho0_compute(alpha, k, beta, rho_l, tol)?;
    let ev = PhiEvaluator::new(f.clone(), beta, PhiMethod::ClosedForm)?;
    let d = ev.deriv(rho_inf, 0.0, 1, 0)?;
    let c0 = c0_compute(kernel, k, beta, tol)?;
    let phi_prime = d.value;
    let degenerate = phi_prime.abs() <= d.error.max(1e-12);
    let (sigma, warning) = if degenerate {
        (
            0.0,
            Some("Phi'(0) vanishes at rho_inf: the rank-one limit is degenerate outside Appell rank one".to_string()),
        )
    } else {
        (rho_l * phi_prime * c0.powf(1.0 / beta), None)
    };
    Ok(SigmaResult {
        sigma: sigma.abs(),
        rho_inf,
        phi_prime,
        c0,
        degenerate,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaSign {
    Plus,
    Minus,
}

fn check_rank2_window(alpha: f64, beta: f64, k: usize) -> Result<()> {
    let kf = k as f64;
    if !(beta > 0.0 && beta < 2.0 && alpha > kf - 2.0 / beta && alpha < kf - 1.0 / beta) {
        return Err(Error::Window(format!(
            "rank-two limit needs alpha in (k - 2/beta, k - 1/beta); got alpha={alpha}, beta={beta}, k={k}"
        )));
    }
    Ok(())
}

/// `κ± = (k-α)^{-1} ∫_0^∞ Φ_{ρ^∞}(±k_α u) u^{-1-1/(k-α)} du`, computed as
/// `∫_0^∞ Φ(±k_α v^{k-α}) v^{-2} dv`.
pub fn kappa_compute(f: &FunctionalSpec, alpha: f64, beta: f64, k: usize, rho_l: f64, sign: KappaSign, tol: f64) -> Result<f64> {
    check_rank2_window(alpha, beta, k)?;
    let ka = k_alpha(alpha, k);
    if ka == 0.0 {
        return Ok(0.0);
    }
    let rho_inf = rho0_compute(alpha, k, beta, rho_l, tol.min(1e-8))?;
    let ev = PhiEvaluator::new(f.clone(), beta, PhiMethod::ClosedForm)?;
    kappa_with(&ev, rho_inf, ka, k as f64 - alpha, sign, tol)
}

/// Works in `x = |k_α| v^{k-α}`, where
/// `κ = |k_α|^{1/(k-α)} (k-α)^{-1} ∫_0^∞ Φ(±x) x^{-1-1/(k-α)} dx`.
fn kappa_with(ev: &PhiEvaluator, rho: f64, ka: f64, gap: f64, sign: KappaSign, tol: f64) -> Result<f64> {
    let s = match sign {
        KappaSign::Plus => ka.signum(),
        KappaSign::Minus => -ka.signum(),
    };
    let e = -1.0 - 1.0 / gap;
    let integrand = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        ev.phi(rho, s * x).unwrap_or(f64::NAN) * x.powf(e)
    };
    let t = Tolerance::new(tol, tol);
    let head = quad::left_singular(&integrand, 0.0, 1.0, 1.0 - 1.0 / gap, t)?;
    let (tail, tail_err) = match ev.f {
        FunctionalSpec::Cos { u } | FunctionalSpec::Sin { u } if u != 0.0 => {
            let g = ev.expected(rho)?;
            let shifted = |x: f64| integrand(x) + g * x.powf(e);
            let osc = alternating_tail(shifted, 1.0, std::f64::consts::PI / u.abs(), tol)?;
            (osc.0 - g * gap, osc.1)
        }
        _ => {
            let q = quad::semi_infinite(&integrand, 1.0, 1.0, t)?;
            (q.value, q.error)
        }
    };
    let v = (head.value + tail) * ka.abs().powf(1.0 / gap) / gap;
    if !v.is_finite() {
        return Err(Error::Quadrature {
            value: v,
            error: head.error + tail_err,
            context: "kappa integrand".into(),
        });
    }
    Ok(v)
}

/// `∫_a^∞ h` for an oscillating `h` with decaying amplitude: half-period
/// panels, then repeated averaging of the partial sums.
fn alternating_tail<F: Fn(f64) -> f64>(h: F, a: f64, half: f64, tol: f64) -> Result<(f64, f64)> {
    const PANELS: usize = 64;
    const LEVELS: usize = 24;
    let per = Tolerance::new(tol / PANELS as f64, 1e-13);
    let mut sums = Vec::with_capacity(PANELS);
    let mut acc = 0.0;
    for i in 0..PANELS {
        let lo = a + i as f64 * half;
        acc += quad::adaptive(&h, lo, lo + half, per)?.value;
        sums.push(acc);
    }
    let mut level: Vec<f64> = sums[PANELS - LEVELS - 1..].to_vec();
    let mut err = f64::INFINITY;
    while level.len() > 1 {
        let next: Vec<f64> = level.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        if next.len() == 1 {
            err = (next[0] - 0.5 * (level[0] + level[level.len() - 1])).abs().min((next[0] - level[0]).abs());
        }
        level = next;
    }
    Ok((level[0], err))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CConvention {
    /// `τ_β ρ_L κ^{k-α}`.
    #[default]
    Boxed,
    /// `τ_β ρ_L^β κ^{(k-α)β}`.
    ExponentBeta,
    /// `(τ_β/2) ρ_L^β κ^{(k-α)β}`, the one-sided stable tail constant.
    HalfTail,
}

impl std::str::FromStr for CConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boxed" => Ok(CConvention::Boxed),
            "exponent-beta" => Ok(CConvention::ExponentBeta),
            "half-tail" => Ok(CConvention::HalfTail),
            _ => Err(Error::InvalidParameter(format!("unknown c-convention '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    pub function: String,
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub rho_l: f64,
    pub tol: f64,
    pub convention: CConvention,
    pub index: f64,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub rho1: f64,
    pub eta1: f64,
}

fn c_term(kappa: f64, tau: f64, rho_l: f64, gap: f64, beta: f64, conv: CConvention) -> f64 {
    let a = kappa.abs();
    match conv {
        CConvention::Boxed => tau * rho_l * a.powf(gap),
        CConvention::ExponentBeta => tau * rho_l.powf(beta) * a.powf(gap * beta),
        CConvention::HalfTail => 0.5 * tau * rho_l.powf(beta) * a.powf(gap * beta),
    }
}

/// `(c₊, c₋)` from `κ±`.
pub fn tail_constants(kp: f64, km: f64, alpha: f64, beta: f64, k: usize, rho_l: f64, conv: CConvention) -> Result<(f64, f64)> {
    let gap = k as f64 - alpha;
    let tau = tau_gamma(beta)?;
    let term = |x: f64| c_term(x, tau, rho_l, gap, beta, conv);
    let pos = |x: f64| if x > 0.0 { term(x) } else { 0.0 };
    let neg = |x: f64| if x < 0.0 { term(x) } else { 0.0 };
    Ok((pos(kp) + pos(km), neg(kp) + neg(km)))
}

pub fn stable_limit_params(
    f: &FunctionalSpec,
    alpha: f64,
    beta: f64,
    k: usize,
    rho_l: f64,
    tol: f64,
    conv: CConvention,
) -> Result<StableParams> {
    check_rank2_window(alpha, beta, k)?;
    let kappa_plus = kappa_compute(f, alpha, beta, k, rho_l, KappaSign::Plus, tol)?;
    let kappa_minus = if f.attributes().even {
        kappa_plus
    } else {
        kappa_compute(f, alpha, beta, k, rho_l, KappaSign::Minus, tol)?
    };
    let (c_plus, c_minus) = tail_constants(kappa_plus, kappa_minus, alpha, beta, k, rho_l, conv)?;
    let index = (k as f64 - alpha) * beta;
    if !(c_plus + c_minus > 0.0) {
        return Err(Error::Degenerate(format!(
            "c+ + c- = 0 (kappa+ = {kappa_plus}, kappa- = {kappa_minus}, k_alpha = {})",
            k_alpha(alpha, k)
        )));
    }
    let rho1 = ((c_plus + c_minus) / tau_gamma(index)?).powf(1.0 / index);
    let eta1 = (c_plus - c_minus) / (c_plus + c_minus);
    Ok(StableParams {
        function: f.name(),
        alpha,
        beta,
        k,
        rho_l,
        tol,
        convention: conv,
        index,
        kappa_plus,
        kappa_minus,
        c_plus,
        c_minus,
        rho1,
        eta1,
    })
}

/// Inputs for [`predict_limit`] beyond the regime report.
#[derive(Debug, Clone)]
pub struct PredictInputs {
    pub f: FunctionalSpec,
    pub kernel: KernelSpec,
    pub rho_l: f64,
    /// `η²`, required for the CLT.
    pub eta2: Option<f64>,
    pub convention: CConvention,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub law: LimitLaw,
    pub rate_exponent: f64,
    pub rate_symbolic: String,
    pub weak: WeakTag,
}

pub fn predict_limit(report: &RegimeReport, inputs: &PredictInputs) -> Result<Prediction> {
    let (alpha, beta, k) = (report.alpha, report.beta, report.k);
    if (inputs.kernel.alpha - alpha).abs() > 1e-12 {
        return Err(Error::Inconsistent("kernel alpha differs from the regime report".into()));
    }
    let rate_symbolic = report.weak_rate_symbolic.clone().unwrap_or_default();
    let law = match report.weak {
        WeakTag::Critical => {
            return Err(Error::NoTheorem(format!(
                "alpha = k - 2/beta = {}: no weak limit theorem covers the critical value",
                k as f64 - 2.0 / beta
            )))
        }
        WeakTag::None => {
            return Err(Error::NoTheorem(format!(
                "no weak limit applies (rank {:?}, alpha={alpha}, beta={beta}, k={k})",
                report.rank
            )))
        }
        WeakTag::Clt => {
            let variance = inputs
                .eta2
                .ok_or_else(|| Error::InvalidParameter("CLT prediction needs an eta^2 estimate".into()))?;
            LimitLaw::Normal { variance }
        }
        WeakTag::StableRank1 => {
            if report.rank != RankVerdict::Rank1 {
                return Err(Error::RegimeMismatch("rank-one limit requested without rank one".into()));
            }
            let s = sigma_compute(&inputs.f, &inputs.kernel, k, beta, inputs.rho_l, inputs.tol)?;
            LimitLaw::Sbs { index: beta, scale: s.sigma }
        }
        WeakTag::StableRank2 => {
            let p = stable_limit_params(&inputs.f, alpha, beta, k, inputs.rho_l, inputs.tol, inputs.convention)?;
            LimitLaw::StableSkewed {
                index: p.index,
                scale: p.rho1,
                skew: p.eta1,
            }
        }
    };
    Ok(Prediction {
        law,
        rate_exponent: report.weak_rate.unwrap_or(f64::NAN),
        rate_symbolic,
        weak: report.weak,
    })
}

/// `E f(ρ₀ S)`, the case-II law of large numbers limit.
pub fn lln_constant(f: &FunctionalSpec, alpha: f64, beta: f64, k: usize, rho_l: f64) -> Result<LimitLaw> {
    let rho0 = rho0_compute(alpha, k, beta, rho_l, 1e-10)?;
    let ev = PhiEvaluator::new(f.clone(), beta, PhiMethod::ClosedForm)?;
    Ok(LimitLaw::Constant { value: ev.expected(rho0)? })
}
