//! The functions `f`, the statistic `V(f;k)^n`, regime classification and the
//! deterministic variation oracle.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::appell::RankVerdict;
use crate::error::{Error, Result};
use crate::kernel::difference_weights;
use crate::pathsim::IncrementPanel;
use crate::quad::{self, Tolerance};

pub type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Structural properties used by the regime classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attributes {
    pub bounded: bool,
    pub even: bool,
    pub odd: bool,
    pub continuous: bool,
    /// `q` in `|f(x)| <= C (1 ∨ |x|^q)`.
    pub growth: f64,
    /// `s` in `|f(x)| ~ |x|^-s` near the origin (0 when locally bounded).
    pub singularity: f64,
    /// Supremum of `p` with `f ∈ C^p` and `f^(j)(0) = 0` for `j <= [p]`
    /// (0 when `f(0) != 0` or `f` is discontinuous).
    pub vanishing_order: f64,
}

impl Attributes {
    /// `E|f(S)|^r < ∞` for `S ~ SβS` (`β = 0` means no stable part).
    pub fn moment(&self, r: f64, beta: f64) -> bool {
        let tail = self.bounded || self.growth == 0.0 || (beta > 0.0 && r * self.growth < beta);
        tail && r * self.singularity < 1.0
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct Custom {
    pub name: String,
    pub attributes: Attributes,
    #[serde(skip)]
    pub eval: Option<Evaluator>,
}

impl fmt::Debug for Custom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Custom")
            .field("name", &self.name)
            .field("attributes", &self.attributes)
            .field("eval", &self.eval.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

/// Catalog of functions: `|x|^p`, `|x|^-p 1{x≠0}`, `cos(ux)`, `sin(ux)`,
/// `1{x<=u}`, `log|x| 1{x≠0}`, or a user closure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FunctionalSpec {
    Power { p: f64 },
    NegPower { p: f64 },
    Cos { u: f64 },
    Sin { u: f64 },
    Indicator { u: f64 },
    Log,
    Custom(Custom),
}

impl FunctionalSpec {
    pub fn custom<F>(name: &str, attributes: Attributes, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        FunctionalSpec::Custom(Custom {
            name: name.to_string(),
            attributes,
            eval: Some(Arc::new(f)),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FunctionalSpec::Power { p } if !(p > 0.0) => {
                Err(Error::InvalidParameter(format!("power exponent must be positive, got {p}")))
            }
            FunctionalSpec::NegPower { p } if !(p > 0.0 && p < 1.0) => {
                Err(Error::InvalidParameter(format!("negative power needs p in (0,1), got {p}")))
            }
            FunctionalSpec::Cos { u } | FunctionalSpec::Sin { u } | FunctionalSpec::Indicator { u }
                if !u.is_finite() =>
            {
                Err(Error::InvalidParameter("u must be finite".into()))
            }
            FunctionalSpec::Custom(ref c) => c.check(),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            FunctionalSpec::Power { p } => format!("power({p})"),
            FunctionalSpec::NegPower { p } => format!("negpower({p})"),
            FunctionalSpec::Cos { u } => format!("cos({u})"),
            FunctionalSpec::Sin { u } => format!("sin({u})"),
            FunctionalSpec::Indicator { u } => format!("indicator({u})"),
            FunctionalSpec::Log => "log".into(),
            FunctionalSpec::Custom(c) => c.name.clone(),
        }
    }

    pub fn attributes(&self) -> Attributes {
        let base = Attributes {
            bounded: true,
            even: false,
            odd: false,
            continuous: true,
            growth: 0.0,
            singularity: 0.0,
            vanishing_order: 0.0,
        };
        match *self {
            FunctionalSpec::Power { p } => Attributes {
                bounded: false,
                even: true,
                growth: p,
                vanishing_order: p,
                ..base
            },
            FunctionalSpec::NegPower { p } => Attributes {
                bounded: false,
                even: true,
                continuous: false,
                singularity: p,
                ..base
            },
            FunctionalSpec::Cos { u } => Attributes {
                even: true,
                odd: u == 0.0,
                ..base
            },
            FunctionalSpec::Sin { u } => Attributes {
                even: u == 0.0,
                odd: true,
                vanishing_order: if u == 0.0 { f64::INFINITY } else { 1.0 },
                ..base
            },
            FunctionalSpec::Indicator { .. } => Attributes {
                continuous: false,
                ..base
            },
            FunctionalSpec::Log => Attributes {
                bounded: false,
                even: true,
                continuous: false,
                ..base
            },
            FunctionalSpec::Custom(ref c) => c.attributes,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            FunctionalSpec::Power { p } => x.abs().powf(p),
            FunctionalSpec::NegPower { p } => {
                if x == 0.0 {
                    0.0
                } else {
                    x.abs().powf(-p)
                }
            }
            FunctionalSpec::Cos { u } => (u * x).cos(),
            FunctionalSpec::Sin { u } => (u * x).sin(),
            FunctionalSpec::Indicator { u } => {
                if x <= u {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionalSpec::Log => {
                if x == 0.0 {
                    0.0
                } else {
                    x.abs().ln()
                }
            }
            FunctionalSpec::Custom(ref c) => c.eval.as_ref().map_or(f64::NAN, |f| f(x)),
        }
    }
}

pub fn f_eval(spec: &FunctionalSpec, x: f64) -> f64 {
    spec.eval(x)
}

impl Custom {
    /// Probes the declared attributes numerically.
    pub fn check(&self) -> Result<()> {
        let f = match &self.eval {
            Some(f) => f,
            None => return Err(Error::InvalidParameter(format!("custom function '{}' has no evaluator", self.name))),
        };
        let a = &self.attributes;
        let grid: Vec<f64> = (-10..=20).map(|e| 2f64.powi(e)).collect();
        for &x in &grid {
            let (fp, fm) = (f(x), f(-x));
            let scale = 1.0 + fp.abs().max(fm.abs());
            if a.even && (fp - fm).abs() > 1e-9 * scale {
                return Err(Error::Inconsistent(format!("'{}' declared even but f({x}) != f(-{x})", self.name)));
            }
            if a.odd && (fp + fm).abs() > 1e-9 * scale {
                return Err(Error::Inconsistent(format!("'{}' declared odd but f({x}) != -f(-{x})", self.name)));
            }
        }
        let far: Vec<f64> = grid.iter().copied().filter(|&x| x >= 1024.0).collect();
        let ratio = |x: f64| f(x).abs().max(f(-x).abs()) / x.powf(a.growth).max(1.0);
        let r0 = ratio(far[0]);
        let r1 = ratio(*far.last().unwrap());
        if r1 > 4.0 * r0.max(1e-12) && r1 > 1e-9 {
            return Err(Error::Inconsistent(format!(
                "'{}' grows faster than |x|^{} on the probe grid",
                self.name, a.growth
            )));
        }
        if a.bounded && (r1 > 1e12 || r1.is_nan()) {
            return Err(Error::Inconsistent(format!("'{}' declared bounded", self.name)));
        }
        let p = a.vanishing_order;
        if p > 0.0 {
            let f0 = f(0.0);
            let derivs = |h: f64| {
                let (fp, fm) = (f(h), f(-h));
                let mut d = vec![f0];
                if p >= 1.0 {
                    d.push((fp - fm) / (2.0 * h));
                }
                if p >= 2.0 {
                    d.push((fp - 2.0 * f0 + fm) / (h * h));
                }
                d
            };
            let (coarse, fine) = (derivs(1e-3), derivs(1e-4));
            // a vanishing derivative shrinks with the step
            let nonzero = |j: usize| fine[j].abs() > 1e-6 && fine[j].abs() > 0.5 * coarse[j].abs();
            if let Some(j) = (0..fine.len()).find(|&j| nonzero(j)) {
                return Err(Error::Inconsistent(format!(
                    "'{}' declares vanishing order {p} but f^({j})(0) is not zero",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Neumaier compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VStat {
    pub value: f64,
    /// Number of scaled increments with `|b_n Δ| < 1e-300`.
    pub near_zero: usize,
}

/// `n^-a Σ_i f(n^b x_i)` over raw increments `x`.
pub fn vstat_values(values: &[f64], n: usize, spec: &FunctionalSpec, a_exp: f64, b_exp: f64) -> VStat {
    let nf = n as f64;
    let bn = nf.powf(b_exp);
    let mut near_zero = 0;
    let sum = compensated_sum(values.iter().map(|&x| {
        let y = bn * x;
        if y.abs() < 1e-300 {
            near_zero += 1;
        }
        spec.eval(y)
    }));
    VStat {
        value: nf.powf(-a_exp) * sum,
        near_zero,
    }
}

/// `V(f;k)^n = n^-a Σ_{i=k}^n f(n^b Δ_{i,k}^n X)`.
pub fn vstat(panel: &IncrementPanel, spec: &FunctionalSpec, a_exp: f64, b_exp: f64) -> VStat {
    vstat_values(&panel.values, panel.n, spec, a_exp, b_exp)
}

/// Partial sums `V(f;k)^n_t` at each `t`, summing `i = k..[nt]`.
pub fn vstat_process(panel: &IncrementPanel, spec: &FunctionalSpec, a_exp: f64, b_exp: f64, t_grid: &[f64]) -> Vec<f64> {
    let nf = panel.n as f64;
    let an = nf.powf(-a_exp);
    let bn = nf.powf(b_exp);
    let terms: Vec<f64> = panel.values.iter().map(|&x| spec.eval(bn * x)).collect();
    t_grid
        .iter()
        .map(|&t| {
            let last = (nf * t + 1e-9).floor() as usize;
            if last < panel.k {
                return 0.0;
            }
            let upto = (last - panel.k + 1).min(terms.len());
            an * compensated_sum(terms[..upto].iter().copied())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    I,
    II,
    III,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WeakTag {
    Clt,
    StableRank1,
    StableRank2,
    Critical,
    None,
}

/// `a_n = n^-a`, `b_n = n^b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub case: Case,
    pub a_exp: f64,
    pub b_exp: f64,
    pub a_symbolic: String,
    pub b_symbolic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub hurst: f64,
    pub function: String,
    pub cases: Vec<Normalization>,
    pub weak: WeakTag,
    /// Exponent `r` of the weak-limit rate `n^r`.
    pub weak_rate: Option<f64>,
    pub weak_rate_symbolic: Option<String>,
    pub rank: RankVerdict,
    pub hypotheses: Vec<Hypothesis>,
}

impl RegimeReport {
    pub fn has_case(&self, case: Case) -> bool {
        self.cases.iter().any(|c| c.case == case)
    }

    pub fn normalization(&self, case: Case) -> Option<&Normalization> {
        self.cases.iter().find(|c| c.case == case)
    }
}

pub const CRITICAL_EPS: f64 = 1e-9;

fn hyp(out: &mut Vec<Hypothesis>, name: &str, holds: bool, detail: String) -> bool {
    out.push(Hypothesis {
        name: name.to_string(),
        holds,
        detail,
    });
    holds
}

/// Classifies the applicable limit theorems. `beta = 0` denotes a driver
/// without stable part (compound Poisson); otherwise the driver is SβS.
pub fn classify_regime(
    alpha: f64,
    beta: f64,
    k: usize,
    spec: &FunctionalSpec,
    rank: Option<RankVerdict>,
) -> Result<RegimeReport> {
    if !(alpha > 0.0) || k == 0 || !(0.0..2.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "need alpha > 0, k >= 1, beta in [0,2); got alpha={alpha}, beta={beta}, k={k}"
        )));
    }
    spec.validate()?;
    let attrs = spec.attributes();
    let structural = structural_rank(spec);
    let rank = match (rank, structural) {
        (Some(RankVerdict::Rank1), RankVerdict::RankGe2) => {
            return Err(Error::Inconsistent(format!(
                "{} is even, so its Appell rank exceeds one for every rho",
                spec.name()
            )))
        }
        (Some(r), _) => r,
        (None, s) => s,
    };
    let kf = k as f64;
    let stable = beta > 0.0;
    let hurst = if stable { alpha + 1.0 / beta } else { f64::INFINITY };
    let mut hyps = Vec::new();
    let mut cases = Vec::new();

    let threshold = beta.max(1.0 / (kf - alpha));
    let ok_i = hyp(&mut hyps, "I: k > alpha", kf > alpha, format!("k - alpha = {}", kf - alpha))
        & hyp(
            &mut hyps,
            "I: f in C^p with vanishing derivatives, p > beta ∨ 1/(k-alpha)",
            kf > alpha && attrs.vanishing_order > threshold,
            format!("vanishing order {} vs threshold {threshold}", attrs.vanishing_order),
        );
    if ok_i {
        cases.push(Normalization {
            case: Case::I,
            a_exp: 0.0,
            b_exp: alpha,
            a_symbolic: "0".into(),
            b_symbolic: "alpha".into(),
        });
    }

    let ok_ii = hyp(&mut hyps, "II: symmetric stable driver", stable, format!("beta = {beta}"))
        & hyp(&mut hyps, "II: E|f(L_1)| finite", attrs.moment(1.0, beta), String::new())
        & hyp(&mut hyps, "II: H < k", hurst < kf, format!("H = {hurst}"));
    if ok_ii {
        cases.push(Normalization {
            case: Case::II,
            a_exp: 1.0,
            b_exp: hurst,
            a_symbolic: "1".into(),
            b_symbolic: "alpha + 1/beta".into(),
        });
    }

    let ok_iii = hyp(
        &mut hyps,
        "III: (1 ∨ beta)(k - alpha) < 1",
        beta.max(1.0) * (kf - alpha) < 1.0 && kf > alpha,
        format!("{}", beta.max(1.0) * (kf - alpha)),
    ) & hyp(&mut hyps, "III: f continuous", attrs.continuous, String::new())
        & hyp(
            &mut hyps,
            "III: q (k - alpha) < 1",
            attrs.growth * (kf - alpha) < 1.0,
            format!("q = {}", attrs.growth),
        );
    if ok_iii {
        cases.push(Normalization {
            case: Case::III,
            a_exp: 1.0,
            b_exp: kf,
            a_symbolic: "1".into(),
            b_symbolic: "k".into(),
        });
    }

    let mut weak = WeakTag::None;
    let mut weak_rate = None;
    let mut weak_sym = None;
    if ok_ii {
        let crit = kf - 2.0 / beta;
        let upper = kf - 1.0 / beta;
        if (alpha - crit).abs() < CRITICAL_EPS {
            weak = WeakTag::Critical;
            hyp(&mut hyps, "weak: alpha != k - 2/beta", false, "critical value, no limit theorem".into());
        } else if alpha < crit {
            hyp(
                &mut hyps,
                "CLT: E f(L_1)^2 finite",
                attrs.moment(2.0, beta),
                String::new(),
            );
            weak = WeakTag::Clt;
            weak_rate = Some(0.5);
            weak_sym = Some("1/2".to_string());
        } else if alpha < upper {
            match rank {
                RankVerdict::RankGe2 => {
                    weak = WeakTag::StableRank2;
                    weak_rate = Some(1.0 - 1.0 / ((kf - alpha) * beta));
                    weak_sym = Some("1 - 1/((k - alpha) beta)".to_string());
                }
                RankVerdict::Rank1 => {
                    let ok = hyp(&mut hyps, "rank 1: beta in (1,2)", beta > 1.0, format!("beta = {beta}"))
                        & hyp(
                            &mut hyps,
                            "rank 1: alpha in (k-1, k-1/beta)",
                            alpha > kf - 1.0,
                            format!("alpha = {alpha}"),
                        );
                    if ok {
                        weak = WeakTag::StableRank1;
                        weak_rate = Some(kf - alpha - 1.0 / beta);
                        weak_sym = Some("k - alpha - 1/beta".to_string());
                    }
                }
                RankVerdict::Undetermined => {
                    hyp(&mut hyps, "Appell rank determined", false, "rank undetermined".into());
                }
            }
        }
    }

    Ok(RegimeReport {
        alpha,
        beta,
        k,
        hurst,
        function: spec.name(),
        cases,
        weak,
        weak_rate,
        weak_rate_symbolic: weak_sym,
        rank,
        hypotheses: hyps,
    })
}

/// Rank implied by symmetry alone.
pub fn structural_rank(spec: &FunctionalSpec) -> RankVerdict {
    match spec {
        FunctionalSpec::Sin { u } if *u != 0.0 => RankVerdict::Rank1,
        FunctionalSpec::Indicator { .. } => RankVerdict::Rank1,
        _ if spec.attributes().even => RankVerdict::RankGe2,
        _ => RankVerdict::Undetermined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicVariation {
    pub statistic: f64,
    /// `∫_0^1 f(ξ^(k)(s)) ds`.
    pub limit: f64,
}

/// `n^-1 Σ_{i=k}^n f(n^k Δ_{i,k}^n ξ)` for a path given through `ξ^(k)`.
///
/// The increments come from the Peano form
/// `Δ_{i,k}^n ξ = ∫ ξ^(k)(s) Σ_j (-1)^j C(k,j) ((i-j)/n - s)₊^(k-1) / (k-1)! ds`.
pub fn deterministic_variation<F: Fn(f64) -> f64>(
    xi_k: F,
    k: usize,
    spec: &FunctionalSpec,
    n: usize,
) -> Result<DeterministicVariation> {
    if k == 0 || n < k {
        return Err(Error::InvalidParameter(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let nf = n as f64;
    let w = difference_weights(k);
    let fact: f64 = (1..k).map(|j| j as f64).product();
    let (gx, gw) = quad::gauss_legendre(k + 8);
    let mut terms = Vec::with_capacity(n - k + 1);
    for i in k..=n {
        let mut acc = 0.0;
        // cells [(i-c-1)/n, (i-c)/n], c = 0..k
        for c in 0..k {
            let lo = (i - c - 1) as f64;
            for (x, wt) in gx.iter().zip(&gw) {
                let v = lo + 0.5 * (x + 1.0);
                let peano: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(j, wj)| {
                        let d = (i - j) as f64 - v;
                        if d > 0.0 {
                            wj * d.powi(k as i32 - 1)
                        } else {
                            0.0
                        }
                    })
                    .sum::<f64>()
                    / fact;
                acc += 0.5 * wt * peano * xi_k(v / nf);
            }
        }
        terms.push(spec.eval(acc));
    }
    let statistic = compensated_sum(terms) / nf;
    let limit = quad::adaptive(|s| spec.eval(xi_k(s)), 0.0, 1.0, Tolerance::new(1e-13, 1e-11))?.value;
    Ok(DeterministicVariation { statistic, limit })
}
