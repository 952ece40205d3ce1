//! Compound Poisson driver: exact finite jump sums.

use serde::{Deserialize, Serialize};

use super::{check_f_window, check_kn, DriverSpec, ErrorBudget, IncrementPanel, Jump, JumpLaw, PathConfig, Provenance};
use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::kernel::{DiscreteKernelTable, KernelEvaluator, KernelSpec};
use crate::quad::{self, Tolerance};
use crate::stable::{RngStream, StreamRng};

const TRUNC_TARGET: f64 = 1e-3;

fn draw_jumps(rate: f64, law: &JumpLaw, from: f64, to: f64, rng: &mut StreamRng) -> Vec<Jump> {
    let count = rng.poisson(rate * (to - from));
    let mut jumps: Vec<Jump> = (0..count)
        .map(|_| {
            let time = from + (to - from) * rng.uniform();
            Jump {
                time,
                size: law.draw(rng),
            }
        })
        .collect();
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    jumps
}

/// `λ n^{α-k} ∫_T^∞ |g^(k)(s)| ds`, the far-past mass relative to `n^{-α}`.
fn tail_rel(kernel: &KernelSpec, k: usize, n: f64, rate: f64, t: f64) -> Result<f64> {
    let kf = k as f64;
    let gap = kf - kernel.alpha;
    let factor = rate * n.powf(-gap);
    if kernel.is_pure() {
        if gap <= 1.0 {
            return Err(Error::Integrability(format!(
                "compound Poisson past needs k - alpha > 1 for a pure kernel, got {gap}"
            )));
        }
        let c = crate::kernel::k_alpha(kernel.alpha, k).abs();
        return Ok(factor * c * t.powf(1.0 - gap) / (gap - 1.0));
    }
    let q = quad::semi_infinite(|s| kernel.deriv(k, s).abs(), t, 1.0, Tolerance::new(1e-14, 1e-8))?;
    Ok(factor * q.value)
}

/// Exact simulation plan for a compound Poisson driver.
#[derive(Debug, Clone)]
pub struct CompoundPoissonEngine {
    rate: f64,
    law: JumpLaw,
    kernel: KernelSpec,
    k: usize,
    n: usize,
    ev: KernelEvaluator,
    t_trunc: f64,
    forced: Option<Vec<Jump>>,
    budget: ErrorBudget,
}

impl CompoundPoissonEngine {
    pub fn new(driver: &DriverSpec, kernel: &KernelSpec, k: usize, n: usize, config: &PathConfig) -> Result<Self> {
        check_kn(k, n)?;
        config.validate()?;
        kernel.validate()?;
        let (rate, law) = match *driver {
            DriverSpec::CompoundPoisson { rate, jumps } => (rate, jumps),
            DriverSpec::StableSym { .. } => {
                return Err(Error::InvalidParameter("compound Poisson engine needs a jump driver".into()))
            }
        };
        driver.validate()?;
        let nf = n as f64;
        let (t_trunc, truncation) = match (&config.forced_jumps, config.t_trunc) {
            (Some(jumps), _) => {
                let earliest = jumps.iter().map(|j| -j.time).fold(0.0, f64::max);
                (earliest.max(config.t_trunc.unwrap_or(0.0)), 0.0)
            }
            (None, Some(t)) => (t, tail_rel(kernel, k, nf, rate, t)?),
            (None, None) => {
                let mut t = 1.0;
                while tail_rel(kernel, k, nf, rate, t)? > TRUNC_TARGET && t < 1e6 {
                    t *= 2.0;
                }
                (t, tail_rel(kernel, k, nf, rate, t)?)
            }
        };
        let budget = ErrorBudget::new(truncation, 0.0, config.budget_cap);
        budget.enforce(config.substeps, t_trunc)?;
        Ok(Self {
            rate,
            law,
            kernel: *kernel,
            k,
            n,
            ev: KernelEvaluator::new(kernel, k, Some(nf))?,
            t_trunc,
            forced: config.forced_jumps.clone(),
            budget,
        })
    }

    pub fn t_trunc(&self) -> f64 {
        self.t_trunc
    }

    pub fn budget(&self) -> ErrorBudget {
        self.budget
    }

    /// Jumps on `[-t_trunc, 1]`.
    pub fn jumps(&self, stream: RngStream) -> Vec<Jump> {
        match &self.forced {
            Some(j) => j.clone(),
            None => draw_jumps(self.rate, &self.law, -self.t_trunc, 1.0, &mut stream.child(2).rng()),
        }
    }

    /// `Δ_{i,k}^n X = n^{-α} Σ_m ψ_n(i - n T_m) ΔL_m`.
    pub fn increments(&self, jumps: &[Jump]) -> Vec<f64> {
        let nf = self.n as f64;
        let mut values = vec![0.0; self.n - self.k + 1];
        for jump in jumps {
            let x0 = nf * jump.time;
            let first = (x0.floor() + 1.0).max(self.k as f64) as usize;
            for i in first..=self.n {
                values[i - self.k] += self.ev.psi(i as f64 - x0) * jump.size;
            }
        }
        let na = nf.powf(-self.kernel.alpha);
        values.iter_mut().for_each(|v| *v *= na);
        values
    }

    fn panel(&self, stream: RngStream, values: Vec<f64>) -> IncrementPanel {
        IncrementPanel {
            k: self.k,
            n: self.n,
            values,
            scales: Vec::new(),
            hurst: None,
            budget: self.budget,
            provenance: Some(Provenance {
                driver: DriverSpec::CompoundPoisson {
                    rate: self.rate,
                    jumps: self.law,
                },
                kernel: self.kernel,
                stream,
                substeps: 1,
                t_trunc: self.t_trunc,
            }),
        }
    }

    pub fn simulate(&self, stream: RngStream) -> Result<IncrementPanel> {
        let jumps = self.jumps(stream);
        Ok(self.panel(stream, self.increments(&jumps)))
    }

    /// `F_u = Σ_m g^(k)(u - T_m) ΔL_m`.
    pub fn f_values(&self, jumps: &[Jump], u_grid: &[f64]) -> Vec<f64> {
        u_grid
            .iter()
            .map(|&u| jumps.iter().map(|j| self.kernel.deriv(self.k, u - j.time) * j.size).sum())
            .collect()
    }

    pub fn f_path(&self, stream: RngStream, u_grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.f_values(&self.jumps(stream), u_grid))
    }

    /// Increments together with `F_{(i-1)/n}` from the same jumps.
    pub fn simulate_coupled(&self, stream: RngStream) -> Result<(IncrementPanel, Vec<f64>, Vec<Jump>)> {
        check_f_window(&self.kernel, self.k, 0.0)?;
        let jumps = self.jumps(stream);
        let nf = self.n as f64;
        let grid: Vec<f64> = (self.k..=self.n).map(|i| (i - 1) as f64 / nf).collect();
        let f = self.f_values(&jumps, &grid);
        Ok((self.panel(stream, self.increments(&jumps)), f, jumps))
    }

    /// `∫_0^t f(F_u) du`, split at the jump times in `(0, t)`.
    pub fn integral_f(&self, jumps: &[Jump], f: &FunctionalSpec, t: f64) -> Result<f64> {
        check_f_window(&self.kernel, self.k, 0.0)?;
        let attrs = f.attributes();
        let q = if attrs.bounded { 0.0 } else { attrs.growth };
        let gamma = -q * (self.k as f64 - self.kernel.alpha);
        let mut cuts: Vec<f64> = jumps.iter().map(|j| j.time).filter(|&s| s > 0.0 && s < t).collect();
        cuts.push(t);
        let integrand = |u: f64| {
            let fu: f64 = jumps.iter().map(|j| self.kernel.deriv(self.k, u - j.time) * j.size).sum();
            f.eval(fu)
        };
        let tol = Tolerance::new(1e-10, 1e-8);
        let mut lo = 0.0;
        let mut total = 0.0;
        for &hi in &cuts {
            if hi > lo {
                let starts_at_jump = lo > 0.0;
                total += if starts_at_jump {
                    quad::left_singular(&integrand, lo, hi, gamma, tol)?.value
                } else {
                    quad::adaptive(&integrand, lo, hi, tol)?.value
                };
            }
            lo = hi;
        }
        Ok(total)
    }
}

/// One draw of `Σ_{T_m ∈ [0,t]} Σ_{l>=0} f(ΔL_m h_k(l + U_m))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSeriesDraw {
    pub value: f64,
    /// Bound on the neglected terms `l > l_max`.
    pub remainder_bound: f64,
    pub jumps: usize,
}

/// `(C, p)` with `|f(x)| <= C |x|^p` near the origin.
fn small_argument_bound(f: &FunctionalSpec) -> Result<(f64, f64)> {
    match *f {
        FunctionalSpec::Power { p } => Ok((1.0, p)),
        FunctionalSpec::Sin { u } => Ok((u.abs(), 1.0)),
        FunctionalSpec::Custom(_) => {
            let p = f.attributes().vanishing_order;
            if !(p > 0.0) {
                return Err(Error::Divergent("f does not vanish at the origin".into()));
            }
            let c = (0..=240)
                .map(|e| 10f64.powf(-9.0 + e as f64 * 0.05))
                .flat_map(|x| [x, -x])
                .map(|x| f.eval(x).abs() / x.abs().powf(p))
                .fold(0.0, f64::max);
            Ok((c, p))
        }
        _ => Err(Error::Divergent(format!("{} does not vanish at the origin", f.name()))),
    }
}

/// `Σ_{l=0}^{l_max} f(size h_k(l + u))`.
pub fn jump_series_term(f: &FunctionalSpec, table: &DiscreteKernelTable, size: f64, u: f64, l_max: usize) -> f64 {
    crate::functionals::compensated_sum((0..=l_max).map(|l| f.eval(size * table.hk(l as f64 + u))))
}

pub fn sample_jump_series_limit(
    f: &FunctionalSpec,
    driver: &DriverSpec,
    alpha: f64,
    k: usize,
    t: f64,
    l_max: usize,
    stream: RngStream,
) -> Result<JumpSeriesDraw> {
    let (rate, law) = match *driver {
        DriverSpec::CompoundPoisson { rate, jumps } => (rate, jumps),
        DriverSpec::StableSym { .. } => {
            return Err(Error::InvalidParameter("the jump series needs a compound Poisson driver".into()))
        }
    };
    driver.validate()?;
    f.validate()?;
    let (c_f, p) = small_argument_bound(f)?;
    let gap = k as f64 - alpha;
    if p * gap <= 1.0 {
        return Err(Error::Divergent(format!("p (k - alpha) = {} must exceed 1", p * gap)));
    }
    if l_max <= k {
        return Err(Error::InvalidParameter("l_max must exceed k".into()));
    }
    let table = DiscreteKernelTable::new(alpha, k)?;
    let c_h = KernelEvaluator::new(&KernelSpec::pure(alpha)?, k, None)?.envelope();
    let mut rng = stream.rng();
    let jumps = draw_jumps(rate, &law, 0.0, t, &mut rng);
    let mut value = 0.0;
    let mut remainder_bound = 0.0;
    for jump in &jumps {
        let u = rng.uniform();
        value += jump_series_term(f, &table, jump.size, u, l_max);
        let base = l_max as f64 + u - k as f64;
        remainder_bound += c_f * (c_h * jump.size.abs()).powf(p) * base.powf(1.0 - gap * p) / (gap * p - 1.0);
    }
    Ok(JumpSeriesDraw {
        value,
        remainder_bound,
        jumps: jumps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gin_eval, Zeta};
    use crate::pathsim::{simulate_f_path, simulate_increments};

    fn one_jump(time: f64, size: f64) -> PathConfig {
        PathConfig {
            forced_jumps: Some(vec![Jump { time, size }]),
            ..PathConfig::default()
        }
    }

    #[test]
    fn single_forced_jump_is_exact() {
        let kern = KernelSpec::perturbed(0.6, Zeta::Exp { lambda: 1.0 }).unwrap();
        let (k, n) = (2, 200);
        let (t1, j1) = (0.3137, -1.7);
        let panel = simulate_increments(&DriverSpec::compound_poisson(1.0), &kern, k, n, &one_jump(t1, j1)).unwrap();
        for (idx, v) in panel.values.iter().enumerate() {
            let want = gin_eval(&kern, k, k + idx, n, t1) * j1;
            assert!((v - want).abs() <= 1e-12 * (1.0 + want.abs()), "i={}: {v} vs {want}", k + idx);
        }
        assert_eq!(panel.budget.total, 0.0);
    }

    #[test]
    fn single_forced_jump_f_path() {
        let kern = KernelSpec::perturbed(1.5, Zeta::Exp { lambda: 1.0 }).unwrap();
        let grid = [0.1, 0.3, 0.5, 0.9];
        let f = simulate_f_path(&DriverSpec::compound_poisson(1.0), &kern, 2, 100, &grid, &one_jump(0.4, 2.0)).unwrap();
        for (u, v) in grid.iter().zip(&f) {
            let want = if *u > 0.4 { kern.deriv(2, u - 0.4) * 2.0 } else { 0.0 };
            assert_eq!(*v, want);
        }
        let cfg = PathConfig {
            forced_jumps: Some(Vec::new()),
            ..PathConfig::default()
        };
        let f = simulate_f_path(&DriverSpec::compound_poisson(1.0), &kern, 2, 100, &grid, &cfg).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampled_increments_equal_jump_sums() {
        let kern = KernelSpec::perturbed(0.5, Zeta::Exp { lambda: 1.0 }).unwrap();
        let d = DriverSpec::compound_poisson(3.0);
        let cfg = PathConfig::with_seed(4);
        let engine = CompoundPoissonEngine::new(&d, &kern, 2, 300, &cfg).unwrap();
        let jumps = engine.jumps(cfg.stream);
        assert!(!jumps.is_empty());
        let panel = engine.simulate(cfg.stream).unwrap();
        for (idx, v) in panel.values.iter().enumerate() {
            let want: f64 = jumps.iter().map(|j| gin_eval(&kern, 2, 2 + idx, 300, j.time) * j.size).sum();
            assert!((v - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn coupled_f_approximates_scaled_increments() {
        let kern = KernelSpec::perturbed(1.6, Zeta::Exp { lambda: 1.0 }).unwrap();
        let d = DriverSpec::compound_poisson(2.0);
        let err = |n: usize| {
            let cfg = PathConfig {
                t_trunc: Some(20.0),
                ..PathConfig::with_seed(17)
            };
            let e = CompoundPoissonEngine::new(&d, &kern, 2, n, &cfg).unwrap();
            let (panel, f, _) = e.simulate_coupled(cfg.stream).unwrap();
            let nk = (n as f64).powi(2);
            panel.values.iter().zip(&f).map(|(v, fv)| (nk * v - fv).abs()).sum::<f64>() / f.len() as f64
        };
        let (e1, e2) = (err(200), err(1600));
        assert!(e2 < 0.5 * e1, "{e1} -> {e2}");
    }

    #[test]
    fn integral_of_f_matches_riemann_sum() {
        let kern = KernelSpec::perturbed(1.5, Zeta::Exp { lambda: 1.0 }).unwrap();
        let d = DriverSpec::compound_poisson(2.0);
        let cfg = PathConfig::with_seed(2);
        let e = CompoundPoissonEngine::new(&d, &kern, 2, 100, &cfg).unwrap();
        let jumps = e.jumps(cfg.stream);
        let f = FunctionalSpec::Power { p: 0.5 };
        let exact = e.integral_f(&jumps, &f, 1.0).unwrap();
        let m = 400_000;
        let grid: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let riemann = e.f_values(&jumps, &grid).iter().map(|x| f.eval(*x)).sum::<f64>() / m as f64;
        assert!((exact - riemann).abs() < 1e-3 * (1.0 + exact.abs()), "{exact} vs {riemann}");
    }

    #[test]
    fn pure_kernel_past_needs_summability() {
        let r = CompoundPoissonEngine::new(&DriverSpec::compound_poisson(1.0), &KernelSpec::pure(0.5).unwrap(), 1, 50, &PathConfig::default());
        assert!(matches!(r, Err(Error::Integrability(_))));
    }

    #[test]
    fn empty_driver_gives_zero() {
        let d = DriverSpec::compound_poisson(1e-14);
        let s = sample_jump_series_limit(&FunctionalSpec::Power { p: 2.0 }, &d, 0.3, 1, 1.0, 100, RngStream::new(1, 0)).unwrap();
        assert_eq!(s.jumps, 0);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn series_against_long_direct_sum() {
        let f = FunctionalSpec::Power { p: 2.0 };
        let (alpha, k) = (0.3, 1);
        let table = DiscreteKernelTable::new(alpha, k).unwrap();
        let (size, u) = (1.3, 0.42);
        let short = jump_series_term(&f, &table, size, u, 2000);
        let long = jump_series_term(&f, &table, size, u, 1_000_000);
        let gap = (k as f64 - alpha) * 2.0;
        let c_h = KernelEvaluator::new(&KernelSpec::pure(alpha).unwrap(), k, None).unwrap().envelope();
        let bound = (c_h * size).powi(2) * (2000.0 + u - 1.0f64).powf(1.0 - gap) / (gap - 1.0);
        assert!((long - short).abs() <= bound, "{} > {bound}", (long - short).abs());
        assert!((long - short).abs() > 0.01 * bound);
    }

    #[test]
    fn doubling_l_max_within_bound() {
        let d = DriverSpec::compound_poisson(3.0);
        let f = FunctionalSpec::Power { p: 1.5 };
        for seed in 0..5 {
            let a = sample_jump_series_limit(&f, &d, 0.2, 1, 1.0, 500, RngStream::new(seed, 0)).unwrap();
            let b = sample_jump_series_limit(&f, &d, 0.2, 1, 1.0, 1000, RngStream::new(seed, 0)).unwrap();
            assert_eq!(a.jumps, b.jumps);
            assert!((a.value - b.value).abs() <= a.remainder_bound + 1e-12);
        }
    }

    #[test]
    fn non_summable_series_rejected() {
        let d = DriverSpec::compound_poisson(1.0);
        let r = sample_jump_series_limit(&FunctionalSpec::Power { p: 1.0 }, &d, 0.3, 1, 1.0, 100, RngStream::new(1, 0));
        assert!(matches!(r, Err(Error::Divergent(_))));
        let r = sample_jump_series_limit(&FunctionalSpec::Cos { u: 1.0 }, &d, 0.3, 1, 1.0, 100, RngStream::new(1, 0));
        assert!(r.is_err());
    }
}
