//! Stable driver: fine-grid Riemann sums by FFT convolution plus a
//! geometric coarse grid for the far past.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{check_f_window, check_kn, DriverSpec, ErrorBudget, IncrementPanel, PathConfig, Provenance};
use crate::error::{Error, Result};
use crate::kernel::{rho0_compute, DiscreteKernelTable, KernelEvaluator, KernelSpec};
use crate::quad::{self, Tolerance};
use crate::stable::{integral_scale, Domain, RngStream, StableLaw};

const TRUNC_TARGET: f64 = 1e-3;
const MAX_REACH: f64 = 1e12;
const COARSE_CELLS: f64 = 600.0;

/// Linear convolution of a signal with fixed kernels via zero-padded FFTs.
struct Convolver {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver").field("len", &self.len).finish()
    }
}

impl Convolver {
    fn new(signal_len: usize, kernels: &[&[f64]]) -> Self {
        let longest = kernels.iter().map(|k| k.len()).max().unwrap_or(1);
        let len = (signal_len + longest).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let spectra = kernels
            .iter()
            .map(|k| {
                let mut buf = vec![Complex64::new(0.0, 0.0); len];
                for (b, &v) in buf.iter_mut().zip(k.iter()) {
                    b.re = v;
                }
                fwd.process(&mut buf);
                buf
            })
            .collect();
        Self { len, fwd, inv, spectra }
    }

    /// `out[t] = Σ_d kernel[d] signal[t - d]` for every kernel.
    fn apply(&self, signal: &[f64]) -> Vec<Vec<f64>> {
        let mut sig = vec![Complex64::new(0.0, 0.0); self.len];
        for (b, &v) in sig.iter_mut().zip(signal) {
            b.re = v;
        }
        self.fwd.process(&mut sig);
        let scale = 1.0 / self.len as f64;
        self.spectra
            .iter()
            .map(|spec| {
                let mut buf: Vec<Complex64> = sig.iter().zip(spec).map(|(a, b)| a * b).collect();
                self.inv.process(&mut buf);
                buf[..signal.len()].iter().map(|c| c.re * scale).collect()
            })
            .collect()
    }
}

/// Geometric cells `[e_j, e_{j+1}]` of past distance beyond the fine grid.
#[derive(Debug, Clone)]
struct CoarseGrid {
    mids: Vec<f64>,
    widths: Vec<f64>,
}

impl CoarseGrid {
    fn new(start: f64, end: f64) -> Self {
        let mut mids = Vec::new();
        let mut widths = Vec::new();
        if end > start {
            let q = (end / start).powf(1.0 / COARSE_CELLS).max(1.05);
            let mut lo = start;
            while lo < end {
                let hi = (lo * q).min(end);
                mids.push(0.5 * (lo + hi));
                widths.push(hi - lo);
                lo = hi;
            }
        }
        Self { mids, widths }
    }
}

#[derive(Debug, Clone)]
struct FChannel {
    /// Per fine-cell averages of `n^{-1/β} g^(k)(x/n)`.
    fine: Vec<f64>,
}

/// Precomputed simulation plan for one `(driver, kernel, k, n, config)`.
///
/// Reused across replications; each call to [`StableEngine::simulate`]
/// draws a fresh driver path from the given stream.
#[derive(Debug, Clone)]
pub struct StableEngine {
    beta: f64,
    rho_l: f64,
    k: usize,
    n: usize,
    kernel: KernelSpec,
    ev: KernelEvaluator,
    substeps: usize,
    past: usize,
    reach: f64,
    n_fine: usize,
    conv: Arc<Convolver>,
    coarse: CoarseGrid,
    /// Row-major `(n - k + 1) × cells` values `ψ(r + mid_j)`.
    coarse_psi: Vec<f64>,
    f_channel: Option<FChannel>,
    hurst: f64,
    scales: Vec<f64>,
    budget: ErrorBudget,
}

impl StableEngine {
    pub fn new(driver: &DriverSpec, kernel: &KernelSpec, k: usize, n: usize, config: &PathConfig) -> Result<Self> {
        Self::build(driver, kernel, k, n, config, false)
    }

    /// Engine that also produces `F` from the same driver path.
    pub fn new_coupled(driver: &DriverSpec, kernel: &KernelSpec, k: usize, n: usize, config: &PathConfig) -> Result<Self> {
        Self::build(driver, kernel, k, n, config, true)
    }

    fn build(
        driver: &DriverSpec,
        kernel: &KernelSpec,
        k: usize,
        n: usize,
        config: &PathConfig,
        coupled: bool,
    ) -> Result<Self> {
        check_kn(k, n)?;
        config.validate()?;
        kernel.validate()?;
        let (beta, rho_l) = match *driver {
            DriverSpec::StableSym { beta, rho_l } => (beta, rho_l),
            DriverSpec::CompoundPoisson { .. } => {
                return Err(Error::InvalidParameter("stable engine needs a stable driver".into()))
            }
        };
        driver.validate()?;
        if coupled {
            check_f_window(kernel, k, beta)?;
            if kernel.is_pure() {
                return Err(Error::Integrability(
                    "g^(k) of a pure power kernel is not in L^beta at infinity".into(),
                ));
            }
        }
        let alpha = kernel.alpha;
        if alpha * beta <= -1.0 {
            return Err(Error::Integrability(format!("alpha * beta = {} must exceed -1", alpha * beta)));
        }
        let nf = n as f64;
        let m = config.substeps;
        let mf = m as f64;
        let ev = KernelEvaluator::new(kernel, k, Some(nf))?;
        let breaks: Vec<f64> = (1..=k).map(|j| j as f64).collect();
        let norm = if kernel.is_pure() {
            rho0_compute(alpha, k, beta, 1.0, 1e-8)?
        } else {
            integral_scale(|x| ev.psi(x), beta, 1.0, Domain::From(0.0), &breaks, 1e-8)?
        };
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Integrability(format!("kernel L^beta norm is {norm}")));
        }

        let tail_rel = |reach: f64| -> Result<f64> { truncation_rel(&ev, kernel, k, beta, reach, norm) };
        let reach = match config.t_trunc {
            Some(t) => t * nf,
            None => default_reach(&ev, kernel, k, beta, norm, config.fine_past as f64)?,
        };
        let past = (config.fine_past as f64).min(reach.floor()).max(0.0) as usize;
        let truncation = tail_rel(reach)?;

        let n_fine = (n + past) * m;
        let fine_psi: Vec<f64> = (0..n_fine).map(|d| ev.psi((d as f64 + 0.5) / mf)).collect();
        let coarse = CoarseGrid::new(past.max(1) as f64, reach);
        let rows = n - k + 1;
        let cells = coarse.mids.len();
        let mut coarse_psi = Vec::with_capacity(rows * cells);
        for r in k..=n {
            coarse_psi.extend(coarse.mids.iter().map(|&w| ev.psi(r as f64 + w)));
        }

        let discretization = discretization_rel(&ev, &fine_psi, m, beta, alpha, k, &coarse, norm)?;
        let budget = ErrorBudget::new(truncation, discretization, config.budget_cap);
        budget.enforce(m, reach / nf)?;

        let hurst = alpha + 1.0 / beta;
        let nh = nf.powf(-hurst);
        let mut prefix = Vec::with_capacity(n_fine + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for v in &fine_psi {
            acc += v.abs().powf(beta) / mf;
            prefix.push(acc);
        }
        let scales = (k..=n)
            .map(|r| {
                let row = &coarse_psi[(r - k) * cells..(r - k + 1) * cells];
                let far: f64 = row.iter().zip(&coarse.widths).map(|(v, w)| v.abs().powf(beta) * w).sum();
                nh * rho_l * (prefix[(r + past) * m] + far).powf(1.0 / beta)
            })
            .collect();

        let f_channel = if coupled {
            let scale = nf.powf(-1.0 / beta);
            let fine = (0..n_fine)
                .map(|d| {
                    let (lo, hi) = (d as f64 / mf, (d + 1) as f64 / mf);
                    if d < 4 * m {
                        scale * mf * nf * (kernel.deriv(k - 1, hi / nf) - kernel.deriv(k - 1, lo / nf))
                    } else {
                        scale * kernel.deriv(k, 0.5 * (lo + hi) / nf)
                    }
                })
                .collect();
            Some(FChannel { fine })
        } else {
            None
        };
        let conv = {
            let mut ks: Vec<&[f64]> = vec![&fine_psi];
            if let Some(f) = &f_channel {
                ks.push(&f.fine);
            }
            Arc::new(Convolver::new(n_fine, &ks))
        };

        Ok(Self {
            beta,
            rho_l,
            k,
            n,
            kernel: *kernel,
            ev,
            substeps: m,
            past,
            reach,
            n_fine,
            conv,
            coarse,
            coarse_psi,
            f_channel,
            hurst,
            scales,
            budget,
        })
    }

    pub fn budget(&self) -> ErrorBudget {
        self.budget
    }

    pub fn t_trunc(&self) -> f64 {
        self.reach / self.n as f64
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Exact SβS scales of the simulated increments.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    fn draw_noise(&self, stream: RngStream) -> (Vec<f64>, Vec<f64>) {
        let unit = StableLaw::symmetric(self.beta, 1.0).expect("validated index");
        let fine_scale = self.rho_l * (self.substeps as f64).powf(-1.0 / self.beta);
        let mut rng = stream.child(0).rng();
        let fine = (0..self.n_fine).map(|_| fine_scale * unit.draw(&mut rng)).collect();
        let mut rng = stream.child(1).rng();
        let coarse = self
            .coarse
            .widths
            .iter()
            .map(|w| self.rho_l * w.powf(1.0 / self.beta) * unit.draw(&mut rng))
            .collect();
        (fine, coarse)
    }

    fn provenance(&self, stream: RngStream) -> Provenance {
        Provenance {
            driver: DriverSpec::stable(self.beta, self.rho_l),
            kernel: self.kernel,
            stream,
            substeps: self.substeps,
            t_trunc: self.t_trunc(),
        }
    }

    fn panel_from(&self, stream: RngStream, conv: &[f64], coarse: &[f64]) -> IncrementPanel {
        let cells = self.coarse.mids.len();
        let m = self.substeps;
        let nh = (self.n as f64).powf(-self.hurst);
        let values = (self.k..=self.n)
            .map(|r| {
                let row = &self.coarse_psi[(r - self.k) * cells..(r - self.k + 1) * cells];
                let far: f64 = row.iter().zip(coarse).map(|(a, b)| a * b).sum();
                nh * (conv[(r + self.past) * m - 1] + far)
            })
            .collect();
        IncrementPanel {
            k: self.k,
            n: self.n,
            values,
            scales: self.scales.clone(),
            hurst: Some(self.hurst),
            budget: self.budget,
            provenance: Some(self.provenance(stream)),
        }
    }

    pub fn simulate(&self, stream: RngStream) -> Result<IncrementPanel> {
        let (fine, coarse) = self.draw_noise(stream);
        let out = self.conv.apply(&fine);
        Ok(self.panel_from(stream, &out[0], &coarse))
    }

    fn f_values(&self, conv: &[f64], coarse: &[f64], u_grid: &[f64]) -> Vec<f64> {
        let nf = self.n as f64;
        let m = self.substeps as f64;
        let scale = nf.powf(-1.0 / self.beta);
        u_grid
            .iter()
            .map(|&u| {
                // cells strictly before unit-lag position y = u n
                let t = ((u * nf + self.past as f64) * m).round() as usize;
                let near = if t == 0 { 0.0 } else { conv[t - 1] };
                let y = t as f64 / m - self.past as f64;
                let far: f64 = self
                    .coarse
                    .mids
                    .iter()
                    .zip(coarse)
                    .map(|(w, l)| scale * self.kernel.deriv(self.k, (y + w) / nf) * l)
                    .sum();
                near + far
            })
            .collect()
    }

    /// `F` on `u_grid` (rounded to the fine grid).
    pub fn f_path(&self, stream: RngStream, u_grid: &[f64]) -> Result<Vec<f64>> {
        if self.f_channel.is_none() {
            return Err(Error::InvalidParameter("engine was built without the F channel".into()));
        }
        let (fine, coarse) = self.draw_noise(stream);
        let out = self.conv.apply(&fine);
        Ok(self.f_values(&out[1], &coarse, u_grid))
    }

    /// Increments and `F_{(i-1)/n}`, `i = k..=n`, from one driver path.
    pub fn simulate_coupled(&self, stream: RngStream) -> Result<(IncrementPanel, Vec<f64>)> {
        if self.f_channel.is_none() {
            return Err(Error::InvalidParameter("engine was built without the F channel".into()));
        }
        let (fine, coarse) = self.draw_noise(stream);
        let out = self.conv.apply(&fine);
        let panel = self.panel_from(stream, &out[0], &coarse);
        let nf = self.n as f64;
        let grid: Vec<f64> = (self.k..=self.n).map(|i| (i - 1) as f64 / nf).collect();
        Ok((panel, self.f_values(&out[1], &coarse, &grid)))
    }

    /// `ψ_n` as used by the engine.
    pub fn psi(&self, x: f64) -> f64 {
        self.ev.psi(x)
    }
}

/// `‖ψ‖_{L^β((X,∞))} / ‖ψ‖_{L^β}`.
fn truncation_rel(ev: &KernelEvaluator, kernel: &KernelSpec, k: usize, beta: f64, reach: f64, norm: f64) -> Result<f64> {
    let kf = k as f64;
    if !kernel.is_pure() {
        let tail = integral_scale(|x| ev.psi(x), beta, 1.0, Domain::From(reach.max(kf)), &[], 1e-10)?;
        return Ok(tail / norm);
    }
    let gap = (kf - kernel.alpha) * beta - 1.0;
    if gap <= 0.0 {
        return Err(Error::Integrability(format!("(k - alpha) beta = {} must exceed 1", gap + 1.0)));
    }
    let c = ev.envelope();
    if reach <= kf {
        return Ok(f64::INFINITY);
    }
    Ok(c * ((reach - kf).powf(-gap) / gap).powf(1.0 / beta) / norm)
}

fn default_reach(ev: &KernelEvaluator, kernel: &KernelSpec, k: usize, beta: f64, norm: f64, past: f64) -> Result<f64> {
    let kf = k as f64;
    let floor = (2.0 * past).max(2.0 * kf);
    if kernel.is_pure() {
        let gap = (kf - kernel.alpha) * beta - 1.0;
        if gap <= 0.0 {
            return Err(Error::Integrability(format!("(k - alpha) beta = {} must exceed 1", gap + 1.0)));
        }
        let c = ev.envelope();
        let x = kf + (c.powf(beta) / (gap * (TRUNC_TARGET * norm).powf(beta))).powf(1.0 / gap);
        return Ok(x.clamp(floor, MAX_REACH));
    }
    let mut x = floor;
    while x < MAX_REACH {
        if truncation_rel(ev, kernel, k, beta, x, norm)? <= TRUNC_TARGET {
            return Ok(x);
        }
        x *= 2.0;
    }
    Ok(MAX_REACH)
}

/// `‖ψ - ψ_step‖_{L^β} / ‖ψ‖_{L^β}` for the last row, with `ψ_step` the
/// piecewise constant kernel actually used.
#[allow(clippy::too_many_arguments)]
fn discretization_rel(
    ev: &KernelEvaluator,
    fine: &[f64],
    m: usize,
    beta: f64,
    alpha: f64,
    k: usize,
    coarse: &CoarseGrid,
    norm: f64,
) -> Result<f64> {
    let mf = m as f64;
    let h = 1.0 / mf;
    let linear = |slope: f64, w: f64| slope.abs().powf(beta) * 2.0 * (0.5 * w).powf(beta + 1.0) / (beta + 1.0);
    let mut total = 0.0;
    for d in 0..fine.len() {
        let near = (0..=k).any(|j| d >= j * m && d < j * m + 4);
        if near {
            let lo = d as f64 * h;
            let kd = fine[d];
            let f = |x: f64| (ev.psi(x) - kd).abs().powf(beta);
            let q = if d % m == 0 {
                quad::left_singular(f, lo, lo + h, (alpha * beta).min(0.0), Tolerance::new(1e-14, 1e-8))?
            } else {
                quad::adaptive(f, lo, lo + h, Tolerance::new(1e-14, 1e-8))?
            };
            total += q.value;
        } else {
            let slope = if d + 1 < fine.len() {
                (fine[d + 1] - fine[d - 1]) * 0.5 * mf
            } else {
                (fine[d] - fine[d - 1]) * mf
            };
            total += linear(slope, h);
        }
    }
    let x0 = k as f64;
    for (&w, &width) in coarse.mids.iter().zip(&coarse.widths) {
        let x = x0 + w;
        let dx = 1e-4 * x;
        let slope = (ev.psi(x + dx) - ev.psi(x - dx)) / (2.0 * dx);
        total += linear(slope, width);
    }
    Ok(total.powf(1.0 / beta) / norm)
}

/// Stationary `m`-dependent sequence `Y_r^{∞,m} = ∫_{r-m}^r h_k(r - s) dL_s`,
/// `r = k..k+len`.
pub fn simulate_ym_sequence(
    beta: f64,
    rho_l: f64,
    alpha: f64,
    k: usize,
    m: usize,
    len: usize,
    config: &PathConfig,
) -> Result<Vec<f64>> {
    DriverSpec::stable(beta, rho_l).validate()?;
    config.validate()?;
    if m == 0 || len == 0 || k == 0 {
        return Err(Error::InvalidParameter("need k, m, len >= 1".into()));
    }
    let table = DiscreteKernelTable::new(alpha, k)?;
    let sub = config.substeps;
    let sf = sub as f64;
    let kernel: Vec<f64> = (0..m * sub).map(|d| table.hk((d as f64 + 0.5) / sf)).collect();
    let cells = (len - 1 + m) * sub;
    let unit = StableLaw::symmetric(beta, 1.0)?;
    let scale = rho_l * sf.powf(-1.0 / beta);
    let mut rng = config.stream.child(0).rng();
    let noise: Vec<f64> = (0..cells).map(|_| scale * unit.draw(&mut rng)).collect();
    let conv = Convolver::new(cells, &[&kernel]);
    let out = conv.apply(&noise);
    Ok((0..len).map(|j| out[0][(j + m) * sub - 1]).collect())
}
