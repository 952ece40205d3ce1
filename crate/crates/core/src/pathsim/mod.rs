//! Simulation of the driver, the increment panels `Δ_{i,k}^n X`, the
//! derivative process `F`, the truncated sequence `Y^{∞,m}` and the
//! jump-series limit.
//!
//! Stable paths are simulated in unit-lag coordinates: by self-similarity
//! `Δ_{i,k}^n X = n^{-H} ∫ ψ_n(i - v) dL_v` with `ψ_n = D^k g_n` and
//! `g_n(x) = n^α g(x/n)`.

mod engine;
mod jumps;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::stable::{RngStream, StreamRng};

pub use engine::{simulate_ym_sequence, StableEngine};
pub use jumps::{sample_jump_series_limit, CompoundPoissonEngine, JumpSeriesDraw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum JumpLaw {
    /// `±size` with probability 1/2 each.
    TwoPoint { size: f64 },
    Laplace { scale: f64 },
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

impl Default for JumpLaw {
    fn default() -> Self {
        JumpLaw::TwoPoint { size: 1.0 }
    }
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            JumpLaw::TwoPoint { size } => size,
            JumpLaw::Laplace { scale } => scale,
            JumpLaw::Uniform { half_width } => half_width,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("jump law parameter must be positive, got {v}")))
        }
    }

    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => {
                if rng.uniform() < 0.5 {
                    -size
                } else {
                    size
                }
            }
            JumpLaw::Laplace { scale } => {
                let e = scale * rng.exponential();
                if rng.uniform() < 0.5 {
                    -e
                } else {
                    e
                }
            }
            JumpLaw::Uniform { half_width } => half_width * (2.0 * rng.uniform() - 1.0),
        }
    }

    pub fn abs_mean(&self) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => size,
            JumpLaw::Laplace { scale } => scale,
            JumpLaw::Uniform { half_width } => half_width / 2.0,
        }
    }

    /// `E|J|^p`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match *self {
            JumpLaw::TwoPoint { size } => size.powf(p),
            JumpLaw::Laplace { scale } => scale.powf(p) * statrs::function::gamma::gamma(1.0 + p),
            JumpLaw::Uniform { half_width } => half_width.powf(p) / (1.0 + p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "driver", rename_all = "snake_case")]
pub enum DriverSpec {
    StableSym { beta: f64, rho_l: f64 },
    CompoundPoisson { rate: f64, jumps: JumpLaw },
}

impl DriverSpec {
    pub fn stable(beta: f64, rho_l: f64) -> Self {
        DriverSpec::StableSym { beta, rho_l }
    }

    pub fn compound_poisson(rate: f64) -> Self {
        DriverSpec::CompoundPoisson {
            rate,
            jumps: JumpLaw::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DriverSpec::StableSym { beta, rho_l } => {
                if !(beta > 0.0 && beta < 2.0) {
                    return Err(Error::InvalidParameter(format!("beta must lie in (0,2), got {beta}")));
                }
                if !(rho_l > 0.0 && rho_l.is_finite()) {
                    return Err(Error::InvalidParameter(format!("rho_L must be positive, got {rho_l}")));
                }
                Ok(())
            }
            DriverSpec::CompoundPoisson { rate, jumps } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidParameter(format!("rate must be positive, got {rate}")));
                }
                jumps.validate()
            }
        }
    }

    /// Blumenthal–Getoor index; 0 for compound Poisson.
    pub fn bg_index(&self) -> f64 {
        match *self {
            DriverSpec::StableSym { beta, .. } => beta,
            DriverSpec::CompoundPoisson { .. } => 0.0,
        }
    }
}

/// A jump `(time, size)` of a compound Poisson driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Driver sub-steps per observation step.
    pub substeps: usize,
    /// Simulation window `[-t_trunc, 1]`; derived from the kernel tail when unset.
    pub t_trunc: Option<f64>,
    /// Cap on the combined relative error budget.
    pub budget_cap: f64,
    /// Past observation steps covered by the fine grid.
    pub fine_past: usize,
    pub stream: RngStream,
    /// Replaces the sampled compound Poisson jumps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced_jumps: Option<Vec<Jump>>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            substeps: 32,
            t_trunc: None,
            budget_cap: 0.05,
            fine_past: 16,
            stream: RngStream::new(0, 0),
            forced_jumps: None,
        }
    }
}

impl PathConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            stream: RngStream::new(seed, 0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        if let Some(t) = self.t_trunc {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("t_trunc must be positive, got {t}")));
            }
        }
        if !(self.budget_cap > 0.0) {
            return Err(Error::InvalidParameter("budget cap must be positive".into()));
        }
        Ok(())
    }
}

/// Relative error bounds (in units of the increment scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub truncation: f64,
    pub discretization: f64,
    pub total: f64,
    pub cap: f64,
}

impl ErrorBudget {
    pub fn new(truncation: f64, discretization: f64, cap: f64) -> Self {
        Self {
            truncation,
            discretization,
            total: truncation + discretization,
            cap,
        }
    }

    pub fn exact() -> Self {
        Self::new(0.0, 0.0, f64::INFINITY)
    }

    pub(crate) fn enforce(&self, substeps: usize, t_trunc: f64) -> Result<()> {
        if self.total > self.cap {
            return Err(Error::Budget {
                budget: self.total,
                cap: self.cap,
                suggested_substeps: if self.discretization > 0.5 * self.cap { 2 * substeps } else { substeps },
                suggested_t_trunc: if self.truncation > 0.5 * self.cap { 2.0 * t_trunc } else { t_trunc },
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub driver: DriverSpec,
    pub kernel: KernelSpec,
    pub stream: RngStream,
    pub substeps: usize,
    pub t_trunc: f64,
}

/// `Δ_{i,k}^n X` for `i = k..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementPanel {
    pub k: usize,
    pub n: usize,
    pub values: Vec<f64>,
    /// Exact SβS scale of each simulated value (stable drivers only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scales: Vec<f64>,
    /// `H = α + 1/β`, when defined.
    pub hurst: Option<f64>,
    pub budget: ErrorBudget,
    pub provenance: Option<Provenance>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    k: usize,
    n: usize,
    len: usize,
    hurst: Option<f64>,
    budget: &'a ErrorBudget,
    #[serde(flatten)]
    provenance: Option<&'a Provenance>,
}

impl IncrementPanel {
    pub fn from_values(k: usize, n: usize, values: Vec<f64>) -> Self {
        Self {
            k,
            n,
            values,
            scales: Vec::new(),
            hurst: None,
            budget: ErrorBudget::exact(),
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observation index of `values[j]`.
    pub fn index(&self, j: usize) -> usize {
        self.k + j
    }

    /// Values rescaled by `n^H`.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        let h = self.hurst?;
        let s = (self.n as f64).powf(h);
        Some(self.values.iter().map(|v| v * s).collect())
    }

    /// Writes `i,value` rows to `path` and the manifest next to it.
    pub fn write_csv(&self, path: &Path) -> Result<PathBuf> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "i,value")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{:.17e}", self.index(j), v)?;
        }
        out.flush()?;
        let sidecar = path.with_extension("json");
        let manifest = Manifest {
            k: self.k,
            n: self.n,
            len: self.len(),
            hurst: self.hurst,
            budget: &self.budget,
            provenance: self.provenance.as_ref(),
        };
        fs::write(&sidecar, serde_json::to_string_pretty(&manifest)?)?;
        Ok(sidecar)
    }

    pub fn read_csv(path: &Path, k: usize, n: usize) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut values = Vec::new();
        for line in text.lines().skip(1) {
            let v = line
                .split(',')
                .nth(1)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Io(format!("malformed panel row: {line}")))?;
            values.push(v);
        }
        Ok(Self::from_values(k, n, values))
    }
}

fn check_kn(k: usize, n: usize) -> Result<()> {
    if k == 0 || n < k {
        return Err(Error::InvalidParameter(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    Ok(())
}

/// `Δ_{i,k}^n X`, `i = k..=n`.
pub fn simulate_increments(
    driver: &DriverSpec,
    kernel: &KernelSpec,
    k: usize,
    n: usize,
    config: &PathConfig,
) -> Result<IncrementPanel> {
    driver.validate()?;
    match *driver {
        DriverSpec::StableSym { .. } => StableEngine::new(driver, kernel, k, n, config)?.simulate(config.stream),
        DriverSpec::CompoundPoisson { .. } => {
            CompoundPoissonEngine::new(driver, kernel, k, n, config)?.simulate(config.stream)
        }
    }
}

/// Increments of the linear fractional stable motion.
pub fn simulate_lfsm_increments(
    beta: f64,
    rho_l: f64,
    alpha: f64,
    k: usize,
    n: usize,
    config: &PathConfig,
) -> Result<IncrementPanel> {
    simulate_increments(&DriverSpec::stable(beta, rho_l), &KernelSpec::pure(alpha)?, k, n, config)
}

fn check_f_window(kernel: &KernelSpec, k: usize, beta: f64) -> Result<()> {
    let gap = k as f64 - kernel.alpha;
    if !(gap > 0.0 && beta.max(1.0) * gap < 1.0) {
        return Err(Error::Window(format!(
            "F needs (1 ∨ beta)(k - alpha) < 1, got beta={beta}, k={k}, alpha={}",
            kernel.alpha
        )));
    }
    Ok(())
}

/// `F_u = ∫ g^(k)(u - s) dL_s` on `u_grid ⊂ [0, 1]`, with resolution `1/n`.
pub fn simulate_f_path(
    driver: &DriverSpec,
    kernel: &KernelSpec,
    k: usize,
    n: usize,
    u_grid: &[f64],
    config: &PathConfig,
) -> Result<Vec<f64>> {
    driver.validate()?;
    check_f_window(kernel, k, driver.bg_index())?;
    if u_grid.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(Error::InvalidParameter("u grid must lie in [0,1]".into()));
    }
    match *driver {
        DriverSpec::StableSym { .. } => {
            StableEngine::new_coupled(driver, kernel, k, n, config)?.f_path(config.stream, u_grid)
        }
        DriverSpec::CompoundPoisson { .. } => {
            CompoundPoissonEngine::new(driver, kernel, k, n, config)?.f_path(config.stream, u_grid)
        }
    }
}
