use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fracvar::appell::RankVerdict;
use fracvar::functionals::{classify_regime, structural_rank, vstat, Case, FunctionalSpec, WeakTag};
use fracvar::harness::{self, ExperimentConfig, ResultRecord, Verdict};
use fracvar::kernel::KernelSpec;
use fracvar::limitlaws::{
    eta_estimate, lln_constant, predict_limit, CConvention, EtaConfig, PredictInputs, ETA_SCHEDULE,
};
use fracvar::pathsim::{simulate_increments, DriverSpec, IncrementPanel, PathConfig};
use fracvar::stable::RngStream;

#[derive(Parser)]
#[command(name = "fracvar", version, about = "Power variations of Lévy-driven moving averages")]
struct Cli {
    /// JSON experiment configuration (a single object or an array).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Convention::Boxed)]
    c_convention: Convention,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Boxed,
    ExponentBeta,
    HalfTail,
}

impl From<Convention> for CConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Boxed => CConvention::Boxed,
            Convention::ExponentBeta => CConvention::ExponentBeta,
            Convention::HalfTail => CConvention::HalfTail,
        }
    }
}

#[derive(Args, Clone)]
struct Model {
    /// Kernel exponent `α`.
    #[arg(long)]
    alpha: f64,
    /// Stable index of the driver; omit for a compound Poisson driver.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    rho_l: f64,
    /// Jump rate of the compound Poisson driver.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// `power:p`, `negpower:p`, `cos:u`, `sin:u`, `indicator:u` or `log`.
    #[arg(long, default_value = "cos:1")]
    function: String,
}

impl Model {
    fn driver(&self) -> DriverSpec {
        match self.beta {
            Some(b) => DriverSpec::stable(b, self.rho_l),
            None => DriverSpec::compound_poisson(self.rate),
        }
    }

    fn function(&self) -> Result<FunctionalSpec> {
        parse_function(&self.function)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate `Δ_{i,k}^n X` and write it as CSV with a JSON manifest.
    Simulate {
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        substeps: usize,
    },
    /// Evaluate `V(f;k)^n` on an increment CSV.
    Vstat {
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        case: CaseArg,
    },
    /// Print the regime classification as JSON.
    Regime {
        #[command(flatten)]
        model: Model,
    },
    /// Print the predicted limit law and rate as JSON.
    LimitParams {
        #[command(flatten)]
        model: Model,
    },
    /// Run experiments from `--config` or named presets.
    Experiment {
        /// Preset names; see `--list`.
        #[arg(long)]
        preset: Vec<String>,
        #[arg(long)]
        list: bool,
    },
    /// Summarize a written `summary.json`; `--rerun` checks reproducibility.
    Report {
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        rerun: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    I,
    Ii,
    Iii,
}

fn parse_function(s: &str) -> Result<FunctionalSpec> {
    let (name, arg) = match s.split_once(':') {
        Some((a, b)) => (a, Some(b.parse::<f64>().with_context(|| format!("bad parameter in '{s}'"))?)),
        None => (s, None),
    };
    let need = || arg.ok_or_else(|| anyhow!("'{name}' needs a parameter, e.g. {name}:1"));
    let f = match name {
        "power" => FunctionalSpec::Power { p: need()? },
        "negpower" => FunctionalSpec::NegPower { p: need()? },
        "cos" => FunctionalSpec::Cos { u: need()? },
        "sin" => FunctionalSpec::Sin { u: need()? },
        "indicator" => FunctionalSpec::Indicator { u: need()? },
        "log" => FunctionalSpec::Log,
        _ => bail!("unknown function '{name}'"),
    };
    f.validate()?;
    Ok(f)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_configs(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .map(serde_json::from_value)
            .collect::<std::result::Result<_, _>>()?,
        other => vec![serde_json::from_value(other)?],
    })
}

fn print_records(records: &[ResultRecord]) {
    for r in records {
        println!("{:<20} {:?}", r.experiment, r.verdict);
        for c in &r.checks {
            let bounds = match (c.lower, c.upper) {
                (Some(l), Some(u)) => format!("in [{l}, {u}]"),
                (None, Some(u)) => format!("<= {u}"),
                (Some(l), None) => format!(">= {l}"),
                _ => String::new(),
            };
            println!("    {:<45} {:>12.6} {:<16} {:?}", c.name, c.value, bounds, c.verdict);
        }
        for w in &r.warnings {
            println!("    warning: {w}");
        }
    }
}

fn verdict_code(v: Verdict) -> ExitCode {
    ExitCode::from(v.exit_code() as u8)
}

fn limit_params(model: &Model, conv: CConvention, seed: u64) -> Result<serde_json::Value> {
    let f = model.function()?;
    let beta = model.beta.ok_or_else(|| anyhow!("limit parameters need a stable driver (--beta)"))?;
    let kernel = KernelSpec::pure(model.alpha)?;
    let report = classify_regime(model.alpha, beta, model.k, &f, Some(structural_rank(&f)))?;
    let mut out = serde_json::json!({ "regime": report });
    if report.has_case(Case::II) {
        out["lln"] = serde_json::to_value(lln_constant(&f, model.alpha, beta, model.k, model.rho_l)?)?;
    }
    let eta2 = if report.weak == WeakTag::Clt {
        let cfg = EtaConfig {
            stream: RngStream::new(seed, 2),
            ..EtaConfig::default()
        };
        let e = eta_estimate(&f, model.alpha, beta, model.rho_l, model.k, &ETA_SCHEDULE, &cfg)?;
        out["eta"] = serde_json::to_value(&e)?;
        Some(e.eta2)
    } else {
        None
    };
    let inputs = PredictInputs {
        f,
        kernel,
        rho_l: model.rho_l,
        eta2,
        convention: conv,
        tol: 1e-9,
    };
    match predict_limit(&report, &inputs) {
        Ok(p) => out["prediction"] = serde_json::to_value(p)?,
        Err(e) => out["prediction_error"] = serde_json::Value::String(e.to_string()),
    }
    if report.rank == RankVerdict::Undetermined {
        out["note"] = "Appell rank undetermined structurally".into();
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Simulate { model, n, substeps } => {
            let cfg = PathConfig {
                substeps,
                stream: RngStream::new(seed, 0),
                ..PathConfig::default()
            };
            let kernel = KernelSpec::pure(model.alpha)?;
            let panel = simulate_increments(&model.driver(), &kernel, model.k, n, &cfg)?;
            fs::create_dir_all(&cli.out_dir)?;
            let csv = cli.out_dir.join("increments.csv");
            let manifest = panel.write_csv(&csv)?;
            eprintln!("wrote {} and {} ({} increments)", csv.display(), manifest.display(), panel.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Vstat { model, input, n, case } => {
            let f = model.function()?;
            let panel = IncrementPanel::read_csv(&input, model.k, n)?;
            let (a, b) = match case {
                CaseArg::I => (0.0, model.alpha),
                CaseArg::Ii => {
                    let beta = model.beta.ok_or_else(|| anyhow!("case II needs --beta"))?;
                    (1.0, model.alpha + 1.0 / beta)
                }
                CaseArg::Iii => (1.0, model.k as f64),
            };
            print_json(&vstat(&panel, &f, a, b))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Regime { model } => {
            let f = model.function()?;
            let report = classify_regime(model.alpha, model.beta.unwrap_or(0.0), model.k, &f, None)?;
            print_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::LimitParams { model } => {
            print_json(&limit_params(&model, cli.c_convention.into(), seed)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Experiment { preset, list } => {
            if list {
                for p in harness::PRESETS {
                    println!("{p}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let mut configs = match &cli.config {
                Some(path) => load_configs(path)?,
                None => Vec::new(),
            };
            for name in &preset {
                configs.push(harness::preset(name).ok_or_else(|| anyhow!("unknown preset '{name}'"))?);
            }
            if configs.is_empty() {
                bail!("give --config or --preset");
            }
            for c in &mut configs {
                if let Some(s) = cli.seed {
                    c.seed = s;
                }
                c.c_convention = cli.c_convention.into();
            }
            let records = configs
                .iter()
                .map(|c| harness::run(c).with_context(|| format!("experiment '{}'", c.name)))
                .collect::<Result<Vec<_>>>()?;
            let (csv, json) = harness::write_outputs(&records, &cli.out_dir)?;
            print_records(&records);
            eprintln!("wrote {} and {}", csv.display(), json.display());
            Ok(verdict_code(harness::summarize(&records).verdict))
        }
        Command::Report { summary, rerun } => {
            let path = summary.unwrap_or_else(|| cli.out_dir.join("summary.json"));
            let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
            let verdict: Verdict = serde_json::from_value(value["verdict"].clone())?;
            if let Some(records) = value["records"].as_array() {
                for r in records {
                    println!("{:<20} {}", r["experiment"].as_str().unwrap_or("?"), r["verdict"]);
                }
            }
            if !rerun {
                return Ok(verdict_code(verdict));
            }
            let again = harness::rerun_from_summary(&path)?;
            let csv_path = path.with_file_name("results.csv");
            let written = fs::read_to_string(&csv_path).with_context(|| format!("reading {}", csv_path.display()))?;
            let identical = harness::results_csv(&again) == written;
            println!("rerun from manifests: {}", if identical { "identical" } else { "DIFFERENT" });
            Ok(if identical { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
