//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p fracvar --test acceptance -- --nocapture`.
//! Criteria listed in `DOCUMENTED_FAILURES` are reported but do not fail
//! the test binary; every other criterion must pass.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use fracvar::appell::{PhiEvaluator, PhiMethod};
use fracvar::functionals::FunctionalSpec;
use fracvar::harness::{self, ResultRecord, Verdict};
use fracvar::kernel::{dk_apply, hk_eval, k_alpha};
use fracvar::stable::{self, RngStream, StableLaw};

const DOCUMENTED_FAILURES: &[u32] = &[1, 8];

struct Line {
    id: u32,
    pass: bool,
    text: String,
}

impl Line {
    fn print(&self) {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {:>2}: {}", self.id, self.text);
    }
}

fn within(t: Duration, secs: u64) -> bool {
    t.as_secs_f64() < secs as f64
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn analytic_suite() -> Line {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    // h_k vanishes on negatives and equals the k-th difference of x_+^alpha.
    let cases = [(0.3, 1), (0.3, 2), (0.7, 2), (1.0, 2), (1.5, 2), (0.5, 3)];
    let mut zero_ok = true;
    let mut annihilate = 0.0f64;
    let mut worst_slope = 0.0f64;
    let mut worst_case = (0.0, 0);
    for &(a, k) in &cases {
        for i in 1..50 {
            zero_ok &= hk_eval(a, k, -(i as f64) * 0.37) == 0.0;
        }
        for m in 0..k {
            for &s in &[0.5, 3.2, 17.0, 250.0] {
                let v = dk_apply(|x: f64| x.powi(m as i32), k, s);
                annihilate = annihilate.max(v.abs() / (1.0 + s.powi(m as i32)));
            }
        }
        if k_alpha(a, k) != 0.0 {
            let xs: Vec<f64> = (0..=40).map(|i| 10f64.powf(1.0 + 2.0 * i as f64 / 40.0)).collect();
            let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let ly: Vec<f64> = xs.iter().map(|&x| hk_eval(a, k, x).abs().ln()).collect();
            let dev = (slope(&lx, &ly) - (a - k as f64)).abs();
            if dev > worst_slope {
                worst_slope = dev;
                worst_case = (a, k);
            }
        }
    }
    ok &= zero_ok && annihilate < 1e-9 && worst_slope < 0.02;
    notes.push(format!(
        "h_k: zero-on-negatives {zero_ok}, annihilation {annihilate:.1e}, worst slope dev {worst_slope:.4} at (alpha, k) = {worst_case:?} over x in [10, 1e3] (tol 0.02)"
    ));

    // Closed forms against direct quadrature.
    let mut phi_err = 0.0f64;
    for f in [FunctionalSpec::Sin { u: 1.0 }, FunctionalSpec::Cos { u: 1.0 }] {
        let cf = PhiEvaluator::new(f.clone(), 1.5, PhiMethod::ClosedForm).expect("closed form");
        let qd = PhiEvaluator::new(f, 1.5, PhiMethod::Quadrature { tol: 1e-9 }).expect("quadrature");
        for &rho in &[0.3, 1.0, 2.0] {
            for &x in &[-3.0, -0.7, 0.4, 1.0, 2.5] {
                let d = (cf.phi(rho, x).unwrap() - qd.phi(rho, x).unwrap()).abs();
                phi_err = phi_err.max(d);
            }
        }
    }
    ok &= phi_err < 1e-6;
    notes.push(format!("Phi closed vs quadrature {phi_err:.1e} (tol 1e-6)"));

    let tau1 = stable::tau_gamma(1.0).expect("tau");
    let tau_ok = tau1 == PI / 2.0;
    ok &= tau_ok;
    notes.push(format!("tau_1 = {tau1:.6} vs pi/2 = {:.6}", PI / 2.0));

    let mut cauchy = 0.0f64;
    for &x in &[-10.0, -2.0, -0.5, 0.0, 0.3, 1.0, 4.0, 25.0] {
        let d = stable::density(1.0, x, 1e-12).unwrap() - 1.0 / (PI * (1.0 + x * x));
        let c = stable::cdf(1.0, x, 1e-12).unwrap() - (0.5 + x.atan() / PI);
        cauchy = cauchy.max(d.abs()).max(c.abs());
    }
    ok &= cauchy < 1e-10;
    notes.push(format!("Cauchy {cauchy:.1e} (tol 1e-10)"));

    let t = t0.elapsed();
    ok &= within(t, 5);
    Line { id: 1, pass: ok, text: format!("{}; {:.1}s (< 5s)", notes.join("; "), t.as_secs_f64()) }
}

fn sampler_fidelity() -> Line {
    let t0 = Instant::now();
    let law = StableLaw::symmetric(1.5, 1.0).expect("law");
    let xs = law.sample(100_000, RngStream::new(20_240_611, 99));
    let sup = (1..=20)
        .map(|i| {
            let th = 0.1 * i as f64;
            (stable::empirical_char_fn(&xs, th) - (-th.powf(1.5)).exp()).norm()
        })
        .fold(0.0, f64::max);
    let t = t0.elapsed();
    Line {
        id: 2,
        pass: sup < 0.02 && within(t, 30),
        text: format!("sup ECF error {sup:.4} (tol 0.02); {:.1}s (< 30s)", t.as_secs_f64()),
    }
}

fn describe(r: &ResultRecord) -> String {
    r.checks
        .iter()
        .map(|c| {
            let band = match (c.lower, c.upper) {
                (Some(l), Some(u)) => format!(" in [{l}, {u}]"),
                (None, Some(u)) => format!(" < {u}"),
                (Some(l), None) => format!(" > {l}"),
                _ => String::new(),
            };
            format!("{}={:.4}{band} {:?}", c.name, c.value, c.verdict)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn run_preset(name: &str) -> (ResultRecord, Duration) {
    let cfg = harness::preset(name).expect("known preset");
    let t0 = Instant::now();
    let r = harness::run(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    (r, t0.elapsed())
}

fn preset_line(id: u32, names: &[&str], budget: u64, records: &mut Vec<ResultRecord>) -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut total = Duration::ZERO;
    for name in names {
        let (r, t) = run_preset(name);
        total += t;
        pass &= r.verdict == Verdict::Pass;
        parts.push(format!("{name}: {:?} [{}]", r.verdict, describe(&r)));
        records.push(r);
    }
    pass &= within(total, budget);
    Line { id, pass, text: format!("{}; {:.1}s (< {budget}s)", parts.join("; "), total.as_secs_f64()) }
}

#[test]
fn acceptance() {
    let mut lines = vec![analytic_suite()];
    lines[0].print();
    lines.push(sampler_fidelity());
    lines[1].print();

    let mut records = Vec::new();
    let matrix: [(u32, &[&str], u64); 7] = [
        (3, &["lln-ii"], 120),
        (4, &["lln-iii"], 60),
        (5, &["lln-i"], 180),
        (6, &["clt"], 600),
        (7, &["rank1"], 600),
        (8, &["rank2"], 900),
        (9, &["rate-deterministic", "rate-clt"], 600),
    ];
    for (id, names, budget) in matrix {
        let line = preset_line(id, names, budget, &mut records);
        line.print();
        lines.push(line);
    }

    let (interior, t) = run_preset("rank2-interior");
    println!(
        "[INFO] rank2-interior (alpha=0.9): {:?} [{}]; {:.1}s",
        interior.verdict,
        describe(&interior),
        t.as_secs_f64()
    );
    records.push(interior);

    let dir = tempfile::tempdir().expect("tempdir");
    let (csv, summary) = harness::write_outputs(&records, dir.path()).expect("write outputs");
    let original = std::fs::read(&csv).expect("read csv");
    let rerun = harness::rerun_from_summary(&summary).expect("rerun");
    let identical = harness::results_csv(&rerun).into_bytes() == original;
    let line = Line {
        id: 10,
        pass: identical,
        text: format!("{} experiments rerun from manifests; results.csv identical: {identical}", rerun.len()),
    };
    line.print();
    lines.push(line);

    let passed = lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} criteria pass", lines.len());
    let unexpected: Vec<u32> =
        lines.iter().filter(|l| !l.pass && !DOCUMENTED_FAILURES.contains(&l.id)).map(|l| l.id).collect();
    assert!(unexpected.is_empty(), "undocumented failures: {unexpected:?}");
}
