//! Goodness-of-fit and tail statistics used by the experiments.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable::{empirical_char_fn, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub distance: f64,
    /// Asymptotic Kolmogorov p-value.
    pub p_value: f64,
}

/// `Q_KS(λ) = 2 Σ (-1)^{j-1} e^{-2 j² λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("sample contains NaN".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<KsResult> {
    let v = sorted(xs)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let c = cdf(x);
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!("cdf returned {c} at {x}")));
        }
        d = d.max(c - i as f64 / n).max((i + 1) as f64 / n - c);
    }
    Ok(KsResult {
        distance: d,
        p_value: p_value(d, n),
    })
}

pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsResult> {
    let a = sorted(xs)?;
    let b = sorted(ys)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        distance: d,
        p_value: p_value(d, na * nb / (na + nb)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillResult {
    /// Tail index from the largest positive values.
    pub right: f64,
    /// Tail index from the largest negative values.
    pub left: f64,
    pub order: usize,
}

fn hill_one(desc: &[f64], order: usize) -> f64 {
    if desc.len() <= order || desc[order] <= 0.0 {
        return f64::NAN;
    }
    let base = desc[order].ln();
    let h = desc[..order].iter().map(|x| x.ln() - base).sum::<f64>() / order as f64;
    1.0 / h
}

/// Hill estimates on the top `fraction` of the sample, each tail separately.
pub fn hill(xs: &[f64], fraction: f64) -> Result<HillResult> {
    let v = sorted(xs)?;
    let order = ((fraction * v.len() as f64).ceil() as usize).max(2);
    let right: Vec<f64> = v.iter().rev().copied().collect();
    let left: Vec<f64> = v.iter().map(|x| -x).collect();
    Ok(HillResult {
        right: hill_one(&right, order),
        left: hill_one(&left, order),
        order,
    })
}

/// `(R - L)/(R + L)` where `R`, `L` count points beyond the `quantile` of
/// `|x - median|` on each side.
pub fn tail_balance(xs: &[f64], quantile: f64) -> Result<f64> {
    let v = sorted(xs)?;
    let med = v[v.len() / 2];
    let dev = sorted(&v.iter().map(|x| (x - med).abs()).collect::<Vec<_>>())?;
    let cut = dev[((quantile * dev.len() as f64) as usize).min(dev.len() - 1)];
    let right = v.iter().filter(|&&x| x - med > cut).count() as f64;
    let left = v.iter().filter(|&&x| med - x > cut).count() as f64;
    if right + left == 0.0 {
        return Ok(0.0);
    }
    Ok((right - left) / (right + left))
}

/// `sup_θ |φ̂(θ) - φ(θ)|` over `thetas`.
pub fn ecf_distance<F: Fn(f64) -> Complex64>(xs: &[f64], char_fn: F, thetas: &[f64]) -> f64 {
    thetas
        .iter()
        .map(|&t| (empirical_char_fn(xs, t) - char_fn(t)).norm())
        .fold(0.0, f64::max)
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ols {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<Ols> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter("regression needs at least 2 paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("regression abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(Ols {
        slope,
        intercept,
        slope_se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatistic {
    /// Sample standard deviation per `n`.
    Spread,
    /// Mean of `|value|` per `n`.
    MeanAbs,
}

impl RateStatistic {
    pub fn apply(&self, xs: &[f64]) -> f64 {
        match self {
            RateStatistic::Spread => mean_sd(xs).1,
            RateStatistic::MeanAbs => xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval; percentile bootstrap over replications, or `±2 SE`
    /// for single-valued groups.
    pub ci: [f64; 2],
    pub points: Vec<(usize, f64)>,
}

/// OLS slope of `log stat(group)` against `log n`.
pub fn rate_regression(
    ns: &[usize],
    groups: &[Vec<f64>],
    statistic: RateStatistic,
    boots: usize,
    stream: RngStream,
) -> Result<RateFit> {
    if ns.len() < 4 || ns.len() != groups.len() {
        return Err(Error::InvalidParameter("rate regression needs at least 4 n-points".into()));
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let stats: Vec<f64> = groups.iter().map(|g| statistic.apply(g)).collect();
    if stats.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Degenerate("non-positive statistic in rate regression".into()));
    }
    let y: Vec<f64> = stats.iter().map(|s| s.ln()).collect();
    let fit = ols(&x, &y)?;
    let single = groups.iter().all(|g| g.len() == 1);
    let ci = if single || boots == 0 {
        [fit.slope - 2.0 * fit.slope_se, fit.slope + 2.0 * fit.slope_se]
    } else {
        let mut rng = stream.rng();
        let mut slopes = Vec::with_capacity(boots);
        for _ in 0..boots {
            let yb: Vec<f64> = groups
                .iter()
                .map(|g| {
                    let re: Vec<f64> = (0..g.len()).map(|_| g[(rng.next_u64() % g.len() as u64) as usize]).collect();
                    statistic.apply(&re).max(f64::MIN_POSITIVE).ln()
                })
                .collect();
            slopes.push(ols(&x, &yb)?.slope);
        }
        slopes.sort_by(f64::total_cmp);
        let at = |q: f64| slopes[((q * boots as f64) as usize).min(boots - 1)];
        [at(0.025), at(0.975)]
    };
    Ok(RateFit {
        slope: fit.slope,
        intercept: fit.intercept,
        ci,
        points: ns.iter().copied().zip(stats).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn normals(count: usize, sd: f64, stream: RngStream) -> Vec<f64> {
        let mut rng = stream.rng();
        (0..count)
            .map(|_| {
                let (u, v) = (rng.uniform(), rng.uniform());
                sd * (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
            })
            .collect()
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 5e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_uniform_grid_is_exact() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.distance - 0.005).abs() < 1e-12);
    }

    #[test]
    fn ks_normal_sample_is_small() {
        let xs = normals(4000, 1.0, RngStream::new(5, 0));
        let n = Normal::new(0.0, 1.0).unwrap();
        let r = ks_one_sample(&xs, |x| n.cdf(x)).unwrap();
        assert!(r.distance < 0.03, "{r:?}");
        assert!(r.p_value > 0.001);
    }

    #[test]
    fn two_sample_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap().distance, 0.0);
        assert_eq!(ks_two_sample(&a, &[4.0, 5.0]).unwrap().distance, 1.0);
        let r = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]).unwrap();
        assert!((r.distance - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hill_recovers_pareto_index() {
        let mut rng = RngStream::new(9, 0).rng();
        let xs: Vec<f64> = (0..20_000)
            .map(|i| {
                let p = rng.uniform().powf(-1.0 / 1.5);
                if i % 2 == 0 {
                    p
                } else {
                    -p
                }
            })
            .collect();
        let h = hill(&xs, 0.05).unwrap();
        assert!((h.right - 1.5).abs() < 0.15 && (h.left - 1.5).abs() < 0.15, "{h:?}");
    }

    #[test]
    fn tail_balance_signs() {
        let xs: Vec<f64> = (0..1000).map(|i| if i < 950 { (i % 10) as f64 * 0.1 } else { -(i as f64) }).collect();
        assert!(tail_balance(&xs, 0.95).unwrap() < 0.0);
    }

    #[test]
    fn ols_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, -1.0, -3.0, -5.0];
        let f = ols(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && f.slope_se < 1e-12);
    }

    #[test]
    fn spread_regression_recovers_half() {
        let ns = [64usize, 128, 256, 512, 1024];
        let groups: Vec<Vec<f64>> = ns
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                normals(2000, 1.0 / (n as f64).sqrt(), RngStream::new(3, j as u64))
            })
            .collect();
        let fit = rate_regression(&ns, &groups, RateStatistic::Spread, 200, RngStream::new(4, 0)).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.05, "{fit:?}");
        assert!(fit.ci[0] < fit.slope && fit.slope < fit.ci[1]);
    }

    #[test]
    fn regression_needs_four_points() {
        let r = rate_regression(&[1, 2, 3], &[vec![1.0], vec![1.0], vec![1.0]], RateStatistic::MeanAbs, 0, RngStream::new(0, 0));
        assert!(r.is_err());
    }
}
