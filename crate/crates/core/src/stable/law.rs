use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::rng::{RngStream, StreamRng};
use crate::error::{Error, Result};

/// Switch threshold for the index-one special cases.
pub const UNIT_INDEX_EPS: f64 = 1e-8;

/// A stable law in the 1-parameterization: index, scale, skewness, location.
///
/// For `skew == 0` and `location == 0` the characteristic function is
/// `exp(-|scale * theta|^index)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableLaw {
    pub index: f64,
    pub scale: f64,
    pub skew: f64,
    pub location: f64,
}

impl StableLaw {
    pub fn new(index: f64, scale: f64, skew: f64, location: f64) -> Result<Self> {
        if !(index > 0.0 && index < 2.0) {
            return Err(Error::InvalidParameter(format!("stable index {index} not in (0,2)")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("stable scale {scale} must be > 0")));
        }
        if !(-1.0..=1.0).contains(&skew) {
            return Err(Error::InvalidParameter(format!("skewness {skew} not in [-1,1]")));
        }
        if !location.is_finite() {
            return Err(Error::InvalidParameter("location must be finite".into()));
        }
        Ok(Self {
            index,
            scale,
            skew,
            location,
        })
    }

    /// Symmetric law SβS(scale).
    pub fn symmetric(index: f64, scale: f64) -> Result<Self> {
        Self::new(index, scale, 0.0, 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.skew == 0.0 && self.location == 0.0
    }

    fn unit_index(&self) -> bool {
        (self.index - 1.0).abs() < UNIT_INDEX_EPS
    }

    pub fn char_fn(&self, theta: f64) -> Complex64 {
        if theta == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let a = self.index;
        let st = (self.scale * theta).abs().powf(a);
        if self.is_symmetric() {
            return Complex64::new((-st).exp(), 0.0);
        }
        let sign = theta.signum();
        let imag = if self.unit_index() {
            -st * self.skew * (2.0 / PI) * sign * theta.abs().ln()
        } else {
            st * self.skew * sign * (PI * a / 2.0).tan()
        };
        Complex64::new(-st, imag + self.location * theta).exp()
    }

    /// One draw by the Chambers–Mallows–Stuck transformation.
    #[inline]
    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        let v = PI * (rng.uniform() - 0.5);
        let w = rng.exponential();
        let a = self.index;
        if self.skew == 0.0 && !self.unit_index() {
            let x = (a * v).sin() / v.cos().powf(1.0 / a)
                * ((v * (1.0 - a)).cos() / w).powf((1.0 - a) / a);
            return self.scale * x + self.location;
        }
        if self.unit_index() {
            let b = self.skew;
            let x = (2.0 / PI)
                * ((FRAC_PI_2 + b * v) * v.tan() - b * ((FRAC_PI_2 * w * v.cos()) / (FRAC_PI_2 + b * v)).ln());
            return self.scale * x + (2.0 / PI) * b * self.scale * self.scale.ln() + self.location;
        }
        let t = self.skew * (PI * a / 2.0).tan();
        let b_shift = t.atan() / a;
        let s_fac = (1.0 + t * t).powf(1.0 / (2.0 * a));
        let x = s_fac * (a * (v + b_shift)).sin() / v.cos().powf(1.0 / a)
            * ((v - a * (v + b_shift)).cos() / w).powf((1.0 - a) / a);
        self.scale * x + self.location
    }

    pub fn sample(&self, count: usize, stream: RngStream) -> Vec<f64> {
        let mut rng = stream.rng();
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }
}

/// Characteristic function of a stable law.
pub fn char_fn(law: &StableLaw, theta: f64) -> Complex64 {
    law.char_fn(theta)
}

/// `count` i.i.d. draws from `law`, determined by `(law, count, stream)`.
pub fn sample(law: &StableLaw, count: usize, stream: RngStream) -> Vec<f64> {
    law.sample(count, stream)
}

/// Empirical characteristic function at `theta`.
pub fn empirical_char_fn(xs: &[f64], theta: f64) -> Complex64 {
    let n = xs.len() as f64;
    let (re, im) = xs.iter().fold((0.0, 0.0), |(re, im), &x| {
        let (s, c) = (theta * x).sin_cos();
        (re + c, im + s)
    });
    Complex64::new(re / n, im / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_fn_examples() {
        let l = StableLaw::symmetric(1.5, 1.0).unwrap();
        assert_eq!(l.char_fn(0.0), Complex64::new(1.0, 0.0));
        let l = StableLaw::symmetric(1.5, 2.0).unwrap();
        assert!((l.char_fn(1.0).re - (-(2f64.powf(1.5))).exp()).abs() < 1e-15);
        let l = StableLaw::symmetric(1.0, 1.0).unwrap();
        assert!((l.char_fn(3.0).re - (-3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(StableLaw::new(2.0, 1.0, 0.0, 0.0).is_err());
        assert!(StableLaw::new(1.5, 0.0, 0.0, 0.0).is_err());
        assert!(StableLaw::new(1.5, 1.0, 1.1, 0.0).is_err());
    }

    #[test]
    fn empty_sample() {
        let l = StableLaw::symmetric(1.3, 1.0).unwrap();
        assert!(l.sample(0, RngStream::new(1, 1)).is_empty());
    }

    #[test]
    fn cauchy_sampler_cdf_at_one() {
        let l = StableLaw::symmetric(1.0, 1.0).unwrap();
        let xs = l.sample(100_000, RngStream::new(3, 0));
        let frac = xs.iter().filter(|&&x| x <= 1.0).count() as f64 / xs.len() as f64;
        // 5 standard errors of a binomial proportion at p = 3/4
        assert!((frac - 0.75).abs() < 5.0 * (0.75f64 * 0.25 / 1e5).sqrt(), "{frac}");
    }

    #[test]
    fn skewed_sampler_matches_char_fn() {
        for &(a, b) in &[(1.5, -1.0), (1.2, 0.5), (0.7, 0.8), (1.0, 0.6)] {
            let l = StableLaw::new(a, 1.3, b, 0.4).unwrap();
            let xs = l.sample(100_000, RngStream::new(9, 2));
            for i in 1..=12 {
                let th = 0.25 * i as f64;
                let d = (empirical_char_fn(&xs, th) - l.char_fn(th)).norm();
                assert!(d < 3.0 / (xs.len() as f64).sqrt() * 2.0, "a={a} b={b} th={th} d={d}");
            }
        }
    }
}
