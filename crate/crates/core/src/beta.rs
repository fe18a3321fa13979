//! Beta-model numerics: method-of-moments fitting, the regularized
//! incomplete beta function, its inverse, and the control-chart extreme
//! value test.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Observations appended once when the moment condition fails.
pub const DUMMY_OBSERVATIONS: [f64; 2] = [0.4, 0.6];

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 10_000;

/// Tolerance on |I_z - p| accepted by [`beta_quantile`].
pub const QUANTILE_TOL: f64 = 1e-10;

/// Method-of-moments estimate of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaParams {
    pub delta: f64,
    pub xi: f64,
    pub mean: f64,
    pub variance: f64,
    /// `mean * (1 - mean) / variance - 1`
    pub nu: f64,
    pub sample_size: usize,
    pub dummy_augmented: bool,
}

fn moments(values: &[f64], extra: &[f64]) -> (f64, f64) {
    let n = (values.len() + extra.len()) as f64;
    let all = || values.iter().chain(extra);
    let mean = all().sum::<f64>() / n;
    // constant input: avoid a rounding-noise variance that would blow up the shapes
    let first = values.first().or(extra.first()).copied().unwrap_or(0.0);
    if all().all(|&x| x == first) {
        return (first, 0.0);
    }
    let ss: f64 = all().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

fn feasible(mean: f64, variance: f64) -> bool {
    variance > 0.0 && variance < mean * (1.0 - mean)
}

/// Fits Beta shapes by the method of moments with unbiased variance.
///
/// When `0 < variance < mean (1 - mean)` fails, the dummy observations
/// 0.4 and 0.6 are appended once and the fit is recomputed.
pub fn fit_beta_mom(values: &[f64]) -> Result<BetaParams> {
    if values.len() < 2 {
        return Err(Error::EstimationInfeasible(format!(
            "need at least 2 observations, got {}",
            values.len()
        )));
    }
    let (mut mean, mut variance) = moments(values, &[]);
    let mut dummy_augmented = false;
    if !feasible(mean, variance) {
        (mean, variance) = moments(values, &DUMMY_OBSERVATIONS);
        dummy_augmented = true;
        if !feasible(mean, variance) {
            return Err(Error::EstimationInfeasible(format!(
                "moment condition fails after augmentation (mean {mean}, variance {variance})"
            )));
        }
    }
    let nu = mean * (1.0 - mean) / variance - 1.0;
    Ok(BetaParams {
        delta: mean * nu,
        xi: (1.0 - mean) * nu,
        mean,
        variance,
        nu,
        sample_size: values.len(),
        dummy_augmented,
    })
}

fn check_shapes(delta: f64, xi: f64) -> Result<()> {
    if delta > 0.0 && xi > 0.0 && delta.is_finite() && xi.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Beta shapes must be positive and finite, got ({delta}, {xi})"
        )))
    }
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for I_x(a, b), modified Lentz. `None` if it fails
/// to converge.
fn beta_cf(a: f64, b: f64, x: f64) -> Option<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Some(h);
        }
    }
    None
}

/// Regularized incomplete beta function I_x(delta, xi).
pub fn reg_inc_beta(x: f64, delta: f64, xi: f64) -> Result<f64> {
    check_shapes(delta, xi)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = delta * x.ln() + xi * (-x).ln_1p() - ln_beta(delta, xi);
    let front = ln_front.exp();
    let lower_branch = x < (delta + 1.0) / (delta + xi + 2.0);
    let cf = if lower_branch {
        beta_cf(delta, xi, x)
    } else {
        beta_cf(xi, delta, 1.0 - x)
    };
    let cf = cf.ok_or_else(|| {
        Error::Domain(format!(
            "incomplete beta at x = {x} with shapes ({delta}, {xi}) did not converge"
        ))
    })?;
    let value = if lower_branch {
        front * cf / delta
    } else {
        1.0 - front * cf / xi
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Beta density; `ln_b` is `ln B(delta, xi)`.
fn beta_pdf(x: f64, delta: f64, xi: f64, ln_b: f64) -> f64 {
    ((delta - 1.0) * x.ln() + (xi - 1.0) * (-x).ln_1p() - ln_b).exp()
}

/// Starting point for the quantile iteration.
fn initial_guess(p: f64, a: f64, b: f64) -> f64 {
    if a >= 1.0 && b >= 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        let al = (z * z - 3.0) / 6.0;
        let h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
        let w = z * (al + h).sqrt() / h
            - (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (al + 5.0 / 6.0 - 2.0 / (3.0 * h));
        a / (a + b * (2.0 * w).exp())
    } else {
        let lna = (a / (a + b)).ln();
        let lnb = (b / (a + b)).ln();
        let t = (a * lna).exp() / a;
        let u = (b * lnb).exp() / b;
        let w = t + u;
        if p < t / w {
            (a * w * p).powf(1.0 / a)
        } else {
            1.0 - (b * w * (1.0 - p)).powf(1.0 / b)
        }
    }
}

/// The `p`-quantile z_p(delta, xi) of the Beta distribution.
///
/// Newton steps inside a shrinking bracket; any step that leaves the
/// bracket is replaced by bisection.
pub fn beta_quantile(p: f64, delta: f64, xi: f64) -> Result<f64> {
    check_shapes(delta, xi)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level {p} outside (0, 1)")));
    }
    let ln_b = ln_beta(delta, xi);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = initial_guess(p, delta, xi);
    if !(x > lo && x < hi) {
        x = 0.5;
    }
    let mut best = (f64::INFINITY, x);
    let mut collapsed = false;
    for _ in 0..4000 {
        let f = reg_inc_beta(x, delta, xi)? - p;
        if f.abs() < best.0 {
            best = (f.abs(), x);
        }
        if f.abs() <= 1e-15 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let width = hi - lo;
        if lo.next_up() >= hi {
            collapsed = true;
            break;
        }
        let pdf = beta_pdf(x, delta, xi, ln_b);
        let newton = x - f / pdf;
        x = if newton.is_finite() && newton > lo && newton < hi && newton != x {
            newton
        } else {
            lo + 0.5 * width
        };
        if x == lo || x == hi {
            collapsed = true;
            break;
        }
    }
    // a bracket narrowed to adjacent floats pins the root even when the
    // density there is too steep for the residual to reach the tolerance
    let (err, z) = best;
    if err <= QUANTILE_TOL || collapsed {
        Ok(z)
    } else {
        Err(Error::Domain(format!(
            "quantile {p} of Beta({delta}, {xi}) did not converge (residual {err:e})"
        )))
    }
}

/// Lower and upper chart limits `z_{alpha/2}` and `z_{1 - alpha/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlLimits {
    pub lower: f64,
    pub upper: f64,
}

impl ControlLimits {
    pub fn new(params: &BetaParams, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("significance level {alpha} outside (0, 1)")));
        }
        Ok(Self {
            lower: beta_quantile(alpha / 2.0, params.delta, params.xi)?,
            upper: beta_quantile(1.0 - alpha / 2.0, params.delta, params.xi)?,
        })
    }

    /// Strictly outside the limits; a value on a limit is not extreme.
    pub fn is_outside(&self, x: f64) -> bool {
        x < self.lower || x > self.upper
    }
}

/// Whether `x` lies in the two-sided extreme region of level `alpha`.
pub fn is_extreme(x: f64, params: &BetaParams, alpha: f64) -> Result<bool> {
    Ok(ControlLimits::new(params, alpha)?.is_outside(x))
}
