//! The self-similar Burgers profile family U_i: exact evaluation from the
//! implicit equation X = -U - U^(2i+1), derivatives to machine precision via
//! Taylor-mode recursion, asymptotics, rescaling, and bound certificates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::MAX_DERIVATIVE_ORDER;

pub const MAX_FAMILY_INDEX: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("family index {0} unsupported (1..={MAX_FAMILY_INDEX})")]
    UnsupportedFamily(usize),
    #[error("root bracketing failed at X = {0}")]
    NoConvergence(f64),
    #[error("rescaling parameter nu must be positive, got {0}")]
    NonPositiveNu(f64),
    #[error("asymptotic expansion needs |X| >= 10, got {0}")]
    XTooSmall(f64),
    #[error("derivative order {0} out of range (max {MAX_DERIVATIVE_ORDER})")]
    OrderOutOfRange(usize),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("parameter l = {0} outside (0, 0.2)")]
    BadSlopeParameter(f64),
}

/// A point on a profile curve: X, U_i(X), and derivatives of orders 1..9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub x: f64,
    pub u: f64,
    /// derivatives[k] = U_i^(k+1)(X) for k = 0..8
    pub derivatives: Vec<f64>,
    pub family_index: usize,
}

fn check_family(i: usize) -> Result<(), ProfileError> {
    if i == 0 || i > MAX_FAMILY_INDEX {
        Err(ProfileError::UnsupportedFamily(i))
    } else {
        Ok(())
    }
}

/// Root of X = -U - U^(2i+1) for X >= 0 (so U <= 0), by bisection-safeguarded
/// Newton on g(U) = U + U^(2i+1) + X, strictly increasing in U.
fn root_nonneg(x: f64, i: usize) -> Result<f64, ProfileError> {
    debug_assert!(x >= 0.0);
    let p = (2 * i + 1) as i32;
    let g = |u: f64| u + u.powi(p) + x;
    let dg = |u: f64| 1.0 + p as f64 * u.powi(p - 1);

    let mut lo = -x.max(1.0);
    let mut hi = 0.0;
    if g(lo) > 0.0 {
        return Err(ProfileError::NoConvergence(x));
    }
    let tol = 1e-14 * (1.0 + x);
    let mut u = if x <= 1.0 { -x } else { -x.powf(1.0 / p as f64) };
    for _ in 0..200 {
        let gu = g(u);
        if gu.abs() <= tol {
            return Ok(u);
        }
        if gu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - gu / dg(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() < f64::EPSILON * u.abs() {
            return Ok(next);
        }
        u = next;
    }
    // interval has collapsed to machine width; midpoint is the best root
    let u = 0.5 * (lo + hi);
    if g(u).abs() <= 10.0 * tol {
        Ok(u)
    } else {
        Err(ProfileError::NoConvergence(x))
    }
}

/// U_i(X): the unique real root of X = -U - U^(2i+1), odd and decreasing.
pub fn ui_eval(x: f64, i: usize) -> Result<f64, ProfileError> {
    check_family(i)?;
    if !x.is_finite() {
        return Err(ProfileError::NonFiniteInput);
    }
    // evaluate on |X| and reflect, so oddness holds exactly
    let r = root_nonneg(x.abs(), i)?;
    Ok(if x < 0.0 { -r } else { r })
}

/// Truncated power series product, keeping orders 0..=n.
fn series_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for (ja, &ca) in a.iter().enumerate().take(n + 1) {
        if ca == 0.0 {
            continue;
        }
        for (jb, &cb) in b.iter().enumerate().take(n + 1 - ja) {
            out[ja + jb] += ca * cb;
        }
    }
    out
}

/// Reciprocal of a power series with nonzero constant term, orders 0..=n.
fn series_recip(d: &[f64], n: usize) -> Vec<f64> {
    let mut r = vec![0.0; n + 1];
    r[0] = 1.0 / d[0];
    for k in 1..=n {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += d.get(j).copied().unwrap_or(0.0) * r[k - j];
        }
        r[k] = -acc / d[0];
    }
    r
}

/// Derivatives U_i^(m)(X) for m = 1..=max_order, exact to rounding.
///
/// U_i satisfies the autonomous ODE U' = -1/(1 + (2i+1)U^{2i}); Taylor
/// coefficients around X follow order-by-order from the series of the
/// right-hand side composed with the partial expansion.
pub fn ui_derivatives(x: f64, i: usize, max_order: usize) -> Result<Vec<f64>, ProfileError> {
    check_family(i)?;
    if max_order == 0 || max_order > MAX_DERIVATIVE_ORDER {
        return Err(ProfileError::OrderOutOfRange(max_order));
    }
    let u0 = ui_eval(x, i)?;
    // a[k] = k-th Taylor coefficient of U around x
    let mut a = vec![0.0; max_order + 1];
    a[0] = u0;
    for m in 0..max_order {
        // series of U^{2i} from coefficients a[0..=m]
        let mut pw = vec![0.0; m + 1];
        pw[0] = 1.0;
        for _ in 0..2 * i {
            pw = series_mul(&pw, &a[..=m], m);
        }
        // denominator 1 + (2i+1) U^{2i}
        let mut den = pw;
        den.iter_mut().for_each(|c| *c *= (2 * i + 1) as f64);
        den[0] += 1.0;
        let rhs = series_recip(&den, m);
        a[m + 1] = -rhs[m] / (m + 1) as f64;
    }
    let mut fact = 1.0;
    let mut out = Vec::with_capacity(max_order);
    for (m, coeff) in a.iter().enumerate().skip(1) {
        fact *= m as f64;
        out.push(coeff * fact);
    }
    Ok(out)
}

/// Full profile point with derivatives through order 9.
pub fn profile_point(x: f64, i: usize) -> Result<ProfilePoint, ProfileError> {
    Ok(ProfilePoint {
        x,
        u: ui_eval(x, i)?,
        derivatives: ui_derivatives(x, i, MAX_DERIVATIVE_ORDER)?,
        family_index: i,
    })
}

/// Rescaled unstable profile with prescribed fifth derivative nu at 0:
/// (nu/120)^(-1/4) U_2((nu/120)^(1/4) X).
pub fn u2_nu_eval(x: f64, nu: f64) -> Result<f64, ProfileError> {
    if !(nu > 0.0) {
        return Err(ProfileError::NonPositiveNu(nu));
    }
    let lam = (nu / 120.0).powf(0.25);
    Ok(ui_eval(lam * x, 2)? / lam)
}

/// Two-term large-|X| expansion of U_2.
pub fn u2_asymptotic(x: f64) -> Result<f64, ProfileError> {
    if x.abs() < 10.0 {
        return Err(ProfileError::XTooSmall(x));
    }
    let s = x.signum();
    let ax = x.abs();
    Ok(-s * ax.powf(0.2) + s / 5.0 * ax.powf(-0.6))
}

/// One inequality check at one sample: margin >= 0 means the bound holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub x: f64,
    pub name: String,
    pub margin: f64,
    pub pass: bool,
    /// false when the sample lies outside the bound's applicability range
    pub applicable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn all_applicable_pass(&self) -> bool {
        self.checks.iter().all(|c| !c.applicable || c.pass)
    }

    pub fn worst_margin(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.applicable)
            .map(|c| c.margin)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Certify the profile bounds at each sample:
/// amplitude |U_2| <= (1+X^4)^(1/20) and slope |U_2'| <= (1+X^4)^(-1/5)
/// everywhere; the sharpened slope floor -(1-2l^4)(1+X^4)^(-1/5) for
/// |X| >= l with l in (0, 0.2); and the two-sided far-field slope bracket
/// (-9/40 .. -7/40)(1+X^4)^(-1/5) for |X| >= 100.
pub fn u2_bound_certificates(x_samples: &[f64], l: f64) -> Result<BoundReport, ProfileError> {
    if !(l > 0.0 && l < 0.2) {
        return Err(ProfileError::BadSlopeParameter(l));
    }
    let mut report = BoundReport::default();
    for &x in x_samples {
        if !x.is_finite() {
            return Err(ProfileError::NonFiniteInput);
        }
        let u = ui_eval(x, 2)?;
        let du = ui_derivatives(x, 2, 1)?[0];
        let w = (1.0 + x.powi(4)).powf(0.05);
        let env = (1.0 + x.powi(4)).powf(-0.2);
        report.checks.push(BoundCheck {
            x,
            name: "amplitude_envelope".into(),
            margin: w - u.abs(),
            pass: u.abs() <= w,
            applicable: true,
        });
        report.checks.push(BoundCheck {
            x,
            name: "slope_envelope".into(),
            margin: env - du.abs(),
            pass: du.abs() <= env,
            applicable: true,
        });
        let floor = -(1.0 - 2.0 * l.powi(4)) * env;
        report.checks.push(BoundCheck {
            x,
            name: "slope_floor_away_from_origin".into(),
            margin: (du - floor).min(-du),
            pass: du < 0.0 && du >= floor,
            applicable: x.abs() >= l,
        });
        let far_hi = -7.0 / 40.0 * env;
        let far_lo = -9.0 / 40.0 * env;
        report.checks.push(BoundCheck {
            x,
            name: "far_slope_bracket".into(),
            margin: (far_hi - du).min(du - far_lo),
            pass: du < far_hi && du > far_lo,
            applicable: x.abs() >= 100.0,
        });
    }
    Ok(report)
}
