//! The modulated self-similar frame: algebraic extraction of the frame
//! variables (tau, xi, kappa) from the origin constraints, coordinate
//! transforms between physical and self-similar variables, the modulation
//! ODE right-hand sides, the transport speed, Lagrangian trajectories, and
//! the self-similar residual monitor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{fornberg_weights, jet_from_spectrum, spectral_derivative, Field, Grid1D, GridError};
#[cfg(test)]
use crate::grid::local_jet;

/// Newton/bisection search window radius for the frame center.
pub const XI_SEARCH_RADIUS: f64 = 0.2;

/// Division guard on the fifth derivative in the modulation system (the
/// profile value is 120; anything this small means the frame is lost).
pub const MIN_FIFTH_DERIVATIVE: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum SelfSimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no root of the fourth derivative near x = {0}")]
    DegenerateModulation(f64),
    #[error("slope {0} at the frame center is not negative")]
    PositiveSlope(f64),
    #[error("fifth derivative {0} at the origin below the division guard")]
    SmallFifthDerivative(f64),
    #[error("tau_dot = {0} >= 1; transport speed undefined")]
    TauDotGeOne(f64),
    #[error("frame requires tau > t, got tau - t = {0}")]
    FrameNotFuture(f64),
    #[error("trajectory left the speed provider's domain at X = {0}")]
    LeftDomain(f64),
    #[error("frames misaligned: grids differ or s not increasing")]
    FramesMisaligned,
}

/// The dynamic frame variables and their time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationState {
    pub t: f64,
    pub tau: f64,
    pub xi: f64,
    pub kappa: f64,
    pub tau_dot: f64,
    pub xi_dot: f64,
    pub kappa_dot: f64,
}

impl ModulationState {
    pub fn tau_minus_t(&self) -> f64 {
        self.tau - self.t
    }

    /// Self-similar time s = -log(tau - t).
    pub fn s(&self) -> f64 {
        -self.tau_minus_t().ln()
    }
}

/// Right-hand sides of the modulation system at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ModulationRhs {
    pub tau_dot: f64,
    /// e^{s/4} (kappa - xi_dot), the combination the system solves for
    pub scaled_kappa_minus_xi_dot: f64,
    pub kappa_dot: f64,
}

/// A snapshot of the solution in self-similar variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarFrame {
    pub s: f64,
    /// U(X, s) sampled on the X-grid
    pub u: Field,
    /// derivatives of U at X = 0, orders 0..=9
    pub origin_jet: [f64; 10],
    /// fifth derivative at the origin, the profile-scale estimate
    pub nu_estimate: f64,
}

/// Recover the frame variables from a physical snapshot: the center xi is
/// the root of the fourth derivative nearest the steepest descent, the
/// blowup-time gap comes from the slope there, and kappa is the value.
///
/// The hint carries the previous center; the first call seeds from the
/// steepest-descent point.
/// Zero out spectral modes whose amplitude sits at the double-precision
/// rounding floor relative to the largest mode.
fn noise_filtered_spectrum(u: &Field) -> Vec<rustfft::num_complex::Complex64> {
    let mut spectrum = u.spectrum();
    let peak = spectrum.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let floor = 1e-13 * peak;
    for c in spectrum.iter_mut() {
        if c.norm() < floor {
            *c = rustfft::num_complex::Complex64::new(0.0, 0.0);
        }
    }
    spectrum
}

pub fn extract_modulation(
    u: &Field,
    t: f64,
    hint: Option<&ModulationState>,
) -> Result<ModulationState, SelfSimError> {
    u.check_finite().map_err(SelfSimError::Grid)?;
    let grid = u.grid();
    // Rounding noise in the spectrum is amplified by k^4 when reading the
    // fourth derivative; drop modes at the rounding floor since they carry
    // no signal for a resolved field but dominate the amplified noise.
    let spectrum = noise_filtered_spectrum(u);
    let u = &Field::from_spectrum(grid, spectrum.clone(), "filtered", t);
    let du = spectral_derivative(u, 1)?;
    let seed = match hint {
        Some(h) => h.xi,
        None => grid.point(du.argmin()),
    };

    // bracket a sign change of the fourth derivative near the seed
    let d4 = spectral_derivative(u, 4)?;
    let h = grid.spacing();
    let k_max = (XI_SEARCH_RADIUS / h).ceil() as i64;
    let n = grid.len() as i64;
    let idx = |k: i64| k.rem_euclid(n) as usize;
    // A stale hint can sit closer to a spurious fourth-derivative crossing
    // than to the real one; snap to the steepest-descent point inside the
    // search window before scanning for the root.
    let k_hint = ((seed - grid.x_min()) / h).round() as i64;
    let mut k_seed = k_hint;
    let mut steepest = f64::INFINITY;
    for off in -k_max..=k_max {
        let v = du.values()[idx(k_hint + off)];
        if v < steepest {
            steepest = v;
            k_seed = k_hint + off;
        }
    }
    let mut bracket = None;
    for off in 0..k_max {
        for k in [k_seed + off, k_seed - off - 1] {
            let a = d4.values()[idx(k)];
            let b = d4.values()[idx(k + 1)];
            if a == 0.0 {
                bracket = Some((grid.point(idx(k)) - h * 1e-3, grid.point(idx(k)) + h * 1e-3));
            } else if a * b < 0.0 {
                bracket = Some((grid.point(idx(k)), grid.point(idx(k)) + h));
            }
            if bracket.is_some() {
                break;
            }
        }
        if bracket.is_some() {
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or(SelfSimError::DegenerateModulation(seed))?;

    // refine by bisection-safeguarded Newton on the interpolated jet
    let f = |x: f64| {
        let jet = jet_from_spectrum(grid, &spectrum, x, 5);
        (jet[4], jet[5])
    };
    let (flo, _) = f(lo);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..80 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            break;
        }
        if (fx > 0.0) == (flo > 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
            x = next;
            break;
        }
        x = next;
    }
    let xi = x;

    let jet = jet_from_spectrum(grid, &spectrum, xi, 1);
    let slope = jet[1];
    if slope >= 0.0 {
        return Err(SelfSimError::PositiveSlope(slope));
    }
    Ok(ModulationState {
        t,
        tau: t - 1.0 / slope,
        xi,
        kappa: jet[0],
        tau_dot: 0.0,
        xi_dot: 0.0,
        kappa_dot: 0.0,
    })
}

/// Solve the triangular modulation system at one instant.
///
/// `origin_jet` holds the derivatives of U at X = 0 (orders 0..=9 or at
/// least 0..=5); `hilbert_origin` supplies, in order, the origin values of
/// H[U + e^{s/4} kappa], H[dU/dX], and H[d^4U/dX^4].
pub fn modulation_rhs(
    s: f64,
    origin_jet: &[f64],
    hilbert_origin: [f64; 3],
) -> Result<ModulationRhs, SelfSimError> {
    let d2 = origin_jet[2];
    let d3 = origin_jet[3];
    let d5 = origin_jet[5];
    if d5.abs() < MIN_FIFTH_DERIVATIVE {
        return Err(SelfSimError::SmallFifthDerivative(d5));
    }
    let [h_u, h_du, h_d4u] = hilbert_origin;
    let es = (-s).exp();
    let g = (es * h_d4u - 10.0 * d2 * d3) / d5;
    let tau_dot = es * h_du - g * d2;
    let kappa_dot = (0.75 * s).exp() * g + (-0.25 * s).exp() * h_u;
    Ok(ModulationRhs {
        tau_dot,
        scaled_kappa_minus_xi_dot: g,
        kappa_dot,
    })
}

/// Sample the self-similar variable U(X, s) from a physical snapshot by
/// Fourier interpolation, and fill the origin jet through the derivative
/// scaling (tau - t)^{(5n-1)/4} d^n u/dx^n (xi).
/// Noise-stable derivative jet at an arbitrary point.
///
/// Orders 0..=3 are read directly off the trigonometric interpolant; for
/// orders >= 4 the k^n amplification of spectral rounding noise dominates,
/// so those are computed by finite-difference weights applied to Fourier
/// point-evaluations on a 13-point stencil with spacing `h_fd`.
pub fn stable_jet(u: &Field, x: f64, max_order: usize, h_fd: f64) -> Vec<f64> {
    let spectrum = noise_filtered_spectrum(u);
    stable_jet_from_spectrum(u.grid(), &spectrum, x, max_order, h_fd)
}

fn stable_jet_from_spectrum(
    grid: Grid1D,
    spectrum: &[rustfft::num_complex::Complex64],
    x: f64,
    max_order: usize,
    h_fd: f64,
) -> Vec<f64> {
    let low = max_order.min(3);
    let mut jet = jet_from_spectrum(grid, spectrum, x, low);
    if max_order >= 4 {
        let stencil: Vec<f64> = (0..13).map(|j| x + (j as f64 - 6.0) * h_fd).collect();
        let samples: Vec<f64> = stencil
            .iter()
            .map(|&p| jet_from_spectrum(grid, spectrum, p, 0)[0])
            .collect();
        let weights = fornberg_weights(x, &stencil, max_order.min(9));
        for row in weights.iter().skip(4) {
            jet.push(row.iter().zip(&samples).map(|(w, v)| w * v).sum());
        }
    }
    jet
}

pub fn to_selfsimilar(
    u: &Field,
    t: f64,
    modulation: &ModulationState,
    x_grid: Grid1D,
) -> Result<SelfSimilarFrame, SelfSimError> {
    let gap = modulation.tau - t;
    if !(gap > 0.0) {
        return Err(SelfSimError::FrameNotFuture(gap));
    }
    let s = -gap.ln();
    let amp = gap.powf(0.25);
    let len = gap.powf(1.25);
    let grid = u.grid();
    let spectrum = noise_filtered_spectrum(u);

    let mut values = Vec::with_capacity(x_grid.len());
    for xx in x_grid.points() {
        let x = modulation.xi + len * xx;
        if !grid.contains_interior(x) {
            return Err(SelfSimError::Grid(GridError::PointOutsideGrid(x)));
        }
        let v = jet_from_spectrum(grid, &spectrum, x, 0)[0];
        values.push((v - modulation.kappa) / amp);
    }

    let jet_u = stable_jet_from_spectrum(grid, &spectrum, modulation.xi, 9, 0.02 * len);
    let mut origin_jet = [0.0; 10];
    origin_jet[0] = (jet_u[0] - modulation.kappa) / amp;
    for (n, slot) in origin_jet.iter_mut().enumerate().skip(1) {
        *slot = gap.powf((5.0 * n as f64 - 1.0) / 4.0) * jet_u[n];
    }

    Ok(SelfSimilarFrame {
        s,
        u: Field::new(x_grid, values, "U", s),
        origin_jet,
        nu_estimate: origin_jet[5],
    })
}

/// Six-point Lagrange interpolation with the stencil clamped into the grid
/// (non-periodic: self-similar windows are not periodic fields).
fn lagrange6_clamped(grid: Grid1D, values: &[f64], x: f64) -> f64 {
    let n = grid.len() as i64;
    let h = grid.spacing();
    let t = (x - grid.x_min()) / h;
    let base = (t.floor() as i64 - 2).clamp(0, n - 6);
    let u = t - base as f64;
    let mut acc = 0.0;
    for m in 0..6i64 {
        let mut w = 1.0;
        for mm in 0..6i64 {
            if mm != m {
                w *= (u - mm as f64) / ((m - mm) as f64);
            }
        }
        acc += w * values[(base + m) as usize];
    }
    acc
}

/// Invert the self-similar transform: u(x) = e^{-s/4} U((x - xi) e^{5s/4}) + kappa.
pub fn from_selfsimilar(
    frame: &SelfSimilarFrame,
    modulation: &ModulationState,
    grid: Grid1D,
) -> Result<Field, SelfSimError> {
    let gap = modulation.tau_minus_t();
    if !(gap > 0.0) {
        return Err(SelfSimError::FrameNotFuture(gap));
    }
    let amp = gap.powf(0.25);
    let len = gap.powf(1.25);
    let x_grid = frame.u.grid();
    let mut values = Vec::with_capacity(grid.len());
    for x in grid.points() {
        let xx = (x - modulation.xi) / len;
        if !x_grid.contains_interior(xx) {
            return Err(SelfSimError::Grid(GridError::PointOutsideGrid(xx)));
        }
        values.push(amp * lagrange6_clamped(x_grid, frame.u.values(), xx) + modulation.kappa);
    }
    Ok(Field::new(grid, values, "u", modulation.t))
}

/// Transport speed V = (U + e^{s/4}(kappa - xi_dot))/(1 - tau_dot) + 5X/4.
pub fn transport_speed(
    frame: &SelfSimilarFrame,
    rhs: &ModulationRhs,
) -> Result<Field, SelfSimError> {
    if rhs.tau_dot >= 1.0 {
        return Err(SelfSimError::TauDotGeOne(rhs.tau_dot));
    }
    let denom = 1.0 - rhs.tau_dot;
    let g = rhs.scaled_kappa_minus_xi_dot;
    let grid = frame.u.grid();
    let values = grid
        .points()
        .zip(frame.u.values())
        .map(|(x, u)| (u + g) / denom + 1.25 * x)
        .collect();
    Ok(Field::new(grid, values, "V", frame.s))
}

/// RK4 integral curve of the transport speed, step <= 0.01. The provider
/// returns None when (X, s) leaves its domain.
pub fn lagrangian_flow(
    x0: f64,
    s0: f64,
    s1: f64,
    mut speed: impl FnMut(f64, f64) -> Option<f64>,
) -> Result<Vec<(f64, f64)>, SelfSimError> {
    assert!(s1 >= s0, "flow requires s1 >= s0");
    let n_steps = ((s1 - s0) / 0.01).ceil().max(1.0) as usize;
    let h = (s1 - s0) / n_steps as f64;
    let mut path = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    let mut s = s0;
    path.push((s, x));
    let mut eval = |x: f64, s: f64| speed(x, s).ok_or(SelfSimError::LeftDomain(x));
    for _ in 0..n_steps {
        let k1 = eval(x, s)?;
        let k2 = eval(x + 0.5 * h * k1, s + 0.5 * h)?;
        let k3 = eval(x + 0.5 * h * k2, s + 0.5 * h)?;
        let k4 = eval(x + h * k3, s + h)?;
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
        path.push((s, x));
    }
    Ok(path)
}

/// Fourth-order centered first derivative on a (non-periodic) window; the
/// outermost two samples are zeroed.
pub fn window_derivative(f: &Field) -> Field {
    let n = f.grid().len();
    let h = f.grid().spacing();
    let v = f.values();
    let mut out = vec![0.0; n];
    for k in 2..n - 2 {
        out[k] = (-v[k + 2] + 8.0 * v[k + 1] - 8.0 * v[k - 1] + v[k - 2]) / (12.0 * h);
    }
    Field::new(f.grid(), out, f.label.clone(), f.time)
}

/// Pointwise residual of the self-similar evolution equation between two
/// consecutive frames:
/// (d/ds - 1/4)U + V dU/dX + e^{-3s/4} kappa_dot/(1-tau_dot)
///   - e^{-s}/(1-tau_dot) H[U + e^{s/4} kappa].
///
/// `hilbert_field` carries H[U + e^{s/4} kappa] sampled on the frame grid.
/// The outermost two samples are zeroed (derivative stencil width).
pub fn selfsimilar_residual(
    prev: &SelfSimilarFrame,
    cur: &SelfSimilarFrame,
    rhs: &ModulationRhs,
    hilbert_field: &Field,
) -> Result<Field, SelfSimError> {
    if prev.u.grid() != cur.u.grid()
        || hilbert_field.grid() != cur.u.grid()
        || !(cur.s > prev.s)
    {
        return Err(SelfSimError::FramesMisaligned);
    }
    let ds = cur.s - prev.s;
    let v = transport_speed(cur, rhs)?;
    let ux = window_derivative(&cur.u);
    let denom = 1.0 - rhs.tau_dot;
    let s = cur.s;
    let kap = (-0.75 * s).exp() * rhs.kappa_dot / denom;
    let hs = (-s).exp() / denom;
    let n = cur.u.grid().len();
    let mut values = vec![0.0; n];
    for k in 2..n - 2 {
        let u_s = (cur.u.values()[k] - prev.u.values()[k]) / ds;
        values[k] = u_s - 0.25 * cur.u.values()[k] + v.values()[k] * ux.values()[k] + kap
            - hs * hilbert_field.values()[k];
    }
    Ok(Field::new(cur.u.grid(), values, "residual", s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initdata::{chi_eval, ChiTransition};
    use crate::profile::ui_eval;

    /// Smooth partition-of-unity window: exactly 1 for |t| <= 1, exactly 0
    /// for |t| >= 2, infinitely smooth in between (keeps Fourier ringing at
    /// the rounding floor in these oracle tests).
    fn smooth_window(t: f64) -> f64 {
        let r = t.abs() - 1.0;
        if r <= 0.0 {
            return 1.0;
        }
        if r >= 1.0 {
            return 0.0;
        }
        let a = (-1.0 / r).exp();
        let b = (-1.0 / (1.0 - r)).exp();
        b / (a + b)
    }

    /// Exact inviscid self-similar solution with blowup time t_star and
    /// center x_star, windowed to compact support (the window sits far from
    /// the core and does not disturb the frame extraction).
    fn exact_datum(grid: Grid1D, t: f64, t_star: f64, x_star: f64, lambda: f64) -> Field {
        let gap = t_star - t;
        Field::from_fn(grid, |x| {
            let w = smooth_window(x - x_star);
            if w == 0.0 {
                return 0.0;
            }
            let xx = (x - x_star) / gap.powf(1.25);
            lambda * gap.powf(0.25) * ui_eval(xx, 2).unwrap() * w
        })
    }

    fn phys_grid() -> Grid1D {
        Grid1D::new(-4.0, 4.0, 8192).unwrap()
    }

    #[test]
    fn extract_exact_frame() {
        let u = exact_datum(phys_grid(), 0.0, 1.0, 0.0, 1.0);
        let m = extract_modulation(&u, 0.0, None).unwrap();
        assert!((m.tau - 1.0).abs() < 1e-8, "tau {}", m.tau);
        assert!(m.xi.abs() < 1e-9, "xi {}", m.xi);
        assert!(m.kappa.abs() < 1e-9, "kappa {}", m.kappa);
    }

    #[test]
    fn extract_translated_frame() {
        let u = exact_datum(phys_grid(), 0.0, 1.0, 0.3, 1.0);
        let m = extract_modulation(&u, 0.0, None).unwrap();
        assert!((m.xi - 0.3).abs() < 1e-7, "xi {}", m.xi);
        assert!((m.tau - 1.0).abs() < 1e-8);
    }

    #[test]
    fn extract_amplitude_scaling() {
        // scaling amplitude by lambda changes the slope, hence tau - t
        let u = exact_datum(phys_grid(), 0.0, 1.0, 0.0, 2.0);
        let m = extract_modulation(&u, 0.0, None).unwrap();
        assert!((m.tau - 0.5).abs() < 1e-8, "tau {}", m.tau);
    }

    #[test]
    fn extract_rejects_positive_slope() {
        let grid = phys_grid();
        let u = Field::from_fn(grid, |x| {
            chi_eval(x, ChiTransition::QuinticSmoothstep) * (x + x.powi(5))
        });
        // the fourth-derivative root at 0 has positive slope
        let hint = ModulationState {
            t: 0.0,
            tau: 1.0,
            xi: 0.0,
            kappa: 0.0,
            tau_dot: 0.0,
            xi_dot: 0.0,
            kappa_dot: 0.0,
        };
        assert!(matches!(
            extract_modulation(&u, 0.0, Some(&hint)),
            Err(SelfSimError::PositiveSlope(_))
        ));
    }

    #[test]
    fn extract_degenerate_without_root() {
        let grid = phys_grid();
        // fourth derivative strictly positive near 1.5 (single bump tail)
        let u = Field::from_fn(grid, |x| (-(x * x)).exp());
        let hint = ModulationState {
            t: 0.0,
            tau: 1.0,
            xi: 3.0,
            kappa: 0.0,
            tau_dot: 0.0,
            xi_dot: 0.0,
            kappa_dot: 0.0,
        };
        assert!(matches!(
            extract_modulation(&u, 0.0, Some(&hint)),
            Err(SelfSimError::DegenerateModulation(_))
        ));
    }

    #[test]
    fn rhs_homogeneous() {
        let mut jet = [0.0; 10];
        jet[1] = -1.0;
        jet[5] = 120.0;
        let r = modulation_rhs(3.0, &jet, [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.tau_dot, 0.0);
        assert_eq!(r.scaled_kappa_minus_xi_dot, 0.0);
        assert_eq!(r.kappa_dot, 0.0);
    }

    #[test]
    fn rhs_tau_dot_from_slope_transform() {
        let mut jet = [0.0; 10];
        jet[1] = -1.0;
        jet[5] = 120.0;
        let s = 2.0;
        let r = modulation_rhs(s, &jet, [0.0, 1.0, 0.0]).unwrap();
        assert!((r.tau_dot - (-s).exp()).abs() < 1e-15);
    }

    #[test]
    fn rhs_quadratic_coupling() {
        let mut jet = [0.0; 10];
        jet[1] = -1.0;
        jet[2] = 0.3;
        jet[3] = -0.2;
        jet[5] = 120.0;
        let r = modulation_rhs(4.0, &jet, [0.0, 0.0, 0.0]).unwrap();
        let want = -(0.3 * -0.2) / 12.0;
        assert!((r.scaled_kappa_minus_xi_dot - want).abs() < 1e-15);
    }

    #[test]
    fn rhs_division_guard() {
        let mut jet = [0.0; 10];
        jet[5] = 1.0;
        assert!(matches!(
            modulation_rhs(1.0, &jet, [0.0; 3]),
            Err(SelfSimError::SmallFifthDerivative(_))
        ));
    }

    #[test]
    fn selfsim_transform_recovers_profile() {
        let u = exact_datum(phys_grid(), 0.0, 1.0, 0.0, 1.0);
        let m = extract_modulation(&u, 0.0, None).unwrap();
        let x_grid = Grid1D::new(-0.6, 0.6, 1024).unwrap();
        let frame = to_selfsimilar(&u, 0.0, &m, x_grid).unwrap();
        for (xx, v) in x_grid.points().zip(frame.u.values()) {
            let want = ui_eval(xx, 2).unwrap();
            assert!((v - want).abs() < 1e-7, "at {xx}: {v} vs {want}");
        }
        assert!((frame.origin_jet[1] + 1.0).abs() < 1e-10);
        assert!(frame.origin_jet[4].abs() < 1e-4);
        assert!((frame.nu_estimate - 120.0).abs() < 1e-3, "{}", frame.nu_estimate);
    }

    #[test]
    fn round_trip() {
        let grid = phys_grid();
        let u = exact_datum(grid, 0.0, 1.0, 0.0, 1.0);
        let m = extract_modulation(&u, 0.0, None).unwrap();
        let x_grid = Grid1D::new(-1.5, 1.5, 2048).unwrap();
        let frame = to_selfsimilar(&u, 0.0, &m, x_grid).unwrap();
        // physical window strictly inside the image of the X-window
        let sub = Grid1D::new(-1.0, 1.0, 1024).unwrap();
        let back = from_selfsimilar(&frame, &m, sub).unwrap();
        for (x, v) in sub.points().zip(back.values()) {
            let jet = local_jet(&u, x, 0).unwrap();
            assert!((v - jet[0]).abs() < 1e-10, "at {x}");
        }
    }

    #[test]
    fn speed_shapes() {
        let x_grid = Grid1D::new(-2.0, 2.0, 64).unwrap();
        let prof = Field::from_fn(x_grid, |x| ui_eval(x, 2).unwrap());
        let frame = SelfSimilarFrame {
            s: 1.0,
            u: prof,
            origin_jet: [0.0; 10],
            nu_estimate: 120.0,
        };
        let rhs = ModulationRhs::default();
        let v = transport_speed(&frame, &rhs).unwrap();
        for (x, val) in x_grid.points().zip(v.values()) {
            let want = ui_eval(x, 2).unwrap() + 1.25 * x;
            assert!((val - want).abs() < 1e-13);
        }
        // constant shift when U = 0 and kappa - xi_dot nonzero
        let frame0 = SelfSimilarFrame {
            s: 1.0,
            u: Field::zeros(x_grid),
            origin_jet: [0.0; 10],
            nu_estimate: 120.0,
        };
        let rhs = ModulationRhs {
            scaled_kappa_minus_xi_dot: 0.7,
            ..Default::default()
        };
        let v = transport_speed(&frame0, &rhs).unwrap();
        for (x, val) in x_grid.points().zip(v.values()) {
            assert!((val - (0.7 + 1.25 * x)).abs() < 1e-13);
        }
        let bad = ModulationRhs {
            tau_dot: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            transport_speed(&frame0, &bad),
            Err(SelfSimError::TauDotGeOne(_))
        ));
    }

    #[test]
    fn flow_linear_speed() {
        // frozen V = 5X/4 integrates to X0 e^{5(s-s0)/4}
        let path = lagrangian_flow(0.3, 0.0, 2.0, |x, _| Some(1.25 * x)).unwrap();
        let (s_end, x_end) = *path.last().unwrap();
        assert!((s_end - 2.0).abs() < 1e-12);
        let want = 0.3 * (2.5f64).exp();
        assert!((x_end - want).abs() < 1e-8, "{x_end} vs {want}");
    }

    #[test]
    fn flow_escape_rate_for_profile_speed() {
        // for the profile speed, |Phi| grows at least like e^{(s-s0)/5}
        for &x0 in &[0.05f64, -0.05, 0.2, 1.0] {
            let path =
                lagrangian_flow(x0, 0.0, 3.0, |x, _| Some(ui_eval(x, 2).unwrap() + 1.25 * x))
                    .unwrap();
            for (s, x) in path {
                assert!(
                    x.abs() >= x0.abs() * (s / 5.0).exp() * (1.0 - 1e-9),
                    "x0 {x0} s {s}: {x}"
                );
                // and at most like e^{5(s-s0)/4} from the starting radius
                assert!(x.abs() <= (x0.abs() + 3.0) * (1.25 * s).exp());
            }
        }
    }

    #[test]
    fn flow_left_domain() {
        let err = lagrangian_flow(1.0, 0.0, 5.0, |x, _| {
            if x.abs() < 3.0 {
                Some(1.25 * x)
            } else {
                None
            }
        })
        .unwrap_err();
        assert!(matches!(err, SelfSimError::LeftDomain(_)));
    }

    #[test]
    fn residual_exact_inviscid() {
        // the exact self-similar solution, transformed at two times, is
        // steady in s and satisfies the inviscid equation identically
        let grid = phys_grid();
        let x_grid = Grid1D::new(-6.0, 6.0, 1024).unwrap();
        let mut frames = Vec::new();
        // gaps 0.25 and 0.2 keep the X-window inside the physical grid
        for &t in &[0.0, 0.05] {
            let u = exact_datum(grid, t, 0.25, 0.0, 1.0);
            let m = extract_modulation(&u, t, None).unwrap();
            frames.push(to_selfsimilar(&u, t, &m, x_grid).unwrap());
        }
        let rhs = ModulationRhs::default();
        let h = Field::zeros(x_grid);
        let res = selfsimilar_residual(&frames[0], &frames[1], &rhs, &h).unwrap();
        let mut sup: f64 = 0.0;
        for (x, v) in x_grid.points().zip(res.values()) {
            if x.abs() <= 5.0 {
                sup = sup.max(v.abs());
            }
        }
        assert!(sup < 1e-6, "{sup}");
    }

    #[test]
    fn residual_zero_field() {
        let x_grid = Grid1D::new(-2.0, 2.0, 64).unwrap();
        let mk = |s: f64| SelfSimilarFrame {
            s,
            u: Field::zeros(x_grid),
            origin_jet: [0.0; 10],
            nu_estimate: 120.0,
        };
        let res = selfsimilar_residual(
            &mk(1.0),
            &mk(1.5),
            &ModulationRhs::default(),
            &Field::zeros(x_grid),
        )
        .unwrap();
        assert_eq!(res.sup_norm(), 0.0);
    }

    #[test]
    fn residual_misaligned() {
        let a = Grid1D::new(-2.0, 2.0, 64).unwrap();
        let b = Grid1D::new(-2.0, 2.0, 128).unwrap();
        let mk = |g: Grid1D, s: f64| SelfSimilarFrame {
            s,
            u: Field::zeros(g),
            origin_jet: [0.0; 10],
            nu_estimate: 120.0,
        };
        assert_eq!(
            selfsimilar_residual(
                &mk(a, 1.0),
                &mk(b, 2.0),
                &ModulationRhs::default(),
                &Field::zeros(b)
            )
            .unwrap_err(),
            SelfSimError::FramesMisaligned
        );
    }
}
