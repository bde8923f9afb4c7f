//! Three realizations of the Hilbert transform: periodic spectral
//! multiplier, zero-padded line approximation, and principal-value
//! quadrature with near/middle/far separation.

use crate::grid::{Field, Grid1D, GridError};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HilbertError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("field support reaches the outer third of the padded grid")]
    SupportTooWide,
    #[error("near radius {0} must exceed twice the grid spacing")]
    RadiusTooSmall(f64),
    #[error("pad_factor must be >= 2, got {0}")]
    BadPadFactor(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NearRadiusRule {
    /// Fixed unit radius.
    Unit,
    /// Radius min(1, (1+x^4)^(-1/5)).
    #[default]
    WeightedDecay,
}

impl NearRadiusRule {
    pub fn radius(&self, x: f64) -> f64 {
        match self {
            NearRadiusRule::Unit => 1.0,
            NearRadiusRule::WeightedDecay => (1.0 + x.powi(4)).powf(-0.2).min(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HilbertMethod {
    SpectralPeriodic,
    PaddedLine { pad_factor: usize },
    PrincipalValue { near_radius_rule: NearRadiusRule },
}

impl Default for HilbertMethod {
    fn default() -> Self {
        HilbertMethod::SpectralPeriodic
    }
}

/// Apply the configured method to a whole field.
///
/// The principal-value method is pointwise by nature; applied to a field it
/// evaluates at every grid node.
pub fn hilbert_apply(f: &Field, method: &HilbertMethod) -> Result<Field, HilbertError> {
    match method {
        HilbertMethod::SpectralPeriodic => hilbert_spectral(f),
        HilbertMethod::PaddedLine { pad_factor } => hilbert_padded_line(f, *pad_factor),
        HilbertMethod::PrincipalValue { near_radius_rule } => {
            let mut values = Vec::with_capacity(f.grid().len());
            let eps = f.grid().spacing() * 1e-6;
            for x in f.grid().points() {
                // clamp endpoints into the interior
                let xi = x
                    .max(f.grid().x_min() + eps)
                    .min(f.grid().x_max() - eps);
                values.push(hilbert_pv_point(f, xi, near_radius_rule.radius(xi))?);
            }
            Ok(Field::new(f.grid(), values, f.label.clone(), f.time))
        }
    }
}

/// Fourier-multiplier Hilbert transform: -i sgn(k) mode-wise, mean mode to 0.
pub fn hilbert_spectral(f: &Field) -> Result<Field, HilbertError> {
    f.check_finite()?;
    let grid = f.grid();
    let n = grid.len();
    let mut spectrum = f.spectrum();
    for (j, c) in spectrum.iter_mut().enumerate() {
        if j == 0 || j == n / 2 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let sgn = if j < n / 2 { 1.0 } else { -1.0 };
        *c *= Complex64::new(0.0, -sgn);
    }
    Ok(Field::from_spectrum(grid, spectrum, &f.label, f.time))
}

/// Line-transform approximation for compactly supported fields: embed in a
/// grid enlarged by `pad_factor`, apply the spectral transform, restrict.
pub fn hilbert_padded_line(f: &Field, pad_factor: usize) -> Result<Field, HilbertError> {
    if pad_factor < 2 {
        return Err(HilbertError::BadPadFactor(pad_factor));
    }
    f.check_finite()?;
    let grid = f.grid();
    let n = grid.len();
    let n_pad = n * pad_factor;
    let extra = (n_pad - n) / 2;
    let pad_grid = Grid1D::new(
        grid.x_min() - extra as f64 * grid.spacing(),
        grid.x_min() + (n_pad - extra) as f64 * grid.spacing(),
        n_pad,
    )?;

    let mut padded = vec![0.0; n_pad];
    padded[extra..extra + n].copy_from_slice(f.values());

    // Support must stay within the central third of the padded grid.
    let tol = 1e-13 * f.sup_norm().max(1e-300);
    let third = n_pad / 3;
    for (k, v) in padded.iter().enumerate() {
        if (k < third || k >= n_pad - third) && v.abs() > tol {
            return Err(HilbertError::SupportTooWide);
        }
    }

    let pf = Field::new(pad_grid, padded, f.label.clone(), f.time);
    let hp = hilbert_spectral(&pf)?;
    let values = hp.values()[extra..extra + n].to_vec();
    Ok(Field::new(grid, values, f.label.clone(), f.time))
}

/// Gauss-Legendre nodes/weights on [-1, 1], 12 points.
const GL_NODES: [f64; 12] = [
    -0.9815606342467192,
    -0.9041172563704749,
    -0.7699026741943047,
    -0.5873179542866175,
    -0.3678314989981802,
    -0.1252334085114689,
    0.1252334085114689,
    0.3678314989981802,
    0.5873179542866175,
    0.7699026741943047,
    0.9041172563704749,
    0.9815606342467192,
];
const GL_WEIGHTS: [f64; 12] = [
    0.0471753363865118,
    0.1069393259953184,
    0.1600783285433462,
    0.2031674267230659,
    0.2334925365383548,
    0.2491470458134028,
    0.2491470458134028,
    0.2334925365383548,
    0.2031674267230659,
    0.1600783285433462,
    0.1069393259953184,
    0.0471753363865118,
];

fn gl_integrate(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (t, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        acc += w * f(mid + half * t);
    }
    acc * half
}

/// Six-point Lagrange interpolation on the periodic uniform grid.
fn lagrange6_eval(grid: Grid1D, values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    let h = grid.spacing();
    let t = (x - grid.x_min()) / h;
    let i0 = t.floor() as i64;
    let u = t - i0 as f64;
    // nodes at offsets -2..=3 from i0; Lagrange basis in the local variable u
    let mut acc = 0.0;
    for (m, off) in (-2i64..=3).enumerate() {
        let idx = (i0 + off).rem_euclid(n as i64) as usize;
        let mut w = 1.0;
        for (mm, off2) in (-2i64..=3).enumerate() {
            if mm != m {
                w *= (u - off2 as f64) / ((off - off2) as f64);
            }
        }
        acc += w * values[idx];
    }
    acc
}

/// Composite Gauss-Legendre integration with panels no wider than `max_panel`.
fn composite_gl(a: f64, b: f64, max_panel: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n_panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
    let w = (b - a) / n_panels as f64;
    let mut acc = 0.0;
    for k in 0..n_panels {
        acc += gl_integrate(a + k as f64 * w, a + (k + 1) as f64 * w, &f);
    }
    acc
}

/// Principal-value Hilbert transform at a single point, with the
/// near/middle/far decomposition: the near piece is regularized by
/// subtracting f(x), the middle piece runs out to unit distance, and the far
/// piece truncates at the field's support boundary.
pub fn hilbert_pv_point(f: &Field, x: f64, near_radius: f64) -> Result<f64, HilbertError> {
    let grid = f.grid();
    if !grid.contains_interior(x) {
        return Err(HilbertError::Grid(GridError::PointOutsideGrid(x)));
    }
    if near_radius <= 2.0 * grid.spacing() {
        return Err(HilbertError::RadiusTooSmall(near_radius));
    }
    f.check_finite()?;

    let vals = f.values();
    let eval = |y: f64| lagrange6_eval(grid, vals, y);
    let fx = eval(x);

    // Truncate the far field at the support boundary.
    let tol = 1e-13 * f.sup_norm().max(1e-300);
    let mut lo = grid.x_min();
    let mut hi = grid.x_max();
    let pts: Vec<f64> = grid.points().collect();
    if let Some(first) = vals.iter().position(|v| v.abs() > tol) {
        let last = vals.iter().rposition(|v| v.abs() > tol).unwrap();
        lo = (pts[first] - grid.spacing()).max(lo);
        hi = (pts[last] + grid.spacing()).min(hi);
    }

    let min_r = 2.5 * grid.spacing();
    let r = near_radius
        .min((x - lo).max(min_r))
        .min((hi - x).max(min_r));

    // Near: regularized integrand; panel edges sit at x so nodes avoid it.
    let near = |y: f64| (fx - eval(y)) / (y - x);
    let mut acc = 0.0;
    for (a, b) in [
        (x - r, x - r * 0.5),
        (x - r * 0.5, x),
        (x, x + r * 0.5),
        (x + r * 0.5, x + r),
    ] {
        acc += gl_integrate(a, b, near);
    }

    // Middle (r..1 from x) and far (beyond unit distance, out to the support
    // boundary): raw kernel, fixed-width composite panels so oscillatory
    // fields stay resolved.
    let raw = |y: f64| eval(y) / (x - y);
    let mid_panel = (0.25 * r).max(4.0 * grid.spacing()).min(0.25);
    let far_panel: f64 = 0.5;
    if r < 1.0 {
        acc += composite_gl(x + r, (x + 1.0).min(hi), mid_panel, raw);
        acc += composite_gl((x - 1.0).max(lo), x - r, mid_panel, raw);
    }
    acc += composite_gl((x + r.max(1.0)).min(hi), hi, far_panel, raw);
    acc += composite_gl(lo, (x - r.max(1.0)).max(lo), far_panel, raw);

    Ok(acc / std::f64::consts::PI)
}
