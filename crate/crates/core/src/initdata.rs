//! Construction and validation of the two-parameter initial datum family:
//! a profile core joined to compact support, a small free perturbation, and
//! the (alpha, beta) tuning directions entering through windowed monomials.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{local_jet, Field, Grid1D, GridError};
use crate::profile::{ui_eval, ProfileError};

#[derive(Debug, Error, PartialEq)]
pub enum InitError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("grid [{0}, {1}] too small; need at least [{2}, {3}]")]
    GridTooSmall(f64, f64, f64, f64),
    #[error("epsilon {0} outside (0, 0.5]")]
    BadEpsilon(f64),
    #[error("(alpha, beta) = ({0}, {1}) outside the allowed rectangle")]
    ParametersOutOfRange(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UhatFamily {
    #[default]
    Zero,
    SmallBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChiTransition {
    /// Degree-9 smoothstep transition: C^4 joins at both ends.
    #[default]
    QuinticSmoothstep,
    /// Near-constant slope across most of the transition; the slope ramps
    /// are C^3 so the cutoff itself is C^4. Curvature stays below 12; no
    /// C^1 unit transition can have curvature below 4.
    MollifiedLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// inverse initial slope scale; u0'(0) = -1/epsilon
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa0: f64,
    pub uhat_family: UhatFamily,
    pub uhat_amplitude: f64,
    pub chi_transition: ChiTransition,
    /// profile family index: 2 is the unstable target, 1 the stable control
    pub family_index: usize,
    /// allowed rectangle |alpha| <= c_alpha * epsilon, |beta| <= c_beta * epsilon
    pub c_alpha: f64,
    pub c_beta: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            alpha: 0.0,
            beta: 0.0,
            kappa0: 0.0,
            uhat_family: UhatFamily::Zero,
            uhat_amplitude: 0.0,
            chi_transition: ChiTransition::QuinticSmoothstep,
            family_index: 2,
            c_alpha: 1.0,
            c_beta: 1.0,
        }
    }
}

impl InitConfig {
    pub fn validate_params(&self) -> Result<(), InitError> {
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return Err(InitError::BadEpsilon(self.epsilon));
        }
        if self.alpha.abs() > self.c_alpha * self.epsilon
            || self.beta.abs() > self.c_beta * self.epsilon
        {
            return Err(InitError::ParametersOutOfRange(self.alpha, self.beta));
        }
        Ok(())
    }

    /// Half-width of the profile core in self-similar coordinates.
    pub fn core_radius(&self) -> f64 {
        self.epsilon.powf(-1.25)
    }

    pub fn with_parameters(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }
}

/// Degree-9 smoothstep: 0 at 0, 1 at 1, first four derivatives vanish at
/// both ends.
fn smoothstep4(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let t5 = t.powi(5);
    t5 * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + t * 70.0))))
}

/// Half-width of each slope ramp in the near-linear transition.
const RAMP: f64 = 0.25;

/// Degree-7 smoothstep (C^3 joins), the slope ramp shape whose integral
/// drives the near-linear transition; kept alongside the integral as its
/// consistency oracle.
#[cfg_attr(not(test), allow(dead_code))]
fn ramp7(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let t4 = t.powi(4);
    t4 * (35.0 + t * (-84.0 + t * (70.0 + t * -20.0)))
}

/// Antiderivative of ramp7 with value 0 at 0; ramp7_integral(1) = 1/2.
fn ramp7_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return t - 0.5;
    }
    let t5 = t.powi(5);
    t5 * (7.0 + t * (-14.0 + t * (10.0 + t * -2.5)))
}

/// Near-linear unit transition: 1 at t=0 down to 0 at t=1, slope constant
/// (-1/(1-RAMP)) outside two C^3 ramps of width RAMP.
fn mollified_linear(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    // integral of the slope plateau from 0 to t
    let integral = if t <= RAMP {
        RAMP * ramp7_integral(t / RAMP)
    } else if t <= 1.0 - RAMP {
        RAMP * 0.5 + (t - RAMP)
    } else {
        (1.0 - RAMP) - RAMP * ramp7_integral((1.0 - t) / RAMP)
    };
    1.0 - integral / (1.0 - RAMP)
}

/// Even C^4 cutoff: exactly 1 on [-1,1], exactly 0 for |X| >= 2, monotone
/// on the transition.
pub fn chi_eval(x: f64, transition: ChiTransition) -> f64 {
    let t = x.abs() - 1.0;
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    match transition {
        ChiTransition::QuinticSmoothstep => 1.0 - smoothstep4(t),
        ChiTransition::MollifiedLinear => mollified_linear(t),
    }
}

/// Free perturbation in self-similar coordinates. Vanishes at 0 to orders
/// 0, 1, 4, 5; compactly supported in |X| <= 2.
pub fn uhat_eval(x: f64, cfg: &InitConfig) -> f64 {
    match cfg.uhat_family {
        UhatFamily::Zero => 0.0,
        UhatFamily::SmallBump => {
            cfg.uhat_amplitude * x * x * chi_eval(x, cfg.chi_transition)
        }
    }
}

/// Derivatives of the free perturbation at 0 (orders 0..=5), exact since the
/// cutoff is identically 1 there.
pub fn uhat_origin_jet(cfg: &InitConfig) -> [f64; 6] {
    match cfg.uhat_family {
        UhatFamily::Zero => [0.0; 6],
        UhatFamily::SmallBump => [0.0, 0.0, 2.0 * cfg.uhat_amplitude, 0.0, 0.0, 0.0],
    }
}

/// The datum's derivatives at X = 0 (orders 0..=5), exact by construction:
/// (0, -1, 2a + perturbation, 6b + perturbation, 0, (2i+1)! + perturbation).
pub fn initial_origin_jet(cfg: &InitConfig) -> [f64; 6] {
    let uh = uhat_origin_jet(cfg);
    let mut jet = [0.0; 6];
    jet[1] = -1.0;
    jet[2] = 2.0 * cfg.alpha + uh[2];
    jet[3] = 6.0 * cfg.beta + uh[3];
    let p = 2 * cfg.family_index + 1;
    if p < 6 {
        jet[p] += (1..=p).product::<usize>() as f64;
    }
    jet[5] += uh[5];
    jet
}

/// Datum value in self-similar coordinates at X, before grid sampling:
/// profile core windowed to the support radius (the constant offset making
/// the physical datum vanish outside its support rides inside the window),
/// plus the free perturbation and the windowed tuning monomials.
pub fn initial_selfsim_value(x: f64, cfg: &InitConfig) -> Result<f64, InitError> {
    let chi = |y: f64| chi_eval(y, cfg.chi_transition);
    let core_window = chi(2.0 * x / cfg.core_radius());
    let k = cfg.kappa0 * cfg.epsilon.powf(-0.25);
    let core = if core_window == 0.0 {
        0.0
    } else {
        (ui_eval(x, cfg.family_index)? + k) * core_window
    };
    Ok(core - k + uhat_eval(x, cfg) + chi(x) * (cfg.alpha * x * x + cfg.beta * x.powi(3)))
}

/// Sample the datum on a self-similar grid spanning the support core.
pub fn build_initial_selfsim(cfg: &InitConfig, x_grid: Grid1D) -> Result<Field, InitError> {
    cfg.validate_params()?;
    let r = cfg.core_radius();
    if x_grid.x_min() > -r || x_grid.x_max() < r {
        return Err(InitError::GridTooSmall(
            x_grid.x_min(),
            x_grid.x_max(),
            -r,
            r,
        ));
    }
    let mut values = Vec::with_capacity(x_grid.len());
    for x in x_grid.points() {
        values.push(initial_selfsim_value(x, cfg)?);
    }
    Ok(Field::new(x_grid, values, "U0", 0.0))
}

/// Physical datum value at x; compactly supported in [-1, 1] and
/// u0(0) = kappa0, u0'(0) = -1/epsilon.
pub fn initial_physical_value(x: f64, cfg: &InitConfig) -> Result<f64, InitError> {
    let xx = x * cfg.epsilon.powf(-1.25);
    if xx.abs() >= cfg.core_radius() {
        return Ok(0.0);
    }
    Ok(cfg.epsilon.powf(0.25) * initial_selfsim_value(xx, cfg)? + cfg.kappa0)
}

/// Sample the physical datum at the run's start time t0 = -epsilon.
pub fn build_initial_physical(cfg: &InitConfig, grid: Grid1D) -> Result<Field, InitError> {
    cfg.validate_params()?;
    if grid.x_min() > -2.0 || grid.x_max() < 2.0 {
        return Err(InitError::GridTooSmall(grid.x_min(), grid.x_max(), -2.0, 2.0));
    }
    let mut values = Vec::with_capacity(grid.len());
    for x in grid.points() {
        values.push(initial_physical_value(x, cfg)?);
    }
    Ok(Field::new(grid, values, "u0", -cfg.epsilon))
}

/// Parameter-derivative datum fields: the tangent starting states
/// d(u0)/d(alpha) and d(u0)/d(beta), sampled on the physical grid.
pub fn tangent_initial_physical(
    cfg: &InitConfig,
    grid: Grid1D,
) -> Result<(Field, Field), InitError> {
    let scale = cfg.epsilon.powf(0.25);
    let inv = cfg.epsilon.powf(-1.25);
    let mut va = Vec::with_capacity(grid.len());
    let mut vb = Vec::with_capacity(grid.len());
    for x in grid.points() {
        let xx = x * inv;
        let chi = chi_eval(xx, cfg.chi_transition);
        va.push(scale * chi * xx * xx);
        vb.push(scale * chi * xx.powi(3));
    }
    Ok((
        Field::new(grid, va, "du0_dalpha", -cfg.epsilon),
        Field::new(grid, vb, "du0_dbeta", -cfg.epsilon),
    ))
}

/// One named check with a signed margin (>= 0 means pass).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitCheck {
    pub name: String,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct InitReport {
    pub checks: Vec<InitCheck>,
}

impl InitReport {
    fn push(&mut self, name: &str, margin: f64) {
        self.checks.push(InitCheck {
            name: name.to_string(),
            margin,
            pass: margin >= 0.0,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&InitCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Validate a sampled physical datum against the construction's contracts:
/// support radius, origin values, slope scale, perturbation smallness, and
/// the initial slope L2 budget in self-similar coordinates.
pub fn validate_initial(cfg: &InitConfig, u0: &Field) -> Result<InitReport, InitError> {
    let mut report = InitReport::default();
    let grid = u0.grid();

    // support radius <= 1 (physical)
    let tol = 1e-12 * u0.sup_norm().max(1e-300);
    let mut radius: f64 = 0.0;
    for (x, v) in grid.points().zip(u0.values()) {
        if v.abs() > tol {
            radius = radius.max(x.abs());
        }
    }
    report.push("support_radius", 1.0 - radius + grid.spacing());

    // origin values via interpolation of the sampled field
    let jet = local_jet(u0, 0.0, 1).map_err(InitError::Grid)?;
    let jtol = 1e-5 / cfg.epsilon;
    report.push("origin_value", 1e-4 - (jet[0] - cfg.kappa0).abs());
    report.push("origin_slope", jtol - (jet[1] + 1.0 / cfg.epsilon).abs());

    // minimum slope is attained near x = 0 with value -1/epsilon
    let du = crate::grid::spectral_derivative(u0, 1).map_err(InitError::Grid)?;
    let min_slope = du.values().iter().cloned().fold(f64::INFINITY, f64::min);
    report.push("min_slope_scale", 0.02 / cfg.epsilon - (min_slope + 1.0 / cfg.epsilon).abs());

    // free perturbation: origin orders and middle-field envelope
    let uh = uhat_origin_jet(cfg);
    report.push("uhat_origin_orders", {
        let hard = uh[0].abs() + uh[1].abs() + uh[4].abs() + uh[5].abs();
        let soft = (uh[2].abs().max(uh[3].abs()) - cfg.epsilon).max(0.0);
        -(hard + soft)
    });
    let mut envelope_margin = f64::INFINITY;
    let mut xs: f64 = -10.0;
    while xs <= 10.0 {
        let env = cfg.epsilon * (1.0 + xs.powi(4)).powf(-0.2);
        envelope_margin = envelope_margin.min(env - uhat_eval(xs, cfg).abs());
        xs += 0.05;
    }
    report.push("uhat_envelope", envelope_margin);

    // slope L2 budget in self-similar coordinates at the start time:
    // ||dU/dX||_{L2(dX)} = epsilon^{3/8} ||du/dx||_{L2(dx)}
    let slope_l2 = cfg.epsilon.powf(0.375) * du.l2_norm();
    report.push("slope_l2_budget", 6.0f64.sqrt() - slope_l2);

    Ok(report)
}
