//! Time integration of the Burgers–Hilbert equation in physical
//! coordinates: classical RK4 with a CFL bound on the transport speed,
//! blowup-proximity stopping, and co-evolution of tangent (first-order
//! parameter-derivative) fields for variational Jacobians.

use crate::grid::{dealias, spectral_derivative, spectral_refine, Field, GridError};
use crate::hilbert::{hilbert_apply, HilbertError, HilbertMethod};
use crate::selfsim::{extract_modulation, ModulationState, SelfSimError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Frame(#[from] SelfSimError),
    #[error("time step {dt} exceeds the stability bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("recorded frame time failed to increase: {prev} -> {next}")]
    NonMonotoneS { prev: f64, next: f64 },
    #[error("run ended at s = {s_final} before reaching the target s = {s_target}")]
    TargetNotReached { s_target: f64, s_final: f64 },
    #[error("bad solver configuration: {0}")]
    BadConfig(String),
}

/// Solver settings for a single run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// Courant number against max(1, sup|u|); must lie in (0, 1/2].
    pub cfl: f64,
    /// Apply the 2/3-rule spectral filter to the quadratic term and states.
    pub dealias: bool,
    /// Stop once sup|du/dx| exceeds this.
    pub stop_slope: f64,
    /// Hard stop time.
    pub t_max: f64,
    /// Record a frame every this many steps.
    pub output_every: usize,
    /// How to evaluate the nonlocal term.
    pub hilbert_method: HilbertMethod,
    /// Drop the nonlocal term entirely (pure transport oracle runs).
    pub inviscid: bool,
    /// Double the resolution by Fourier zero-padding whenever the shock core
    /// scale (1/sup|du/dx|)^{5/4} falls below this many grid spacings.
    pub refine_spacings: f64,
    /// Maximum number of resolution doublings per run; 0 disables refinement.
    pub max_refinements: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            dealias: true,
            stop_slope: 500.0,
            t_max: 0.0,
            output_every: 8,
            hilbert_method: HilbertMethod::default(),
            inviscid: false,
            refine_spacings: 16.0,
            max_refinements: 0,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(EvolveError::BadConfig(format!(
                "cfl must lie in (0, 0.5], got {}",
                self.cfl
            )));
        }
        if !(self.stop_slope > 0.0) {
            return Err(EvolveError::BadConfig(format!(
                "stop_slope must be positive, got {}",
                self.stop_slope
            )));
        }
        if self.output_every == 0 {
            return Err(EvolveError::BadConfig(
                "output_every must be positive".into(),
            ));
        }
        if !self.t_max.is_finite() {
            return Err(EvolveError::BadConfig("t_max must be finite".into()));
        }
        if !(self.refine_spacings.is_finite() && self.refine_spacings >= 0.0) {
            return Err(EvolveError::BadConfig(format!(
                "refine_spacings must be finite and non-negative, got {}",
                self.refine_spacings
            )));
        }
        Ok(())
    }
}

/// A state together with its two parameter-derivative fields.
#[derive(Debug, Clone)]
pub struct TangentPair {
    pub u: Field,
    pub v_alpha: Field,
    pub v_beta: Field,
}

/// Output of [`run`]: frames and frame-fit records at output times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frames: Vec<Field>,
    pub modulation: Vec<ModulationState>,
    pub stopped_by_slope: bool,
    pub steps: usize,
}

/// du/dt = -u du/dx + H[u], with the quadratic term de-aliased.
pub fn rhs_physical(u: &Field, cfg: &EvolveConfig) -> Result<Field, EvolveError> {
    let du = spectral_derivative(u, 1)?;
    let mut transport = u.zip(&du, |a, b| a * b);
    if cfg.dealias {
        transport = dealias(&transport);
    }
    if cfg.inviscid {
        return Ok(transport.map(|v| -v));
    }
    let h = hilbert_apply(u, &cfg.hilbert_method)?;
    Ok(transport.zip(&h, |adv, hh| hh - adv))
}

/// Linearization about `u`: dv/dt = -d(u v)/dx + H[v].
fn rhs_tangent(u: &Field, v: &Field, cfg: &EvolveConfig) -> Result<Field, EvolveError> {
    let mut product = u.zip(v, |a, b| a * b);
    if cfg.dealias {
        product = dealias(&product);
    }
    let flux = spectral_derivative(&product, 1)?;
    if cfg.inviscid {
        return Ok(flux.map(|v| -v));
    }
    let h = hilbert_apply(v, &cfg.hilbert_method)?;
    Ok(flux.zip(&h, |fx, hh| hh - fx))
}

/// Whether the state has outgrown its grid: the shock core scale, read off
/// the maximal slope, spans fewer than `refine_spacings` grid cells and the
/// doubling budget (counted against `n_base`, the resolution at run start)
/// is not exhausted.
fn wants_refinement(u: &Field, cfg: &EvolveConfig, n_base: usize) -> Result<bool, EvolveError> {
    if cfg.max_refinements == 0 {
        return Ok(false);
    }
    let levels = (u.grid().len() / n_base).trailing_zeros() as usize;
    if levels >= cfg.max_refinements {
        return Ok(false);
    }
    let slope = spectral_derivative(u, 1)?.sup_norm();
    if slope <= 0.0 {
        return Ok(false);
    }
    let core = slope.recip().powf(1.25);
    Ok(core < cfg.refine_spacings * u.grid().spacing())
}

/// Largest stable step for the state `u`.
pub fn cfl_limit(u: &Field, cfg: &EvolveConfig) -> f64 {
    cfg.cfl * u.grid().spacing() / u.sup_norm().max(1.0)
}

fn check_dt(u: &Field, dt: f64, cfg: &EvolveConfig) -> Result<(), EvolveError> {
    let limit = cfl_limit(u, cfg);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(EvolveError::CflViolation { dt, limit });
    }
    Ok(())
}

fn axpy(u: &Field, dt: f64, k: &Field) -> Field {
    u.zip(k, move |a, b| a + dt * b)
}

/// One classical RK4 step.
pub fn step(u: &Field, dt: f64, cfg: &EvolveConfig) -> Result<Field, EvolveError> {
    check_dt(u, dt, cfg)?;
    let k1 = rhs_physical(u, cfg)?;
    let k2 = rhs_physical(&axpy(u, 0.5 * dt, &k1), cfg)?;
    let k3 = rhs_physical(&axpy(u, 0.5 * dt, &k2), cfg)?;
    let k4 = rhs_physical(&axpy(u, dt, &k3), cfg)?;
    let mut next = Field::new(
        u.grid(),
        u.values()
            .iter()
            .zip(k1.values())
            .zip(k2.values())
            .zip(k3.values())
            .zip(k4.values())
            .map(|((((&v, a), b), c), d)| v + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d))
            .collect::<Vec<f64>>(),
        u.label.clone(),
        u.time + dt,
    );
    if cfg.dealias {
        next = dealias(&next);
    }
    next.time = u.time + dt;
    if !next.is_finite() {
        return Err(EvolveError::NonFiniteState { t: next.time });
    }
    Ok(next)
}

/// One RK4 step of the state and both tangents; the tangents see the same
/// RK4 stage values of `u`, so the map is exactly linear in (v_alpha, v_beta).
pub fn step_tangent(pair: &TangentPair, dt: f64, cfg: &EvolveConfig) -> Result<TangentPair, EvolveError> {
    check_dt(&pair.u, dt, cfg)?;
    let u = &pair.u;
    let k1 = rhs_physical(u, cfg)?;
    let u2 = axpy(u, 0.5 * dt, &k1);
    let k2 = rhs_physical(&u2, cfg)?;
    let u3 = axpy(u, 0.5 * dt, &k2);
    let k3 = rhs_physical(&u3, cfg)?;
    let u4 = axpy(u, dt, &k3);
    let k4 = rhs_physical(&u4, cfg)?;
    let stages = [u, &u2, &u3, &u4];

    let advance_tangent = |v: &Field| -> Result<Field, EvolveError> {
        if v.sup_norm() == 0.0 {
            let mut out = v.clone();
            out.time = v.time + dt;
            return Ok(out);
        }
        let l1 = rhs_tangent(stages[0], v, cfg)?;
        let l2 = rhs_tangent(stages[1], &axpy(v, 0.5 * dt, &l1), cfg)?;
        let l3 = rhs_tangent(stages[2], &axpy(v, 0.5 * dt, &l2), cfg)?;
        let l4 = rhs_tangent(stages[3], &axpy(v, dt, &l3), cfg)?;
        let mut next = Field::new(
            v.grid(),
            v.values()
                .iter()
                .zip(l1.values())
                .zip(l2.values())
                .zip(l3.values())
                .zip(l4.values())
                .map(|((((&v0, a), b), c), d)| v0 + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d))
                .collect::<Vec<f64>>(),
            v.label.clone(),
            v.time + dt,
        );
        if cfg.dealias {
            next = dealias(&next);
        }
        next.time = v.time + dt;
        if !next.is_finite() {
            return Err(EvolveError::NonFiniteState { t: next.time });
        }
        Ok(next)
    };

    let v_alpha = advance_tangent(&pair.v_alpha)?;
    let v_beta = advance_tangent(&pair.v_beta)?;
    let mut u_next = Field::new(
        u.grid(),
        u.values()
            .iter()
            .zip(k1.values())
            .zip(k2.values())
            .zip(k3.values())
            .zip(k4.values())
            .map(|((((&v, a), b), c), d)| v + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d))
            .collect::<Vec<f64>>(),
        u.label.clone(),
        u.time + dt,
    );
    if cfg.dealias {
        u_next = dealias(&u_next);
    }
    u_next.time = u.time + dt;
    if !u_next.is_finite() {
        return Err(EvolveError::NonFiniteState { t: u_next.time });
    }
    Ok(TangentPair {
        u: u_next,
        v_alpha,
        v_beta,
    })
}

/// Integrate from `u0` at time `t0` until the gradient stop or `t_max`,
/// recording the field and the fitted frame every `output_every` steps.
/// After the loop the frame-velocity entries (tau_dot, xi_dot, kappa_dot)
/// are filled by centered differences over the recorded sequence.
pub fn run(u0: &Field, t0: f64, cfg: &EvolveConfig) -> Result<Trajectory, EvolveError> {
    cfg.validate()?;
    let mut u = u0.clone();
    u.time = t0;
    let mut frames = Vec::new();
    let mut modulation: Vec<ModulationState> = Vec::new();
    let mut stopped_by_slope = false;
    let mut steps = 0usize;

    let record = |u: &Field,
                      modulation: &mut Vec<ModulationState>,
                      frames: &mut Vec<Field>|
     -> Result<(), EvolveError> {
        let hint = modulation.last().cloned();
        let m = extract_modulation(u, u.time, hint.as_ref())?;
        if let Some(prev) = modulation.last() {
            if m.s() <= prev.s() {
                return Err(EvolveError::NonMonotoneS {
                    prev: prev.s(),
                    next: m.s(),
                });
            }
        }
        modulation.push(m);
        frames.push(u.clone());
        Ok(())
    };

    let n_base = u0.grid().len();
    record(&u, &mut modulation, &mut frames)?;
    loop {
        let slope = spectral_derivative(&u, 1)?.sup_norm();
        if slope >= cfg.stop_slope {
            stopped_by_slope = true;
            break;
        }
        if u.time >= cfg.t_max - 1e-15 {
            break;
        }
        for _ in 0..cfg.output_every {
            if wants_refinement(&u, cfg, n_base)? {
                u = spectral_refine(&u)?;
            }
            let dt = cfl_limit(&u, cfg).min(cfg.t_max - u.time);
            if dt <= 0.0 {
                break;
            }
            u = step(&u, dt, cfg)?;
            steps += 1;
            if u.time >= cfg.t_max - 1e-15 {
                break;
            }
        }
        record(&u, &mut modulation, &mut frames)?;
    }
    fill_frame_velocities(&mut modulation);
    Ok(Trajectory {
        frames,
        modulation,
        stopped_by_slope,
        steps,
    })
}

/// Fill tau_dot / xi_dot / kappa_dot by finite differences in t over the
/// recorded sequence (centered in the interior, one-sided at the ends).
fn fill_frame_velocities(seq: &mut [ModulationState]) {
    let n = seq.len();
    if n < 2 {
        return;
    }
    let rate = |a: &ModulationState, b: &ModulationState| {
        let dt = b.t - a.t;
        (
            (b.tau - a.tau) / dt,
            (b.xi - a.xi) / dt,
            (b.kappa - a.kappa) / dt,
        )
    };
    for k in 0..n {
        let (lo, hi) = if k == 0 {
            (0, 1)
        } else if k == n - 1 {
            (n - 2, n - 1)
        } else {
            (k - 1, k + 1)
        };
        let (td, xd, kd) = rate(&seq[lo].clone(), &seq[hi].clone());
        seq[k].tau_dot = td;
        seq[k].xi_dot = xd;
        seq[k].kappa_dot = kd;
    }
}

/// Advance a tangent pair until the fitted frame reaches `s_target`
/// (s = -log(tau - t)), landing on it by a secant iteration in physical
/// time. Returns the pair and the fitted frame at the landing time.
pub fn run_pair_to_s(
    pair0: &TangentPair,
    t0: f64,
    cfg: &EvolveConfig,
    s_target: f64,
) -> Result<(TangentPair, ModulationState), EvolveError> {
    cfg.validate()?;
    let mut pair = pair0.clone();
    pair.u.time = t0;
    pair.v_alpha.time = t0;
    pair.v_beta.time = t0;
    let n_base = pair0.u.grid().len();

    let refine_pair = |p: &mut TangentPair| -> Result<(), EvolveError> {
        p.u = spectral_refine(&p.u)?;
        p.v_alpha = spectral_refine(&p.v_alpha)?;
        p.v_beta = spectral_refine(&p.v_beta)?;
        Ok(())
    };

    let fit = |p: &TangentPair, hint: Option<&ModulationState>| {
        extract_modulation(&p.u, p.u.time, hint)
    };
    let mut m_prev = fit(&pair, None)?;
    if m_prev.s() >= s_target {
        return Err(EvolveError::TargetNotReached {
            s_target,
            s_final: m_prev.s(),
        });
    }

    // march in output blocks until the target is bracketed
    let mut prev_pair;
    let m_cur;
    loop {
        let slope = spectral_derivative(&pair.u, 1)?.sup_norm();
        if slope >= cfg.stop_slope || pair.u.time >= cfg.t_max - 1e-15 {
            return Err(EvolveError::TargetNotReached {
                s_target,
                s_final: m_prev.s(),
            });
        }
        prev_pair = pair.clone();
        for _ in 0..cfg.output_every {
            if wants_refinement(&pair.u, cfg, n_base)? {
                refine_pair(&mut pair)?;
            }
            let dt = cfl_limit(&pair.u, cfg).min(cfg.t_max - pair.u.time);
            if dt <= 0.0 {
                break;
            }
            pair = step_tangent(&pair, dt, cfg)?;
        }
        let m = fit(&pair, Some(&m_prev))?;
        if m.s() >= s_target {
            m_cur = m;
            break;
        }
        m_prev = m;
    }

    // land on s_target: regula falsi in t on the monotone recorded s(t);
    // every probe re-integrates from the state at the bracket's left edge
    let t_anchor = prev_pair.u.time;
    let mut lo = (t_anchor, m_prev.s());
    let mut hi = (pair.u.time, m_cur.s());
    let mut best = (pair, m_cur);
    for _ in 0..60 {
        if (best.1.s() - s_target).abs() < 1e-12 * (1.0 + s_target.abs()) {
            break;
        }
        let t_guess = lo.0 + (hi.0 - lo.0) * (s_target - lo.1) / (hi.1 - lo.1);
        let t_guess = t_guess.clamp(lo.0, hi.0);
        let mut probe = prev_pair.clone();
        while probe.u.time < t_guess - 1e-16 {
            if wants_refinement(&probe.u, cfg, n_base)? {
                refine_pair(&mut probe)?;
            }
            let dt = cfl_limit(&probe.u, cfg).min(t_guess - probe.u.time);
            probe = step_tangent(&probe, dt, cfg)?;
        }
        let m = fit(&probe, Some(&m_prev))?;
        let s = m.s();
        if s < s_target {
            lo = (t_guess, s);
        } else {
            hi = (t_guess, s);
        }
        if (s - s_target).abs() < (best.1.s() - s_target).abs() {
            best = (probe, m);
        }
        if hi.0 - lo.0 < 1e-17 * (1.0 + hi.0.abs()) {
            break;
        }
    }
    Ok(best)
}

/// Advance a plain state to `s_target`; convenience wrapper over
/// [`run_pair_to_s`] with zero tangents.
pub fn run_to_s(
    u0: &Field,
    t0: f64,
    cfg: &EvolveConfig,
    s_target: f64,
) -> Result<(Field, ModulationState), EvolveError> {
    let zero = u0.map(|_| 0.0);
    let pair = TangentPair {
        u: u0.clone(),
        v_alpha: zero.clone(),
        v_beta: zero,
    };
    let (pair, m) = run_pair_to_s(&pair, t0, cfg, s_target)?;
    Ok((pair.u, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::profile::ui_eval;
    use std::f64::consts::PI;

    fn small_cfg() -> EvolveConfig {
        EvolveConfig {
            t_max: 1.0,
            ..EvolveConfig::default()
        }
    }

    fn smooth_window(t: f64) -> f64 {
        let r = t.abs() - 1.0;
        if r <= 0.0 {
            1.0
        } else if r >= 1.0 {
            0.0
        } else {
            let a = (-1.0 / r).exp();
            let b = (-1.0 / (1.0 - r)).exp();
            b / (a + b)
        }
    }

    #[test]
    fn rhs_zero_is_zero() {
        let grid = Grid1D::new(-4.0, 4.0, 256).unwrap();
        let u = Field::zeros(grid);
        let r = rhs_physical(&u, &small_cfg()).unwrap();
        assert_eq!(r.sup_norm(), 0.0);
    }

    #[test]
    fn rhs_matches_analytic_for_sine() {
        let grid = Grid1D::new(-PI, PI, 512).unwrap();
        let u = Field::from_fn(grid, |x| x.sin());
        let cfg = EvolveConfig {
            dealias: false,
            ..small_cfg()
        };
        let r = rhs_physical(&u, &cfg).unwrap();
        for (x, v) in grid.points().zip(r.values()) {
            let want = -0.5 * (2.0 * x).sin() - x.cos();
            assert!((v - want).abs() < 1e-10, "at {x}: {v} vs {want}");
        }
    }

    #[test]
    fn rhs_is_energy_neutral() {
        let grid = Grid1D::new(-4.0, 4.0, 1024).unwrap();
        let u = Field::from_fn(grid, |x| smooth_window(x) * (0.3 + x).cos());
        let r = rhs_physical(&u, &small_cfg()).unwrap();
        let h = grid.spacing();
        let inner: f64 = u
            .values()
            .iter()
            .zip(r.values())
            .map(|(a, b)| a * b * h)
            .sum();
        assert!(inner.abs() < 1e-10, "energy production {inner}");
    }

    #[test]
    fn step_rejects_large_dt() {
        let grid = Grid1D::new(-4.0, 4.0, 256).unwrap();
        let u = Field::from_fn(grid, |x| smooth_window(x));
        let cfg = small_cfg();
        let dt = 10.0 * cfl_limit(&u, &cfg);
        assert!(matches!(
            step(&u, dt, &cfg),
            Err(EvolveError::CflViolation { .. })
        ));
    }

    #[test]
    fn step_self_convergence_is_fourth_order() {
        // coarse grid so the CFL-capped step is large enough for the time
        // error to clear the rounding floor
        let grid = Grid1D::new(-4.0, 4.0, 128).unwrap();
        // band-limited datum: the de-aliased dynamics is then an exact ODE
        // on the retained modes, so halving dt isolates the time order
        let k0 = 2.0 * PI / 8.0;
        let u0 = Field::from_fn(grid, |x| 0.5 * (2.0 * k0 * x).sin() + 0.2 * (3.0 * k0 * x).cos());
        let cfg = small_cfg();
        let advance = |nsteps: usize, dt: f64| {
            let mut u = u0.clone();
            for _ in 0..nsteps {
                u = step(&u, dt, &cfg).unwrap();
            }
            u
        };
        let dt = cfl_limit(&u0, &cfg);
        let a = advance(32, dt);
        let b = advance(64, 0.5 * dt);
        let c = advance(128, 0.25 * dt);
        let e1 = a.zip(&b, |x, y| x - y).sup_norm();
        let e2 = b.zip(&c, |x, y| x - y).sup_norm();
        let order = (e1 / e2).log2();
        assert!(order > 3.8 && order < 4.5, "observed order {order} (e1={e1}, e2={e2})");
    }

    #[test]
    fn tangent_of_zero_stays_zero() {
        let grid = Grid1D::new(-4.0, 4.0, 256).unwrap();
        let u = Field::from_fn(grid, |x| 0.3 * smooth_window(x));
        let zero = Field::zeros(grid);
        let pair = TangentPair {
            u,
            v_alpha: zero.clone(),
            v_beta: zero,
        };
        let cfg = small_cfg();
        let dt = cfl_limit(&pair.u, &cfg);
        let next = step_tangent(&pair, dt, &cfg).unwrap();
        assert_eq!(next.v_alpha.sup_norm(), 0.0);
        assert_eq!(next.v_beta.sup_norm(), 0.0);
    }

    #[test]
    fn tangent_flow_is_linear() {
        let grid = Grid1D::new(-4.0, 4.0, 256).unwrap();
        let u = Field::from_fn(grid, |x| 0.3 * smooth_window(x) * x.cos());
        let va = Field::from_fn(grid, |x| smooth_window(x) * x * x);
        let vb = Field::from_fn(grid, |x| smooth_window(x) * x);
        let cfg = small_cfg();
        let dt = cfl_limit(&u, &cfg);
        let make = |a: &Field, b: &Field| TangentPair {
            u: u.clone(),
            v_alpha: a.clone(),
            v_beta: b.clone(),
        };
        let combo = va.zip(&vb, |a, b| 2.0 * a - 3.0 * b);
        let out_combo = step_tangent(&make(&combo, &vb), dt, &cfg).unwrap();
        let out_parts = step_tangent(&make(&va, &vb), dt, &cfg).unwrap();
        let recombined = out_parts
            .v_alpha
            .zip(&out_parts.v_beta, |a, b| 2.0 * a - 3.0 * b);
        let diff = out_combo
            .v_alpha
            .zip(&recombined, |a, b| a - b)
            .sup_norm();
        let scale = recombined.sup_norm().max(1.0);
        assert!(diff < 1e-12 * scale, "nonlinearity {diff}");
    }

    #[test]
    fn tangent_matches_finite_difference() {
        // perturb the datum along a fixed direction and compare two
        // nonlinear runs against the co-evolved tangent
        let grid = Grid1D::new(-4.0, 4.0, 512).unwrap();
        let base = |x: f64| 0.4 * smooth_window(x) * (1.2 * x).cos();
        let dir = |x: f64| smooth_window(x) * x;
        let cfg = small_cfg();
        let h = 1e-4;
        let advance = |u0: Field, nsteps: usize, dt: f64| {
            let mut u = u0;
            for _ in 0..nsteps {
                u = step(&u, dt, &cfg).unwrap();
            }
            u
        };
        let u0 = Field::from_fn(grid, base);
        let dt = 0.5 * cfl_limit(&u0, &cfg);
        let nsteps = 20;
        let up = advance(Field::from_fn(grid, |x| base(x) + h * dir(x)), nsteps, dt);
        let um = advance(Field::from_fn(grid, |x| base(x) - h * dir(x)), nsteps, dt);
        let fd = up.zip(&um, |a, b| (a - b) / (2.0 * h));

        let mut pair = TangentPair {
            u: u0,
            v_alpha: Field::from_fn(grid, dir),
            v_beta: Field::zeros(grid),
        };
        for _ in 0..nsteps {
            pair = step_tangent(&pair, dt, &cfg).unwrap();
        }
        let err = fd.zip(&pair.v_alpha, |a, b| a - b).sup_norm();
        let scale = pair.v_alpha.sup_norm();
        assert!(err < 1e-5 * scale, "tangent mismatch {err} vs scale {scale}");
    }

    /// Pure-transport run from an exact self-similar datum: the blowup time
    /// read from the frame fit must stay constant.
    #[test]
    fn inviscid_run_keeps_blowup_time_constant() {
        let grid = Grid1D::new(-4.0, 4.0, 8192).unwrap();
        let t_star = 0.1;
        let u0 = Field::from_fn(grid, |x| {
            let w = smooth_window(x);
            if w == 0.0 {
                0.0
            } else {
                let gap: f64 = t_star;
                gap.powf(0.25) * ui_eval(x / gap.powf(1.25), 2).unwrap() * w
            }
        });
        let cfg = EvolveConfig {
            inviscid: true,
            t_max: 0.06,
            output_every: 16,
            ..EvolveConfig::default()
        };
        let traj = run(&u0, 0.0, &cfg).unwrap();
        assert!(traj.modulation.len() >= 4);
        for m in &traj.modulation {
            assert!(
                (m.tau - t_star).abs() < 1e-6,
                "tau {} at t {}",
                m.tau,
                m.t
            );
            assert!(m.xi.abs() < 1e-5, "xi {} at t {}", m.xi, m.t);
        }
        // s increases and the frame velocities are small
        for w in traj.modulation.windows(2) {
            assert!(w[1].s() > w[0].s());
        }
        for m in &traj.modulation[1..traj.modulation.len() - 1] {
            assert!(m.tau_dot.abs() < 1e-4, "tau_dot {}", m.tau_dot);
        }
    }

    #[test]
    fn l2_norm_is_conserved() {
        let grid = Grid1D::new(-4.0, 4.0, 1024).unwrap();
        let u0 = Field::from_fn(grid, |x| 0.5 * smooth_window(x) * (1.3 * x).sin());
        let cfg = EvolveConfig {
            t_max: 0.3,
            ..EvolveConfig::default()
        };
        let mut u = u0.clone();
        while u.time < cfg.t_max - 1e-12 {
            let dt = cfl_limit(&u, &cfg).min(cfg.t_max - u.time);
            u = step(&u, dt, &cfg).unwrap();
        }
        let drift = (u.l2_norm() - u0.l2_norm()).abs() / u0.l2_norm();
        assert!(drift < 1e-8 * 0.3_f64.max(1.0), "relative drift {drift}");
    }

    #[test]
    fn run_to_s_lands_on_target() {
        let grid = Grid1D::new(-4.0, 4.0, 8192).unwrap();
        let t_star = 0.1;
        let u0 = Field::from_fn(grid, |x| {
            let w = smooth_window(x);
            if w == 0.0 {
                0.0
            } else {
                let gap: f64 = t_star;
                gap.powf(0.25) * ui_eval(x / gap.powf(1.25), 2).unwrap() * w
            }
        });
        let cfg = EvolveConfig {
            inviscid: true,
            t_max: 0.09,
            output_every: 16,
            ..EvolveConfig::default()
        };
        // target halfway to blowup in s
        let s_target = -(0.05_f64).ln();
        let (u, m) = run_to_s(&u0, 0.0, &cfg, s_target).unwrap();
        assert!((m.s() - s_target).abs() < 1e-9, "s {} vs {}", m.s(), s_target);
        assert!((m.tau - t_star).abs() < 1e-6);
        assert!(u.time > 0.0);
    }

    /// A steepening transport run outgrows its grid; with refinement enabled
    /// it must double the resolution and keep producing consistent frames.
    #[test]
    fn refinement_triggers_on_steepening() {
        let grid = Grid1D::new(-4.0, 4.0, 2048).unwrap();
        let t_star = 0.1;
        let u0 = Field::from_fn(grid, |x| {
            let w = smooth_window(x);
            if w == 0.0 {
                0.0
            } else {
                let gap: f64 = t_star;
                gap.powf(0.25) * ui_eval(x / gap.powf(1.25), 2).unwrap() * w
            }
        });
        let cfg = EvolveConfig {
            inviscid: true,
            t_max: 0.085,
            output_every: 16,
            stop_slope: 600.0,
            max_refinements: 2,
            refine_spacings: 8.0,
            ..EvolveConfig::default()
        };
        let traj = run(&u0, 0.0, &cfg).unwrap();
        let n_final = traj.frames.last().unwrap().grid().len();
        assert!(n_final > 2048, "expected a refined final grid, got {n_final}");
        assert!(n_final <= 8192, "refinement budget exceeded: {n_final}");
        // the fitted blowup time must stay constant across refinements
        for m in &traj.modulation {
            assert!((m.tau - t_star).abs() < 1e-4, "tau {} at t {}", m.tau, m.t);
        }
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = EvolveConfig::default();
        cfg.cfl = 0.9;
        assert!(cfg.validate().is_err());
        let mut cfg = EvolveConfig::default();
        cfg.output_every = 0;
        assert!(cfg.validate().is_err());
    }
}
