//! Newton shooting on the two unstable directions: find (alpha, beta) such
//! that the second and third origin derivatives of the rescaled profile are
//! driven to zero at the checkpoint times s_n = -log(epsilon) + n.

use crate::evolve::{run_pair_to_s, EvolveConfig, EvolveError, TangentPair};
use crate::grid::{Field, Grid1D, GridError};
use crate::initdata::{
    build_initial_physical, initial_origin_jet, tangent_initial_physical, uhat_origin_jet,
    InitConfig, InitError,
};
use crate::selfsim::{stable_jet, ModulationState};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShootError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("checkpoint s = {s_target} lies beyond the reachable window")]
    TargetBeyondBlowup { s_target: f64 },
    #[error("jacobian is singular: det = {det}, norm^2 = {norm_sq}")]
    SingularJacobian { det: f64, norm_sq: f64 },
    #[error("jacobian estimators disagree by {rel:.3} (entry ({row},{col}))")]
    JacobianDisagreement { rel: f64, row: usize, col: usize },
    #[error("Newton failed to reach tol {tol} in {iters} iterations (residual {residual})")]
    MaxItersExceeded { tol: f64, iters: usize, residual: f64 },
    #[error("accepted step left the trust rectangle: |d_alpha| = {d_alpha}, |d_beta| = {d_beta}")]
    TrustRegionExceeded { d_alpha: f64, d_beta: f64 },
    #[error("bad shooting configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JacobianMode {
    Variational,
    FiniteDifference,
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootConfig {
    pub epsilon: f64,
    pub n_checkpoints: usize,
    /// stop Newton when the residual norm falls below this (jet units)
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub jacobian_mode: JacobianMode,
    /// central-difference step for the finite-difference jacobian
    pub fd_step: f64,
    /// per-checkpoint step clamp for alpha (decays along the ladder)
    pub trust_radius_alpha: f64,
    /// per-checkpoint step clamp for beta (decays along the ladder)
    pub trust_radius_beta: f64,
    pub grid_points: usize,
    pub grid_half_width: f64,
    pub init: InitConfig,
    pub evolve: EvolveConfig,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            n_checkpoints: 3,
            newton_tol: 1e-8,
            max_newton_iters: 12,
            jacobian_mode: JacobianMode::Variational,
            fd_step: 1e-4,
            trust_radius_alpha: 0.1,
            trust_radius_beta: 0.1,
            grid_points: 16384,
            grid_half_width: 2.0,
            init: InitConfig::default(),
            evolve: EvolveConfig {
                t_max: 0.05,
                ..EvolveConfig::default()
            },
        }
    }
}

impl ShootConfig {
    pub fn validate(&self) -> Result<(), ShootError> {
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return Err(ShootError::BadConfig(format!(
                "epsilon must lie in (0, 0.5], got {}",
                self.epsilon
            )));
        }
        if self.n_checkpoints == 0 {
            return Err(ShootError::BadConfig("n_checkpoints must be >= 1".into()));
        }
        if !(self.fd_step >= 1e-6 && self.fd_step <= 1e-2) {
            return Err(ShootError::BadConfig(format!(
                "fd_step must lie in [1e-6, 1e-2], got {}",
                self.fd_step
            )));
        }
        if !(self.trust_radius_alpha > 0.0 && self.trust_radius_beta > 0.0) {
            return Err(ShootError::BadConfig("trust radii must be positive".into()));
        }
        if !(self.newton_tol > 0.0) {
            return Err(ShootError::BadConfig("newton_tol must be positive".into()));
        }
        if self.evolve.stop_slope <= 1.0 / self.epsilon {
            return Err(ShootError::BadConfig(format!(
                "stop_slope {} must exceed the initial gradient 1/epsilon = {}",
                self.evolve.stop_slope,
                1.0 / self.epsilon
            )));
        }
        Ok(())
    }

    /// s at the initial time: the datum has gap exactly epsilon.
    pub fn s0(&self) -> f64 {
        -self.epsilon.ln()
    }

    pub fn grid(&self) -> Result<Grid1D, GridError> {
        Grid1D::symmetric(self.grid_half_width, self.grid_points)
    }

    fn init_for(&self, alpha: f64, beta: f64) -> InitConfig {
        let mut init = self.init.clone().with_parameters(alpha, beta);
        init.epsilon = self.epsilon;
        init
    }
}

/// One accepted checkpoint of the ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShootCheckpoint {
    pub s_n: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r2: f64,
    pub r3: f64,
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub newton_iters: usize,
    pub step_norm: f64,
}

/// Full record of a shooting run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShootTrace {
    pub checkpoints: Vec<ShootCheckpoint>,
    pub alpha_star: f64,
    pub beta_star: f64,
}

#[derive(Debug, Clone)]
struct ProbeResult {
    r2: f64,
    r3: f64,
    /// variational jacobian, present when tangents were co-evolved
    jacobian: Option<[[f64; 2]; 2]>,
}

/// Shooting engine with memoized probe runs.
pub struct Shooter {
    pub cfg: ShootConfig,
    cache: HashMap<(u64, u64, u64, bool), ProbeResult>,
}

fn key(alpha: f64, beta: f64, s: f64, tangents: bool) -> (u64, u64, u64, bool) {
    (alpha.to_bits(), beta.to_bits(), s.to_bits(), tangents)
}

impl Shooter {
    pub fn new(cfg: ShootConfig) -> Result<Self, ShootError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            cache: HashMap::new(),
        })
    }

    /// Advance the datum for (alpha, beta) to `s_target`, optionally
    /// co-evolving the two tangent fields, and read off the residual pair
    /// (and the variational jacobian, when tangents are present).
    fn probe(
        &mut self,
        alpha: f64,
        beta: f64,
        s_target: f64,
        tangents: bool,
    ) -> Result<ProbeResult, ShootError> {
        if let Some(hit) = self.cache.get(&key(alpha, beta, s_target, tangents)) {
            return Ok(hit.clone());
        }
        let cfg = &self.cfg;
        let grid = cfg.grid()?;
        let init = cfg.init_for(alpha, beta);
        let t0 = -cfg.epsilon;

        // at s0 no evolution has happened and the residual is the datum's
        // origin jet in self-similar units
        let result = if (s_target - cfg.s0()).abs() < 1e-12 {
            let jet = initial_origin_jet(&init);
            ProbeResult {
                r2: jet[2],
                r3: jet[3],
                jacobian: Some([[2.0, 0.0], [0.0, 6.0]]),
            }
        } else {
            let u0 = build_initial_physical(&init, grid)?;
            let (v_alpha, v_beta) = if tangents {
                tangent_initial_physical(&init, grid)?
            } else {
                (Field::zeros(grid), Field::zeros(grid))
            };
            let pair0 = TangentPair { u: u0, v_alpha, v_beta };
            let (pair, m) = run_pair_to_s(&pair0, t0, &cfg.evolve, s_target).map_err(|e| {
                match e {
                    EvolveError::TargetNotReached { .. } => {
                        ShootError::TargetBeyondBlowup { s_target }
                    }
                    other => ShootError::Evolve(other),
                }
            })?;
            let gap = m.tau - m.t;
            let scale = |k: u32| gap.powf((5.0 * k as f64 - 1.0) / 4.0);
            let h_fd = 0.02 * gap.powf(1.25);
            let ju = stable_jet(&pair.u, m.xi, 5, h_fd);
            let r2 = scale(2) * ju[2];
            let r3 = scale(3) * ju[3];
            let jacobian = if tangents {
                Some(variational_jacobian(&pair, &m, &cfg.evolve, &ju, h_fd)?)
            } else {
                None
            };
            ProbeResult { r2, r3, jacobian }
        };
        self.cache
            .insert(key(alpha, beta, s_target, tangents), result.clone());
        Ok(result)
    }

    /// Residual pair at a checkpoint.
    pub fn residual(&mut self, alpha: f64, beta: f64, s_target: f64) -> Result<(f64, f64), ShootError> {
        let p = self.probe(alpha, beta, s_target, false)?;
        Ok((p.r2, p.r3))
    }

    /// 2x2 derivative of the residual pair with respect to (alpha, beta).
    pub fn jacobian(
        &mut self,
        alpha: f64,
        beta: f64,
        s_target: f64,
        mode: JacobianMode,
    ) -> Result<[[f64; 2]; 2], ShootError> {
        let j = match mode {
            JacobianMode::Variational => self
                .probe(alpha, beta, s_target, true)?
                .jacobian
                .expect("tangent probe carries a jacobian"),
            JacobianMode::FiniteDifference => self.fd_jacobian(alpha, beta, s_target)?,
            JacobianMode::Both => {
                let jf = self.fd_jacobian(alpha, beta, s_target)?;
                let jv = self
                    .probe(alpha, beta, s_target, true)?
                    .jacobian
                    .expect("tangent probe carries a jacobian");
                let norm = jv.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                for r in 0..2 {
                    for c in 0..2 {
                        let rel = (jv[r][c] - jf[r][c]).abs() / norm.max(1e-300);
                        if rel > 0.05 {
                            return Err(ShootError::JacobianDisagreement { rel, row: r, col: c });
                        }
                    }
                }
                jv
            }
        };
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let norm_sq = j.iter().flatten().map(|v| v * v).sum::<f64>();
        if det.abs() < 1e-12 * norm_sq {
            return Err(ShootError::SingularJacobian { det, norm_sq });
        }
        Ok(j)
    }

    fn fd_jacobian(
        &mut self,
        alpha: f64,
        beta: f64,
        s_target: f64,
    ) -> Result<[[f64; 2]; 2], ShootError> {
        let h = self.cfg.fd_step;
        let (r2_ap, r3_ap) = self.residual(alpha + h, beta, s_target)?;
        let (r2_am, r3_am) = self.residual(alpha - h, beta, s_target)?;
        let (r2_bp, r3_bp) = self.residual(alpha, beta + h, s_target)?;
        let (r2_bm, r3_bm) = self.residual(alpha, beta - h, s_target)?;
        Ok([
            [(r2_ap - r2_am) / (2.0 * h), (r2_bp - r2_bm) / (2.0 * h)],
            [(r3_ap - r3_am) / (2.0 * h), (r3_bp - r3_bm) / (2.0 * h)],
        ])
    }

    /// Damped Newton at one checkpoint, steps clamped to the trust rectangle.
    pub fn newton_solve(
        &mut self,
        alpha0: f64,
        beta0: f64,
        s_target: f64,
        radius_alpha: f64,
        radius_beta: f64,
    ) -> Result<NewtonResult, ShootError> {
        let tol = self.cfg.newton_tol;
        let mode = self.cfg.jacobian_mode;
        let mut alpha = alpha0;
        let mut beta = beta0;
        let mut errors: Vec<f64> = Vec::new();
        let mut last = ([ [0.0; 2]; 2], (f64::NAN, f64::NAN), 0.0);
        for iter in 0..=self.cfg.max_newton_iters {
            let (r2, r3) = self.residual(alpha, beta, s_target)?;
            let err = r2.hypot(r3);
            errors.push(err);
            if err <= tol {
                let det = last.0[0][0] * last.0[1][1] - last.0[0][1] * last.0[1][0];
                return Ok(NewtonResult {
                    alpha,
                    beta,
                    r2,
                    r3,
                    iters: iter,
                    jacobian: if iter == 0 {
                        self.jacobian(alpha, beta, s_target, mode)?
                    } else {
                        last.0
                    },
                    det: if iter == 0 {
                        let j = self.jacobian(alpha, beta, s_target, mode)?;
                        j[0][0] * j[1][1] - j[0][1] * j[1][0]
                    } else {
                        det
                    },
                    step_norm: last.2,
                    errors,
                });
            }
            if iter == self.cfg.max_newton_iters {
                break;
            }
            let j = self.jacobian(alpha, beta, s_target, mode)?;
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let mut da = (-r2 * j[1][1] + r3 * j[0][1]) / det;
            let mut db = (-r3 * j[0][0] + r2 * j[1][0]) / det;
            da = da.clamp(-radius_alpha, radius_alpha);
            db = db.clamp(-radius_beta, radius_beta);
            alpha += da;
            beta += db;
            last = (j, (r2, r3), da.hypot(db));
        }
        Err(ShootError::MaxItersExceeded {
            tol,
            iters: self.cfg.max_newton_iters,
            residual: *errors.last().unwrap(),
        })
    }

    /// Walk the checkpoint ladder s_1, ..., s_N, Newton-solving at each and
    /// seeding from the previous solution.
    pub fn shoot_sequence(&mut self) -> Result<ShootTrace, ShootError> {
        let uhat = uhat_origin_jet(&self.cfg.init);
        let mut alpha = -0.5 * uhat[2];
        let mut beta = -uhat[3] / 6.0;
        let s0 = self.cfg.s0();
        let mut checkpoints = Vec::new();
        for n in 1..=self.cfg.n_checkpoints {
            let s_n = s0 + n as f64;
            // trust rectangle shrinks along the ladder at the unstable rates
            let decay = (n - 1) as f64;
            let radius_a = self.cfg.trust_radius_alpha * (-1.75 * decay).exp();
            let radius_b = self.cfg.trust_radius_beta * (-1.5 * decay).exp();
            let seed = (alpha, beta);
            let out = self.newton_solve(alpha, beta, s_n, radius_a, radius_b)?;
            alpha = out.alpha;
            beta = out.beta;
            let d_alpha = (alpha - seed.0).abs();
            let d_beta = (beta - seed.1).abs();
            if d_alpha > radius_a * self.cfg.max_newton_iters as f64
                || d_beta > radius_b * self.cfg.max_newton_iters as f64
            {
                return Err(ShootError::TrustRegionExceeded { d_alpha, d_beta });
            }
            checkpoints.push(ShootCheckpoint {
                s_n,
                alpha,
                beta,
                r2: out.r2,
                r3: out.r3,
                jacobian: out.jacobian,
                det: out.det,
                newton_iters: out.iters,
                step_norm: d_alpha.hypot(d_beta),
            });
        }
        Ok(ShootTrace {
            checkpoints,
            alpha_star: alpha,
            beta_star: beta,
        })
    }
}

/// Newton output at one checkpoint.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub alpha: f64,
    pub beta: f64,
    pub r2: f64,
    pub r3: f64,
    pub iters: usize,
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub step_norm: f64,
    /// residual norms per iteration (for quadratic-convergence checks)
    pub errors: Vec<f64>,
}

/// Derivative of the residual pair with respect to the datum parameters via
/// the co-evolved tangents. The checkpoint is at fixed s, so the gap
/// tau - t = e^{-s} and the slope at the frame center are pinned; the frame
/// center xi and the landing time t shift with the parameter, and their
/// shifts solve a 2x2 linear system from the constraints
/// d4u(xi, t) = 0 and d1u(xi, t) = -e^{s}.
fn variational_jacobian(
    pair: &TangentPair,
    m: &ModulationState,
    ev: &EvolveConfig,
    ju: &[f64],
    h_fd: f64,
) -> Result<[[f64; 2]; 2], ShootError> {
    let gap = m.tau - m.t;
    let scale = |k: u32| gap.powf((5.0 * k as f64 - 1.0) / 4.0);
    // time derivatives of the space derivatives, via the right-hand side
    let w = crate::evolve::rhs_physical(&pair.u, ev)?;
    let jw = stable_jet(&w, m.xi, 4, h_fd);
    let mut out = [[0.0; 2]; 2];
    for (col, v) in [&pair.v_alpha, &pair.v_beta].into_iter().enumerate() {
        let jv = stable_jet(v, m.xi, 4, h_fd);
        // [d5u  dt_d4u] [xi']   [-d4v]
        // [d2u  dt_d1u] [t' ] = [-d1v]
        let a = ju[5];
        let b = jw[4];
        let c = ju[2];
        let d = jw[1];
        let det = a * d - b * c;
        if det.abs() < 1e-300 {
            return Err(ShootError::SingularJacobian {
                det,
                norm_sq: a * a + b * b + c * c + d * d,
            });
        }
        let xi_p = (-jv[4] * d + jv[1] * b) / det;
        let t_p = (-jv[1] * a + jv[4] * c) / det;
        out[0][col] = scale(2) * (ju[3] * xi_p + jw[2] * t_p + jv[2]);
        out[1][col] = scale(3) * (ju[4] * xi_p + jw[3] * t_p + jv[3]);
    }
    Ok(out)
}
