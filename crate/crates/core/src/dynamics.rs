//! Planar Clohessy-Wiltshire relative dynamics.
//!
//! State ordering is `(x, y, vx, vy)` with `x` radial and `y` along-track.
//! Thrust enters only through the velocity rows; the body frame is rotated by
//! `theta = atan2(y, x)` so the camera keeps pointing at the target.

use nalgebra::{Matrix2, SMatrix, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix4 = nalgebra::Matrix4<f64>;
pub type Vec4 = Vector4<f64>;
pub type Vec2 = Vector2<f64>;

/// Standard gravity used for the impulse-to-propellant conversion.
pub const G0: f64 = 9.80665;

/// Orbital and propulsion constants of the chaser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CwParams {
    /// Mean orbital rate of the target orbit (1/s).
    pub omega: f64,
    /// Acceleration produced by one thruster at full throttle (m/s^2).
    pub thrust_ratio_r: f64,
    /// Maximal thrust of one thruster (N).
    pub f_max: f64,
    /// Specific impulse (s). Only used for propellant mass bookkeeping.
    pub isp: f64,
}

impl Default for CwParams {
    fn default() -> Self {
        // 600 kg chaser, five 90 mN Hall thrusters, LEO target.
        Self { omega: 0.00106, thrust_ratio_r: 1.5e-4, f_max: 0.09, isp: 1650.0 }
    }
}

impl CwParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::Config(format!("omega must be >= 0, got {}", self.omega)));
        }
        if !ok(self.thrust_ratio_r) || !ok(self.f_max) || !ok(self.isp) {
            return Err(Error::Config("thrust_ratio_r, f_max and isp must be > 0".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// Relative position (m) and velocity (m/s) in the local frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVec {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl StateVec {
    pub const ZERO: StateVec = StateVec { x: 0.0, y: 0.0, vx: 0.0, vy: 0.0 };

    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn at_rest(x: f64, y: f64) -> Self {
        Self::new(x, y, 0.0, 0.0)
    }

    pub fn to_vec(self) -> Vec4 {
        Vec4::new(self.x, self.y, self.vx, self.vy)
    }

    pub fn from_vec(v: &Vec4) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

// Dimensionless kernels of the closed-form exponential, all well conditioned
// near x = 0. Series are used below |x| = 0.1 where the next omitted term is
// below 1e-17 relative.
const SERIES_CUTOFF: f64 = 0.1;

fn sinc(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    } else {
        x.sin() / x
    }
}

/// (1 - cos x) / x
fn c1(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        x * c2(x)
    } else {
        one_minus_cos(x) / x
    }
}

/// (1 - cos x) / x^2
fn c2(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        0.5 * (1.0 - x2 / 12.0 * (1.0 - x2 / 30.0 * (1.0 - x2 / 56.0 * (1.0 - x2 / 90.0))))
    } else {
        one_minus_cos(x) / (x * x)
    }
}

/// (x - sin x) / x
fn s1(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        x * s2(x)
    } else {
        (x - x.sin()) / x
    }
}

/// (x - sin x) / x^2
fn s2(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        x / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0))))
    } else {
        (x - x.sin()) / (x * x)
    }
}

/// (1 - cos x - x^2/2) / x
fn g1(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        -x * x2 / 24.0 * (1.0 - x2 / 30.0 * (1.0 - x2 / 56.0 * (1.0 - x2 / 90.0)))
    } else {
        (one_minus_cos(x) - 0.5 * x * x) / x
    }
}

fn one_minus_cos(x: f64) -> f64 {
    let h = (0.5 * x).sin();
    2.0 * h * h
}

/// State matrix `A` of the planar relative dynamics.
pub fn cw_matrix(params: &CwParams) -> Matrix4 {
    let w = params.omega;
    Matrix4::new(
        0.0,
        0.0,
        1.0,
        0.0, //
        0.0,
        0.0,
        0.0,
        1.0, //
        3.0 * w * w,
        0.0,
        0.0,
        2.0 * w, //
        0.0,
        0.0,
        -2.0 * w,
        0.0,
    )
}

/// Closed-form `exp(A t)`, valid for every finite `t` (negative included).
pub fn cw_expm(params: &CwParams, t: f64) -> Matrix4 {
    let w = params.omega;
    let x = w * t;
    let (s, c) = x.sin_cos();
    let omc = one_minus_cos(x);
    Matrix4::new(
        4.0 - 3.0 * c,
        0.0,
        t * sinc(x),
        2.0 * t * c1(x), //
        -6.0 * x * s1(x),
        1.0,
        -2.0 * t * c1(x),
        t * (1.0 - 4.0 * s1(x)), //
        3.0 * w * s,
        0.0,
        c,
        2.0 * s, //
        -6.0 * w * omc,
        0.0,
        -2.0 * s,
        4.0 * c - 3.0,
    )
}

/// Closed-form `int_0^dt exp(A s) ds`, integrated entry family by entry family.
pub fn cw_expm_integral(params: &CwParams, dt: f64) -> Matrix4 {
    let w = params.omega;
    let x = w * dt;
    let d2 = dt * dt;
    Matrix4::new(
        dt * (1.0 + 3.0 * s1(x)),
        0.0,
        d2 * c2(x),
        2.0 * d2 * s2(x), //
        6.0 * dt * g1(x),
        dt,
        -2.0 * d2 * s2(x),
        d2 * (4.0 * c2(x) - 1.5), //
        3.0 * one_minus_cos(x),
        0.0,
        dt * sinc(x),
        2.0 * dt * c1(x), //
        -6.0 * x * s1(x),
        0.0,
        -2.0 * dt * c1(x),
        dt * (1.0 - 4.0 * s1(x)),
    )
}

/// Linear state matrix: either the structured relative-motion matrix (with a
/// closed-form exponential) or an arbitrary 4x4 matrix for test systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateMatrix {
    Cw(CwParams),
    General(Matrix4),
}

impl StateMatrix {
    pub fn matrix(&self) -> Matrix4 {
        match self {
            StateMatrix::Cw(p) => cw_matrix(p),
            StateMatrix::General(a) => *a,
        }
    }

    pub fn expm(&self, t: f64) -> Matrix4 {
        match self {
            StateMatrix::Cw(p) => cw_expm(p, t),
            StateMatrix::General(a) => (a * t).exp(),
        }
    }

    /// `int_0^dt exp(A s) ds`.
    pub fn expm_integral(&self, dt: f64) -> Matrix4 {
        match self {
            StateMatrix::Cw(p) => cw_expm_integral(p, dt),
            StateMatrix::General(a) => {
                // Van Loan: exp([[A, I], [0, 0]] dt) carries the integral in its
                // upper-right block.
                let mut aug = SMatrix::<f64, 8, 8>::zeros();
                aug.fixed_view_mut::<4, 4>(0, 0).copy_from(&(a * dt));
                aug.fixed_view_mut::<4, 4>(0, 4).copy_from(&(Matrix4::identity() * dt));
                aug.exp().fixed_view::<4, 4>(0, 4).into_owned()
            }
        }
    }
}

/// `block-diag(I2, Rot(theta))`.
pub fn rotation_of(theta: f64) -> Matrix4 {
    let (s, c) = theta.sin_cos();
    Matrix4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, c, -s, //
        0.0, 0.0, s, c,
    )
}

/// Planar rotation acting on the thrust components only.
pub fn rot2(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Camera-pointing angle `atan2(y, x)` in `(-pi, pi]`.
pub fn theta_of_state(s: &StateVec) -> Result<f64> {
    if s.x == 0.0 && s.y == 0.0 {
        return Err(Error::AngleUndefined);
    }
    Ok(s.y.atan2(s.x))
}

/// Unwraps a sequence of angles so consecutive samples never jump by more than pi.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let prev = angles[i - 1];
            let d = a - prev;
            if d > PI {
                offset -= TAU;
            } else if d < -PI {
                offset += TAU;
            }
        }
        out.push(a + offset);
    }
    out
}

/// Actuator layout with an optional thruster whose command is lost.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrusterLayout {
    /// Columns of the full actuator matrix, thruster 1 first.
    pub bbar: Vec<Vec4>,
    /// 1-based index of the thruster under lost control authority.
    pub failed_index: Option<usize>,
    /// 1-based ids of the still-controlled thrusters, in column order.
    pub controlled_ids: Vec<usize>,
    pub b_ctrl: Vec<Vec4>,
    pub c_fail: Option<Vec4>,
}

impl ThrusterLayout {
    /// The five-thruster chaser layout.
    pub fn spacecraft() -> Self {
        let r2 = std::f64::consts::SQRT_2;
        let cols = vec![
            Vec4::new(0.0, 0.0, 1.0, 1.0),
            Vec4::new(0.0, 0.0, 1.0, -1.0),
            Vec4::new(0.0, 0.0, -1.0, -1.0),
            Vec4::new(0.0, 0.0, -r2, 0.0),
            Vec4::new(0.0, 0.0, -1.0, 1.0),
        ];
        Self::from_columns(cols)
    }

    /// Layout with no failure; every column is controlled.
    pub fn from_columns(bbar: Vec<Vec4>) -> Self {
        let controlled_ids = (1..=bbar.len()).collect();
        Self { b_ctrl: bbar.clone(), bbar, failed_index: None, controlled_ids, c_fail: None }
    }

    /// Layout for test systems given directly as controlled and failed columns.
    pub fn custom(controlled: Vec<Vec4>, failed: Vec4) -> Self {
        let mut bbar = controlled.clone();
        bbar.push(failed);
        let n = bbar.len();
        Self { controlled_ids: (1..n).collect(), b_ctrl: controlled, bbar, failed_index: Some(n), c_fail: Some(failed) }
    }

    pub fn n_controlled(&self) -> usize {
        self.b_ctrl.len()
    }

    /// Thrust components (rows 3-4) of the controlled columns.
    pub fn ctrl_planar(&self) -> Vec<Vec2> {
        self.b_ctrl.iter().map(|c| Vec2::new(c[2], c[3])).collect()
    }

    pub fn fail_planar(&self) -> Option<Vec2> {
        self.c_fail.map(|c| Vec2::new(c[2], c[3]))
    }

    /// `B u` for a vector of controlled throttles.
    pub fn apply(&self, u: &[f64]) -> Vec4 {
        self.b_ctrl.iter().zip(u).fold(Vec4::zeros(), |acc, (col, &ui)| acc + col * ui)
    }
}

/// Splits the full actuator matrix into controlled columns `B` and the lost column `C`.
pub fn split_layout(layout: &ThrusterLayout, failed_index: Option<usize>) -> Result<ThrusterLayout> {
    let n = layout.bbar.len();
    let Some(k) = failed_index else {
        return Ok(ThrusterLayout::from_columns(layout.bbar.clone()));
    };
    if k == 0 || k > n {
        return Err(Error::ThrusterIndex(k, n));
    }
    let mut b_ctrl = Vec::with_capacity(n - 1);
    let mut ids = Vec::with_capacity(n - 1);
    for (i, col) in layout.bbar.iter().enumerate() {
        if i + 1 != k {
            b_ctrl.push(*col);
            ids.push(i + 1);
        }
    }
    Ok(ThrusterLayout {
        bbar: layout.bbar.clone(),
        failed_index: Some(k),
        controlled_ids: ids,
        b_ctrl,
        c_fail: Some(layout.bbar[k - 1]),
    })
}

/// Exact zero-order-hold step: the body-frame force `bu_plus_cw` and the
/// attitude are held over `[t, t + dt]`.
///
/// `X+ = e^{A dt} X + (int_0^dt e^{As} ds) r R(theta) bu`.
pub fn step_exact(params: &CwParams, state: &StateVec, theta_hold: f64, bu_plus_cw: &Vec4, dt: f64) -> StateVec {
    let model = StateMatrix::Cw(*params);
    let prop = Propagator::new(&model, dt);
    prop.step(state, theta_hold, bu_plus_cw, params.thrust_ratio_r)
}

/// Cached transition matrices for repeated steps of a fixed size.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub dt: f64,
    pub phi: Matrix4,
    pub gamma: Matrix4,
}

impl Propagator {
    pub fn new(model: &StateMatrix, dt: f64) -> Self {
        Self { dt, phi: model.expm(dt), gamma: model.expm_integral(dt) }
    }

    pub fn step(&self, state: &StateVec, theta_hold: f64, force: &Vec4, r: f64) -> StateVec {
        let x = state.to_vec();
        let f = rotate_force(theta_hold, force) * r;
        StateVec::from_vec(&(self.phi * x + self.gamma * f))
    }

    /// Step without body rotation (linear mode).
    pub fn step_linear(&self, x: &Vec4, force: &Vec4) -> Vec4 {
        self.phi * x + self.gamma * force
    }
}

/// `R(theta) f` computed without forming the 4x4 matrix.
pub fn rotate_force(theta: f64, f: &Vec4) -> Vec4 {
    let (s, c) = theta.sin_cos();
    Vec4::new(f[0], f[1], c * f[2] - s * f[3], s * f[2] + c * f[3])
}

/// `R(theta)^T f`.
pub fn unrotate_force(theta: f64, f: &Vec4) -> Vec4 {
    rotate_force(-theta, f)
}

/// Fixed-step RK4 on the attitude-coupled dynamics, with the body-frame force
/// held constant and `theta` re-evaluated at every stage. Used to cross-check
/// the frozen-attitude exact step.
pub fn step_rk4_rotating(params: &CwParams, state: &StateVec, bu_plus_cw: &Vec4, dt: f64, substeps: usize) -> StateVec {
    let a = cw_matrix(params);
    let r = params.thrust_ratio_r;
    let f = |x: &Vec4| -> Vec4 {
        let theta = x[1].atan2(x[0]);
        a * x + rotate_force(theta, bu_plus_cw) * r
    };
    let h = dt / substeps as f64;
    let mut x = state.to_vec();
    for _ in 0..substeps {
        let k1 = f(&x);
        let k2 = f(&(x + k1 * (h / 2.0)));
        let k3 = f(&(x + k2 * (h / 2.0)));
        let k4 = f(&(x + k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    StateVec::from_vec(&x)
}
