//! Inspection reference trajectory.
//!
//! Each leg between waypoints is a minimum-energy transfer steered through the
//! controllability Gramian. The input profile `p_ref` lives in the thrust
//! plane and is expressed in the local frame (before any body rotation).

use std::io::{Read, Write};

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CwParams, Matrix4, StateMatrix, StateVec, Vec2, Vec4};
use crate::error::{Error, Result};

/// `B_hat = [0; I2]`: thrust enters the velocity rows.
fn bhat_outer() -> Matrix4 {
    let mut m = Matrix4::zeros();
    m[(2, 2)] = 1.0;
    m[(3, 3)] = 1.0;
    m
}

/// Largest accepted Gramian condition number.
const MAX_COND: f64 = 1e14;

/// Default Simpson resolution for Gramians.
pub const N_QUAD: usize = 2048;

/// `int_0^T e^{As} M e^{A^T s} ds` by composite Simpson with `n_quad` intervals.
fn gramian_simpson(model: &StateMatrix, m: &Matrix4, t: f64, n_quad: usize) -> Matrix4 {
    let n = if n_quad.is_multiple_of(2) { n_quad } else { n_quad + 1 };
    let h = t / n as f64;
    let mut acc = Matrix4::zeros();
    for i in 0..=n {
        let e = model.expm(i as f64 * h);
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += e * m * e.transpose() * w;
    }
    let g = acc * (h / 3.0);
    (g + g.transpose()) * 0.5
}

/// Exact Gramian through the Van Loan block exponential, for cross-checks and
/// for the short-horizon increment used by the cumulative recursion.
pub fn gramian_exact(model: &StateMatrix, r: f64, t: f64) -> Matrix4 {
    let a = model.matrix();
    let mut big = SMatrix::<f64, 8, 8>::zeros();
    big.fixed_view_mut::<4, 4>(0, 0).copy_from(&(-a * t));
    big.fixed_view_mut::<4, 4>(0, 4).copy_from(&(bhat_outer() * (r * r * t)));
    big.fixed_view_mut::<4, 4>(4, 4).copy_from(&(a.transpose() * t));
    let e = big.exp();
    let f12 = e.fixed_view::<4, 4>(0, 4).into_owned();
    let f22 = e.fixed_view::<4, 4>(4, 4).into_owned();
    let g = f22.transpose() * f12;
    (g + g.transpose()) * 0.5
}

/// Controllability Gramian of the relative dynamics with thrust ratio `r`.
pub fn gramian(params: &CwParams, t: f64, n_quad: usize) -> Result<Matrix4> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("Gramian horizon must be > 0, got {t}")));
    }
    let r = params.thrust_ratio_r;
    let w = gramian_simpson(&StateMatrix::Cw(*params), &(bhat_outer() * (r * r)), t, n_quad);
    let ev = w.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if lo <= 0.0 || hi / lo > MAX_COND {
        return Err(Error::Singular(format!("Gramian condition number {:.3e} at T = {t} s", hi / lo.max(1e-300))));
    }
    Ok(w)
}

/// Minimum-energy steering `x0 -> xg` over `[0, T]`.
///
/// `p(t) = r B_hat^T e^{A^T (T - t)} lambda`, `lambda = W(T)^+ (xg - e^{AT} x0)`,
/// `x(t) = e^{At} x0 + W(t) e^{A^T (T - t)} lambda`.
#[derive(Debug, Clone)]
pub struct Steering {
    pub model: StateMatrix,
    pub r: f64,
    pub x0: Vec4,
    pub xg: Vec4,
    pub horizon: f64,
    pub lambda: Vec4,
}

impl Steering {
    /// For singular Gramians (uncontrollable test systems) the pseudo-inverse
    /// steers the controllable part only.
    pub fn new(model: StateMatrix, r: f64, x0: Vec4, xg: Vec4, horizon: f64, n_quad: usize) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Precondition(format!("horizon must be > 0, got {horizon}")));
        }
        let w = gramian_simpson(&model, &(bhat_outer() * (r * r)), horizon, n_quad);
        let d = xg - model.expm(horizon) * x0;
        let lambda = match model {
            StateMatrix::Cw(_) => {
                let ev = w.symmetric_eigenvalues();
                if ev.min() <= 0.0 || ev.max() / ev.min() > MAX_COND {
                    return Err(Error::Singular(format!("Gramian not invertible at T = {horizon} s")));
                }
                w.cholesky().expect("SPD").solve(&d)
            }
            StateMatrix::General(_) => {
                let pinv = w.pseudo_inverse(1e-12 * w.abs().max().max(1e-300)).expect("svd");
                pinv * d
            }
        };
        Ok(Self { model, r, x0, xg, horizon, lambda })
    }

    pub fn input(&self, t: f64) -> Vec2 {
        let v = self.model.expm(self.horizon - t).transpose() * self.lambda;
        Vec2::new(v[2], v[3]) * self.r
    }

    /// Samples states and inputs on `t = k dt`, `k = 0..=n`, with `n dt` the horizon.
    /// The Gramian is accumulated exactly through
    /// `W(t + dt) = W(t) + e^{At} W(dt) e^{A^T t}`.
    pub fn sample(&self, dt: f64) -> (Vec<Vec4>, Vec<Vec2>) {
        let n = (self.horizon / dt).round() as usize;
        let w_dt = gramian_exact(&self.model, self.r, dt);
        let phi_dt = self.model.expm(dt);
        let mut w = Matrix4::zeros();
        let mut e = Matrix4::identity();
        let mut states = Vec::with_capacity(n + 1);
        let mut inputs = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = k as f64 * dt;
            let back = self.model.expm(self.horizon - t).transpose() * self.lambda;
            states.push(e * self.x0 + w * back);
            inputs.push(Vec2::new(back[2], back[3]) * self.r);
            w += e * w_dt * e.transpose();
            e = phi_dt * e;
        }
        (states, inputs)
    }

    pub fn endpoint(&self) -> Vec4 {
        let w = gramian_exact(&self.model, self.r, self.horizon);
        self.model.expm(self.horizon) * self.x0 + w * self.lambda
    }
}

#[derive(Debug, Clone)]
pub struct TransferSegment {
    pub t: Vec<f64>,
    pub states: Vec<StateVec>,
    pub inputs: Vec<Vec2>,
}

/// Endpoint tolerances for a steered leg.
pub const HIT_POS_M: f64 = 1e-6;
pub const HIT_VEL_MPS: f64 = 1e-8;

/// Minimum-energy transfer under zero-order hold on the grid `k dt`.
///
/// This is the sampled counterpart of the continuous law: with
/// `G = Gamma r B_hat` and the discrete Gramian `W_d = sum_m Phi^m G G^T Phi^mT`,
/// `p_k = G^T Phi^(N-1-k)T W_d^-1 (xg - Phi^N x0)`. Propagating the stored
/// inputs through the exact step reproduces the stored states.
pub fn min_energy_transfer(
    params: &CwParams,
    x0: &StateVec,
    xg: &StateVec,
    horizon: f64,
    dt: f64,
) -> Result<TransferSegment> {
    gramian(params, horizon, N_QUAD)?;
    let n = (horizon / dt).round() as usize;
    if n == 0 || ((n as f64) * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::Config(format!("horizon {horizon} s is not a multiple of dt = {dt} s")));
    }
    let (states, inputs) =
        zoh_steer(&StateMatrix::Cw(*params), params.thrust_ratio_r, &x0.to_vec(), &xg.to_vec(), n, dt)?;
    check_hit(states.last().expect("nonempty"), &xg.to_vec())?;
    Ok(TransferSegment {
        t: (0..states.len()).map(|k| k as f64 * dt).collect(),
        states: states.iter().map(StateVec::from_vec).collect(),
        inputs,
    })
}

/// Discrete minimum-energy steering over `n` held steps. Returns `n + 1`
/// states and `n + 1` inputs (the last input repeats the final held value).
pub fn zoh_steer(
    model: &StateMatrix,
    r: f64,
    x0: &Vec4,
    xg: &Vec4,
    n: usize,
    dt: f64,
) -> Result<(Vec<Vec4>, Vec<Vec2>)> {
    let phi = model.expm(dt);
    let g = model.expm_integral(dt).fixed_columns::<2>(2).into_owned() * r;
    let ggt = g * g.transpose();
    let mut wd = Matrix4::zeros();
    let mut pw = Matrix4::identity();
    for _ in 0..n {
        wd += pw * ggt * pw.transpose();
        pw = phi * pw;
    }
    let wd = (wd + wd.transpose()) * 0.5;
    let d = xg - pw * x0;
    let lambda = match model {
        StateMatrix::Cw(_) => wd.cholesky().ok_or_else(|| Error::Singular("discrete Gramian".into()))?.solve(&d),
        StateMatrix::General(_) => wd.pseudo_inverse(1e-12 * wd.abs().max().max(1e-300)).expect("svd") * d,
    };
    let mut inputs = vec![Vec2::zeros(); n + 1];
    let mut v = lambda;
    for k in (0..n).rev() {
        inputs[k] = g.transpose() * v;
        v = phi.transpose() * v;
    }
    inputs[n] = inputs[n.saturating_sub(1)];
    let mut states = Vec::with_capacity(n + 1);
    let mut x = *x0;
    states.push(x);
    for u in inputs.iter().take(n) {
        x = phi * x + g * u;
        states.push(x);
    }
    Ok((states, inputs))
}

fn check_hit(got: &Vec4, want: &Vec4) -> Result<()> {
    let dp = ((got[0] - want[0]).powi(2) + (got[1] - want[1]).powi(2)).sqrt();
    let dv = ((got[2] - want[2]).powi(2) + (got[3] - want[3]).powi(2)).sqrt();
    if dp > HIT_POS_M || dv > HIT_VEL_MPS {
        return Err(Error::SteeringFailed { position_m: dp, velocity_mps: dv });
    }
    Ok(())
}

/// How the chaser passes through intermediate waypoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WaypointVelocity {
    /// Stop at every waypoint.
    Rest,
    /// Passage velocities that minimize total steering energy.
    MinEnergy,
    /// Passage velocities that minimize the peak input subject to the
    /// keep-out clearance.
    #[default]
    Shaped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mission {
    pub waypoints_m: Vec<[f64; 2]>,
    pub transfer_time_s: f64,
    pub kos_radius_m: f64,
    /// Total duration; after the transfers the chaser holds at rest.
    pub duration_s: f64,
    pub waypoint_velocity: WaypointVelocity,
    /// Start the first transfer at rest. When false the start velocity is
    /// chosen like an interior one.
    pub start_at_rest: bool,
    /// Append one more transfer that brings the chaser to rest at the last
    /// waypoint, so the last waypoint itself may be passed with velocity.
    pub settle_leg: bool,
    /// Extra clearance over the keep-out radius demanded by velocity shaping.
    pub clearance_margin_m: f64,
}

impl Default for Mission {
    fn default() -> Self {
        Self {
            waypoints_m: vec![[0.0, 80.0], [-80.0, 0.0], [0.0, -80.0], [80.0, 0.0], [0.0, 80.0]],
            transfer_time_s: 5400.0,
            kos_radius_m: 50.0,
            duration_s: 27000.0,
            waypoint_velocity: WaypointVelocity::Shaped,
            start_at_rest: false,
            settle_leg: true,
            clearance_margin_m: 2.0,
        }
    }
}

impl Mission {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints_m.len() < 2 {
            return Err(Error::Config("mission needs at least two waypoints".into()));
        }
        if !(self.transfer_time_s > 0.0) || !(self.kos_radius_m > 0.0) {
            return Err(Error::Config("transfer_time_s and kos_radius_m must be > 0".into()));
        }
        if self.waypoints_m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("waypoints must be finite".into()));
        }
        if !(self.clearance_margin_m >= 0.0) {
            return Err(Error::Config("clearance_margin_m must be >= 0".into()));
        }
        Ok(())
    }

    /// End of the waypoint-to-waypoint transfers.
    pub fn transfers_end_s(&self) -> f64 {
        self.transfer_time_s * (self.waypoints_m.len() - 1) as f64
    }

    /// Steering nodes: the waypoints plus, with a settle leg, the last one again.
    fn nodes(&self) -> Vec<[f64; 2]> {
        let mut n = self.waypoints_m.clone();
        if self.settle_leg {
            n.push(*n.last().expect("validated"));
        }
        n
    }

    /// Node velocities for the configured policy.
    pub fn node_velocities(&self, params: &CwParams) -> Result<Vec<Vec2>> {
        let nodes = self.nodes();
        let n = nodes.len();
        let mut fixed = vec![None; n];
        if self.start_at_rest {
            fixed[0] = Some(Vec2::zeros());
        }
        fixed[n - 1] = Some(Vec2::zeros());
        match self.waypoint_velocity {
            WaypointVelocity::Rest => Ok(vec![Vec2::zeros(); n]),
            WaypointVelocity::MinEnergy => min_energy_velocities(params, &nodes, &fixed, self.transfer_time_s),
            WaypointVelocity::Shaped => shaped_velocities(
                params,
                &nodes,
                &fixed,
                self.transfer_time_s,
                self.kos_radius_m + self.clearance_margin_m,
            ),
        }
    }
}

/// Waypoint velocities minimizing the total steering energy
/// `sum_legs d_i^T W^-1 d_i`, `d_i = s_{i+1} - Phi s_i`. Entries of `fixed`
/// that are `Some` are kept; the others are solved for. All legs share `W`
/// and `Phi`, so this is a small linear least-squares problem.
pub fn min_energy_velocities(
    params: &CwParams,
    waypoints: &[[f64; 2]],
    fixed: &[Option<Vec2>],
    horizon: f64,
) -> Result<Vec<Vec2>> {
    let n = waypoints.len();
    assert_eq!(fixed.len(), n, "one velocity constraint per waypoint");
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut vel: Vec<Vec2> = fixed.iter().map(|v| v.unwrap_or_else(Vec2::zeros)).collect();
    if free.is_empty() || n < 2 {
        return Ok(vel);
    }
    let w = gramian(params, horizon, N_QUAD)?;
    let winv = w.try_inverse().ok_or_else(|| Error::Singular("Gramian".into()))?;
    let lt = winv.cholesky().ok_or_else(|| Error::Singular("inverse Gramian".into()))?.l().transpose();
    let phi = StateMatrix::Cw(*params).expm(horizon);
    let legs = n - 1;
    let col_of = |i: usize| free.iter().position(|&f| f == i).map(|c| 2 * c);
    let base = |i: usize| Vec4::new(waypoints[i][0], waypoints[i][1], vel[i].x, vel[i].y);
    let mut m = nalgebra::DMatrix::<f64>::zeros(4 * legs, 2 * free.len());
    let mut rhs = nalgebra::DVector::<f64>::zeros(4 * legs);
    for leg in 0..legs {
        let known = lt * (base(leg + 1) - phi * base(leg));
        for j in 0..4 {
            rhs[4 * leg + j] = -known[j];
        }
        for (node, map) in [(leg + 1, Matrix4::identity()), (leg, -phi)] {
            if let Some(col) = col_of(node) {
                for c in 0..2 {
                    let mut e = Vec4::zeros();
                    e[2 + c] = 1.0;
                    let le = lt * (map * e);
                    for j in 0..4 {
                        m[(4 * leg + j, col + c)] += le[j];
                    }
                }
            }
        }
    }
    let sol = m.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::Singular(e.to_string()))?;
    for (k, &i) in free.iter().enumerate() {
        vel[i] = Vec2::new(sol[2 * k], sol[2 * k + 1]);
    }
    Ok(vel)
}

/// Samples per leg at which peak input and clearance are evaluated while
/// shaping waypoint velocities.
const SHAPE_SAMPLES: usize = 180;
/// Penalty per squared metre of clearance shortfall.
const SHAPE_PENALTY: f64 = 100.0;

/// Affine maps from a leg's boundary states to sampled positions and inputs:
/// `pos(t) = G0 s_a + G1 s_b`, `p(t) = Q (s_b - Phi s_a)`.
struct LegMaps {
    phi: Matrix4,
    pos: Vec<(Matrix4, Matrix4)>,
    input: Vec<SMatrix<f64, 2, 4>>,
}

impl LegMaps {
    fn new(params: &CwParams, horizon: f64) -> Result<Self> {
        let model = StateMatrix::Cw(*params);
        let r = params.thrust_ratio_r;
        let w = gramian(params, horizon, N_QUAD)?;
        let winv = w.try_inverse().ok_or_else(|| Error::Singular("Gramian".into()))?;
        let phi = model.expm(horizon);
        let h = horizon / SHAPE_SAMPLES as f64;
        let wdt = gramian_exact(&model, r, h);
        let step = model.expm(h);
        let (mut wt, mut e) = (Matrix4::zeros(), Matrix4::identity());
        let mut pos = Vec::new();
        let mut input = Vec::new();
        for k in 0..=SHAPE_SAMPLES {
            let back = model.expm(horizon - k as f64 * h).transpose() * winv;
            let hk = wt * back;
            pos.push((e - hk * phi, hk));
            input.push(back.fixed_rows::<2>(2).into_owned() * r);
            wt += e * wdt * e.transpose();
            e = step * e;
        }
        Ok(Self { phi, pos, input })
    }

    fn penalty(&self, sa: &Vec4, sb: &Vec4, clearance: f64) -> (f64, f64) {
        let d = sb - self.phi * sa;
        let peak = self.input.iter().map(|q| (q * d).norm()).fold(0.0, f64::max);
        let short: f64 = self
            .pos
            .iter()
            .map(|(g0, g1)| {
                let p = g0 * sa + g1 * sb;
                (clearance - (p[0] * p[0] + p[1] * p[1]).sqrt()).max(0.0).powi(2)
            })
            .sum();
        (peak, short)
    }
}

struct ShapeCost<'a> {
    maps: &'a LegMaps,
    waypoints: &'a [[f64; 2]],
    fixed: &'a [Option<Vec2>],
    clearance: f64,
}

impl ShapeCost<'_> {
    fn states(&self, x: &[f64]) -> Vec<Vec4> {
        let mut k = 0;
        self.waypoints
            .iter()
            .zip(self.fixed)
            .map(|(w, f)| {
                let v = f.unwrap_or_else(|| {
                    k += 2;
                    Vec2::new(x[k - 2], x[k - 1])
                });
                Vec4::new(w[0], w[1], v.x, v.y)
            })
            .collect()
    }
}

impl argmin::core::CostFunction for ShapeCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let s = self.states(x);
        let mut peak: f64 = 0.0;
        let mut short = 0.0;
        for leg in s.windows(2) {
            let (p, sh) = self.maps.penalty(&leg[0], &leg[1], self.clearance);
            peak = peak.max(p);
            short += sh;
        }
        Ok(peak + SHAPE_PENALTY * short)
    }
}

/// Waypoint velocities that minimize the peak reference input while keeping
/// every leg at least `clearance` from the target. Starts from the
/// minimum-energy velocities and refines them with Nelder-Mead.
pub fn shaped_velocities(
    params: &CwParams,
    waypoints: &[[f64; 2]],
    fixed: &[Option<Vec2>],
    horizon: f64,
    clearance: f64,
) -> Result<Vec<Vec2>> {
    use argmin::core::{CostFunction, Executor};
    use argmin::solver::neldermead::NelderMead;

    let start = min_energy_velocities(params, waypoints, fixed, horizon)?;
    let maps = LegMaps::new(params, horizon)?;
    let cost = ShapeCost { maps: &maps, waypoints, fixed, clearance };
    let mut x: Vec<f64> = start.iter().zip(fixed).filter(|(_, f)| f.is_none()).flat_map(|(v, _)| [v.x, v.y]).collect();
    if x.is_empty() {
        return Ok(start);
    }
    // A few restarts shake Nelder-Mead out of degenerate simplices.
    let mut best = cost.cost(&x).map_err(|e| Error::Singular(e.to_string()))?;
    for step in [0.02, 0.01, 0.005, 0.002] {
        let mut simplex = vec![x.clone()];
        for i in 0..x.len() {
            let mut y = x.clone();
            y[i] += step;
            simplex.push(y);
        }
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).map_err(|e| Error::Singular(e.to_string()))?;
        let res = Executor::new(ShapeCost { maps: &maps, waypoints, fixed, clearance }, solver)
            .configure(|st| st.max_iters(4000))
            .run()
            .map_err(|e| Error::Singular(e.to_string()))?;
        if res.state.best_cost < best {
            best = res.state.best_cost;
            x = res.state.best_param.expect("best param");
        }
    }
    let s = cost.states(&x);
    Ok(s.iter().map(|v| Vec2::new(v[2], v[3])).collect())
}

#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub states: Vec<StateVec>,
    /// Thrust-plane input in the local frame, in per-thruster units.
    pub p: Vec<Vec2>,
    pub rho_ref: f64,
    pub kos_min_m: f64,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Sample `k`, clamped to the last one (the chaser holds afterwards).
    pub fn at(&self, k: usize) -> (StateVec, Vec2) {
        let i = k.min(self.t.len() - 1);
        (self.states[i], self.p[i])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
        wr.write_record(["t", "x_ref", "y_ref", "vx_ref", "vy_ref", "p3_ref", "p4_ref"]).map_err(io)?;
        for i in 0..self.len() {
            let s = &self.states[i];
            let p = &self.p[i];
            wr.serialize((self.t[i], s.x, s.y, s.vx, s.vy, p.x, p.y)).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let (mut t, mut states, mut p) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rd.deserialize::<(f64, f64, f64, f64, f64, f64, f64)>() {
            let (ti, x, y, vx, vy, p3, p4) = rec.map_err(|e| Error::Config(format!("csv: {e}")))?;
            t.push(ti);
            states.push(StateVec::new(x, y, vx, vy));
            p.push(Vec2::new(p3, p4));
        }
        if t.len() < 2 {
            return Err(Error::Config("reference csv needs at least two rows".into()));
        }
        let dt = t[1] - t[0];
        let rho_ref = p.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let kos_min_m = kos_check(&states, 0.0).0;
        Ok(Self { dt, t, states, p, rho_ref, kos_min_m })
    }
}

/// Builds the reference on the uniform grid `k dt`.
pub fn build_reference(params: &CwParams, mission: &Mission, dt: f64) -> Result<ReferenceTrajectory> {
    mission.validate()?;
    let horizon = mission.transfer_time_s;
    let steps_per_leg = horizon / dt;
    if (steps_per_leg - steps_per_leg.round()).abs() > 1e-9 * steps_per_leg.max(1.0) {
        return Err(Error::Config(format!("transfer time {horizon} s is not a multiple of dt = {dt} s")));
    }
    let wp = mission.nodes();
    let vel = mission.node_velocities(params)?;
    let mut t = Vec::new();
    let mut states = Vec::new();
    let mut p = Vec::new();
    for leg in 0..wp.len() - 1 {
        let a = StateVec::new(wp[leg][0], wp[leg][1], vel[leg].x, vel[leg].y);
        let b = StateVec::new(wp[leg + 1][0], wp[leg + 1][1], vel[leg + 1].x, vel[leg + 1].y);
        let seg = min_energy_transfer(params, &a, &b, horizon, dt)?;
        let t0 = leg as f64 * horizon;
        // Drop each leg's final sample; the next leg starts from the same state.
        let keep = seg.t.len() - 1;
        for k in 0..keep {
            t.push(t0 + seg.t[k]);
            states.push(seg.states[k]);
            p.push(seg.inputs[k]);
        }
    }
    let end = wp[wp.len() - 1];
    let hold = StateVec::new(end[0], end[1], vel[wp.len() - 1].x, vel[wp.len() - 1].y);
    let t_end = (horizon * (wp.len() - 1) as f64).max(mission.duration_s);
    let n_total = (t_end / dt).round() as usize;
    let mut s = hold.to_vec();
    let phi = StateMatrix::Cw(*params).expm(dt);
    for k in t.len()..=n_total {
        t.push(k as f64 * dt);
        states.push(StateVec::from_vec(&s));
        p.push(Vec2::zeros());
        s = phi * s;
    }
    let rho_ref = p.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (kos_min_m, violated) = kos_check(&states, mission.kos_radius_m);
    if violated {
        let i = states
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.position().norm().total_cmp(&b.1.position().norm()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        return Err(Error::KosViolation { t_s: t[i], distance_m: kos_min_m });
    }
    Ok(ReferenceTrajectory { dt, t, states, p, rho_ref, kos_min_m })
}

/// Minimum distance to the target along `states`, and whether it breaches `radius`.
pub fn kos_check(states: &[StateVec], radius: f64) -> (f64, bool) {
    let d = states.iter().map(|s| s.position().norm()).fold(f64::INFINITY, f64::min);
    (d, d < radius)
}
