//! Closed-loop scenario runs with actuation delay, metrics and the Pareto sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{feedback_law, Allocator, DelayBuffer, OpenLoopDelayed, Predictor};
use crate::disturbance::{sample_signal, DisturbanceSpec};
use crate::dynamics::{
    rotate_force, split_layout, unrotate_force, CwParams, Matrix4, Propagator, StateMatrix, ThrusterLayout, Vec2, Vec4,
    G0,
};
use crate::error::{Error, Result};
use crate::geometry;
use crate::reference::{build_reference, zoh_steer, Mission, ReferenceTrajectory};
use crate::resilience::{certificate, design_gains, log_norm, reach_radius_bound, GainSet};

/// States beyond this norm mark a run as diverged.
pub const DIVERGENCE_M: f64 = 1.0e6;

/// Where the feedback gain comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSource {
    /// Designed from the scenario's own delay and Lipschitz constant.
    Auto,
    /// Designed at a fixed operating point and reused as is.
    DesignPoint { lip_l_per_s: f64, tau_s: f64 },
    /// Scalar gain `k` of `K = k S`.
    Explicit { k: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub params: CwParams,
    pub failed_index: usize,
    pub tau_s: f64,
    pub disturbance: DisturbanceSpec,
    pub gains: GainSource,
    pub dt_s: f64,
    pub duration_s: f64,
    /// `X(0) - X_ref(0)`: x, y (m), vx, vy (m/s).
    pub x0_offset: [f64; 4],
    pub success_threshold_m: f64,
    pub mission: Mission,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            params: CwParams::default(),
            failed_index: 4,
            tau_s: 0.2,
            disturbance: DisturbanceSpec::default(),
            gains: GainSource::Auto,
            dt_s: 0.1,
            duration_s: 27_000.0,
            x0_offset: [0.0; 4],
            success_threshold_m: 0.8,
            mission: Mission::default(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.disturbance.validate()?;
        self.mission.validate()?;
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return Err(Error::Config(format!("dt_s must be > 0, got {}", self.dt_s)));
        }
        if !(self.tau_s >= 0.0) {
            return Err(Error::Config(format!("tau_s must be >= 0, got {}", self.tau_s)));
        }
        let d = self.tau_s / self.dt_s;
        if (d - d.round()).abs() > 1e-9 * d.max(1.0) {
            return Err(Error::Config(format!(
                "tau_s = {} is not an integer multiple of dt_s = {}",
                self.tau_s, self.dt_s
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config("duration_s must be > 0".into()));
        }
        if !(self.success_threshold_m > 0.0) {
            return Err(Error::Config("success_threshold_m must be > 0".into()));
        }
        if let GainSource::Explicit { k } = self.gains {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::Config(format!("explicit gain k must be > 0, got {k}")));
            }
        }
        self.layout()?;
        Ok(())
    }

    pub fn delay_steps(&self) -> usize {
        (self.tau_s / self.dt_s).round() as usize
    }

    pub fn steps(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }

    pub fn layout(&self) -> Result<ThrusterLayout> {
        split_layout(&ThrusterLayout::spacecraft(), Some(self.failed_index)).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn reference(&self) -> Result<ReferenceTrajectory> {
        build_reference(&self.params, &self.mission, self.dt_s)
    }

    fn offset(&self) -> Vec4 {
        Vec4::from(self.x0_offset)
    }
}

/// Gain actually used by a run plus the certificate evaluated at the run's
/// own delay and disturbance, when the disturbance is Lipschitz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedGains {
    pub gains: GainSet,
    pub scenario_certificate: Option<GainSet>,
}

/// `sqrt(y^T P y)`.
fn p_norm(p: &Matrix4, y: &Vec4) -> f64 {
    (y.transpose() * p * y)[(0, 0)].max(0.0).sqrt()
}

pub fn resolve_gains(scenario: &Scenario, rho_ref: f64) -> Result<ResolvedGains> {
    let params = &scenario.params;
    let layout = scenario.layout()?;
    let lip = scenario.disturbance.lipschitz_bound();
    let y0 = scenario.offset();
    let gains = match &scenario.gains {
        GainSource::Auto => {
            let l = lip.ok_or_else(|| {
                Error::TrackingInfeasible("a bang-bang disturbance has no Lipschitz bound to design for".into())
            })?;
            let g = design_gains(params, &layout, rho_ref, l, scenario.tau_s, 0.0)?;
            let y0p = p_norm(&g.p, &y0);
            if y0p > 0.0 {
                design_gains(params, &layout, rho_ref, l, scenario.tau_s, y0p)?
            } else {
                g
            }
        }
        GainSource::DesignPoint { lip_l_per_s, tau_s } => {
            design_gains(params, &layout, rho_ref, *lip_l_per_s, *tau_s, 0.0)?
        }
        GainSource::Explicit { k } => certificate(params, &layout, *k, lip.unwrap_or(0.0), scenario.tau_s, 0.0)?,
    };
    let scenario_certificate = match lip {
        Some(l) => {
            let y0p = p_norm(&gains.p, &y0);
            Some(certificate(params, &layout, gains.k, l, scenario.tau_s, y0p)?)
        }
        None => None,
    };
    Ok(ResolvedGains { gains, scenario_certificate })
}

/// One logged sample of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub x_ref: f64,
    pub y_ref: f64,
    pub vx_ref: f64,
    pub vy_ref: f64,
    pub theta: f64,
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u5: f64,
    pub w: f64,
    pub bu_norm: f64,
    pub pos_err: f64,
    pub vel_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    /// `|X_p - X|` per sample.
    pub pred_err: Vec<f64>,
    /// Thruster levels in controlled-column order.
    pub u: Vec<Vec<f64>>,
    /// Allocation of the reference input alone (fuel bookkeeping).
    pub u_ref_sum: Vec<f64>,
    pub saturated: Vec<bool>,
    pub diverged: bool,
}

impl SimTrace {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wr.serialize(row).map_err(|e| Error::Config(format!("csv: {e}")))?;
        }
        wr.flush().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub avg_pos_err_m: f64,
    pub max_pos_err_m: f64,
    pub avg_vel_err_mps: f64,
    pub max_vel_err_mps: f64,
    /// `max |X - X_ref|` over the run (mixed m and m/s, as the certificate).
    pub max_state_norm_diff: f64,
    pub max_pred_err: f64,
    pub j_u_ns: f64,
    pub j_w_ns: f64,
    pub j_ref_ns: f64,
    pub m_u_kg: f64,
    pub m_w_kg: f64,
    pub m_ref_kg: f64,
    /// `(m_u - m_w - m_ref) / (m_w + m_ref)`.
    pub r_fuel: f64,
    pub kos_min_m: f64,
    pub saturation_fraction: f64,
    pub diverged: bool,
    pub success: bool,
    pub gain_k: f64,
    pub epsilon: f64,
    /// Certificate tolerance at the scenario's delay, if it applies.
    pub tolerance: Option<f64>,
}

/// Closed-loop run on a prebuilt reference.
pub fn run_with_reference(
    scenario: &Scenario,
    reference: &ReferenceTrajectory,
    resolved: &ResolvedGains,
) -> Result<(SimTrace, Metrics)> {
    scenario.validate()?;
    if (reference.dt - scenario.dt_s).abs() > 1e-12 * scenario.dt_s {
        return Err(Error::Config("reference grid does not match dt_s".into()));
    }
    let params = scenario.params;
    let r = params.thrust_ratio_r;
    let layout = scenario.layout()?;
    let c = layout.c_fail.unwrap_or_else(Vec4::zeros);
    let model = StateMatrix::Cw(params);
    let dt = scenario.dt_s;
    let d = scenario.delay_steps();
    let n_steps = scenario.steps();
    let prop = Propagator::new(&model, dt);
    let predictor = Predictor::new(&model, dt, d);
    let alloc = Allocator::from_layout(&layout);
    let gains = &resolved.gains;

    let t_grid: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
    let w = sample_signal(&scenario.disturbance, &t_grid);

    let mut xs = DelayBuffer::new(dt, d + 1);
    let mut fs = DelayBuffer::new(dt, d + 1);
    let mut trace = SimTrace::default();
    trace.rows.reserve(n_steps + 1);

    let mut x = reference.states[0].to_vec() + scenario.offset();
    let mut theta = x[1].atan2(x[0]);
    for n in 0..=n_steps {
        let t = t_grid[n];
        xs.push(t, x)?;
        let x_p = predictor.predict(&xs, &fs, t)?;
        if x_p[0] != 0.0 || x_p[1] != 0.0 {
            theta = x_p[1].atan2(x_p[0]);
        }
        let (s_ref, p_ref) = reference.at(n);
        let x_ref = s_ref.to_vec();
        let w_delayed = if n >= d { w[n - d] } else { 0.0 };
        let target = feedback_law(theta, &x_p, &x_ref, &p_ref, w_delayed, gains, &c);
        let a = alloc.allocate(&Vec2::new(target[2], target[3]));
        let bu = Vec4::new(0.0, 0.0, a.achieved.x, a.achieved.y);

        let theta_ref = x_ref[1].atan2(x_ref[0]);
        let body_ref = unrotate_force(theta_ref, &Vec4::new(0.0, 0.0, p_ref.x, p_ref.y));
        let u_ref = alloc.allocate(&Vec2::new(body_ref[2], body_ref[3]));

        let err = x - x_ref;
        let mut u4 = [0.0; 4];
        for (slot, v) in u4.iter_mut().zip(&a.u) {
            *slot = *v;
        }
        trace.rows.push(TraceRow {
            t,
            x: x[0],
            y: x[1],
            vx: x[2],
            vy: x[3],
            x_ref: x_ref[0],
            y_ref: x_ref[1],
            vx_ref: x_ref[2],
            vy_ref: x_ref[3],
            theta,
            u1: u4[0],
            u2: u4[1],
            u3: u4[2],
            u5: u4[3],
            w: w[n],
            bu_norm: a.achieved.norm(),
            pos_err: err.fixed_rows::<2>(0).norm(),
            vel_err: err.fixed_rows::<2>(2).norm(),
        });
        trace.pred_err.push((x_p - x).norm());
        trace.u.push(a.u.clone());
        trace.u_ref_sum.push(u_ref.u.iter().sum());
        trace.saturated.push(a.saturated);

        if n == n_steps {
            break;
        }
        fs.push(t, rotate_force(theta, &(bu + c * w_delayed)) * r)?;
        let f_true = rotate_force(theta, &(bu + c * w[n])) * r;
        x = prop.step_linear(&x, &f_true);
        if !(x.norm() <= DIVERGENCE_M) {
            trace.diverged = true;
            break;
        }
    }
    let metrics = compute_metrics(&trace, reference, scenario, resolved);
    Ok((trace, metrics))
}

/// Builds the reference, resolves the gains and runs the scenario.
pub fn run_scenario(scenario: &Scenario) -> Result<(SimTrace, Metrics)> {
    scenario.validate()?;
    let reference = scenario.reference()?;
    let resolved = resolve_gains(scenario, reference.rho_ref)?;
    run_with_reference(scenario, &reference, &resolved)
}

pub fn compute_metrics(
    trace: &SimTrace,
    reference: &ReferenceTrajectory,
    scenario: &Scenario,
    resolved: &ResolvedGains,
) -> Metrics {
    let params = &scenario.params;
    let dt = scenario.dt_s;
    let n = trace.rows.len().max(1) as f64;
    let mut m = Metrics {
        avg_pos_err_m: 0.0,
        max_pos_err_m: 0.0,
        avg_vel_err_mps: 0.0,
        max_vel_err_mps: 0.0,
        max_state_norm_diff: 0.0,
        max_pred_err: trace.pred_err.iter().cloned().fold(0.0, f64::max),
        j_u_ns: 0.0,
        j_w_ns: 0.0,
        j_ref_ns: 0.0,
        m_u_kg: 0.0,
        m_w_kg: 0.0,
        m_ref_kg: 0.0,
        r_fuel: 0.0,
        kos_min_m: f64::INFINITY,
        saturation_fraction: trace.saturated.iter().filter(|&&s| s).count() as f64 / n,
        diverged: trace.diverged,
        success: false,
        gain_k: resolved.gains.k,
        epsilon: resolved.gains.epsilon,
        tolerance: resolved.scenario_certificate.as_ref().map(|g| g.tolerance),
    };
    // Fuel integrals use the held value over each step except the last sample.
    let held = trace.rows.len().saturating_sub(1);
    for (i, row) in trace.rows.iter().enumerate() {
        m.avg_pos_err_m += row.pos_err / n;
        m.avg_vel_err_mps += row.vel_err / n;
        m.max_pos_err_m = m.max_pos_err_m.max(row.pos_err);
        m.max_vel_err_mps = m.max_vel_err_mps.max(row.vel_err);
        let s_ref = reference.at(i).0;
        let diff = Vec4::new(row.x - s_ref.x, row.y - s_ref.y, row.vx - s_ref.vx, row.vy - s_ref.vy).norm();
        m.max_state_norm_diff = m.max_state_norm_diff.max(diff);
        m.kos_min_m = m.kos_min_m.min(row.x.hypot(row.y));
        if i < held {
            m.j_u_ns += trace.u[i].iter().sum::<f64>() * dt;
            m.j_w_ns += row.w * dt;
            m.j_ref_ns += trace.u_ref_sum[i] * dt;
        }
    }
    m.j_u_ns *= params.f_max;
    m.j_w_ns *= params.f_max;
    m.j_ref_ns *= params.f_max;
    let ve = params.isp * G0;
    m.m_u_kg = m.j_u_ns / ve;
    m.m_w_kg = m.j_w_ns / ve;
    m.m_ref_kg = m.j_ref_ns / ve;
    let base = m.m_w_kg + m.m_ref_kg;
    m.r_fuel = if base > 0.0 { (m.m_u_kg - base) / base } else { 0.0 };
    m.success = !trace.diverged && m.max_pos_err_m <= scenario.success_threshold_m;
    m
}

/// Outcome of one `(tau, w_max)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoCell {
    pub tau_s: f64,
    pub w_max: f64,
    pub success: bool,
    /// Largest max position error over the seeds.
    pub worst_max_pos_err_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub cells: Vec<ParetoCell>,
    /// `(tau, largest successful w_max)`; 0 when no cell succeeds.
    pub front: Vec<(f64, f64)>,
}

/// Runs every `(tau, w_max, seed)` combination; a cell succeeds when all its
/// seeds do. Seeds are `base.disturbance.seed + i`. Runs are spread over the
/// current rayon pool.
pub fn pareto_sweep(
    tau_grid: &[f64],
    wmax_grid: &[f64],
    base: &Scenario,
    seeds_per_cell: usize,
) -> Result<ParetoFront> {
    if tau_grid.is_empty() || wmax_grid.is_empty() || seeds_per_cell == 0 {
        return Err(Error::Config("pareto grids and seeds_per_cell must be nonempty".into()));
    }
    let reference = base.reference()?;
    let mut jobs = Vec::new();
    for (ti, &tau) in tau_grid.iter().enumerate() {
        for (wi, &w_max) in wmax_grid.iter().enumerate() {
            for s in 0..seeds_per_cell {
                let mut sc = base.clone();
                sc.tau_s = tau;
                sc.disturbance.w_max = w_max;
                sc.disturbance.seed = base.disturbance.seed.wrapping_add(s as u64);
                sc.validate()?;
                jobs.push((ti, wi, sc));
            }
        }
    }
    let results: Vec<Result<(usize, usize, Metrics)>> = jobs
        .par_iter()
        .map(|(ti, wi, sc)| {
            let resolved = resolve_gains(sc, reference.rho_ref)?;
            let (_, m) = run_with_reference(sc, &reference, &resolved)?;
            Ok((*ti, *wi, m))
        })
        .collect();
    let mut cells: Vec<ParetoCell> = Vec::new();
    for &tau in tau_grid {
        for &w_max in wmax_grid {
            cells.push(ParetoCell { tau_s: tau, w_max, success: true, worst_max_pos_err_m: 0.0 });
        }
    }
    for res in results {
        let (ti, wi, m) = res?;
        let cell = &mut cells[ti * wmax_grid.len() + wi];
        cell.success &= m.success;
        cell.worst_max_pos_err_m = cell.worst_max_pos_err_m.max(m.max_pos_err_m);
    }
    let front = tau_grid
        .iter()
        .enumerate()
        .map(|(ti, &tau)| {
            let best = cells[ti * wmax_grid.len()..(ti + 1) * wmax_grid.len()]
                .iter()
                .filter(|c| c.success)
                .map(|c| c.w_max)
                .fold(0.0, f64::max);
            (tau, best)
        })
        .collect();
    Ok(ParetoFront { cells, front })
}

/// Linear system of the delayed theory, `x' = A x + B u + C w`, used to
/// exercise the open-loop controller.
#[derive(Debug, Clone)]
pub struct LinearDemo {
    pub a: Matrix4,
    pub b_cols: Vec<Vec4>,
    pub c_col: Vec4,
    pub tau_s: f64,
    /// Grid steps per correction time; the grid is `dt = T_c / steps_per_tc`.
    pub steps_per_tc: usize,
    pub horizon_s: f64,
    pub x_ref0: Vec4,
    /// Constant reference input (thrust plane).
    pub p_ref: Vec2,
    pub x0_offset: Vec4,
    /// Budget of the finite-time stabilizer.
    pub eps_budget: f64,
    pub disturbance: DisturbanceSpec,
}

impl LinearDemo {
    /// `x' = -x + 0.5 u + w` on the third state, `u, w in [0, 1]`: `T_c = ln 2`.
    pub fn scalar(seed: u64) -> Self {
        Self {
            a: -Matrix4::identity(),
            b_cols: vec![Vec4::new(0.0, 0.0, 0.5, 0.0)],
            c_col: Vec4::new(0.0, 0.0, 1.0, 0.0),
            tau_s: 0.0,
            steps_per_tc: 100,
            horizon_s: 10.0,
            x_ref0: Vec4::new(0.0, 0.0, 0.2, 0.0),
            p_ref: Vec2::new(0.5, 0.0),
            x0_offset: Vec4::zeros(),
            eps_budget: 0.0,
            disturbance: DisturbanceSpec { w_max: 1.0, lip_l_per_s: 0.5, seed, ..DisturbanceSpec::default() },
        }
    }

    /// Two-input variant whose correction set has an interior, so that an
    /// initial offset can be removed in finite time.
    pub fn planar(seed: u64) -> Self {
        Self {
            a: -Matrix4::identity(),
            b_cols: vec![
                Vec4::new(0.0, 0.0, 1.0, 0.0),
                Vec4::new(0.0, 0.0, -1.0, 0.0),
                Vec4::new(0.0, 0.0, 0.0, 1.0),
                Vec4::new(0.0, 0.0, 0.0, -1.0),
            ],
            c_col: Vec4::new(0.0, 0.0, 1.0, 0.0),
            tau_s: 0.5,
            steps_per_tc: 50,
            horizon_s: 20.0,
            x_ref0: Vec4::new(0.0, 0.0, 0.3, -0.1),
            p_ref: Vec2::new(0.5, 0.0),
            x0_offset: Vec4::new(0.0, 0.0, 0.4, -0.3),
            eps_budget: 0.35,
            disturbance: DisturbanceSpec { w_max: 1.0, lip_l_per_s: 0.5, seed, ..DisturbanceSpec::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearDemoRun {
    pub t_c: f64,
    pub dt: f64,
    pub rho_bound: f64,
    pub t_f: f64,
    pub t: Vec<f64>,
    /// `|x - x_ref|` per sample.
    pub errors: Vec<f64>,
    pub final_error: f64,
    /// Largest error from `t_f + T_c` on.
    pub max_error_after_settle: f64,
}

pub fn run_linear_demo(demo: &LinearDemo) -> Result<LinearDemoRun> {
    let model = StateMatrix::General(demo.a);
    let layout = ThrusterLayout::custom(demo.b_cols.clone(), demo.c_col);
    let t_c = geometry::minimal_correction_time(&model, &layout, demo.tau_s, 1.0, 100.0, 0.01)
        .ok_or_else(|| Error::BudgetExceedsSet("no finite correction time".into()))?;
    if !(t_c > 0.0) {
        return Err(Error::Precondition("the demo needs a positive correction time".into()));
    }
    let dt = t_c / demo.steps_per_tc as f64;
    let n = (demo.horizon_s / dt).ceil() as usize;
    let prop = Propagator::new(&model, dt);
    let mu = log_norm(&demo.a);
    let rho_bound = reach_radius_bound(demo.c_col.norm(), mu, t_c);

    // Offset removal on y' = A y + p, y(0) = e^{A T_c}(x0 - x_ref(0)).
    let y0 = model.expm(t_c) * demo.x0_offset;
    let (t_f, p_eps) = if y0.norm() == 0.0 {
        (0.0, Vec::new())
    } else {
        let plan = crate::controller::finite_time_stabilizer(&model, 1.0, &y0, demo.eps_budget, 1e4)?;
        let n_f = (plan.t_f / dt).ceil() as usize;
        let (_, inputs) = zoh_steer(&model, 1.0, &y0, &Vec4::zeros(), n_f, dt)?;
        (n_f as f64 * dt, inputs[..n_f].to_vec())
    };

    let p_ref = vec![demo.p_ref; n + 1];
    let plan = OpenLoopDelayed::new(&model, &layout, t_c, dt, p_ref, p_eps)?;
    let t: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    let w = sample_signal(&demo.disturbance, &t);
    let alloc = Allocator::from_layout(&layout);

    let mut x = demo.x_ref0 + demo.x0_offset;
    let mut x_ref = demo.x_ref0;
    let p_ref4 = Vec4::new(0.0, 0.0, demo.p_ref.x, demo.p_ref.y);
    let mut errors = Vec::with_capacity(n + 1);
    for k in 0..=n {
        errors.push((x - x_ref).norm());
        if k == n {
            break;
        }
        let target = plan.bu(k, &w);
        let a = alloc.allocate(&target);
        if a.saturated {
            return Err(Error::BudgetExceedsSet(format!("open-loop input left B U at t = {}", t[k])));
        }
        let bu = Vec4::new(0.0, 0.0, a.achieved.x, a.achieved.y);
        x = prop.step_linear(&x, &(bu + demo.c_col * w[k]));
        x_ref = prop.step_linear(&x_ref, &p_ref4);
    }
    let settle = t_f + t_c;
    let max_error_after_settle =
        t.iter().zip(&errors).filter(|(ti, _)| **ti >= settle - 1e-9).map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(LinearDemoRun {
        t_c,
        dt,
        rho_bound,
        t_f,
        final_error: *errors.last().expect("nonempty"),
        t,
        errors,
        max_error_after_settle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbance::DisturbanceKind;

    fn short(mut s: Scenario) -> Scenario {
        s.mission.duration_s = 5400.0;
        s.duration_s = 5400.0;
        s
    }

    #[test]
    fn tau_must_be_multiple_of_dt() {
        let s = Scenario { tau_s: 0.25, ..Scenario::default() };
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        assert!(Scenario::default().validate().is_ok());
    }

    #[test]
    fn undisturbed_tracking_is_exact() {
        let s = short(Scenario {
            tau_s: 0.0,
            disturbance: DisturbanceSpec::constant(1e-300),
            gains: GainSource::Explicit { k: 472.0 },
            ..Scenario::default()
        });
        let (_, m) = run_scenario(&s).unwrap();
        assert!(m.max_pos_err_m <= 1e-5, "{}", m.max_pos_err_m);
        assert!(m.success);
    }

    #[test]
    fn constant_w_without_delay_stays_on_reference() {
        let s = short(Scenario {
            tau_s: 0.0,
            disturbance: DisturbanceSpec::constant(0.01),
            gains: GainSource::Explicit { k: 472.0 },
            ..Scenario::default()
        });
        let (_, m) = run_scenario(&s).unwrap();
        assert!(m.max_pos_err_m <= 1e-6, "{}", m.max_pos_err_m);
    }

    #[test]
    fn runs_are_deterministic() {
        let s = short(Scenario { gains: GainSource::Explicit { k: 472.0 }, ..Scenario::default() });
        let (_, a) = run_scenario(&s).unwrap();
        let (_, b) = run_scenario(&s).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn bangbang_cannot_auto_design() {
        let s = Scenario {
            disturbance: DisturbanceSpec { kind: DisturbanceKind::Bangbang, ..Default::default() },
            ..Scenario::default()
        };
        assert!(matches!(resolve_gains(&s, 0.05), Err(Error::TrackingInfeasible(_))));
    }

    #[test]
    fn scalar_demo_within_reach_radius() {
        for seed in 0..5 {
            let run = run_linear_demo(&LinearDemo::scalar(seed)).unwrap();
            assert!((run.t_c - std::f64::consts::LN_2).abs() < 1e-5);
            assert!((run.rho_bound - 0.5).abs() < 1e-5);
            assert!(run.final_error <= run.rho_bound, "{} > {}", run.final_error, run.rho_bound);
        }
    }

    #[test]
    fn zero_disturbance_demo_tracks_exactly() {
        let mut demo = LinearDemo::scalar(0);
        demo.disturbance = DisturbanceSpec::constant(1e-300);
        let run = run_linear_demo(&demo).unwrap();
        assert!(run.errors.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn planar_demo_removes_offset() {
        for seed in 0..3 {
            let run = run_linear_demo(&LinearDemo::planar(seed)).unwrap();
            assert!(run.t_f > 0.0);
            assert!(run.max_error_after_settle <= run.rho_bound, "{} > {}", run.max_error_after_settle, run.rho_bound);
        }
    }
}
