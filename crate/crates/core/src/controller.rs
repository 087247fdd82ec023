//! State predictor, delayed feedback law, thrust allocation, finite-time
//! stabilizer and the open-loop delayed controller of the linear theory.

use std::collections::VecDeque;

use crate::dynamics::{rotate_force, unrotate_force, Matrix4, StateMatrix, ThrusterLayout, Vec2, Vec4};
use crate::error::{Error, Result};
use crate::geometry::{self, ConvexPolygon2, GEOM_TOL};
use crate::reference::{Steering, N_QUAD};
use crate::resilience::GainSet;

/// Uniformly sampled history `(t, value)` covering at least the delay.
#[derive(Debug, Clone)]
pub struct DelayBuffer<T> {
    dt: f64,
    capacity: usize,
    data: VecDeque<(f64, T)>,
}

impl<T: Copy> DelayBuffer<T> {
    /// Keeps the last `capacity` samples; at least `tau / dt + 1` are needed
    /// to look up `t - tau`.
    pub fn new(dt: f64, capacity: usize) -> Self {
        Self { dt, capacity: capacity.max(1), data: VecDeque::with_capacity(capacity.max(1)) }
    }

    pub fn push(&mut self, t: f64, value: T) -> Result<()> {
        if let Some(&(last, _)) = self.data.back() {
            if !(t > last) || ((t - last) - self.dt).abs() > 1e-6 * self.dt {
                return Err(Error::BufferUnderrun(format!(
                    "sample at t = {t} does not follow t = {last} by dt = {}",
                    self.dt
                )));
            }
        }
        if self.data.len() == self.capacity {
            self.data.pop_front();
        }
        self.data.push_back((t, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.data.front().map(|s| s.0)
    }

    pub fn latest(&self) -> Option<(f64, T)> {
        self.data.back().copied()
    }

    /// Exact lookup of the sample stamped `t`.
    pub fn at(&self, t: f64) -> Result<T> {
        let (t0, _) = *self.data.front().ok_or_else(|| Error::BufferUnderrun("empty buffer".into()))?;
        let k = ((t - t0) / self.dt).round();
        if k < 0.0 || k as usize >= self.data.len() || (t0 + k * self.dt - t).abs() > 1e-6 * self.dt {
            return Err(Error::BufferUnderrun(format!("no sample at t = {t}")));
        }
        Ok(self.data[k as usize].1)
    }
}

/// Reconstructs the current state from a delayed measurement and the applied
/// force history, stepping the exact zero-order-hold transition.
///
/// `X_p(t) = Phi^m X(t - m dt) + sum_j Phi^{m-1-j} Gamma f_j`, where `f_j` is
/// the inertial-frame force `r R(theta_j)(B u_j + C w(t_j - tau))` held over
/// step `j`. With `tau = m dt` this is the sampled form of
/// `e^{A tau} X(t - tau) + int e^{A(t - s)} r R(Bu(s) + Cw(s - tau)) ds`.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub dt: f64,
    pub delay_steps: usize,
    /// `Phi^k`, `k = 0..=d`.
    phi_pow: Vec<Matrix4>,
    /// `Phi^k Gamma`, `k = 0..d`.
    phi_gamma: Vec<Matrix4>,
}

impl Predictor {
    pub fn new(model: &StateMatrix, dt: f64, delay_steps: usize) -> Self {
        let phi = model.expm(dt);
        let gamma = model.expm_integral(dt);
        let mut phi_pow = vec![Matrix4::identity()];
        let mut phi_gamma = Vec::with_capacity(delay_steps);
        for k in 0..delay_steps {
            phi_gamma.push(phi_pow[k] * gamma);
            phi_pow.push(phi * phi_pow[k]);
        }
        Self { dt, delay_steps, phi_pow, phi_gamma }
    }

    /// Predicts `X(t)`. Before a full delay of measurements exists, the
    /// prediction starts from the earliest stored state.
    pub fn predict(&self, states: &DelayBuffer<Vec4>, forces: &DelayBuffer<Vec4>, t: f64) -> Result<Vec4> {
        let t_first = states.first_time().ok_or_else(|| Error::BufferUnderrun("no state history".into()))?;
        let avail = ((t - t_first) / self.dt).round().max(0.0) as usize;
        let m = self.delay_steps.min(avail);
        let t0 = t - m as f64 * self.dt;
        let mut x = self.phi_pow[m] * states.at(t0)?;
        for j in 0..m {
            let f = forces.at(t0 + j as f64 * self.dt)?;
            x += self.phi_gamma[m - 1 - j] * f;
        }
        Ok(x)
    }
}

/// One-shot prediction from explicit histories: `states` holds the measured
/// states and `forces` the applied inertial forces, both on the same grid.
pub fn predict_state(
    model: &StateMatrix,
    states: &DelayBuffer<Vec4>,
    forces: &DelayBuffer<Vec4>,
    t: f64,
    tau: f64,
    dt: f64,
) -> Result<Vec4> {
    if tau < 0.0 {
        return Err(Error::Precondition(format!("tau must be >= 0, got {tau}")));
    }
    let d = (tau / dt).round() as usize;
    Predictor::new(model, dt, d).predict(states, forces, t)
}

/// Target body-frame force
/// `Bu = -C w(t - tau) + R^-1 p_ref + R^-1 B K (X_ref - X_p)`.
pub fn feedback_law(
    theta: f64,
    x_p: &Vec4,
    x_ref: &Vec4,
    p_ref: &Vec2,
    w_delayed: f64,
    gains: &GainSet,
    c_fail: &Vec4,
) -> Vec4 {
    let inertial = Vec4::new(0.0, 0.0, p_ref.x, p_ref.y) + gains.bk * (x_ref - x_p);
    let mut bu = unrotate_force(theta, &inertial) - c_fail * w_delayed;
    bu[0] = 0.0;
    bu[1] = 0.0;
    bu
}

/// Thruster levels realizing a planar force.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub u: Vec<f64>,
    pub saturated: bool,
    /// `B u` actually produced.
    pub achieved: Vec2,
}

/// Minimum-sum allocation over the controlled columns with `0 <= u <= 1`.
#[derive(Debug, Clone)]
pub struct Allocator {
    cols: Vec<Vec2>,
    zonotope: ConvexPolygon2,
}

impl Allocator {
    pub fn new(cols: &[Vec2]) -> Self {
        Self { cols: cols.to_vec(), zonotope: geometry::zonotope_of_inputs(cols) }
    }

    pub fn from_layout(layout: &ThrusterLayout) -> Self {
        Self::new(&layout.ctrl_planar())
    }

    pub fn zonotope(&self) -> &ConvexPolygon2 {
        &self.zonotope
    }

    /// Exact LP optimum by enumerating basic solutions: two basic columns,
    /// all others at a bound. Falls back to the closest point of `B U`.
    pub fn allocate(&self, target: &Vec2) -> Allocation {
        if let Some(u) = self.basic_optimum(target, 1e-9) {
            let achieved = self.apply(&u);
            return Allocation { u, saturated: false, achieved };
        }
        let z = closest_point(&self.zonotope, target);
        let u = self.basic_optimum(&z, 1e-7).unwrap_or_else(|| vec![0.0; self.cols.len()]);
        let achieved = self.apply(&u);
        Allocation { u, saturated: true, achieved }
    }

    fn apply(&self, u: &[f64]) -> Vec2 {
        self.cols.iter().zip(u).fold(Vec2::zeros(), |a, (c, &ui)| a + c * ui)
    }

    fn basic_optimum(&self, target: &Vec2, tol: f64) -> Option<Vec<f64>> {
        let m = self.cols.len();
        match m {
            0 => return (target.norm() <= tol).then(Vec::new),
            1 => {
                let c = self.cols[0];
                let s = target.dot(&c) / c.norm_squared();
                let ok = (-tol..=1.0 + tol).contains(&s) && (c * s - target).norm() <= tol.max(1e-12 * target.norm());
                return ok.then(|| vec![s.clamp(0.0, 1.0)]);
            }
            _ => {}
        }
        let scale = 1.0 + target.norm();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for i in 0..m {
            for j in (i + 1)..m {
                let (a, b) = (self.cols[i], self.cols[j]);
                let det = a.x * b.y - a.y * b.x;
                if det.abs() <= 1e-12 * a.norm() * b.norm() {
                    continue;
                }
                let others: Vec<usize> = (0..m).filter(|&k| k != i && k != j).collect();
                for mask in 0..(1u32 << others.len()) {
                    let mut u = vec![0.0; m];
                    let mut rhs = *target;
                    for (bit, &k) in others.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            u[k] = 1.0;
                            rhs -= self.cols[k];
                        }
                    }
                    let ui = (rhs.x * b.y - rhs.y * b.x) / det;
                    let uj = (a.x * rhs.y - a.y * rhs.x) / det;
                    let lim = tol * scale;
                    if ui < -lim || ui > 1.0 + lim || uj < -lim || uj > 1.0 + lim {
                        continue;
                    }
                    u[i] = ui.clamp(0.0, 1.0);
                    u[j] = uj.clamp(0.0, 1.0);
                    let cost: f64 = u.iter().sum();
                    if best.as_ref().is_none_or(|(c, _)| cost < c - 1e-12) {
                        best = Some((cost, u));
                    }
                }
            }
        }
        best.map(|(_, u)| u)
    }
}

/// Minimum-sum allocation of `target` over the planar columns `b_ctrl`.
pub fn allocate(target: &Vec2, b_ctrl: &[Vec2]) -> Allocation {
    Allocator::new(b_ctrl).allocate(target)
}

/// Euclidean projection onto a convex polygon (vertices counter-clockwise).
pub fn closest_point(poly: &ConvexPolygon2, p: &Vec2) -> Vec2 {
    if poly.contains(p, 0.0) {
        return *p;
    }
    let v = poly.vertices_vec();
    if v.len() == 1 {
        return v[0];
    }
    let mut best = v[0];
    let mut best_d = f64::INFINITY;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let ab = b - a;
        let s = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let q = a + ab * s;
        let d = (p - q).norm();
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Horizon cap of the finite-time stabilizer, s.
pub const STABILIZER_CAP_S: f64 = 1.0e5;
const STABILIZER_SAMPLES: usize = 512;

/// Input that drives `y' = A y + r B_hat p` to zero at `t_f` and is zero after.
#[derive(Debug, Clone)]
pub struct StabilizerPlan {
    pub t_f: f64,
    pub steering: Option<Steering>,
}

impl StabilizerPlan {
    pub fn input(&self, t: f64) -> Vec2 {
        match &self.steering {
            Some(s) if (0.0..=self.t_f).contains(&t) => s.input(t),
            _ => Vec2::zeros(),
        }
    }
}

fn steering_peak(s: &Steering) -> f64 {
    (0..=STABILIZER_SAMPLES)
        .map(|i| s.input(s.horizon * i as f64 / STABILIZER_SAMPLES as f64).norm())
        .fold(0.0, f64::max)
}

/// Smallest horizon whose minimum-energy steering of `y0` to the origin keeps
/// `|p| <= eps_budget`. The horizon is scanned geometrically and then refined
/// by bisection to 1e-3 relative.
pub fn finite_time_stabilizer(
    model: &StateMatrix,
    r: f64,
    y0: &Vec4,
    eps_budget: f64,
    cap_s: f64,
) -> Result<StabilizerPlan> {
    if !(eps_budget > 0.0) {
        return Err(Error::Precondition(format!("eps_budget must be > 0, got {eps_budget}")));
    }
    if y0.norm() == 0.0 {
        return Ok(StabilizerPlan { t_f: 0.0, steering: None });
    }
    let attempt = |t: f64| -> Option<Steering> {
        let s = Steering::new(*model, r, *y0, Vec4::zeros(), t, N_QUAD).ok()?;
        (steering_peak(&s) <= eps_budget).then_some(s)
    };
    let mut prev = 0.0;
    let mut t = 1.0;
    while t <= cap_s {
        if let Some(mut found) = attempt(t) {
            let (mut lo, mut hi) = (prev, t);
            while hi - lo > 1e-3 * hi {
                let mid = 0.5 * (lo + hi);
                match attempt(mid) {
                    Some(s) => {
                        hi = mid;
                        found = s;
                    }
                    None => lo = mid,
                }
            }
            return Ok(StabilizerPlan { t_f: hi, steering: Some(found) });
        }
        prev = t;
        t *= 1.25;
    }
    Err(Error::HorizonCap(cap_s))
}

/// Open-loop control of the delayed linear theory:
/// `Bu(t) = p_ref(t) + p_eps(t - T_c) - e^{A T_c} C w(t - T_c)` after `T_c`
/// and `Bu = p_ref` before. Works on a uniform grid with `T_c = d_c dt`.
#[derive(Debug, Clone)]
pub struct OpenLoopDelayed {
    pub d_c: usize,
    /// Planar part of `e^{A T_c} C`.
    pub ec: Vec2,
    p_ref: Vec<Vec2>,
    p_eps: Vec<Vec2>,
}

impl OpenLoopDelayed {
    /// Checks `p_ref(t) + p_eps(t - T_c)` against `P_{T_c}` at every sample.
    pub fn new(
        model: &StateMatrix,
        layout: &ThrusterLayout,
        t_c: f64,
        dt: f64,
        p_ref: Vec<Vec2>,
        p_eps: Vec<Vec2>,
    ) -> Result<Self> {
        if !t_c.is_finite() {
            return Err(Error::Precondition("T_c must be finite".into()));
        }
        let d_c = (t_c / dt).round() as usize;
        let t_c = d_c as f64 * dt;
        let c = layout.c_fail.unwrap_or_else(Vec4::zeros);
        let ec4 = model.expm(t_c) * c;
        let p_tc = geometry::p_set_at_time(model, layout, t_c, 1.0)
            .ok_or_else(|| Error::BudgetExceedsSet(format!("P_Tc is empty at T_c = {t_c}")))?;
        let plan = Self { d_c, ec: Vec2::new(ec4[2], ec4[3]), p_ref, p_eps };
        for n in 0..plan.p_ref.len() {
            let p = plan.p_ref[n] + plan.eps_at(n);
            let inside = if n >= d_c { p_tc.contains(&p, GEOM_TOL) } else { true };
            if !inside {
                return Err(Error::BudgetExceedsSet(format!(
                    "p_ref + p_eps = ({:.6}, {:.6}) leaves P_Tc at sample {n}",
                    p.x, p.y
                )));
            }
        }
        Ok(plan)
    }

    fn eps_at(&self, n: usize) -> Vec2 {
        if n < self.d_c {
            return Vec2::zeros();
        }
        self.p_eps.get(n - self.d_c).copied().unwrap_or_else(Vec2::zeros)
    }

    /// `Bu` at sample `n` given the disturbance history `w[0..=n]`.
    pub fn bu(&self, n: usize, w: &[f64]) -> Vec2 {
        let p_ref = self.p_ref.get(n).copied().unwrap_or_else(|| *self.p_ref.last().expect("nonempty reference"));
        if n < self.d_c {
            return p_ref;
        }
        p_ref + self.eps_at(n) - self.ec * w[n - self.d_c]
    }
}

/// Inertial force of a body-frame thrust vector.
pub fn to_inertial(theta: f64, body: &Vec4) -> Vec4 {
    rotate_force(theta, body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{split_layout, CwParams, Propagator};
    use crate::resilience::certificate;

    fn planar4() -> Vec<Vec2> {
        split_layout(&ThrusterLayout::spacecraft(), Some(4)).unwrap().ctrl_planar()
    }

    #[test]
    fn buffer_exact_lookup_and_underrun() {
        let mut b = DelayBuffer::new(0.1, 5);
        for k in 0..8 {
            b.push(k as f64 * 0.1, k).unwrap();
        }
        assert_eq!(b.len(), 5);
        assert_eq!(b.at(0.5).unwrap(), 5);
        assert_eq!(b.at(0.7).unwrap(), 7);
        assert!(matches!(b.at(0.2), Err(Error::BufferUnderrun(_))));
        assert!(b.push(0.75, 9).is_err());
    }

    #[test]
    fn zero_delay_prediction_is_current_state() {
        let model = StateMatrix::Cw(CwParams::default());
        let mut xs = DelayBuffer::new(0.1, 4);
        let fs = DelayBuffer::new(0.1, 4);
        let x = Vec4::new(1.0, 2.0, 3.0, 4.0);
        xs.push(0.0, x).unwrap();
        assert_eq!(predict_state(&model, &xs, &fs, 0.0, 0.0, 0.1).unwrap(), x);
    }

    #[test]
    fn feedback_on_reference_passes_p_ref() {
        let params = CwParams::default();
        let layout = split_layout(&ThrusterLayout::spacecraft(), Some(4)).unwrap();
        let g = certificate(&params, &layout, 472.0, 0.1, 0.2, 0.0).unwrap();
        let x = Vec4::new(10.0, 20.0, 0.1, 0.2);
        let p = Vec2::new(0.02, -0.01);
        let bu = feedback_law(0.7, &x, &x, &p, 0.0, &g, &layout.c_fail.unwrap());
        let back = rotate_force(0.7, &bu);
        assert!((back[2] - p.x).abs() < 1e-15 && (back[3] - p.y).abs() < 1e-15);
    }

    #[test]
    fn allocation_of_counter_thrust() {
        let w = 0.3;
        let a = allocate(&Vec2::new(std::f64::consts::SQRT_2 * w, 0.0), &planar4());
        let s = w / std::f64::consts::SQRT_2;
        assert!(!a.saturated);
        assert!((a.u[0] - s).abs() < 1e-12 && (a.u[1] - s).abs() < 1e-12);
        assert!(a.u[2].abs() < 1e-12 && a.u[3].abs() < 1e-12);
        let z = allocate(&Vec2::zeros(), &planar4());
        assert!(z.u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn allocation_saturates_to_closest_point() {
        let a = allocate(&Vec2::new(3.0, 0.0), &planar4());
        assert!(a.saturated);
        // B U is the diamond |x| + |y| <= 2; the closest point to (3, 0) is (2, 0).
        assert!((a.achieved - Vec2::new(2.0, 0.0)).norm() < 1e-9);
        // Dense oracle over [0, 1]^4.
        let cols = planar4();
        let mut best = f64::INFINITY;
        let n = 20;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    for l in 0..=n {
                        let u = [i, j, k, l].map(|v| v as f64 / n as f64);
                        let p = cols.iter().zip(u).fold(Vec2::zeros(), |acc, (c, ui)| acc + c * ui);
                        best = best.min((p - Vec2::new(3.0, 0.0)).norm());
                    }
                }
            }
        }
        assert!((a.achieved - Vec2::new(3.0, 0.0)).norm() <= best + 1e-12);
    }

    #[test]
    fn stabilizer_zero_start() {
        let plan =
            finite_time_stabilizer(&StateMatrix::Cw(CwParams::default()), 1.5e-4, &Vec4::zeros(), 0.1, 1e5).unwrap();
        assert_eq!(plan.t_f, 0.0);
        assert_eq!(plan.input(3.0), Vec2::zeros());
    }

    #[test]
    fn stabilizer_reaches_origin() {
        let params = CwParams::default();
        let model = StateMatrix::Cw(params);
        let y0 = Vec4::new(0.05, -0.02, 1e-4, 0.0);
        let plan = finite_time_stabilizer(&model, params.thrust_ratio_r, &y0, 0.05, STABILIZER_CAP_S).unwrap();
        let s = plan.steering.as_ref().unwrap();
        // Fine RK4 with the continuous input.
        let a = model.matrix();
        let r = params.thrust_ratio_r;
        let f = |t: f64, y: &Vec4| {
            let p = plan.input(t);
            a * y + Vec4::new(0.0, 0.0, p.x, p.y) * r
        };
        let n = 20_000;
        let h = plan.t_f / n as f64;
        let mut y = y0;
        for k in 0..n {
            let t = k as f64 * h;
            let k1 = f(t, &y);
            let k2 = f(t + h / 2.0, &(y + k1 * (h / 2.0)));
            let k3 = f(t + h / 2.0, &(y + k2 * (h / 2.0)));
            let k4 = f(t + h, &(y + k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        assert!(y.norm() <= 1e-6, "|y(t_f)| = {:e}", y.norm());
        assert!(steering_peak(s) <= 0.05);
        assert_eq!(plan.input(plan.t_f + 1.0), Vec2::zeros());
    }

    #[test]
    fn stabilizer_horizon_grows_as_budget_shrinks() {
        let params = CwParams::default();
        let model = StateMatrix::Cw(params);
        let y0 = Vec4::new(0.05, -0.02, 1e-4, 0.0);
        let mut last = 0.0;
        for eps in [0.2, 0.1, 0.05, 0.025, 0.0125] {
            let t = finite_time_stabilizer(&model, params.thrust_ratio_r, &y0, eps, STABILIZER_CAP_S).unwrap().t_f;
            assert!(t >= last, "eps {eps}: {t} < {last}");
            last = t;
        }
    }

    #[test]
    fn predictor_matches_plant_under_constant_w() {
        let params = CwParams::default();
        let model = StateMatrix::Cw(params);
        let dt = 0.1;
        let d = 30;
        let prop = Propagator::new(&model, dt);
        let pred = Predictor::new(&model, dt, d);
        let mut xs = DelayBuffer::new(dt, d + 2);
        let mut fs = DelayBuffer::new(dt, d + 2);
        let c = Vec4::new(0.0, 0.0, -std::f64::consts::SQRT_2, 0.0);
        let w = 0.4;
        let mut x = Vec4::new(0.0, 80.0, 0.01, -0.02);
        for n in 0..200 {
            let t = n as f64 * dt;
            xs.push(t, x).unwrap();
            let xp = pred.predict(&xs, &fs, t).unwrap();
            assert!((xp - x).norm() <= 1e-9 * (1.0 + x.norm()), "n = {n}");
            let theta = x[1].atan2(x[0]);
            let bu = Vec4::new(0.0, 0.0, 0.3 * (n as f64 * 0.1).sin(), 0.2);
            let f = to_inertial(theta, &(bu + c * w)) * params.thrust_ratio_r;
            fs.push(t, f).unwrap();
            x = prop.step_linear(&x, &f);
        }
    }
}
