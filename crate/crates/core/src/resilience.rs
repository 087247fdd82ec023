//! Resilience verdicts and the tracking certificate.
//!
//! A failed thruster leaves the controller with the eroded input set `P`. The
//! system is resilient when `P` contains a disc around the origin and the
//! linear dynamics are controllable with inputs restricted to that disc
//! (Brammer's conditions). Tracking under delay is then certified through a
//! quadratic Lyapunov function of the closed-loop error dynamics.

use nalgebra::{Complex, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{CwParams, Matrix4, StateMatrix, ThrusterLayout, Vec2, Vec4};
use crate::error::{Error, Result};
use crate::geometry::{self, ConvexPolygon2};

/// `mu(M) = lambda_max((M + M^T) / 2)`.
pub fn log_norm(m: &Matrix4) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

pub fn spectral_norm(m: &Matrix4) -> f64 {
    m.singular_values().max()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Real eigenvalues of `A^T`, one entry per distinct value.
    pub real_eigenvalues: Vec<f64>,
    /// Orthonormal basis of each real eigenspace of `A^T`, aligned with `real_eigenvalues`.
    pub real_eigenspaces: Vec<Vec<[f64; 4]>>,
}

impl SpectralData {
    /// Every listed real eigenvector, flattened.
    pub fn real_eigenvectors(&self) -> Vec<Vec4> {
        self.real_eigenspaces.iter().flatten().map(|v| Vec4::from_column_slice(v)).collect()
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Eigenvalues from the real Schur form; real eigenspaces of `A^T` from the
/// SVD null space of `A^T - lambda I`.
pub fn spectral_data(a: &Matrix4) -> SpectralData {
    let scale = a.abs().max().max(1e-300);
    let raw: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    // Schur can split a defective eigenvalue by ~sqrt(eps); snap tiny parts
    // relative to the matrix scale.
    let snap = 1e-7 * scale;
    let mut eig: Vec<(f64, f64)> = raw
        .iter()
        .map(|z| {
            let re = if z.re.abs() < snap { 0.0 } else { z.re };
            let im = if z.im.abs() < snap { 0.0 } else { z.im };
            (re, im)
        })
        .collect();
    eig.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let mut reals: Vec<f64> = Vec::new();
    for &(re, im) in &eig {
        if im == 0.0 && !reals.iter().any(|r| (r - re).abs() <= snap) {
            reals.push(re);
        }
    }
    let at = a.transpose();
    let mut spaces = Vec::new();
    for &lam in &reals {
        let m = at - Matrix4::identity() * lam;
        let svd = m.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let tol = 1e-7 * scale.max(lam.abs());
        let mut basis = Vec::new();
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s <= tol {
                let row = v_t.row(i);
                let mut v = Vec4::new(row[0], row[1], row[2], row[3]);
                // Deterministic sign: largest-magnitude entry positive.
                let imax = v.iamax();
                if v[imax] < 0.0 {
                    v = -v;
                }
                basis.push([v[0], v[1], v[2], v[3]]);
            }
        }
        spaces.push(basis);
    }
    SpectralData { eigenvalues: eig, real_eigenvalues: reals, real_eigenspaces: spaces }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrammerMode {
    Controllable,
    Stabilizable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrammerVerdict {
    pub mode: BrammerMode,
    pub passed: bool,
    pub conditions: Vec<Condition>,
}

fn lift(p: &Vec2) -> Vec4 {
    Vec4::new(0.0, 0.0, p.x, p.y)
}

/// Brammer's conditions for a linear system whose inputs range over a convex
/// polygon in the thrust plane containing the origin.
pub fn brammer_check(a: &Matrix4, input_poly: &ConvexPolygon2, mode: BrammerMode) -> Result<BrammerVerdict> {
    if !input_poly.contains(&Vec2::zeros(), geometry::GEOM_TOL) {
        return Err(Error::Precondition("origin is not in the input set".into()));
    }
    let spec = spectral_data(a);
    let tol = 1e-9;
    let mut conditions = Vec::new();

    let max_re = spec.max_real_part();
    let min_re = spec.eigenvalues.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let spectrum_ok = match mode {
        BrammerMode::Controllable => max_re <= tol && min_re >= -tol,
        BrammerMode::Stabilizable => max_re <= tol,
    };
    conditions.push(Condition {
        name: "spectrum".into(),
        passed: spectrum_ok,
        detail: format!("real parts in [{min_re:.3e}, {max_re:.3e}]"),
    });

    // Two most independent polygon vectors span the input directions.
    let verts = input_poly.vertices_vec();
    let mut best = (0.0, Vec2::zeros(), Vec2::zeros());
    for i in 0..verts.len() {
        for j in (i + 1)..verts.len() {
            let c = (verts[i].x * verts[j].y - verts[i].y * verts[j].x).abs();
            if c > best.0 {
                best = (c, verts[i], verts[j]);
            }
        }
    }
    let mut ctrb = SMatrix::<f64, 4, 8>::zeros();
    let mut cols = [lift(&best.1), lift(&best.2)];
    for k in 0..4 {
        ctrb.set_column(2 * k, &cols[0]);
        ctrb.set_column(2 * k + 1, &cols[1]);
        cols = [a * cols[0], a * cols[1]];
    }
    let sv = ctrb.singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-12 * smax.max(1.0)).count();
    conditions.push(Condition {
        name: "rank".into(),
        passed: rank == 4,
        detail: format!("rank of controllability matrix = {rank}"),
    });

    // Every real eigenvector v of A^T must see some input with v.p > 0. Both
    // signs of each eigenvector count, so the projected polygon must contain
    // the origin in the interior of the eigenspace.
    let mut eig_ok = true;
    let mut details = Vec::new();
    for (lam, basis) in spec.real_eigenvalues.iter().zip(&spec.real_eigenspaces) {
        let ok = match basis.len() {
            0 => true,
            1 => {
                let v = Vec4::from_column_slice(&basis[0]);
                let proj: Vec<f64> = verts.iter().map(|p| v.dot(&lift(p))).collect();
                let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
                hi > tol && lo < -tol
            }
            2 => {
                let b0 = Vec4::from_column_slice(&basis[0]);
                let b1 = Vec4::from_column_slice(&basis[1]);
                let proj: Vec<Vec2> = verts.iter().map(|p| Vec2::new(b0.dot(&lift(p)), b1.dot(&lift(p)))).collect();
                let hull = ConvexPolygon2::from_points(&proj);
                geometry::inscribed_radius_at_origin(hull.as_ref()).map(|r| r > tol).unwrap_or(false)
            }
            _ => {
                // Higher-dimensional eigenspaces: probe directions.
                let mut ok = true;
                for k in 0..720 {
                    let th = std::f64::consts::TAU * k as f64 / 720.0;
                    for b in 0..basis.len() {
                        for c in (b + 1)..basis.len() {
                            let v = Vec4::from_column_slice(&basis[b]) * th.cos()
                                + Vec4::from_column_slice(&basis[c]) * th.sin();
                            let hi = verts.iter().map(|p| v.dot(&lift(p))).fold(f64::NEG_INFINITY, f64::max);
                            ok &= hi > tol;
                        }
                    }
                }
                ok
            }
        };
        details.push(format!("lambda={lam:.3e} dim={} {}", basis.len(), if ok { "ok" } else { "blocked" }));
        eig_ok &= ok;
    }
    conditions.push(Condition { name: "eigenvector".into(), passed: eig_ok, detail: details.join("; ") });

    let passed = conditions.iter().all(|c| c.passed);
    Ok(BrammerVerdict { mode, passed, conditions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub failed_index: Option<usize>,
    pub rho_max: f64,
    pub resilient: bool,
    pub conditions: Vec<Condition>,
    pub tracking_feasible: bool,
    pub eps_budget: f64,
    pub rho_ref: f64,
    pub spectrum: Vec<(f64, f64)>,
    pub epsilon: Option<f64>,
    pub tolerance: Option<f64>,
}

/// Inscribed radii at or below this are reported as zero.
pub const RHO_ZERO_TOL: f64 = 1e-12;

/// Number of sides used to polygonize the inscribed disc.
const DISC_SIDES: usize = 64;

pub fn resilience_verdict(
    params: &CwParams,
    layout: &ThrusterLayout,
    failed_index: Option<usize>,
    rho_ref: f64,
) -> Result<ResilienceReport> {
    let split = crate::dynamics::split_layout(layout, failed_index)?;
    let model = StateMatrix::Cw(*params);
    let a = model.matrix();
    let p = geometry::p_set_at_time(&model, &split, 0.0, 1.0);
    let rho_max = match p.as_ref() {
        Some(poly) => geometry::inscribed_radius_at_origin(Some(poly))?,
        None => 0.0,
    };
    // Rounding leaves radii of order 1e-16 on sets that touch the origin.
    let rho_max = if rho_max <= RHO_ZERO_TOL { 0.0 } else { rho_max };
    let spectrum = spectral_data(&a).eigenvalues;
    let mut conditions = vec![Condition {
        name: "inscribed_radius".into(),
        passed: rho_max > 0.0,
        detail: format!("rho_max = {rho_max:.12}"),
    }];
    let mut resilient = false;
    if rho_max > 0.0 {
        let disc = ConvexPolygon2::disc(rho_max, DISC_SIDES);
        let v = brammer_check(&a, &disc, BrammerMode::Controllable)?;
        resilient = v.passed;
        conditions.extend(v.conditions);
    }
    let eps_budget = rho_max - rho_ref;
    Ok(ResilienceReport {
        failed_index,
        rho_max,
        resilient,
        conditions,
        tracking_feasible: eps_budget > 0.0,
        eps_budget,
        rho_ref,
        spectrum,
        epsilon: None,
        tolerance: None,
    })
}

/// Radius of the set reachable by the uncorrected disturbance over `t_c`:
/// `(c / mu)(e^{mu t_c} - 1)`, with the linear limit for small `mu t_c`.
pub fn reach_radius_bound(c_max: f64, mu: f64, t_c: f64) -> f64 {
    c_max * t_c * exp_ratio(mu, t_c)
}

/// `(e^{mu t} - 1) / (mu t)`, continuous at `mu t = 0`.
fn exp_ratio(mu: f64, t: f64) -> f64 {
    let x = mu * t;
    if x.abs() < 1e-8 {
        1.0 + x / 2.0
    } else {
        x.exp_m1() / x
    }
}

/// Solves `A^T P + P A = -Q` through the 16x16 Kronecker system.
pub fn lyapunov_solve(a_tilde: &Matrix4, q: &Matrix4) -> Result<Matrix4> {
    let spec = spectral_data(a_tilde);
    let max_re = a_tilde.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_re >= -1e-12 {
        return Err(Error::NotHurwitz(max_re.max(spec.max_real_part())));
    }
    let at = a_tilde.transpose();
    let i4 = Matrix4::identity();
    // vec(A^T P) = (I kron A^T) vec(P), vec(P A) = (A^T kron I) vec(P).
    let m: SMatrix<f64, 16, 16> = i4.kronecker(&at) + at.kronecker(&i4);
    let rhs = -SVector::<f64, 16>::from_column_slice(q.as_slice());
    let x = m.lu().solve(&rhs).ok_or_else(|| Error::Singular("Lyapunov operator".into()))?;
    let p = Matrix4::from_column_slice(x.as_slice());
    let p = (p + p.transpose()) * 0.5;
    let resid = (at * p + p * a_tilde + q).abs().max();
    let scale = q.abs().max().max(1.0);
    if resid > 1e-8 * scale {
        return Err(Error::Singular(format!("Lyapunov residual {resid:.3e}")));
    }
    Ok(p)
}

/// The gain sign pattern; `K = k S`.
pub fn gain_pattern() -> Matrix4 {
    Matrix4::new(
        1.0, 1.0, 1.0, 1.0, //
        1.0, -1.0, 1.0, -1.0, //
        -1.0, -1.0, -1.0, -1.0, //
        -1.0, 1.0, -1.0, 1.0,
    )
}

/// Controlled columns as a 4x4 matrix (thruster order).
pub fn b_matrix(layout: &ThrusterLayout) -> Result<Matrix4> {
    if layout.b_ctrl.len() != 4 {
        return Err(Error::Precondition(format!(
            "gain pattern needs 4 controlled thrusters, got {}",
            layout.b_ctrl.len()
        )));
    }
    Ok(Matrix4::from_columns(&layout.b_ctrl))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub k: f64,
    #[serde(rename = "K")]
    pub gain: Matrix4,
    /// `B K`, the feedback in thrust-plane units.
    pub bk: Matrix4,
    #[serde(rename = "P")]
    pub p: Matrix4,
    #[serde(rename = "Q")]
    pub q: Matrix4,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub lip_l: f64,
    pub tau_s: f64,
    pub bk_norm: f64,
    pub mu: f64,
    /// Relative spread of closed-loop eigenvalue magnitudes.
    pub eig_spread: f64,
}

/// Certificate scalars for an explicit gain `K = k S` with `Q = I`.
pub fn certificate(
    params: &CwParams,
    layout: &ThrusterLayout,
    k: f64,
    lip_l: f64,
    tau: f64,
    y0_pnorm: f64,
) -> Result<GainSet> {
    let a = StateMatrix::Cw(*params).matrix();
    let b = b_matrix(layout)?;
    let c_norm = layout.c_fail.map(|c| c.norm()).unwrap_or(0.0);
    let r = params.thrust_ratio_r;
    let gain = gain_pattern() * k;
    let bk = b * gain;
    let a_tilde = a - bk * r;
    let q = Matrix4::identity();
    let p = lyapunov_solve(&a_tilde, &q)?;
    let pe = p.symmetric_eigenvalues();
    let (pmin, pmax) = (pe.min(), pe.max());
    if pmin <= 0.0 {
        return Err(Error::Singular("P is not positive definite".into()));
    }
    let qmin = q.symmetric_eigenvalues().min();
    let mu = log_norm(&a);
    let bk_norm = spectral_norm(&bk);

    let alpha = qmin / (2.0 * pmax);
    let beta = r * pmax.sqrt() * c_norm * lip_l * tau;
    let gamma = r * bk_norm * tau * exp_ratio(mu, tau);
    let radius = y0_pnorm.max(beta / alpha * (1.0 + gamma));
    let epsilon = bk_norm / pmin.sqrt() * radius + gamma * c_norm * lip_l * tau;
    let tolerance = radius / pmin.sqrt();

    let mags: Vec<f64> = a_tilde.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    let hi = mags.iter().cloned().fold(0.0, f64::max);
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);

    Ok(GainSet {
        k,
        gain,
        bk,
        p,
        q,
        alpha,
        beta,
        gamma,
        epsilon,
        tolerance,
        lip_l,
        tau_s: tau,
        bk_norm,
        mu,
        eig_spread: (hi - lo) / hi.max(1e-300),
    })
}

/// Range and resolution of the scalar gain search.
const K_MIN: f64 = 1.0;
const K_MAX: f64 = 1.0e5;
const K_GRID: usize = 600;

/// Picks the scalar gain `k` giving the largest correction budget `epsilon`
/// that still fits in `rho_max - rho_ref`.
///
/// `epsilon(k)` falls and then rises with `k`, so the feasible set is an
/// interval; the search returns its lower end, where `epsilon` meets the
/// budget (or the smallest feasible grid gain if the budget is never tight).
pub fn design_gains(
    params: &CwParams,
    layout: &ThrusterLayout,
    rho_ref: f64,
    lip_l: f64,
    tau: f64,
    y0_pnorm: f64,
) -> Result<GainSet> {
    if lip_l < 0.0 || tau < 0.0 {
        return Err(Error::Precondition("lip_L and tau must be >= 0".into()));
    }
    let model = StateMatrix::Cw(*params);
    let rho_max =
        geometry::inscribed_radius_at_origin(geometry::p_set_at_time(&model, layout, 0.0, 1.0).as_ref()).unwrap_or(0.0);
    let budget = rho_max - rho_ref;
    if budget <= 0.0 {
        return Err(Error::TrackingInfeasible(format!(
            "rho_max = {rho_max:.4} leaves no budget over rho_ref = {rho_ref:.4}"
        )));
    }
    let eps_at =
        |k: f64| certificate(params, layout, k, lip_l, tau, y0_pnorm).map(|g| g.epsilon).unwrap_or(f64::INFINITY);
    let ratio = (K_MAX / K_MIN).powf(1.0 / (K_GRID - 1) as f64);
    let mut prev: Option<f64> = None;
    for i in 0..K_GRID {
        let k = K_MIN * ratio.powi(i as i32);
        if eps_at(k) <= budget {
            let k_best = match prev {
                None => k,
                Some(lo_k) => {
                    let (mut lo, mut hi) = (lo_k, k);
                    while (hi - lo) > 1e-9 * hi {
                        let mid = 0.5 * (lo + hi);
                        if eps_at(mid) <= budget {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    hi
                }
            };
            return certificate(params, layout, k_best, lip_l, tau, y0_pnorm);
        }
        prev = Some(k);
    }
    Err(Error::TrackingInfeasible(format!("epsilon exceeds the budget {budget:.4} for every k in [{K_MIN}, {K_MAX}]")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{cw_matrix, split_layout};

    fn l4() -> ThrusterLayout {
        split_layout(&ThrusterLayout::spacecraft(), Some(4)).unwrap()
    }

    #[test]
    fn log_norm_basics() {
        assert_eq!(log_norm(&Matrix4::zeros()), 0.0);
        let s = Matrix4::from_diagonal(&Vec4::new(1.0, -2.0, 0.5, 3.0));
        assert!((log_norm(&s) - 3.0).abs() < 1e-12);
        let w = CwParams::default().omega;
        let mu = log_norm(&cw_matrix(&CwParams::default()));
        // Symmetric part has eigenvalues +-sqrt(1 + 9 w^4)/2 + 3w^2/2 pairs; the
        // largest is (3w^2 + sqrt(1 + 9w^4)) / 2.
        let expect = 0.5 * (3.0 * w * w + (1.0 + 9.0 * w.powi(4)).sqrt());
        assert!((mu - expect).abs() < 1e-10, "{mu} vs {expect}");
    }

    #[test]
    fn cw_spectrum_and_eigenvector() {
        let p = CwParams::default();
        let s = spectral_data(&cw_matrix(&p));
        let mut ims: Vec<f64> = s.eigenvalues.iter().map(|e| e.1).collect();
        ims.sort_by(f64::total_cmp);
        for e in &s.eigenvalues {
            assert!(e.0.abs() < 1e-9, "{e:?}");
        }
        assert!((ims[0] + p.omega).abs() < 1e-9 && (ims[3] - p.omega).abs() < 1e-9);
        assert!(ims[1].abs() < 1e-9 && ims[2].abs() < 1e-9);
        let vs = s.real_eigenvectors();
        assert_eq!(vs.len(), 1);
        let expect = Vec4::new(2.0 * p.omega, 0.0, 0.0, 1.0).normalize();
        assert!((vs[0] - expect).norm() < 1e-9);
    }

    #[test]
    fn diagonal_spectrum() {
        let d = Matrix4::from_diagonal(&Vec4::new(-1.0, 2.0, -3.0, 4.0));
        let s = spectral_data(&d);
        let re: Vec<f64> = s.eigenvalues.iter().map(|e| e.0).collect();
        assert_eq!(re, vec![-3.0, -1.0, 2.0, 4.0]);
        for v in s.real_eigenvectors() {
            assert_eq!(v.iter().filter(|x| x.abs() > 1e-12).count(), 1);
        }
    }

    #[test]
    fn brammer_on_cw_disc() {
        let a = cw_matrix(&CwParams::default());
        let disc = ConvexPolygon2::disc(std::f64::consts::SQRT_2 - 1.0, 64);
        let v = brammer_check(&a, &disc, BrammerMode::Controllable).unwrap();
        assert!(v.passed, "{v:?}");
        let small = ConvexPolygon2::disc(0.05, 64);
        assert!(brammer_check(&a, &small, BrammerMode::Stabilizable).unwrap().passed);

        let mut unstable = a;
        unstable[(0, 0)] = 1.0;
        let v = brammer_check(&unstable, &disc, BrammerMode::Controllable).unwrap();
        assert!(!v.conditions[0].passed);

        let off =
            ConvexPolygon2::from_points(&[Vec2::new(1.0, 1.0), Vec2::new(2.0, 1.0), Vec2::new(1.0, 2.0)]).unwrap();
        assert!(matches!(brammer_check(&a, &off, BrammerMode::Controllable), Err(Error::Precondition(_))));
    }

    #[test]
    fn verdicts_per_thruster() {
        let p = CwParams::default();
        let full = ThrusterLayout::spacecraft();
        let r4 = resilience_verdict(&p, &full, Some(4), 4.85e-4).unwrap();
        assert!(r4.resilient);
        assert!((r4.rho_max - (std::f64::consts::SQRT_2 - 1.0)).abs() < 1e-12);
        for i in [1, 2, 3, 5] {
            let r = resilience_verdict(&p, &full, Some(i), 4.85e-4).unwrap();
            assert!(r.rho_max.abs() < 1e-12, "thruster {i}: {}", r.rho_max);
            assert!(!r.resilient && !r.tracking_feasible);
        }
        let none = resilience_verdict(&p, &full, None, 0.0).unwrap();
        assert!(none.resilient && none.rho_max > 0.414);
    }

    #[test]
    fn reach_radius_cases() {
        assert_eq!(reach_radius_bound(1.0, 1.0, 0.0), 0.0);
        assert!((reach_radius_bound(1.0, 1.0, 2f64.ln()) - 1.0).abs() < 1e-14);
        assert!((reach_radius_bound(2.0, 0.0, 3.0) - 6.0).abs() < 1e-14);
        assert!((reach_radius_bound(2.0, 1e-12, 3.0) - 6.0).abs() < 1e-10);
    }

    #[test]
    fn lyapunov_scalar_balance() {
        let p = lyapunov_solve(&(-Matrix4::identity()), &Matrix4::identity()).unwrap();
        assert!((p - Matrix4::identity() * 0.5).abs().max() < 1e-14);
        assert!(matches!(lyapunov_solve(&Matrix4::identity(), &Matrix4::identity()), Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn bk_structure() {
        let b = b_matrix(&l4()).unwrap();
        let bk = b * gain_pattern() * 472.0;
        let mut expect = Matrix4::zeros();
        expect[(2, 0)] = 1888.0;
        expect[(2, 2)] = 1888.0;
        expect[(3, 1)] = 1888.0;
        expect[(3, 3)] = 1888.0;
        assert_eq!(bk, expect);
        assert!((spectral_norm(&bk) - 1888.0 * std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn delay_free_certificate() {
        let g = certificate(&CwParams::default(), &l4(), 472.0, 0.7, 0.0, 0.0).unwrap();
        assert_eq!(g.beta, 0.0);
        assert_eq!(g.gamma, 0.0);
        assert_eq!(g.tolerance, 0.0);
        let g = certificate(&CwParams::default(), &l4(), 472.0, 0.7, 0.0, 0.3).unwrap();
        let pmin = g.p.symmetric_eigenvalues().min();
        assert!((g.tolerance - 0.3 / pmin.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn design_reproduces_k472_for_small_reference() {
        let g = design_gains(&CwParams::default(), &l4(), 4.85e-4, 0.1, 0.2, 0.0).unwrap();
        assert!((g.k - 472.0).abs() < 5.0, "{}", g.k);
        assert!(g.epsilon <= std::f64::consts::SQRT_2 - 1.0 - 4.85e-4 + 1e-12);
    }

    #[test]
    fn design_rejects_excess_reference() {
        let r = design_gains(&CwParams::default(), &l4(), 0.5, 0.1, 0.2, 0.0);
        assert!(matches!(r, Err(Error::TrackingInfeasible(_))));
    }

    #[test]
    fn certificate_at_k472() {
        let g = certificate(&CwParams::default(), &l4(), 472.0, 0.1, 0.2, 0.0).unwrap();
        let expect = Matrix4::new(
            2.77, 0.0, 1.77, 0.01, //
            0.0, 2.77, -0.01, 1.77, //
            1.77, -0.01, 8.0, 0.0, //
            0.01, 1.77, 0.0, 8.0,
        );
        assert!((g.p - expect).abs().max() <= 0.01, "{}", g.p);
        assert!((g.epsilon - 0.4133).abs() <= 1e-3, "{}", g.epsilon);
        assert!((g.tolerance - 1.5e-4).abs() <= 0.1e-4, "{}", g.tolerance);
        assert!(g.eig_spread < 0.01, "{}", g.eig_spread);
    }
}
