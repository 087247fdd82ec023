//! Analytic self-checks against known reference values.

use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use resil_core::dynamics::{cw_expm, cw_matrix, split_layout, CwParams, Matrix4, StateMatrix, ThrusterLayout, Vec2};
use resil_core::geometry::{inscribed_radius_at_origin, p_set_at_time, rotation_residual};
use resil_core::resilience::certificate;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn check(name: impl Into<String>, expected: f64, actual: f64, tolerance: f64) -> Check {
    Check { name: name.into(), expected, actual, tolerance, passed: (actual - expected).abs() <= tolerance }
}

/// Expected Lyapunov matrix for `k = 472`, `Q = I`.
const P_EXPECTED: [f64; 16] = [
    2.77, 0.0, 1.77, 0.01, //
    0.0, 2.77, -0.01, 1.77, //
    1.77, -0.01, 8.0, 0.0, //
    0.01, 1.77, 0.0, 8.0,
];

pub fn run_checks(params: &CwParams) -> Vec<Check> {
    let mut out = Vec::new();
    let model = StateMatrix::Cw(*params);
    let full = ThrusterLayout::spacecraft();
    let rho = |k: usize| {
        split_layout(&full, Some(k))
            .ok()
            .and_then(|l| inscribed_radius_at_origin(p_set_at_time(&model, &l, 0.0, 1.0).as_ref()).ok())
            .unwrap_or(f64::NAN)
    };
    out.push(check("rho_max thruster 4", SQRT_2 - 1.0, rho(4), 1e-12));
    for k in [1, 2, 3, 5] {
        out.push(check(format!("rho_max thruster {k}"), 0.0, rho(k), 1e-12));
    }

    let p_vertices = [(-2.0, 0.0), (-0.707, -1.293), (0.586, 0.0), (-0.707, 1.293)];
    let p4 = split_layout(&full, Some(4)).ok().and_then(|l| p_set_at_time(&model, &l, 0.0, 1.0));
    for (x, y) in p_vertices {
        let q = Vec2::new(x, y);
        let d = p4
            .as_ref()
            .map(|p| p.vertices_vec().iter().map(|v| (v - q).norm()).fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::INFINITY);
        out.push(check(format!("P vertex ({x}, {y}) distance"), 0.0, d, 1e-3));
    }

    match split_layout(&full, Some(4)).and_then(|l| certificate(params, &l, 472.0, 0.1, 0.2, 0.0)) {
        Ok(g) => {
            let expect = Matrix4::from_row_slice(&P_EXPECTED);
            for i in 0..4 {
                for j in i..4 {
                    out.push(check(format!("P[{}][{}]", i + 1, j + 1), expect[(i, j)], g.p[(i, j)], 0.01));
                }
            }
            out.push(check("epsilon", 0.4133, g.epsilon, 1e-3));
            out.push(check("tracking tolerance", 1.5e-4, g.tolerance, 1e-5));
        }
        Err(e) => {
            eprintln!("certificate failed: {e}");
            out.push(check("epsilon", 0.4133, f64::NAN, 1e-3));
            out.push(check("tracking tolerance", 1.5e-4, f64::NAN, 1e-5));
        }
    }

    let a = cw_matrix(params);
    let worst = [0.1, 1.0, 10.0, 1e2, 1e3]
        .iter()
        .map(|&t| (cw_expm(params, t) - (a * t).exp()).abs().max())
        .fold(0.0, f64::max);
    out.push(check("closed-form exponential vs Pade", 0.0, worst, 1e-10));

    let period = 2.0 * PI / params.omega;
    let (r1, r2) = rotation_residual(params, period, 3600);
    out.push(check("res1 at one period", 0.0, r1, 1e-9));
    out.push(check("res2 at one period", 6.0 * PI, r2, 1e-6));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_pass() {
        let checks = run_checks(&CwParams::default());
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }

    #[test]
    fn tampered_rate_fails_epsilon() {
        let p = CwParams { omega: 0.02, ..CwParams::default() };
        let checks = run_checks(&p);
        assert!(!checks.iter().find(|c| c.name == "epsilon").unwrap().passed);
    }
}
