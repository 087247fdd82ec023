//! Planar convex sets for the thrust plane.
//!
//! Everything the controller can command lives in the `(e3, e4)` plane, so the
//! input set, the disturbance segment and their Minkowski difference are all
//! 2-D polygons. Sets are kept in both H-rep (`n . x <= b`, unit `n`) and
//! V-rep (CCW vertices). Segments and single points are allowed and flagged as
//! degenerate; their H-rep uses an opposite-normal pair plus end caps.

use serde::{Deserialize, Serialize};

use crate::dynamics::{CwParams, StateMatrix, ThrusterLayout, Vec2};
use crate::error::{Error, Result};

/// Absolute tolerance for vertex dedup, collinearity and feasibility.
pub const GEOM_TOL: f64 = 1e-9;

/// Out-of-plane magnitude above which a disturbance image leaves span(e3, e4).
pub const PLANARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub n: [f64; 2],
    pub b: f64,
}

impl HalfPlane {
    fn normal(&self) -> Vec2 {
        Vec2::new(self.n[0], self.n[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon2 {
    pub halfplanes: Vec<HalfPlane>,
    /// Counter-clockwise, no repeated or collinear vertices.
    pub vertices: Vec<[f64; 2]>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment2 {
    pub p0: Vec2,
    pub p1: Vec2,
}

impl Segment2 {
    pub fn new(p0: Vec2, p1: Vec2) -> Self {
        Self { p0, p1 }
    }

    pub fn point(p: Vec2) -> Self {
        Self { p0: p, p1: p }
    }
}

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain; drops duplicates and collinear points.
fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() <= GEOM_TOL);
    if pts.len() <= 2 {
        if pts.len() == 2 && (pts[0] - pts[1]).norm() <= GEOM_TOL {
            pts.truncate(1);
        }
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 {
                let n = hull.len();
                let a = hull[n - 2];
                let b = hull[n - 1];
                // Scale-aware collinearity: area relative to the edge length.
                let len = (b - a).norm().max((p - a).norm());
                if cross(a, b, p) <= GEOM_TOL * len.max(1.0) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        // All points collinear: keep the two extremes.
        let first = pts[0];
        let last = pts[pts.len() - 1];
        return if (last - first).norm() <= GEOM_TOL { vec![first] } else { vec![first, last] };
    }
    hull
}

impl ConvexPolygon2 {
    /// Convex hull of a point cloud. Returns `None` for an empty input.
    pub fn from_points(points: &[Vec2]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let hull = convex_hull(points);
        Some(Self::from_hull(&hull))
    }

    fn from_hull(hull: &[Vec2]) -> Self {
        let vertices: Vec<[f64; 2]> = hull.iter().map(|p| [p.x, p.y]).collect();
        let mut halfplanes = Vec::new();
        match hull.len() {
            1 => {
                let p = hull[0];
                for n in [Vec2::x(), -Vec2::x(), Vec2::y(), -Vec2::y()] {
                    halfplanes.push(HalfPlane { n: [n.x, n.y], b: n.dot(&p) });
                }
            }
            2 => {
                let (p, q) = (hull[0], hull[1]);
                let d = (q - p).normalize();
                let n = Vec2::new(-d.y, d.x);
                for (nn, anchor) in [(n, p), (-n, p), (d, q), (-d, p)] {
                    halfplanes.push(HalfPlane { n: [nn.x, nn.y], b: nn.dot(&anchor) });
                }
            }
            k => {
                for i in 0..k {
                    let a = hull[i];
                    let b = hull[(i + 1) % k];
                    let e = (b - a).normalize();
                    let n = Vec2::new(e.y, -e.x);
                    halfplanes.push(HalfPlane { n: [n.x, n.y], b: n.dot(&a) });
                }
            }
        }
        Self { halfplanes, vertices, degenerate: hull.len() < 3 }
    }

    /// Intersection of half-planes, re-verticized. `None` when infeasible.
    /// The half-planes must describe a bounded set.
    pub fn from_halfplanes(hs: &[HalfPlane]) -> Option<Self> {
        let mut pts = Vec::new();
        for i in 0..hs.len() {
            for j in (i + 1)..hs.len() {
                let (n1, n2) = (hs[i].normal(), hs[j].normal());
                let det = n1.x * n2.y - n1.y * n2.x;
                if det.abs() < 1e-14 {
                    continue;
                }
                let x = (hs[i].b * n2.y - n1.y * hs[j].b) / det;
                let y = (n1.x * hs[j].b - hs[i].b * n2.x) / det;
                let p = Vec2::new(x, y);
                if hs.iter().all(|h| h.normal().dot(&p) <= h.b + GEOM_TOL) {
                    pts.push(p);
                }
            }
        }
        Self::from_points(&pts)
    }

    pub fn vertices_vec(&self) -> Vec<Vec2> {
        self.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect()
    }

    pub fn contains(&self, p: &Vec2, tol: f64) -> bool {
        self.halfplanes.iter().all(|h| h.normal().dot(p) <= h.b + tol)
    }

    /// Support function `max_{x in P} d . x`.
    pub fn support(&self, d: &Vec2) -> f64 {
        self.vertices_vec().iter().map(|v| d.dot(v)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Regular polygon approximating the disc of radius `r` from inside.
    pub fn disc(r: f64, sides: usize) -> Self {
        let pts: Vec<Vec2> = (0..sides)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / sides as f64;
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        Self::from_points(&pts).expect("nonempty")
    }
}

/// Zonotope `sum_i [0, 1] g_i` built by sorting generators by angle and
/// walking the boundary once.
pub fn zonotope_of_inputs(columns: &[Vec2]) -> ConvexPolygon2 {
    let mut base = Vec2::zeros();
    let mut gens: Vec<Vec2> = Vec::new();
    for &g in columns {
        if g.norm() <= GEOM_TOL {
            continue;
        }
        // Flip into the half-open upper half plane; [0, g] = g + [0, -g].
        if g.y < 0.0 || (g.y == 0.0 && g.x < 0.0) {
            base += g;
            gens.push(-g);
        } else {
            gens.push(g);
        }
    }
    gens.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));
    let mut merged: Vec<Vec2> = Vec::new();
    for g in gens {
        match merged.last_mut() {
            Some(last) if (last.x * g.y - last.y * g.x).abs() <= GEOM_TOL * last.norm() * g.norm() => {
                *last += g;
            }
            _ => merged.push(g),
        }
    }
    let mut walk = vec![base];
    let mut p = base;
    for g in &merged {
        p += g;
        walk.push(p);
    }
    for g in &merged {
        p -= g;
        walk.push(p);
    }
    ConvexPolygon2::from_points(&walk).expect("nonempty walk")
}

/// Minkowski difference `poly (-) seg = {z : z + s in poly for all s in seg}`.
pub fn erode_by_segment(poly: &ConvexPolygon2, seg: &Segment2) -> Option<ConvexPolygon2> {
    let hs: Vec<HalfPlane> = poly
        .halfplanes
        .iter()
        .map(|h| {
            let n = h.normal();
            HalfPlane { n: h.n, b: h.b - n.dot(&seg.p0).max(n.dot(&seg.p1)) }
        })
        .collect();
    ConvexPolygon2::from_halfplanes(&hs)
}

/// Radius of the largest origin-centred disc inside `poly`.
pub fn inscribed_radius_at_origin(poly: Option<&ConvexPolygon2>) -> Result<f64> {
    let poly = poly.ok_or(Error::EmptySet)?;
    let m = poly.halfplanes.iter().map(|h| h.b).fold(f64::INFINITY, f64::min);
    Ok(m.max(0.0))
}

/// `P_t = B U (-) (-e^{At} C W)`, or `None` when empty.
pub fn p_set_at_time(model: &StateMatrix, layout: &ThrusterLayout, t: f64, w_max: f64) -> Option<ConvexPolygon2> {
    let bu = zonotope_of_inputs(&layout.ctrl_planar());
    let Some(c) = layout.c_fail else {
        return Some(bu);
    };
    let v = model.expm(t) * c * w_max;
    if v[0].abs() > PLANARITY_TOL || v[1].abs() > PLANARITY_TOL {
        return None;
    }
    erode_by_segment(&bu, &Segment2::new(Vec2::zeros(), Vec2::new(-v[2], -v[3])))
}

/// Smallest `t >= tau` at which `P_t` is nonempty: coarse scan then bisection
/// to 1e-6 s. Only the grid `tau + k dt_search` is scanned, so isolated
/// instants where the set is nonempty (such as whole orbital periods for the
/// relative-motion matrix) are found only if they fall on the grid.
pub fn minimal_correction_time(
    model: &StateMatrix,
    layout: &ThrusterLayout,
    tau: f64,
    w_max: f64,
    t_max: f64,
    dt_search: f64,
) -> Option<f64> {
    let nonempty = |t: f64| p_set_at_time(model, layout, t, w_max).is_some();
    if nonempty(tau) {
        return Some(tau);
    }
    let steps = ((t_max - tau) / dt_search + 1e-9).floor() as usize;
    let mut prev = tau;
    for k in 1..=steps {
        let t = tau + k as f64 * dt_search;
        if nonempty(t) {
            let (mut lo, mut hi) = (prev, t);
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                if nonempty(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev = t;
    }
    None
}

/// Worst case over the attitude angle of the two out-of-plane components of
/// `e^{AT} R_theta C` for the thruster-4 failure (up to the common factor
/// `-sqrt(2)/Omega`). Both must vanish for a correction time to exist.
pub fn rotation_residual(params: &CwParams, t: f64, theta_grid_size: usize) -> (f64, f64) {
    let x = params.omega * t;
    let (s, c) = x.sin_cos();
    let (a1, b1) = (s, 2.0 * (1.0 - c));
    let (a2, b2) = (2.0 * (c - 1.0), 4.0 * s - 3.0 * x);
    let mut r1: f64 = 0.0;
    let mut r2: f64 = 0.0;
    for k in 0..theta_grid_size {
        let th = std::f64::consts::TAU * k as f64 / theta_grid_size as f64;
        let (st, ct) = th.sin_cos();
        r1 = r1.max((a1 * ct + b1 * st).abs());
        r2 = r2.max((a2 * ct + b2 * st).abs());
    }
    (r1, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{split_layout, Matrix4, Vec4};
    use std::f64::consts::SQRT_2;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn has_vertex(p: &ConvexPolygon2, q: Vec2, tol: f64) -> bool {
        p.vertices_vec().iter().any(|w| (w - q).norm() <= tol)
    }

    fn fig4_diamond() -> ConvexPolygon2 {
        zonotope_of_inputs(&[v(1.0, 1.0), v(1.0, -1.0), v(-1.0, -1.0), v(-1.0, 1.0)])
    }

    #[test]
    fn diamond_zonotope() {
        let d = fig4_diamond();
        assert_eq!(d.vertices.len(), 4);
        for q in [v(2.0, 0.0), v(-2.0, 0.0), v(0.0, 2.0), v(0.0, -2.0)] {
            assert!(has_vertex(&d, q, 1e-12));
        }
    }

    #[test]
    fn single_column_is_segment() {
        let s = zonotope_of_inputs(&[v(1.0, 0.0)]);
        assert!(s.degenerate);
        assert_eq!(s.vertices.len(), 2);
        assert!(s.contains(&v(0.5, 0.0), 1e-12));
        assert!(!s.contains(&v(0.5, 0.1), 1e-12));
        let z = zonotope_of_inputs(&[v(0.0, 0.0)]);
        assert!(z.degenerate);
        assert_eq!(z.vertices, vec![[0.0, 0.0]]);
    }

    #[test]
    fn hexagon_for_thruster_1() {
        let h = zonotope_of_inputs(&[v(1.0, -1.0), v(-1.0, -1.0), v(-SQRT_2, 0.0), v(-1.0, 1.0)]);
        assert_eq!(h.vertices.len(), 6);
        for q in [v(-3.414, 0.0), v(-1.414, -2.0), v(0.0, -2.0), v(1.0, -1.0), v(-1.0, 1.0), v(-2.414, 1.0)] {
            assert!(has_vertex(&h, q, 1e-3), "{q:?}");
        }
    }

    #[test]
    fn erosion_fig4_and_fig5() {
        let p = erode_by_segment(&fig4_diamond(), &Segment2::new(v(0.0, 0.0), v(SQRT_2, 0.0))).unwrap();
        for q in [v(-2.0, 0.0), v(-0.707, -1.293), v(0.586, 0.0), v(-0.707, 1.293)] {
            assert!(has_vertex(&p, q, 1e-3), "{q:?}");
        }
        let rho = inscribed_radius_at_origin(Some(&p)).unwrap();
        assert!((rho - (SQRT_2 - 1.0)).abs() < 1e-12);

        let h = zonotope_of_inputs(&[v(1.0, -1.0), v(-1.0, -1.0), v(-SQRT_2, 0.0), v(-1.0, 1.0)]);
        let p5 = erode_by_segment(&h, &Segment2::new(v(0.0, 0.0), v(-1.0, -1.0))).unwrap();
        assert_eq!(p5.vertices.len(), 4);
        for q in [v(-2.414, 1.0), v(-0.414, -1.0), v(1.0, -1.0), v(-1.0, 1.0)] {
            assert!(has_vertex(&p5, q, 1e-3), "{q:?}");
        }
        assert!(inscribed_radius_at_origin(Some(&p5)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn erosion_by_origin_is_identity() {
        let d = fig4_diamond();
        let e = erode_by_segment(&d, &Segment2::point(Vec2::zeros())).unwrap();
        assert_eq!(e.vertices.len(), d.vertices.len());
        for w in d.vertices_vec() {
            assert!(has_vertex(&e, w, 1e-12));
        }
    }

    #[test]
    fn unit_square_radius() {
        let sq = ConvexPolygon2::from_points(&[v(-0.5, -0.5), v(0.5, -0.5), v(0.5, 0.5), v(-0.5, 0.5)]).unwrap();
        assert!((inscribed_radius_at_origin(Some(&sq)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(inscribed_radius_at_origin(None), Err(Error::EmptySet));
    }

    #[test]
    fn erosion_to_empty() {
        let d = fig4_diamond();
        assert!(erode_by_segment(&d, &Segment2::new(v(0.0, 0.0), v(5.0, 0.0))).is_none());
    }

    #[test]
    fn p_set_thruster_4() {
        let params = CwParams::default();
        let model = StateMatrix::Cw(params);
        let l4 = split_layout(&ThrusterLayout::spacecraft(), Some(4)).unwrap();
        let p0 = p_set_at_time(&model, &l4, 0.0, 1.0).unwrap();
        let rho = inscribed_radius_at_origin(Some(&p0)).unwrap();
        assert!((rho - (SQRT_2 - 1.0)).abs() < 1e-12);
        for t in [0.1, 10.0, 1000.0] {
            assert!(p_set_at_time(&model, &l4, t, 1.0).is_none());
        }
    }

    fn embedded(a: f64, b: f64, c: f64) -> (StateMatrix, ThrusterLayout) {
        let model = StateMatrix::General(Matrix4::identity() * a);
        let layout = ThrusterLayout::custom(vec![Vec4::new(0.0, 0.0, b, 0.0)], Vec4::new(0.0, 0.0, c, 0.0));
        (model, layout)
    }

    #[test]
    fn scalar_systems() {
        let (m0, l0) = embedded(0.0, 2.0, 1.0);
        for t in [0.0, 1.0, 50.0] {
            let p = p_set_at_time(&m0, &l0, t, 1.0).unwrap();
            assert!(has_vertex(&p, v(1.0, 0.0), 1e-12) && has_vertex(&p, v(2.0, 0.0), 1e-12));
        }
        let tc0 = minimal_correction_time(&m0, &l0, 0.3, 1.0, 5.0, 0.01).unwrap();
        assert_eq!(tc0, 0.3);

        let (m1, l1) = embedded(-1.0, 0.5, 1.0);
        let tc = minimal_correction_time(&m1, &l1, 0.1, 1.0, 5.0, 0.01).unwrap();
        assert!((tc - 2f64.ln()).abs() < 2e-6, "{tc}");
    }

    #[test]
    fn no_correction_time_for_cw() {
        let params = CwParams::default();
        let l4 = split_layout(&ThrusterLayout::spacecraft(), Some(4)).unwrap();
        let t_max = 2.0 * params.period();
        assert!(minimal_correction_time(&StateMatrix::Cw(params), &l4, 0.2, 1.0, t_max, 0.01).is_none());
    }

    #[test]
    fn residual_at_one_period() {
        let params = CwParams::default();
        let (r1, r2) = rotation_residual(&params, params.period(), 3600);
        assert!(r1 <= 1e-9);
        assert!((r2 - 6.0 * std::f64::consts::PI).abs() < 1e-6);
        let (a, b) = rotation_residual(&params, 1e-9, 360);
        assert!(a < 1e-10 && b < 1e-10);
    }
}
