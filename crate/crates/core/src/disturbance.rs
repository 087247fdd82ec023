//! Seeded generators for the signal `w` of the thruster under lost control
//! authority.
//!
//! The random source is ChaCha8 seeded from the 64-bit seed, so a given spec
//! produces the same signal on every platform.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of one Lipschitz segment; slope and target are redrawn per segment.
pub const LIPSCHITZ_SEGMENT_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceKind {
    Lipschitz,
    Bangbang,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    /// Slope bound of the Lipschitz kind, 1/s.
    pub lip_l_per_s: f64,
    pub w_max: f64,
    pub seed: u64,
    /// Shortest bang-bang dwell, s.
    pub min_dwell_s: f64,
    /// Mean bang-bang dwell, s.
    pub mean_dwell_s: f64,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            kind: DisturbanceKind::Lipschitz,
            lip_l_per_s: 0.1,
            w_max: 0.01,
            seed: 1,
            min_dwell_s: 60.0,
            mean_dwell_s: 600.0,
        }
    }
}

impl DisturbanceSpec {
    pub fn constant(w_max: f64) -> Self {
        Self { kind: DisturbanceKind::Constant, w_max, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_max > 0.0 && self.w_max <= 1.0) {
            return Err(Error::Config(format!("w_max must be in (0, 1], got {}", self.w_max)));
        }
        if !(self.lip_l_per_s >= 0.0) || !self.lip_l_per_s.is_finite() {
            return Err(Error::Config(format!("lip_l_per_s must be >= 0, got {}", self.lip_l_per_s)));
        }
        if self.kind == DisturbanceKind::Bangbang {
            if !(self.min_dwell_s > 0.0) {
                return Err(Error::Config(format!("min_dwell_s must be > 0, got {}", self.min_dwell_s)));
            }
            if !(self.mean_dwell_s >= self.min_dwell_s) || !self.mean_dwell_s.is_finite() {
                return Err(Error::Config("mean_dwell_s must be finite and >= min_dwell_s".into()));
            }
        }
        Ok(())
    }

    /// Lipschitz constant the certificate may assume for this signal, if any.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self.kind {
            DisturbanceKind::Lipschitz => Some(self.lip_l_per_s),
            DisturbanceKind::Constant => Some(0.0),
            DisturbanceKind::Bangbang => None,
        }
    }
}

/// Samples `w` at the given (increasing) times.
///
/// Lipschitz: every segment draws a target level in `[0, w_max]` and a slope
/// magnitude in `[L/2, L]`, ramps toward the target and holds there.
/// Bang-bang: alternates between 0 and `w_max`; dwell times are
/// `min_dwell + Exp(mean_dwell - min_dwell)`.
pub fn sample_signal(spec: &DisturbanceSpec, t_grid: &[f64]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w_max = spec.w_max;
    match spec.kind {
        DisturbanceKind::Constant => vec![w_max; t_grid.len()],
        DisturbanceKind::Lipschitz => {
            let l = spec.lip_l_per_s;
            let mut seg = 0usize;
            let mut start = rng.gen::<f64>() * w_max;
            let (mut target, mut slope) = (0.0, 0.0);
            let draw = |rng: &mut ChaCha8Rng, target: &mut f64, slope: &mut f64| {
                *target = rng.gen::<f64>() * w_max;
                *slope = l * (0.5 + 0.5 * rng.gen::<f64>());
            };
            draw(&mut rng, &mut target, &mut slope);
            let level = |start: f64, target: f64, slope: f64, dt: f64| {
                let gap = target - start;
                (start + gap.signum() * (slope * dt).min(gap.abs())).clamp(0.0, w_max)
            };
            t_grid
                .iter()
                .map(|&t| {
                    let t = t.max(0.0);
                    while t >= (seg + 1) as f64 * LIPSCHITZ_SEGMENT_S {
                        start = level(start, target, slope, LIPSCHITZ_SEGMENT_S);
                        draw(&mut rng, &mut target, &mut slope);
                        seg += 1;
                    }
                    level(start, target, slope, t - seg as f64 * LIPSCHITZ_SEGMENT_S)
                })
                .collect()
        }
        DisturbanceKind::Bangbang => {
            let extra = spec.mean_dwell_s - spec.min_dwell_s;
            let dwell = |rng: &mut ChaCha8Rng| {
                let u: f64 = rng.gen();
                spec.min_dwell_s - extra * (1.0 - u).ln()
            };
            let mut on = rng.gen::<bool>();
            let mut switch_at = dwell(&mut rng);
            t_grid
                .iter()
                .map(|&t| {
                    while t >= switch_at {
                        on = !on;
                        switch_at += dwell(&mut rng);
                    }
                    if on {
                        w_max
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    }
}

/// Writes `t,w` rows.
pub fn write_signal_csv<W: Write>(w: W, t: &[f64], values: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    wr.write_record(["t", "w"]).map_err(io)?;
    for (ti, wi) in t.iter().zip(values) {
        wr.write_record([ti.to_string(), wi.to_string()]).map_err(io)?;
    }
    wr.flush().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn constant_is_w_max() {
        let w = sample_signal(&DisturbanceSpec::constant(0.3), &grid(0.1, 1000));
        assert!(w.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn lipschitz_slope_and_range() {
        let spec = DisturbanceSpec { w_max: 1.0, ..DisturbanceSpec::default() };
        let dt = 0.1;
        let w = sample_signal(&spec, &grid(dt, 50_000));
        let worst = w.windows(2).map(|p| (p[1] - p[0]).abs() / dt).fold(0.0, f64::max);
        assert!(worst <= 0.1 + 1e-12, "{worst}");
        assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // The signal actually moves.
        let (lo, hi) = w.iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi - lo > 0.5);
    }

    #[test]
    fn bangbang_levels_and_dwell() {
        let spec = DisturbanceSpec { kind: DisturbanceKind::Bangbang, w_max: 0.01, seed: 9, ..Default::default() };
        let dt = 1.0;
        let w = sample_signal(&spec, &grid(dt, 27_000));
        assert!(w.iter().all(|&v| v == 0.0 || v == 0.01));
        let switches: Vec<usize> = (1..w.len()).filter(|&k| w[k] != w[k - 1]).collect();
        assert!(switches.len() > 10);
        for p in switches.windows(2) {
            assert!((p[1] - p[0]) as f64 * dt >= 59.0);
        }
    }

    #[test]
    fn same_seed_same_signal() {
        for kind in [DisturbanceKind::Lipschitz, DisturbanceKind::Bangbang] {
            let spec = DisturbanceSpec { kind, seed: 42, ..Default::default() };
            let g = grid(0.5, 10_000);
            let a = sample_signal(&spec, &g);
            let b = sample_signal(&spec, &g);
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            let c = sample_signal(&DisturbanceSpec { seed: 43, ..spec }, &g);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn validation() {
        assert!(DisturbanceSpec { w_max: 0.0, ..Default::default() }.validate().is_err());
        assert!(DisturbanceSpec { w_max: 1.5, ..Default::default() }.validate().is_err());
        assert!(DisturbanceSpec { lip_l_per_s: -1.0, ..Default::default() }.validate().is_err());
        let bb = DisturbanceSpec { kind: DisturbanceKind::Bangbang, min_dwell_s: 0.0, ..Default::default() };
        assert!(bb.validate().is_err());
        assert!(DisturbanceSpec::default().validate().is_ok());
    }

    #[test]
    fn csv_has_header() {
        let mut buf = Vec::new();
        write_signal_csv(&mut buf, &[0.0, 1.0], &[0.1, 0.2]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,w\n0,0.1\n"));
    }
}
