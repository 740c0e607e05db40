//! Time-of-day functions: the diurnal traffic profile and piecewise-linear
//! weather schedules. Both repeat every 24 hours.

use serde::{Deserialize, Serialize};

pub const HOURS_PER_DAY: f64 = 24.0;

/// 24 hourly anchors of vehicles/min, interpolated with a periodic
/// Catmull-Rom spline and multiplied by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiurnalProfile {
    pub anchors: Vec<f64>,
    pub scale: f64,
}

impl Default for DiurnalProfile {
    fn default() -> Self {
        DiurnalProfile {
            anchors: vec![
                11.0, 7.0, 4.0, 2.5, 2.5, 5.0, 13.0, 26.0, 36.0, 39.0, 40.0, 41.0, //
                35.0, 29.0, 27.0, 29.0, 34.0, 39.0, 43.0, 46.0, 45.0, 39.0, 29.0, 18.0,
            ],
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeError {
    AnchorCount(usize),
    Negative,
    NightNotMinimum { night_min: f64, global_min: f64 },
    NoMiddayDip { midday_min: f64, morning_peak: f64 },
}

impl std::fmt::Display for ShapeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeError::AnchorCount(n) => write!(f, "expected 24 hourly anchors, got {n}"),
            ShapeError::Negative => f.write_str("anchors and scale must be finite, non-negative (scale > 0)"),
            ShapeError::NightNotMinimum { night_min, global_min } => {
                write!(f, "02:00-05:00 minimum {night_min:.3} is above the daily minimum {global_min:.3}")
            }
            ShapeError::NoMiddayDip { midday_min, morning_peak } => {
                write!(f, "12:00-16:00 minimum {midday_min:.3} is not below the late-morning peak {morning_peak:.3}")
            }
        }
    }
}

impl DiurnalProfile {
    /// Vehicles/min at `hour` (any real; taken modulo 24).
    pub fn at(&self, hour: f64) -> f64 {
        let n = self.anchors.len();
        let h = hour.rem_euclid(HOURS_PER_DAY);
        let i = (h.floor() as usize).min(n - 1);
        let t = h - i as f64;
        let p = |k: isize| self.anchors[(i as isize + k).rem_euclid(n as isize) as usize];
        let (p0, p1, p2, p3) = (p(-1), p(0), p(1), p(2));
        let m1 = 0.5 * (p2 - p0);
        let m2 = 0.5 * (p3 - p1);
        let (t2, t3) = (t * t, t * t * t);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * p1 + (t3 - 2.0 * t2 + t) * m1 + (-2.0 * t3 + 3.0 * t2) * p2 + (t3 - t2) * m2;
        self.scale * v.max(0.0)
    }

    /// Checks the shape constraints at one-minute resolution: the night
    /// window 02:00-05:00 holds the daily minimum and traffic between 12:00
    /// and 16:00 dips below the 09:00-12:00 peak.
    pub fn check_shape(&self) -> Result<(), ShapeError> {
        if self.anchors.len() != 24 {
            return Err(ShapeError::AnchorCount(self.anchors.len()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) || self.anchors.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(ShapeError::Negative);
        }
        let over = |from: f64, to: f64| (0..1440).map(|m| m as f64 / 60.0).filter(move |h| *h >= from && *h < to);
        let min_of = |it: &mut dyn Iterator<Item = f64>| it.map(|h| self.at(h)).fold(f64::INFINITY, f64::min);
        let global_min = min_of(&mut over(0.0, 24.0));
        let night_min = min_of(&mut over(2.0, 5.0));
        if night_min > global_min {
            return Err(ShapeError::NightNotMinimum { night_min, global_min });
        }
        let midday_min = min_of(&mut over(12.0, 16.0));
        let morning_peak = over(9.0, 12.0).map(|h| self.at(h)).fold(f64::NEG_INFINITY, f64::max);
        if midday_min >= morning_peak * (1.0 - 1e-9) {
            return Err(ShapeError::NoMiddayDip { midday_min, morning_peak });
        }
        Ok(())
    }
}

/// Piecewise-linear daily schedule through `(hour, value)` points, wrapping
/// from the last point back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<(f64, f64)>);

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Schedule(vec![(0.0, v)])
    }

    pub fn hourly(values: &[f64]) -> Self {
        Schedule(values.iter().enumerate().map(|(h, &v)| (h as f64, v)).collect())
    }

    /// Points must be non-empty with strictly increasing hours in `[0, 24)`.
    pub fn validate(&self) -> Result<(), String> {
        if self.0.is_empty() {
            return Err("schedule needs at least one point".into());
        }
        for w in self.0.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err("schedule hours must be strictly increasing".into());
            }
        }
        if self.0.iter().any(|&(h, v)| !(0.0..24.0).contains(&h) || !v.is_finite()) {
            return Err("schedule hours must lie in [0, 24) with finite values".into());
        }
        Ok(())
    }

    pub fn at(&self, hour: f64) -> f64 {
        let pts = &self.0;
        if pts.len() == 1 {
            return pts[0].1;
        }
        let h = hour.rem_euclid(HOURS_PER_DAY);
        let next = pts.iter().position(|&(ph, _)| ph > h).unwrap_or(pts.len());
        let (a, b) = match next {
            0 => (pts[pts.len() - 1], (pts[0].0 + HOURS_PER_DAY, pts[0].1)),
            k if k == pts.len() => (pts[k - 1], (pts[0].0 + HOURS_PER_DAY, pts[0].1)),
            k => (pts[k - 1], pts[k]),
        };
        let (ha, hb) = if next == 0 { (a.0 - HOURS_PER_DAY, b.0 - HOURS_PER_DAY) } else { (a.0, b.0) };
        let f = (h - ha) / (hb - ha);
        a.1 + f * (b.1 - a.1)
    }
}
