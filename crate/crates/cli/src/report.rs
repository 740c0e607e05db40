//! Hour-of-day summary of an estimate series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use airtraffic_core::types::{GasSpecies, GasVector};
use anyhow::{bail, Result};

use crate::files::{create, EstimateRow};

#[derive(Debug, Clone, PartialEq)]
pub struct HourRow {
    pub hour: u32,
    pub n_minutes: usize,
    pub mean_vehicles_per_min: f64,
    pub mean_congestion_index: f64,
    pub mean_contributions: GasVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayRow {
    pub date: String,
    pub min_hour: u32,
    pub min_mean: f64,
    pub max_hour: u32,
    pub max_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub hourly: Vec<HourRow>,
    pub days: Vec<DayRow>,
    pub mean_vehicles_per_min: f64,
    pub mean_contributions: GasVector<f64>,
}

impl Summary {
    /// Hour of day (UTC) with the lowest and highest mean.
    pub fn min_max_hours(&self) -> (u32, u32) {
        let by = |f: fn(f64, f64) -> bool| {
            self.hourly
                .iter()
                .fold(None::<&HourRow>, |best, h| match best {
                    Some(b) if !f(h.mean_vehicles_per_min, b.mean_vehicles_per_min) => Some(b),
                    _ => Some(h),
                })
                .map_or(0, |h| h.hour)
        };
        (by(|a, b| a < b), by(|a, b| a > b))
    }
}

/// Civil date (proleptic Gregorian, UTC) of a day count since 1970-01-01.
fn civil_date(days: i64) -> String {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}")
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n.max(1) as f64
}

pub fn summarize(rows: &[EstimateRow]) -> Result<Summary> {
    if rows.is_empty() {
        bail!("EMPTY_INPUT: the estimates file has no rows");
    }
    let hour_of = |minute: i64| (minute.rem_euclid(1440) / 60) as u32;
    let mut by_hour: BTreeMap<u32, Vec<&EstimateRow>> = BTreeMap::new();
    let mut by_day_hour: BTreeMap<i64, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        by_hour.entry(hour_of(r.minute)).or_default().push(r);
        by_day_hour.entry(r.minute.div_euclid(1440)).or_default().entry(hour_of(r.minute)).or_default().push(r.vehicles_per_min);
    }
    let hourly = by_hour
        .into_iter()
        .map(|(hour, rs)| HourRow {
            hour,
            n_minutes: rs.len(),
            mean_vehicles_per_min: mean(rs.iter().map(|r| r.vehicles_per_min)),
            mean_congestion_index: mean(rs.iter().map(|r| r.congestion_index)),
            mean_contributions: GasVector::from_fn(|g| mean(rs.iter().map(|r| r.contributions[g]))),
        })
        .collect();
    let days = by_day_hour
        .into_iter()
        .map(|(day, hours)| {
            let means: Vec<(u32, f64)> = hours.into_iter().map(|(h, v)| (h, mean(v.into_iter()))).collect();
            let lo = means.iter().copied().fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            let hi = means.iter().copied().fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            DayRow { date: civil_date(day), min_hour: lo.0, min_mean: lo.1, max_hour: hi.0, max_mean: hi.1 }
        })
        .collect();
    Ok(Summary {
        hourly,
        days,
        mean_vehicles_per_min: mean(rows.iter().map(|r| r.vehicles_per_min)),
        mean_contributions: GasVector::from_fn(|g| mean(rows.iter().map(|r| r.contributions[g]))),
    })
}

pub fn render(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>4}  {:>7}  {:>12}  {:>10}  {:>8}  {:>8}  {:>8}  {:>8}", "hour", "minutes", "veh/min", "index", "CO", "SO2", "HC", "SOOT");
    for h in &s.hourly {
        let c = &h.mean_contributions;
        let _ = writeln!(
            out,
            "{:>02}:00  {:>7}  {:>12.2}  {:>10.3}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}",
            h.hour, h.n_minutes, h.mean_vehicles_per_min, h.mean_congestion_index,
            c[GasSpecies::Co], c[GasSpecies::So2], c[GasSpecies::Hc], c[GasSpecies::Soot]
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<10}  {:>9}  {:>9}  {:>9}  {:>9}", "date", "min hour", "veh/min", "max hour", "veh/min");
    for d in &s.days {
        let _ = writeln!(out, "{:<10}  {:>6}:00  {:>9.2}  {:>6}:00  {:>9.2}", d.date, format!("{:02}", d.min_hour), d.min_mean, format!("{:02}", d.max_hour), d.max_mean);
    }
    let (quiet, busy) = s.min_max_hours();
    let _ = writeln!(out, "quietest hour {quiet:02}:00, busiest hour {busy:02}:00");
    let _ = writeln!(out);
    let total = s.mean_contributions.sum();
    let _ = writeln!(out, "mean {:.2} veh/min; share by gas:", s.mean_vehicles_per_min);
    for (g, c) in s.mean_contributions.iter() {
        let share = if total > 0.0 { 100.0 * c / total } else { 0.0 };
        let _ = writeln!(out, "  {:<5} {:>8.2} veh/min  {:>6.1} %", g.to_string(), c, share);
    }
    out
}

pub fn write_hourly_csv(path: &Path, s: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["hour".to_string(), "n_minutes".into(), "mean_vehicles_per_min".into(), "mean_congestion_index".into()];
    header.extend(GasSpecies::ALL.map(|g| format!("contrib_{}", g.key())));
    w.write_record(&header)?;
    for h in &s.hourly {
        let mut row = vec![h.hour.to_string(), h.n_minutes.to_string(), h.mean_vehicles_per_min.to_string(), h.mean_congestion_index.to_string()];
        row.extend(h.mean_contributions.iter().map(|(_, c)| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_daily_csv(path: &Path, s: &Summary) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["date", "min_hour", "min_mean_vehicles_per_min", "max_hour", "max_mean_vehicles_per_min"])?;
    for d in &s.days {
        w.write_record([d.date.clone(), d.min_hour.to_string(), d.min_mean.to_string(), d.max_hour.to_string(), d.max_mean.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(minute: i64, v: f64) -> EstimateRow {
        EstimateRow { minute, vehicles_per_min: v, congestion_index: v / 60.0, contributions: GasVector::new([v / 2.0, v / 4.0, v / 8.0, v / 8.0]) }
    }

    #[test]
    fn dates() {
        assert_eq!(civil_date(0), "1970-01-01");
        assert_eq!(civil_date(1_556_755_200 / 86_400), "2019-05-02");
        assert_eq!(civil_date(-1), "1969-12-31");
        assert_eq!(civil_date(11_016), "2000-02-29");
    }

    #[test]
    fn hourly_means_and_extremes() {
        let rows: Vec<_> = (0..1440).map(|m| row(m, if m / 60 == 3 { 1.0 } else if m / 60 == 18 { 50.0 } else { 20.0 })).collect();
        let s = summarize(&rows).unwrap();
        assert_eq!(s.hourly.len(), 24);
        assert_eq!(s.min_max_hours(), (3, 18));
        assert_eq!(s.days[0].min_hour, 3);
        assert_eq!(s.days[0].max_hour, 18);
        assert_eq!(s.hourly[18].mean_contributions[GasSpecies::Co], 25.0);
        assert!(render(&s).contains("18:00"));
    }

    #[test]
    fn empty_input() {
        assert!(summarize(&[]).unwrap_err().to_string().starts_with("EMPTY_INPUT"));
    }
}
