//! Cost sweeps over model size, selection size and bandwidth.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::reputation::ReputationState;
use crate::scenario::{Scenario, Scheme};
use crate::sim::select_and_allocate;
use crate::solver::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Model size `d_n` in Mbit.
    ModelSize,
    /// Clients selected per round.
    Selected,
    /// Bandwidth in MHz.
    Bandwidth,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::ModelSize => "dn",
            Axis::Selected => "n",
            Axis::Bandwidth => "b",
        }
    }

    /// Scenario at `value`, or a reason why the value is unusable.
    pub fn apply(self, base: &Scenario, value: f64) -> std::result::Result<Scenario, String> {
        let mut s = base.clone();
        match self {
            Axis::ModelSize => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(format!("model size {value} Mbit must be positive"));
                }
                s.model_bits = value * 1e6;
            }
            Axis::Selected => {
                if value.fract() != 0.0 || value < 1.0 || value > s.clients as f64 {
                    return Err(format!(
                        "selection size {value} must be an integer in [1, {}]",
                        s.clients
                    ));
                }
                s.selected = value as usize;
            }
            Axis::Bandwidth => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(format!("bandwidth {value} MHz must be positive"));
                }
                s.bandwidth = value * 1e6;
            }
        }
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dn" => Ok(Axis::ModelSize),
            "n" => Ok(Axis::Selected),
            "b" => Ok(Axis::Bandwidth),
            _ => Err(Error::Config(format!(
                "unknown sweep axis '{s}' (expected dn, n or b)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Sample,
    Median,
    Warning,
}

impl Stat {
    fn name(self) -> &'static str {
        match self {
            Stat::Sample => "sample",
            Stat::Median => "median",
            Stat::Warning => "warning",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: Axis,
    pub value: f64,
    pub scheme: Option<Scheme>,
    /// Seed for samples; `None` for medians and warnings.
    pub seed: Option<u64>,
    pub stat: Stat,
    /// `(T, E, T + E)`; absent on warning rows.
    pub cost: Option<(f64, f64, f64)>,
    pub dropped: usize,
    pub note: String,
}

pub const HEADER: [&str; 10] = [
    "axis",
    "value",
    "scheme",
    "seed",
    "stat",
    "latency",
    "energy",
    "total_cost",
    "dropped",
    "note",
];

impl SweepRow {
    fn warning(
        axis: Axis,
        value: f64,
        scheme: Option<Scheme>,
        seed: Option<u64>,
        note: String,
    ) -> Self {
        Self {
            axis,
            value,
            scheme,
            seed,
            stat: Stat::Warning,
            cost: None,
            dropped: 0,
            note,
        }
    }

    pub fn record(&self) -> [String; 10] {
        let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        [
            self.axis.to_string(),
            self.value.to_string(),
            self.scheme.map(|s| s.to_string()).unwrap_or_default(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.stat.name().to_string(),
            num(self.cost.map(|c| c.0)),
            num(self.cost.map(|c| c.1)),
            num(self.cost.map(|c| c.2)),
            self.dropped.to_string(),
            self.note.clone(),
        ]
    }
}

/// Cost of one round under `scheme` for seed `seed`, with the first-round
/// selection and drop-and-reselect.
pub fn round_cost(
    s: &Scenario,
    scheme: Scheme,
    seed: u64,
) -> Result<Option<((f64, f64, f64), usize)>> {
    let s = Scenario {
        scheme,
        seed,
        ..s.clone()
    };
    let profiles = s.profiles(seed);
    let gains = s.gains(seed, &s.distances(seed), 0)?;
    let reputation = ReputationState::new(&profiles, s.epsilon, s.weights, s.pi_prior)?;
    let (picked, dropped) = select_and_allocate(
        &s,
        &reputation,
        &profiles,
        &gains,
        &SolverSettings::default(),
        0,
    )?;
    Ok(picked.map(|(_, a)| {
        (
            (a.report.latency, a.report.energy, a.report.total_cost()),
            dropped.len(),
        )
    }))
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Runs every scheme at every value over seeds `0..sweep_seeds`. Samples
/// are followed by one median row per value and scheme.
pub fn sweep(
    base: &Scenario,
    axis: Axis,
    values: &[f64],
    schemes: &[Scheme],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let seeds = base.sweep_seeds as u64;
    let mut rows = Vec::new();
    for &value in values {
        let s = match axis.apply(base, value) {
            Ok(s) => s,
            Err(note) => {
                log::warn!("skipping {axis} = {value}: {note}");
                rows.push(SweepRow::warning(axis, value, None, None, note));
                continue;
            }
        };
        for &scheme in schemes {
            let results: Vec<Result<Option<((f64, f64, f64), usize)>>> = (0..seeds)
                .into_par_iter()
                .map(|seed| round_cost(&s, scheme, seed))
                .collect();
            let mut samples = Vec::new();
            for (seed, r) in (0..seeds).zip(results) {
                match r? {
                    Some((cost, dropped)) => {
                        samples.push(cost);
                        rows.push(SweepRow {
                            axis,
                            value,
                            scheme: Some(scheme),
                            seed: Some(seed),
                            stat: Stat::Sample,
                            cost: Some(cost),
                            dropped,
                            note: String::new(),
                        });
                    }
                    None => rows.push(SweepRow::warning(
                        axis,
                        value,
                        Some(scheme),
                        Some(seed),
                        "no feasible client".into(),
                    )),
                }
            }
            let pick = |f: fn(&(f64, f64, f64)) -> f64| {
                median(&mut samples.iter().map(f).collect::<Vec<_>>())
            };
            if let (Some(t), Some(e), Some(c)) = (pick(|x| x.0), pick(|x| x.1), pick(|x| x.2)) {
                rows.push(SweepRow {
                    axis,
                    value,
                    scheme: Some(scheme),
                    seed: None,
                    stat: Stat::Median,
                    cost: Some((t, e, c)),
                    dropped: 0,
                    note: format!("{} seeds", samples.len()),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut []), None);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn invalid_values_become_warnings() {
        let base = Scenario {
            sweep_seeds: 2,
            ..Scenario::default()
        };
        let rows = sweep(
            &base,
            Axis::Selected,
            &[0.0, 2.5, 3.0, 40.0],
            &[Scheme::Proposed],
        )
        .unwrap();
        let warnings: Vec<_> = rows.iter().filter(|r| r.stat == Stat::Warning).collect();
        assert_eq!(warnings.len(), 3);
        assert!(warnings.iter().all(|r| r.cost.is_none()));
        let medians: Vec<_> = rows.iter().filter(|r| r.stat == Stat::Median).collect();
        assert_eq!(medians.len(), 1);
        assert_eq!(medians[0].value, 3.0);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&HEADER.join(",")));
        assert!(text.lines().any(|l| l.starts_with("n,0,,,warning,,,,0,")));
    }

    #[test]
    fn axis_units() {
        let s = Scenario::default();
        assert_eq!(Axis::ModelSize.apply(&s, 2.0).unwrap().model_bits, 2e6);
        assert_eq!(Axis::Bandwidth.apply(&s, 0.5).unwrap().bandwidth, 5e5);
        assert_eq!(Axis::Selected.apply(&s, 6.0).unwrap().selected, 6);
        assert!("x".parse::<Axis>().is_err());
    }
}
