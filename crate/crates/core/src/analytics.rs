//! Result surfaces derived from training and evaluation: policy matrices,
//! visitation histograms, smoothed learning curves and trade-off points.
//!
//! Exported levels are 1-based; everything in memory is 0-based.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::agent::{EvaluationSummary, Policy, TrainingLog};
use crate::env::DiscretizationSpec;
use crate::error::{Error, Result};

/// Greedy action per (infected level, risk level) for a single course.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyMatrix {
    pub infected_levels: usize,
    pub risk_levels: usize,
    /// Row-major, `grid[infected][risk]`.
    pub grid: Vec<Vec<usize>>,
}

impl PolicyMatrix {
    pub fn get(&self, infected_level: usize, risk_level: usize) -> usize {
        self.grid[infected_level][risk_level]
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.grid.iter().flatten().copied()
    }

    /// Share of cells choosing `action`.
    pub fn fraction_of(&self, action: usize) -> f64 {
        let total = self.infected_levels * self.risk_levels;
        self.cells().filter(|&a| a == action).count() as f64 / total as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["infected_level", "risk_level", "action"])?;
        for (i, row) in self.grid.iter().enumerate() {
            for (r, action) in row.iter().enumerate() {
                out.write_record([(i + 1).to_string(), (r + 1).to_string(), action.to_string()])?;
            }
        }
        out.flush().map_err(|e| Error::io("<policy matrix csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, spec: &DiscretizationSpec) -> Result<Self> {
        let mut grid = vec![vec![None; spec.risk_levels]; spec.infected_levels];
        for (i, r, action) in read_level_triples(reader, ["infected_level", "risk_level", "action"])? {
            let cell = level_index(i, spec.infected_levels)
                .zip(level_index(r, spec.risk_levels))
                .map(|(i, r)| &mut grid[i][r])
                .ok_or_else(|| malformed(format!("cell ({i}, {r}) outside the grid")))?;
            let action = usize::try_from(action)
                .ok()
                .filter(|&a| a < spec.action_levels)
                .ok_or_else(|| malformed(format!("action {action} out of range")))?;
            *cell = Some(action);
        }
        let grid = grid
            .into_iter()
            .map(|row| row.into_iter().collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| malformed("grid has missing cells".into()))?;
        Ok(PolicyMatrix {
            infected_levels: spec.infected_levels,
            risk_levels: spec.risk_levels,
            grid,
        })
    }
}

fn malformed(reason: String) -> Error {
    Error::Artifact {
        path: "<csv>".into(),
        reason,
    }
}

fn level_index(one_based: i64, levels: usize) -> Option<usize> {
    usize::try_from(one_based - 1).ok().filter(|&i| i < levels)
}

fn read_level_triples<R: Read>(reader: R, header: [&str; 3]) -> Result<Vec<(i64, i64, i64)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(header) {
        return Err(malformed(format!("expected header `{}`", header.join(","))));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let field = |k: usize| -> Result<i64> {
                let text = rec.get(k).unwrap_or("");
                text.trim()
                    .parse()
                    .map_err(|_| malformed(format!("`{text}` is not an integer")))
            };
            Ok((field(0)?, field(1)?, field(2)?))
        })
        .collect()
}

/// Reshapes a flat single-course policy into its (infected, risk) grid.
pub fn build_policy_matrix(policy: &Policy, spec: &DiscretizationSpec, courses: usize) -> Result<PolicyMatrix> {
    if courses != 1 {
        return Err(Error::invalid(
            "policy_matrix",
            format!("{courses} courses; a 2-D matrix needs exactly one, export the flat policy instead"),
        ));
    }
    if policy.len() != spec.state_count(1) {
        return Err(Error::Mismatch(format!(
            "policy has {} states, discretization has {}",
            policy.len(),
            spec.state_count(1)
        )));
    }
    let grid = policy
        .0
        .chunks(spec.risk_levels)
        .map(<[usize]>::to_vec)
        .collect();
    Ok(PolicyMatrix {
        infected_levels: spec.infected_levels,
        risk_levels: spec.risk_levels,
        grid,
    })
}

/// Trailing mean; the first `window - 1` entries average what is available.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::invalid("moving_average_window", "window must be at least 1"));
    }
    Ok((0..series.len())
        .map(|i| {
            let span = &series[(i + 1).saturating_sub(window)..=i];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect())
}

pub fn visitation_histogram(log: &TrainingLog, state_count: usize) -> Vec<u64> {
    let mut counts = vec![0; state_count];
    for (slot, &v) in counts.iter_mut().zip(&log.visits) {
        *slot = v;
    }
    counts
}

pub fn write_visitation_csv<W: Write>(counts: &[u64], spec: &DiscretizationSpec, courses: usize, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    if courses == 1 {
        out.write_record(["infected_level", "risk_level", "count"])?;
        for (state, count) in counts.iter().enumerate() {
            let obs = spec.decode_state(state, 1);
            out.write_record([
                (obs.infected_level_per_course[0] + 1).to_string(),
                (obs.risk_level + 1).to_string(),
                count.to_string(),
            ])?;
        }
    } else {
        out.write_record(["state_index", "count"])?;
        for (state, count) in counts.iter().enumerate() {
            out.write_record([state.to_string(), count.to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("<visitation csv>", e))?;
    Ok(())
}

pub fn write_training_log_csv<W: Write>(log: &TrainingLog, window: usize, writer: W) -> Result<()> {
    let smoothed = moving_average(&log.rewards(), window)?;
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["episode", "total_reward", "epsilon", "learning_rate", "moving_avg_reward"])?;
    for (rec, avg) in log.episodes.iter().zip(smoothed) {
        out.write_record([
            rec.episode.to_string(),
            rec.total_reward.to_string(),
            rec.epsilon.to_string(),
            rec.learning_rate.to_string(),
            avg.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<training log csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub alpha_r: f64,
    pub mean_allowed: f64,
    pub mean_infected: f64,
}

/// One point per summary, sorted by reward weight (stable for equal weights).
pub fn collect_tradeoff(summaries: &[EvaluationSummary]) -> Vec<TradeoffPoint> {
    let mut points: Vec<TradeoffPoint> = summaries
        .iter()
        .map(|s| TradeoffPoint {
            alpha_r: s.alpha_r,
            mean_allowed: s.mean_allowed,
            mean_infected: s.mean_infected,
        })
        .collect();
    points.sort_by(|a, b| a.alpha_r.total_cmp(&b.alpha_r));
    points
}

pub const TRADEOFF_HEADER: [&str; 3] = ["alpha_r", "mean_allowed", "mean_infected"];

pub fn tradeoff_row(point: &TradeoffPoint) -> [String; 3] {
    [
        format!("{:?}", point.alpha_r),
        point.mean_allowed.to_string(),
        point.mean_infected.to_string(),
    ]
}

pub fn write_tradeoff_csv<W: Write>(points: &[TradeoffPoint], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(TRADEOFF_HEADER)?;
    for p in points {
        out.write_record(tradeoff_row(p))?;
    }
    out.flush().map_err(|e| Error::io("<tradeoff csv>", e))?;
    Ok(())
}

pub fn read_tradeoff_csv<R: Read>(reader: R) -> Result<Vec<TradeoffPoint>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(TRADEOFF_HEADER) {
        return Err(malformed(format!("expected header `{}`", TRADEOFF_HEADER.join(","))));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let field = |k: usize| -> Result<f64> {
                let text = rec.get(k).unwrap_or("");
                text.trim()
                    .parse()
                    .map_err(|_| malformed(format!("`{text}` is not a number")))
            };
            Ok(TradeoffPoint {
                alpha_r: field(0)?,
                mean_allowed: field(1)?,
                mean_infected: field(2)?,
            })
        })
        .collect()
}
