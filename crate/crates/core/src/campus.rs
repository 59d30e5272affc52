//! Campus configuration, weekly state, community-risk process and reward.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epidemic::{check_probability, project_new_infections, InfectionInput, SIParams};
use crate::error::{Error, Result};

/// Static description of the campus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampusModel {
    pub students_per_course: Vec<u32>,
    pub weeks: u32,
    pub initial_infection_rate: f64,
}

impl Default for CampusModel {
    fn default() -> Self {
        CampusModel {
            students_per_course: vec![100],
            weeks: 15,
            initial_infection_rate: 0.2,
        }
    }
}

impl CampusModel {
    pub fn new(students_per_course: Vec<u32>, weeks: u32, initial_infection_rate: f64) -> Result<Self> {
        let model = CampusModel {
            students_per_course,
            weeks,
            initial_infection_rate,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.students_per_course.is_empty() {
            return Err(Error::invalid("courses", "at least one course is required"));
        }
        if self.weeks == 0 {
            return Err(Error::invalid("weeks", "episode length must be at least one week"));
        }
        check_probability("initial_infection_rate", self.initial_infection_rate)
    }

    pub fn courses(&self) -> usize {
        self.students_per_course.len()
    }

    pub fn total_students(&self) -> u64 {
        self.students_per_course.iter().map(|&n| u64::from(n)).sum()
    }
}

/// Deterministic per-course seeding: `round(rate * N_i)`.
pub fn initial_infected(model: &CampusModel) -> Vec<u32> {
    model
        .students_per_course
        .iter()
        .map(|&n| {
            let seeded = (model.initial_infection_rate * f64::from(n)).round() as u32;
            seeded.min(n)
        })
        .collect()
}

/// How the weekly community risk evolves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "trajectory", rename_all = "kebab-case")]
pub enum RiskProcess {
    /// Independent uniform draw on `[0, 1)` each week.
    IidUniform,
    /// Replays a fixed per-week trajectory.
    FixedTrajectory(Vec<f64>),
}

impl RiskProcess {
    pub fn validate(&self, model: &CampusModel) -> Result<()> {
        if let RiskProcess::FixedTrajectory(values) = self {
            if values.len() < model.weeks as usize {
                return Err(Error::invalid(
                    "risk_trajectory",
                    format!(
                        "{} entries cannot cover {} weeks",
                        values.len(),
                        model.weeks
                    ),
                ));
            }
            for &v in values {
                check_probability("risk_trajectory", v)?;
            }
        }
        Ok(())
    }

    /// Reads a single-column `community_risk` CSV.
    pub fn read_trajectory<R: Read>(reader: R) -> Result<RiskProcess> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 1 || headers.get(0).map(str::trim) != Some("community_risk") {
            return Err(Error::invalid(
                "risk_trajectory",
                format!("expected header `community_risk`, found `{}`", headers.as_slice()),
            ));
        }
        let mut values = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let field = record.get(0).unwrap_or("").trim();
            let value: f64 = field.parse().map_err(|_| {
                Error::invalid("risk_trajectory", format!("row {}: `{field}` is not a number", row + 1))
            })?;
            check_probability("risk_trajectory", value)?;
            values.push(value);
        }
        Ok(RiskProcess::FixedTrajectory(values))
    }

    pub fn load_trajectory(path: &Path) -> Result<RiskProcess> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        RiskProcess::read_trajectory(file)
    }
}

pub fn sample_community_risk<R: Rng + ?Sized>(
    process: &RiskProcess,
    week: u32,
    rng: &mut R,
) -> Result<f64> {
    match process {
        RiskProcess::IidUniform => Ok(rng.gen::<f64>()),
        RiskProcess::FixedTrajectory(values) => values.get(week as usize).copied().ok_or_else(|| {
            Error::invalid(
                "risk_trajectory",
                format!("no entry for week {week} ({} entries)", values.len()),
            )
        }),
    }
}

/// Evolving weekly state. Infected counts are the tracked expectation per course.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampusState {
    pub week: u32,
    pub infected_per_course: Vec<u32>,
    pub allowed_per_course: Vec<u32>,
    pub community_risk: f64,
}

impl CampusState {
    pub fn total_infected(&self) -> u64 {
        self.infected_per_course.iter().map(|&n| u64::from(n)).sum()
    }

    pub fn total_allowed(&self) -> u64 {
        self.allowed_per_course.iter().map(|&n| u64::from(n)).sum()
    }
}

/// Starts a new episode. Allowed occupancy is set to full enrollment as a
/// placeholder; no reward is computed before the first action.
pub fn reset<R: Rng + ?Sized>(
    model: &CampusModel,
    process: &RiskProcess,
    rng: &mut R,
) -> Result<CampusState> {
    model.validate()?;
    process.validate(model)?;
    Ok(CampusState {
        week: 0,
        infected_per_course: initial_infected(model),
        allowed_per_course: model.students_per_course.clone(),
        community_risk: sample_community_risk(process, 0, rng)?,
    })
}

/// Advances one week under the given per-course occupancy.
///
/// Infections are projected from the current infected count and the current
/// week's risk. Risk is redrawn for the new week unless the episode has just
/// ended, in which case the last value is kept.
pub fn apply_action<R: Rng + ?Sized>(
    state: &CampusState,
    model: &CampusModel,
    params: &SIParams,
    process: &RiskProcess,
    allowed: &[u32],
    rng: &mut R,
) -> Result<CampusState> {
    if allowed.len() != model.courses() {
        return Err(Error::invalid(
            "action",
            format!("{} occupancy values for {} courses", allowed.len(), model.courses()),
        ));
    }
    if let Some((i, (&a, &n))) = allowed
        .iter()
        .zip(&model.students_per_course)
        .enumerate()
        .find(|(_, (&a, &n))| a > n)
    {
        return Err(Error::invalid(
            "action",
            format!("course {i}: occupancy {a} exceeds enrollment {n}"),
        ));
    }

    let infected = state
        .infected_per_course
        .iter()
        .zip(allowed)
        .map(|(&current, &occupancy)| {
            project_new_infections(
                params,
                InfectionInput::new(current, occupancy, state.community_risk)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let week = state.week + 1;
    let community_risk = if week < model.weeks {
        sample_community_risk(process, week, rng)?
    } else {
        state.community_risk
    };

    Ok(CampusState {
        week,
        infected_per_course: infected,
        allowed_per_course: allowed.to_vec(),
        community_risk,
    })
}

/// `trunc(alpha_r * sum(allowed) - (1 - alpha_r) * sum(infected))`.
pub fn compute_reward(state: &CampusState, alpha_r: f64) -> Result<i64> {
    check_probability("alpha_r", alpha_r)?;
    let allowed = state.total_allowed() as f64;
    let infected = state.total_infected() as f64;
    Ok((alpha_r * allowed - (1.0 - alpha_r) * infected) as i64)
}

pub fn is_episode_done(state: &CampusState, model: &CampusModel) -> bool {
    state.week >= model.weeks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(n: Vec<u32>, rate: f64) -> CampusModel {
        CampusModel::new(n, 15, rate).unwrap()
    }

    fn state(infected: Vec<u32>, allowed: Vec<u32>, risk: f64) -> CampusState {
        CampusState {
            week: 0,
            infected_per_course: infected,
            allowed_per_course: allowed,
            community_risk: risk,
        }
    }

    #[test]
    fn initial_seeding() {
        assert_eq!(initial_infected(&model(vec![100], 0.0)), vec![0]);
        assert_eq!(initial_infected(&model(vec![100], 1.0)), vec![100]);
        assert_eq!(initial_infected(&model(vec![50, 100], 0.2)), vec![10, 20]);
    }

    #[test]
    fn model_validation() {
        assert!(CampusModel::new(vec![], 15, 0.1).is_err());
        assert!(CampusModel::new(vec![10], 0, 0.1).is_err());
        assert!(CampusModel::new(vec![10], 15, 1.1).is_err());
    }

    #[test]
    fn fixed_trajectory_lookup() {
        let p = RiskProcess::FixedTrajectory(vec![0.1, 0.9]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_community_risk(&p, 1, &mut rng).unwrap(), 0.9);
        assert!(sample_community_risk(&p, 2, &mut rng).is_err());
    }

    #[test]
    fn uniform_risk_in_range_with_mean_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..10_000)
            .map(|w| sample_community_risk(&RiskProcess::IidUniform, w % 15, &mut rng).unwrap())
            .collect();
        assert!(draws.iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn short_trajectory_rejected() {
        let m = model(vec![10], 0.0);
        let p = RiskProcess::FixedTrajectory(vec![0.5; 14]);
        assert!(p.validate(&m).is_err());
        assert!(RiskProcess::FixedTrajectory(vec![0.5; 15]).validate(&m).is_ok());
    }

    #[test]
    fn trajectory_csv_parsing() {
        let p = RiskProcess::read_trajectory("community_risk\n0.1\n0.25\n1\n".as_bytes()).unwrap();
        assert_eq!(p, RiskProcess::FixedTrajectory(vec![0.1, 0.25, 1.0]));
        assert!(RiskProcess::read_trajectory("risk\n0.1\n".as_bytes()).is_err());
        assert!(RiskProcess::read_trajectory("community_risk\n1.5\n".as_bytes()).is_err());
        assert!(RiskProcess::read_trajectory("community_risk\nabc\n".as_bytes()).is_err());
    }

    #[test]
    fn apply_action_zero_occupancy() {
        let m = model(vec![100], 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = state(vec![40], vec![100], 0.7);
        let next =
            apply_action(&s, &m, &SIParams::default(), &RiskProcess::IidUniform, &[0], &mut rng)
                .unwrap();
        assert_eq!(next.infected_per_course, vec![0]);
        assert_eq!(next.week, 1);
    }

    #[test]
    fn apply_action_projects_infections() {
        let m = model(vec![100], 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = state(vec![10], vec![100], 0.2);
        let next =
            apply_action(&s, &m, &SIParams::default(), &RiskProcess::IidUniform, &[50], &mut rng)
                .unwrap();
        assert_eq!(next.infected_per_course, vec![8]);
        assert_eq!(next.allowed_per_course, vec![50]);
    }

    #[test]
    fn apply_action_reaches_terminal_week() {
        let m = model(vec![100], 0.2);
        let traj = RiskProcess::FixedTrajectory(vec![0.3; 15]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = state(vec![10], vec![100], 0.3);
        s.week = 14;
        let next = apply_action(&s, &m, &SIParams::default(), &traj, &[100], &mut rng).unwrap();
        assert_eq!(next.week, 15);
        assert!(is_episode_done(&next, &m));
        assert_eq!(next.community_risk, 0.3);
    }

    #[test]
    fn apply_action_rejects_overfull_rooms() {
        let m = model(vec![100], 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = state(vec![10], vec![100], 0.2);
        let p = SIParams::default();
        assert!(apply_action(&s, &m, &p, &RiskProcess::IidUniform, &[101], &mut rng).is_err());
        assert!(apply_action(&s, &m, &p, &RiskProcess::IidUniform, &[1, 1], &mut rng).is_err());
    }

    #[test]
    fn reward_examples() {
        let s = state(vec![30], vec![100], 0.5);
        assert_eq!(compute_reward(&s, 1.0).unwrap(), 100);
        assert_eq!(compute_reward(&s, 0.0).unwrap(), -30);
        let s = state(vec![20], vec![100], 0.5);
        assert_eq!(compute_reward(&s, 0.5).unwrap(), 40);
        assert!(compute_reward(&s, 1.5).is_err());
        assert!(compute_reward(&s, -0.5).is_err());
    }

    #[test]
    fn reward_truncates_toward_zero() {
        // 0.3 * 10 - 0.7 * 5 = -0.5
        let s = state(vec![5], vec![10], 0.5);
        assert_eq!(compute_reward(&s, 0.3).unwrap(), 0);
        // 0.3 * 10 - 0.7 * 2 = 1.6
        let s = state(vec![2], vec![10], 0.5);
        assert_eq!(compute_reward(&s, 0.3).unwrap(), 1);
    }

    #[test]
    fn episode_done_at_horizon() {
        let m = model(vec![100], 0.0);
        let mut s = state(vec![0], vec![0], 0.0);
        for (week, done) in [(0, false), (14, false), (15, true)] {
            s.week = week;
            assert_eq!(is_episode_done(&s, &m), done);
        }
    }

    #[test]
    fn reset_is_seed_deterministic() {
        let m = model(vec![100], 0.2);
        let a = reset(&m, &RiskProcess::IidUniform, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = reset(&m, &RiskProcess::IidUniform, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.week, 0);
        assert_eq!(a.infected_per_course, vec![20]);
        let zero = reset(&model(vec![30, 40], 0.0), &RiskProcess::IidUniform, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        assert_eq!(zero.infected_per_course, vec![0, 0]);
    }

    proptest! {
        #[test]
        fn transitions_preserve_state_invariants(
            sizes in proptest::collection::vec(0u32..=120, 1..4),
            rate in 0.0f64..=1.0,
            alpha_r in 0.0f64..=1.0,
            fractions in proptest::collection::vec(0.0f64..=1.0, 15),
            seed in any::<u64>(),
        ) {
            let m = CampusModel::new(sizes.clone(), 15, rate).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = SIParams::default();
            let mut s = reset(&m, &RiskProcess::IidUniform, &mut rng).unwrap();
            let total = m.total_students() as f64;
            for f in &fractions {
                let allowed: Vec<u32> = sizes.iter().map(|&n| (f * f64::from(n)).floor() as u32).collect();
                s = apply_action(&s, &m, &params, &RiskProcess::IidUniform, &allowed, &mut rng).unwrap();
                for ((&i, &a), &n) in s.infected_per_course.iter().zip(&s.allowed_per_course).zip(&sizes) {
                    prop_assert!(i <= n && a <= n);
                }
                prop_assert!((0.0..=1.0).contains(&s.community_risk));
                let r = compute_reward(&s, alpha_r).unwrap() as f64;
                prop_assert!(r <= alpha_r * total);
                prop_assert!(r >= -(1.0 - alpha_r) * total);
            }
            prop_assert!(is_episode_done(&s, &m));
        }
    }
}
