//! Discrete reset/step environment over the campus simulation.
//!
//! Observations are one infected level per course plus one community-risk
//! level; actions are one occupancy level per course. Both are multi-discrete
//! and can be flattened to a single table index (mixed radix, course 0 most
//! significant, risk level least significant).

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::campus::{self, CampusModel, CampusState, RiskProcess};
use crate::epidemic::{check_probability, SIParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub risk_levels: usize,
    pub infected_levels: usize,
    pub action_levels: usize,
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        DiscretizationSpec {
            risk_levels: 10,
            infected_levels: 10,
            action_levels: 3,
        }
    }
}

impl DiscretizationSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, levels) in [
            ("risk_levels", self.risk_levels),
            ("infected_levels", self.infected_levels),
            ("action_levels", self.action_levels),
        ] {
            if levels < 2 {
                return Err(Error::invalid(name, format!("{levels} levels; at least 2 required")));
            }
        }
        Ok(())
    }

    /// `infected_levels^courses * risk_levels`
    pub fn state_count(&self, courses: usize) -> usize {
        self.infected_levels.pow(courses as u32) * self.risk_levels
    }

    /// `action_levels^courses`
    pub fn action_count(&self, courses: usize) -> usize {
        self.action_levels.pow(courses as u32)
    }

    pub fn encode_state(&self, obs: &Observation) -> usize {
        let infected = obs
            .infected_level_per_course
            .iter()
            .fold(0, |acc, &level| acc * self.infected_levels + level);
        infected * self.risk_levels + obs.risk_level
    }

    pub fn decode_state(&self, index: usize, courses: usize) -> Observation {
        let risk_level = index % self.risk_levels;
        let mut rest = index / self.risk_levels;
        let mut infected = vec![0; courses];
        for slot in infected.iter_mut().rev() {
            *slot = rest % self.infected_levels;
            rest /= self.infected_levels;
        }
        Observation {
            infected_level_per_course: infected,
            risk_level,
        }
    }

    pub fn encode_action(&self, action: &ActionIndex) -> usize {
        action
            .level_per_course
            .iter()
            .fold(0, |acc, &level| acc * self.action_levels + level)
    }

    pub fn decode_action(&self, index: usize, courses: usize) -> ActionIndex {
        let mut rest = index;
        let mut levels = vec![0; courses];
        for slot in levels.iter_mut().rev() {
            *slot = rest % self.action_levels;
            rest /= self.action_levels;
        }
        ActionIndex {
            level_per_course: levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub infected_level_per_course: Vec<usize>,
    pub risk_level: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionIndex {
    pub level_per_course: Vec<usize>,
}

impl ActionIndex {
    pub fn uniform(level: usize, courses: usize) -> Self {
        ActionIndex {
            level_per_course: vec![level; courses],
        }
    }
}

/// Raw continuous state behind an observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub week: u32,
    pub infected_per_course: Vec<u32>,
    pub allowed_per_course: Vec<u32>,
    pub community_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: i64,
    pub terminated: bool,
    pub info: StepInfo,
}

/// Equal-width binning of `[0, max_value]` into `levels` bins, top edge
/// clamped into the last bin. A zero range maps everything to level 0.
pub fn discretize_value(value: f64, max_value: f64, levels: usize) -> usize {
    if max_value <= 0.0 || levels == 0 {
        return 0;
    }
    let bin = (value * levels as f64 / max_value).floor();
    if bin <= 0.0 {
        0
    } else {
        (bin as usize).min(levels - 1)
    }
}

/// Occupancy per course: `round(level / (L - 1) * N_i)`.
pub fn action_to_allowed(
    action: &ActionIndex,
    spec: &DiscretizationSpec,
    model: &CampusModel,
) -> Result<Vec<u32>> {
    if action.level_per_course.len() != model.courses() {
        return Err(Error::invalid(
            "action",
            format!(
                "{} levels for {} courses",
                action.level_per_course.len(),
                model.courses()
            ),
        ));
    }
    let top = spec.action_levels - 1;
    action
        .level_per_course
        .iter()
        .zip(&model.students_per_course)
        .map(|(&level, &n)| {
            if level > top {
                return Err(Error::invalid(
                    "action",
                    format!("level {level} outside 0..={top}"),
                ));
            }
            Ok(((level as f64 * f64::from(n)) / top as f64).round() as u32)
        })
        .collect()
}

/// Minimal interface a tabular agent needs from an environment.
pub trait TabularEnv {
    fn state_count(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Inclusive bounds on any single-step reward.
    fn reward_bounds(&self) -> (f64, f64);
    fn reset_index(&mut self, seed: Option<u64>) -> Result<usize>;
    fn step_index(&mut self, action: usize) -> Result<IndexedStep>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexedStep {
    pub next_state: usize,
    pub reward: i64,
    pub terminated: bool,
}

/// Stateful single-threaded episode runner.
#[derive(Debug, Clone)]
pub struct CampusEnv {
    model: CampusModel,
    params: SIParams,
    risk: RiskProcess,
    spec: DiscretizationSpec,
    alpha_r: f64,
    rng: ChaCha8Rng,
    state: Option<CampusState>,
}

impl CampusEnv {
    pub fn new(
        model: CampusModel,
        params: SIParams,
        risk: RiskProcess,
        spec: DiscretizationSpec,
        alpha_r: f64,
    ) -> Result<Self> {
        model.validate()?;
        params.validate()?;
        risk.validate(&model)?;
        spec.validate()?;
        check_probability("alpha_r", alpha_r)?;
        Ok(CampusEnv {
            model,
            params,
            risk,
            spec,
            alpha_r,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: None,
        })
    }

    pub fn model(&self) -> &CampusModel {
        &self.model
    }

    pub fn spec(&self) -> &DiscretizationSpec {
        &self.spec
    }

    pub fn alpha_r(&self) -> f64 {
        self.alpha_r
    }

    pub fn state(&self) -> Option<&CampusState> {
        self.state.as_ref()
    }

    pub fn observe(&self, state: &CampusState) -> Observation {
        Observation {
            infected_level_per_course: state
                .infected_per_course
                .iter()
                .zip(&self.model.students_per_course)
                .map(|(&i, &n)| discretize_value(f64::from(i), f64::from(n), self.spec.infected_levels))
                .collect(),
            risk_level: discretize_value(state.community_risk, 1.0, self.spec.risk_levels),
        }
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<Observation> {
        if let Some(seed) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(seed);
        }
        let state = campus::reset(&self.model, &self.risk, &mut self.rng)?;
        let obs = self.observe(&state);
        self.state = Some(state);
        Ok(obs)
    }

    pub fn step(&mut self, action: &ActionIndex) -> Result<StepResult> {
        let current = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Usage("step called before reset".into()))?;
        if campus::is_episode_done(current, &self.model) {
            return Err(Error::Usage(format!(
                "episode already terminated at week {}",
                current.week
            )));
        }
        let allowed = action_to_allowed(action, &self.spec, &self.model)?;
        let next = campus::apply_action(
            current,
            &self.model,
            &self.params,
            &self.risk,
            &allowed,
            &mut self.rng,
        )?;
        // Reward is charged on the post-action state.
        let reward = campus::compute_reward(&next, self.alpha_r)?;
        let result = StepResult {
            observation: self.observe(&next),
            reward,
            terminated: campus::is_episode_done(&next, &self.model),
            info: StepInfo {
                week: next.week,
                infected_per_course: next.infected_per_course.clone(),
                allowed_per_course: next.allowed_per_course.clone(),
                community_risk: next.community_risk,
            },
        };
        self.state = Some(next);
        Ok(result)
    }

    pub fn render(&self) -> String {
        let Some(state) = &self.state else {
            return "campus env: not reset".to_string();
        };
        let mut out = format!(
            "week={}/{} infected={:?} allowed={:?} community_risk={:.3}",
            state.week,
            self.model.weeks,
            state.infected_per_course,
            state.allowed_per_course,
            state.community_risk
        );
        if campus::is_episode_done(state, &self.model) {
            let _ = write!(out, " [terminated]");
        }
        out
    }
}

impl TabularEnv for CampusEnv {
    fn state_count(&self) -> usize {
        self.spec.state_count(self.model.courses())
    }

    fn action_count(&self) -> usize {
        self.spec.action_count(self.model.courses())
    }

    fn reward_bounds(&self) -> (f64, f64) {
        let total = self.model.total_students() as f64;
        (-(1.0 - self.alpha_r) * total, self.alpha_r * total)
    }

    fn reset_index(&mut self, seed: Option<u64>) -> Result<usize> {
        let obs = self.reset(seed)?;
        Ok(self.spec.encode_state(&obs))
    }

    fn step_index(&mut self, action: usize) -> Result<IndexedStep> {
        if action >= self.action_count() {
            return Err(Error::invalid(
                "action",
                format!("index {action} outside 0..{}", self.action_count()),
            ));
        }
        let action = self.spec.decode_action(action, self.model.courses());
        let step = self.step(&action)?;
        Ok(IndexedStep {
            next_state: self.spec.encode_state(&step.observation),
            reward: step.reward,
            terminated: step.terminated,
        })
    }
}
