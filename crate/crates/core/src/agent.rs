//! Optimistic tabular Q-learning.
//!
//! Every entry starts at an upper bound on the discounted return, so any
//! action that has not been tried looks at least as good as the best one
//! seen so far. Exploration is epsilon-greedy with an exponential per-episode
//! decay; the step size decays multiplicatively per environment step.
//!
//! The end of a semester is a time limit, not an absorbing state: the
//! observation carries no week counter, so the update always bootstraps from
//! the successor state. This keeps the table an estimate of one stationary
//! discounted problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::campus::CampusModel;
use crate::env::{CampusEnv, TabularEnv};
use crate::epidemic::check_probability;
use crate::error::{Error, Result};

/// Random stream used for action selection, distinct from the environment's.
const AGENT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub discount: f64,
    pub max_episodes: usize,
    pub exploration_rate: f64,
    pub min_exploration_rate: f64,
    pub exploration_decay_rate: f64,
    pub learning_rate_decay: f64,
    pub min_learning_rate: f64,
    pub alpha_r: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 0.3,
            discount: 0.9,
            max_episodes: 2500,
            exploration_rate: 1.0,
            min_exploration_rate: 1e-6,
            exploration_decay_rate: 0.001,
            learning_rate_decay: 0.99999,
            min_learning_rate: 0.001,
            alpha_r: 0.5,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate", format!("{} outside (0, 1]", self.learning_rate)));
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return Err(Error::invalid("discount", format!("{} outside [0, 1)", self.discount)));
        }
        check_probability("exploration_rate", self.exploration_rate)?;
        check_probability("min_exploration_rate", self.min_exploration_rate)?;
        check_probability("min_learning_rate", self.min_learning_rate)?;
        check_probability("alpha_r", self.alpha_r)?;
        if !(self.exploration_decay_rate.is_finite() && self.exploration_decay_rate >= 0.0) {
            return Err(Error::invalid(
                "exploration_decay_rate",
                format!("{} must be finite and non-negative", self.exploration_decay_rate),
            ));
        }
        if !(self.learning_rate_decay > 0.0 && self.learning_rate_decay <= 1.0) {
            return Err(Error::invalid(
                "learning_rate_decay",
                format!("{} outside (0, 1]", self.learning_rate_decay),
            ));
        }
        Ok(())
    }

    /// `max(eps_min, eps_0 * exp(-k * episode))`
    pub fn epsilon(&self, episode: usize) -> f64 {
        (self.exploration_rate * (-self.exploration_decay_rate * episode as f64).exp())
            .max(self.min_exploration_rate)
    }

    /// `max(lr_min, lr_0 * decay^step)`
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        (self.learning_rate * self.learning_rate_decay.powf(step as f64)).max(self.min_learning_rate)
    }
}

/// Exploration rate for `episode` and step size for global `step`.
pub fn decay_schedules(hp: &Hyperparameters, episode: usize, step: u64) -> (f64, f64) {
    (hp.epsilon(episode), hp.learning_rate_at(step))
}

/// Dense state-by-action value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    states: usize,
    actions: usize,
    optimistic_init: f64,
}

impl QTable {
    pub fn filled(states: usize, actions: usize, value: f64) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::invalid(
                "q_table",
                format!("shape {states}x{actions} has an empty dimension"),
            ));
        }
        Ok(QTable {
            values: vec![value; states * actions],
            states,
            actions,
            optimistic_init: value,
        })
    }

    /// Table initialised at `alpha_r * sum(N_i) / (1 - gamma)`, the largest
    /// discounted return any policy can collect.
    pub fn optimistic(
        states: usize,
        actions: usize,
        hp: &Hyperparameters,
        model: &CampusModel,
    ) -> Result<Self> {
        check_probability("alpha_r", hp.alpha_r)?;
        let q0 = optimistic_value(hp.alpha_r * model.total_students() as f64, hp.discount)?;
        QTable::filled(states, actions, q0)
    }

    pub(crate) fn from_parts(
        states: usize,
        actions: usize,
        optimistic_init: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != states * actions {
            return Err(Error::invalid(
                "q_table",
                format!("{} values for shape {states}x{actions}", values.len()),
            ));
        }
        Ok(QTable {
            values,
            states,
            actions,
            optimistic_init,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn optimistic_init(&self) -> f64 {
        self.optimistic_init
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// First index of the row maximum.
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }
}

fn optimistic_value(max_reward: f64, discount: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::invalid(
            "discount",
            format!("{discount} leaves the optimistic bound unbounded"),
        ));
    }
    Ok(max_reward / (1.0 - discount))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn q_init(
    state_count: usize,
    action_count: usize,
    hp: &Hyperparameters,
    model: &CampusModel,
) -> Result<QTable> {
    QTable::optimistic(state_count, action_count, hp, model)
}

/// Epsilon-greedy choice. With `epsilon == 0` the random stream is not touched.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, state: usize, epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.actions())
    } else {
        q.greedy_action(state)
    }
}

/// `Q(s,a) += lr * (r + gamma * max_a' Q(s',a') - Q(s,a))`; returns the new value.
pub fn q_update(
    q: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    learning_rate: f64,
    discount: f64,
) -> f64 {
    let current = q.get(state, action);
    let target = reward + discount * q.max_value(next_state);
    let updated = current + learning_rate * (target - current);
    q.set(state, action, updated);
    updated
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub total_reward: i64,
    /// Exploration rate used throughout the episode.
    pub epsilon: f64,
    /// Step size in effect after the episode's last update.
    pub learning_rate: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    /// Visits per flat state, counted where an action was taken.
    pub visits: Vec<u64>,
}

impl TrainingLog {
    pub fn total_steps(&self) -> u64 {
        self.episodes.iter().map(|e| e.steps as u64).sum()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_reward as f64).collect()
    }
}

pub fn train<E: TabularEnv>(env: &mut E, hp: &Hyperparameters, seed: u64) -> Result<(QTable, TrainingLog)> {
    train_with_observer(env, hp, seed, |_, _| {})
}

/// Runs `hp.max_episodes` episodes, calling `observer` after each one.
pub fn train_with_observer<E, F>(
    env: &mut E,
    hp: &Hyperparameters,
    seed: u64,
    mut observer: F,
) -> Result<(QTable, TrainingLog)>
where
    E: TabularEnv,
    F: FnMut(&EpisodeRecord, &QTable),
{
    hp.validate()?;
    let (_, max_reward) = env.reward_bounds();
    let mut q = QTable::filled(
        env.state_count(),
        env.action_count(),
        optimistic_value(max_reward, hp.discount)?,
    )?;
    let mut log = TrainingLog {
        episodes: Vec::with_capacity(hp.max_episodes),
        visits: vec![0; env.state_count()],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(AGENT_STREAM);
    let mut global_step: u64 = 0;

    for episode in 0..hp.max_episodes {
        let epsilon = hp.epsilon(episode);
        let mut state = env.reset_index((episode == 0).then_some(seed))?;
        let mut total_reward = 0i64;
        let mut steps = 0usize;
        let mut learning_rate;

        loop {
            let action = select_action(&q, state, epsilon, &mut rng);
            let step = env.step_index(action)?;
            learning_rate = hp.learning_rate_at(global_step);
            q_update(
                &mut q,
                state,
                action,
                step.reward as f64,
                step.next_state,
                learning_rate,
                hp.discount,
            );
            log.visits[state] += 1;
            total_reward += step.reward;
            steps += 1;
            global_step += 1;
            state = step.next_state;
            if step.terminated {
                break;
            }
        }

        let record = EpisodeRecord {
            episode,
            total_reward,
            epsilon,
            learning_rate,
            steps,
        };
        observer(&record, &q);
        log.episodes.push(record);
    }
    Ok((q, log))
}

/// Greedy action per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn extract_policy(q: &QTable) -> Policy {
    Policy((0..q.states()).map(|s| q.greedy_action(s)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub alpha_r: f64,
    pub episodes: usize,
    pub mean_allowed: f64,
    pub mean_infected: f64,
    pub mean_reward: f64,
}

/// Greedy rollouts without learning. Means are per week, summed over courses.
pub fn evaluate(policy: &Policy, env: &mut CampusEnv, episodes: usize, seed: u64) -> Result<EvaluationSummary> {
    if episodes == 0 {
        return Err(Error::invalid("episodes", "evaluation needs at least one episode"));
    }
    if policy.len() != env.state_count() {
        return Err(Error::Mismatch(format!(
            "policy covers {} states, environment has {}",
            policy.len(),
            env.state_count()
        )));
    }

    let courses = env.model().courses();
    let spec = *env.spec();
    let (mut allowed, mut infected, mut reward, mut weeks) = (0u64, 0u64, 0i64, 0u64);
    for episode in 0..episodes {
        let mut obs = env.reset((episode == 0).then_some(seed))?;
        loop {
            let action = spec.decode_action(policy.action(spec.encode_state(&obs)), courses);
            let step = env.step(&action)?;
            allowed += step.info.allowed_per_course.iter().map(|&a| u64::from(a)).sum::<u64>();
            infected += step.info.infected_per_course.iter().map(|&i| u64::from(i)).sum::<u64>();
            reward += step.reward;
            weeks += 1;
            obs = step.observation;
            if step.terminated {
                break;
            }
        }
    }
    let weeks = weeks as f64;
    Ok(EvaluationSummary {
        alpha_r: env.alpha_r(),
        episodes,
        mean_allowed: allowed as f64 / weeks,
        mean_infected: infected as f64 / weeks,
        mean_reward: reward as f64 / weeks,
    })
}
