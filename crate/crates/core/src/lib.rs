//! Classroom epidemic simulation and optimistic tabular Q-learning for
//! weekly occupancy decisions.
//!
//! The crate is layered bottom-up:
//!
//! - [`epidemic`]: the algebraic SI estimator and its parameter sweep
//! - [`campus`]: campus model, weekly state, community risk, reward
//! - [`env`]: discretized reset/step environment
//! - [`agent`]: Q-learning, policy extraction, greedy evaluation
//! - [`analytics`]: policy matrices, histograms, learning curves, trade-offs
//! - [`config`] and [`orchestrator`]: configuration files and run directories

pub mod agent;
pub mod analytics;
pub mod campus;
pub mod config;
pub mod env;
pub mod epidemic;
pub mod error;
pub mod orchestrator;

pub use agent::{
    decay_schedules, evaluate, extract_policy, q_init, q_update, select_action, train,
    train_with_observer, EpisodeRecord, EvaluationSummary, Hyperparameters, Policy, QTable,
    TrainingLog,
};
pub use analytics::{
    build_policy_matrix, collect_tradeoff, moving_average, visitation_histogram, PolicyMatrix,
    TradeoffPoint,
};
pub use campus::{
    apply_action, compute_reward, initial_infected, is_episode_done, sample_community_risk,
    CampusModel, CampusState, RiskProcess,
};
pub use config::{load_config, parse_config, RiskMode, RunConfig, SweepSpec};
pub use env::{
    action_to_allowed, discretize_value, ActionIndex, CampusEnv, DiscretizationSpec, Observation,
    StepInfo, StepResult, TabularEnv,
};
pub use epidemic::{
    project_new_infections, simulate_dynamics_grid, DynamicsRecord, InfectionInput, SIParams,
};
pub use error::{Error, Result};
pub use orchestrator::{run_evaluation, run_sweep, run_training, RunMetadata, SweepReport};
