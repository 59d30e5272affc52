//! Shared fixtures for the criterion benchmarks.

use safecampus_core::{CampusEnv, CampusModel, DiscretizationSpec, Hyperparameters, RiskProcess, SIParams};

/// Single 100-student course, fifteen weeks, uniform weekly risk.
pub fn default_env(alpha_r: f64) -> CampusEnv {
    CampusEnv::new(
        CampusModel::default(),
        SIParams::default(),
        RiskProcess::IidUniform,
        DiscretizationSpec::default(),
        alpha_r,
    )
    .expect("default campus is valid")
}

pub fn hyperparameters(alpha_r: f64, max_episodes: usize) -> Hyperparameters {
    Hyperparameters {
        alpha_r,
        max_episodes,
        ..Hyperparameters::default()
    }
}
