//! Approximate SI infection estimator for a single isolated classroom.
//!
//! Next-week infections are an algebraic function of the current infected
//! count, the occupancy, and the community risk:
//!
//! ```text
//! new = min(round(alpha_m * infected * allowed + beta * risk * allowed^2), allowed)
//! ```
//!
//! Rounding is to the nearest integer with ties away from zero. There is no
//! recovery or immunity compartment.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transmission constants of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SIParams {
    /// In-class transmission coefficient per (infected x occupant).
    pub alpha_m: f64,
    /// Community-risk scaling per occupant squared.
    pub beta: f64,
}

impl Default for SIParams {
    fn default() -> Self {
        SIParams {
            alpha_m: 0.005,
            beta: 0.01,
        }
    }
}

impl SIParams {
    pub fn new(alpha_m: f64, beta: f64) -> Result<Self> {
        let params = SIParams { alpha_m, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("alpha_m", self.alpha_m)?;
        check_non_negative("beta", self.beta)
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::invalid(name, format!("{value} is not finite")));
    }
    if value < 0.0 {
        return Err(Error::invalid(name, format!("{value} is negative")));
    }
    Ok(())
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(name, format!("{value} is outside [0, 1]")));
    }
    Ok(())
}

/// One classroom's inputs for a single week.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfectionInput {
    pub current_infected: u32,
    pub allowed: u32,
    pub community_risk: f64,
}

impl InfectionInput {
    pub fn new(current_infected: u32, allowed: u32, community_risk: f64) -> Result<Self> {
        check_probability("community_risk", community_risk)?;
        Ok(InfectionInput {
            current_infected,
            allowed,
            community_risk,
        })
    }
}

/// Estimated number of infected students next week. Always in `0..=allowed`.
pub fn project_new_infections(params: &SIParams, input: InfectionInput) -> Result<u32> {
    params.validate()?;
    check_probability("community_risk", input.community_risk)?;

    let infected = f64::from(input.current_infected);
    let allowed = f64::from(input.allowed);
    let raw = params.alpha_m * infected * allowed
        + params.beta * input.community_risk * allowed.powi(2);
    // f64::round is half-away-from-zero; raw is non-negative here.
    let rounded = raw.round();
    if rounded >= allowed {
        Ok(input.allowed)
    } else {
        Ok(rounded as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub current_infected: u32,
    pub allowed: u32,
    pub community_risk: f64,
    pub new_infected: u32,
}

/// Sweeps the estimator over every (allowed, risk) pair.
///
/// Each pair forms a series of `initial_infected.len()` steps. The series is
/// seeded with `initial_infected[0]` and every later step takes the previous
/// step's output as its infected input, so the series traces the estimator's
/// trajectory toward saturation. Records are ordered allowed-major, then
/// risk, then step.
pub fn simulate_dynamics_grid(
    params: &SIParams,
    initial_infected: &[u32],
    allowed_list: &[u32],
    risk_list: &[f64],
) -> Result<Vec<DynamicsRecord>> {
    params.validate()?;
    for &risk in risk_list {
        check_probability("community_risk", risk)?;
    }
    let Some(&seed) = initial_infected.first() else {
        return Ok(Vec::new());
    };

    let mut records =
        Vec::with_capacity(initial_infected.len() * allowed_list.len() * risk_list.len());
    for &allowed in allowed_list {
        for &risk in risk_list {
            let mut current = seed;
            for _ in initial_infected {
                let new_infected = project_new_infections(
                    params,
                    InfectionInput {
                        current_infected: current,
                        allowed,
                        community_risk: risk,
                    },
                )?;
                records.push(DynamicsRecord {
                    current_infected: current,
                    allowed,
                    community_risk: risk,
                    new_infected,
                });
                current = new_infected;
            }
        }
    }
    Ok(records)
}

/// Writes records as `current_infected,allowed,community_risk,new_infected`.
pub fn write_dynamics_csv<W: Write>(records: &[DynamicsRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["current_infected", "allowed", "community_risk", "new_infected"])?;
    for r in records {
        out.write_record([
            r.current_infected.to_string(),
            r.allowed.to_string(),
            r.community_risk.to_string(),
            r.new_infected.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<dynamics csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn project(infected: u32, allowed: u32, risk: f64) -> u32 {
        project_new_infections(
            &SIParams::default(),
            InfectionInput::new(infected, allowed, risk).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_occupancy_means_zero_infections() {
        assert_eq!(project(5, 0, 0.9), 0);
    }

    #[test]
    fn saturates_at_occupancy() {
        // 25 + 100 = 125, clamped to 100
        assert_eq!(project(50, 100, 1.0), 100);
    }

    #[test]
    fn rounds_half_away_from_zero() {
        // 2.5 + 5.0 = 7.5
        assert_eq!(project(10, 50, 0.2), 8);
    }

    #[test]
    fn rejects_malformed_parameters() {
        let input = InfectionInput::new(1, 10, 0.5).unwrap();
        for (a, b) in [(-0.1, 0.0), (0.0, -1.0), (f64::NAN, 0.0), (0.0, f64::INFINITY)] {
            let params = SIParams { alpha_m: a, beta: b };
            assert!(project_new_infections(&params, input).is_err());
        }
        assert!(InfectionInput::new(1, 10, 1.5).is_err());
        assert!(InfectionInput::new(1, 10, -0.1).is_err());
        let bad = InfectionInput {
            current_infected: 1,
            allowed: 10,
            community_risk: f64::NAN,
        };
        assert!(project_new_infections(&SIParams::default(), bad).is_err());
    }

    #[test]
    fn grid_cardinality_is_cartesian_product() {
        let records = simulate_dynamics_grid(
            &SIParams::default(),
            &[0, 10, 20],
            &[0, 50, 100],
            &[0.0, 0.25, 0.5, 0.75, 1.0],
        )
        .unwrap();
        assert_eq!(records.len(), 45);
    }

    #[test]
    fn grid_with_zero_occupancy_never_infects() {
        let records =
            simulate_dynamics_grid(&SIParams::default(), &[5, 50, 90], &[0], &[0.0, 0.5, 1.0])
                .unwrap();
        assert!(records.iter().all(|r| r.new_infected == 0));
    }

    #[test]
    fn grid_with_empty_list_is_empty() {
        let p = SIParams::default();
        assert!(simulate_dynamics_grid(&p, &[], &[10], &[0.5]).unwrap().is_empty());
        assert!(simulate_dynamics_grid(&p, &[1], &[], &[0.5]).unwrap().is_empty());
        assert!(simulate_dynamics_grid(&p, &[1], &[10], &[]).unwrap().is_empty());
    }

    #[test]
    fn grid_series_chain_outputs_into_inputs() {
        let records =
            simulate_dynamics_grid(&SIParams::default(), &[10, 0, 0, 0], &[50, 100], &[0.3, 0.9])
                .unwrap();
        for series in records.chunks(4) {
            assert_eq!(series[0].current_infected, 10);
            for pair in series.windows(2) {
                assert_eq!(pair[1].current_infected, pair[0].new_infected);
                assert_eq!(pair[1].allowed, pair[0].allowed);
                assert_eq!(pair[1].community_risk, pair[0].community_risk);
            }
        }
    }

    #[test]
    fn dynamics_csv_has_expected_header() {
        let records = simulate_dynamics_grid(&SIParams::default(), &[10], &[50], &[0.2]).unwrap();
        let mut buf = Vec::new();
        write_dynamics_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "current_infected,allowed,community_risk,new_infected\n10,50,0.2,8\n"
        );
    }

    proptest! {
        #[test]
        fn output_bounded_by_occupancy(
            infected in 0u32..=500,
            allowed in 0u32..=500,
            risk in 0.0f64..=1.0,
            alpha_m in 0.0f64..0.1,
            beta in 0.0f64..0.1,
        ) {
            let params = SIParams::new(alpha_m, beta).unwrap();
            let out = project_new_infections(
                &params,
                InfectionInput::new(infected, allowed, risk).unwrap(),
            ).unwrap();
            prop_assert!(out <= allowed);
        }

        #[test]
        fn monotone_in_infected_and_risk(
            infected in 0u32..200,
            allowed in 0u32..=200,
            risk in 0.0f64..0.99,
            bump in 1u32..20,
            risk_bump in 0.0f64..0.01,
        ) {
            let base = project(infected, allowed, risk);
            prop_assert!(project(infected + bump, allowed, risk) >= base);
            prop_assert!(project(infected, allowed, risk + risk_bump) >= base);
        }

        #[test]
        fn no_seed_no_risk_no_infection(allowed in 0u32..=1000) {
            prop_assert_eq!(project(0, allowed, 0.0), 0);
        }
    }
}
