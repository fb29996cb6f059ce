//! Monte Carlo campaigns over independent trials.

use rayon::prelude::*;

use crate::dynamics::trial_seed;
use crate::error::Error;

use super::scenario::Scenario;
use super::trial::{run_trial, Outcome, TrialRecord};

pub type TrialResult = Result<TrialRecord, Error>;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub n_trials: usize,
    pub n_safe: usize,
    pub n_breached: usize,
    /// Trials aborted by an error (degenerate gradient, bad scan, ...).
    pub n_errors: usize,
    pub min_margin_over_all: f64,
    pub b_max: f64,
    pub mean_chatter: f64,
    pub max_generator_excess: f64,
    pub seeds: Vec<u64>,
}

impl CampaignSummary {
    pub fn from_results(results: &[TrialResult], master_seed: u64) -> Self {
        let records: Vec<&TrialRecord> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let n_safe = records.iter().filter(|r| r.is_safe()).count();
        let n_breached = records
            .iter()
            .filter(|r| matches!(r.outcome, Outcome::Breached { .. }))
            .count();
        let mean_chatter = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.chatter).sum::<f64>() / records.len() as f64
        };
        Self {
            n_trials: results.len(),
            n_safe,
            n_breached,
            n_errors: results.len() - records.len(),
            min_margin_over_all: records
                .iter()
                .map(|r| r.min_margin())
                .fold(f64::INFINITY, f64::min),
            b_max: records
                .iter()
                .map(|r| r.b_max())
                .fold(f64::NEG_INFINITY, f64::max),
            mean_chatter,
            max_generator_excess: records
                .iter()
                .map(|r| r.max_generator_excess)
                .fold(f64::NEG_INFINITY, f64::max),
            seeds: (0..results.len() as u64)
                .map(|i| trial_seed(master_seed, i))
                .collect(),
        }
    }

    pub fn breach_fraction(&self) -> f64 {
        self.n_breached as f64 / self.n_trials as f64
    }
}

#[derive(Debug)]
pub struct Campaign {
    /// Indexed by trial.
    pub results: Vec<TrialResult>,
    pub summary: CampaignSummary,
}

/// Runs `scenario.trials` trials in parallel. Results are collected in trial
/// order, so the campaign depends only on the scenario and its seed.
pub fn run_campaign(scenario: &Scenario) -> Campaign {
    let results: Vec<TrialResult> = (0..scenario.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(scenario, i))
        .collect();
    let summary = CampaignSummary::from_results(&results, scenario.sde.seed);
    Campaign { results, summary }
}
