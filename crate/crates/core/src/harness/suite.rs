use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_trial_in, Metrics, Scenario, TrialResult, World};
use crate::error::{Error, Result};

/// Scenarios crossed with a trial count; trial `k` runs with `seed + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub n_trials: usize,
    pub scenarios: Vec<SuiteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub label: String,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub completed: bool,
    pub failure_reason: Option<String>,
    pub saturated_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub label: String,
    pub controller: String,
    pub viscosity_cp: f64,
    pub peak_flow_mps: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub p95_mean: f64,
    pub p95_std: f64,
    pub max_mean: f64,
    pub max_std: f64,
    pub all_completed: bool,
    /// `completed` or `failed to complete trajectory`.
    pub status: String,
    pub trials: Vec<TrialSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub numerator: String,
    pub denominator: String,
    pub rmse_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: Option<String>,
    pub n_trials: usize,
    pub rows: Vec<SuiteRow>,
    /// SMC without observer against SMC with observer under equal conditions.
    pub ablation: Vec<RatioEntry>,
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("suite needs at least one scenario".into()));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("suite needs at least one trial".into()));
        }
        for e in &self.scenarios {
            e.scenario.validate()?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: SuiteConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            for e in &mut cfg.scenarios {
                e.scenario.resolve_paths(dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parallel trial cap from `MILLIBOT_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("MILLIBOT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Run every trial (in parallel, capped by `MILLIBOT_THREADS`) and merge in
/// scenario order, then trial order. Worlds are built once per distinct setup.
pub fn run_suite(cfg: &SuiteConfig) -> Result<(SuiteReport, Vec<Vec<TrialResult>>)> {
    cfg.validate()?;
    let mut worlds: HashMap<String, Arc<World>> = HashMap::new();
    let mut entry_worlds = Vec::with_capacity(cfg.scenarios.len());
    for e in &cfg.scenarios {
        let key = e.scenario.world_key();
        let world = match worlds.get(&key) {
            Some(w) => w.clone(),
            None => {
                let w = Arc::new(World::prepare(&e.scenario)?);
                worlds.insert(key, w.clone());
                w
            }
        };
        entry_worlds.push(world);
    }

    let jobs: Vec<(usize, Scenario)> = cfg
        .scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, e)| {
            (0..cfg.n_trials).map(move |k| {
                let mut s = e.scenario.clone();
                s.seed = e.scenario.seed.wrapping_add(k as u64);
                (i, s)
            })
        })
        .collect();
    let run = || -> Vec<Result<TrialResult>> {
        jobs.par_iter()
            .map(|(i, s)| run_trial_in(s, &entry_worlds[*i]))
            .collect()
    };
    let results = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let results: Vec<TrialResult> = results.into_iter().collect::<Result<_>>()?;

    let mut grouped: Vec<Vec<TrialResult>> = Vec::with_capacity(cfg.scenarios.len());
    let mut it = results.into_iter();
    for _ in &cfg.scenarios {
        grouped.push(it.by_ref().take(cfg.n_trials).collect());
    }

    let rows: Vec<SuiteRow> = cfg
        .scenarios
        .iter()
        .zip(&grouped)
        .map(|(e, trials)| summarize(e, trials))
        .collect();
    let ablation = ablation_ratios(&cfg.scenarios, &rows);
    Ok((
        SuiteReport {
            name: cfg.name.clone(),
            n_trials: cfg.n_trials,
            rows,
            ablation,
        },
        grouped,
    ))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn summarize(entry: &SuiteEntry, trials: &[TrialResult]) -> SuiteRow {
    let pick = |f: fn(&Metrics) -> f64| mean_std(&trials.iter().map(|t| f(&t.metrics)).collect::<Vec<_>>());
    let (rmse_mean, rmse_std) = pick(|m| m.rmse_mm);
    let (p95_mean, p95_std) = pick(|m| m.p95_mm);
    let (max_mean, max_std) = pick(|m| m.max_mm);
    let all_completed = trials.iter().all(|t| t.completed);
    let base_seed = entry.scenario.seed;
    SuiteRow {
        label: entry.label.clone(),
        controller: entry.scenario.controller.label().to_string(),
        viscosity_cp: entry.scenario.viscosity,
        peak_flow_mps: entry.scenario.peak_flow,
        rmse_mean,
        rmse_std,
        p95_mean,
        p95_std,
        max_mean,
        max_std,
        all_completed,
        status: if all_completed {
            "completed".into()
        } else {
            "failed to complete trajectory".into()
        },
        trials: trials
            .iter()
            .enumerate()
            .map(|(k, t)| TrialSummary {
                seed: base_seed.wrapping_add(k as u64),
                metrics: t.metrics,
                completed: t.completed,
                failure_reason: t.failure_reason.map(|r| r.to_string()),
                saturated_fraction: t.saturated_fraction,
            })
            .collect(),
    }
}

fn ablation_ratios(entries: &[SuiteEntry], rows: &[SuiteRow]) -> Vec<RatioEntry> {
    let same_conditions = |a: &Scenario, b: &Scenario| {
        a.viscosity == b.viscosity && a.peak_flow == b.peak_flow && a.world_key() == b.world_key()
    };
    let mut out = Vec::new();
    for (i, num) in rows.iter().enumerate().filter(|(_, r)| r.controller == "SMC_NO_DOB") {
        for (j, den) in rows.iter().enumerate().filter(|(_, r)| r.controller == "SMC_DOB") {
            if same_conditions(&entries[i].scenario, &entries[j].scenario) {
                out.push(RatioEntry {
                    numerator: num.label.clone(),
                    denominator: den.label.clone(),
                    rmse_ratio: num.rmse_mean / den.rmse_mean,
                });
            }
        }
    }
    out
}

impl SuiteReport {
    /// Plain-text table in the layout of a tracking comparison table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<28} {:<11} {:>6} {:>6}  {:>15} {:>15} {:>15}\n",
            "label", "controller", "cP", "m/s", "RMSE (mm)", "P95 (mm)", "Max (mm)"
        );
        for r in &self.rows {
            let cell = |m: f64, sd: f64| format!("{m:.3} +- {sd:.3}");
            s.push_str(&format!(
                "{:<28} {:<11} {:>6.1} {:>6.3}  {:>15} {:>15} {:>15}",
                r.label,
                r.controller,
                r.viscosity_cp,
                r.peak_flow_mps,
                cell(r.rmse_mean, r.rmse_std),
                cell(r.p95_mean, r.p95_std),
                cell(r.max_mean, r.max_std),
            ));
            if !r.all_completed {
                s.push_str("  -- failed to complete trajectory");
            }
            s.push('\n');
        }
        for a in &self.ablation {
            s.push_str(&format!(
                "RMSE ratio {} / {} = {:.2}\n",
                a.numerator, a.denominator, a.rmse_ratio
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn empty_suite_rejected() {
        let cfg = SuiteConfig {
            name: None,
            n_trials: 3,
            scenarios: vec![],
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
