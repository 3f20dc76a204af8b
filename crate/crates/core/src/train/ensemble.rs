use std::fs;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::trainer::{train, TrainConfig, TrainRun};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::net::{Model, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: String,
    pub init_seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    /// Successful runs, ascending by final validation error.
    pub runs: Vec<TrainRun>,
    pub selected: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<RunFailure>,
}

impl EnsembleResult {
    pub fn selected_run(&self) -> Option<&TrainRun> {
        self.runs.iter().find(|r| r.run_id == self.selected)
    }
}

/// Index of the run with the lowest final validation error; the earliest
/// run wins ties.
pub fn select_run(runs: &[TrainRun]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if best.is_none_or(|b| r.final_val_error < runs[b].final_val_error) {
            best = Some(i);
        }
    }
    best
}

/// Trains one model per seed (run ids `R1`, `R2`, ...), each initialized and
/// shuffled with its own seed. A failed run is recorded and the remaining
/// seeds still train. Returns the result and the selected model.
///
/// With `template.out_dir` set, each run writes to `<out_dir>/<run_id>/` and
/// the result is saved as `<out_dir>/ensemble.json`.
pub fn train_ensemble(
    spec: &ModelSpec,
    train_set: &[Sample],
    val_set: &[Sample],
    seeds: &[u64],
    template: &TrainConfig,
) -> Result<(EnsembleResult, Model)> {
    if seeds.is_empty() {
        return Err(Error::invalid("an ensemble needs at least one seed"));
    }
    let mut runs: Vec<TrainRun> = Vec::new();
    let mut failures = Vec::new();
    let mut best: Option<(f64, Model)> = None;
    for (i, &seed) in seeds.iter().enumerate() {
        let run_id = format!("R{}", i + 1);
        let cfg = TrainConfig {
            run_id: run_id.clone(),
            seed,
            out_dir: template.out_dir.as_ref().map(|d| d.join(&run_id)),
            ..template.clone()
        };
        let outcome = Model::build(spec.clone(), seed).and_then(|mut model| {
            let run = train(&mut model, train_set, val_set, &cfg)?;
            Ok((run, model))
        });
        match outcome {
            Ok((run, model)) => {
                info!("{run_id} (seed {seed}): final validation error {:.6}", run.final_val_error);
                if best.as_ref().is_none_or(|(e, _)| run.final_val_error < *e) {
                    best = Some((run.final_val_error, model));
                }
                runs.push(run);
            }
            Err(e) => {
                warn!("{run_id} (seed {seed}) failed: {e}");
                failures.push(RunFailure {
                    run_id,
                    init_seed: seed,
                    error: e.to_string(),
                });
            }
        }
    }
    let chosen = select_run(&runs).ok_or_else(|| {
        Error::invalid(format!(
            "every ensemble run failed: {}",
            failures.iter().map(|f| format!("{}: {}", f.run_id, f.error)).collect::<Vec<_>>().join("; ")
        ))
    })?;
    let selected = runs[chosen].run_id.clone();
    // Stable sort keeps run order among equal errors.
    runs.sort_by(|a, b| a.final_val_error.total_cmp(&b.final_val_error));
    let result = EnsembleResult {
        runs,
        selected,
        failures,
    };
    if let Some(dir) = &template.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("ensemble.json"), serde_json::to_vec_pretty(&result)?)?;
    }
    let (_, model) = best.expect("a successful run exists");
    Ok((result, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(id: &str, ve: f64) -> TrainRun {
        TrainRun {
            run_id: id.into(),
            init_seed: 0,
            epochs: 0,
            batch_size: 1,
            train_curve: vec![],
            val_curve: vec![],
            final_val_error: ve,
            checkpoint_path: None,
        }
    }

    #[test]
    fn argmin_with_first_wins_ties() {
        assert_eq!(select_run(&[]), None);
        assert_eq!(select_run(&[run("R1", 0.3)]), Some(0));
        let runs = [run("R1", 0.5), run("R2", 0.2), run("R3", 0.2), run("R4", 0.9)];
        assert_eq!(select_run(&runs), Some(1));
    }

    #[test]
    fn selection_is_invariant_under_rescaling() {
        let runs: Vec<TrainRun> = [0.0051, 0.0037, 0.0049, 0.0062]
            .iter()
            .enumerate()
            .map(|(i, &v)| run(&format!("R{}", i + 1), v))
            .collect();
        let scaled: Vec<TrainRun> = runs
            .iter()
            .map(|r| run(&r.run_id, r.final_val_error * 1234.5))
            .collect();
        assert_eq!(select_run(&runs), select_run(&scaled));
    }

    #[test]
    fn failed_runs_are_reported_and_others_continue() {
        use crate::dataset::{build_sample, generate_hidden_mask, synth_corpus, HiddenRegionPolicy};
        let corpus = synth_corpus(3, (16, 16), 9).unwrap();
        let policy = HiddenRegionPolicy::default();
        let data: Vec<Sample> = corpus
            .iter()
            .map(|c| build_sample(c, &generate_hidden_mask(c, &policy).unwrap()).unwrap())
            .collect();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let spec = ModelSpec::completion(0.125);
        let (result, _) = train_ensemble(&spec, &data[..2], &data[2..], &[1, 2], &cfg).unwrap();
        assert_eq!(result.runs.len(), 2);
        let min = result.runs.iter().map(|r| r.final_val_error).fold(f64::INFINITY, f64::min);
        assert_eq!(result.selected_run().unwrap().final_val_error, min);
        assert!(result.runs.windows(2).all(|w| w[0].final_val_error <= w[1].final_val_error));

        // Validation data of the wrong size makes every run fail.
        let odd = synth_corpus(1, (10, 10), 9).unwrap();
        let bad = vec![build_sample(&odd[0], &generate_hidden_mask(&odd[0], &policy).unwrap()).unwrap()];
        let err = train_ensemble(&spec, &data[..2], &bad, &[1, 2], &cfg).unwrap_err();
        assert!(err.to_string().contains("R1") && err.to_string().contains("R2"), "{err}");
    }
}
