//! Next-response prediction and its metrics.
//!
//! For every held-out trajectory the belief is folded step by step; at
//! each step the probability of a correct answer is recorded *before*
//! the actual outcome updates the belief. Records are scored with
//! accuracy, ranking AUC, MAE and RMSE, and the whole procedure runs
//! under student-level cross-validation against the single-pattern
//! baseline.

use log::warn;
use rayon::prelude::*;

use crate::belief::{init_belief, predict_response, update_belief};
use crate::domain::{Dataset, HPomdpModel};
use crate::error::{Error, Result};
use crate::learning::{em_fit, fit_baseline_pomdp, EmConfig};
use crate::rng::fnv1a;

/// One scored prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub trajectory: String,
    /// 1-based step index within the trajectory.
    pub step: usize,
    /// Predicted probability of a correct answer.
    pub predicted: f64,
    /// Actual outcome: 1 correct, 0 incorrect.
    pub actual: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RmseForm {
    /// Root of the mean squared error.
    #[default]
    Standard,
    /// Root of the summed squared error divided by the count.
    RootSumOverCount,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Include the first step, predicted from the population prior.
    pub include_first_step: bool,
    pub rmse_form: RmseForm,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { include_first_step: true, rmse_form: RmseForm::default() }
    }
}

/// Prediction quality over a record set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub acc: f64,
    /// Undefined when the records are single-class.
    pub auc: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
}

/// Rolls the belief over each trajectory and records one prediction per
/// step. Steps whose question the model does not know are skipped with a
/// warning; real logs contain strays.
pub fn next_step_predictions(
    model: &HPomdpModel,
    dataset: &Dataset,
    options: EvalOptions,
) -> Vec<PredictionRecord> {
    let mut records = Vec::new();
    for trajectory in &dataset.trajectories {
        let mut belief = init_belief(model);
        for (t, step) in trajectory.steps.iter().enumerate() {
            let id = dataset.catalog.id_of(step.question);
            let action = match model.catalog.index_of(id) {
                Some(action) => action,
                None => {
                    warn!(
                        "skipping step {} of student {:?}: question {id:?} unknown to the model",
                        t + 1,
                        trajectory.student
                    );
                    continue;
                }
            };
            if t > 0 || options.include_first_step {
                records.push(PredictionRecord {
                    trajectory: trajectory.student.clone(),
                    step: t + 1,
                    predicted: predict_response(model, &belief, action),
                    actual: step.observation.bit(),
                });
            }
            match update_belief(model, &belief, action, step.observation) {
                Ok(next) => belief = next,
                Err(err) => {
                    warn!(
                        "stopping belief folding for student {:?} at step {}: {err}",
                        trajectory.student,
                        t + 1
                    );
                    break;
                }
            }
        }
    }
    records
}

/// Ranking AUC by average ranks: the probability that a random positive
/// outranks a random negative, counting ties as half. Equal to the
/// exhaustive pairwise count.
fn rank_auc(records: &[&PredictionRecord]) -> Option<f64> {
    let positives = records.iter().filter(|r| r.actual == 1).count();
    let negatives = records.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a].predicted.partial_cmp(&records[b].predicted).expect("finite predictions")
    });
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len()
            && records[order[j + 1]].predicted == records[order[i]].predicted
        {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank.
        let average_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if records[idx].actual == 1 {
                positive_rank_sum += average_rank;
            }
        }
        i = j + 1;
    }
    let m = positives as f64;
    let n = negatives as f64;
    Some((positive_rank_sum - m * (m + 1.0) / 2.0) / (m * n))
}

/// Scores a non-empty record set.
///
/// Accuracy binarizes at 0.5 with ties predicted correct; AUC is the
/// rank statistic above and is reported as undefined for single-class
/// record sets.
pub fn compute_metrics(records: &[PredictionRecord], options: EvalOptions) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(Error::contract("cannot compute metrics over zero records"));
    }
    let n = records.len() as f64;
    let mut hits = 0usize;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut positives = 0usize;
    for r in records {
        let predicted_class = u8::from(r.predicted >= 0.5);
        if predicted_class == r.actual {
            hits += 1;
        }
        let diff = r.actual as f64 - r.predicted;
        abs_sum += diff.abs();
        sq_sum += diff * diff;
        positives += r.actual as usize;
    }
    let refs: Vec<&PredictionRecord> = records.iter().collect();
    Ok(MetricReport {
        acc: hits as f64 / n,
        auc: rank_auc(&refs),
        mae: abs_sum / n,
        rmse: match options.rmse_form {
            RmseForm::Standard => (sq_sum / n).sqrt(),
            RmseForm::RootSumOverCount => sq_sum.sqrt() / n,
        },
        samples: records.len(),
        positives,
        negatives: records.len() - positives,
    })
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CvFold {
    pub fold: usize,
    pub train_students: usize,
    pub test_students: usize,
    pub mixture: MetricReport,
    pub baseline: Option<MetricReport>,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: Vec<CvFold>,
    pub mean_mixture: MetricReport,
    pub mean_baseline: Option<MetricReport>,
}

/// Deterministic, position-independent fold assignment: students are
/// ordered by a stable hash of (seed, student id) and dealt round-robin,
/// so `folds == len` degenerates to leave-one-out exactly.
pub fn fold_assignment(dataset: &Dataset, folds: usize, seed: u64) -> Vec<usize> {
    let mut keyed: Vec<(u64, &str, usize)> = dataset
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut bytes = seed.to_le_bytes().to_vec();
            bytes.extend_from_slice(t.student.as_bytes());
            (fnv1a(&bytes), t.student.as_str(), i)
        })
        .collect();
    keyed.sort();
    let mut assignment = vec![0usize; dataset.len()];
    for (position, (_, _, index)) in keyed.into_iter().enumerate() {
        assignment[index] = position % folds;
    }
    assignment
}

fn mean_report(reports: &[&MetricReport]) -> MetricReport {
    let n = reports.len() as f64;
    let defined: Vec<f64> = reports.iter().filter_map(|r| r.auc).collect();
    MetricReport {
        acc: reports.iter().map(|r| r.acc).sum::<f64>() / n,
        auc: if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        },
        mae: reports.iter().map(|r| r.mae).sum::<f64>() / n,
        rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / n,
        samples: reports.iter().map(|r| r.samples).sum(),
        positives: reports.iter().map(|r| r.positives).sum(),
        negatives: reports.iter().map(|r| r.negatives).sum(),
    }
}

/// Student-level k-fold cross-validation of the mixture fit, optionally
/// paired with the single-pattern baseline on identical folds.
///
/// Folds are derived from `config.seed`; a student's trajectory is never
/// split between train and test.
pub fn cross_validate(
    dataset: &Dataset,
    folds: usize,
    config: &EmConfig,
    with_baseline: bool,
    options: EvalOptions,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::contract("cross-validation needs at least 2 folds"));
    }
    if dataset.len() < folds {
        return Err(Error::contract(format!(
            "dataset has {} trajectories but {folds} folds were requested",
            dataset.len()
        )));
    }
    dataset.check()?;
    let assignment = fold_assignment(dataset, folds, config.seed);

    let fold_reports: Vec<CvFold> = (0..folds)
        .into_par_iter()
        .map(|fold| -> Result<CvFold> {
            let train_idx: Vec<usize> =
                (0..dataset.len()).filter(|&i| assignment[i] != fold).collect();
            let test_idx: Vec<usize> =
                (0..dataset.len()).filter(|&i| assignment[i] == fold).collect();
            let train = dataset.subset(&train_idx);
            let test = dataset.subset(&test_idx);

            let mixture_fit = em_fit(&train, config)?;
            let mixture_records = next_step_predictions(&mixture_fit.model, &test, options);
            let mixture = compute_metrics(&mixture_records, options)?;

            let baseline = if with_baseline {
                let baseline_fit = fit_baseline_pomdp(&train, config)?;
                let records = next_step_predictions(&baseline_fit.model, &test, options);
                Some(compute_metrics(&records, options)?)
            } else {
                None
            };

            Ok(CvFold {
                fold,
                train_students: train_idx.len(),
                test_students: test_idx.len(),
                mixture,
                baseline,
            })
        })
        .collect::<Result<_>>()?;

    let mean_mixture = mean_report(&fold_reports.iter().map(|f| &f.mixture).collect::<Vec<_>>());
    let baseline_reports: Vec<&MetricReport> =
        fold_reports.iter().filter_map(|f| f.baseline.as_ref()).collect();
    let mean_baseline =
        if baseline_reports.is_empty() { None } else { Some(mean_report(&baseline_reports)) };

    Ok(CvReport { folds: fold_reports, mean_mixture, mean_baseline })
}
