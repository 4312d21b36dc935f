//! End-to-end runs with the reference backend, baselines and the ablation
//! matrix. The CLI composes the same steps through artifact files.

use std::time::Instant;

use crate::backend::{ReferenceModel, Weights};
use crate::corpus::Dataset;
use crate::eval::{baseline_mfu, baseline_mru, EvalReport, Metrics};
use crate::pipeline::{
    build_stage1_pairs, build_stage2_pairs, build_test_cases, run_predictions, AblationFlags, Backends, PipelineError,
    PipelineOptions, RankedPrediction,
};
use crate::templater::Stage;
use crate::typeprompt::TypeTable;
use crate::Predictor;

pub const TWO_STAGE_ROW: &str = "two-stage";

/// Category streams of every user's training split across `datasets`.
pub fn train_streams(datasets: &[Dataset]) -> Vec<Vec<String>> {
    datasets.iter().flat_map(Dataset::train_category_streams).collect()
}

pub fn build_type_table(datasets: &[Dataset], options: &PipelineOptions) -> TypeTable {
    TypeTable::build(&train_streams(datasets), options.sequence_len, options.type_top_k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModels {
    pub stage1: Option<ReferenceModel>,
    pub stage2: ReferenceModel,
}

/// Fits stage 1 on all datasets (categories are shared by name) and
/// stage 2 on `target` alone (app ids are dataset-local).
pub fn fit_reference(
    datasets: &[Dataset],
    target: &Dataset,
    table: &TypeTable,
    options: &PipelineOptions,
    weights: Weights,
    seed: u64,
) -> Result<ReferenceModels, PipelineError> {
    let stage1 = if options.flags.use_stage1 {
        let pairs = build_stage1_pairs(datasets, table, options)?;
        let (model, report) = ReferenceModel::fit(&pairs, Stage::One, weights, options.templates, seed)?;
        log::info!("stage 1: {} pairs, {} targets", report.pairs, report.targets);
        Some(model)
    } else {
        None
    };
    let pairs = build_stage2_pairs(target, table, options)?;
    let (stage2, report) = ReferenceModel::fit(&pairs, Stage::Two, weights, options.templates, seed)?;
    log::info!(
        "stage 2 ({}): {} pairs, {} targets",
        target.id(),
        report.pairs,
        report.targets
    );
    Ok(ReferenceModels { stage1, stage2 })
}

pub fn report_from_predictions(
    dataset: &str,
    model: &str,
    backend: &str,
    flags: Option<AblationFlags>,
    k: usize,
    predictions: &[RankedPrediction],
) -> Result<EvalReport, PipelineError> {
    let ranked: Vec<Vec<crate::AppId>> = predictions.iter().map(RankedPrediction::app_ids).collect();
    let truths: Vec<crate::AppId> = predictions.iter().map(|p| p.truth).collect();
    Ok(EvalReport {
        dataset: dataset.to_string(),
        model: model.to_string(),
        backend: backend.to_string(),
        flags,
        k,
        cases: predictions.len(),
        metrics: Metrics::compute(&ranked, &truths)?,
        elapsed_secs: None,
    })
}

/// Predicts every test case of `dataset` and scores the result.
pub fn evaluate(
    dataset: &Dataset,
    backends: &Backends<'_>,
    options: &PipelineOptions,
    workers: usize,
    model: &str,
) -> Result<(Vec<RankedPrediction>, EvalReport), PipelineError> {
    let start = Instant::now();
    let cases = build_test_cases(dataset, options);
    let predictions = run_predictions(&cases, backends, options, workers)?;
    let backend = backend_label(backends, options);
    let mut report = report_from_predictions(
        dataset.id(),
        model,
        &backend,
        Some(options.flags),
        options.k,
        &predictions,
    )?;
    report.elapsed_secs = Some(start.elapsed().as_secs_f64());
    log::info!(
        "{model} on {}: {} cases in {:.2}s",
        dataset.id(),
        report.cases,
        start.elapsed().as_secs_f64()
    );
    Ok((predictions, report))
}

fn backend_label(backends: &Backends<'_>, options: &PipelineOptions) -> String {
    match backends.stage1 {
        Some(s1) if options.flags.use_stage1 => format!("{} + {}", s1.name(), backends.stage2.name()),
        _ => backends.stage2.name().to_string(),
    }
}

/// MFU and MRU rows for `dataset`.
pub fn baseline_reports(dataset: &Dataset, k: usize) -> Result<Vec<EvalReport>, PipelineError> {
    let mut rows = Vec::new();
    for (name, run) in [("MFU", baseline_mfu(dataset, k)), ("MRU", baseline_mru(dataset, k))] {
        rows.push(EvalReport {
            dataset: dataset.id().to_string(),
            model: name.to_string(),
            backend: "baseline".into(),
            flags: None,
            k,
            cases: run.truths.len(),
            metrics: Metrics::compute(&run.predictions, &run.truths)?,
            elapsed_secs: None,
        });
    }
    Ok(rows)
}

/// Fits and evaluates the reference pipeline once and adds both baselines.
pub fn run_reference(
    datasets: &[Dataset],
    target: &Dataset,
    options: &PipelineOptions,
    weights: Weights,
    seed: u64,
    workers: usize,
) -> Result<(Vec<RankedPrediction>, Vec<EvalReport>), PipelineError> {
    options.validate()?;
    let table = build_type_table(datasets, options);
    let models = fit_reference(datasets, target, &table, options, weights, seed)?;
    let backends = Backends {
        stage1: models.stage1.as_ref().map(|m| m as &dyn Predictor),
        stage2: &models.stage2,
        table: &table,
    };
    let (predictions, report) = evaluate(target, &backends, options, workers, TWO_STAGE_ROW)?;
    let mut reports = vec![report];
    reports.extend(baseline_reports(target, options.k)?);
    Ok((predictions, reports))
}

/// The full model plus one row per disabled component, each refitted from
/// scratch with the reference backend.
pub fn run_ablation(
    datasets: &[Dataset],
    target: &Dataset,
    options: &PipelineOptions,
    weights: Weights,
    seed: u64,
    workers: usize,
) -> Result<Vec<EvalReport>, PipelineError> {
    let table = build_type_table(datasets, options);
    let mut reports = Vec::new();
    for flags in AblationFlags::ablation_rows() {
        let row_options = PipelineOptions { flags, ..*options };
        row_options.validate()?;
        let models = fit_reference(datasets, target, &table, &row_options, weights, seed)?;
        let backends = Backends {
            stage1: models.stage1.as_ref().map(|m| m as &dyn Predictor),
            stage2: &models.stage2,
            table: &table,
        };
        let (_, report) = evaluate(target, &backends, &row_options, workers, &flags.label())?;
        reports.push(report);
    }
    Ok(reports)
}
