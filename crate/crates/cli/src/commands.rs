//! Subcommand bodies. Each reads its upstream artifacts under the config
//! hash it expects and writes its own under `out/`.
//!
//! ```text
//! out/corpus/<id>/{train,validation,test,vocab,rejects}.jsonl
//! out/prompts/type_table.jsonl
//! out/prompts/stage1_pairs.tsv
//! out/prompts/<id>/stage2_pairs.tsv
//! out/models/stage1.jsonl
//! out/models/<id>/stage2.jsonl
//! out/predictions/<id>.jsonl
//! out/reports/{eval,ablation}.{jsonl,txt}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use maple_core::artifact::{self, ArtifactHeader, HashCheck};
use maple_core::backend::{BackendSpec, ReferenceModel, TrainingPair};
use maple_core::config::{ConfigError, RunConfig};
use maple_core::corpus::{load_corpus_dir, write_corpus_dir, Dataset, DatasetManifest};
use maple_core::eval::{render_table, EvalReport};
use maple_core::experiment::{baseline_reports, report_from_predictions, run_ablation, TWO_STAGE_ROW};
use maple_core::pipeline::{build_stage1_pairs, build_stage2_pairs, build_test_cases, run_predictions, Backends};
use maple_core::synthetic::{write_dataset, SyntheticSpec};
use maple_core::typeprompt::TypeTable;
use maple_core::{Predictor, RankedPrediction, Stage};
use serde::Serialize;

use crate::{Cli, Command};

const PREDICTIONS_ARTIFACT: &str = "predictions";
const REPORT_ARTIFACT: &str = "reports/eval";
const ABLATION_ARTIFACT: &str = "reports/ablation";
const STAGE1_PAIRS: &str = "prompts/stage1_pairs";
const STAGE2_PAIRS: &str = "prompts/stage2_pairs";

struct Layout {
    out: PathBuf,
}

impl Layout {
    fn corpus(&self, id: &str) -> PathBuf {
        self.out.join("corpus").join(id)
    }
    fn type_table(&self) -> PathBuf {
        self.out.join("prompts/type_table.jsonl")
    }
    fn stage1_pairs(&self) -> PathBuf {
        self.out.join("prompts/stage1_pairs.tsv")
    }
    fn stage2_pairs(&self, id: &str) -> PathBuf {
        self.out.join("prompts").join(id).join("stage2_pairs.tsv")
    }
    fn stage1_model(&self) -> PathBuf {
        self.out.join("models/stage1.jsonl")
    }
    fn stage2_model(&self, id: &str) -> PathBuf {
        self.out.join("models").join(id).join("stage2.jsonl")
    }
    fn predictions(&self, id: &str) -> PathBuf {
        self.out.join("predictions").join(format!("{id}.jsonl"))
    }
    fn reports(&self) -> PathBuf {
        self.out.join("reports")
    }
}

struct Ctx {
    config: RunConfig,
    layout: Layout,
    force: bool,
    stage: Option<Stage>,
    /// Every configured dataset with its corpus hash, in config order.
    manifests: Vec<(DatasetManifest, String)>,
    /// Ids the command acts on.
    selected: Vec<String>,
}

impl Ctx {
    fn check<'a>(&self, expected: &'a str) -> HashCheck<'a> {
        if self.force {
            HashCheck::Ignore
        } else {
            HashCheck::Require(expected)
        }
    }

    fn corpus_hashes(&self) -> Vec<String> {
        self.manifests.iter().map(|(_, h)| h.clone()).collect()
    }

    fn prompts_hash(&self) -> String {
        self.config.prompts_hash(&self.corpus_hashes())
    }

    fn model_hash(&self) -> String {
        self.config.model_hash(&self.prompts_hash())
    }

    fn predictions_hash(&self) -> String {
        self.config.predictions_hash(&self.model_hash())
    }

    fn wants(&self, stage: Stage) -> bool {
        self.stage.is_none_or(|s| s == stage)
    }

    fn load_corpus(&self, id: &str) -> Result<Dataset> {
        let (_, hash) = self
            .manifests
            .iter()
            .find(|(m, _)| m.dataset_id == id)
            .expect("selected ids come from the manifests");
        load_corpus_dir(&self.layout.corpus(id), self.check(hash)).with_context(|| format!("loading corpus {id}"))
    }

    fn load_all(&self) -> Result<Vec<Dataset>> {
        self.manifests
            .iter()
            .map(|(m, _)| self.load_corpus(&m.dataset_id))
            .collect()
    }
}

/// Applies command-line overrides on top of the file.
fn apply_overrides(cli: &Cli, config: &mut RunConfig) -> Result<(), ConfigError> {
    let invalid = ConfigError::Invalid;
    if let Some(k) = cli.k {
        config.predict.k = k;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(list) = &cli.ablate {
        config.ablation = config.ablation.disable(list).map_err(invalid)?;
    }
    if let Some(b) = &cli.backend {
        let spec: BackendSpec = b.parse().map_err(invalid)?;
        match cli.stage {
            Some(1) => config.backend.stage1 = spec,
            Some(_) => config.backend.stage2 = spec,
            None => {
                config.backend.stage1 = spec.clone();
                config.backend.stage2 = spec;
            }
        }
    }
    Ok(())
}

fn context(cli: &Cli) -> Result<Ctx> {
    let mut config = RunConfig::load(&cli.config)?;
    apply_overrides(cli, &mut config)?;
    config.validate()?;
    let mut manifests = Vec::new();
    for m in config.manifests()? {
        let hash = config.corpus_hash(&m)?;
        manifests.push((m, hash));
    }
    let ids: Vec<String> = manifests.iter().map(|(m, _)| m.dataset_id.clone()).collect();
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(ConfigError::Invalid(format!("dataset id {dup} appears twice")).into());
    }
    let selected = match &cli.dataset {
        Some(id) if ids.contains(id) => vec![id.clone()],
        Some(id) => {
            return Err(ConfigError::Invalid(format!("unknown dataset {id}; configured: {}", ids.join(", "))).into())
        }
        None => ids,
    };
    Ok(Ctx {
        layout: Layout {
            out: config.out.clone(),
        },
        config,
        force: cli.force,
        stage: cli.stage.map(|s| if s == 1 { Stage::One } else { Stage::Two }),
        manifests,
        selected,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Synth { dir, id, users, events } = &cli.command {
        return synth(dir, id, *users, *events, cli.seed.unwrap_or(42));
    }
    let ctx = context(&cli)?;
    match cli.command {
        Command::Ingest => ingest(&ctx),
        Command::BuildPrompts => build_prompts(&ctx),
        Command::Fit => fit(&ctx),
        Command::Predict => predict(&ctx),
        Command::Eval => eval(&ctx),
        Command::Ablate => ablate(&ctx),
        Command::Synth { .. } => unreachable!(),
    }
}

fn synth(dir: &Path, id: &str, users: usize, events: usize, seed: u64) -> Result<()> {
    let spec = SyntheticSpec {
        users,
        events,
        seed,
        ..SyntheticSpec::default()
    };
    if users == 0 || events < users * 10 {
        return Err(ConfigError::Invalid("synth needs users > 0 and at least 10 events per user".into()).into());
    }
    let manifest = write_dataset(dir, id, &spec)?;
    let config = dir.join("maple.toml");
    if !config.exists() {
        fs::write(
            &config,
            format!("seed = {seed}\nworkers = 4\nout = \"out\"\ndatasets = [\"{id}.toml\"]\n"),
        )?;
    }
    println!("wrote {} and {}", manifest.display(), config.display());
    Ok(())
}

#[derive(Serialize)]
struct RejectRow<'a> {
    file: &'a Path,
    line: u64,
    reason: &'a str,
}

fn ingest(ctx: &Ctx) -> Result<()> {
    let options = ctx.config.preprocess.options();
    for (manifest, hash) in &ctx.manifests {
        if !ctx.selected.contains(&manifest.dataset_id) {
            continue;
        }
        let (dataset, rejects, stats) = manifest
            .ingest(options)
            .with_context(|| format!("ingesting {}", manifest.dataset_id))?;
        let dir = ctx.layout.corpus(dataset.id());
        write_corpus_dir(&dir, &dataset, hash)?;
        let rows: Vec<RejectRow> = rejects
            .iter()
            .map(|(file, r)| RejectRow {
                file,
                line: r.line,
                reason: &r.reason,
            })
            .collect();
        let header = ArtifactHeader::new("corpus/rejects", hash.as_str()).with_meta(serde_json::to_value(&stats)?);
        artifact::write_jsonl(&dir.join("rejects.jsonl"), &header, &rows)?;
        log::info!(
            "{}: {} of {} records kept, {} users, {} sessions dropped, {} rejected lines",
            dataset.id(),
            stats.records_out,
            stats.records_in,
            dataset.split.users.len(),
            stats.sessions_dropped,
            rejects.len()
        );
    }
    Ok(())
}

fn pair_refs(pairs: &[TrainingPair]) -> impl Iterator<Item = (&str, &str)> {
    pairs.iter().map(|p| (p.input.as_str(), p.target.as_str()))
}

/// The type table and stage-1 pairs pool every configured dataset, so
/// `--dataset` only narrows the stage-2 pair files.
fn build_prompts(ctx: &Ctx) -> Result<()> {
    let datasets = ctx.load_all()?;
    let options = ctx.config.pipeline_options();
    let hash = ctx.prompts_hash();
    let table = maple_core::experiment::build_type_table(&datasets, &options);
    table.save(&ctx.layout.type_table(), &hash)?;
    log::info!("type table: {} keys", table.len());
    let meta = serde_json::json!({ "flags": options.flags, "templates": options.templates });
    let s1 = build_stage1_pairs(&datasets, &table, &options)?;
    artifact::write_tsv_pairs(
        &ctx.layout.stage1_pairs(),
        &ArtifactHeader::new(STAGE1_PAIRS, hash.as_str()).with_meta(meta.clone()),
        pair_refs(&s1),
    )?;
    log::info!("stage 1: {} pairs", s1.len());
    for ds in datasets.iter().filter(|d| ctx.selected.iter().any(|s| s == d.id())) {
        let s2 = build_stage2_pairs(ds, &table, &options)?;
        artifact::write_tsv_pairs(
            &ctx.layout.stage2_pairs(ds.id()),
            &ArtifactHeader::new(STAGE2_PAIRS, hash.as_str()).with_meta(meta.clone()),
            pair_refs(&s2),
        )?;
        log::info!("{}: {} stage-2 pairs", ds.id(), s2.len());
    }
    Ok(())
}

fn read_pairs(ctx: &Ctx, path: &Path, kind: &str) -> Result<Vec<TrainingPair>> {
    let hash = ctx.prompts_hash();
    let (_, rows) = artifact::read_tsv_pairs(path, kind, ctx.check(&hash))?;
    Ok(rows.into_iter().map(|(i, t)| TrainingPair::new(i, t)).collect())
}

fn fit_one(ctx: &Ctx, pairs: &[TrainingPair], stage: Stage, path: &Path) -> Result<()> {
    let c = &ctx.config;
    let (model, report) = ReferenceModel::fit(pairs, stage, c.backend.weights, c.prompts.templates, c.seed)?;
    model.save(path, &ctx.model_hash())?;
    log::info!(
        "stage {stage}: fitted on {} pairs ({} skipped), {} targets",
        report.pairs,
        report.skipped,
        report.targets
    );
    Ok(())
}

/// Only reference backends are fitted here; external backends train on
/// the pair files themselves.
fn fit(ctx: &Ctx) -> Result<()> {
    let b = &ctx.config.backend;
    if ctx.wants(Stage::One) && ctx.config.ablation.use_stage1 {
        if b.stage1.is_reference() {
            let pairs = read_pairs(ctx, &ctx.layout.stage1_pairs(), STAGE1_PAIRS)?;
            fit_one(ctx, &pairs, Stage::One, &ctx.layout.stage1_model())?;
        } else {
            log::info!("stage 1 backend is {}; nothing to fit", b.stage1);
        }
    }
    if ctx.wants(Stage::Two) {
        if b.stage2.is_reference() {
            for id in &ctx.selected {
                let pairs = read_pairs(ctx, &ctx.layout.stage2_pairs(id), STAGE2_PAIRS)?;
                fit_one(ctx, &pairs, Stage::Two, &ctx.layout.stage2_model(id))?;
            }
        } else {
            log::info!("stage 2 backend is {}; nothing to fit", b.stage2);
        }
    }
    Ok(())
}

fn open_backend(ctx: &Ctx, spec: &BackendSpec, model: &Path, stage: Stage) -> Result<Box<dyn Predictor>> {
    if spec.is_reference() {
        let hash = ctx.model_hash();
        let m = ReferenceModel::load(model, ctx.check(&hash))?;
        if m.stage() != stage {
            bail!("{} holds a stage {} model", model.display(), m.stage());
        }
        Ok(Box::new(m))
    } else {
        let client = spec
            .connect(ctx.config.backend.client_options())
            .with_context(|| format!("connecting to {spec}"))?;
        Ok(Box::new(client))
    }
}

fn predict(ctx: &Ctx) -> Result<()> {
    let options = ctx.config.pipeline_options();
    let prompts_hash = ctx.prompts_hash();
    let table = TypeTable::load(&ctx.layout.type_table(), ctx.check(&prompts_hash))?;
    let b = &ctx.config.backend;
    let stage1 = if options.flags.use_stage1 {
        Some(open_backend(ctx, &b.stage1, &ctx.layout.stage1_model(), Stage::One)?)
    } else {
        None
    };
    let hash = ctx.predictions_hash();
    for id in &ctx.selected {
        let dataset = ctx.load_corpus(id)?;
        let stage2 = open_backend(ctx, &b.stage2, &ctx.layout.stage2_model(id), Stage::Two)?;
        let backends = Backends {
            stage1: stage1.as_deref(),
            stage2: stage2.as_ref(),
            table: &table,
        };
        let cases = build_test_cases(&dataset, &options);
        let start = std::time::Instant::now();
        let predictions = run_predictions(&cases, &backends, &options, ctx.config.workers)?;
        let backend = match &stage1 {
            Some(s1) => format!("{} + {}", s1.name(), stage2.name()),
            None => stage2.name().to_string(),
        };
        let meta = serde_json::json!({ "dataset": id, "backend": backend, "flags": options.flags, "k": options.k });
        artifact::write_jsonl(
            &ctx.layout.predictions(id),
            &ArtifactHeader::new(PREDICTIONS_ARTIFACT, hash.as_str()).with_meta(meta),
            &predictions,
        )?;
        log::info!(
            "{id}: {} cases predicted in {:.2}s",
            predictions.len(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn write_reports(dir: &Path, name: &str, kind: &str, hash: &str, reports: &[EvalReport]) -> Result<()> {
    artifact::write_jsonl(
        &dir.join(format!("{name}.jsonl")),
        &ArtifactHeader::new(kind, hash),
        reports,
    )?;
    let mut text = String::new();
    let mut ids: Vec<&str> = reports.iter().map(|r| r.dataset.as_str()).collect();
    ids.dedup();
    for id in ids {
        let rows: Vec<EvalReport> = reports.iter().filter(|r| r.dataset == id).cloned().collect();
        text.push_str(&format!("dataset: {id}\n"));
        text.push_str(&render_table(&rows));
        text.push('\n');
    }
    let path = dir.join(format!("{name}.txt"));
    fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn eval(ctx: &Ctx) -> Result<()> {
    let hash = ctx.predictions_hash();
    let mut reports = Vec::new();
    for id in &ctx.selected {
        let (header, predictions): (_, Vec<RankedPrediction>) =
            artifact::read_jsonl(&ctx.layout.predictions(id), PREDICTIONS_ARTIFACT, ctx.check(&hash))?;
        let backend = header.meta["backend"].as_str().unwrap_or("unknown");
        let flags = serde_json::from_value(header.meta["flags"].clone()).ok();
        let k = ctx.config.predict.k;
        reports.push(report_from_predictions(
            id,
            TWO_STAGE_ROW,
            backend,
            flags,
            k,
            &predictions,
        )?);
        let dataset = ctx.load_corpus(id)?;
        reports.extend(baseline_reports(&dataset, k)?);
    }
    write_reports(&ctx.layout.reports(), "eval", REPORT_ARTIFACT, &hash, &reports)
}

/// Every row refits from scratch, which only the reference backend can do.
fn ablate(ctx: &Ctx) -> Result<()> {
    let b = &ctx.config.backend;
    if !(b.stage1.is_reference() && b.stage2.is_reference()) {
        return Err(ConfigError::Invalid(
            "ablate refits every row and needs the reference backend for both stages".into(),
        )
        .into());
    }
    let datasets = ctx.load_all()?;
    let options = ctx.config.pipeline_options();
    let c = &ctx.config;
    let hash = artifact::config_hash(
        "ablation",
        &(ctx.corpus_hashes(), &c.prompts, &c.predict, c.backend.weights, c.seed),
    );
    let mut reports = Vec::new();
    for id in &ctx.selected {
        let target = datasets.iter().find(|d| d.id() == id).expect("loaded above");
        reports.extend(run_ablation(
            &datasets,
            target,
            &options,
            c.backend.weights,
            c.seed,
            c.workers,
        )?);
    }
    write_reports(&ctx.layout.reports(), "ablation", ABLATION_ARTIFACT, &hash, &reports)
}
