use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use typoprobe::analysis::{assemble_reports, pca, tsne, Projection2D, ReportGrouping};
use typoprobe::catalog::{
    default_pairs, load_pairs, load_wals, select_tasks, LanguagePair, SelectionOutcome, TaskSpec,
};
use typoprobe::corpus::{filter_questions, filter_translations, read_sentences, sample_records, Corpus, LinkSet};
use typoprobe::embedstore::{self, LayerSelector};
use typoprobe::features::{gather, labels, load_sets, EmbeddingSets};
use typoprobe::metrics::{kl_uniform, ClassUniverse, EvalReport, LayerSource, MixingSummary, PredictionRecord};
use typoprobe::probe::{
    majority_baseline, random_gradcheck_suite, read_checkpoint, train_mixing_probe, train_probe, write_checkpoint,
    Checkpoint, CheckpointMeta, CheckpointModel, LayerStack, Prediction, ProbeConfig, TrainingLog,
};
use typoprobe::synth::{generate, LayerProfile, SyntheticSpec};
use typoprobe::taskbuild::{build_task, read_task, split_task, write_task, LabeledExample, ProbingTask, ValidationSource};

use crate::args::*;
use crate::config::Config;
use crate::manifest::ManifestBuilder;
use crate::{Layout, UsageError};

type Result<T> = anyhow::Result<T>;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn validation_source(flag: Option<ValFrom>, config: &mut Config) -> Result<ValidationSource> {
    if let Some(v) = flag {
        config.val_from = match v {
            ValFrom::Test => "test",
            ValFrom::Train => "train",
        }
        .into();
    }
    match config.val_from.as_str() {
        "test" => Ok(ValidationSource::Test),
        "train" => Ok(ValidationSource::Train),
        other => Err(usage(format!("val_from must be `test` or `train`, got {other:?}"))),
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.probe.seed = config.seed;
    config.tsne.seed = config.seed;
    let layout = Layout::new(&cli.out);
    match cli.command {
        Command::IngestWals(a) => ingest_wals(&layout, config, a),
        Command::BuildCorpus(a) => build_corpus(&layout, config, a),
        Command::BuildTasks(a) => build_tasks(&layout, config, a),
        Command::Train(a) => train(&layout, config, a),
        Command::Evaluate(a) => evaluate(&layout, config, a),
        Command::Synth(a) => synth(&layout, config, a),
        Command::Report(a) => report(&layout, config, a),
        Command::Gradcheck(a) => gradcheck(&layout, config, a),
    }
}

fn pairs_text(pairs: &[LanguagePair]) -> String {
    pairs
        .iter()
        .map(|p| format!("{} {} {}\n", p.index, p.train_lang, p.test_lang))
        .collect()
}

fn ingest_wals(layout: &Layout, mut config: Config, a: IngestWalsArgs) -> Result<()> {
    if let Some(m) = a.min_langs {
        config.min_langs = m;
    }
    let mut manifest = ManifestBuilder::new("ingest-wals", &config);
    let catalog = load_wals(&a.wals)?;
    manifest.input(&a.wals);
    let pairs = match &a.pairs {
        Some(p) => {
            manifest.input(p);
            load_pairs(p)?
        }
        None => default_pairs(),
    };
    let selection = select_tasks(&catalog, &pairs, config.min_langs)?;

    let dir = layout.catalog();
    let mut log = String::from("feature_id,outcome,included_pairs,excluded_pairs,detail\n");
    for e in &selection.log {
        let (outcome, detail) = match &e.outcome {
            SelectionOutcome::Selected => ("selected", String::new()),
            SelectionOutcome::TooFewLanguages { annotated, required } => {
                ("too_few_languages", format!("{annotated} annotated; {required} required"))
            }
            SelectionOutcome::NoDiversity { value } => ("no_diversity", value.clone().unwrap_or_default()),
        };
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        log.push_str(&format!(
            "{},{outcome},{},{},\"{}\"\n",
            e.feature_id,
            join(&e.included_pairs),
            join(&e.excluded_pairs),
            detail.replace('"', "\"\"")
        ));
    }
    let outputs = [
        (dir.join("tasks.json"), serde_json::to_string_pretty(&selection.tasks)? + "\n"),
        (dir.join("selection.csv"), log),
        (dir.join("pairs.txt"), pairs_text(&pairs)),
    ];
    for (path, text) in &outputs {
        write_text(path, text)?;
        manifest.output(path);
    }
    manifest.parameters(json!({ "features": catalog.len(), "tasks": selection.tasks.len() }));
    manifest.finish(&dir.join("manifest-ingest-wals.json"))?;
    println!(
        "selected {} of {} features; wrote {}",
        selection.tasks.len(),
        catalog.len(),
        dir.display()
    );
    Ok(())
}

fn resolve_pairs(layout: &Layout, explicit: Option<&Path>, manifest: &mut ManifestBuilder) -> Result<Vec<LanguagePair>> {
    let recorded = layout.catalog().join("pairs.txt");
    let path = explicit.map(Path::to_path_buf).or_else(|| recorded.exists().then_some(recorded));
    match path {
        Some(p) => {
            manifest.input(&p);
            Ok(load_pairs(&p)?)
        }
        None => Ok(default_pairs()),
    }
}

#[derive(Serialize)]
struct QuestionStats {
    before: usize,
    after: usize,
    ratio: f64,
}

fn build_corpus(layout: &Layout, mut config: Config, a: BuildCorpusArgs) -> Result<()> {
    if let Some(n) = a.n {
        config.sentences_per_language = n;
    }
    let mut manifest = ManifestBuilder::new("build-corpus", &config);
    let pairs = resolve_pairs(layout, a.pairs.as_deref(), &mut manifest)?;
    let languages: BTreeSet<String> = pairs
        .iter()
        .flat_map(|p| p.languages().map(str::to_string))
        .collect();

    manifest.input(&a.sentences);
    let mut by_lang = read_sentences(&a.sentences, Some(&languages))?;
    let tag = a.sentences.display().to_string();
    let mut corpora = BTreeMap::new();
    for lang in &languages {
        let records = by_lang.remove(lang).unwrap_or_default();
        corpora.insert(lang.clone(), sample_records(records, lang, config.sentences_per_language, config.seed, &tag)?);
    }

    let links = match &a.links {
        Some(p) => {
            manifest.input(p);
            LinkSet::load(p)?
        }
        None => LinkSet::new(Vec::new()),
    };
    let mut filter_stats = Vec::new();
    for pair in &pairs {
        let train = corpora[&pair.train_lang].clone();
        let test = corpora.remove(&pair.test_lang).expect("sampled above");
        let (_, test, stats) = filter_translations(train, test, &links)?;
        corpora.insert(pair.test_lang.clone(), test);
        filter_stats.push(stats);
    }

    let mut questions = BTreeMap::new();
    if a.questions_only {
        for (lang, corpus) in corpora.iter_mut() {
            let filtered = filter_questions(corpus)?;
            questions.insert(
                lang.clone(),
                QuestionStats {
                    before: corpus.len(),
                    after: filtered.len(),
                    ratio: filtered.len() as f64 / corpus.len() as f64,
                },
            );
            *corpus = filtered;
        }
    }

    let dir = layout.corpus();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for (lang, corpus) in &corpora {
        let path = dir.join(format!("{lang}.tsv"));
        corpus.write_tsv(&path)?;
        manifest.output(path);
    }
    let stats_path = dir.join("filter_stats.json");
    write_json(&stats_path, &json!({ "translation_filter": filter_stats, "questions": questions }))?;
    manifest.output(&stats_path);
    manifest.parameters(json!({ "questions_only": a.questions_only, "languages": languages }));
    manifest.finish(&dir.join("manifest-build-corpus.json"))?;
    for s in &filter_stats {
        println!(
            "{}/{}: removed {} of {} test sentences linked to train",
            s.train_language, s.test_language, s.removed, s.test_before
        );
    }
    Ok(())
}

fn load_task_specs(layout: &Layout, manifest: &mut ManifestBuilder) -> Result<Vec<TaskSpec>> {
    let path = layout.catalog().join("tasks.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| usage(format!("cannot read {} (run ingest-wals first): {e}", path.display())))?;
    manifest.input(&path);
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn build_tasks(layout: &Layout, mut config: Config, a: BuildTasksArgs) -> Result<()> {
    if let Some(f) = a.val_fraction {
        config.val_fraction = f;
    }
    let source = validation_source(a.val_from, &mut config)?;
    let mut manifest = ManifestBuilder::new("build-tasks", &config);
    let mut specs = load_task_specs(layout, &mut manifest)?;
    if !a.tasks.is_empty() {
        let known: BTreeSet<&str> = specs.iter().map(|s| s.feature_id.as_str()).collect();
        if let Some(missing) = a.tasks.iter().find(|t| !known.contains(t.as_str())) {
            return Err(usage(format!("unknown task {missing}")));
        }
        specs.retain(|s| a.tasks.contains(&s.feature_id));
    }

    let mut corpora: BTreeMap<String, Corpus> = BTreeMap::new();
    let dir = layout.tasks();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for spec in &specs {
        for lang in spec.languages() {
            if !corpora.contains_key(lang) {
                let path = layout.corpus().join(format!("{lang}.tsv"));
                if !path.exists() {
                    return Err(typoprobe::Error::MissingCorpus(lang.to_string()).into());
                }
                corpora.insert(lang.to_string(), Corpus::read_tsv(&path, lang)?);
                manifest.input(path);
            }
        }
        let task = split_task(build_task(spec, &corpora)?, config.val_fraction, source, config.seed)?;
        write_task(&dir, &task)?;
        for split in ["train", "val", "test"] {
            manifest.output(typoprobe::taskbuild::split_path(&dir, task.id(), split));
        }
        manifest.output(typoprobe::taskbuild::sidecar_path(&dir, task.id()));
        println!(
            "{}: {} train, {} val, {} test",
            task.id(),
            task.train.len(),
            task.val.len(),
            task.test.len()
        );
    }
    manifest.parameters(json!({ "tasks": specs.iter().map(|s| &s.feature_id).collect::<Vec<_>>() }));
    manifest.finish(&dir.join("manifest-build-tasks.json"))
}

fn universe(all_classes: bool) -> ClassUniverse {
    if all_classes {
        ClassUniverse::All
    } else {
        ClassUniverse::GoldPresent
    }
}

fn prediction_records(examples: &[LabeledExample], prediction: &Prediction) -> Vec<PredictionRecord> {
    examples
        .iter()
        .zip(&prediction.classes)
        .map(|(e, &p)| PredictionRecord {
            language: e.sentence_ref.language.clone(),
            sentence_id: e.sentence_ref.sentence_id,
            gold: e.label_index,
            predicted: p,
        })
        .collect()
}

fn stack(examples: &[LabeledExample], sets: &EmbeddingSets, layers: usize) -> Result<LayerStack> {
    let mats = (1..=layers)
        .map(|l| gather(examples, sets, LayerSelector::Layer(l)))
        .collect::<typoprobe::Result<Vec<_>>>()?;
    Ok(LayerStack::new(mats)?)
}

fn source_of(selector: LayerSelector) -> LayerSource {
    match selector {
        LayerSelector::Native => LayerSource::Native,
        LayerSelector::Layer(l) => LayerSource::Layer(l),
    }
}

struct RunOutput {
    report: EvalReport,
    checkpoint: Option<Checkpoint>,
    log: Option<TrainingLog>,
}

fn write_run(layout: &Layout, config: &Config, task: &ProbingTask, inputs: &[PathBuf], run: &RunOutput) -> Result<PathBuf> {
    let r = &run.report;
    let dir = layout.run_dir(&r.model_id, &r.task_id, &r.layer_source.to_string());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = ManifestBuilder::new("train", config);
    for p in inputs {
        manifest.input(p);
    }
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        write_text(&path, &text)?;
        manifest.output(path);
        Ok(())
    };
    put("report.json", serde_json::to_string_pretty(r)? + "\n")?;
    put("report.csv", r.to_csv())?;
    if let Some(log) = &run.log {
        put("training_log.csv", log.to_csv())?;
    }
    if let Some(ck) = &run.checkpoint {
        let path = dir.join("checkpoint.tpck");
        write_checkpoint(&path, ck)?;
        manifest.output(path);
    }
    manifest.parameters(json!({
        "task": task.id(),
        "model": r.model_id,
        "layer_source": r.layer_source,
        "macro_f1": r.macro_f1,
    }));
    manifest.finish(&dir.join("manifest.json"))?;
    Ok(dir)
}

fn task_inputs(layout: &Layout, task_id: &str) -> Vec<PathBuf> {
    let dir = layout.tasks();
    let mut v: Vec<PathBuf> = ["train", "val", "test"]
        .iter()
        .map(|s| typoprobe::taskbuild::split_path(&dir, task_id, s))
        .collect();
    v.push(typoprobe::taskbuild::sidecar_path(&dir, task_id));
    v
}

fn load_task(layout: &Layout, id: &str) -> Result<ProbingTask> {
    if !typoprobe::taskbuild::sidecar_path(&layout.tasks(), id).exists() {
        return Err(usage(format!("task {id} not found under {}", layout.tasks().display())));
    }
    Ok(read_task(&layout.tasks(), id)?)
}

fn probe_layer(
    task: &ProbingTask,
    sets: &EmbeddingSets,
    model: &str,
    selector: LayerSelector,
    probe: &ProbeConfig,
    universe: ClassUniverse,
) -> Result<RunOutput> {
    let tx = gather(&task.train, sets, selector)?;
    let vx = gather(&task.val, sets, selector)?;
    let ex = gather(&task.test, sets, selector)?;
    let trained = train_probe(&tx, &labels(&task.train), &vx, &labels(&task.val), &task.spec.class_labels, probe)?;
    let prediction = trained.model.predict(&ex.view())?;
    let source = source_of(selector);
    let report = EvalReport::from_predictions(
        task.id(),
        model,
        source,
        &task.spec.class_labels,
        universe,
        prediction_records(&task.test, &prediction),
        None,
    )?;
    let checkpoint = Checkpoint {
        meta: CheckpointMeta {
            task_id: task.id().to_string(),
            model_id: model.to_string(),
            layer_source: source,
            config: probe.clone(),
            best_epoch: trained.log.best_epoch,
        },
        model: CheckpointModel::Probe(trained.model),
    };
    Ok(RunOutput { report, checkpoint: Some(checkpoint), log: Some(trained.log) })
}

fn probe_mix(
    task: &ProbingTask,
    sets: &EmbeddingSets,
    model: &str,
    layers: usize,
    probe: &ProbeConfig,
    universe: ClassUniverse,
) -> Result<RunOutput> {
    let tx = stack(&task.train, sets, layers)?;
    let vx = stack(&task.val, sets, layers)?;
    let ex = stack(&task.test, sets, layers)?;
    let trained =
        train_mixing_probe(&tx, &labels(&task.train), &vx, &labels(&task.val), &task.spec.class_labels, probe)?;
    let prediction = trained.model.predict(&ex)?;
    let weights = trained.model.weights().to_vec();
    let mixing = MixingSummary {
        kl: kl_uniform(&weights)?,
        weights,
        lambda: trained.model.lambda,
    };
    let report = EvalReport::from_predictions(
        task.id(),
        model,
        LayerSource::Mix,
        &task.spec.class_labels,
        universe,
        prediction_records(&task.test, &prediction),
        Some(mixing),
    )?;
    let checkpoint = Checkpoint {
        meta: CheckpointMeta {
            task_id: task.id().to_string(),
            model_id: model.to_string(),
            layer_source: LayerSource::Mix,
            config: probe.clone(),
            best_epoch: trained.log.best_epoch,
        },
        model: CheckpointModel::Mixing(trained.model),
    };
    Ok(RunOutput { report, checkpoint: Some(checkpoint), log: Some(trained.log) })
}

fn load_model_sets(layout: &Layout, explicit: Option<&Path>, model: &str, task: &ProbingTask) -> Result<(EmbeddingSets, Vec<PathBuf>)> {
    let dir = explicit.map(Path::to_path_buf).unwrap_or_else(|| layout.embeddings());
    let langs = task.spec.languages();
    let paths: Vec<PathBuf> = langs.iter().map(|l| dir.join(embedstore::file_name(model, l))).collect();
    if let Some(missing) = paths.iter().find(|p| !p.exists()) {
        return Err(usage(format!("missing embedding file {}", missing.display())));
    }
    Ok((load_sets(&dir, model, langs)?, paths))
}

fn stored_layers(sets: &EmbeddingSets) -> Result<(Vec<usize>, usize, bool)> {
    let first = &sets.values().next().ok_or_else(|| usage("no embedding sets"))?.header;
    for set in sets.values() {
        let h = &set.header;
        if h.num_layers != first.num_layers || h.has_layer0 != first.has_layer0 || h.has_native != first.has_native {
            return Err(usage(format!("embedding files of {} disagree on their layer structure", h.model_id)));
        }
    }
    Ok((first.stored_layers().collect(), first.num_layers, first.has_native))
}

fn train(layout: &Layout, mut config: Config, a: TrainArgs) -> Result<()> {
    if let Some(h) = a.hidden_units {
        config.probe.hidden_units = h;
    }
    if let Some(w) = a.workers {
        config.workers = w;
    }
    config.probe.validate()?;
    let task = load_task(layout, &a.task)?;
    let universe = universe(a.all_classes);
    let mut inputs = task_inputs(layout, task.id());

    if a.baseline.is_some() {
        let report = majority_baseline(&task, universe)?;
        let dir = write_run(layout, &config, &task, &inputs, &RunOutput { report, checkpoint: None, log: None })?;
        println!("baseline {}: wrote {}", task.id(), dir.display());
        return Ok(());
    }

    let model = a.model.as_deref().expect("clap requires --model without --baseline");
    let (sets, paths) = load_model_sets(layout, a.embeddings.as_deref(), model, &task)?;
    inputs.extend(paths);
    let (layers, num_layers, _) = stored_layers(&sets)?;

    let runs: Vec<RunOutput> = if a.mix {
        vec![probe_mix(&task, &sets, model, num_layers, &config.probe, universe)?]
    } else {
        match a.layer.as_deref().unwrap_or("native") {
            "all" => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .context("building worker pool")?;
                let probe = &config.probe;
                let results: Vec<Result<RunOutput>> = pool.install(|| {
                    layers
                        .par_iter()
                        .map(|&l| probe_layer(&task, &sets, model, LayerSelector::Layer(l), probe, universe))
                        .collect()
                });
                results.into_iter().collect::<Result<_>>()?
            }
            other => {
                let selector: LayerSelector = other
                    .parse()
                    .map_err(|e: String| usage(format!("--layer: {e}")))?;
                vec![probe_layer(&task, &sets, model, selector, &config.probe, universe)?]
            }
        }
    };
    for run in &runs {
        let dir = write_run(layout, &config, &task, &inputs, run)?;
        let r = &run.report;
        match &r.mixing {
            Some(m) => println!(
                "{} {} {}: macro-F1 {:.4}, K(s) {:.5}, s = {:?} ({})",
                r.model_id, r.task_id, r.layer_source, r.macro_f1, m.kl, m.weights, dir.display()
            ),
            None => println!("{} {} {}: macro-F1 {:.4} ({})", r.model_id, r.task_id, r.layer_source, r.macro_f1, dir.display()),
        }
    }
    Ok(())
}

fn parse_source(s: &str) -> Result<LayerSource> {
    if let Ok(l) = s.parse::<usize>() {
        return Ok(LayerSource::Layer(l));
    }
    s.parse().map_err(|e: typoprobe::Error| usage(e.to_string()))
}

fn evaluate(layout: &Layout, config: Config, a: EvaluateArgs) -> Result<()> {
    let source = parse_source(&a.layer)?;
    let task = load_task(layout, &a.task)?;
    let ck_path = a
        .checkpoint
        .clone()
        .unwrap_or_else(|| layout.run_dir(&a.model, &a.task, &source.to_string()).join("checkpoint.tpck"));
    if !ck_path.exists() {
        return Err(usage(format!("checkpoint {} not found (run train first)", ck_path.display())));
    }
    let ck = read_checkpoint(&ck_path)?;
    if ck.meta.task_id != a.task || ck.meta.model_id != a.model || ck.meta.layer_source != source {
        return Err(usage(format!(
            "checkpoint is for {}/{}/{}, not {}/{}/{source}",
            ck.meta.model_id, ck.meta.task_id, ck.meta.layer_source, a.model, a.task
        )));
    }
    let (sets, paths) = load_model_sets(layout, a.embeddings.as_deref(), &a.model, &task)?;
    let examples = if a.split == "val" { &task.val } else { &task.test };
    let (prediction, mixing) = match (&ck.model, source) {
        (CheckpointModel::Probe(p), LayerSource::Native | LayerSource::Layer(_)) => {
            let selector = match source {
                LayerSource::Layer(l) => LayerSelector::Layer(l),
                _ => LayerSelector::Native,
            };
            (p.predict(&gather(examples, &sets, selector)?.view())?, None)
        }
        (CheckpointModel::Mixing(m), LayerSource::Mix) => {
            let weights = m.weights().to_vec();
            let summary = MixingSummary { kl: kl_uniform(&weights)?, weights, lambda: m.lambda };
            (m.predict(&stack(examples, &sets, m.num_layers())?)?, Some(summary))
        }
        _ => return Err(anyhow!("checkpoint kind does not match its layer source")),
    };
    let report = EvalReport::from_predictions(
        task.id(),
        &a.model,
        source,
        &task.spec.class_labels,
        universe(a.all_classes),
        prediction_records(examples, &prediction),
        mixing,
    )?;

    let dir = layout.evaluations().join(&a.model).join(&a.task).join(source.to_string()).join(&a.split);
    let mut manifest = ManifestBuilder::new("evaluate", &config);
    for p in task_inputs(layout, task.id()).into_iter().chain(paths).chain([ck_path]) {
        manifest.input(p);
    }
    for (name, text) in [("report.json", serde_json::to_string_pretty(&report)? + "\n"), ("report.csv", report.to_csv())] {
        let path = dir.join(name);
        write_text(&path, &text)?;
        manifest.output(path);
    }
    manifest.parameters(json!({ "split": a.split, "macro_f1": report.macro_f1 }));
    manifest.finish(&dir.join("manifest.json"))?;
    println!("{} {} {} ({}): macro-F1 {:.4}", a.model, a.task, source, a.split, report.macro_f1);
    Ok(())
}

fn synth(layout: &Layout, mut config: Config, a: SynthArgs) -> Result<()> {
    if let Some(f) = a.val_fraction {
        config.val_fraction = f;
    }
    let source = validation_source(a.val_from, &mut config)?;
    let spec = SyntheticSpec {
        model_id: a.model_id.clone(),
        task_id: a.task_id.clone(),
        languages: SyntheticSpec::with_languages(a.languages, a.classes),
        dim: a.dim,
        num_layers: a.layers,
        sentences_per_language: a.sentences,
        signal_strength: a.alpha,
        noise_sigma: a.sigma,
        layer_profile: a.profile.parse::<LayerProfile>()?,
        subspace_offset: a.offset,
        seed: config.seed,
    };
    let data = generate(&spec)?;
    let mut manifest = ManifestBuilder::new("synth", &config);
    let emb = layout.embeddings();
    fs::create_dir_all(&emb).with_context(|| format!("creating {}", emb.display()))?;
    for (lang, set) in &data.sets {
        let path = emb.join(embedstore::file_name(&spec.model_id, lang));
        embedstore::write_embeddings(set, &path)?;
        manifest.output(path);
    }
    let task = split_task(data.task, config.val_fraction, source, config.seed)?;
    write_task(&layout.tasks(), &task)?;
    for p in task_inputs(layout, task.id()) {
        manifest.output(p);
    }
    manifest.parameters(serde_json::to_value(&spec)?);
    manifest.finish(&layout.tasks().join(format!("manifest-synth-{}.json", spec.task_id)))?;
    println!(
        "synth {}: {} languages, {} layers, profile {}; task {} ({} train, {} val, {} test)",
        spec.model_id,
        spec.languages.len(),
        spec.num_layers,
        spec.layer_profile,
        task.id(),
        task.train.len(),
        task.val.len(),
        task.test.len()
    );
    Ok(())
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_reports(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "report.json") {
            out.push(p);
        }
    }
    Ok(())
}

fn projections(
    layout: &Layout,
    config: &Config,
    a: &ReportArgs,
    model: &str,
    manifest: &mut ManifestBuilder,
) -> Result<()> {
    let dir = a.embeddings.clone().unwrap_or_else(|| layout.embeddings());
    let prefix = format!("{model}_");
    let mut langs: Vec<String> = Vec::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(lang) = name.strip_prefix(&prefix).and_then(|s| s.strip_suffix(".tpeb")) {
            if a.project_langs.is_empty() || a.project_langs.iter().any(|l| l == lang) {
                langs.push(lang.to_string());
            }
        }
    }
    langs.sort();
    if langs.is_empty() {
        return Err(usage(format!("no embeddings of model {model} in {}", dir.display())));
    }
    let sets = load_sets(&dir, model, langs.iter().map(String::as_str))?;
    for l in &langs {
        manifest.input(dir.join(embedstore::file_name(model, l)));
    }
    let (layers, _, has_native) = stored_layers(&sets)?;
    let mut selectors: Vec<LayerSelector> = layers.into_iter().map(LayerSelector::Layer).collect();
    if has_native {
        selectors.push(LayerSelector::Native);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .context("building worker pool")?;
    let results: Vec<Result<Projection2D>> = pool.install(|| {
        selectors
            .par_iter()
            .map(|&selector| {
                let mut rows = Vec::new();
                let mut keys = Vec::new();
                for (lang, set) in &sets {
                    let m = set.layer(selector)?;
                    for r in 0..m.nrows().min(a.project_per_lang) {
                        rows.push(m.row(r).mapv(f64::from));
                        keys.push(lang.clone());
                    }
                }
                let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
                let x = ndarray::stack(ndarray::Axis(0), &views).context("stacking rows")?;
                let reduced = pca(&x, x.ncols().min(10))?.projected;
                let points = tsne(&reduced, &config.tsne)?;
                let layer = match selector {
                    LayerSelector::Layer(l) => format!("layer_{l}"),
                    LayerSelector::Native => "native".into(),
                };
                Ok(Projection2D::new(&points, keys, model, &layer)?)
            })
            .collect()
    });
    let out = layout.report().join("projections");
    for p in results {
        let p = p?;
        for (ext, text) in [("csv", p.to_csv()), ("svg", p.to_svg())] {
            let path = out.join(format!("{model}_{}.{ext}", p.layer));
            write_text(&path, &text)?;
            manifest.output(path);
        }
    }
    Ok(())
}

fn report(layout: &Layout, config: Config, a: ReportArgs) -> Result<()> {
    let runs = a.runs.clone().unwrap_or_else(|| layout.runs());
    if !runs.is_dir() {
        return Err(usage(format!("no runs directory at {}", runs.display())));
    }
    let mut paths = Vec::new();
    find_reports(&runs, &mut paths)?;
    if paths.is_empty() {
        return Err(usage(format!("no report.json files under {}", runs.display())));
    }
    let mut manifest = ManifestBuilder::new("report", &config);
    let mut reports = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: EvalReport = serde_json::from_str(&text).map_err(|e| usage(format!("bad report {}: {e}", p.display())))?;
        reports.push(r);
        manifest.input(p);
    }
    let grouping = ReportGrouping {
        language_subset: (!a.subset.is_empty()).then(|| a.subset.iter().cloned().collect()),
        ..ReportGrouping::default()
    };
    let assembled = assemble_reports(&reports, &grouping, &layout.report())?;
    for f in &assembled.files {
        manifest.output(f);
    }
    if let Some(model) = &a.project {
        projections(layout, &config, &a, model, &mut manifest)?;
    }
    manifest.parameters(json!({ "reports": paths.len(), "subset": a.subset, "project": a.project }));
    manifest.finish(&layout.report().join("manifest-report.json"))?;
    print!("{}", assembled.summary.to_markdown());
    Ok(())
}

fn gradcheck(layout: &Layout, config: Config, a: GradcheckArgs) -> Result<()> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if a.configs == 0 || !positive(a.epsilon) || !positive(a.tolerance) {
        return Err(usage("configs, epsilon and tolerance must be positive"));
    }
    let cases = random_gradcheck_suite(a.configs, config.seed, a.epsilon);
    let worst = cases.iter().map(|c| c.result.max_rel_error).fold(0.0, f64::max);
    let dir = layout.gradcheck();
    let path = dir.join("results.json");
    write_json(&path, &json!({ "epsilon": a.epsilon, "tolerance": a.tolerance, "max_rel_error": worst, "cases": cases }))?;
    let mut manifest = ManifestBuilder::new("gradcheck", &config);
    manifest.output(&path);
    manifest.parameters(json!({ "configs": a.configs, "epsilon": a.epsilon, "tolerance": a.tolerance }));
    manifest.finish(&dir.join("manifest-gradcheck.json"))?;
    for kind in ["probe", "mixing"] {
        let k = cases.iter().filter(|c| c.kind == kind);
        let max = k.clone().map(|c| c.result.max_rel_error).fold(0.0, f64::max);
        println!("{kind}: {} configurations, max relative error {max:.3e}", k.count());
    }
    if worst >= a.tolerance {
        return Err(anyhow!("gradient check failed: max relative error {worst:.3e} >= {:.1e}", a.tolerance));
    }
    Ok(())
}
