use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use anyhow::{bail, Context as _, Result};
use prodintent::analysis::{analyze as analyze_metrics, IntentLabel, PRODUCT_INTENTS};
use prodintent::features::{assemble_matrix, extract_features, features_csv, product_features, record_pieces, record_texts, IntentFeatures};
use prodintent::learners::{cross_validate, train, Dataset, Matrix, TrainedModel};
use prodintent::log::{parse_log, write_log, QueryRecord};
use prodintent::supervision::{build_weak_set, evaluate_heuristics, parse_list, stratum_sizes, ResourceLists, WeakLabeledSet};
use prodintent::syngen::{generate as generate_log, parse_truth};
use prodintent::text::{learn_vocab, load_vocab, read_embeddings, train_embeddings, write_embeddings, EmbeddingTable, Vocab};
use prodintent::topics::{build_doc, fit_lda, sample_per_topic};
use prodintent_annotation::{read_queue, AnnotationItem, ItemClick, LabelStore, Workspace};
use serde_json::json;

use crate::artifacts::{Context, Outcome, StageRun};
use crate::config::Scope;
use crate::Stage;

pub(crate) fn run(stage: Stage, ctx: &Context) -> Result<Outcome> {
    match stage {
        Stage::Generate => generate(ctx),
        Stage::EvaluateHeuristics => evaluate_heuristics_stage(ctx),
        Stage::WeakLabel => weak_label(ctx),
        Stage::BuildVocab => build_vocab(ctx),
        Stage::TrainEmbeddings => embeddings(ctx),
        Stage::TrainProduct => train_product(ctx),
        Stage::ProductShare => product_share(ctx),
        Stage::Lda => lda(ctx),
        Stage::SampleAnnotation => sample_annotation(ctx),
        Stage::Kappa => kappa(ctx),
        Stage::Features => features(ctx),
        Stage::TrainIntent => train_intent(ctx),
        Stage::ClassifyIntent => classify_intent(ctx),
        Stage::Analyze => analyze(ctx),
    }
}

/// Percentage with one decimal, e.g. `15.0%`.
pub fn format_share(positive: usize, total: usize) -> String {
    format!("{:.1}%", 100.0 * positive as f64 / total as f64)
}

struct Log {
    records: Vec<QueryRecord>,
    invalid_lines: usize,
}

fn parse_records(bytes: &[u8]) -> Result<Log> {
    let parsed = parse_log(bytes)?;
    if parsed.records.is_empty() {
        match parsed.errors.first() {
            Some(e) => bail!("log has no valid records (first error at {e})"),
            None => bail!("log is empty"),
        }
    }
    Ok(Log { records: parsed.records, invalid_lines: parsed.errors.len() })
}

fn read_log(run: &mut StageRun) -> Result<Log> {
    let path = run.ctx().cfg.paths.log.clone();
    parse_records(&run.configured("log", path.as_deref(), "log.jsonl")?)
}

fn read_resources(run: &mut StageRun) -> Result<ResourceLists> {
    let paths = run.ctx().cfg.paths.clone();
    let bundled = ResourceLists::bundled();
    let categories = match &paths.categories {
        Some(p) => parse_list(&utf8(run.read("paths.categories", p)?)?),
        None => bundled.categories().to_vec(),
    };
    let products = match &paths.products {
        Some(p) => parse_list(&utf8(run.read("paths.products", p)?)?),
        None => bundled.products().to_vec(),
    };
    Ok(ResourceLists::new(categories, products))
}

fn read_vocab(run: &mut StageRun) -> Result<Vocab> {
    Ok(load_vocab(run.artifact("vocab.txt")?.as_slice())?)
}

fn read_table(run: &mut StageRun) -> Result<EmbeddingTable> {
    let dim = run.ctx().cfg.embeddings.dim;
    let table = read_embeddings(run.artifact("embeddings.txt")?.as_slice(), dim)?;
    if table.is_empty() {
        bail!("embeddings.txt has no vectors");
    }
    Ok(table)
}

fn read_model(run: &mut StageRun, name: &str) -> Result<TrainedModel> {
    Ok(TrainedModel::from_json(&utf8(run.artifact(name)?)?)?)
}

fn read_labels(run: &mut StageRun, key: &str, fallback: &str) -> Result<BTreeMap<String, IntentLabel>> {
    let path = match key {
        "gold_labels" => run.ctx().cfg.paths.gold_labels.clone(),
        "intent_labels" => run.ctx().cfg.paths.intent_labels.clone(),
        _ => run.ctx().cfg.paths.analysis_labels.clone(),
    };
    let bytes = run.configured(key, path.as_deref(), fallback)?;
    Ok(parse_truth(&utf8(bytes)?)?)
}

/// Records the configured scope admits, in log order.
fn scoped<'r>(run: &mut StageRun, records: &'r [QueryRecord]) -> Result<Vec<&'r QueryRecord>> {
    match run.ctx().cfg.scope {
        Scope::All => Ok(records.iter().collect()),
        Scope::Product => {
            let text = utf8(run.artifact("product_queries.tsv")?)?;
            let mut keep = BTreeSet::new();
            for (i, line) in text.lines().enumerate() {
                match line.split_once('\t') {
                    Some((q, "1")) => {
                        keep.insert(q.to_string());
                    }
                    Some((_, "0")) => {}
                    _ => bail!("product_queries.tsv line {}: expected query_id<TAB>0|1", i + 1),
                }
            }
            Ok(records.iter().filter(|r| keep.contains(&r.query_id)).collect())
        }
    }
}

fn utf8(bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).context("input is not UTF-8")
}

fn generate(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::Generate);
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let synthetic = generate_log(&ctx.cfg.generator)?;
    let mut log = Vec::new();
    write_log(&mut log, &synthetic.records)?;
    let mut truth = Vec::new();
    synthetic.write_truth(&mut truth)?;
    let mut counts: BTreeMap<IntentLabel, usize> = BTreeMap::new();
    for (_, l) in &synthetic.truth {
        *counts.entry(*l).or_default() += 1;
    }
    let sessions: BTreeSet<&str> = synthetic.records.iter().map(|r| r.session_id.as_str()).collect();
    run.output("log.jsonl", log);
    run.output("truth.tsv", truth);
    run.finish(json!({
        "records": synthetic.records.len(),
        "sessions": sessions.len(),
        "intent_counts": counts,
    }))
}

fn evaluate_heuristics_stage(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::EvaluateHeuristics);
    let log = match ctx.cfg.paths.gold_log.as_deref() {
        Some(p) => parse_records(&run.read("paths.gold_log", p)?)?,
        None => read_log(&mut run)?,
    };
    let labels = read_labels(&mut run, "gold_labels", "truth.tsv")?;
    let res = read_resources(&mut run)?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let gold = log
        .records
        .into_iter()
        .map(|r| match labels.get(&r.query_id) {
            Some(l) => Ok((r, l.is_product())),
            None => bail!("record {} has no gold label", r.query_id),
        })
        .collect::<Result<Vec<_>>>()?;
    let evals = evaluate_heuristics(&gold, &res)?;
    let mut csv = String::from("Heuristic,TP,FP,FN,TN,Precision,Recall,F1,Accuracy\n");
    for e in &evals {
        let s = &e.scores;
        writeln!(
            csv,
            "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
            e.heuristic, s.tp, s.fp, s.fn_, s.tn, s.precision, s.recall, s.f1, s.accuracy
        )?;
    }
    run.output("heuristics.csv", csv);
    run.finish(json!({
        "gold_records": gold.len(),
        "gold_products": gold.iter().filter(|(_, p)| *p).count(),
        "invalid_lines": log.invalid_lines,
        "heuristics": evals,
    }))
}

fn weak_label(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::WeakLabel);
    let log = read_log(&mut run)?;
    let res = read_resources(&mut run)?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let kind = ctx.cfg.heuristic;
    let (pos, neg) = stratum_sizes(&log.records, kind, &res);
    let per_class = ctx.cfg.weak_per_class.unwrap_or(pos.min(neg));
    if per_class == 0 {
        bail!("{kind} leaves an empty stratum ({pos} positive, {neg} negative)");
    }
    let set = build_weak_set(&log.records, kind, &res, per_class, per_class, ctx.cfg.seeds().weak_label)?;
    run.output("weak_set.json", serde_json::to_string_pretty(&set)? + "\n");
    run.finish(json!({
        "heuristic": kind,
        "positives_available": pos,
        "negatives_available": neg,
        "per_class": per_class,
        "invalid_lines": log.invalid_lines,
    }))
}

fn build_vocab(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::BuildVocab);
    let log = read_log(&mut run)?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let corpus: Vec<String> = log.records.iter().flat_map(record_texts).collect();
    let vocab = learn_vocab(&corpus, ctx.cfg.vocab_size)?;
    let mut out = Vec::new();
    vocab.write(&mut out)?;
    run.output("vocab.txt", out);
    run.finish(json!({ "target_size": ctx.cfg.vocab_size, "size": vocab.size() }))
}

fn embeddings(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::TrainEmbeddings);
    let log = read_log(&mut run)?;
    let vocab = read_vocab(&mut run)?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let corpus: Vec<Vec<String>> = log.records.iter().map(|r| record_pieces(r, &vocab)).collect();
    let trained = train_embeddings(&corpus, &ctx.cfg.embeddings, ctx.cfg.seeds().embeddings)?;
    let mut out = Vec::new();
    write_embeddings(&mut out, &trained.table)?;
    run.output("embeddings.txt", out);
    run.finish(json!({
        "dim": trained.table.dim(),
        "entries": trained.table.len(),
        "epoch_losses": trained.epoch_losses,
        // Training is single-worker, so the table is seed-deterministic.
        "parallel": false,
    }))
}

fn train_product(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::TrainProduct);
    let log = read_log(&mut run)?;
    let vocab = read_vocab(&mut run)?;
    let table = read_table(&mut run)?;
    let weak: WeakLabeledSet = serde_json::from_slice(&run.artifact("weak_set.json")?).context("parsing weak_set.json")?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let Some(&keep) = ctx.cfg.product_models.first() else { bail!("product_models is empty") };
    let by_id: HashMap<&str, &QueryRecord> = log.records.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (ids, label) in [(&weak.negatives, 0), (&weak.positives, 1)] {
        for id in ids {
            let rec = by_id.get(id.as_str()).with_context(|| format!("weak set id {id} is not in the log"))?;
            rows.push(product_features(rec, &table, &vocab));
            labels.push(label);
        }
    }
    let data = Dataset::new(Matrix::from_rows(&rows, 2 * table.dim()), labels, vec!["not_product".into(), "product".into()])?;
    let positives = data.labels.iter().filter(|&&l| l == 1).count();
    let baseline = 100.0 * positives.max(data.len() - positives) as f64 / data.len() as f64;

    let seed = ctx.cfg.seeds().product;
    let mut models = Vec::new();
    let mut csv = String::from("Model,Accuracy,Macro F1,Baseline,Margin\n");
    for &kind in &ctx.cfg.product_models {
        let report = cross_validate(kind, &data, ctx.cfg.folds, &ctx.cfg.hyper, seed)?;
        writeln!(csv, "{kind},{:.2},{:.2},{baseline:.2},{:.2}", report.accuracy, report.macro_f1, report.accuracy - baseline)?;
        models.push(json!({
            "kind": kind,
            "accuracy": report.accuracy,
            "macro_f1": report.macro_f1,
            "margin_over_baseline": report.accuracy - baseline,
            "evaluation": report,
        }));
    }
    let model = train(keep, &data, &ctx.cfg.hyper, seed)?;
    run.output("product_model.json", model.to_json() + "\n");
    run.output("product_cv.csv", csv);
    run.finish(json!({
        "examples": data.len(),
        "folds": ctx.cfg.folds,
        "baseline_accuracy": baseline,
        "models": models,
        "kept": keep,
    }))
}

fn product_share(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::ProductShare);
    let log = read_log(&mut run)?;
    let vocab = read_vocab(&mut run)?;
    let table = read_table(&mut run)?;
    let model = read_model(&mut run, "product_model.json")?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let rows: Vec<Vec<f64>> = log.records.iter().map(|r| product_features(r, &table, &vocab)).collect();
    let product = model
        .class_names
        .iter()
        .position(|c| c == "product")
        .context("product model has no \"product\" class")?;
    let pred = model.predict(&Matrix::from_rows(&rows, 2 * table.dim()))?;
    let mut tsv = String::new();
    let mut positive = 0;
    for (r, &p) in log.records.iter().zip(&pred) {
        let is = p == product;
        positive += is as usize;
        writeln!(tsv, "{}\t{}", r.query_id, is as u8)?;
    }
    run.output("product_queries.tsv", tsv);
    run.finish(json!({
        "records": log.records.len(),
        "product": positive,
        "share": format_share(positive, log.records.len()),
    }))
}

fn lda(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::Lda);
    let log = read_log(&mut run)?;
    let vocab = read_vocab(&mut run)?;
    let records = scoped(&mut run, &log.records)?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let (docs, empty): (Vec<_>, Vec<_>) =
        records.iter().map(|r| build_doc(r, &vocab)).partition(|d| !d.token_ids.is_empty());
    let model = fit_lda(&docs, vocab.size(), &ctx.cfg.lda, ctx.cfg.seeds().lda)?;
    let dump = model.dump(&vocab, ctx.cfg.top_words);
    run.output("topics.json", serde_json::to_string_pretty(&dump)? + "\n");
    run.output("membership.tsv", model.membership_tsv());
    let lls = &model.log_likelihoods;
    run.finish(json!({
        "documents": docs.len(),
        "empty_documents": empty.len(),
        "topics": model.k,
        "alpha": model.alpha,
        "beta": model.beta,
        "initial_log_likelihood": lls.first().map(|p| p.1),
        "final_log_likelihood": lls.last().map(|p| p.1),
    }))
}

fn sample_annotation(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::SampleAnnotation);
    let log = read_log(&mut run)?;
    let text = utf8(run.artifact("membership.tsv")?)?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let mut members: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let parsed = line.split_once('\t').and_then(|(q, t)| Some((q, t.parse::<usize>().ok()?)));
        let Some((q, t)) = parsed else { bail!("membership.tsv line {}: expected query_id<TAB>topic", i + 1) };
        members.entry(t).or_default().push(q.to_string());
    }
    let by_id: HashMap<&str, &QueryRecord> = log.records.iter().map(|r| (r.query_id.as_str(), r)).collect();
    let mut queue = String::new();
    let picks = sample_per_topic(&members, ctx.cfg.per_cluster, ctx.cfg.seeds().sample);
    for (topic, q) in &picks {
        let rec = by_id.get(q.as_str()).with_context(|| format!("membership id {q} is not in the log"))?;
        let item = AnnotationItem {
            query_id: q.clone(),
            query: rec.query.clone(),
            clicks: rec.clicks.iter().map(|c| ItemClick { url: c.url.clone(), snippet: c.snippet.clone() }).collect(),
            topic: *topic,
        };
        queue.push_str(&serde_json::to_string(&item)?);
        queue.push('\n');
    }
    run.output("queue.jsonl", queue);
    run.finish(json!({ "items": picks.len(), "topics": members.len(), "per_cluster": ctx.cfg.per_cluster }))
}

/// Opens the annotation workspace over `queue.jsonl` and `labels.jsonl`.
pub fn open_workspace(ctx: &Context) -> Result<Workspace> {
    let items = read_queue(std::fs::read(ctx.artifact("queue.jsonl")).context("missing input queue.jsonl")?.as_slice())?;
    let store = LabelStore::open(&ctx.artifact("labels.jsonl"))?;
    Ok(Workspace::new(items, ctx.cfg.annotators.iter().cloned(), store)?)
}

fn kappa(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::Kappa);
    let items = read_queue(run.artifact("queue.jsonl")?.as_slice())?;
    run.artifact("labels.jsonl")?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let store = LabelStore::open(&ctx.artifact("labels.jsonl"))?;
    let ws = Workspace::new(items, ctx.cfg.annotators.iter().cloned(), store)?;
    let consensus = ws.consensus();
    let mut tsv = String::new();
    for (q, l) in &consensus {
        writeln!(tsv, "{q}\t{l}")?;
    }
    run.output("consensus.tsv", tsv);
    run.finish(json!({
        "agreement": ws.agreement(),
        "progress": ws.progress(),
        "consensus_items": consensus.len(),
    }))
}

fn features(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::Features);
    let log = read_log(&mut run)?;
    let vocab = read_vocab(&mut run)?;
    let table = read_table(&mut run)?;
    let records = scoped(&mut run, &log.records)?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let feats: Vec<IntentFeatures> = records.iter().map(|r| extract_features(r, &table, &vocab)).collect();
    let ids: Vec<String> = records.iter().map(|r| r.query_id.clone()).collect();
    let matrix = assemble_matrix(&feats)?;
    run.output("features.csv", features_csv(&ids, &feats)?);
    run.finish(json!({ "rows": matrix.rows(), "columns": matrix.cols() }))
}

fn intent_classes(ctx: &Context) -> Vec<IntentLabel> {
    let mut classes = PRODUCT_INTENTS.to_vec();
    if ctx.cfg.with_not_product {
        classes.push(IntentLabel::NotProduct);
    }
    classes
}

fn train_intent(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::TrainIntent);
    let log = read_log(&mut run)?;
    let vocab = read_vocab(&mut run)?;
    let table = read_table(&mut run)?;
    let labels = read_labels(&mut run, "intent_labels", "consensus.tsv")?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let classes = intent_classes(ctx);
    let mut feats = Vec::new();
    let mut y = Vec::new();
    let mut excluded = 0;
    for r in &log.records {
        let Some(l) = labels.get(&r.query_id) else { continue };
        match classes.iter().position(|c| c == l) {
            Some(i) => {
                feats.push(extract_features(r, &table, &vocab));
                y.push(i);
            }
            None => excluded += 1,
        }
    }
    let known: BTreeSet<&str> = log.records.iter().map(|r| r.query_id.as_str()).collect();
    let unmatched = labels.keys().filter(|q| !known.contains(q.as_str())).count();
    let names: Vec<String> = classes.iter().map(|c| c.to_string()).collect();
    let data = Dataset::new(assemble_matrix(&feats)?, y, names)?;
    let seed = ctx.cfg.seeds().intent;
    let kind = ctx.cfg.intent_model;
    let report = cross_validate(kind, &data, ctx.cfg.folds, &ctx.cfg.hyper, seed)?;
    let model = train(kind, &data, &ctx.cfg.hyper, seed)?;
    let mut class_counts: BTreeMap<String, usize> = BTreeMap::new();
    for &l in &data.labels {
        *class_counts.entry(data.class_names[l].clone()).or_default() += 1;
    }
    run.output("intent_model.json", model.to_json() + "\n");
    run.output("intent_eval.csv", report.to_csv());
    run.finish(json!({
        "kind": kind,
        "examples": data.len(),
        "class_counts": class_counts,
        "excluded_labels": excluded,
        "unmatched_labels": unmatched,
        "evaluation": report,
    }))
}

fn classify_intent(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::ClassifyIntent);
    let log = read_log(&mut run)?;
    let vocab = read_vocab(&mut run)?;
    let table = read_table(&mut run)?;
    let model = read_model(&mut run, "intent_model.json")?;
    let records = scoped(&mut run, &log.records)?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let classes = model
        .class_names
        .iter()
        .map(|c| c.parse::<IntentLabel>())
        .collect::<Result<Vec<_>, _>>()
        .context("intent model has a non-intent class")?;
    let feats: Vec<IntentFeatures> = records.iter().map(|r| extract_features(r, &table, &vocab)).collect();
    let pred = if feats.is_empty() { Vec::new() } else { model.predict(&assemble_matrix(&feats)?)? };
    let predicted: HashMap<&str, IntentLabel> =
        records.iter().zip(&pred).map(|(r, &p)| (r.query_id.as_str(), classes[p])).collect();
    let mut tsv = String::new();
    let mut counts: BTreeMap<IntentLabel, usize> = BTreeMap::new();
    for r in &log.records {
        // Queries outside the scope were ruled out by the product classifier.
        let l = predicted.get(r.query_id.as_str()).copied().unwrap_or(IntentLabel::NotProduct);
        *counts.entry(l).or_default() += 1;
        writeln!(tsv, "{}\t{l}", r.query_id)?;
    }
    run.output("intents.tsv", tsv);
    run.finish(json!({ "records": log.records.len(), "classified": records.len(), "counts": counts }))
}

fn analyze(ctx: &Context) -> Result<Outcome> {
    let mut run = StageRun::new(ctx, Stage::Analyze);
    let log = read_log(&mut run)?;
    let labels = read_labels(&mut run, "analysis_labels", "intents.tsv")?;
    if run.up_to_date() {
        return Ok(run.skipped());
    }
    let report = analyze_metrics(&log.records, &labels)?;
    run.output("metrics.csv", report.to_csv());
    run.finish(&report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn share_formatting() {
        assert_eq!(format_share(150, 1000), "15.0%");
        assert_eq!(format_share(1, 3), "33.3%");
        assert_eq!(format_share(0, 7), "0.0%");
    }
}
