//! One function per subcommand. Each reads its inputs, computes, stages its
//! outputs in a [`RunContext`] and commits them together.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;
use spex::biencoder::{
    bi_train, encode_corpus, image_guidance, BiTrainConfig, Modality, TrainingPair,
};
use spex::caption::{caption_key, embed_captions, to_sparse_set};
use spex::eval::{
    build_exclusion_queries, evaluate_run, paired_t_test, synth_corpus, ExclusionQuery,
};
use spex::io::{self, Checkpoint};
use spex::retrieval::{
    avg_emb_pipeline, exclude_pipeline, InvertedIndex, QueryEncoder, RankedList,
};
use spex::sae::{export_word_sparse, sae_train};

use crate::config::parse_config;
use crate::output::RunContext;
use crate::{Cli, Command, Method, ModalityArg, UsageError};

pub fn run(cli: Cli, flags: &[(String, String)]) -> Result<()> {
    let config = parse_config(cli.config.as_deref(), flags)?;
    log::info!(
        "{} with resolved config:\n{}",
        cli.command.name(),
        config.to_toml()
    );
    let mut ctx = RunContext::new(cli.command.name(), config);
    match cli.command {
        Command::TrainWords {
            words,
            out,
            sparse_out,
        } => train_words(&mut ctx, &words, &out, &sparse_out)?,
        Command::EmbedCaptions {
            captions,
            words,
            out,
        } => embed(&mut ctx, &captions, &words, &out)?,
        Command::TrainBiencoder {
            images,
            texts,
            captions,
            caption_embeddings,
            out,
        } => train_biencoder(
            &mut ctx,
            &images,
            &texts,
            &captions,
            caption_embeddings.as_deref(),
            &out,
        )?,
        Command::EncodeCorpus {
            model,
            input,
            modality,
            guides,
            out,
        } => encode(&mut ctx, &model, &input, modality, guides.as_deref(), &out)?,
        Command::Index { input, out } => index(&mut ctx, &input, &out)?,
        Command::Query {
            index,
            model,
            label_embeddings,
            words,
            label,
            out,
        } => query(
            &mut ctx,
            &index,
            &model,
            &label_embeddings,
            words.as_deref(),
            &label,
            &out,
        )?,
        Command::Exclude {
            method,
            queries,
            include,
            exclude,
            index,
            model,
            words,
            images,
            label_embeddings,
            out,
        } => {
            let args = ExcludeArgs {
                method,
                index: index.as_deref(),
                model: model.as_deref(),
                words: words.as_deref(),
                images: images.as_deref(),
                label_embeddings: &label_embeddings,
            };
            args.check()?;
            let queries = match (queries, include, exclude) {
                (Some(path), _, _) => {
                    ctx.input(&path)?;
                    io::read_queries(&path)?
                        .iter()
                        .map(|q| (q.include().to_owned(), q.exclude().to_owned()))
                        .collect()
                }
                (None, Some(a), Some(b)) => vec![(a, b)],
                _ => {
                    return Err(UsageError(
                        "exclude needs --queries or both --include and --exclude".into(),
                    )
                    .into())
                }
            };
            run_exclude(&mut ctx, &args, &queries, &out)?
        }
        Command::BuildEval { labels, out } => build_eval(&mut ctx, &labels, &out)?,
        Command::Evaluate {
            run,
            queries,
            out,
            json,
        } => evaluate(&mut ctx, &run, &queries, &out, json.as_deref())?,
        Command::Synth { out_dir } => synth(&mut ctx, &out_dir)?,
        Command::Compare {
            run_a,
            run_b,
            queries,
            out,
        } => compare(&mut ctx, &run_a, &run_b, &queries, &out)?,
    }
    for path in ctx.commit()? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn train_words(ctx: &mut RunContext, words: &Path, out: &Path, sparse_out: &Path) -> Result<()> {
    ctx.input(words)?;
    let table = io::read_word_vectors(words)?;
    if table.duplicates() > 0 {
        log::warn!(
            "{}: {} duplicate tokens ignored",
            words.display(),
            table.duplicates()
        );
    }
    let config = ctx.config().sae.clone();
    let (model, trace) = sae_train(&table, &config)?;
    for (epoch, l) in trace.iter().enumerate() {
        log::info!(
            "epoch {}: rl={:.5} asl={:.5} psl={:.5} total={:.5}",
            epoch + 1,
            l.rl,
            l.asl,
            l.psl,
            l.total
        );
    }
    let sparse = export_word_sparse(&model, &table)?;
    log::info!(
        "{} words, mean density {:.4}",
        sparse.len(),
        sparse.mean_density()
    );
    ctx.output(
        out,
        io::encode_checkpoint(&Checkpoint::Sae { model, config })?,
    );
    ctx.output(sparse_out, io::encode_sparse(&sparse)?);
    Ok(())
}

fn embed(ctx: &mut RunContext, captions: &Path, words: &Path, out: &Path) -> Result<()> {
    ctx.input(captions)?;
    ctx.input(words)?;
    let records = io::read_captions(captions)?;
    let words = io::read_sparse_set(words)?;
    let embedded = embed_captions(&records, &words);
    let all_oov = embedded.iter().filter(|e| e.all_oov()).count();
    if all_oov > 0 {
        log::warn!(
            "{all_oov} of {} captions have no in-vocabulary token",
            embedded.len()
        );
    }
    ctx.output(
        out,
        io::encode_sparse(&to_sparse_set(words.dim(), &embedded)?)?,
    );
    Ok(())
}

/// Pairs every caption with its image; the text id is `imageid#k`, k counting
/// that image's captions in file order.
fn training_pairs(captions: &[io::CaptionRecord]) -> Vec<TrainingPair> {
    let mut next: HashMap<&str, usize> = HashMap::new();
    captions
        .iter()
        .map(|c| {
            let k = next.entry(c.image_id.as_str()).or_insert(0);
            let pair = TrainingPair {
                image_id: c.image_id.clone(),
                text_id: caption_key(&c.image_id, *k),
            };
            *k += 1;
            pair
        })
        .collect()
}

fn train_biencoder(
    ctx: &mut RunContext,
    images: &Path,
    texts: &Path,
    captions: &Path,
    caption_embeddings: Option<&Path>,
    out: &Path,
) -> Result<()> {
    for p in [images, texts, captions]
        .into_iter()
        .chain(caption_embeddings)
    {
        ctx.input(p)?;
    }
    let image_set = io::read_dense_set(images)?;
    let text_set = io::read_dense_set(texts)?;
    let pairs = training_pairs(&io::read_captions(captions)?);
    let guides = caption_embeddings.map(io::read_sparse_set).transpose()?;
    if guides.is_none() {
        log::warn!("no caption embeddings given; masks use top-t only");
    }
    let config = ctx.config().bi.clone();
    let (model, trace) = bi_train(&image_set, &text_set, guides.as_ref(), &pairs, &config)?;
    for (epoch, l) in trace.iter().enumerate() {
        log::info!(
            "epoch {}: rl={:.5} cl={:.5} total={:.5}",
            epoch + 1,
            l.rl,
            l.cl,
            l.total
        );
    }
    ctx.output(
        out,
        io::encode_checkpoint(&Checkpoint::BiEncoder { model, config })?,
    );
    Ok(())
}

/// Mask settings come from the checkpoint, so encoding matches training
/// whatever the current `bi.*` settings are.
fn load_model(
    ctx: &mut RunContext,
    path: &Path,
) -> Result<(spex::biencoder::BiEncoderModel, BiTrainConfig)> {
    ctx.input(path)?;
    let (model, config) = io::load_biencoder(path)?;
    log::info!(
        "{}: top_t={} eps_active={}",
        path.display(),
        config.top_t,
        config.eps_active
    );
    Ok((model, config))
}

fn encode(
    ctx: &mut RunContext,
    model: &Path,
    input: &Path,
    modality: ModalityArg,
    guides: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (model, config) = load_model(ctx, model)?;
    ctx.input(input)?;
    let corpus = io::read_dense_set(input)?;
    let modality = match modality {
        ModalityArg::Image => Modality::Image,
        ModalityArg::Text => Modality::Text,
    };
    let guides = match guides {
        Some(p) => {
            ctx.input(p)?;
            let captions = io::read_sparse_set(p)?;
            Some(if modality == Modality::Image {
                image_guidance(&captions)?
            } else {
                captions
            })
        }
        None => None,
    };
    let sparse = encode_corpus(&model, &corpus, modality, guides.as_ref(), &config)?;
    log::info!(
        "{} records, mean density {:.4}",
        sparse.len(),
        sparse.mean_density()
    );
    ctx.output(out, io::encode_sparse(&sparse)?);
    Ok(())
}

fn index(ctx: &mut RunContext, input: &Path, out: &Path) -> Result<()> {
    ctx.input(input)?;
    let set = io::read_sparse_set(input)?;
    let idx = InvertedIndex::build(&set)?;
    let postings: Vec<usize> = (0..idx.dim()).map(|d| idx.posting(d).len()).collect();
    let summary = json!({
        "records": idx.len(),
        "dim": idx.dim(),
        "nonzeros": postings.iter().sum::<usize>(),
        "empty_records": set.iter().filter(|(_, v)| v.is_empty()).count(),
        "unused_dims": postings.iter().filter(|&&n| n == 0).count(),
        "mean_density": set.mean_density(),
        "posting_lengths": postings,
    });
    ctx.output(out, serde_json::to_string_pretty(&summary)? + "\n");
    Ok(())
}

fn query(
    ctx: &mut RunContext,
    index_path: &Path,
    model: &Path,
    label_embeddings: &Path,
    words: Option<&Path>,
    label: &str,
    out: &Path,
) -> Result<()> {
    let (model, config) = load_model(ctx, model)?;
    for p in [index_path, label_embeddings].into_iter().chain(words) {
        ctx.input(p)?;
    }
    let idx = InvertedIndex::build(&io::read_sparse_set(index_path)?)?;
    let labels = io::read_dense_set(label_embeddings)?;
    let words = words.map(io::read_sparse_set).transpose()?;
    let encoder = QueryEncoder {
        model: &model,
        label_embeddings: &labels,
        words: words.as_ref(),
        top_t: config.top_t,
        eps_active: config.eps_active,
    };
    let q = encoder.label_query_vector(label)?;
    let ranked = idx.search(&q, ctx.config().retrieval.k_return)?;
    ctx.output(out, io::encode_run(&[(label.to_owned(), ranked)])?);
    Ok(())
}

struct ExcludeArgs<'a> {
    method: Method,
    index: Option<&'a Path>,
    model: Option<&'a Path>,
    words: Option<&'a Path>,
    images: Option<&'a Path>,
    label_embeddings: &'a Path,
}

impl ExcludeArgs<'_> {
    /// Flag combinations are checked before any input is read.
    fn check(&self) -> Result<()> {
        match self.method {
            Method::Sr => {
                required(self.index, "--index", "sr")?;
                required(self.model, "--model", "sr")?;
                if self.images.is_some() {
                    return Err(UsageError("--images applies to --method avg-emb".into()).into());
                }
            }
            Method::AvgEmb => {
                required(self.images, "--images", "avg-emb")?;
                if self.index.is_some() || self.model.is_some() || self.words.is_some() {
                    return Err(UsageError(
                        "--index, --model and --words apply to --method sr".into(),
                    )
                    .into());
                }
            }
        }
        Ok(())
    }
}

fn required<'a>(value: Option<&'a Path>, flag: &str, method: &str) -> Result<&'a Path> {
    value.ok_or_else(|| UsageError(format!("--method {method} requires {flag}")).into())
}

fn run_exclude(
    ctx: &mut RunContext,
    args: &ExcludeArgs<'_>,
    queries: &[(String, String)],
    out: &Path,
) -> Result<()> {
    ctx.input(args.label_embeddings)?;
    let labels = io::read_dense_set(args.label_embeddings)?;
    let params = ctx.config().retrieval.clone();
    let mut run: Vec<(String, RankedList)> = Vec::with_capacity(queries.len());
    let id = |a: &str, b: &str| format!("{a}|{b}");
    match args.method {
        Method::Sr => {
            let index_path = required(args.index, "--index", "sr")?;
            let model_path = required(args.model, "--model", "sr")?;
            let (model, config) = load_model(ctx, model_path)?;
            for p in [index_path].into_iter().chain(args.words) {
                ctx.input(p)?;
            }
            let idx = InvertedIndex::build(&io::read_sparse_set(index_path)?)?;
            let words = args.words.map(io::read_sparse_set).transpose()?;
            let encoder = QueryEncoder {
                model: &model,
                label_embeddings: &labels,
                words: words.as_ref(),
                top_t: config.top_t,
                eps_active: config.eps_active,
            };
            let mut empty = 0usize;
            for (a, b) in queries {
                let result = exclude_pipeline(&idx, a, b, &params, &encoder)?;
                if result.empty_remainder {
                    log::warn!("{a} but not {b}: every dimension of {a} is shared with {b}");
                    empty += 1;
                }
                run.push((id(a, b), result.ranked));
            }
            if empty > 0 {
                log::warn!(
                    "{empty} of {} queries had an empty remainder",
                    queries.len()
                );
            }
        }
        Method::AvgEmb => {
            let images_path = required(args.images, "--images", "avg-emb")?;
            ctx.input(images_path)?;
            let images = io::read_dense_set(images_path)?;
            for (a, b) in queries {
                run.push((id(a, b), avg_emb_pipeline(&images, &labels, a, b, &params)?));
            }
        }
    }
    ctx.output(out, io::encode_run(&run)?);
    Ok(())
}

fn build_eval(ctx: &mut RunContext, labels: &Path, out: &Path) -> Result<()> {
    ctx.input(labels)?;
    let labeled = io::read_labels(labels)?;
    let eval = &ctx.config().eval;
    let queries = build_exclusion_queries(&labeled, eval.min_co, eval.min_excl)?;
    if queries.is_empty() {
        log::warn!(
            "no label pair meets min_co={} and min_excl={}",
            eval.min_co,
            eval.min_excl
        );
    }
    log::info!("{} exclusion queries", queries.len());
    ctx.output(out, io::encode_queries(&queries));
    Ok(())
}

fn load_queries(ctx: &mut RunContext, path: &Path) -> Result<Vec<ExclusionQuery>> {
    ctx.input(path)?;
    let queries = io::read_queries(path)?;
    if queries.is_empty() {
        bail!("{}: no queries", path.display());
    }
    Ok(queries)
}

fn evaluate(
    ctx: &mut RunContext,
    run: &Path,
    queries: &Path,
    out: &Path,
    json: Option<&Path>,
) -> Result<()> {
    let queries = load_queries(ctx, queries)?;
    ctx.input(run)?;
    let ranked = io::read_run(run)?;
    let metrics = ctx.config().eval.parsed_metrics()?;
    let report = evaluate_run(&ranked, &queries, &metrics)?;
    let text = report.to_text();
    // Header and means; the per-query rows go to the report file only.
    let lines: Vec<&str> = text.lines().collect();
    println!("{}", lines[0]);
    println!("{}", lines[lines.len() - 2]);
    ctx.output(out, text);
    if let Some(path) = json {
        ctx.output(path, report.to_json());
    }
    Ok(())
}

fn compare(
    ctx: &mut RunContext,
    run_a: &Path,
    run_b: &Path,
    queries: &Path,
    out: &Path,
) -> Result<()> {
    let queries = load_queries(ctx, queries)?;
    ctx.input(run_a)?;
    ctx.input(run_b)?;
    let metric = ctx.config().eval.compare_metric()?;
    let alpha = ctx.config().eval.alpha;
    let column = |path: &Path| -> Result<(f64, Vec<f64>)> {
        let report = evaluate_run(&io::read_run(path)?, &queries, &[metric])
            .with_context(|| format!("{}", path.display()))?;
        Ok((
            report.means[0],
            report.column(metric).expect("metric present"),
        ))
    };
    let (mean_a, a) = column(run_a)?;
    let (mean_b, b) = column(run_b)?;
    let test = paired_t_test(&a, &b, alpha)?;
    let verdict = verdict_line(metric, mean_a, mean_b, &test);
    println!("{verdict}");
    // File names only, so the result does not depend on where the runs live.
    let name = |p: &Path| {
        p.file_name().map_or_else(
            || p.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        )
    };
    let result = json!({
        "metric": metric,
        "queries": queries.len(),
        "a": {"run": name(run_a), "mean": mean_a},
        "b": {"run": name(run_b), "mean": mean_b},
        "ttest": test,
        "verdict": verdict,
    });
    ctx.output(out, serde_json::to_string_pretty(&result)? + "\n");
    Ok(())
}

fn verdict_line(
    metric: spex::eval::Metric,
    mean_a: f64,
    mean_b: f64,
    t: &spex::eval::TTestResult,
) -> String {
    let head = format!(
        "{metric}: A {mean_a:.4} vs B {mean_b:.4} over {} queries",
        t.n
    );
    if t.degenerate {
        return format!("{head}; differences have zero variance, no test possible");
    }
    let (Some(stat), Some(p)) = (t.t_statistic, t.p_value) else {
        return format!("{head}; no test possible");
    };
    let better = if mean_a > mean_b { "A" } else { "B" };
    let level = 100.0 * (1.0 - t.alpha);
    if t.significant {
        format!(
            "{head}; t = {stat:.4}, df = {}, p = {p:.4}: {better} significantly better at {level}%",
            t.degrees_of_freedom
        )
    } else {
        format!(
            "{head}; t = {stat:.4}, df = {}, p = {p:.4}: not significant at {level}%",
            t.degrees_of_freedom
        )
    }
}

fn synth(ctx: &mut RunContext, out_dir: &Path) -> Result<()> {
    let corpus = synth_corpus(&ctx.config().synth)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("{}", out_dir.display()))?;
    let at = |name: &str| out_dir.join(name);
    ctx.output(&at("images.demb"), io::encode_dense(&corpus.images)?);
    ctx.output(&at("texts.demb"), io::encode_dense(&corpus.texts)?);
    ctx.output(&at("captions.jsonl"), io::encode_captions(&corpus.captions));
    ctx.output(&at("labels.jsonl"), io::encode_labels(&corpus.labels));
    ctx.output(
        &at("label_embeddings.demb"),
        io::encode_dense(&corpus.label_embeddings)?,
    );
    ctx.output(&at("words.txt"), io::encode_word_vectors(&corpus.words));
    log::info!(
        "{} images, {} labels, {} words",
        corpus.images.len(),
        corpus.label_embeddings.len(),
        corpus.words.len()
    );
    Ok(())
}
