//! The `rse` command-line surface.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::{
    create_writer, fmt6, load_model, read_config, save_model, write_jsonl, write_triples,
    ModelArtifact,
};
use crate::error::{Result, RseError};
use crate::evaluation::{
    link_prediction_eval, read_scored_pairs, score_pairs, EvalReport, RelationPoolBuilder,
    HITS_KS,
};
use crate::model::RseModel;
use crate::numerics::SeededRng;
use crate::relation_model::{relation_similarity_matrix, ScoreWeights};
use crate::training::{
    build_model, generate_synthetic_world, ingest_triples, train, SynthConfig, SyntheticWorld,
    TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "rse", version, about = "Relational sentence embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a JSONL triple file and write the best checkpoint.
    Train(TrainArgs),
    /// Print the relational (or weighted) score of one sentence pair.
    Score(ScoreArgs),
    /// Spearman correlation on a TSV file of scored pairs.
    EvalPairs(EvalPairsArgs),
    /// MRR and Hits@{1,3,10} on a JSONL triple file.
    EvalLinkpred(EvalLinkpredArgs),
    /// Cosine similarity between relation embeddings, as TSV.
    RelSim(ModelArg),
    /// One embedding per input line.
    Embed(EmbedArgs),
    /// Write the synthetic relation world.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub triples: PathBuf,
    /// Comma-separated relation names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub relations: Vec<String>,
    #[arg(long, conflicts_with = "dev_linkpred")]
    pub dev_pairs: Option<PathBuf>,
    #[arg(long)]
    pub dev_linkpred: Option<PathBuf>,
    /// Weights for the dev-pairs score (`name=w,...`); defaults to 1.0 each.
    #[arg(long, requires = "dev_pairs")]
    pub dev_weights: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// `key=value` file overriding the default configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the training log as JSONL.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required_unless_present = "weights", conflicts_with = "weights")]
    pub relation: Option<String>,
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub s1: String,
    #[arg(long)]
    pub s2: String,
}

#[derive(Debug, Args)]
pub struct EvalPairsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub pairs: PathBuf,
    /// Defaults to weight 1.0 on every relation.
    #[arg(long)]
    pub weights: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalLinkpredArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub triples: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Score(a) => cmd_score(a, out),
        Command::EvalPairs(a) => cmd_eval_pairs(a, out),
        Command::EvalLinkpred(a) => cmd_eval_linkpred(a, out),
        Command::RelSim(a) => cmd_rel_sim(a, out),
        Command::Embed(a) => cmd_embed(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

fn stdout_err(e: std::io::Error) -> RseError {
    RseError::io("<stdout>", e)
}

fn weights_or_uniform(spec: Option<&str>, model: &RseModel) -> Result<ScoreWeights> {
    match spec {
        Some(s) => ScoreWeights::parse(s),
        None => Ok(ScoreWeights::uniform(&model.relations)),
    }
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_config(p, TrainConfig::default())?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let triples = ingest_triples(&a.triples, &a.relations)?;
    let model = build_model(&triples, &a.relations, &cfg)?;

    let outcome = if let Some(path) = &a.dev_linkpred {
        let dev = ingest_triples(path, &a.relations)?;
        let builder = RelationPoolBuilder::new(&dev);
        train(
            &triples,
            model,
            &cfg,
            Some(|m: &RseModel| {
                link_prediction_eval(&dev, &builder, m).map(|r| r.mrr.unwrap_or(0.0))
            }),
        )?
    } else if let Some(path) = &a.dev_pairs {
        let pairs = read_scored_pairs(path)?;
        let weights = weights_or_uniform(a.dev_weights.as_deref(), &model)?;
        train(
            &triples,
            model,
            &cfg,
            Some(|m: &RseModel| {
                score_pairs(&pairs, m, &weights).map(|r| r.spearman.unwrap_or(0.0))
            }),
        )?
    } else {
        train(&triples, model, &cfg, None::<fn(&RseModel) -> Result<f64>>)?
    };

    save_model(&ModelArtifact::new(outcome.model, cfg), &a.out)?;
    if let Some(path) = &a.log {
        write_jsonl(path, &outcome.log)?;
    }
    let final_loss = outcome.log.last().map(|r| r.loss).unwrap_or(f64::NAN);
    writeln!(out, "steps\t{}", outcome.log.len()).map_err(stdout_err)?;
    writeln!(out, "final_loss\t{}", fmt6(final_loss)).map_err(stdout_err)?;
    if let (Some(step), Some(metric)) = (outcome.best_step, outcome.best_metric) {
        writeln!(out, "best_step\t{step}").map_err(stdout_err)?;
        writeln!(out, "best_dev_metric\t{}", fmt6(metric)).map_err(stdout_err)?;
    }
    Ok(())
}

fn cmd_score(a: ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?.model;
    let value = match (&a.relation, &a.weights) {
        (Some(rel), None) => model.score(&a.s1, &a.s2, rel)?,
        (None, Some(w)) => model.weighted_score(&a.s1, &a.s2, &ScoreWeights::parse(w)?)?,
        _ => {
            return Err(RseError::Config(
                "give exactly one of --relation or --weights".into(),
            ))
        }
    };
    writeln!(out, "{}", fmt6(value)).map_err(stdout_err)
}

fn cmd_eval_pairs(a: EvalPairsArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?.model;
    let pairs = read_scored_pairs(&a.pairs)?;
    let weights = weights_or_uniform(a.weights.as_deref(), &model)?;
    let report = score_pairs(&pairs, &model, &weights)?;
    writeln!(out, "spearman\t{}", fmt6(report.spearman.expect("spearman set"))).map_err(stdout_err)
}

/// TSV lines: a header, `all`, then one line per relation.
pub fn format_linkpred_report(report: &EvalReport) -> String {
    let mut s = String::from("scope\tcount\tmrr");
    for k in HITS_KS {
        s.push_str(&format!("\thits@{k}"));
    }
    s.push('\n');
    let mut line = |scope: &str, r: &EvalReport| {
        s.push_str(&format!("{scope}\t{}\t{}", r.count, fmt6(r.mrr.unwrap_or(0.0))));
        for k in HITS_KS {
            s.push_str(&format!("\t{}", fmt6(r.hits_at.get(&k).copied().unwrap_or(0.0))));
        }
        s.push('\n');
    };
    line("all", report);
    for (rel, sub) in &report.per_relation {
        line(rel, sub);
    }
    s
}

fn cmd_eval_linkpred(a: EvalLinkpredArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?.model;
    let triples = ingest_triples(&a.triples, model.relations.names())?;
    let report = link_prediction_eval(&triples, &RelationPoolBuilder::new(&triples), &model)?;
    out.write_all(format_linkpred_report(&report).as_bytes())
        .map_err(stdout_err)
}

fn cmd_rel_sim(a: ModelArg, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?.model;
    let m = relation_similarity_matrix(&model.relations)?;
    let names = model.relations.names();
    let mut s = String::from("relation");
    for n in names {
        s.push('\t');
        s.push_str(n);
    }
    s.push('\n');
    for (i, n) in names.iter().enumerate() {
        s.push_str(n);
        for v in m.row(i) {
            s.push('\t');
            s.push_str(&fmt6(*v));
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes()).map_err(stdout_err)
}

fn cmd_embed(a: EmbedArgs, _out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?.model;
    let file = fs::File::open(&a.input).map_err(|e| RseError::io(&a.input, e))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RseError::io(&a.input, e))?;
        let emb = model.embed(&line).map_err(|e| RseError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let text: Vec<String> = emb.iter().map(|v| fmt6(*v)).collect();
        lines.push(text.join(" "));
    }
    let mut w = create_writer(&a.out)?;
    for l in lines {
        writeln!(w, "{l}").map_err(|e| RseError::io(&a.out, e))?;
    }
    w.flush().map_err(|e| RseError::io(&a.out, e))
}

fn cmd_synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let world = generate_synthetic_world(&SynthConfig::default(), &mut SeededRng::new(a.seed))?;
    fs::create_dir_all(&a.out_dir).map_err(|e| RseError::io(&a.out_dir, e))?;
    write_synthetic_world(&world, &a.out_dir)?;
    writeln!(
        out,
        "train\t{}\ndev\t{}\ntest\t{}\nrelations\t{}",
        world.train.len(),
        world.dev.len(),
        world.test.len(),
        SyntheticWorld::relation_names().join(",")
    )
    .map_err(stdout_err)
}

/// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl` and `test_pools.jsonl`.
pub fn write_synthetic_world(world: &SyntheticWorld, dir: &std::path::Path) -> Result<()> {
    write_triples(&dir.join("train.jsonl"), &world.train)?;
    write_triples(&dir.join("dev.jsonl"), &world.dev)?;
    write_triples(&dir.join("test.jsonl"), &world.test)?;
    write_jsonl(&dir.join("test_pools.jsonl"), &world.test_pools)
}
