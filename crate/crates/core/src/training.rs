//! Dataset handling, hard-negative sampling, the training loop with
//! dev-metric checkpoint selection, and the synthetic relation world.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrastive::{
    grad_cache_step, naive_step, LossVariant, Objective, StepSpec, TokenizedTriple, DEFAULT_TAU,
};
use crate::encoder::{DEFAULT_DIM, DEFAULT_MAX_LEN};
use crate::error::{Result, RseError};
use crate::model::RseModel;
use crate::numerics::{adam_step, seeded_shuffle, AdamState, SeededRng};

/// One supervised sample `(head, relation, tail)` with an optional hard
/// negative tail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_neg: Option<String>,
}

impl SentenceTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
            hard_neg: None,
        }
    }

    pub fn validate<S: AsRef<str>>(&self, schema: &[S]) -> Result<()> {
        if self.head.trim().is_empty() || self.tail.trim().is_empty() {
            return Err(RseError::Schema("head and tail must be non-empty".into()));
        }
        if matches!(&self.hard_neg, Some(n) if n.trim().is_empty()) {
            return Err(RseError::Schema("hard_neg must be non-empty when present".into()));
        }
        if !schema.iter().any(|s| s.as_ref() == self.relation) {
            return Err(RseError::Schema(format!("unknown relation {:?}", self.relation)));
        }
        Ok(())
    }
}

/// Parses line-delimited JSON triples and validates them against `schema`.
/// Blank lines are skipped.
pub fn parse_triples<R: BufRead, S: AsRef<str>>(reader: R, schema: &[S]) -> Result<Vec<SentenceTriple>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| RseError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let triple: SentenceTriple = serde_json::from_str(&line).map_err(|e| RseError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        triple.validate(schema).map_err(|e| match e {
            RseError::Schema(msg) => RseError::Schema(format!("line {lineno}: {msg}")),
            other => other,
        })?;
        out.push(triple);
    }
    Ok(out)
}

pub fn ingest_triples<S: AsRef<str>>(path: &Path, schema: &[S]) -> Result<Vec<SentenceTriple>> {
    let file = File::open(path).map_err(|e| RseError::io(path, e))?;
    parse_triples(BufReader::new(file), schema)
}

/// Down-samples every relation with more than `cap` triples to exactly
/// `cap`, uniformly without replacement. Surviving triples keep their input
/// order.
pub fn cap_per_relation(
    triples: &[SentenceTriple],
    cap: usize,
    rng: &mut SeededRng,
) -> Result<Vec<SentenceTriple>> {
    if cap == 0 {
        return Err(RseError::Config("per-relation cap must be >= 1".into()));
    }
    let mut by_relation: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        by_relation.entry(&t.relation).or_default().push(i);
    }
    let mut keep = vec![true; triples.len()];
    for idx in by_relation.values_mut() {
        if idx.len() > cap {
            seeded_shuffle(idx, rng);
            for &dropped in &idx[cap..] {
                keep[dropped] = false;
            }
        }
    }
    Ok(triples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(t, _)| t.clone())
        .collect())
}

/// Fills `hard_neg` with a random in-relation tail that differs from the
/// gold tail. A hard negative that is already present is kept.
pub fn sample_hard_negative<P: AsRef<str>>(
    triple: &SentenceTriple,
    relation_pool: &[P],
    rng: &mut SeededRng,
) -> Result<SentenceTriple> {
    if triple.hard_neg.is_some() {
        return Ok(triple.clone());
    }
    if relation_pool.is_empty() {
        return Err(RseError::NoNegativeAvailable(format!(
            "empty pool for relation {:?}",
            triple.relation
        )));
    }
    let eligible = |s: &str| s != triple.tail;
    // Rejection sampling is uniform over eligible entries; fall back to an
    // explicit list when the gold tail dominates the pool.
    let mut chosen = None;
    for _ in 0..32 {
        let cand = relation_pool[rng.index(relation_pool.len())].as_ref();
        if eligible(cand) {
            chosen = Some(cand.to_string());
            break;
        }
    }
    if chosen.is_none() {
        let list: Vec<&str> = relation_pool
            .iter()
            .map(AsRef::as_ref)
            .filter(|s| eligible(s))
            .collect();
        if list.is_empty() {
            return Err(RseError::NoNegativeAvailable(format!(
                "pool for relation {:?} only contains the gold tail",
                triple.relation
            )));
        }
        chosen = Some(list[rng.index(list.len())].to_string());
    }
    Ok(SentenceTriple {
        hard_neg: chosen,
        ..triple.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Relational,
    Merged,
}

impl From<ObjectiveKind> for Objective {
    fn from(k: ObjectiveKind) -> Self {
        match k {
            ObjectiveKind::Relational => Objective::Relational,
            ObjectiveKind::Merged => Objective::Merged,
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tau: f64,
    pub batch_size: usize,
    pub encoder_lr: f64,
    pub relation_lr: f64,
    pub epochs: usize,
    pub eval_every_steps: usize,
    pub per_relation_cap: usize,
    pub seed: u64,
    /// Sub-batch size for the two-pass gradient computation. `None`, or a
    /// value `>= batch_size`, computes gradients in one pass.
    pub sub_batch_size: Option<usize>,
    pub hard_negatives: bool,
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub max_len: usize,
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            batch_size: 64,
            encoder_lr: 5e-4,
            relation_lr: 1e-2,
            epochs: 3,
            eval_every_steps: 125,
            per_relation_cap: 150_000,
            seed: 0,
            sub_batch_size: None,
            hard_negatives: true,
            objective: ObjectiveKind::Relational,
            dim: DEFAULT_DIM,
            max_len: DEFAULT_MAX_LEN,
            min_count: 1,
        }
    }
}

impl TrainConfig {
    /// Learning rates may be zero, which freezes the corresponding block.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(RseError::Config(msg.into()));
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad("tau must be > 0");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if !(self.encoder_lr >= 0.0) || !(self.relation_lr >= 0.0) {
            return bad("learning rates must be >= 0");
        }
        if self.eval_every_steps == 0 {
            return bad("eval_every_steps must be >= 1");
        }
        if self.per_relation_cap == 0 {
            return bad("per_relation_cap must be >= 1");
        }
        if self.sub_batch_size == Some(0) {
            return bad("sub_batch_size must be >= 1");
        }
        if self.dim == 0 || self.max_len == 0 || self.min_count == 0 {
            return bad("dim, max_len and min_count must be >= 1");
        }
        Ok(())
    }
}

/// Keeps the snapshot with the highest metric; ties keep the earliest.
#[derive(Debug, Clone)]
pub struct CheckpointSelector<T> {
    pub metric_name: String,
    best: Option<(f64, usize, T)>,
}

impl<T> CheckpointSelector<T> {
    pub fn new(metric_name: impl Into<String>) -> Self {
        Self {
            metric_name: metric_name.into(),
            best: None,
        }
    }

    /// Offers a candidate; `snapshot` is only called when it becomes the best.
    pub fn offer(&mut self, step: usize, metric: f64, snapshot: impl FnOnce() -> T) -> bool {
        let better = match &self.best {
            None => true,
            Some((m, _, _)) => metric > *m,
        };
        if better {
            self.best = Some((metric, step, snapshot()));
        }
        better
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn best_step(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.1)
    }

    pub fn into_best(self) -> Option<T> {
        self.best.map(|b| b.2)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best checkpoint by dev metric, or the final model when no dev
    /// evaluator was supplied.
    pub model: RseModel,
    pub final_model: RseModel,
    pub log: Vec<LogRecord>,
    pub best_step: Option<usize>,
    pub best_metric: Option<f64>,
}

struct Optimizers {
    table: AdamState,
    weight: AdamState,
    bias: AdamState,
    relations: AdamState,
}

fn tokenize_triple(model: &RseModel, t: &SentenceTriple) -> Result<TokenizedTriple> {
    Ok(TokenizedTriple {
        head: model.tokenize(&t.head)?,
        relation: model.relations.require_id(&t.relation)?,
        tail: model.tokenize(&t.tail)?,
        hard_neg: t.hard_neg.as_deref().map(|s| model.tokenize(s)).transpose()?,
    })
}

fn apply_updates(
    model: &mut RseModel,
    grads: &crate::contrastive::StepGrads,
    opt: &mut Optimizers,
    cfg: &TrainConfig,
) -> Result<()> {
    if cfg.encoder_lr > 0.0 {
        let enc = &mut model.encoder;
        let table_grad = grads.encoder.table_dense(enc.vocab_size());
        adam_step(enc.embedding_table.as_mut_slice(), &table_grad, &mut opt.table, cfg.encoder_lr)?;
        adam_step(
            enc.projection_weight.as_mut_slice(),
            &grads.encoder.weight,
            &mut opt.weight,
            cfg.encoder_lr,
        )?;
        adam_step(&mut enc.projection_bias, &grads.encoder.bias, &mut opt.bias, cfg.encoder_lr)?;
    }
    if cfg.relation_lr > 0.0 && cfg.objective == ObjectiveKind::Relational {
        adam_step(
            model.relations.embeddings_mut().as_mut_slice(),
            grads.relations.as_slice(),
            &mut opt.relations,
            cfg.relation_lr,
        )?;
    }
    Ok(())
}

/// Runs the epoch loop.
///
/// Each epoch reshuffles the (capped) dataset, cuts it into batches of
/// `batch_size` (a trailing batch of fewer than 2 triples is dropped), draws
/// fresh hard negatives, computes gradients, and applies Adam with separate
/// learning rates for the encoder and the relation rows. `dev_eval` runs every
/// `eval_every_steps` steps and after the last step.
pub fn train<F>(
    dataset: &[SentenceTriple],
    mut model: RseModel,
    cfg: &TrainConfig,
    mut dev_eval: Option<F>,
) -> Result<TrainOutcome>
where
    F: FnMut(&RseModel) -> Result<f64>,
{
    cfg.validate()?;
    let names = model.relations.names().to_vec();
    for t in dataset {
        t.validate(&names)?;
    }
    if cfg.objective == ObjectiveKind::Merged {
        // The merged loss never sees relation rows; score with it the same way.
        model.relations.embeddings_mut().as_mut_slice().fill(0.0);
    }
    let mut rng = SeededRng::new(cfg.seed);
    let data = cap_per_relation(dataset, cfg.per_relation_cap, &mut rng)?;
    if data.len() < 2 {
        return Err(RseError::BatchSize(format!(
            "{} triples after capping; need at least 2",
            data.len()
        )));
    }
    let mut pools: HashMap<&str, Vec<&str>> = HashMap::new();
    for t in &data {
        pools.entry(&t.relation).or_default().push(&t.tail);
    }

    let spec = StepSpec {
        tau: cfg.tau,
        objective: cfg.objective.into(),
        variant: if cfg.hard_negatives {
            LossVariant::HardNeg
        } else {
            LossVariant::InBatch
        },
    };
    let mut opt = Optimizers {
        table: AdamState::new(model.encoder.embedding_table.as_slice().len()),
        weight: AdamState::new(model.encoder.projection_weight.as_slice().len()),
        bias: AdamState::new(model.encoder.projection_bias.len()),
        relations: AdamState::new(model.relations.embeddings().as_slice().len()),
    };
    let mut selector = CheckpointSelector::new("dev");
    let mut log = Vec::new();
    let mut step = 0usize;
    let mut last_eval = 0usize;

    let mut evaluate = |model: &RseModel,
                        step: usize,
                        selector: &mut CheckpointSelector<RseModel>|
     -> Result<Option<f64>> {
        match dev_eval.as_mut() {
            None => Ok(None),
            Some(f) => {
                let metric = f(model).map_err(|e| RseError::DevEval {
                    step,
                    msg: e.to_string(),
                })?;
                if !metric.is_finite() {
                    return Err(RseError::DevEval {
                        step,
                        msg: format!("non-finite dev metric {metric}"),
                    });
                }
                selector.offer(step, metric, || model.clone());
                Ok(Some(metric))
            }
        }
    };

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        seeded_shuffle(&mut order, &mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let triple = if cfg.hard_negatives {
                    sample_hard_negative(&data[i], &pools[data[i].relation.as_str()], &mut rng)?
                } else {
                    data[i].clone()
                };
                batch.push(tokenize_triple(&model, &triple)?);
            }
            let grads = match cfg.sub_batch_size {
                Some(sub) if sub < batch.len() => {
                    grad_cache_step(&batch, sub, &model.encoder, &model.relations, &spec)
                }
                _ => naive_step(&batch, &model.encoder, &model.relations, &spec),
            }
            .map_err(|e| match e {
                RseError::Numeric(msg) => {
                    RseError::Numeric(format!("step {}, epoch {epoch}: {msg}", step + 1))
                }
                other => other,
            })?;
            if !grads.loss.is_finite() {
                return Err(RseError::Numeric(format!(
                    "non-finite loss at step {}, epoch {epoch}",
                    step + 1
                )));
            }
            apply_updates(&mut model, &grads, &mut opt, cfg)?;
            step += 1;
            let dev_metric = if step.is_multiple_of(cfg.eval_every_steps) {
                last_eval = step;
                evaluate(&model, step, &mut selector)?
            } else {
                None
            };
            log.push(LogRecord {
                step,
                epoch,
                loss: grads.loss,
                dev_metric,
            });
        }
    }
    if step > 0 && last_eval != step {
        let metric = evaluate(&model, step, &mut selector)?;
        if let Some(last) = log.last_mut() {
            last.dev_metric = metric;
        }
    }

    let best_step = selector.best_step();
    let best_metric = selector.best_metric();
    let best = selector.into_best().unwrap_or_else(|| model.clone());
    Ok(TrainOutcome {
        model: best,
        final_model: model,
        log,
        best_step,
        best_metric,
    })
}

/// Offset mixed into the config seed for model initialization, so that the
/// init stream and the training stream differ.
pub const INIT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Builds the vocabulary from every sentence in `triples` and initializes a
/// model with `d_in = d = cfg.dim`.
pub fn build_model<S: AsRef<str>>(
    triples: &[SentenceTriple],
    relation_names: &[S],
    cfg: &TrainConfig,
) -> Result<RseModel> {
    let corpus: Vec<&str> = triples
        .iter()
        .flat_map(|t| [Some(t.head.as_str()), Some(t.tail.as_str()), t.hard_neg.as_deref()])
        .flatten()
        .collect();
    let vocab = crate::encoder::build_vocab(&corpus, cfg.min_count)?;
    let mut rng = SeededRng::new(cfg.seed.wrapping_add(INIT_SEED_OFFSET));
    RseModel::init(vocab, relation_names, cfg.dim, cfg.dim, cfg.max_len, &mut rng)
}

/// Parameters of the synthetic relation world.
///
/// Every head sentence holds exactly one marker `A` among filler tokens. The
/// `rel_b` tail replaces `A` by `B`; the `rel_c` tail replaces it by `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub filler_tokens: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub train_heads: usize,
    pub test_heads: usize,
    /// Extra heads, disjoint from train and test, used for checkpoint selection.
    pub dev_heads: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            filler_tokens: 50,
            min_len: 3,
            max_len: 6,
            train_heads: 300,
            test_heads: 100,
            dev_heads: 50,
        }
    }
}

pub const REL_B: &str = "rel_b";
pub const REL_C: &str = "rel_c";
pub const MARKER_HEAD: &str = "A";
pub const MARKER_B: &str = "B";
pub const MARKER_C: &str = "C";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub train: Vec<SentenceTriple>,
    pub dev: Vec<SentenceTriple>,
    pub test: Vec<SentenceTriple>,
    /// Candidate pools for the test triples, in test order.
    pub test_pools: Vec<crate::evaluation::CandidatePool>,
}

impl SyntheticWorld {
    pub fn relation_names() -> [&'static str; 2] {
        [REL_B, REL_C]
    }
}

fn filler(i: usize) -> String {
    format!("w{i}")
}

pub fn generate_synthetic_world(cfg: &SynthConfig, rng: &mut SeededRng) -> Result<SyntheticWorld> {
    if cfg.filler_tokens == 0 || cfg.min_len < 2 || cfg.max_len < cfg.min_len {
        return Err(RseError::Config(
            "need filler_tokens >= 1 and 2 <= min_len <= max_len".into(),
        ));
    }
    let total = cfg.train_heads + cfg.test_heads + cfg.dev_heads;
    // Heads are distinct as token multisets, since the encoder cannot tell
    // permutations apart.
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut heads: Vec<Vec<String>> = Vec::with_capacity(total);
    let mut attempts = 0usize;
    while heads.len() < total {
        attempts += 1;
        if attempts > 1000 * total.max(1) {
            return Err(RseError::Config(
                "cannot draw enough distinct head sentences; enlarge the filler vocabulary".into(),
            ));
        }
        let len = cfg.min_len + rng.index(cfg.max_len - cfg.min_len + 1);
        let fillers: Vec<usize> = (0..len - 1).map(|_| rng.index(cfg.filler_tokens)).collect();
        let marker_pos = rng.index(len);
        let mut key = fillers.clone();
        key.sort_unstable();
        if !seen.insert(key) {
            continue;
        }
        let mut words: Vec<String> = fillers.into_iter().map(filler).collect();
        words.insert(marker_pos, MARKER_HEAD.to_string());
        heads.push(words);
    }

    let triples_for = |words: &[String]| -> Vec<SentenceTriple> {
        let head = words.join(" ");
        let swap = |m: &str| {
            words
                .iter()
                .map(|w| if w == MARKER_HEAD { m } else { w.as_str() })
                .collect::<Vec<_>>()
                .join(" ")
        };
        vec![
            SentenceTriple::new(head.clone(), REL_B, swap(MARKER_B)),
            SentenceTriple::new(head, REL_C, swap(MARKER_C)),
        ]
    };
    let (train_h, rest) = heads.split_at(cfg.train_heads);
    let (test_h, dev_h) = rest.split_at(cfg.test_heads);
    let train: Vec<_> = train_h.iter().flat_map(|h| triples_for(h)).collect();
    let test: Vec<_> = test_h.iter().flat_map(|h| triples_for(h)).collect();
    let dev: Vec<_> = dev_h.iter().flat_map(|h| triples_for(h)).collect();
    use crate::evaluation::CandidatePoolBuilder;
    let builder = crate::evaluation::RelationPoolBuilder::new(&test);
    let test_pools = test
        .iter()
        .map(|t| builder.pool_for(t))
        .collect::<Result<_>>()?;
    Ok(SyntheticWorld {
        train,
        dev,
        test,
        test_pools,
    })
}
