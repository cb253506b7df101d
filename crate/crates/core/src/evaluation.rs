//! Spearman correlation on scored sentence pairs, link prediction (MRR and
//! Hits@k), and per-relation score selection.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RseError};
use crate::model::RseModel;
use crate::numerics::{DenseVector, Matrix};
use crate::relation_model::{relational_score, weighted_relational_score, ScoreWeights};
use crate::training::SentenceTriple;

pub const HITS_KS: [usize; 3] = [1, 3, 10];

/// A sentence pair with a human similarity score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub sent1: String,
    pub sent2: String,
    pub gold_score: f64,
}

/// Parses tab-separated `sent1 \t sent2 \t score` lines. Blank lines are
/// skipped.
pub fn parse_scored_pairs<R: BufRead>(reader: R) -> Result<Vec<ScoredPair>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| RseError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(RseError::Parse {
                line: lineno,
                msg: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let gold_score: f64 = cols[2].trim().parse().map_err(|_| RseError::Parse {
            line: lineno,
            msg: format!("score {:?} is not a number", cols[2]),
        })?;
        if !gold_score.is_finite() {
            return Err(RseError::Parse {
                line: lineno,
                msg: "score must be finite".into(),
            });
        }
        out.push(ScoredPair {
            sent1: cols[0].to_string(),
            sent2: cols[1].to_string(),
            gold_score,
        });
    }
    Ok(out)
}

pub fn read_scored_pairs(path: &Path) -> Result<Vec<ScoredPair>> {
    let file = File::open(path).map_err(|e| RseError::io(path, e))?;
    parse_scored_pairs(BufReader::new(file))
}

/// Evaluation results. Link-prediction fields are filled by
/// [`link_prediction_eval`], `spearman` by [`score_pairs`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub spearman: Option<f64>,
    pub mrr: Option<f64>,
    pub hits_at: BTreeMap<usize, f64>,
    pub per_relation: BTreeMap<String, EvalReport>,
}

/// Average (fractional) ranks, 1-based; ties share the mean of their positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(RseError::Shape(format!(
            "{} predictions vs {} gold scores",
            pred.len(),
            gold.len()
        )));
    }
    if pred.len() < 2 {
        return Err(RseError::DegenerateInput(
            "spearman needs at least 2 observations".into(),
        ));
    }
    if pred.iter().chain(gold).any(|v| !v.is_finite()) {
        return Err(RseError::Numeric("non-finite value in spearman input".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(pred) || constant(gold) {
        return Err(RseError::DegenerateInput("constant sequence".into()));
    }
    Ok(pearson(&fractional_ranks(pred), &fractional_ranks(gold)))
}

/// Embeds each distinct sentence once.
struct EmbeddingCache<'m> {
    model: &'m RseModel,
    cache: HashMap<String, DenseVector>,
}

impl<'m> EmbeddingCache<'m> {
    fn new(model: &'m RseModel) -> Self {
        Self {
            model,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, s: &str) -> Result<DenseVector> {
        if let Some(v) = self.cache.get(s) {
            return Ok(v.clone());
        }
        let v = self.model.embed(s)?;
        self.cache.insert(s.to_string(), v.clone());
        Ok(v)
    }
}

/// Predicts a weighted relational score for each pair and correlates the
/// predictions with the gold scores.
pub fn score_pairs(pairs: &[ScoredPair], model: &RseModel, weights: &ScoreWeights) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(RseError::EmptyInput("no scored pairs".into()));
    }
    let mut cache = EmbeddingCache::new(model);
    let mut pred = Vec::with_capacity(pairs.len());
    for p in pairs {
        let a = cache.get(&p.sent1)?;
        let b = cache.get(&p.sent2)?;
        pred.push(weighted_relational_score(&a, &b, weights, &model.relations)?);
    }
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold_score).collect();
    Ok(EvalReport {
        count: pairs.len(),
        spearman: Some(spearman(&pred, &gold)?),
        ..EvalReport::default()
    })
}

/// `1 + #{strictly above} + 0.5 · #{other candidates tied with the target}`.
pub fn rank_from_scores(scores: &[f64], target_index: usize) -> Result<f64> {
    let target = *scores.get(target_index).ok_or_else(|| {
        RseError::Protocol(format!(
            "target index {target_index} out of {} candidates",
            scores.len()
        ))
    })?;
    let mut above = 0usize;
    let mut ties = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if i == target_index {
            continue;
        }
        if s > target {
            above += 1;
        } else if s == target {
            ties += 1;
        }
    }
    Ok(1.0 + above as f64 + 0.5 * ties as f64)
}

/// Integer rank used for Hits@k: the fractional rank rounded half up.
pub fn hits_rank(rank: f64) -> usize {
    (rank + 0.5).floor() as usize
}

/// Rank of `candidates[target_index]` when scoring `head` under `relation`.
pub fn rank_of_target(
    head: &str,
    relation: &str,
    candidates: &[String],
    target_index: usize,
    model: &RseModel,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(RseError::EmptyInput("no candidates".into()));
    }
    let r = model.relations.require_id(relation)?;
    let h = model.embed(head)?;
    let scores = candidates
        .iter()
        .map(|c| relational_score(&h, &model.embed(c)?, r, &model.relations))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| RseError::Numeric(e.to_string()))?;
    rank_from_scores(&scores, target_index)
}

/// MRR and Hits@{1,3,10} from fractional ranks.
pub fn summarize_ranks(ranks: &[f64]) -> EvalReport {
    let n = ranks.len();
    if n == 0 {
        return EvalReport::default();
    }
    let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n as f64;
    let hits_at = HITS_KS
        .iter()
        .map(|&k| {
            let hit = ranks.iter().filter(|&&r| hits_rank(r) <= k).count();
            (k, hit as f64 / n as f64)
        })
        .collect();
    EvalReport {
        count: n,
        mrr: Some(mrr),
        hits_at,
        ..EvalReport::default()
    }
}

/// Candidate tails for one link-prediction query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub head: String,
    pub relation: String,
    pub candidates: Vec<String>,
    pub target: usize,
}

pub trait CandidatePoolBuilder {
    fn pool_for(&self, triple: &SentenceTriple) -> Result<CandidatePool>;
}

/// Pools made of every tail of the queried relation in a triple set, plus
/// the tails that the same head reaches under other relations.
///
/// Ranking is unfiltered.
#[derive(Debug, Clone)]
pub struct RelationPoolBuilder {
    by_relation: BTreeMap<String, Vec<String>>,
    by_head: HashMap<String, Vec<(String, String)>>,
}

impl RelationPoolBuilder {
    pub fn new(triples: &[SentenceTriple]) -> Self {
        let mut by_relation: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut by_head: HashMap<String, Vec<(String, String)>> = HashMap::new();
        for t in triples {
            let tails = by_relation.entry(t.relation.clone()).or_default();
            if !tails.contains(&t.tail) {
                tails.push(t.tail.clone());
            }
            by_head
                .entry(t.head.clone())
                .or_default()
                .push((t.relation.clone(), t.tail.clone()));
        }
        Self {
            by_relation,
            by_head,
        }
    }
}

impl CandidatePoolBuilder for RelationPoolBuilder {
    fn pool_for(&self, triple: &SentenceTriple) -> Result<CandidatePool> {
        let mut candidates = self
            .by_relation
            .get(&triple.relation)
            .cloned()
            .unwrap_or_default();
        if let Some(others) = self.by_head.get(&triple.head) {
            for (rel, tail) in others {
                if rel != &triple.relation && !candidates.contains(tail) {
                    candidates.push(tail.clone());
                }
            }
        }
        let target = candidates
            .iter()
            .position(|c| c == &triple.tail)
            .ok_or_else(|| {
                RseError::Protocol(format!("gold tail {:?} missing from its pool", triple.tail))
            })?;
        Ok(CandidatePool {
            head: triple.head.clone(),
            relation: triple.relation.clone(),
            candidates,
            target,
        })
    }
}

fn rank_pool(
    pool: &CandidatePool,
    scoring_relation: usize,
    cache: &mut EmbeddingCache<'_>,
) -> Result<f64> {
    if pool.target >= pool.candidates.len() {
        return Err(RseError::Protocol(format!(
            "target {} outside a pool of {}",
            pool.target,
            pool.candidates.len()
        )));
    }
    let h = cache.get(&pool.head)?;
    let mut scores = Vec::with_capacity(pool.candidates.len());
    for c in &pool.candidates {
        let t = cache.get(c)?;
        let s = relational_score(&h, &t, scoring_relation, &cache.model.relations)
            .map_err(|e| RseError::Numeric(e.to_string()))?;
        scores.push(s);
    }
    rank_from_scores(&scores, pool.target)
}

fn link_eval_inner(
    triples: &[SentenceTriple],
    builder: &dyn CandidatePoolBuilder,
    model: &RseModel,
    scoring_override: Option<usize>,
) -> Result<EvalReport> {
    if triples.is_empty() {
        return Err(RseError::EmptyInput("no link-prediction triples".into()));
    }
    let mut cache = EmbeddingCache::new(model);
    let mut all = Vec::with_capacity(triples.len());
    let mut per_rel: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in triples {
        let pool = builder.pool_for(t)?;
        if pool.candidates.get(pool.target) != Some(&t.tail) {
            return Err(RseError::Protocol(format!(
                "pool for {:?} does not point at the gold tail",
                t.head
            )));
        }
        let rel = match scoring_override {
            Some(r) => r,
            None => model.relations.require_id(&t.relation)?,
        };
        let rank = rank_pool(&pool, rel, &mut cache)?;
        all.push(rank);
        per_rel.entry(t.relation.clone()).or_default().push(rank);
    }
    let mut report = summarize_ranks(&all);
    report.per_relation = per_rel
        .into_iter()
        .map(|(k, ranks)| (k, summarize_ranks(&ranks)))
        .collect();
    Ok(report)
}

/// MRR and Hits@k over `test_triples`, overall and per relation.
pub fn link_prediction_eval(
    test_triples: &[SentenceTriple],
    builder: &dyn CandidatePoolBuilder,
    model: &RseModel,
) -> Result<EvalReport> {
    link_eval_inner(test_triples, builder, model, None)
}

/// Ranks precomputed pools (e.g. read from disk).
pub fn link_prediction_eval_pools(pools: &[CandidatePool], model: &RseModel) -> Result<EvalReport> {
    if pools.is_empty() {
        return Err(RseError::EmptyInput("no candidate pools".into()));
    }
    let mut cache = EmbeddingCache::new(model);
    let mut all = Vec::new();
    let mut per_rel: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in pools {
        let r = model.relations.require_id(&p.relation)?;
        let rank = rank_pool(p, r, &mut cache)?;
        all.push(rank);
        per_rel.entry(p.relation.clone()).or_default().push(rank);
    }
    let mut report = summarize_ranks(&all);
    report.per_relation = per_rel
        .into_iter()
        .map(|(k, ranks)| (k, summarize_ranks(&ranks)))
        .collect();
    Ok(report)
}

/// A task for [`relation_selection_report`].
#[derive(Debug, Clone)]
pub enum EvalTask {
    /// Scored by Spearman.
    Pairs(Vec<ScoredPair>),
    /// Scored by MRR; pools come from [`RelationPoolBuilder`] over the set.
    LinkPrediction(Vec<SentenceTriple>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub tasks: Vec<String>,
    pub relations: Vec<String>,
    /// `tasks × relations`.
    pub matrix: Matrix,
    /// Best relation per task (first on ties).
    pub best: BTreeMap<String, String>,
}

/// Evaluates every task under every single-relation score.
pub fn relation_selection_report(
    tasks: &BTreeMap<String, EvalTask>,
    model: &RseModel,
) -> Result<SelectionReport> {
    let relations = model.relations.names().to_vec();
    let mut matrix = Matrix::zeros(tasks.len(), relations.len());
    let mut best = BTreeMap::new();
    for (ti, (name, task)) in tasks.iter().enumerate() {
        for (ri, rel) in relations.iter().enumerate() {
            let value = match task {
                EvalTask::Pairs(pairs) => {
                    score_pairs(pairs, model, &ScoreWeights::single(rel))?
                        .spearman
                        .expect("spearman set")
                }
                EvalTask::LinkPrediction(triples) => {
                    let builder = RelationPoolBuilder::new(triples);
                    link_eval_inner(triples, &builder, model, Some(ri))?
                        .mrr
                        .expect("mrr set")
                }
            };
            matrix.row_mut(ti)[ri] = value;
        }
        let row = matrix.row(ti);
        let arg = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
        best.insert(name.clone(), relations[arg].clone());
    }
    Ok(SelectionReport {
        tasks: tasks.keys().cloned().collect(),
        relations,
        matrix,
        best,
    })
}
