//! Relational contrastive objectives and their exact gradients.
//!
//! For example `i` with anchor `a_i = h_i + r_{k(i)}` the in-batch loss is
//!
//! ```text
//! L_i = -log( exp(cos(a_i, t_i)/τ) / Σ_m exp(cos(a_i, t_m)/τ) )
//! ```
//!
//! over all `N` tails of the batch. The hard-negative variant adds
//! `exp(cos(a_i, t⁻_m)/τ)` for every `m` to the denominator. The batch loss
//! is the mean over examples. The merged baseline is the in-batch loss with
//! every relation row treated as zero.

use std::collections::BTreeMap;

use crate::encoder::{
    encode, encode_backward, encode_forward, EncoderCache, EncoderGrads, EncoderParams,
    TokenizedSentence,
};
use crate::error::{Result, RseError};
use crate::numerics::{cosine, log_sum_exp, norm, DenseVector, Matrix};
use crate::relation_model::RelationTable;

pub const DEFAULT_TAU: f64 = 0.05;

/// Which denominator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    /// In-batch tails only.
    InBatch,
    /// In-batch tails plus one hard-negative tail per example.
    HardNeg,
}

/// Whether relation rows take part in the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Anchor is `h_i + r_k`.
    Relational,
    /// Anchor is `h_i`; relations are ignored.
    Merged,
}

/// Encoded batch ready for the loss.
#[derive(Debug, Clone)]
pub struct EmbeddedBatch {
    pub heads: Vec<DenseVector>,
    pub tails: Vec<DenseVector>,
    pub relations: Vec<usize>,
    pub hard_neg_tails: Option<Vec<DenseVector>>,
    pub tau: f64,
}

impl EmbeddedBatch {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    fn validate(&self, table: &RelationTable, variant: LossVariant) -> Result<()> {
        let n = self.heads.len();
        let min_n = match variant {
            LossVariant::InBatch => 2,
            LossVariant::HardNeg => 1,
        };
        if n < min_n {
            return Err(RseError::BatchSize(format!(
                "batch of {n} examples, need at least {min_n}"
            )));
        }
        if self.tails.len() != n || self.relations.len() != n {
            return Err(RseError::Shape(format!(
                "{n} heads, {} tails, {} relation ids",
                self.tails.len(),
                self.relations.len()
            )));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(RseError::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        match (variant, &self.hard_neg_tails) {
            (LossVariant::HardNeg, None) => {
                return Err(RseError::Schema(
                    "hard-negative loss requires hard-negative tails".into(),
                ))
            }
            (LossVariant::HardNeg, Some(neg)) if neg.len() != n => {
                return Err(RseError::Shape(format!(
                    "{n} examples but {} hard negatives",
                    neg.len()
                )))
            }
            _ => {}
        }
        let d = table.dim();
        let hard = match variant {
            LossVariant::HardNeg => self.hard_neg_tails.as_deref().unwrap_or(&[]),
            LossVariant::InBatch => &[],
        };
        if let Some(v) = self
            .heads
            .iter()
            .chain(&self.tails)
            .chain(hard)
            .find(|v| v.dim() != d)
        {
            return Err(RseError::Shape(format!(
                "embedding of dim {} in a batch of dim {d}",
                v.dim()
            )));
        }
        for &r in &self.relations {
            table.row(r)?;
        }
        Ok(())
    }
}

/// Mean loss plus the per-example terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub per_example: Vec<f64>,
}

/// Gradients of the mean loss with respect to every vector in a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrads {
    pub heads: Vec<Vec<f64>>,
    pub tails: Vec<Vec<f64>>,
    pub hard_negs: Option<Vec<Vec<f64>>>,
    /// Keyed by relation id; one entry per relation used in the batch.
    pub relations: BTreeMap<usize, Vec<f64>>,
}

/// Gradient of `cos(a, c)` with respect to `a`, given the cosine value.
fn cos_grad<'a>(a: &'a [f64], c: &'a [f64], na: f64, nc: f64, cos: f64) -> impl Iterator<Item = f64> + 'a {
    let inv = 1.0 / (na * nc);
    let k = cos / (na * na);
    a.iter().zip(c).map(move |(ai, ci)| ci * inv - k * ai)
}

fn evaluate(
    batch: &EmbeddedBatch,
    table: &RelationTable,
    objective: Objective,
    variant: LossVariant,
    want_grads: bool,
) -> Result<(LossOutput, Option<BatchGrads>)> {
    batch.validate(table, variant)?;
    let n = batch.len();
    let d = table.dim();
    let tau = batch.tau;

    let anchors: Vec<Vec<f64>> = batch
        .heads
        .iter()
        .zip(&batch.relations)
        .map(|(h, &r)| match objective {
            Objective::Relational => Ok(h.iter().zip(table.row(r)?).map(|(a, b)| a + b).collect()),
            Objective::Merged => Ok(h.to_vec()),
        })
        .collect::<Result<_>>()?;

    let mut candidates: Vec<&[f64]> = batch.tails.iter().map(|t| t.as_slice()).collect();
    if variant == LossVariant::HardNeg {
        candidates.extend(
            batch
                .hard_neg_tails
                .as_ref()
                .expect("validated")
                .iter()
                .map(|t| t.as_slice()),
        );
    }
    let cand_norms: Vec<f64> = candidates.iter().map(|c| norm(c)).collect();

    let mut per_example = Vec::with_capacity(n);
    let mut grads = want_grads.then(|| {
        (
            vec![vec![0.0; d]; n],            // anchors
            vec![vec![0.0; d]; candidates.len()], // candidates
        )
    });

    for (i, anchor) in anchors.iter().enumerate() {
        let cosines: Vec<f64> = candidates
            .iter()
            .map(|c| cosine(anchor, c))
            .collect::<Result<_>>()
            .map_err(|e| RseError::Numeric(format!("example {i}: {e}")))?;
        let logits: Vec<f64> = cosines.iter().map(|c| c / tau).collect();
        let lse = log_sum_exp(&logits)?;
        per_example.push(lse - logits[i]);

        if let Some((ga, gc)) = grads.as_mut() {
            let na = norm(anchor);
            for (m, c) in candidates.iter().enumerate() {
                let p = (logits[m] - lse).exp();
                let coeff = (p - if m == i { 1.0 } else { 0.0 }) / (n as f64 * tau);
                if coeff == 0.0 {
                    continue;
                }
                for (g, v) in ga[i].iter_mut().zip(cos_grad(anchor, c, na, cand_norms[m], cosines[m])) {
                    *g += coeff * v;
                }
                for (g, v) in gc[m].iter_mut().zip(cos_grad(c, anchor, cand_norms[m], na, cosines[m])) {
                    *g += coeff * v;
                }
            }
        }
    }

    let loss = per_example.iter().sum::<f64>() / n as f64;
    if !loss.is_finite() {
        return Err(RseError::Numeric(format!("non-finite loss {loss}")));
    }
    let out = LossOutput { loss, per_example };

    let grads = grads.map(|(ga, mut gc)| {
        let hard_negs = (variant == LossVariant::HardNeg).then(|| gc.split_off(n));
        let mut relations: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (&r, g) in batch.relations.iter().zip(&ga) {
            let row = relations.entry(r).or_insert_with(|| vec![0.0; d]);
            if objective == Objective::Relational {
                for (acc, v) in row.iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
        BatchGrads {
            heads: ga,
            tails: gc,
            hard_negs,
            relations,
        }
    });
    Ok((out, grads))
}

/// In-batch relational loss.
pub fn loss_in_batch(batch: &EmbeddedBatch, table: &RelationTable) -> Result<LossOutput> {
    Ok(evaluate(batch, table, Objective::Relational, LossVariant::InBatch, false)?.0)
}

/// Relational loss with in-batch and hard negatives.
pub fn loss_hard_neg(batch: &EmbeddedBatch, table: &RelationTable) -> Result<LossOutput> {
    Ok(evaluate(batch, table, Objective::Relational, LossVariant::HardNeg, false)?.0)
}

/// Relation-agnostic in-batch loss over the merged positive pairs.
pub fn baseline_merged_loss(batch: &EmbeddedBatch, table: &RelationTable) -> Result<LossOutput> {
    Ok(evaluate(batch, table, Objective::Merged, LossVariant::InBatch, false)?.0)
}

/// Analytic gradients of the mean relational loss.
pub fn loss_gradients(
    batch: &EmbeddedBatch,
    table: &RelationTable,
    variant: LossVariant,
) -> Result<BatchGrads> {
    batch_objective(batch, table, Objective::Relational, variant).map(|(_, g)| g)
}

/// Loss and gradients for any objective/variant pair.
pub fn batch_objective(
    batch: &EmbeddedBatch,
    table: &RelationTable,
    objective: Objective,
    variant: LossVariant,
) -> Result<(LossOutput, BatchGrads)> {
    let (out, grads) = evaluate(batch, table, objective, variant, true)?;
    Ok((out, grads.expect("gradients requested")))
}

/// A training triple after tokenization, with the relation resolved to an id.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedTriple {
    pub head: TokenizedSentence,
    pub relation: usize,
    pub tail: TokenizedSentence,
    pub hard_neg: Option<TokenizedSentence>,
}

/// Parameter gradients for one logical batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGrads {
    pub loss: f64,
    pub encoder: EncoderGrads,
    /// Same shape as the relation table.
    pub relations: Matrix,
    /// Most triples whose forward activations were alive at once.
    pub peak_live_caches: usize,
}

/// Settings shared by the naive and cached batch computations.
#[derive(Debug, Clone, Copy)]
pub struct StepSpec {
    pub tau: f64,
    pub objective: Objective,
    pub variant: LossVariant,
}

fn embed_batch<F>(triples: &[TokenizedTriple], spec: &StepSpec, mut embed: F) -> Result<EmbeddedBatch>
where
    F: FnMut(&TokenizedSentence) -> Result<DenseVector>,
{
    let mut heads = Vec::with_capacity(triples.len());
    let mut tails = Vec::with_capacity(triples.len());
    let mut negs = Vec::with_capacity(triples.len());
    for (i, t) in triples.iter().enumerate() {
        heads.push(embed(&t.head)?);
        tails.push(embed(&t.tail)?);
        if spec.variant == LossVariant::HardNeg {
            let neg = t.hard_neg.as_ref().ok_or_else(|| {
                RseError::Schema(format!("triple {i} has no hard negative"))
            })?;
            negs.push(embed(neg)?);
        }
    }
    Ok(EmbeddedBatch {
        heads,
        tails,
        relations: triples.iter().map(|t| t.relation).collect(),
        hard_neg_tails: (spec.variant == LossVariant::HardNeg).then_some(negs),
        tau: spec.tau,
    })
}

fn relation_grads(table: &RelationTable, grads: &BatchGrads) -> Matrix {
    let mut out = Matrix::zeros(table.len(), table.dim());
    for (&r, g) in &grads.relations {
        out.row_mut(r).copy_from_slice(g);
    }
    out
}

fn backprop_triple(
    triple: &TokenizedTriple,
    idx: usize,
    grads: &BatchGrads,
    encoder: &EncoderParams,
    acc: &mut EncoderGrads,
    caches: &[EncoderCache],
) -> Result<()> {
    encode_backward(&caches[0], &grads.heads[idx], encoder, acc)?;
    encode_backward(&caches[1], &grads.tails[idx], encoder, acc)?;
    if let (Some(_), Some(neg_grads)) = (&triple.hard_neg, &grads.hard_negs) {
        encode_backward(&caches[2], &neg_grads[idx], encoder, acc)?;
    }
    Ok(())
}

fn forward_triple(
    triple: &TokenizedTriple,
    spec: &StepSpec,
    encoder: &EncoderParams,
) -> Result<Vec<EncoderCache>> {
    let mut caches = vec![
        encode_forward(&triple.head, encoder)?.1,
        encode_forward(&triple.tail, encoder)?.1,
    ];
    if spec.variant == LossVariant::HardNeg {
        if let Some(neg) = &triple.hard_neg {
            caches.push(encode_forward(neg, encoder)?.1);
        }
    }
    Ok(caches)
}

/// Reference computation: one forward pass over the whole batch that keeps
/// every activation, then a single backward pass.
pub fn naive_step(
    triples: &[TokenizedTriple],
    encoder: &EncoderParams,
    relations: &RelationTable,
    spec: &StepSpec,
) -> Result<StepGrads> {
    let caches: Vec<_> = triples
        .iter()
        .map(|t| forward_triple(t, spec, encoder))
        .collect::<Result<_>>()?;
    let batch = embed_batch(triples, spec, |s| encode(s, encoder))?;
    let (out, grads) = batch_objective(&batch, relations, spec.objective, spec.variant)?;
    let mut acc = EncoderGrads::zeros_like(encoder);
    for (i, (t, c)) in triples.iter().zip(&caches).enumerate() {
        backprop_triple(t, i, &grads, encoder, &mut acc, c)?;
    }
    Ok(StepGrads {
        loss: out.loss,
        encoder: acc,
        relations: relation_grads(relations, &grads),
        peak_live_caches: caches.len(),
    })
}

/// Two-pass gradient computation for a logical batch.
///
/// Pass 1 encodes every sentence without keeping activations and takes the
/// loss gradient with respect to each embedding. Pass 2 re-encodes one
/// sub-batch at a time with activations, back-propagates the stored
/// embedding gradients through the encoder, and drops the activations
/// before moving on. Sub-batches run serially in batch order, so the
/// accumulated gradients are bit-identical to [`naive_step`].
pub fn grad_cache_step(
    triples: &[TokenizedTriple],
    sub_batch_size: usize,
    encoder: &EncoderParams,
    relations: &RelationTable,
    spec: &StepSpec,
) -> Result<StepGrads> {
    if sub_batch_size == 0 {
        return Err(RseError::Config("sub_batch_size must be >= 1".into()));
    }
    let batch = embed_batch(triples, spec, |s| encode(s, encoder))?;
    let (out, grads) = batch_objective(&batch, relations, spec.objective, spec.variant)?;
    drop(batch);

    let mut acc = EncoderGrads::zeros_like(encoder);
    let mut peak = 0;
    for (chunk_idx, chunk) in triples.chunks(sub_batch_size).enumerate() {
        let caches: Vec<_> = chunk
            .iter()
            .map(|t| forward_triple(t, spec, encoder))
            .collect::<Result<_>>()?;
        peak = peak.max(caches.len());
        for (j, (t, c)) in chunk.iter().zip(&caches).enumerate() {
            backprop_triple(t, chunk_idx * sub_batch_size + j, &grads, encoder, &mut acc, c)?;
        }
    }
    Ok(StepGrads {
        loss: out.loss,
        encoder: acc,
        relations: relation_grads(relations, &grads),
        peak_live_caches: peak,
    })
}

/// Softmax probabilities over each example's candidates (tails, then hard
/// negatives for [`LossVariant::HardNeg`]).
pub fn candidate_probabilities(
    batch: &EmbeddedBatch,
    table: &RelationTable,
    variant: LossVariant,
) -> Result<Vec<Vec<f64>>> {
    batch.validate(table, variant)?;
    let mut rows = Vec::with_capacity(batch.len());
    for (h, &r) in batch.heads.iter().zip(&batch.relations) {
        let anchor: Vec<f64> = h.iter().zip(table.row(r)?).map(|(a, b)| a + b).collect();
        let mut logits: Vec<f64> = batch
            .tails
            .iter()
            .map(|t| cosine(&anchor, t).map(|c| c / batch.tau))
            .collect::<Result<_>>()?;
        if variant == LossVariant::HardNeg {
            for t in batch.hard_neg_tails.as_deref().unwrap_or(&[]) {
                logits.push(cosine(&anchor, t)? / batch.tau);
            }
        }
        let lse = log_sum_exp(&logits)?;
        rows.push(logits.iter().map(|z| (z - lse).exp()).collect());
    }
    Ok(rows)
}
