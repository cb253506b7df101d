//! A trained (or training) model: vocabulary, encoder and relation table.

use crate::encoder::{encode, tokenize, EncoderParams, TokenizedSentence, Vocab};
use crate::error::{Result, RseError};
use crate::numerics::{DenseVector, SeededRng};
use crate::relation_model::{
    init_relation_table, relational_score, weighted_relational_score, RelationTable, ScoreWeights,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RseModel {
    pub vocab: Vocab,
    pub encoder: EncoderParams,
    pub relations: RelationTable,
    pub max_len: usize,
}

impl RseModel {
    pub fn new(
        vocab: Vocab,
        encoder: EncoderParams,
        relations: RelationTable,
        max_len: usize,
    ) -> Result<Self> {
        if encoder.vocab_size() != vocab.len() {
            return Err(RseError::Shape(format!(
                "vocabulary has {} tokens but the embedding table has {} rows",
                vocab.len(),
                encoder.vocab_size()
            )));
        }
        if encoder.d() != relations.dim() {
            return Err(RseError::Shape(format!(
                "encoder output dim {} differs from relation dim {}",
                encoder.d(),
                relations.dim()
            )));
        }
        if max_len == 0 {
            return Err(RseError::Config("max_len must be >= 1".into()));
        }
        encoder.validate()?;
        Ok(Self {
            vocab,
            encoder,
            relations,
            max_len,
        })
    }

    /// Fresh model with randomly initialized encoder and relation rows.
    /// The encoder is drawn first, then the relations, from the same stream.
    pub fn init<S: AsRef<str>>(
        vocab: Vocab,
        relation_names: &[S],
        d_in: usize,
        d: usize,
        max_len: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let encoder = EncoderParams::init(vocab.len(), d_in, d, rng)?;
        let relations = init_relation_table(relation_names, d, rng)?;
        Self::new(vocab, encoder, relations, max_len)
    }

    pub fn tokenize(&self, sentence: &str) -> Result<TokenizedSentence> {
        tokenize(sentence, &self.vocab, self.max_len)
    }

    pub fn embed(&self, sentence: &str) -> Result<DenseVector> {
        encode(&self.tokenize(sentence)?, &self.encoder)
    }

    /// `f(s_i, s_j, r)` for a named relation.
    pub fn score(&self, s_i: &str, s_j: &str, relation: &str) -> Result<f64> {
        let r = self.relations.require_id(relation)?;
        relational_score(&self.embed(s_i)?, &self.embed(s_j)?, r, &self.relations)
    }

    pub fn weighted_score(&self, s_i: &str, s_j: &str, weights: &ScoreWeights) -> Result<f64> {
        weighted_relational_score(&self.embed(s_i)?, &self.embed(s_j)?, weights, &self.relations)
    }
}
