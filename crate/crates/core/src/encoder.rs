//! Reference sentence encoder: mean-pooled trainable token embeddings
//! followed by an affine projection and `tanh`.
//!
//! `h = tanh(pool(s) · W + b)` where `pool(s)` averages the embedding-table
//! rows of the sentence's token ids, `W` is `d_in × d` and `b` has length `d`.
//! The backward pass is written out by hand and is exact.

use std::collections::{BTreeMap, HashMap};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RseError};
use crate::numerics::{DenseVector, Matrix, SeededRng};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const DEFAULT_MAX_LEN: usize = 32;
pub const DEFAULT_DIM: usize = 32;

/// Whitespace vocabulary. Ids are contiguous from 0; `PAD = 0`, `UNK = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocab {
    /// Rebuilds a vocabulary from its tokens in id order.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(RseError::Schema(
                "vocabulary must start with the PAD and UNK tokens".into(),
            ));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(RseError::Schema(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of a token; unknown tokens map to `UNK`.
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = RseError;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

fn words(sentence: &str) -> impl Iterator<Item = String> + '_ {
    sentence.split_whitespace().map(str::to_lowercase)
}

/// Counts lowercased whitespace tokens and keeps those seen at least
/// `min_count` times. Ids follow (count descending, token ascending).
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(RseError::EmptyInput("vocabulary corpus is empty".into()));
    }
    if min_count == 0 {
        return Err(RseError::Config("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in corpus {
        for w in words(s.as_ref()) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
        .into_iter()
        .chain(kept.into_iter().map(|(t, _)| t))
        .collect();
    Vocab::from_tokens(tokens)
}

/// Token ids of one sentence, `1 ..= max_len` of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    ids: Vec<u32>,
}

impl TokenizedSentence {
    pub fn from_ids(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(RseError::EmptySentence);
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
}

pub fn tokenize(sentence: &str, vocab: &Vocab, max_len: usize) -> Result<TokenizedSentence> {
    if max_len == 0 {
        return Err(RseError::Config("max_len must be >= 1".into()));
    }
    let ids: Vec<u32> = words(sentence).take(max_len).map(|w| vocab.id(&w)).collect();
    TokenizedSentence::from_ids(ids)
}

/// Trainable encoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `|V| × d_in`
    pub embedding_table: Matrix,
    /// `d_in × d`
    pub projection_weight: Matrix,
    pub projection_bias: Vec<f64>,
}

impl EncoderParams {
    /// Random initialization: table rows ~ N(0, 1), weight ~ N(0, 1/d_in),
    /// bias zero.
    pub fn init(vocab_size: usize, d_in: usize, d: usize, rng: &mut SeededRng) -> Result<Self> {
        if vocab_size == 0 || d_in == 0 || d == 0 {
            return Err(RseError::Config(
                "encoder dimensions must all be positive".into(),
            ));
        }
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let table: Vec<f64> = (0..vocab_size * d_in)
            .map(|_| unit.sample(rng.inner_mut()))
            .collect();
        let w_scale = 1.0 / (d_in as f64).sqrt();
        let weight: Vec<f64> = (0..d_in * d)
            .map(|_| w_scale * unit.sample(rng.inner_mut()))
            .collect();
        Ok(Self {
            embedding_table: Matrix::from_vec(vocab_size, d_in, table)?,
            projection_weight: Matrix::from_vec(d_in, d, weight)?,
            projection_bias: vec![0.0; d],
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding_table.rows()
    }

    pub fn d_in(&self) -> usize {
        self.embedding_table.cols()
    }

    pub fn d(&self) -> usize {
        self.projection_bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.projection_weight.rows() != self.d_in()
            || self.projection_weight.cols() != self.d()
        {
            return Err(RseError::Shape(format!(
                "projection weight is {}x{}, expected {}x{}",
                self.projection_weight.rows(),
                self.projection_weight.cols(),
                self.d_in(),
                self.d()
            )));
        }
        let all = self
            .embedding_table
            .as_slice()
            .iter()
            .chain(self.projection_weight.as_slice())
            .chain(&self.projection_bias);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(RseError::Numeric("non-finite encoder parameter".into()));
        }
        Ok(())
    }

    /// Total number of scalars, in the flattening order used by
    /// [`EncoderParams::flatten`].
    pub fn num_params(&self) -> usize {
        self.embedding_table.as_slice().len()
            + self.projection_weight.as_slice().len()
            + self.projection_bias.len()
    }

    /// Table, then weight, then bias, each row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(self.embedding_table.as_slice());
        out.extend_from_slice(self.projection_weight.as_slice());
        out.extend_from_slice(&self.projection_bias);
        out
    }

    pub fn unflatten_from(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(RseError::Shape(format!(
                "expected {} encoder values, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let t = self.embedding_table.as_slice().len();
        let w = self.projection_weight.as_slice().len();
        self.embedding_table
            .as_mut_slice()
            .copy_from_slice(&flat[..t]);
        self.projection_weight
            .as_mut_slice()
            .copy_from_slice(&flat[t..t + w]);
        self.projection_bias.copy_from_slice(&flat[t + w..]);
        Ok(())
    }
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    ids: Vec<u32>,
    pooled: Vec<f64>,
    output: Vec<f64>,
    shape: (usize, usize, usize),
}

impl EncoderCache {
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Gradient accumulator for [`EncoderParams`]. Embedding-table gradients are
/// sparse: only rows that occurred in a backward pass have an entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub rows: BTreeMap<u32, Vec<f64>>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    d_in: usize,
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self {
            rows: BTreeMap::new(),
            weight: vec![0.0; params.d_in() * params.d()],
            bias: vec![0.0; params.d()],
            d_in: params.d_in(),
        }
    }

    /// Dense flattening matching [`EncoderParams::flatten`].
    pub fn flatten(&self, params: &EncoderParams) -> Vec<f64> {
        let mut out = vec![0.0; params.num_params()];
        let d_in = params.d_in();
        for (&id, row) in &self.rows {
            let start = id as usize * d_in;
            out[start..start + d_in].copy_from_slice(row);
        }
        let t = params.embedding_table.as_slice().len();
        out[t..t + self.weight.len()].copy_from_slice(&self.weight);
        out[t + self.weight.len()..].copy_from_slice(&self.bias);
        out
    }

    pub fn table_dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocab_size * self.d_in];
        for (&id, row) in &self.rows {
            let start = id as usize * self.d_in;
            out[start..start + self.d_in].copy_from_slice(row);
        }
        out
    }
}

fn pool(ids: &[u32], params: &EncoderParams) -> Result<Vec<f64>> {
    let vocab_size = params.vocab_size();
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= vocab_size) {
        return Err(RseError::Vocabulary {
            id: bad,
            size: vocab_size,
        });
    }
    // Summing in id order makes the pooled vector exactly independent of
    // token order.
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut pooled = vec![0.0; params.d_in()];
    for id in sorted {
        for (p, e) in pooled.iter_mut().zip(params.embedding_table.row(id as usize)) {
            *p += e;
        }
    }
    let inv = 1.0 / ids.len() as f64;
    pooled.iter_mut().for_each(|p| *p *= inv);
    Ok(pooled)
}

fn project(pooled: &[f64], params: &EncoderParams) -> Vec<f64> {
    let w = &params.projection_weight;
    let mut z = params.projection_bias.clone();
    for (i, &x) in pooled.iter().enumerate() {
        for (zj, wij) in z.iter_mut().zip(w.row(i)) {
            *zj += x * wij;
        }
    }
    z.iter_mut().for_each(|v| *v = v.tanh());
    z
}

pub fn encode_forward(
    tokens: &TokenizedSentence,
    params: &EncoderParams,
) -> Result<(DenseVector, EncoderCache)> {
    let pooled = pool(tokens.ids(), params)?;
    let output = project(&pooled, params);
    let embedding = DenseVector::new(output.clone())?;
    Ok((
        embedding,
        EncoderCache {
            ids: tokens.ids().to_vec(),
            pooled,
            output,
            shape: (params.vocab_size(), params.d_in(), params.d()),
        },
    ))
}

/// Forward pass without retaining activations.
pub fn encode(tokens: &TokenizedSentence, params: &EncoderParams) -> Result<DenseVector> {
    let pooled = pool(tokens.ids(), params)?;
    DenseVector::new(project(&pooled, params))
}

/// Accumulates `∂(upstream · h)/∂θ` into `grads`.
pub fn encode_backward(
    cache: &EncoderCache,
    upstream_grad: &[f64],
    params: &EncoderParams,
    grads: &mut EncoderGrads,
) -> Result<()> {
    let shape = (params.vocab_size(), params.d_in(), params.d());
    if cache.shape != shape || grads.bias.len() != shape.2 || grads.d_in != shape.1 {
        return Err(RseError::State(
            "forward cache or gradient buffer does not match encoder parameters".into(),
        ));
    }
    if upstream_grad.len() != shape.2 {
        return Err(RseError::Shape(format!(
            "upstream gradient has dim {}, expected {}",
            upstream_grad.len(),
            shape.2
        )));
    }
    let d = shape.2;
    let dz: Vec<f64> = upstream_grad
        .iter()
        .zip(&cache.output)
        .map(|(g, y)| g * (1.0 - y * y))
        .collect();
    for (b, g) in grads.bias.iter_mut().zip(&dz) {
        *b += g;
    }
    let mut dpooled = vec![0.0; shape.1];
    for (i, &x) in cache.pooled.iter().enumerate() {
        let w_row = params.projection_weight.row(i);
        let g_row = &mut grads.weight[i * d..(i + 1) * d];
        let mut acc = 0.0;
        for j in 0..d {
            g_row[j] += x * dz[j];
            acc += w_row[j] * dz[j];
        }
        dpooled[i] = acc;
    }
    let inv = 1.0 / cache.ids.len() as f64;
    for &id in &cache.ids {
        let row = grads
            .rows
            .entry(id)
            .or_insert_with(|| vec![0.0; shape.1]);
        for (r, g) in row.iter_mut().zip(&dpooled) {
            *r += g * inv;
        }
    }
    Ok(())
}
