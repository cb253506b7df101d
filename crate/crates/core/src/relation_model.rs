//! Named relation embeddings and translation-based scoring.

use std::collections::{BTreeMap, HashMap};

use rand_distr::{Distribution, Normal};

use crate::error::{Result, RseError};
use crate::numerics::{add, cosine, Matrix, SeededRng};

/// Standard deviation of the zero-mean normal used to initialize relation rows.
pub const RELATION_INIT_STD: f64 = 0.02;

/// One `d`-dimensional embedding per named relation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationTable {
    names: Vec<String>,
    name_to_id: HashMap<String, usize>,
    embeddings: Matrix,
}

impl RelationTable {
    pub fn from_parts(names: Vec<String>, embeddings: Matrix) -> Result<Self> {
        if names.is_empty() {
            return Err(RseError::Schema("relation set is empty".into()));
        }
        if embeddings.rows() != names.len() || embeddings.cols() == 0 {
            return Err(RseError::Shape(format!(
                "{} relation names but a {}x{} embedding matrix",
                names.len(),
                embeddings.rows(),
                embeddings.cols()
            )));
        }
        let mut name_to_id = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(RseError::Schema("empty relation name".into()));
            }
            if name_to_id.insert(n.clone(), i).is_some() {
                return Err(RseError::Schema(format!("duplicate relation name {n:?}")));
            }
        }
        Ok(Self {
            names,
            name_to_id,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.name_to_id.get(name).copied()
    }

    pub fn require_id(&self, name: &str) -> Result<usize> {
        self.id(name)
            .ok_or_else(|| RseError::Schema(format!("unknown relation {name:?}")))
    }

    pub fn row(&self, id: usize) -> Result<&[f64]> {
        if id >= self.len() {
            return Err(RseError::Lookup(id));
        }
        Ok(self.embeddings.row(id))
    }

    pub fn row_mut(&mut self, id: usize) -> Result<&mut [f64]> {
        if id >= self.len() {
            return Err(RseError::Lookup(id));
        }
        Ok(self.embeddings.row_mut(id))
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut Matrix {
        &mut self.embeddings
    }
}

/// Draws each row from N(0, 0.02²), deterministically under `rng`.
pub fn init_relation_table<S: AsRef<str>>(
    names: &[S],
    d: usize,
    rng: &mut SeededRng,
) -> Result<RelationTable> {
    if d == 0 {
        return Err(RseError::Config("relation dimension must be > 0".into()));
    }
    let names: Vec<String> = names.iter().map(|n| n.as_ref().to_string()).collect();
    let normal = Normal::new(0.0, RELATION_INIT_STD).expect("valid normal");
    let data = (0..names.len() * d)
        .map(|_| normal.sample(rng.inner_mut()))
        .collect();
    RelationTable::from_parts(names.clone(), Matrix::from_vec(names.len(), d, data)?)
}

/// `head + h_r`.
pub fn translate(head: &[f64], relation: usize, table: &RelationTable) -> Result<Vec<f64>> {
    add(head, table.row(relation)?)
}

/// `cos(h_i + h_r, h_j)`. Direction-sensitive.
pub fn relational_score(
    h_i: &[f64],
    h_j: &[f64],
    relation: usize,
    table: &RelationTable,
) -> Result<f64> {
    cosine(&translate(h_i, relation, table)?, h_j)
}

/// Non-negative per-relation weights with at least one positive entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreWeights {
    weights: BTreeMap<String, f64>,
}

impl ScoreWeights {
    pub fn new<I, S>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (name, w) in weights {
            let name = name.into();
            if !w.is_finite() || w < 0.0 {
                return Err(RseError::Schema(format!(
                    "weight for {name:?} must be finite and non-negative, got {w}"
                )));
            }
            if map.insert(name.clone(), w).is_some() {
                return Err(RseError::Schema(format!("relation {name:?} weighted twice")));
            }
        }
        if !map.values().any(|&w| w > 0.0) {
            return Err(RseError::Schema(
                "at least one relation weight must be positive".into(),
            ));
        }
        Ok(Self { weights: map })
    }

    pub fn single(name: &str) -> Self {
        Self::new([(name, 1.0)]).expect("unit weight is valid")
    }

    /// Weight 1.0 on every relation of `table`.
    pub fn uniform(table: &RelationTable) -> Self {
        Self::new(table.names().iter().map(|n| (n.clone(), 1.0))).expect("unit weights are valid")
    }

    /// Parses `name=w,name=w`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, w) = part.split_once('=').ok_or_else(|| {
                RseError::Schema(format!("weight entry {part:?} is not name=value"))
            })?;
            let w: f64 = w.trim().parse().map_err(|_| {
                RseError::Schema(format!("weight {w:?} for {name:?} is not a number"))
            })?;
            pairs.push((name.trim().to_string(), w));
        }
        Self::new(pairs)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// `Σ_k w_k · relational_score(h_i, h_j, r_k)`.
pub fn weighted_relational_score(
    h_i: &[f64],
    h_j: &[f64],
    weights: &ScoreWeights,
    table: &RelationTable,
) -> Result<f64> {
    let mut total = 0.0;
    for (name, w) in weights.iter() {
        let id = table.require_id(name)?;
        total += w * relational_score(h_i, h_j, id, table)?;
    }
    Ok(total)
}

/// Pairwise cosine between relation rows.
pub fn relation_similarity_matrix(table: &RelationTable) -> Result<Matrix> {
    let r = table.len();
    let mut out = Matrix::zeros(r, r);
    for a in 0..r {
        for b in a..r {
            let c = if a == b {
                cosine(table.row(a)?, table.row(a)?)?;
                1.0
            } else {
                cosine(table.row(a)?, table.row(b)?)?
            };
            out.row_mut(a)[b] = c;
            out.row_mut(b)[a] = c;
        }
    }
    Ok(out)
}
