//! Single-hop memory network over a knowledge base of rationales.
//!
//! A clause is encoded into a query `q`, scored against every memory slot
//! with a bilinear form `qᵀ W m`, each score is squashed into an independent
//! sigmoid gate, the gated slots are summed into a read vector `c`, and a
//! logistic unit over `[q; c]` gives the probability that the clause is
//! unfair.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Category, KnowledgeBase};
use crate::encoder::{mean_rows, tokenize, EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::numeric::{dot, sigmoid, Mat64, Param, ParamStore, Vec64};

pub const EMBEDDING: &str = "embedding";
pub const SIMILARITY: &str = "similarity";
pub const CLASSIFIER_WEIGHT: &str = "classifier.weight";
pub const CLASSIFIER_BIAS: &str = "classifier.bias";

/// All learnable state of one per-category model.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryNetModel {
    category: Category,
    vocab: Vocabulary,
    params: ParamStore,
}

impl MemoryNetModel {
    pub fn new(
        category: Category,
        vocab: Vocabulary,
        embedding: EmbeddingTable,
        similarity: Mat64,
        classifier_weight: Vec64,
        classifier_bias: f64,
    ) -> Result<Self> {
        let mut params = ParamStore::new();
        params.insert(EMBEDDING, Param::Matrix(embedding.into_matrix()))?;
        params.insert(SIMILARITY, Param::Matrix(similarity))?;
        params.insert(CLASSIFIER_WEIGHT, Param::Vector(classifier_weight))?;
        params.insert(
            CLASSIFIER_BIAS,
            Param::Vector(Vec64::new(vec![classifier_bias])?),
        )?;
        Self::from_params(category, vocab, params)
    }

    /// Fresh model: Gaussian embeddings, identity similarity, small random
    /// classifier weights and zero bias.
    pub fn init<R: Rng>(
        category: Category,
        vocab: Vocabulary,
        dim: usize,
        embedding_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be >= 1".into(),
            ));
        }
        let embedding = EmbeddingTable::random(vocab.len(), dim, embedding_std, rng)?;
        let head = Normal::new(0.0, 1.0 / ((2 * dim) as f64).sqrt())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let weights = Vec64::new((0..2 * dim).map(|_| head.sample(rng)).collect())?;
        Self::new(
            category,
            vocab,
            embedding,
            Mat64::identity(dim),
            weights,
            0.0,
        )
    }

    /// Reassembles a model from a parameter store, checking every shape.
    pub fn from_params(category: Category, vocab: Vocabulary, params: ParamStore) -> Result<Self> {
        let names: Vec<&str> = params.names().collect();
        if names != [EMBEDDING, SIMILARITY, CLASSIFIER_WEIGHT, CLASSIFIER_BIAS] {
            return Err(Error::InvalidShape(format!(
                "unexpected parameter layout {names:?}"
            )));
        }
        let emb = params.matrix(EMBEDDING)?;
        let d = emb.cols();
        if emb.rows() != vocab.len() {
            return Err(Error::DimensionMismatch {
                op: "embedding rows vs vocabulary",
                left: emb.rows(),
                right: vocab.len(),
            });
        }
        let sim = params.matrix(SIMILARITY)?;
        if sim.rows() != d || sim.cols() != d {
            return Err(Error::InvalidShape(format!(
                "similarity is {}x{}, expected {d}x{d}",
                sim.rows(),
                sim.cols()
            )));
        }
        let w = params.vector(CLASSIFIER_WEIGHT)?;
        if w.dim() != 2 * d {
            return Err(Error::DimensionMismatch {
                op: "classifier weight",
                left: w.dim(),
                right: 2 * d,
            });
        }
        if params.vector(CLASSIFIER_BIAS)?.dim() != 1 {
            return Err(Error::InvalidShape(
                "classifier bias must be a scalar".into(),
            ));
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(MemoryNetModel {
            category,
            vocab,
            params,
        })
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.embedding().cols()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Same vocabulary and category, new parameter values.
    pub fn with_params(&self, params: ParamStore) -> Result<Self> {
        if !self.params.same_layout(&params) {
            return Err(Error::InvalidShape(
                "parameter layout differs from model".into(),
            ));
        }
        Self::from_params(self.category, self.vocab.clone(), params)
    }

    pub fn embedding(&self) -> &Mat64 {
        self.params.matrix(EMBEDDING).expect("validated layout")
    }

    pub fn similarity_matrix(&self) -> &Mat64 {
        self.params.matrix(SIMILARITY).expect("validated layout")
    }

    pub fn classifier_weight(&self) -> &Vec64 {
        self.params
            .vector(CLASSIFIER_WEIGHT)
            .expect("validated layout")
    }

    pub fn classifier_bias(&self) -> f64 {
        self.params
            .vector(CLASSIFIER_BIAS)
            .expect("validated layout")
            .as_slice()[0]
    }

    pub fn token_indices(&self, text: &str) -> Vec<usize> {
        self.vocab.indices(&tokenize(text))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemorySlot {
    pub id: String,
    pub vector: Vec64,
    /// Vocabulary indices the slot was pooled from; empty for hand-built slots.
    pub token_indices: Vec<usize>,
}

/// Encoded knowledge base, one slot per rationale in KB order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMemory {
    category: Category,
    slots: Vec<MemorySlot>,
}

impl EncodedMemory {
    pub fn new(category: Category, slots: Vec<MemorySlot>) -> Result<Self> {
        let Some(first) = slots.first() else {
            return Err(Error::EmptyKnowledgeBase);
        };
        let d = first.vector.dim();
        for (i, s) in slots.iter().enumerate() {
            if s.vector.dim() != d {
                return Err(Error::DimensionMismatch {
                    op: "memory slot",
                    left: d,
                    right: s.vector.dim(),
                });
            }
            if slots[..i].iter().any(|o| o.id == s.id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate memory slot `{}`",
                    s.id
                )));
            }
        }
        Ok(EncodedMemory { category, slots })
    }

    /// Memory from raw vectors, for tests and hand-built examples.
    pub fn from_vectors(category: Category, slots: Vec<(String, Vec64)>) -> Result<Self> {
        Self::new(
            category,
            slots
                .into_iter()
                .map(|(id, vector)| MemorySlot {
                    id,
                    vector,
                    token_indices: Vec::new(),
                })
                .collect(),
        )
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn slots(&self) -> &[MemorySlot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.slots[0].vector.dim()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.id.as_str())
    }
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub query_tokens: Vec<usize>,
    pub query: Vec64,
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub read: Vec64,
    pub updated_query: Vec64,
    pub logit: f64,
    pub probability: f64,
}

impl ForwardTrace {
    /// Gate value of each slot, keyed by rationale id.
    pub fn weights_by_id<'a>(&'a self, mem: &'a EncodedMemory) -> Vec<(&'a str, f64)> {
        mem.ids().zip(self.weights.iter().copied()).collect()
    }
}

/// Bilinear score `qᵀ W m`.
pub fn similarity(q: &Vec64, m: &Vec64, sim: &Mat64) -> Result<f64> {
    if sim.rows() != q.dim() || sim.cols() != m.dim() {
        return Err(Error::DimensionMismatch {
            op: "similarity",
            left: q.dim(),
            right: sim.rows(),
        });
    }
    dot(q.as_slice(), &sim.mat_vec(m.as_slice())?)
}

fn scores(q: &Vec64, mem: &EncodedMemory, sim: &Mat64) -> Result<Vec<f64>> {
    if sim.rows() != q.dim() || sim.cols() != q.dim() {
        return Err(Error::DimensionMismatch {
            op: "similarity",
            left: q.dim(),
            right: sim.rows(),
        });
    }
    // qᵀW once, then one dot per slot
    let qw = sim.mat_t_vec(q.as_slice())?;
    mem.slots
        .iter()
        .map(|s| dot(&qw, s.vector.as_slice()))
        .collect()
}

/// Independent sigmoid gate per slot; the gates are not normalized.
pub fn attention(q: &Vec64, mem: &EncodedMemory, sim: &Mat64) -> Result<Vec<f64>> {
    Ok(scores(q, mem, sim)?.into_iter().map(sigmoid).collect())
}

/// `c = Σ wᵢ mᵢ`, summed in slot order.
pub fn read_memory(weights: &[f64], mem: &EncodedMemory) -> Result<Vec64> {
    if weights.len() != mem.len() {
        return Err(Error::DimensionMismatch {
            op: "read_memory",
            left: weights.len(),
            right: mem.len(),
        });
    }
    let mut c = vec![0.0; mem.dim()];
    for (w, slot) in weights.iter().zip(&mem.slots) {
        for (ci, mi) in c.iter_mut().zip(slot.vector.as_slice()) {
            *ci += w * mi;
        }
    }
    Vec64::new(c)
}

/// `[q; c]`
pub fn update_query(q: &Vec64, c: &Vec64) -> Result<Vec64> {
    if q.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            op: "update_query",
            left: q.dim(),
            right: c.dim(),
        });
    }
    let mut out = Vec::with_capacity(2 * q.dim());
    out.extend_from_slice(q.as_slice());
    out.extend_from_slice(c.as_slice());
    Vec64::new(out)
}

/// Runs the clause through the network, keeping every intermediate.
pub fn forward(text: &str, model: &MemoryNetModel, mem: &EncodedMemory) -> Result<ForwardTrace> {
    forward_indices(model.token_indices(text), model, mem)
}

pub(crate) fn forward_indices(
    query_tokens: Vec<usize>,
    model: &MemoryNetModel,
    mem: &EncodedMemory,
) -> Result<ForwardTrace> {
    if mem.category() != model.category() {
        return Err(Error::CategoryMismatch {
            expected: model.category().to_string(),
            found: mem.category().to_string(),
        });
    }
    if mem.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            op: "memory slot vs model",
            left: mem.dim(),
            right: model.dim(),
        });
    }
    let query = mean_rows(model.embedding(), &query_tokens)?;
    let scores = scores(&query, mem, model.similarity_matrix())?;
    let weights: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
    let read = read_memory(&weights, mem)?;
    let updated_query = update_query(&query, &read)?;
    let logit = updated_query.dot(model.classifier_weight())? + model.classifier_bias();
    let probability = sigmoid(logit);
    Ok(ForwardTrace {
        query_tokens,
        query,
        scores,
        weights,
        read,
        updated_query,
        logit,
        probability,
    })
}

/// Encodes every rationale of `kb` with the model's embeddings, in KB order.
pub fn encode_kb(kb: &KnowledgeBase, model: &MemoryNetModel) -> Result<EncodedMemory> {
    if kb.category() != model.category() {
        return Err(Error::CategoryMismatch {
            expected: model.category().to_string(),
            found: kb.category().to_string(),
        });
    }
    if kb.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    let slots = kb
        .entries()
        .iter()
        .map(|e| {
            let token_indices = model.token_indices(&e.text);
            Ok(MemorySlot {
                id: e.id.clone(),
                vector: mean_rows(model.embedding(), &token_indices)?,
                token_indices,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EncodedMemory::new(kb.category(), slots)
}
