//! Hand-derived gradients, optimizers and the training loop.
//!
//! Notation in the comments below: `q` is the pooled clause, `mᵢ` the pooled
//! rationale slots, `sᵢ = qᵀWmᵢ`, `wᵢ = σ(sᵢ)`, `c = Σ wᵢmᵢ`, `z = aᵀ[q; c] + b`
//! and `p = σ(z)`.

use std::collections::{HashMap, HashSet};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, KnowledgeBase};
use crate::encoder::build_vocab;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_with_memory, EvalConfig};
use crate::memory::{
    encode_kb, forward_indices, EncodedMemory, ForwardTrace, MemoryNetModel, CLASSIFIER_BIAS,
    CLASSIFIER_WEIGHT, EMBEDDING, SIMILARITY,
};
use crate::numeric::{finite_diff_grad_dd, ParamStore};
use crate::objective::{total_loss, LossBreakdown, SupervisionSets, PROB_CLAMP};
use crate::precise::{total_loss_dd, LossProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub embedding_dim: usize,
    /// Standard deviation of the Gaussian embedding initialization.
    pub embedding_init_std: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub min_token_count: usize,
    /// Epochs without a better validation score before training stops.
    pub early_stop_patience: usize,
    /// Treat rationale encodings as constants during backpropagation.
    pub freeze_memory: bool,
    pub eval: EvalConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            embedding_dim: 64,
            embedding_init_std: 1.0,
            gamma: 0.3,
            lambda: 1.0,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 500,
            batch_size: 16,
            seed: 1,
            min_token_count: 1,
            early_stop_patience: 20,
            freeze_memory: false,
            eval: EvalConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.embedding_dim < 1 {
            problems.push("embedding_dim must be >= 1");
        }
        if !(self.embedding_init_std > 0.0 && self.embedding_init_std.is_finite()) {
            problems.push("embedding_init_std must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            problems.push("gamma must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            problems.push("lambda must be >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            problems.push("adam betas must lie in [0, 1)");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            problems.push("adam_epsilon must be positive");
        }
        if self.batch_size < 1 {
            problems.push("batch_size must be >= 1");
        }
        if self.min_token_count < 1 {
            problems.push("min_token_count must be >= 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    /// Strong supervision is active whenever the margin loss has weight.
    pub fn strong_supervision(&self) -> bool {
        self.lambda > 0.0
    }
}

/// Gradients of the total loss of one sample with respect to every model
/// parameter.
///
/// `sup` is consulted only for unfair clauses (`y == true`). Untouched
/// embedding rows get exact zeros. With `freeze_memory` the slot vectors are
/// treated as constants, so rationale tokens receive no gradient.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    trace: &ForwardTrace,
    y: bool,
    sup: Option<&SupervisionSets>,
    gamma: f64,
    lambda: f64,
    model: &MemoryNetModel,
    mem: &EncodedMemory,
    freeze_memory: bool,
) -> Result<ParamStore> {
    let d = model.dim();
    let n_slots = mem.len();
    if trace.weights.len() != n_slots || trace.query.dim() != d || mem.dim() != d {
        return Err(Error::InvalidShape(
            "trace does not match model/memory".into(),
        ));
    }
    let mut grads = model.params().zeros_like();

    // dL/dz for clamped BCE ∘ sigmoid; the clamp is flat outside its range
    let p = trace.probability;
    let dz = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        p - if y { 1.0 } else { 0.0 }
    } else {
        0.0
    };

    let a = model.classifier_weight().as_slice();
    let (a_q, a_c) = a.split_at(d);
    {
        let gw = grads.vector_mut(CLASSIFIER_WEIGHT)?.as_mut_slice();
        for (g, x) in gw.iter_mut().zip(trace.updated_query.as_slice()) {
            *g = dz * x;
        }
    }
    grads.vector_mut(CLASSIFIER_BIAS)?.as_mut_slice()[0] = dz;

    let mut dq: Vec<f64> = a_q.iter().map(|v| dz * v).collect();
    let dc: Vec<f64> = a_c.iter().map(|v| dz * v).collect();

    // dL/dwᵢ = dc·mᵢ (+ hinge terms)
    let mut dw: Vec<f64> = mem
        .slots()
        .iter()
        .map(|s| dc.iter().zip(s.vector.as_slice()).map(|(x, m)| x * m).sum())
        .collect();

    if let (Some(sup), true, true) = (sup, y, lambda > 0.0) {
        let index: HashMap<&str, usize> = mem.ids().enumerate().map(|(i, id)| (id, i)).collect();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::MissingGate(id.to_string()))
        };
        let pos: Vec<usize> = sup
            .positives()
            .iter()
            .map(|i| lookup(i))
            .collect::<Result<_>>()?;
        let neg: Vec<usize> = sup
            .negatives()
            .iter()
            .map(|i| lookup(i))
            .collect::<Result<_>>()?;
        if pos.is_empty() {
            return Err(Error::EmptySupervision("target"));
        }
        if neg.is_empty() {
            return Err(Error::EmptySupervision("non-target"));
        }
        let scale = lambda / (pos.len() * neg.len()) as f64;
        for &i in &pos {
            for &j in &neg {
                // subgradient 0 exactly on the hinge
                if gamma - trace.weights[i] + trace.weights[j] > 0.0 {
                    dw[i] -= scale;
                    dw[j] += scale;
                }
            }
        }
    }

    // dL/dsᵢ = dL/dwᵢ · wᵢ(1 − wᵢ)
    let ds: Vec<f64> = dw
        .iter()
        .zip(&trace.weights)
        .map(|(g, w)| g * w * (1.0 - w))
        .collect();

    let sim = model.similarity_matrix();
    let q = trace.query.as_slice();
    let wt_q = sim.mat_t_vec(q)?;
    let mut slot_grads: Vec<Vec<f64>> = Vec::with_capacity(n_slots);
    {
        let gsim = grads.matrix_mut(SIMILARITY)?;
        for (i, slot) in mem.slots().iter().enumerate() {
            let m = slot.vector.as_slice();
            // ∂sᵢ/∂q = W mᵢ, ∂sᵢ/∂W = q mᵢᵀ, ∂sᵢ/∂mᵢ = Wᵀ q
            let wm = sim.mat_vec(m)?;
            for (g, v) in dq.iter_mut().zip(&wm) {
                *g += ds[i] * v;
            }
            for (r, &qr) in q.iter().enumerate() {
                let coef = ds[i] * qr;
                for (g, mc) in gsim.row_mut(r).iter_mut().zip(m) {
                    *g += coef * mc;
                }
            }
            if !freeze_memory {
                slot_grads.push(
                    dc.iter()
                        .zip(&wt_q)
                        .map(|(c, u)| c * trace.weights[i] + ds[i] * u)
                        .collect(),
                );
            }
        }
    }

    let gemb = grads.matrix_mut(EMBEDDING)?;
    scatter_mean(gemb, &trace.query_tokens, &dq);
    if !freeze_memory {
        for (slot, g) in mem.slots().iter().zip(&slot_grads) {
            scatter_mean(gemb, &slot.token_indices, g);
        }
    }
    Ok(grads)
}

/// Adds `g / n` to each of the `n` rows that were mean-pooled.
fn scatter_mean(table: &mut crate::numeric::Mat64, rows: &[usize], g: &[f64]) {
    if rows.is_empty() {
        return;
    }
    let inv = 1.0 / rows.len() as f64;
    for &r in rows {
        for (t, v) in table.row_mut(r).iter_mut().zip(g) {
            *t += v * inv;
        }
    }
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    step: u64,
    first: ParamStore,
    second: ParamStore,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        OptimizerState {
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One optimizer update of `params` in place.
pub fn step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut OptimizerState,
    config: &TrainingConfig,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.first) {
        return Err(Error::InvalidShape(
            "gradient layout differs from parameters".into(),
        ));
    }
    let lr = config.learning_rate;
    state.step += 1;
    match config.optimizer {
        OptimizerKind::Sgd => params.add_scaled(-lr, grads)?,
        OptimizerKind::Adam => {
            let (b1, b2, eps) = (config.beta1, config.beta2, config.adam_epsilon);
            let t = state.step as i32;
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let slots = params
                .iter_mut()
                .zip(grads.iter())
                .zip(state.first.iter_mut().zip(state.second.iter_mut()));
            for (((_, p), (_, g)), ((_, m), (_, v))) in slots {
                let p = p.as_mut_slice();
                let m = m.as_mut_slice();
                let v = v.as_mut_slice();
                for (k, &gk) in g.as_slice().iter().enumerate() {
                    m[k] = b1 * m[k] + (1.0 - b1) * gk;
                    v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                    let m_hat = m[k] / c1;
                    let v_hat = v[k] / c2;
                    p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

/// One pre-tokenized training example.
#[derive(Debug, Clone)]
struct Sample {
    tokens: Vec<usize>,
    unfair: bool,
    gold: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub classification_loss: f64,
    pub strong_supervision_loss: f64,
    pub total_loss: f64,
    pub validation_loss: f64,
    pub validation_f1: f64,
    pub memory_selection_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned model.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

fn samples_for(corpus: &Corpus, model: &MemoryNetModel) -> Vec<Sample> {
    let category = model.category();
    corpus
        .clauses()
        .iter()
        .map(|c| Sample {
            tokens: model.token_indices(&c.text),
            unfair: c.is_unfair(category),
            gold: c
                .gold(category)
                .map(|g| g.iter().cloned().collect())
                .unwrap_or_default(),
        })
        .collect()
}

fn supervision(
    sample: &Sample,
    mem: &EncodedMemory,
    strong: bool,
) -> Result<Option<SupervisionSets>> {
    if strong && sample.unfair && !sample.gold.is_empty() {
        Ok(Some(SupervisionSets::from_gold(&sample.gold, mem)?))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct LossSums {
    classification: f64,
    strong_supervision: f64,
    total: f64,
    count: usize,
}

impl LossSums {
    fn add(&mut self, l: &LossBreakdown) {
        self.classification += l.classification;
        self.strong_supervision += l.strong_supervision;
        self.total += l.total;
        self.count += 1;
    }

    fn mean(&self) -> (f64, f64, f64) {
        let n = self.count.max(1) as f64;
        (
            self.classification / n,
            self.strong_supervision / n,
            self.total / n,
        )
    }
}

fn mean_loss(
    model: &MemoryNetModel,
    mem: &EncodedMemory,
    samples: &[Sample],
    config: &TrainingConfig,
) -> Result<f64> {
    let mut sums = LossSums::default();
    for s in samples {
        let trace = forward_indices(s.tokens.clone(), model, mem)?;
        let sup = supervision(s, mem, config.strong_supervision())?;
        sums.add(&total_loss(
            &trace,
            mem,
            s.unfair,
            sup.as_ref(),
            config.gamma,
            config.lambda,
        )?);
    }
    Ok(sums.mean().2)
}

/// Checks the data contract for training one category.
pub fn validate_training_data(corpus: &Corpus, kb: &KnowledgeBase, strong: bool) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if kb.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    corpus.validate_rationales(&[kb])?;
    if strong {
        let category = kb.category();
        let missing: Vec<String> = corpus
            .clauses()
            .iter()
            .filter(|c| c.is_unfair(category) && c.gold(category).is_none())
            .map(|c| match c.line {
                Some(l) => format!(
                    "line {l}, clause `{}`: unfair `{category}` clause has no gold rationale",
                    c.id
                ),
                None => format!(
                    "clause `{}`: unfair `{category}` clause has no gold rationale",
                    c.id
                ),
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(missing));
        }
        if kb.len() < 2 {
            return Err(Error::EmptySupervision("non-target"));
        }
    }
    Ok(())
}

/// Builds the vocabulary over training clauses and rationale texts.
pub fn build_training_vocab(
    corpus: &Corpus,
    kb: &KnowledgeBase,
    min_count: usize,
) -> Result<crate::encoder::Vocabulary> {
    let texts: Vec<&str> = corpus
        .clauses()
        .iter()
        .map(|c| c.text.as_str())
        .chain(kb.entries().iter().map(|e| e.text.as_str()))
        .collect();
    build_vocab(&texts, min_count)
}

/// Trains one category model.
///
/// Model selection uses `validation` (or the training set when absent): an
/// epoch is better when its unfair-class F1 is higher, or equal with a lower
/// mean validation loss. Training stops after `early_stop_patience` epochs
/// without a better epoch, and the best model is returned.
pub fn train(
    corpus: &Corpus,
    validation: Option<&Corpus>,
    kb: &KnowledgeBase,
    config: &TrainingConfig,
) -> Result<(MemoryNetModel, TrainHistory)> {
    config.validate()?;
    let strong = config.strong_supervision();
    validate_training_data(corpus, kb, strong)?;
    let val_corpus = validation.unwrap_or(corpus);
    if val_corpus.is_empty() {
        return Err(Error::InvalidArgument("validation corpus is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab = build_training_vocab(corpus, kb, config.min_token_count)?;
    let mut model = MemoryNetModel::init(
        kb.category(),
        vocab,
        config.embedding_dim,
        config.embedding_init_std,
        &mut rng,
    )?;
    info!(
        "training {} model: {} clauses, {} rationales, vocab {}, {} parameters, {} supervision",
        kb.category(),
        corpus.len(),
        kb.len(),
        model.vocab().len(),
        model.params().scalar_count(),
        if strong { "strong" } else { "weak" }
    );

    let samples = samples_for(corpus, &model);
    let val_samples = samples_for(val_corpus, &model);
    let mut opt = OptimizerState::new(model.params());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, f64, MemoryNetModel)> = None;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossSums::default();
        for batch in order.chunks(config.batch_size) {
            let mem = encode_kb(kb, &model)?;
            let mut grads = model.params().zeros_like();
            for &i in batch {
                let s = &samples[i];
                let trace = forward_indices(s.tokens.clone(), &model, &mem)?;
                let sup = supervision(s, &mem, strong)?;
                let loss = total_loss(
                    &trace,
                    &mem,
                    s.unfair,
                    sup.as_ref(),
                    config.gamma,
                    config.lambda,
                )?;
                if !loss.total.is_finite() {
                    return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
                }
                sums.add(&loss);
                let g = backward(
                    &trace,
                    s.unfair,
                    sup.as_ref(),
                    config.gamma,
                    config.lambda,
                    &model,
                    &mem,
                    config.freeze_memory,
                )?;
                grads.add_scaled(1.0, &g)?;
            }
            // batch mean
            grads.scale(1.0 / batch.len() as f64);
            let mut params = model.params().clone();
            step(&mut params, &grads, &mut opt, config)?;
            if !params.all_finite() {
                return Err(Error::Training(format!(
                    "non-finite parameters after update at epoch {epoch}"
                )));
            }
            model = model.with_params(params)?;
        }

        let mem = encode_kb(kb, &model)?;
        let report = evaluate_with_memory(&model, &mem, val_corpus, &config.eval)?;
        let val_loss = mean_loss(&model, &mem, &val_samples, config)?;
        let (cls, ss, total) = sums.mean();
        history.epochs.push(EpochRecord {
            epoch,
            classification_loss: cls,
            strong_supervision_loss: ss,
            total_loss: total,
            validation_loss: val_loss,
            validation_f1: report.f1,
            memory_selection_accuracy: report.memory_selection_accuracy,
        });
        debug!(
            "epoch {epoch}: loss {total:.5} (cls {cls:.5}, ss {ss:.5}) val f1 {:.4} val loss {val_loss:.5}",
            report.f1
        );

        let improved = match &best {
            None => true,
            Some((f1, loss, _)) => report.f1 > *f1 || (report.f1 == *f1 && val_loss < *loss),
        };
        if improved {
            best = Some((report.f1, val_loss, model.clone()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                info!("early stop at epoch {epoch}");
                break;
            }
        }
    }

    let model = best.map(|(_, _, m)| m).unwrap_or(model);
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_relative_error: f64,
    pub worst: String,
    pub tolerance: f64,
    pub passed: bool,
    /// Smallest `|γ − w₊ + w₋|` over supervision pairs, when the margin loss is active.
    pub min_hinge_gap: Option<f64>,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// A single example for gradient checking.
#[derive(Debug, Clone, Copy)]
pub struct CheckSample<'a> {
    pub text: &'a str,
    pub unfair: bool,
    pub gold: &'a [String],
}

/// Compares [`backward`] against central finite differences of the total loss.
pub fn gradient_check(
    model: &MemoryNetModel,
    sample: CheckSample<'_>,
    kb: &KnowledgeBase,
    config: &TrainingConfig,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let strong = config.strong_supervision();
    let tokens = model.token_indices(sample.text);
    let mem = encode_kb(kb, model)?;
    let as_sample = Sample {
        tokens: tokens.clone(),
        unfair: sample.unfair,
        gold: sample.gold.to_vec(),
    };
    let sup = supervision(&as_sample, &mem, strong)?;
    let trace = forward_indices(tokens.clone(), model, &mem)?;
    let analytic = backward(
        &trace,
        sample.unfair,
        sup.as_ref(),
        config.gamma,
        config.lambda,
        model,
        &mem,
        config.freeze_memory,
    )?;

    let min_hinge_gap = sup.as_ref().filter(|_| sample.unfair).map(|s| {
        let w: HashMap<&str, f64> = trace.weights_by_id(&mem).into_iter().collect();
        let mut gap = f64::INFINITY;
        for p in s.positives() {
            for n in s.negatives() {
                gap = gap.min((config.gamma - w[p.as_str()] + w[n.as_str()]).abs());
            }
        }
        gap
    });

    let ids: Vec<&str> = mem.ids().collect();
    let slot_of = |id: &String| {
        ids.iter()
            .position(|x| *x == id.as_str())
            .expect("id from memory")
    };
    let problem = LossProblem {
        query_tokens: &tokens,
        slot_tokens: mem
            .slots()
            .iter()
            .map(|s| s.token_indices.clone())
            .collect(),
        frozen_slots: config.freeze_memory.then(|| {
            mem.slots()
                .iter()
                .map(|s| s.vector.as_slice().to_vec())
                .collect()
        }),
        unfair: sample.unfair,
        pairs: sup.as_ref().map(|s| {
            (
                s.positives().iter().map(slot_of).collect(),
                s.negatives().iter().map(slot_of).collect(),
            )
        }),
        gamma: config.gamma,
        lambda: config.lambda,
    };
    // embedding rows nobody reads cannot move the loss
    let mut live_rows: HashSet<usize> = tokens.iter().copied().collect();
    if !config.freeze_memory {
        live_rows.extend(problem.slot_tokens.iter().flatten().copied());
    }
    let dim = model.dim();
    let numeric = finite_diff_grad_dd(
        |params| total_loss_dd(params, &problem),
        model.params(),
        eps,
        |name, i| name != EMBEDDING || live_rows.contains(&(i / dim)),
    )?;

    let mut params = Vec::new();
    let mut max_err = 0.0f64;
    let mut worst = String::new();
    for ((name, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
        let mut check = ParamCheck {
            name: name.to_string(),
            max_relative_error: 0.0,
            worst_index: 0,
            analytic: a.as_slice().first().copied().unwrap_or(0.0),
            numeric: n.as_slice().first().copied().unwrap_or(0.0),
        };
        for (k, (&x, &y)) in a.as_slice().iter().zip(n.as_slice()).enumerate() {
            let e = relative_error(x, y);
            if e > check.max_relative_error {
                check.max_relative_error = e;
                check.worst_index = k;
                check.analytic = x;
                check.numeric = y;
            }
        }
        if check.max_relative_error >= max_err {
            max_err = check.max_relative_error;
            worst = format!("{}[{}]", check.name, check.worst_index);
        }
        params.push(check);
    }
    Ok(GradCheckReport {
        params,
        max_relative_error: max_err,
        worst,
        tolerance,
        passed: max_err < tolerance,
        min_hinge_gap,
    })
}
