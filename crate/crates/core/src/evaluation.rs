//! Classification metrics, the memory-usage check and ranked explanations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Corpus, KnowledgeBase};
use crate::error::{Error, Result};
use crate::memory::{encode_kb, forward, EncodedMemory, MemoryNetModel};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Probability above which a clause is predicted unfair. Ties go to fair.
    pub classification_threshold: f64,
    /// Gate value above which a rationale counts as selected.
    pub selection_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            classification_threshold: DEFAULT_THRESHOLD,
            selection_threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Metrics for the unfair (positive) class. Precision and recall with an
/// empty denominator are 0, and so is F1 when both are 0.
pub fn classify_metrics(predictions: &[(f64, bool)], threshold: f64) -> Result<ClassifyMetrics> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let mut c = Confusion::default();
    for &(p, gold) in predictions {
        match (p > threshold, gold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassifyMetrics {
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total()),
        confusion: c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRationale {
    pub id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clause_id: Option<String>,
    pub probability: f64,
    /// Every rationale, by descending gate weight, ties in KB order.
    pub ranked: Vec<RankedRationale>,
    /// Rationales whose gate exceeds the selection threshold, in ranked order.
    pub selected: Vec<String>,
    /// Number of ranked entries shown in reports, at most the KB size.
    pub top_k: usize,
}

impl Explanation {
    pub fn top(&self) -> &[RankedRationale] {
        &self.ranked[..self.top_k]
    }

    /// Plain-text report listing the top rationales with their KB text.
    pub fn render(&self, kb: &KnowledgeBase) -> String {
        let mut out = String::new();
        if let Some(id) = &self.clause_id {
            let _ = writeln!(out, "clause {id}");
        }
        let _ = writeln!(out, "probability unfair: {:.4}", self.probability);
        for (rank, r) in self.top().iter().enumerate() {
            let text = kb.get(&r.id).map(|e| e.text.as_str()).unwrap_or("");
            let mark = if self.selected.contains(&r.id) {
                '*'
            } else {
                ' '
            };
            let _ = writeln!(
                out,
                "{:>2}.{mark} {:.4}  [{}] {}",
                rank + 1,
                r.weight,
                r.id,
                text
            );
        }
        out
    }
}

/// Slot indices ordered by descending weight; equal weights keep slot order.
pub fn rank_by_weight(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    order
}

fn build_explanation(
    clause_id: Option<String>,
    probability: f64,
    weights: &[f64],
    mem: &EncodedMemory,
    top_k: usize,
    selection_threshold: f64,
) -> Explanation {
    let ranked: Vec<RankedRationale> = rank_by_weight(weights)
        .into_iter()
        .map(|i| RankedRationale {
            id: mem.slots()[i].id.clone(),
            weight: weights[i],
        })
        .collect();
    let selected = ranked
        .iter()
        .filter(|r| r.weight > selection_threshold)
        .map(|r| r.id.clone())
        .collect();
    Explanation {
        clause_id,
        probability,
        top_k: top_k.min(ranked.len()),
        ranked,
        selected,
    }
}

/// True when at least one gold rationale's gate exceeds `threshold`.
pub fn memory_selection_correct<S: AsRef<str>>(
    explanation: &Explanation,
    gold: &[S],
    threshold: f64,
) -> Result<bool> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument(
            "memory selection needs at least one gold rationale".into(),
        ));
    }
    Ok(explanation
        .ranked
        .iter()
        .any(|r| r.weight > threshold && gold.iter().any(|g| g.as_ref() == r.id)))
}

/// Ranks every rationale of `kb` for one clause.
pub fn explain(
    text: &str,
    model: &MemoryNetModel,
    kb: &KnowledgeBase,
    top_k: usize,
    selection_threshold: f64,
) -> Result<Explanation> {
    let mem = encode_kb(kb, model)?;
    explain_with_memory(None, text, model, &mem, top_k, selection_threshold)
}

pub fn explain_with_memory(
    clause_id: Option<String>,
    text: &str,
    model: &MemoryNetModel,
    mem: &EncodedMemory,
    top_k: usize,
    selection_threshold: f64,
) -> Result<Explanation> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top-k must be at least 1".into()));
    }
    let trace = forward(text, model, mem)?;
    Ok(build_explanation(
        clause_id,
        trace.probability,
        &trace.weights,
        mem,
        top_k,
        selection_threshold,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub category: Category,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// `None` when no unfair clause carries gold rationales.
    pub memory_selection_accuracy: Option<f64>,
    pub n: usize,
    pub confusion: Confusion,
}

impl EvaluationReport {
    pub fn render_table(&self) -> String {
        let msa = self
            .memory_selection_accuracy
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into());
        let c = &self.confusion;
        format!(
            "category                  {}\n\
             clauses                   {}\n\
             precision                 {:.4}\n\
             recall                    {:.4}\n\
             f1                        {:.4}\n\
             accuracy                  {:.4}\n\
             memory selection accuracy {msa}\n\
             confusion (tp fp tn fn)   {} {} {} {}\n",
            self.category,
            self.n,
            self.precision,
            self.recall,
            self.f1,
            self.accuracy,
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        )
    }

    /// Flat record with the documented field names.
    pub fn to_record(&self) -> serde_json::Value {
        serde_json::json!({
            "category": self.category,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "memory_selection_accuracy": self.memory_selection_accuracy,
            "n": self.n,
        })
    }
}

/// Explanations for every clause of `corpus`, in corpus order.
pub fn explain_corpus(
    model: &MemoryNetModel,
    mem: &EncodedMemory,
    corpus: &Corpus,
    top_k: usize,
    selection_threshold: f64,
) -> Result<Vec<Explanation>> {
    corpus
        .clauses()
        .iter()
        .map(|c| {
            explain_with_memory(
                Some(c.id.clone()),
                &c.text,
                model,
                mem,
                top_k,
                selection_threshold,
            )
        })
        .collect()
}

/// Scores the model on every clause of `corpus`.
pub fn evaluate(
    model: &MemoryNetModel,
    corpus: &Corpus,
    kb: &KnowledgeBase,
    config: &EvalConfig,
) -> Result<EvaluationReport> {
    let mem = encode_kb(kb, model)?;
    evaluate_with_memory(model, &mem, corpus, config)
}

pub fn evaluate_with_memory(
    model: &MemoryNetModel,
    mem: &EncodedMemory,
    corpus: &Corpus,
    config: &EvalConfig,
) -> Result<EvaluationReport> {
    let category = model.category();
    let explanations = explain_corpus(model, mem, corpus, mem.len(), config.selection_threshold)?;
    let predictions: Vec<(f64, bool)> = explanations
        .iter()
        .zip(corpus.clauses())
        .map(|(e, c)| (e.probability, c.is_unfair(category)))
        .collect();
    let metrics = classify_metrics(&predictions, config.classification_threshold)?;
    let mut annotated = 0usize;
    let mut correct = 0usize;
    for (e, c) in explanations.iter().zip(corpus.clauses()) {
        if !c.is_unfair(category) {
            continue;
        }
        if let Some(gold) = c.gold(category) {
            let gold: Vec<&String> = gold.iter().collect();
            annotated += 1;
            if memory_selection_correct(e, &gold, config.selection_threshold)? {
                correct += 1;
            }
        }
    }
    Ok(EvaluationReport {
        category,
        precision: metrics.precision,
        recall: metrics.recall,
        f1: metrics.f1,
        accuracy: metrics.accuracy,
        memory_selection_accuracy: (annotated > 0).then(|| correct as f64 / annotated as f64),
        n: predictions.len(),
        confusion: metrics.confusion,
    })
}
