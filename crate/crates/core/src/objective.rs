//! Classification loss and the max-margin memory supervision loss.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::memory::{EncodedMemory, ForwardTrace};

pub const PROB_CLAMP: f64 = 1e-12;

/// Target and non-target rationale ids for one unfair clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervisionSets {
    positives: BTreeSet<String>,
    negatives: BTreeSet<String>,
}

impl SupervisionSets {
    pub fn new(positives: BTreeSet<String>, negatives: BTreeSet<String>) -> Result<Self> {
        if let Some(id) = positives.intersection(&negatives).next() {
            return Err(Error::InvalidArgument(format!(
                "rationale `{id}` is both a target and a non-target"
            )));
        }
        Ok(SupervisionSets {
            positives,
            negatives,
        })
    }

    /// Gold ids as targets, every other slot of the memory as non-targets.
    pub fn from_gold<S: AsRef<str>>(gold: &[S], mem: &EncodedMemory) -> Result<Self> {
        let positives: BTreeSet<String> = gold.iter().map(|g| g.as_ref().to_string()).collect();
        for id in &positives {
            if !mem.ids().any(|m| m == id) {
                return Err(Error::Validation(vec![format!(
                    "unknown `{}` rationale `{id}`",
                    mem.category()
                )]));
            }
        }
        let negatives = mem
            .ids()
            .filter(|id| !positives.contains(*id))
            .map(str::to_string)
            .collect();
        Self::new(positives, negatives)
    }

    pub fn positives(&self) -> &BTreeSet<String> {
        &self.positives
    }

    pub fn negatives(&self) -> &BTreeSet<String> {
        &self.negatives
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub classification: f64,
    pub strong_supervision: f64,
    pub total: f64,
    pub lambda: f64,
    pub gamma: f64,
}

/// Binary cross-entropy with the probability clamped away from 0 and 1.
pub fn bce_loss(p: f64, y: bool) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Hinge on the gap between a target gate and a non-target gate.
pub fn margin_pair_loss(w_plus: f64, w_minus: f64, gamma: f64) -> f64 {
    (gamma - w_plus + w_minus).max(0.0)
}

fn gate(weights: &HashMap<&str, f64>, id: &str) -> Result<f64> {
    weights
        .get(id)
        .copied()
        .ok_or_else(|| Error::MissingGate(id.to_string()))
}

/// Mean hinge over every (target, non-target) pair of one sample.
pub fn strong_supervision_loss(
    weights_by_id: &HashMap<&str, f64>,
    sup: &SupervisionSets,
    gamma: f64,
) -> Result<f64> {
    if sup.positives.is_empty() {
        return Err(Error::EmptySupervision("target"));
    }
    if sup.negatives.is_empty() {
        return Err(Error::EmptySupervision("non-target"));
    }
    let neg: Vec<f64> = sup
        .negatives
        .iter()
        .map(|id| gate(weights_by_id, id))
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    for id in &sup.positives {
        let wp = gate(weights_by_id, id)?;
        for &wn in &neg {
            sum += margin_pair_loss(wp, wn, gamma);
        }
    }
    Ok(sum / (sup.positives.len() * sup.negatives.len()) as f64)
}

/// Classification loss plus `lambda` times the supervision loss.
///
/// The supervision term only applies to unfair clauses (`y == true`) that
/// come with supervision sets.
pub fn total_loss(
    trace: &ForwardTrace,
    mem: &EncodedMemory,
    y: bool,
    sup: Option<&SupervisionSets>,
    gamma: f64,
    lambda: f64,
) -> Result<LossBreakdown> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let classification = bce_loss(trace.probability, y);
    let strong_supervision = match sup {
        Some(sup) if y => {
            let by_id: HashMap<&str, f64> = trace.weights_by_id(mem).into_iter().collect();
            strong_supervision_loss(&by_id, sup, gamma)?
        }
        _ => 0.0,
    };
    let total = if lambda == 0.0 {
        classification
    } else {
        classification + lambda * strong_supervision
    };
    Ok(LossBreakdown {
        classification,
        strong_supervision,
        total,
        lambda,
        gamma,
    })
}
